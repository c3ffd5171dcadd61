//! Central finite-difference gradient checking in double precision.

use crate::tape::{Tape, TVar};
use crate::tensor::Tensor;

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Relative error between an analytic and a finite-difference value,
/// guarded against near-zero denominators.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Check the tape gradient of `build` (a scalar-valued function of the
/// given leaves) against central finite differences at two step sizes.
/// A kink (relu/clamp boundary) inside one step's bracket produces a
/// spurious mismatch that does not reproduce at the other scale, so the
/// per-element error is the minimum over steps; a genuinely wrong
/// gradient fails at every step. Returns the maximum such error.
pub fn check_gradients_robust(
    inputs: &[Tensor<f64>],
    steps: &[f64],
    build: impl Fn(&Tape<f64>, &[TVar]) -> TVar,
) -> f64 {
    let mut worst = 0.0f64;
    let mut per_step: Vec<Vec<f64>> = Vec::new();
    for &step in steps {
        per_step.push(element_errors(inputs, step, &build));
    }
    let n = per_step[0].len();
    for i in 0..n {
        let best = per_step.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
        if best > worst {
            worst = best;
        }
    }
    worst
}

/// Check the tape gradient of `build` (a scalar-valued function of the
/// given leaves) against central finite differences. Returns the maximum
/// relative error over every element of every input.
pub fn check_gradients(
    inputs: &[Tensor<f64>],
    step: f64,
    build: impl Fn(&Tape<f64>, &[TVar]) -> TVar,
) -> f64 {
    element_errors(inputs, step, &build)
        .into_iter()
        .fold(0.0, f64::max)
}

fn element_errors(
    inputs: &[Tensor<f64>],
    step: f64,
    build: &impl Fn(&Tape<f64>, &[TVar]) -> TVar,
) -> Vec<f64> {
    // analytic gradients
    let tape = Tape::new();
    let vars: Vec<TVar> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&tape, &vars);
    assert_eq!(tape.value(loss).numel(), 1, "gradcheck loss must be scalar");
    let grads = tape.backward(loss).expect("backward failed");

    let eval = |perturbed: &[Tensor<f64>]| -> f64 {
        let t = Tape::new();
        let vs: Vec<TVar> = perturbed.iter().map(|x| t.leaf(x.clone())).collect();
        let l = build(&t, &vs);
        t.value(l).item()
    };

    let mut errors = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape().to_vec()));
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            let mut t = plus[i].clone();
            t.data_mut()[j] += step;
            plus[i] = t;
            let mut minus = inputs.to_vec();
            let mut t = minus[i].clone();
            t.data_mut()[j] -= step;
            minus[i] = t;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
            errors.push(rel_err(analytic.data()[j], fd));
        }
    }
    errors
}
