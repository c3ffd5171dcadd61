//! Finite-difference checks for every differentiable tape op.

use gmsd_tensor::gradcheck::{check_gradients, FD_STEP};
use gmsd_tensor::init::{seeded_rng, uniform};
use gmsd_tensor::{Activation, MaskKind, Tape, TVar, Tensor};

const TOL: f64 = 1e-5;

fn rnd(seed: u64, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor<f64> {
    uniform(&mut seeded_rng(seed), shape, lo, hi)
}

/// Keep values away from the kinks of relu/leaky-relu/clamp so central
/// differences see a smooth function.
fn rnd_away_from(seed: u64, shape: Vec<usize>, margin: f64) -> Tensor<f64> {
    let t = rnd(seed, shape, -1.0, 1.0);
    t.map(|v| if v.abs() < margin { v + 2.0 * margin } else { v })
}

#[test]
fn conv2d_gradients() {
    let x = rnd(20, vec![1, 2, 5, 5], -1.0, 1.0);
    let k = rnd(21, vec![3, 2, 3, 3], -1.0, 1.0);
    for (s, p) in [(1, 1), (2, 1), (2, 2)] {
        let err = check_gradients(&[x.clone(), k.clone()], FD_STEP, |t, v| {
            let c = t.conv2d(v[0], v[1], s, p);
            let sq = t.mul(c, c);
            t.sum(sq)
        });
        assert!(err < TOL, "conv2d s={s} p={p}: {err}");
    }
}

#[test]
fn conv2d_transpose_gradients() {
    let x = rnd(22, vec![1, 2, 3, 3], -1.0, 1.0);
    let k = rnd(23, vec![2, 3, 3, 3], -1.0, 1.0);
    for (s, p, op) in [(1, 1, 0), (2, 1, 1), (2, 0, 0)] {
        let err = check_gradients(&[x.clone(), k.clone()], FD_STEP, |t, v| {
            let c = t.conv2d_transpose(v[0], v[1], s, p, op);
            let sq = t.mul(c, c);
            t.sum(sq)
        });
        assert!(err < TOL, "convT s={s} p={p} op={op}: {err}");
    }
}

#[test]
fn masked_conv2d_gradients() {
    let x = rnd(24, vec![1, 2, 5, 5], -1.0, 1.0);
    let k = rnd(25, vec![2, 2, 3, 3], -1.0, 1.0);
    let err = check_gradients(&[x, k], FD_STEP, |t, v| {
        let c = t.masked_conv2d(v[0], v[1], MaskKind::A);
        let sq = t.mul(c, c);
        t.sum(sq)
    });
    assert!(err < TOL, "masked conv: {err}");
}

#[test]
fn bias_add_gradients() {
    let x = rnd(26, vec![2, 3, 4, 4], -1.0, 1.0);
    let b = rnd(27, vec![3], -1.0, 1.0);
    let err = check_gradients(&[x, b], FD_STEP, |t, v| {
        let c = t.bias_add(v[0], v[1]);
        let sq = t.mul(c, c);
        t.sum(sq)
    });
    assert!(err < TOL, "bias_add: {err}");
}

#[test]
fn binary_op_gradients() {
    let a = rnd(28, vec![6], -1.0, 1.0);
    let b = rnd(29, vec![6], 0.5, 2.0); // denominator bounded away from 0
    type Build = fn(&Tape<f64>, &[TVar]) -> TVar;
    let builds: &[(&str, Build)] = &[
        ("add", |t, v| {
            let c = t.add(v[0], v[1]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("sub", |t, v| {
            let c = t.sub(v[0], v[1]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("mul", |t, v| {
            let c = t.mul(v[0], v[1]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("div", |t, v| {
            let c = t.div(v[0], v[1]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("maximum", |t, v| {
            let c = t.maximum(v[0], v[1]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
    ];
    for (name, build) in builds {
        let err = check_gradients(&[a.clone(), b.clone()], FD_STEP, build);
        assert!(err < TOL, "{name}: {err}");
    }
}

#[test]
fn unary_op_gradients() {
    let x = rnd_away_from(30, vec![8], 0.15);
    let pos = rnd(31, vec![8], 0.2, 2.0);
    type Build = fn(&Tape<f64>, &[TVar]) -> TVar;

    let on_any: &[(&str, Build)] = &[
        ("neg", |t, v| {
            let c = t.neg(v[0]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("add_scalar", |t, v| {
            let c = t.add_scalar(v[0], 0.7);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("mul_scalar", |t, v| {
            let c = t.mul_scalar(v[0], -1.3);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("leaky_relu", |t, v| {
            let c = t.activation(v[0], Activation::LeakyRelu);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("relu", |t, v| {
            let c = t.activation(v[0], Activation::Relu);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("tanh", |t, v| {
            let c = t.activation(v[0], Activation::Tanh);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("softplus", |t, v| {
            let c = t.activation(v[0], Activation::Softplus);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("exp", |t, v| {
            let c = t.activation(v[0], Activation::Exp);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("sigmoid", |t, v| {
            let c = t.activation(v[0], Activation::Sigmoid);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("erf", |t, v| {
            let c = t.erf(v[0]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("clamp_interior", |t, v| {
            let c = t.clamp(v[0], -5.0, 5.0);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
    ];
    for (name, build) in on_any {
        let err = check_gradients(&[x.clone()], FD_STEP, build);
        assert!(err < TOL, "{name}: {err}");
    }

    let on_pos: &[(&str, Build)] = &[
        ("ln", |t, v| {
            let c = t.ln(v[0]);
            t.sum(c)
        }),
        ("powf", |t, v| {
            let c = t.powf(v[0], 0.6);
            t.sum(c)
        }),
    ];
    for (name, build) in on_pos {
        let err = check_gradients(&[pos.clone()], FD_STEP, build);
        assert!(err < TOL, "{name}: {err}");
    }
}

/// The exp op's gradient equals its output.
#[test]
fn exp_gradient_equals_output() {
    let x = rnd(32, vec![5], -1.0, 1.0);
    let t: Tape<f64> = Tape::new();
    let v = t.leaf(x);
    let y = t.exp(v);
    let loss = t.sum(y);
    let grads = t.backward(loss).unwrap();
    let gy = grads.get(v).unwrap();
    let yv = t.value(y);
    for (a, b) in gy.data().iter().zip(yv.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn shape_op_gradients() {
    let x = rnd(33, vec![1, 4, 4, 6], -1.0, 1.0);
    type Build = fn(&Tape<f64>, &[TVar]) -> TVar;
    let builds: &[(&str, Build)] = &[
        ("slice_channels", |t, v| {
            let c = t.slice_channels(v[0], 1, 3);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("slice_spatial", |t, v| {
            let c = t.slice_spatial(v[0], 3, 4);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("avg_pool2", |t, v| {
            let c = t.avg_pool2(v[0]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("filter_rows", |t, v| {
            let c = t.filter_rows(v[0], &[0.25, 0.5, 0.25]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("filter_cols", |t, v| {
            let c = t.filter_cols(v[0], &[0.25, 0.5, 0.25]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
        ("mean", |t, v| {
            let c = t.mean(v[0]);
            let sq = t.mul(c, c);
            t.sum(sq)
        }),
    ];
    for (name, build) in builds {
        let err = check_gradients(&[x.clone()], FD_STEP, build);
        assert!(err < TOL, "{name}: {err}");
    }

    let a = rnd(34, vec![1, 2, 3, 3], -1.0, 1.0);
    let b = rnd(35, vec![1, 3, 3, 3], -1.0, 1.0);
    let err = check_gradients(&[a, b], FD_STEP, |t, v| {
        let c = t.concat_channels(v[0], v[1]);
        let sq = t.mul(c, c);
        t.sum(sq)
    });
    assert!(err < TOL, "concat_channels: {err}");
}

/// Composite conv -> activation -> sum network vs finite differences
/// across 20 random seeds.
#[test]
fn composite_net_gradients_over_seeds() {
    for seed in 0..20u64 {
        let x = rnd(100 + seed, vec![1, 2, 6, 6], -1.0, 1.0);
        let k1 = rnd(200 + seed, vec![4, 2, 3, 3], -0.7, 0.7);
        let b1 = rnd(300 + seed, vec![4], -0.3, 0.3);
        let k2 = rnd(400 + seed, vec![3, 4, 3, 3], -0.7, 0.7);
        let err = check_gradients(&[x, k1, b1, k2], FD_STEP, |t, v| {
            let c1 = t.conv2d(v[0], v[1], 2, 1);
            let c1 = t.bias_add(c1, v[2]);
            let a1 = t.activation(c1, Activation::LeakyRelu);
            let c2 = t.conv2d(a1, v[3], 1, 1);
            let a2 = t.activation(c2, Activation::Tanh);
            t.sum(a2)
        });
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

/// Loss independent of a parameter leaves it without gradient.
#[test]
fn independent_parameter_gets_zero_gradient() {
    let t: Tape<f64> = Tape::new();
    let x = t.leaf(rnd(40, vec![4], -1.0, 1.0));
    let unused = t.leaf(rnd(41, vec![4], -1.0, 1.0));
    let sq = t.mul(x, x);
    let loss = t.sum(sq);
    let grads = t.backward(loss).unwrap();
    assert!(grads.get(unused).is_none());
}
