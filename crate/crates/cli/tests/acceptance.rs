//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run with `cargo test -p gmsd-cli --test acceptance -- --nocapture`.
//! Criteria 7-9 train real models (fifteen 10k-iteration runs) and
//! dominate the runtime; expect on the order of an hour or two on a
//! single core. Criteria 8 and 9 are stochastic scale-sensitive
//! replications: when the effect does not replicate they are REPORTED
//! rather than failed.

use gmsd_codec::{
    decode_image, encode_image, gmm_pmf_scalar, gmm_pmf_scalar_raw, CodecModel, DecoderMode,
    DistortionKind, ModelConfig, SerialPipeline,
};
use gmsd_eval::{bd_rate, diagnose_degeneracy, RdCurve, RdPoint};
use gmsd_tensor::init::{seeded_rng, uniform};
use gmsd_tensor::{Tape, Tensor};
use gmsd_train::{median, synthetic_images, Arm, TrainConfig};
use rand::Rng;

// ── shared experiment configuration ─────────────────────────────────────

/// Desk-scale model: the reference widths at scale 0.125 (N = M = 16).
fn desk_config(mode: DecoderMode) -> ModelConfig {
    ModelConfig {
        n: 16,
        m: 16,
        k: 3,
        decoder_mode: mode,
        widened: false,
        residual_depth: 1,
        width_scale: 0.125,
        lambda: 0.0032,
        distortion: DistortionKind::Mse,
    }
}

/// Training protocol for the scaled replication criteria (7-9).
fn replication_train_config() -> TrainConfig {
    TrainConfig {
        iterations: 10_000,
        batch: 1,
        crop: 64,
        lr: 1e-4,
        lr_final: 1e-5,
        lr_final_iters: None, // ~7.4% of the budget
        seed: 0,
        val_interval: 1000,
    }
}

const REPLICATION_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const TRAIN_IMAGES: usize = 16;
const VAL_IMAGES: usize = 4;

// ── result plumbing ─────────────────────────────────────────────────────

enum Outcome {
    Pass(String),
    Fail(String),
    Reported(String),
}

struct Tally {
    lines: Vec<String>,
    failures: usize,
}

impl Tally {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            failures: 0,
        }
    }

    fn record(&mut self, id: usize, name: &str, outcome: Outcome) {
        let line = match outcome {
            Outcome::Pass(detail) => format!("criterion {id:02} {name}: PASS ({detail})"),
            Outcome::Reported(detail) => format!("criterion {id:02} {name}: REPORTED ({detail})"),
            Outcome::Fail(detail) => {
                self.failures += 1;
                format!("criterion {id:02} {name}: FAIL ({detail})")
            }
        };
        println!("{line}");
        self.lines.push(line);
    }
}

fn tiny_images(count: usize, seed: u64) -> Vec<Tensor<f32>> {
    synthetic_images(count, 64, seed)
}

// ── criteria 1 & 2: losslessness and rate fidelity ──────────────────────

fn criterion_lossless_and_rate(tally: &mut Tally) {
    let images = tiny_images(20, 100);
    let mut lossless_ok = true;
    let mut lossless_detail = String::new();
    let mut rate_ok = true;
    let mut rate_detail = String::new();
    let mut corpus_actual = 0.0f64;
    let mut corpus_estimate = 0.0f64;

    for mode in [DecoderMode::Mixed, DecoderMode::Separate] {
        let model: CodecModel<f32> = CodecModel::new(desk_config(mode), 41).unwrap();
        for (i, x) in images.iter().enumerate() {
            let enc = encode_image(&model, x, 64, 64).unwrap();
            let dec = decode_image(&model, &enc.bytes).unwrap();
            if enc.y_hat != dec.y_hat || enc.z_hat != dec.z_hat {
                lossless_ok = false;
                lossless_detail = format!("mode {mode:?} image {i}: latents differ");
            }
            if enc.recon != dec.recon {
                lossless_ok = false;
                lossless_detail = format!("mode {mode:?} image {i}: reconstructions differ");
            }
            // per-segment rate fidelity: 2% + 64 bits
            let y_err = (enc.stats.y_bits_actual as f64 - enc.stats.y_bits_estimate).abs();
            let z_err = (enc.stats.z_bits_actual as f64 - enc.stats.z_bits_estimate).abs();
            if y_err > 0.02 * enc.stats.y_bits_estimate + 64.0
                || z_err > 0.02 * enc.stats.z_bits_estimate + 64.0
            {
                rate_ok = false;
                rate_detail = format!(
                    "mode {mode:?} image {i}: y {} vs {:.1}, z {} vs {:.1}",
                    enc.stats.y_bits_actual,
                    enc.stats.y_bits_estimate,
                    enc.stats.z_bits_actual,
                    enc.stats.z_bits_estimate
                );
            }
            corpus_actual += (enc.stats.y_bits_actual + enc.stats.z_bits_actual) as f64;
            corpus_estimate += enc.stats.y_bits_estimate + enc.stats.z_bits_estimate;
        }
    }

    tally.record(
        1,
        "lossless entropy layer (20 images x 2 modes)",
        if lossless_ok {
            Outcome::Pass("latents and reconstructions bit-exact".into())
        } else {
            Outcome::Fail(lossless_detail)
        },
    );
    let agg = format!(
        "corpus actual {corpus_actual:.0} vs estimated {corpus_estimate:.1} bits ({:+.2}%)",
        100.0 * (corpus_actual - corpus_estimate) / corpus_estimate
    );
    tally.record(
        2,
        "rate fidelity (per segment, 2% + 64 bits)",
        if rate_ok {
            Outcome::Pass(agg)
        } else {
            Outcome::Fail(format!("{rate_detail}; {agg}"))
        },
    );
}

// ── criterion 3: gradient fidelity ──────────────────────────────────────

fn criterion_gradients(tally: &mut Tally) {
    use gmsd_tensor::gradcheck::{check_gradients, check_gradients_robust};
    use gmsd_tensor::{Activation, MaskKind};

    let mut worst_op = 0.0f64;
    // every differentiable op class, f64, step 1e-5, tol 1e-5
    let mut rng = seeded_rng(300);
    let x = uniform::<f64>(&mut rng, vec![1, 2, 5, 5], -1.0, 1.0).map(|v| {
        if v.abs() < 0.15 {
            v + 0.3
        } else {
            v
        }
    });
    let k = uniform::<f64>(&mut rng, vec![3, 2, 3, 3], -1.0, 1.0);
    let kt = uniform::<f64>(&mut rng, vec![2, 3, 3, 3], -1.0, 1.0);
    let b = uniform::<f64>(&mut rng, vec![2], -1.0, 1.0);
    let pos = uniform::<f64>(&mut rng, vec![1, 2, 5, 5], 0.2, 2.0);

    type Build = Box<dyn Fn(&Tape<f64>, &[gmsd_tensor::TVar]) -> gmsd_tensor::TVar>;
    let square_sum = |t: &Tape<f64>, v: gmsd_tensor::TVar| {
        let sq = t.mul(v, v);
        t.sum(sq)
    };
    let cases: Vec<(&str, Vec<Tensor<f64>>, Build)> = vec![
        ("conv2d", vec![x.clone(), k.clone()], Box::new(move |t, v| {
            let c = t.conv2d(v[0], v[1], 2, 1);
            let sq = t.mul(c, c);
            t.sum(sq)
        })),
        ("conv2d_transpose", vec![x.clone(), kt.clone()], Box::new(move |t, v| {
            let c = t.conv2d_transpose(v[0], v[1], 2, 1, 1);
            let sq = t.mul(c, c);
            t.sum(sq)
        })),
        ("masked_conv2d", vec![x.clone(), k.clone()], Box::new(move |t, v| {
            let c = t.masked_conv2d(v[0], v[1], MaskKind::A);
            let sq = t.mul(c, c);
            t.sum(sq)
        })),
        ("bias_add", vec![x.clone(), b.clone()], Box::new(move |t, v| {
            let c = t.bias_add(v[0], v[1]);
            let sq = t.mul(c, c);
            t.sum(sq)
        })),
        ("elementwise+activations", vec![x.clone(), pos.clone()], Box::new(move |t, v| {
            let a = t.activation(v[0], Activation::LeakyRelu);
            let b = t.activation(v[0], Activation::Tanh);
            let c = t.activation(v[0], Activation::Sigmoid);
            let d = t.activation(v[0], Activation::Softplus);
            let e = t.erf(v[0]);
            let f = t.exp(v[0]);
            let g = t.ln(v[1]);
            let h = t.powf(v[1], 0.7);
            let s1 = t.add(a, b);
            let s2 = t.mul(c, d);
            let s3 = t.div(e, v[1]);
            let s4 = t.sub(f, g);
            let s5 = t.maximum(h, s2);
            let m1 = t.add(s1, s3);
            let m2 = t.add(s4, s5);
            let total = t.mul(m1, m2);
            t.sum(total)
        })),
        ("pool+filters+slices", vec![x.clone()], Box::new(move |t, v| {
            let p = t.avg_pool2(v[0]);
            let fr = t.filter_rows(v[0], &[0.25, 0.5, 0.25]);
            let fc = t.filter_cols(v[0], &[0.25, 0.5, 0.25]);
            let sc = t.slice_channels(v[0], 0, 1);
            let ss = t.slice_spatial(v[0], 3, 3);
            let a = square_sum(t, p);
            let bb = square_sum(t, fr);
            let c = square_sum(t, fc);
            let d = square_sum(t, sc);
            let e = square_sum(t, ss);
            let s1 = t.add(a, bb);
            let s2 = t.add(c, d);
            let s3 = t.add(s1, s2);
            t.add(s3, e)
        })),
    ];
    let mut ops_ok = true;
    let mut ops_detail = String::new();
    for (name, inputs, build) in &cases {
        let err = check_gradients(inputs, 1e-5, build);
        if err > worst_op {
            worst_op = err;
        }
        if err >= 1e-5 {
            ops_ok = false;
            ops_detail = format!("{name}: max rel err {err:.2e}");
        }
    }

    // GMM likelihood + factorized density gradients (f64)
    {
        let (m, kk) = (2usize, 3usize);
        let mut rng = seeded_rng(301);
        let w_raw = uniform::<f64>(&mut rng, vec![1, kk * m, 2, 2], -1.0, 1.0);
        let mu_raw = uniform::<f64>(&mut rng, vec![1, kk * m, 2, 2], -2.0, 2.0);
        let sg_raw = uniform::<f64>(&mut rng, vec![1, kk * m, 2, 2], -1.0, 0.5);
        let y = uniform::<f64>(&mut rng, vec![1, m, 2, 2], -3.0, 3.0);
        let err = check_gradients(&[w_raw, mu_raw, sg_raw, y], 1e-5, |t, vs| {
            let params = gmsd_codec::assemble_gmm(t, vs[0], vs[1], vs[2], m, kk);
            let pmf = gmsd_codec::gmm_likelihood(t, vs[3], &params);
            gmsd_codec::rate_bits_t(t, pmf)
        });
        if err > worst_op {
            worst_op = err;
        }
        if err >= 1e-5 {
            ops_ok = false;
            ops_detail = format!("gmm rate: max rel err {err:.2e}");
        }
    }

    // full rd_loss on a width_scale 0.0625 model, 16x16 crop, f64, tol 1e-4
    let full_err = {
        let model: CodecModel<f64> = CodecModel::new(
            ModelConfig {
                n: 8,
                m: 8,
                width_scale: 0.0625,
                decoder_mode: DecoderMode::Separate,
                ..desk_config(DecoderMode::Separate)
            },
            51,
        )
        .unwrap();
        let x = uniform::<f64>(&mut seeded_rng(302), vec![1, 3, 16, 16], 0.0, 1.0);
        let mut noise_rng = seeded_rng(303);
        let y_noise =
            gmsd_codec::add_uniform_noise(&Tensor::zeros(vec![1, 8, 1, 1]), &mut noise_rng);
        let z_noise =
            gmsd_codec::add_uniform_noise(&Tensor::zeros(vec![1, 8, 1, 1]), &mut noise_rng);
        let picked_names = [
            "ga.d4.k", "ga.d1.b", "gs.u1.b", "gs.u4.b", "ha.c1.b", "hs_w.c1.b", "hs_mu.c5.b",
            "hs_sg.c3.b", "f_w.l3.b", "f_mu.l2.b", "f_sg.l1.b", "ctx.b", "fac.h0", "fac.b1",
            "fac.a0",
        ];
        let picked: Vec<gmsd_tensor::ParamId> = picked_names
            .iter()
            .filter_map(|n| model.store.lookup(n))
            .collect();
        assert_eq!(picked.len(), picked_names.len());
        let inputs: Vec<Tensor<f64>> =
            picked.iter().map(|&id| model.store.value(id).clone()).collect();
        check_gradients_robust(&inputs, &[1e-5, 1e-6], |t, vs| {
            let v = gmsd_codec::ModelVars::bind_with(&model.store, |id, value| {
                match picked.iter().position(|&p| p == id) {
                    Some(j) => vs[j],
                    None => t.leaf(value.clone()),
                }
            });
            let xv = t.leaf(x.clone());
            let y = model.analysis(t, &v, xv).unwrap();
            let z = model.hyper_analysis(t, &v, y);
            let yn = t.leaf(y_noise.clone());
            let zn = t.leaf(z_noise.clone());
            let y_tilde = t.add(y, yn);
            let z_tilde = t.add(z, zn);
            let feats = model.hyper_synthesis_all(t, &v, z_tilde, (1, 1));
            let ctx = model.context(t, &v, y_tilde);
            let params = model.entropy_params(t, &v, ctx, &feats);
            let pmf_y = gmsd_codec::gmm_likelihood(t, y_tilde, &params);
            let rate_y = gmsd_codec::rate_bits_t(t, pmf_y);
            let by_id = |pid: gmsd_tensor::ParamId| v.var(pid);
            let pmf_z = model.factorized().pmf_t(t, z_tilde, &by_id);
            let rate_z = gmsd_codec::rate_bits_t(t, pmf_z);
            let rate = t.add(rate_y, rate_z);
            let bpp = t.mul_scalar(rate, 1.0 / 256.0);
            let x_rec = model.synthesis(t, &v, y_tilde);
            let d = t.sub(xv, x_rec);
            let sq = t.mul(d, d);
            let mse = t.mean(sq);
            let weighted = t.mul_scalar(mse, 0.0032 * 255.0 * 255.0);
            t.add(bpp, weighted)
        })
    };

    let ok = ops_ok && full_err < 1e-4;
    tally.record(
        3,
        "gradient fidelity (ops 1e-5, full rd_loss 1e-4)",
        if ok {
            Outcome::Pass(format!(
                "worst op err {worst_op:.2e}, full-loss err {full_err:.2e}"
            ))
        } else {
            Outcome::Fail(format!("{ops_detail}; full-loss err {full_err:.2e}"))
        },
    );
}

// ── criterion 4: GMM correctness ────────────────────────────────────────

fn criterion_gmm(tally: &mut Tally) {
    // frozen from an independent 30-digit erf computation
    const CENTER_CELL: f64 = 0.3829249225480262;
    let p0 = gmm_pmf_scalar(0.0, &[1.0, 0.0, 0.0], &[0.0; 3], &[1.0; 3]);
    let center_ok = (p0 - CENTER_CELL).abs() < 1e-9;

    let mut norm_ok = true;
    for (mu, sigma) in [(0.0, 1.0), (-100.0, 16.0), (100.0, 0.11), (12.3, 4.0)] {
        let total: f64 = (-1000..=1000)
            .map(|s| {
                gmm_pmf_scalar_raw(
                    s as f64,
                    &[0.25, 0.5, 0.25],
                    &[mu, mu - 3.0, mu + 5.0],
                    &[sigma; 3],
                )
            })
            .sum();
        if (total - 1.0).abs() >= 1e-6 {
            norm_ok = false;
        }
    }

    // simplex invariant through the network's softmax assembly
    let model: CodecModel<f32> = CodecModel::new(desk_config(DecoderMode::Separate), 43).unwrap();
    let x = &tiny_images(1, 200)[0];
    let (params, _) = gmsd_codec::infer_gmm_params(&model, x).unwrap();
    let simplex = params.simplex_violation();

    let ok = center_ok && norm_ok && simplex < 1e-6;
    tally.record(
        4,
        "GMM correctness (erf cell, normalization, simplex)",
        if ok {
            Outcome::Pass(format!(
                "pmf(0) err {:.1e}, simplex violation {simplex:.1e}",
                (p0 - CENTER_CELL).abs()
            ))
        } else {
            Outcome::Fail(format!(
                "center_ok={center_ok} norm_ok={norm_ok} simplex={simplex:.2e}"
            ))
        },
    );
}

// ── criterion 5: causality ──────────────────────────────────────────────

fn criterion_causality(tally: &mut Tally) {
    let mut ok = true;
    let mut detail = String::new();
    for mode in [DecoderMode::Mixed, DecoderMode::Separate] {
        let model: CodecModel<f32> = CodecModel::new(desk_config(mode), 44).unwrap();
        // 96x96 input -> 6x6 latent grid
        let x = uniform::<f32>(&mut seeded_rng(201), vec![1, 3, 96, 96], 0.0, 1.0);
        let t: Tape<f32> = Tape::new();
        let v = model.bind(&t);
        let xv = t.leaf(x);
        let y = model.analysis(&t, &v, xv).unwrap();
        let z = model.hyper_analysis(&t, &v, y);
        let y_hat = gmsd_codec::quantize_round(&t.value(y));
        let z_hat = gmsd_codec::quantize_round(&t.value(z));
        let zv = t.leaf(z_hat);
        let feats: Vec<Tensor<f32>> = model
            .hyper_synthesis_all(&t, &v, zv, (6, 6))
            .into_iter()
            .map(|f| t.value(f))
            .collect();
        let pipeline = SerialPipeline::new(&model, &feats).unwrap();
        let full = pipeline.collect_full(&y_hat);
        let incr = pipeline.collect_incremental(&y_hat);
        for (i, (a, b)) in full.iter().zip(&incr).enumerate() {
            if a != b {
                ok = false;
                detail = format!("mode {mode:?}: params differ at raster position {i}");
                break;
            }
        }
    }
    tally.record(
        5,
        "causality (full vs incremental prefix, 6x6 grid, both modes)",
        if ok {
            Outcome::Pass("bit-identical at all 36 positions".into())
        } else {
            Outcome::Fail(detail)
        },
    );
}

// ── criterion 6: BD-rate engine ─────────────────────────────────────────

fn criterion_bdrate(tally: &mut Tally) {
    let anchor = RdCurve::new(
        "anchor",
        "psnr",
        vec![
            RdPoint { bpp: 0.25, quality: 30.0 },
            RdPoint { bpp: 0.5, quality: 33.5 },
            RdPoint { bpp: 1.0, quality: 36.5 },
            RdPoint { bpp: 2.0, quality: 39.0 },
            RdPoint { bpp: 4.0, quality: 41.0 },
        ],
    );
    let identical = bd_rate(&anchor, &anchor).unwrap();

    let scaled = RdCurve::new(
        "scaled",
        "psnr",
        anchor
            .points
            .iter()
            .map(|p| RdPoint {
                bpp: p.bpp * 0.9,
                quality: p.quality,
            })
            .collect(),
    );
    let ten = bd_rate(&anchor, &scaled).unwrap();

    // analytic pair: quality = alpha + beta log2 bpp
    let make = |alpha: f64, beta: f64| -> RdCurve {
        RdCurve::new(
            "a",
            "psnr",
            [0.25, 0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|&b: &f64| RdPoint {
                    bpp: b,
                    quality: alpha + beta * b.log2(),
                })
                .collect(),
        )
    };
    let a = make(36.0, 4.0);
    let t = make(36.8, 4.2);
    let lo = (36.0f64 - 8.0).max(36.8 - 8.4);
    let hi = (36.0f64 + 8.0).min(36.8 + 8.4);
    let mid = 0.5 * (lo + hi);
    let closed_form = (2.0f64.powf((mid - 36.8) / 4.2 - (mid - 36.0) / 4.0) - 1.0) * 100.0;
    let got = bd_rate(&a, &t).unwrap();
    let analytic_rel = (got - closed_form).abs() / closed_form.abs();

    let ok = identical == 0.0 && (ten - -10.0).abs() < 1e-6 && analytic_rel < 1e-3;
    tally.record(
        6,
        "BD-rate engine (identity, -10% shift, analytic curves)",
        if ok {
            Outcome::Pass(format!(
                "identity {identical}, shift {ten:.6}%, analytic rel err {analytic_rel:.2e}"
            ))
        } else {
            Outcome::Fail(format!(
                "identity {identical}, shift {ten}, analytic {got} vs {closed_form}"
            ))
        },
    );
}

// ── criteria 7-9: scaled replications ───────────────────────────────────

/// One trained arm with its model kept for the degeneracy criterion.
struct TrainedArm {
    arm: Arm,
    final_val_loss: f64,
    parameter_count: usize,
    model: CodecModel<f32>,
}

fn criteria_replication(tally: &mut Tally) {
    let train_set = tiny_images(TRAIN_IMAGES, 500);
    let val_set = synthetic_images::<f32>(VAL_IMAGES, 64, 777);
    let base = desk_config(DecoderMode::Mixed);
    let tc = replication_train_config();

    eprintln!(
        "[acceptance] training 3 arms x {} seeds x {} iterations; this dominates the suite runtime",
        REPLICATION_SEEDS.len(),
        tc.iterations
    );
    let started = std::time::Instant::now();
    // identical data/noise order per seed across arms; per-arm init seeds
    let model_seed = |seed: u64, arm: Arm| -> u64 {
        seed.wrapping_mul(1_000_003).wrapping_add(match arm {
            Arm::Mixed => 1,
            Arm::Separate => 2,
            Arm::WidenedMixed => 3,
        })
    };
    let mut runs: Vec<(u64, TrainedArm)> = Vec::new();
    for &seed in &REPLICATION_SEEDS {
        for arm in [Arm::Mixed, Arm::Separate, Arm::WidenedMixed] {
            let cfg = arm.apply(&base);
            let mut model: CodecModel<f32> =
                CodecModel::new(cfg, model_seed(seed, arm)).unwrap();
            let mut tc2 = tc.clone();
            tc2.seed = seed;
            let out = gmsd_train::train(&mut model, &train_set, &val_set, &tc2)
                .expect("replication training failed");
            eprintln!(
                "[acceptance] seed {seed} {}: final val loss {:.4} ({:.1} min elapsed)",
                arm.label(),
                out.final_val_loss,
                started.elapsed().as_secs_f64() / 60.0
            );
            runs.push((
                seed,
                TrainedArm {
                    arm,
                    final_val_loss: out.final_val_loss,
                    parameter_count: model.parameter_count(),
                    model,
                },
            ));
        }
    }

    let finals = |arm: Arm| -> Vec<f64> {
        runs.iter()
            .filter(|(_, r)| r.arm == arm)
            .map(|(_, r)| r.final_val_loss)
            .collect()
    };
    let med_mixed = median(&finals(Arm::Mixed)).unwrap();
    let med_sep = median(&finals(Arm::Separate)).unwrap();
    let med_wide = median(&finals(Arm::WidenedMixed)).unwrap();

    // criterion 7: median final validation loss, separate <= mixed
    let deltas: Vec<String> = REPLICATION_SEEDS
        .iter()
        .map(|&s| {
            let m = runs
                .iter()
                .find(|(rs, r)| *rs == s && r.arm == Arm::Mixed)
                .unwrap()
                .1
                .final_val_loss;
            let p = runs
                .iter()
                .find(|(rs, r)| *rs == s && r.arm == Arm::Separate)
                .unwrap()
                .1
                .final_val_loss;
            format!("seed {s}: {:+.4}", p - m)
        })
        .collect();
    tally.record(
        7,
        "validation-loss replication (median separate <= mixed)",
        if med_sep <= med_mixed {
            Outcome::Pass(format!(
                "median separate {med_sep:.4} vs mixed {med_mixed:.4}; per-seed sep-mixed {}",
                deltas.join(", ")
            ))
        } else {
            Outcome::Fail(format!(
                "median separate {med_sep:.4} > mixed {med_mixed:.4}; per-seed sep-mixed {}",
                deltas.join(", ")
            ))
        },
    );

    // criterion 8: the widened arm must not match the separate advantage;
    // stochastic at toy scale, so a non-replication is reported, not failed
    let sep_adv = med_mixed - med_sep;
    let wide_adv = med_mixed - med_wide;
    let wide_params = runs
        .iter()
        .find(|(_, r)| r.arm == Arm::WidenedMixed)
        .unwrap()
        .1
        .parameter_count;
    let sep_params = runs
        .iter()
        .find(|(_, r)| r.arm == Arm::Separate)
        .unwrap()
        .1
        .parameter_count;
    let budget_ok = wide_params >= sep_params;
    let detail8 = format!(
        "advantage over mixed: separate {sep_adv:+.4}, widened {wide_adv:+.4} (params {wide_params} vs {sep_params})"
    );
    tally.record(
        8,
        "parameter-count ablation (widened arm below separate's gain)",
        if budget_ok && wide_adv < sep_adv {
            Outcome::Pass(detail8)
        } else if !budget_ok {
            Outcome::Fail(format!("widened arm smaller than separate: {detail8}"))
        } else {
            Outcome::Reported(format!(
                "effect did not replicate over {} seeds at toy scale: {detail8}",
                REPLICATION_SEEDS.len()
            ))
        },
    );

    // criterion 9: degeneracy metric on criterion 7's trained models
    let mut mixed_means = Vec::new();
    let mut sep_means = Vec::new();
    let mut mixed_below = Vec::new();
    let mut sep_below = Vec::new();
    for (_, run) in &runs {
        if run.arm == Arm::WidenedMixed {
            continue;
        }
        let mut means = Vec::new();
        let mut below = Vec::new();
        for x in &val_set {
            let report = diagnose_degeneracy(&run.model, x).unwrap();
            means.push(report.mean);
            below.push(report.frac_below_threshold);
        }
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        let frac = below.iter().sum::<f64>() / below.len() as f64;
        match run.arm {
            Arm::Mixed => {
                mixed_means.push(mean);
                mixed_below.push(frac);
            }
            Arm::Separate => {
                sep_means.push(mean);
                sep_below.push(frac);
            }
            Arm::WidenedMixed => unreachable!(),
        }
    }
    let med_mixed_mean = median(&mixed_means).unwrap();
    let med_sep_mean = median(&sep_means).unwrap();
    let med_mixed_below = median(&mixed_below).unwrap();
    let med_sep_below = median(&sep_below).unwrap();
    let detail9 = format!(
        "min-weight mean: separate {med_sep_mean:.4} vs mixed {med_mixed_mean:.4}; frac<0.02: mixed {med_mixed_below:.3} vs separate {med_sep_below:.3}"
    );
    let ok = med_sep_mean >= med_mixed_mean && med_mixed_below >= med_sep_below;
    tally.record(
        9,
        "degeneracy replication (separate keeps higher min weights)",
        if ok {
            Outcome::Pass(detail9)
        } else {
            Outcome::Reported(format!(
                "effect did not fully replicate over {} seeds at toy scale: {detail9}",
                REPLICATION_SEEDS.len()
            ))
        },
    );
}

// ── criterion 10: robustness ────────────────────────────────────────────

fn criterion_fuzz(tally: &mut Tally) {
    let model: CodecModel<f32> = CodecModel::new(
        ModelConfig {
            n: 8,
            m: 8,
            width_scale: 0.0625,
            ..desk_config(DecoderMode::Separate)
        },
        45,
    )
    .unwrap();
    let x = &tiny_images(1, 400)[0];
    let clean = encode_image(&model, x, 64, 64).unwrap().bytes;

    let started = std::time::Instant::now();
    let mut rng = seeded_rng(900);
    let mut decoded_ok = 0usize;
    let mut errored = 0usize;
    for i in 0..1000 {
        let mut bytes = clean.clone();
        match i % 4 {
            0 => {
                // random bit flips
                for _ in 0..rng.gen_range(1..16) {
                    let j = rng.gen_range(0..bytes.len());
                    bytes[j] ^= 1 << rng.gen_range(0..8);
                }
            }
            1 => {
                // truncation
                let cut = rng.gen_range(0..bytes.len());
                bytes.truncate(cut);
            }
            2 => {
                // byte overwrite runs
                let start = rng.gen_range(0..bytes.len());
                let len = rng.gen_range(1..32).min(bytes.len() - start);
                for b in &mut bytes[start..start + len] {
                    *b = rng.gen();
                }
            }
            _ => {
                // random garbage of random length
                let len = rng.gen_range(0..clean.len() * 2);
                bytes = (0..len).map(|_| rng.gen()).collect();
            }
        }
        match decode_image(&model, &bytes) {
            Ok(_) => decoded_ok += 1,
            Err(_) => errored += 1,
        }
    }
    let elapsed = started.elapsed();
    tally.record(
        10,
        "bitstream fuzzing (1000 mutated streams)",
        Outcome::Pass(format!(
            "no panics/hangs; {decoded_ok} decoded to garbage, {errored} rejected, {:.1}s",
            elapsed.as_secs_f64()
        )),
    );
}

// ── criterion 11: metric oracles ────────────────────────────────────────

fn criterion_metrics(tally: &mut Tally) {
    // PSNR closed forms
    let a = gmsd_codec::RasterImage::new(8, 8, 3, vec![10u8; 192]).unwrap();
    let ident = gmsd_eval::psnr(&a, &a).unwrap();
    let black = gmsd_codec::RasterImage::new(8, 8, 3, vec![0u8; 192]).unwrap();
    let white = gmsd_codec::RasterImage::new(8, 8, 3, vec![255u8; 192]).unwrap();
    let zero_db = gmsd_eval::psnr(&black, &white).unwrap();
    let b = gmsd_codec::RasterImage::new(8, 8, 3, vec![11u8; 192]).unwrap();
    let one_off = gmsd_eval::psnr(&a, &b).unwrap();
    let psnr_ok =
        ident.is_infinite() && zero_db.abs() < 1e-12 && (one_off - 48.13080360867910).abs() < 1e-9;

    // MS-SSIM: training-side (separable tape) vs independent reference
    // (direct 2-D windowing) on a fixed image pair
    let mut rng = seeded_rng(901);
    let img_a = uniform::<f64>(&mut rng, vec![1, 3, 96, 96], 0.0, 1.0);
    let noise = uniform::<f64>(&mut rng, vec![1, 3, 96, 96], -0.07, 0.07);
    let img_b = img_a.zip(&noise, |x, n| (x + n).clamp(0.0, 1.0)).unwrap();
    let reference = gmsd_eval::ms_ssim(&img_a, &img_b).unwrap();
    let tape_value = {
        let t: Tape<f64> = Tape::new();
        let av = t.leaf(img_a);
        let bv = t.leaf(img_b);
        t.value(gmsd_train::ms_ssim_t(&t, av, bv)).item()
    };
    let msssim_err = (reference - tape_value).abs();

    let ok = psnr_ok && msssim_err < 1e-4;
    tally.record(
        11,
        "metric oracles (PSNR closed forms, MS-SSIM cross-route)",
        if ok {
            Outcome::Pass(format!(
                "one-off PSNR err {:.1e} dB, MS-SSIM route diff {msssim_err:.2e}",
                (one_off - 48.13080360867910).abs()
            ))
        } else {
            Outcome::Fail(format!(
                "psnr_ok={psnr_ok}, ms-ssim {tape_value} vs reference {reference}"
            ))
        },
    );
}

#[test]
fn acceptance() {
    let mut tally = Tally::new();
    criterion_lossless_and_rate(&mut tally);
    criterion_gradients(&mut tally);
    criterion_gmm(&mut tally);
    criterion_causality(&mut tally);
    criterion_bdrate(&mut tally);
    criteria_replication(&mut tally);
    criterion_fuzz(&mut tally);
    criterion_metrics(&mut tally);

    println!("\nacceptance summary:");
    for line in &tally.lines {
        println!("  {line}");
    }
    assert_eq!(
        tally.failures, 0,
        "{} acceptance criteria failed",
        tally.failures
    );
}
