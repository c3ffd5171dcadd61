//! The training loop: Adam on the RD loss with a fixed learning rate that
//! drops for the final stretch of the budget, periodic deterministic
//! validation, and seeded end-to-end reproducibility.

use std::collections::BTreeMap;

use gmsd_codec::CodecModel;
use gmsd_tensor::init::seeded_rng;
use gmsd_tensor::{AdamConfig, AdamState, Element, Tape, Tensor};
use rand::Rng;

use crate::error::{Result, TrainError};
use crate::loss::{rd_loss, validation_loss};

/// Fraction of the budget that runs at the reduced final learning rate
/// (mirrors 80K of 1.08M iterations).
pub const FINAL_PHASE_FRACTION: f64 = 80.0 / 1080.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch: usize,
    pub crop: usize,
    pub lr: f64,
    pub lr_final: f64,
    /// Length of the reduced-lr tail; `None` = FINAL_PHASE_FRACTION of the
    /// budget.
    pub lr_final_iters: Option<usize>,
    pub seed: u64,
    pub val_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch: 4,
            crop: 64,
            lr: 1e-4,
            lr_final: 1e-5,
            lr_final_iters: None,
            seed: 0,
            val_interval: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop % 64 != 0 {
            return Err(TrainError::Config(format!(
                "crop must be a positive multiple of 64, got {}",
                self.crop
            )));
        }
        if self.batch == 0 {
            return Err(TrainError::Config("batch must be >= 1".into()));
        }
        if self.val_interval == 0 {
            return Err(TrainError::Config("val_interval must be >= 1".into()));
        }
        if self.lr <= 0.0 || self.lr_final <= 0.0 {
            return Err(TrainError::Config("learning rates must be > 0".into()));
        }
        Ok(())
    }

    pub fn final_phase(&self) -> usize {
        self.lr_final_iters
            .unwrap_or(((self.iterations as f64) * FINAL_PHASE_FRACTION).round() as usize)
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        if self.iterations.saturating_sub(iteration) <= self.final_phase() {
            self.lr_final
        } else {
            self.lr
        }
    }

    /// Build from parsed key=value pairs, ignoring model keys.
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (key, value) in kv {
            let bad = |what: &str| TrainError::Config(format!("{key} must be {what}, got {value:?}"));
            match key.as_str() {
                "iterations" => cfg.iterations = value.parse().map_err(|_| bad("an integer"))?,
                "batch" => cfg.batch = value.parse().map_err(|_| bad("an integer"))?,
                "crop" => cfg.crop = value.parse().map_err(|_| bad("an integer"))?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("a number"))?,
                "lr_final" => cfg.lr_final = value.parse().map_err(|_| bad("a number"))?,
                "lr_final_iters" => {
                    cfg.lr_final_iters = Some(value.parse().map_err(|_| bad("an integer"))?)
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("an integer"))?,
                "val_interval" => cfg.val_interval = value.parse().map_err(|_| bad("an integer"))?,
                _ => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn known_keys() -> &'static [&'static str] {
        &[
            "iterations",
            "batch",
            "crop",
            "lr",
            "lr_final",
            "lr_final_iters",
            "seed",
            "val_interval",
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    /// Mean training loss since the previous row (NaN for the initial row).
    pub train_loss: f64,
    pub val_loss: f64,
    pub rate_bpp: f64,
    pub distortion: f64,
}

pub fn history_to_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("iteration,train_loss,val_loss,rate_bpp,distortion\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.train_loss, r.val_loss, r.rate_bpp, r.distortion
        ));
    }
    out
}

pub struct TrainOutcome {
    pub history: Vec<HistoryRow>,
    pub final_val_loss: f64,
    /// Steps skipped because the loss went non-finite.
    pub skipped_steps: usize,
}

/// Mean validation parts over the validation set (round-based, no noise).
fn validate<E: Element>(
    model: &CodecModel<E>,
    val: &[Tensor<E>],
) -> Result<(f64, f64, f64)> {
    let mut loss = 0.0;
    let mut bpp = 0.0;
    let mut dist = 0.0;
    for x in val {
        let parts = validation_loss(model, x, model.config.lambda, model.config.distortion)?;
        loss += parts.loss;
        bpp += parts.rate_bpp;
        dist += parts.distortion;
    }
    let n = val.len() as f64;
    Ok((loss / n, bpp / n, dist / n))
}

/// Train in place. Returns the loss history; deterministic per seed.
pub fn train<E: Element>(
    model: &mut CodecModel<E>,
    train_images: &[Tensor<E>],
    val_images: &[Tensor<E>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_images.is_empty() {
        return Err(TrainError::Config("training dataset is empty".into()));
    }
    if val_images.is_empty() {
        return Err(TrainError::Config("validation dataset is empty".into()));
    }
    for (i, img) in train_images.iter().enumerate() {
        let (_, c, h, w) = img.dims4().map_err(TrainError::Tensor)?;
        if c != 3 || h < cfg.crop || w < cfg.crop {
            return Err(TrainError::Config(format!(
                "training image {i} is {c}x{h}x{w}, need 3x>={0}x>={0}",
                cfg.crop
            )));
        }
    }

    let mut rng = seeded_rng(cfg.seed);
    let mut adam = AdamState::new(&model.store, AdamConfig::default());
    let mut history = Vec::new();
    let mut skipped = 0usize;
    let mut nan_streak = 0usize;
    let mut window_sum = 0.0f64;
    let mut window_count = 0usize;

    let (val0, bpp0, dist0) = validate(model, val_images)?;
    history.push(HistoryRow {
        iteration: 0,
        train_loss: f64::NAN,
        val_loss: val0,
        rate_bpp: bpp0,
        distortion: dist0,
    });
    let mut final_val = val0;

    for it in 0..cfg.iterations {
        // assemble a batch of random crops
        let c = cfg.crop;
        let mut batch = Tensor::zeros(vec![cfg.batch, 3, c, c]);
        {
            let dst = batch.data_mut();
            for b in 0..cfg.batch {
                let img = &train_images[rng.gen_range(0..train_images.len())];
                let (_, _, h, w) = img.dims4().unwrap();
                let oy = if h > c { rng.gen_range(0..=h - c) } else { 0 };
                let ox = if w > c { rng.gen_range(0..=w - c) } else { 0 };
                for ch in 0..3 {
                    for y in 0..c {
                        let src_row = &img.data()[((ch * h) + oy + y) * w + ox..][..c];
                        let d0 = ((b * 3 + ch) * c + y) * c;
                        dst[d0..d0 + c].copy_from_slice(src_row);
                    }
                }
            }
        }

        let t: Tape<E> = Tape::new();
        let v = model.bind(&t);
        let xv = t.leaf(batch);
        let out = rd_loss(&t, model, &v, xv, model.config.lambda, model.config.distortion, &mut rng)?;

        if !out.parts.loss.is_finite() {
            skipped += 1;
            nan_streak += 1;
            if nan_streak >= 3 {
                return Err(TrainError::Numerical(format!(
                    "loss went non-finite for {nan_streak} consecutive steps at iteration {it}"
                )));
            }
            continue;
        }
        nan_streak = 0;
        window_sum += out.parts.loss;
        window_count += 1;

        let grads = t.backward(out.loss_var).map_err(TrainError::Tensor)?;
        let pairs = v.pairs(&model.store);
        adam.step(&mut model.store, &grads, &pairs, cfg.lr_at(it));

        let done = it + 1 == cfg.iterations;
        if (it + 1) % cfg.val_interval == 0 || done {
            let (val, bpp, dist) = validate(model, val_images)?;
            history.push(HistoryRow {
                iteration: it + 1,
                train_loss: window_sum / window_count.max(1) as f64,
                val_loss: val,
                rate_bpp: bpp,
                distortion: dist,
            });
            final_val = val;
            window_sum = 0.0;
            window_count = 0;
        }
    }

    Ok(TrainOutcome {
        history,
        final_val_loss: final_val,
        skipped_steps: skipped,
    })
}
