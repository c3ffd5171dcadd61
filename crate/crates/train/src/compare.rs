//! Mixed-vs-separate training comparison, optionally with the widened
//! single-decoder arm that matches the separate arm's parameter budget.

use gmsd_codec::{CodecModel, DecoderMode, ModelConfig};
use gmsd_tensor::{Element, Tensor};

use crate::error::{Result, TrainError};
use crate::trainer::{train, HistoryRow, TrainConfig};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Arm {
    Mixed,
    Separate,
    WidenedMixed,
}

impl Arm {
    pub fn label(&self) -> &'static str {
        match self {
            Arm::Mixed => "mixed",
            Arm::Separate => "separate",
            Arm::WidenedMixed => "widened_mixed",
        }
    }

    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        match self {
            Arm::Mixed => {
                cfg.decoder_mode = DecoderMode::Mixed;
                cfg.widened = false;
            }
            Arm::Separate => {
                cfg.decoder_mode = DecoderMode::Separate;
                cfg.widened = false;
            }
            Arm::WidenedMixed => {
                cfg.decoder_mode = DecoderMode::Mixed;
                cfg.widened = true;
            }
        }
        cfg
    }
}

#[derive(Clone, Debug)]
pub struct ArmRun {
    pub arm: Arm,
    pub seed: u64,
    pub parameter_count: usize,
    pub history: Vec<HistoryRow>,
    pub final_val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct ModeComparison {
    pub runs: Vec<ArmRun>,
    pub seeds: Vec<u64>,
}

impl ModeComparison {
    pub fn runs_for(&self, arm: Arm) -> Vec<&ArmRun> {
        self.runs.iter().filter(|r| r.arm == arm).collect()
    }

    pub fn final_losses(&self, arm: Arm) -> Vec<f64> {
        self.runs_for(arm).iter().map(|r| r.final_val_loss).collect()
    }

    pub fn median_final_loss(&self, arm: Arm) -> Option<f64> {
        median(&self.final_losses(arm))
    }

    /// Per-seed separate-minus-mixed final-loss deltas (negative means the
    /// separate arm won that seed).
    pub fn per_seed_deltas(&self) -> Vec<(u64, f64)> {
        self.seeds
            .iter()
            .filter_map(|&s| {
                let mixed = self
                    .runs
                    .iter()
                    .find(|r| r.arm == Arm::Mixed && r.seed == s)?;
                let sep = self
                    .runs
                    .iter()
                    .find(|r| r.arm == Arm::Separate && r.seed == s)?;
                Some((s, sep.final_val_loss - mixed.final_val_loss))
            })
            .collect()
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Model seed per (training seed, arm): arms get distinct inits while the
/// data/noise stream (driven by TrainConfig::seed) stays identical.
fn model_seed(seed: u64, arm: Arm) -> u64 {
    let tag = match arm {
        Arm::Mixed => 1,
        Arm::Separate => 2,
        Arm::WidenedMixed => 3,
    };
    seed.wrapping_mul(1_000_003).wrapping_add(tag)
}

/// Train every arm under identical data order and budgets, one run per
/// seed per arm.
pub fn compare_modes<E: Element>(
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    train_images: &[Tensor<E>],
    val_images: &[Tensor<E>],
    seeds: &[u64],
    include_widened: bool,
) -> Result<ModeComparison> {
    if seeds.is_empty() {
        return Err(TrainError::Config("need at least one seed".into()));
    }
    let arms: Vec<Arm> = if include_widened {
        vec![Arm::Mixed, Arm::Separate, Arm::WidenedMixed]
    } else {
        vec![Arm::Mixed, Arm::Separate]
    };
    let mut runs = Vec::new();
    for &seed in seeds {
        for &arm in &arms {
            let cfg = arm.apply(base);
            let mut model: CodecModel<E> = CodecModel::new(cfg, model_seed(seed, arm))?;
            let mut tc = train_cfg.clone();
            tc.seed = seed;
            let out = train(&mut model, train_images, val_images, &tc)?;
            runs.push(ArmRun {
                arm,
                seed,
                parameter_count: model.parameter_count(),
                history: out.history,
                final_val_loss: out.final_val_loss,
            });
        }
    }
    Ok(ModeComparison {
        runs,
        seeds: seeds.to_vec(),
    })
}
