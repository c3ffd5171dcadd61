//! Model configuration, key=value config text, and the channel-width plan.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{CodecError, Result};

/// How the hyperprior decoder feeds the entropy-parameter network: one
/// shared decoder emitting all three GMM parameter families, or one
/// dedicated decoder/entropy-network pair per family.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DecoderMode {
    Mixed,
    Separate,
}

impl DecoderMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecoderMode::Mixed => "mixed",
            DecoderMode::Separate => "separate",
        }
    }

    pub fn branch_count(&self) -> usize {
        match self {
            DecoderMode::Mixed => 1,
            DecoderMode::Separate => 3,
        }
    }
}

impl fmt::Display for DecoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DistortionKind {
    Mse,
    MsSsim,
}

impl DistortionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistortionKind::Mse => "mse",
            DistortionKind::MsSsim => "ms_ssim",
        }
    }
}

/// All model hyperparameters. The main path downsamples x16 and the hyper
/// path another x4, so coded inputs must be padded to multiples of 64.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Hyper/base channel width.
    pub n: usize,
    /// Latent channel count.
    pub m: usize,
    /// Mixture components per latent element.
    pub k: usize,
    pub decoder_mode: DecoderMode,
    /// Widened single-decoder ablation arm (only meaningful in mixed mode).
    pub widened: bool,
    pub residual_depth: usize,
    /// Global multiplier applied to the reference channel table.
    pub width_scale: f64,
    /// Rate-distortion tradeoff.
    pub lambda: f64,
    pub distortion: DistortionKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n: 16,
            m: 16,
            k: 3,
            decoder_mode: DecoderMode::Mixed,
            widened: false,
            residual_depth: 1,
            width_scale: 0.125,
            lambda: 0.0032,
            distortion: DistortionKind::Mse,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.m < 4 {
            return Err(CodecError::Config(format!(
                "n and m must be >= 4 (got n={}, m={})",
                self.n, self.m
            )));
        }
        if self.k < 1 {
            return Err(CodecError::Config("k must be >= 1".into()));
        }
        if self.lambda <= 0.0 {
            return Err(CodecError::Config("lambda must be > 0".into()));
        }
        if self.residual_depth == 0 {
            return Err(CodecError::Config("depth must be >= 1".into()));
        }
        if self.width_scale <= 0.0 {
            return Err(CodecError::Config("width_scale must be > 0".into()));
        }
        if self.widened && self.decoder_mode != DecoderMode::Mixed {
            return Err(CodecError::Config(
                "widened=true requires mode=mixed".into(),
            ));
        }
        Ok(())
    }

    /// Canonical key=value text (embedded in checkpoints).
    pub fn to_text(&self) -> String {
        format!(
            "mode={}\nwidened={}\nn={}\nm={}\nk={}\nwidth_scale={}\ndepth={}\nlambda={}\ndistortion={}\n",
            self.decoder_mode,
            self.widened,
            self.n,
            self.m,
            self.k,
            self.width_scale,
            self.residual_depth,
            self.lambda,
            self.distortion.as_str(),
        )
    }

    /// Build from parsed key=value pairs, ignoring keys that belong to
    /// other consumers (the trainer shares the same config file).
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (key, value) in kv {
            match key.as_str() {
                "mode" => {
                    cfg.decoder_mode = match value.as_str() {
                        "mixed" => DecoderMode::Mixed,
                        "separate" => DecoderMode::Separate,
                        other => {
                            return Err(CodecError::Config(format!(
                                "mode must be mixed|separate, got {other:?}"
                            )))
                        }
                    }
                }
                "widened" => cfg.widened = parse_bool(key, value)?,
                "n" => cfg.n = parse_num(key, value)?,
                "m" => cfg.m = parse_num(key, value)?,
                "k" => cfg.k = parse_num(key, value)?,
                "depth" => cfg.residual_depth = parse_num(key, value)?,
                "width_scale" => cfg.width_scale = parse_float(key, value)?,
                "lambda" => cfg.lambda = parse_float(key, value)?,
                "distortion" => {
                    cfg.distortion = match value.as_str() {
                        "mse" => DistortionKind::Mse,
                        "ms_ssim" => DistortionKind::MsSsim,
                        other => {
                            return Err(CodecError::Config(format!(
                                "distortion must be mse|ms_ssim, got {other:?}"
                            )))
                        }
                    }
                }
                _ => {} // trainer keys and the like
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Keys consumed by [`ModelConfig::from_kv`].
    pub fn known_keys() -> &'static [&'static str] {
        &[
            "mode",
            "widened",
            "n",
            "m",
            "k",
            "depth",
            "width_scale",
            "lambda",
            "distortion",
        ]
    }
}

fn parse_num(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| CodecError::Config(format!("{key} must be an integer, got {value:?}")))
}

fn parse_float(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| CodecError::Config(format!("{key} must be a number, got {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(CodecError::Config(format!(
            "{key} must be true|false, got {value:?}"
        ))),
    }
}

/// Parse line-based `key=value` text with `#` comments. Duplicate keys and
/// malformed lines are errors.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CodecError::Config(format!(
                "line {}: expected key=value, got {raw:?}",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(CodecError::Config(format!(
                "line {}: duplicate key {key:?}",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

/// Per-layer channel widths, scaled from the reference table and rounded
/// to multiples of 4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelPlan {
    /// Hyper-decoder Conv1..Conv5 output widths (per branch in separate mode).
    pub hyper_decoder: [usize; 5],
    /// Entropy-parameter network hidden widths (two 1x1 conv layers).
    pub entropy_hidden: [usize; 2],
    /// Entropy-parameter final width: 3*K*M in mixed mode, K*M per branch
    /// in separate mode.
    pub entropy_out: usize,
}

/// Reference widths at width_scale 1. The separate mode instantiates the
/// per-branch column three times; the widened arm grows the single decoder
/// instead.
const HYPER_WIDTHS_STANDARD: [usize; 5] = [128, 128, 192, 192, 256];
const HYPER_WIDTHS_WIDENED: [usize; 5] = [192, 256, 256, 384, 512];
const ENTROPY_HIDDEN_STANDARD: [usize; 2] = [640, 640];
const ENTROPY_HIDDEN_WIDENED: [usize; 2] = [1024, 1024];
pub const ENTROPY_OUT_MIXED_REF: usize = 1152;
pub const ENTROPY_OUT_SEPARATE_REF: usize = 384;

fn round4(v: f64) -> usize {
    (((v / 4.0).round() as usize) * 4).max(4)
}

/// The width plan for a configuration: reference table times width_scale,
/// rounded to multiples of 4, with the entropy output pinned to the exact
/// parameter count the GMM needs.
pub fn hyper_decoder_channel_plan(cfg: &ModelConfig) -> ChannelPlan {
    let ws = cfg.width_scale;
    let (hyper, hidden) = if cfg.widened {
        (HYPER_WIDTHS_WIDENED, ENTROPY_HIDDEN_WIDENED)
    } else {
        (HYPER_WIDTHS_STANDARD, ENTROPY_HIDDEN_STANDARD)
    };
    let hyper_decoder = [
        round4(hyper[0] as f64 * ws),
        round4(hyper[1] as f64 * ws),
        round4(hyper[2] as f64 * ws),
        round4(hyper[3] as f64 * ws),
        round4(hyper[4] as f64 * ws),
    ];
    let entropy_hidden = [
        round4(hidden[0] as f64 * ws),
        round4(hidden[1] as f64 * ws),
    ];
    let entropy_out = match cfg.decoder_mode {
        DecoderMode::Mixed => 3 * cfg.k * cfg.m,
        DecoderMode::Separate => cfg.k * cfg.m,
    };
    ChannelPlan {
        hyper_decoder,
        entropy_hidden,
        entropy_out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: DecoderMode, ws: f64, n: usize) -> ModelConfig {
        ModelConfig {
            n,
            m: n,
            decoder_mode: mode,
            width_scale: ws,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn plan_full_scale_separate_matches_reference_table() {
        let plan = hyper_decoder_channel_plan(&cfg(DecoderMode::Separate, 1.0, 128));
        assert_eq!(plan.hyper_decoder, [128, 128, 192, 192, 256]);
        assert_eq!(plan.entropy_hidden, [640, 640]);
        // per-branch K*M = 3*128 = the reference separate column
        assert_eq!(plan.entropy_out, ENTROPY_OUT_SEPARATE_REF);
    }

    #[test]
    fn plan_full_scale_mixed_final_width() {
        let plan = hyper_decoder_channel_plan(&cfg(DecoderMode::Mixed, 1.0, 128));
        // 3*K*M = 3*3*128 = the reference mixed column
        assert_eq!(plan.entropy_out, ENTROPY_OUT_MIXED_REF);
    }

    #[test]
    fn plan_desk_scale_separate() {
        let plan = hyper_decoder_channel_plan(&cfg(DecoderMode::Separate, 0.125, 16));
        assert_eq!(plan.hyper_decoder, [16, 16, 24, 24, 32]);
        assert_eq!(plan.entropy_out, 48); // K*M = 3*16
    }

    #[test]
    fn widened_plan_grows_all_layers() {
        let std = hyper_decoder_channel_plan(&cfg(DecoderMode::Mixed, 0.125, 16));
        let mut c = cfg(DecoderMode::Mixed, 0.125, 16);
        c.widened = true;
        let wide = hyper_decoder_channel_plan(&c);
        for i in 0..5 {
            assert!(wide.hyper_decoder[i] > std.hyper_decoder[i]);
        }
        assert_eq!(std.entropy_out, wide.entropy_out);
    }

    #[test]
    fn config_text_round_trips() {
        let mut c = ModelConfig::default();
        c.decoder_mode = DecoderMode::Separate;
        c.lambda = 0.015;
        let kv = parse_kv(&c.to_text()).unwrap();
        let parsed = ModelConfig::from_kv(&kv).unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn parse_kv_rejects_garbage() {
        assert!(parse_kv("this is not kv\n").is_err());
        assert!(parse_kv("a=1\na=2\n").is_err());
        let ok = parse_kv("# comment\n a = 1 # trailing\n\nb=two\n").unwrap();
        assert_eq!(ok["a"], "1");
        assert_eq!(ok["b"], "two");
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ModelConfig::default();
        c.lambda = 0.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.widened = true;
        c.decoder_mode = DecoderMode::Separate;
        assert!(c.validate().is_err()); // widened requires mixed
    }
}
