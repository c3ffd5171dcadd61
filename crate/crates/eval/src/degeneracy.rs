//! The minimum-weight degeneracy diagnostic: per-pixel channel-averaged
//! minimum mixture weight, with CSV/PGM export and summary statistics.
//! Values near zero mean the ternary mixture has collapsed to (at most) a
//! binary one at that position.

use gmsd_codec::{infer_gmm_params, CodecModel, RasterImage};
use gmsd_tensor::{Element, Tensor};

use crate::error::{EvalError, Result};

/// Fraction threshold echoing the "weights within 2%" observation.
pub const DEGENERACY_THRESHOLD: f64 = 0.02;

#[derive(Clone, Debug)]
pub struct DegeneracyReport {
    /// (1, H, W) per-pixel map, values in [0, 1/K].
    pub map: Tensor<f64>,
    pub k: usize,
    pub mean: f64,
    pub median: f64,
    /// Fraction of pixels with map value below [`DEGENERACY_THRESHOLD`].
    pub frac_below_threshold: f64,
}

impl DegeneracyReport {
    pub fn from_map(map: Tensor<f64>, k: usize) -> Self {
        let mut values: Vec<f64> = map.data().to_vec();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            0.5 * (values[n / 2 - 1] + values[n / 2])
        };
        let below = values
            .iter()
            .filter(|&&v| v < DEGENERACY_THRESHOLD)
            .count() as f64
            / n as f64;
        Self {
            map,
            k,
            mean,
            median,
            frac_below_threshold: below,
        }
    }

    /// Row-major per-pixel CSV (one row of the map per line).
    pub fn map_to_csv(&self) -> String {
        let shape = self.map.shape();
        let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let mut out = String::new();
        for y in 0..h {
            let row: Vec<String> = (0..w)
                .map(|x| format!("{}", self.map.data()[y * w + x]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// 8-bit PGM heatmap: pixel = round(255 * value * K), so the full
    /// dynamic range maps [0, 1/K] to [0, 255].
    pub fn map_to_pgm(&self) -> Result<RasterImage> {
        let shape = self.map.shape();
        let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let data: Vec<u8> = self
            .map
            .data()
            .iter()
            .map(|&v| (255.0 * v * self.k as f64).round().clamp(0.0, 255.0) as u8)
            .collect();
        RasterImage::new(w, h, 1, data).map_err(EvalError::Codec)
    }
}

/// Run inference on a padded [0,1] image and report the degeneracy map of
/// the mixture weights over the latent grid.
pub fn diagnose_degeneracy<E: Element>(
    model: &CodecModel<E>,
    x: &Tensor<E>,
) -> Result<DegeneracyReport> {
    let (params, _y_hat) = infer_gmm_params(model, x).map_err(EvalError::Codec)?;
    let map = params
        .min_weight_channel_average()
        .map_err(EvalError::Codec)?;
    Ok(DegeneracyReport::from_map(map.cast::<f64>(), params.k()))
}
