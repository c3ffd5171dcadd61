//! Corpus evaluation: real bitstreams in, per-image bpp/PSNR/MS-SSIM out.

use gmsd_codec::{
    decode_image, encode_image, padded_extent, reflect_pad_to_multiple, CodecModel, RasterImage,
};
use gmsd_tensor::{Element, Tensor};

use crate::error::{EvalError, Result};
use crate::metrics::{ms_ssim_images, psnr};

#[derive(Clone, Debug)]
pub struct ImageEval {
    pub name: String,
    pub bpp: f64,
    pub psnr: f64,
    pub ms_ssim: f64,
    pub bits_actual: u64,
    pub bits_estimate: f64,
}

#[derive(Clone, Debug)]
pub struct CorpusEval {
    pub rows: Vec<ImageEval>,
    pub mean_bpp: f64,
    pub mean_psnr: f64,
    pub mean_ms_ssim: f64,
}

impl CorpusEval {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,bpp,psnr,ms_ssim,bits_actual,bits_estimate\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.name, r.bpp, r.psnr, r.ms_ssim, r.bits_actual, r.bits_estimate
            ));
        }
        out.push_str(&format!(
            "__mean__,{},{},{},,\n",
            self.mean_bpp, self.mean_psnr, self.mean_ms_ssim
        ));
        out
    }
}

fn evaluate_one<E: Element>(
    model: &CodecModel<E>,
    name: &str,
    image: &Tensor<E>,
) -> Result<ImageEval> {
    let (_b, _c, h, w) = image.dims4().map_err(EvalError::Tensor)?;
    let padded = reflect_pad_to_multiple(image, 64).map_err(EvalError::Codec)?;
    debug_assert_eq!(padded.shape()[2], padded_extent(h as u32));
    let enc = encode_image(model, &padded, w as u32, h as u32).map_err(EvalError::Codec)?;
    // metrics always go through the real decoded bitstream
    let dec = decode_image(model, &enc.bytes).map_err(EvalError::Codec)?;
    let recon_full = RasterImage::from_tensor(&dec.recon.cast::<f64>()).map_err(EvalError::Codec)?;
    let recon = recon_full.crop(w, h).map_err(EvalError::Codec)?;
    let original = RasterImage::from_tensor(&image.cast::<f64>()).map_err(EvalError::Codec)?;

    Ok(ImageEval {
        name: name.to_string(),
        bpp: enc.stats.bpp,
        psnr: psnr(&original, &recon)?,
        ms_ssim: ms_ssim_images(&original, &recon)?,
        bits_actual: enc.stats.y_bits_actual + enc.stats.z_bits_actual,
        bits_estimate: enc.stats.y_bits_estimate + enc.stats.z_bits_estimate,
    })
}

/// Encode, decode and measure every image; means over the corpus.
pub fn evaluate_corpus<E: Element>(
    model: &CodecModel<E>,
    images: &[(String, Tensor<E>)],
) -> Result<CorpusEval> {
    if images.is_empty() {
        return Err(EvalError::Input("empty evaluation corpus".into()));
    }
    #[cfg(feature = "parallel")]
    let rows: Result<Vec<ImageEval>> = {
        use rayon::prelude::*;
        images
            .par_iter()
            .map(|(name, image)| evaluate_one(model, name, image))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<ImageEval>> = images
        .iter()
        .map(|(name, image)| evaluate_one(model, name, image))
        .collect();
    let rows = rows?;

    let n = rows.len() as f64;
    Ok(CorpusEval {
        mean_bpp: rows.iter().map(|r| r.bpp).sum::<f64>() / n,
        mean_psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / n,
        mean_ms_ssim: rows.iter().map(|r| r.ms_ssim).sum::<f64>() / n,
        rows,
    })
}
