//! PPM (P6) / PGM (P5) reading and writing, plus reflective padding.

use std::path::Path;

use gmsd_tensor::{Element, Tensor};

use crate::error::{CodecError, Result};

/// 8-bit raster image, interleaved rows, 1 (gray) or 3 (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(CodecError::DataFormat(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(CodecError::DataFormat(format!(
                "pixel buffer length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::parse(&bytes)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut cursor = 0usize;
        let magic = next_token(bytes, &mut cursor)
            .ok_or_else(|| CodecError::DataFormat("missing PNM magic".into()))?;
        let channels = match magic.as_str() {
            "P6" => 3,
            "P5" => 1,
            other => {
                return Err(CodecError::DataFormat(format!(
                    "unsupported PNM magic {other:?} (P5/P6 only)"
                )))
            }
        };
        let mut dims = [0usize; 3];
        for slot in dims.iter_mut() {
            let tok = next_token(bytes, &mut cursor)
                .ok_or_else(|| CodecError::DataFormat("truncated PNM header".into()))?;
            *slot = tok
                .parse()
                .map_err(|_| CodecError::DataFormat(format!("bad PNM header token {tok:?}")))?;
        }
        let (width, height, maxval) = (dims[0], dims[1], dims[2]);
        if maxval != 255 {
            return Err(CodecError::DataFormat(format!(
                "only maxval 255 supported, got {maxval}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(CodecError::DataFormat("zero image dimensions".into()));
        }
        // single whitespace byte separates header from raster
        let n = width * height * channels;
        let raster = bytes
            .get(cursor..cursor + n)
            .ok_or_else(|| CodecError::DataFormat("truncated PNM raster".into()))?;
        Self::new(width, height, channels, raster.to_vec())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// (1, C, H, W) tensor with values in [0, 1].
    pub fn to_tensor<E: Element>(&self) -> Tensor<E> {
        let (w, h, c) = (self.width, self.height, self.channels);
        Tensor::from_fn(vec![1, c, h, w], |idx| {
            let x = idx % w;
            let y = (idx / w) % h;
            let ch = idx / (w * h);
            E::from_f64(self.data[(y * w + x) * c + ch] as f64 / 255.0)
        })
    }

    /// From a (1, C, H, W) tensor in [0, 1], rounding to 8-bit.
    pub fn from_tensor<E: Element>(t: &Tensor<E>) -> Result<Self> {
        let (b, c, h, w) = t.dims4().map_err(CodecError::Tensor)?;
        if b != 1 || (c != 1 && c != 3) {
            return Err(CodecError::Precondition(format!(
                "expected (1,1|3,H,W) tensor, got {:?}",
                t.shape()
            )));
        }
        let mut data = vec![0u8; w * h * c];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = t.data()[(ch * h + y) * w + x].as_f64();
                    data[(y * w + x) * c + ch] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        Self::new(w, h, c, data)
    }

    /// Crop to the top-left (width, height) window.
    pub fn crop(&self, width: usize, height: usize) -> Result<Self> {
        if width > self.width || height > self.height {
            return Err(CodecError::Precondition(format!(
                "crop {width}x{height} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(width * height * c);
        for y in 0..height {
            let row = &self.data[(y * self.width) * c..][..width * c];
            data.extend_from_slice(row);
        }
        Self::new(width, height, c, data)
    }
}

fn next_token(bytes: &[u8], cursor: &mut usize) -> Option<String> {
    // skip whitespace and '#' comments
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if *cursor > start {
        let tok = String::from_utf8_lossy(&bytes[start..*cursor]).into_owned();
        *cursor += 1; // consume the single separator after the token
        Some(tok)
    } else {
        None
    }
}

/// Symmetric-reflection index: ...dcba|abcd|dcba... (period 2n, edge
/// included, safe for any pad amount and n >= 1).
#[inline]
fn reflect_index(i: usize, n: usize) -> usize {
    let period = 2 * n;
    let j = i % period;
    if j < n {
        j
    } else {
        period - 1 - j
    }
}

/// Reflectively pad a (1, C, H, W) tensor on the right/bottom to multiples
/// of `unit`.
pub fn reflect_pad_to_multiple<E: Element>(t: &Tensor<E>, unit: usize) -> Result<Tensor<E>> {
    let (b, c, h, w) = t.dims4().map_err(CodecError::Tensor)?;
    let hp = h.div_ceil(unit) * unit;
    let wp = w.div_ceil(unit) * unit;
    if (hp, wp) == (h, w) {
        return Ok(t.clone());
    }
    let mut out = Tensor::zeros(vec![b, c, hp, wp]);
    {
        let dst = out.data_mut();
        let src = t.data();
        for bc in 0..b * c {
            for y in 0..hp {
                let sy = reflect_index(y, h);
                for x in 0..wp {
                    let sx = reflect_index(x, w);
                    dst[(bc * hp + y) * wp + x] = src[(bc * h + sy) * w + sx];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let img = RasterImage::new(3, 2, 3, (0..18).map(|i| i as u8 * 10).collect()).unwrap();
        let parsed = RasterImage::parse(&img.to_bytes()).unwrap();
        assert_eq!(parsed, img);
    }

    #[test]
    fn pgm_with_comments() {
        let bytes = b"P5\n# a comment\n2 2\n255\n\x01\x02\x03\x04";
        let img = RasterImage::parse(bytes).unwrap();
        assert_eq!(img.width, 2);
        assert_eq!(img.channels, 1);
        assert_eq!(img.data, vec![1, 2, 3, 4]);
    }

    #[test]
    fn rejects_other_formats() {
        assert!(RasterImage::parse(b"P3\n1 1\n255\n1 2 3").is_err());
        assert!(RasterImage::parse(b"P6\n2 2\n65535\n").is_err());
        assert!(RasterImage::parse(b"P6\n4 4\n255\nxx").is_err());
    }

    #[test]
    fn tensor_round_trip_is_exact_for_8bit() {
        let img = RasterImage::new(4, 3, 3, (0..36).map(|i| (i * 7 % 256) as u8).collect()).unwrap();
        let t: Tensor<f32> = img.to_tensor();
        let back = RasterImage::from_tensor(&t).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn reflect_pad_mirrors_content() {
        // width 3 -> 8: indices 0,1,2,2,1,0,0,1
        let t = Tensor::<f64>::new(vec![1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let p = reflect_pad_to_multiple(&t, 8).unwrap();
        assert_eq!(p.shape(), &[1, 1, 8, 8]);
        let row: Vec<f64> = p.data()[..8].to_vec();
        assert_eq!(row, vec![1.0, 2.0, 3.0, 3.0, 2.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn reflect_pad_handles_single_pixel() {
        let t = Tensor::<f64>::new(vec![1, 1, 1, 1], vec![5.0]).unwrap();
        let p = reflect_pad_to_multiple(&t, 4).unwrap();
        assert!(p.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn crop_recovers_original_window() {
        let img = RasterImage::new(5, 4, 1, (0..20).collect()).unwrap();
        let crop = img.crop(3, 2).unwrap();
        assert_eq!(crop.data, vec![0, 1, 2, 5, 6, 7]);
    }
}
