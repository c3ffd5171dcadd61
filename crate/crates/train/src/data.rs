//! Synthetic training images: gradients, sinusoid textures, smooth blobs,
//! checkerboards and noise patches, so the test suite needs no external
//! data.

use gmsd_codec::RasterImage;
use gmsd_tensor::init::seeded_rng;
use gmsd_tensor::{Element, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrainError};

fn gradient_image<E: Element>(rng: &mut ChaCha8Rng, size: usize) -> Tensor<E> {
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let c0: [f64; 3] = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
    let c1: [f64; 3] = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
    Tensor::from_fn(vec![1, 3, size, size], |idx| {
        let x = (idx % size) as f64 / size as f64;
        let y = ((idx / size) % size) as f64 / size as f64;
        let ch = idx / (size * size);
        let s = ((x - 0.5) * dx + (y - 0.5) * dy + 0.5).clamp(0.0, 1.0);
        E::from_f64(c0[ch] * (1.0 - s) + c1[ch] * s)
    })
}

fn texture_image<E: Element>(rng: &mut ChaCha8Rng, size: usize) -> Tensor<E> {
    let fx: f64 = rng.gen_range(1.5..9.0);
    let fy: f64 = rng.gen_range(1.5..9.0);
    let phase: [f64; 3] = [
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
    ];
    let cross: f64 = rng.gen_range(0.0..1.0);
    Tensor::from_fn(vec![1, 3, size, size], |idx| {
        let x = (idx % size) as f64 / size as f64;
        let y = ((idx / size) % size) as f64 / size as f64;
        let ch = idx / (size * size);
        let v = (std::f64::consts::TAU * (fx * x + cross * fy * y) + phase[ch]).sin()
            * (std::f64::consts::TAU * fy * y).cos();
        E::from_f64(0.5 + 0.45 * v)
    })
}

fn blob_image<E: Element>(rng: &mut ChaCha8Rng, size: usize) -> Tensor<E> {
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..rng.gen_range(2..6))
        .map(|_| {
            (
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.05..0.3),
                [
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                ],
            )
        })
        .collect();
    let bg: f64 = rng.gen_range(0.1..0.9);
    Tensor::from_fn(vec![1, 3, size, size], |idx| {
        let x = (idx % size) as f64 / size as f64;
        let y = ((idx / size) % size) as f64 / size as f64;
        let ch = idx / (size * size);
        let mut v = bg;
        for &(cx, cy, r, color) in &blobs {
            let d2 = (x - cx).powi(2) + (y - cy).powi(2);
            let w = (-d2 / (2.0 * r * r)).exp();
            v = v * (1.0 - w) + color[ch] * w;
        }
        E::from_f64(v.clamp(0.0, 1.0))
    })
}

fn checker_image<E: Element>(rng: &mut ChaCha8Rng, size: usize) -> Tensor<E> {
    let cells: usize = rng.gen_range(3..10);
    let jitter: f64 = rng.gen_range(0.0..0.2);
    let a: [f64; 3] = [rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5)];
    let b: [f64; 3] = [rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0)];
    let noise_seed: u64 = rng.gen();
    let mut nrng = seeded_rng(noise_seed);
    let noise: Vec<f64> = (0..size * size).map(|_| nrng.gen_range(-jitter..jitter.max(1e-9))).collect();
    Tensor::from_fn(vec![1, 3, size, size], |idx| {
        let x = idx % size;
        let y = (idx / size) % size;
        let ch = idx / (size * size);
        let cell = (x * cells / size + y * cells / size) % 2;
        let base = if cell == 0 { a[ch] } else { b[ch] };
        E::from_f64((base + noise[y * size + x]).clamp(0.0, 1.0))
    })
}

fn noise_patch_image<E: Element>(rng: &mut ChaCha8Rng, size: usize) -> Tensor<E> {
    // smooth background with a rectangular high-noise patch
    let bg = gradient_image::<E>(rng, size);
    let px0 = rng.gen_range(0..size / 2);
    let py0 = rng.gen_range(0..size / 2);
    let pw = rng.gen_range(size / 4..size / 2);
    let ph = rng.gen_range(size / 4..size / 2);
    let amp: f64 = rng.gen_range(0.15..0.5);
    let mut out = bg.clone();
    {
        let data = out.data_mut();
        for ch in 0..3 {
            for y in py0..(py0 + ph).min(size) {
                for x in px0..(px0 + pw).min(size) {
                    let idx = (ch * size + y) * size + x;
                    let v = data[idx].as_f64() + rng.gen_range(-amp..amp);
                    data[idx] = E::from_f64(v.clamp(0.0, 1.0));
                }
            }
        }
    }
    out
}

/// `count` synthetic RGB images of `size`x`size`, deterministic per seed.
pub fn synthetic_images<E: Element>(count: usize, size: usize, seed: u64) -> Vec<Tensor<E>> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|i| match i % 5 {
            0 => gradient_image(&mut rng, size),
            1 => texture_image(&mut rng, size),
            2 => blob_image(&mut rng, size),
            3 => checker_image(&mut rng, size),
            _ => noise_patch_image(&mut rng, size),
        })
        .collect()
}

/// Load every PPM/PGM in a directory as a [0,1] tensor, sorted by name.
pub fn load_image_dir<E: Element>(dir: &std::path::Path) -> Result<Vec<(String, Tensor<E>)>> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| TrainError::Data(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|s| s.to_str()),
                Some("ppm") | Some("pgm")
            )
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(TrainError::Data(format!(
            "no .ppm/.pgm images in {}",
            dir.display()
        )));
    }
    let mut out = Vec::with_capacity(entries.len());
    for path in entries {
        let img = RasterImage::read_file(&path).map_err(|e| TrainError::Data(e.to_string()))?;
        let rgb = if img.channels == 1 {
            // expand grayscale to RGB
            let mut data = Vec::with_capacity(img.width * img.height * 3);
            for &v in &img.data {
                data.extend_from_slice(&[v, v, v]);
            }
            RasterImage::new(img.width, img.height, 3, data)
                .map_err(|e| TrainError::Data(e.to_string()))?
        } else {
            img
        };
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push((name, rgb.to_tensor()));
    }
    Ok(out)
}

/// Parse a `synthetic:count=16,size=64,seed=0` data spec.
pub fn parse_synthetic_spec(spec: &str) -> Result<(usize, usize, u64)> {
    let body = spec.strip_prefix("synthetic:").unwrap_or("");
    let (mut count, mut size, mut seed) = (16usize, 64usize, 0u64);
    if !body.is_empty() {
        for part in body.split(',') {
            let Some((k, v)) = part.split_once('=') else {
                return Err(TrainError::Data(format!(
                    "bad synthetic spec component {part:?}"
                )));
            };
            match k.trim() {
                "count" => count = v.trim().parse().map_err(|_| TrainError::Data(format!("bad count {v:?}")))?,
                "size" => size = v.trim().parse().map_err(|_| TrainError::Data(format!("bad size {v:?}")))?,
                "seed" => seed = v.trim().parse().map_err(|_| TrainError::Data(format!("bad seed {v:?}")))?,
                other => {
                    return Err(TrainError::Data(format!(
                        "unknown synthetic spec key {other:?}"
                    )))
                }
            }
        }
    }
    Ok((count, size, seed))
}
