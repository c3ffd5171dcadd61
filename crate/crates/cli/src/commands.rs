//! Subcommand implementations. All numerical work runs in f32; errors are
//! mapped onto the documented exit codes.

use std::path::Path;

use gmsd_codec::{
    config::parse_kv, decode_image, encode_image, reflect_pad_to_multiple, CodecModel, ModelConfig,
    RasterImage,
};
use gmsd_eval::{bd_rate, diagnose_degeneracy, evaluate_corpus, RdCurve};
use gmsd_tensor::Tensor;
use gmsd_train::{
    compare_modes, history_to_csv, load_image_dir, median, parse_synthetic_spec, synthetic_images,
    train as run_train, Arm, TrainConfig, TrainError,
};

pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn map_train_err(e: TrainError) -> CliError {
    let code = match &e {
        TrainError::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    };
    CliError {
        code,
        message: e.to_string(),
    }
}

fn map_codec_err(e: gmsd_codec::CodecError) -> CliError {
    CliError::data(e.to_string())
}

fn map_eval_err(e: gmsd_eval::EvalError) -> CliError {
    CliError::data(e.to_string())
}

fn read_config(path: &Path) -> Result<(ModelConfig, TrainConfig, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let kv = parse_kv(&text).map_err(map_codec_err)?;
    for key in kv.keys() {
        let known = ModelConfig::known_keys().contains(&key.as_str())
            || TrainConfig::known_keys().contains(&key.as_str());
        if !known {
            return Err(CliError::data(format!("unknown config key {key:?}")));
        }
    }
    let model_cfg = ModelConfig::from_kv(&kv).map_err(map_codec_err)?;
    let train_cfg = TrainConfig::from_kv(&kv).map_err(map_train_err)?;
    Ok((model_cfg, train_cfg, text))
}

/// Load images for a `--data` argument: a directory of PPM/PGM files or a
/// `synthetic:` spec. Returns (train set, val set): directories split off
/// every fifth image for validation; synthetic specs generate a
/// disjoint validation batch from a derived seed.
fn load_data(spec: &str) -> Result<(Vec<Tensor<f32>>, Vec<Tensor<f32>>)> {
    if spec.starts_with("synthetic:") || spec == "synthetic" {
        let (count, size, seed) = parse_synthetic_spec(spec).map_err(map_train_err)?;
        let train = synthetic_images(count, size, seed);
        let val = synthetic_images((count / 4).max(1), size, seed.wrapping_add(0x5eed));
        return Ok((train, val));
    }
    let images = load_image_dir::<f32>(Path::new(spec)).map_err(map_train_err)?;
    if images.len() < 2 {
        return Err(CliError::data(format!(
            "need at least 2 images in {spec} to split off a validation set"
        )));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, (_, img)) in images.into_iter().enumerate() {
        if i % 5 == 4 {
            val.push(img);
        } else {
            train.push(img);
        }
    }
    if val.is_empty() {
        val.push(train.pop().expect("len >= 2"));
    }
    Ok((train, val))
}

pub fn train(
    config: &Path,
    data: &str,
    out: &Path,
    seed: u64,
    history: Option<&Path>,
    val_data: Option<&str>,
) -> Result<()> {
    let (model_cfg, mut train_cfg, config_text) = read_config(config)?;
    train_cfg.seed = seed;

    let (train_set, default_val) = load_data(data)?;
    let val_set = match val_data {
        Some(spec) => load_data(spec)?.0,
        None => default_val,
    };

    let mut model: CodecModel<f32> =
        CodecModel::new(model_cfg, seed).map_err(map_codec_err)?;
    model.config_text = config_text;
    let outcome = run_train(&mut model, &train_set, &val_set, &train_cfg).map_err(map_train_err)?;

    let hash = model
        .save_file(out)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", out.display())))?;
    let history_path = history
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| out.with_extension("history.csv"));
    std::fs::write(&history_path, history_to_csv(&outcome.history))
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", history_path.display())))?;

    println!(
        "trained {} iterations; final val loss {:.6}; checkpoint {} (hash {:#018x}); history {}",
        train_cfg.iterations,
        outcome.final_val_loss,
        out.display(),
        hash,
        history_path.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<CodecModel<f32>> {
    let (model, _hash) = CodecModel::load_file(path)
        .map_err(|e| CliError::data(format!("cannot load model {}: {e}", path.display())))?;
    Ok(model)
}

fn read_image_tensor(path: &Path) -> Result<(Tensor<f32>, u32, u32)> {
    let img = RasterImage::read_file(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let rgb = if img.channels == 1 {
        let mut data = Vec::with_capacity(img.width * img.height * 3);
        for &v in &img.data {
            data.extend_from_slice(&[v, v, v]);
        }
        RasterImage::new(img.width, img.height, 3, data).map_err(map_codec_err)?
    } else {
        img
    };
    let (w, h) = (rgb.width as u32, rgb.height as u32);
    Ok((rgb.to_tensor(), w, h))
}

pub fn encode(model_path: &Path, input: &Path, output: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let (tensor, w, h) = read_image_tensor(input)?;
    let padded = reflect_pad_to_multiple(&tensor, 64).map_err(map_codec_err)?;
    let enc = encode_image(&model, &padded, w, h).map_err(map_codec_err)?;
    std::fs::write(output, &enc.bytes)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", output.display())))?;
    println!(
        "encoded {}x{} -> {} bytes ({:.4} bpp, estimate {:.1} bits, clamped {})",
        w,
        h,
        enc.bytes.len(),
        enc.stats.bpp,
        enc.stats.y_bits_estimate + enc.stats.z_bits_estimate,
        enc.stats.clamped
    );
    Ok(())
}

pub fn decode(model_path: &Path, input: &Path, output: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let bytes = std::fs::read(input)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", input.display())))?;
    let dec = decode_image(&model, &bytes).map_err(map_codec_err)?;
    let full = RasterImage::from_tensor(&dec.recon.cast::<f64>()).map_err(map_codec_err)?;
    let cropped = full
        .crop(dec.header.orig_width as usize, dec.header.orig_height as usize)
        .map_err(map_codec_err)?;
    cropped
        .write_file(output)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", output.display())))?;
    println!(
        "decoded {}x{} -> {}",
        dec.header.orig_width,
        dec.header.orig_height,
        output.display()
    );
    Ok(())
}

pub fn eval(model_path: &Path, data: &str, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let images = load_image_dir::<f32>(Path::new(data)).map_err(map_train_err)?;
    let corpus = evaluate_corpus(&model, &images).map_err(map_eval_err)?;
    std::fs::write(out, corpus.to_csv())
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", out.display())))?;
    println!(
        "evaluated {} images: mean bpp {:.4}, mean PSNR {:.2} dB, mean MS-SSIM {:.4}",
        corpus.rows.len(),
        corpus.mean_bpp,
        corpus.mean_psnr,
        corpus.mean_ms_ssim
    );
    Ok(())
}

pub fn compare(config: &Path, data: &str, seeds: &str, out: &Path, widened: bool) -> Result<()> {
    let (model_cfg, train_cfg, _) = read_config(config)?;
    let seeds: Vec<u64> = seeds
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| CliError::data(format!("bad seed {s:?}")))
        })
        .collect::<Result<_>>()?;
    let (train_set, val_set) = load_data(data)?;

    let cmp = compare_modes::<f32>(&model_cfg, &train_cfg, &train_set, &val_set, &seeds, widened)
        .map_err(map_train_err)?;

    let stem = out.to_string_lossy();
    for run in &cmp.runs {
        let path = format!("{stem}.{}.seed{}.csv", run.arm.label(), run.seed);
        std::fs::write(&path, history_to_csv(&run.history))
            .map_err(|e| CliError::data(format!("cannot write {path}: {e}")))?;
    }

    let mut summary = String::from("arm,seed,parameter_count,final_val_loss\n");
    for run in &cmp.runs {
        summary.push_str(&format!(
            "{},{},{},{}\n",
            run.arm.label(),
            run.seed,
            run.parameter_count,
            run.final_val_loss
        ));
    }
    let arms: &[Arm] = if widened {
        &[Arm::Mixed, Arm::Separate, Arm::WidenedMixed]
    } else {
        &[Arm::Mixed, Arm::Separate]
    };
    for &arm in arms {
        if let Some(m) = cmp.median_final_loss(arm) {
            summary.push_str(&format!("__median_{}__,,,{}\n", arm.label(), m));
        }
    }
    let summary_path = format!("{stem}.summary.csv");
    std::fs::write(&summary_path, &summary)
        .map_err(|e| CliError::data(format!("cannot write {summary_path}: {e}")))?;

    let deltas = cmp.per_seed_deltas();
    let delta_vals: Vec<f64> = deltas.iter().map(|d| d.1).collect();
    println!("compared modes over {} seed(s); curves and summary at {stem}.*", seeds.len());
    for (seed, delta) in &deltas {
        println!("seed {seed}: separate - mixed final val loss = {delta:+.6}");
    }
    if let Some(med) = median(&delta_vals) {
        println!("median separate - mixed delta: {med:+.6}");
    }
    Ok(())
}

pub fn diagnose(model_path: &Path, input: &Path, out_prefix: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let (tensor, _w, _h) = read_image_tensor(input)?;
    let padded = reflect_pad_to_multiple(&tensor, 64).map_err(map_codec_err)?;
    let report = diagnose_degeneracy(&model, &padded).map_err(map_eval_err)?;

    let csv_path = format!("{}.csv", out_prefix.display());
    let pgm_path = format!("{}.pgm", out_prefix.display());
    std::fs::write(&csv_path, report.map_to_csv())
        .map_err(|e| CliError::data(format!("cannot write {csv_path}: {e}")))?;
    report
        .map_to_pgm()
        .map_err(map_eval_err)?
        .write_file(Path::new(&pgm_path))
        .map_err(map_codec_err)?;
    println!(
        "degeneracy map: mean {:.4}, median {:.4}, {:.1}% of pixels below {:.2} (K={}); wrote {csv_path}, {pgm_path}",
        report.mean,
        report.median,
        report.frac_below_threshold * 100.0,
        gmsd_eval::DEGENERACY_THRESHOLD,
        report.k
    );
    Ok(())
}

pub fn bdrate(anchor: &Path, test: &Path) -> Result<()> {
    let read_curve = |p: &Path| -> Result<RdCurve> {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", p.display())))?;
        RdCurve::from_csv(&text).map_err(map_eval_err)
    };
    let a = read_curve(anchor)?;
    let t = read_curve(test)?;
    for w in a
        .validate_for_bd()
        .map_err(map_eval_err)?
        .into_iter()
        .chain(t.validate_for_bd().map_err(map_eval_err)?)
    {
        eprintln!("warning: {w}");
    }
    let bd = bd_rate(&a, &t).map_err(map_eval_err)?;
    println!("BD-rate ({} vs {}): {:.2}%", t.label, a.label, bd);
    Ok(())
}
