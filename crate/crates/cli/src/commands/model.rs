use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use duolens::encoder::{EncoderConfig, EncoderModel, Pooling};
use duolens::features::{Branch, DualEncoder};
use duolens::fusion::{linear_probe_fit, train_head as fit_head};
use duolens::pipeline::{fit_temperature, nll, Calibration, Detector, HeadSettings};
use duolens::synthetic::{code_bpe_vocab, tiny_wordpiece_vocab};
use duolens::weights::{load_bundle, save_bundle};
use serde::Serialize;

use crate::config::RunConfig;
use crate::io::{is_std, read_samples, sidecar, write_bytes, write_json};

#[derive(Debug, Args)]
pub struct TrainHeadArgs {
    #[arg(long)]
    config: PathBuf,
    /// Head bundle to write; the training log and resolved config go beside it.
    #[arg(long)]
    out: PathBuf,
}

/// Path of `target` relative to `dir`, absolute when no relative form exists.
fn relative_to(target: &Path, dir: &Path) -> Result<PathBuf> {
    let target = fs::canonicalize(target).map_err(|e| duolens::Error::io(target, e))?;
    let dir = fs::canonicalize(dir).map_err(|e| duolens::Error::io(dir, e))?;
    Ok(pathdiff::diff_paths(&target, &dir).unwrap_or(target))
}

pub fn train_head(a: TrainHeadArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let train = read_samples(cfg.split("train")?)?;
    let dev = read_samples(cfg.split("dev")?)?;
    let dual = DualEncoder::load(&cfg.encoder_a, &cfg.encoder_b)?;
    log::info!("training on {} documents, selecting on {}", train.len(), dev.len());
    let (head, log) = fit_head(&dual, &cfg.chunking, &train, &dev, &cfg.train)?;

    let dir = match a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(d) => d.to_path_buf(),
        None => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| duolens::Error::io(&dir, e))?;
    let settings = HeadSettings {
        encoder_a: relative_to(&cfg.encoder_a, &dir)?,
        encoder_b: relative_to(&cfg.encoder_b, &dir)?,
        chunking: cfg.chunking,
        aggregation: cfg.aggregation,
        calibration: Calibration::default(),
    };
    let mut bundle = head.to_bundle()?;
    settings.write(&mut bundle);
    save_bundle(&bundle, &a.out)?;
    write_json(&sidecar(&a.out, ".log.json"), &log)?;
    write_bytes(&sidecar(&a.out, ".config.json"), cfg.resolved_json().as_bytes())?;
    log::info!("best dev AUROC {:.4} at epoch {}", log.best_dev_auroc, log.best_epoch);
    Ok(())
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Encoder bundle to probe; defaults to the config's encoder_a.
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Report JSON, or - for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Also save the probe weights as a bundle.
    #[arg(long)]
    save: Option<PathBuf>,
}

pub fn probe(a: ProbeArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let train = read_samples(cfg.split("train")?)?;
    let dev = read_samples(cfg.split("dev")?)?;
    let encoder = a.encoder.unwrap_or_else(|| cfg.encoder_a.clone());
    let branch = Branch::load(&encoder)?;
    let (probe, report) = linear_probe_fit(&branch, &cfg.chunking, &train, &dev, &cfg.train)?;
    write_json(&a.out, &report)?;
    if let Some(p) = a.save {
        save_bundle(&probe.to_bundle()?, &p)?;
    }
    if !is_std(&a.out) {
        write_bytes(&sidecar(&a.out, ".config.json"), cfg.resolved_json().as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Head bundle; its temperature metadata is rewritten in place.
    #[arg(long)]
    head: PathBuf,
    /// Held-out JSONL to fit the temperature on.
    #[arg(long)]
    dev: PathBuf,
}

#[derive(Serialize)]
struct CalibrationSummary {
    n: usize,
    temperature: f64,
    nll_before: f64,
    nll_after: f64,
}

pub fn calibrate(a: CalibrateArgs) -> Result<()> {
    let det = Detector::load(&a.head, 0.5)?;
    let dev = read_samples(&a.dev)?;
    if dev.is_empty() {
        bail!(duolens::Error::invalid(format!("{} has no samples", a.dev.display())));
    }
    let dets = det.detect_batch(&dev)?;
    let logits: Vec<f64> = dets.iter().map(|d| d.logit).collect();
    let labels: Vec<u8> = dev.iter().map(|s| s.label).collect();
    let cal = fit_temperature(&logits, &labels)?;
    let mut bundle = load_bundle(&a.head)?;
    bundle.set_meta("temperature", cal.temperature);
    save_bundle(&bundle, &a.head)?;
    let summary = CalibrationSummary {
        n: dev.len(),
        temperature: cal.temperature,
        nll_before: nll(&logits, &labels, 1.0),
        nll_after: nll(&logits, &labels, cal.temperature),
    };
    write_json(Path::new("-"), &summary)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Tiny,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VocabChoice {
    /// Synthetic WordPiece vocabulary matching the disjoint-vocabulary task.
    Wordpiece,
    /// Byte-level BPE vocabulary for the synthetic code corpus.
    CodeBpe,
}

#[derive(Debug, Args)]
pub struct InitEncoderArgs {
    #[arg(long, value_enum, default_value = "tiny")]
    preset: Preset,
    #[arg(long, value_enum)]
    vocab: VocabChoice,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of the normal weight init.
    #[arg(long, default_value_t = 0.02)]
    std: f32,
    #[arg(long, default_value = "mean")]
    pooling: Pooling,
    /// Encoder bundle path; vocabulary files are written beside it.
    #[arg(long)]
    out: PathBuf,
}

pub fn init_encoder(a: InitEncoderArgs) -> Result<()> {
    let mut cfg = match a.preset {
        Preset::Tiny => EncoderConfig::tiny(),
    };
    cfg.pooling = a.pooling;
    let vocab = match a.vocab {
        VocabChoice::Wordpiece => tiny_wordpiece_vocab(),
        VocabChoice::CodeBpe => code_bpe_vocab(),
    };
    let encoder = EncoderModel::random(cfg, a.seed, a.std)?;
    let branch = Branch::new(encoder, vocab)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    branch.save(&a.out)?;
    Ok(())
}
