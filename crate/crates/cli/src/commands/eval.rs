use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Result};
use clap::Args;
use duolens::bench::bench as run_bench;
use duolens::corpus::{lex, read_jsonl, Language, Sample, TokenKind};
use duolens::evaluation::{accuracy_report, cross_language_matrix, retention_report, Latency, Timing};
use duolens::metrics::percentile;
use duolens::pipeline::{Detection, Detector};
use duolens::tensor::global_meter;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::io::{is_std, jsonl, read_samples, sidecar, write_bytes, write_json};

fn detector(cfg: &RunConfig) -> Result<Detector> {
    Ok(Detector::load(cfg.head()?, cfg.threshold)?)
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    config: PathBuf,
    /// Input JSONL, or - for stdin.
    #[arg(long = "in", default_value = "-")]
    input: PathBuf,
    /// Detections JSONL, or - for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

pub fn detect(a: DetectArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let det = detector(&cfg)?;
    let samples = read_samples(&a.input)?;
    let dets = det.detect_batch(&samples)?;
    write_bytes(&a.out, &jsonl(&dets)?)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    /// Which data split from the config to score.
    #[arg(long, default_value = "test")]
    split: String,
    /// Add per-language rows to the CSV.
    #[arg(long)]
    by_language: bool,
    /// Output prefix: writes <prefix>.json, .csv, .timing.json,
    /// .detections.jsonl and .config.json. Without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Detections in input order plus per-document wall time in milliseconds.
fn timed_detect(det: &Detector, samples: &[Sample]) -> Result<(Vec<Detection>, Timing)> {
    let meter = global_meter();
    meter.reset_peak();
    let start = Instant::now();
    let rows: Vec<(Detection, f64)> = samples
        .par_iter()
        .map(|s| {
            let t = Instant::now();
            let d = det.detect(&s.id, &s.text)?;
            Ok((d, t.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<duolens::Result<_>>()?;
    let total = start.elapsed().as_secs_f64();
    let ms: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let timing = Timing {
        samples_per_sec: samples.len() as f64 / total,
        latency_ms: Latency {
            p50: percentile(&ms, 50.0),
            p95: percentile(&ms, 95.0),
        },
        peak_bytes: meter.peak_bytes(),
    };
    Ok((rows.into_iter().map(|r| r.0).collect(), timing))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let det = detector(&cfg)?;
    let samples = read_samples(cfg.split(&a.split)?)?;
    let (dets, timing) = timed_detect(&det, &samples)?;
    let report = accuracy_report(&dets, &samples)?;
    match a.out {
        None => write_json(Path::new("-"), &report)?,
        Some(prefix) => {
            write_json(&sidecar(&prefix, ".json"), &report)?;
            write_bytes(&sidecar(&prefix, ".csv"), report.to_csv(a.by_language).as_bytes())?;
            write_json(&sidecar(&prefix, ".timing.json"), &timing)?;
            write_bytes(&sidecar(&prefix, ".detections.jsonl"), &jsonl(&dets)?)?;
            write_bytes(&sidecar(&prefix, ".config.json"), cfg.resolved_json().as_bytes())?;
        }
    }
    log::info!("AUROC {:.4}, macro-F1 {:.4} on {} samples", report.auroc, report.f1_macro, report.n);
    Ok(())
}

#[derive(Debug, Args)]
pub struct CrossEvalArgs {
    /// Directory of per-language head bundles named <language>.dlt.
    #[arg(long)]
    checkpoints: PathBuf,
    /// Directory of per-language corpora named <language>.jsonl.
    #[arg(long)]
    corpora: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// CSV output, or - for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

/// Files in `dir` with extension `ext`, keyed by file stem.
fn by_stem(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| duolens::Error::io(dir, e))? {
        let p = entry.map_err(|e| duolens::Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == ext) {
            if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), p.clone());
            }
        }
    }
    if out.is_empty() {
        bail!(duolens::Error::invalid(format!("no .{ext} files in {}", dir.display())));
    }
    Ok(out)
}

pub fn cross_eval(a: CrossEvalArgs) -> Result<()> {
    let mut detectors = BTreeMap::new();
    for (lang, p) in by_stem(&a.checkpoints, "dlt")? {
        detectors.insert(lang, Detector::load(&p, a.threshold)?);
    }
    let mut corpora = BTreeMap::new();
    for (lang, p) in by_stem(&a.corpora, "jsonl")? {
        corpora.insert(lang, read_jsonl(&p)?);
    }
    let m = cross_language_matrix(&detectors, &corpora)?;
    write_bytes(&a.out, m.to_csv("DuoLens").as_bytes())
}

#[derive(Debug, Args)]
pub struct RetentionArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    clean: PathBuf,
    /// Perturbed copies, matched to clean samples by id.
    #[arg(long)]
    perturbed: PathBuf,
    /// Transform name recorded in the report.
    #[arg(long)]
    transform: String,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

fn code_tokens(text: &str, lang: Language) -> usize {
    lex(text, lang).iter().filter(|t| t.kind != TokenKind::Space).count()
}

pub fn retention(a: RetentionArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let det = detector(&cfg)?;
    let clean = read_samples(&a.clean)?;
    let perturbed = read_samples(&a.perturbed)?;
    let by_id: HashMap<&str, &Sample> = perturbed.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut paired = Vec::with_capacity(clean.len());
    for s in &clean {
        let Some(p) = by_id.get(s.id.as_str()) else {
            bail!(duolens::Error::invalid(format!("no perturbed copy of sample {}", s.id)));
        };
        if p.label != s.label {
            bail!(duolens::Error::invalid(format!("label differs between copies of sample {}", s.id)));
        }
        paired.push((*p).clone());
    }
    let mut kept = 0usize;
    for (c, p) in clean.iter().zip(&paired) {
        let lang: Language = c.language.parse()?;
        kept += (code_tokens(&c.text, lang) == code_tokens(&p.text, lang)) as usize;
    }
    let clean_dets = det.detect_batch(&clean)?;
    let perturbed_dets = det.detect_batch(&paired)?;
    let report = retention_report(
        &a.transform,
        &clean_dets,
        &perturbed_dets,
        &clean,
        kept as f64 / clean.len().max(1) as f64,
    )?;
    write_json(&a.out, &report)
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Batch sizes to measure.
    #[arg(long, value_delimiter = ',', default_value = "1,8,32")]
    batch: Vec<usize>,
    /// Corpus JSONL; defaults to the config's test split.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Use at most this many documents.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Passes per batch size; each batch keeps its fastest time.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

pub fn bench(a: BenchArgs, threads: usize) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let det = detector(&cfg)?;
    let path = match &a.input {
        Some(p) => p.clone(),
        None => cfg.split("test")?.to_path_buf(),
    };
    let samples = read_samples(&path)?;
    let texts: Vec<&str> = samples.iter().take(a.samples).map(|s| s.text.as_str()).collect();
    let report = run_bench(&det.dual, &det.head, &texts, &a.batch, threads, a.repeats)?;
    write_json(&a.out, &report)?;
    if !is_std(&a.out) {
        write_bytes(&sidecar(&a.out, ".config.json"), cfg.resolved_json().as_bytes())?;
    }
    Ok(())
}
