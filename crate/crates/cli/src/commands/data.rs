use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use duolens::corpus::{balance, emit, ingest, perturb_sample, split, SplitFractions, Transform};
use duolens::synthetic::{code_corpus, disjoint_task};
use serde::Serialize;

use crate::io::{is_std, jsonl, read_samples, sidecar, write_bytes, write_json};

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Directory of *.jsonl sample pools.
    #[arg(long)]
    pools: PathBuf,
    /// Output directory for train/dev/test splits and the census.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fraction of each (language, label) stratum held out for dev.
    #[arg(long, default_value_t = 0.1)]
    dev_fraction: f64,
    /// Fraction of each stratum held out for test.
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
}

#[derive(Serialize)]
struct BuildEcho<'a> {
    pools: Vec<String>,
    seed: u64,
    fractions: &'a SplitFractions,
}

pub fn build_dataset(a: BuildDatasetArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.pools)
        .map_err(|e| duolens::Error::io(&a.pools, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!(duolens::Error::invalid(format!("no .jsonl pools in {}", a.pools.display())));
    }
    let fractions = SplitFractions {
        train: 1.0 - a.dev_fraction - a.test_fraction,
        dev: a.dev_fraction,
        test: a.test_fraction,
    };
    let pool = ingest(&paths)?;
    let (corpus, census) = balance(&pool, a.seed)?;
    let splits = split(&corpus, fractions, a.seed)?;
    for (name, rows) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let mut buf = Vec::new();
        emit(rows, &mut buf)?;
        write_bytes(&a.out.join(format!("{name}.jsonl")), &buf)?;
    }
    write_json(&a.out.join("census.json"), &census)?;
    let echo = BuildEcho {
        pools: paths.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
        seed: a.seed,
        fractions: &fractions,
    };
    write_json(&a.out.join("build.config.json"), &echo)?;
    log::info!(
        "{} pooled, {} kept, splits {}/{}/{}",
        pool.len(),
        corpus.len(),
        splits.train.len(),
        splits.dev.len(),
        splits.test.len()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long, value_parser = parse_transform)]
    transform: Transform,
    /// Input JSONL, or - for stdin.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSONL, or - for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Where to write the per-sample records; defaults to `<out>.records.jsonl`
    /// when writing to a file.
    #[arg(long)]
    records: Option<PathBuf>,
}

fn parse_transform(s: &str) -> std::result::Result<Transform, String> {
    s.parse().map_err(|e: duolens::Error| e.to_string())
}

pub fn perturb(a: PerturbArgs) -> Result<()> {
    let samples = read_samples(&a.input)?;
    let mut out = Vec::with_capacity(samples.len());
    let mut records = Vec::with_capacity(samples.len());
    for s in &samples {
        let (p, r) = perturb_sample(s, a.transform, a.seed)?;
        out.push(p);
        records.push(r);
    }
    write_bytes(&a.out, &jsonl(&out)?)?;
    let records_path = a.records.or_else(|| (!is_std(&a.out)).then(|| sidecar(&a.out, ".records.jsonl")));
    if let Some(p) = records_path {
        write_bytes(&p, &jsonl(&records)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Task {
    /// Disjoint-vocabulary text task, written as train/dev/test splits.
    Disjoint,
    /// Code-like functions in seven languages, written as one pool per language.
    Code,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Disjoint task: train/dev/test sizes.
    #[arg(long, value_delimiter = ',', default_value = "2000,500,500")]
    sizes: Vec<usize>,
    /// Code task: samples per label and language.
    #[arg(long, default_value_t = 100)]
    per_class: usize,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    match a.task {
        Task::Disjoint => {
            let [train, dev, test] = a.sizes[..] else {
                bail!(duolens::Error::invalid("--sizes takes three numbers: train,dev,test"));
            };
            let s = disjoint_task(train, dev, test, a.seed);
            for (name, rows) in [("train", &s.train), ("dev", &s.dev), ("test", &s.test)] {
                write_bytes(&a.out.join(format!("{name}.jsonl")), &jsonl(rows)?)?;
            }
        }
        Task::Code => {
            let corpus = code_corpus(a.per_class, a.seed);
            let mut langs: Vec<&str> = corpus.iter().map(|s| s.language.as_str()).collect();
            langs.dedup();
            for lang in langs {
                let rows: Vec<_> = corpus.iter().filter(|s| s.language == lang).cloned().collect();
                write_bytes(&a.out.join(format!("{lang}.jsonl")), &jsonl(&rows)?)?;
            }
        }
    }
    Ok(())
}
