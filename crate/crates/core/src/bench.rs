//! Throughput, latency and peak-memory measurement at 512-token inputs.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::pool;
use crate::evaluation::Latency;
use crate::features::{Branch, DualEncoder};
use crate::fusion::FusionHead;
use crate::metrics::percentile;
use crate::tensor::global_meter;
use crate::tokenizers::Encoding;
use crate::{Error, Result};

pub const BENCH_TOKENS: usize = 512;
pub const WARMUP_BATCHES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub batch: usize,
    pub samples: usize,
    pub samples_per_sec: f64,
    /// Per-batch wall time; at batch 1 this is per-sample latency.
    pub latency_ms: Latency,
    /// Peak live tensor bytes during the run, model weights included.
    pub peak_bytes: u64,
    /// Live tensor bytes when the run started.
    pub baseline_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub threads: usize,
    pub tokens: usize,
    pub warmup_batches: usize,
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
}

/// Content truncated to fit, then padded (masked) to exactly `BENCH_TOKENS`.
fn fixed_length(branch: &Branch, text: &str) -> Encoding {
    let ids = branch.tokenize(text);
    let mut enc = branch.wrap(&ids[..ids.len().min(BENCH_TOKENS - 2)]);
    let missing = BENCH_TOKENS - enc.len();
    enc.pad(branch.vocab.specials().pad, missing);
    enc
}

fn pooled(branch: &Branch, encs: &[Encoding]) -> Result<Vec<Vec<f32>>> {
    let hidden = branch.encoder.forward_batch(encs)?;
    let (len, d) = (hidden.shape()[1], hidden.shape()[2]);
    let hidden = hidden.reshape(vec![encs.len() * len, d])?;
    encs.iter()
        .enumerate()
        .map(|(i, e)| {
            let rows = crate::Tensor::new(vec![len, d], hidden.data()[i * len * d..(i + 1) * len * d].to_vec())?;
            Ok(pool(&rows, &e.attention_mask, branch.encoder.config().pooling)?.to_vec())
        })
        .collect()
}

/// Scores one batch through both encoders and the head.
fn run_batch(dual: &DualEncoder, head: &FusionHead, a: &[Encoding], b: &[Encoding]) -> Result<Vec<f64>> {
    let pa = pooled(&dual.a, a)?;
    let pb = pooled(&dual.b, b)?;
    pa.iter().zip(&pb).map(|(x, y)| head.logit(x, y)).collect()
}

/// Splits a batch into at most `threads` parts run concurrently.
fn run_split(dual: &DualEncoder, head: &FusionHead, a: &[Encoding], b: &[Encoding], threads: usize) -> Result<Vec<f64>> {
    if threads <= 1 || a.len() <= 1 {
        return run_batch(dual, head, a, b);
    }
    let part = a.len().div_ceil(threads);
    let parts: Vec<Vec<f64>> = a
        .par_chunks(part)
        .zip(b.par_chunks(part))
        .map(|(x, y)| run_batch(dual, head, x, y))
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// Runs the corpus `repeats` times per batch size; each batch keeps its
/// fastest time. Must be called inside the rayon pool whose size is `threads`.
pub fn bench(
    dual: &DualEncoder,
    head: &FusionHead,
    texts: &[&str],
    batch_sizes: &[usize],
    threads: usize,
    repeats: usize,
) -> Result<BenchReport> {
    if texts.is_empty() {
        return Err(Error::invalid("bench corpus is empty"));
    }
    if batch_sizes.is_empty() || batch_sizes.contains(&0) {
        return Err(Error::invalid("batch sizes must be ≥ 1"));
    }
    if repeats == 0 {
        return Err(Error::invalid("repeats must be ≥ 1"));
    }
    for branch in [&dual.a, &dual.b] {
        if branch.encoder.config().max_positions < BENCH_TOKENS {
            return Err(Error::invalid(format!(
                "bench needs {BENCH_TOKENS} positions, encoder has {}",
                branch.encoder.config().max_positions
            )));
        }
    }
    let enc_a: Vec<Encoding> = texts.iter().map(|t| fixed_length(&dual.a, t)).collect();
    let enc_b: Vec<Encoding> = texts.iter().map(|t| fixed_length(&dual.b, t)).collect();
    let meter = global_meter();
    let mut rows = Vec::new();
    for &bs in batch_sizes {
        for w in 0..WARMUP_BATCHES {
            let start = (w * bs) % texts.len();
            let idx: Vec<usize> = (0..bs).map(|i| (start + i) % texts.len()).collect();
            let a: Vec<Encoding> = idx.iter().map(|&i| enc_a[i].clone()).collect();
            let b: Vec<Encoding> = idx.iter().map(|&i| enc_b[i].clone()).collect();
            run_split(dual, head, &a, &b, threads)?;
        }
        let baseline_bytes = meter.live_bytes();
        meter.reset_peak();
        let n_batches = texts.len().div_ceil(bs);
        let mut times = vec![f64::INFINITY; n_batches];
        for _ in 0..repeats {
            for (k, (a, b)) in enc_a.chunks(bs).zip(enc_b.chunks(bs)).enumerate() {
                let t0 = Instant::now();
                run_split(dual, head, a, b, threads)?;
                times[k] = times[k].min(t0.elapsed().as_secs_f64());
            }
        }
        let peak_bytes = meter.peak_bytes();
        let total: f64 = times.iter().sum();
        let ms: Vec<f64> = times.iter().map(|t| t * 1e3).collect();
        rows.push(BenchRow {
            batch: bs,
            samples: texts.len(),
            samples_per_sec: texts.len() as f64 / total,
            latency_ms: Latency {
                p50: percentile(&ms, 50.0),
                p95: percentile(&ms, 95.0),
            },
            peak_bytes,
            baseline_bytes,
        });
    }
    Ok(BenchReport {
        threads,
        tokens: BENCH_TOKENS,
        warmup_batches: WARMUP_BATCHES,
        repeats,
        rows,
    })
}
