//! One PASS/FAIL line per acceptance criterion. Criteria run one after
//! another so timing and the allocation meter are not shared.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use duolens::corpus::{balance, Language, Sample};
use duolens::encoder::{EncoderConfig, EncoderModel};
use duolens::evaluation::accuracy_report;
use duolens::features::{Branch, DualEncoder};
use duolens::fusion::{train_head, ClassWeights, FusionHead, LinearProbe, TrainConfig};
use duolens::metrics::auroc;
use duolens::pipeline::{chunk, fit_temperature, nll, Aggregation, Calibration, ChunkConfig, Detector};
use duolens::synthetic::{disjoint_task, disjoint_text, tiny_wordpiece_vocab};
use duolens::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($fmt)+)),
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    let s = elapsed.as_secs_f64();
    ensure!(s < limit, "took {s:.1}s, budget {limit}s");
    Ok(())
}

// ---------------------------------------------------------------- gradients

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn weighted_bce(z: f64, y: u8, cw: ClassWeights) -> f64 {
    if y == 1 {
        cw.w1 * softplus(-z)
    } else {
        cw.w0 * softplus(z)
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Fusion head loss over a flat f64 parameter vector laid out as
/// W_A, b_A, W_B, b_B, W_g, b_g, w, b.
fn head_loss(th: &[f64], dims: (usize, usize, usize), xs: &[(Vec<f32>, Vec<f32>)], ys: &[u8], cw: ClassWeights) -> f64 {
    let (da, db, df) = dims;
    let (wa, ba) = (0, df * da);
    let (wb, bb) = (ba + df, ba + df + df * db);
    let (wg, bg) = (bb + df, bb + df + df * (da + db));
    let (w, b) = (bg + df, bg + 2 * df);
    let mut total = 0.0;
    for ((xa, xb), &y) in xs.iter().zip(ys) {
        let mut z = th[b];
        for i in 0..df {
            let (mut pa, mut pb, mut s) = (th[ba + i], th[bb + i], th[bg + i]);
            for t in 0..da {
                pa += th[wa + i * da + t] * xa[t] as f64;
                s += th[wg + i * (da + db) + t] * xa[t] as f64;
            }
            for t in 0..db {
                pb += th[wb + i * db + t] * xb[t] as f64;
                s += th[wg + i * (da + db) + da + t] * xb[t] as f64;
            }
            let g = 1.0 / (1.0 + (-s).exp());
            z += th[w + i] * (g * pa + (1.0 - g) * pb);
        }
        total += weighted_bce(z, y, cw);
    }
    total / xs.len() as f64
}

fn worst_error(analytic: &[f64], theta: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    const STEP: f64 = 1e-4;
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut th = theta.to_vec();
        th[i] += STEP;
        let up = loss(&th);
        th[i] -= 2.0 * STEP;
        let num = (up - loss(&th)) / (2.0 * STEP);
        worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1e-6));
    }
    worst
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut worst_head, mut worst_probe): (f64, f64) = (0.0, 0.0);
    const DRAWS: usize = 60;
    for _ in 0..DRAWS {
        let cw = ClassWeights {
            w0: rng.random_range(0.2..3.0),
            w1: rng.random_range(0.2..3.0),
        };
        let n = rng.random_range(1..6);
        let ys: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();

        let dims = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..5));
        let mut h = ok(FusionHead::init(dims.0, dims.1, dims.2, rng.random()))?;
        for t in h.params_mut() {
            let v = rand_vec(&mut rng, t.len(), 1.0);
            t.data_mut().copy_from_slice(&v);
        }
        let xs: Vec<(Vec<f32>, Vec<f32>)> =
            (0..n).map(|_| (rand_vec(&mut rng, dims.0, 2.0), rand_vec(&mut rng, dims.1, 2.0))).collect();
        let batch: Vec<(&[f32], &[f32])> = xs.iter().map(|(a, b)| (&a[..], &b[..])).collect();
        let (_, grads) = ok(h.head_gradients(&batch, &ys, cw))?;
        let theta: Vec<f64> = h.params().iter().flat_map(|t| t.data().iter().map(|&v| v as f64)).collect();
        worst_head = worst_head.max(worst_error(&grads.concat(), &theta, |th| head_loss(th, dims, &xs, &ys, cw)));

        let d = rng.random_range(1..9);
        let p = LinearProbe {
            w: Tensor::vector(rand_vec(&mut rng, d, 1.0)),
            b: Tensor::scalar(rng.random_range(-1.0..1.0)),
        };
        let px: Vec<Vec<f32>> = (0..n).map(|_| rand_vec(&mut rng, d, 2.0)).collect();
        let refs: Vec<&[f32]> = px.iter().map(|x| &x[..]).collect();
        let (_, grads) = ok(p.gradients(&refs, &ys, cw))?;
        let theta: Vec<f64> = p.w.data().iter().chain(p.b.data()).map(|&v| v as f64).collect();
        let loss = |th: &[f64]| {
            px.iter()
                .zip(&ys)
                .map(|(x, &y)| {
                    let z = th[d] + x.iter().enumerate().map(|(t, &v)| th[t] * v as f64).sum::<f64>();
                    weighted_bce(z, y, cw)
                })
                .sum::<f64>()
                / n as f64
        };
        worst_probe = worst_probe.max(worst_error(&grads.concat(), &theta, loss));
    }
    ensure!(worst_head < 1e-4, "fusion head relative error {worst_head:e}");
    ensure!(worst_probe < 1e-4, "probe relative error {worst_probe:e}");
    within(start.elapsed(), 10.0)?;
    Ok(format!("{DRAWS} draws each, worst {:.1e} head / {:.1e} probe", worst_head, worst_probe))
}

// ---------------------------------------------------------------- AUROC

fn all_pairs_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                den += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn auroc_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=500);
        let levels = rng.random_range(2..50);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let got = ok(auroc(&scores, &labels))?;
        worst = worst.max((got - all_pairs_auroc(&scores, &labels)).abs());
    }
    ensure!(worst < 1e-9, "max deviation {worst:e}");
    within(start.elapsed(), 5.0)?;
    Ok(format!("100 instances, max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- synthetic task

struct Synthetic {
    detector: Detector,
    dev: Vec<Sample>,
    test: Vec<Sample>,
    epochs_run: usize,
    elapsed: Duration,
}

fn tiny_branch(seed: u64) -> Result<Branch, String> {
    ok(Branch::new(ok(EncoderModel::random(EncoderConfig::tiny(), seed, 0.02))?, tiny_wordpiece_vocab()))
}

fn run_synthetic() -> Result<Synthetic, String> {
    let pool = ok(rayon::ThreadPoolBuilder::new().num_threads(1).build())?;
    pool.install(|| {
        let start = Instant::now();
        let task = disjoint_task(2000, 500, 500, 42);
        let dual = DualEncoder::new(tiny_branch(42)?, tiny_branch(43)?);
        let cc = ChunkConfig::default();
        let tc = TrainConfig {
            lr: 1e-2,
            epochs: 20,
            fusion_dim: 64,
            ..TrainConfig::default()
        };
        let (head, log) = ok(train_head(&dual, &cc, &task.train, &task.dev, &tc))?;
        let detector = Detector {
            dual,
            head,
            calibration: Calibration::default(),
            chunking: cc,
            aggregation: Aggregation::Mean,
            threshold: 0.5,
        };
        Ok(Synthetic {
            detector,
            dev: task.dev,
            test: task.test,
            epochs_run: log.epochs.len(),
            elapsed: start.elapsed(),
        })
    })
}

fn synthetic_task(s: &Synthetic) -> Outcome {
    let dets = ok(s.detector.detect_batch(&s.test))?;
    let r = ok(accuracy_report(&dets, &s.test))?;
    ensure!(s.epochs_run <= 20, "{} epochs", s.epochs_run);
    ensure!(r.auroc >= 0.99, "test AUROC {:.4}", r.auroc);
    ensure!(r.f1_macro >= 0.95, "test macro-F1 {:.4}", r.f1_macro);
    within(s.elapsed, 120.0)?;
    Ok(format!(
        "AUROC {:.4}, macro-F1 {:.4}, {} epochs, {:.1}s on one thread",
        r.auroc,
        r.f1_macro,
        s.epochs_run,
        s.elapsed.as_secs_f64()
    ))
}

fn calibration(s: &Synthetic) -> Outcome {
    let dev = ok(s.detector.detect_batch(&s.dev))?;
    let logits: Vec<f64> = dev.iter().map(|d| d.logit).collect();
    let labels: Vec<u8> = s.dev.iter().map(|x| x.label).collect();
    let cal = ok(fit_temperature(&logits, &labels))?;
    let (before, after) = (nll(&logits, &labels, 1.0), nll(&logits, &labels, cal.temperature));
    ensure!(after < before, "dev NLL {after} not below {before} (T = {})", cal.temperature);

    let raw = ok(s.detector.detect_batch(&s.test))?;
    let mut calibrated_det = s.detector.clone();
    calibrated_det.calibration = cal;
    let calibrated = ok(calibrated_det.detect_batch(&s.test))?;
    let a = ok(accuracy_report(&raw, &s.test))?.auroc;
    let b = ok(accuracy_report(&calibrated, &s.test))?.auroc;
    ensure!(a == b, "AUROC moved from {a} to {b}");
    let flipped = raw.iter().zip(&calibrated).filter(|(x, y)| x.label != y.label).count();
    ensure!(flipped == 0, "{flipped} labels changed");
    Ok(format!("T = {:.3}, dev NLL {before:.4} -> {after:.4}, AUROC and labels unchanged", cal.temperature))
}

// ---------------------------------------------------------------- chunking

fn chunking() -> Outcome {
    let branch = |seed| tiny_branch(seed);
    let detector = Detector {
        dual: DualEncoder::new(branch(1)?, branch(2)?),
        head: ok(FusionHead::init(64, 64, 32, 3))?,
        calibration: Calibration::default(),
        chunking: ChunkConfig::default(),
        aggregation: Aggregation::Mean,
        threshold: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..200 {
        let len = rng.random_range(1..=510);
        let text = disjoint_text(&mut rng, (i % 2) as u8, len);
        let id = format!("doc-{i}");
        let chunked = ok(detector.detect(&id, &text))?;
        let direct = ok(detector.detect_unchunked(&id, &text))?;
        let same = chunked.n_chunks == 1
            && chunked.logit.to_bits() == direct.logit.to_bits()
            && chunked.score.to_bits() == direct.score.to_bits()
            && chunked.label == direct.label
            && chunked.per_chunk.len() == direct.per_chunk.len()
            && chunked.per_chunk.iter().zip(&direct.per_chunk).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure!(same, "document {i} ({len} tokens) differs: {chunked:?} vs {direct:?}");
    }

    let cc = ChunkConfig::default();
    let text = disjoint_text(&mut rng, 1, 2000);
    let ids = detector.dual.a.tokenize(&text);
    ensure!(ids.len() == 2000, "expected 2000 tokens, got {}", ids.len());
    let plan = ok(chunk(&ids, cc.window, cc.stride))?;
    let mut covered = vec![false; ids.len()];
    for (k, &(s, e)) in plan.chunks.iter().enumerate() {
        ensure!(s == k * cc.stride, "chunk {k} starts at {s}");
        ensure!(e > s && e - s <= cc.window - 2, "chunk {k} spans {s}..{e}");
        covered[s..e].iter_mut().for_each(|c| *c = true);
    }
    ensure!(covered.iter().all(|&c| c), "uncovered tokens");
    ensure!(plan.chunks.last().map(|c| c.1) == Some(2000), "last chunk stops early");
    let long = ok(detector.detect("long", &text))?;
    ensure!(long.n_chunks == plan.chunks.len(), "{} chunks scored, {} planned", long.n_chunks, plan.chunks.len());
    Ok(format!("200 short documents bit-identical; 2000 tokens -> {} chunks at stride {}", plan.chunks.len(), cc.stride))
}

// ---------------------------------------------------------------- balance

fn pool(counts: &[(&str, usize, usize)]) -> Vec<Sample> {
    let mut out = Vec::new();
    for &(lang, h, m) in counts {
        for (label, n) in [(0u8, h), (1u8, m)] {
            for i in 0..n {
                out.push(Sample {
                    id: format!("{lang}-{label}-{i}"),
                    text: format!("{lang} {label} {i}"),
                    language: lang.into(),
                    label,
                    source: "fixture".into(),
                    generator: None,
                });
            }
        }
    }
    out
}

fn stratum_counts(corpus: &[Sample]) -> BTreeMap<(String, u8), usize> {
    let mut m = BTreeMap::new();
    for s in corpus {
        *m.entry((s.language.clone(), s.label)).or_insert(0) += 1;
    }
    m
}

fn balance_procedure() -> Outcome {
    let (small, _) = ok(balance(&pool(&[("py", 10, 7), ("go", 5, 9)]), 1))?;
    let m = stratum_counts(&small);
    let want = [(("py", 0), 7), (("py", 1), 7), (("go", 0), 5), (("go", 1), 5)];
    for ((l, y), n) in want {
        let got = m.get(&(l.to_string(), y)).copied().unwrap_or(0);
        ensure!(got == n, "{l}/{y}: {got} samples, expected {n}");
    }
    let counts: Vec<(&str, usize, usize)> = Language::ALL
        .iter()
        .enumerate()
        .map(|(i, l)| if i % 2 == 0 { (l.as_str(), 6000, 6000 + 97 * i) } else { (l.as_str(), 6000 + 113 * i, 6000) })
        .collect();
    let (big, _) = ok(balance(&pool(&counts), 42))?;
    ensure!(big.len() == 84_000, "code census gave {} samples", big.len());
    let m = stratum_counts(&big);
    ensure!(m.len() == 14 && m.values().all(|&n| n == 6000), "uneven strata {m:?}");
    Ok("py 7+7, go 5+5; code census 6000 per class per language, 84000 total".into())
}

// ---------------------------------------------------------------- CLI-driven criteria

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

fn duolens(args: &[&str], cwd: &Path) -> Result<Vec<u8>, String> {
    let out = ok(Command::new(env!("CARGO_BIN_EXE_duolens")).args(args).current_dir(cwd).output())?;
    if !out.status.success() {
        return Err(format!(
            "duolens {} exited {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(out.stdout)
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

/// Synthetic code corpus split into train/dev/test plus two random code
/// encoders and a run config pointing at them.
fn code_workspace() -> Result<Workspace, String> {
    let tmp = ok(tempfile::tempdir())?;
    let root = tmp.path().to_path_buf();
    duolens(&["synth", "--task", "code", "--out", "pools", "--per-class", "40", "--seed", "3"], &root)?;
    duolens(&["build-dataset", "--pools", "pools", "--out", "data", "--seed", "9"], &root)?;
    for (name, seed) in [("a", "1"), ("b", "2")] {
        let out = format!("enc/{name}.dlt");
        duolens(&["init-encoder", "--vocab", "code-bpe", "--seed", seed, "--out", &out], &root)?;
    }
    let config = r#"{
  "encoder_a": "enc/a.dlt",
  "encoder_b": "enc/b.dlt",
  "head": "model/head.dlt",
  "data": {"train": "data/train.jsonl", "dev": "data/dev.jsonl", "test": "data/test.jsonl"},
  "train": {"lr": 0.01, "epochs": 8, "fusion_dim": 32, "seed": 5}
}
"#;
    ok(fs::write(root.join("run.json"), config))?;
    duolens(&["train-head", "--config", "run.json", "--out", "model/head.dlt"], &root)?;
    Ok(Workspace { _tmp: tmp, root })
}

fn retention(ws: &Workspace) -> Outcome {
    let mut notes = Vec::new();
    for transform in ["rename", "reformat"] {
        let perturbed = format!("data/test.{transform}.jsonl");
        duolens(
            &["perturb", "--transform", transform, "--in", "data/test.jsonl", "--seed", "11", "--out", &perturbed],
            &ws.root,
        )?;
        let records = read(&ws.root.join(format!("{perturbed}.records.jsonl")))?;
        ensure!(!records.is_empty(), "no {transform} records written");
        let out = duolens(
            &[
                "retention",
                "--config",
                "run.json",
                "--clean",
                "data/test.jsonl",
                "--perturbed",
                &perturbed,
                "--transform",
                transform,
            ],
            &ws.root,
        )?;
        let r: Value = ok(serde_json::from_slice(&out))?;
        for key in ["clean_auroc", "perturbed_auroc", "retention", "target"] {
            ensure!(r[key].is_number(), "{transform} report lacks {key}");
        }
        let kept = r["token_count_preserved"].as_f64().unwrap_or(-1.0);
        if transform == "rename" {
            ensure!(kept == 1.0, "rename kept token counts on {:.1}% of samples", kept * 100.0);
        }
        notes.push(format!("{transform} retention {:.3}", r["retention"].as_f64().unwrap_or(f64::NAN)));
    }
    Ok(format!("{}; rename kept token counts on 100% (target {} recorded, not gated)", notes.join(", "), 0.92))
}

fn bench_once(ws: &Workspace) -> Result<Vec<[f64; 4]>, String> {
    let out = duolens(
        &["--threads", "1", "bench", "--config", "run.json", "--batch", "1,4", "--samples", "16", "--repeats", "5"],
        &ws.root,
    )?;
    let r: Value = ok(serde_json::from_slice(&out))?;
    let rows = r["rows"].as_array().ok_or("bench report has no rows")?;
    rows.iter()
        .map(|row| {
            let f = |v: &Value| v.as_f64().ok_or_else(|| format!("missing figure in {row}"));
            Ok([
                f(&row["samples_per_sec"])?,
                f(&row["latency_ms"]["p50"])?,
                f(&row["latency_ms"]["p95"])?,
                f(&row["peak_bytes"])?,
            ])
        })
        .collect()
}

fn bench(ws: &Workspace) -> Outcome {
    let first = bench_once(ws)?;
    let second = bench_once(ws)?;
    ensure!(first.len() == second.len() && !first.is_empty(), "row counts differ");
    let names = ["samples/sec", "p50", "p95", "peak bytes"];
    let mut worst: f64 = 0.0;
    for (a, b) in first.iter().zip(&second) {
        for k in 0..4 {
            ensure!(a[k] > 0.0 && b[k] > 0.0, "{} not positive", names[k]);
            let rel = (a[k] - b[k]).abs() / a[k].min(b[k]);
            ensure!(rel <= 0.25, "{} differs by {:.0}% ({} vs {})", names[k], rel * 100.0, a[k], b[k]);
            worst = worst.max(rel);
        }
    }
    Ok(format!("two runs, batches 1 and 4, largest spread {:.1}%", worst * 100.0))
}

fn same_files(dir_a: &Path, dir_b: &Path, names: &[&str]) -> Result<(), String> {
    for n in names {
        ensure!(read(&dir_a.join(n))? == read(&dir_b.join(n))?, "{n} differs between runs");
    }
    Ok(())
}

fn determinism(ws: &Workspace) -> Outcome {
    let r = &ws.root;
    for out in ["det/build1", "det/build2"] {
        duolens(&["build-dataset", "--pools", "pools", "--out", out, "--seed", "9"], r)?;
    }
    let split_files = ["train.jsonl", "dev.jsonl", "test.jsonl", "census.json"];
    same_files(&r.join("det/build1"), &r.join("det/build2"), &split_files)?;
    same_files(&r.join("det/build1"), &r.join("data"), &split_files)?;

    duolens(&["train-head", "--config", "run.json", "--out", "model/again.dlt"], r)?;
    ensure!(
        read(&r.join("model/head.dlt"))? == read(&r.join("model/again.dlt"))?,
        "head bundle differs between runs"
    );
    ensure!(
        read(&r.join("model/head.dlt.log.json"))? == read(&r.join("model/again.dlt.log.json"))?,
        "training log differs between runs"
    );

    for out in ["det/eval1", "det/eval2"] {
        duolens(&["eval", "--config", "run.json", "--by-language", "--out", out], r)?;
    }
    let prefixes = |p: &str| ["json", "csv", "detections.jsonl"].map(|ext| format!("{p}.{ext}"));
    for (a, b) in prefixes("det/eval1").iter().zip(prefixes("det/eval2").iter()) {
        ensure!(read(&r.join(a))? == read(&r.join(b))?, "{a} differs from {b}");
    }
    Ok("build-dataset, train-head and eval outputs byte-identical across runs".into())
}

// ---------------------------------------------------------------- driver

fn report(name: &str, outcome: Outcome) -> bool {
    match outcome {
        Ok(detail) => {
            println!("PASS {name}: {detail}");
            true
        }
        Err(why) => {
            println!("FAIL {name}: {why}");
            false
        }
    }
}

fn main() {
    let mut all = true;
    all &= report("gradient correctness", gradients());
    all &= report("AUROC oracle equivalence", auroc_oracle());
    match run_synthetic() {
        Ok(s) => {
            all &= report("synthetic end-to-end task", synthetic_task(&s));
            all &= report("calibration", calibration(&s));
        }
        Err(e) => {
            all &= report("synthetic end-to-end task", Err(e.clone()));
            all &= report("calibration", Err(format!("synthetic task did not train: {e}")));
        }
    }
    all &= report("chunking identity", chunking());
    all &= report("balance procedure", balance_procedure());
    match code_workspace() {
        Ok(ws) => {
            all &= report("perturbation retention harness", retention(&ws));
            all &= report("bench reproducibility", bench(&ws));
            all &= report("determinism", determinism(&ws));
        }
        Err(e) => {
            for name in ["perturbation retention harness", "bench reproducibility", "determinism"] {
                all &= report(name, Err(format!("code workspace setup failed: {e}")));
            }
        }
    }
    if !all {
        std::process::exit(1);
    }
}
