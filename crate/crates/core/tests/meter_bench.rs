//! Everything here reads the process-wide allocation meter, so the tests
//! take a shared lock instead of running concurrently.

use std::sync::Mutex;

use duolens::bench::{bench, BENCH_TOKENS};
use duolens::encoder::{EncoderConfig, EncoderModel};
use duolens::features::{Branch, DualEncoder};
use duolens::fusion::FusionHead;
use duolens::synthetic::{disjoint_corpus, tiny_wordpiece_vocab};
use duolens::tensor::global_meter;
use duolens::Tensor;

static LOCK: Mutex<()> = Mutex::new(());

fn lock() -> std::sync::MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn models() -> (DualEncoder, FusionHead) {
    let branch = |seed| Branch::new(EncoderModel::random(EncoderConfig::tiny(), seed, 0.02).unwrap(), tiny_wordpiece_vocab()).unwrap();
    (DualEncoder::new(branch(1), branch(2)), FusionHead::init(64, 64, 16, 3).unwrap())
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

#[test]
fn live_bytes_return_to_entry_value() {
    let _g = lock();
    let m = global_meter();
    let entry = m.live_bytes();
    {
        let a = Tensor::zeros(&[100, 100]);
        let b = Tensor::full(&[7], 1.0);
        assert_eq!(m.live_bytes(), entry + a.byte_len() + b.byte_len());
        let c = a.clone();
        assert_eq!(m.live_bytes(), entry + 2 * c.byte_len() + b.byte_len());
        let _r = c.reshape(vec![10_000]).unwrap();
    }
    assert_eq!(m.live_bytes(), entry);
    let (dual, head) = models();
    let after_models = m.live_bytes();
    let text = &disjoint_corpus(1, 0, "x")[0].text;
    dual.doc_features(text, &Default::default()).unwrap();
    assert_eq!(m.live_bytes(), after_models);
    drop((dual, head));
    assert_eq!(m.live_bytes(), entry);
}

#[test]
fn peak_covers_the_largest_tensor() {
    let _g = lock();
    let m = global_meter();
    m.reset_peak();
    let base = m.live_bytes();
    let big = Tensor::zeros(&[512, 512]);
    drop(Tensor::zeros(&[3]));
    drop(big);
    let snap = m.snapshot();
    assert!(snap.peak_bytes >= base + 512 * 512 * 4);
    assert!(snap.peak_bytes >= snap.live_bytes);
}

#[test]
fn bench_rows_are_internally_consistent() {
    let _g = lock();
    let (dual, head) = models();
    let docs = disjoint_corpus(4, 9, "b");
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let one = single_thread(|| bench(&dual, &head, &texts[..1], &[1], 1, 1).unwrap());
    let row = &one.rows[0];
    assert_eq!(one.tokens, BENCH_TOKENS);
    // one sample in one batch: throughput is the inverse of the latency
    assert!((row.samples_per_sec * row.latency_ms.p50 / 1e3 - 1.0).abs() < 1e-9);
    assert_eq!(row.latency_ms.p50, row.latency_ms.p95);

    let rep = single_thread(|| bench(&dual, &head, &texts, &[1, 2], 1, 1).unwrap());
    let (b1, b2) = (&rep.rows[0], &rep.rows[1]);
    assert!(b1.peak_bytes > b1.baseline_bytes);
    assert!(b2.peak_bytes - b2.baseline_bytes >= b1.peak_bytes - b1.baseline_bytes);
    assert!(b1.latency_ms.p95 >= b1.latency_ms.p50);
}

#[test]
fn throughput_does_not_depend_on_corpus_size() {
    let _g = lock();
    let (dual, head) = models();
    let docs = disjoint_corpus(16, 4, "t");
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let best = |n: usize| {
        (0..3)
            .map(|_| single_thread(|| bench(&dual, &head, &texts[..n], &[4], 1, 1).unwrap()).rows[0].samples_per_sec)
            .fold(0.0f64, f64::max)
    };
    let (small, large) = (best(8), best(16));
    let change = (large - small).abs() / small;
    assert!(change < 0.2, "{small} vs {large} samples/sec");
}
