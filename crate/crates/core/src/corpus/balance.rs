use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::{Error, Result};

/// Per-language label counts of a raw pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCensus {
    /// language → [human, machine]
    pub counts: BTreeMap<String, [u64; 2]>,
    /// language → samples kept per label
    pub per_language_cap: BTreeMap<String, u64>,
    /// Languages missing one label entirely.
    pub dropped: Vec<String>,
}

impl PoolCensus {
    pub fn of(pool: &[Sample]) -> Self {
        let mut counts: BTreeMap<String, [u64; 2]> = BTreeMap::new();
        for s in pool {
            counts.entry(s.language.clone()).or_default()[s.label as usize] += 1;
        }
        let per_language_cap = counts.iter().map(|(l, c)| (l.clone(), c[0].min(c[1]))).collect();
        let dropped = counts.iter().filter(|(_, c)| c[0] == 0 || c[1] == 0).map(|(l, _)| l.clone()).collect();
        Self {
            counts,
            per_language_cap,
            dropped,
        }
    }

    /// Samples per class after balancing, summed over languages.
    pub fn per_class_total(&self) -> u64 {
        self.per_language_cap.values().sum()
    }
}

/// FNV-1a, for stable per-stratum seeds.
fn stratum_seed(seed: u64, language: &str, label: u8) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in language.bytes().chain([0xff, label]) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn strata(pool: &[Sample]) -> BTreeMap<(String, u8), Vec<&Sample>> {
    let mut out: BTreeMap<(String, u8), Vec<&Sample>> = BTreeMap::new();
    for s in pool {
        out.entry((s.language.clone(), s.label)).or_default().push(s);
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.id.cmp(&b.id));
    }
    out
}

/// Keeps, for every language, `min(count₀, count₁)` samples of each label,
/// drawn uniformly without replacement. Output is ordered by language,
/// label, then id.
pub fn balance(pool: &[Sample], seed: u64) -> Result<(Vec<Sample>, PoolCensus)> {
    if pool.is_empty() {
        return Err(Error::invalid("cannot balance an empty pool"));
    }
    let census = PoolCensus::of(pool);
    for lang in &census.dropped {
        log::warn!("language {lang} lacks one label and is dropped");
    }
    let mut out = Vec::new();
    for ((lang, label), members) in strata(pool) {
        let cap = census.per_language_cap[&lang] as usize;
        if cap == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stratum_seed(seed, &lang, label));
        let mut picked = index::sample(&mut rng, members.len(), cap).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| members[i].clone()));
    }
    Ok((out, census))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Stratified by (language, label). Each stratum is shuffled with its own
/// seeded generator; dev and test take `⌊n·fraction⌋` and train the rest.
/// Strata under three samples go entirely to train.
pub fn split(corpus: &[Sample], fractions: SplitFractions, seed: u64) -> Result<Splits> {
    let f = fractions;
    if [f.train, f.dev, f.test].iter().any(|&x| !(0.0..=1.0).contains(&x))
        || (f.train + f.dev + f.test - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid("split fractions must be in [0, 1] and sum to 1"));
    }
    let mut out = Splits::default();
    for ((lang, label), mut members) in strata(corpus) {
        let n = members.len();
        if n < 3 {
            log::warn!("stratum ({lang}, {label}) has {n} samples; all go to train");
            out.train.extend(members.into_iter().cloned());
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stratum_seed(seed ^ 0x5b1d, &lang, label));
        members.shuffle(&mut rng);
        let n_dev = (n as f64 * f.dev + 1e-9).floor() as usize;
        let n_test = (n as f64 * f.test + 1e-9).floor() as usize;
        let (dev, rest) = members.split_at(n_dev);
        let (test, train) = rest.split_at(n_test);
        out.dev.extend(dev.iter().map(|s| (*s).clone()));
        out.test.extend(test.iter().map(|s| (*s).clone()));
        out.train.extend(train.iter().map(|s| (*s).clone()));
    }
    for part in [&mut out.train, &mut out.dev, &mut out.test] {
        part.sort_by(|a, b| (&a.language, a.label, &a.id).cmp(&(&b.language, b.label, &b.id)));
    }
    Ok(out)
}
