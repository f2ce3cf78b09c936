//! Threshold-free and thresholded binary classification metrics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check_labels(labels: &[u8]) -> Result<()> {
    match labels.iter().find(|&&y| y > 1) {
        Some(y) => Err(Error::invalid(format!("label {y} is not 0 or 1"))),
        None => Ok(()),
    }
}

/// AUROC via the Mann–Whitney statistic with midranks for tied scores:
/// `(R₁ − n₁(n₁+1)/2) / (n₁·n₀)`.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    check_labels(labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("AUROC undefined for NaN scores"));
    }
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::invalid("AUROC undefined: both classes must be present"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their average
        let mid = (i + 1 + j) as f64 / 2.0;
        let pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum_pos += mid * pos as f64;
        i = j;
    }
    let (n1, n0) = (n1 as f64, n0 as f64);
    Ok((rank_sum_pos - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(preds: &[u8], labels: &[u8]) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::invalid("predictions and labels differ in length"));
        }
        check_labels(preds)?;
        check_labels(labels)?;
        let mut c = Confusion::default();
        for (&p, &y) in preds.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                _ => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Same counts with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        Confusion {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }

    /// Precision/recall/F1 for class 1. Zero denominators give 0.
    pub fn positive_scores(&self) -> ClassScores {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_);
        ClassScores {
            precision,
            recall,
            f1,
        }
    }

    /// Scores for class 0 then class 1.
    pub fn per_class(&self) -> [ClassScores; 2] {
        [self.swapped().positive_scores(), self.positive_scores()]
    }

    pub fn f1_macro(&self) -> f64 {
        let [c0, c1] = self.per_class();
        (c0.f1 + c1.f1) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Unweighted mean of the per-class F1 over {0, 1}.
pub fn f1_macro(preds: &[u8], labels: &[u8]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("macro-F1 of an empty set"));
    }
    Ok(Confusion::from_predictions(preds, labels)?.f1_macro())
}

/// Nearest-rank percentile (`q` in [0, 100]) of an unsorted sample.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// Threshold maximizing Youden's J (TPR − FPR) when predicting 1 for
/// `score >= t`. Candidates are the observed scores; ties keep the lowest.
pub fn youden_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    auroc(scores, labels)?; // same preconditions
    let n1 = labels.iter().filter(|&&y| y == 1).count() as f64;
    let n0 = labels.len() as f64 - n1;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, scores[order[0]]);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let j = tp / n1 - fp / n0;
        if j >= best.0 {
            best = (j, t);
        }
    }
    Ok(best.1)
}
