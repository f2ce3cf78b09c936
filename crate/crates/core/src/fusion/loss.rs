use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-class loss weights `w_c = N / (2·N_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights { w0: 1.0, w1: 1.0 };

    pub fn from_counts(n0: usize, n1: usize) -> Result<Self> {
        if n0 == 0 || n1 == 0 {
            return Err(Error::invalid(
                "class-balanced weights undefined: training split has a single class",
            ));
        }
        let n = (n0 + n1) as f64;
        Ok(Self {
            w0: n / (2.0 * n0 as f64),
            w1: n / (2.0 * n1 as f64),
        })
    }

    pub fn from_labels(labels: &[u8]) -> Result<Self> {
        let n1 = labels.iter().filter(|&&y| y == 1).count();
        Self::from_counts(labels.len() - n1, n1)
    }

    pub fn weight(&self, label: u8) -> f64 {
        if label == 1 {
            self.w1
        } else {
            self.w0
        }
    }

    pub fn scaled(&self, by: f64) -> Self {
        Self {
            w0: self.w0 * by,
            w1: self.w1 * by,
        }
    }
}

/// Per-example loss term and its derivative with respect to the logit.
pub(crate) fn bce_term(z: f64, y: u8, weight: f64) -> (f64, f64) {
    let loss = if y == 1 { softplus(-z) } else { softplus(z) };
    (weight * loss, weight * (sigmoid(z) - y as f64))
}

/// Class-balanced binary cross-entropy, averaged over the batch.
pub fn cb_bce(logits: &[f64], labels: &[u8], cw: ClassWeights) -> Result<f64> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::invalid("cb_bce needs equal, non-empty logits and labels"));
    }
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| bce_term(z, y, cw.weight(y)).0)
        .sum();
    Ok(total / logits.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_from_counts() {
        let cw = ClassWeights::from_counts(3, 1).unwrap();
        assert!((cw.w0 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cw.w1, 2.0);
        assert!((cw.w0 * 3.0 + cw.w1 * 1.0 - 4.0).abs() < 1e-12);
        assert_eq!(ClassWeights::from_counts(5, 5).unwrap(), ClassWeights::UNIT);
        let err = ClassWeights::from_labels(&[1, 1, 1]).unwrap_err();
        assert!(err.to_string().contains("class-balanced weights undefined"));
    }

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let l = cb_bce(&[0.0], &[1], ClassWeights::UNIT).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let l = cb_bce(&[1e4, -1e4], &[0, 1], ClassWeights::UNIT).unwrap();
        assert!((l - 1e4).abs() < 1e-9);
        assert_eq!(sigmoid(-1e4), 0.0);
        assert_eq!(sigmoid(1e4), 1.0);
    }

    #[test]
    fn balanced_weights_reduce_to_plain_bce() {
        let z = [0.3, -1.2, 2.5, 0.0];
        let y = [1, 0, 0, 1];
        let cw = ClassWeights::from_labels(&y).unwrap();
        let plain: f64 = z
            .iter()
            .zip(&y)
            .map(|(&z, &y)| {
                let p = sigmoid(z);
                if y == 1 { -p.ln() } else { -(1.0 - p).ln() }
            })
            .sum::<f64>()
            / 4.0;
        assert!((cb_bce(&z, &y, cw).unwrap() - plain).abs() < 1e-12);
    }
}
