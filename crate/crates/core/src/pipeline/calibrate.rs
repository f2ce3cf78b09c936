use serde::{Deserialize, Serialize};

use crate::fusion::{sigmoid, softplus};
use crate::{Error, Result};

const LN_T_MIN: f64 = -2.995_732_273_553_991; // ln 0.05
const LN_T_MAX: f64 = std::f64::consts::LN_10;
const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub temperature: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self { temperature: 1.0 }
    }
}

impl Calibration {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature {temperature} must be positive")));
        }
        Ok(Self { temperature })
    }

    pub fn probability(&self, logit: f64) -> f64 {
        sigmoid(logit / self.temperature)
    }
}

/// Mean negative log-likelihood of `sigmoid(z / t)`.
pub fn nll(logits: &[f64], labels: &[u8], t: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| if y == 1 { softplus(-z / t) } else { softplus(z / t) })
        .sum();
    total / logits.len() as f64
}

/// Golden-section search for the NLL-minimizing temperature over
/// ln T ∈ [ln 0.05, ln 10]. The result never scores worse than T = 1.
pub fn fit_temperature(logits: &[f64], labels: &[u8]) -> Result<Calibration> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::invalid("fit_temperature needs aligned, non-empty logits and labels"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("fit_temperature got a non-finite logit"));
    }
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    if n1 == 0 || n1 == labels.len() {
        return Err(Error::invalid("temperature fit needs both classes in the dev split"));
    }
    let f = |u: f64| nll(logits, labels, u.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (LN_T_MIN, LN_T_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut best = (f(0.0), 0.0);
    for u in [(a + b) / 2.0, LN_T_MIN, LN_T_MAX] {
        let v = f(u);
        if v < best.0 {
            best = (v, u);
        }
    }
    Calibration::new(best.1.exp())
}
