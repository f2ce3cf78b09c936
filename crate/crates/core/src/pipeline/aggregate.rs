use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        }
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            other => Err(Error::invalid(format!("unknown aggregation {other:?}"))),
        }
    }
}

/// Combines raw chunk logits. A single logit is returned unchanged.
pub fn aggregate(logits: &[f64], mode: Aggregation) -> Result<f64> {
    match logits {
        [] => Err(Error::invalid("aggregate needs at least one logit")),
        [z] => Ok(*z),
        _ => Ok(match mode {
            Aggregation::Mean => logits.iter().sum::<f64>() / logits.len() as f64,
            Aggregation::Max => logits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }),
    }
}
