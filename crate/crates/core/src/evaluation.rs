//! Evaluation reports, cross-language matrices and perturbation retention.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::metrics::{auroc, ClassScores, Confusion};
use crate::pipeline::{Detection, Detector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub p50: f64,
    pub p95: f64,
}

/// Wall-clock figures, kept apart from the deterministic metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub samples_per_sec: f64,
    pub latency_ms: Latency,
    pub peak_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub auroc: f64,
    pub f1_macro: f64,
    pub accuracy: f64,
    pub per_language: BTreeMap<String, f64>,
    /// "0" and "1"
    pub per_class: BTreeMap<String, ClassScores>,
    pub confusion: Confusion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

/// Joins detections to samples by id and fills every metric. AUROC ranks
/// the aggregated logits, which order documents exactly as the calibrated
/// scores do but never saturate to tied 0/1 values.
pub fn accuracy_report(detections: &[Detection], samples: &[Sample]) -> Result<EvalReport> {
    let by_id: HashMap<&str, &Detection> = detections.iter().map(|d| (d.id.as_str(), d)).collect();
    if by_id.len() != detections.len() {
        return Err(Error::invalid("duplicate ids among detections"));
    }
    let missing: Vec<&str> = samples.iter().map(|s| s.id.as_str()).filter(|id| !by_id.contains_key(id)).collect();
    let known: HashMap<&str, ()> = samples.iter().map(|s| (s.id.as_str(), ())).collect();
    let extra: Vec<&str> = detections.iter().map(|d| d.id.as_str()).filter(|id| !known.contains_key(id)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::invalid(format!(
            "detections and samples do not join; missing detections: {missing:?}; unknown ids: {extra:?}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    let (mut scores, mut preds, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    let mut groups: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in samples {
        let d = by_id[s.id.as_str()];
        scores.push(d.logit);
        preds.push(d.label);
        labels.push(s.label);
        let g = groups.entry(&s.language).or_default();
        g.0 += (d.label == s.label) as usize;
        g.1 += 1;
    }
    let confusion = Confusion::from_predictions(&preds, &labels)?;
    let [c0, c1] = confusion.per_class();
    Ok(EvalReport {
        n: samples.len(),
        auroc: auroc(&scores, &labels)?,
        f1_macro: confusion.f1_macro(),
        accuracy: confusion.accuracy(),
        per_language: groups.into_iter().map(|(l, (ok, n))| (l.to_string(), ok as f64 / n as f64)).collect(),
        per_class: [("0".to_string(), c0), ("1".to_string(), c1)].into(),
        confusion,
        timing: None,
    })
}

impl EvalReport {
    /// `metric,value` rows, then per-language accuracy when requested.
    pub fn to_csv(&self, by_language: bool) -> String {
        let mut s = String::from("metric,value\n");
        let c = &self.confusion;
        let rows: [(&str, String); 12] = [
            ("n", self.n.to_string()),
            ("auroc", self.auroc.to_string()),
            ("f1_macro", self.f1_macro.to_string()),
            ("accuracy", self.accuracy.to_string()),
            ("precision_0", self.per_class["0"].precision.to_string()),
            ("recall_0", self.per_class["0"].recall.to_string()),
            ("precision_1", self.per_class["1"].precision.to_string()),
            ("recall_1", self.per_class["1"].recall.to_string()),
            ("tp", c.tp.to_string()),
            ("fp", c.fp.to_string()),
            ("tn", c.tn.to_string()),
            ("fn", c.fn_.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k},{v}");
        }
        if by_language {
            s.push_str("\nlanguage,accuracy\n");
            for (l, a) in &self.per_language {
                let _ = writeln!(s, "{l},{a}");
            }
        }
        s
    }
}

/// Accuracy of the checkpoint for each row language on the corpus of each
/// column language; the diagonal is withheld.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLangMatrix {
    pub languages: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

/// Display name used in table headers.
pub fn display_language(id: &str) -> String {
    match id {
        "python" => "Python".into(),
        "java" => "Java".into(),
        "javascript" => "JavaScript".into(),
        "c" => "C".into(),
        "cpp" => "C++".into(),
        "csharp" => "C#".into(),
        "go" => "Go".into(),
        other => other.into(),
    }
}

fn format_cell(v: f64) -> String {
    let r = (v * 1e4).round() / 1e4;
    format!("{r}")
}

impl CrossLangMatrix {
    pub fn from_fn(languages: Vec<String>, mut f: impl FnMut(&str, &str) -> Result<f64>) -> Result<Self> {
        if languages.len() < 2 {
            return Err(Error::invalid("a cross-language matrix needs at least two languages"));
        }
        let mut cells = Vec::with_capacity(languages.len());
        for r in &languages {
            let mut row = Vec::with_capacity(languages.len());
            for c in &languages {
                row.push(if r == c { None } else { Some(f(r, c)?) });
            }
            cells.push(row);
        }
        Ok(Self { languages, cells })
    }

    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let r = self.languages.iter().position(|l| l == row)?;
        let c = self.languages.iter().position(|l| l == col)?;
        self.cells[r][c]
    }

    /// Header `Model Name,<lang>...`; rows `<model> (<lang>)`; diagonal `-`.
    pub fn to_csv(&self, model: &str) -> String {
        let mut s = String::from("Model Name");
        for l in &self.languages {
            let _ = write!(s, ",{}", display_language(l));
        }
        s.push('\n');
        for (l, row) in self.languages.iter().zip(&self.cells) {
            let _ = write!(s, "{model} ({})", display_language(l));
            for cell in row {
                match cell {
                    Some(v) => {
                        let _ = write!(s, ",{}", format_cell(*v));
                    }
                    None => s.push_str(",-"),
                }
            }
            s.push('\n');
        }
        s
    }
}

fn accuracy_of(detections: &[Detection], samples: &[Sample]) -> f64 {
    let ok = detections.iter().zip(samples).filter(|(d, s)| d.label == s.label).count();
    ok as f64 / samples.len() as f64
}

/// Evaluates each language's checkpoint on every other language's corpus.
pub fn cross_language_matrix(
    checkpoints: &BTreeMap<String, Detector>,
    corpora: &BTreeMap<String, Vec<Sample>>,
) -> Result<CrossLangMatrix> {
    if let Some(l) = checkpoints.keys().find(|l| !corpora.contains_key(*l)) {
        return Err(Error::invalid(format!("no evaluation corpus for checkpoint language {l}")));
    }
    if let Some(l) = corpora.keys().find(|l| !checkpoints.contains_key(*l)) {
        return Err(Error::invalid(format!("no checkpoint for corpus language {l}")));
    }
    if let Some((l, _)) = corpora.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::invalid(format!("empty evaluation corpus for {l}")));
    }
    let languages: Vec<String> = corpora.keys().cloned().collect();
    CrossLangMatrix::from_fn(languages, |r, c| {
        let dets = checkpoints[r].detect_batch(&corpora[c])?;
        Ok(accuracy_of(&dets, &corpora[c]))
    })
}

/// Perturbed-vs-clean AUROC on the same samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub transform: String,
    pub n: usize,
    pub clean_auroc: f64,
    pub perturbed_auroc: f64,
    pub retention: f64,
    pub target: f64,
    pub meets_target: bool,
    /// Fraction of samples whose lexer token count survived the transform.
    pub token_count_preserved: f64,
}

pub const RETENTION_TARGET: f64 = 0.92;

pub fn retention_report(
    transform: &str,
    clean: &[Detection],
    perturbed: &[Detection],
    samples: &[Sample],
    token_count_preserved: f64,
) -> Result<RetentionReport> {
    let clean_auroc = accuracy_report(clean, samples)?.auroc;
    let perturbed_auroc = accuracy_report(perturbed, samples)?.auroc;
    let retention = perturbed_auroc / clean_auroc;
    Ok(RetentionReport {
        transform: transform.to_string(),
        n: samples.len(),
        clean_auroc,
        perturbed_auroc,
        retention,
        target: RETENTION_TARGET,
        meets_target: retention >= RETENTION_TARGET,
        token_count_preserved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sample;

    fn det(id: &str, score: f64) -> Detection {
        Detection {
            id: id.into(),
            score,
            label: (score >= 0.5) as u8,
            n_chunks: 1,
            per_chunk: vec![(score / (1.0 - score)).ln()],
            logit: (score / (1.0 - score)).ln(),
        }
    }

    #[test]
    fn single_language_report() {
        let samples = [sample("a", "x", "py", 0), sample("b", "y", "py", 1), sample("c", "z", "py", 1)];
        let dets = [det("c", 0.4), det("a", 0.2), det("b", 0.9)];
        let r = accuracy_report(&dets, &samples).unwrap();
        assert_eq!(r.per_language.len(), 1);
        assert_eq!(r.per_language["py"], r.accuracy);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.auroc, 1.0);
        assert_eq!(r.confusion.total(), 3);
    }

    #[test]
    fn join_errors_list_ids() {
        let samples = [sample("a", "x", "py", 0), sample("b", "y", "py", 1)];
        let err = accuracy_report(&[det("a", 0.1), det("q", 0.3)], &samples).unwrap_err().to_string();
        assert!(err.contains("\"b\"") && err.contains("\"q\""));
    }

    #[test]
    fn matrix_csv_layout() {
        let langs = vec!["java".to_string(), "c".to_string()];
        let m = CrossLangMatrix::from_fn(langs, |r, _| Ok(if r == "java" { 0.899 } else { 0.5 })).unwrap();
        let csv = m.to_csv("DuoLens");
        assert_eq!(csv, "Model Name,Java,C\nDuoLens (Java),-,0.899\nDuoLens (C),0.5,-\n");
        assert_eq!(m.get("java", "c"), Some(0.899));
        assert_eq!(m.cells.iter().flatten().filter(|c| c.is_some()).count(), 2);
        assert!(CrossLangMatrix::from_fn(vec!["c".into()], |_, _| Ok(1.0)).is_err());
    }
}
