//! Labeled samples, pool ingestion, balancing, splitting and code
//! perturbations.

mod balance;
mod lexer;
mod perturb;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use balance::{balance, split, PoolCensus, SplitFractions, Splits};
pub use lexer::{lex, Language, Token, TokenKind};
pub use perturb::{
    perturb_reformat, perturb_rename, perturb_sample, reformat_with, PerturbRecord, ReformatStyle, Transform,
};

/// One labeled instance: 0 = human-written, 1 = machine-generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub language: String,
    pub label: u8,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

impl Sample {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.text.is_empty() {
            return Err(format!("sample {} has empty text", self.id));
        }
        if self.label > 1 {
            return Err(format!("sample {} has label {} (expected 0 or 1)", self.id, self.label));
        }
        Ok(())
    }
}

/// Parses one JSONL file; blank lines are skipped.
pub fn read_jsonl(path: &Path) -> Result<Vec<Sample>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&body, path)
}

pub fn parse_jsonl(body: &str, origin: &Path) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            file: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        let s: Sample = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        s.validate().map_err(parse_err)?;
        out.push(s);
    }
    Ok(out)
}

/// Serializes samples as JSONL.
pub fn emit(samples: &[Sample], mut w: impl Write) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_jsonl(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut buf = Vec::new();
    emit(samples, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Union of several JSONL pools in the order given. A repeated id is an
/// error; a repeated text keeps its first occurrence.
pub fn ingest(paths: &[PathBuf]) -> Result<Vec<Sample>> {
    let parsed: Vec<Vec<Sample>> = paths.par_iter().map(|p| read_jsonl(p)).collect::<Result<_>>()?;
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    let mut seen_text: HashSet<String> = HashSet::new();
    let mut pool = Vec::new();
    let mut dropped = 0usize;
    for (fi, samples) in parsed.into_iter().enumerate() {
        for s in samples {
            if let Some(&prev) = seen_ids.get(&s.id) {
                return Err(Error::invalid(format!(
                    "duplicate id {:?} in {} (first seen in {})",
                    s.id,
                    paths[fi].display(),
                    paths[prev].display()
                )));
            }
            seen_ids.insert(s.id.clone(), fi);
            if !seen_text.insert(s.text.clone()) {
                dropped += 1;
                continue;
            }
            pool.push(s);
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} samples with duplicate text");
    }
    Ok(pool)
}

#[cfg(test)]
pub(crate) fn sample(id: &str, text: &str, language: &str, label: u8) -> Sample {
    Sample {
        id: id.into(),
        text: text.into(),
        language: language.into(),
        label,
        source: "test".into(),
        generator: None,
    }
}
