use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexer::{lex, Language, TokenKind};
use super::Sample;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Rename,
    Reformat,
}

impl std::str::FromStr for Transform {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rename" => Ok(Transform::Rename),
            "reformat" => Ok(Transform::Reformat),
            other => Err(crate::Error::invalid(format!("unknown transform {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbRecord {
    pub original_id: String,
    pub transform: Transform,
    /// original identifier → replacement (rename only)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<BTreeMap<String, String>>,
}

/// Renames every distinct non-keyword identifier to `v<k>`, numbering in
/// order of first appearance. Comments, literals and preprocessor lines are
/// left as they are.
pub fn perturb_rename(code: &str, language: &str, _seed: u64) -> Result<(String, BTreeMap<String, String>)> {
    let lang: Language = language.parse()?;
    let mut names: HashMap<&str, String> = HashMap::new();
    let mut out = String::with_capacity(code.len());
    for tok in lex(code, lang) {
        let text = tok.text(code);
        if tok.kind == TokenKind::Ident {
            let k = names.len();
            out.push_str(names.entry(text).or_insert_with(|| format!("v{k}")));
        } else {
            out.push_str(text);
        }
    }
    let mapping = names.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    Ok((out, mapping))
}

/// Whitespace layout applied by [`reformat_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReformatStyle {
    /// Indent with tabs (one per 4 columns) instead of spaces.
    pub tabs: bool,
    /// Blank-line runs become one line (`true`) or two (`false`).
    pub collapse_blank: bool,
}

impl ReformatStyle {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            tabs: rng.random_bool(0.5),
            collapse_blank: rng.random_bool(0.5),
        }
    }
}

pub fn perturb_reformat(code: &str, seed: u64) -> String {
    reformat_with(code, ReformatStyle::from_seed(seed))
}

/// Re-indents, normalizes blank-line runs and strips trailing whitespace.
/// Only whitespace changes.
pub fn reformat_with(code: &str, style: ReformatStyle) -> String {
    let trailing_newline = code.ends_with('\n');
    let mut lines: Vec<String> = Vec::new();
    let mut blank_run = 0usize;
    for raw in code.lines() {
        let line = raw.trim_end();
        if line.is_empty() {
            blank_run += 1;
            continue;
        }
        if blank_run > 0 {
            // leading blank lines are dropped entirely
            if !lines.is_empty() {
                let n = if style.collapse_blank { 1 } else { 2 };
                lines.extend(std::iter::repeat_n(String::new(), n));
            }
            blank_run = 0;
        }
        let body = line.trim_start();
        let indent = &line[..line.len() - body.len()];
        let width: usize = indent.chars().map(|c| if c == '\t' { 4 } else { 1 }).sum();
        let mut out = if style.tabs {
            "\t".repeat(width / 4) + &" ".repeat(width % 4)
        } else {
            " ".repeat(width)
        };
        out.push_str(body);
        lines.push(out);
    }
    let mut s = lines.join("\n");
    if trailing_newline && !s.is_empty() {
        s.push('\n');
    }
    s
}

/// Applies `transform` to a sample, returning the perturbed copy.
pub fn perturb_sample(s: &Sample, transform: Transform, seed: u64) -> Result<(Sample, PerturbRecord)> {
    let mut out = s.clone();
    let mapping = match transform {
        Transform::Rename => {
            let (text, mapping) = perturb_rename(&s.text, &s.language, seed)?;
            out.text = text;
            Some(mapping)
        }
        Transform::Reformat => {
            out.text = perturb_reformat(&s.text, seed);
            None
        }
    };
    Ok((
        out,
        PerturbRecord {
            original_id: s.id.clone(),
            transform,
            mapping,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_rename_example() {
        let (out, map) = perturb_rename("int x = y + x;", "c", 0).unwrap();
        assert_eq!(out, "int v0 = v1 + v0;");
        assert_eq!(map["x"], "v0");
        assert_eq!(map["y"], "v1");
    }

    #[test]
    fn nothing_to_rename() {
        let (out, map) = perturb_rename("return 1;", "java", 0).unwrap();
        assert_eq!(out, "return 1;");
        assert!(map.is_empty());
    }

    #[test]
    fn literals_and_comments_untouched() {
        let src = "def f(a):\n    # a is here\n    return \"a\" + a";
        let (out, _) = perturb_rename(src, "python", 0).unwrap();
        assert_eq!(out, "def v0(v1):\n    # a is here\n    return \"a\" + v1");
        assert!(perturb_rename(src, "cobol", 0).is_err());
    }

    #[test]
    fn inverse_mapping_recovers_identifiers() {
        let src = "func add(a int, b int) int { return a + b + add(b, a) }";
        let (out, map) = perturb_rename(src, "go", 0).unwrap();
        let inv: HashMap<&str, &str> = map.iter().map(|(k, v)| (v.as_str(), k.as_str())).collect();
        let idents = |s: &str| -> Vec<String> {
            lex(s, Language::Go)
                .iter()
                .filter(|t| t.kind == TokenKind::Ident)
                .map(|t| t.text(s).to_string())
                .collect()
        };
        let back: Vec<String> = idents(&out).iter().map(|v| inv[v.as_str()].to_string()).collect();
        assert_eq!(back, idents(src));
    }

    #[test]
    fn reformat_tabs_to_spaces() {
        let style = ReformatStyle { tabs: false, collapse_blank: true };
        assert_eq!(reformat_with("if x:\n\ty = 1  \n\n\n\tz\n", style), "if x:\n    y = 1\n\n    z\n");
        let tabs = ReformatStyle { tabs: true, collapse_blank: false };
        assert_eq!(reformat_with("a\n      b\n\nc", tabs), "a\n\t  b\n\n\nc");
    }

    #[test]
    fn normalized_input_is_fixed_point() {
        let style = ReformatStyle { tabs: true, collapse_blank: true };
        let src = "a\n\tb\n\nc\n";
        assert_eq!(reformat_with(src, style), src);
    }

    #[test]
    fn sample_record() {
        let s = crate::corpus::sample("7", "int q;", "c", 1);
        let (p, rec) = perturb_sample(&s, Transform::Rename, 3).unwrap();
        assert_eq!(p.text, "int v0;");
        assert_eq!(rec.original_id, "7");
        let (_, rec) = perturb_sample(&s, Transform::Reformat, 3).unwrap();
        assert!(rec.mapping.is_none());
    }
}
