//! Table-driven tokenizers: byte-level BPE, WordPiece and unigram.
//!
//! Vocabularies are loaded from plain files and never trained here:
//!
//! * byte-level BPE: `vocab.json` (`{"token": id, ...}`) plus a ranked
//!   `merges.txt` with one `left right` pair per line (a leading `#version`
//!   line is skipped);
//! * WordPiece: one piece per line, id = line number;
//! * unigram: `piece<TAB>logprob` per line, id = line number.
//!
//! Encoders return content tokens only; the pipeline adds the begin/end
//! specials when it builds encoder inputs.

pub mod bpe;
mod unigram;
mod wordpiece;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bpe::{byte_to_char, char_to_byte, pretokenize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VocabKind {
    ByteBpe,
    Wordpiece,
    Unigram,
}

impl VocabKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VocabKind::ByteBpe => "byte-bpe",
            VocabKind::Wordpiece => "wordpiece",
            VocabKind::Unigram => "unigram",
        }
    }

    /// Names of the `[cls, sep, pad, unk]` specials for this family.
    pub fn special_names(self) -> [&'static str; 4] {
        match self {
            VocabKind::Wordpiece => ["[CLS]", "[SEP]", "[PAD]", "[UNK]"],
            VocabKind::ByteBpe | VocabKind::Unigram => ["<s>", "</s>", "<pad>", "<unk>"],
        }
    }
}

impl std::str::FromStr for VocabKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "byte-bpe" => Ok(VocabKind::ByteBpe),
            "wordpiece" => Ok(VocabKind::Wordpiece),
            "unigram" => Ok(VocabKind::Unigram),
            other => Err(Error::invalid(format!("unknown tokenizer kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Specials {
    pub cls: u32,
    pub sep: u32,
    pub pad: u32,
    pub unk: u32,
}

impl Specials {
    pub fn contains(&self, id: u32) -> bool {
        id == self.cls || id == self.sep || id == self.pad || id == self.unk
    }
}

/// Token ids plus attention mask (1 on real tokens, 0 on padding).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
}

impl Encoding {
    /// All-real-token encoding.
    pub fn from_ids(ids: Vec<u32>) -> Self {
        let attention_mask = vec![1; ids.len()];
        Self { ids, attention_mask }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Appends `n` padding positions.
    pub fn pad(&mut self, pad_id: u32, n: usize) {
        self.ids.extend(std::iter::repeat_n(pad_id, n));
        self.attention_mask.extend(std::iter::repeat_n(0, n));
    }
}

#[derive(Debug, Clone)]
pub struct Vocab {
    kind: VocabKind,
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
    specials: Specials,
    merge_ranks: HashMap<(String, String), usize>,
    merges: Vec<(String, String)>,
    piece_logprob: Vec<f64>,
    max_piece_chars: usize,
    lowercase: bool,
}

impl Vocab {
    fn build(kind: VocabKind, id_to_token: Vec<String>) -> Result<Self> {
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (id, tok) in id_to_token.iter().enumerate() {
            if token_to_id.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary entry {tok:?}")));
            }
        }
        let names = kind.special_names();
        let lookup = |name: &str| {
            token_to_id
                .get(name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("{} vocabulary lacks special {name}", kind.as_str())))
        };
        let specials = Specials {
            cls: lookup(names[0])?,
            sep: lookup(names[1])?,
            pad: lookup(names[2])?,
            unk: lookup(names[3])?,
        };
        let max_piece_chars = id_to_token.iter().map(|t| t.chars().count()).max().unwrap_or(1);
        Ok(Self {
            kind,
            id_to_token,
            token_to_id,
            specials,
            merge_ranks: HashMap::new(),
            merges: Vec::new(),
            piece_logprob: Vec::new(),
            max_piece_chars,
            lowercase: false,
        })
    }

    /// Byte-level BPE vocabulary. Ids must be dense in `[0, len)`; every merge
    /// operand must be a byte symbol or the product of an earlier merge.
    pub fn byte_bpe(token_to_id: HashMap<String, u32>, merges: Vec<(String, String)>) -> Result<Self> {
        let id_to_token = dense_ids(token_to_id)?;
        let mut v = Self::build(VocabKind::ByteBpe, id_to_token)?;
        let mut derivable: std::collections::HashSet<String> =
            (0..=255u8).map(|b| byte_to_char(b).to_string()).collect();
        for (rank, (a, b)) in merges.iter().enumerate() {
            for side in [a, b] {
                if !derivable.contains(side) {
                    return Err(Error::invalid(format!(
                        "merge {rank} ({a} {b}) uses underivable symbol {side:?}"
                    )));
                }
            }
            derivable.insert(format!("{a}{b}"));
            v.merge_ranks.entry((a.clone(), b.clone())).or_insert(rank);
        }
        v.merges = merges;
        Ok(v)
    }

    /// WordPiece vocabulary; ids follow list order.
    pub fn wordpiece(pieces: Vec<String>, lowercase: bool) -> Result<Self> {
        let mut v = Self::build(VocabKind::Wordpiece, pieces)?;
        v.lowercase = lowercase;
        Ok(v)
    }

    /// Unigram vocabulary of `(piece, logprob)`; ids follow list order.
    pub fn unigram(pieces: Vec<(String, f64)>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::invalid("unigram vocabulary is empty"));
        }
        if let Some((p, lp)) = pieces.iter().find(|(_, lp)| !lp.is_finite()) {
            return Err(Error::invalid(format!("piece {p:?} has non-finite logprob {lp}")));
        }
        let (names, logprobs): (Vec<_>, Vec<_>) = pieces.into_iter().unzip();
        let mut v = Self::build(VocabKind::Unigram, names)?;
        v.piece_logprob = logprobs;
        Ok(v)
    }

    pub fn load_byte_bpe(vocab_json: &Path, merges_txt: &Path) -> Result<Self> {
        let raw = fs::read_to_string(vocab_json).map_err(|e| Error::io(vocab_json, e))?;
        let map: HashMap<String, u32> = serde_json::from_str(&raw)
            .map_err(|e| Error::invalid(format!("{}: {e}", vocab_json.display())))?;
        let text = fs::read_to_string(merges_txt).map_err(|e| Error::io(merges_txt, e))?;
        let mut merges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || (i == 0 && line.starts_with("#version")) {
                continue;
            }
            let (a, b) = line.split_once(' ').ok_or_else(|| Error::Parse {
                file: merges_txt.to_path_buf(),
                line: i + 1,
                msg: "expected `left right`".into(),
            })?;
            merges.push((a.to_string(), b.to_string()));
        }
        Self::byte_bpe(map, merges)
    }

    pub fn load_wordpiece(path: &Path, lowercase: bool) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::wordpiece(text.lines().map(str::to_string).collect(), lowercase)
    }

    pub fn load_unigram(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pieces = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (p, lp) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
                file: path.to_path_buf(),
                line: i + 1,
                msg: "expected `piece<TAB>logprob`".into(),
            })?;
            let lp: f64 = lp.trim().parse().map_err(|_| Error::Parse {
                file: path.to_path_buf(),
                line: i + 1,
                msg: format!("bad logprob {lp:?}"),
            })?;
            pieces.push((p.to_string(), lp));
        }
        Self::unigram(pieces)
    }

    /// Writes the vocabulary files for this kind into `dir`, returning the
    /// file names used (`vocab`, optional `merges`).
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<(String, Option<String>)> {
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        match self.kind {
            VocabKind::ByteBpe => {
                let vocab_name = format!("{stem}.vocab.json");
                let merges_name = format!("{stem}.merges.txt");
                let map: std::collections::BTreeMap<&str, u32> = self
                    .id_to_token
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (t.as_str(), i as u32))
                    .collect();
                write(&vocab_name, serde_json::to_string(&map).expect("map serializes"))?;
                let mut body = String::from("#version: 0.2\n");
                for (a, b) in &self.merges {
                    body.push_str(&format!("{a} {b}\n"));
                }
                write(&merges_name, body)?;
                Ok((vocab_name, Some(merges_name)))
            }
            VocabKind::Wordpiece => {
                let name = format!("{stem}.wordpiece.txt");
                write(&name, self.id_to_token.join("\n") + "\n")?;
                Ok((name, None))
            }
            VocabKind::Unigram => {
                let name = format!("{stem}.unigram.tsv");
                let body: String = self
                    .id_to_token
                    .iter()
                    .zip(&self.piece_logprob)
                    .map(|(p, lp)| format!("{p}\t{lp}\n"))
                    .collect();
                write(&name, body)?;
                Ok((name, None))
            }
        }
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn specials(&self) -> Specials {
        self.specials
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Tokenizes with the vocabulary's own algorithm.
    pub fn encode(&self, text: &str) -> Encoding {
        let ids = match self.kind {
            VocabKind::ByteBpe => self.bpe_ids(text),
            VocabKind::Wordpiece => self.wordpiece_ids(text),
            VocabKind::Unigram => self.unigram_ids(text),
        };
        Encoding::from_ids(ids)
    }

    fn require(&self, kind: VocabKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::invalid(format!(
                "{} operation on a {} vocabulary",
                kind.as_str(),
                self.kind.as_str()
            )));
        }
        Ok(())
    }
}

fn dense_ids(token_to_id: HashMap<String, u32>) -> Result<Vec<String>> {
    let n = token_to_id.len();
    let mut slots: Vec<Option<String>> = vec![None; n];
    for (tok, id) in token_to_id {
        let slot = slots
            .get_mut(id as usize)
            .ok_or_else(|| Error::invalid(format!("token {tok:?} has id {id} outside [0, {n})")))?;
        if slot.is_some() {
            return Err(Error::invalid(format!("id {id} assigned twice")));
        }
        *slot = Some(tok);
    }
    Ok(slots.into_iter().map(|s| s.expect("dense ids")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_must_exist() {
        let err = Vocab::wordpiece(vec!["[CLS]".into(), "[SEP]".into(), "[PAD]".into()], false).unwrap_err();
        assert!(err.to_string().contains("[UNK]"));
    }

    #[test]
    fn sparse_ids_rejected() {
        let mut m = HashMap::new();
        m.insert("<s>".to_string(), 0);
        m.insert("</s>".to_string(), 5);
        assert!(Vocab::byte_bpe(m, vec![]).is_err());
    }

    #[test]
    fn vocab_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let wp = Vocab::wordpiece(
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "hello", "##s"].map(String::from).to_vec(),
            false,
        )
        .unwrap();
        let (name, _) = wp.write_files(dir.path(), "wp").unwrap();
        let back = Vocab::load_wordpiece(&dir.path().join(name), false).unwrap();
        assert_eq!(back.encode("hellos").ids, vec![4, 5]);

        let uni = Vocab::unigram(vec![
            ("<s>".into(), 0.0),
            ("</s>".into(), 0.0),
            ("<pad>".into(), 0.0),
            ("<unk>".into(), 0.0),
            ("ab".into(), -1.5),
        ])
        .unwrap();
        let (name, _) = uni.write_files(dir.path(), "u").unwrap();
        let back = Vocab::load_unigram(&dir.path().join(name)).unwrap();
        assert_eq!(back.encode("ab").ids, vec![4]);
    }
}
