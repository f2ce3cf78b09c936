//! Frozen encoder branches and pooled feature extraction.

use std::path::Path;

use rayon::prelude::*;

use crate::encoder::{pool, EncoderModel};
use crate::pipeline::{chunk, ChunkConfig};
use crate::tokenizers::{Encoding, Vocab, VocabKind};
use crate::weights::{load_bundle, save_bundle};
use crate::{Error, Result};

/// One encoder together with the vocabulary that feeds it.
#[derive(Debug, Clone)]
pub struct Branch {
    pub encoder: EncoderModel,
    pub vocab: Vocab,
}

impl Branch {
    pub fn new(encoder: EncoderModel, vocab: Vocab) -> Result<Self> {
        if vocab.size() > encoder.config().vocab_size {
            return Err(Error::invalid(format!(
                "vocabulary has {} entries but the encoder embeds only {}",
                vocab.size(),
                encoder.config().vocab_size
            )));
        }
        Ok(Self { encoder, vocab })
    }

    /// Loads an encoder bundle and the vocabulary its `tokenizer.*` metadata
    /// points at (paths relative to the bundle's directory).
    pub fn load(path: &Path) -> Result<Self> {
        let bundle = load_bundle(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let kind: VocabKind = bundle
            .meta("tokenizer.kind")
            .ok_or_else(|| Error::Schema(format!("{}: missing metadata tokenizer.kind", path.display())))?
            .parse()?;
        let vocab_path = dir.join(
            bundle
                .meta("tokenizer.vocab")
                .ok_or_else(|| Error::Schema(format!("{}: missing metadata tokenizer.vocab", path.display())))?,
        );
        let vocab = match kind {
            VocabKind::ByteBpe => {
                let merges = bundle.meta("tokenizer.merges").ok_or_else(|| {
                    Error::Schema(format!("{}: missing metadata tokenizer.merges", path.display()))
                })?;
                Vocab::load_byte_bpe(&vocab_path, &dir.join(merges))?
            }
            VocabKind::Wordpiece => {
                let lower = bundle.meta("tokenizer.lowercase") == Some("true");
                Vocab::load_wordpiece(&vocab_path, lower)?
            }
            VocabKind::Unigram => Vocab::load_unigram(&vocab_path)?,
        };
        Self::new(EncoderModel::from_bundle(bundle)?, vocab)
    }

    /// Writes the bundle to `path` and the vocabulary files beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or(Path::new("."));
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::invalid(format!("bad bundle path {}", path.display())))?;
        let (vocab_name, merges_name) = self.vocab.write_files(dir, stem)?;
        let mut bundle = self.encoder.params().clone();
        bundle.set_meta("tokenizer.kind", self.vocab.kind().as_str());
        bundle.set_meta("tokenizer.vocab", vocab_name);
        if let Some(m) = merges_name {
            bundle.set_meta("tokenizer.merges", m);
        }
        bundle.set_meta("tokenizer.lowercase", self.vocab.lowercase());
        save_bundle(&bundle, path)
    }

    pub fn dim(&self) -> usize {
        self.encoder.config().hidden
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        self.vocab.encode(text).ids
    }

    /// `[CLS] content [SEP]` (or the `<s>`/`</s>` equivalents).
    pub fn wrap(&self, content: &[u32]) -> Encoding {
        let sp = self.vocab.specials();
        let mut ids = Vec::with_capacity(content.len() + 2);
        ids.push(sp.cls);
        ids.extend_from_slice(content);
        ids.push(sp.sep);
        Encoding::from_ids(ids)
    }

    /// One wrapped encoding per chunk; with chunking disabled, the content
    /// is truncated to a single window.
    pub fn chunk_encodings(&self, text: &str, cc: &ChunkConfig) -> Result<Vec<Encoding>> {
        let ids = self.tokenize(text);
        if !cc.enabled {
            return Ok(vec![self.direct_encoding(&ids, cc.window)?]);
        }
        let plan = chunk(&ids, cc.window, cc.stride)?;
        Ok(plan.chunks.iter().map(|&(s, e)| self.wrap(&ids[s..e])).collect())
    }

    /// Single window over the first `window − 2` content tokens.
    pub fn direct_encoding(&self, ids: &[u32], window: usize) -> Result<Encoding> {
        if ids.is_empty() {
            return Err(Error::invalid("empty document"));
        }
        if window < 3 {
            return Err(Error::invalid(format!("chunk window {window} leaves no room for content")));
        }
        Ok(self.wrap(&ids[..ids.len().min(window - 2)]))
    }

    /// Pooled vector of one encoding.
    pub fn embed(&self, enc: &Encoding) -> Result<Vec<f32>> {
        let hidden = self.encoder.forward(enc)?;
        Ok(pool(&hidden, &enc.attention_mask, self.encoder.config().pooling)?.to_vec())
    }

    pub fn doc_features(&self, text: &str, cc: &ChunkConfig) -> Result<Vec<Vec<f32>>> {
        self.chunk_encodings(text, cc)?.iter().map(|e| self.embed(e)).collect()
    }

    /// Features for many documents, computed in parallel, returned in input order.
    pub fn corpus_features(&self, texts: &[&str], cc: &ChunkConfig) -> Result<Vec<Vec<Vec<f32>>>> {
        texts.par_iter().map(|t| self.doc_features(t, cc)).collect()
    }
}

/// Pooled vectors from both branches for one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledPair {
    pub a: Vec<f32>,
    pub b: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct DualEncoder {
    pub a: Branch,
    pub b: Branch,
}

/// Index of the chunk paired with chunk `k` of `n` when a branch produced
/// `m ≤ n` chunks.
fn paired(k: usize, m: usize, n: usize) -> usize {
    k * m / n
}

impl DualEncoder {
    pub fn new(a: Branch, b: Branch) -> Self {
        Self { a, b }
    }

    pub fn load(path_a: &Path, path_b: &Path) -> Result<Self> {
        Ok(Self::new(Branch::load(path_a)?, Branch::load(path_b)?))
    }

    /// One pooled pair per chunk. The two tokenizers may chunk a document
    /// differently; the document then gets `max(n_A, n_B)` pairs, chunk `k`
    /// pairing `⌊k·n_A/n⌋` with `⌊k·n_B/n⌋`.
    pub fn doc_features(&self, text: &str, cc: &ChunkConfig) -> Result<Vec<PooledPair>> {
        let fa = self.a.doc_features(text, cc)?;
        let fb = self.b.doc_features(text, cc)?;
        let n = fa.len().max(fb.len());
        Ok((0..n)
            .map(|k| PooledPair {
                a: fa[paired(k, fa.len(), n)].clone(),
                b: fb[paired(k, fb.len(), n)].clone(),
            })
            .collect())
    }

    pub fn corpus_features(&self, texts: &[&str], cc: &ChunkConfig) -> Result<Vec<Vec<PooledPair>>> {
        texts.par_iter().map(|t| self.doc_features(t, cc)).collect()
    }
}
