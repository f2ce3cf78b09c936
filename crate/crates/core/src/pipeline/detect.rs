use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate, Aggregation, Calibration, ChunkConfig};
use crate::corpus::Sample;
use crate::features::{DualEncoder, PooledPair};
use crate::fusion::FusionHead;
use crate::weights::{load_bundle, TensorBundle};
use crate::{Error, Result};

/// Scored document, serialized as one JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: String,
    pub score: f64,
    pub label: u8,
    pub n_chunks: usize,
    pub per_chunk: Vec<f64>,
    /// Aggregated raw logit before calibration.
    pub logit: f64,
}

/// Inference settings carried in head bundle metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSettings {
    pub encoder_a: PathBuf,
    pub encoder_b: PathBuf,
    pub chunking: ChunkConfig,
    pub aggregation: Aggregation,
    pub calibration: Calibration,
}

impl HeadSettings {
    /// Stores the settings; encoder paths are written as given.
    pub fn write(&self, b: &mut TensorBundle) {
        b.set_meta("encoder_a", self.encoder_a.display());
        b.set_meta("encoder_b", self.encoder_b.display());
        b.set_meta("chunk.window", self.chunking.window);
        b.set_meta("chunk.stride", self.chunking.stride);
        b.set_meta("chunk.enabled", self.chunking.enabled);
        b.set_meta("aggregation", self.aggregation.as_str());
        b.set_meta("temperature", self.calibration.temperature);
    }

    /// Reads the settings, resolving encoder paths against `base`.
    pub fn read(b: &TensorBundle, base: &Path) -> Result<Self> {
        let path = |key: &str| -> Result<PathBuf> {
            let rel = b
                .meta(key)
                .ok_or_else(|| Error::Schema(format!("head bundle lacks metadata {key}")))?;
            Ok(base.join(rel))
        };
        let temperature = match b.meta("temperature") {
            Some(_) => b.meta_parse("temperature")?,
            None => 1.0,
        };
        Ok(Self {
            encoder_a: path("encoder_a")?,
            encoder_b: path("encoder_b")?,
            chunking: ChunkConfig {
                window: b.meta_parse("chunk.window")?,
                stride: b.meta_parse("chunk.stride")?,
                enabled: b.meta_parse("chunk.enabled")?,
            },
            aggregation: b.meta("aggregation").unwrap_or("mean").parse()?,
            calibration: Calibration::new(temperature)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Detector {
    pub dual: DualEncoder,
    pub head: FusionHead,
    pub calibration: Calibration,
    pub chunking: ChunkConfig,
    pub aggregation: Aggregation,
    pub threshold: f64,
}

impl Detector {
    /// Loads a head bundle and the two encoders it references.
    pub fn load(head_path: &Path, threshold: f64) -> Result<Self> {
        let bundle = load_bundle(head_path)?;
        let base = head_path.parent().unwrap_or(Path::new("."));
        let settings = HeadSettings::read(&bundle, base)?;
        let head = FusionHead::from_bundle(&bundle)?;
        let dual = DualEncoder::load(&settings.encoder_a, &settings.encoder_b)?;
        if dual.a.dim() != head.d_a() || dual.b.dim() != head.d_b() {
            return Err(Error::Schema(format!(
                "head expects encoder widths ({}, {}), encoders have ({}, {})",
                head.d_a(),
                head.d_b(),
                dual.a.dim(),
                dual.b.dim()
            )));
        }
        Ok(Self {
            dual,
            head,
            calibration: settings.calibration,
            chunking: settings.chunking,
            aggregation: settings.aggregation,
            threshold,
        })
    }

    /// Raw logit per chunk, in chunk order.
    pub fn chunk_logits(&self, features: &[PooledPair]) -> Result<Vec<f64>> {
        features.iter().map(|f| self.head.logit(&f.a, &f.b)).collect()
    }

    pub fn detect(&self, id: &str, text: &str) -> Result<Detection> {
        let features = self.dual.doc_features(text, &self.chunking)?;
        self.finish(id, self.chunk_logits(&features)?)
    }

    /// Scores a single truncated window without going through the chunk
    /// planner.
    pub fn detect_unchunked(&self, id: &str, text: &str) -> Result<Detection> {
        let window = self.chunking.window;
        let ea = self.dual.a.direct_encoding(&self.dual.a.tokenize(text), window)?;
        let eb = self.dual.b.direct_encoding(&self.dual.b.tokenize(text), window)?;
        let z = self.head.logit(&self.dual.a.embed(&ea)?, &self.dual.b.embed(&eb)?)?;
        self.finish(id, vec![z])
    }

    pub fn detect_batch(&self, samples: &[Sample]) -> Result<Vec<Detection>> {
        samples.par_iter().map(|s| self.detect(&s.id, &s.text)).collect()
    }

    /// Builds the detection from chunk logits already computed.
    pub fn finish(&self, id: &str, per_chunk: Vec<f64>) -> Result<Detection> {
        if let Some(k) = per_chunk.iter().position(|z| !z.is_finite()) {
            return Err(Error::Internal(format!("non-finite logit at chunk {k} of document {id}")));
        }
        let logit = aggregate(&per_chunk, self.aggregation)?;
        let score = self.calibration.probability(logit);
        Ok(Detection {
            id: id.to_string(),
            score,
            label: (score >= self.threshold) as u8,
            n_chunks: per_chunk.len(),
            per_chunk,
            logit,
        })
    }
}
