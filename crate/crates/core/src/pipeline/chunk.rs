use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sliding-window settings. `window` counts the two boundary specials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkConfig {
    pub window: usize,
    pub stride: usize,
    pub enabled: bool,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            window: 512,
            stride: 448,
            enabled: true,
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 {
            return Err(Error::invalid(format!("chunk window {} leaves no room for content", self.window)));
        }
        if self.stride == 0 || self.stride > self.window - 2 {
            return Err(Error::invalid(format!(
                "chunk stride {} outside [1, {}]",
                self.stride,
                self.window - 2
            )));
        }
        Ok(())
    }

    pub fn content_slots(&self) -> usize {
        self.window - 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChunkPlan {
    pub window: usize,
    pub stride: usize,
    /// Half-open content-token ranges.
    pub chunks: Vec<(usize, usize)>,
}

/// Chunk `k` covers `[k·stride, min(k·stride + window − 2, n))`; planning
/// stops at the first chunk reaching `n`.
pub fn chunk(ids: &[u32], window: usize, stride: usize) -> Result<ChunkPlan> {
    ChunkConfig { window, stride, enabled: true }.validate()?;
    let n = ids.len();
    if n == 0 {
        return Err(Error::invalid("empty document"));
    }
    let slots = window - 2;
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + slots).min(n);
        chunks.push((start, end));
        if end == n {
            break;
        }
        start += stride;
    }
    Ok(ChunkPlan { window, stride, chunks })
}
