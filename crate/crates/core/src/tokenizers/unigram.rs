use super::{Encoding, Vocab, VocabKind};
use crate::Result;

/// Replacement for whitespace before segmentation.
pub const SPACE_MARK: char = '\u{2581}';

/// Score given to a single character no piece covers.
const UNK_PENALTY: f64 = 10.0;

#[derive(Clone)]
struct Best {
    score: f64,
    count: usize,
    len: usize,
    id: u32,
}

impl Vocab {
    /// Viterbi segmentation maximizing total piece logprob.
    ///
    /// Whitespace chars become `▁` first. Ties go to fewer pieces, then to the
    /// lexicographically smallest first piece. A char that no single-char
    /// piece covers may be emitted as `<unk>` at a heavy penalty.
    pub fn unigram_encode(&self, text: &str) -> Result<Encoding> {
        self.require(VocabKind::Unigram)?;
        Ok(Encoding::from_ids(self.unigram_ids(text)))
    }

    pub(super) fn unigram_ids(&self, text: &str) -> Vec<u32> {
        let chars: Vec<char> = text
            .chars()
            .map(|c| if c.is_whitespace() { SPACE_MARK } else { c })
            .collect();
        let n = chars.len();
        if n == 0 {
            return Vec::new();
        }
        let min_lp = self
            .piece_logprob
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.specials.contains(*i as u32))
            .map(|(_, &lp)| lp)
            .fold(0.0f64, f64::min);
        let unk_score = min_lp - UNK_PENALTY;

        // best[i] = best segmentation of chars[i..]; filled right to left so the
        // choice stored at i is the first piece of that suffix.
        let mut best: Vec<Option<Best>> = vec![None; n + 1];
        best[n] = Some(Best { score: 0.0, count: 0, len: 0, id: 0 });
        for i in (0..n).rev() {
            let mut choice: Option<(Best, String)> = None;
            let mut has_single = false;
            let max_len = self.max_piece_chars.min(n - i);
            for len in 1..=max_len {
                let Some(rest) = &best[i + len] else { continue };
                let piece: String = chars[i..i + len].iter().collect();
                let Some(id) = self.id(&piece).filter(|&id| !self.specials.contains(id)) else {
                    continue;
                };
                if len == 1 {
                    has_single = true;
                }
                let cand = Best {
                    score: self.piece_logprob[id as usize] + rest.score,
                    count: rest.count + 1,
                    len,
                    id,
                };
                consider(&mut choice, cand, piece);
            }
            if !has_single {
                if let Some(rest) = &best[i + 1] {
                    let cand = Best {
                        score: unk_score + rest.score,
                        count: rest.count + 1,
                        len: 1,
                        id: self.specials.unk,
                    };
                    consider(&mut choice, cand, chars[i].to_string());
                }
            }
            best[i] = choice.map(|(b, _)| b);
        }

        let mut ids = Vec::new();
        let mut i = 0;
        while i < n {
            let b = best[i].as_ref().expect("every position reachable via unk fallback");
            ids.push(b.id);
            i += b.len;
        }
        ids
    }

    /// Total logprob of a segmentation given as ids (test and report helper).
    pub fn unigram_score(&self, ids: &[u32]) -> f64 {
        ids.iter().map(|&id| self.piece_logprob.get(id as usize).copied().unwrap_or(f64::NEG_INFINITY)).sum()
    }

    pub fn piece_logprob(&self, id: u32) -> Option<f64> {
        self.piece_logprob.get(id as usize).copied()
    }
}

fn consider(choice: &mut Option<(Best, String)>, cand: Best, piece: String) {
    let better = match choice {
        None => true,
        Some((cur, cur_piece)) => {
            cand.score > cur.score
                || (cand.score == cur.score
                    && (cand.count < cur.count || (cand.count == cur.count && piece < *cur_piece)))
        }
    };
    if better {
        *choice = Some((cand, piece));
    }
}
