use super::{Encoding, Vocab, VocabKind};
use crate::Result;

const MAX_WORD_CHARS: usize = 100;

/// Punctuation for pre-splitting: ASCII punctuation, plus any non-ASCII char
/// that is neither alphanumeric nor whitespace.
fn is_punct(c: char) -> bool {
    if c.is_ascii() {
        c.is_ascii_punctuation()
    } else {
        !c.is_alphanumeric() && !c.is_whitespace()
    }
}

/// Whitespace split, then every punctuation char becomes its own word.
fn basic_split(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in text.split_whitespace() {
        let mut cur = String::new();
        for c in chunk.chars() {
            if is_punct(c) {
                if !cur.is_empty() {
                    words.push(std::mem::take(&mut cur));
                }
                words.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            words.push(cur);
        }
    }
    words
}

impl Vocab {
    /// Greedy longest-match-first WordPiece with `##` continuations.
    pub fn wordpiece_encode(&self, text: &str) -> Result<Encoding> {
        self.require(VocabKind::Wordpiece)?;
        Ok(Encoding::from_ids(self.wordpiece_ids(text)))
    }

    pub(super) fn wordpiece_ids(&self, text: &str) -> Vec<u32> {
        let text = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        let mut ids = Vec::new();
        for word in basic_split(&text) {
            match self.split_word(&word) {
                Some(pieces) => ids.extend(pieces),
                None => ids.push(self.specials.unk),
            }
        }
        ids
    }

    fn split_word(&self, word: &str) -> Option<Vec<u32>> {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            return None;
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let sub: String = chars[start..end].iter().collect();
                let key = if start > 0 { format!("##{sub}") } else { sub };
                if let Some(id) = self.id(&key) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            out.push(found?);
            start = end;
        }
        Some(out)
    }
}
