use std::collections::HashMap;
use std::sync::OnceLock;

use super::{Encoding, Vocab, VocabKind};
use crate::{Error, Result};

/// Byte ↔ printable-char table used by byte-level BPE vocabularies: printable
/// Latin-1 bytes map to themselves, the rest to U+0100 upwards.
fn byte_table() -> &'static ([char; 256], HashMap<char, u8>) {
    static TABLE: OnceLock<([char; 256], HashMap<char, u8>)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut forward = ['\0'; 256];
        let printable = |b: u32| (0x21..=0x7e).contains(&b) || (0xa1..=0xac).contains(&b) || (0xae..=0xff).contains(&b);
        let mut extra = 0u32;
        for b in 0..256u32 {
            let c = if printable(b) {
                b
            } else {
                extra += 1;
                255 + extra
            };
            forward[b as usize] = char::from_u32(c).expect("valid code point");
        }
        let back = forward.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        (forward, back)
    })
}

pub fn byte_to_char(b: u8) -> char {
    byte_table().0[b as usize]
}

pub fn char_to_byte(c: char) -> Option<u8> {
    byte_table().1.get(&c).copied()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Word,
    Space,
    Other,
}

fn class(c: char) -> Class {
    if c.is_whitespace() {
        Class::Space
    } else if c.is_alphanumeric() || c == '_' {
        Class::Word
    } else {
        Class::Other
    }
}

/// Splits text into BPE pieces; merges never cross piece boundaries.
///
/// A piece is a maximal run of one class (word chars = alphanumeric or `_`;
/// whitespace; everything else). A single space directly before a non-space
/// run is attached to the front of that run instead of the whitespace run.
/// Concatenating the pieces always gives back the input.
pub fn pretokenize(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = chars[i].0;
        let mut j = i;
        let mut cls = class(chars[i].1);
        if chars[i].1 == ' ' && i + 1 < chars.len() && class(chars[i + 1].1) != Class::Space {
            j = i + 1;
            cls = class(chars[j].1);
        }
        while j < chars.len() && class(chars[j].1) == cls {
            j += 1;
        }
        if cls == Class::Space && j < chars.len() && j - i > 1 && chars[j - 1].1 == ' ' {
            // leave the last space for the following run
            j -= 1;
        }
        let end = chars.get(j).map_or(text.len(), |c| c.0);
        pieces.push(&text[start..end]);
        i = j;
    }
    pieces
}

impl Vocab {
    /// Byte-level BPE: bytes → printable symbols → merges in ascending rank.
    pub fn bpe_encode(&self, text: &str) -> Result<Encoding> {
        self.require(VocabKind::ByteBpe)?;
        Ok(Encoding::from_ids(self.bpe_ids(text)))
    }

    pub(super) fn bpe_ids(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for piece in pretokenize(text) {
            let symbols: Vec<String> = piece.bytes().map(|b| byte_to_char(b).to_string()).collect();
            for sym in self.apply_merges(symbols) {
                ids.push(self.id(&sym).unwrap_or(self.specials.unk));
            }
        }
        ids
    }

    fn apply_merges(&self, mut symbols: Vec<String>) -> Vec<String> {
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merge_ranks.get(&(w[0].clone(), w[1].clone())).copied())
                .min();
            let Some(rank) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == a && &symbols[i + 1] == b {
                    merged.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    /// Inverse of [`Vocab::bpe_encode`]; special ids are skipped. Byte
    /// sequences that are not valid UTF-8 decode lossily.
    pub fn bpe_decode(&self, ids: &[u32]) -> Result<String> {
        self.require(VocabKind::ByteBpe)?;
        let mut bytes = Vec::new();
        for &id in ids {
            let tok = self.token(id).ok_or(Error::TokenRange { id, size: self.size() })?;
            if self.specials.contains(id) {
                continue;
            }
            for c in tok.chars() {
                let b = char_to_byte(c).ok_or_else(|| {
                    Error::invalid(format!("token {tok:?} contains non-byte symbol {c:?}"))
                })?;
                bytes.push(b);
            }
        }
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Specials, the full byte alphabet, then one entry per merge.
    pub(crate) fn byte_vocab(merges: &[(&str, &str)]) -> Vocab {
        let mut map = HashMap::new();
        for (i, s) in ["<s>", "</s>", "<pad>", "<unk>"].iter().enumerate() {
            map.insert(s.to_string(), i as u32);
        }
        for b in 0..=255u8 {
            let n = map.len() as u32;
            map.insert(byte_to_char(b).to_string(), n);
        }
        for (a, b) in merges {
            let n = map.len() as u32;
            map.entry(format!("{a}{b}")).or_insert(n);
        }
        let merges = merges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        Vocab::byte_bpe(map, merges).unwrap()
    }

    #[test]
    fn byte_table_is_a_bijection() {
        let mut seen = std::collections::HashSet::new();
        for b in 0..=255u8 {
            let c = byte_to_char(b);
            assert!(seen.insert(c));
            assert_eq!(char_to_byte(c), Some(b));
        }
        assert_eq!(byte_to_char(b'a'), 'a');
        assert_eq!(byte_to_char(b' '), 'Ġ');
        assert_eq!(byte_to_char(b'\n'), 'Ċ');
    }

    #[test]
    fn pretokenize_concatenates_back() {
        let s = "fn main() {\n    let x_1 = \"hé\";  // ok\n}";
        let pieces = pretokenize(s);
        assert_eq!(pieces.concat(), s);
        assert!(pieces.contains(&" x_1"));
        assert!(pieces.contains(&"fn"));
    }

    #[test]
    fn toy_merge_applies_everywhere() {
        let mut map = HashMap::new();
        for (i, s) in ["<s>", "</s>", "<pad>", "<unk>", "a", "b", "ab"].iter().enumerate() {
            map.insert(s.to_string(), i as u32);
        }
        let v = Vocab::byte_bpe(map, vec![("a".into(), "b".into())]).unwrap();
        assert_eq!(v.bpe_encode("abab").unwrap().ids, vec![6, 6]);
        assert_eq!(v.bpe_encode("").unwrap().ids, Vec::<u32>::new());
        // 'c' has no entry in the toy vocabulary
        assert_eq!(v.bpe_encode("c").unwrap().ids, vec![3]);
    }

    #[test]
    fn merges_follow_rank_not_position() {
        // rank 0 = (b, c); "abc" must become [a, bc] even though (a, b) is also listed.
        let v = byte_vocab(&[("b", "c"), ("a", "b")]);
        let ids = v.bpe_encode("abc").unwrap().ids;
        let toks: Vec<_> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(toks, ["a", "bc"]);
    }

    #[test]
    fn round_trip_code() {
        let v = byte_vocab(&[("f", "n"), ("m", "a"), ("ma", "i")]);
        let s = "fn main() {}";
        assert_eq!(v.bpe_decode(&v.bpe_encode(s).unwrap().ids).unwrap(), s);
        assert_eq!(v.bpe_decode(&[]).unwrap(), "");
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let v = byte_vocab(&[]);
        let err = v.bpe_decode(&[10_000]).unwrap_err();
        assert!(matches!(err, Error::TokenRange { id: 10_000, .. }));
    }

    #[test]
    fn underivable_merge_rejected() {
        let mut map = HashMap::new();
        for (i, s) in ["<s>", "</s>", "<pad>", "<unk>"].iter().enumerate() {
            map.insert(s.to_string(), i as u32);
        }
        assert!(Vocab::byte_bpe(map, vec![("ab".into(), "c".into())]).is_err());
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let v = byte_vocab(&[]);
        assert!(v.wordpiece_encode("x").is_err());
    }
}
