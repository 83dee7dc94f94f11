//! Repeated-sequence tokens from a greedy sliding-window LZ77 parse.
//!
//! At each position the longest substring that also starts within the
//! previous `window` bytes becomes one token whose identity is its literal
//! content; matches may overlap themselves (run-length behaviour). When no
//! match of length >= 2 exists, the single byte is emitted as a token.
//! Concatenating the tokens reproduces the input exactly.

use super::{TypeId, Vocabulary};

const NO_POS: u32 = u32::MAX;

/// Hash chains over 2-byte prefixes: `head[pair]` is the most recent
/// position starting with that pair, `prev[p]` the next older one.
struct Chains {
    head: Vec<u32>,
    prev: Vec<u32>,
}

impl Chains {
    fn new(len: usize) -> Self {
        Chains {
            head: vec![NO_POS; 1 << 16],
            prev: vec![NO_POS; len],
        }
    }

    #[inline]
    fn key(bytes: &[u8], pos: usize) -> usize {
        (bytes[pos] as usize) << 8 | bytes[pos + 1] as usize
    }

    #[inline]
    fn insert(&mut self, bytes: &[u8], pos: usize) {
        let key = Self::key(bytes, pos);
        self.prev[pos] = self.head[key];
        self.head[key] = pos as u32;
    }
}

fn match_len(bytes: &[u8], from: usize, at: usize) -> usize {
    let max = bytes.len() - at;
    let mut len = 0;
    // self-overlap is fine: from + len may run past `at`
    while len < max && bytes[from + len] == bytes[at + len] {
        len += 1;
    }
    len
}

pub(super) fn tokenize(
    bytes: &[u8],
    window: Option<usize>,
    vocab: &mut Vocabulary,
) -> Vec<TypeId> {
    let n = bytes.len();
    let mut ids = Vec::new();
    if n == 0 {
        return ids;
    }
    let mut chains = Chains::new(n);
    let mut pos = 0;
    while pos < n {
        let mut best_len = 0;
        if pos + 1 < n {
            let min_start = window.map_or(0, |w| pos.saturating_sub(w));
            let key = Chains::key(bytes, pos);
            let mut cand = chains.head[key];
            // chains run newest-first, so the first candidate reaching a
            // given length has the smallest offset
            while cand != NO_POS {
                let c = cand as usize;
                if c < min_start {
                    break;
                }
                if best_len == 0 || bytes.get(c + best_len) == bytes.get(pos + best_len) {
                    let len = match_len(bytes, c, pos);
                    if len > best_len {
                        best_len = len;
                        if best_len == n - pos {
                            break;
                        }
                    }
                }
                cand = chains.prev[c];
            }
        }
        let token_len = if best_len >= 2 { best_len } else { 1 };
        ids.push(vocab.intern(&bytes[pos..pos + token_len]));
        let insert_end = (pos + token_len).min(n - 1);
        for p in pos..insert_end {
            chains.insert(bytes, p);
        }
        pos += token_len;
    }
    ids
}
