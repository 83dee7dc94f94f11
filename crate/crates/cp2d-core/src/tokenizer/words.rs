//! Dictionary-word tokens: non-letter bytes become spaces, letters are
//! lower-cased within the declared code page, and tokens are the maximal
//! nonempty runs in between. No lemmatization or stemming.

use super::{TypeId, Vocabulary};
use crate::corpus::{lower_letter, Encoding};

pub(super) fn tokenize(bytes: &[u8], encoding: Encoding, vocab: &mut Vocabulary) -> Vec<TypeId> {
    let normalized: Vec<u8> = bytes
        .iter()
        .map(|&b| lower_letter(b, encoding).unwrap_or(b' '))
        .collect();
    normalized
        .split(|&b| b == b' ')
        .filter(|w| !w.is_empty())
        .map(|w| vocab.intern(w))
        .collect()
}
