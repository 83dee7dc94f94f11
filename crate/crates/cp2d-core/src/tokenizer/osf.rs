//! Overlapping space-free n-grams.
//!
//! Every length-n window (stride 1) over the byte stream is emitted iff no
//! space occurs at an interior position; spaces are allowed only as the
//! first or last character. A consequence is that words shorter than n-2
//! characters produce no token at all.

use super::{TypeId, Vocabulary};

/// Whitespace bytes are collapsed to 0x20 before windowing; only that byte
/// counts as a space afterwards.
fn normalize(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .map(|&b| if b.is_ascii_whitespace() { b' ' } else { b })
        .collect()
}

pub(super) fn tokenize(bytes: &[u8], n: usize, vocab: &mut Vocabulary) -> Vec<TypeId> {
    debug_assert!(n >= 3);
    let text = normalize(bytes);
    if text.len() < n {
        return Vec::new();
    }
    let mut ids = Vec::new();
    for start in 0..=text.len() - n {
        let window = &text[start..start + n];
        if window[1..n - 1].contains(&b' ') {
            continue;
        }
        ids.push(vocab.intern(window));
    }
    ids
}
