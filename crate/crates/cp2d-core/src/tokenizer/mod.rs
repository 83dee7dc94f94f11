//! Tokenization: byte streams to sequences of type ids.
//!
//! Three token definitions are supported: overlapping space-free N-grams
//! (fixed-length character windows that admit spaces only at the edges),
//! repeated sequences from a greedy sliding-window LZ77 parse, and
//! lower-cased dictionary words. Type ids are assigned per vocabulary in
//! first-appearance order, so tokenizing a corpus in a fixed document order
//! is fully deterministic.

mod lz77;
mod osf;
mod words;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Encoding};

/// Integer id of a token type within a vocabulary.
pub type TypeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenizeError {
    #[error("OSF n-gram length must be at least 3, got {0}")]
    BadNgramLength(usize),
    #[error("LZ77 window must be at least 1 byte")]
    BadWindow,
    #[error("cannot parse tokenizer spec {0:?} (expected osf:N, lz77:W, lz77:inf, or words)")]
    BadSpec(String),
}

/// Which token definition to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenizerSpec {
    /// Overlapping space-free n-grams of length `n >= 3`.
    Osf { n: usize },
    /// Greedy LZ77 repeated sequences; `window: None` means unbounded.
    Lz77 { window: Option<usize> },
    /// Lower-cased maximal letter runs.
    Words,
}

impl TokenizerSpec {
    pub fn validate(&self) -> Result<(), TokenizeError> {
        match *self {
            TokenizerSpec::Osf { n } if n < 3 => Err(TokenizeError::BadNgramLength(n)),
            TokenizerSpec::Lz77 { window: Some(0) } => Err(TokenizeError::BadWindow),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TokenizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenizerSpec::Osf { n } => write!(f, "osf:{n}"),
            TokenizerSpec::Lz77 { window: Some(w) } => write!(f, "lz77:{w}"),
            TokenizerSpec::Lz77 { window: None } => write!(f, "lz77:inf"),
            TokenizerSpec::Words => write!(f, "words"),
        }
    }
}

impl FromStr for TokenizerSpec {
    type Err = TokenizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TokenizeError::BadSpec(s.to_string());
        let spec = if s == "words" {
            TokenizerSpec::Words
        } else if let Some(rest) = s.strip_prefix("osf:") {
            TokenizerSpec::Osf {
                n: rest.parse().map_err(|_| bad())?,
            }
        } else if let Some(rest) = s.strip_prefix("lz77:") {
            if rest == "inf" || rest == "unbounded" {
                TokenizerSpec::Lz77 { window: None }
            } else {
                TokenizerSpec::Lz77 {
                    window: Some(rest.parse().map_err(|_| bad())?),
                }
            }
        } else {
            return Err(bad());
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for TokenizerSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TokenizerSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Interning table mapping distinct token strings to dense ids, assigned in
/// first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    types: IndexSet<Box<[u8]>>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, token: &[u8]) -> TypeId {
        if let Some(idx) = self.types.get_index_of(token) {
            return idx as TypeId;
        }
        let (idx, _) = self.types.insert_full(token.into());
        idx as TypeId
    }

    pub fn lookup(&self, token: &[u8]) -> Option<TypeId> {
        self.types.get_index_of(token).map(|i| i as TypeId)
    }

    pub fn token(&self, id: TypeId) -> Option<&[u8]> {
        self.types.get_index(id as usize).map(|b| b.as_ref())
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Token strings in id order.
    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.types.iter().map(|b| b.as_ref())
    }
}

/// Count multiset over type ids, stored sorted by id so every summation
/// over it has a fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeCounts(Vec<(TypeId, u64)>);

impl TypeCounts {
    pub fn from_sequence(sequence: &[TypeId]) -> Self {
        let mut sorted = sequence.to_vec();
        sorted.sort_unstable();
        let mut out = Vec::new();
        for id in sorted {
            match out.last_mut() {
                Some((last, c)) if *last == id => *c += 1,
                _ => out.push((id, 1)),
            }
        }
        TypeCounts(out)
    }

    pub fn from_entries(mut entries: Vec<(TypeId, u64)>) -> Self {
        entries.retain(|&(_, c)| c > 0);
        entries.sort_unstable_by_key(|&(id, _)| id);
        TypeCounts(entries)
    }

    pub fn get(&self, id: TypeId) -> u64 {
        match self.0.binary_search_by_key(&id, |&(t, _)| t) {
            Ok(pos) => self.0[pos].1,
            Err(_) => 0,
        }
    }

    pub fn contains(&self, id: TypeId) -> bool {
        self.get(id) > 0
    }

    /// Total token count n.
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&(_, c)| c).sum()
    }

    /// Distinct type count D.
    pub fn distinct(&self) -> u64 {
        self.0.len() as u64
    }

    pub fn entries(&self) -> &[(TypeId, u64)] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (TypeId, u64)> + '_ {
        self.0.iter().copied()
    }

    pub fn merge(&mut self, other: &TypeCounts) {
        let mut merged = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                std::cmp::Ordering::Less => {
                    merged.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    merged.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    merged.push((self.0[i].0, self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        merged.extend_from_slice(&self.0[i..]);
        merged.extend_from_slice(&other.0[j..]);
        self.0 = merged;
    }

    /// Remove `other` from this multiset; counts saturate at zero and
    /// emptied types disappear.
    pub fn subtract(&mut self, other: &TypeCounts) {
        for &(id, c) in &other.0 {
            if let Ok(pos) = self.0.binary_search_by_key(&id, |&(t, _)| t) {
                self.0[pos].1 = self.0[pos].1.saturating_sub(c);
            }
        }
        self.0.retain(|&(_, c)| c > 0);
    }
}

/// A tokenized document: the id sequence in text order plus its counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    sequence: Vec<TypeId>,
    counts: TypeCounts,
}

impl TokenStream {
    pub fn from_ids(sequence: Vec<TypeId>) -> Self {
        let counts = TypeCounts::from_sequence(&sequence);
        TokenStream { sequence, counts }
    }

    pub fn sequence(&self) -> &[TypeId] {
        &self.sequence
    }

    pub fn counts(&self) -> &TypeCounts {
        &self.counts
    }

    /// Total tokens n.
    pub fn n(&self) -> u64 {
        self.sequence.len() as u64
    }

    /// Distinct types D.
    pub fn distinct(&self) -> u64 {
        self.counts.distinct()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

/// Number of types occurring exactly i times, for each multiplicity i.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MultiplicitySpectrum {
    r: BTreeMap<u64, u64>,
}

impl MultiplicitySpectrum {
    pub fn from_counts(counts: &TypeCounts) -> Self {
        let mut r = BTreeMap::new();
        for (_, c) in counts.iter() {
            *r.entry(c).or_insert(0) += 1;
        }
        MultiplicitySpectrum { r }
    }

    /// (multiplicity, number of types with that multiplicity) in ascending
    /// multiplicity order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.r.iter().map(|(&i, &c)| (i, c))
    }

    pub fn get(&self, multiplicity: u64) -> u64 {
        self.r.get(&multiplicity).copied().unwrap_or(0)
    }

    /// sum_i r_i, which equals the distinct type count D.
    pub fn total_types(&self) -> u64 {
        self.r.values().sum()
    }

    /// sum_i i * r_i, which equals the token count n.
    pub fn total_tokens(&self) -> u64 {
        self.r.iter().map(|(&i, &c)| i * c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// The multiplicity spectrum of a token stream.
pub fn multiplicity_spectrum(stream: &TokenStream) -> MultiplicitySpectrum {
    MultiplicitySpectrum::from_counts(stream.counts())
}

/// Tokenize one document into ids interned in `vocab`.
pub fn tokenize(
    spec: &TokenizerSpec,
    encoding: Encoding,
    bytes: &[u8],
    vocab: &mut Vocabulary,
) -> Result<Vec<TypeId>, TokenizeError> {
    spec.validate()?;
    Ok(match *spec {
        TokenizerSpec::Osf { n } => osf::tokenize(bytes, n, vocab),
        TokenizerSpec::Lz77 { window } => lz77::tokenize(bytes, window, vocab),
        TokenizerSpec::Words => words::tokenize(bytes, encoding, vocab),
    })
}

/// Convenience for tests and dumps: tokenize with a throwaway vocabulary and
/// return the token strings in text order.
pub fn tokenize_to_strings(
    spec: &TokenizerSpec,
    encoding: Encoding,
    bytes: &[u8],
) -> Result<Vec<Vec<u8>>, TokenizeError> {
    let mut vocab = Vocabulary::new();
    let ids = tokenize(spec, encoding, bytes, &mut vocab)?;
    Ok(ids
        .into_iter()
        .map(|id| vocab.token(id).unwrap().to_vec())
        .collect())
}

/// A whole corpus tokenized under one spec, sharing a single vocabulary.
#[derive(Debug, Clone)]
pub struct TokenizedCorpus {
    pub spec: TokenizerSpec,
    pub vocab: Vocabulary,
    /// One stream per corpus document, in document order.
    pub streams: Vec<TokenStream>,
    /// Token counts summed over all documents.
    pub total_counts: TypeCounts,
}

/// Tokenize every document of a corpus under a shared vocabulary.
///
/// Documents may be parsed concurrently upstream, but ids are assigned here
/// in document order, which pins the vocabulary layout.
pub fn tokenize_corpus(
    corpus: &Corpus,
    spec: &TokenizerSpec,
) -> Result<TokenizedCorpus, TokenizeError> {
    spec.validate()?;
    let mut vocab = Vocabulary::new();
    let mut streams = Vec::with_capacity(corpus.documents.len());
    let mut total_counts = TypeCounts::default();
    for doc in &corpus.documents {
        let ids = tokenize(spec, corpus.encoding, &doc.bytes, &mut vocab)?;
        let stream = TokenStream::from_ids(ids);
        total_counts.merge(stream.counts());
        streams.push(stream);
    }
    Ok(TokenizedCorpus {
        spec: *spec,
        vocab,
        streams,
        total_counts,
    })
}
