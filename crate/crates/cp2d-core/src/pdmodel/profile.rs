//! Fitted per-author state and the on-disk profile store.
//!
//! The store is a versioned JSON document carrying the tokenizer spec, the
//! vocabulary (as decoded text), the base-distribution choice, and each
//! author's (alpha, theta, counts, renormalizer). It is self-contained:
//! attribution can run from the store plus the anonymous documents alone.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AuthorParams, BaseDistribution, P0Strategy, PdError};
use crate::corpus::{decode, transcode, Encoding};
use crate::tokenizer::{TokenizerSpec, TypeCounts, Vocabulary};

/// Fitted per-author state: parameters, training counts, and the cached
/// author-excluded renormalizer (zero under the global strategy).
///
/// Counts are shared so that leave-one-out evaluation can swap out a single
/// author without copying every table.
#[derive(Debug, Clone)]
pub struct AuthorProfile {
    pub author: String,
    pub params: AuthorParams,
    pub counts: Arc<TypeCounts>,
    /// Total training tokens m.
    pub m: u64,
    /// Distinct training types D_A.
    pub d: u64,
    /// ln(1 / P(A^C)) under the author-excluded strategy, else 0.
    pub base_normalizer: f64,
}

impl AuthorProfile {
    pub fn new(
        author: String,
        params: AuthorParams,
        counts: impl Into<Arc<TypeCounts>>,
        base_normalizer: f64,
    ) -> Self {
        let counts = counts.into();
        let m = counts.total();
        let d = counts.distinct();
        AuthorProfile {
            author,
            params,
            counts,
            m,
            d,
            base_normalizer,
        }
    }
}

/// Stored form of one author.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredAuthor {
    pub id: String,
    pub alpha: f64,
    pub theta: f64,
    pub counts: Vec<(u32, u64)>,
    pub base_normalizer: f64,
}

/// How the store's base distribution is defined.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoredBase {
    /// Frequencies over the stored author counts, extended with the counts
    /// of the documents being attributed.
    Frequency,
    /// Explicit per-type probabilities over the stored vocabulary.
    Explicit { probs: Vec<f64> },
}

/// Versioned, self-contained serialization of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileStore {
    pub version: u32,
    pub encoding: Encoding,
    pub tokenizer: TokenizerSpec,
    pub p0_strategy: P0Strategy,
    pub delta: f64,
    /// Token strings in type-id order, decoded from the corpus encoding.
    pub vocabulary: Vec<String>,
    pub base: StoredBase,
    pub authors: Vec<StoredAuthor>,
}

pub const PROFILE_STORE_VERSION: u32 = 1;

impl ProfileStore {
    pub fn build(
        encoding: Encoding,
        tokenizer: TokenizerSpec,
        p0_strategy: P0Strategy,
        delta: f64,
        vocab: &Vocabulary,
        base: StoredBase,
        profiles: &[AuthorProfile],
    ) -> Self {
        let vocabulary = vocab.iter().map(|tok| decode(tok, encoding)).collect();
        let authors = profiles
            .iter()
            .map(|p| StoredAuthor {
                id: p.author.clone(),
                alpha: p.params.alpha(),
                theta: p.params.theta(),
                counts: p.counts.entries().to_vec(),
                base_normalizer: p.base_normalizer,
            })
            .collect();
        ProfileStore {
            version: PROFILE_STORE_VERSION,
            encoding,
            tokenizer,
            p0_strategy,
            delta,
            vocabulary,
            base,
            authors,
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("profile store serializes");
        fs::write(path, json)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let json = fs::read_to_string(path).map_err(|e| StoreError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let store: ProfileStore = serde_json::from_str(&json).map_err(StoreError::Parse)?;
        if store.version != PROFILE_STORE_VERSION {
            return Err(StoreError::Version(store.version));
        }
        Ok(store)
    }

    /// Rebuild the vocabulary (token strings re-encoded into the page).
    pub fn vocabulary(&self) -> Vocabulary {
        let mut vocab = Vocabulary::new();
        for tok in &self.vocabulary {
            vocab.intern(&transcode(tok, self.encoding));
        }
        vocab
    }

    /// Rebuild the author profiles.
    pub fn profiles(&self) -> Result<Vec<AuthorProfile>, PdError> {
        self.authors
            .iter()
            .map(|a| {
                Ok(AuthorProfile::new(
                    a.id.clone(),
                    AuthorParams::new(a.alpha, a.theta)?,
                    TypeCounts::from_entries(a.counts.clone()),
                    a.base_normalizer,
                ))
            })
            .collect()
    }

    /// Build the base distribution over `vocab_size` types, folding in any
    /// extra counts (e.g. from the documents being attributed) when the
    /// stored base is frequency-derived.
    pub fn base_distribution(
        &self,
        vocab_size: usize,
        extra_counts: Option<&TypeCounts>,
    ) -> Result<BaseDistribution, PdError> {
        match &self.base {
            StoredBase::Explicit { probs } => {
                let mut probs = probs.clone();
                if probs.len() < vocab_size {
                    probs.resize(vocab_size, 0.0);
                }
                BaseDistribution::from_probs_unnormalized(probs, self.delta)
            }
            StoredBase::Frequency => {
                let mut counts = TypeCounts::default();
                for a in &self.authors {
                    counts.merge(&TypeCounts::from_entries(a.counts.clone()));
                }
                if let Some(extra) = extra_counts {
                    counts.merge(extra);
                }
                BaseDistribution::from_counts(&counts, vocab_size, self.delta)
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("cannot read profile store {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed profile store: {0}")]
    Parse(serde_json::Error),
    #[error("unsupported profile store version {0}")]
    Version(u32),
}
