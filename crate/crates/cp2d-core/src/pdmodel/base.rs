//! Base distributions: the prior probability assigned to token identities
//! when a novel type is drawn.
//!
//! The global strategy identifies P0(y) with the frequency of y in the
//! corpus. The author-excluded strategy renormalizes that frequency over
//! the types absent from an author's training sequence, which amounts to a
//! per-author additive constant in log space. A history-dependent variant
//! renormalizes over the types not yet seen at each step; it is exposed for
//! completeness but note that it is order-dependent.

use serde::{Deserialize, Serialize};

use super::PdError;
use crate::tokenizer::{TypeCounts, TypeId};

/// How P0 is adapted per author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P0Strategy {
    /// Corpus frequencies as-is.
    Global,
    /// Frequencies renormalized over types outside the author's training
    /// sequence.
    AuthorExcluded,
}

impl P0Strategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Some(P0Strategy::Global),
            "author" | "author_excluded" => Some(P0Strategy::AuthorExcluded),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            P0Strategy::Global => "global",
            P0Strategy::AuthorExcluded => "author_excluded",
        }
    }
}

impl std::fmt::Display for P0Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-type prior probabilities with a global multiplier delta.
///
/// Types beyond the stored range (or with zero mass) have probability zero;
/// scoring them as novel yields -inf, the impossible-event value.
#[derive(Debug, Clone)]
pub struct BaseDistribution {
    probs: Vec<f64>,
    logp0: Vec<f64>,
    delta: f64,
}

impl BaseDistribution {
    /// Frequency base: P0(y) = count(y) / total.
    pub fn from_counts(counts: &TypeCounts, vocab_size: usize, delta: f64) -> Result<Self, PdError> {
        let total = counts.total();
        if total == 0 {
            return Err(PdError::EmptyBase);
        }
        let mut probs = vec![0.0; vocab_size.max(counts.entries().last().map_or(0, |&(id, _)| id as usize + 1))];
        for (id, c) in counts.iter() {
            probs[id as usize] = c as f64 / total as f64;
        }
        Self::from_probs_unnormalized(probs, delta)
    }

    /// Explicit probabilities; must sum to 1 over the vocabulary.
    pub fn from_probs(probs: Vec<f64>, delta: f64) -> Result<Self, PdError> {
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(PdError::BadNormalization(sum));
        }
        Self::from_probs_unnormalized(probs, delta)
    }

    /// Explicit probabilities without the sum-to-one check (useful when the
    /// prior has deliberately been scaled).
    pub fn from_probs_unnormalized(probs: Vec<f64>, delta: f64) -> Result<Self, PdError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(PdError::BadDelta(delta));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(PdError::NegativeProbability);
        }
        let logp0 = probs
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        Ok(BaseDistribution {
            probs,
            logp0,
            delta,
        })
    }

    #[inline]
    pub fn p0(&self, ty: TypeId) -> f64 {
        self.probs.get(ty as usize).copied().unwrap_or(0.0)
    }

    #[inline]
    pub fn logp0(&self, ty: TypeId) -> f64 {
        self.logp0
            .get(ty as usize)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn set_delta(&mut self, delta: f64) -> Result<(), PdError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(PdError::BadDelta(delta));
        }
        self.delta = delta;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// P0 mass sitting on the given types (summed in ascending id order).
    pub fn seen_mass(&self, counts: &TypeCounts) -> f64 {
        counts.iter().map(|(id, _)| self.p0(id)).sum()
    }
}

/// Log of the author-excluded renormalizer, ln(1 / P(A^C)), where A^C is
/// the set of types absent from the author's training counts.
///
/// Returns `None` when the author's types cover (numerically) the whole
/// prior mass; callers fall back to the global strategy in that case.
pub fn author_excluded_log_normalizer(
    base: &BaseDistribution,
    author_counts: &TypeCounts,
) -> Option<f64> {
    let seen = base.seen_mass(author_counts);
    let complement = 1.0 - seen;
    if complement <= 0.0 {
        return None;
    }
    Some(-complement.ln())
}

/// History-dependent base per a fixed set of already-seen types: seen types
/// have probability zero, unseen ones are renormalized over the remainder.
pub struct HistoryBase<'a> {
    base: &'a BaseDistribution,
    seen: &'a TypeCounts,
    log_normalizer: f64,
}

/// Build the history-dependent view of a base distribution. Errors when the
/// seen set already covers all prior mass.
pub fn base_history<'a>(
    base: &'a BaseDistribution,
    seen: &'a TypeCounts,
) -> Result<HistoryBase<'a>, PdError> {
    let mass = base.seen_mass(seen);
    let complement = 1.0 - mass;
    if complement <= 0.0 {
        return Err(PdError::ExhaustedBase);
    }
    Ok(HistoryBase {
        base,
        seen,
        log_normalizer: -complement.ln(),
    })
}

impl HistoryBase<'_> {
    pub fn p0(&self, ty: TypeId) -> f64 {
        if self.seen.contains(ty) {
            0.0
        } else {
            self.base.p0(ty) * self.log_normalizer.exp()
        }
    }

    pub fn logp0(&self, ty: TypeId) -> f64 {
        if self.seen.contains(ty) {
            f64::NEG_INFINITY
        } else {
            self.base.logp0(ty) + self.log_normalizer
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_base() {
        let counts = TypeCounts::from_entries(vec![(0, 3), (1, 1)]);
        let base = BaseDistribution::from_counts(&counts, 2, 1.0).unwrap();
        assert!((base.p0(0) - 0.75).abs() < 1e-15);
        assert!((base.p0(1) - 0.25).abs() < 1e-15);
        assert_eq!(base.p0(5), 0.0);
        assert_eq!(base.logp0(5), f64::NEG_INFINITY);
        let total: f64 = base.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_counts_make_uniform_base() {
        let counts = TypeCounts::from_entries(vec![(0, 4), (1, 4), (2, 4)]);
        let base = BaseDistribution::from_counts(&counts, 3, 1.0).unwrap();
        for ty in 0..3 {
            assert!((base.p0(ty) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn explicit_base_checks_normalization() {
        assert!(BaseDistribution::from_probs(vec![0.5, 0.2], 1.0).is_err());
        assert!(BaseDistribution::from_probs(vec![0.5, 0.5], 0.0).is_err());
        assert!(BaseDistribution::from_probs(vec![0.5, 0.5], -1.0).is_err());
        assert!(BaseDistribution::from_probs(vec![0.7, 0.3], 2.0).is_ok());
    }

    #[test]
    fn author_excluded_renormalizes() {
        let base = BaseDistribution::from_probs(vec![0.5, 0.3, 0.2], 1.0).unwrap();
        let author = TypeCounts::from_entries(vec![(0, 7)]);
        let norm = author_excluded_log_normalizer(&base, &author).unwrap();
        // remaining mass 0.5 -> types b, c rescale to 0.6 and 0.4
        assert!((base.logp0(1) + norm - 0.6f64.ln()).abs() < 1e-12);
        assert!((base.logp0(2) + norm - 0.4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn author_with_no_types_is_identity() {
        let base = BaseDistribution::from_probs(vec![0.5, 0.5], 1.0).unwrap();
        let norm = author_excluded_log_normalizer(&base, &TypeCounts::default()).unwrap();
        assert_eq!(norm, 0.0);
    }

    #[test]
    fn full_coverage_triggers_fallback() {
        let base = BaseDistribution::from_probs(vec![0.5, 0.5], 1.0).unwrap();
        let author = TypeCounts::from_entries(vec![(0, 1), (1, 2)]);
        assert!(author_excluded_log_normalizer(&base, &author).is_none());
    }

    #[test]
    fn history_base_examples() {
        let base = BaseDistribution::from_probs(vec![0.25; 4], 1.0).unwrap();
        // nothing seen: identical to the base
        let empty = TypeCounts::default();
        let h = base_history(&base, &empty).unwrap();
        assert!((h.p0(2) - 0.25).abs() < 1e-12);
        // one of four uniform types seen: the rest are each 1/3
        let seen = TypeCounts::from_entries(vec![(1, 3)]);
        let h = base_history(&base, &seen).unwrap();
        assert!((h.p0(0) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(h.p0(1), 0.0);
        assert_eq!(h.logp0(1), f64::NEG_INFINITY);
        // seen set covering everything errors
        let all = TypeCounts::from_entries(vec![(0, 1), (1, 1), (2, 1), (3, 1)]);
        assert!(base_history(&base, &all).is_err());
    }
}
