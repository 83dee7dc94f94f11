//! Two-parameter Poisson-Dirichlet sequence probabilities.
//!
//! A text T is scored as the continuation of an author sequence A through
//! the closed form
//!
//! ```text
//! P(T | A) = (theta + alpha D_A | alpha)_c / (theta + m)_n  *  prod_j Q_j
//!
//! Q_j = (1 - alpha)_{n_j^T - 1} * P0(y_j)   if y_j is new to A
//! Q_j = (n_j^A - alpha)_{n_j^T}             otherwise
//! ```
//!
//! where m and n are the token counts of A and T, D_A the distinct types of
//! A, and c the number of types of T absent from A. Everything is computed
//! in natural-log space; the novelty multiplier delta enters only as a final
//! `c * ln(delta)` term, so sweeping delta never re-evaluates the rest.
//!
//! The same step law (old type y with weight n_y - alpha, novelty with
//! weight theta + alpha D) is exposed as [`pd_step`] for chain-rule
//! evaluation; the closed form above is exactly the product of those steps,
//! which the tests exercise.

mod base;
mod profile;

pub use base::{
    author_excluded_log_normalizer, base_history, BaseDistribution, HistoryBase, P0Strategy,
};
pub use profile::{AuthorProfile, ProfileStore, StoreError, StoredAuthor, StoredBase};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{log_pochhammer_inc_unchecked, log_pochhammer_unchecked, ln_gamma};
use crate::tokenizer::{MultiplicitySpectrum, TypeCounts, TypeId};

/// Natural-log probability; `-inf` marks an impossible event.
pub type LogProb = f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdError {
    #[error("discount alpha must lie in [0, 1), got {0}")]
    BadAlpha(f64),
    #[error("concentration theta must exceed -alpha, got theta = {theta} with alpha = {alpha}")]
    BadTheta { alpha: f64, theta: f64 },
    #[error("delta must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("base distribution must sum to 1, got {0}")]
    BadNormalization(f64),
    #[error("base distribution has a negative or non-finite probability")]
    NegativeProbability,
    #[error("cannot build a base distribution from an empty corpus")]
    EmptyBase,
    #[error("the seen set already covers the full prior mass")]
    ExhaustedBase,
}

/// Discount and concentration of one author's process.
///
/// `alpha = 0` is the Dirichlet-process limit; the estimator itself only
/// ever produces values inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuthorParams {
    alpha: f64,
    theta: f64,
}

impl AuthorParams {
    pub fn new(alpha: f64, theta: f64) -> Result<Self, PdError> {
        if !alpha.is_finite() || !(0.0..1.0).contains(&alpha) {
            return Err(PdError::BadAlpha(alpha));
        }
        if !theta.is_finite() || theta <= -alpha {
            return Err(PdError::BadTheta { alpha, theta });
        }
        Ok(AuthorParams { alpha, theta })
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// A text's score against one author at delta = 1, plus the new-type count
/// that scales any other delta in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextScore {
    /// log P(T | A) evaluated with delta = 1.
    pub log_prob: LogProb,
    /// Number of types in T absent from A's training counts.
    pub new_types: u64,
}

impl TextScore {
    /// Score under a given novelty multiplier.
    #[inline]
    pub fn with_delta(&self, delta: f64) -> LogProb {
        if delta == 1.0 {
            self.log_prob
        } else {
            self.log_prob + self.new_types as f64 * delta.ln()
        }
    }
}

/// Shift a delta = 1 log probability to another delta.
pub fn apply_delta(logp_at_delta1: LogProb, new_types: u64, delta: f64) -> Result<LogProb, PdError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(PdError::BadDelta(delta));
    }
    Ok(TextScore {
        log_prob: logp_at_delta1,
        new_types,
    }
    .with_delta(delta))
}

/// log[(z)_n] for z > 0.
fn lp(z: f64, n: u64) -> f64 {
    log_pochhammer_unchecked(z, n)
}

/// log of (theta | alpha)_k / (theta)_n, valid over the whole parameter
/// domain alpha in [0, 1), theta > -alpha.
///
/// For theta <= 0 both rising factorials start with the same (possibly
/// negative) factor theta, which cancels; the remaining factors are shifted
/// into Gamma-friendly territory.
pub fn log_partition_ratio(alpha: f64, theta: f64, n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if n == 0 {
        return 0.0;
    }
    if alpha == 0.0 {
        // (theta | 0)_k = theta^k; theta > 0 is guaranteed by validation
        return k as f64 * theta.ln() - lp(theta, n);
    }
    if theta > 0.0 {
        k as f64 * alpha.ln() + lp(theta / alpha, k) - lp(theta, n)
    } else {
        // theta in (-alpha, 0]: cancel the leading theta factors
        debug_assert!(k >= 1);
        (k - 1) as f64 * alpha.ln() + (ln_gamma(theta / alpha + k as f64) - ln_gamma(theta / alpha + 1.0))
            - (ln_gamma(theta + n as f64) - ln_gamma(theta + 1.0))
    }
}

/// Joint log probability of a sequence with the given counts (exchangeable,
/// so only counts matter): partition part plus the P0 term of each distinct
/// type. Types with zero prior mass give -inf.
pub fn sequence_log_prob(
    params: &AuthorParams,
    counts: &TypeCounts,
    base: &BaseDistribution,
) -> LogProb {
    let spectrum = MultiplicitySpectrum::from_counts(counts);
    let mut total = log_partition_likelihood(params.alpha, params.theta, &spectrum);
    for (ty, _) in counts.iter() {
        total += base.logp0(ty) + base.delta().ln();
    }
    total
}

/// The P0-independent part of the sequence likelihood:
/// log[(theta | alpha)_k / (theta)_n * prod_j (1 - alpha)_{n_j - 1}].
///
/// This is the objective the parameter estimator climbs.
pub fn log_partition_likelihood(alpha: f64, theta: f64, spectrum: &MultiplicitySpectrum) -> f64 {
    let n = spectrum.total_tokens();
    let k = spectrum.total_types();
    let mut total = log_partition_ratio(alpha, theta, n, k);
    for (multiplicity, r) in spectrum.iter() {
        if multiplicity > 1 {
            total += r as f64 * lp(1.0 - alpha, multiplicity - 1);
        }
    }
    total
}

/// Running state of a sequential draw: per-type counts plus totals.
#[derive(Debug, Clone, Default)]
pub struct SeqState {
    counts: HashMap<TypeId, u64>,
    t: u64,
    d: u64,
}

impl SeqState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: &TypeCounts) -> Self {
        let mut map = HashMap::with_capacity(counts.entries().len());
        for (ty, c) in counts.iter() {
            map.insert(ty, c);
        }
        SeqState {
            t: counts.total(),
            d: counts.distinct(),
            counts: map,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn count(&self, ty: TypeId) -> u64 {
        self.counts.get(&ty).copied().unwrap_or(0)
    }

    pub fn record(&mut self, ty: TypeId) {
        let c = self.counts.entry(ty).or_insert(0);
        if *c == 0 {
            self.d += 1;
        }
        *c += 1;
        self.t += 1;
    }

    /// log of the total novelty mass (theta + alpha D) / (theta + t).
    /// The very first draw is surely new.
    pub fn log_new_mass(&self, params: &AuthorParams) -> f64 {
        if self.t == 0 {
            return 0.0;
        }
        let num = params.theta() + params.alpha() * self.d as f64;
        (num / (params.theta() + self.t as f64)).ln()
    }

    /// log probability of drawing the already-seen type y again:
    /// (n_y - alpha) / (theta + t).
    pub fn log_old(&self, params: &AuthorParams, ty: TypeId) -> f64 {
        let n_y = self.count(ty);
        debug_assert!(n_y > 0);
        ((n_y as f64 - params.alpha()) / (params.theta() + self.t as f64)).ln()
    }
}

/// One conditional step of the process: an old type costs its reinforcement
/// weight, a new one costs the novelty mass times delta * P0 (renormalized
/// by `log_normalizer` under the author-excluded strategy).
pub fn pd_step(
    params: &AuthorParams,
    state: &SeqState,
    ty: TypeId,
    base: &BaseDistribution,
    log_normalizer: f64,
) -> LogProb {
    if state.count(ty) > 0 {
        state.log_old(params, ty)
    } else {
        state.log_new_mass(params) + base.delta().ln() + base.logp0(ty) + log_normalizer
    }
}

/// Closed-form log P(T | A) at delta = 1, with the new-type count needed to
/// re-weight under any other delta.
///
/// `text` is the count multiset of the fragment or document being scored;
/// exchangeability makes the token order irrelevant.
pub fn score_counts(
    profile: &AuthorProfile,
    text: &TypeCounts,
    base: &BaseDistribution,
) -> TextScore {
    let alpha = profile.params.alpha();
    let theta = profile.params.theta();
    let n = text.total();

    let mut q_sum = 0.0;
    let mut new_types: u64 = 0;
    for (ty, c) in text.iter() {
        let author_count = profile.counts.get(ty);
        if author_count > 0 {
            // (n_j^A - alpha)_{n_j^T}
            q_sum += lp(author_count as f64 - alpha, c);
        } else {
            new_types += 1;
            // (1 - alpha)_{n_j^T - 1} * P0^(A)(y_j)
            if c > 1 {
                q_sum += lp(1.0 - alpha, c - 1);
            }
            q_sum += base.logp0(ty) + profile.base_normalizer;
        }
    }

    let lead = if profile.m > 0 {
        let denom = lp(theta + profile.m as f64, n);
        let head = if new_types == 0 {
            0.0
        } else if alpha == 0.0 {
            new_types as f64 * theta.ln()
        } else {
            log_pochhammer_inc_unchecked(theta + alpha * profile.d as f64, alpha, new_types)
        };
        head - denom
    } else {
        // empty reference sequence: the continuation is just the sequence
        // probability itself
        log_partition_ratio(alpha, theta, n, new_types)
    };

    TextScore {
        log_prob: lead + q_sum,
        new_types,
    }
}

/// log P(T | A) with the base's delta applied.
pub fn log_prob_text_given_author(
    profile: &AuthorProfile,
    text: &TypeCounts,
    base: &BaseDistribution,
) -> LogProb {
    score_counts(profile, text, base).with_delta(base.delta())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn params(alpha: f64, theta: f64) -> AuthorParams {
        AuthorParams::new(alpha, theta).unwrap()
    }

    fn worked_profile() -> (AuthorProfile, BaseDistribution, TypeCounts) {
        // A = [a, a, b], T = [a, c], alpha = 0.5, theta = 1, P0(c) = 0.1
        let author_counts = TypeCounts::from_entries(vec![(0, 2), (1, 1)]);
        let profile = AuthorProfile::new("A".into(), params(0.5, 1.0), author_counts, 0.0);
        let base = BaseDistribution::from_probs(vec![0.45, 0.45, 0.1], 1.0).unwrap();
        let text = TypeCounts::from_entries(vec![(0, 1), (2, 1)]);
        (profile, base, text)
    }

    #[test]
    fn params_validation() {
        assert!(AuthorParams::new(0.5, 1.0).is_ok());
        assert!(AuthorParams::new(0.0, 0.5).is_ok()); // Dirichlet limit
        assert!(AuthorParams::new(0.5, -0.4).is_ok()); // theta > -alpha
        assert!(AuthorParams::new(1.0, 1.0).is_err());
        assert!(AuthorParams::new(-0.1, 1.0).is_err());
        assert!(AuthorParams::new(0.5, -0.5).is_err());
        assert!(AuthorParams::new(0.5, f64::NAN).is_err());
    }

    #[test]
    fn worked_example_closed_form() {
        let (profile, base, text) = worked_profile();
        let score = score_counts(&profile, &text, &base);
        assert_eq!(score.new_types, 1);
        assert!((score.log_prob - 0.015f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn worked_example_chain_rule() {
        let (profile, base, text) = worked_profile();
        let p = params(0.5, 1.0);
        let mut state = SeqState::from_counts(&profile.counts);
        let mut total = 0.0;
        for (ty, c) in text.iter() {
            for _ in 0..c {
                total += pd_step(&p, &state, ty, &base, 0.0);
                state.record(ty);
            }
        }
        assert!((total - 0.015f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_repeat_step() {
        // T = [a] continuing A = [a]: (1 - alpha) / (theta + 1) = 0.25
        let author_counts = TypeCounts::from_entries(vec![(0, 1)]);
        let profile = AuthorProfile::new("A".into(), params(0.5, 1.0), author_counts, 0.0);
        let base = BaseDistribution::from_probs(vec![1.0], 1.0).unwrap();
        let text = TypeCounts::from_entries(vec![(0, 1)]);
        let score = score_counts(&profile, &text, &base);
        assert_eq!(score.new_types, 0);
        assert!((score.log_prob - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pd_step_worked_values() {
        let p = params(0.5, 1.0);
        let mut state = SeqState::new();
        // empty history: the first draw is new with probability one
        assert_eq!(state.log_new_mass(&p), 0.0);
        state.record(0);
        // history = [a]: repeat 0.25, novelty mass 0.75
        assert!((state.log_old(&p, 0) - 0.25f64.ln()).abs() < 1e-12);
        assert!((state.log_new_mass(&p) - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn impossible_new_type_scores_neg_infinity() {
        let (profile, base, _) = worked_profile();
        // type 5 is outside the base's support
        let text = TypeCounts::from_entries(vec![(5, 1)]);
        let score = score_counts(&profile, &text, &base);
        assert_eq!(score.log_prob, f64::NEG_INFINITY);
    }

    #[test]
    fn apply_delta_examples() {
        let adjusted = apply_delta(0.015f64.ln(), 1, 2.0).unwrap();
        assert!((adjusted - 0.030f64.ln()).abs() < 1e-12);
        assert_eq!(apply_delta(-3.5, 7, 1.0).unwrap(), -3.5);
        assert_eq!(apply_delta(-3.5, 0, 9.0).unwrap(), -3.5);
        assert!(apply_delta(-3.5, 1, 0.0).is_err());
        assert!(apply_delta(-3.5, 1, -2.0).is_err());
    }

    #[test]
    fn sequence_prob_single_token() {
        let base = BaseDistribution::from_probs(vec![0.3, 0.7], 1.0).unwrap();
        let counts = TypeCounts::from_entries(vec![(1, 1)]);
        let p = params(0.5, 1.0);
        assert!((sequence_log_prob(&p, &counts, &base) - 0.7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sequence_prob_pair() {
        // [a, a] with alpha = 0.5, theta = 1: partition part is 0.25
        let base = BaseDistribution::from_probs(vec![0.3, 0.7], 1.0).unwrap();
        let counts = TypeCounts::from_entries(vec![(0, 2)]);
        let p = params(0.5, 1.0);
        let spectrum = MultiplicitySpectrum::from_counts(&counts);
        let partition = log_partition_likelihood(0.5, 1.0, &spectrum);
        assert!((partition - 0.25f64.ln()).abs() < 1e-12);
        let full = sequence_log_prob(&p, &counts, &base);
        assert!((full - (0.3 * 0.25f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn partition_ratio_negative_theta_branch() {
        // consistency across the theta = 0 boundary via direct products
        for &(alpha, theta, n, k) in
            &[(0.6, -0.3, 5u64, 3u64), (0.5, 0.0, 4, 2), (0.9, -0.85, 7, 4)]
        {
            let got = log_partition_ratio(alpha, theta, n, k);
            // both products share the leading theta factor, which cancels
            let inc: f64 = (1..k).map(|i| theta + i as f64 * alpha).product();
            let plain: f64 = (1..n).map(|i| theta + i as f64).product();
            let expect = (inc / plain).ln();
            assert!(
                (got - expect).abs() < 1e-10,
                "alpha={alpha} theta={theta}: {got} vs {expect}"
            );
        }
    }

    /// Chain-rule oracle: continue the author counts token by token through
    /// the text and accumulate pd_step. Equals the closed form by the
    /// process' exchangeable construction.
    fn chain_rule_score(
        profile: &AuthorProfile,
        text_seq: &[TypeId],
        base: &BaseDistribution,
    ) -> f64 {
        let mut state = SeqState::from_counts(&profile.counts);
        let mut total = 0.0;
        for &ty in text_seq {
            total += pd_step(&profile.params, &state, ty, base, profile.base_normalizer);
            state.record(ty);
        }
        total
    }

    fn random_instance(
        rng: &mut ChaCha12Rng,
    ) -> (AuthorProfile, Vec<TypeId>, BaseDistribution) {
        let vocab_size = rng.gen_range(3..12usize);
        let alpha = rng.gen_range(0.05..0.95);
        let theta = rng.gen_range(0.1..100.0);
        let m = rng.gen_range(1..50usize);
        let n = rng.gen_range(1..50usize);
        let author_seq: Vec<TypeId> =
            (0..m).map(|_| rng.gen_range(0..vocab_size) as TypeId).collect();
        let text_seq: Vec<TypeId> =
            (0..n).map(|_| rng.gen_range(0..vocab_size) as TypeId).collect();
        let raw: Vec<f64> = (0..vocab_size).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let delta = rng.gen_range(0.2..3.0);
        let base = BaseDistribution::from_probs(probs, delta).unwrap();
        let author_counts = TypeCounts::from_sequence(&author_seq);
        let normalizer = author_excluded_log_normalizer(&base, &author_counts).unwrap_or(0.0);
        let profile = AuthorProfile::new(
            "A".into(),
            AuthorParams::new(alpha, theta).unwrap(),
            author_counts,
            if rng.gen_bool(0.5) { normalizer } else { 0.0 },
        );
        (profile, text_seq, base)
    }

    #[test]
    fn closed_form_matches_chain_rule() {
        let mut rng = ChaCha12Rng::seed_from_u64(0xC92D);
        for _ in 0..200 {
            let (profile, text_seq, base) = random_instance(&mut rng);
            let counts = TypeCounts::from_sequence(&text_seq);
            let closed = score_counts(&profile, &counts, &base).with_delta(base.delta());
            let chained = chain_rule_score(&profile, &text_seq, &base);
            assert!(
                (closed - chained).abs() < 1e-9,
                "closed={closed} chained={chained}"
            );
        }
    }

    #[test]
    fn empty_author_reduces_to_sequence_prob() {
        let base = BaseDistribution::from_probs(vec![0.25; 4], 1.0).unwrap();
        let profile = AuthorProfile::new("A".into(), params(0.4, 2.0), TypeCounts::default(), 0.0);
        let text_seq = vec![0, 1, 0, 2, 0];
        let counts = TypeCounts::from_sequence(&text_seq);
        let closed = score_counts(&profile, &counts, &base).log_prob;
        let seq = sequence_log_prob(&profile.params, &counts, &base);
        assert!((closed - seq).abs() < 1e-10);
        let chained = chain_rule_score(&profile, &text_seq, &base);
        assert!((closed - chained).abs() < 1e-10);
    }

    proptest! {
        // every step distribution sums to one: seen weights plus novelty mass
        #[test]
        fn step_normalization(
            seq in proptest::collection::vec(0u32..8, 1..40),
            alpha in 0.01f64..0.99,
            theta_raw in 0.0f64..20.0,
        ) {
            let theta = theta_raw - alpha * 0.9;
            let p = AuthorParams::new(alpha, theta).unwrap();
            let mut state = SeqState::new();
            for &ty in &seq {
                state.record(ty);
            }
            let counts = TypeCounts::from_sequence(&seq);
            let old_mass: f64 = counts.iter().map(|(ty, _)| state.log_old(&p, ty).exp()).sum();
            let total = old_mass + state.log_new_mass(&p).exp();
            prop_assert!((total - 1.0).abs() < 1e-12, "total={}", total);
        }

        // Eq. 2 depends only on counts, so permutations cannot change it
        #[test]
        fn exchangeability_is_exact(
            seq in proptest::collection::vec(0u32..6, 1..30),
            swap_seed in any::<u64>(),
        ) {
            let base = BaseDistribution::from_probs(vec![1.0 / 6.0; 6], 1.0).unwrap();
            let author = TypeCounts::from_entries(vec![(0, 3), (2, 1)]);
            let profile = AuthorProfile::new(
                "A".into(),
                AuthorParams::new(0.3, 2.0).unwrap(),
                author,
                0.0,
            );
            let mut shuffled = seq.clone();
            let mut rng = ChaCha12Rng::seed_from_u64(swap_seed);
            shuffled.shuffle(&mut rng);
            let a = score_counts(&profile, &TypeCounts::from_sequence(&seq), &base);
            let b = score_counts(&profile, &TypeCounts::from_sequence(&shuffled), &base);
            prop_assert_eq!(a.log_prob.to_bits(), b.log_prob.to_bits());
            prop_assert_eq!(a.new_types, b.new_types);
        }
    }
}
