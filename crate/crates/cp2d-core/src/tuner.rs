//! Hyperparameter selection and cross-validated evaluation.
//!
//! Five hyperparameters are tuned on training data: token kind, base
//! strategy, fragment length, attribution criterion, and the novelty
//! multiplier delta. The search runs in two stages: a coarse pass over the
//! full cross product with a small fragment-length set, then a refinement
//! of the fragment length alone with everything else frozen.
//!
//! Scores are computed once at delta = 1; the whole delta curve comes from
//! adding `new_types * ln(delta)` per (fragment, author) cell, so the sweep
//! costs nothing beyond re-aggregation. The validation scheme follows the
//! corpus size: leave-one-out for small corpora, the mean over nine
//! stratified folds for large ones, a single fold for very large ones.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{fragment, score_grid, Criterion, FragmentLength, ScoreGrid};
use crate::corpus::{Corpus, SplitManifest};
use crate::estimator::{fit_author, FitReport};
use crate::metrics::{accuracy, ConfusionCounts};
use crate::pdmodel::{
    author_excluded_log_normalizer, AuthorProfile, BaseDistribution, P0Strategy,
};
use crate::tokenizer::{
    tokenize_corpus, MultiplicitySpectrum, TokenizeError, TokenizedCorpus, TokenizerSpec,
    TypeCounts,
};

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("delta values must be positive, got {0}")]
    BadDelta(f64),
    #[error("search grids must not be empty")]
    EmptyGrid,
    #[error("no documents to evaluate")]
    NoDocs,
    #[error("training set must contain at least 2 documents per author; author {0} has {1}")]
    TooFewDocs(String, usize),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("base distribution failed: {0}")]
    Base(#[from] crate::pdmodel::PdError),
}

/// One point in hyperparameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub tokenizer: TokenizerSpec,
    pub p0_strategy: P0Strategy,
    pub fragment_length: FragmentLength,
    pub criterion: Criterion,
    pub delta: f64,
}

/// The grids the search walks. Order matters: ties resolve toward earlier
/// entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrids {
    pub tokenizers: Vec<TokenizerSpec>,
    pub p0_strategies: Vec<P0Strategy>,
    pub coarse_fragments: Vec<FragmentLength>,
    pub refine_fragments: Vec<FragmentLength>,
    pub criteria: Vec<Criterion>,
    pub deltas: Vec<f64>,
}

impl Default for SearchGrids {
    fn default() -> Self {
        SearchGrids {
            tokenizers: vec![TokenizerSpec::Osf { n: 5 }, TokenizerSpec::Words],
            p0_strategies: vec![P0Strategy::Global, P0Strategy::AuthorExcluded],
            coarse_fragments: vec![
                FragmentLength::Tokens(10),
                FragmentLength::Tokens(100),
                FragmentLength::Tokens(1000),
                FragmentLength::FullDocument,
            ],
            refine_fragments: refine_fragment_grid(),
            criteria: vec![Criterion::Ml, Criterion::Majority],
            deltas: default_delta_grid(),
        }
    }
}

impl SearchGrids {
    fn validate(&self) -> Result<(), TunerError> {
        if self.tokenizers.is_empty()
            || self.p0_strategies.is_empty()
            || self.coarse_fragments.is_empty()
            || self.criteria.is_empty()
            || self.deltas.is_empty()
        {
            return Err(TunerError::EmptyGrid);
        }
        if let Some(&d) = self.deltas.iter().find(|&&d| !(d > 0.0)) {
            return Err(TunerError::BadDelta(d));
        }
        Ok(())
    }
}

/// 31 log-spaced deltas over [1e-2, 1e1]; the midpoint is exactly 1.
pub fn default_delta_grid() -> Vec<f64> {
    (0..31)
        .map(|j| 10f64.powf((j as f64 - 20.0) / 10.0))
        .collect()
}

/// Nine lengths log-spaced from 1 to 10^4 tokens, plus full documents.
pub fn refine_fragment_grid() -> Vec<FragmentLength> {
    [1u64, 3, 10, 32, 100, 316, 1000, 3162, 10000]
        .into_iter()
        .map(FragmentLength::Tokens)
        .chain(std::iter::once(FragmentLength::FullDocument))
        .collect()
}

/// How hyperparameters are validated inside a training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationScheme {
    LeaveOneOut,
    NineFold,
    SingleFold,
}

impl ValidationScheme {
    /// Thresholds by corpus size: leave-one-out below 1,000 documents,
    /// nine-fold below 100,000, a single fold beyond.
    pub fn for_corpus_size(n_docs: usize) -> Self {
        if n_docs < 1_000 {
            ValidationScheme::LeaveOneOut
        } else if n_docs < 100_000 {
            ValidationScheme::NineFold
        } else {
            ValidationScheme::SingleFold
        }
    }
}

/// A document's delta-1 score grid plus its true author, the unit the
/// public delta sweep consumes.
#[derive(Debug, Clone)]
pub struct DocScores {
    pub grid: ScoreGrid,
    pub truth: String,
}

/// Accuracy as a function of delta, with the best point under the
/// fixed tie-break (closest to delta = 1, then smaller).
#[derive(Debug, Clone, Serialize)]
pub struct DeltaCurve {
    pub points: Vec<(f64, f64)>,
    pub best_delta: f64,
    pub best_accuracy: f64,
}

impl DeltaCurve {
    fn from_points(points: Vec<(f64, f64)>) -> Self {
        let mut best = 0;
        for i in 1..points.len() {
            let (d, a) = points[i];
            let (bd, ba) = points[best];
            if a > ba
                || (a == ba && (d.ln().abs() < bd.ln().abs()
                    || (d.ln().abs() == bd.ln().abs() && d < bd)))
            {
                best = i;
            }
        }
        DeltaCurve {
            best_delta: points[best].0,
            best_accuracy: points[best].1,
            points,
        }
    }
}

/// Winning author index of one grid at a given delta.
fn choose(grid: &ScoreGrid, criterion: Criterion, ln_delta: f64) -> usize {
    let n_authors = grid.authors.len();
    match criterion {
        Criterion::Ml => {
            let mut best = 0usize;
            let mut best_total = f64::NEG_INFINITY;
            for a in 0..n_authors {
                let mut total = 0.0;
                for (row, counts) in grid.scores.iter().zip(&grid.new_types) {
                    total += row[a] + counts[a] as f64 * ln_delta;
                }
                if total > best_total || (total == best_total && grid.authors[a] < grid.authors[best])
                {
                    best = a;
                    best_total = total;
                }
            }
            best
        }
        Criterion::Majority => {
            let mut tally = vec![0usize; n_authors];
            let mut totals = vec![0.0f64; n_authors];
            for (row, counts) in grid.scores.iter().zip(&grid.new_types) {
                let mut winner = 0usize;
                let mut winner_score = f64::NEG_INFINITY;
                for a in 0..n_authors {
                    let s = row[a] + counts[a] as f64 * ln_delta;
                    totals[a] += s;
                    if s > winner_score
                        || (s == winner_score && grid.authors[a] < grid.authors[winner])
                    {
                        winner = a;
                        winner_score = s;
                    }
                }
                tally[winner] += 1;
            }
            let best_votes = *tally.iter().max().unwrap_or(&0);
            let mut best: Option<usize> = None;
            for a in 0..n_authors {
                if tally[a] != best_votes {
                    continue;
                }
                best = Some(match best {
                    None => a,
                    Some(b) => {
                        if totals[a] > totals[b]
                            || (totals[a] == totals[b] && grid.authors[a] < grid.authors[b])
                        {
                            a
                        } else {
                            b
                        }
                    }
                });
            }
            best.unwrap_or(0)
        }
    }
}

/// Sweep delta over pre-computed delta-1 grids: for each delta the scores
/// are shifted by `new_types * ln(delta)`, re-aggregated, and scored for
/// accuracy. Nothing is re-derived from the texts.
pub fn delta_sweep(
    docs: &[DocScores],
    deltas: &[f64],
    criterion: Criterion,
) -> Result<DeltaCurve, TunerError> {
    if docs.is_empty() {
        return Err(TunerError::NoDocs);
    }
    if let Some(&d) = deltas.iter().find(|&&d| !(d > 0.0)) {
        return Err(TunerError::BadDelta(d));
    }
    let points = deltas
        .iter()
        .map(|&delta| {
            let ln_delta = delta.ln();
            let correct = docs
                .iter()
                .filter(|doc| {
                    let winner = choose(&doc.grid, criterion, ln_delta);
                    doc.grid.authors[winner] == doc.truth
                })
                .count();
            (delta, correct as f64 / docs.len() as f64)
        })
        .collect();
    Ok(DeltaCurve::from_points(points))
}

/// One evaluated combination (everything but delta fixed) and its curve.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub config: HyperConfig,
    pub accuracy: f64,
    pub delta_curve: Vec<(f64, f64)>,
}

/// Outcome of one search stage.
#[derive(Debug, Clone, Serialize)]
pub struct SearchReport {
    pub best: HyperConfig,
    pub validation_accuracy: f64,
    pub trace: Vec<TraceEntry>,
    pub ties: Vec<HyperConfig>,
}

/// Corpus plus everything derivable from it that searches reuse: one
/// tokenization and one frequency base per token spec, both built over the
/// full corpus so every fold shares the same vocabulary layout.
pub struct SearchContext<'a> {
    pub corpus: &'a Corpus,
    pub seed: u64,
    tokenized: HashMap<TokenizerSpec, TokenizedCorpus>,
    bases: HashMap<TokenizerSpec, BaseDistribution>,
}

impl<'a> SearchContext<'a> {
    pub fn new(
        corpus: &'a Corpus,
        specs: &[TokenizerSpec],
        seed: u64,
    ) -> Result<Self, TunerError> {
        let mut tokenized = HashMap::new();
        let mut bases = HashMap::new();
        for spec in specs {
            if tokenized.contains_key(spec) {
                continue;
            }
            let tc = tokenize_corpus(corpus, spec)?;
            let base =
                BaseDistribution::from_counts(&tc.total_counts, tc.vocab.len(), 1.0)?;
            tokenized.insert(*spec, tc);
            bases.insert(*spec, base);
        }
        Ok(SearchContext {
            corpus,
            seed,
            tokenized,
            bases,
        })
    }

    pub fn tokenized(&self, spec: &TokenizerSpec) -> &TokenizedCorpus {
        &self.tokenized[spec]
    }

    pub fn base(&self, spec: &TokenizerSpec) -> &BaseDistribution {
        &self.bases[spec]
    }
}

/// Per-author training state under one tokenizer.
struct TrainModel {
    authors: Vec<String>,
    counts: Vec<Arc<TypeCounts>>,
    params: Vec<crate::pdmodel::AuthorParams>,
    fits: Vec<FitReport>,
}

fn train_model(corpus: &Corpus, tc: &TokenizedCorpus, train_docs: &[usize]) -> TrainModel {
    let mut by_author: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &d in train_docs {
        by_author
            .entry(corpus.documents[d].author.as_str())
            .or_default()
            .push(d);
    }
    let entries: Vec<(String, Vec<usize>)> = by_author
        .into_iter()
        .map(|(a, mut docs)| {
            docs.sort_unstable();
            (a.to_string(), docs)
        })
        .collect();
    let fitted: Vec<(Arc<TypeCounts>, FitReport)> = entries
        .par_iter()
        .map(|(_, docs)| {
            let mut counts = TypeCounts::default();
            for &d in docs {
                counts.merge(tc.streams[d].counts());
            }
            let report = fit_author(&MultiplicitySpectrum::from_counts(&counts));
            (Arc::new(counts), report)
        })
        .collect();
    TrainModel {
        authors: entries.into_iter().map(|(a, _)| a).collect(),
        counts: fitted.iter().map(|(c, _)| c.clone()).collect(),
        params: fitted.iter().map(|(_, r)| r.params).collect(),
        fits: fitted.into_iter().map(|(_, r)| r).collect(),
    }
}

/// Build scoring profiles for one strategy. Authors whose training counts
/// cover the entire prior mass fall back to the global strategy
/// (normalizer 0); their names are returned for reporting.
fn profiles_for(
    model: &TrainModel,
    strategy: P0Strategy,
    base: &BaseDistribution,
) -> (Vec<AuthorProfile>, Vec<String>) {
    let mut fallbacks = Vec::new();
    let profiles = model
        .authors
        .iter()
        .zip(&model.counts)
        .zip(&model.params)
        .map(|((author, counts), &params)| {
            let normalizer = match strategy {
                P0Strategy::Global => 0.0,
                P0Strategy::AuthorExcluded => {
                    match author_excluded_log_normalizer(base, counts) {
                        Some(n) => n,
                        None => {
                            fallbacks.push(author.clone());
                            0.0
                        }
                    }
                }
            };
            AuthorProfile::new(author.clone(), params, counts.clone(), normalizer)
        })
        .collect();
    (profiles, fallbacks)
}

/// Public profile-fitting entry point used by the fit/attribute pipeline.
pub fn fit_profiles(
    corpus: &Corpus,
    tc: &TokenizedCorpus,
    train_docs: &[usize],
    strategy: P0Strategy,
    base: &BaseDistribution,
) -> (Vec<AuthorProfile>, Vec<(String, FitReport)>, Vec<String>) {
    let model = train_model(corpus, tc, train_docs);
    let (profiles, fallbacks) = profiles_for(&model, strategy, base);
    let fits = model
        .authors
        .iter()
        .cloned()
        .zip(model.fits.iter().copied())
        .collect();
    (profiles, fits, fallbacks)
}

/// Correctness flags of one document: [strategy][fragment][criterion][delta].
type CorrectFlags = Vec<Vec<Vec<Vec<bool>>>>;

#[allow(clippy::too_many_arguments)]
fn doc_correct_flags(
    tc: &TokenizedCorpus,
    base: &BaseDistribution,
    profiles_per_strategy: &[Vec<AuthorProfile>],
    doc: usize,
    truth: &str,
    f_lengths: &[FragmentLength],
    criteria: &[Criterion],
    deltas: &[f64],
) -> CorrectFlags {
    let stream = &tc.streams[doc];
    let mut out: CorrectFlags = vec![
        vec![vec![vec![false; deltas.len()]; criteria.len()]; f_lengths.len()];
        profiles_per_strategy.len()
    ];
    if stream.is_empty() {
        return out;
    }
    for (fi, &f_len) in f_lengths.iter().enumerate() {
        let fragments = fragment(stream, f_len).expect("validated fragment length");
        for (si, profiles) in profiles_per_strategy.iter().enumerate() {
            let grid = score_grid(&fragments, profiles, base);
            for (ci, &criterion) in criteria.iter().enumerate() {
                for (di, &delta) in deltas.iter().enumerate() {
                    let winner = choose(&grid, criterion, delta.ln());
                    out[si][fi][ci][di] = grid.authors[winner] == truth;
                }
            }
        }
    }
    out
}

/// Validation units: (training docs implied, eval doc, group id). For
/// leave-one-out each unit refits only the held-out document's author.
enum ValidationPlan {
    Loo,
    Grouped(Vec<(Vec<usize>, Vec<usize>)>),
}

fn validation_plan(
    corpus: &Corpus,
    train_docs: &[usize],
    scheme: ValidationScheme,
    seed: u64,
) -> ValidationPlan {
    match scheme {
        ValidationScheme::LeaveOneOut => ValidationPlan::Loo,
        ValidationScheme::NineFold | ValidationScheme::SingleFold => {
            let k = 9;
            let assignment = inner_stratified_assignment(corpus, train_docs, k, seed);
            let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
            let fold_range = if scheme == ValidationScheme::SingleFold { 0..1 } else { 0..k };
            for fold in fold_range {
                let eval: Vec<usize> = train_docs
                    .iter()
                    .copied()
                    .filter(|d| assignment[d] == fold)
                    .collect();
                let train: Vec<usize> = train_docs
                    .iter()
                    .copied()
                    .filter(|d| assignment[d] != fold)
                    .collect();
                if !eval.is_empty() && !train.is_empty() {
                    groups.push((train, eval));
                }
            }
            ValidationPlan::Grouped(groups)
        }
    }
}

/// Stratified fold indices over a subset of documents (used for the inner
/// validation folds).
fn inner_stratified_assignment(
    corpus: &Corpus,
    docs: &[usize],
    k: usize,
    seed: u64,
) -> HashMap<usize, usize> {
    let mut by_author: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &d in docs {
        by_author
            .entry(corpus.documents[d].author.as_str())
            .or_default()
            .push(d);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9));
    let mut assignment = HashMap::new();
    for (_, mut author_docs) in by_author {
        author_docs.sort_unstable_by(|&a, &b| corpus.documents[a].id.cmp(&corpus.documents[b].id));
        author_docs.shuffle(&mut rng);
        let offset = rng.gen_range(0..k);
        for (i, d) in author_docs.into_iter().enumerate() {
            assignment.insert(d, (offset + i) % k);
        }
    }
    assignment
}

/// Accuracy accumulator that averages per group first (mean of fold
/// accuracies), degenerating to plain pooled accuracy when every document
/// sits in group 0.
struct GroupedAccuracy {
    /// per group: (correct per [si][fi][ci][di] flattened, total docs)
    groups: BTreeMap<usize, (Vec<u64>, u64)>,
    dims: (usize, usize, usize, usize),
}

impl GroupedAccuracy {
    fn new(dims: (usize, usize, usize, usize)) -> Self {
        GroupedAccuracy {
            groups: BTreeMap::new(),
            dims,
        }
    }

    fn flat_len(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2 * self.dims.3
    }

    fn add(&mut self, group: usize, flags: &CorrectFlags) {
        let flat_len = self.flat_len();
        let entry = self
            .groups
            .entry(group)
            .or_insert_with(|| (vec![0u64; flat_len], 0));
        entry.1 += 1;
        let mut idx = 0;
        for si in flags {
            for fi in si {
                for ci in fi {
                    for &correct in ci {
                        if correct {
                            entry.0[idx] += 1;
                        }
                        idx += 1;
                    }
                }
            }
        }
    }

    /// accuracy[si][fi][ci][di] = mean over groups of per-group accuracy.
    fn accuracies(&self) -> Vec<f64> {
        let flat_len = self.flat_len();
        let mut out = vec![0.0; flat_len];
        let n_groups = self.groups.len().max(1) as f64;
        for (correct, total) in self.groups.values() {
            for (o, &c) in out.iter_mut().zip(correct.iter()) {
                *o += c as f64 / (*total).max(1) as f64 / n_groups;
            }
        }
        out
    }
}

/// Evaluate the full (strategy x fragment x criterion x delta) block for
/// one tokenizer under the chosen validation scheme.
#[allow(clippy::too_many_arguments)]
fn evaluate_block(
    ctx: &SearchContext,
    spec: &TokenizerSpec,
    train_docs: &[usize],
    scheme: ValidationScheme,
    strategies: &[P0Strategy],
    f_lengths: &[FragmentLength],
    criteria: &[Criterion],
    deltas: &[f64],
) -> Result<Vec<f64>, TunerError> {
    let tc = ctx.tokenized(spec);
    let base = ctx.base(spec);
    let corpus = ctx.corpus;
    let dims = (strategies.len(), f_lengths.len(), criteria.len(), deltas.len());
    let mut acc = GroupedAccuracy::new(dims);

    match validation_plan(corpus, train_docs, scheme, ctx.seed) {
        ValidationPlan::Loo => {
            let model = train_model(corpus, tc, train_docs);
            let base_profiles: Vec<Vec<AuthorProfile>> = strategies
                .iter()
                .map(|&s| profiles_for(&model, s, base).0)
                .collect();
            let author_index: HashMap<&str, usize> = model
                .authors
                .iter()
                .enumerate()
                .map(|(i, a)| (a.as_str(), i))
                .collect();
            let flags: Vec<CorrectFlags> = train_docs
                .par_iter()
                .map(|&doc| {
                    let truth = corpus.documents[doc].author.as_str();
                    let ai = author_index[truth];
                    // refit the held-out document's author without it
                    let mut reduced = (*model.counts[ai]).clone();
                    reduced.subtract(tc.streams[doc].counts());
                    let report = fit_author(&MultiplicitySpectrum::from_counts(&reduced));
                    let reduced = Arc::new(reduced);
                    let profiles_per_strategy: Vec<Vec<AuthorProfile>> = strategies
                        .iter()
                        .zip(&base_profiles)
                        .map(|(&strategy, baseline)| {
                            let normalizer = match strategy {
                                P0Strategy::Global => 0.0,
                                P0Strategy::AuthorExcluded => {
                                    author_excluded_log_normalizer(base, &reduced).unwrap_or(0.0)
                                }
                            };
                            let mut profiles = baseline.clone();
                            profiles[ai] = AuthorProfile::new(
                                model.authors[ai].clone(),
                                report.params,
                                reduced.clone(),
                                normalizer,
                            );
                            profiles
                        })
                        .collect();
                    doc_correct_flags(
                        tc,
                        base,
                        &profiles_per_strategy,
                        doc,
                        truth,
                        f_lengths,
                        criteria,
                        deltas,
                    )
                })
                .collect();
            for f in &flags {
                acc.add(0, f);
            }
        }
        ValidationPlan::Grouped(groups) => {
            for (group, (train, eval)) in groups.iter().enumerate() {
                let model = train_model(corpus, tc, train);
                let profiles_per_strategy: Vec<Vec<AuthorProfile>> = strategies
                    .iter()
                    .map(|&s| profiles_for(&model, s, base).0)
                    .collect();
                let known: std::collections::HashSet<&str> =
                    model.authors.iter().map(|a| a.as_str()).collect();
                let flags: Vec<CorrectFlags> = eval
                    .par_iter()
                    .map(|&doc| {
                        let truth = corpus.documents[doc].author.as_str();
                        if !known.contains(truth) {
                            // author absent from this inner-training split:
                            // unevaluable, count as incorrect
                            return vec![
                                vec![
                                    vec![vec![false; deltas.len()]; criteria.len()];
                                    f_lengths.len()
                                ];
                                strategies.len()
                            ];
                        }
                        doc_correct_flags(
                            tc,
                            base,
                            &profiles_per_strategy,
                            doc,
                            truth,
                            f_lengths,
                            criteria,
                            deltas,
                        )
                    })
                    .collect();
                for f in &flags {
                    acc.add(group, f);
                }
            }
        }
    }
    Ok(acc.accuracies())
}

fn curve_from_flat(
    flat: &[f64],
    dims: (usize, usize, usize, usize),
    si: usize,
    fi: usize,
    ci: usize,
    deltas: &[f64],
) -> DeltaCurve {
    let (_, nf, nc, nd) = dims;
    let offset = ((si * nf + fi) * nc + ci) * nd;
    let points = deltas
        .iter()
        .enumerate()
        .map(|(di, &d)| (d, flat[offset + di]))
        .collect();
    DeltaCurve::from_points(points)
}

/// Stage one: exhaustively evaluate token kind x strategy x coarse fragment
/// lengths x criterion, sweeping delta in closed form for each combination.
pub fn coarse_search(
    ctx: &SearchContext,
    train_docs: &[usize],
    scheme: ValidationScheme,
    grids: &SearchGrids,
) -> Result<SearchReport, TunerError> {
    grids.validate()?;
    if train_docs.is_empty() {
        return Err(TunerError::NoDocs);
    }
    let mut trace = Vec::new();
    for spec in &grids.tokenizers {
        let dims = (
            grids.p0_strategies.len(),
            grids.coarse_fragments.len(),
            grids.criteria.len(),
            grids.deltas.len(),
        );
        let flat = evaluate_block(
            ctx,
            spec,
            train_docs,
            scheme,
            &grids.p0_strategies,
            &grids.coarse_fragments,
            &grids.criteria,
            &grids.deltas,
        )?;
        for (si, &strategy) in grids.p0_strategies.iter().enumerate() {
            for (fi, &f_len) in grids.coarse_fragments.iter().enumerate() {
                for (ci, &criterion) in grids.criteria.iter().enumerate() {
                    let curve = curve_from_flat(&flat, dims, si, fi, ci, &grids.deltas);
                    trace.push(TraceEntry {
                        config: HyperConfig {
                            tokenizer: *spec,
                            p0_strategy: strategy,
                            fragment_length: f_len,
                            criterion,
                            delta: curve.best_delta,
                        },
                        accuracy: curve.best_accuracy,
                        delta_curve: curve.points,
                    });
                }
            }
        }
    }
    Ok(report_from_trace(trace))
}

fn report_from_trace(trace: Vec<TraceEntry>) -> SearchReport {
    let best_accuracy = trace
        .iter()
        .map(|t| t.accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<HyperConfig> = trace
        .iter()
        .filter(|t| t.accuracy == best_accuracy)
        .map(|t| t.config.clone())
        .collect();
    // ties resolve toward the earlier grid entry
    let best = ties.first().cloned().expect("nonempty trace");
    SearchReport {
        best,
        validation_accuracy: best_accuracy,
        trace,
        ties,
    }
}

/// Stage two: with token kind, strategy, criterion, and delta frozen from
/// the coarse winner, re-evaluate the fragment length over the fine grid.
/// Ties resolve toward full documents, then toward longer fragments.
pub fn refine_fragment_length(
    ctx: &SearchContext,
    train_docs: &[usize],
    scheme: ValidationScheme,
    fixed: &HyperConfig,
    fragments: &[FragmentLength],
) -> Result<SearchReport, TunerError> {
    if train_docs.is_empty() {
        return Err(TunerError::NoDocs);
    }
    if fragments.is_empty() {
        return Err(TunerError::EmptyGrid);
    }
    let deltas = [fixed.delta];
    let dims = (1, fragments.len(), 1, 1);
    let flat = evaluate_block(
        ctx,
        &fixed.tokenizer,
        train_docs,
        scheme,
        &[fixed.p0_strategy],
        fragments,
        &[fixed.criterion],
        &deltas,
    )?;
    let mut trace = Vec::new();
    for (fi, &f_len) in fragments.iter().enumerate() {
        let curve = curve_from_flat(&flat, dims, 0, fi, 0, &deltas);
        trace.push(TraceEntry {
            config: HyperConfig {
                fragment_length: f_len,
                ..fixed.clone()
            },
            accuracy: curve.best_accuracy,
            delta_curve: curve.points,
        });
    }
    let best_accuracy = trace
        .iter()
        .map(|t| t.accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<HyperConfig> = trace
        .iter()
        .filter(|t| t.accuracy == best_accuracy)
        .map(|t| t.config.clone())
        .collect();
    let best = ties
        .iter()
        .max_by_key(|c| match c.fragment_length {
            FragmentLength::FullDocument => (1, u64::MAX),
            FragmentLength::Tokens(n) => (0, n),
        })
        .cloned()
        .expect("nonempty ties");
    Ok(SearchReport {
        best,
        validation_accuracy: best_accuracy,
        trace,
        ties,
    })
}

/// Both stages; returns (coarse report, refine report). The refined best is
/// the final configuration.
pub fn two_stage_search(
    ctx: &SearchContext,
    train_docs: &[usize],
    scheme: ValidationScheme,
    grids: &SearchGrids,
) -> Result<(SearchReport, SearchReport), TunerError> {
    let coarse = coarse_search(ctx, train_docs, scheme, grids)?;
    let refine = refine_fragment_length(
        ctx,
        train_docs,
        scheme,
        &coarse.best,
        &grids.refine_fragments,
    )?;
    Ok((coarse, refine))
}

/// Cross-validation driver options.
#[derive(Debug, Clone)]
pub struct CrossvalOptions {
    pub k: usize,
    pub seed: u64,
    /// `None` runs the two-stage search; `Some` uses fixed hyperparameters.
    pub fixed: Option<HyperConfig>,
    /// With fixed hyperparameters, still optimize delta on the training
    /// side (the delta grid comes from `grids`).
    pub sweep_delta: bool,
    pub grids: SearchGrids,
}

impl Default for CrossvalOptions {
    fn default() -> Self {
        CrossvalOptions {
            k: 10,
            seed: 0,
            fixed: None,
            sweep_delta: false,
            grids: SearchGrids::default(),
        }
    }
}

/// Per-fold outcome: the selected configuration, its validation reports,
/// and the held-out test accuracy.
#[derive(Debug, Clone, Serialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub config: HyperConfig,
    pub validation_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coarse: Option<SearchReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine: Option<SearchReport>,
    pub test_accuracy: f64,
    /// (document id, true author, chosen author)
    pub predictions: Vec<(String, String, String)>,
}

/// The full cross-validated run.
#[derive(Debug, Clone, Serialize)]
pub struct CrossvalReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldOutcome>,
    pub mean_test_accuracy: f64,
}

impl CrossvalReport {
    pub fn pooled_predictions(&self) -> Vec<(String, String)> {
        self.folds
            .iter()
            .flat_map(|f| f.predictions.iter().map(|(_, t, p)| (t.clone(), p.clone())))
            .collect()
    }

    pub fn confusion(&self) -> ConfusionCounts {
        ConfusionCounts::from_predictions(&self.pooled_predictions())
    }
}

/// Score and attribute a set of documents against training profiles.
fn test_outcome(
    ctx: &SearchContext,
    config: &HyperConfig,
    train: &[usize],
    test: &[usize],
) -> Result<(f64, Vec<(String, String, String)>), TunerError> {
    let tc = ctx.tokenized(&config.tokenizer);
    let base = ctx.base(&config.tokenizer);
    let model = train_model(ctx.corpus, tc, train);
    let (profiles, _) = profiles_for(&model, config.p0_strategy, base);
    let ln_delta = config.delta.ln();
    let predictions: Vec<(String, String, String)> = test
        .par_iter()
        .map(|&doc| {
            let d = &ctx.corpus.documents[doc];
            let fragments = fragment(&tc.streams[doc], config.fragment_length)
                .expect("validated fragment length");
            let chosen = if fragments.is_empty() {
                // untokenizable document: deterministic first author
                profiles.first().map(|p| p.author.clone()).unwrap_or_default()
            } else {
                let grid = score_grid(&fragments, &profiles, base);
                let winner = choose(&grid, config.criterion, ln_delta);
                grid.authors[winner].clone()
            };
            (d.id.clone(), d.author.clone(), chosen)
        })
        .collect();
    let pairs: Vec<(String, String)> = predictions
        .iter()
        .map(|(_, t, p)| (t.clone(), p.clone()))
        .collect();
    Ok((accuracy(&pairs).map_err(|_| TunerError::NoDocs)?, predictions))
}

/// Stratified k-fold cross-validation: per fold, select hyperparameters on
/// the training side (or take the fixed ones), then fit on the whole
/// training side and score the held-out fold.
pub fn crossval(corpus: &Corpus, options: &CrossvalOptions) -> Result<CrossvalReport, TunerError> {
    let plan = crate::corpus::stratified_folds(corpus, options.k, options.seed)?;
    let specs: Vec<TokenizerSpec> = match &options.fixed {
        Some(c) => vec![c.tokenizer],
        None => options.grids.tokenizers.clone(),
    };
    let ctx = SearchContext::new(corpus, &specs, options.seed)?;
    let scheme = ValidationScheme::for_corpus_size(corpus.len());
    let mut folds = Vec::new();
    for fold in 0..options.k {
        let (train, test) = plan.split(corpus, fold);
        if test.is_empty() {
            continue;
        }
        let outcome = run_fold(&ctx, options, scheme, fold, &train, &test)?;
        folds.push(outcome);
    }
    if folds.is_empty() {
        return Err(TunerError::NoDocs);
    }
    let mean = folds.iter().map(|f| f.test_accuracy).sum::<f64>() / folds.len() as f64;
    Ok(CrossvalReport {
        k: options.k,
        seed: options.seed,
        folds,
        mean_test_accuracy: mean,
    })
}

fn run_fold(
    ctx: &SearchContext,
    options: &CrossvalOptions,
    scheme: ValidationScheme,
    fold: usize,
    train: &[usize],
    test: &[usize],
) -> Result<FoldOutcome, TunerError> {
    let (config, validation_accuracy, coarse, refine) = match &options.fixed {
        Some(fixed) => {
            if options.sweep_delta {
                let deltas = &options.grids.deltas;
                let flat = evaluate_block(
                    ctx,
                    &fixed.tokenizer,
                    train,
                    scheme,
                    &[fixed.p0_strategy],
                    &[fixed.fragment_length],
                    &[fixed.criterion],
                    deltas,
                )?;
                let curve = curve_from_flat(&flat, (1, 1, 1, deltas.len()), 0, 0, 0, deltas);
                (
                    HyperConfig {
                        delta: curve.best_delta,
                        ..fixed.clone()
                    },
                    curve.best_accuracy,
                    None,
                    None,
                )
            } else {
                (fixed.clone(), f64::NAN, None, None)
            }
        }
        None => {
            let (coarse, refine) = two_stage_search(ctx, train, scheme, &options.grids)?;
            (
                refine.best.clone(),
                refine.validation_accuracy,
                Some(coarse),
                Some(refine),
            )
        }
    };
    let (test_accuracy, predictions) = test_outcome(ctx, &config, train, test)?;
    Ok(FoldOutcome {
        fold,
        config,
        validation_accuracy,
        coarse,
        refine,
        test_accuracy,
        predictions,
    })
}

/// Evaluation against an externally fixed train/validation/test split:
/// hyperparameters are selected on the validation set, the final model is
/// fitted on train + validation, and the test set is scored once.
pub fn fixed_split_eval(
    corpus: &Corpus,
    manifest: &SplitManifest,
    options: &CrossvalOptions,
) -> Result<CrossvalReport, TunerError> {
    let (train, validation, test) = manifest.partition(corpus)?;
    if test.is_empty() {
        return Err(TunerError::NoDocs);
    }
    let specs: Vec<TokenizerSpec> = match &options.fixed {
        Some(c) => vec![c.tokenizer],
        None => options.grids.tokenizers.clone(),
    };
    let ctx = SearchContext::new(corpus, &specs, options.seed)?;

    let eval_on_validation = |fixed: &HyperConfig,
                              deltas: &[f64]|
     -> Result<DeltaCurve, TunerError> {
        let tc = ctx.tokenized(&fixed.tokenizer);
        let base = ctx.base(&fixed.tokenizer);
        let model = train_model(corpus, tc, &train);
        let profiles: Vec<Vec<AuthorProfile>> =
            vec![profiles_for(&model, fixed.p0_strategy, base).0];
        let mut acc = GroupedAccuracy::new((1, 1, 1, deltas.len()));
        let flags: Vec<CorrectFlags> = validation
            .par_iter()
            .map(|&doc| {
                doc_correct_flags(
                    tc,
                    base,
                    &profiles,
                    doc,
                    ctx.corpus.documents[doc].author.as_str(),
                    &[fixed.fragment_length],
                    &[fixed.criterion],
                    deltas,
                )
            })
            .collect();
        for f in &flags {
            acc.add(0, f);
        }
        Ok(curve_from_flat(
            &acc.accuracies(),
            (1, 1, 1, deltas.len()),
            0,
            0,
            0,
            deltas,
        ))
    };

    let (config, validation_accuracy) = match &options.fixed {
        Some(fixed) if options.sweep_delta && !validation.is_empty() => {
            let curve = eval_on_validation(fixed, &options.grids.deltas)?;
            (
                HyperConfig {
                    delta: curve.best_delta,
                    ..fixed.clone()
                },
                curve.best_accuracy,
            )
        }
        Some(fixed) => (fixed.clone(), f64::NAN),
        None => {
            // full grid on the validation set
            let mut trace = Vec::new();
            for spec in &options.grids.tokenizers {
                for &strategy in &options.grids.p0_strategies {
                    for &f_len in &options.grids.coarse_fragments {
                        for &criterion in &options.grids.criteria {
                            let fixed = HyperConfig {
                                tokenizer: *spec,
                                p0_strategy: strategy,
                                fragment_length: f_len,
                                criterion,
                                delta: 1.0,
                            };
                            let curve = eval_on_validation(&fixed, &options.grids.deltas)?;
                            trace.push(TraceEntry {
                                config: HyperConfig {
                                    delta: curve.best_delta,
                                    ..fixed
                                },
                                accuracy: curve.best_accuracy,
                                delta_curve: curve.points,
                            });
                        }
                    }
                }
            }
            if trace.is_empty() {
                return Err(TunerError::EmptyGrid);
            }
            let report = report_from_trace(trace);
            (report.best.clone(), report.validation_accuracy)
        }
    };

    // final fit on train + validation
    let mut final_train = train.clone();
    final_train.extend_from_slice(&validation);
    final_train.sort_unstable();
    let (test_accuracy, predictions) = test_outcome(&ctx, &config, &final_train, &test)?;
    let fold = FoldOutcome {
        fold: 0,
        config,
        validation_accuracy,
        coarse: None,
        refine: None,
        test_accuracy,
        predictions,
    };
    Ok(CrossvalReport {
        k: 1,
        seed: options.seed,
        mean_test_accuracy: fold.test_accuracy,
        folds: vec![fold],
    })
}
