//! Fragment-level scoring and document-level attribution.
//!
//! The anonymous text is cut into consecutive fragments of F tokens (the
//! trailing remainder is kept), every (fragment, author) pair is scored
//! independently, and the document goes to one author under one of two
//! criteria: Maximum Likelihood sums the fragment log-probabilities per
//! author (the joint over independent fragments), Majority Rule lets each
//! fragment vote for its best author. Tie-breaking is fixed: fragment votes
//! and ML ties go to the lexicographically smallest author id; vote ties
//! prefer the higher summed log-probability first.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pdmodel::{score_counts, AuthorProfile, BaseDistribution, LogProb};
use crate::tokenizer::{TokenStream, TypeCounts};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttributionError {
    #[error("fragment length must be at least 1")]
    BadFragmentLength,
    #[error("cannot attribute with an empty score grid")]
    EmptyGrid,
}

/// Fragment length: a fixed token count or the whole document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FragmentLength {
    Tokens(u64),
    FullDocument,
}

impl FragmentLength {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "full_document" | "fulldoc" => Some(FragmentLength::FullDocument),
            other => other.parse().ok().filter(|&n| n >= 1).map(FragmentLength::Tokens),
        }
    }
}

impl std::fmt::Display for FragmentLength {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FragmentLength::Tokens(n) => write!(f, "{n}"),
            FragmentLength::FullDocument => f.write_str("full"),
        }
    }
}

impl Serialize for FragmentLength {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FragmentLength {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        FragmentLength::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("bad fragment length {s:?}")))
    }
}

/// How fragment scores aggregate into a document attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Summed log-probability over fragments.
    Ml,
    /// Per-fragment votes.
    Majority,
}

impl Criterion {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" | "maximum_likelihood" => Some(Criterion::Ml),
            "majority" | "majority_rule" => Some(Criterion::Majority),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Ml => "ml",
            Criterion::Majority => "majority",
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One consecutive slice of a document's token stream.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub index: usize,
    pub range: Range<usize>,
    pub counts: TypeCounts,
}

/// Cut a stream into consecutive fragments of `length` tokens; the trailing
/// remainder stays as a final shorter fragment.
pub fn fragment(stream: &TokenStream, length: FragmentLength) -> Result<Vec<Fragment>, AttributionError> {
    let seq = stream.sequence();
    let step = match length {
        FragmentLength::FullDocument => seq.len().max(1),
        FragmentLength::Tokens(0) => return Err(AttributionError::BadFragmentLength),
        FragmentLength::Tokens(n) => n as usize,
    };
    let mut fragments = Vec::new();
    let mut start = 0;
    let mut index = 0;
    while start < seq.len() {
        let end = (start + step).min(seq.len());
        fragments.push(Fragment {
            index,
            range: start..end,
            counts: TypeCounts::from_sequence(&seq[start..end]),
        });
        start = end;
        index += 1;
    }
    Ok(fragments)
}

/// Scores of every (fragment, author) pair at delta = 1, with the new-type
/// counts that re-weight them under any delta.
#[derive(Debug, Clone)]
pub struct ScoreGrid {
    pub authors: Vec<String>,
    /// scores[fragment][author]
    pub scores: Vec<Vec<LogProb>>,
    /// new_types[fragment][author]
    pub new_types: Vec<Vec<u64>>,
}

impl ScoreGrid {
    pub fn n_fragments(&self) -> usize {
        self.scores.len()
    }

    /// Score matrix under a given delta.
    pub fn at_delta(&self, delta: f64) -> Vec<Vec<LogProb>> {
        let ln_delta = delta.ln();
        self.scores
            .iter()
            .zip(&self.new_types)
            .map(|(row, counts)| {
                row.iter()
                    .zip(counts)
                    .map(|(&s, &c)| s + c as f64 * ln_delta)
                    .collect()
            })
            .collect()
    }
}

/// Score every fragment against every profile. Cells are evaluated
/// concurrently; the grid layout is fixed by (fragment, author) order.
pub fn score_grid(
    fragments: &[Fragment],
    profiles: &[AuthorProfile],
    base: &BaseDistribution,
) -> ScoreGrid {
    let rows: Vec<(Vec<LogProb>, Vec<u64>)> = fragments
        .par_iter()
        .map(|frag| {
            let mut scores = Vec::with_capacity(profiles.len());
            let mut news = Vec::with_capacity(profiles.len());
            for profile in profiles {
                let s = score_counts(profile, &frag.counts, base);
                scores.push(s.log_prob);
                news.push(s.new_types);
            }
            (scores, news)
        })
        .collect();
    let (scores, new_types) = rows.into_iter().unzip();
    ScoreGrid {
        authors: profiles.iter().map(|p| p.author.clone()).collect(),
        scores,
        new_types,
    }
}

/// Index of the winning author under Maximum Likelihood: argmax of the
/// column sums, ties to the lexicographically smallest author id.
pub fn attribute_ml(scores: &[Vec<LogProb>], authors: &[String]) -> Result<usize, AttributionError> {
    if scores.is_empty() || authors.is_empty() {
        return Err(AttributionError::EmptyGrid);
    }
    let totals = column_sums(scores, authors.len());
    Ok(argmax_with_id_tiebreak(&totals, authors))
}

/// Index of the winning author under Majority Rule: most fragment votes,
/// vote ties to the higher summed log-probability, then the smallest id.
pub fn attribute_majority(
    scores: &[Vec<LogProb>],
    authors: &[String],
) -> Result<usize, AttributionError> {
    if scores.is_empty() || authors.is_empty() {
        return Err(AttributionError::EmptyGrid);
    }
    let votes = fragment_votes(scores, authors);
    let mut tally = vec![0usize; authors.len()];
    for &v in &votes {
        tally[v] += 1;
    }
    let totals = column_sums(scores, authors.len());
    let best_votes = *tally.iter().max().unwrap();
    let mut best: Option<usize> = None;
    for a in 0..authors.len() {
        if tally[a] != best_votes {
            continue;
        }
        best = Some(match best {
            None => a,
            Some(b) => {
                if totals[a] > totals[b]
                    || (totals[a] == totals[b] && authors[a] < authors[b])
                {
                    a
                } else {
                    b
                }
            }
        });
    }
    Ok(best.unwrap())
}

/// Each fragment's winning author index (ties to the smallest id).
pub fn fragment_votes(scores: &[Vec<LogProb>], authors: &[String]) -> Vec<usize> {
    scores
        .iter()
        .map(|row| argmax_with_id_tiebreak(row, authors))
        .collect()
}

fn column_sums(scores: &[Vec<LogProb>], n_authors: usize) -> Vec<f64> {
    let mut totals = vec![0.0; n_authors];
    for row in scores {
        for (a, &s) in row.iter().enumerate() {
            totals[a] += s;
        }
    }
    totals
}

fn argmax_with_id_tiebreak(values: &[f64], authors: &[String]) -> usize {
    let mut best = 0;
    for a in 1..values.len() {
        if values[a] > values[best] || (values[a] == values[best] && authors[a] < authors[best]) {
            best = a;
        }
    }
    best
}

/// Document-level outcome: aggregate scores, per-fragment votes, the chosen
/// author, and any authors tied with it under the criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionResult {
    pub id: String,
    pub chosen: String,
    pub criterion: Criterion,
    pub scores: BTreeMap<String, f64>,
    pub votes: Vec<String>,
    pub ties: Vec<String>,
}

/// Attribute one document from its score grid under the given criterion and
/// delta.
pub fn attribute(
    doc_id: &str,
    grid: &ScoreGrid,
    criterion: Criterion,
    delta: f64,
) -> Result<AttributionResult, AttributionError> {
    let scores = grid.at_delta(delta);
    let chosen = match criterion {
        Criterion::Ml => attribute_ml(&scores, &grid.authors)?,
        Criterion::Majority => attribute_majority(&scores, &grid.authors)?,
    };
    let totals = column_sums(&scores, grid.authors.len());
    let votes = fragment_votes(&scores, &grid.authors);
    let ties = match criterion {
        Criterion::Ml => {
            let best = totals[chosen];
            grid.authors
                .iter()
                .enumerate()
                .filter(|&(a, _)| totals[a] == best && a != chosen)
                .map(|(_, id)| id.clone())
                .collect()
        }
        Criterion::Majority => {
            let mut tally = vec![0usize; grid.authors.len()];
            for &v in &votes {
                tally[v] += 1;
            }
            let best = tally[chosen];
            grid.authors
                .iter()
                .enumerate()
                .filter(|&(a, _)| tally[a] == best && a != chosen)
                .map(|(_, id)| id.clone())
                .collect()
        }
    };
    Ok(AttributionResult {
        id: doc_id.to_string(),
        chosen: grid.authors[chosen].clone(),
        criterion,
        scores: grid
            .authors
            .iter()
            .cloned()
            .zip(totals.iter().copied())
            .collect(),
        votes: votes.into_iter().map(|v| grid.authors[v].clone()).collect(),
        ties,
    })
}
