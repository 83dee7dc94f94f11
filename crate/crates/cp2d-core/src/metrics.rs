//! Evaluation metrics: accuracy and per-class precision/recall/F1 with
//! macro and micro averaging.
//!
//! Zero denominators (a class never predicted, or absent from the truth)
//! follow the conservative convention P = R = F1 = 0.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("cannot compute metrics over an empty prediction set")]
    Empty,
}

/// Fraction of predictions matching the truth.
pub fn accuracy(pairs: &[(String, String)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = pairs.iter().filter(|(truth, pred)| truth == pred).count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Per-class true positive / false positive / false negative counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Confusion counts over all classes seen in either truth or predictions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub classes: BTreeMap<String, ClassCounts>,
    pub total: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(pairs: &[(String, String)]) -> Self {
        let mut classes: BTreeMap<String, ClassCounts> = BTreeMap::new();
        for (truth, pred) in pairs {
            classes.entry(truth.clone()).or_default();
            classes.entry(pred.clone()).or_default();
            if truth == pred {
                classes.get_mut(truth).unwrap().tp += 1;
            } else {
                classes.get_mut(pred).unwrap().fp += 1;
                classes.get_mut(truth).unwrap().fn_ += 1;
            }
        }
        ConfusionCounts {
            classes,
            total: pairs.len() as u64,
        }
    }
}

/// Precision, recall, and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScores {
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        // the harmonic mean collapses to the common value when P = R;
        // computing it that way keeps the pooled identity micro-F1 =
        // accuracy exact rather than within rounding
        let f1 = if precision == recall {
            precision
        } else if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PrfScores {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: u64, denom: u64) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// Per-class scores in class order.
pub fn prf1_per_class(confusion: &ConfusionCounts) -> BTreeMap<String, PrfScores> {
    confusion
        .classes
        .iter()
        .map(|(class, c)| (class.clone(), PrfScores::from_counts(c.tp, c.fp, c.fn_)))
        .collect()
}

/// Unweighted mean of the per-class scores.
pub fn prf1_macro(confusion: &ConfusionCounts) -> PrfScores {
    let per_class = prf1_per_class(confusion);
    let k = per_class.len().max(1) as f64;
    let mut out = PrfScores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for s in per_class.values() {
        out.precision += s.precision / k;
        out.recall += s.recall / k;
        out.f1 += s.f1 / k;
    }
    out
}

/// Pooled counts over all classes. For single-label classification this
/// collapses to the accuracy in every component.
pub fn prf1_micro(confusion: &ConfusionCounts) -> PrfScores {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for c in confusion.classes.values() {
        tp += c.tp;
        fp += c.fp;
        fn_ += c.fn_;
    }
    PrfScores::from_counts(tp, fp, fn_)
}

/// Averaging mode for [`prf1`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    PerClass,
    Macro,
    Micro,
}

/// Scores under the requested averaging; `PerClass` returns the map, the
/// others a single entry keyed "macro" / "micro".
pub fn prf1(confusion: &ConfusionCounts, averaging: Averaging) -> BTreeMap<String, PrfScores> {
    match averaging {
        Averaging::PerClass => prf1_per_class(confusion),
        Averaging::Macro => [("macro".to_string(), prf1_macro(confusion))].into(),
        Averaging::Micro => [("micro".to_string(), prf1_micro(confusion))].into(),
    }
}
