//! The resolved run configuration and the TOML config file.
//!
//! A config file supplies defaults; explicit command-line flags override
//! it. The fully resolved configuration (with the seed) is recorded as
//! `run.json` alongside every command's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use cp2d_core::attribution::{Criterion, FragmentLength};
use cp2d_core::corpus::{CorpusLayout, Encoding};
use cp2d_core::pdmodel::P0Strategy;
use cp2d_core::tokenizer::TokenizerSpec;
use cp2d_core::tuner::{default_delta_grid, refine_fragment_grid, SearchGrids};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::{CorpusArgs, HyperArgs};

/// On-disk config file shape (all fields optional).
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ConfigFile {
    pub corpus: Option<PathBuf>,
    pub layout: Option<String>,
    pub encoding: Option<String>,
    pub tokens: Option<String>,
    pub p0: Option<String>,
    pub fragment: Option<String>,
    pub criterion: Option<String>,
    pub delta: Option<String>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub search: Option<SearchSection>,
}

/// Grid declarations for the hyperparameter search.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct SearchSection {
    pub tokens: Option<Vec<String>>,
    pub p0: Option<Vec<String>>,
    pub fragments_coarse: Option<Vec<String>>,
    pub fragments_refine: Option<Vec<String>>,
    pub criteria: Option<Vec<String>>,
    pub delta_min: Option<f64>,
    pub delta_max: Option<f64>,
    pub delta_points: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(ConfigFile::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::config(format!("bad config {}: {e}", p.display())))
            }
        }
    }
}

pub fn parse_encoding(s: &str) -> Result<Encoding, CliError> {
    Encoding::parse(s).ok_or_else(|| CliError::config(format!("unknown encoding {s:?}")))
}

pub fn parse_layout(s: &str) -> Result<CorpusLayout, CliError> {
    CorpusLayout::parse(s).ok_or_else(|| CliError::config(format!("unknown layout {s:?}")))
}

pub fn parse_tokens(s: &str) -> Result<TokenizerSpec, CliError> {
    s.parse().map_err(|e: cp2d_core::tokenizer::TokenizeError| CliError::config(e.to_string()))
}

pub fn parse_p0(s: &str) -> Result<P0Strategy, CliError> {
    P0Strategy::parse(s).ok_or_else(|| CliError::config(format!("unknown P0 strategy {s:?}")))
}

pub fn parse_fragment(s: &str) -> Result<FragmentLength, CliError> {
    FragmentLength::parse(s).ok_or_else(|| CliError::config(format!("bad fragment length {s:?}")))
}

pub fn parse_criterion(s: &str) -> Result<Criterion, CliError> {
    Criterion::parse(s).ok_or_else(|| CliError::config(format!("unknown criterion {s:?}")))
}

/// The delta flag: a number or "sweep".
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaChoice {
    Sweep,
    Fixed(f64),
}

pub fn parse_delta(s: &str) -> Result<DeltaChoice, CliError> {
    if s.eq_ignore_ascii_case("sweep") {
        return Ok(DeltaChoice::Sweep);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| CliError::config(format!("bad delta {s:?}")))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(CliError::config(format!("delta must be positive, got {v}")));
    }
    Ok(DeltaChoice::Fixed(v))
}

/// Resolved corpus location.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusConfig {
    pub path: PathBuf,
    #[serde(skip)]
    pub layout: CorpusLayout,
    pub layout_name: String,
    pub encoding: Encoding,
}

pub fn resolve_corpus(args: &CorpusArgs, file: &ConfigFile) -> Result<CorpusConfig, CliError> {
    let path = args
        .corpus
        .clone()
        .or_else(|| file.corpus.clone())
        .ok_or_else(|| CliError::config("a corpus path is required (--corpus)"))?;
    let layout_name = args
        .layout
        .clone()
        .or_else(|| file.layout.clone())
        .unwrap_or_else(|| default_layout_for(&path));
    let layout = parse_layout(&layout_name)?;
    let encoding = parse_encoding(
        args.encoding
            .as_deref()
            .or(file.encoding.as_deref())
            .unwrap_or("latin1"),
    )?;
    Ok(CorpusConfig {
        path,
        layout,
        layout_name,
        encoding,
    })
}

fn default_layout_for(path: &Path) -> String {
    if path.extension().map(|e| e == "jsonl").unwrap_or(false) {
        "jsonl".to_string()
    } else {
        "dir_tree".to_string()
    }
}

/// Hyperparameters resolved from flags over config-file values.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedHyper {
    pub tokens: Option<TokenizerSpec>,
    pub p0: Option<P0Strategy>,
    pub fragment: Option<FragmentLength>,
    pub criterion: Option<Criterion>,
    pub delta: Option<DeltaChoice>,
}

pub fn resolve_hyper(args: &HyperArgs, file: &ConfigFile) -> Result<ResolvedHyper, CliError> {
    let pick = |flag: &Option<String>, cfg: &Option<String>| -> Option<String> {
        flag.clone().or_else(|| cfg.clone())
    };
    Ok(ResolvedHyper {
        tokens: pick(&args.tokens, &file.tokens)
            .map(|s| parse_tokens(&s))
            .transpose()?,
        p0: pick(&args.p0, &file.p0).map(|s| parse_p0(&s)).transpose()?,
        fragment: pick(&args.fragment, &file.fragment)
            .map(|s| parse_fragment(&s))
            .transpose()?,
        criterion: pick(&args.criterion, &file.criterion)
            .map(|s| parse_criterion(&s))
            .transpose()?,
        delta: pick(&args.delta, &file.delta)
            .map(|s| parse_delta(&s))
            .transpose()?,
    })
}

pub fn build_grids(section: Option<&SearchSection>) -> Result<SearchGrids, CliError> {
    let defaults = SearchGrids::default();
    let Some(s) = section else {
        return Ok(defaults);
    };
    let tokenizers = match &s.tokens {
        Some(list) => list
            .iter()
            .map(|t| parse_tokens(t))
            .collect::<Result<Vec<_>, _>>()?,
        None => defaults.tokenizers,
    };
    let p0_strategies = match &s.p0 {
        Some(list) => list
            .iter()
            .map(|t| parse_p0(t))
            .collect::<Result<Vec<_>, _>>()?,
        None => defaults.p0_strategies,
    };
    let coarse_fragments = match &s.fragments_coarse {
        Some(list) => list
            .iter()
            .map(|t| parse_fragment(t))
            .collect::<Result<Vec<_>, _>>()?,
        None => defaults.coarse_fragments,
    };
    let refine_fragments = match &s.fragments_refine {
        Some(list) => list
            .iter()
            .map(|t| parse_fragment(t))
            .collect::<Result<Vec<_>, _>>()?,
        None => refine_fragment_grid(),
    };
    let criteria = match &s.criteria {
        Some(list) => list
            .iter()
            .map(|t| parse_criterion(t))
            .collect::<Result<Vec<_>, _>>()?,
        None => defaults.criteria,
    };
    let deltas = match (s.delta_min, s.delta_max, s.delta_points) {
        (None, None, None) => default_delta_grid(),
        (min, max, points) => {
            let min = min.unwrap_or(1e-2);
            let max = max.unwrap_or(1e1);
            let points = points.unwrap_or(31).max(1);
            if !(min > 0.0) || max < min {
                return Err(CliError::config("delta grid must satisfy 0 < min <= max"));
            }
            if points == 1 {
                vec![min]
            } else {
                let step = (max.ln() - min.ln()) / (points - 1) as f64;
                (0..points)
                    .map(|j| {
                        let ln = min.ln() + j as f64 * step;
                        if ln.abs() < 1e-12 {
                            1.0
                        } else {
                            ln.exp()
                        }
                    })
                    .collect()
            }
        }
    };
    Ok(SearchGrids {
        tokenizers,
        p0_strategies,
        coarse_fragments,
        refine_fragments,
        criteria,
        deltas,
    })
}

/// Write the resolved run record next to the outputs.
pub fn write_run_record<T: Serialize>(out_dir: &Path, record: &T) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(record)
        .map_err(|e| CliError::data(format!("cannot serialize run record: {e}")))?;
    fs::write(out_dir.join("run.json"), json)?;
    Ok(())
}
