//! Command implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use cp2d_core::attribution::{
    attribute as attribute_doc, fragment, score_grid, Criterion, FragmentLength,
};
use cp2d_core::corpus::{decode, load_corpus, transcode, Corpus, Document, SplitManifest};
use cp2d_core::metrics::{accuracy, prf1_macro, prf1_micro, prf1_per_class, ConfusionCounts};
use cp2d_core::pdmodel::{
    author_excluded_log_normalizer, AuthorProfile, BaseDistribution, P0Strategy, ProfileStore,
    StoredBase,
};
use cp2d_core::tokenizer::{
    tokenize as tokenize_doc, tokenize_corpus, TokenStream, TypeCounts, Vocabulary,
};
use cp2d_core::tuner::{
    crossval as run_crossval, fit_profiles, fixed_split_eval, CrossvalOptions, CrossvalReport,
    HyperConfig,
};
use cp2d_core::umtsim::{
    simulate_pd, simulate_umt, synth_corpus, BaseSampler, SynthConfig, UrnParams,
};

use crate::config::{
    self, build_grids, resolve_corpus, resolve_hyper, ConfigFile, DeltaChoice,
};
use crate::error::CliError;
use crate::{CorpusArgs, HyperArgs};

fn load(corpus_cfg: &config::CorpusConfig) -> Result<(Corpus, Vec<String>), CliError> {
    let (corpus, report) = load_corpus(&corpus_cfg.path, corpus_cfg.layout, corpus_cfg.encoding)?;
    Ok((corpus, report.dropped_authors))
}

fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c == '/' || c == '\\' || c == ':' { "__".to_string() } else { c.to_string() })
        .collect()
}

fn escape_token(token: &[u8], encoding: cp2d_core::corpus::Encoding) -> String {
    let text = decode(token, encoding);
    text.chars()
        .flat_map(|c| match c {
            '\t' => "\\t".chars().collect::<Vec<_>>(),
            '\n' => "\\n".chars().collect(),
            '\r' => "\\r".chars().collect(),
            '\\' => "\\\\".chars().collect(),
            c if (c as u32) < 0x20 => format!("\\x{:02x}", c as u32).chars().collect(),
            c => vec![c],
        })
        .collect()
}

pub fn tokenize(
    corpus_args: CorpusArgs,
    tokens: Option<String>,
    config_path: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), CliError> {
    let file = ConfigFile::load(config_path.as_deref())?;
    let corpus_cfg = resolve_corpus(&corpus_args, &file)?;
    let spec = config::parse_tokens(
        tokens
            .as_deref()
            .or(file.tokens.as_deref())
            .unwrap_or("osf:5"),
    )?;
    let (corpus, dropped) = load(&corpus_cfg)?;
    let tc = tokenize_corpus(&corpus, &spec)?;

    fs::create_dir_all(&out)?;
    config::write_run_record(
        &out,
        &json!({
            "command": "tokenize",
            "corpus": corpus_cfg,
            "tokens": spec.to_string(),
            "dropped_authors": dropped,
        }),
    )?;

    // one TSV per document: type id, count
    for (doc, stream) in corpus.documents.iter().zip(&tc.streams) {
        let mut f = fs::File::create(out.join(format!("{}.tsv", sanitize_id(&doc.id))))?;
        for (ty, count) in stream.counts().iter() {
            writeln!(f, "{ty}\t{count}")?;
        }
    }
    // plus the vocabulary mapping ids to (escaped) token text
    let mut vf = fs::File::create(out.join("vocab.tsv"))?;
    for (id, token) in tc.vocab.iter().enumerate() {
        writeln!(vf, "{id}\t{}", escape_token(token, corpus.encoding))?;
    }
    println!(
        "tokenized {} documents, {} types",
        corpus.len(),
        tc.vocab.len()
    );
    Ok(())
}

pub fn fit(
    corpus_args: CorpusArgs,
    hyper: HyperArgs,
    config_path: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), CliError> {
    let file = ConfigFile::load(config_path.as_deref())?;
    let corpus_cfg = resolve_corpus(&corpus_args, &file)?;
    let resolved = resolve_hyper(&hyper, &file)?;
    let spec = resolved.tokens.unwrap_or(cp2d_core::tokenizer::TokenizerSpec::Osf { n: 5 });
    let strategy = resolved.p0.unwrap_or(P0Strategy::Global);
    let delta = match resolved.delta {
        Some(DeltaChoice::Fixed(d)) => d,
        Some(DeltaChoice::Sweep) => {
            return Err(CliError::config("fit takes a numeric --delta, not sweep"))
        }
        None => 1.0,
    };

    let (corpus, dropped) = load(&corpus_cfg)?;
    let tc = tokenize_corpus(&corpus, &spec)?;
    let base = BaseDistribution::from_counts(&tc.total_counts, tc.vocab.len(), 1.0)?;
    let all_docs: Vec<usize> = (0..corpus.len()).collect();
    let (profiles, fits, fallbacks) = fit_profiles(&corpus, &tc, &all_docs, strategy, &base);

    fs::create_dir_all(&out)?;
    config::write_run_record(
        &out,
        &json!({
            "command": "fit",
            "corpus": corpus_cfg,
            "tokens": spec.to_string(),
            "p0": strategy.name(),
            "delta": delta,
            "dropped_authors": dropped,
            "author_excluded_fallbacks": fallbacks,
        }),
    )?;

    let store = ProfileStore::build(
        corpus.encoding,
        spec,
        strategy,
        delta,
        &tc.vocab,
        StoredBase::Frequency,
        &profiles,
    );
    store.save(&out.join("profiles.json"))?;

    let mut f = fs::File::create(out.join("fits.csv"))?;
    writeln!(
        f,
        "author,alpha,theta,converged,iterations,final_gradient_norm,resets_used"
    )?;
    for (author, report) in &fits {
        writeln!(
            f,
            "{author},{},{},{},{},{:e},{}",
            report.params.alpha(),
            report.params.theta(),
            report.converged,
            report.iterations,
            report.final_gradient_norm,
            report.resets_used
        )?;
    }
    println!("fitted {} authors -> {}", fits.len(), out.join("profiles.json").display());
    Ok(())
}

/// Anonymous documents: a .jsonl manifest (author optional), a flat
/// directory of .txt files, or an <author>/<doc>.txt tree.
fn load_documents(path: &Path, encoding: cp2d_core::corpus::Encoding) -> Result<Vec<Document>, CliError> {
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        let mut docs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| CliError::data(format!("bad jsonl line {}: {e}", i + 1)))?;
            let id = v
                .get("id")
                .and_then(|x| x.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| format!("doc{i}"));
            let body = v
                .get("text")
                .and_then(|x| x.as_str())
                .ok_or_else(|| CliError::data(format!("jsonl line {} lacks a text field", i + 1)))?;
            let author = v
                .get("author")
                .and_then(|x| x.as_str())
                .unwrap_or("")
                .to_string();
            let bytes = transcode(body, encoding);
            let char_count = bytes.len();
            docs.push(Document {
                id,
                author,
                bytes,
                char_count,
            });
        }
        return Ok(docs);
    }
    if !path.is_dir() {
        return Err(CliError::data(format!("no such corpus: {}", path.display())));
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    entries.sort();
    let mut docs = Vec::new();
    for entry in entries {
        if entry.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&entry)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().map(|x| x == "txt").unwrap_or(false))
                .collect();
            files.sort();
            let prefix = entry.file_name().map(|n| n.to_string_lossy().into_owned());
            for f in files {
                docs.push(read_txt_doc(&f, prefix.as_deref(), encoding)?);
            }
        } else if entry.extension().map(|x| x == "txt").unwrap_or(false) {
            docs.push(read_txt_doc(&entry, None, encoding)?);
        }
    }
    Ok(docs)
}

fn read_txt_doc(
    path: &Path,
    prefix: Option<&str>,
    encoding: cp2d_core::corpus::Encoding,
) -> Result<Document, CliError> {
    let raw = fs::read(path)?;
    let text = String::from_utf8_lossy(&raw);
    let bytes = transcode(&text, encoding);
    let char_count = bytes.len();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let id = match prefix {
        Some(p) => format!("{p}/{stem}"),
        None => stem,
    };
    Ok(Document {
        id,
        author: prefix.unwrap_or("").to_string(),
        bytes,
        char_count,
    })
}

pub fn attribute(
    profiles_path: PathBuf,
    docs_path: PathBuf,
    hyper: HyperArgs,
    out: PathBuf,
) -> Result<(), CliError> {
    let store = ProfileStore::load(&profiles_path)?;
    let resolved = resolve_hyper(&hyper, &ConfigFile::default())?;
    let fragment_length = resolved.fragment.unwrap_or(FragmentLength::FullDocument);
    let criterion = resolved.criterion.unwrap_or(Criterion::Ml);
    let delta = match resolved.delta {
        Some(DeltaChoice::Fixed(d)) => d,
        Some(DeltaChoice::Sweep) => {
            return Err(CliError::config("attribute takes a numeric --delta, not sweep"))
        }
        None => store.delta,
    };
    let strategy = resolved.p0.unwrap_or(store.p0_strategy);
    if resolved.tokens.is_some() && resolved.tokens != Some(store.tokenizer) {
        return Err(CliError::config(
            "the tokenizer is fixed by the profile store; refit to change it",
        ));
    }

    let documents = load_documents(&docs_path, store.encoding)?;
    if documents.is_empty() {
        return Err(CliError::data("no documents to attribute"));
    }

    // tokenize against the store vocabulary, extending it with unseen types
    let mut vocab: Vocabulary = store.vocabulary();
    let mut streams: Vec<TokenStream> = Vec::with_capacity(documents.len());
    let mut extra_counts = TypeCounts::default();
    for doc in &documents {
        let ids = tokenize_doc(&store.tokenizer, store.encoding, &doc.bytes, &mut vocab)?;
        let stream = TokenStream::from_ids(ids);
        extra_counts.merge(stream.counts());
        streams.push(stream);
    }

    let mut base = store.base_distribution(vocab.len(), Some(&extra_counts))?;
    base.set_delta(delta)?;
    let mut profiles: Vec<AuthorProfile> = store.profiles()?;
    profiles.sort_by(|a, b| a.author.cmp(&b.author));
    // under a frequency base the prior depends on the attributed documents,
    // so the author-excluded renormalizers are refreshed here
    if strategy == P0Strategy::AuthorExcluded {
        if matches!(store.base, StoredBase::Frequency) || resolved.p0.is_some() {
            for p in &mut profiles {
                p.base_normalizer =
                    author_excluded_log_normalizer(&base, &p.counts).unwrap_or(0.0);
            }
        }
    } else {
        for p in &mut profiles {
            p.base_normalizer = 0.0;
        }
    }

    fs::create_dir_all(&out)?;
    config::write_run_record(
        &out,
        &json!({
            "command": "attribute",
            "profiles": profiles_path,
            "docs": docs_path,
            "tokens": store.tokenizer.to_string(),
            "p0": strategy.name(),
            "fragment": fragment_length.to_string(),
            "criterion": criterion.name(),
            "delta": delta,
        }),
    )?;

    let mut jsonl = fs::File::create(out.join("attributions.jsonl"))?;
    let mut correct = 0usize;
    let mut labelled = 0usize;
    for (doc, stream) in documents.iter().zip(&streams) {
        if stream.is_empty() {
            return Err(CliError::data(format!(
                "document {} produced no tokens under {}",
                doc.id, store.tokenizer
            )));
        }
        let fragments = fragment(stream, fragment_length)
            .map_err(|e| CliError::config(e.to_string()))?;
        let grid = score_grid(&fragments, &profiles, &base);
        let result = attribute_doc(&doc.id, &grid, criterion, delta)
            .map_err(|e| CliError::data(e.to_string()))?;
        if !doc.author.is_empty() {
            labelled += 1;
            if doc.author == result.chosen {
                correct += 1;
            }
        }
        writeln!(
            jsonl,
            "{}",
            serde_json::to_string(&result).map_err(|e| CliError::data(e.to_string()))?
        )?;
    }
    if labelled > 0 {
        println!(
            "attributed {} documents ({} labelled, {} correct)",
            documents.len(),
            labelled,
            correct
        );
    } else {
        println!("attributed {} documents", documents.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsSummary {
    accuracy: f64,
    macro_precision: f64,
    macro_recall: f64,
    macro_f1: f64,
    micro_precision: f64,
    micro_recall: f64,
    micro_f1: f64,
}

fn write_metrics(out: &Path, report: &CrossvalReport, seed: u64) -> Result<(), CliError> {
    let pairs = report.pooled_predictions();
    let confusion = ConfusionCounts::from_predictions(&pairs);
    let acc = accuracy(&pairs).map_err(|e| CliError::data(e.to_string()))?;
    let per_class = prf1_per_class(&confusion);
    let macro_s = prf1_macro(&confusion);
    let micro_s = prf1_micro(&confusion);

    let mut csv = fs::File::create(out.join("metrics.csv"))?;
    writeln!(csv, "# seed={seed}")?;
    writeln!(csv, "class,precision,recall,f1")?;
    for (class, s) in &per_class {
        writeln!(csv, "{class},{},{},{}", s.precision, s.recall, s.f1)?;
    }

    let summary = MetricsSummary {
        accuracy: acc,
        macro_precision: macro_s.precision,
        macro_recall: macro_s.recall,
        macro_f1: macro_s.f1,
        micro_precision: micro_s.precision,
        micro_recall: micro_s.recall,
        micro_f1: micro_s.f1,
    };
    fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::data(e.to_string()))?,
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn crossval(
    corpus_args: CorpusArgs,
    hyper: HyperArgs,
    folds: Option<usize>,
    seed: Option<u64>,
    split: Option<PathBuf>,
    config_path: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), CliError> {
    let file = ConfigFile::load(config_path.as_deref())?;
    let corpus_cfg = resolve_corpus(&corpus_args, &file)?;
    let resolved = resolve_hyper(&hyper, &file)?;
    let k = folds.or(file.folds).unwrap_or(10);
    let seed = seed.or(file.seed).unwrap_or(0);
    let grids = build_grids(file.search.as_ref())?;

    // fixed mode requires the four non-delta hyperparameters
    let fixed = match (
        resolved.tokens,
        resolved.p0,
        resolved.fragment,
        resolved.criterion,
    ) {
        (Some(tokenizer), Some(p0_strategy), Some(fragment_length), Some(criterion)) => {
            Some(HyperConfig {
                tokenizer,
                p0_strategy,
                fragment_length,
                criterion,
                delta: match resolved.delta {
                    Some(DeltaChoice::Fixed(d)) => d,
                    _ => 1.0,
                },
            })
        }
        (None, None, None, None) => None,
        _ => {
            return Err(CliError::config(
                "fix all of --tokens, --p0, --fragment, --criterion, or none of them (search mode)",
            ))
        }
    };
    let sweep_delta = matches!(resolved.delta, Some(DeltaChoice::Sweep));
    if sweep_delta && fixed.is_none() {
        return Err(CliError::config(
            "--delta sweep needs the other hyperparameters fixed; search mode already sweeps delta",
        ));
    }

    let (corpus, dropped) = load(&corpus_cfg)?;
    let options = CrossvalOptions {
        k,
        seed,
        fixed,
        sweep_delta,
        grids,
    };
    let report = match &split {
        Some(manifest_path) => {
            let manifest = SplitManifest::load(manifest_path)?;
            fixed_split_eval(&corpus, &manifest, &options)?
        }
        None => run_crossval(&corpus, &options)?,
    };

    fs::create_dir_all(&out)?;
    config::write_run_record(
        &out,
        &json!({
            "command": "crossval",
            "corpus": corpus_cfg,
            "folds": k,
            "seed": seed,
            "split": split,
            "fixed": options.fixed,
            "sweep_delta": sweep_delta,
            "grids": options.grids,
            "dropped_authors": dropped,
        }),
    )?;

    let fold_accuracies: Vec<f64> = report.folds.iter().map(|f| f.test_accuracy).collect();
    fs::write(
        out.join("crossval.json"),
        serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))?,
    )?;
    write_metrics(&out, &report, seed)?;

    println!("fold accuracies: {fold_accuracies:?}");
    println!("mean test accuracy: {:.4}", report.mean_test_accuracy);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    model: String,
    alpha: Option<f64>,
    theta: Option<f64>,
    rho: Option<f64>,
    rho_tilde: Option<f64>,
    nu: Option<u64>,
    n0: Option<f64>,
    tmax: usize,
    seed: u64,
    out: PathBuf,
) -> Result<(), CliError> {
    let (run, header) = match model.as_str() {
        "pd" => {
            let alpha = alpha.ok_or_else(|| CliError::config("pd model needs --alpha"))?;
            let theta = theta.ok_or_else(|| CliError::config("pd model needs --theta"))?;
            let params = cp2d_core::pdmodel::AuthorParams::new(alpha, theta)?;
            let run = simulate_pd(&params, &BaseSampler::Sequential, tmax, seed)?;
            (run, format!("model=pd alpha={alpha} theta={theta}"))
        }
        "umt" => {
            let rho = rho.ok_or_else(|| CliError::config("umt model needs --rho"))?;
            let nu = nu.ok_or_else(|| CliError::config("umt model needs --nu"))?;
            let n0 = n0.ok_or_else(|| CliError::config("umt model needs --n0"))?;
            let params = match rho_tilde {
                Some(rt) => UrnParams::new(rho, rt, nu, n0)?,
                None => UrnParams::exchangeable(rho, nu, n0)?,
            };
            let run = simulate_umt(&params, tmax, seed)?;
            (
                run,
                format!(
                    "model=umt rho={rho} rho_tilde={} nu={nu} n0={n0}",
                    params.rho_tilde
                ),
            )
        }
        other => return Err(CliError::config(format!("unknown model {other:?}"))),
    };
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = fs::File::create(&out)?;
    writeln!(f, "# {header} tmax={tmax} seed={seed}")?;
    writeln!(f, "t,D_t")?;
    for (t, d) in run.d_trace.iter().enumerate() {
        writeln!(f, "{},{d}", t + 1)?;
    }
    println!(
        "simulated {} draws, {} distinct types -> {}",
        run.sequence.len(),
        run.d_trace.last().copied().unwrap_or(0),
        out.display()
    );
    Ok(())
}

pub fn synth(
    authors: usize,
    docs: usize,
    tokens_per_doc: usize,
    shared: f64,
    seed: u64,
    out: PathBuf,
) -> Result<(), CliError> {
    let config = SynthConfig {
        n_authors: authors,
        docs_per_author: docs,
        tokens_per_doc,
        shared_fraction: shared,
        seed,
        ..SynthConfig::default()
    };
    let corpus = synth_corpus(&config)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let f = fs::File::create(&out)?;
    corpus.write_jsonl(f)?;
    println!(
        "wrote {} documents by {} authors -> {}",
        corpus.len(),
        corpus.author_count(),
        out.display()
    );
    Ok(())
}
