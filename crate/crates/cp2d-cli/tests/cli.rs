//! End-to-end tests of the cp2d binary: every subcommand, the documented
//! exit codes, and rerun determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cp2d_core::corpus::{load_corpus, CorpusLayout, Encoding};
use cp2d_core::umtsim::{label_name, simulate_pd, BaseSampler};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cp2d"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn cp2d");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("spawn cp2d").status.code().unwrap_or(-1)
}

#[test]
fn tokenize_reproduces_the_red_cat_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dump");
    run_ok(bin()
        .args(["tokenize", "--corpus"])
        .arg(fixture("redcat"))
        .args(["--layout", "dir_tree", "--tokens", "osf:4", "--out"])
        .arg(&out));

    let doc_tsv = fs::read_to_string(out.join("alice__doc1.tsv")).unwrap();
    let rows: Vec<&str> = doc_tsv.lines().collect();
    // four distinct windows, each seen once
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.ends_with("\t1")));

    let vocab = fs::read_to_string(out.join("vocab.tsv")).unwrap();
    for token in ["the ", " red", "red ", " cat"] {
        assert!(
            vocab.lines().any(|l| l.split_once('\t').map(|(_, t)| t) == Some(token)),
            "missing token {token:?} in vocab:\n{vocab}"
        );
    }
    assert!(out.join("run.json").exists());

    // rerun is byte-identical
    let out2 = dir.path().join("dump2");
    run_ok(bin()
        .args(["tokenize", "--corpus"])
        .arg(fixture("redcat"))
        .args(["--layout", "dir_tree", "--tokens", "osf:4", "--out"])
        .arg(&out2));
    assert_eq!(
        fs::read(out.join("alice__doc1.tsv")).unwrap(),
        fs::read(out2.join("alice__doc1.tsv")).unwrap()
    );
    assert_eq!(
        fs::read(out.join("vocab.tsv")).unwrap(),
        fs::read(out2.join("vocab.tsv")).unwrap()
    );
}

#[test]
fn tokenize_empty_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let code = exit_code(bin()
        .args(["tokenize", "--corpus"])
        .arg(&empty)
        .args(["--layout", "dir_tree", "--out"])
        .arg(dir.path().join("out")));
    assert_eq!(code, 3);
}

#[test]
fn bad_tokenizer_spec_is_a_config_error() {
    let code = exit_code(bin()
        .args(["tokenize", "--corpus"])
        .arg(fixture("redcat"))
        .args(["--tokens", "osf:2", "--out", "/tmp/unused"]));
    assert_eq!(code, 2);
}

/// One synthetic author with known parameters, written as a jsonl corpus.
fn synth_author_jsonl(path: &Path, alpha: f64, theta: f64, tokens_per_doc: usize, docs: usize) {
    let params = cp2d_core::pdmodel::AuthorParams::new(alpha, theta).unwrap();
    let run = simulate_pd(
        &params,
        &BaseSampler::Sequential,
        tokens_per_doc * docs,
        2024,
    )
    .unwrap();
    let mut lines = String::new();
    for d in 0..docs {
        let words: Vec<String> = run.sequence[d * tokens_per_doc..(d + 1) * tokens_per_doc]
            .iter()
            .map(|&t| label_name(t as u64))
            .collect();
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({"author": "solo", "id": format!("solo/d{d}"), "text": words.join(" ")})
        ));
    }
    fs::write(path, lines).unwrap();
}

#[test]
fn fit_writes_profiles_and_recovers_known_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    synth_author_jsonl(&corpus, 0.7, 100.0, 50_000, 2);

    let out = dir.path().join("fit");
    run_ok(bin()
        .args(["fit", "--corpus"])
        .arg(&corpus)
        .args(["--layout", "jsonl", "--tokens", "words", "--out"])
        .arg(&out));

    assert!(out.join("profiles.json").exists());
    let csv = fs::read_to_string(out.join("fits.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "author,alpha,theta,converged,iterations,final_gradient_norm,resets_used"
    );
    let row = lines.next().expect("one author row");
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "solo");
    let alpha: f64 = fields[1].parse().unwrap();
    assert!(
        (alpha - 0.7).abs() < 0.05,
        "fitted alpha {alpha} not within 0.05 of 0.7"
    );
}

#[test]
fn attribute_reproduces_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("attr");
    run_ok(bin()
        .args(["attribute", "--profiles"])
        .arg(fixture("worked_profiles.json"))
        .arg("--docs")
        .arg(fixture("worked_doc.jsonl"))
        .args(["--fragment", "full", "--criterion", "ml", "--out"])
        .arg(&out));

    let jsonl = fs::read_to_string(out.join("attributions.jsonl")).unwrap();
    let record: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(record["id"], "anon");
    assert_eq!(record["chosen"], "A");
    assert_eq!(record["criterion"], "ml");
    let score = record["scores"]["A"].as_f64().unwrap();
    assert!(
        (score - 0.015f64.ln()).abs() < 1e-9,
        "score {score} != ln(0.015)"
    );
    assert_eq!(record["votes"].as_array().unwrap().len(), 1);
}

#[test]
fn attribute_separates_disjoint_vocabularies() {
    let dir = tempfile::tempdir().unwrap();
    // train two authors with disjoint wordlists
    let corpus = dir.path().join("train.jsonl");
    let mut lines = String::new();
    for d in 0..3 {
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({"author": "apple", "id": format!("apple/d{d}"),
                "text": "orchard cider harvest orchard press cider"})
        ));
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({"author": "quantum", "id": format!("quantum/d{d}"),
                "text": "flux drive entangle flux core drive"})
        ));
    }
    fs::write(&corpus, lines).unwrap();
    let fit_out = dir.path().join("fit");
    run_ok(bin()
        .args(["fit", "--corpus"])
        .arg(&corpus)
        .args(["--layout", "jsonl", "--tokens", "words", "--out"])
        .arg(&fit_out));

    let anon = dir.path().join("anon.jsonl");
    fs::write(
        &anon,
        format!(
            "{}\n",
            serde_json::json!({"id": "mystery", "text": "cider orchard press harvest"})
        ),
    )
    .unwrap();
    let out = dir.path().join("attr");
    run_ok(bin()
        .args(["attribute", "--profiles"])
        .arg(fit_out.join("profiles.json"))
        .arg("--docs")
        .arg(&anon)
        .args(["--out"])
        .arg(&out));
    let jsonl = fs::read_to_string(out.join("attributions.jsonl")).unwrap();
    let record: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(record["chosen"], "apple");
}

#[test]
fn attribute_missing_profiles_is_a_data_error() {
    let code = exit_code(bin()
        .args(["attribute", "--profiles", "/nonexistent/profiles.json"])
        .arg("--docs")
        .arg(fixture("worked_doc.jsonl"))
        .args(["--out", "/tmp/unused"]));
    assert_eq!(code, 3);
}

fn write_crossval_corpus(path: &Path) {
    let mut lines = String::new();
    for d in 0..6 {
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({"author": "apple", "id": format!("apple/d{d}"),
                "text": "orchard cider harvest orchard press cider apple grove mill wall"})
        ));
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({"author": "quantum", "id": format!("quantum/d{d}"),
                "text": "flux drive entangle flux core drive star field lattice spin"})
        ));
    }
    fs::write(path, lines).unwrap();
}

#[test]
fn crossval_fixed_hypers_completes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    write_crossval_corpus(&corpus);

    let run = |out: &Path| {
        run_ok(bin()
            .args(["crossval", "--corpus"])
            .arg(&corpus)
            .args([
                "--layout", "jsonl", "--folds", "2", "--seed", "77", "--tokens", "words",
                "--p0", "global", "--fragment", "full", "--criterion", "ml", "--delta", "1.0",
                "--out",
            ])
            .arg(out));
    };
    let out1 = dir.path().join("cv1");
    let out2 = dir.path().join("cv2");
    run(&out1);
    run(&out2);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("crossval.json")).unwrap()).unwrap();
    assert_eq!(report["k"], 2);
    assert_eq!(report["seed"], 77);
    assert_eq!(report["folds"].as_array().unwrap().len(), 2);
    assert!(report["mean_test_accuracy"].as_f64().unwrap() >= 0.99);
    for fold in report["folds"].as_array().unwrap() {
        assert!(fold["test_accuracy"].is_number());
    }
    assert_eq!(
        fs::read(out1.join("crossval.json")).unwrap(),
        fs::read(out2.join("crossval.json")).unwrap()
    );
    // metrics files exist and carry the seed
    let metrics_csv = fs::read_to_string(out1.join("metrics.csv")).unwrap();
    assert!(metrics_csv.starts_with("# seed=77"));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("metrics.json")).unwrap()).unwrap();
    // single-label pooling: micro equals accuracy
    assert_eq!(metrics["accuracy"], metrics["micro_f1"]);
}

#[test]
fn crossval_delta_sweep_with_fixed_hypers() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    write_crossval_corpus(&corpus);
    let out = dir.path().join("cv");
    run_ok(bin()
        .args(["crossval", "--corpus"])
        .arg(&corpus)
        .args([
            "--layout", "jsonl", "--folds", "2", "--seed", "1", "--tokens", "words",
            "--p0", "global", "--fragment", "full", "--criterion", "ml", "--delta", "sweep",
            "--out",
        ])
        .arg(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("crossval.json")).unwrap()).unwrap();
    for fold in report["folds"].as_array().unwrap() {
        assert!(fold["config"]["delta"].as_f64().unwrap() > 0.0);
        assert!(fold["validation_accuracy"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn crossval_config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    write_crossval_corpus(&corpus);
    // config says 10 folds; the flag forces 2
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        r#"
folds = 10
tokens = "words"
p0 = "global"
fragment = "full"
criterion = "ml"
delta = "1.0"
"#,
    )
    .unwrap();
    let out = dir.path().join("cv");
    run_ok(bin()
        .args(["crossval", "--corpus"])
        .arg(&corpus)
        .args(["--layout", "jsonl", "--config"])
        .arg(&config)
        .args(["--folds", "2", "--out"])
        .arg(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("crossval.json")).unwrap()).unwrap();
    assert_eq!(report["k"], 2);
}

#[test]
fn simulate_writes_monotone_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    run_ok(bin().args([
        "simulate", "--model", "pd", "--alpha", "0.6", "--theta", "20", "--tmax", "5000",
        "--seed", "5",
    ])
    .arg("--out")
    .arg(&out));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# model=pd"));
    assert_eq!(lines.next().unwrap(), "t,D_t");
    let mut prev = 0u64;
    let mut rows = 0;
    for line in lines {
        let (_, d) = line.split_once(',').unwrap();
        let d: u64 = d.parse().unwrap();
        assert!(d >= prev);
        prev = d;
        rows += 1;
    }
    assert_eq!(rows, 5000);

    // umt model with the exchangeable default for rho_tilde
    let out2 = dir.path().join("urn.csv");
    run_ok(bin().args([
        "simulate", "--model", "umt", "--rho", "4", "--nu", "2", "--n0", "8", "--tmax", "1000",
        "--seed", "5",
    ])
    .arg("--out")
    .arg(&out2));
    assert!(fs::read_to_string(&out2).unwrap().lines().count() > 1000);
}

#[test]
fn synth_roundtrips_through_the_corpus_loader() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("synth.jsonl");
    run_ok(bin().args([
        "synth",
        "--authors",
        "3",
        "--docs",
        "2",
        "--tokens-per-doc",
        "200",
        "--seed",
        "11",
    ])
    .arg("--out")
    .arg(&out));
    let (corpus, report) = load_corpus(&out, CorpusLayout::JsonlManifest, Encoding::Latin1).unwrap();
    assert_eq!(corpus.author_count(), 3);
    assert_eq!(corpus.len(), 6);
    assert!(report.dropped_authors.is_empty());
}
