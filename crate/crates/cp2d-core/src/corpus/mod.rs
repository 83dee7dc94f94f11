//! Corpus ingestion, the author/document model, and train/test partitioning.
//!
//! A corpus is a flat list of documents, each owned by exactly one author,
//! with text stored as bytes in a declared single-byte encoding. Authors
//! with a single document are dropped at load time. Partitioning utilities
//! (stratified k-fold, leave-one-out, explicit split manifests) all key off
//! stable document ids so plans are reproducible across runs and platforms.

mod encoding;

pub use encoding::{decode, encode_char, lower_letter, transcode, Encoding};

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("empty corpus after filtering single-document authors")]
    EmptyCorpus,
    #[error("duplicate document id: {0}")]
    DuplicateDocId(String),
    #[error("malformed manifest line {line}: {message}")]
    BadManifest { line: usize, message: String },
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
    #[error("unknown document id in split manifest: {0}")]
    UnknownSplitDoc(String),
    #[error("invalid split label {label:?} for document {id}")]
    BadSplitLabel { id: String, label: String },
}

/// One text with a known author.
#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub author: String,
    /// Text as one byte per character in the corpus encoding.
    pub bytes: Vec<u8>,
    pub char_count: usize,
}

/// A loaded reference corpus. Documents keep load order; the author index
/// is sorted so every per-author iteration is deterministic.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub encoding: Encoding,
    pub documents: Vec<Document>,
    authors: BTreeMap<String, Vec<usize>>,
}

/// Authors removed at load time because they had a single document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DropReport {
    pub dropped_authors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusLayout {
    /// `<root>/<author>/<doc>.txt`
    DirTree,
    /// One JSON object per line with fields `author`, `id`, `text`.
    JsonlManifest,
}

impl CorpusLayout {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dir" | "dir_tree" | "dirtree" => Some(CorpusLayout::DirTree),
            "jsonl" | "jsonl_manifest" => Some(CorpusLayout::JsonlManifest),
            _ => None,
        }
    }
}

impl Corpus {
    /// Build a corpus from documents, dropping single-document authors.
    pub fn from_documents(
        encoding: Encoding,
        documents: Vec<Document>,
    ) -> Result<(Self, DropReport), CorpusError> {
        let mut seen_ids: HashSet<&str> = HashSet::new();
        for d in &documents {
            if !seen_ids.insert(&d.id) {
                return Err(CorpusError::DuplicateDocId(d.id.clone()));
            }
        }
        let mut by_author: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, d) in documents.iter().enumerate() {
            by_author.entry(d.author.clone()).or_default().push(i);
        }
        let dropped: Vec<String> = by_author
            .iter()
            .filter(|(_, docs)| docs.len() < 2)
            .map(|(a, _)| a.clone())
            .collect();
        let keep: Vec<Document> = documents
            .into_iter()
            .filter(|d| !dropped.contains(&d.author))
            .collect();
        if keep.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut authors: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, d) in keep.iter().enumerate() {
            authors.entry(d.author.clone()).or_default().push(i);
        }
        Ok((
            Corpus {
                encoding,
                documents: keep,
                authors,
            },
            DropReport {
                dropped_authors: dropped,
            },
        ))
    }

    /// Author ids in sorted order with their document indices.
    pub fn authors(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.authors.iter().map(|(a, v)| (a.as_str(), v.as_slice()))
    }

    pub fn author_count(&self) -> usize {
        self.authors.len()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.id == id)
    }

    /// Write the corpus in the jsonl manifest layout.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for d in &self.documents {
            let line = serde_json::json!({
                "author": d.author,
                "id": d.id,
                "text": decode(&d.bytes, self.encoding),
            });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Load a corpus from disk in one of the supported layouts.
pub fn load_corpus(
    root: &Path,
    layout: CorpusLayout,
    encoding: Encoding,
) -> Result<(Corpus, DropReport), CorpusError> {
    let documents = match layout {
        CorpusLayout::DirTree => load_dir_tree(root, encoding)?,
        CorpusLayout::JsonlManifest => load_jsonl(root, encoding)?,
    };
    Corpus::from_documents(encoding, documents)
}

fn read_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Unreadable {
        path: path.display().to_string(),
        source,
    }
}

fn load_dir_tree(root: &Path, encoding: Encoding) -> Result<Vec<Document>, CorpusError> {
    let mut authors: Vec<_> = fs::read_dir(root)
        .map_err(|e| read_err(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    authors.sort();
    let mut documents = Vec::new();
    for author_dir in authors {
        let author = author_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<_> = fs::read_dir(&author_dir)
            .map_err(|e| read_err(&author_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|x| x == "txt").unwrap_or(false))
            .collect();
        files.sort();
        for file in files {
            let raw = fs::read(&file).map_err(|e| read_err(&file, e))?;
            let text = String::from_utf8_lossy(&raw);
            let bytes = transcode(&text, encoding);
            let stem = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            if bytes.is_empty() {
                continue;
            }
            let char_count = bytes.len();
            documents.push(Document {
                id: format!("{author}/{stem}"),
                author: author.clone(),
                bytes,
                char_count,
            });
        }
    }
    Ok(documents)
}

#[derive(Deserialize)]
struct ManifestLine {
    author: String,
    id: String,
    text: String,
}

fn load_jsonl(path: &Path, encoding: Encoding) -> Result<Vec<Document>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| read_err(path, e))?;
    let reader = BufReader::new(file);
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| read_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine =
            serde_json::from_str(&line).map_err(|e| CorpusError::BadManifest {
                line: i + 1,
                message: e.to_string(),
            })?;
        let bytes = transcode(&parsed.text, encoding);
        if bytes.is_empty() {
            continue;
        }
        let char_count = bytes.len();
        documents.push(Document {
            id: parsed.id,
            author: parsed.author,
            bytes,
            char_count,
        });
    }
    Ok(documents)
}

/// A stratified fold assignment: document id -> fold index in [0, k).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    /// Document indices for (train, test) of one fold.
    pub fn split(&self, corpus: &Corpus, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, d) in corpus.documents.iter().enumerate() {
            if self.assignment.get(&d.id) == Some(&fold) {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Assign each author's documents to folds round-robin after a seeded
/// shuffle. Per author the fold sizes differ by at most one; authors with
/// fewer documents than folds appear in only some test sets but in every
/// training set.
pub fn stratified_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan, CorpusError> {
    if k < 2 {
        return Err(CorpusError::BadFoldCount(k));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for (_, doc_indices) in corpus.authors() {
        let mut ids: Vec<&str> = doc_indices
            .iter()
            .map(|&i| corpus.documents[i].id.as_str())
            .collect();
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        // a random starting fold spreads the remainders across folds
        let offset = rng.gen_range(0..k);
        for (i, id) in ids.into_iter().enumerate() {
            assignment.insert(id.to_string(), (offset + i) % k);
        }
    }
    Ok(FoldPlan { k, assignment })
}

/// Yields (train document indices, held-out document index) for every
/// document in the corpus.
pub fn leave_one_out(corpus: &Corpus) -> impl Iterator<Item = (Vec<usize>, usize)> + '_ {
    (0..corpus.documents.len()).map(move |held| {
        let train = (0..corpus.documents.len()).filter(|&i| i != held).collect();
        (train, held)
    })
}

/// Role of a document in an externally provided split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

/// An explicit split manifest: JSON object mapping document id to
/// "train" | "validation" | "test". Documents absent from the manifest are
/// treated as training data.
#[derive(Debug, Clone)]
pub struct SplitManifest {
    pub roles: BTreeMap<String, SplitRole>,
}

impl SplitManifest {
    pub fn from_json(json: &str) -> Result<Self, CorpusError> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(json).map_err(|e| CorpusError::BadManifest {
                line: 0,
                message: e.to_string(),
            })?;
        let mut roles = BTreeMap::new();
        for (id, label) in raw {
            let role = match label.as_str() {
                "train" => SplitRole::Train,
                "validation" => SplitRole::Validation,
                "test" => SplitRole::Test,
                _ => return Err(CorpusError::BadSplitLabel { id, label }),
            };
            roles.insert(id, role);
        }
        Ok(SplitManifest { roles })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let json = fs::read_to_string(path).map_err(|e| read_err(path, e))?;
        Self::from_json(&json)
    }

    /// Partition corpus document indices into (train, validation, test).
    pub fn partition(
        &self,
        corpus: &Corpus,
    ) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), CorpusError> {
        for id in self.roles.keys() {
            if corpus.doc_index(id).is_none() {
                return Err(CorpusError::UnknownSplitDoc(id.clone()));
            }
        }
        let mut train = Vec::new();
        let mut validation = Vec::new();
        let mut test = Vec::new();
        for (i, d) in corpus.documents.iter().enumerate() {
            match self.roles.get(&d.id) {
                Some(SplitRole::Validation) => validation.push(i),
                Some(SplitRole::Test) => test.push(i),
                _ => train.push(i),
            }
        }
        Ok((train, validation, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn doc(id: &str, author: &str, text: &str) -> Document {
        let bytes = transcode(text, Encoding::Latin1);
        let char_count = bytes.len();
        Document {
            id: id.to_string(),
            author: author.to_string(),
            bytes,
            char_count,
        }
    }

    fn corpus_with(spec: &[(&str, usize)]) -> Corpus {
        let mut docs = Vec::new();
        for (author, n) in spec {
            for i in 0..*n {
                docs.push(doc(&format!("{author}/d{i}"), author, "some text here"));
            }
        }
        Corpus::from_documents(Encoding::Latin1, docs).unwrap().0
    }

    #[test]
    fn single_document_authors_are_dropped() {
        let docs = vec![
            doc("A/one", "A", "alpha text"),
            doc("A/two", "A", "more alpha"),
            doc("B/only", "B", "beta text"),
        ];
        let (corpus, report) = Corpus::from_documents(Encoding::Latin1, docs).unwrap();
        assert_eq!(corpus.author_count(), 1);
        assert_eq!(corpus.len(), 2);
        assert_eq!(report.dropped_authors, vec!["B".to_string()]);
    }

    #[test]
    fn empty_corpus_errors() {
        let err = Corpus::from_documents(Encoding::Latin1, vec![]).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyCorpus));
        // a corpus where everything gets filtered is empty too
        let err = Corpus::from_documents(Encoding::Latin1, vec![doc("B/b", "B", "x")]).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyCorpus));
    }

    #[test]
    fn duplicate_ids_error() {
        let docs = vec![doc("same", "A", "x"), doc("same", "A", "y")];
        let err = Corpus::from_documents(Encoding::Latin1, docs).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateDocId(_)));
    }

    #[test]
    fn dir_tree_loading() {
        let dir = tempfile::tempdir().unwrap();
        for (author, files) in [("A", 2), ("B", 1)] {
            let adir = dir.path().join(author);
            fs::create_dir(&adir).unwrap();
            for i in 0..files {
                let mut f = fs::File::create(adir.join(format!("doc{i}.txt"))).unwrap();
                writeln!(f, "text of {author} {i}").unwrap();
            }
        }
        let (corpus, report) =
            load_corpus(dir.path(), CorpusLayout::DirTree, Encoding::Latin1).unwrap();
        assert_eq!(corpus.author_count(), 1);
        assert_eq!(report.dropped_authors, vec!["B".to_string()]);
        assert_eq!(corpus.documents[0].id, "A/doc0");
    }

    #[test]
    fn empty_dir_errors() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(dir.path(), CorpusLayout::DirTree, Encoding::Latin1).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyCorpus));
    }

    #[test]
    fn jsonl_loading_filters_per_author() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut f = fs::File::create(&path).unwrap();
        for line in [
            r#"{"author":"A","id":"a1","text":"one"}"#,
            r#"{"author":"A","id":"a2","text":"two"}"#,
            r#"{"author":"C","id":"c1","text":"three"}"#,
            r#"{"author":"C","id":"c2","text":"four"}"#,
        ] {
            writeln!(f, "{line}").unwrap();
        }
        let (corpus, report) =
            load_corpus(&path, CorpusLayout::JsonlManifest, Encoding::Latin1).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus.author_count(), 2);
        assert!(report.dropped_authors.is_empty());
    }

    #[test]
    fn stratified_even_author() {
        let corpus = corpus_with(&[("A", 20)]);
        let plan = stratified_folds(&corpus, 10, 7).unwrap();
        let mut per_fold = vec![0usize; 10];
        for f in plan.assignment.values() {
            per_fold[*f] += 1;
        }
        assert!(per_fold.iter().all(|&c| c == 2));
    }

    #[test]
    fn stratified_small_author_present_in_all_train_sets() {
        let corpus = corpus_with(&[("A", 2), ("B", 10)]);
        let plan = stratified_folds(&corpus, 10, 99).unwrap();
        let a_folds: HashSet<usize> = corpus
            .documents
            .iter()
            .filter(|d| d.author == "A")
            .map(|d| plan.assignment[&d.id])
            .collect();
        assert_eq!(a_folds.len(), 2);
        for fold in 0..10 {
            let (train, _) = plan.split(&corpus, fold);
            assert!(train.iter().any(|&i| corpus.documents[i].author == "A"));
        }
    }

    #[test]
    fn stratified_is_deterministic() {
        let corpus = corpus_with(&[("A", 7), ("B", 3), ("C", 13)]);
        let p1 = stratified_folds(&corpus, 5, 1234).unwrap();
        let p2 = stratified_folds(&corpus, 5, 1234).unwrap();
        assert_eq!(p1, p2);
        let p3 = stratified_folds(&corpus, 5, 1235).unwrap();
        assert_ne!(p1, p3);
    }

    #[test]
    fn stratified_spread_within_one() {
        let corpus = corpus_with(&[("A", 7), ("B", 23), ("C", 2), ("D", 11)]);
        let plan = stratified_folds(&corpus, 5, 42).unwrap();
        for (author, docs) in corpus.authors() {
            let mut per_fold = vec![0usize; 5];
            for &i in docs {
                per_fold[plan.assignment[&corpus.documents[i].id]] += 1;
            }
            let lo = per_fold.iter().min().unwrap();
            let hi = per_fold.iter().max().unwrap();
            assert!(hi - lo <= 1, "author {author}: {per_fold:?}");
        }
    }

    #[test]
    fn bad_fold_count() {
        let corpus = corpus_with(&[("A", 4)]);
        assert!(matches!(
            stratified_folds(&corpus, 1, 0),
            Err(CorpusError::BadFoldCount(1))
        ));
    }

    #[test]
    fn leave_one_out_partitions() {
        let corpus = corpus_with(&[("A", 3), ("B", 2)]);
        let pairs: Vec<_> = leave_one_out(&corpus).collect();
        assert_eq!(pairs.len(), 5);
        let mut heldout = HashSet::new();
        for (train, held) in &pairs {
            assert!(!train.contains(held));
            assert_eq!(train.len(), 4);
            heldout.insert(*held);
        }
        assert_eq!(heldout.len(), 5);
    }

    #[test]
    fn split_manifest_roundtrip() {
        let corpus = corpus_with(&[("A", 2), ("B", 2)]);
        let json = r#"{"A/d0":"train","A/d1":"test","B/d0":"validation"}"#;
        let manifest = SplitManifest::from_json(json).unwrap();
        let (train, validation, test) = manifest.partition(&corpus).unwrap();
        // unlisted documents default to train
        assert_eq!(train.len(), 2);
        assert_eq!(validation.len(), 1);
        assert_eq!(test.len(), 1);
        let bad = SplitManifest::from_json(r#"{"A/d0":"dev"}"#);
        assert!(bad.is_err());
        let unknown = SplitManifest::from_json(r#"{"nope":"train"}"#).unwrap();
        assert!(unknown.partition(&corpus).is_err());
    }
}
