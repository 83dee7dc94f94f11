//! Shared fixtures for the criterion benchmarks.

use cp2d_core::corpus::Corpus;
use cp2d_core::umtsim::{synth_corpus, SynthConfig};

/// A small but non-trivial corpus for benchmarking: 6 authors, 8 documents
/// of 1,500 tokens each.
pub fn bench_corpus() -> Corpus {
    synth_corpus(&SynthConfig {
        n_authors: 6,
        docs_per_author: 8,
        tokens_per_doc: 1500,
        seed: 99,
        ..SynthConfig::default()
    })
    .expect("bench corpus generates")
}
