//! Authorship attribution through two-parameter Poisson-Dirichlet sequence
//! models (CP2D), together with the urn-based simulator used to generate
//! synthetic corpora with known ground truth.
//!
//! The pipeline is: load a corpus ([`corpus`]), turn each document into a
//! token stream ([`tokenizer`]), fit per-author discount/concentration
//! parameters by maximum likelihood ([`estimator`]), score candidate texts
//! as continuations of each author's production ([`pdmodel`]), aggregate
//! fragment scores into document attributions ([`attribution`]), and select
//! hyperparameters by cross-validated grid search ([`tuner`]). [`umtsim`]
//! provides the generative side: urn-model and Poisson-Dirichlet simulators,
//! Heaps-law checks, and synthetic corpus generation.

pub mod attribution;
pub mod corpus;
pub mod estimator;
pub mod metrics;
pub mod pdmodel;
pub mod special;
pub mod tokenizer;
pub mod tuner;
pub mod umtsim;

pub use corpus::{load_corpus, leave_one_out, stratified_folds, Corpus, CorpusError, CorpusLayout, Document, Encoding, FoldPlan};
pub use pdmodel::{AuthorParams, AuthorProfile, BaseDistribution, LogProb, P0Strategy, TextScore};
pub use tokenizer::{tokenize, MultiplicitySpectrum, TokenStream, TokenizerSpec, TypeCounts, TypeId, Vocabulary};
