//! Semi-supervised topic modeling by collapsed Gibbs sampling.
//!
//! Topics can be seeded with keywords ahead of fitting; the sampler then
//! tracks, per token, both a topic assignment and an indicator selecting
//! between a topic's keyword distribution and its general word
//! distribution. Three variants share the token-level machinery: a base
//! model with a sampled concentration vector, a covariate model driving
//! document-topic priors through a Dirichlet-multinomial regression, and a
//! dynamic model evolving the priors over time with a forward-only hidden
//! Markov model. A weighted-LDA baseline is the same sampler with the
//! keyword layer switched off.

pub mod base;
pub mod corpus;
pub mod counts;
pub mod covariate;
pub mod dynamic;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod export;
pub mod hyper;
pub mod keywords;
pub mod rng;
pub mod runner;
pub mod slice;
pub mod snapshot;
pub mod trace;
pub mod weights;

pub use base::{BaseChainState, Mode};
pub use corpus::{load_corpus, Corpus, CorpusOptions};
pub use counts::{rebuild_counts, CountTables};
pub use error::{Error, Result};
pub use hyper::HyperParams;
pub use keywords::{keyword_diagnostics, load_keywords, KeywordDictionary};
pub use rng::RandomStream;
pub use slice::SliceOptions;
pub use weights::{compute_term_weights, TermWeights};
