//! Unsupervised semantic-similarity retrieval.
//!
//! Given an indexed corpus and word embeddings, a query is answered by
//! building a query-induced semantic flow subgraph (WMD nearest neighbors,
//! one and two hops, plus IDF-weighted lexical feature nodes), soft-seeding
//! it from a thresholded-SVD topic model, and running modified Jacobi label
//! propagation over the graph. Final labels rank the documents.

pub mod config;
pub mod corpus;
pub mod engine;
pub mod eval;
pub mod graph;
pub mod propagate;
pub mod seeding;
pub mod synth;
pub mod topics;
pub mod transport;
pub mod util;

pub use config::Config;
pub use corpus::{Corpus, CorpusError, NBowVector, RawDocument, Vocabulary};
pub use engine::Engine;
pub use transport::{EmbeddingMatrix, MissingPolicy, TransportError, TransportPlan};
