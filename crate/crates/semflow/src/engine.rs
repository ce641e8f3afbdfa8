//! Query pipeline composition: subgraph construction, feature augmentation,
//! seeding, propagation and ranking over loaded artifacts.

use std::collections::HashSet;
use std::path::Path;

use crate::config::Config;
use crate::corpus::{self, Corpus, CorpusError, NBowVector};
use crate::graph::{
    augment_feature_nodes, build_query_subgraph, GraphError, QueryDoc,
};
use crate::propagate::{rank_nodes, PropagateError, Propagator};
use crate::seeding::{assign_seeds, SeedSet};
use crate::topics::{self, TopicModel, TopicsError};
use crate::transport::{self, CostCache, EmbeddingMatrix, TransportError};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("query has no vocabulary overlap with the index")]
    EmptyQuery,
    #[error("unknown doc id `{0}`")]
    UnknownDoc(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
}

/// Errors while loading the three artifacts an engine needs.
#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Topics(#[from] TopicsError),
}

/// Immutable retrieval state shared by all queries.
pub struct Engine {
    pub corpus: Corpus,
    pub embeddings: EmbeddingMatrix,
    pub model: TopicModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub id: String,
    pub label: f64,
    pub wmd: f64,
}

#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub ranked: Vec<RankedResult>,
    pub seeds: SeedSet,
    pub real_nodes: usize,
    pub feature_nodes: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl Engine {
    pub fn new(corpus: Corpus, embeddings: EmbeddingMatrix, model: TopicModel) -> Self {
        Engine {
            corpus,
            embeddings,
            model,
        }
    }

    /// Loads index, topic model and embeddings, re-aligning the embedding
    /// matrix to the index vocabulary under the given missing policy.
    pub fn load(
        index: &Path,
        model: &Path,
        embeddings: &Path,
        policy: transport::MissingPolicy,
    ) -> Result<Engine, ArtifactError> {
        let corpus = corpus::load_index(index)?;
        let raw = transport::load_embeddings(embeddings)?;
        let ec = transport::attach_embeddings(&raw, corpus, policy)?;
        let parsed = topics::load_model(model)?;
        let model = topics::resolve_model(&parsed, &ec.corpus)?;
        Ok(Engine::new(ec.corpus, ec.embeddings, model))
    }

    /// Builds a query from free text: preprocess, map into the vocabulary
    /// (unknown terms drop out; stopwords and pruned terms are not in the
    /// vocabulary to begin with).
    pub fn query_from_text(&self, text: &str) -> Result<QueryDoc, EngineError> {
        let toks = corpus::preprocess(text, &HashSet::new());
        let ids: Vec<u32> = toks
            .iter()
            .filter_map(|t| self.corpus.vocabulary.id(t))
            .collect();
        if ids.is_empty() {
            return Err(EngineError::EmptyQuery);
        }
        Ok(QueryDoc {
            nbow: NBowVector::from_tokens(&ids),
            tokens: ids,
            corpus_index: None,
        })
    }

    /// Builds a query from an indexed document; it is excluded from its own
    /// candidate pools.
    pub fn query_from_id(&self, id: &str) -> Result<QueryDoc, EngineError> {
        let idx = self
            .corpus
            .doc_index(id)
            .ok_or_else(|| EngineError::UnknownDoc(id.to_string()))?;
        let d = &self.corpus.documents[idx];
        Ok(QueryDoc {
            nbow: d.nbow.clone(),
            tokens: d.tokens.clone(),
            corpus_index: Some(idx),
        })
    }

    /// Runs the full pipeline for one query. `seed_override` replaces the
    /// configured propagation RNG seed (evaluation derives one per query).
    pub fn run_query(
        &self,
        query: &QueryDoc,
        cfg: &Config,
        seed_override: Option<u64>,
        mut trace: Option<&mut dyn FnMut(usize, f64, f64)>,
    ) -> Result<QueryOutcome, EngineError> {
        let cache = CostCache::new(&self.embeddings);
        let graph = build_query_subgraph(
            query,
            &self.corpus,
            &cache,
            &self.embeddings,
            &cfg.retrieval,
        )?;
        let pool = graph.pool.clone();
        let graph = augment_feature_nodes(graph, &self.corpus, &pool, &cfg.retrieval.features);

        let seeds = assign_seeds(query, &graph, &self.corpus, &self.model, cfg.k_prime);

        let mut params = cfg.propagation.clone();
        if let Some(s) = seed_override {
            params.rng_seed = s;
        }
        let prop = Propagator::new(&graph, &seeds, &params)?;
        let state = match trace.as_deref_mut() {
            Some(f) => prop.run_traced(f),
            None => prop.run(),
        };

        let ranked = rank_nodes(&state, &graph, &self.corpus, cfg.k_out)
            .into_iter()
            .map(|r| RankedResult {
                id: self.corpus.documents[r.doc].id.clone(),
                label: r.label,
                wmd: r.wmd,
            })
            .collect();

        Ok(QueryOutcome {
            ranked,
            seeds,
            real_nodes: graph.real_nodes.len(),
            feature_nodes: graph.feature_nodes.len(),
            iterations: state.iterations,
            converged: state.converged,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::corpus::{build_corpus, RawDocument};
    use crate::topics::TsvdParams;
    use crate::transport::{attach_embeddings, parse_embeddings, MissingPolicy};

    fn tiny_engine() -> (Engine, Config) {
        let texts = [
            "a a b", "a b b", "a a a", "c c d", "c d d", "c c c", "a b d", "b b a",
        ];
        let docs: Vec<RawDocument> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| RawDocument {
                id: format!("d{i}"),
                text: t.to_string(),
            })
            .collect();
        let corpus = build_corpus(&docs, &Default::default(), 0).unwrap().corpus;
        let raw = parse_embeddings(&b"4 2\na 0 0\nb 1 0\nc 10 10\nd 11 10\n"[..]).unwrap();
        let ec = attach_embeddings(&raw, corpus, MissingPolicy::Error).unwrap();
        let mut params = TsvdParams::with_topics(2);
        params.kmeans_seed = 1;
        let fit = crate::topics::fit(&ec.corpus, &params).unwrap();
        let mut cfg = Config::default();
        cfg.apply_json(r#"{"retrieval.k": 2, "k_out": 5, "propagate.dropout_p": 0.0}"#)
            .unwrap();
        cfg.finalize();
        (Engine::new(ec.corpus, ec.embeddings, fit.model), cfg)
    }

    #[test]
    fn indexed_duplicate_ranks_first() {
        let (engine, cfg) = tiny_engine();
        // query text identical to d2 ("a a a"): that doc must come first
        let q = engine.query_from_text("a a a").unwrap();
        let out = engine.run_query(&q, &cfg, None, None).unwrap();
        assert_eq!(out.ranked[0].id, "d2");
        assert_eq!(out.ranked[0].wmd, 0.0);
    }

    #[test]
    fn unknown_tokens_yield_empty_query() {
        let (engine, _) = tiny_engine();
        assert!(matches!(
            engine.query_from_text("zzz qqq"),
            Err(EngineError::EmptyQuery)
        ));
        assert!(matches!(
            engine.query_from_id("nope"),
            Err(EngineError::UnknownDoc(_))
        ));
    }

    #[test]
    fn indexed_query_excludes_itself() {
        let (engine, cfg) = tiny_engine();
        let q = engine.query_from_id("d0").unwrap();
        let out = engine.run_query(&q, &cfg, None, None).unwrap();
        assert!(out.ranked.iter().all(|r| r.id != "d0"));
    }

    #[test]
    fn query_is_deterministic() {
        let (engine, cfg) = tiny_engine();
        let q = engine.query_from_text("a b").unwrap();
        let a = engine.run_query(&q, &cfg, None, None).unwrap();
        let b = engine.run_query(&q, &cfg, None, None).unwrap();
        assert_eq!(a.ranked, b.ranked);
    }

    #[test]
    fn trace_callback_fires() {
        let (engine, cfg) = tiny_engine();
        let q = engine.query_from_text("a b").unwrap();
        let mut rows = Vec::new();
        let mut cb = |it: usize, delta: f64, obj: f64| rows.push((it, delta, obj));
        engine
            .run_query(&q, &cfg, None, Some(&mut cb))
            .unwrap();
        assert!(!rows.is_empty());
        assert_eq!(rows[0].0, 1);
    }
}
