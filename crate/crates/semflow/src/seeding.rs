//! Soft seed assignment over the query subgraph.
//!
//! The query node is the one hard seed (label 1.0). 1-seeds are graph
//! documents from the query's own cluster, ranked by cosine similarity of
//! sparse catchword representations, labeled with the similarity. 0-seeds
//! come from the cluster whose topic vector lies farthest from the query's,
//! labeled with their (clamped) topic differential score.

use crate::corpus::{Corpus, NBowVector};
use crate::graph::{QueryDoc, QueryGraph};
use crate::topics::{catchword_weights, TopicModel};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SeedError {
    #[error("query has an all-zero catchword vector")]
    NoDominantTopic,
    #[error("no graph node lies in the contrast cluster")]
    NoContrastTopic,
}

/// Upper bound on labels assigned to 0-seeds, keeping them strictly below
/// the uniform prior so seed strength `max(s, 1-s)` stays above 0.5.
const ZERO_SEED_CAP: f64 = 0.5 - 1e-9;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na <= 0.0 || nb <= 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Default seeds-per-class: `max(3, ceil(0.05 |V_R|))`, capped at a quarter
/// of the graph so seeds cannot dominate it.
pub fn default_k_prime(n_real: usize) -> usize {
    let want = ((0.05 * n_real as f64).ceil() as usize).max(3);
    want.min(n_real / 4)
}

/// The query's dominant topic: its stored cluster when indexed, otherwise
/// the argmax of its catchword weights.
pub fn dominant_topic(
    query: &QueryDoc,
    query_cw: &[f64],
    model: &TopicModel,
) -> Result<usize, SeedError> {
    if let Some(i) = query.corpus_index {
        return Ok(model.dominant[i]);
    }
    if query_cw.iter().all(|&w| w <= 0.0) {
        return Err(SeedError::NoDominantTopic);
    }
    let mut best = 0usize;
    for l in 1..query_cw.len() {
        if query_cw[l] > query_cw[best] {
            best = l;
        }
    }
    Ok(best)
}

fn node_doc(graph: &QueryGraph, i: usize) -> Option<usize> {
    graph.real_nodes[i].doc
}

/// 1-seeds: graph documents sharing the query's cluster, ranked by cosine
/// similarity between catchword representations. Only strictly positive
/// similarities seed; the similarity is the soft label.
pub fn assign_one_seeds(
    query_cw: &[f64],
    query_cluster: usize,
    graph: &QueryGraph,
    corpus: &Corpus,
    model: &TopicModel,
    k_prime: usize,
) -> Result<Vec<(usize, f64)>, SeedError> {
    if query_cw.iter().all(|&w| w <= 0.0) {
        return Err(SeedError::NoDominantTopic);
    }
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for i in 1..graph.real_nodes.len() {
        let d = match node_doc(graph, i) {
            Some(d) => d,
            None => continue,
        };
        if model.dominant[d] != query_cluster {
            continue;
        }
        let cw = catchword_weights(&corpus.documents[d].nbow, &model.catchwords);
        if cw.iter().all(|&w| w <= 0.0) {
            continue;
        }
        let sim = cosine(query_cw, &cw);
        if sim > 0.0 {
            scored.push((i, sim));
        }
    }
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1).then_with(|| {
            let ia = node_doc(graph, a.0).unwrap();
            let ib = node_doc(graph, b.0).unwrap();
            corpus.documents[ia].id.cmp(&corpus.documents[ib].id)
        })
    });
    scored.truncate(k_prime);
    Ok(scored)
}

/// Relative mass of topic `l` in a document's catchword representation;
/// 0 when the document holds no topic-`l` catchwords.
pub fn topic_differential(doc: &NBowVector, l: usize, model: &TopicModel) -> f64 {
    let cw = catchword_weights(doc, &model.catchwords);
    let total: f64 = cw.iter().sum();
    cw[l] / (total + 1e-9)
}

/// The contrast topic for `l`: the nonempty cluster whose M_hat column lies
/// at maximum Euclidean distance from column `l` (ties to the lowest index).
pub fn contrast_topic(l: usize, model: &TopicModel) -> Result<usize, SeedError> {
    let mut best: Option<(usize, f64)> = None;
    for lp in 0..model.k_topics {
        if lp == l || model.cluster_size(lp) == 0 {
            continue;
        }
        let d = model.m_hat_distance(l, lp);
        let better = match best {
            None => true,
            Some((_, bd)) => d > bd,
        };
        if better {
            best = Some((lp, d));
        }
    }
    best.map(|(lp, _)| lp).ok_or(SeedError::NoContrastTopic)
}

/// 0-seeds: graph documents in the contrast cluster with the lowest topic
/// differential w.r.t. the query's topic; the clamped score is the label.
pub fn assign_zero_seeds(
    query_cluster: usize,
    graph: &QueryGraph,
    corpus: &Corpus,
    model: &TopicModel,
    k_prime: usize,
) -> Result<Vec<(usize, f64)>, SeedError> {
    let lp = contrast_topic(query_cluster, model)?;
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for i in 1..graph.real_nodes.len() {
        let d = match node_doc(graph, i) {
            Some(d) => d,
            None => continue,
        };
        if model.dominant[d] != lp {
            continue;
        }
        let score = topic_differential(&corpus.documents[d].nbow, query_cluster, model);
        scored.push((i, score));
    }
    if scored.is_empty() {
        return Err(SeedError::NoContrastTopic);
    }
    scored.sort_by(|a, b| {
        a.1.total_cmp(&b.1).then_with(|| {
            let ia = node_doc(graph, a.0).unwrap();
            let ib = node_doc(graph, b.0).unwrap();
            corpus.documents[ia].id.cmp(&corpus.documents[ib].id)
        })
    });
    scored.truncate(k_prime);
    Ok(scored
        .into_iter()
        .map(|(i, s)| (i, s.min(ZERO_SEED_CAP)))
        .collect())
}

/// A complete seed assignment for one query graph. The hard seed (query
/// node, label 1.0) is implicit; soft-seed lists are disjoint by
/// construction and disjoint from the query node.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    pub one_seeds: Vec<(usize, f64)>,
    pub zero_seeds: Vec<(usize, f64)>,
    pub k_prime: usize,
    /// The query's catchword vector was all-zero: 1-seeding degraded to the
    /// hard seed only.
    pub no_dominant: bool,
    /// No usable contrast cluster: 0-seeding degraded to empty.
    pub no_contrast: bool,
}

/// Assigns all seeds, degrading gracefully (with flags) where the topic
/// model gives no signal.
pub fn assign_seeds(
    query: &QueryDoc,
    graph: &QueryGraph,
    corpus: &Corpus,
    model: &TopicModel,
    k_prime: Option<usize>,
) -> SeedSet {
    let k_prime = k_prime.unwrap_or_else(|| default_k_prime(graph.real_nodes.len()));
    let query_cw = catchword_weights(&query.nbow, &model.catchwords);
    let dominant = dominant_topic(query, &query_cw, model);

    let (one_seeds, no_dominant) = match &dominant {
        Ok(l) => match assign_one_seeds(&query_cw, *l, graph, corpus, model, k_prime) {
            Ok(s) => (s, false),
            Err(SeedError::NoDominantTopic) => (Vec::new(), true),
            Err(_) => (Vec::new(), true),
        },
        Err(_) => (Vec::new(), true),
    };
    let (zero_seeds, no_contrast) = match &dominant {
        Ok(l) => match assign_zero_seeds(*l, graph, corpus, model, k_prime) {
            Ok(s) => (s, false),
            Err(_) => (Vec::new(), true),
        },
        Err(_) => (Vec::new(), true),
    };

    debug_assert!(one_seeds.iter().all(|&(i, _)| i != 0));
    debug_assert!(zero_seeds.iter().all(|&(i, _)| i != 0));
    debug_assert!(one_seeds
        .iter()
        .all(|&(i, _)| zero_seeds.iter().all(|&(j, _)| i != j)));

    SeedSet {
        one_seeds,
        zero_seeds,
        k_prime,
        no_dominant,
        no_contrast,
    }
}
