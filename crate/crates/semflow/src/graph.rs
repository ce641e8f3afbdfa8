//! Query-induced semantic flow subgraphs.
//!
//! A query pulls in its k WMD-nearest documents (1-hop) and, per 1-hop
//! node, up to k more (2-hop), each retrieval pre-filtered by the cheap
//! WCD bound. The real nodes form a complete graph weighted by exact WMD;
//! shared lexical features (word overlap, n-grams, skip-grams up to
//! length 3) are attached as bipartite feature nodes with IDF edges.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;

use rayon::prelude::*;

use crate::corpus::{idf, Corpus, NBowVector};
use crate::transport::{wmd, wmd_matrix, CostSource, EmbeddingMatrix, TransportError};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("corpus too small: need at least {needed} documents, have {have}")]
    CorpusTooSmall { needed: usize, have: usize },
    #[error("not enough candidates: need {k}, have {have}")]
    NotEnoughCandidates { have: usize, k: usize },
    #[error("invalid retrieval params: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Which lexical feature extractors contribute feature nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureKinds {
    pub unigrams: bool,
    pub bigrams: bool,
    pub trigrams: bool,
    pub skip_bigrams: bool,
    pub skip_trigrams: bool,
}

impl Default for FeatureKinds {
    fn default() -> Self {
        FeatureKinds {
            unigrams: true,
            bigrams: true,
            trigrams: true,
            skip_bigrams: true,
            skip_trigrams: true,
        }
    }
}

impl FeatureKinds {
    pub fn none() -> Self {
        FeatureKinds {
            unigrams: false,
            bigrams: false,
            trigrams: false,
            skip_bigrams: false,
            skip_trigrams: false,
        }
    }
}

/// Retrieval knobs for subgraph construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalParams {
    /// 1-hop neighbor count (also reused for each 2-hop expansion).
    pub k: usize,
    /// WCD candidate-pool size; `None` means `10 * k`.
    pub prefetch: Option<usize>,
    /// Drop real edges with WMD above this value (the query stays connected
    /// regardless; see `build_query_subgraph`).
    pub edge_threshold: Option<f64>,
    pub features: FeatureKinds,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            k: 10,
            prefetch: None,
            edge_threshold: None,
            features: FeatureKinds::default(),
        }
    }
}

impl RetrievalParams {
    pub fn effective_prefetch(&self) -> usize {
        self.prefetch.unwrap_or(10 * self.k)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.k == 0 {
            return Err(GraphError::InvalidParams("k must be >= 1".into()));
        }
        if let Some(p) = self.prefetch {
            if p < self.k {
                return Err(GraphError::InvalidParams(format!(
                    "prefetch {p} must be >= k {}",
                    self.k
                )));
            }
        }
        if let Some(t) = self.edge_threshold {
            if !t.is_finite() || t < 0.0 {
                return Err(GraphError::InvalidParams(
                    "edge_threshold must be finite and >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A query as fed into graph construction: its nBOW over the corpus
/// vocabulary, retained token ids, and the corpus index when the query is
/// itself an indexed document (it is then excluded from candidate pools).
#[derive(Debug, Clone, PartialEq)]
pub struct QueryDoc {
    pub nbow: NBowVector,
    pub tokens: Vec<u32>,
    pub corpus_index: Option<usize>,
}

/// One real node of the subgraph. `doc` is `None` only for the query node.
#[derive(Debug, Clone, PartialEq)]
pub struct RealNode {
    pub doc: Option<usize>,
    /// Exact WMD between this node and the query (matrix entry, kept even
    /// when the corresponding edge is thresholded away).
    pub wmd_to_query: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// A bipartite feature node: the feature string, its IDF weight (shared by
/// all its edges) and the real nodes containing the feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNode {
    pub feature: String,
    pub idf: f64,
    pub members: Vec<usize>,
}

/// The query-induced subgraph. Real node 0 is always the query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGraph {
    pub real_nodes: Vec<RealNode>,
    pub real_edges: Vec<RealEdge>,
    pub feature_nodes: Vec<FeatureNode>,
    /// Token ids of the query (real nodes > 0 carry tokens via the corpus).
    pub query_tokens: Vec<u32>,
    /// The query's WCD candidate pool; feature document frequencies are
    /// computed over it.
    pub pool: Vec<usize>,
}

impl QueryGraph {
    pub fn node_count(&self) -> usize {
        self.real_nodes.len()
    }
}

/// The `prefetch` documents closest to `query` by WCD, ascending, ties
/// broken by doc id. Indices in `exclude` never appear.
pub fn prefetch_wcd(
    query: &NBowVector,
    corpus: &Corpus,
    emb: &EmbeddingMatrix,
    prefetch: usize,
    exclude: &[usize],
) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = (0..corpus.len())
        .filter(|i| !exclude.contains(i))
        .map(|i| (i, emb.wcd(query, &corpus.documents[i].nbow)))
        .collect();
    scored.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| corpus.documents[a.0].id.cmp(&corpus.documents[b.0].id))
    });
    scored.truncate(prefetch);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Exact k-nearest among `candidates` by WMD, ascending, ties by doc id.
pub fn knn_wmd(
    query: &NBowVector,
    candidates: &[usize],
    corpus: &Corpus,
    costs: &(impl CostSource + Sync),
    k: usize,
) -> Result<Vec<(usize, f64)>, GraphError> {
    if candidates.len() < k {
        return Err(GraphError::NotEnoughCandidates {
            have: candidates.len(),
            k,
        });
    }
    let mut scored: Vec<(usize, f64)> = candidates
        .par_iter()
        .map(|&i| wmd(query, &corpus.documents[i].nbow, costs).map(|(c, _)| (i, c)))
        .collect::<Result<_, TransportError>>()?;
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .reverse()
            .then_with(|| corpus.documents[a.0].id.cmp(&corpus.documents[b.0].id))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Builds the query-induced subgraph: 1-hop WMD neighbors, per-neighbor
/// 2-hop expansion with no-overlap dedup, complete WMD edge set, optional
/// thresholding. If thresholding leaves any real node unreachable from the
/// query, the threshold is ignored for query-incident edges.
pub fn build_query_subgraph(
    query: &QueryDoc,
    corpus: &Corpus,
    costs: &(impl CostSource + Sync),
    emb: &EmbeddingMatrix,
    params: &RetrievalParams,
) -> Result<QueryGraph, GraphError> {
    params.validate()?;
    let k = params.k;
    if corpus.len() < k + 1 {
        return Err(GraphError::CorpusTooSmall {
            needed: k + 1,
            have: corpus.len(),
        });
    }
    let mut base_exclude: Vec<usize> = Vec::new();
    if let Some(qi) = query.corpus_index {
        base_exclude.push(qi);
    }
    let available = corpus.len() - base_exclude.len();
    let prefetch = params.effective_prefetch().min(available);
    if prefetch < k {
        return Err(GraphError::CorpusTooSmall {
            needed: k + base_exclude.len(),
            have: corpus.len(),
        });
    }

    let pool = prefetch_wcd(&query.nbow, corpus, emb, prefetch, &base_exclude);
    let one_hop = knn_wmd(&query.nbow, &pool, corpus, costs, k)?;

    // 2-hop expansion: each 1-hop node retrieves its own k nearest through
    // the same prefetch-then-WMD procedure. Expansions only depend on their
    // own node, so the union is independent of evaluation order.
    let expansions: Vec<Vec<(usize, f64)>> = one_hop
        .par_iter()
        .map(|&(d, _)| {
            let mut excl = base_exclude.clone();
            excl.push(d);
            let avail = corpus.len() - excl.len();
            let pf = params.effective_prefetch().min(avail);
            let pool_d = prefetch_wcd(&corpus.documents[d].nbow, corpus, emb, pf, &excl);
            let k_d = k.min(pool_d.len());
            knn_wmd(&corpus.documents[d].nbow, &pool_d, corpus, costs, k_d)
        })
        .collect::<Result<_, GraphError>>()?;

    let mut node_docs: Vec<usize> = Vec::new();
    let mut seen: HashSet<usize> = HashSet::new();
    for &(d, _) in &one_hop {
        if seen.insert(d) {
            node_docs.push(d);
        }
    }
    for exp in &expansions {
        for &(d, _) in exp {
            if seen.insert(d) {
                node_docs.push(d);
            }
        }
    }
    debug_assert!(node_docs.len() + 1 <= k * k + k + 1);

    let nbows: Vec<&NBowVector> = std::iter::once(&query.nbow)
        .chain(node_docs.iter().map(|&d| &corpus.documents[d].nbow))
        .collect();
    let mat = wmd_matrix(&nbows, costs)?;

    let real_nodes: Vec<RealNode> = std::iter::once(RealNode {
        doc: None,
        wmd_to_query: 0.0,
    })
    .chain(node_docs.iter().enumerate().map(|(i, &d)| RealNode {
        doc: Some(d),
        wmd_to_query: mat[0][i + 1],
    }))
    .collect();

    let n = real_nodes.len();
    let complete: Vec<RealEdge> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .map(|(a, b)| RealEdge {
            a,
            b,
            weight: mat[a][b],
        })
        .collect();
    let real_edges = match params.edge_threshold {
        None => complete,
        Some(t) => {
            let retained: Vec<RealEdge> = complete
                .iter()
                .filter(|e| e.weight <= t)
                .cloned()
                .collect();
            if all_reachable_from_query(n, &retained) {
                retained
            } else {
                // Keep the query connected: its incident edges bypass the
                // threshold.
                complete
                    .into_iter()
                    .filter(|e| e.a == 0 || e.weight <= t)
                    .collect()
            }
        }
    };

    Ok(QueryGraph {
        real_nodes,
        real_edges,
        feature_nodes: Vec::new(),
        query_tokens: query.tokens.clone(),
        pool,
    })
}

fn all_reachable_from_query(n: usize, edges: &[RealEdge]) -> bool {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in edges {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

/// Joiner between feature tokens.
pub const FEATURE_JOIN: char = '\u{241F}';
/// Marker for a skipped position inside a skip-gram.
pub const FEATURE_GAP: char = '\u{22C4}';

fn join_feature(parts: &[&str]) -> String {
    let mut s = String::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            s.push(FEATURE_JOIN);
        }
        s.push_str(p);
    }
    s
}

/// Extracts the enabled lexical features of a token sequence: unigrams
/// (word overlap), bigrams, trigrams, and the 1-gap skip variants up to
/// length 3.
pub fn extract_features<S: AsRef<str>>(tokens: &[S], kinds: &FeatureKinds) -> BTreeSet<String> {
    let toks: Vec<&str> = tokens.iter().map(|t| t.as_ref()).collect();
    let gap = {
        let mut s = String::new();
        s.push(FEATURE_GAP);
        s
    };
    let mut out = BTreeSet::new();
    let n = toks.len();
    if kinds.unigrams {
        for &t in &toks {
            out.insert(t.to_string());
        }
    }
    if kinds.bigrams {
        for w in toks.windows(2) {
            out.insert(join_feature(&[w[0], w[1]]));
        }
    }
    if kinds.trigrams {
        for w in toks.windows(3) {
            out.insert(join_feature(&[w[0], w[1], w[2]]));
        }
    }
    if kinds.skip_bigrams {
        for i in 0..n.saturating_sub(2) {
            out.insert(join_feature(&[toks[i], &gap, toks[i + 2]]));
        }
    }
    if kinds.skip_trigrams {
        for i in 0..n.saturating_sub(3) {
            out.insert(join_feature(&[toks[i], &gap, toks[i + 2], toks[i + 3]]));
            out.insert(join_feature(&[toks[i], toks[i + 1], &gap, toks[i + 3]]));
        }
    }
    out
}

/// Attaches feature nodes: every feature shared by at least two real nodes
/// becomes a node linked to exactly those nodes, weighted by its IDF over
/// the candidate pool. Features present in the whole pool carry zero IDF
/// and are excluded. Pool-absent features count as df = 1.
pub fn augment_feature_nodes(
    mut graph: QueryGraph,
    corpus: &Corpus,
    pool: &[usize],
    kinds: &FeatureKinds,
) -> QueryGraph {
    if pool.is_empty() {
        return graph;
    }
    let node_tokens: Vec<Vec<&str>> = graph
        .real_nodes
        .iter()
        .map(|rn| match rn.doc {
            None => graph
                .query_tokens
                .iter()
                .map(|&t| corpus.vocabulary.term(t))
                .collect(),
            Some(d) => corpus.documents[d]
                .tokens
                .iter()
                .map(|&t| corpus.vocabulary.term(t))
                .collect(),
        })
        .collect();

    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, toks) in node_tokens.iter().enumerate() {
        for f in extract_features(toks, kinds) {
            members.entry(f).or_default().push(i);
        }
    }
    members.retain(|_, m| m.len() >= 2);
    if members.is_empty() {
        graph.feature_nodes = Vec::new();
        return graph;
    }

    let candidates: HashSet<&str> = members.keys().map(|s| s.as_str()).collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for &d in pool {
        let toks: Vec<&str> = corpus.documents[d]
            .tokens
            .iter()
            .map(|&t| corpus.vocabulary.term(t))
            .collect();
        let mut seen_here: HashSet<String> = HashSet::new();
        for f in extract_features(&toks, kinds) {
            if candidates.contains(f.as_str()) && seen_here.insert(f.clone()) {
                *df.entry(members.get_key_value(&f).unwrap().0.as_str())
                    .or_insert(0) += 1;
            }
        }
    }

    let pool_size = pool.len();
    let mut feature_nodes = Vec::new();
    for (feature, m) in &members {
        // 2-hop nodes may fall outside the query's pool; their features then
        // have pool df 0, which we clamp to 1 (maximal IDF).
        let d = df.get(feature.as_str()).copied().unwrap_or(0).max(1);
        if d >= pool_size {
            continue;
        }
        let w = idf(d, pool_size).expect("df in (0, pool] by construction");
        if w <= 0.0 {
            continue;
        }
        feature_nodes.push(FeatureNode {
            feature: feature.clone(),
            idf: w,
            members: m.clone(),
        });
    }
    graph.feature_nodes = feature_nodes;
    graph
}

/// Debug dump: one `src<TAB>dst<TAB>weight<TAB>kind` line per edge, with
/// real nodes named by doc id (`<query>` for the query node).
pub fn write_graph_dump<W: Write>(
    graph: &QueryGraph,
    corpus: &Corpus,
    mut w: W,
) -> std::io::Result<()> {
    let name = |i: usize| -> String {
        match graph.real_nodes[i].doc {
            None => "<query>".to_string(),
            Some(d) => corpus.documents[d].id.clone(),
        }
    };
    for e in &graph.real_edges {
        writeln!(w, "{}\t{}\t{}\tR", name(e.a), name(e.b), e.weight)?;
    }
    for f in &graph.feature_nodes {
        for &m in &f.members {
            writeln!(w, "{}\t{}\t{}\tF", f.feature, name(m), f.idf)?;
        }
    }
    Ok(())
}
