//! Word embeddings and document transport distances.
//!
//! Word Mover's Distance between two nBOW vectors is the optimum of the
//! transport linear program restricted to the union of the two supports,
//! with ground cost the Euclidean distance between word embeddings. The
//! solver is an exact transportation simplex returning a vertex solution;
//! Word Centroid Distance is the cheap lower bound used for candidate
//! pruning.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::corpus::{Corpus, NBowVector};

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("dimension mismatch at line {line}: expected {expected} values, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("vocabulary term `{0}` missing from embedding file")]
    MissingTerm(String),
    #[error("no document survives the embedding-coverage drop")]
    EmptyCorpusAfterDrop,
    #[error("nbow vector is empty")]
    EmptyNbow,
    #[error("need at least 2 documents, got {0}")]
    TooFewDocs(usize),
    #[error("transport solver failed: {0}")]
    SolverFailure(String),
}

fn format_err(line: usize, msg: impl Into<String>) -> TransportError {
    TransportError::Format {
        line,
        msg: msg.into(),
    }
}

/// What to do with vocabulary terms absent from the embedding file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Remove the term from the effective vocabulary and renormalize the
    /// affected documents.
    Drop,
    /// Fail with `MissingTerm`.
    Error,
}

/// Embeddings as parsed from a word2vec text file, not yet aligned to a
/// vocabulary.
#[derive(Debug, Clone)]
pub struct RawEmbeddings {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl RawEmbeddings {
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Parses word2vec text format: header `<count> <dim>`, then one
/// `word v1 .. vdim` line per word. Values must be finite; the row count
/// must match the header. The first occurrence of a repeated word wins.
pub fn parse_embeddings<R: BufRead>(r: R) -> Result<RawEmbeddings, TransportError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err(1, "empty file"))??;
    let (count_s, dim_s) = header
        .split_once(' ')
        .ok_or_else(|| format_err(1, "expected `<count> <dim>` header"))?;
    let count: usize = count_s
        .parse()
        .map_err(|_| format_err(1, "bad count"))?;
    let dim: usize = dim_s
        .parse()
        .map_err(|_| format_err(1, "bad dim"))?;
    if dim == 0 {
        return Err(format_err(1, "dim must be >= 1"));
    }

    let mut vectors: HashMap<String, Vec<f64>> =
        HashMap::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let lno = 2 + i;
        let line = lines
            .next()
            .ok_or_else(|| format_err(lno, "truncated embedding file"))??;
        let mut fields = line.split(' ');
        let word = fields
            .next()
            .filter(|w| !w.is_empty())
            .ok_or_else(|| format_err(lno, "missing word"))?;
        let mut vec = Vec::with_capacity(dim);
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| format_err(lno, "bad embedding value"))?;
            if !v.is_finite() {
                return Err(format_err(lno, "embedding value must be finite"));
            }
            vec.push(v);
        }
        if vec.len() != dim {
            return Err(TransportError::DimMismatch {
                line: lno,
                expected: dim,
                found: vec.len(),
            });
        }
        vectors.entry(word.to_string()).or_insert(vec);
    }
    if lines.next().is_some() {
        return Err(format_err(2 + count, "trailing data"));
    }
    Ok(RawEmbeddings { dim, vectors })
}

pub fn load_embeddings(path: &Path) -> Result<RawEmbeddings, TransportError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    parse_embeddings(f)
}

/// Embedding matrix aligned to a corpus vocabulary: one d-dimensional row
/// per term id. Immutable after construction.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
    coverage: f64,
}

impl EmbeddingMatrix {
    /// Builds a matrix directly from per-term rows (row index = term id).
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim);
            data.extend_from_slice(r);
        }
        EmbeddingMatrix {
            dim,
            data,
            coverage: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    /// Fraction of the original vocabulary found in the embedding file.
    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn vector(&self, term: u32) -> &[f64] {
        let i = term as usize * self.dim;
        &self.data[i..i + self.dim]
    }

    /// Euclidean distance between the embeddings of two terms.
    pub fn cost(&self, i: u32, j: u32) -> f64 {
        if i == j {
            return 0.0;
        }
        let a = self.vector(i);
        let b = self.vector(j);
        let mut s = 0.0;
        for k in 0..self.dim {
            let d = a[k] - b[k];
            s += d * d;
        }
        s.sqrt()
    }

    /// Embedding-weighted centroid of an nBOW vector.
    pub fn centroid(&self, d: &NBowVector) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for &(t, w) in d.entries() {
            let v = self.vector(t);
            for k in 0..self.dim {
                c[k] += w * v[k];
            }
        }
        c
    }

    /// Word Centroid Distance, the lower bound used for prefetching.
    pub fn wcd(&self, a: &NBowVector, b: &NBowVector) -> f64 {
        if a == b {
            return 0.0;
        }
        let ca = self.centroid(a);
        let cb = self.centroid(b);
        let mut s = 0.0;
        for k in 0..self.dim {
            let d = ca[k] - cb[k];
            s += d * d;
        }
        s.sqrt()
    }
}

/// Corpus with an aligned embedding matrix, plus what the missing-term
/// policy removed.
#[derive(Debug)]
pub struct EmbeddedCorpus {
    pub corpus: Corpus,
    pub embeddings: EmbeddingMatrix,
    pub dropped_terms: Vec<String>,
    pub dropped_docs: Vec<String>,
}

/// Aligns raw embeddings to a corpus vocabulary. With `MissingPolicy::Drop`,
/// uncovered terms are removed and the corpus is rebuilt (nBOWs renormalized,
/// emptied documents dropped); with `Error` the first uncovered term aborts.
pub fn attach_embeddings(
    raw: &RawEmbeddings,
    corpus: Corpus,
    policy: MissingPolicy,
) -> Result<EmbeddedCorpus, TransportError> {
    let n = corpus.vocabulary.len();
    let covered: Vec<bool> = (0..n as u32)
        .map(|t| raw.get(corpus.vocabulary.term(t)).is_some())
        .collect();
    let n_covered = covered.iter().filter(|&&c| c).count();
    let coverage = if n == 0 {
        0.0
    } else {
        n_covered as f64 / n as f64
    };

    let (corpus, dropped_terms, dropped_docs) = if n_covered == n {
        (corpus, Vec::new(), Vec::new())
    } else {
        match policy {
            MissingPolicy::Error => {
                let t = (0..n as u32).find(|&t| !covered[t as usize]).unwrap();
                return Err(TransportError::MissingTerm(
                    corpus.vocabulary.term(t).to_string(),
                ));
            }
            MissingPolicy::Drop => {
                let dropped_terms: Vec<String> = (0..n as u32)
                    .filter(|&t| !covered[t as usize])
                    .map(|t| corpus.vocabulary.term(t).to_string())
                    .collect();
                let (corpus, dropped_docs) = corpus.retain_terms(|t| covered[t as usize]);
                if corpus.is_empty() {
                    return Err(TransportError::EmptyCorpusAfterDrop);
                }
                (corpus, dropped_terms, dropped_docs)
            }
        }
    };

    let dim = raw.dim;
    let mut data = Vec::with_capacity(corpus.vocabulary.len() * dim);
    for t in 0..corpus.vocabulary.len() as u32 {
        data.extend_from_slice(raw.get(corpus.vocabulary.term(t)).unwrap());
    }
    Ok(EmbeddedCorpus {
        corpus,
        embeddings: EmbeddingMatrix {
            dim,
            data,
            coverage,
        },
        dropped_terms,
        dropped_docs,
    })
}

/// Source of pairwise term costs. `EmbeddingMatrix` computes them directly;
/// `CostCache` memoizes per query subgraph.
pub trait CostSource: Sync {
    fn cost(&self, i: u32, j: u32) -> f64;
}

impl CostSource for EmbeddingMatrix {
    fn cost(&self, i: u32, j: u32) -> f64 {
        EmbeddingMatrix::cost(self, i, j)
    }
}

/// Memoizes term-pair costs keyed by the unordered pair. One cache lives for
/// the duration of a query subgraph build.
pub struct CostCache<'a> {
    emb: &'a EmbeddingMatrix,
    map: Mutex<HashMap<(u32, u32), f64>>,
}

impl<'a> CostCache<'a> {
    pub fn new(emb: &'a EmbeddingMatrix) -> Self {
        CostCache {
            emb,
            map: Mutex::new(HashMap::new()),
        }
    }
}

impl CostSource for CostCache<'_> {
    fn cost(&self, i: u32, j: u32) -> f64 {
        if i == j {
            return 0.0;
        }
        let key = (i.min(j), i.max(j));
        if let Some(&c) = self.map.lock().unwrap().get(&key) {
            return c;
        }
        let c = self.emb.cost(i, j);
        self.map.lock().unwrap().insert(key, c);
        c
    }
}

/// An exact transport plan between two nBOW vectors: sparse flows plus the
/// total cost. Vertex solutions carry at most `m + n - 1` flows.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub flows: Vec<(u32, u32, f64)>,
    pub cost: f64,
}

/// Exact Word Mover's Distance. Solves the transport LP on the union of the
/// two supports; the optimum equals the full-vocabulary program since mass
/// outside the supports is zero.
pub fn wmd(
    a: &NBowVector,
    b: &NBowVector,
    costs: &impl CostSource,
) -> Result<(f64, TransportPlan), TransportError> {
    if a.is_empty() || b.is_empty() {
        return Err(TransportError::EmptyNbow);
    }
    if a == b {
        let flows = a.entries().iter().map(|&(t, w)| (t, t, w)).collect();
        return Ok((0.0, TransportPlan { flows, cost: 0.0 }));
    }
    let src: Vec<(u32, f64)> = a.entries().to_vec();
    let tgt: Vec<(u32, f64)> = b.entries().to_vec();
    let m = src.len();
    let n = tgt.len();
    let mut cost_mat = vec![0.0; m * n];
    for (i, &(ti, _)) in src.iter().enumerate() {
        for (j, &(tj, _)) in tgt.iter().enumerate() {
            cost_mat[i * n + j] = costs.cost(ti, tj);
        }
    }
    let supply: Vec<f64> = src.iter().map(|&(_, w)| w).collect();
    let demand: Vec<f64> = tgt.iter().map(|&(_, w)| w).collect();
    let sol = simplex::solve(&supply, &demand, &cost_mat)
        .map_err(TransportError::SolverFailure)?;
    let mut flows: Vec<(u32, u32, f64)> = sol
        .flows
        .iter()
        .filter(|&&(_, _, f)| f > 0.0)
        .map(|&(i, j, f)| (src[i].0, tgt[j].0, f))
        .collect();
    flows.sort_unstable_by_key(|&(i, j, _)| (i, j));
    let cost = sol
        .flows
        .iter()
        .map(|&(i, j, f)| f * cost_mat[i * n + j])
        .sum();
    Ok((cost, TransportPlan { flows, cost }))
}

/// Pairwise WMD matrix: symmetric, zero diagonal. Entries are computed
/// independently (in parallel) so the result does not depend on evaluation
/// order.
pub fn wmd_matrix(
    docs: &[&NBowVector],
    costs: &(impl CostSource + Sync),
) -> Result<Vec<Vec<f64>>, TransportError> {
    if docs.len() < 2 {
        return Err(TransportError::TooFewDocs(docs.len()));
    }
    let n = docs.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let computed: Result<Vec<((usize, usize), f64)>, TransportError> = pairs
        .par_iter()
        .map(|&(i, j)| wmd(docs[i], docs[j], costs).map(|(c, _)| ((i, j), c)))
        .collect();
    let mut mat = vec![vec![0.0; n]; n];
    for ((i, j), c) in computed? {
        mat[i][j] = c;
        mat[j][i] = c;
    }
    Ok(mat)
}

/// Exact solver for the balanced transportation problem.
///
/// Transportation simplex: north-west-corner initial basis, spanning-tree
/// potentials, Bland-rule entering cell (first negative reduced cost in
/// row-major order) and lexicographic leaving-cell tie-break, which prevents
/// cycling under degeneracy.
mod simplex {
    pub struct Solution {
        /// Basic cells `(row, col, flow)`; at most `m + n - 1` of them.
        pub flows: Vec<(usize, usize, f64)>,
    }

    pub fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<Solution, String> {
        let m = supply.len();
        let n = demand.len();
        assert_eq!(cost.len(), m * n);
        if m == 0 || n == 0 {
            return Err("empty marginals".to_string());
        }

        // Basis as parallel arrays plus an m*n position index.
        let mut cells: Vec<(usize, usize)> = Vec::with_capacity(m + n);
        let mut flow: Vec<f64> = Vec::with_capacity(m + n);
        const NONBASIC: u32 = u32::MAX;
        let mut pos = vec![NONBASIC; m * n];

        // North-west corner initialization: exactly m + n - 1 basic cells,
        // including degenerate zero allocations on ties.
        {
            let mut ra = supply.to_vec();
            let mut rb = demand.to_vec();
            let (mut i, mut j) = (0usize, 0usize);
            loop {
                let q = ra[i].min(rb[j]).max(0.0);
                pos[i * n + j] = cells.len() as u32;
                cells.push((i, j));
                flow.push(q);
                ra[i] -= q;
                rb[j] -= q;
                if i == m - 1 && j == n - 1 {
                    break;
                }
                if j == n - 1 {
                    i += 1;
                } else if i == m - 1 {
                    j += 1;
                } else if ra[i] <= rb[j] {
                    i += 1;
                } else {
                    j += 1;
                }
            }
        }

        let max_cost = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let eps = 1e-11 * (1.0 + max_cost);

        // Node ids: rows 0..m, columns m..m+n.
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); m + n];
        for (ci, &(i, j)) in cells.iter().enumerate() {
            adj[i].push(ci as u32);
            adj[m + j].push(ci as u32);
        }

        let mut u = vec![0.0f64; m];
        let mut v = vec![0.0f64; n];
        let mut visited = vec![false; m + n];
        let mut stack: Vec<usize> = Vec::with_capacity(m + n);

        let max_pivots = 2000 + 40 * m * n;
        for _pivot in 0..max_pivots {
            // Potentials u_i + v_j = c_ij over the basis tree.
            visited.iter_mut().for_each(|x| *x = false);
            u[0] = 0.0;
            visited[0] = true;
            stack.clear();
            stack.push(0);
            let mut seen = 1usize;
            while let Some(node) = stack.pop() {
                for &ci in &adj[node] {
                    let (i, j) = cells[ci as usize];
                    let other = if node == i { m + j } else { i };
                    if visited[other] {
                        continue;
                    }
                    let c = cost[i * n + j];
                    if other >= m {
                        v[other - m] = c - u[i];
                    } else {
                        u[other] = c - v[j];
                    }
                    visited[other] = true;
                    seen += 1;
                    stack.push(other);
                }
            }
            if seen != m + n {
                return Err("basis lost connectivity".to_string());
            }

            // Bland entering rule: first cell with negative reduced cost.
            let mut entering = None;
            'scan: for i in 0..m {
                for j in 0..n {
                    if pos[i * n + j] != NONBASIC {
                        continue;
                    }
                    if cost[i * n + j] - u[i] - v[j] < -eps {
                        entering = Some((i, j));
                        break 'scan;
                    }
                }
            }
            let (ei, ej) = match entering {
                Some(e) => e,
                None => {
                    // Optimal.
                    let flows = cells
                        .iter()
                        .zip(&flow)
                        .map(|(&(i, j), &f)| (i, j, f.max(0.0)))
                        .collect();
                    return Ok(Solution { flows });
                }
            };

            // Unique tree path from row ei to column ej.
            let mut parent: Vec<(u32, u32)> = vec![(u32::MAX, u32::MAX); m + n];
            visited.iter_mut().for_each(|x| *x = false);
            visited[ei] = true;
            stack.clear();
            stack.push(ei);
            while let Some(node) = stack.pop() {
                if node == m + ej {
                    break;
                }
                for &ci in &adj[node] {
                    let (i, j) = cells[ci as usize];
                    let other = if node == i { m + j } else { i };
                    if visited[other] {
                        continue;
                    }
                    visited[other] = true;
                    parent[other] = (node as u32, ci);
                    stack.push(other);
                }
            }
            if !visited[m + ej] {
                return Err("no cycle found".to_string());
            }
            // Walk back from ej to ei collecting the path cells; together
            // with the entering cell they form the pivot cycle. Signs
            // alternate starting with + on the entering cell.
            let mut cycle: Vec<u32> = Vec::new();
            let mut node = m + ej;
            while node != ei {
                let (p, ci) = parent[node];
                cycle.push(ci);
                node = p as usize;
            }

            // Minus positions are the even indices of `cycle` (the entering
            // cell is +, then alternation along the walk).
            let mut theta = f64::INFINITY;
            let mut leave: Option<u32> = None;
            for (t, &ci) in cycle.iter().enumerate() {
                if t % 2 == 0 {
                    let f = flow[ci as usize];
                    let (i, j) = cells[ci as usize];
                    let better = match leave {
                        None => true,
                        Some(cur) => {
                            f < theta - 1e-15
                                || ((f - theta).abs() <= 1e-15
                                    && (i, j) < cells[cur as usize])
                        }
                    };
                    if better {
                        theta = f;
                        leave = Some(ci);
                    }
                }
            }
            let leave = leave.ok_or_else(|| "degenerate cycle".to_string())?;
            let theta = theta.max(0.0);

            for (t, &ci) in cycle.iter().enumerate() {
                if t % 2 == 0 {
                    flow[ci as usize] = (flow[ci as usize] - theta).max(0.0);
                } else {
                    flow[ci as usize] += theta;
                }
            }

            // Replace the leaving cell with the entering one.
            let (li, lj) = cells[leave as usize];
            adj[li].retain(|&c| c != leave);
            adj[m + lj].retain(|&c| c != leave);
            pos[li * n + lj] = NONBASIC;
            cells[leave as usize] = (ei, ej);
            flow[leave as usize] = theta;
            pos[ei * n + ej] = leave;
            adj[ei].push(leave);
            adj[m + ej].push(leave);
        }
        Err("pivot limit exceeded".to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, RawDocument};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn nbow(entries: &[(u32, f64)]) -> NBowVector {
        // build via token expansion to keep the type's invariants honest
        // (entries here must be representable as count/len fractions)
        let mut toks = Vec::new();
        let denom = 1000000u32;
        for &(t, w) in entries {
            let c = (w * denom as f64).round() as u32;
            for _ in 0..c {
                toks.push(t);
            }
        }
        // not exact for arbitrary w, exact for the simple fractions used here
        let v = NBowVector::from_tokens(&toks);
        assert_eq!(v.support(), entries.len());
        v
    }

    fn toy_embeddings() -> EmbeddingMatrix {
        // a=(0,0), b=(1,0), c=(0,2)
        EmbeddingMatrix::from_rows(
            2,
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]],
        )
    }

    #[test]
    fn cost_examples() {
        let e = toy_embeddings();
        assert_eq!(e.cost(0, 1), 1.0);
        assert_eq!(e.cost(1, 1), 0.0);
        assert_eq!(e.cost(0, 2), 2.0);
        assert_eq!(e.cost(2, 0), 2.0);
    }

    #[test]
    fn wcd_examples() {
        let e = toy_embeddings();
        let d = nbow(&[(0, 0.5), (1, 0.5)]);
        assert_eq!(e.wcd(&d, &d), 0.0);
        let a = nbow(&[(0, 1.0)]);
        let b = nbow(&[(1, 1.0)]);
        assert!((e.wcd(&a, &b) - 1.0).abs() < 1e-12);
        let d2 = nbow(&[(1, 0.5), (2, 0.5)]);
        assert!((e.wcd(&d, &d2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wmd_identity() {
        let e = toy_embeddings();
        let d = nbow(&[(0, 0.5), (1, 0.5)]);
        let (c, plan) = wmd(&d, &d, &e).unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(plan.flows, vec![(0, 0, 0.5), (1, 1, 0.5)]);
    }

    #[test]
    fn wmd_forced_transport() {
        let e = toy_embeddings();
        let d = nbow(&[(0, 0.5), (1, 0.5)]);
        let dp = nbow(&[(2, 1.0)]);
        let (c, plan) = wmd(&d, &dp, &e).unwrap();
        let expect = 0.5 * 2.0 + 0.5 * 5.0f64.sqrt();
        assert!((c - expect).abs() < 1e-12, "{c} vs {expect}");
        assert_eq!(plan.flows.len(), 2);
    }

    #[test]
    fn wmd_partial_overlap() {
        let e = toy_embeddings();
        let d = nbow(&[(0, 0.5), (1, 0.5)]);
        let dp = nbow(&[(1, 0.5), (2, 0.5)]);
        // optimal: keep b in place, move a -> c
        let (c, plan) = wmd(&d, &dp, &e).unwrap();
        assert!((c - 1.0).abs() < 1e-12, "{c}");
        // the plan is a vertex: at most m + n - 1 flows
        assert!(plan.flows.len() <= 3);
    }

    #[test]
    fn wmd_empty_is_error() {
        let e = toy_embeddings();
        let d = nbow(&[(0, 1.0)]);
        let empty = NBowVector::from_tokens(&[]);
        assert!(matches!(
            wmd(&d, &empty, &e),
            Err(TransportError::EmptyNbow)
        ));
    }

    #[test]
    fn wmd_matrix_matches_scalar_calls() {
        let e = toy_embeddings();
        let docs = vec![
            nbow(&[(0, 0.5), (1, 0.5)]),
            nbow(&[(1, 0.5), (2, 0.5)]),
            nbow(&[(2, 1.0)]),
        ];
        let refs: Vec<&NBowVector> = docs.iter().collect();
        let mat = wmd_matrix(&refs, &e).unwrap();
        for i in 0..3 {
            assert_eq!(mat[i][i], 0.0);
            for j in 0..3 {
                assert!((mat[i][j] - mat[j][i]).abs() < 1e-12);
                if i != j {
                    let (c, _) = wmd(&docs[i], &docs[j], &e).unwrap();
                    assert!((mat[i][j] - c).abs() < 1e-12);
                }
            }
        }
        assert!(matches!(
            wmd_matrix(&refs[..1], &e),
            Err(TransportError::TooFewDocs(1))
        ));
    }

    #[test]
    fn identical_docs_have_zero_matrix() {
        let e = toy_embeddings();
        let d = nbow(&[(0, 0.5), (2, 0.5)]);
        let refs = vec![&d, &d];
        let mat = wmd_matrix(&refs, &e).unwrap();
        assert_eq!(mat, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn parse_embeddings_happy_path() {
        let data = b"3 2\na 0 0\nb 1 0\nc 0 2\n";
        let raw = parse_embeddings(&data[..]).unwrap();
        assert_eq!(raw.dim, 2);
        assert_eq!(raw.len(), 3);
        assert_eq!(raw.get("b").unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn parse_embeddings_rejects_bad_input() {
        assert!(parse_embeddings(&b""[..]).is_err());
        assert!(parse_embeddings(&b"2 2\na 0 0\n"[..]).is_err()); // truncated
        assert!(parse_embeddings(&b"1 2\na 0\n"[..]).is_err()); // dim mismatch
        assert!(parse_embeddings(&b"1 2\na 0 nan\n"[..]).is_err()); // hmm: "nan" parses to NaN
        assert!(parse_embeddings(&b"1 0\na\n"[..]).is_err()); // zero dim
        assert!(parse_embeddings(&b"1 2\na 0 0\nextra\n"[..]).is_err());
    }

    fn tiny_corpus() -> Corpus {
        let docs = vec![
            RawDocument {
                id: "1".into(),
                text: "a a b".into(),
            },
            RawDocument {
                id: "2".into(),
                text: "b c".into(),
            },
        ];
        build_corpus(&docs, &HashSet::new(), 0).unwrap().corpus
    }

    #[test]
    fn attach_full_coverage() {
        let raw = parse_embeddings(&b"3 2\na 0 0\nb 1 0\nc 0 2\n"[..]).unwrap();
        let ec = attach_embeddings(&raw, tiny_corpus(), MissingPolicy::Error).unwrap();
        assert_eq!(ec.embeddings.dim(), 2);
        assert_eq!(ec.embeddings.coverage(), 1.0);
        assert!(ec.dropped_terms.is_empty());
    }

    #[test]
    fn attach_missing_term_policies() {
        let raw = parse_embeddings(&b"2 2\na 0 0\nb 1 0\n"[..]).unwrap();
        let err = attach_embeddings(&raw, tiny_corpus(), MissingPolicy::Error);
        assert!(matches!(err, Err(TransportError::MissingTerm(t)) if t == "c"));

        let ec = attach_embeddings(&raw, tiny_corpus(), MissingPolicy::Drop).unwrap();
        assert_eq!(ec.dropped_terms, vec!["c".to_string()]);
        assert_eq!(ec.corpus.vocabulary.len(), 2);
        // doc 2 was [b c]; after dropping c it renormalizes to {b: 1.0}
        let d2 = &ec.corpus.documents[1];
        assert_eq!(d2.nbow.entries(), &[(ec.corpus.vocabulary.id("b").unwrap(), 1.0)]);
        assert!((ec.embeddings.coverage() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cost_cache_agrees_with_direct() {
        let e = toy_embeddings();
        let cache = CostCache::new(&e);
        for i in 0..3u32 {
            for j in 0..3u32 {
                assert_eq!(CostSource::cost(&cache, i, j), e.cost(i, j));
                // second hit from cache
                assert_eq!(CostSource::cost(&cache, i, j), e.cost(i, j));
            }
        }
    }

    fn random_nbow(rng: &mut impl Rng, vocab: usize, max_support: usize) -> NBowVector {
        let support = rng.random_range(1..=max_support.min(vocab));
        let mut terms: Vec<u32> = (0..vocab as u32).collect();
        for i in (1..terms.len()).rev() {
            let j = rng.random_range(0..=i);
            terms.swap(i, j);
        }
        terms.truncate(support);
        let mut toks = Vec::new();
        for &t in &terms {
            let c = rng.random_range(1..6u32);
            for _ in 0..c {
                toks.push(t);
            }
        }
        NBowVector::from_tokens(&toks)
    }

    use rand::{Rng, SeedableRng};

    #[test]
    fn plan_feasibility_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let dim = 3;
        let vocab = 8;
        let rows: Vec<Vec<f64>> = (0..vocab)
            .map(|_| (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let emb = EmbeddingMatrix::from_rows(dim, &rows);
        for _ in 0..50 {
            let a = random_nbow(&mut rng, vocab, 6);
            let b = random_nbow(&mut rng, vocab, 6);
            let (cost, plan) = wmd(&a, &b, &emb).unwrap();
            assert!(cost >= -1e-12);
            assert!(plan.flows.iter().all(|&(_, _, f)| f > 0.0));
            assert!(plan.flows.len() <= a.support() + b.support() - 1);
            // marginals
            let mut row: HashMap<u32, f64> = HashMap::new();
            let mut col: HashMap<u32, f64> = HashMap::new();
            for &(i, j, f) in &plan.flows {
                *row.entry(i).or_insert(0.0) += f;
                *col.entry(j).or_insert(0.0) += f;
            }
            for &(t, w) in a.entries() {
                assert!((row.get(&t).copied().unwrap_or(0.0) - w).abs() < 1e-7);
            }
            for &(t, w) in b.entries() {
                assert!((col.get(&t).copied().unwrap_or(0.0) - w).abs() < 1e-7);
            }
            // symmetry
            let (cost_ba, _) = wmd(&b, &a, &emb).unwrap();
            assert!((cost - cost_ba).abs() < 1e-9);
            // lower bound
            assert!(emb.wcd(&a, &b) <= cost + 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn wmd_metric_properties(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dim = 2;
            let vocab = 6;
            let rows: Vec<Vec<f64>> = (0..vocab)
                .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0).collect())
                .collect();
            let emb = EmbeddingMatrix::from_rows(dim, &rows);
            let a = random_nbow(&mut rng, vocab, 4);
            let b = random_nbow(&mut rng, vocab, 4);
            let c = random_nbow(&mut rng, vocab, 4);
            let (ab, _) = wmd(&a, &b, &emb).unwrap();
            let (ba, _) = wmd(&b, &a, &emb).unwrap();
            let (bc, _) = wmd(&b, &c, &emb).unwrap();
            let (ac, _) = wmd(&a, &c, &emb).unwrap();
            let (aa, _) = wmd(&a, &a, &emb).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert_eq!(aa, 0.0);
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
