//! Thresholded-SVD topic model.
//!
//! The pipeline: per-word thresholds over the word-document frequency
//! matrix, the thresholded matrix B, Lloyd's k-means on the columns of B
//! initialized from k-means centers of B's rank-k approximation, catchword
//! identification per cluster, and sparse catchword-based document
//! representations. Clusters stand in for the documents' dominant topics.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, NBowVector};
use crate::util::fmt_g12;

#[derive(Debug, thiserror::Error)]
pub enum TopicsError {
    #[error("invalid tsvd params: {0}")]
    InvalidParams(String),
    #[error("k_topics {k} exceeds document count {docs}")]
    TooManyTopics { k: usize, docs: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("model does not match index: {0}")]
    ModelMismatch(String),
}

fn format_err(line: usize, msg: impl Into<String>) -> TopicsError {
    TopicsError::Format {
        line,
        msg: msg.into(),
    }
}

/// Parameters of the thresholded-SVD pipeline. The admixture parameters
/// must satisfy `beta + rho <= (1 - delta) * alpha`, `alpha + 2*delta <= 0.5`
/// and `delta <= 0.08`.
#[derive(Debug, Clone, PartialEq)]
pub struct TsvdParams {
    pub k_topics: usize,
    /// Lowest probability that a topic is dominant.
    pub w0: f64,
    pub eps: f64,
    /// Carried for fidelity to the admixture assumptions; drives no
    /// computation in this pipeline.
    pub eps0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub delta: f64,
    /// Minimum joint catchword probability per topic.
    pub p0: f64,
    pub kmeans_seed: u64,
    pub kmeans_max_iter: usize,
}

impl TsvdParams {
    /// Defaults for a given topic count: `w0 = 1/k`, the admixture
    /// parameters at their documented defaults.
    pub fn with_topics(k_topics: usize) -> Self {
        TsvdParams {
            k_topics,
            w0: 1.0 / k_topics as f64,
            eps: 0.1,
            eps0: 1.0 / 6.0,
            alpha: 0.4,
            beta: 0.2,
            rho: 0.1,
            delta: 0.05,
            p0: 0.1,
            kmeans_seed: 0,
            kmeans_max_iter: 100,
        }
    }

    pub fn validate(&self) -> Result<(), TopicsError> {
        let unit = |name: &str, v: f64| -> Result<(), TopicsError> {
            if !(v > 0.0 && v <= 1.0) {
                return Err(TopicsError::InvalidParams(format!(
                    "{name} = {v} must be in (0, 1]"
                )));
            }
            Ok(())
        };
        if self.k_topics == 0 {
            return Err(TopicsError::InvalidParams("k_topics must be >= 1".into()));
        }
        unit("w0", self.w0)?;
        unit("eps", self.eps)?;
        unit("eps0", self.eps0)?;
        unit("alpha", self.alpha)?;
        unit("beta", self.beta)?;
        unit("rho", self.rho)?;
        unit("delta", self.delta)?;
        unit("p0", self.p0)?;
        if self.beta + self.rho > (1.0 - self.delta) * self.alpha {
            return Err(TopicsError::InvalidParams(
                "beta + rho must be <= (1 - delta) * alpha".into(),
            ));
        }
        if self.alpha + 2.0 * self.delta > 0.5 {
            return Err(TopicsError::InvalidParams(
                "alpha + 2*delta must be <= 0.5".into(),
            ));
        }
        if self.delta > 0.08 {
            return Err(TopicsError::InvalidParams("delta must be <= 0.08".into()));
        }
        if self.kmeans_max_iter == 0 {
            return Err(TopicsError::InvalidParams(
                "kmeans_max_iter must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Word-document frequency matrix: column j holds the within-document
/// frequencies of document j (its nBOW), `m` the average document length.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    pub cols: Vec<NBowVector>,
    pub n_words: usize,
    pub m: f64,
}

impl DataMatrix {
    pub fn docs(&self) -> usize {
        self.cols.len()
    }
}

pub fn build_data_matrix(corpus: &Corpus) -> DataMatrix {
    DataMatrix {
        cols: corpus.documents.iter().map(|d| d.nbow.clone()).collect(),
        n_words: corpus.vocabulary.len(),
        m: corpus.m_avg,
    }
}

/// Per-word thresholds: the largest integer `zeta` in `{0, .., floor(m)}`
/// such that at least `w0*s/2` documents have frequency strictly above
/// `zeta/m` while at most `3*eps*w0*s` sit exactly on it (tolerance 1e-12).
/// Words failing every `zeta >= 1` get 0.
pub fn compute_thresholds(a: &DataMatrix, params: &TsvdParams) -> Vec<u32> {
    let s = a.docs() as f64;
    let need_gt = params.w0 * s / 2.0;
    let max_eq = 3.0 * params.eps * params.w0 * s;
    let zeta_max = a.m.floor() as u32;

    let mut postings: Vec<Vec<f64>> = vec![Vec::new(); a.n_words];
    for col in &a.cols {
        for &(t, v) in col.entries() {
            postings[t as usize].push(v);
        }
    }

    postings
        .iter()
        .map(|vals| {
            for zeta in (1..=zeta_max).rev() {
                let thr = zeta as f64 / a.m;
                let gt = vals.iter().filter(|&&v| v > thr).count() as f64;
                let eq = vals.iter().filter(|&&v| (v - thr).abs() <= 1e-12).count() as f64;
                if gt >= need_gt && eq <= max_eq {
                    return zeta;
                }
            }
            0
        })
        .collect()
}

/// Thresholded matrix B as sparse columns: `B_ij = sqrt(zeta_i)` when
/// `A_ij > zeta_i / m`, else 0. Rows with `zeta_i = 0` vanish entirely.
pub fn threshold_matrix(a: &DataMatrix, zeta: &[u32], m: f64) -> Vec<Vec<(u32, f64)>> {
    a.cols
        .iter()
        .map(|col| {
            col.entries()
                .iter()
                .filter(|&&(t, v)| zeta[t as usize] >= 1 && v > zeta[t as usize] as f64 / m)
                .map(|&(t, _)| (t, (zeta[t as usize] as f64).sqrt()))
                .collect()
        })
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

struct KmeansOut {
    assign: Vec<usize>,
    centers: Vec<Vec<f64>>,
    reseeds: usize,
}

fn assign_points(
    points: &[Vec<f64>],
    centers: &mut [Vec<f64>],
    reseeds: &mut usize,
) -> Vec<usize> {
    let k = centers.len();
    let mut assign = vec![0usize; points.len()];
    let mut sizes = vec![0usize; k];
    for (p, point) in points.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = dist2(point, &centers[0]);
        for c in 1..k {
            let d = dist2(point, &centers[c]);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assign[p] = best;
        sizes[best] += 1;
    }
    // Re-seed empty clusters: the center moves onto the point currently
    // farthest from its own center (taken from a cluster of size >= 2,
    // ties to the lowest point index).
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (p, point) in points.iter().enumerate() {
            if sizes[assign[p]] < 2 {
                continue;
            }
            let d = dist2(point, &centers[assign[p]]);
            let better = match far {
                None => true,
                Some((_, fd)) => d > fd,
            };
            if better {
                far = Some((p, d));
            }
        }
        if let Some((p, _)) = far {
            sizes[assign[p]] -= 1;
            centers[c] = points[p].clone();
            assign[p] = c;
            sizes[c] = 1;
            *reseeds += 1;
        }
    }
    assign
}

fn recompute_centers(points: &[Vec<f64>], assign: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut centers = vec![vec![0.0; dim]; k];
    let mut sizes = vec![0usize; k];
    for (p, point) in points.iter().enumerate() {
        let c = assign[p];
        sizes[c] += 1;
        for d in 0..dim {
            centers[c][d] += point[d];
        }
    }
    for c in 0..k {
        if sizes[c] > 0 {
            let inv = 1.0 / sizes[c] as f64;
            centers[c].iter_mut().for_each(|x| *x *= inv);
        }
    }
    centers
}

fn kmeans_objective(points: &[Vec<f64>], centers: &[Vec<f64>], assign: &[usize]) -> f64 {
    points
        .iter()
        .zip(assign)
        .map(|(p, &c)| dist2(p, &centers[c]))
        .sum()
}

/// k-means++ seeding: the first center uniform, each next proportional to
/// the squared distance to the nearest chosen center.
fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all points coincide with chosen centers
            centers.len() % n
        } else {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > r {
                    pick = i;
                    break;
                }
            }
            pick
        };
        let c = points[next].clone();
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, &c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centers.push(c);
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> KmeansOut {
    let k = centers.len();
    let dim = points
        .first()
        .map(|p| p.len())
        .unwrap_or(0);
    let mut reseeds = 0usize;
    let mut assign = assign_points(points, &mut centers, &mut reseeds);
    let mut objective = kmeans_objective(points, &centers, &assign);
    for _ in 0..max_iter {
        centers = recompute_centers(points, &assign, k, dim);
        let new_assign = assign_points(points, &mut centers, &mut reseeds);
        let new_objective = kmeans_objective(points, &centers, &new_assign);
        debug_assert!(new_objective <= objective + 1e-9, "k-means objective rose");
        objective = new_objective;
        if new_assign == assign {
            break;
        }
        assign = new_assign;
    }
    KmeansOut {
        assign,
        centers,
        reseeds,
    }
}

/// Dense rank-k approximation via SVD, with singular triplets explicitly
/// sorted in descending order.
fn rank_k_approx(b: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let svd = b.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let k = k.min(sv.len());
    let mut approx = DMatrix::zeros(b.nrows(), b.ncols());
    for &idx in order.iter().take(k) {
        let ui = u.column(idx);
        let vi = vt.row(idx);
        let s = sv[idx];
        for c in 0..b.ncols() {
            let sv_c = s * vi[c];
            for r in 0..b.nrows() {
                approx[(r, c)] += ui[r] * sv_c;
            }
        }
    }
    approx
}

/// Clustering output: per-document cluster (dominant topic) and the final
/// centers over the columns of B.
pub struct Clustering {
    pub assign: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub reseeds: usize,
}

/// Lloyd's k-means on the columns of B, initialized with the k-means
/// centers of the columns of B's rank-k approximation (which are themselves
/// seeded by k-means++ under `kmeans_seed`).
pub fn cluster_documents(
    b_cols: &[Vec<(u32, f64)>],
    n_words: usize,
    params: &TsvdParams,
) -> Result<Clustering, TopicsError> {
    let s = b_cols.len();
    let k = params.k_topics;
    if k > s {
        return Err(TopicsError::TooManyTopics { k, docs: s });
    }
    let mut dense = DMatrix::zeros(n_words, s);
    for (j, col) in b_cols.iter().enumerate() {
        for &(t, v) in col {
            dense[(t as usize, j)] = v;
        }
    }
    let approx = rank_k_approx(&dense, k);
    let approx_points: Vec<Vec<f64>> = (0..s)
        .map(|j| approx.column(j).iter().copied().collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.kmeans_seed);
    let init = kmeans_pp_init(&approx_points, k, &mut rng);
    let warm = lloyd(&approx_points, init, params.kmeans_max_iter);

    let b_points: Vec<Vec<f64>> = (0..s)
        .map(|j| dense.column(j).iter().copied().collect())
        .collect();
    let fin = lloyd(&b_points, warm.centers, params.kmeans_max_iter);
    Ok(Clustering {
        assign: fin.assign,
        centers: fin.centers,
        reseeds: warm.reseeds + fin.reseeds,
    })
}

/// Catchword identification output.
pub struct Catchwords {
    /// Per-topic sorted term ids; pairwise disjoint.
    pub catchwords: Vec<Vec<u32>>,
    /// Per-topic word distribution: normalized mean of the cluster's A
    /// columns, sparse, sorted by term id.
    pub m_hat: Vec<Vec<(u32, f64)>>,
    pub diagnostics: Vec<String>,
}

/// Scores g(i, l) as the delta-quantile from the top of word i's
/// frequencies within cluster l (rank `ceil(delta * |R_l|)`), then selects
/// word i into J_l when `g(i, l) > 0` and `g(i, l') <= rho * g(i, l)` for
/// every other topic. Topics whose catchword group carries less than `p0`
/// of M_hat mass are cleared with a diagnostic.
pub fn identify_catchwords(
    a: &DataMatrix,
    assign: &[usize],
    params: &TsvdParams,
) -> Catchwords {
    let k = params.k_topics;
    let mut cluster_sizes = vec![0usize; k];
    for &c in assign {
        cluster_sizes[c] += 1;
    }

    // per-cluster postings: word -> frequencies of docs containing it
    let mut postings: Vec<HashMap<u32, Vec<f64>>> = vec![HashMap::new(); k];
    for (j, col) in a.cols.iter().enumerate() {
        let l = assign[j];
        for &(t, v) in col.entries() {
            postings[l].entry(t).or_default().push(v);
        }
    }
    for p in postings.iter_mut() {
        for vals in p.values_mut() {
            vals.sort_by(|x, y| y.total_cmp(x));
        }
    }

    let rank: Vec<usize> = cluster_sizes
        .iter()
        .map(|&sz| ((params.delta * sz as f64).ceil() as usize).max(1))
        .collect();
    let g = |i: u32, l: usize| -> f64 {
        match postings[l].get(&i) {
            Some(vals) if vals.len() >= rank[l] => vals[rank[l] - 1],
            _ => 0.0,
        }
    };

    // M_hat column l: normalized mean of the cluster's columns.
    let mut m_hat_dense: Vec<Vec<f64>> = vec![vec![0.0; a.n_words]; k];
    for (j, col) in a.cols.iter().enumerate() {
        let l = assign[j];
        for &(t, v) in col.entries() {
            m_hat_dense[l][t as usize] += v;
        }
    }
    for (l, col) in m_hat_dense.iter_mut().enumerate() {
        if cluster_sizes[l] > 0 {
            let total: f64 = col.iter().sum();
            if total > 0.0 {
                col.iter_mut().for_each(|x| *x /= total);
            }
        }
    }

    let mut catchwords: Vec<Vec<u32>> = vec![Vec::new(); k];
    for i in 0..a.n_words as u32 {
        let gs: Vec<f64> = (0..k).map(|l| g(i, l)).collect();
        for l in 0..k {
            if gs[l] <= 0.0 {
                continue;
            }
            let dominant = (0..k)
                .filter(|&lp| lp != l)
                .all(|lp| gs[lp] <= params.rho * gs[l]);
            if dominant {
                catchwords[l].push(i);
                break; // possible only under rho = 1 ties; keep lowest l
            }
        }
    }

    let mut diagnostics = Vec::new();
    for l in 0..k {
        let mass: f64 = catchwords[l]
            .iter()
            .map(|&i| m_hat_dense[l][i as usize])
            .sum();
        if mass < params.p0 && !catchwords[l].is_empty() {
            diagnostics.push(format!(
                "topic {l}: catchword mass {mass:.4} below p0 {}; group dropped",
                params.p0
            ));
            catchwords[l].clear();
        }
    }

    let m_hat = m_hat_dense
        .into_iter()
        .map(|col| {
            col.into_iter()
                .enumerate()
                .filter(|&(_, v)| v > 0.0)
                .map(|(i, v)| (i as u32, v))
                .collect()
        })
        .collect();

    Catchwords {
        catchwords,
        m_hat,
        diagnostics,
    }
}

/// Sparse catchword-based topic weights of one document column: entry l is
/// the document's total frequency mass over J_l.
pub fn catchword_weights(doc: &NBowVector, catchwords: &[Vec<u32>]) -> Vec<f64> {
    catchwords
        .iter()
        .map(|j_l| {
            let mut s = 0.0;
            let entries = doc.entries();
            let mut ei = 0usize;
            for &cw in j_l {
                while ei < entries.len() && entries[ei].0 < cw {
                    ei += 1;
                }
                if ei < entries.len() && entries[ei].0 == cw {
                    s += entries[ei].1;
                }
            }
            s
        })
        .collect()
}

/// The fitted topic model as used at query time (and as persisted).
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub k_topics: usize,
    /// Per-document dominant topic, aligned with corpus document order.
    pub dominant: Vec<usize>,
    /// Per-topic sorted catchword term ids.
    pub catchwords: Vec<Vec<u32>>,
    /// Per-topic sparse word distribution, sorted by term id. Persisted
    /// truncated to the 200 heaviest entries per topic.
    pub m_hat: Vec<Vec<(u32, f64)>>,
}

impl TopicModel {
    /// Euclidean distance between two topic columns of M_hat.
    pub fn m_hat_distance(&self, l1: usize, l2: usize) -> f64 {
        let a = &self.m_hat[l1];
        let b = &self.m_hat[l2];
        let (mut i, mut j) = (0usize, 0usize);
        let mut s = 0.0;
        while i < a.len() || j < b.len() {
            let d = if j >= b.len() || (i < a.len() && a[i].0 < b[j].0) {
                let v = a[i].1;
                i += 1;
                v
            } else if i >= a.len() || b[j].0 < a[i].0 {
                let v = -b[j].1;
                j += 1;
                v
            } else {
                let v = a[i].1 - b[j].1;
                i += 1;
                j += 1;
                v
            };
            s += d * d;
        }
        s.sqrt()
    }

    pub fn cluster_size(&self, l: usize) -> usize {
        self.dominant.iter().filter(|&&c| c == l).count()
    }
}

/// Full fit output: thresholds and clustering detail beside the model.
pub struct TsvdFit {
    pub zeta: Vec<u32>,
    pub b_cols: Vec<Vec<(u32, f64)>>,
    pub clustering: Clustering,
    pub model: TopicModel,
    pub diagnostics: Vec<String>,
}

/// Runs the whole pipeline over a corpus.
pub fn fit(corpus: &Corpus, params: &TsvdParams) -> Result<TsvdFit, TopicsError> {
    params.validate()?;
    let a = build_data_matrix(corpus);
    if params.k_topics > a.docs() {
        return Err(TopicsError::TooManyTopics {
            k: params.k_topics,
            docs: a.docs(),
        });
    }
    let zeta = compute_thresholds(&a, params);
    let b_cols = threshold_matrix(&a, &zeta, a.m);
    let clustering = cluster_documents(&b_cols, a.n_words, params)?;
    let cw = identify_catchwords(&a, &clustering.assign, params);
    let model = TopicModel {
        k_topics: params.k_topics,
        dominant: clustering.assign.clone(),
        catchwords: cw.catchwords,
        m_hat: cw.m_hat,
    };
    Ok(TsvdFit {
        zeta,
        b_cols,
        clustering,
        model,
        diagnostics: cw.diagnostics,
    })
}

const MODEL_HEADER: &str = "SEMFLOW-TSVD v1";
const M_HAT_KEEP: usize = 200;

/// Writes the model: header, per-document dominant topics (corpus order),
/// per-topic catchword terms, per-topic truncated M_hat columns.
pub fn write_model<W: Write>(
    model: &TopicModel,
    corpus: &Corpus,
    mut w: W,
) -> Result<(), TopicsError> {
    writeln!(w, "{} {}", MODEL_HEADER, model.k_topics)?;
    for (doc, &dom) in corpus.documents.iter().zip(&model.dominant) {
        writeln!(w, "{}\t{}", doc.id, dom)?;
    }
    for (l, cws) in model.catchwords.iter().enumerate() {
        let words = cws
            .iter()
            .map(|&t| corpus.vocabulary.term(t))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{l}\t{words}")?;
    }
    for (l, col) in model.m_hat.iter().enumerate() {
        let mut top: Vec<(u32, f64)> = col.clone();
        top.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        top.truncate(M_HAT_KEEP);
        top.sort_unstable_by_key(|&(t, _)| t);
        let entries = top
            .iter()
            .map(|&(t, v)| format!("{}:{}", t, fmt_g12(v)))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{l}\t{entries}")?;
    }
    Ok(())
}

pub fn save_model(model: &TopicModel, corpus: &Corpus, path: &Path) -> Result<(), TopicsError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(model, corpus, &mut f)?;
    f.flush()?;
    Ok(())
}

/// A parsed model file, not yet resolved against a corpus: catchwords are
/// still term strings and document order is whatever the file says.
#[derive(Debug, Clone)]
pub struct ParsedModel {
    pub k_topics: usize,
    pub doc_dominant: Vec<(String, usize)>,
    pub catchwords: Vec<Vec<String>>,
    pub m_hat: Vec<Vec<(u32, f64)>>,
}

pub fn parse_model<R: BufRead>(r: R) -> Result<ParsedModel, TopicsError> {
    let mut all: Vec<String> = Vec::new();
    for line in r.lines() {
        all.push(line?);
    }
    if all.is_empty() {
        return Err(format_err(1, "empty file"));
    }
    let header = &all[0];
    let mut hp = header.split(' ');
    let magic = (hp.next().unwrap_or(""), hp.next().unwrap_or(""));
    if magic != ("SEMFLOW-TSVD", "v1") {
        return Err(format_err(1, "bad magic, expected `SEMFLOW-TSVD v1`"));
    }
    let k: usize = hp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(1, "bad k_topics"))?;
    if hp.next().is_some() {
        return Err(format_err(1, "trailing header fields"));
    }
    if k == 0 {
        return Err(format_err(1, "k_topics must be >= 1"));
    }
    let body = all.len() - 1;
    if body < 2 * k + 1 {
        return Err(format_err(all.len(), "truncated model file"));
    }
    let n_docs = body - 2 * k;

    let mut doc_dominant = Vec::with_capacity(n_docs.min(1 << 20));
    for (off, line) in all[1..1 + n_docs].iter().enumerate() {
        let lno = 2 + off;
        let (id, dom) = line
            .split_once('\t')
            .ok_or_else(|| format_err(lno, "expected `doc_id<TAB>dominant_topic`"))?;
        if id.is_empty() {
            return Err(format_err(lno, "empty doc id"));
        }
        let dom: usize = dom
            .parse()
            .map_err(|_| format_err(lno, "bad dominant topic"))?;
        if dom >= k {
            return Err(format_err(lno, "dominant topic out of range"));
        }
        doc_dominant.push((id.to_string(), dom));
    }

    let mut catchwords = Vec::with_capacity(k);
    for (l, line) in all[1 + n_docs..1 + n_docs + k].iter().enumerate() {
        let lno = 2 + n_docs + l;
        let (tid, words) = line
            .split_once('\t')
            .ok_or_else(|| format_err(lno, "expected `topic_id<TAB>catchwords`"))?;
        if tid.parse::<usize>() != Ok(l) {
            return Err(format_err(lno, "catchword lines must cover topics in order"));
        }
        let list: Vec<String> = if words.is_empty() {
            Vec::new()
        } else {
            words.split(',').map(|s| s.to_string()).collect()
        };
        if list.iter().any(|wd| wd.is_empty()) {
            return Err(format_err(lno, "empty catchword"));
        }
        catchwords.push(list);
    }

    let mut m_hat = Vec::with_capacity(k);
    for (l, line) in all[1 + n_docs + k..].iter().enumerate() {
        let lno = 2 + n_docs + k + l;
        let (tid, entries) = line
            .split_once('\t')
            .ok_or_else(|| format_err(lno, "expected `topic_id<TAB>term:weight,..`"))?;
        if tid.parse::<usize>() != Ok(l) {
            return Err(format_err(lno, "m_hat lines must cover topics in order"));
        }
        let mut col: Vec<(u32, f64)> = Vec::new();
        if !entries.is_empty() {
            for ent in entries.split(',') {
                let (t, v) = ent
                    .split_once(':')
                    .ok_or_else(|| format_err(lno, "expected `term_id:weight`"))?;
                let t: u32 = t.parse().map_err(|_| format_err(lno, "bad term id"))?;
                let v: f64 = v.parse().map_err(|_| format_err(lno, "bad weight"))?;
                if !v.is_finite() || v <= 0.0 {
                    return Err(format_err(lno, "weight must be finite and > 0"));
                }
                if let Some(&(prev, _)) = col.last() {
                    if t <= prev {
                        return Err(format_err(lno, "term ids must be strictly increasing"));
                    }
                }
                col.push((t, v));
            }
        }
        m_hat.push(col);
    }

    Ok(ParsedModel {
        k_topics: k,
        doc_dominant,
        catchwords,
        m_hat,
    })
}

pub fn load_model(path: &Path) -> Result<ParsedModel, TopicsError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    parse_model(f)
}

/// Resolves a parsed model against the corpus it was fitted on: document
/// lines must match corpus order, catchwords and M_hat terms must exist.
pub fn resolve_model(parsed: &ParsedModel, corpus: &Corpus) -> Result<TopicModel, TopicsError> {
    if parsed.doc_dominant.len() != corpus.len() {
        return Err(TopicsError::ModelMismatch(format!(
            "model lists {} documents, index has {}",
            parsed.doc_dominant.len(),
            corpus.len()
        )));
    }
    for ((id, _), doc) in parsed.doc_dominant.iter().zip(&corpus.documents) {
        if id != &doc.id {
            return Err(TopicsError::ModelMismatch(format!(
                "model doc `{id}` does not match index doc `{}`",
                doc.id
            )));
        }
    }
    let n = corpus.vocabulary.len() as u32;
    let mut catchwords = Vec::with_capacity(parsed.k_topics);
    for list in &parsed.catchwords {
        let mut ids = Vec::with_capacity(list.len());
        for wd in list {
            let id = corpus.vocabulary.id(wd).ok_or_else(|| {
                TopicsError::ModelMismatch(format!("catchword `{wd}` not in vocabulary"))
            })?;
            ids.push(id);
        }
        ids.sort_unstable();
        catchwords.push(ids);
    }
    for col in &parsed.m_hat {
        if col.iter().any(|&(t, _)| t >= n) {
            return Err(TopicsError::ModelMismatch(
                "m_hat term id out of range".into(),
            ));
        }
    }
    Ok(TopicModel {
        k_topics: parsed.k_topics,
        dominant: parsed.doc_dominant.iter().map(|&(_, d)| d).collect(),
        catchwords,
        m_hat: parsed.m_hat.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, RawDocument};

    fn corpus_of(texts: &[&str]) -> Corpus {
        let docs: Vec<RawDocument> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| RawDocument {
                id: format!("d{i}"),
                text: t.to_string(),
            })
            .collect();
        build_corpus(&docs, &Default::default(), 0).unwrap().corpus
    }

    #[test]
    fn data_matrix_columns() {
        let c = corpus_of(&["a a b", "c"]);
        let a = build_data_matrix(&c);
        assert_eq!(a.docs(), 2);
        let ia = c.vocabulary.id("a").unwrap();
        let ib = c.vocabulary.id("b").unwrap();
        assert!((a.cols[0].weight(ia) - 2.0 / 3.0).abs() < 1e-12);
        assert!((a.cols[0].weight(ib) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.cols[1].entries().len(), 1);
        assert_eq!(a.cols[1].entries()[0].1, 1.0);
        for col in &a.cols {
            let sum: f64 = col.entries().iter().map(|&(_, v)| v).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    /// Direct enumeration of both conditions, used as the oracle.
    fn zeta_oracle(a: &DataMatrix, params: &TsvdParams) -> Vec<u32> {
        let s = a.docs();
        let mut dense = vec![vec![0.0f64; s]; a.n_words];
        for (j, col) in a.cols.iter().enumerate() {
            for &(t, v) in col.entries() {
                dense[t as usize][j] = v;
            }
        }
        (0..a.n_words)
            .map(|i| {
                let mut best = 0u32;
                for zeta in 1..=(a.m.floor() as u32) {
                    let thr = zeta as f64 / a.m;
                    let gt = dense[i].iter().filter(|&&v| v > thr).count() as f64;
                    let eq = dense[i]
                        .iter()
                        .filter(|&&v| (v - thr).abs() <= 1e-12)
                        .count() as f64;
                    if gt >= params.w0 * s as f64 / 2.0 && eq <= 3.0 * params.eps * params.w0 * s as f64
                    {
                        best = zeta;
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn thresholds_spec_example() {
        // 10 docs, word "x" alone in exactly 2 of them, m forced to 2 by
        // construction: every doc has 2 tokens.
        let mut texts = vec!["x x", "x x"];
        for _ in 0..8 {
            texts.push("y z");
        }
        let c = corpus_of(&texts);
        let a = build_data_matrix(&c);
        assert_eq!(a.m, 2.0);
        let mut p = TsvdParams::with_topics(2);
        p.w0 = 0.2;
        p.eps = 0.01;
        let zeta = compute_thresholds(&a, &p);
        let ix = c.vocabulary.id("x").unwrap() as usize;
        // zeta = 2 fails (nothing above 1.0), zeta = 1 passes: two docs have
        // frequency 1.0 > 0.5 and none sits exactly on 0.5
        assert_eq!(zeta[ix], 1);
        assert_eq!(zeta, zeta_oracle(&a, &p));
    }

    #[test]
    fn thresholds_absent_and_uniform_words() {
        let c = corpus_of(&["a b c", "a b c", "a b c"]);
        let a = build_data_matrix(&c);
        let p = TsvdParams::with_topics(2);
        let zeta = compute_thresholds(&a, &p);
        // all words are uniform across docs, so all thresholds agree
        assert!(zeta.iter().all(|&z| z == zeta[0]));
        let b = threshold_matrix(&a, &zeta, a.m);
        if zeta[0] == 0 {
            assert!(b.iter().all(|col| col.is_empty()));
        }
    }

    #[test]
    fn threshold_matrix_rule() {
        let c = corpus_of(&["x x x y", "y y y x", "x y"]);
        let a = build_data_matrix(&c);
        let zeta = vec![1u32, 0u32];
        let b = threshold_matrix(&a, &zeta, a.m);
        let ix = c.vocabulary.id("x").unwrap();
        let iy = c.vocabulary.id("y").unwrap();
        let m = a.m;
        for (j, col) in b.iter().enumerate() {
            for &(t, v) in col {
                assert!(t == ix || t == iy);
                assert_eq!(v, (zeta[t as usize] as f64).sqrt());
                assert!(a.cols[j].weight(t) > zeta[t as usize] as f64 / m);
            }
            // zeta 0 rows never appear
            assert!(col.iter().all(|&(t, _)| zeta[t as usize] >= 1));
        }
    }

    fn planted_corpus() -> Corpus {
        // two topics with exclusive marker words and a shared filler
        let mut texts: Vec<String> = Vec::new();
        for i in 0..10 {
            if i % 2 == 0 {
                texts.push("m0 m0 m0 f".to_string());
            } else {
                texts.push("m0 m0 m0 m0 f f".to_string());
            }
        }
        for i in 0..10 {
            if i % 2 == 0 {
                texts.push("m1 m1 m1 f".to_string());
            } else {
                texts.push("m1 m1 m1 m1 f f".to_string());
            }
        }
        let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
        corpus_of(&refs)
    }

    #[test]
    fn clustering_recovers_planted_topics() {
        let c = planted_corpus();
        let mut p = TsvdParams::with_topics(2);
        p.kmeans_seed = 3;
        let f = fit(&c, &p).unwrap();
        let a = &f.model.dominant;
        // first 10 docs in one cluster, last 10 in the other
        assert!(a[..10].iter().all(|&x| x == a[0]));
        assert!(a[10..].iter().all(|&x| x == a[10]));
        assert_ne!(a[0], a[10]);
    }

    #[test]
    fn clustering_k_equals_docs_gives_singletons() {
        let c = corpus_of(&["a a", "b b", "c c", "a c"]);
        let mut p = TsvdParams::with_topics(4);
        p.w0 = 0.5;
        let a = build_data_matrix(&c);
        let zeta = compute_thresholds(&a, &p);
        let b = threshold_matrix(&a, &zeta, a.m);
        let cl = cluster_documents(&b, a.n_words, &p).unwrap();
        let mut sizes = vec![0; 4];
        for &x in &cl.assign {
            sizes[x] += 1;
        }
        assert_eq!(sizes, vec![1, 1, 1, 1]);
    }

    #[test]
    fn duplicate_columns_co_clustered() {
        let c = corpus_of(&["a a a b", "a a a b", "c c c d", "c c c d", "a c"]);
        let mut p = TsvdParams::with_topics(2);
        p.w0 = 0.4;
        let f = fit(&c, &p).unwrap();
        assert_eq!(f.model.dominant[0], f.model.dominant[1]);
        assert_eq!(f.model.dominant[2], f.model.dominant[3]);
    }

    #[test]
    fn k_exceeding_docs_is_error() {
        let c = corpus_of(&["a", "b"]);
        let p = TsvdParams::with_topics(3);
        assert!(matches!(
            fit(&c, &p),
            Err(TopicsError::TooManyTopics { .. })
        ));
    }

    #[test]
    fn kmeans_objective_is_monotone() {
        // drive the Lloyd loop by hand and watch the objective directly
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|_| rng.random::<f64>() * 3.0).collect())
            .collect();
        let k = 4;
        let mut centers = kmeans_pp_init(&points, k, &mut rng);
        let mut reseeds = 0usize;
        let mut assign = assign_points(&points, &mut centers, &mut reseeds);
        let mut prev = kmeans_objective(&points, &centers, &assign);
        for _ in 0..30 {
            centers = recompute_centers(&points, &assign, k, 6);
            let new_assign = assign_points(&points, &mut centers, &mut reseeds);
            let obj = kmeans_objective(&points, &centers, &new_assign);
            assert!(obj <= prev + 1e-12, "objective went up: {obj} > {prev}");
            if new_assign == assign {
                break;
            }
            assign = new_assign;
            prev = obj;
        }
    }

    #[test]
    fn catchwords_planted_markers() {
        let c = planted_corpus();
        let p = TsvdParams::with_topics(2);
        let f = fit(&c, &p).unwrap();
        let im0 = c.vocabulary.id("m0").unwrap();
        let im1 = c.vocabulary.id("m1").unwrap();
        let if_ = c.vocabulary.id("f").unwrap();
        let cluster_of_m0 = f.model.dominant[0];
        assert!(f.model.catchwords[cluster_of_m0].contains(&im0));
        assert!(f.model.catchwords[1 - cluster_of_m0].contains(&im1));
        // the filler is uniform across clusters: in neither catchword set
        for l in 0..2 {
            assert!(!f.model.catchwords[l].contains(&if_));
        }
        // disjoint
        let inter: Vec<_> = f.model.catchwords[0]
            .iter()
            .filter(|t| f.model.catchwords[1].contains(t))
            .collect();
        assert!(inter.is_empty());
    }

    #[test]
    fn catchwords_k1_takes_all_present_words() {
        let c = corpus_of(&["a a b", "b c", "a c c"]);
        let mut p = TsvdParams::with_topics(1);
        p.w0 = 1.0;
        p.p0 = 0.01;
        let a = build_data_matrix(&c);
        let cw = identify_catchwords(&a, &vec![0; 3], &p);
        // with one topic the dominance condition is vacuous: every word with
        // g > 0 is a catchword; delta-quantile rank over 3 docs is 1 (max),
        // so every occurring word qualifies
        assert_eq!(cw.catchwords[0].len(), c.vocabulary.len());
    }

    #[test]
    fn catchword_weights_examples() {
        let c = corpus_of(&["a b c d", "a a a a"]);
        let ia = c.vocabulary.id("a").unwrap();
        let ib = c.vocabulary.id("b").unwrap();
        let ic = c.vocabulary.id("c").unwrap();
        let j = vec![vec![ib], vec![ia, ic]];
        let w = catchword_weights(&c.documents[0].nbow, &j);
        assert!((w[0] - 0.25).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
        // doc of pure topic-1 catchwords
        let w2 = catchword_weights(&c.documents[1].nbow, &j);
        assert_eq!(w2[0], 0.0);
        assert!((w2[1] - 1.0).abs() < 1e-12);
        // no catchwords at all
        let none = catchword_weights(&c.documents[0].nbow, &vec![vec![], vec![]]);
        assert_eq!(none, vec![0.0, 0.0]);
    }

    #[test]
    fn svd_rank_k_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(r, c, k) in &[(6usize, 8usize, 2usize), (10, 4, 3), (5, 5, 5)] {
            let b = DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let approx = rank_k_approx(&b, k);
            let err = (&b - &approx).norm();
            // optimal error from the singular values themselves
            let svd = b.clone().svd(false, false);
            let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            let opt: f64 = sv.iter().skip(k).map(|s| s * s).sum::<f64>().sqrt();
            assert!(
                (err - opt).abs() <= 1e-6,
                "rank-{k} error {err} vs optimal {opt}"
            );
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let c = planted_corpus();
        let mut p = TsvdParams::with_topics(2);
        p.kmeans_seed = 42;
        let f1 = fit(&c, &p).unwrap();
        let f2 = fit(&c, &p).unwrap();
        assert_eq!(f1.model, f2.model);
        assert_eq!(f1.zeta, f2.zeta);
    }

    #[test]
    fn model_round_trip() {
        let c = planted_corpus();
        let p = TsvdParams::with_topics(2);
        let f = fit(&c, &p).unwrap();
        let mut buf = Vec::new();
        write_model(&f.model, &c, &mut buf).unwrap();
        let parsed = parse_model(&buf[..]).unwrap();
        let resolved = resolve_model(&parsed, &c).unwrap();
        assert_eq!(resolved.k_topics, f.model.k_topics);
        assert_eq!(resolved.dominant, f.model.dominant);
        assert_eq!(resolved.catchwords, f.model.catchwords);
        // m_hat round-trips through 12-significant-digit printing
        for (a, b) in resolved.m_hat.iter().zip(&f.model.m_hat) {
            assert_eq!(a.len(), b.len());
            for (&(t1, v1), &(t2, v2)) in a.iter().zip(b) {
                assert_eq!(t1, t2);
                assert!((v1 - v2).abs() < 1e-9);
            }
        }
        // second write is byte-stable
        let mut buf2 = Vec::new();
        write_model(&resolved, &c, &mut buf2).unwrap();
        let parsed2 = parse_model(&buf2[..]).unwrap();
        let resolved2 = resolve_model(&parsed2, &c).unwrap();
        let mut buf3 = Vec::new();
        write_model(&resolved2, &c, &mut buf3).unwrap();
        assert_eq!(buf2, buf3);
    }

    #[test]
    fn model_parse_rejects_garbage() {
        assert!(parse_model(&b""[..]).is_err());
        assert!(parse_model(&b"SEMFLOW-TSVD v1 0\n"[..]).is_err());
        assert!(parse_model(&b"SEMFLOW-TSVD v1 1\nd0\t0\n"[..]).is_err()); // truncated
        assert!(parse_model(&b"WRONG v1 1\n"[..]).is_err());
        let c = planted_corpus();
        let p = TsvdParams::with_topics(2);
        let f = fit(&c, &p).unwrap();
        let mut buf = Vec::new();
        write_model(&f.model, &c, &mut buf).unwrap();
        for cut in [10, buf.len() / 2, buf.len() - 3] {
            assert!(parse_model(&buf[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn params_validation() {
        let mut p = TsvdParams::with_topics(5);
        assert!(p.validate().is_ok());
        p.delta = 0.2;
        assert!(p.validate().is_err());
        let mut p = TsvdParams::with_topics(5);
        p.alpha = 0.45;
        p.delta = 0.05;
        assert!(p.validate().is_err()); // alpha + 2 delta > 0.5
        let mut p = TsvdParams::with_topics(5);
        p.beta = 0.5;
        assert!(p.validate().is_err()); // beta + rho > (1-delta) alpha
    }
}
