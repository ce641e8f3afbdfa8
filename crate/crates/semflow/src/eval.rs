//! Retrieval evaluation: qrels parsing, hit-rate@k and precision@k.
//!
//! Hit-rate@k is the fraction of queries with at least one relevant
//! document in the top k; precision@k is the mean of |relevant ∩ top-k| / k.
//! Both are always computed and reported side by side, never conflated.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;

use crate::config::{Config, MetricChoice};
use crate::engine::{Engine, EngineError};
use crate::util::fnv1a64;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("qrels reference unknown doc id `{0}`")]
    UnknownDoc(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Parses a qrels file: one `query_doc_id<TAB>relevant_doc_id` pair per
/// line, blank lines skipped.
pub fn parse_qrels<R: BufRead>(r: R) -> Result<Vec<(String, String)>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (q, rel) = line.split_once('\t').ok_or_else(|| EvalError::Format {
            line: i + 1,
            msg: "expected `query_doc_id<TAB>relevant_doc_id`".into(),
        })?;
        if q.is_empty() || rel.is_empty() {
            return Err(EvalError::Format {
                line: i + 1,
                msg: "empty doc id".into(),
            });
        }
        out.push((q.to_string(), rel.to_string()));
    }
    Ok(out)
}

pub fn load_qrels(path: &Path) -> Result<Vec<(String, String)>, EvalError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    parse_qrels(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerQuery {
    pub id: String,
    /// Retrieved ids in rank order, flagged relevant/not.
    pub top: Vec<(String, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub hit_rate: Vec<f64>,
    pub precision: Vec<f64>,
    pub query_count: usize,
    pub per_query: Vec<PerQuery>,
}

/// Runs every qrels query through the engine and scores the rankings.
/// Queries fan out across workers; per-query dropout seeds derive from the
/// configured seed and the query id, so the report is independent of
/// scheduling.
pub fn run_eval(
    engine: &Engine,
    cfg: &Config,
    qrels: &[(String, String)],
) -> Result<EvalReport, EvalError> {
    let mut relevant: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (q, r) in qrels {
        if engine.corpus.doc_index(q).is_none() {
            return Err(EvalError::UnknownDoc(q.clone()));
        }
        if engine.corpus.doc_index(r).is_none() {
            return Err(EvalError::UnknownDoc(r.clone()));
        }
        relevant.entry(q).or_default().insert(r);
    }

    let k_eval = cfg
        .eval_ks
        .iter()
        .copied()
        .max()
        .unwrap_or(10)
        .max(cfg.k_out);
    let mut eval_cfg = cfg.clone();
    eval_cfg.k_out = k_eval;

    let queries: Vec<(&str, &BTreeSet<&str>)> =
        relevant.iter().map(|(q, rs)| (*q, rs)).collect();
    let per_query: Result<Vec<PerQuery>, EvalError> = queries
        .par_iter()
        .map(|&(qid, rels)| {
            let query = engine.query_from_id(qid)?;
            let seed = eval_cfg.propagation.rng_seed ^ fnv1a64(qid.as_bytes());
            let out = engine.run_query(&query, &eval_cfg, Some(seed), None)?;
            Ok(PerQuery {
                id: qid.to_string(),
                top: out
                    .ranked
                    .into_iter()
                    .map(|r| {
                        let hit = rels.contains(r.id.as_str());
                        (r.id, hit)
                    })
                    .collect(),
            })
        })
        .collect();
    let per_query = per_query?;

    let n = per_query.len();
    let mut hit_rate = Vec::with_capacity(cfg.eval_ks.len());
    let mut precision = Vec::with_capacity(cfg.eval_ks.len());
    for &k in &cfg.eval_ks {
        let mut hits = 0usize;
        let mut prec_sum = 0.0f64;
        for pq in &per_query {
            let top_k = pq.top.iter().take(k);
            let rel_in_k = top_k.filter(|(_, r)| *r).count();
            if rel_in_k > 0 {
                hits += 1;
            }
            prec_sum += rel_in_k as f64 / k as f64;
        }
        hit_rate.push(if n > 0 { hits as f64 / n as f64 } else { 0.0 });
        precision.push(if n > 0 { prec_sum / n as f64 } else { 0.0 });
    }

    Ok(EvalReport {
        ks: cfg.eval_ks.clone(),
        hit_rate,
        precision,
        query_count: n,
        per_query,
    })
}

/// Renders the report deterministically. Both metrics appear unless the
/// metric choice narrows it.
pub fn render_report(report: &EvalReport, metric: MetricChoice) -> String {
    let mut out = String::new();
    out.push_str("SEMFLOW-EVAL v1\n");
    out.push_str(&format!("queries\t{}\n", report.query_count));
    if metric != MetricChoice::Precision {
        for (k, v) in report.ks.iter().zip(&report.hit_rate) {
            out.push_str(&format!("hit_rate@{k}\t{v:.6}\n"));
        }
    }
    if metric != MetricChoice::HitRate {
        for (k, v) in report.ks.iter().zip(&report.precision) {
            out.push_str(&format!("precision@{k}\t{v:.6}\n"));
        }
    }
    for pq in &report.per_query {
        let list = pq
            .top
            .iter()
            .map(|(id, rel)| {
                if *rel {
                    format!("{id}*")
                } else {
                    id.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&format!("{}\t{list}\n", pq.id));
    }
    out
}
