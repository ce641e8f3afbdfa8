//! Synthetic corpus generation for desk-scale testing.
//!
//! Documents are drawn from a dominant-admixture model: each document has
//! one dominant topic, every topic owns a group of exclusive catchwords,
//! and filler words are shared across topics with bounded weight ratios so
//! they never qualify as catchwords. Filler words come in synonym pairs
//! whose embeddings nearly coincide; duplicate clusters are planted by
//! copying a base document and substituting tokens with their synonyms at
//! the paraphrase noise rate. Everything derives from one seeded RNG.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::RawDocument;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
}

fn format_err(line: usize, msg: impl Into<String>) -> SynthError {
    SynthError::Format {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub topics: usize,
    /// Base documents; duplicate-cluster members are appended on top.
    pub docs: usize,
    /// Total vocabulary size (catchwords plus filler synonym pairs).
    pub vocab: usize,
    pub dup_clusters: usize,
    /// Per-token probability of synonym substitution in a duplicate.
    pub noise: f64,
    pub catchwords_per_topic: usize,
    pub doc_len: usize,
    /// Dominant-topic weight of a regular document.
    pub dominant_weight: f64,
    /// Fraction of documents drawn purely from their dominant topic.
    pub pure_frac: f64,
    /// Members per duplicate cluster (base plus `cluster_size - 1` copies).
    pub cluster_size: usize,
    pub embed_dim: usize,
    /// Total topic mass carried by a topic's catchword group.
    pub catchword_mass: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            topics: 5,
            docs: 200,
            vocab: 150,
            dup_clusters: 20,
            noise: 0.3,
            catchwords_per_topic: 10,
            doc_len: 50,
            dominant_weight: 0.9,
            pure_frac: 0.5,
            cluster_size: 2,
            embed_dim: 16,
            catchword_mass: 0.6,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.topics == 0 || self.docs == 0 || self.doc_len == 0 {
            return Err(SynthError::InvalidSpec(
                "topics, docs and doc_len must be >= 1".into(),
            ));
        }
        if self.catchwords_per_topic == 0 {
            return Err(SynthError::InvalidSpec(
                "catchwords_per_topic must be >= 1".into(),
            ));
        }
        let cw_total = self.topics * self.catchwords_per_topic;
        if self.vocab < cw_total + 2 {
            return Err(SynthError::InvalidSpec(format!(
                "vocab {} too small for {} catchwords plus filler",
                self.vocab, cw_total
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(SynthError::InvalidSpec("noise must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.pure_frac) {
            return Err(SynthError::InvalidSpec("pure_frac must be in [0, 1]".into()));
        }
        if !(self.dominant_weight > 0.0 && self.dominant_weight <= 1.0) {
            return Err(SynthError::InvalidSpec(
                "dominant_weight must be in (0, 1]".into(),
            ));
        }
        if self.topics > 1 && self.dominant_weight <= 1.0 / self.topics as f64 {
            return Err(SynthError::InvalidSpec(
                "dominant_weight must exceed the uniform share".into(),
            ));
        }
        if !(self.catchword_mass > 0.0 && self.catchword_mass < 1.0) {
            return Err(SynthError::InvalidSpec(
                "catchword_mass must be in (0, 1)".into(),
            ));
        }
        if self.cluster_size < 2 {
            return Err(SynthError::InvalidSpec("cluster_size must be >= 2".into()));
        }
        if self.dup_clusters > self.docs {
            return Err(SynthError::InvalidSpec(
                "dup_clusters cannot exceed docs".into(),
            ));
        }
        if self.embed_dim == 0 {
            return Err(SynthError::InvalidSpec("embed_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Planted ground truth emitted beside the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub topics: usize,
    /// Per-document dominant topic, corpus order.
    pub doc_topics: Vec<(String, usize)>,
    /// Per-topic planted catchword strings.
    pub catchwords: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub documents: Vec<RawDocument>,
    /// word2vec text content.
    pub embeddings: String,
    /// `(query_doc_id, relevant_doc_id)` pairs.
    pub qrels: Vec<(String, String)>,
    pub truth: Truth,
}

struct WordTable {
    /// word strings, index = word id within the generator
    words: Vec<String>,
    /// same-concept sibling for synonym substitution (identity when none)
    sibling: Vec<usize>,
    /// per-word embedding
    vectors: Vec<Vec<f64>>,
}

fn build_words(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> WordTable {
    let cw_total = spec.topics * spec.catchwords_per_topic;
    let filler_concepts = (spec.vocab - cw_total) / 2;
    let mut words = Vec::new();
    let mut sibling = Vec::new();
    let mut vectors = Vec::new();
    let dim = spec.embed_dim;

    let concept_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    };
    let perturb = |base: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        base.iter()
            .map(|&x| x + (rng.random::<f64>() * 2.0 - 1.0) * 0.01)
            .collect()
    };

    for l in 0..spec.topics {
        for c in 0..spec.catchwords_per_topic {
            let v = concept_vec(rng);
            words.push(format!("cw{l}x{c}"));
            sibling.push(words.len() - 1);
            vectors.push(v);
        }
    }
    for f in 0..filler_concepts {
        let base = concept_vec(rng);
        let ia = words.len();
        words.push(format!("fw{f}a"));
        vectors.push(perturb(&base, rng));
        let ib = words.len();
        words.push(format!("fw{f}b"));
        vectors.push(perturb(&base, rng));
        sibling.push(ib);
        sibling.push(ia);
    }
    WordTable {
        words,
        sibling,
        vectors,
    }
}

/// Per-topic cumulative word distribution over the word table.
fn topic_distributions(
    spec: &SynthSpec,
    table: &WordTable,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let cw_total = spec.topics * spec.catchwords_per_topic;
    let n_words = table.words.len();
    let filler_words = n_words - cw_total;
    let filler_concepts = filler_words / 2;
    let mut dists = Vec::with_capacity(spec.topics);
    for l in 0..spec.topics {
        let mut weights = vec![0.0f64; n_words];
        let per_cw = spec.catchword_mass / spec.catchwords_per_topic as f64;
        for c in 0..spec.catchwords_per_topic {
            weights[l * spec.catchwords_per_topic + c] = per_cw;
        }
        // filler concept weights bounded in [1, 5]: the cross-topic ratio of
        // any filler word stays below 1/rho for the default rho = 0.1, so
        // fillers cannot masquerade as catchwords
        let mut concept_w: Vec<f64> = (0..filler_concepts)
            .map(|_| 1.0 + rng.random::<f64>() * 4.0)
            .collect();
        let total: f64 = concept_w.iter().sum();
        let filler_mass = 1.0 - spec.catchword_mass;
        concept_w.iter_mut().for_each(|w| *w *= filler_mass / total);
        for (f, w) in concept_w.iter().enumerate() {
            weights[cw_total + 2 * f] = w / 2.0;
            weights[cw_total + 2 * f + 1] = w / 2.0;
        }
        let mut cum = Vec::with_capacity(n_words);
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cum.push(acc);
        }
        dists.push(cum);
    }
    dists
}

fn sample_cum(cum: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cum.last().unwrap();
    let r = rng.random::<f64>() * total;
    match cum.binary_search_by(|x| x.total_cmp(&r)) {
        Ok(i) => (i + 1).min(cum.len() - 1),
        Err(i) => i.min(cum.len() - 1),
    }
}

/// Generates the corpus, embeddings, qrels and truth deterministically from
/// the seed.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = build_words(spec, &mut rng);
    let dists = topic_distributions(spec, &table, &mut rng);

    let mut documents = Vec::new();
    let mut doc_topics = Vec::new();
    let mut base_tokens: Vec<Vec<usize>> = Vec::with_capacity(spec.docs);
    for j in 0..spec.docs {
        let dominant = rng.random_range(0..spec.topics);
        let pure = rng.random::<f64>() < spec.pure_frac;
        let mut tokens = Vec::with_capacity(spec.doc_len);
        for _ in 0..spec.doc_len {
            let topic = if pure || spec.topics == 1 {
                dominant
            } else {
                let r = rng.random::<f64>();
                if r < spec.dominant_weight {
                    dominant
                } else {
                    // remaining mass spread uniformly over the other topics
                    let off = ((r - spec.dominant_weight) / (1.0 - spec.dominant_weight)
                        * (spec.topics - 1) as f64) as usize;
                    let off = off.min(spec.topics - 2);
                    if off >= dominant {
                        off + 1
                    } else {
                        off
                    }
                }
            };
            tokens.push(sample_cum(&dists[topic], &mut rng));
        }
        let id = format!("d{j:05}");
        let text = tokens
            .iter()
            .map(|&w| table.words[w].as_str())
            .collect::<Vec<_>>()
            .join(" ");
        documents.push(RawDocument { id: id.clone(), text });
        doc_topics.push((id, dominant));
        base_tokens.push(tokens);
    }

    // duplicate clusters over the first `dup_clusters` base docs
    let mut qrels = Vec::new();
    for b in 0..spec.dup_clusters {
        let base_id = format!("d{b:05}");
        let mut member_ids = vec![base_id.clone()];
        for t in 1..spec.cluster_size {
            let mut tokens = base_tokens[b].clone();
            for tok in tokens.iter_mut() {
                if table.sibling[*tok] != *tok && rng.random::<f64>() < spec.noise {
                    *tok = table.sibling[*tok];
                }
            }
            let id = format!("d{b:05}q{t}");
            let text = tokens
                .iter()
                .map(|&w| table.words[w].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            documents.push(RawDocument { id: id.clone(), text });
            doc_topics.push((id.clone(), doc_topics[b].1));
            member_ids.push(id);
        }
        // every non-base member is a query; all other members are relevant
        for qi in 1..member_ids.len() {
            for ri in 0..member_ids.len() {
                if ri != qi {
                    qrels.push((member_ids[qi].clone(), member_ids[ri].clone()));
                }
            }
        }
    }
    qrels.sort();

    let mut embeddings = String::new();
    embeddings.push_str(&format!("{} {}\n", table.words.len(), spec.embed_dim));
    for (w, v) in table.words.iter().zip(&table.vectors) {
        embeddings.push_str(w);
        for x in v {
            embeddings.push_str(&format!(" {x:.6}"));
        }
        embeddings.push('\n');
    }

    let catchwords = (0..spec.topics)
        .map(|l| {
            (0..spec.catchwords_per_topic)
                .map(|c| format!("cw{l}x{c}"))
                .collect()
        })
        .collect();

    Ok(SynthData {
        documents,
        embeddings,
        qrels,
        truth: Truth {
            topics: spec.topics,
            doc_topics,
            catchwords,
        },
    })
}

/// Paths of the four files a synth run writes.
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub corpus: PathBuf,
    pub embeddings: PathBuf,
    pub qrels: PathBuf,
    pub truth: PathBuf,
}

pub fn write_all(data: &SynthData, out_dir: &Path) -> Result<SynthFiles, SynthError> {
    std::fs::create_dir_all(out_dir)?;
    let files = SynthFiles {
        corpus: out_dir.join("corpus.tsv"),
        embeddings: out_dir.join("embeddings.txt"),
        qrels: out_dir.join("qrels.tsv"),
        truth: out_dir.join("truth.txt"),
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(&files.corpus)?);
    for d in &data.documents {
        writeln!(w, "{}\t{}", d.id, d.text)?;
    }
    w.flush()?;
    std::fs::write(&files.embeddings, &data.embeddings)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&files.qrels)?);
    for (q, r) in &data.qrels {
        writeln!(w, "{q}\t{r}")?;
    }
    w.flush()?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&files.truth)?);
    write_truth(&data.truth, &mut w)?;
    w.flush()?;
    Ok(files)
}

const TRUTH_HEADER: &str = "SEMFLOW-TRUTH v1";

pub fn write_truth<W: Write>(truth: &Truth, mut w: W) -> Result<(), SynthError> {
    writeln!(w, "{} {}", TRUTH_HEADER, truth.topics)?;
    for (id, t) in &truth.doc_topics {
        writeln!(w, "{id}\t{t}")?;
    }
    for (l, cws) in truth.catchwords.iter().enumerate() {
        writeln!(w, "{l}\t{}", cws.join(","))?;
    }
    Ok(())
}

pub fn parse_truth<R: BufRead>(r: R) -> Result<Truth, SynthError> {
    let mut all = Vec::new();
    for line in r.lines() {
        all.push(line?);
    }
    if all.is_empty() {
        return Err(format_err(1, "empty file"));
    }
    let mut hp = all[0].split(' ');
    let magic = (hp.next().unwrap_or(""), hp.next().unwrap_or(""));
    if magic != ("SEMFLOW-TRUTH", "v1") {
        return Err(format_err(1, "bad magic, expected `SEMFLOW-TRUTH v1`"));
    }
    let topics: usize = hp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(1, "bad topic count"))?;
    if topics == 0 || hp.next().is_some() {
        return Err(format_err(1, "bad header"));
    }
    let body = all.len() - 1;
    if body < topics {
        return Err(format_err(all.len(), "truncated truth file"));
    }
    let n_docs = body - topics;
    let mut doc_topics = Vec::with_capacity(n_docs.min(1 << 20));
    for (off, line) in all[1..1 + n_docs].iter().enumerate() {
        let lno = 2 + off;
        let (id, t) = line
            .split_once('\t')
            .ok_or_else(|| format_err(lno, "expected `doc_id<TAB>topic`"))?;
        let t: usize = t.parse().map_err(|_| format_err(lno, "bad topic"))?;
        if id.is_empty() || t >= topics {
            return Err(format_err(lno, "bad doc line"));
        }
        doc_topics.push((id.to_string(), t));
    }
    let mut catchwords = Vec::with_capacity(topics);
    for (l, line) in all[1 + n_docs..].iter().enumerate() {
        let lno = 2 + n_docs + l;
        let (tid, words) = line
            .split_once('\t')
            .ok_or_else(|| format_err(lno, "expected `topic_id<TAB>words`"))?;
        if tid.parse::<usize>() != Ok(l) {
            return Err(format_err(lno, "topic lines must be in order"));
        }
        let list: Vec<String> = if words.is_empty() {
            Vec::new()
        } else {
            words.split(',').map(|s| s.to_string()).collect()
        };
        catchwords.push(list);
    }
    Ok(Truth {
        topics,
        doc_topics,
        catchwords,
    })
}

pub fn load_truth(path: &Path) -> Result<Truth, SynthError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    parse_truth(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            docs: 30,
            dup_clusters: 5,
            ..Default::default()
        };
        let a = generate(&spec, 42).unwrap();
        let b = generate(&spec, 42).unwrap();
        assert_eq!(a.documents, b.documents);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.qrels, b.qrels);
        assert_eq!(a.truth, b.truth);
        let c = generate(&spec, 43).unwrap();
        assert_ne!(a.documents, c.documents);
    }

    #[test]
    fn zero_noise_duplicates_are_exact_copies() {
        let spec = SynthSpec {
            docs: 10,
            dup_clusters: 3,
            noise: 0.0,
            ..Default::default()
        };
        let data = generate(&spec, 7).unwrap();
        let by_id: HashMap<&str, &str> = data
            .documents
            .iter()
            .map(|d| (d.id.as_str(), d.text.as_str()))
            .collect();
        for b in 0..3 {
            let base = by_id[format!("d{b:05}").as_str()];
            let dup = by_id[format!("d{b:05}q1").as_str()];
            assert_eq!(base, dup);
        }
    }

    #[test]
    fn noisy_duplicates_swap_only_synonyms() {
        let spec = SynthSpec {
            docs: 10,
            dup_clusters: 5,
            noise: 0.8,
            ..Default::default()
        };
        let data = generate(&spec, 9).unwrap();
        let by_id: HashMap<&str, &str> = data
            .documents
            .iter()
            .map(|d| (d.id.as_str(), d.text.as_str()))
            .collect();
        for b in 0..5 {
            let base: Vec<&str> = by_id[format!("d{b:05}").as_str()].split(' ').collect();
            let dup: Vec<&str> = by_id[format!("d{b:05}q1").as_str()].split(' ').collect();
            assert_eq!(base.len(), dup.len());
            for (x, y) in base.iter().zip(&dup) {
                if x != y {
                    // a substitution always stays within the synonym pair
                    assert_eq!(&x[..x.len() - 1], &y[..y.len() - 1]);
                    assert!(x.starts_with("fw"));
                }
            }
        }
    }

    #[test]
    fn qrels_pair_members_mutually() {
        let spec = SynthSpec {
            docs: 10,
            dup_clusters: 2,
            cluster_size: 3,
            ..Default::default()
        };
        let data = generate(&spec, 5).unwrap();
        // per cluster: 2 query members x 2 relevant each
        assert_eq!(data.qrels.len(), 2 * 2 * 2);
        for (q, r) in &data.qrels {
            assert_ne!(q, r);
            assert_eq!(&q[..6], &r[..6]);
        }
    }

    #[test]
    fn truth_lists_all_docs_and_catchwords() {
        let spec = SynthSpec {
            docs: 12,
            dup_clusters: 2,
            ..Default::default()
        };
        let data = generate(&spec, 3).unwrap();
        assert_eq!(data.truth.doc_topics.len(), data.documents.len());
        assert_eq!(data.truth.catchwords.len(), spec.topics);
        for cws in &data.truth.catchwords {
            assert_eq!(cws.len(), spec.catchwords_per_topic);
        }
        // duplicate members inherit the base topic
        let topic_of: HashMap<&str, usize> = data
            .truth
            .doc_topics
            .iter()
            .map(|(id, t)| (id.as_str(), *t))
            .collect();
        assert_eq!(topic_of["d00000"], topic_of["d00000q1"]);
    }

    #[test]
    fn truth_round_trips() {
        let spec = SynthSpec {
            docs: 8,
            dup_clusters: 1,
            ..Default::default()
        };
        let data = generate(&spec, 1).unwrap();
        let mut buf = Vec::new();
        write_truth(&data.truth, &mut buf).unwrap();
        let parsed = parse_truth(&buf[..]).unwrap();
        assert_eq!(parsed, data.truth);
        assert!(parse_truth(&buf[..buf.len() / 2]).is_err());
        assert!(parse_truth(&b""[..]).is_err());
    }

    #[test]
    fn spec_validation_rejects_bad_values() {
        let mut s = SynthSpec::default();
        s.vocab = 10;
        assert!(s.validate().is_err());
        let mut s = SynthSpec::default();
        s.noise = 1.5;
        assert!(s.validate().is_err());
        let mut s = SynthSpec::default();
        s.dup_clusters = s.docs + 1;
        assert!(s.validate().is_err());
        let mut s = SynthSpec::default();
        s.cluster_size = 1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn embeddings_parse_and_cover_vocab() {
        let spec = SynthSpec {
            docs: 10,
            dup_clusters: 0,
            ..Default::default()
        };
        let data = generate(&spec, 2).unwrap();
        let raw = crate::transport::parse_embeddings(data.embeddings.as_bytes()).unwrap();
        assert_eq!(raw.dim, spec.embed_dim);
        for d in &data.documents {
            for tok in d.text.split(' ') {
                assert!(raw.get(tok).is_some(), "missing embedding for {tok}");
            }
        }
    }
}
