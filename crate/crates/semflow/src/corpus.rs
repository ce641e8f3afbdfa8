//! Corpus ingestion: preprocessing, vocabulary construction, sparse nBOW
//! representations and the text index format.
//!
//! Preprocessing lowercases, strips `<code>` spans and URL tokens, splits on
//! non-alphanumeric characters and removes stopwords. Vocabulary construction
//! additionally prunes the `prune_top` highest-count terms of the corpus.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::util::fmt_g12;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("no document survives preprocessing")]
    AllDocumentsEmpty,
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("idf domain error: df={df}, pool={pool}")]
    DomainError { df: usize, pool: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
}

fn format_err(line: usize, msg: impl Into<String>) -> CorpusError {
    CorpusError::Format {
        line,
        msg: msg.into(),
    }
}

/// A document as handed to the indexer: an opaque unique id plus raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
}

/// Dense-id vocabulary over the retained terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    term_to_id: HashMap<String, u32>,
    doc_freq: Vec<u32>,
}

impl Vocabulary {
    fn new(terms: Vec<String>, doc_freq: Vec<u32>) -> Self {
        let term_to_id = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            terms,
            term_to_id,
            doc_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.term_to_id.get(term).copied()
    }

    pub fn doc_freq(&self, id: u32) -> u32 {
        self.doc_freq[id as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Sparse normalized bag-of-words vector: strictly positive weights summing
/// to one, entries sorted by term id.
#[derive(Debug, Clone, PartialEq)]
pub struct NBowVector {
    entries: Vec<(u32, f64)>,
}

impl NBowVector {
    /// Builds the nBOW of a token-id sequence: term counts divided by the
    /// sequence length. Empty input yields an empty vector.
    pub fn from_tokens(tokens: &[u32]) -> Self {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for &t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        let len = tokens.len() as f64;
        let mut entries: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(t, c)| (t, c as f64 / len))
            .collect();
        entries.sort_unstable_by_key(|&(t, _)| t);
        NBowVector { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn support(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight(&self, term: u32) -> f64 {
        match self.entries.binary_search_by_key(&term, |&(t, _)| t) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }
}

/// One indexed document: id, nBOW and the retained token-id sequence in
/// original order (the order feeds n-gram feature extraction).
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub nbow: NBowVector,
    pub tokens: Vec<u32>,
}

/// The indexed corpus. Immutable after build; queries only read it.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub documents: Vec<Document>,
    /// Average retained tokens per document.
    pub m_avg: f64,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.id == id)
    }

    /// Keeps only vocabulary terms accepted by `keep`, remapping term ids and
    /// rebuilding every document from its retained tokens. Documents left
    /// without tokens are dropped; their ids are returned.
    pub fn retain_terms(self, keep: impl Fn(u32) -> bool) -> (Corpus, Vec<String>) {
        let old_terms = self.vocabulary.terms;
        let mut remap: Vec<Option<u32>> = vec![None; old_terms.len()];
        let mut new_terms = Vec::new();
        for (old_id, term) in old_terms.into_iter().enumerate() {
            if keep(old_id as u32) {
                remap[old_id] = Some(new_terms.len() as u32);
                new_terms.push(term);
            }
        }
        let mut new_docs = Vec::new();
        let mut dropped = Vec::new();
        let mut doc_freq = vec![0u32; new_terms.len()];
        let mut total_tokens = 0usize;
        for doc in self.documents {
            let tokens: Vec<u32> = doc
                .tokens
                .iter()
                .filter_map(|&t| remap[t as usize])
                .collect();
            if tokens.is_empty() {
                dropped.push(doc.id);
                continue;
            }
            for &t in tokens.iter().collect::<HashSet<_>>() {
                doc_freq[t as usize] += 1;
            }
            total_tokens += tokens.len();
            new_docs.push(Document {
                id: doc.id,
                nbow: NBowVector::from_tokens(&tokens),
                tokens,
            });
        }
        let m_avg = if new_docs.is_empty() {
            0.0
        } else {
            total_tokens as f64 / new_docs.len() as f64
        };
        (
            Corpus {
                vocabulary: Vocabulary::new(new_terms, doc_freq),
                documents: new_docs,
                m_avg,
            },
            dropped,
        )
    }
}

/// Result of a corpus build: the corpus plus the ids of documents excluded
/// because nothing of them survived preprocessing or pruning.
#[derive(Debug)]
pub struct CorpusBuild {
    pub corpus: Corpus,
    pub skipped: Vec<String>,
}

/// Removes every span between literal `<code>` and `</code>` markers,
/// replacing it with a space. An unclosed `<code>` drops the rest.
fn strip_code_spans(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("<code>") {
        out.push_str(&rest[..start]);
        out.push(' ');
        rest = &rest[start + "<code>".len()..];
        match rest.find("</code>") {
            Some(end) => rest = &rest[end + "</code>".len()..],
            None => {
                rest = "";
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

fn is_url_token(tok: &str) -> bool {
    tok.starts_with("http://") || tok.starts_with("https://") || tok.starts_with("www.")
}

/// Tokenizes raw text: lowercase, drop code spans and URL tokens, split on
/// non-alphanumeric characters, drop stopwords. Idempotent on its own output
/// (when rejoined with spaces).
pub fn preprocess(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    let lowered = text.to_lowercase();
    let stripped = strip_code_spans(&lowered);
    let mut out = Vec::new();
    for chunk in stripped.split_whitespace() {
        if is_url_token(chunk) {
            continue;
        }
        for tok in chunk.split(|c: char| !c.is_alphanumeric()) {
            if tok.is_empty() || stopwords.contains(tok) {
                continue;
            }
            out.push(tok.to_string());
        }
    }
    out
}

/// Inverse document frequency: `ln(pool_size / df)`.
pub fn idf(df: usize, pool_size: usize) -> Result<f64, CorpusError> {
    if df == 0 || df > pool_size {
        return Err(CorpusError::DomainError {
            df,
            pool: pool_size,
        });
    }
    Ok((pool_size as f64 / df as f64).ln())
}

/// Builds the corpus: preprocesses every document, prunes the `prune_top`
/// highest-count terms (ties broken lexicographically), and normalizes each
/// surviving document over its retained tokens.
pub fn build_corpus(
    docs: &[RawDocument],
    stopwords: &HashSet<String>,
    prune_top: usize,
) -> Result<CorpusBuild, CorpusError> {
    let mut seen_ids = HashSet::new();
    for d in docs {
        if !seen_ids.insert(d.id.as_str()) {
            return Err(CorpusError::DuplicateDocId(d.id.clone()));
        }
    }

    let mut tokenized: Vec<(usize, Vec<String>)> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        let toks = preprocess(&d.text, stopwords);
        if toks.is_empty() {
            skipped.push(d.id.clone());
        } else {
            tokenized.push((i, toks));
        }
    }
    if tokenized.is_empty() {
        return Err(CorpusError::AllDocumentsEmpty);
    }

    // Total corpus counts drive the pruning order.
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for (_, toks) in &tokenized {
        for t in toks {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut by_count: Vec<(&str, u64)> = counts.iter().map(|(&t, &c)| (t, c)).collect();
    by_count.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let pruned: HashSet<&str> = by_count
        .iter()
        .take(prune_top.min(by_count.len()))
        .map(|&(t, _)| t)
        .collect();

    let mut terms: Vec<String> = counts
        .keys()
        .filter(|t| !pruned.contains(*t))
        .map(|t| t.to_string())
        .collect();
    terms.sort_unstable();
    let term_to_id: HashMap<&str, u32> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i as u32))
        .collect();

    let mut documents = Vec::new();
    let mut doc_freq = vec![0u32; terms.len()];
    let mut total_tokens = 0usize;
    for (orig, toks) in &tokenized {
        let ids: Vec<u32> = toks
            .iter()
            .filter_map(|t| term_to_id.get(t.as_str()).copied())
            .collect();
        if ids.is_empty() {
            skipped.push(docs[*orig].id.clone());
            continue;
        }
        for &t in ids.iter().collect::<HashSet<_>>() {
            doc_freq[t as usize] += 1;
        }
        total_tokens += ids.len();
        documents.push(Document {
            id: docs[*orig].id.clone(),
            nbow: NBowVector::from_tokens(&ids),
            tokens: ids,
        });
    }
    if documents.is_empty() {
        return Err(CorpusError::AllDocumentsEmpty);
    }
    let m_avg = total_tokens as f64 / documents.len() as f64;

    Ok(CorpusBuild {
        corpus: Corpus {
            vocabulary: Vocabulary::new(terms, doc_freq),
            documents,
            m_avg,
        },
        skipped,
    })
}

const INDEX_HEADER: &str = "SEMFLOW-INDEX v1";

/// Writes the corpus in the text index format.
pub fn write_index<W: Write>(corpus: &Corpus, mut w: W) -> Result<(), CorpusError> {
    writeln!(
        w,
        "{} {} {} {}",
        INDEX_HEADER,
        corpus.vocabulary.len(),
        corpus.len(),
        fmt_g12(corpus.m_avg)
    )?;
    for id in 0..corpus.vocabulary.len() as u32 {
        writeln!(
            w,
            "{}\t{}",
            corpus.vocabulary.term(id),
            corpus.vocabulary.doc_freq(id)
        )?;
    }
    for doc in &corpus.documents {
        let entries = doc
            .nbow
            .entries()
            .iter()
            .map(|&(t, wgt)| format!("{}:{}", t, fmt_g12(wgt)))
            .collect::<Vec<_>>()
            .join(",");
        let toks = doc
            .tokens
            .iter()
            .map(|&t| corpus.vocabulary.term(t))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(w, "{}\t{}\t{}", doc.id, entries, toks)?;
    }
    Ok(())
}

pub fn save_index(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_index(corpus, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Parses the text index format. Every invariant of the in-memory types is
/// re-checked so a corrupt or hostile file cannot produce an inconsistent
/// corpus; nBOW weights and `m_avg` are rebuilt exactly from the token
/// sequences after being validated against the stored values.
pub fn parse_index<R: BufRead>(r: R) -> Result<Corpus, CorpusError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err(1, "empty file"))??;
    let mut hp = header.split(' ');
    let magic = (hp.next().unwrap_or(""), hp.next().unwrap_or(""));
    if magic != ("SEMFLOW-INDEX", "v1") {
        return Err(format_err(1, "bad magic, expected `SEMFLOW-INDEX v1`"));
    }
    let n: usize = hp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(1, "bad vocabulary size"))?;
    let n_docs: usize = hp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(1, "bad document count"))?;
    let m_avg_stored: f64 = hp
        .next()
        .and_then(|s| s.parse().ok())
        .filter(|m: &f64| m.is_finite() && *m >= 0.0)
        .ok_or_else(|| format_err(1, "bad m_avg"))?;
    if hp.next().is_some() {
        return Err(format_err(1, "trailing header fields"));
    }
    if n_docs == 0 || n == 0 {
        return Err(format_err(1, "empty corpus"));
    }

    let mut terms: Vec<String> = Vec::with_capacity(n.min(1 << 20));
    let mut doc_freq: Vec<u32> = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let lno = 2 + i;
        let line = lines
            .next()
            .ok_or_else(|| format_err(lno, "truncated vocabulary section"))??;
        let (term, df) = line
            .split_once('\t')
            .ok_or_else(|| format_err(lno, "expected `term<TAB>doc_freq`"))?;
        if term.is_empty() {
            return Err(format_err(lno, "empty term"));
        }
        let df: u32 = df
            .parse()
            .map_err(|_| format_err(lno, "bad doc_freq"))?;
        if df == 0 {
            return Err(format_err(lno, "doc_freq must be >= 1"));
        }
        terms.push(term.to_string());
        doc_freq.push(df);
    }
    let term_to_id: HashMap<&str, u32> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i as u32))
        .collect();
    if term_to_id.len() != terms.len() {
        return Err(format_err(1 + n, "duplicate vocabulary term"));
    }

    let mut documents = Vec::with_capacity(n_docs.min(1 << 20));
    let mut seen_ids = HashSet::new();
    let mut recount = vec![0u32; n];
    let mut total_tokens = 0usize;
    for d in 0..n_docs {
        let lno = 2 + n + d;
        let line = lines
            .next()
            .ok_or_else(|| format_err(lno, "truncated document section"))??;
        let mut parts = line.split('\t');
        let id = parts
            .next()
            .ok_or_else(|| format_err(lno, "missing doc id"))?;
        let entries_s = parts
            .next()
            .ok_or_else(|| format_err(lno, "missing nbow entries"))?;
        let tokens_s = parts
            .next()
            .ok_or_else(|| format_err(lno, "missing token sequence"))?;
        if parts.next().is_some() {
            return Err(format_err(lno, "trailing fields"));
        }
        if id.is_empty() {
            return Err(format_err(lno, "empty doc id"));
        }
        if !seen_ids.insert(id.to_string()) {
            return Err(format_err(lno, format!("duplicate doc id `{id}`")));
        }

        let mut stored: Vec<(u32, f64)> = Vec::new();
        for ent in entries_s.split(',') {
            let (t, wgt) = ent
                .split_once(':')
                .ok_or_else(|| format_err(lno, "expected `term_id:weight`"))?;
            let t: u32 = t
                .parse()
                .map_err(|_| format_err(lno, "bad term id"))?;
            if (t as usize) >= n {
                return Err(format_err(lno, "term id out of range"));
            }
            let wgt: f64 = wgt
                .parse()
                .map_err(|_| format_err(lno, "bad weight"))?;
            if !wgt.is_finite() || wgt <= 0.0 {
                return Err(format_err(lno, "weight must be finite and > 0"));
            }
            if let Some(&(prev, _)) = stored.last() {
                if t <= prev {
                    return Err(format_err(lno, "term ids must be strictly increasing"));
                }
            }
            stored.push((t, wgt));
        }
        if stored.is_empty() {
            return Err(format_err(lno, "document without nbow entries"));
        }

        let mut tokens: Vec<u32> = Vec::new();
        for tok in tokens_s.split(' ') {
            if tok.is_empty() {
                return Err(format_err(lno, "empty token"));
            }
            let t = term_to_id
                .get(tok)
                .ok_or_else(|| format_err(lno, format!("token `{tok}` not in vocabulary")))?;
            tokens.push(*t);
        }

        // The token sequence is authoritative; the stored weights must agree
        // with it to printing precision.
        let nbow = NBowVector::from_tokens(&tokens);
        if nbow.entries().len() != stored.len()
            || nbow
                .entries()
                .iter()
                .zip(&stored)
                .any(|(&(t, wgt), &(st, sw))| t != st || (wgt - sw).abs() > 1e-9)
        {
            return Err(format_err(lno, "nbow entries disagree with token sequence"));
        }

        for &t in tokens.iter().collect::<HashSet<_>>() {
            recount[t as usize] += 1;
        }
        total_tokens += tokens.len();
        documents.push(Document {
            id: id.to_string(),
            nbow,
            tokens,
        });
    }
    if lines.next().is_some() {
        return Err(format_err(2 + n + n_docs, "trailing data"));
    }
    if recount != doc_freq {
        return Err(format_err(1, "doc_freq disagrees with documents"));
    }
    let m_avg = total_tokens as f64 / n_docs as f64;
    if (m_avg - m_avg_stored).abs() > 1e-9 * m_avg.max(1.0) {
        return Err(format_err(1, "m_avg disagrees with documents"));
    }

    Ok(Corpus {
        vocabulary: Vocabulary::new(terms, doc_freq),
        documents,
        m_avg,
    })
}

pub fn load_index(path: &Path) -> Result<Corpus, CorpusError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    parse_index(f)
}

/// Parses a raw document file: one `id<TAB>text` per line, blank lines
/// skipped. Text may itself contain tabs; only the first one separates.
pub fn parse_documents<R: BufRead>(r: R) -> Result<Vec<RawDocument>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| format_err(i + 1, "expected `id<TAB>text`"))?;
        if id.is_empty() {
            return Err(format_err(i + 1, "empty doc id"));
        }
        docs.push(RawDocument {
            id: id.to_string(),
            text: text.to_string(),
        });
    }
    Ok(docs)
}

pub fn load_documents(path: &Path) -> Result<Vec<RawDocument>, CorpusError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    parse_documents(f)
}

/// Reads a stopword file: one term per line, lowercased, blanks skipped.
pub fn parse_stopwords<R: BufRead>(r: R) -> Result<HashSet<String>, CorpusError> {
    let mut set = HashSet::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() {
            set.insert(t.to_lowercase());
        }
    }
    Ok(set)
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>, CorpusError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    parse_stopwords(f)
}
