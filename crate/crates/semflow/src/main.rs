use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semflow::config::{Config, ConfigError};
use semflow::corpus;
use semflow::engine::{ArtifactError, Engine, EngineError};
use semflow::eval;
use semflow::graph::GraphError;
use semflow::propagate::PropagateError;
use semflow::synth::{self, SynthSpec};
use semflow::topics::{self, TopicsError};
use semflow::transport::{self, TransportError};

#[derive(Parser)]
#[command(
    name = "semflow",
    version,
    about = "Semantic similarity retrieval over soft-seeded label propagation graphs"
)]
struct Cli {
    /// JSON config file with flat namespaced keys (e.g. "retrieval.k").
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global RNG seed; module seeds derive from it unless set in config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Results to return per query.
    #[arg(long, global = true)]
    k_out: Option<usize>,
    /// Soft-seed dropout probability.
    #[arg(long, global = true)]
    dropout_p: Option<f64>,
    /// Disable seed dropout entirely (the SSG-WD variant).
    #[arg(long, global = true)]
    no_dropout: bool,
    /// Worker threads (default: all cores). Results are thread-count
    /// independent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ArtifactPaths {
    /// Corpus index file.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Topic model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Embedding file (word2vec text format).
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the corpus index from raw documents and embeddings.
    Index {
        /// Raw documents, one `id<TAB>text` per line.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Stopword list, one term per line.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Output index path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the thresholded-SVD topic model over an index.
    Topics {
        #[arg(long)]
        index: Option<PathBuf>,
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve the top documents for a query.
    Query {
        #[command(flatten)]
        artifacts: ArtifactPaths,
        /// Write a per-iteration propagation trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// The query text.
        query_text: String,
    },
    /// Evaluate retrieval against a qrels file.
    Eval {
        #[command(flatten)]
        artifacts: ArtifactPaths,
        /// Qrels file: `query_doc_id<TAB>relevant_doc_id` lines.
        #[arg(long)]
        qrels: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with planted topics and duplicates.
    Synth {
        /// Output directory for corpus.tsv, embeddings.txt, qrels.tsv,
        /// truth.txt.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        topics: usize,
        /// Base documents (duplicates are appended on top).
        #[arg(long, default_value_t = 200)]
        docs: usize,
        #[arg(long, default_value_t = 150)]
        vocab: usize,
        #[arg(long, default_value_t = 20)]
        dup_clusters: usize,
        /// Paraphrase noise rate for duplicates.
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 10)]
        catchwords_per_topic: usize,
        #[arg(long, default_value_t = 30)]
        doc_len: usize,
        #[arg(long, default_value_t = 0.9)]
        dominant_weight: f64,
        #[arg(long, default_value_t = 2)]
        cluster_size: usize,
    },
}

/// Exit codes: 1 usage, 2 data/format, 3 numerical failure.
enum AppError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Data(_) => 2,
            AppError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Data(m) | AppError::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<corpus::CorpusError> for AppError {
    fn from(e: corpus::CorpusError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<TransportError> for AppError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::SolverFailure(_) => AppError::Numerical(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<GraphError> for AppError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::InvalidParams(_) => AppError::Usage(e.to_string()),
            GraphError::Transport(t) => t.into(),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<TopicsError> for AppError {
    fn from(e: TopicsError) -> Self {
        match e {
            TopicsError::InvalidParams(_) => AppError::Usage(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<PropagateError> for AppError {
    fn from(e: PropagateError) -> Self {
        AppError::Usage(e.to_string())
    }
}

impl From<EngineError> for AppError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Graph(g) => g.into(),
            EngineError::Propagate(p) => p.into(),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<ArtifactError> for AppError {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Corpus(c) => c.into(),
            ArtifactError::Transport(t) => t.into(),
            ArtifactError::Topics(t) => t.into(),
        }
    }
}

impl From<eval::EvalError> for AppError {
    fn from(e: eval::EvalError) -> Self {
        match e {
            eval::EvalError::Engine(inner) => inner.into(),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<synth::SynthError> for AppError {
    fn from(e: synth::SynthError) -> Self {
        match e {
            synth::SynthError::InvalidSpec(_) => AppError::Usage(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn build_config(cli: &Cli) -> Result<Config, AppError> {
    let mut cfg = Config::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(k) = cli.k_out {
        cfg.k_out = k;
    }
    if let Some(p) = cli.dropout_p {
        cfg.override_dropout(p);
    }
    if cli.no_dropout {
        cfg.override_dropout(0.0);
    }
    cfg.finalize();
    cfg.propagation
        .validate()
        .map_err(|e| AppError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn required<'p>(
    flag: Option<&'p PathBuf>,
    config_fallback: Option<&'p PathBuf>,
    name: &str,
) -> Result<&'p Path, AppError> {
    flag.or(config_fallback)
        .map(|p| p.as_path())
        .ok_or_else(|| AppError::Usage(format!("missing --{name} (no `paths.{name}` in config)")))
}

fn run(cli: Cli) -> Result<(), AppError> {
    if let Some(t) = cli.threads {
        // ignore failure if a pool already exists (e.g. repeated calls in tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let cfg = build_config(&cli)?;

    match &cli.cmd {
        Cmd::Index {
            corpus: corpus_path,
            embeddings,
            stopwords,
            out,
        } => {
            let corpus_path = required(corpus_path.as_ref(), cfg.paths.corpus.as_ref(), "corpus")?;
            let emb_path = required(embeddings.as_ref(), cfg.paths.embeddings.as_ref(), "embeddings")?;
            let stop = match stopwords.as_ref().or(cfg.paths.stopwords.as_ref()) {
                Some(p) => corpus::load_stopwords(p)?,
                None => Default::default(),
            };
            let docs = corpus::load_documents(corpus_path)?;
            let build = corpus::build_corpus(&docs, &stop, cfg.prune_top)?;
            let raw = transport::load_embeddings(emb_path)?;
            let ec = transport::attach_embeddings(&raw, build.corpus, cfg.missing_policy)?;
            corpus::save_index(&ec.corpus, out)?;
            println!("vocabulary\t{}", ec.corpus.vocabulary.len());
            println!("documents\t{}", ec.corpus.len());
            println!("coverage\t{:.6}", ec.embeddings.coverage());
            println!("skipped_docs\t{}", build.skipped.len() + ec.dropped_docs.len());
            println!("dropped_terms\t{}", ec.dropped_terms.len());
            Ok(())
        }
        Cmd::Topics { index, out } => {
            let index = required(index.as_ref(), cfg.paths.index.as_ref(), "index")?;
            let corpus = corpus::load_index(index)?;
            let fit = topics::fit(&corpus, &cfg.topics)?;
            topics::save_model(&fit.model, &corpus, out)?;
            for l in 0..fit.model.k_topics {
                println!(
                    "topic\t{l}\tsize\t{}\tcatchwords\t{}",
                    fit.model.cluster_size(l),
                    fit.model.catchwords[l].len()
                );
            }
            for d in &fit.diagnostics {
                eprintln!("note: {d}");
            }
            Ok(())
        }
        Cmd::Query {
            artifacts,
            trace,
            query_text,
        } => {
            let engine = load_engine(artifacts, &cfg)?;
            let query = engine.query_from_text(query_text)?;
            let mut trace_rows: Vec<(usize, f64, f64)> = Vec::new();
            let outcome = if trace.is_some() {
                let mut cb = |it: usize, delta: f64, obj: f64| trace_rows.push((it, delta, obj));
                engine.run_query(&query, &cfg, None, Some(&mut cb))?
            } else {
                engine.run_query(&query, &cfg, None, None)?
            };
            if let Some(path) = trace {
                let mut text = String::new();
                for (it, delta, obj) in &trace_rows {
                    text.push_str(&format!("{it}\t{delta:.6e}\t{obj:.6e}\n"));
                }
                std::fs::write(path, text)?;
            }
            if outcome.seeds.no_dominant {
                eprintln!("note: query has no catchword signal; 1-seeding degraded to the hard seed");
            }
            if outcome.seeds.no_contrast {
                eprintln!("note: no contrast cluster in the subgraph; no 0-seeds assigned");
            }
            if !outcome.converged {
                eprintln!(
                    "note: propagation hit max_iters ({}) before the tolerance",
                    outcome.iterations
                );
            }
            for (rank, r) in outcome.ranked.iter().enumerate() {
                println!("{}\t{}\t{:.6}\t{:.6}", rank + 1, r.id, r.label, r.wmd);
            }
            Ok(())
        }
        Cmd::Eval {
            artifacts,
            qrels,
            out,
        } => {
            let engine = load_engine(artifacts, &cfg)?;
            let qrels_path = required(qrels.as_ref(), cfg.paths.qrels.as_ref(), "qrels")?;
            let pairs = eval::load_qrels(qrels_path)?;
            let report = eval::run_eval(&engine, &cfg, &pairs)?;
            let text = eval::render_report(&report, cfg.metric);
            print!("{text}");
            if let Some(path) = out {
                std::fs::write(path, &text)?;
            }
            Ok(())
        }
        Cmd::Synth {
            out,
            topics,
            docs,
            vocab,
            dup_clusters,
            noise,
            catchwords_per_topic,
            doc_len,
            dominant_weight,
            cluster_size,
        } => {
            let spec = SynthSpec {
                topics: *topics,
                docs: *docs,
                vocab: *vocab,
                dup_clusters: *dup_clusters,
                noise: *noise,
                catchwords_per_topic: *catchwords_per_topic,
                doc_len: *doc_len,
                dominant_weight: *dominant_weight,
                cluster_size: *cluster_size,
                ..Default::default()
            };
            let data = synth::generate(&spec, cfg.seed)?;
            let files = synth::write_all(&data, out)?;
            println!("corpus\t{}", files.corpus.display());
            println!("embeddings\t{}", files.embeddings.display());
            println!("qrels\t{}", files.qrels.display());
            println!("truth\t{}", files.truth.display());
            println!("documents\t{}", data.documents.len());
            println!("queries\t{}", data.qrels.iter().map(|(q, _)| q).collect::<std::collections::BTreeSet<_>>().len());
            Ok(())
        }
    }
}

fn load_engine(paths: &ArtifactPaths, cfg: &Config) -> Result<Engine, AppError> {
    let index = required(paths.index.as_ref(), cfg.paths.index.as_ref(), "index")?;
    let model = required(paths.model.as_ref(), cfg.paths.model.as_ref(), "model")?;
    let emb = required(
        paths.embeddings.as_ref(),
        cfg.paths.embeddings.as_ref(),
        "embeddings",
    )?;
    cfg.retrieval
        .validate()
        .map_err(|e| AppError::Usage(e.to_string()))?;
    Ok(Engine::load(index, model, emb, cfg.missing_policy)?)
}
