//! Runtime configuration: defaults, JSON config files with flat
//! module-namespaced keys (`retrieval.k`, `propagate.mu_np`, ...), and the
//! finalize step that derives dependent defaults (`topics.w0 = 1/k`, module
//! RNG seeds from the global seed).

use std::path::PathBuf;

use crate::graph::{FeatureKinds, RetrievalParams};
use crate::propagate::PropagationParams;
use crate::topics::TsvdParams;
use crate::transport::MissingPolicy;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config is not valid json: {0}")]
    Json(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },
}

/// Which metric lines an evaluation report carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricChoice {
    Both,
    HitRate,
    Precision,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigPaths {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub prune_top: usize,
    pub missing_policy: MissingPolicy,
    pub retrieval: RetrievalParams,
    pub topics: TsvdParams,
    pub propagation: PropagationParams,
    pub k_prime: Option<usize>,
    pub k_out: usize,
    pub metric: MetricChoice,
    /// Evaluation rank cutoffs.
    pub eval_ks: Vec<usize>,
    /// Global seed; module seeds derive from it unless set explicitly.
    pub seed: u64,
    pub paths: ConfigPaths,
    w0_set: bool,
    kmeans_seed_set: bool,
    rng_seed_set: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            prune_top: 30,
            missing_policy: MissingPolicy::Drop,
            retrieval: RetrievalParams::default(),
            topics: TsvdParams::with_topics(200),
            propagation: PropagationParams::default(),
            k_prime: None,
            k_out: 10,
            metric: MetricChoice::Both,
            eval_ks: vec![1, 5, 10],
            seed: 0,
            paths: ConfigPaths::default(),
            w0_set: false,
            kmeans_seed_set: false,
            rng_seed_set: false,
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn as_usize(key: &str, v: &serde_json::Value) -> Result<usize, ConfigError> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| bad(key, "expected a non-negative integer"))
}

fn as_u64(key: &str, v: &serde_json::Value) -> Result<u64, ConfigError> {
    v.as_u64()
        .ok_or_else(|| bad(key, "expected a non-negative integer"))
}

fn as_f64(key: &str, v: &serde_json::Value) -> Result<f64, ConfigError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| bad(key, "expected a finite number"))
}

fn as_str<'v>(key: &str, v: &'v serde_json::Value) -> Result<&'v str, ConfigError> {
    v.as_str().ok_or_else(|| bad(key, "expected a string"))
}

impl Config {
    /// Applies a JSON config document on top of the current values.
    pub fn apply_json(&mut self, text: &str) -> Result<(), ConfigError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| ConfigError::Json("top level must be an object".into()))?;
        for (key, v) in obj {
            self.apply_key(key, v)?;
        }
        Ok(())
    }

    fn apply_key(&mut self, key: &str, v: &serde_json::Value) -> Result<(), ConfigError> {
        match key {
            "corpus.prune_top" => self.prune_top = as_usize(key, v)?,
            "embeddings.missing_policy" => {
                self.missing_policy = match as_str(key, v)? {
                    "drop" => MissingPolicy::Drop,
                    "error" => MissingPolicy::Error,
                    other => return Err(bad(key, format!("unknown policy `{other}`"))),
                }
            }
            "retrieval.k" => self.retrieval.k = as_usize(key, v)?,
            "retrieval.prefetch" => {
                self.retrieval.prefetch = if v.is_null() {
                    None
                } else {
                    Some(as_usize(key, v)?)
                }
            }
            "retrieval.edge_threshold" => {
                self.retrieval.edge_threshold = if v.is_null() {
                    None
                } else {
                    Some(as_f64(key, v)?)
                }
            }
            "retrieval.features" => {
                let arr = v
                    .as_array()
                    .ok_or_else(|| bad(key, "expected an array of feature kinds"))?;
                let mut kinds = FeatureKinds::none();
                for item in arr {
                    match as_str(key, item)? {
                        "unigrams" => kinds.unigrams = true,
                        "bigrams" => kinds.bigrams = true,
                        "trigrams" => kinds.trigrams = true,
                        "skip_bigrams" => kinds.skip_bigrams = true,
                        "skip_trigrams" => kinds.skip_trigrams = true,
                        other => return Err(bad(key, format!("unknown feature kind `{other}`"))),
                    }
                }
                self.retrieval.features = kinds;
            }
            "topics.k" => {
                self.topics.k_topics = as_usize(key, v)?;
            }
            "topics.w0" => {
                self.topics.w0 = as_f64(key, v)?;
                self.w0_set = true;
            }
            "topics.eps" => self.topics.eps = as_f64(key, v)?,
            "topics.eps0" => self.topics.eps0 = as_f64(key, v)?,
            "topics.alpha" => self.topics.alpha = as_f64(key, v)?,
            "topics.beta" => self.topics.beta = as_f64(key, v)?,
            "topics.rho" => self.topics.rho = as_f64(key, v)?,
            "topics.delta" => self.topics.delta = as_f64(key, v)?,
            "topics.p0" => self.topics.p0 = as_f64(key, v)?,
            "topics.kmeans_seed" => {
                self.topics.kmeans_seed = as_u64(key, v)?;
                self.kmeans_seed_set = true;
            }
            "topics.kmeans_max_iter" => self.topics.kmeans_max_iter = as_usize(key, v)?,
            "propagate.mu_pp" => self.propagation.mu_pp = as_f64(key, v)?,
            "propagate.mu_np" => self.propagation.mu_np = as_f64(key, v)?,
            "propagate.dropout_p" => self.propagation.dropout_p = as_f64(key, v)?,
            "propagate.max_iters" => self.propagation.max_iters = as_usize(key, v)?,
            "propagate.tol" => self.propagation.tol = as_f64(key, v)?,
            "propagate.rng_seed" => {
                self.propagation.rng_seed = as_u64(key, v)?;
                self.rng_seed_set = true;
            }
            "seeding.k_prime" => {
                self.k_prime = if v.is_null() {
                    None
                } else {
                    Some(as_usize(key, v)?)
                }
            }
            "k_out" => self.k_out = as_usize(key, v)?,
            "seed" => self.seed = as_u64(key, v)?,
            "eval.metric" => {
                self.metric = match as_str(key, v)? {
                    "both" => MetricChoice::Both,
                    "hit_rate" => MetricChoice::HitRate,
                    "precision" => MetricChoice::Precision,
                    other => return Err(bad(key, format!("unknown metric `{other}`"))),
                }
            }
            "paths.corpus" => self.paths.corpus = Some(PathBuf::from(as_str(key, v)?)),
            "paths.embeddings" => self.paths.embeddings = Some(PathBuf::from(as_str(key, v)?)),
            "paths.index" => self.paths.index = Some(PathBuf::from(as_str(key, v)?)),
            "paths.model" => self.paths.model = Some(PathBuf::from(as_str(key, v)?)),
            "paths.stopwords" => self.paths.stopwords = Some(PathBuf::from(as_str(key, v)?)),
            "paths.qrels" => self.paths.qrels = Some(PathBuf::from(as_str(key, v)?)),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Overrides the global seed (CLI flag); derived seeds follow in
    /// `finalize` unless they were set explicitly.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn override_dropout(&mut self, p: f64) {
        self.propagation.dropout_p = p;
    }

    /// Resolves derived defaults. Call once after all overrides.
    pub fn finalize(&mut self) {
        if !self.w0_set {
            self.topics.w0 = 1.0 / self.topics.k_topics as f64;
        }
        if !self.kmeans_seed_set {
            self.topics.kmeans_seed = self.seed;
        }
        if !self.rng_seed_set {
            self.propagation.rng_seed = self.seed;
        }
    }

    pub fn load_file(&mut self, path: &std::path::Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)?;
        self.apply_json(&text)
    }
}

/// Parses a config document on top of the defaults (convenience used by
/// tests and fuzzing).
pub fn parse_config_json(text: &str) -> Result<Config, ConfigError> {
    let mut cfg = Config::default();
    cfg.apply_json(text)?;
    cfg.finalize();
    Ok(cfg)
}
