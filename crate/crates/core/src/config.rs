//! TOML configuration file: pipeline settings, one backend descriptor per
//! role, and file locations.
//!
//! ```toml
//! [pipeline]
//! similarity_min = 0.70
//! k = 5
//! max_revisions = 2
//!
//! [backends.generation]
//! kind = "http"
//! endpoint = "https://llm.example.com/v1/chat/completions"
//! model_name = "drafting-model"
//! api_key_env = "SOWGEN_API_KEY"
//!
//! [paths]
//! data_dir = "data"
//! ```
//!
//! Relative paths resolve against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, Backends, KeywordClassifier};
use crate::compliance::Lexicon;
use crate::orchestrator::{ConfigError, PipelineConfig, RoleBackends};
use crate::ragchain::PromptTemplate;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Run registry, feedback log and anonymization maps live here.
    pub data_dir: Option<PathBuf>,
    /// Clause index file; defaults to `<data_dir>/clauses.jsonl`.
    pub index: Option<PathBuf>,
    pub vague_terms: Option<PathBuf>,
    pub irregular_participles: Option<PathBuf>,
    pub stub_keywords: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub template_descriptor: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub pipeline: PipelineConfig,
    pub backends: RoleBackends,
    pub paths: PathsConfig,
}

pub const DEFAULT_DATA_DIR: &str = "sowgen-data";

impl AppConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: AppConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.pipeline.backends = cfg.backends.clone();
        cfg.paths.resolve(base);
        cfg.pipeline.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.paths.data_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
    }

    pub fn index_path(&self) -> PathBuf {
        self.paths.index.clone().unwrap_or_else(|| self.data_dir().join("clauses.jsonl"))
    }

    pub fn lexicon(&self) -> Result<Lexicon, ConfigError> {
        let default = Lexicon::default();
        match (&self.paths.vague_terms, &self.paths.irregular_participles) {
            (None, None) => Ok(default),
            (v, p) => {
                let read = |p: &Option<PathBuf>, fallback: &str| match p {
                    Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display()))),
                    None => Ok(fallback.to_string()),
                };
                Ok(Lexicon::from_text(
                    &read(v, include_str!("../data/vague_terms.txt"))?,
                    &read(p, include_str!("../data/irregular_participles.txt"))?,
                ))
            }
        }
    }

    pub fn template(&self) -> Result<PromptTemplate, ConfigError> {
        match (&self.paths.template, &self.paths.template_descriptor) {
            (Some(body), Some(desc)) => PromptTemplate::load(body, desc).map_err(|e| ConfigError(e.to_string())),
            (None, None) => Ok(PromptTemplate::default_drafting()),
            _ => Err(ConfigError("paths.template and paths.template_descriptor must be set together".into())),
        }
    }

    /// Instantiate the configured backends.
    pub fn backends(&self) -> Result<Backends, BackendError> {
        let b = &self.pipeline.backends;
        let mut backends = Backends::from_descriptors(&b.generation, &b.classification, &b.embedding, self.pipeline.embedding_dim)?;
        if let (Some(path), crate::backends::BackendKind::Stub) = (&self.paths.stub_keywords, b.classification.kind) {
            backends.classifier = std::sync::Arc::new(KeywordClassifier::load(path)?);
        }
        Ok(backends)
    }
}

impl PathsConfig {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.data_dir,
            &mut self.index,
            &mut self.vague_terms,
            &mut self.irregular_participles,
            &mut self.stub_keywords,
            &mut self.template,
            &mut self.template_descriptor,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
