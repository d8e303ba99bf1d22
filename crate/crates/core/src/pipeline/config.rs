//! Pipeline configuration: a TOML file plus environment overrides for
//! secrets and endpoints.

use super::PipelineError;
use crate::extraction::ExtractionConfig;
use crate::jury::PersonaId;
use crate::llm::CassetteMode;
use crate::retrieval::SearchParams;
use crate::types::Mode;
use crate::verification::Thresholds;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: String,
    /// Model for the remote embedder; unset means the built-in hashed embedder.
    pub embedding_model: Option<String>,
    pub embedding_dim: usize,
    pub parallelism: usize,
    pub timeout_secs: u64,
    pub cassette: Option<PathBuf>,
    pub cassette_mode: CassetteMode,
    /// Scripted responses (JSON rules) served instead of a live endpoint.
    pub script: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            api_key: None,
            model: "gpt-4o-mini".into(),
            embedding_model: None,
            embedding_dim: 1536,
            parallelism: crate::llm::DEFAULT_PARALLELISM,
            timeout_secs: 60,
            cassette: None,
            cassette_mode: CassetteMode::Replay,
            script: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub retrieval: SearchParams,
    pub thresholds: Thresholds,
    pub personas: Vec<PersonaId>,
    pub extraction: ExtractionConfig,
    pub gateway: GatewayConfig,
    /// Index directory produced by `index build`.
    pub index: Option<PathBuf>,
    /// Corpus file indexed in memory when no index directory is given.
    pub corpus: Option<PathBuf>,
    /// Research mode only: claims whose decomposition complexity is below
    /// this value go through the baseline verifier.
    pub adaptive_threshold: Option<f64>,
    /// Directory receiving one trace log per run.
    pub trace_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            retrieval: SearchParams::default(),
            thresholds: Thresholds::default(),
            personas: PersonaId::ALL.to_vec(),
            extraction: ExtractionConfig::default(),
            gateway: GatewayConfig::default(),
            index: None,
            corpus: None,
            adaptive_threshold: None,
            trace_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        fix(&mut self.index);
        fix(&mut self.corpus);
        fix(&mut self.trace_dir);
        fix(&mut self.gateway.cassette);
        fix(&mut self.gateway.script);
    }

    /// Applies `FACTCHECK_API_KEY`, `FACTCHECK_ENDPOINT`, `FACTCHECK_MODEL`,
    /// `FACTCHECK_CASSETTE` and `FACTCHECK_CASSETTE_MODE` from `get`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), PipelineError> {
        if let Some(v) = get("FACTCHECK_API_KEY") {
            self.gateway.api_key = Some(v);
        }
        if let Some(v) = get("FACTCHECK_ENDPOINT") {
            self.gateway.endpoint = Some(v);
        }
        if let Some(v) = get("FACTCHECK_MODEL") {
            self.gateway.model = v;
        }
        if let Some(v) = get("FACTCHECK_CASSETTE") {
            self.gateway.cassette = Some(PathBuf::from(v));
        }
        if let Some(v) = get("FACTCHECK_CASSETTE_MODE") {
            self.gateway.cassette_mode = v.parse().map_err(PipelineError::Config)?;
        }
        Ok(())
    }

    pub fn apply_process_env(&mut self) -> Result<(), PipelineError> {
        self.apply_env(|k| std::env::var(k).ok())
    }

    /// Checks ranges and that every configured input path exists.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.retrieval.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let r = &self.retrieval;
        if r.k == 0 || r.m == 0 || !(0.0..=1.0).contains(&r.lambda) {
            return Err(PipelineError::Config("retrieval needs k >= 1, m >= 1 and lambda in [0, 1]".into()));
        }
        let t = &self.thresholds;
        if t.tau_min < 0.0 || t.tau_margin < 0.0 {
            return Err(PipelineError::Config("thresholds must be non-negative".into()));
        }
        if self.personas.is_empty() {
            return Err(PipelineError::Config("the jury needs at least one persona".into()));
        }
        if let Some(a) = self.adaptive_threshold {
            if !(0.0..=1.0).contains(&a) {
                return Err(PipelineError::Config(format!("adaptive_threshold {a} is outside [0, 1]")));
            }
        }
        for (name, path) in [("index", &self.index), ("corpus", &self.corpus), ("script", &self.gateway.script)] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(PipelineError::Config(format!("{name} path {} does not exist", p.display())));
                }
            }
        }
        if self.index.is_none() && self.corpus.is_none() {
            return Err(PipelineError::Config("set either `index` or `corpus`".into()));
        }
        if let (Some(p), CassetteMode::Replay) = (&self.gateway.cassette, self.gateway.cassette_mode) {
            if !p.exists() {
                return Err(PipelineError::Config(format!("cassette {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_with_defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("factcheck.toml");
        std::fs::write(
            &path,
            "mode = \"research\"\nindex = \"idx\"\n[retrieval]\nm = 3\n[gateway]\nparallelism = 2\n",
        )
        .unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.mode, Mode::Research);
        assert_eq!(c.retrieval.m, 3);
        assert_eq!(c.retrieval.k, 50);
        assert_eq!(c.gateway.parallelism, 2);
        assert_eq!(c.index, Some(dir.path().join("idx")));
        assert_eq!(c.personas.len(), 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("colour = 1").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = PipelineConfig::default();
        c.apply_env(|k| match k {
            "FACTCHECK_API_KEY" => Some("secret".into()),
            "FACTCHECK_CASSETTE_MODE" => Some("record".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.gateway.api_key.as_deref(), Some("secret"));
        assert_eq!(c.gateway.cassette_mode, CassetteMode::Record);
        assert!(c.apply_env(|_| Some("bogus".into())).is_err());
    }

    #[test]
    fn validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = PipelineConfig { corpus: Some(dir.path().to_path_buf()), ..Default::default() };
        assert!(c.validate().is_ok());
        c.retrieval.bm25_weight = 0.7;
        assert!(c.validate().is_err());
        let missing = PipelineConfig { index: Some(dir.path().join("nope")), ..Default::default() };
        let err = missing.validate().unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
        assert!(PipelineConfig::default().validate().is_err());
    }
}
