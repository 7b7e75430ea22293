//! Run configuration: a TOML file with CLI-flag overrides.
//!
//! Credentials never appear here or on the command line; the API key is
//! read from `SAGE_API_KEY` only.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use sage::gateway::stub::{StubAnswerMode, StubConfig, StubParaphraseMode};
use sage::gateway::DEFAULT_CONCURRENCY;
use sage::textsim::{DEFAULT_QUALITY_BETA, DEFAULT_QUALITY_THRESHOLD};

pub const ENDPOINT_ENV: &str = "SAGE_ENDPOINT";
pub const API_KEY_ENV: &str = "SAGE_API_KEY";

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Base URL of the chat/embeddings endpoint.
    pub endpoint: Option<String>,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub paraphrase: ParaphraseConfig,
    #[serde(default)]
    pub generation: GenerationDefaults,
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub runtime: RuntimeConfig,
    #[serde(default)]
    pub stub: StubSettings,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    /// Model used for paraphrase and rule-of-thumb generation.
    pub generator: String,
    /// Model used for sentence embeddings.
    pub embedder: String,
    /// Models whose consistency is being measured.
    #[serde(default)]
    pub targets: Vec<String>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            generator: "generator".to_string(),
            embedder: "embedder".to_string(),
            targets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaphraseConfig {
    pub k: usize,
    pub threshold: f64,
    pub beta: f64,
    pub temperature: f64,
}

impl Default for ParaphraseConfig {
    fn default() -> Self {
        Self {
            k: 5,
            threshold: DEFAULT_QUALITY_THRESHOLD,
            beta: DEFAULT_QUALITY_BETA,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationDefaults {
    pub temperature: f64,
    pub rot_temperature: f64,
    pub max_tokens: u32,
    pub samples: usize,
}

impl Default for GenerationDefaults {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            rot_temperature: 0.0,
            max_tokens: 256,
            samples: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    pub metrics: Vec<String>,
    /// `answers`, `rots`, or `both`.
    pub target: String,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            metrics: vec![
                "bleu".to_string(),
                "rouge-l".to_string(),
                "semantic-cosine-cons".to_string(),
                "sage".to_string(),
            ],
            target: "both".to_string(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeConfig {
    pub concurrency: usize,
    pub cache_dir: PathBuf,
    pub offline: bool,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            concurrency: DEFAULT_CONCURRENCY,
            cache_dir: PathBuf::from(".sage/cache"),
            offline: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubSettings {
    pub seed: u64,
    /// `constant` or `question-digest`.
    pub answer_mode: String,
    /// `rotate` or `punctuation-only`.
    pub paraphrase_mode: String,
    pub temperature_noise: bool,
}

impl Default for StubSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            answer_mode: "question-digest".to_string(),
            paraphrase_mode: "rotate".to_string(),
            temperature_noise: false,
        }
    }
}

impl StubSettings {
    pub fn to_stub_config(&self) -> Result<StubConfig> {
        let answer_mode = match self.answer_mode.as_str() {
            "constant" => StubAnswerMode::Constant,
            "question-digest" => StubAnswerMode::QuestionDigest,
            other => bail!("unknown stub answer_mode \"{other}\" (expected constant or question-digest)"),
        };
        let paraphrase_mode = match self.paraphrase_mode.as_str() {
            "rotate" => StubParaphraseMode::Rotate,
            "punctuation-only" => StubParaphraseMode::PunctuationOnly,
            other => bail!("unknown stub paraphrase_mode \"{other}\" (expected rotate or punctuation-only)"),
        };
        Ok(StubConfig {
            seed: self.seed,
            answer_mode,
            paraphrase_mode,
            temperature_noise: self.temperature_noise,
        })
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("failed to read config {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("failed to parse config {}", path.display()))?
            }
            None => Self::default(),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.paraphrase.k < 1 {
            bail!("paraphrase.k must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.paraphrase.threshold) {
            bail!("paraphrase.threshold must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.paraphrase.beta) {
            bail!("paraphrase.beta must lie in [0, 1]");
        }
        if self.runtime.concurrency < 1 {
            bail!("runtime.concurrency must be at least 1");
        }
        if self.generation.samples < 1 {
            bail!("generation.samples must be at least 1");
        }
        if self.generation.temperature < 0.0
            || self.generation.rot_temperature < 0.0
            || self.paraphrase.temperature < 0.0
        {
            bail!("temperatures must be nonnegative");
        }
        self.stub.to_stub_config()?;
        Ok(())
    }
}
