//! Layered run configuration.
//!
//! Settings resolve in strict precedence order: compiled defaults, then the
//! TOML config file, then `BYT5KIT_*` environment variables, then command
//! line flags. The resolved configuration and seed are logged on every run,
//! and the global seed is stamped into every stochastic component before
//! dispatch so one value controls the whole pipeline.

use std::fs;
use std::path::PathBuf;

use byt5kit::corrupt::CorruptionSpec;
use byt5kit::judge::DEFAULT_RUNS;
use byt5kit::model::{DecodeConfig, ModelConfig, TrainConfig};
use byt5kit::textprep::{CleanConfig, SegmentationRules};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Schema version accepted by this binary.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the config file (below the `--config` flag).
pub const ENV_CONFIG: &str = "BYT5KIT_CONFIG";
/// Environment override for the global seed.
pub const ENV_SEED: &str = "BYT5KIT_SEED";
/// Environment override for the model preset.
pub const ENV_PRESET: &str = "BYT5KIT_PRESET";
/// Environment override for the judge endpoint URL.
pub const ENV_JUDGE_ENDPOINT: &str = "BYT5KIT_JUDGE_ENDPOINT";
/// Environment override for the judge model name.
pub const ENV_JUDGE_MODEL: &str = "BYT5KIT_JUDGE_MODEL";
/// Environment override for the name of the credential variable.
pub const ENV_JUDGE_AUTH_ENV: &str = "BYT5KIT_JUDGE_AUTH_ENV";
/// Environment override for the judge request timeout in seconds.
pub const ENV_JUDGE_TIMEOUT_S: &str = "BYT5KIT_JUDGE_TIMEOUT_S";

/// Default locations for corpus data, checkpoints, and reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Corpus file read when a command takes no explicit input.
    pub corpus: PathBuf,
    /// Directory where checkpoints are written.
    pub checkpoints: PathBuf,
    /// Directory where reports (CSV tables, JSON summaries) are written.
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: PathBuf::from("corpus.txt"),
            checkpoints: PathBuf::from("checkpoints"),
            reports: PathBuf::from("reports"),
        }
    }
}

/// Model architecture selection by preset name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Named preset; `tiny` for desk-scale work, `banglabyt5-small` for the
    /// full-size layout.
    pub preset: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { preset: "tiny".to_string() }
    }
}

/// Judge endpoint configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSection {
    /// Chat-completion endpoint URL.
    pub endpoint: String,
    /// Judge model name sent in each request.
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: String,
    /// Per-request timeout in seconds.
    pub timeout_s: u64,
    /// Concurrent request bound when scoring many pairs.
    pub parallelism: usize,
    /// Judge calls per dimension per response.
    pub runs: usize,
}

impl Default for JudgeSection {
    fn default() -> Self {
        JudgeSection {
            endpoint: String::new(),
            model: "judge".to_string(),
            auth_env: "BYT5KIT_JUDGE_API_KEY".to_string(),
            timeout_s: 30,
            parallelism: 1,
            runs: DEFAULT_RUNS,
        }
    }
}

/// The complete layered configuration for one invocation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    /// Config schema version; must equal [`CONFIG_SCHEMA_VERSION`].
    pub version: ConfigVersion,
    /// Global seed propagated to every stochastic component.
    pub seed: u64,
    /// Data and output locations.
    pub paths: Paths,
    /// Text cleaning settings.
    pub clean: CleanConfig,
    /// Sentence segmentation settings for corpus statistics.
    pub segmentation: SegmentationRules,
    /// Span corruption settings; its seed field is overwritten by `seed`.
    pub corruption: CorruptionSpec,
    /// Model preset selection.
    pub model: ModelSection,
    /// Optimizer settings; its seed field is overwritten by `seed`.
    pub train: TrainConfig,
    /// Decoding settings.
    pub decode: DecodeConfig,
    /// Judge endpoint settings.
    pub judge: JudgeSection,
}

/// Newtype so an omitted `version` key defaults to the current schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigVersion(pub u32);

impl Default for ConfigVersion {
    fn default() -> Self {
        ConfigVersion(CONFIG_SCHEMA_VERSION)
    }
}

/// Global flag overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `--config` path.
    pub config: Option<PathBuf>,
    /// `--seed` value.
    pub seed: Option<u64>,
    /// `--preset` name.
    pub preset: Option<String>,
}

fn env_string(name: &'static str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn env_parse<T: std::str::FromStr>(name: &'static str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    match env_string(name) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|e| CliError::Config {
            field: name.to_string(),
            detail: format!("cannot parse {raw:?}: {e}"),
        }),
    }
}

/// Loads the configuration with file, then environment, then flag layering.
pub fn load(overrides: &Overrides) -> Result<GlobalConfig, CliError> {
    let mut config = GlobalConfig::default();

    let file = overrides
        .config
        .clone()
        .or_else(|| env_string(ENV_CONFIG).map(PathBuf::from));
    if let Some(path) = file {
        let text = fs::read_to_string(&path).map_err(|e| CliError::Io {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        config = toml::from_str(&text).map_err(|e| CliError::Config {
            field: path.display().to_string(),
            detail: e.to_string(),
        })?;
    }

    if let Some(seed) = env_parse::<u64>(ENV_SEED)? {
        config.seed = seed;
    }
    if let Some(preset) = env_string(ENV_PRESET) {
        config.model.preset = preset;
    }
    if let Some(endpoint) = env_string(ENV_JUDGE_ENDPOINT) {
        config.judge.endpoint = endpoint;
    }
    if let Some(model) = env_string(ENV_JUDGE_MODEL) {
        config.judge.model = model;
    }
    if let Some(auth_env) = env_string(ENV_JUDGE_AUTH_ENV) {
        config.judge.auth_env = auth_env;
    }
    if let Some(timeout) = env_parse::<u64>(ENV_JUDGE_TIMEOUT_S)? {
        config.judge.timeout_s = timeout;
    }

    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(preset) = &overrides.preset {
        config.model.preset = preset.clone();
    }
    Ok(config)
}

fn section_error(section: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Config {
        field: section.to_string(),
        detail: err.to_string(),
    }
}

/// Validates the resolved configuration, stamps the global seed into every
/// stochastic component, and resolves the model preset.
pub fn finalize(config: &mut GlobalConfig) -> Result<ModelConfig, CliError> {
    if config.version != ConfigVersion(CONFIG_SCHEMA_VERSION) {
        return Err(CliError::Config {
            field: "version".to_string(),
            detail: format!(
                "schema version {} is not supported; this binary reads version {}",
                config.version.0, CONFIG_SCHEMA_VERSION
            ),
        });
    }
    config.corruption.seed = config.seed;
    config.train.seed = config.seed;

    let model = ModelConfig::preset(&config.model.preset).ok_or_else(|| CliError::Config {
        field: "model.preset".to_string(),
        detail: format!(
            "unknown preset {:?}; available: {}",
            config.model.preset,
            ModelConfig::preset_names().join(", ")
        ),
    })?;
    config.clean.validate().map_err(|e| section_error("clean", e))?;
    config
        .corruption
        .validate()
        .map_err(|e| section_error("corruption", e))?;
    config.train.validate().map_err(|e| section_error("train", e))?;
    config.decode.validate().map_err(|e| section_error("decode", e))?;
    if config.judge.runs == 0 {
        return Err(CliError::Config {
            field: "judge.runs".to_string(),
            detail: "must be at least 1".to_string(),
        });
    }
    if config.judge.parallelism == 0 {
        return Err(CliError::Config {
            field: "judge.parallelism".to_string(),
            detail: "must be at least 1".to_string(),
        });
    }
    if config.judge.timeout_s == 0 {
        return Err(CliError::Config {
            field: "judge.timeout_s".to_string(),
            detail: "must be at least 1".to_string(),
        });
    }
    Ok(model)
}
