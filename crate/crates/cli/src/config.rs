//! Run configuration: every hyperparameter plus the input paths, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use caue::baselines::Usr2VecConfig;
use caue::concepts::default_exclusions;
use caue::corpus::{InputFormat, DEFAULT_MIN_TOKENS};
use caue::eval::EvalConfig;
use caue::synth::SynthConfig;
use caue::training::TrainConfig;
use serde::{Deserialize, Serialize};

/// Overrides the output directory named in the config file.
pub const OUTPUT_DIR_ENV: &str = "CAUE_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "caue_out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Floating-point type used for training.
    pub precision: Precision,
    pub paths: Paths,
    pub preprocess: PreprocessConfig,
    pub concepts: ConceptConfig,
    pub train: TrainConfig,
    pub checkpoints: CheckpointConfig,
    pub eval: EvalConfig,
    pub baselines: BaselineConfig,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Inputs default to the files `synth` writes under the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub input_format: InputFormat,
    /// `patient,visit,label` rows merged into the records' labels.
    pub labels: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// word2vec text-format vectors for initializing the word table.
    pub word_vectors: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            input_format: InputFormat::Jsonl,
            labels: None,
            lexicon: None,
            word_vectors: None,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub min_tokens: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { min_tokens: DEFAULT_MIN_TOKENS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConceptConfig {
    /// Semantic types whose concepts are never extracted.
    pub exclusions: Vec<String>,
    pub ngram_max: usize,
}

impl Default for ConceptConfig {
    fn default() -> Self {
        ConceptConfig {
            exclusions: default_exclusions(),
            ngram_max: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckpointConfig {
    /// Save a checkpoint after every `every` epochs; 0 keeps only the final one.
    pub every: usize,
    /// Number of per-epoch checkpoints retained.
    pub keep: usize,
}

impl Default for CheckpointConfig {
    fn default() -> Self {
        CheckpointConfig { every: 1, keep: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Embeddings scored by `evaluate`; `caue` reads the trained vectors.
    pub methods: Vec<String>,
    /// Concatenate rather than average the token and concept means.
    pub concat: bool,
    pub usr2vec: Usr2VecConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            methods: ["caue", "word2user", "word2user_concept", "usr2vec", "usr2vec_concept"]
                .map(String::from)
                .to_vec(),
            concat: false,
            usr2vec: Usr2VecConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(ConfigError)?;
        Ok(cfg)
    }

    /// Resolves the output directory (flag, then environment, then file,
    /// then default) and fills every defaulted input path.
    pub fn resolve(mut self, out_flag: Option<PathBuf>) -> RunConfig {
        let out = out_flag
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .or(self.paths.output_dir.take())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        let synth = out.join("synth");
        self.paths.corpus.get_or_insert_with(|| synth.join("corpus.jsonl"));
        self.paths.lexicon.get_or_insert_with(|| synth.join("lexicon.tsv"));
        self.paths.output_dir = Some(out);
        self
    }

    pub fn out(&self) -> &Path {
        self.paths.output_dir.as_deref().expect("resolved config has an output dir")
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// A config file that does not parse or names an unknown key.
#[derive(Debug)]
pub struct ConfigError(pub toml::de::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config: {}", self.0.message())
    }
}

impl std::error::Error for ConfigError {}
