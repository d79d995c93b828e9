//! The run configuration file and its command-line overrides.

use std::path::{Path, PathBuf};

use mwp_core::variants::{RemoteConfig, VariantCounts};
use mwp_harness::ModelSpec;
use mwp_model::vocab::SPECIALS;
use mwp_model::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantMode {
    Offline,
    Remote,
    /// Variant records already present in the corpus.
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantsConfig {
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    pub mode: VariantMode,
}

impl Default for VariantsConfig {
    fn default() -> Self {
        VariantsConfig {
            k1: 0,
            k2: 0,
            k3: 0,
            mode: VariantMode::Offline,
        }
    }
}

impl VariantsConfig {
    pub fn counts(&self) -> VariantCounts {
        VariantCounts::new(self.k1, self.k2, self.k3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every random choice derives from it.
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    pub folds: usize,
    pub voting: bool,
    pub variants: VariantsConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub remote: RemoteConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            corpus: None,
            folds: 5,
            voting: false,
            variants: VariantsConfig::default(),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            remote: RemoteConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.folds < 2 {
            return bad(format!("folds must be at least 2 (got {})", self.folds));
        }
        let probe: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        self.model
            .solver_config(&mwp_model::Vocab::from_tokens(probe))
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return bad("train.epochs and train.batch_size must be positive".into());
        }
        if self.variants.mode == VariantMode::Remote && self.variants.counts().total() > 0 {
            self.variants
                .counts()
                .check_bounds()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Training settings with the root seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}
