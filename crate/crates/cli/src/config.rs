//! The run configuration: one TOML document covering every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speller_core::eegsim::{CohortConfig, ScoreMode};
use speller_core::harness::{SchemeSpec, SimConfig};
use speller_core::lm::SmoothingParams;
use speller_core::seed;
use speller_core::swlda::SwldaConfig;

use crate::CliError;

/// Overrides the predictor endpoint from the config file.
pub const PREDICTOR_URL_ENV: &str = "SPELLER_PREDICTOR_URL";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. When set, the cohort and simulation seeds are derived
    /// from it.
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub lm: LmConfig,
    pub predictor: PredictorConfig,
    pub cohort: CohortConfig,
    pub training: TrainingConfig,
    pub sim: SimConfig,
    pub target: TargetConfig,
    pub schemes: Vec<SchemeSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    /// Corpus files, or directories whose `.txt` files are read in name order.
    pub corpus: Vec<PathBuf>,
    /// Prebuilt model directory; used instead of `corpus` when set.
    pub models: Option<PathBuf>,
    pub smoothing: SmoothingParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// Base URL of a word-prediction service. Without one the corpus mock
    /// answers instead.
    pub url: Option<String>,
    pub timeout_ms: u64,
    /// Text the mock learns word pairs from; defaults to the LM corpus
    /// plus the target text.
    pub mock_corpus: Vec<PathBuf>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            url: None,
            timeout_ms: 200,
            mock_corpus: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Labeled-feature CSV; a synthetic cohort is generated when absent.
    pub features: Option<PathBuf>,
    pub folds: usize,
    /// Also train leave-one-subject-out classifiers.
    pub ascv: bool,
    /// Z-score features per subject before across-subject training.
    pub zscore: bool,
    pub swlda: SwldaConfig,
    pub score_mode: ScoreMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            features: None,
            folds: 3,
            ascv: true,
            zscore: true,
            swlda: SwldaConfig::default(),
            score_mode: ScoreMode::Pooled,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub path: Option<PathBuf>,
    /// Characters typed per subject, cut back to a word end; all if unset.
    pub budget: Option<usize>,
}

/// Command-line values that replace config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub corpus: Vec<PathBuf>,
    pub models: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub budget: Option<usize>,
    pub subjects: Option<usize>,
    pub schemes: Vec<SchemeSpec>,
    pub predictor_url: Option<String>,
    pub no_ascv: bool,
}

impl RunConfig {
    /// Reads a TOML file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.lm.corpus.iter_mut().for_each(fix);
        self.lm.models.iter_mut().for_each(fix);
        self.predictor.mock_corpus.iter_mut().for_each(fix);
        self.training.features.iter_mut().for_each(fix);
        self.target.path.iter_mut().for_each(fix);
    }

    /// Applies flag overrides, the endpoint variable and master-seed
    /// derivation, in that order.
    pub fn resolve(mut self, o: Overrides, env_url: Option<String>) -> Self {
        self.seed = o.seed.or(self.seed);
        self.workers = o.workers.unwrap_or(self.workers);
        if !o.corpus.is_empty() {
            self.lm.corpus = o.corpus;
        }
        self.lm.models = o.models.or(self.lm.models);
        self.training.features = o.features.or(self.training.features);
        self.target.path = o.target.or(self.target.path);
        self.target.budget = o.budget.or(self.target.budget);
        if let Some(n) = o.subjects {
            self.cohort.n_subjects = n;
        }
        if !o.schemes.is_empty() {
            self.schemes = o.schemes;
        }
        if o.no_ascv {
            self.training.ascv = false;
        }
        self.predictor.url = o
            .predictor_url
            .or(env_url.filter(|u| !u.is_empty()))
            .or(self.predictor.url);
        if let Some(master) = self.seed {
            self.cohort.seed = seed::derive(master, &[0]);
            self.sim.seed = seed::derive(master, &[1]);
        }
        self
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}
