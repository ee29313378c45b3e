use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{Split, WorldSpec, DEFAULT_NOISE_SWEEP};
use crate::engine::{Combination, InferMode, ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::search::SearchConfig;

/// Where `gen-rules` takes its rules from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSource {
    /// Simulated annotators restating ground-truth rules imperfectly.
    Annotators,
    /// Perturbed co-occurrence generators, aggregated per activity.
    Generated,
    /// Active-primitive sets of positive training samples.
    Harvest,
    /// The world's ground-truth rules.
    Truth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    pub source: RuleSource,
    pub annotators: usize,
    pub per_activity: usize,
    pub exclude_truth: bool,
    pub presence_threshold: f64,
}

impl Default for RulesConfig {
    fn default() -> Self {
        RulesConfig {
            source: RuleSource::Annotators,
            annotators: 5,
            per_activity: 4,
            exclude_truth: true,
            presence_threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: InferMode,
    /// Overrides the combination stored in the checkpoint.
    pub combination: Option<Combination>,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: InferMode::Fused,
            combination: None,
            split: Split::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogicConfig {
    pub t_l: f64,
    /// Tuples sampled per expression.
    pub tuples: usize,
    /// Events drawn from the pool; 0 keeps all of them.
    pub events: usize,
    /// Judgements strictly inside this band count as ambiguous.
    pub ambiguous_band: (f64, f64),
    /// Random ambient-space vectors judged for comparison.
    pub ambient: usize,
    pub split: Split,
}

impl Default for LogicConfig {
    fn default() -> Self {
        LogicConfig {
            t_l: 0.8,
            tuples: 5000,
            events: 0,
            ambiguous_band: (0.2, 0.8),
            ambient: 5000,
            split: Split::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub ratios: Vec<f64>,
    pub mode: InferMode,
    pub combination: Option<Combination>,
    pub split: Split,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            ratios: DEFAULT_NOISE_SWEEP.to_vec(),
            mode: InferMode::LrOnly,
            combination: None,
            split: Split::Test,
        }
    }
}

/// Search settings plus the split searched. Unknown keys are rejected by
/// the flattened [`SearchConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSection {
    #[serde(flatten)]
    pub search: SearchConfig,
    pub split: Split,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            search: SearchConfig::default(),
            split: Split::Test,
        }
    }
}

/// Input locations. Relative paths resolve against the config file's
/// directory; missing entries default to files in the output directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub world: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    /// Initial rule file read by `train`.
    pub rules: Option<PathBuf>,
    /// Trained rule file read by `eval`, `eval-logic`, `noise-sweep`, `update-rules`.
    pub final_rules: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub world: WorldSpec,
    pub rules: RulesConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub logic: LogicConfig,
    pub noise: NoiseConfig,
    pub search: SearchSection,
    pub io: IoConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.search.search.validate()?;
        if self.rules.per_activity == 0 || self.rules.annotators == 0 {
            return Err(Error::contract(
                "rules.per_activity and rules.annotators must be >= 1",
            ));
        }
        if !(0.5..1.0).contains(&self.logic.t_l) {
            return Err(Error::contract("logic.t_l must lie in [0.5, 1)"));
        }
        if self.noise.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::contract("noise ratios must lie in [0,1]"));
        }
        Ok(())
    }
}

/// A parsed config together with its source text.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: Option<String>,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn defaults() -> Self {
        LoadedConfig {
            config: RunConfig::default(),
            text: None,
            base_dir: PathBuf::from("."),
        }
    }

    /// TOML when the extension is `.toml`, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let config: RunConfig = if is_toml {
            toml::from_str(&text).map_err(|e| Error::Config {
                path: path.display().to_string(),
                msg: e.to_string().trim_end().to_string(),
            })?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?
        };
        config.validate().map_err(|e| Error::Config {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Ok(LoadedConfig {
            config,
            text: Some(text),
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn resolve(&self, configured: &Option<PathBuf>, out: &Path, default_name: &str) -> PathBuf {
        match configured {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => self.base_dir.join(p),
            None => out.join(default_name),
        }
    }
}
