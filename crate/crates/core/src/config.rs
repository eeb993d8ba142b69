//! One TOML document holding every tunable of the pipeline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::DspConfig;
use crate::emolex::TextEmotionConfig;
use crate::error::{Error, Result};
use crate::explain::ReportThresholds;
use crate::forest::ForestConfig;
use crate::fusion::FusionConfig;
use crate::objcount::ObjectConfig;
use crate::seed::derive_seed;
use crate::speechnet::TrainConfig;
use crate::textfeat::LexiconSet;

pub const DEFAULT_ROOT_SEED: u64 = 20_210_101;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconConfig {
    /// Directory with the seven lexicon files; the built-in lists when unset.
    pub dir: Option<PathBuf>,
}

impl LexiconConfig {
    pub fn load(&self) -> Result<LexiconSet> {
        match &self.dir {
            Some(d) => LexiconSet::from_dir(d),
            None => Ok(LexiconSet::builtin()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapConfig {
    pub mode: ShapMode,
    /// Permutations drawn in sampled mode.
    pub permutations: usize,
    /// Background rows taken from the feature table.
    pub max_background: usize,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            mode: ShapMode::Exact,
            permutations: 2000,
            max_background: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of feature-table rows used to train the forest; the rest is
    /// held out for the reported MSE.
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.67,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Seed,
    pub dsp: DspConfig,
    pub lexicons: LexiconConfig,
    pub forest: ForestConfig,
    pub split: SplitConfig,
    pub speech: TrainConfig,
    pub text_emotion: TextEmotionConfig,
    pub objects: ObjectConfig,
    pub fusion: FusionConfig,
    pub thresholds: ReportThresholds,
    pub shap: ShapConfig,
}

/// Root seed; components draw from `derive_seed(root, name)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Default for Seed {
    fn default() -> Self {
        Seed(DEFAULT_ROOT_SEED)
    }
}

impl PipelineConfig {
    pub fn component_seed(&self, component: &str) -> u64 {
        derive_seed(self.seed.0, component)
    }

    pub fn validate(&self) -> Result<()> {
        self.dsp.validate()?;
        self.forest.validate()?;
        self.speech.validate()?;
        self.text_emotion.validate()?;
        self.objects.validate()?;
        self.fusion.validate()?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::invalid("split.train_fraction must lie in (0, 1)"));
        }
        if self.shap.permutations == 0 || self.shap.max_background == 0 {
            return Err(Error::invalid(
                "shap.permutations and shap.max_background must be positive",
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, context: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config {
            context: context.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config {
            context: "pipeline config".into(),
            message: e.to_string(),
        })
    }

    /// Reads a config file; relative lexicon directories are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        if let (Some(dir), Some(base)) = (&cfg.lexicons.dir, path.parent()) {
            if dir.is_relative() {
                cfg.lexicons.dir = Some(base.join(dir));
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text, "t").unwrap(), cfg);
        assert!(text.contains("[fusion]"));
    }

    #[test]
    fn changed_values_round_trip() {
        let mut cfg = PipelineConfig {
            seed: Seed(7),
            ..PipelineConfig::default()
        };
        cfg.forest.max_depth = Some(6);
        cfg.dsp.fmax = Some(8000.0);
        cfg.speech.target_train_accuracy = Some(0.9);
        cfg.lexicons.dir = Some("lex".into());
        cfg.shap.mode = ShapMode::Sampled;
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text, "t").unwrap(), cfg);
    }

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(
            PipelineConfig::from_toml_str("", "t").unwrap(),
            PipelineConfig::default()
        );
        let partial =
            PipelineConfig::from_toml_str("seed = 5\n[fusion]\ntheta = 0.5\n", "t").unwrap();
        assert_eq!(partial.seed, Seed(5));
        assert_eq!(partial.fusion.theta, 0.5);
        assert_eq!(partial.fusion.learning_rate, 0.01);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml_str("colour = 1\n", "t").is_err());
        assert!(PipelineConfig::from_toml_str("[fusion]\nlr = 1\n", "t").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(PipelineConfig::from_toml_str("[split]\ntrain_fraction = 1.5\n", "t").is_err());
        assert!(PipelineConfig::from_toml_str("[speech]\nbatch_size = 0\n", "t").is_err());
    }

    #[test]
    fn component_seeds_differ() {
        let cfg = PipelineConfig::default();
        assert_ne!(cfg.component_seed("forest"), cfg.component_seed("speech"));
        assert_eq!(
            cfg.component_seed("forest"),
            derive_seed(DEFAULT_ROOT_SEED, "forest")
        );
    }
}
