//! Experiment configuration: TOML sections per module, every key
//! overridable as `section.key=value`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticSpec;
use crate::encoders::BackboneConfig;
use crate::error::{Error, Result};
use crate::head::{EvalRule, HeadConfig};
use crate::objectives::{PseudoLabelConfig, PseudoRefresh};
use crate::prompt_bank::{PromptConfig, PromptMode};
use crate::trainer::TrainConfig;

/// Synthetic task shape. Class count and input width come from the
/// backbone section; the draw seed is the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub source_samples: usize,
    pub target_samples: usize,
    pub class_separation: f64,
    pub rotation_deg: f64,
    pub noise_std: f64,
    /// Explicit translation vector; leave empty to use `nuisance_shift`.
    pub translation: Vec<f64>,
    /// Norm of a translation spread over the non-class input coordinates.
    pub nuisance_shift: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            source_samples: 400,
            target_samples: 400,
            class_separation: 4.0,
            rotation_deg: 30.0,
            noise_std: 0.5,
            translation: Vec::new(),
            nuisance_shift: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub mode: PromptMode,
    pub m1: usize,
    pub m2: usize,
    pub init_std: f64,
}

impl Default for PromptSection {
    fn default() -> Self {
        Self {
            mode: PromptMode::UnifiedDsc,
            m1: 16,
            m2: 16,
            init_std: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSection {
    pub temperature: f64,
    pub eval_rule: EvalRule,
}

impl Default for HeadSection {
    fn default() -> Self {
        Self {
            temperature: HeadConfig::default().temperature,
            eval_rule: EvalRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoSection {
    pub tau: f64,
    pub refresh: PseudoRefresh,
}

impl Default for PseudoSection {
    fn default() -> Self {
        let p = PseudoLabelConfig::default();
        Self {
            tau: p.tau,
            refresh: p.refresh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub seed: u64,
    pub use_target_loss: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr0: 0.003,
            seed: 0,
            use_target_loss: true,
        }
    }
}

/// Dataset files; when both are absent the synthetic task is generated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Seeds for the multi-run commands (ablate, sweep).
    pub seeds: Vec<u64>,
    pub plots: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            plots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub variants: Vec<PromptMode>,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self {
            variants: PromptMode::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Threshold,
    TokenLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub kind: SweepKind,
    pub taus: Vec<f64>,
    pub token_pairs: Vec<(usize, usize)>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            kind: SweepKind::Threshold,
            taus: vec![0.0, 0.4, 0.5, 0.6, 0.7, 1.0],
            token_pairs: vec![(4, 28), (8, 24), (16, 16), (24, 8), (28, 4)],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    pub checkpoint: Option<PathBuf>,
    /// Further checkpoints shown next to MANUAL and `checkpoint` in the
    /// confidence report.
    pub compare: Vec<PathBuf>,
    pub probes_per_domain: usize,
    pub probe_seed: u64,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            compare: Vec::new(),
            probes_per_domain: 100,
            probe_seed: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub backbone: BackboneConfig,
    pub task: TaskSection,
    pub prompt: PromptSection,
    pub head: HeadSection,
    pub pseudo: PseudoSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub run: RunSection,
    pub ablate: AblateSection,
    pub sweep: SweepSection,
    pub eval: EvalSection,
    pub diagnose: DiagnoseSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets `section.key` to `value`, parsed as a TOML value when possible
    /// and as a bare string otherwise.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override key `{key}` must look like section.key")))?;
        let mut root = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let table = root
            .entry(section)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{section}` is not a config section")))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(field.to_string(), parsed);
        let updated: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override `{key}={value}`: {}", e.message())))?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.head_config().validate()?;
        self.pseudo_config().validate()?;
        if self.data.source.is_some() != self.data.target.is_some() {
            return Err(Error::Config(
                "data.source and data.target must be given together".into(),
            ));
        }
        if !self.task.translation.is_empty() && self.task.nuisance_shift != 0.0 {
            return Err(Error::Config(
                "set either task.translation or task.nuisance_shift, not both".into(),
            ));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            temperature: self.head.temperature,
        }
    }

    pub fn pseudo_config(&self) -> PseudoLabelConfig {
        PseudoLabelConfig {
            tau: self.pseudo.tau,
            refresh: self.pseudo.refresh,
        }
    }

    pub fn synthetic_spec(&self, seed: u64) -> Result<SyntheticSpec> {
        let translation = if self.task.translation.is_empty() {
            SyntheticSpec::nuisance_translation(
                self.backbone.input_dim,
                self.backbone.num_classes,
                self.task.nuisance_shift,
            )?
        } else {
            self.task.translation.clone()
        };
        Ok(SyntheticSpec {
            num_classes: self.backbone.num_classes,
            source_samples: self.task.source_samples,
            target_samples: self.task.target_samples,
            input_dim: self.backbone.input_dim,
            class_separation: self.task.class_separation,
            rotation_deg: self.task.rotation_deg,
            translation,
            noise_std: self.task.noise_std,
            seed,
        })
    }

    /// Prompt config for `mode`, with lengths a mode does not use zeroed.
    pub fn prompt_config(&self, mode: PromptMode, m1: usize, m2: usize) -> PromptConfig {
        PromptConfig {
            init_std: self.prompt.init_std,
            ..PromptConfig::new(mode, m1, m2, self.backbone.num_classes, self.backbone.embed_dim)
        }
        .normalized()
    }

    pub fn train_config(&self, prompt: PromptConfig, tau: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr0: self.train.lr0,
            seed,
            prompt,
            head: self.head_config(),
            pseudo: PseudoLabelConfig {
                tau,
                refresh: self.pseudo.refresh,
            },
            use_target_loss: self.train.use_target_loss,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = ExperimentConfig::from_toml("[train]\nepochs = 3\n[prompt]\nmode = \"UNIFIED\"\n").unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.lr0, 0.003);
        assert_eq!(cfg.prompt.mode, PromptMode::Unified);
    }

    #[test]
    fn overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("pseudo.tau", "0.4").unwrap();
        cfg.set("prompt.mode", "CLASS_SPECIFIC").unwrap();
        cfg.set("sweep.token_pairs", "[[2, 6]]").unwrap();
        cfg.set("data.source", "s.txt").unwrap();
        cfg.set("data.target", "t.txt").unwrap();
        assert_eq!(cfg.pseudo.tau, 0.4);
        assert_eq!(cfg.prompt.mode, PromptMode::ClassSpecific);
        assert_eq!(cfg.sweep.token_pairs, vec![(2, 6)]);
        assert_eq!(cfg.data.source, Some(PathBuf::from("s.txt")));
        assert!(cfg.set("train.nope", "1").is_err());
        assert!(cfg.set("train.epochs", "many").is_err());
        assert!(cfg.set("epochs", "1").is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("[train]\nepoch = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[pseudo]\ntau = 1.5\n").is_err());
        assert!(ExperimentConfig::from_toml("[head]\ntemperature = 0.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[task]\ntranslation = [1.0]\n").is_err());
    }

    #[test]
    fn prompt_lengths_follow_the_mode() {
        let cfg = ExperimentConfig::default();
        let p = cfg.prompt_config(PromptMode::Unified, 16, 16);
        assert_eq!((p.m1, p.m2), (16, 0));
        let p = cfg.prompt_config(PromptMode::UnifiedDsc, 16, 0);
        assert_eq!(p.mode, PromptMode::Unified);
        let p = cfg.prompt_config(PromptMode::Manual, 16, 16);
        assert_eq!((p.m1, p.m2), (0, 0));
    }
}
