//! Fixtures shared by the criterion benches.

use daplkit_core::harness::ExperimentConfig;
use daplkit_core::{data, Backbone, Dataset, PromptMode, TrainConfig};

/// Backbone, both domains and a training config for the default task.
pub struct Fixture {
    pub backbone: Backbone,
    pub source: Dataset,
    pub target: Dataset,
    pub config: ExperimentConfig,
}

impl Fixture {
    pub fn acceptance(seed: u64) -> Self {
        let config = ExperimentConfig::default();
        let backbone = Backbone::build(&config.backbone).expect("default backbone");
        let (source, target) =
            data::generate_synthetic_task(&config.synthetic_spec(seed).expect("default task")).expect("default task");
        Self {
            backbone,
            source,
            target,
            config,
        }
    }

    pub fn train_config(&self, mode: PromptMode, epochs: usize) -> TrainConfig {
        let p = &self.config.prompt;
        let prompt = self.config.prompt_config(mode, p.m1, p.m2);
        TrainConfig {
            epochs,
            ..self.config.train_config(prompt, self.config.pseudo.tau, 0)
        }
    }
}
