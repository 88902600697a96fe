//! Domain-adaptive prompt learning against frozen image/text encoders.
//!
//! Learnable context vectors are split into a domain-agnostic block and one
//! domain-specific block per domain. Each (domain, class) pair gets its own
//! prompt, images are scored against all 2K prompts with a temperature
//! softmax over cosine similarities, and unlabeled target images contribute
//! through zero-shot pseudo labels gated by a confidence threshold.

pub mod data;
pub mod diagnostics;
pub mod encoders;
pub mod error;
pub mod harness;
pub mod head;
pub mod objectives;
pub mod prompt_bank;
pub mod rng;
pub mod trainer;

pub use data::{Dataset, SyntheticSpec, TrainingView};
pub use encoders::{Backbone, BackboneConfig, BackboneKind, ImageEncoder, TextEncoder, TokenTable};
pub use error::{Error, Result};
pub use head::{ClassDistribution, EvalRule, HeadConfig, LabelSpace};
pub use objectives::{PseudoLabel, PseudoLabelConfig, PseudoLabelSet, PseudoRefresh};
pub use prompt_bank::{DomainId, PromptBank, PromptConfig, PromptGrads, PromptMode};
pub use trainer::{EpochMetrics, TrainConfig, TrainResult};
