//! Prompt-only training: reverse-mode gradients through the frozen text
//! encoder, plain mini-batch SGD, cosine-annealed learning rate.

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::TrainingView;
use crate::encoders::{Backbone, TextEncoder};
use crate::error::{Error, Result};
use crate::head::HeadConfig;
use crate::objectives::{self, PseudoLabelConfig, PseudoLabelSet, PseudoRefresh};
use crate::prompt_bank::{PromptBank, PromptConfig, PromptGrads};
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub seed: u64,
    pub prompt: PromptConfig,
    pub head: HeadConfig,
    pub pseudo: PseudoLabelConfig,
    /// When false only the source loss is optimized.
    pub use_target_loss: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return Err(Error::Config("lr0 must be finite and non-negative".into()));
        }
        self.prompt.validate()?;
        self.head.validate()?;
        self.pseudo.validate()
    }
}

/// `lr0 * (1 + cos(pi * epoch / total_epochs)) / 2`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(Error::Input(format!(
            "epoch {epoch} outside schedule of {total_epochs} epochs"
        )));
    }
    let phase = std::f64::consts::PI * epoch as f64 / total_epochs as f64;
    Ok(lr0 * (1.0 + phase.cos()) / 2.0)
}

/// One mini-batch: encoded source rows with labels, encoded target rows
/// with their aligned pseudo labels.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub source_feats: ArrayView2<'a, f64>,
    pub source_labels: &'a [usize],
    pub target_feats: ArrayView2<'a, f64>,
    pub pseudo: &'a PseudoLabelSet,
    pub use_target_loss: bool,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub source_loss: f64,
    pub target_loss: f64,
    pub grads: PromptGrads,
}

impl StepOutput {
    pub fn total_loss(&self) -> f64 {
        objectives::total_loss(self.source_loss, self.target_loss)
    }
}

/// Loss and gradient of `L_s + L_u` with respect to the learnable blocks.
pub fn prompt_gradients(
    bank: &PromptBank,
    text: &TextEncoder,
    batch: &Batch<'_>,
    head: &HeadConfig,
) -> Result<StepOutput> {
    let traced = bank.traced_prompt_features(text)?;
    let feats = traced.features.view();
    let t = head.temperature;
    let source = objectives::source_loss_grad(batch.source_feats, batch.source_labels, feats, t)?;
    let mut d_feats = source.d_prompt_feats;
    let mut target_loss = 0.0;
    if batch.use_target_loss && batch.target_feats.nrows() > 0 {
        let target = objectives::target_loss_grad(batch.target_feats, batch.pseudo, feats, t)?;
        target_loss = target.loss;
        d_feats += &target.d_prompt_feats;
    }
    let total = objectives::total_loss(source.loss, target_loss);
    if !total.is_finite() || d_feats.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite loss or gradient (L_s = {}, L_u = {target_loss})",
            source.loss
        )));
    }
    let grads = bank.backprop_features(text, &traced, d_feats.view());
    Ok(StepOutput {
        source_loss: source.loss,
        target_loss,
        grads,
    })
}

/// Total loss evaluated from scratch, without any gradient bookkeeping.
pub fn batch_loss(bank: &PromptBank, text: &TextEncoder, batch: &Batch<'_>, head: &HeadConfig) -> Result<f64> {
    let feats = bank.prompt_features(text)?;
    let t = head.temperature;
    let ls = objectives::source_loss(batch.source_feats, batch.source_labels, feats.view(), t)?;
    let lu = if batch.use_target_loss && batch.target_feats.nrows() > 0 {
        objectives::target_loss(batch.target_feats, batch.pseudo, feats.view(), t)?
    } else {
        0.0
    };
    Ok(objectives::total_loss(ls, lu))
}

/// Central finite differences of [`batch_loss`] for every learnable entry.
pub fn finite_difference_gradients(
    bank: &PromptBank,
    text: &TextEncoder,
    batch: &Batch<'_>,
    head: &HeadConfig,
    step: f64,
) -> Result<PromptGrads> {
    let mut grads = bank.zero_grads();
    let mut probe = bank.clone();
    let n_blocks = bank.blocks().count();
    for b in 0..n_blocks {
        let shape = bank.blocks().nth(b).expect("block index in range").dim();
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let original = probe.blocks().nth(b).expect("block")[[i, j]];
                probe.blocks_mut().nth(b).expect("block")[[i, j]] = original + step;
                let plus = batch_loss(&probe, text, batch, head)?;
                probe.blocks_mut().nth(b).expect("block")[[i, j]] = original - step;
                let minus = batch_loss(&probe, text, batch, head)?;
                probe.blocks_mut().nth(b).expect("block")[[i, j]] = original;
                grads.blocks_mut().nth(b).expect("block")[[i, j]] = (plus - minus) / (2.0 * step);
            }
        }
    }
    Ok(grads)
}

/// Largest relative error between two gradient sets, using
/// `|a - b| / max(|a|, |b|, floor)` per entry.
pub fn max_relative_error(a: &PromptGrads, b: &PromptGrads, floor: f64) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Scores a prompt bank against labels the trainer cannot see.
pub trait Evaluator {
    fn accuracy(&self, bank: &PromptBank) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub ls: f64,
    pub lu: f64,
    pub acc: Option<f64>,
    pub lr: f64,
    pub accepted: usize,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub bank: PromptBank,
    pub metrics: Vec<EpochMetrics>,
    pub pseudo_labels: PseudoLabelSet,
    pub wall_time: Duration,
    /// Set when a non-finite loss stopped training; `bank` is then the last
    /// finite state.
    pub divergence: Option<String>,
}

impl TrainResult {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.metrics.last().and_then(|m| m.acc)
    }
}

fn gather(feats: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    feats.select(Axis(0), idx)
}

/// Trains the learnable prompt blocks. One epoch is one pass over the
/// shuffled source set; target batches of the same size are drawn
/// cyclically from a shuffled target order alongside.
pub fn train(
    cfg: &TrainConfig,
    source: TrainingView<'_>,
    target: TrainingView<'_>,
    backbone: &Backbone,
    evaluator: Option<&dyn Evaluator>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let started = Instant::now();
    if source.is_empty() || target.is_empty() {
        return Err(Error::Input("source and target sets must be nonempty".into()));
    }
    let k = backbone.num_classes();
    if source.num_classes() != k || target.num_classes() != k || cfg.prompt.num_classes != k {
        return Err(Error::Input(format!(
            "label spaces disagree: backbone {k}, source {}, target {}, prompts {}",
            source.num_classes(),
            target.num_classes(),
            cfg.prompt.num_classes
        )));
    }
    let source_labels = source.labels()?;
    let source_feats = backbone.encode_images(source.inputs())?;
    let target_feats = backbone.encode_images(target.inputs())?;
    let text = &backbone.text;
    let t = cfg.head.temperature;

    let mut bank = PromptBank::init(&cfg.prompt, &backbone.tokens, backbone.class_names(), cfg.seed)?;
    let manual = backbone.manual_features()?;
    let mut pseudo = objectives::generate_pseudo_labels(target_feats.view(), manual.view(), t, &cfg.pseudo)?;

    let mut rng = rng::seeded(cfg.seed, stream::SHUFFLE);
    let mut source_order: Vec<usize> = (0..source.len()).collect();
    let mut target_order: Vec<usize> = (0..target.len()).collect();
    target_order.shuffle(&mut rng);
    let mut target_cursor = 0;

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut divergence = None;
    'epochs: for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr0)?;
        if epoch > 0 && cfg.pseudo.refresh == PseudoRefresh::PerEpoch {
            let feats = bank.prompt_features(text)?;
            pseudo = objectives::refresh_pseudo_labels(target_feats.view(), feats.view(), t, &cfg.pseudo)?;
        }
        source_order.shuffle(&mut rng);
        let (mut ls_sum, mut lu_sum, mut steps) = (0.0, 0.0, 0usize);
        for (step, chunk) in source_order.chunks(cfg.batch_size).enumerate() {
            let mut target_idx = Vec::with_capacity(cfg.batch_size);
            while target_idx.len() < cfg.batch_size {
                if target_cursor == target_order.len() {
                    target_order.shuffle(&mut rng);
                    target_cursor = 0;
                }
                target_idx.push(target_order[target_cursor]);
                target_cursor += 1;
            }
            let s_feats = gather(&source_feats, chunk);
            let s_labels: Vec<usize> = chunk.iter().map(|&i| source_labels[i]).collect();
            let t_feats = gather(&target_feats, &target_idx);
            let t_pseudo = pseudo.select(&target_idx)?;
            let batch = Batch {
                source_feats: s_feats.view(),
                source_labels: &s_labels,
                target_feats: t_feats.view(),
                pseudo: &t_pseudo,
                use_target_loss: cfg.use_target_loss,
            };
            let out = match prompt_gradients(&bank, text, &batch, &cfg.head) {
                Ok(out) => out,
                Err(e @ Error::Numeric(_)) => {
                    divergence = Some(
                        Error::Divergence {
                            epoch,
                            step,
                            msg: e.to_string(),
                        }
                        .to_string(),
                    );
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let mut next = bank.clone();
            next.sgd_step(&out.grads, lr)?;
            if next.blocks().any(|b| b.iter().any(|v| !v.is_finite())) {
                divergence = Some(
                    Error::Divergence {
                        epoch,
                        step,
                        msg: "non-finite prompt parameters".into(),
                    }
                    .to_string(),
                );
                break 'epochs;
            }
            bank = next;
            ls_sum += out.source_loss;
            lu_sum += out.target_loss;
            steps += 1;
        }
        let acc = evaluator.map(|e| e.accuracy(&bank)).transpose()?;
        metrics.push(EpochMetrics {
            epoch,
            ls: ls_sum / steps as f64,
            lu: lu_sum / steps as f64,
            acc,
            lr,
            accepted: pseudo.accepted_count(),
        });
    }
    if let Some(msg) = &divergence {
        log::warn!("{msg}");
    }
    Ok(TrainResult {
        bank,
        metrics,
        pseudo_labels: pseudo,
        wall_time: started.elapsed(),
        divergence,
    })
}
