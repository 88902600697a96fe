//! Source cross-entropy, threshold-gated pseudo labels and the gated
//! target loss, all over the 2K-way prompt softmax.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{self, normalize_rows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoRefresh {
    /// Zero-shot labels from the hand-written prompts, computed once.
    #[default]
    Once,
    /// Regenerated at the start of every epoch from the current prompts
    /// (2K-way, folded to K classes).
    PerEpoch,
}

impl FromStr for PseudoRefresh {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "once" | "once_before_training" => Ok(PseudoRefresh::Once),
            "per_epoch" => Ok(PseudoRefresh::PerEpoch),
            other => Err(Error::Config(format!("unknown pseudo-label refresh `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelConfig {
    pub tau: f64,
    pub refresh: PseudoRefresh,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            tau: 0.6,
            refresh: PseudoRefresh::Once,
        }
    }
}

impl PseudoLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1] (got {})", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub index: usize,
    pub label: usize,
    pub confidence: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoLabelSet {
    pub entries: Vec<PseudoLabel>,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn accepted_count(&self) -> usize {
        self.entries.iter().filter(|e| e.accepted).count()
    }

    /// Re-gates the same labels at a different threshold.
    pub fn with_threshold(&self, tau: f64) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| PseudoLabel {
                    accepted: e.confidence >= tau,
                    ..*e
                })
                .collect(),
        }
    }

    /// Entries for the given sample indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let entries = indices
            .iter()
            .map(|&i| {
                self.entries.get(i).copied().ok_or(Error::Index {
                    index: i,
                    len: self.entries.len(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    /// Line-oriented dump: `index label confidence accepted`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# index label confidence accepted\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{} {} {:?} {}",
                e.index,
                e.label,
                e.confidence,
                u8::from(e.accepted)
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                line: n + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err("expected 4 fields"));
            }
            entries.push(PseudoLabel {
                index: fields[0].parse().map_err(|_| err("bad index"))?,
                label: fields[1].parse().map_err(|_| err("bad label"))?,
                confidence: fields[2].parse().map_err(|_| err("bad confidence"))?,
                accepted: match fields[3] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(err("accepted flag must be 0 or 1")),
                },
            });
        }
        Ok(Self { entries })
    }
}

/// Zero-shot K-way labels from the hand-written prompt features; a sample is
/// accepted when its top probability is at least `tau`.
pub fn generate_pseudo_labels(
    target_feats: ArrayView2<'_, f64>,
    manual_prompt_feats: ArrayView2<'_, f64>,
    temperature: f64,
    cfg: &PseudoLabelConfig,
) -> Result<PseudoLabelSet> {
    cfg.validate()?;
    if manual_prompt_feats.nrows() < 2 {
        return Err(Error::Input("pseudo-labeling needs K >= 2 prompts".into()));
    }
    let mut entries = Vec::with_capacity(target_feats.nrows());
    for (index, f) in target_feats.outer_iter().enumerate() {
        let dist = head::zero_shot_probabilities(f, manual_prompt_feats, temperature)?;
        let label = head::predict(&dist);
        let confidence = dist.probs()[label];
        entries.push(PseudoLabel {
            index,
            label,
            confidence,
            accepted: confidence >= cfg.tau,
        });
    }
    Ok(PseudoLabelSet { entries })
}

/// Labels from the current 2K prompt features, folded to K classes.
pub fn refresh_pseudo_labels(
    target_feats: ArrayView2<'_, f64>,
    prompt_feats: ArrayView2<'_, f64>,
    temperature: f64,
    cfg: &PseudoLabelConfig,
) -> Result<PseudoLabelSet> {
    cfg.validate()?;
    let mut entries = Vec::with_capacity(target_feats.nrows());
    for (index, f) in target_feats.outer_iter().enumerate() {
        let dist = head::marginalize_to_classes(&head::two_k_probabilities(f, prompt_feats, temperature)?)?;
        let label = head::predict(&dist);
        let confidence = dist.probs()[label];
        entries.push(PseudoLabel {
            index,
            label,
            confidence,
            accepted: confidence >= cfg.tau,
        });
    }
    Ok(PseudoLabelSet { entries })
}

/// A loss value with its gradient on the `2K x D` prompt features.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub d_prompt_feats: Array2<f64>,
}

/// `-(1/normalizer) * sum log P(prompt t_i | x_i)` over `(row i, prompt t_i)`
/// pairs, with the softmax over every prompt row.
fn contrastive_nll(
    img_feats: ArrayView2<'_, f64>,
    targets: &[(usize, usize)],
    normalizer: usize,
    prompt_feats: ArrayView2<'_, f64>,
    temperature: f64,
) -> Result<LossGrad> {
    crate::head::HeadConfig::new(temperature)?;
    let n_prompts = prompt_feats.nrows();
    let mut d_prompt_feats = Array2::zeros(prompt_feats.raw_dim());
    if targets.is_empty() {
        return Ok(LossGrad {
            loss: 0.0,
            d_prompt_feats,
        });
    }
    let (img, _) = normalize_rows(img_feats)?;
    let (txt, txt_norms) = normalize_rows(prompt_feats)?;
    let inv_t = 1.0 / temperature;
    let scale = 1.0 / normalizer as f64;
    let mut total = 0.0;
    // gradient w.r.t. the unit prompt rows
    let mut d_unit = Array2::<f64>::zeros(prompt_feats.raw_dim());
    for &(i, t) in targets {
        if t >= n_prompts {
            return Err(Error::Index {
                index: t,
                len: n_prompts,
            });
        }
        let f = img.row(i);
        let logits = txt.dot(&f) * inv_t;
        let probs = head::softmax(logits.view())?;
        let max = logits.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let lse = max + logits.mapv(|v| (v - max).exp()).sum().ln();
        total += lse - logits[t];
        for j in 0..n_prompts {
            let coeff = (probs[j] - if j == t { 1.0 } else { 0.0 }) * inv_t * scale;
            if coeff != 0.0 {
                d_unit.row_mut(j).scaled_add(coeff, &f);
            }
        }
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss}")));
    }
    for j in 0..n_prompts {
        let u = txt.row(j);
        let du = d_unit.row(j);
        let radial = u.dot(&du);
        let mut row = d_prompt_feats.row_mut(j);
        row.assign(&(&du - &(&u * radial)));
        row /= txt_norms[j];
    }
    Ok(LossGrad { loss, d_prompt_feats })
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Index { index: bad, len: k });
    }
    Ok(())
}

fn check_prompts(prompt_feats: &ArrayView2<'_, f64>) -> Result<usize> {
    let n = prompt_feats.nrows();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Shape(format!("expected 2K prompt rows, got {n}")));
    }
    Ok(n / 2)
}

/// Source cross-entropy with its prompt-feature gradient.
pub fn source_loss_grad(
    img_feats: ArrayView2<'_, f64>,
    labels: &[usize],
    prompt_feats: ArrayView2<'_, f64>,
    temperature: f64,
) -> Result<LossGrad> {
    let k = check_prompts(&prompt_feats)?;
    if img_feats.nrows() == 0 {
        return Err(Error::Input("empty source batch".into()));
    }
    if labels.len() != img_feats.nrows() {
        return Err(Error::Input(format!(
            "{} labels for {} source rows",
            labels.len(),
            img_feats.nrows()
        )));
    }
    check_labels(labels, k)?;
    let targets: Vec<(usize, usize)> = labels.iter().copied().enumerate().collect();
    contrastive_nll(img_feats, &targets, labels.len(), prompt_feats, temperature)
}

pub fn source_loss(
    img_feats: ArrayView2<'_, f64>,
    labels: &[usize],
    prompt_feats: ArrayView2<'_, f64>,
    temperature: f64,
) -> Result<f64> {
    Ok(source_loss_grad(img_feats, labels, prompt_feats, temperature)?.loss)
}

/// Gated target loss: accepted rows score their (TARGET, pseudo label)
/// prompt; rejected rows contribute zero; the normalizer counts every row.
pub fn target_loss_grad(
    img_feats: ArrayView2<'_, f64>,
    pseudo: &PseudoLabelSet,
    prompt_feats: ArrayView2<'_, f64>,
    temperature: f64,
) -> Result<LossGrad> {
    let k = check_prompts(&prompt_feats)?;
    if pseudo.len() != img_feats.nrows() {
        return Err(Error::Input(format!(
            "{} pseudo labels for {} target rows",
            pseudo.len(),
            img_feats.nrows()
        )));
    }
    let targets: Vec<(usize, usize)> = pseudo
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.accepted)
        .map(|(i, e)| (i, e.label))
        .collect();
    check_labels(&targets.iter().map(|t| t.1).collect::<Vec<_>>(), k)?;
    let targets: Vec<(usize, usize)> = targets.into_iter().map(|(i, y)| (i, k + y)).collect();
    contrastive_nll(img_feats, &targets, pseudo.len().max(1), prompt_feats, temperature)
}

pub fn target_loss(
    img_feats: ArrayView2<'_, f64>,
    pseudo: &PseudoLabelSet,
    prompt_feats: ArrayView2<'_, f64>,
    temperature: f64,
) -> Result<f64> {
    Ok(target_loss_grad(img_feats, pseudo, prompt_feats, temperature)?.loss)
}

pub fn total_loss(source: f64, target: f64) -> f64 {
    source + target
}
