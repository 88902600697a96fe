//! Accuracy evaluation, positive-pair dominance and per-image confidence.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::data::Dataset;
use crate::encoders::Backbone;
use crate::error::{Error, Result};
use crate::head::{self, EvalRule, HeadConfig};
use crate::prompt_bank::{DomainId, PromptBank};
use crate::trainer::Evaluator;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    /// `None` for classes with no samples.
    pub per_class: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    /// Mean over classes that have samples.
    pub macro_avg: f64,
    /// Fraction of all samples classified correctly.
    pub micro: f64,
}

/// Scores precomputed image features against `2K x D` prompt features.
pub fn accuracy_from_features(
    img_feats: ArrayView2<'_, f64>,
    labels: &[usize],
    prompt_feats: ArrayView2<'_, f64>,
    head: &HeadConfig,
    rule: EvalRule,
    domain: DomainId,
) -> Result<AccuracyReport> {
    let k = prompt_feats.nrows() / 2;
    if labels.len() != img_feats.nrows() {
        return Err(Error::Input(format!(
            "{} labels for {} images",
            labels.len(),
            img_feats.nrows()
        )));
    }
    let mut correct = vec![0usize; k];
    let mut counts = vec![0usize; k];
    for (f, &y) in img_feats.outer_iter().zip(labels) {
        if y >= k {
            return Err(Error::Index { index: y, len: k });
        }
        counts[y] += 1;
        if head::classify(f, prompt_feats, head.temperature, rule, domain)? == y {
            correct[y] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = correct
        .iter()
        .zip(&counts)
        .map(|(&c, &n)| (n > 0).then(|| c as f64 / n as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.len() < k {
        log::warn!(
            "{} of {k} classes have no samples and are excluded from the macro average",
            k - present.len()
        );
    }
    let total: usize = counts.iter().sum();
    Ok(AccuracyReport {
        macro_avg: if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        },
        micro: if total == 0 {
            0.0
        } else {
            correct.iter().sum::<usize>() as f64 / total as f64
        },
        per_class,
        counts,
    })
}

/// Per-class and average accuracy of `bank` on a dataset with (hidden) labels.
pub fn evaluate(
    bank: &PromptBank,
    backbone: &Backbone,
    head: &HeadConfig,
    dataset: &Dataset,
    rule: EvalRule,
) -> Result<AccuracyReport> {
    let labels = dataset.evaluation_labels()?;
    let feats = backbone.encode_images(dataset.inputs())?;
    let prompts = bank.prompt_features(&backbone.text)?;
    accuracy_from_features(feats.view(), labels, prompts.view(), head, rule, dataset.domain())
}

/// Macro accuracy on a held-out labeled set, with image features cached.
pub struct DatasetEvaluator<'a> {
    backbone: &'a Backbone,
    feats: Array2<f64>,
    labels: &'a [usize],
    domain: DomainId,
    head: HeadConfig,
    rule: EvalRule,
}

impl<'a> DatasetEvaluator<'a> {
    pub fn new(backbone: &'a Backbone, dataset: &'a Dataset, head: HeadConfig, rule: EvalRule) -> Result<Self> {
        Ok(Self {
            backbone,
            feats: backbone.encode_images(dataset.inputs())?,
            labels: dataset.evaluation_labels()?,
            domain: dataset.domain(),
            head,
            rule,
        })
    }

    pub fn report(&self, bank: &PromptBank) -> Result<AccuracyReport> {
        let prompts = bank.prompt_features(&self.backbone.text)?;
        accuracy_from_features(
            self.feats.view(),
            self.labels,
            prompts.view(),
            &self.head,
            self.rule,
            self.domain,
        )
    }
}

impl Evaluator for DatasetEvaluator<'_> {
    fn accuracy(&self, bank: &PromptBank) -> Result<f64> {
        Ok(self.report(bank)?.macro_avg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSimilarity {
    pub domain: DomainId,
    pub class: usize,
    /// Cosine to every prompt, row order `domain * K + class`.
    pub similarities: Vec<f64>,
    /// Positive-pair similarity minus the best negative.
    pub margin: f64,
}

impl ProbeSimilarity {
    pub fn positive_dominates(&self) -> bool {
        self.margin > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSimilarityReport {
    pub probes: Vec<ProbeSimilarity>,
    /// Fraction of probes whose (true domain, true class) prompt is strictly
    /// the most similar.
    pub dominance_fraction: f64,
    pub mean_margin: f64,
}

/// Similarity of each labeled probe image to every (domain, class) prompt.
pub fn disentanglement_report(
    bank: &PromptBank,
    backbone: &Backbone,
    probes: &[&Dataset],
) -> Result<PairSimilarityReport> {
    let k = bank.num_classes();
    let prompt_feats = bank.prompt_features(&backbone.text)?;
    let mut out = Vec::new();
    for ds in probes {
        let labels = ds.evaluation_labels()?;
        let feats = backbone.encode_images(ds.inputs())?;
        let sims = head::similarity_matrix(feats.view(), prompt_feats.view())?;
        for (row, &class) in sims.outer_iter().zip(labels) {
            let positive = ds.domain().index() * k + class;
            let best_negative = row
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != positive)
                .map(|(_, s)| *s)
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(ProbeSimilarity {
                domain: ds.domain(),
                class,
                similarities: row.to_vec(),
                margin: row[positive] - best_negative,
            });
        }
    }
    let n = out.len().max(1) as f64;
    Ok(PairSimilarityReport {
        dominance_fraction: out.iter().filter(|p| p.positive_dominates()).count() as f64 / n,
        mean_margin: out.iter().map(|p| p.margin).sum::<f64>() / n,
        probes: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceReport {
    pub variants: Vec<String>,
    pub labels: Vec<usize>,
    /// `confidences[image][variant]`: probability of the true class, 2K-way
    /// folded to K classes.
    pub confidences: Vec<Vec<f64>>,
}

impl ConfidenceReport {
    pub fn mean(&self, variant: usize) -> f64 {
        let n = self.confidences.len().max(1) as f64;
        self.confidences.iter().map(|row| row[variant]).sum::<f64>() / n
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("image\tlabel");
        for v in &self.variants {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
        for (i, (row, y)) in self.confidences.iter().zip(&self.labels).enumerate() {
            let _ = write!(out, "{i}\t{y}");
            for c in row {
                let _ = write!(out, "\t{c:.4}");
            }
            out.push('\n');
        }
        let _ = write!(out, "mean\t-");
        for v in 0..self.variants.len() {
            let _ = write!(out, "\t{:.4}", self.mean(v));
        }
        out.push('\n');
        out
    }

    /// Grouped bar chart, one group per image, one bar per variant.
    pub fn to_svg(&self) -> String {
        let bar = 14.0;
        let gap = 10.0;
        let height = 160.0;
        let group = bar * self.variants.len() as f64 + gap;
        let width = 40.0 + group * self.confidences.len() as f64;
        let palette = ["#7f7f7f", "#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{:.0}\">\n",
            height + 40.0
        );
        for (i, row) in self.confidences.iter().enumerate() {
            for (v, c) in row.iter().enumerate() {
                let x = 30.0 + i as f64 * group + v as f64 * bar;
                let h = c * height;
                let _ = writeln!(
                    svg,
                    "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{}\"/>",
                    10.0 + height - h,
                    bar - 2.0,
                    palette[v % palette.len()]
                );
            }
        }
        for (v, name) in self.variants.iter().enumerate() {
            let _ = writeln!(
                svg,
                "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"11\" fill=\"{}\">{name}</text>",
                30.0 + 110.0 * v as f64,
                height + 32.0,
                palette[v % palette.len()]
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// True-class confidence of each image under every named prompt bank.
pub fn confidence_report(
    variants: &[(&str, &PromptBank)],
    backbone: &Backbone,
    head: &HeadConfig,
    dataset: &Dataset,
) -> Result<ConfidenceReport> {
    if variants.is_empty() {
        return Err(Error::Input("confidence report needs at least one variant".into()));
    }
    let labels = dataset.evaluation_labels()?.to_vec();
    let feats = backbone.encode_images(dataset.inputs())?;
    let prompt_sets = variants
        .iter()
        .map(|(_, bank)| bank.prompt_features(&backbone.text))
        .collect::<Result<Vec<_>>>()?;
    let mut confidences = Vec::with_capacity(labels.len());
    for (f, &y) in feats.outer_iter().zip(&labels) {
        let mut row = Vec::with_capacity(variants.len());
        for prompts in &prompt_sets {
            let dist = head::marginalize_to_classes(&head::two_k_probabilities(f, prompts.view(), head.temperature)?)?;
            row.push(dist.probs()[y]);
        }
        confidences.push(row);
    }
    Ok(ConfidenceReport {
        variants: variants.iter().map(|(n, _)| n.to_string()).collect(),
        labels,
        confidences,
    })
}
