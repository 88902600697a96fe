//! Cosine similarity, temperature softmax and class decisions.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt_bank::DomainId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub temperature: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { temperature: 0.1 }
    }
}

impl HeadConfig {
    pub fn new(temperature: f64) -> Result<Self> {
        let cfg = Self { temperature };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive and finite (got {})",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelSpace {
    KWay,
    TwoKWay,
}

/// A probability vector over K classes or 2K (domain, class) prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Array1<f64>,
    space: LabelSpace,
}

impl ClassDistribution {
    /// Wraps `probs` after checking it is a distribution (within 1e-6).
    pub fn new(probs: Array1<f64>, space: LabelSpace) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Shape("empty distribution".into()));
        }
        if space == LabelSpace::TwoKWay && !probs.len().is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "2K-way distribution of odd length {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Numeric("distribution has negative or non-finite mass".into()));
        }
        let total = probs.sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric(format!("distribution sums to {total}")));
        }
        Ok(Self { probs, space })
    }

    pub fn probs(&self) -> ArrayView1<'_, f64> {
        self.probs.view()
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn max_prob(&self) -> f64 {
        self.probs[predict(self)]
    }
}

/// Cosine of the angle between two nonzero vectors, clamped to [-1, 1].
pub fn cosine_similarity(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    let c = a.dot(&b) / (na * nb);
    if !c.is_finite() {
        return Err(Error::Numeric("non-finite cosine similarity".into()));
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// Row-normalizes `feats`, returning the unit rows and the original norms.
pub fn normalize_rows(feats: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = feats.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(i) = norms.iter().position(|n| *n == 0.0 || !n.is_finite()) {
        return Err(Error::Degenerate(format!(
            "feature row {i} has zero or non-finite norm"
        )));
    }
    let unit = &feats / &norms.view().insert_axis(Axis(1));
    Ok((unit, norms))
}

/// Cosine similarity of every image row against every prompt row.
pub fn similarity_matrix(images: ArrayView2<'_, f64>, prompts: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (img, _) = normalize_rows(images)?;
    let (txt, _) = normalize_rows(prompts)?;
    Ok(img.dot(&txt.t()).mapv(|c| c.clamp(-1.0, 1.0)))
}

/// Numerically stable softmax of `logits`.
pub fn softmax(logits: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logit".into()));
    }
    let max = logits.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let exps = logits.mapv(|v| (v - max).exp());
    let total = exps.sum();
    Ok(exps / total)
}

fn similarities(img_feat: ArrayView1<'_, f64>, prompt_feats: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    prompt_feats
        .outer_iter()
        .map(|p| cosine_similarity(p, img_feat))
        .collect::<Result<Vec<_>>>()
        .map(Array1::from)
}

fn tempered(img_feat: ArrayView1<'_, f64>, prompt_feats: ArrayView2<'_, f64>, temperature: f64) -> Result<Array1<f64>> {
    HeadConfig::new(temperature)?;
    let sims = similarities(img_feat, prompt_feats)?;
    softmax((sims / temperature).view())
}

/// Softmax over all 2K (domain, class) prompts; rows ordered source
/// classes then target classes.
pub fn two_k_probabilities(
    img_feat: ArrayView1<'_, f64>,
    prompt_feats: ArrayView2<'_, f64>,
    temperature: f64,
) -> Result<ClassDistribution> {
    let n = prompt_feats.nrows();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "2K-way head needs an even number >= 2 of prompts, got {n}"
        )));
    }
    ClassDistribution::new(tempered(img_feat, prompt_feats, temperature)?, LabelSpace::TwoKWay)
}

/// K-way zero-shot softmax over one prompt per class.
pub fn zero_shot_probabilities(
    img_feat: ArrayView1<'_, f64>,
    prompt_feats: ArrayView2<'_, f64>,
    temperature: f64,
) -> Result<ClassDistribution> {
    if prompt_feats.nrows() == 0 {
        return Err(Error::Shape("zero-shot head needs at least one prompt".into()));
    }
    ClassDistribution::new(tempered(img_feat, prompt_feats, temperature)?, LabelSpace::KWay)
}

/// Arg-max index; ties go to the lowest index.
pub fn predict(dist: &ClassDistribution) -> usize {
    argmax(dist.probs())
}

pub(crate) fn argmax(values: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Folds a 2K-way distribution to K classes: `p[k] + p[K + k]`.
pub fn marginalize_to_classes(dist: &ClassDistribution) -> Result<ClassDistribution> {
    let n = dist.len();
    if !n.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "cannot marginalize odd-length distribution ({n})"
        )));
    }
    let k = n / 2;
    let p = dist.probs();
    let folded = Array1::from_shape_fn(k, |i| p[i] + p[k + i]);
    ClassDistribution::new(folded, LabelSpace::KWay)
}

/// How a K-way class decision is read from the 2K prompt scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalRule {
    /// 2K-way arg-max, then `index mod K`.
    #[default]
    ModK,
    /// K-way softmax over the prompts of the sample's own domain only.
    DomainOnly,
    /// 2K-way softmax folded to K classes, then arg-max.
    Marginalize,
}

impl FromStr for EvalRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "mod_k" | "modk" => Ok(EvalRule::ModK),
            "domain_only" | "target_only" => Ok(EvalRule::DomainOnly),
            "marginalize" => Ok(EvalRule::Marginalize),
            other => Err(Error::Config(format!("unknown eval rule `{other}`"))),
        }
    }
}

impl fmt::Display for EvalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalRule::ModK => "mod_k",
            EvalRule::DomainOnly => "domain_only",
            EvalRule::Marginalize => "marginalize",
        })
    }
}

/// Class decision for one image given all 2K prompt features.
pub fn classify(
    img_feat: ArrayView1<'_, f64>,
    prompt_feats: ArrayView2<'_, f64>,
    temperature: f64,
    rule: EvalRule,
    domain: DomainId,
) -> Result<usize> {
    let k = prompt_feats.nrows() / 2;
    match rule {
        EvalRule::ModK => Ok(predict(&two_k_probabilities(img_feat, prompt_feats, temperature)?) % k),
        EvalRule::Marginalize => Ok(predict(&marginalize_to_classes(&two_k_probabilities(
            img_feat,
            prompt_feats,
            temperature,
        )?)?)),
        EvalRule::DomainOnly => {
            let start = domain.index() * k;
            let block = prompt_feats.slice(ndarray::s![start..start + k, ..]);
            Ok(predict(&zero_shot_probabilities(img_feat, block, temperature)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cosine_examples() {
        let a = array![1.0, 2.0, 2.0];
        let b = array![2.0, 1.0, 2.0];
        assert!(close(cosine_similarity(a.view(), a.view()).unwrap(), 1.0, 1e-15));
        assert!(close(
            cosine_similarity(array![1.0, 0.0].view(), array![0.0, 3.0].view()).unwrap(),
            0.0,
            1e-15
        ));
        assert!(close(cosine_similarity(a.view(), b.view()).unwrap(), 8.0 / 9.0, 1e-15));
        assert!(close(
            cosine_similarity((&a * 2.5).view(), (&b * 0.1).view()).unwrap(),
            8.0 / 9.0,
            1e-15
        ));
        assert!(matches!(
            cosine_similarity(array![0.0, 0.0].view(), array![1.0, 0.0].view()),
            Err(Error::Degenerate(_))
        ));
    }

    /// Prompt features whose cosine with `e0` equals each entry of `sims`.
    fn prompts_with_sims(sims: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((sims.len(), 2), |(i, j)| {
            let c = sims[i];
            if j == 0 {
                c
            } else {
                (1.0 - c * c).max(0.0).sqrt()
            }
        })
    }

    #[test]
    fn two_k_examples() {
        let img = array![1.0, 0.0];
        let flat = prompts_with_sims(&[0.3; 24]);
        let d = two_k_probabilities(img.view(), flat.view(), 0.1).unwrap();
        assert!(d.probs().iter().all(|p| close(*p, 1.0 / 24.0, 1e-12)));

        // softmax((1, 0)) = (e/(1+e), 1/(1+e))
        let d = two_k_probabilities(img.view(), prompts_with_sims(&[1.0, 0.0]).view(), 1.0).unwrap();
        assert!(close(d.probs()[0], 0.731_058_578_630_004_9, 1e-12));
        assert!(close(d.probs()[1], 0.268_941_421_369_995_1, 1e-12));

        let d = two_k_probabilities(img.view(), prompts_with_sims(&[0.9, 0.1]).view(), 0.01).unwrap();
        assert!(d.probs()[0] > 1.0 - 1e-10);

        assert!(two_k_probabilities(img.view(), prompts_with_sims(&[0.9, 0.1, 0.2]).view(), 0.1).is_err());
        assert!(two_k_probabilities(img.view(), flat.view(), 0.0).is_err());
    }

    #[test]
    fn zero_shot_examples() {
        let img = array![1.0, 0.0];
        let d = zero_shot_probabilities(img.view(), prompts_with_sims(&[0.4, 0.4]).view(), 0.1).unwrap();
        assert_eq!(d.probs().to_vec(), vec![0.5, 0.5]);

        // softmax((1.6, 0.4, 0.0)), evaluated independently in double precision
        let d = zero_shot_probabilities(img.view(), prompts_with_sims(&[0.8, 0.2, 0.0]).view(), 0.5).unwrap();
        let want = [
            0.665_295_833_513_634_5,
            0.200_383_254_263_610_75,
            0.134_320_912_222_754_77,
        ];
        for (p, w) in d.probs().iter().zip(want) {
            assert!(close(*p, w, 1e-6), "{p} vs {w}");
        }

        let scaled =
            zero_shot_probabilities((&img * 3.0).view(), prompts_with_sims(&[0.8, 0.2, 0.0]).view(), 0.5).unwrap();
        assert_eq!(predict(&d), predict(&scaled));
        for (a, b) in d.probs().iter().zip(scaled.probs()) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn predict_examples() {
        let d = ClassDistribution::new(array![0.1, 0.7, 0.2], LabelSpace::KWay).unwrap();
        assert_eq!(predict(&d), 1);
        let d = ClassDistribution::new(array![0.5, 0.5], LabelSpace::KWay).unwrap();
        assert_eq!(predict(&d), 0);
        let d = ClassDistribution::new(array![0.0, 0.0, 1.0, 0.0], LabelSpace::KWay).unwrap();
        assert_eq!(predict(&d), 2);
    }

    #[test]
    fn marginalize_examples() {
        let d = ClassDistribution::new(Array1::from_elem(24, 1.0 / 24.0), LabelSpace::TwoKWay).unwrap();
        let m = marginalize_to_classes(&d).unwrap();
        assert_eq!(m.len(), 12);
        assert!(m.probs().iter().all(|p| close(*p, 1.0 / 12.0, 1e-15)));

        let d = ClassDistribution::new(array![0.2, 0.8, 0.0, 0.0], LabelSpace::TwoKWay).unwrap();
        assert_eq!(marginalize_to_classes(&d).unwrap().probs().to_vec(), vec![0.2, 0.8]);

        let d = ClassDistribution::new(array![0.3, 0.1, 0.2, 0.4], LabelSpace::TwoKWay).unwrap();
        let m = marginalize_to_classes(&d).unwrap();
        assert!(close(m.probs()[0], 0.5, 1e-15) && close(m.probs()[1], 0.5, 1e-15));

        let odd = ClassDistribution::new(array![0.5, 0.25, 0.25], LabelSpace::KWay).unwrap();
        assert!(matches!(marginalize_to_classes(&odd), Err(Error::Shape(_))));
    }

    #[test]
    fn sharper_temperature_is_more_confident() {
        let img = array![1.0, 0.0];
        let p = prompts_with_sims(&[0.7, 0.6, 0.1, 0.5]);
        let warm = zero_shot_probabilities(img.view(), p.view(), 1e-2).unwrap();
        let cold = zero_shot_probabilities(img.view(), p.view(), 1e-3).unwrap();
        assert!(cold.max_prob() >= warm.max_prob());
        assert_eq!(predict(&cold), 0);
    }

    #[test]
    fn classify_rules() {
        let img = array![1.0, 0.0];
        // source block (0.2, 0.9), target block (0.95, 0.1)
        let p = prompts_with_sims(&[0.2, 0.9, 0.95, 0.1]);
        assert_eq!(
            classify(img.view(), p.view(), 0.1, EvalRule::ModK, DomainId::Target).unwrap(),
            0
        );
        assert_eq!(
            classify(img.view(), p.view(), 0.1, EvalRule::DomainOnly, DomainId::Source).unwrap(),
            1
        );
        assert_eq!(
            classify(img.view(), p.view(), 0.1, EvalRule::DomainOnly, DomainId::Target).unwrap(),
            0
        );
        assert_eq!(
            classify(img.view(), p.view(), 0.1, EvalRule::Marginalize, DomainId::Target).unwrap(),
            0
        );
    }
}
