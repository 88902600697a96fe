use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::prompt_bank::DomainId;
use crate::rng::{self, stream, Rng};

/// Two-domain task: class `k` sits at `class_separation * e_k` in input
/// space; target samples are fresh source-like draws passed through the
/// domain shift `x -> R x + translation`, where `R` rotates every
/// consecutive coordinate plane `(0,1), (2,3), ...` by `rotation_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub source_samples: usize,
    pub target_samples: usize,
    pub input_dim: usize,
    pub class_separation: f64,
    pub rotation_deg: f64,
    /// Length `input_dim`, or empty for no translation.
    pub translation: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 {
            return err("synthetic task needs K >= 2".into());
        }
        if self.num_classes > self.input_dim {
            return err(format!(
                "K = {} classes do not fit in input_dim {}",
                self.num_classes, self.input_dim
            ));
        }
        if self.source_samples < self.num_classes || self.target_samples < self.num_classes {
            return err("source and target sets need at least K samples each".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return err("noise_std must be finite and non-negative".into());
        }
        if !self.class_separation.is_finite() || !self.rotation_deg.is_finite() {
            return err("separation and rotation must be finite".into());
        }
        if !self.translation.is_empty() && self.translation.len() != self.input_dim {
            return err(format!(
                "translation has length {}, expected {}",
                self.translation.len(),
                self.input_dim
            ));
        }
        Ok(())
    }

    /// `norm` times a unit direction drawn from `direction_seed`.
    pub fn random_translation(input_dim: usize, norm: f64, direction_seed: u64) -> Vec<f64> {
        if norm == 0.0 {
            return Vec::new();
        }
        let mut rng = rng::seeded(direction_seed, stream::DATA ^ 0x7472);
        let v = rng::gaussian_vector(&mut rng, input_dim, 1.0);
        let n = v.dot(&v).sqrt();
        (v * (norm / n)).to_vec()
    }

    /// A translation of length `norm` spread evenly over the coordinates
    /// that carry no class prototype (`num_classes..input_dim`).
    pub fn nuisance_translation(input_dim: usize, num_classes: usize, norm: f64) -> Result<Vec<f64>> {
        if norm == 0.0 {
            return Ok(Vec::new());
        }
        if num_classes >= input_dim {
            return Err(Error::Config(format!(
                "no free coordinates for a translation: K = {num_classes}, input_dim = {input_dim}"
            )));
        }
        let c = norm / ((input_dim - num_classes) as f64).sqrt();
        Ok((0..input_dim).map(|i| if i < num_classes { 0.0 } else { c }).collect())
    }

    fn prototype(&self, k: usize) -> Array1<f64> {
        let mut p = Array1::zeros(self.input_dim);
        p[k] = self.class_separation;
        p
    }

    fn shift(&self, x: &mut Array1<f64>) {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let mut i = 0;
        while i + 1 < x.len() {
            let (a, b) = (x[i], x[i + 1]);
            x[i] = c * a - s * b;
            x[i + 1] = s * a + c * b;
            i += 2;
        }
        if !self.translation.is_empty() {
            for (v, t) in x.iter_mut().zip(&self.translation) {
                *v += t;
            }
        }
    }

    fn draw(&self, rng: &mut Rng, n: usize, domain: DomainId) -> Dataset {
        let mut inputs = Array2::zeros((n, self.input_dim));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % self.num_classes;
            let noise = rng::gaussian_vector(rng, self.input_dim, self.noise_std);
            let mut x = self.prototype(y) + noise;
            if domain == DomainId::Target {
                self.shift(&mut x);
            }
            inputs.row_mut(i).assign(&x);
            labels.push(y);
        }
        Dataset::new(inputs, Some(labels), domain, self.num_classes).expect("labels are in range by construction")
    }
}

/// Source (labeled) and target (hidden labels) sets; classes are balanced
/// (`label = i mod K`) and rows are in generation order.
pub fn generate_synthetic_task(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    if spec.class_separation <= 0.0 && spec.noise_std > spec.class_separation {
        log::warn!(
            "synthetic task is likely infeasible: separation {} with noise {}",
            spec.class_separation,
            spec.noise_std
        );
    }
    let mut rng = rng::seeded(spec.seed, stream::DATA);
    let source = spec.draw(&mut rng, spec.source_samples, DomainId::Source);
    let target = spec.draw(&mut rng, spec.target_samples, DomainId::Target);
    Ok((source, target))
}

/// Held-out labeled draws of both domains, independent of the training draws.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub source: Dataset,
    pub target: Dataset,
}

pub fn generate_probe_set(spec: &SyntheticSpec, per_domain: usize, probe_seed: u64) -> Result<ProbeSet> {
    spec.validate()?;
    let mut rng = rng::seeded(probe_seed ^ spec.seed.rotate_left(17), stream::PROBE);
    Ok(ProbeSet {
        source: spec.draw(&mut rng, per_domain, DomainId::Source),
        target: spec.draw(&mut rng, per_domain, DomainId::Target),
    })
}
