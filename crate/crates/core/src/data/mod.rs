//! Datasets, the synthetic two-domain generator, and on-disk formats.

mod checkpoint;
mod io;
mod synthetic;

pub use checkpoint::{load_checkpoint, parse_checkpoint, render_checkpoint, save_checkpoint};
pub use io::{load_dataset, parse_dataset, render_dataset, save_dataset};
pub use synthetic::{generate_probe_set, generate_synthetic_task, ProbeSet, SyntheticSpec};

use ndarray::{Array2, ArrayView2};

use crate::encoders::class_name;
use crate::error::{Error, Result};
use crate::prompt_bank::DomainId;

/// Samples of one domain. Target sets carry their labels only as hidden
/// evaluation labels, which the training view never exposes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Option<Vec<usize>>,
    domain: DomainId,
    num_classes: usize,
}

impl Dataset {
    /// `labels`, when present, are visible to training for the source domain
    /// and hidden for the target domain.
    pub fn new(inputs: Array2<f64>, labels: Option<Vec<usize>>, domain: DomainId, num_classes: usize) -> Result<Self> {
        if let Some(labels) = &labels {
            if labels.len() != inputs.nrows() {
                return Err(Error::Input(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    inputs.nrows()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
                return Err(Error::Index {
                    index: bad,
                    len: num_classes,
                });
            }
        }
        Ok(Self {
            inputs,
            labels,
            domain,
            num_classes,
        })
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn domain(&self) -> DomainId {
        self.domain
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.num_classes).map(class_name).collect()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    /// Ground truth for scoring; for target data these are the hidden labels.
    pub fn evaluation_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::LabelAccess("dataset carries no labels".into()))
    }

    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView {
            inputs: self.inputs.view(),
            labels: match self.domain {
                DomainId::Source => self.labels.as_deref(),
                DomainId::Target => None,
            },
            domain: self.domain,
            num_classes: self.num_classes,
        }
    }
}

/// What the trainer is allowed to see of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    inputs: ArrayView2<'a, f64>,
    labels: Option<&'a [usize]>,
    domain: DomainId,
    num_classes: usize,
}

impl<'a> TrainingView<'a> {
    pub fn inputs(&self) -> ArrayView2<'a, f64> {
        self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn domain(&self) -> DomainId {
        self.domain
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> Result<&'a [usize]> {
        self.labels
            .ok_or_else(|| Error::LabelAccess(format!("{} training view is unlabeled", self.domain.as_str())))
    }
}
