//! Training runs, the three ablation protocols and the diagnostics pass.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::report::{AblationRow, AblationTable, SweepRow, SweepTable};
use crate::data::{self, Dataset};
use crate::diagnostics::{self, AccuracyReport, ConfidenceReport, DatasetEvaluator, PairSimilarityReport};
use crate::encoders::Backbone;
use crate::error::{Error, Result};
use crate::objectives::PseudoLabelSet;
use crate::prompt_bank::{DomainId, PromptBank, PromptMode};
use crate::trainer::{self, EpochMetrics};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "DAPLKIT_THREADS";

/// Worker count from `DAPLKIT_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer (got `{v}`)"
            ))),
        },
    }
}

/// One training run of the grid: prompt structure, threshold and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSpec {
    pub mode: PromptMode,
    pub m1: usize,
    pub m2: usize,
    pub tau: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub metrics: Vec<EpochMetrics>,
    /// Target accuracy of the final bank.
    pub target: AccuracyReport,
    pub accepted: usize,
    pub pseudo_labels: PseudoLabelSet,
    pub divergence: Option<String>,
    pub bank: PromptBank,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricRecord<'a> {
    pub variant: &'a str,
    pub m1: usize,
    pub m2: usize,
    pub tau: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub epoch: &'a EpochMetrics,
}

impl RunOutcome {
    pub fn records(&self) -> impl Iterator<Item = MetricRecord<'_>> {
        self.metrics.iter().map(move |m| MetricRecord {
            variant: self.spec.mode.as_str(),
            m1: self.spec.m1,
            m2: self.spec.m2,
            tau: self.spec.tau,
            seed: self.spec.seed,
            epoch: m,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseReport {
    pub disentanglement: PairSimilarityReport,
    pub confidence: ConfidenceReport,
}

/// Shared state for a command: the frozen backbone, the config and the
/// worker pool. Runs are dispatched in parallel and collected in grid order.
pub struct Harness {
    config: ExperimentConfig,
    backbone: Backbone,
    pool: rayon::ThreadPool,
}

impl Harness {
    pub fn new(config: ExperimentConfig, threads: Option<usize>) -> Result<Self> {
        config.validate()?;
        let backbone = Backbone::build(&config.backbone)?;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { config, backbone, pool })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Source and target sets for `seed`: the configured files, or a fresh
    /// synthetic draw.
    pub fn task(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let (source, target) = match (&self.config.data.source, &self.config.data.target) {
            (Some(s), Some(t)) => (data::load_dataset(s)?, data::load_dataset(t)?),
            _ => data::generate_synthetic_task(&self.config.synthetic_spec(seed)?)?,
        };
        for (ds, want) in [(&source, DomainId::Source), (&target, DomainId::Target)] {
            if ds.domain() != want {
                return Err(Error::Input(format!(
                    "expected a {want} dataset, found {}",
                    ds.domain()
                )));
            }
            if ds.num_classes() != self.backbone.num_classes() || ds.input_dim() != self.config.backbone.input_dim {
                return Err(Error::Input(format!(
                    "{want} dataset has K = {}, input_dim = {}; backbone expects {} and {}",
                    ds.num_classes(),
                    ds.input_dim(),
                    self.backbone.num_classes(),
                    self.config.backbone.input_dim
                )));
            }
        }
        Ok((source, target))
    }

    /// Trains one configuration and scores the final bank on the target set.
    pub fn train_run(&self, spec: RunSpec) -> Result<RunOutcome> {
        let (source, target) = self.task(spec.seed)?;
        self.train_on(spec, &source, &target)
    }

    pub fn train_on(&self, spec: RunSpec, source: &Dataset, target: &Dataset) -> Result<RunOutcome> {
        let prompt = self.config.prompt_config(spec.mode, spec.m1, spec.m2);
        let spec = RunSpec {
            mode: prompt.mode,
            m1: prompt.m1,
            m2: prompt.m2,
            ..spec
        };
        let cfg = self.config.train_config(prompt, spec.tau, spec.seed);
        let head = self.config.head_config();
        let evaluator = DatasetEvaluator::new(&self.backbone, target, head, self.config.head.eval_rule)?;
        let result = trainer::train(
            &cfg,
            source.training_view(),
            target.training_view(),
            &self.backbone,
            Some(&evaluator),
        )?;
        Ok(RunOutcome {
            spec,
            target: evaluator.report(&result.bank)?,
            accepted: result.pseudo_labels.accepted_count(),
            pseudo_labels: result.pseudo_labels,
            metrics: result.metrics,
            divergence: result.divergence,
            bank: result.bank,
        })
    }

    /// Runs every spec on the worker pool; output order follows input order.
    pub fn run_grid(&self, specs: &[RunSpec]) -> Vec<Result<RunOutcome>> {
        self.pool
            .install(|| specs.par_iter().map(|&s| self.train_run(s)).collect())
    }

    /// Context-structure ablation: every configured variant on every seed,
    /// with MANUAL always present as the baseline row.
    pub fn ablation_context(&self, seeds: &[u64]) -> Result<(AblationTable, Vec<RunOutcome>)> {
        if seeds.is_empty() {
            return Err(Error::Config("ablation needs at least one seed".into()));
        }
        let mut variants = vec![PromptMode::Manual];
        variants.extend(self.config.ablate.variants.iter().filter(|m| **m != PromptMode::Manual));
        let p = &self.config.prompt;
        let specs: Vec<RunSpec> = variants
            .iter()
            .flat_map(|&mode| {
                seeds.iter().map(move |&seed| RunSpec {
                    mode,
                    m1: p.m1,
                    m2: p.m2,
                    tau: self.config.pseudo.tau,
                    seed,
                })
            })
            .collect();
        let results = self.run_grid(&specs);
        let mut rows = Vec::new();
        let mut runs = Vec::new();
        for (mode, chunk) in variants.iter().zip(results.chunks(seeds.len())) {
            let (row, ok) = summarize(mode.as_str(), chunk);
            rows.push(AblationRow::from_summary(*mode, row));
            runs.extend(ok);
        }
        Ok((AblationTable::new(seeds.to_vec(), rows), runs))
    }

    /// Token-length sweep over `(M1, M2)` pairs in the structure of the
    /// configured mode; a pair with `M2 = 0` runs without the domain block.
    pub fn sweep_token_length(&self, pairs: &[(usize, usize)], seeds: &[u64]) -> Result<(SweepTable, Vec<RunOutcome>)> {
        let base = self.config.prompt.mode;
        if !base.is_learnable() {
            return Err(Error::Config("token-length sweep needs a learnable prompt mode".into()));
        }
        let points: Vec<(String, RunSpec)> = pairs
            .iter()
            .map(|&(m1, m2)| {
                let mode = if m2 > 0 {
                    base.with_domain_context()
                } else {
                    base.without_domain_context()
                };
                (
                    format!("M1={m1} M2={m2}"),
                    RunSpec {
                        mode,
                        m1,
                        m2,
                        tau: self.config.pseudo.tau,
                        seed: 0,
                    },
                )
            })
            .collect();
        self.sweep(points, seeds)
    }

    /// Pseudo-label threshold sweep in the configured mode.
    pub fn sweep_threshold(&self, taus: &[f64], seeds: &[u64]) -> Result<(SweepTable, Vec<RunOutcome>)> {
        let p = &self.config.prompt;
        let points = taus
            .iter()
            .map(|&tau| {
                (
                    format!("tau={tau}"),
                    RunSpec {
                        mode: p.mode,
                        m1: p.m1,
                        m2: p.m2,
                        tau,
                        seed: 0,
                    },
                )
            })
            .collect();
        self.sweep(points, seeds)
    }

    fn sweep(&self, points: Vec<(String, RunSpec)>, seeds: &[u64]) -> Result<(SweepTable, Vec<RunOutcome>)> {
        if seeds.is_empty() || points.is_empty() {
            return Err(Error::Config("sweep needs at least one point and one seed".into()));
        }
        let specs: Vec<RunSpec> = points
            .iter()
            .flat_map(|(_, p)| seeds.iter().map(move |&seed| RunSpec { seed, ..*p }))
            .collect();
        let results = self.run_grid(&specs);
        let mut rows = Vec::new();
        let mut runs = Vec::new();
        for ((label, point), chunk) in points.iter().zip(results.chunks(seeds.len())) {
            let (summary, ok) = summarize(label, chunk);
            let normalized = self.config.prompt_config(point.mode, point.m1, point.m2);
            let accepted = if summary.failed.is_none() && !ok.is_empty() {
                Some(ok.iter().map(|r| r.accepted as f64).sum::<f64>() / ok.len() as f64)
            } else {
                None
            };
            rows.push(SweepRow {
                label: label.clone(),
                mode: normalized.mode,
                m1: normalized.m1,
                m2: normalized.m2,
                tau: point.tau,
                accuracy: summary.mean,
                per_seed: summary.per_seed,
                accepted,
                failed: summary.failed,
            });
            runs.extend(ok);
        }
        Ok((SweepTable::new(seeds.to_vec(), rows), runs))
    }

    /// Positive-pair dominance of `banks[0]` on held-out probes of both
    /// domains, and true-class confidence of MANUAL plus every bank on the
    /// target probes.
    pub fn diagnose(&self, banks: &[(String, PromptBank)], seed: u64) -> Result<DiagnoseReport> {
        let (name, bank) = banks
            .first()
            .ok_or_else(|| Error::Input("diagnose needs a prompt bank".into()))?;
        let spec = self.config.synthetic_spec(seed)?;
        let probes = data::generate_probe_set(
            &spec,
            self.config.diagnose.probes_per_domain,
            self.config.diagnose.probe_seed,
        )?;
        log::info!("diagnosing `{name}` on {} probes per domain", probes.source.len());
        let disentanglement =
            diagnostics::disentanglement_report(bank, &self.backbone, &[&probes.source, &probes.target])?;
        let manual = self.manual_bank()?;
        let mut variants: Vec<(&str, &PromptBank)> = vec![("MANUAL", &manual)];
        variants.extend(banks.iter().map(|(n, b)| (n.as_str(), b)));
        let confidence =
            diagnostics::confidence_report(&variants, &self.backbone, &self.config.head_config(), &probes.target)?;
        Ok(DiagnoseReport {
            disentanglement,
            confidence,
        })
    }

    pub fn manual_bank(&self) -> Result<PromptBank> {
        let cfg = self.config.prompt_config(PromptMode::Manual, 0, 0);
        PromptBank::init(&cfg, &self.backbone.tokens, self.backbone.class_names(), 0)
    }

    /// Loads a checkpoint and checks it fits this backbone.
    pub fn load_bank(&self, path: &Path) -> Result<PromptBank> {
        if !path.exists() {
            return Err(Error::Checkpoint(format!(
                "checkpoint {} does not exist",
                path.display()
            )));
        }
        let (bank, cfg) = data::load_checkpoint(path)?;
        if cfg.num_classes != self.backbone.num_classes() || cfg.embed_dim != self.backbone.text.embed_dim() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has K = {}, E = {}; backbone has K = {}, E = {}",
                cfg.num_classes,
                cfg.embed_dim,
                self.backbone.num_classes(),
                self.backbone.text.embed_dim()
            )));
        }
        if *bank.class_tokens() != self.class_token_rows()? {
            return Err(Error::Checkpoint(
                "checkpoint class tokens do not match the backbone vocabulary".into(),
            ));
        }
        Ok(bank)
    }

    fn class_token_rows(&self) -> Result<ndarray::Array2<f64>> {
        crate::encoders::embed_tokens(&self.backbone.tokens, self.backbone.class_names())
    }

    pub fn evaluate(&self, bank: &PromptBank, dataset: &Dataset) -> Result<AccuracyReport> {
        diagnostics::evaluate(
            bank,
            &self.backbone,
            &self.config.head_config(),
            dataset,
            self.config.head.eval_rule,
        )
    }
}

pub(crate) struct Summary {
    pub mean: Option<f64>,
    pub per_seed: Vec<Option<f64>>,
    pub failed: Option<String>,
}

/// Folds per-seed results; any error or divergence marks the row failed.
fn summarize(label: &str, chunk: &[Result<RunOutcome>]) -> (Summary, Vec<RunOutcome>) {
    let mut failed = None;
    let mut per_seed = Vec::with_capacity(chunk.len());
    let mut ok = Vec::new();
    for r in chunk {
        match r {
            Ok(run) => {
                if let Some(msg) = &run.divergence {
                    failed.get_or_insert_with(|| format!("seed {}: {msg}", run.spec.seed));
                    per_seed.push(None);
                } else {
                    per_seed.push(Some(run.target.macro_avg));
                }
                ok.push(run.clone());
            }
            Err(e) => {
                failed.get_or_insert_with(|| e.to_string());
                per_seed.push(None);
            }
        }
    }
    if let Some(msg) = &failed {
        log::warn!("{label} failed: {msg}");
    }
    let mean = failed
        .is_none()
        .then(|| per_seed.iter().flatten().sum::<f64>() / per_seed.len() as f64);
    (Summary { mean, per_seed, failed }, ok)
}
