//! The six harness commands. Each writes a resolved-config snapshot first,
//! then its metrics and summaries into the output directory.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::config::{ExperimentConfig, SweepKind};
use super::report;
use super::runner::{Harness, RunOutcome, RunSpec};
use crate::data;
use crate::diagnostics::AccuracyReport;
use crate::error::{Error, Result};

pub const SNAPSHOT_FILE: &str = "resolved_config.toml";
pub const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Train,
    Eval,
    Ablate,
    Sweep,
    Diagnose,
    GenData,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Train,
        Command::Eval,
        Command::Ablate,
        Command::Sweep,
        Command::Diagnose,
        Command::GenData,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Ablate => "ablate",
            Command::Sweep => "sweep",
            Command::Diagnose => "diagnose",
            Command::GenData => "gen-data",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

/// A fully resolved invocation: command, config after overrides, output
/// directory.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub command: Command,
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    /// Applies `key=value` overrides on top of the config file (or the
    /// defaults when no file is given).
    pub fn resolve(
        command: Command,
        config_path: Option<&Path>,
        out_dir: PathBuf,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut config = match config_path {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for (k, v) in overrides {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(Self {
            command,
            config,
            out_dir,
        })
    }
}

/// Files written by a command, relative to the output directory.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    /// Human-readable summary, also written to disk.
    pub summary: String,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Out<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Input(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    fn metrics<'r>(&mut self, runs: impl IntoIterator<Item = &'r RunOutcome>) -> Result<()> {
        let path = self.dir.join(METRICS_FILE);
        let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
        for run in runs {
            for rec in run.records() {
                let line = serde_json::to_string(&rec).map_err(|e| Error::Input(e.to_string()))?;
                writeln!(f, "{line}")?;
            }
        }
        f.flush()?;
        self.files.push(PathBuf::from(METRICS_FILE));
        Ok(())
    }
}

/// Runs a command end to end.
pub fn execute(spec: &ExperimentSpec, threads: Option<usize>) -> Result<CommandOutput> {
    fs::create_dir_all(&spec.out_dir)?;
    let mut out = Out {
        dir: &spec.out_dir,
        files: Vec::new(),
    };
    let snapshot = format!("# daplkit {}\n{}", spec.command, spec.config.to_toml()?);
    out.write(SNAPSHOT_FILE, &snapshot)?;
    let cfg = &spec.config;
    let plots = cfg.run.plots;
    let summary = match spec.command {
        Command::GenData => {
            let harness = Harness::new(cfg.clone(), threads)?;
            let (source, target) = harness.task(cfg.train.seed)?;
            out.write("source.txt", &data::render_dataset(&source))?;
            out.write("target.txt", &data::render_dataset(&target))?;
            format!(
                "wrote {} source and {} target samples (K = {}, input_dim = {})\n",
                source.len(),
                target.len(),
                source.num_classes(),
                source.input_dim()
            )
        }
        Command::Train => {
            let harness = Harness::new(cfg.clone(), threads)?;
            let (source, target) = harness.task(cfg.train.seed)?;
            let spec = RunSpec {
                mode: cfg.prompt.mode,
                m1: cfg.prompt.m1,
                m2: cfg.prompt.m2,
                tau: cfg.pseudo.tau,
                seed: cfg.train.seed,
            };
            let run = harness.train_on(spec, &source, &target)?;
            out.metrics([&run])?;
            out.write("checkpoint.txt", &data::render_checkpoint(&run.bank))?;
            out.write("pseudo_labels.txt", &run.pseudo_labels.to_text())?;
            let source_report = harness.evaluate(&run.bank, &source)?;
            let summary = TrainSummary {
                variant: run.spec.mode.as_str(),
                m1: run.spec.m1,
                m2: run.spec.m2,
                tau: run.spec.tau,
                seed: run.spec.seed,
                accepted: run.accepted,
                divergence: run.divergence.clone(),
                target: run.target.clone(),
                source: source_report,
            };
            out.json("summary.json", &summary)?;
            if plots {
                out.write("loss.svg", &report::loss_curve(&run.metrics))?;
            }
            let text = summary.to_text();
            out.write("summary.txt", &text)?;
            text
        }
        Command::Eval => {
            let harness = Harness::new(cfg.clone(), threads)?;
            let path = cfg
                .eval
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("eval needs a checkpoint (eval.checkpoint or --checkpoint)".into()))?;
            let bank = harness.load_bank(path)?;
            let (source, target) = harness.task(cfg.train.seed)?;
            let summary = EvalSummary {
                variant: bank.config().mode.as_str(),
                source: harness.evaluate(&bank, &source)?,
                target: harness.evaluate(&bank, &target)?,
            };
            out.json("summary.json", &summary)?;
            let text = summary.to_text();
            out.write("summary.txt", &text)?;
            text
        }
        Command::Ablate => {
            let harness = Harness::new(cfg.clone(), threads)?;
            let (table, runs) = harness.ablation_context(&cfg.run.seeds)?;
            out.metrics(&runs)?;
            out.json("ablation.json", &table)?;
            if plots {
                out.write("ablation.svg", &table.to_svg())?;
            }
            let text = table.to_text();
            out.write("ablation.txt", &text)?;
            text
        }
        Command::Sweep => {
            let harness = Harness::new(cfg.clone(), threads)?;
            let (table, runs) = match cfg.sweep.kind {
                SweepKind::Threshold => harness.sweep_threshold(&cfg.sweep.taus, &cfg.run.seeds)?,
                SweepKind::TokenLength => harness.sweep_token_length(&cfg.sweep.token_pairs, &cfg.run.seeds)?,
            };
            out.metrics(&runs)?;
            out.json("sweep.json", &table)?;
            if plots {
                out.write("sweep.svg", &table.to_svg())?;
            }
            let text = table.to_text();
            out.write("sweep.txt", &text)?;
            text
        }
        Command::Diagnose => {
            let harness = Harness::new(cfg.clone(), threads)?;
            let path = cfg.diagnose.checkpoint.as_ref().ok_or_else(|| {
                Error::Config("diagnose needs a checkpoint (diagnose.checkpoint or --checkpoint)".into())
            })?;
            let mut banks = vec![(label_for(path, &harness)?, harness.load_bank(path)?)];
            for p in &cfg.diagnose.compare {
                banks.push((label_for(p, &harness)?, harness.load_bank(p)?));
            }
            let report = harness.diagnose(&banks, cfg.train.seed)?;
            out.json("disentanglement.json", &report.disentanglement)?;
            out.json("confidence.json", &report.confidence)?;
            out.write("confidence.txt", &report.confidence.to_table())?;
            if plots {
                out.write("confidence.svg", &report.confidence.to_svg())?;
            }
            let mut text = format!(
                "positive-pair dominance {:.4} (mean margin {:.4}) over {} probes\n",
                report.disentanglement.dominance_fraction,
                report.disentanglement.mean_margin,
                report.disentanglement.probes.len()
            );
            for (i, v) in report.confidence.variants.iter().enumerate() {
                text += &format!("mean true-class confidence {v}: {:.4}\n", report.confidence.mean(i));
            }
            out.write("diagnose.txt", &text)?;
            text
        }
    };
    Ok(CommandOutput {
        files: out.files,
        summary,
    })
}

fn label_for(path: &Path, harness: &Harness) -> Result<String> {
    let bank = harness.load_bank(path)?;
    Ok(format!(
        "{} ({})",
        bank.config().mode,
        path.file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default()
    ))
}

#[derive(Debug, Clone, Serialize)]
struct TrainSummary {
    variant: &'static str,
    m1: usize,
    m2: usize,
    tau: f64,
    seed: u64,
    accepted: usize,
    divergence: Option<String>,
    target: AccuracyReport,
    source: AccuracyReport,
}

fn accuracy_lines(out: &mut String, name: &str, r: &AccuracyReport) {
    out.push_str(&format!(
        "{name:<8} macro {:.4}  micro {:.4}  per class",
        r.macro_avg, r.micro
    ));
    for a in &r.per_class {
        match a {
            Some(a) => out.push_str(&format!(" {a:.3}")),
            None => out.push_str(" -"),
        }
    }
    out.push('\n');
}

impl TrainSummary {
    fn to_text(&self) -> String {
        let mut out = format!(
            "{} M1={} M2={} tau={} seed={} accepted pseudo labels {}\n",
            self.variant, self.m1, self.m2, self.tau, self.seed, self.accepted
        );
        accuracy_lines(&mut out, "target", &self.target);
        accuracy_lines(&mut out, "source", &self.source);
        if let Some(d) = &self.divergence {
            out.push_str(&format!("diverged: {d}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
struct EvalSummary {
    variant: &'static str,
    source: AccuracyReport,
    target: AccuracyReport,
}

impl EvalSummary {
    fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.variant);
        accuracy_lines(&mut out, "target", &self.target);
        accuracy_lines(&mut out, "source", &self.source);
        out
    }
}
