use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use daplkit_core::harness::{self, Command, ExperimentSpec};
use daplkit_core::PromptMode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Train,
    Eval,
    Ablate,
    Sweep,
    Diagnose,
    GenData,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Train => Command::Train,
            Cmd::Eval => Command::Eval,
            Cmd::Ablate => Command::Ablate,
            Cmd::Sweep => Command::Sweep,
            Cmd::Diagnose => Command::Diagnose,
            Cmd::GenData => Command::GenData,
        }
    }
}

/// Domain-adaptive prompt learning experiments on synthetic two-domain tasks.
///
/// Every config key can be overridden with `--set section.key=value`; the
/// fully resolved config is written to `<out>/resolved_config.toml` and
/// reproduces the run when passed back through `--config`.
#[derive(Debug, Parser)]
#[command(name = "daplkit", version)]
struct Cli {
    command: Cmd,
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Run seed; also the only seed for ablate and sweep.
    #[arg(long)]
    seed: Option<u64>,
    /// Pseudo-label threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Domain-agnostic context length.
    #[arg(long)]
    m1: Option<usize>,
    /// Domain-specific context length.
    #[arg(long)]
    m2: Option<usize>,
    /// Prompt mode: MANUAL, UNIFIED, CLASS_SPECIFIC, UNIFIED_DSC or CLASS_SPECIFIC_DSC.
    #[arg(long)]
    mode: Option<String>,
    /// Softmax temperature.
    #[arg(long)]
    temp: Option<f64>,
    /// Also write SVG charts.
    #[arg(long)]
    plots: bool,
    /// Checkpoint for eval and diagnose.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Generic override, repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

impl Cli {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .with_context(|| format!("--set expects section.key=value, got `{s}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        if let Some(seed) = self.seed {
            push("train.seed", seed.to_string());
            push("run.seeds", format!("[{seed}]"));
        }
        if let Some(tau) = self.tau {
            push("pseudo.tau", format!("{tau:?}"));
        }
        if let Some(m1) = self.m1 {
            push("prompt.m1", m1.to_string());
        }
        if let Some(m2) = self.m2 {
            push("prompt.m2", m2.to_string());
        }
        if let Some(mode) = &self.mode {
            let mode: PromptMode = mode.parse()?;
            push("prompt.mode", format!("\"{mode}\""));
        }
        if let Some(t) = self.temp {
            push("head.temperature", format!("{t:?}"));
        }
        if self.plots {
            push("run.plots", "true".into());
        }
        if let Some(p) = &self.checkpoint {
            let p = toml_string(&p.to_string_lossy());
            push("eval.checkpoint", p.clone());
            push("diagnose.checkpoint", p);
        }
        Ok(out)
    }
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn run(cli: Cli) -> Result<()> {
    let overrides = cli.overrides()?;
    let spec = ExperimentSpec::resolve(cli.command.into(), cli.config.as_deref(), cli.out.clone(), &overrides)?;
    let threads = harness::threads_from_env()?;
    let started = std::time::Instant::now();
    let output = harness::execute(&spec, threads).with_context(|| format!("{} failed", spec.command))?;
    print!("{}", output.summary);
    log::info!(
        "{} finished in {:.1}s; wrote {} files to {}",
        spec.command,
        started.elapsed().as_secs_f64(),
        output.files.len(),
        spec.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
