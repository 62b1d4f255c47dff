//! Command-line front end: configuration, stage orchestration and reporting.

pub mod config;
pub mod pipeline;
pub mod report;

use std::path::{Path, PathBuf};

use clap::ValueEnum;

use config::{ConfigError, RunConfig};
use pipeline::Context;
use report::{write_atomic, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    WeightCheck,
    PartitionCheck,
    VerifyHardy,
    Constants,
    Lambda1,
    OptimalitySweep,
    Evolve,
    FullAudit,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::WeightCheck => "weight-check",
            Subcommand::PartitionCheck => "partition-check",
            Subcommand::VerifyHardy => "verify-hardy",
            Subcommand::Constants => "constants",
            Subcommand::Lambda1 => "lambda1",
            Subcommand::OptimalitySweep => "optimality-sweep",
            Subcommand::Evolve => "evolve",
            Subcommand::FullAudit => "full-audit",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

/// Outcome of a run: the exit status and, unless configuration failed, the report.
pub struct Outcome {
    pub exit_code: i32,
    pub report: Option<Report>,
    pub error: Option<String>,
}

/// Exit status for an error escaping a stage.
pub fn error_exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<multihardy::Error>() {
        Some(multihardy::Error::Inconclusive(_) | multihardy::Error::ShiftRetryExceeded(_) | multihardy::Error::LinearAlgebra(_)) => 3,
        _ => 2,
    }
}

pub fn load_config(inv: &Invocation) -> anyhow::Result<RunConfig> {
    let mut overrides = inv.overrides.clone();
    if let Some(s) = inv.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &inv.out {
        overrides.push(format!("output_dir={}", serde_json::to_string(o)?));
    }
    RunConfig::load(inv.config.as_deref(), &overrides)
}

fn execute(cmd: Subcommand, cfg: &RunConfig, cx: &mut Context) -> anyhow::Result<()> {
    match cmd {
        Subcommand::WeightCheck => pipeline::weight_check(cx),
        Subcommand::PartitionCheck => pipeline::partition_check(cx),
        Subcommand::Constants => pipeline::constants(cx),
        Subcommand::VerifyHardy => {
            let n = cx.report.config_echo.poles.len();
            let cs = pipeline::c_values(cx, &pipeline::default_fractions(cfg.method, n))?;
            pipeline::verify_hardy(cx, &[(cfg.method, cs)])
        }
        Subcommand::Lambda1 => {
            let cs = pipeline::c_values(cx, &[0.8])?;
            pipeline::lambda1(cx, &cs)
        }
        Subcommand::OptimalitySweep => {
            let cs = pipeline::c_values(cx, &[1.2])?;
            pipeline::optimality_sweep(cx, &cs)
        }
        Subcommand::Evolve => {
            let cs = pipeline::c_values(cx, &[0.5, 2.0])?;
            pipeline::evolve(cx, &cs)
        }
        Subcommand::FullAudit => pipeline::full_audit(cx),
    }
}

/// Runs one subcommand end to end, writing `report.json` and CSV traces into the output
/// directory.
pub fn run(cmd: Subcommand, inv: &Invocation) -> Outcome {
    let cfg = match load_config(inv) {
        Ok(c) => c,
        Err(e) => return Outcome { exit_code: error_exit_code(&e), report: None, error: Some(format!("{e:#}")) },
    };
    let mut cx = Context { cfg: &cfg, out_dir: cfg.output_dir.clone(), quiet: inv.quiet, report: Report::new(cmd.name(), &cfg) };
    if let Err(e) = execute(cmd, &cfg, &mut cx) {
        return Outcome { exit_code: error_exit_code(&e), report: None, error: Some(format!("{e:#}")) };
    }
    let mut report = cx.report;
    report.finish();
    if let Err(e) = write_report(&cfg.output_dir, &report) {
        return Outcome { exit_code: 2, report: Some(report), error: Some(format!("{e:#}")) };
    }
    Outcome { exit_code: report.exit_code, report: Some(report), error: None }
}

pub fn write_report(dir: &Path, report: &Report) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    write_atomic(&dir.join("report.json"), text.as_bytes())
}

