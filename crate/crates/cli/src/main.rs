use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use multihardy_cli::{run, Invocation, Subcommand};

/// Numerical audits of weighted multipolar Hardy inequalities.
///
/// Exit status: 0 every verdict passed, 1 a verdict failed, 2 configuration or
/// precondition error, 3 inconclusive.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field by dotted path, e.g. `--set weight.gamma=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory for report.json and CSV traces.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress and the verdict summary on stderr.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let inv = Invocation { config: args.config, overrides: args.overrides, out: args.out, seed: args.seed, quiet: args.quiet };
    let outcome = run(args.subcommand, &inv);
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    if let (Some(r), false) = (&outcome.report, inv.quiet) {
        for v in &r.verdicts {
            eprintln!("{:<12} {:<14} {}: {}", format!("{:?}", v.status).to_lowercase(), v.section, v.check, v.detail);
        }
        eprintln!("status: {:?}, report in {}", r.status, r.config_echo.output_dir.display());
    }
    ExitCode::from(outcome.exit_code as u8)
}
