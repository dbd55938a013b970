//! `mplab`: runs one experiment kind and writes its CSV tables and JSON
//! summary.
//!
//! Flags override values from `--config`; `MPLAB_WORKERS` overrides the
//! configured worker count. Exit status is 0 on success, 1 on invalid
//! input and 2 when a run detects an invariant violation or cannot write
//! its output.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mplab::ensemble::DistributionKind;
use mplab::experiment::{execute, ExitStatus, ExperimentConfig, ExperimentKind, GridSpec};
use mplab::Error;

#[derive(Debug, Parser)]
#[command(name = "mplab", version, about = "Square sample-covariance spectral experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resolvent identities and deterministic bounds with random removals.
    Identities(RunArgs),
    /// Quadratic forms Υ, Y, T_k, ε₁, ε₂ and K_kl.
    Qf(RunArgs),
    /// Monte-Carlo scan of the fluctuation Λ over a θ grid.
    LawScan(RunArgs),
    /// Coefficient recursion of the quadratic-form moments.
    QRecursion(RunArgs),
    /// Contour reconstruction of the counting function.
    Pleijel(RunArgs),
    /// Counting-function deviation from the limit law.
    Counting(RunArgs),
    /// Eigenvalue rigidity against classical locations.
    Rigidity(RunArgs),
    /// Stripped Rosenthal and Burkholder ratios.
    Inequalities(RunArgs),
    /// Limit-law Stieltjes transform, density and distribution function.
    MpEval(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Identities(a) => (ExperimentKind::Identities, a),
            Command::Qf(a) => (ExperimentKind::Qf, a),
            Command::LawScan(a) => (ExperimentKind::LawScan, a),
            Command::QRecursion(a) => (ExperimentKind::QRecursion, a),
            Command::Pleijel(a) => (ExperimentKind::Pleijel, a),
            Command::Counting(a) => (ExperimentKind::Counting, a),
            Command::Rigidity(a) => (ExperimentKind::Rigidity, a),
            Command::Inequalities(a) => (ExperimentKind::Inequalities, a),
            Command::MpEval(a) => (ExperimentKind::MpEval, a),
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Sectioned key = value configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Matrix sizes, comma separated.
    #[arg(long, value_name = "N,...", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// gaussian, rademacher or heavy-tail.
    #[arg(long)]
    dist: Option<DistributionKind>,
    /// Tail index of the heavy-tailed law.
    #[arg(long)]
    tail_index: Option<f64>,
    /// Truncation constant D.
    #[arg(long)]
    truncation: Option<f64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, env = "MPLAB_WORKERS")]
    workers: Option<usize>,
    /// θ grid, e.g. "E=2,-0.5;eta=20/N".
    #[arg(long)]
    grid: Option<String>,
    /// Kind-specific parameter, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

fn build_config(kind: ExperimentKind, args: RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            cfg.kind = kind;
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(n) = args.n {
        cfg.ns = n;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.dist {
        cfg.distribution.kind = d;
    }
    if let Some(t) = args.tail_index {
        cfg.distribution.tail_index = t;
    }
    if let Some(t) = args.truncation {
        cfg.distribution.truncation = t;
    }
    if let Some(o) = args.out {
        cfg.out_dir = o;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(g) = args.grid {
        cfg.grid = GridSpec::parse_inline(&g)?;
    }
    for p in args.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--param '{p}' lacks '='")))?;
        cfg.params.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitStatus::Validation.code() } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (kind, args) = cli.command.split();
    let cfg = match build_config(kind, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(ExitStatus::Validation.code() as u8);
        }
    };
    let outcome = execute(&cfg);
    for f in &outcome.files {
        println!("{}", f.display());
    }
    if let Some(msg) = &outcome.message {
        eprintln!("error: {msg}");
    }
    ExitCode::from(outcome.status.code() as u8)
}
