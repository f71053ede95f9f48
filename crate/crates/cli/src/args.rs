use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "bilinear-dd", version, about = "Data-driven stabilization of bilinear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an open-loop experiment and write the data record.
    Experiment(ExperimentArgs),
    /// Data-based design from a recorded experiment.
    Design(DesignArgs),
    /// Model-based design from known system matrices.
    DesignMb(DesignMbArgs),
    /// Check a design by sampling and simulation.
    Verify(VerifyArgs),
    /// Re-run the command recorded in a run manifest.
    Replay(ReplayArgs),
}

/// Where the system matrices come from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SystemSource {
    /// System JSON with fields `A`, `B`, `D`.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Use the built-in two-state example system.
    #[arg(long)]
    pub example: bool,
}

/// Single `eps1` or a log-spaced sweep.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Eps1Choice {
    #[arg(long, value_parser = positive_f64, allow_hyphen_values = true)]
    pub eps1: Option<f64>,
    /// Log-spaced grid `lo:hi:points`.
    #[arg(long, value_name = "LO:HI:POINTS", value_parser = parse_sweep)]
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub source: SystemSource,
    /// Number of recorded samples.
    #[arg(long = "T", value_name = "T", value_parser = clap::value_parser!(u64).range(1..))]
    pub t: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Initial state, comma separated; drawn from the seed when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = positive_f64, allow_hyphen_values = true)]
    pub delta: f64,
    #[command(flatten)]
    pub eps1: Eps1Choice,
    /// Contraction rate; `1` asks for plain decrease.
    #[arg(long, default_value_t = 1.0, value_parser = unit_interval)]
    pub mu: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the solver iteration trace to this CSV (single designs only).
    #[arg(long, conflicts_with = "sweep")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DesignMbArgs {
    #[command(flatten)]
    pub source: SystemSource,
    #[command(flatten)]
    pub eps1: Eps1Choice,
    /// Data record to design from as well, for a side-by-side sweep.
    #[arg(long, requires_all = ["sweep", "delta"])]
    pub data: Option<PathBuf>,
    /// Bound on `‖D‖` for the data-based column of a side-by-side sweep.
    #[arg(long, value_parser = positive_f64)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[command(flatten)]
    pub source: SystemSource,
    /// Defaults to the bound stored in the design, else `‖D‖` of the system.
    #[arg(long, value_parser = positive_f64)]
    pub delta: Option<f64>,
    /// Ellipsoid samples per `D`.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    /// Sampled `D` matrices in the robustness check.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub num_d: u64,
    /// Simulated starts in the basin check.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub starts: u64,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive finite number, got {s}"))
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1], got {s}"))
    }
}

fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, points] = parts[..] else {
        return Err("expected LO:HI:POINTS".into());
    };
    let sweep = Sweep {
        lo: positive_f64(lo)?,
        hi: positive_f64(hi)?,
        points: points.parse().map_err(|e| format!("points: {e}"))?,
    };
    if sweep.hi < sweep.lo || sweep.points == 0 || (sweep.points > 1 && sweep.hi == sweep.lo) {
        return Err("need lo < hi and points >= 1 (lo = hi only with one point)".into());
    }
    Ok(sweep)
}
