//! Command-line layer of the conic Kähler–Einstein laboratory: configuration,
//! persistence and the command dispatch behind the `conic-ke` binary.

pub mod commands;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::*;
pub use error::CliError;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  invalid configuration or parameters
  2  Newton iteration diverged
  3  metric positivity lost
  4  continuation path stalled
  5  other numerical failure
  6  file system error";

#[derive(Parser)]
#[command(name = "conic-ke", version, about = "Conic Kähler–Einstein metrics on the projective line", after_help = EXIT_CODES)]
pub struct Cli {
    /// Worker threads for parameter scans.
    #[arg(long, global = true, env = "CONIC_KE_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GridFlags {
    /// Grid half-width in t = log|z|^2.
    #[arg(long = "grid-T")]
    grid_t: Option<f64>,
    /// Number of grid nodes (odd).
    #[arg(long = "grid-N")]
    grid_n: Option<usize>,
}

impl GridFlags {
    fn apply(&self, g: &mut GridConfig) {
        if let Some(t) = self.grid_t {
            g.t_max = t;
        }
        if let Some(n) = self.grid_n {
            g.n_nodes = n;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the radial Monge–Ampère equation for a football.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Follow the continuity path from tau = 0 to tau = mu.
    ContinuePath {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Smoothed solutions for decreasing delta and their distance to the conic one.
    SmoothFamily {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Bergman density bounds over cone fractions and powers.
    BergmanScan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Futaki invariant of the rotation field for a profile CSV.
    Futaki {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
        /// Profile with header t,phi_prime,phi_doubleprime.
        #[arg(long)]
        metric: Option<PathBuf>,
    },
    /// Log-Futaki obstruction table.
    LogFutaki {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Dirichlet energy of log-log and ball-cover cutoffs on flat cones.
    Capacity {
        #[command(flatten)]
        common: Common,
        /// Complex dimension.
        #[arg(long)]
        n: Option<u32>,
        /// Scale eps_bar.
        #[arg(long)]
        eps: Option<f64>,
        /// Cone fraction of the transverse factor.
        #[arg(long)]
        beta_bar: Option<f64>,
        #[arg(long, value_enum)]
        rule: Option<DeltaRule>,
        #[arg(long)]
        delta: Option<f64>,
        /// Monte-Carlo seed for the ball cover.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Volume ratios of small balls and tube volumes.
    VolumeScan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
    },
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Solve { common, grid, beta, delta, tau } => {
            let mut cfg: SolveConfig = load(common.config.as_deref())?;
            grid.apply(&mut cfg.grid);
            cfg.beta = beta.unwrap_or(cfg.beta);
            cfg.delta = delta.unwrap_or(cfg.delta);
            cfg.tau = tau.or(cfg.tau);
            solve(&cfg, &common.out)
        }
        Command::ContinuePath { common, grid, beta, delta } => {
            let mut cfg: PathConfig = load(common.config.as_deref())?;
            grid.apply(&mut cfg.grid);
            cfg.beta = beta.unwrap_or(cfg.beta);
            cfg.delta = delta.unwrap_or(cfg.delta);
            continue_path(&cfg, &common.out)
        }
        Command::SmoothFamily { common, grid, beta } => {
            let mut cfg: FamilyConfig = load(common.config.as_deref())?;
            grid.apply(&mut cfg.grid);
            cfg.beta = beta.unwrap_or(cfg.beta);
            smooth_family(&cfg, &common.out)
        }
        Command::BergmanScan { common, grid } => {
            let mut cfg: ScanConfig = load(common.config.as_deref())?;
            grid.apply(&mut cfg.grid);
            bergman_scan(&cfg, &common.out)
        }
        Command::Futaki { common, grid, metric } => {
            let mut cfg: FutakiConfig = load(common.config.as_deref())?;
            grid.apply(&mut cfg.grid);
            cfg.metric = metric.or(cfg.metric);
            futaki_cmd(&cfg, &common.out)
        }
        Command::LogFutaki { common, grid } => {
            let mut cfg: LogFutakiConfig = load(common.config.as_deref())?;
            grid.apply(&mut cfg.grid);
            log_futaki_cmd(&cfg, &common.out)
        }
        Command::Capacity { common, n, eps, beta_bar, rule, delta, seed } => {
            let mut cfg: CapacityConfig = load(common.config.as_deref())?;
            cfg.n = n.unwrap_or(cfg.n);
            cfg.eps = eps.unwrap_or(cfg.eps);
            cfg.beta_bar = beta_bar.unwrap_or(cfg.beta_bar);
            cfg.rule = rule.unwrap_or(cfg.rule);
            cfg.delta = delta.or(cfg.delta);
            if let Some(s) = seed {
                cfg.cover.get_or_insert_with(CoverConfig::default).seed = s;
            }
            capacity(&cfg, &common.out)
        }
        Command::VolumeScan { common, grid } => {
            let mut cfg: VolumeConfig = load(common.config.as_deref())?;
            grid.apply(&mut cfg.grid);
            volume_scan(&cfg, &common.out)
        }
    }
}

#[cfg(test)]
mod tests;
