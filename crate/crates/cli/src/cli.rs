use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use z2sim_core::{Shard, Window};

use crate::config::SitesPolicy;
use crate::run::OracleMethod;

#[derive(Debug, Parser)]
#[command(name = "z2sim", version, about = "Noisy Trotter simulation of the 2+1d Z2 gauge theory")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run only trajectories k with k mod N == I.
    #[arg(long, global = true, value_name = "I/N", value_parser = parse_shard)]
    pub shard: Option<Shard>,
    /// Master seed (overrides the config).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to Z2SIM_THREADS or all cores.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Refuse runs whose memory estimate exceeds this many bytes.
    #[arg(long, global = true, value_name = "BYTES")]
    pub mem_limit: Option<u64>,
    /// Window applied before the DFT.
    #[arg(long, global = true, value_name = "none|hann")]
    pub window: Option<Window>,
    /// Which sites to record.
    #[arg(long, global = true, value_enum)]
    pub sites: Option<SitesPolicy>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one parameter point and write its record.
    Simulate(PointArgs),
    /// Run every point of the configured grid, resuming where a previous run stopped.
    Sweep(SweepArgs),
    /// Pool shard records of one run into a single record.
    Merge(MergeArgs),
    /// Recompute the spectrum and mass of a record.
    Analyze(AnalyzeArgs),
    /// Dense reference correlator for small lattices.
    Oracle(OracleArgs),
    /// Time trajectories and gate kernels on this host.
    Bench(BenchArgs),
    /// Gate counts per Trotter step.
    Gatecount(GatecountArgs),
    /// Check the manifest against the records on disk.
    Fsck,
}

/// Single-point overrides. Without `--config`, unset values take the
/// defaults n=3, beta_h=1.6, dt=0.25 and no noise.
#[derive(Debug, Clone, Default, Args)]
pub struct PointArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta_h: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub epsilon2: Option<f64>,
    /// Crosstalk strength in 1/s.
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub source_site: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    /// Process only grid points i with i mod N == I.
    #[arg(long, value_name = "I/N", value_parser = parse_shard)]
    pub slice: Option<Shard>,
    /// Print the grid size and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MergeArgs {
    /// Shard records to pool.
    #[arg(required = true)]
    pub records: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    pub record: PathBuf,
    /// Site to transform; defaults to the source.
    #[arg(long)]
    pub site: Option<usize>,
    /// Subtract the series mean before transforming.
    #[arg(long)]
    pub subtract_mean: bool,
    /// Parabolic interpolation of the mass peak.
    #[arg(long)]
    pub refine: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long, value_enum, default_value = "hamiltonian")]
    pub method: OracleMethod,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Lattice sides to time.
    #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4])]
    pub grid: Vec<usize>,
    /// Trotter steps per timed trajectory.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// State sizes for the per-gate timings.
    #[arg(long, value_delimiter = ',', default_values_t = [12, 16, 20])]
    pub gate_qubits: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GatecountArgs {
    /// Lattice sides.
    #[arg(long, value_delimiter = ',', default_values_t = [3, 4, 5, 6])]
    pub n: Vec<usize>,
    /// Count the compiled noisy form.
    #[arg(long)]
    pub noisy: bool,
}

pub fn parse_shard(s: &str) -> Result<Shard, String> {
    let (i, n) = s.split_once('/').ok_or_else(|| format!("expected I/N, got `{s}`"))?;
    let i: usize = i.trim().parse().map_err(|_| format!("bad shard index `{i}`"))?;
    let n: usize = n.trim().parse().map_err(|_| format!("bad shard count `{n}`"))?;
    Shard::new(i, n).map_err(|e| e.to_string())
}
