//! Resolved single runs: trajectory ensembles, oracles and their analysis.

use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use z2sim_core::oracle::{exact_correlator, noisy_correlator, TrotterOracle, DENSITY_MAX_QUBITS, HAMILTONIAN_MAX_QUBITS};
use z2sim_core::spectral::{dft, relative_mass_error, DftOptions, Window};
use z2sim_core::trajectory::{ensemble_workers, memory_estimate};
use z2sim_core::{
    build_evolution_circuit, build_lattice, compile_noisy, match_couplings, run_ensemble, CouplingParams, Error,
    LatticeSpec, NoiseModel, RecordKind, ResultRecord, RunKey, Shard, TrajectoryPlan,
};

use crate::config::{SitesPolicy, SweepConfig, Tuple};
use crate::error::{CliError, CliResult};

/// Everything needed to run one grid point.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub tuple: Tuple,
    pub n_steps: usize,
    pub n_traj: usize,
    pub master_seed: u64,
    pub source_site: usize,
    pub sites: Vec<usize>,
    pub shard: Shard,
    pub window: Window,
    pub model: NoiseModel,
    pub xi_anisotropy: Option<f64>,
    pub mem_limit: Option<u64>,
}

impl RunSpec {
    pub fn new(cfg: &SweepConfig, tuple: Tuple, sites: SitesPolicy, shard: Shard) -> CliResult<Self> {
        let lattice = build_lattice(tuple.n)?;
        let source_site = cfg.source_site.unwrap_or_else(|| lattice.default_source());
        if source_site >= lattice.n_sites() {
            return Err(CliError::Config(format!("source_site {source_site} outside the {0}x{0} lattice", tuple.n)));
        }
        let model = cfg.noise_model(&tuple);
        model.validate()?;
        let xi_anisotropy = match (cfg.xi_anisotropy, cfg.beta_e) {
            (Some(xi), _) => Some(xi),
            (None, Some(beta_e)) => match match_couplings(beta_e, tuple.beta_h) {
                Ok(m) => Some(m.xi),
                Err(Error::NoRoot { .. }) => None,
                Err(e) => return Err(e.into()),
            },
            (None, None) => None,
        };
        Ok(Self {
            tuple,
            n_steps: cfg.n_steps,
            n_traj: cfg.n_traj,
            master_seed: cfg.master_seed,
            source_site,
            sites: sites.sites(&lattice, source_site),
            shard,
            window: cfg.window,
            model,
            xi_anisotropy,
            mem_limit: cfg.mem_limit,
        })
    }

    pub fn lattice(&self) -> CliResult<LatticeSpec> {
        Ok(build_lattice(self.tuple.n)?)
    }

    pub fn params(&self) -> CliResult<CouplingParams> {
        Ok(CouplingParams::new(self.tuple.beta_h, self.tuple.dt, self.n_steps, self.source_site)?)
    }

    pub fn plan(&self) -> TrajectoryPlan {
        let mut plan = TrajectoryPlan::new(self.n_traj, self.master_seed, self.sites.clone()).with_shard(self.shard);
        plan.mem_limit = self.mem_limit;
        plan
    }

    pub fn run_key(&self) -> CliResult<RunKey> {
        Ok(RunKey::new(&self.lattice()?, &self.params()?, &self.model, &self.plan()))
    }

    pub fn memory_estimate(&self) -> u64 {
        let q = self.tuple.n * self.tuple.n;
        memory_estimate(q, ensemble_workers(q))
    }

    pub fn content_key(&self, kind: RecordKind) -> CliResult<String> {
        Ok(hash_key(kind, &self.run_key()?, self.shard, self.window))
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    kind: RecordKind,
    key: &'a RunKey,
    shard: Shard,
    window: Window,
}

fn hash_key(kind: RecordKind, key: &RunKey, shard: Shard, window: Window) -> String {
    let text = serde_json::to_string(&KeyMaterial { kind, key, shard, window }).expect("key serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Content address of a record: hash of what was run, not of the results.
pub fn content_key(record: &ResultRecord) -> String {
    hash_key(record.kind, &record.key, record.shard, record.window)
}

pub fn record_file_name(key: &str) -> String {
    format!("{key}.json")
}

/// Side information about a run that is not part of its record.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunInfo {
    pub memory_estimate: u64,
    pub peak_rss_bytes: Option<u64>,
}

/// Peak resident set size of this process, where the platform reports it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Runs the trajectory ensemble for `spec` and analyzes the source site.
pub fn simulate(spec: &RunSpec) -> CliResult<(ResultRecord, RunInfo)> {
    let start = Instant::now();
    let lattice = spec.lattice()?;
    let params = spec.params()?;
    let partial = run_ensemble(&lattice, &params, &spec.model, &spec.plan())?;
    let series = partial.series()?;
    let mut record = ResultRecord::new(RecordKind::Trajectory, partial.key, partial.shard, series);
    record.accumulator = Some(partial.accumulator);
    record.xi_anisotropy = spec.xi_anisotropy;
    analyze(&mut record, spec.window);
    record.wall_time_s = start.elapsed().as_secs_f64();
    let info = RunInfo {
        memory_estimate: spec.memory_estimate(),
        peak_rss_bytes: peak_rss_bytes(),
    };
    Ok((record, info))
}

/// Fills spectrum and mass for the source site; failures land in
/// `analysis_error`.
pub fn analyze(record: &mut ResultRecord, window: Window) {
    record.window = window;
    record.spectrum = None;
    record.mass = None;
    record.analysis_error = None;
    let options = DftOptions {
        window,
        ..DftOptions::default()
    };
    match dft(&record.series, record.series.source_site, options) {
        Ok(spectrum) => {
            record.mass = spectrum.extracted_mass;
            if record.mass.is_none() {
                record.analysis_error = Some(Error::NoSignal.to_string());
            }
            record.spectrum = Some(spectrum);
        }
        Err(e) => record.analysis_error = Some(e.to_string()),
    }
}

/// Sets `relative_error_pct` against a noiseless reference record.
pub fn attach_relative_error(record: &mut ResultRecord, reference: &ResultRecord) {
    if let (Some(m), Some(r)) = (record.mass, reference.mass) {
        record.relative_error_pct = relative_mass_error(m.mass, r.mass).ok();
    }
}

/// Which dense reference to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum OracleMethod {
    /// Continuous-time Hamiltonian evolution (noiseless only).
    Hamiltonian,
    /// Exact Trotter circuit, with the noise channel when noise is present.
    Circuit,
}

/// Dense reference correlator for `spec`, with noise handled exactly on the
/// density matrix.
pub fn oracle(spec: &RunSpec, method: OracleMethod) -> CliResult<ResultRecord> {
    let start = Instant::now();
    let lattice = spec.lattice()?;
    let params = spec.params()?;
    let q = lattice.n_sites();
    let noisy_run = !spec.model.is_deterministic() || spec.model.zeta > 0.0;
    let (kind, series) = if noisy_run {
        if method == OracleMethod::Hamiltonian {
            return Err(CliError::Config("the hamiltonian oracle is noiseless; use --method circuit".into()));
        }
        if q > DENSITY_MAX_QUBITS {
            return Err(Error::SizeLimit {
                what: "density-matrix oracle",
                qubits: q,
                limit: DENSITY_MAX_QUBITS,
            }
            .into());
        }
        let circuit = build_evolution_circuit(&lattice, &params, false)?;
        let noisy = compile_noisy(&circuit, &spec.model)?;
        (RecordKind::DensityOracle, noisy_correlator(&noisy, spec.source_site, &spec.sites, params.dt)?)
    } else {
        let series = match method {
            OracleMethod::Hamiltonian => {
                if q > HAMILTONIAN_MAX_QUBITS {
                    return Err(Error::SizeLimit {
                        what: "exact Hamiltonian oracle",
                        qubits: q,
                        limit: HAMILTONIAN_MAX_QUBITS,
                    }
                    .into());
                }
                let times: Vec<f64> = (0..=spec.n_steps).map(|k| k as f64 * params.dt).collect();
                exact_correlator(&lattice, &params, &times, &spec.sites)?.series
            }
            OracleMethod::Circuit => {
                TrotterOracle::new(&lattice, &params)?.correlator(spec.source_site, &spec.sites, spec.n_steps)
            }
        };
        (RecordKind::ExactOracle, series)
    };
    let mut key = spec.run_key()?;
    key.n_traj = 0;
    key.master_seed = 0;
    let mut record = ResultRecord::new(kind, key, Shard::WHOLE, series);
    record.xi_anisotropy = spec.xi_anisotropy;
    analyze(&mut record, spec.window);
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(record)
}
