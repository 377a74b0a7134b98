//! Sweep configuration.
//!
//! The file is TOML. Every key is optional; unknown keys are rejected.
//!
//! ```toml
//! grid = [3]                              # lattice sides n
//! beta_h = [1.4, 1.6, 1.8]
//! dt = [0.25]
//! epsilon2 = [0.0, 1e-3, 2e-3, 3e-3, 4e-3, 5e-3]
//! zeta_crosstalk = [1.5e5, 3e5, 4.5e5, 6e5, 7.5e5]   # 1/s
//! n_steps = 50
//! n_traj = 1000
//! master_seed = 1
//! out = "results"
//! record_sites = "source"                 # source | symmetry | all
//! window = "none"                         # none | hann
//! epsilon1_ratio = 0.1                    # epsilon1 = ratio * epsilon2
//! t_gate = 1e-8                           # sqrt(iSWAP) duration, s
//! include_noiseless = true                # one baseline per (n, beta_h, dt)
//! # source_site = 4                       # default: centre site
//! # beta_e = 0.3                          # match an anisotropy to each beta_h
//! # xi_anisotropy = 1.0                   # or state it directly
//! # mem_limit = 4_000_000_000             # bytes
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use z2sim_core::noise::DEFAULT_T_GATE;
use z2sim_core::{LatticeSpec, NoiseModel, Window};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SitesPolicy {
    /// Only the source site.
    Source,
    /// The upper triangle `r <= c`.
    Symmetry,
    /// Every site.
    All,
}

impl SitesPolicy {
    pub fn sites(self, lattice: &LatticeSpec, source: usize) -> Vec<usize> {
        let mut sites = match self {
            SitesPolicy::Source => vec![source],
            SitesPolicy::Symmetry => lattice.symmetry_reduced_sites(),
            SitesPolicy::All => (0..lattice.n_sites()).collect(),
        };
        if !sites.contains(&source) {
            sites.insert(0, source);
        }
        sites
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub grid: Vec<usize>,
    pub beta_h: Vec<f64>,
    pub dt: Vec<f64>,
    pub epsilon2: Vec<f64>,
    pub zeta_crosstalk: Vec<f64>,
    pub n_steps: usize,
    pub n_traj: usize,
    pub master_seed: u64,
    pub out: PathBuf,
    pub record_sites: SitesPolicy,
    pub window: Window,
    pub epsilon1_ratio: f64,
    pub t_gate: f64,
    pub include_noiseless: bool,
    pub source_site: Option<usize>,
    pub beta_e: Option<f64>,
    pub xi_anisotropy: Option<f64>,
    pub mem_limit: Option<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: vec![3],
            beta_h: vec![1.4, 1.6, 1.8],
            dt: vec![0.25],
            epsilon2: vec![0.0, 1e-3, 2e-3, 3e-3, 4e-3, 5e-3],
            zeta_crosstalk: vec![1.5e5, 3e5, 4.5e5, 6e5, 7.5e5],
            n_steps: 50,
            n_traj: z2sim_core::trajectory::DEFAULT_N_TRAJ,
            master_seed: 1,
            out: PathBuf::from("results"),
            record_sites: SitesPolicy::Source,
            window: Window::None,
            epsilon1_ratio: 0.1,
            t_gate: DEFAULT_T_GATE,
            include_noiseless: true,
            source_site: None,
            beta_e: None,
            xi_anisotropy: None,
            mem_limit: None,
        }
    }
}

/// One point of the parameter grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tuple {
    pub n: usize,
    pub beta_h: f64,
    pub dt: f64,
    pub epsilon2: f64,
    pub zeta: f64,
}

impl Tuple {
    pub fn is_noiseless(&self) -> bool {
        self.epsilon2 == 0.0 && self.zeta == 0.0
    }

    pub fn baseline(&self) -> Tuple {
        Tuple {
            epsilon2: 0.0,
            zeta: 0.0,
            ..*self
        }
    }
}

impl SweepConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        let lists: [(&str, usize); 5] = [
            ("grid", self.grid.len()),
            ("beta_h", self.beta_h.len()),
            ("dt", self.dt.len()),
            ("epsilon2", self.epsilon2.len()),
            ("zeta_crosstalk", self.zeta_crosstalk.len()),
        ];
        for (name, len) in lists {
            if len == 0 {
                return Err(CliError::Config(format!("`{name}` must not be empty")));
            }
        }
        if let Some(&n) = self.grid.iter().find(|&&n| n == 0) {
            return Err(CliError::Config(format!("grid side must be >= 1, got {n}")));
        }
        positive("beta_h", &self.beta_h)?;
        positive("dt", &self.dt)?;
        for &e in &self.epsilon2 {
            if !(0.0..=1.0).contains(&e) {
                return Err(CliError::Config(format!("epsilon2 must lie in [0, 1], got {e}")));
            }
        }
        for &z in &self.zeta_crosstalk {
            if !(z >= 0.0 && z.is_finite()) {
                return Err(CliError::Config(format!("zeta_crosstalk must be >= 0, got {z}")));
            }
        }
        if self.n_steps == 0 {
            return Err(CliError::Config("n_steps must be >= 1".into()));
        }
        if self.n_traj == 0 {
            return Err(CliError::Config("n_traj must be >= 1".into()));
        }
        if !(self.epsilon1_ratio >= 0.0 && self.epsilon1_ratio * self.epsilon2.iter().cloned().fold(0.0, f64::max) <= 1.0)
        {
            return Err(CliError::Config(format!("epsilon1_ratio out of range: {}", self.epsilon1_ratio)));
        }
        if !(self.t_gate > 0.0 && self.t_gate.is_finite()) {
            return Err(CliError::Config(format!("t_gate must be > 0, got {}", self.t_gate)));
        }
        if let (Some(src), Some(&n)) = (self.source_site, self.grid.iter().min()) {
            if src >= n * n {
                return Err(CliError::Config(format!("source_site {src} outside the {n}x{n} lattice")));
            }
        }
        Ok(())
    }

    /// Noisy grid points, each `(n, beta_h, dt)` block preceded by its
    /// noiseless baseline when requested. Duplicates are dropped.
    pub fn tuples(&self) -> Vec<Tuple> {
        let mut out: Vec<Tuple> = Vec::new();
        let mut push = |t: Tuple| {
            if !out.contains(&t) {
                out.push(t);
            }
        };
        for &n in &self.grid {
            for &beta_h in &self.beta_h {
                for &dt in &self.dt {
                    let base = Tuple {
                        n,
                        beta_h,
                        dt,
                        epsilon2: 0.0,
                        zeta: 0.0,
                    };
                    if self.include_noiseless {
                        push(base);
                    }
                    for &epsilon2 in &self.epsilon2 {
                        for &zeta in &self.zeta_crosstalk {
                            push(Tuple { epsilon2, zeta, ..base });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn noise_model(&self, t: &Tuple) -> NoiseModel {
        NoiseModel {
            epsilon1: self.epsilon1_ratio * t.epsilon2,
            epsilon2: t.epsilon2,
            zeta: t.zeta,
            t_gate: self.t_gate,
        }
    }
}

fn positive(name: &str, values: &[f64]) -> CliResult<()> {
    match values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(v) => Err(CliError::Config(format!("{name} must be > 0, got {v}"))),
        None => Ok(()),
    }
}
