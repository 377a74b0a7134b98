//! Correlator time series shared by the trajectory engine, the oracles and
//! the analysis stage.

use serde::{Deserialize, Serialize};

use crate::gate::C64;

/// `C_{i,s}(k dt)` for a set of sites `i`, with optional ensemble errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorSeries {
    pub source_site: usize,
    pub sites: Vec<usize>,
    pub dt: f64,
    /// `k * dt` for `k = 0..=n_steps`.
    pub times: Vec<f64>,
    /// `values[site_index][k]`.
    pub values: Vec<Vec<C64>>,
    /// Standard error of the real and imaginary parts, `[site_index][k]`.
    /// `None` when fewer than two trajectories contributed.
    pub std_err: Option<Vec<Vec<[f64; 2]>>>,
    pub n_traj_effective: u64,
}

impl CorrelatorSeries {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn site_index(&self, site: usize) -> Option<usize> {
        self.sites.iter().position(|&s| s == site)
    }

    pub fn site_values(&self, site: usize) -> Option<&[C64]> {
        self.site_index(site).map(|i| self.values[i].as_slice())
    }

    pub fn site_std_err(&self, site: usize) -> Option<&[[f64; 2]]> {
        let i = self.site_index(site)?;
        self.std_err.as_ref().map(|e| e[i].as_slice())
    }

    /// Values at the source site, `C_{s,s}`.
    pub fn source_values(&self) -> Option<&[C64]> {
        self.site_values(self.source_site)
    }

    /// `sum_k |C_{i,s}(t_k)|` and a conservative standard error
    /// `sum_k sqrt(se_re^2 + se_im^2)`.
    pub fn envelope(&self, site: usize) -> Option<(f64, f64)> {
        let vals = self.site_values(site)?;
        let total = vals.iter().map(|v| v.norm()).sum();
        let err = self
            .site_std_err(site)
            .map_or(0.0, |e| e.iter().map(|[r, i]| r.hypot(*i)).sum());
        Some((total, err))
    }
}

pub(crate) fn times(dt: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|k| k as f64 * dt).collect()
}
