//! Self-describing result records (JSON) and time-series export (CSV).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::series::CorrelatorSeries;
use crate::spectral::{MassEstimate, Spectrum, Window};
use crate::trajectory::{RunKey, SeriesAccumulator, Shard, ShardPartial};

pub const SCHEMA_VERSION: u32 = 1;
pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// Trajectory ensemble, possibly one shard of it.
    Trajectory,
    /// Pooled from shard records.
    Merged,
    /// Exact Hamiltonian evolution.
    ExactOracle,
    /// Exact noisy channel on the density matrix.
    DensityOracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub software_version: String,
    pub kind: RecordKind,
    pub key: RunKey,
    pub shard: Shard,
    pub window: Window,
    /// Anisotropy matched to `beta_h`, when a Euclidean coupling was given.
    pub xi_anisotropy: Option<f64>,
    pub wall_time_s: f64,
    pub series: CorrelatorSeries,
    /// Exact sums for merging; absent for oracle records.
    pub accumulator: Option<SeriesAccumulator>,
    pub spectrum: Option<Spectrum>,
    pub mass: Option<MassEstimate>,
    /// Why `mass` is absent, e.g. "no signal".
    pub analysis_error: Option<String>,
    /// Against the paired noiseless record, in percent.
    pub relative_error_pct: Option<f64>,
}

impl ResultRecord {
    pub fn new(kind: RecordKind, key: RunKey, shard: Shard, series: CorrelatorSeries) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            software_version: SOFTWARE_VERSION.to_string(),
            kind,
            key,
            shard,
            window: Window::None,
            xi_anisotropy: None,
            wall_time_s: 0.0,
            series,
            accumulator: None,
            spectrum: None,
            mass: None,
            analysis_error: None,
            relative_error_pct: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Equality with wall time ignored.
    pub fn same_payload(&self, other: &ResultRecord) -> bool {
        let mut a = self.clone();
        a.wall_time_s = other.wall_time_s;
        &a == other
    }

    pub fn shard_partial(&self) -> Option<ShardPartial> {
        self.accumulator.as_ref().map(|acc| ShardPartial {
            key: self.key.clone(),
            shard: self.shard,
            accumulator: acc.clone(),
        })
    }
}

/// Long-format CSV: `site,k,t,re,im,se_re,se_im`.
pub fn write_series_csv<W: Write>(series: &CorrelatorSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["site", "k", "t", "re", "im", "se_re", "se_im"])?;
    for (i, site) in series.sites.iter().enumerate() {
        for (k, v) in series.values[i].iter().enumerate() {
            let (se_re, se_im) = series
                .std_err
                .as_ref()
                .map_or((String::new(), String::new()), |e| (e[i][k][0].to_string(), e[i][k][1].to_string()));
            w.write_record([
                site.to_string(),
                k.to_string(),
                series.times[k].to_string(),
                v.re.to_string(),
                v.im.to_string(),
                se_re,
                se_im,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
