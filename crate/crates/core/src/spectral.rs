//! Spectra of correlator series, mass extraction and coupling matching.
//!
//! The transform is `A_j = (1/n_t) sum_k C_k exp(-2πi jk/n_t)` at signed
//! frequencies `ω_j = 2πj / (n_t dt)`, so a component `exp(iωt)` lands on the
//! bin with `ω_j = ω`.

use std::f64::consts::PI;
use std::io::Write;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::C64;
use crate::series::CorrelatorSeries;

pub const MIN_SERIES_LEN: usize = 4;

/// Magnitudes at or below this are treated as no signal.
const NOISE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hann,
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Window::None),
            "hann" => Ok(Window::Hann),
            other => Err(Error::Parse(format!("unknown window '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DftOptions {
    pub window: Window,
    pub subtract_mean: bool,
    /// Quadratic interpolation of the mass peak.
    pub refine: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub bin: i64,
    pub omega: f64,
    pub magnitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    /// `|ω|` of the strongest non-DC peak, in lattice units.
    pub mass: f64,
    /// Signed frequency of the peak.
    pub omega: f64,
    /// Half a bin width.
    pub uncertainty: f64,
    pub refined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub site: usize,
    pub dt: f64,
    pub n_t: usize,
    pub options: DftOptions,
    /// Bin indices `j`, ascending from `-(n_t/2)`.
    pub bins: Vec<i64>,
    pub frequencies: Vec<f64>,
    pub coefficients: Vec<C64>,
    pub magnitudes: Vec<f64>,
    /// Local maxima, strongest first.
    pub peaks: Vec<Peak>,
    pub extracted_mass: Option<MassEstimate>,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        2.0 * PI / (self.n_t as f64 * self.dt)
    }

    /// CSV with columns `omega,magnitude,phase`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["omega", "magnitude", "phase"])?;
        for (k, c) in self.coefficients.iter().enumerate() {
            w.write_record([
                self.frequencies[k].to_string(),
                self.magnitudes[k].to_string(),
                c.arg().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn peaks_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.peaks)?)
    }
}

fn bin_range(n_t: usize) -> std::ops::Range<i64> {
    let lo = -((n_t / 2) as i64);
    lo..lo + n_t as i64
}

/// Transforms `C_{site,s}` of `series`.
pub fn dft(series: &CorrelatorSeries, site: usize, options: DftOptions) -> Result<Spectrum> {
    let values = series
        .site_values(site)
        .ok_or_else(|| Error::InvalidParameter(format!("site {site} was not recorded")))?;
    dft_values(values, series.dt, site, options)
}

pub fn dft_values(values: &[C64], dt: f64, site: usize, options: DftOptions) -> Result<Spectrum> {
    let n_t = values.len();
    if n_t < MIN_SERIES_LEN {
        return Err(Error::SeriesTooShort {
            len: n_t,
            min: MIN_SERIES_LEN,
        });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let mut buf = values.to_vec();
    if options.subtract_mean {
        let mean = buf.iter().sum::<C64>() / n_t as f64;
        buf.iter_mut().for_each(|v| *v -= mean);
    }
    if options.window == Window::Hann {
        for (k, v) in buf.iter_mut().enumerate() {
            *v *= 0.5 - 0.5 * (2.0 * PI * k as f64 / (n_t - 1) as f64).cos();
        }
    }
    FftPlanner::new().plan_fft_forward(n_t).process(&mut buf);
    let scale = 1.0 / n_t as f64;

    let bins: Vec<i64> = bin_range(n_t).collect();
    let coefficients: Vec<C64> = bins
        .iter()
        .map(|&j| buf[j.rem_euclid(n_t as i64) as usize] * scale)
        .collect();
    let width = 2.0 * PI / (n_t as f64 * dt);
    let frequencies = bins.iter().map(|&j| j as f64 * width).collect();
    let magnitudes: Vec<f64> = coefficients.iter().map(|c| c.norm()).collect();
    let peaks = find_peaks(&bins, &magnitudes, width);
    let mut spectrum = Spectrum {
        site,
        dt,
        n_t,
        options,
        bins,
        frequencies,
        coefficients,
        magnitudes,
        peaks,
        extracted_mass: None,
    };
    spectrum.extracted_mass = extract_mass(&spectrum, options.refine).ok();
    Ok(spectrum)
}

/// Bins strictly above one circular neighbour and not below the other.
fn find_peaks(bins: &[i64], mags: &[f64], width: f64) -> Vec<Peak> {
    let n = mags.len();
    let mut peaks: Vec<Peak> = (0..n)
        .filter(|&k| {
            let (l, r) = (mags[(k + n - 1) % n], mags[(k + 1) % n]);
            let m = mags[k];
            m > NOISE_FLOOR && m >= l && m >= r && (m > l || m > r)
        })
        .map(|k| Peak {
            bin: bins[k],
            omega: bins[k] as f64 * width,
            magnitude: mags[k],
        })
        .collect();
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.bin.cmp(&b.bin)));
    peaks
}

/// `|ω|` of the largest non-DC peak, optionally refined by a parabola through
/// the peak bin and its neighbours.
pub fn extract_mass(spectrum: &Spectrum, refine: bool) -> Result<MassEstimate> {
    let peak = spectrum.peaks.iter().find(|p| p.bin != 0).ok_or(Error::NoSignal)?;
    let width = spectrum.bin_width();
    let mut omega = peak.omega;
    let n = spectrum.n_t as i64;
    let mut refined = false;
    if refine {
        let lo = spectrum.bins[0];
        let at = |b: i64| spectrum.magnitudes[(b - lo).rem_euclid(n) as usize];
        let (a, b, c) = (at(peak.bin - 1), at(peak.bin), at(peak.bin + 1));
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            let delta = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
            omega += delta * width;
            refined = true;
        }
    }
    let mass = omega.abs().min(PI / spectrum.dt);
    if mass <= 0.0 {
        return Err(Error::NoSignal);
    }
    Ok(MassEstimate {
        mass,
        omega,
        uncertainty: width / 2.0,
        refined,
    })
}

/// Reconstructs the (windowed, mean-subtracted) input series.
pub fn inverse_dft(spectrum: &Spectrum) -> Vec<C64> {
    let n = spectrum.n_t;
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for (k, &j) in spectrum.bins.iter().enumerate() {
        buf[j.rem_euclid(n as i64) as usize] = spectrum.coefficients[k];
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf
}

/// `100 (noisy - reference) / reference`.
pub fn relative_mass_error(noisy_mass: f64, reference_mass: f64) -> Result<f64> {
    if reference_mass == 0.0 || !reference_mass.is_finite() {
        return Err(Error::ZeroReference);
    }
    if reference_mass < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "reference mass must be positive, got {reference_mass}"
        )));
    }
    Ok(100.0 * (noisy_mass - reference_mass) / reference_mass)
}

/// Bracket searched for the anisotropy.
pub const XI_BRACKET: (f64, f64) = (1e-6, 1e3);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatch {
    pub xi: f64,
    pub residual: f64,
    /// Set when more than one sign change was found; `xi` is the smallest.
    pub multiple_roots: bool,
}

/// `β_E/ξ - sqrt(β_H) exp(-β_E ξ)`.
pub fn matching_residual(beta_e: f64, beta_h: f64, xi: f64) -> f64 {
    beta_e / xi - beta_h.sqrt() * (-beta_e * xi).exp()
}

/// Smallest `ξ` in [`XI_BRACKET`] with `β_E/ξ = sqrt(β_H) exp(-β_E ξ)`.
pub fn match_couplings(beta_e: f64, beta_h: f64) -> Result<CouplingMatch> {
    if !(beta_e > 0.0) {
        return Err(Error::InvalidParameter(format!("beta_E must be positive, got {beta_e}")));
    }
    if !(beta_h >= 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "beta_H must be at least 1e-12, got {beta_h}"
        )));
    }
    let f = |x: f64| matching_residual(beta_e, beta_h, x);
    let (lo, hi) = XI_BRACKET;
    const GRID: usize = 20_000;
    let ratio = (hi / lo).ln() / GRID as f64;
    let xs: Vec<f64> = (0..=GRID).map(|k| lo * (ratio * k as f64).exp()).collect();
    let mut brackets = Vec::new();
    for w in xs.windows(2) {
        let (fa, fb) = (f(w[0]), f(w[1]));
        if fa == 0.0 {
            brackets.push((w[0], w[0]));
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            brackets.push((w[0], w[1]));
        }
    }
    let &(mut a, mut b) = brackets.first().ok_or(Error::NoRoot { lo, hi })?;
    let mut fa = f(a);
    while b - a > 0.0 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let xi = if f(a).abs() <= f(b).abs() { a } else { b };
    Ok(CouplingMatch {
        xi,
        residual: f(xi),
        multiple_roots: brackets.len() > 1,
    })
}
