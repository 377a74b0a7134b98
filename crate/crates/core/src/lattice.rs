//! Dual-lattice geometry and the six-layer Trotter step.
//!
//! Sites of an `n x n` grid are indexed row-major, `row * n + col`. The circuit
//! works in the frame where bonds couple `Z Z` and the field is `X`:
//!
//! ```text
//! H' = -J sum_bonds Z Z - Gamma sum_sites X - J sum_boundary m Z
//! ```
//!
//! with `m` the number of missing neighbours of a boundary site. One step is
//! `RX(2 Gamma dt)` on every site, `RZ(2 J dt m)` on boundary sites, then
//! `ZZ(J dt)` on the four bond matchings (h-even, h-odd, v-even, v-odd).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::gate::Gate;

pub type Bond = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub n: usize,
    pub h_bonds_even: Vec<Bond>,
    pub h_bonds_odd: Vec<Bond>,
    pub v_bonds_even: Vec<Bond>,
    pub v_bonds_odd: Vec<Bond>,
    /// `(site, missing-neighbour count)` for every site with fewer than four
    /// neighbours.
    pub boundary_sites: Vec<(usize, usize)>,
}

impl LatticeSpec {
    pub fn n_sites(&self) -> usize {
        self.n * self.n
    }

    pub fn site(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }

    /// Bond layers in application order.
    pub fn bond_layers(&self) -> [&[Bond]; 4] {
        [
            &self.h_bonds_even,
            &self.h_bonds_odd,
            &self.v_bonds_even,
            &self.v_bonds_odd,
        ]
    }

    pub fn bonds(&self) -> impl Iterator<Item = Bond> + '_ {
        self.bond_layers().into_iter().flatten().copied()
    }

    pub fn n_bonds(&self) -> usize {
        self.bond_layers().iter().map(|l| l.len()).sum()
    }

    /// `(⌊n/2⌋, ⌊n/2⌋)`.
    pub fn default_source(&self) -> usize {
        self.site(self.n / 2, self.n / 2)
    }

    /// Sites `(r, c)` with `r <= c`; the upper triangle that, together with the
    /// diagonal mirror symmetry through a diagonal source, recovers all sites.
    pub fn symmetry_reduced_sites(&self) -> Vec<usize> {
        (0..self.n)
            .flat_map(|r| (r..self.n).map(move |c| (r, c)))
            .map(|(r, c)| self.site(r, c))
            .collect()
    }
}

pub fn build_lattice(n: usize) -> Result<LatticeSpec> {
    if n == 0 {
        return Err(Error::InvalidParameter("lattice side n must be >= 1".into()));
    }
    let idx = |r: usize, c: usize| r * n + c;
    let mut spec = LatticeSpec {
        n,
        h_bonds_even: Vec::new(),
        h_bonds_odd: Vec::new(),
        v_bonds_even: Vec::new(),
        v_bonds_odd: Vec::new(),
        boundary_sites: Vec::new(),
    };
    for r in 0..n {
        for c in 0..n.saturating_sub(1) {
            let bond = (idx(r, c), idx(r, c + 1));
            if c % 2 == 0 {
                spec.h_bonds_even.push(bond);
            } else {
                spec.h_bonds_odd.push(bond);
            }
        }
    }
    for r in 0..n.saturating_sub(1) {
        for c in 0..n {
            let bond = (idx(r, c), idx(r + 1, c));
            if r % 2 == 0 {
                spec.v_bonds_even.push(bond);
            } else {
                spec.v_bonds_odd.push(bond);
            }
        }
    }
    if n == 1 {
        // A lone site is treated as a corner.
        spec.boundary_sites.push((0, 2));
    } else {
        for r in 0..n {
            for c in 0..n {
                let missing = usize::from(r == 0)
                    + usize::from(r == n - 1)
                    + usize::from(c == 0)
                    + usize::from(c == n - 1);
                if missing > 0 {
                    spec.boundary_sites.push((idx(r, c), missing));
                }
            }
        }
    }
    Ok(spec)
}

/// Physical couplings and Trotter schedule: `J = 1/beta_H`, `Gamma = beta_H`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub beta_h: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub source_site: usize,
}

impl CouplingParams {
    pub fn new(beta_h: f64, dt: f64, n_steps: usize, source_site: usize) -> Result<Self> {
        let p = Self {
            beta_h,
            dt,
            n_steps,
            source_site,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default source site of `lattice`.
    pub fn for_lattice(lattice: &LatticeSpec, beta_h: f64, dt: f64, n_steps: usize) -> Result<Self> {
        Self::new(beta_h, dt, n_steps, lattice.default_source())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_h > 0.0 && self.beta_h.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta_H must be > 0, got {}", self.beta_h)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn j(&self) -> f64 {
        1.0 / self.beta_h
    }

    pub fn gamma(&self) -> f64 {
        self.beta_h
    }
}

/// One Trotter step as exactly six layers.
pub fn build_trotter_step(lattice: &LatticeSpec, params: &CouplingParams) -> Result<Circuit> {
    params.validate()?;
    let (j, gamma, dt) = (params.j(), params.gamma(), params.dt);
    let mut c = Circuit::new(lattice.n_sites());
    c.push_layer((0..lattice.n_sites()).map(|q| Gate::rx(q, 2.0 * gamma * dt)).collect())?;
    c.push_layer(
        lattice
            .boundary_sites
            .iter()
            .map(|&(q, m)| Gate::rz(q, 2.0 * j * dt * m as f64))
            .collect(),
    )?;
    for layer in lattice.bond_layers() {
        c.push_layer(layer.iter().map(|&(a, b)| Gate::zz(a, b, j * dt)).collect())?;
    }
    Ok(c)
}

/// `n_steps` Trotter steps with a step mark after each, optionally preceded by
/// `X` on the source site.
pub fn build_evolution_circuit(
    lattice: &LatticeSpec,
    params: &CouplingParams,
    with_source: bool,
) -> Result<Circuit> {
    let n_sites = lattice.n_sites();
    if params.source_site >= n_sites {
        return Err(Error::QubitOutOfRange {
            index: params.source_site,
            n_qubits: n_sites,
        });
    }
    let step = build_trotter_step(lattice, params)?;
    let mut c = Circuit::new(n_sites);
    if with_source {
        c.push_layer(vec![Gate::x(params.source_site)])?;
    }
    for _ in 0..params.n_steps {
        c.extend(&step)?;
        c.mark_step();
    }
    Ok(c)
}

/// CNOT(control, target) from two `√iSWAP` gates and local rotations, equal
/// to CNOT up to global phase.
///
/// Uses `exp(iπ/4 X⊗X) = √iSWAP · X_c · √iSWAP · X_c` and
/// `CNOT ∝ RZ_c(π/2) RX_t(π/2) H_c exp(iπ/4 X⊗X) H_c` with `H ∝ RY(π/2) RZ(π)`.
fn cnot_via_sqrt_iswap(control: usize, target: usize) -> [Gate; 10] {
    [
        Gate::rz(control, PI),
        Gate::ry(control, PI / 2.0),
        Gate::rx(control, PI),
        Gate::sqrt_iswap(control, target),
        Gate::rx(control, PI),
        Gate::sqrt_iswap(control, target),
        Gate::rz(control, PI),
        Gate::ry(control, PI / 2.0),
        Gate::rz(control, PI / 2.0),
        Gate::rx(target, PI / 2.0),
    ]
}

/// `exp(-iα Z⊗Z)` on `(a, b)` as CNOT · RZ_b(2α) · CNOT with each CNOT built
/// from two `√iSWAP` gates: four `√iSWAP` and seventeen local rotations.
pub fn decompose_zz_to_sqiswap(alpha: f64, a: usize, b: usize) -> Vec<Gate> {
    let mut out = Vec::with_capacity(21);
    out.extend(cnot_via_sqrt_iswap(a, b));
    out.push(Gate::rz(b, 2.0 * alpha));
    out.extend(cnot_via_sqrt_iswap(a, b));
    out
}
