//! Dense reference implementations for small systems.
//!
//! Everything here is written against plain index arithmetic and nalgebra,
//! independently of the statevector kernel, so it can serve as the reference
//! for that kernel, the compiler and the trajectory engine.
//!
//! Time convention: the Trotter circuit realizes `exp(+i H' dt)` per step for
//! the frame Hamiltonian `H' = -J sum ZZ - Γ sum X - J sum m Z`, so the exact
//! correlator below is evaluated with `U(t) = exp(+i H' t)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::gate::{GateMatrix, Support, C64};
use crate::lattice::{build_trotter_step, CouplingParams, LatticeSpec};
use crate::noise::NoisyCircuit;
use crate::series::{times, CorrelatorSeries};

pub const HAMILTONIAN_MAX_QUBITS: usize = 14;
pub const UNITARY_MAX_QUBITS: usize = 10;
pub const DENSITY_MAX_QUBITS: usize = 7;

fn check_size(what: &'static str, qubits: usize, limit: usize) -> Result<()> {
    if qubits > limit {
        return Err(Error::SizeLimit { what, qubits, limit });
    }
    Ok(())
}

/// Which basis the lattice Hamiltonian is written in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// `-J sum Z Z - Γ sum X - J sum m Z`, the basis the circuit acts in.
    Circuit,
    /// `-J sum X X - Γ sum Z - J sum m X`, the Hadamard-rotated form.
    Literal,
}

#[derive(Clone, Debug)]
pub struct DenseHamiltonian {
    pub n_qubits: usize,
    pub matrix: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

impl DenseHamiltonian {
    pub fn gap(&self) -> f64 {
        self.eigenvalues.get(1).map_or(0.0, |e1| e1 - self.eigenvalues[0])
    }

    /// Largest `||H v - E v||` over all pairs.
    pub fn max_residual(&self) -> f64 {
        (0..self.eigenvalues.len())
            .map(|k| {
                let v = self.eigenvectors.column(k);
                (&self.matrix * v - v * self.eigenvalues[k]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `sum_k exp(-i t E_k) |E_k><E_k|`.
    pub fn propagator(&self, t: f64) -> DMatrix<C64> {
        let v = self.eigenvectors.map(|x| C64::new(x, 0.0));
        let phases = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -t * e)),
        );
        let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, c)] * phases[c]);
        scaled * v.adjoint()
    }
}

/// Site sums of the lattice model: `(bond pairs, field sites, boundary (site, m))`.
fn terms(lattice: &LatticeSpec) -> (Vec<(usize, usize)>, usize, Vec<(usize, usize)>) {
    (lattice.bonds().collect(), lattice.n_sites(), lattice.boundary_sites.clone())
}

fn spin(index: usize, q: usize) -> f64 {
    if index >> q & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Circuit-frame Hamiltonian.
pub fn build_hamiltonian(lattice: &LatticeSpec, params: &CouplingParams) -> Result<DenseHamiltonian> {
    build_hamiltonian_in(lattice, params, Frame::Circuit)
}

pub fn build_hamiltonian_in(lattice: &LatticeSpec, params: &CouplingParams, frame: Frame) -> Result<DenseHamiltonian> {
    params.validate()?;
    let n = lattice.n_sites();
    check_size("hamiltonian", n, HAMILTONIAN_MAX_QUBITS)?;
    let (j, gamma) = (params.j(), params.gamma());
    let (bonds, n_sites, boundary) = terms(lattice);
    let dim = 1usize << n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for b in 0..dim {
        match frame {
            Frame::Circuit => {
                let mut d = 0.0;
                for &(p, q) in &bonds {
                    d -= j * spin(b, p) * spin(b, q);
                }
                for &(q, m) in &boundary {
                    d -= j * m as f64 * spin(b, q);
                }
                h[(b, b)] += d;
                for q in 0..n_sites {
                    h[(b ^ (1 << q), b)] -= gamma;
                }
            }
            Frame::Literal => {
                let d: f64 = (0..n_sites).map(|q| -gamma * spin(b, q)).sum();
                h[(b, b)] += d;
                for &(p, q) in &bonds {
                    h[(b ^ (1 << p) ^ (1 << q), b)] -= j;
                }
                for &(q, m) in &boundary {
                    h[(b ^ (1 << q), b)] -= j * m as f64;
                }
            }
        }
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(DenseHamiltonian {
        n_qubits: n,
        matrix: h,
        eigenvalues,
        eigenvectors,
    })
}

/// One spectral component `weight * exp(i omega t)` of a correlator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub omega: f64,
    pub weight: C64,
    /// Representative eigen-index pair `(k, m)` with `omega = E_m - E_k`.
    pub pair: (usize, usize),
}

/// Sums components whose frequencies agree within `tol`, largest first.
pub fn cluster_modes(mut raw: Vec<Mode>, tol: f64) -> Vec<Mode> {
    raw.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    // (cluster, anchor frequency, largest member weight)
    let mut out: Vec<(Mode, f64, f64)> = Vec::new();
    for m in raw {
        match out.last_mut() {
            Some((last, anchor, best)) if m.omega - *anchor <= tol => {
                if m.weight.norm() > *best {
                    *best = m.weight.norm();
                    last.pair = m.pair;
                }
                last.weight += m.weight;
            }
            _ => out.push((m, m.omega, m.weight.norm())),
        }
    }
    let mut out: Vec<Mode> = out.into_iter().map(|(m, _, _)| m).collect();
    out.sort_by(|a, b| b.weight.norm().total_cmp(&a.weight.norm()));
    out
}

/// The largest mode with `|omega| > dc_tol`.
pub fn dominant_mode(modes: &[Mode], dc_tol: f64) -> Option<Mode> {
    modes
        .iter()
        .filter(|m| m.omega.abs() > dc_tol)
        .max_by(|a, b| a.weight.norm().total_cmp(&b.weight.norm()))
        .copied()
}

#[derive(Clone, Debug)]
pub struct ExactCorrelator {
    pub series: CorrelatorSeries,
    /// Clustered amplitudes per recorded site.
    pub modes: Vec<Vec<Mode>>,
    pub hamiltonian: DenseHamiltonian,
}

const MODE_TOL: f64 = 1e-9;

/// `C_{i,s}(t) = <Ω| U(t)^† X_i U(t) X_s |Ω>` with `U(t) = exp(+i H' t)`.
pub fn exact_correlator(
    lattice: &LatticeSpec,
    params: &CouplingParams,
    times: &[f64],
    sites: &[usize],
) -> Result<ExactCorrelator> {
    let h = build_hamiltonian(lattice, params)?;
    let n = h.n_qubits;
    for &q in sites.iter().chain(std::iter::once(&params.source_site)) {
        if q >= n {
            return Err(Error::QubitOutOfRange { index: q, n_qubits: n });
        }
    }
    let v = &h.eigenvectors;
    let dim = v.nrows();
    let e = &h.eigenvalues;
    let phi: Vec<f64> = (0..dim).map(|k| v[(0, k)]).collect();
    let src = 1usize << params.source_site;
    let chi: Vec<f64> = (0..dim).map(|k| v[(src, k)]).collect();

    let mut values = Vec::new();
    let mut modes = Vec::new();
    for &site in sites {
        // M = V^T X_i V; X_i permutes rows.
        let xv = DMatrix::from_fn(dim, dim, |r, c| v[(r ^ (1 << site), c)]);
        let m = v.transpose() * xv;
        let mut raw = Vec::with_capacity(dim * dim);
        for k in 0..dim {
            for l in 0..dim {
                let a = phi[k] * m[(k, l)] * chi[l];
                if a.abs() > 1e-15 {
                    raw.push(Mode {
                        omega: e[l] - e[k],
                        weight: C64::new(a, 0.0),
                        pair: (k, l),
                    });
                }
            }
        }
        let row = times
            .iter()
            .map(|&t| {
                let right: Vec<C64> = (0..dim).map(|l| C64::from_polar(chi[l], e[l] * t)).collect();
                (0..dim)
                    .map(|k| {
                        let inner: C64 = (0..dim).map(|l| right[l] * m[(k, l)]).sum();
                        C64::from_polar(phi[k], -e[k] * t) * inner
                    })
                    .sum()
            })
            .collect();
        values.push(row);
        modes.push(cluster_modes(raw, MODE_TOL));
    }
    Ok(ExactCorrelator {
        series: CorrelatorSeries {
            source_site: params.source_site,
            sites: sites.to_vec(),
            dt: params.dt,
            times: times.to_vec(),
            values,
            std_err: None,
            n_traj_effective: 0,
        },
        modes,
        hamiltonian: h,
    })
}

/// Target bits of a gate and its local dimension.
fn local_layout(support: &Support) -> (Vec<usize>, usize) {
    let qs: Vec<usize> = support.qubits().collect();
    let d = 1 << qs.len();
    (qs, d)
}

/// `m <- G m` with `G` embedded on its targets; `conj` uses `G*` instead.
fn apply_left(m: &mut DMatrix<C64>, g: &GateMatrix, conj: bool) {
    let (qs, d) = local_layout(&g.support);
    let u = g.unitary.entries();
    let mask: usize = qs.iter().map(|q| 1 << q).sum();
    let dim = m.nrows();
    let idx = |base: usize, l: usize| -> usize {
        qs.iter()
            .enumerate()
            .fold(base, |acc, (bit, &q)| acc | ((l >> bit & 1) << q))
    };
    let mut old = vec![C64::new(0.0, 0.0); d];
    for c in 0..m.ncols() {
        for base in (0..dim).filter(|b| b & mask == 0) {
            for (l, o) in old.iter_mut().enumerate() {
                *o = m[(idx(base, l), c)];
            }
            for r in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for (l, o) in old.iter().enumerate() {
                    let x = u[r * d + l];
                    acc += if conj { x.conj() } else { x } * o;
                }
                m[(idx(base, r), c)] = acc;
            }
        }
    }
}

/// `m <- G m G^†`.
fn conjugate(m: &mut DMatrix<C64>, g: &GateMatrix) {
    apply_left(m, g, false);
    let mut t = m.transpose();
    apply_left(&mut t, g, true);
    *m = t.transpose();
}

/// Ordered product of the circuit's embedded gates.
pub fn dense_circuit_unitary(circuit: &Circuit) -> Result<DMatrix<C64>> {
    let n = circuit.n_qubits();
    check_size("dense unitary", n, UNITARY_MAX_QUBITS)?;
    let mut u = DMatrix::<C64>::identity(1 << n, 1 << n);
    for g in circuit.gates() {
        apply_left(&mut u, &g.matrix(), false);
    }
    Ok(u)
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    m.clone().singular_values().max()
}

/// `exp(i s H)` for a real symmetric `H`, through its eigendecomposition.
pub fn hermitian_exp(h: &DenseHamiltonian, s: f64) -> DMatrix<C64> {
    h.propagator(-s)
}

/// Eigen-decomposition of a unitary: `U w_j = exp(i phases[j]) w_j`.
#[derive(Clone, Debug)]
pub struct UnitarySpectrum {
    pub phases: Vec<f64>,
    pub vectors: DMatrix<C64>,
    /// Largest `||U w - λ w||`.
    pub residual: f64,
}

/// Diagonalizes a unitary through the Hermitian combination
/// `(U + U^†)/2 + c (U - U^†)/(2i)`, which shares its eigenvectors.
pub fn unitary_spectrum(u: &DMatrix<C64>) -> Result<UnitarySpectrum> {
    let dim = u.nrows();
    if dim != u.ncols() {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: u.ncols(),
        });
    }
    let ud = u.adjoint();
    let half = C64::new(0.5, 0.0);
    let c = C64::new(0.0, -0.5 * 0.618_033_988_749_894_9);
    let k = (u + &ud) * half + (u - &ud) * c;
    let k = (&k + k.adjoint()) * half;
    let eig = SymmetricEigen::new(k);
    let w = eig.eigenvectors;
    let mut phases = Vec::with_capacity(dim);
    let mut residual = 0.0f64;
    for j in 0..dim {
        let col = w.column(j);
        let uw = u * col;
        let lambda = col.dotc(&uw);
        residual = residual.max((&uw - col * lambda).norm());
        phases.push(lambda.arg());
    }
    if residual > 1e-8 {
        return Err(Error::InvalidParameter(format!(
            "unitary eigen-decomposition residual {residual:.3e} too large"
        )));
    }
    Ok(UnitarySpectrum {
        phases,
        vectors: w,
        residual,
    })
}

fn wrap_phase(x: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y - two_pi
    } else {
        y
    }
}

/// Dense single-step Trotter unitary with its eigenphases.
#[derive(Clone, Debug)]
pub struct TrotterOracle {
    pub dt: f64,
    pub step: DMatrix<C64>,
    pub spectrum: UnitarySpectrum,
}

impl TrotterOracle {
    pub fn new(lattice: &LatticeSpec, params: &CouplingParams) -> Result<Self> {
        let step = dense_circuit_unitary(&build_trotter_step(lattice, params)?)?;
        let spectrum = unitary_spectrum(&step)?;
        Ok(Self {
            dt: params.dt,
            step,
            spectrum,
        })
    }

    /// Quasi-energies `phase / dt`, ascending.
    pub fn quasi_energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.spectrum.phases.iter().map(|p| p / self.dt).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Clustered components of `C_{i,s}(k dt) = sum_m weight_m exp(i omega_m k dt)`,
    /// with `omega` folded into `(-π/dt, π/dt]`.
    pub fn correlator_modes(&self, source: usize, site: usize) -> Vec<Mode> {
        let w = &self.spectrum.vectors;
        let dim = w.nrows();
        let ph = &self.spectrum.phases;
        let wd = w.adjoint();
        let xw = DMatrix::from_fn(dim, dim, |r, c| w[(r ^ (1 << site), c)]);
        let m = &wd * xw;
        let src = 1usize << source;
        let mut raw = Vec::with_capacity(dim * dim);
        for j in 0..dim {
            let left = w[(0, j)].conj();
            for l in 0..dim {
                let a = left * m[(j, l)] * wd[(l, src)];
                if a.norm() > 1e-15 {
                    raw.push(Mode {
                        omega: wrap_phase(ph[l] - ph[j]) / self.dt,
                        weight: a,
                        pair: (j, l),
                    });
                }
            }
        }
        cluster_modes(raw, 1e-8)
    }

    /// Noiseless Trotter correlator from repeated dense steps.
    pub fn correlator(&self, source: usize, sites: &[usize], n_steps: usize) -> CorrelatorSeries {
        let dim = self.step.nrows();
        let mut psi1 = DVector::<C64>::zeros(dim);
        psi1[0] = C64::new(1.0, 0.0);
        let mut psi2 = DVector::<C64>::zeros(dim);
        psi2[1 << source] = C64::new(1.0, 0.0);
        let mut values = vec![Vec::with_capacity(n_steps + 1); sites.len()];
        for k in 0..=n_steps {
            if k > 0 {
                psi1 = &self.step * psi1;
                psi2 = &self.step * psi2;
            }
            for (row, &site) in values.iter_mut().zip(sites) {
                let c: C64 = (0..dim).map(|r| psi1[r ^ (1 << site)].conj() * psi2[r]).sum();
                row.push(c);
            }
        }
        CorrelatorSeries {
            source_site: source,
            sites: sites.to_vec(),
            dt: self.dt,
            times: times(self.dt, n_steps),
            values,
            std_err: None,
            n_traj_effective: 0,
        }
    }
}

/// A (possibly non-Hermitian) operator on `n_qubits` qubits evolved by channels.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub n_qubits: usize,
    pub matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// `|a><b|` for basis indices.
    pub fn outer_basis(n_qubits: usize, a: usize, b: usize) -> Result<Self> {
        check_size("density matrix", n_qubits, DENSITY_MAX_QUBITS)?;
        let dim = 1 << n_qubits;
        let mut matrix = DMatrix::zeros(dim, dim);
        matrix[(a, b)] = C64::new(1.0, 0.0);
        Ok(Self { n_qubits, matrix })
    }

    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim != matrix.ncols() || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: matrix.ncols(),
            });
        }
        let n_qubits = dim.trailing_zeros() as usize;
        check_size("density matrix", n_qubits, DENSITY_MAX_QUBITS)?;
        Ok(Self { n_qubits, matrix })
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).camax()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.min()
    }

    /// `Tr[X_q rho]`.
    pub fn expect_x(&self, q: usize) -> C64 {
        let dim = self.matrix.nrows();
        (0..dim).map(|r| self.matrix[(r ^ (1 << q), r)]).sum()
    }

    pub fn apply_unitary(&mut self, g: &GateMatrix) {
        conjugate(&mut self.matrix, g);
    }

    /// `D_k[ε]` on `support`: `(1-ε) ρ + ε (I/2^k) ⊗ Tr_S ρ`.
    pub fn depolarize(&mut self, support: &Support, epsilon: f64) {
        if epsilon == 0.0 {
            return;
        }
        let (qs, d) = local_layout(support);
        let mask: usize = qs.iter().map(|q| 1 << q).sum();
        let dim = self.matrix.nrows();
        let spread = |base: usize, l: usize| -> usize {
            qs.iter()
                .enumerate()
                .fold(base, |acc, (bit, &q)| acc | ((l >> bit & 1) << q))
        };
        let old = self.matrix.clone();
        self.matrix *= C64::new(1.0 - epsilon, 0.0);
        let w = epsilon / d as f64;
        for r0 in (0..dim).filter(|r| r & mask == 0) {
            for c0 in (0..dim).filter(|c| c & mask == 0) {
                let reduced: C64 = (0..d).map(|l| old[(spread(r0, l), spread(c0, l))]).sum();
                for l in 0..d {
                    self.matrix[(spread(r0, l), spread(c0, l))] += reduced * w;
                }
            }
        }
    }
}

/// Evolves `rho0` through the noisy circuit with exact channels. Returns the
/// initial operator followed by the operator after every step.
pub fn evolve_density_matrix(noisy: &NoisyCircuit, rho0: &DensityMatrix) -> Result<Vec<DensityMatrix>> {
    let n = noisy.n_qubits();
    check_size("density matrix", n, DENSITY_MAX_QUBITS)?;
    if rho0.n_qubits != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: rho0.n_qubits,
        });
    }
    let gates: Vec<GateMatrix> = noisy.base.gates().map(|g| g.matrix()).collect();
    let mut rho = rho0.clone();
    let mut out = vec![rho.clone()];
    let mut ins = noisy.insertions.iter().peekable();
    for range in noisy.base.step_ranges() {
        for pos in range {
            rho.apply_unitary(&gates[pos]);
            while let Some(i) = ins.next_if(|i| i.position <= pos + 1) {
                rho.depolarize(&i.support, i.epsilon);
            }
        }
        out.push(rho.clone());
    }
    Ok(out)
}

/// `Tr[X_i E_k(X_s |0><0|)]` after every step `k` of `noisy`.
pub fn noisy_correlator(noisy: &NoisyCircuit, source: usize, sites: &[usize], dt: f64) -> Result<CorrelatorSeries> {
    let rho0 = DensityMatrix::outer_basis(noisy.n_qubits(), 1 << source, 0)?;
    let trace = evolve_density_matrix(noisy, &rho0)?;
    let values = sites
        .iter()
        .map(|&q| trace.iter().map(|r| r.expect_x(q)).collect())
        .collect();
    Ok(CorrelatorSeries {
        source_site: source,
        sites: sites.to_vec(),
        dt,
        times: times(dt, trace.len() - 1),
        values,
        std_err: None,
        n_traj_effective: 0,
    })
}
