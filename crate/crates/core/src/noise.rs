//! Depolarizing and crosstalk noise, and compilation of ideal circuits into
//! the native noisy gate set.
//!
//! Every logical `ZZ` becomes four `√iSWAP` gates plus local rotations, with a
//! crosstalk unitary `U_ZZ[ζ]` before each `√iSWAP`. A one-qubit depolarizing
//! insertion follows every single-qubit gate and one two-qubit insertion
//! follows each logical `ZZ` block.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::gate::{diag4, Gate, GateKind, Mat4, Support, C64, ONE};
use crate::lattice::decompose_zz_to_sqiswap;
use crate::rng::RngStream;

/// Default `√iSWAP` duration in seconds.
pub const DEFAULT_T_GATE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub epsilon1: f64,
    pub epsilon2: f64,
    /// Crosstalk strength in 1/s.
    pub zeta: f64,
    /// `√iSWAP` duration in seconds.
    pub t_gate: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            epsilon1: 0.0,
            epsilon2: 0.0,
            zeta: 0.0,
            t_gate: DEFAULT_T_GATE,
        }
    }

    /// `ε₁ = ε₂ / 10`, default gate time.
    pub fn from_epsilon2(epsilon2: f64, zeta: f64) -> Result<Self> {
        let m = Self {
            epsilon1: epsilon2 / 10.0,
            epsilon2,
            zeta,
            t_gate: DEFAULT_T_GATE,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, e) in [("epsilon1", self.epsilon1), ("epsilon2", self.epsilon2)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {e}")));
            }
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::InvalidParameter(format!("zeta must be >= 0, got {}", self.zeta)));
        }
        if !(self.t_gate > 0.0 && self.t_gate.is_finite()) {
            return Err(Error::InvalidParameter(format!("T_gate must be > 0, got {}", self.t_gate)));
        }
        Ok(())
    }

    /// True when no depolarizing channel is active.
    pub fn is_deterministic(&self) -> bool {
        self.epsilon1 == 0.0 && self.epsilon2 == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_index(i: usize) -> Self {
        [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][i & 3]
    }

    pub fn gate_kind(self) -> Option<GateKind> {
        match self {
            Pauli::I => None,
            Pauli::X => Some(GateKind::X),
            Pauli::Y => Some(GateKind::Y),
            Pauli::Z => Some(GateKind::Z),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliString {
    pub labels: Vec<Pauli>,
    pub targets: Vec<usize>,
}

impl PauliString {
    /// Label index `j = j_0 + 4 j_1 + ...`, where `j_k` labels `targets[k]`.
    pub fn from_index(index: usize, targets: &[usize]) -> Self {
        let labels = (0..targets.len()).map(|k| Pauli::from_index(index >> (2 * k))).collect();
        Self {
            labels,
            targets: targets.to_vec(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.labels.iter().all(|&p| p == Pauli::I)
    }

    /// Non-identity factors as single-qubit gates.
    pub fn gates(&self) -> impl Iterator<Item = Gate> + '_ {
        self.labels
            .iter()
            .zip(&self.targets)
            .filter_map(|(p, &q)| p.gate_kind().map(|k| Gate::one(k, q)))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.labels {
            write!(f, "{p:?}")?;
        }
        Ok(())
    }
}

fn check_channel(n: usize, epsilon: f64) -> Result<()> {
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidParameter(format!("channel arity must be 1 or 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(())
}

/// Probability of each of the `4^n` Pauli labels under `D_n[ε]`; index 0 is
/// the identity.
pub fn depol_pmf(n: usize, epsilon: f64) -> Result<Vec<f64>> {
    check_channel(n, epsilon)?;
    let count = 1usize << (2 * n);
    let each = epsilon / count as f64;
    let mut pmf = vec![each; count];
    pmf[0] = 1.0 - (1.0 - 1.0 / count as f64) * epsilon;
    Ok(pmf)
}

/// Inverse-CDF draw of a label index with one uniform variate.
pub fn sample_pauli_index(n: usize, epsilon: f64, rng: &mut RngStream) -> usize {
    let count = 1usize << (2 * n);
    let u = rng.uniform();
    let p_identity = 1.0 - (1.0 - 1.0 / count as f64) * epsilon;
    if u < p_identity {
        return 0;
    }
    let each = epsilon / count as f64;
    (1 + ((u - p_identity) / each) as usize).min(count - 1)
}

/// Samples a Pauli string on `targets` (one or two qubits) from `D_n[ε]`.
pub fn sample_pauli(targets: &[usize], epsilon: f64, rng: &mut RngStream) -> Result<PauliString> {
    check_channel(targets.len(), epsilon)?;
    let index = sample_pauli_index(targets.len(), epsilon, rng);
    Ok(PauliString::from_index(index, targets))
}

/// Phase acquired by `|11>` through one crosstalk unitary: `-2π ζ T`.
pub fn uzz_phase(zeta: f64, t_gate: f64) -> f64 {
    -2.0 * PI * zeta * t_gate
}

/// `diag(1, 1, 1, exp(-i 2π ζ T))`.
pub fn uzz_matrix(zeta: f64, t_gate: f64) -> Mat4 {
    diag4([ONE, ONE, ONE, C64::from_polar(1.0, uzz_phase(zeta, t_gate))])
}

/// A depolarizing sampling point: applies after the first `position` base gates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Insertion {
    pub position: usize,
    pub support: Support,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyCircuit {
    pub base: Circuit,
    /// Sorted by position.
    pub insertions: Vec<Insertion>,
}

/// Gate accounting for a compiled circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisyGateCounts {
    pub one_qubit: usize,
    pub two_qubit: usize,
    pub depolarizing_1q: usize,
    pub depolarizing_2q: usize,
}

impl NoisyCircuit {
    pub fn n_qubits(&self) -> usize {
        self.base.n_qubits()
    }

    pub fn has_stochastic_noise(&self) -> bool {
        self.insertions.iter().any(|i| i.epsilon > 0.0)
    }

    pub fn counts(&self) -> NoisyGateCounts {
        let (one_qubit, two_qubit) = crate::circuit::count_gates(&self.base);
        let depolarizing_2q = self.insertions.iter().filter(|i| i.support.arity() == 2).count();
        NoisyGateCounts {
            one_qubit,
            two_qubit,
            depolarizing_1q: self.insertions.len() - depolarizing_2q,
            depolarizing_2q,
        }
    }

    /// Counts for the first step only (or the whole circuit without marks).
    pub fn counts_per_step(&self) -> NoisyGateCounts {
        let Some(range) = self.base.step_ranges().into_iter().next() else {
            return self.counts();
        };
        let gates: Vec<&Gate> = self.base.gates().collect();
        let step = &gates[range.clone()];
        let two_qubit = step.iter().filter(|g| g.arity() == 2).count();
        let ins = self
            .insertions
            .iter()
            .filter(|i| i.position > range.start && i.position <= range.end);
        let (d1, d2) = ins.fold((0, 0), |(a, b), i| match i.support.arity() {
            1 => (a + 1, b),
            _ => (a, b + 1),
        });
        NoisyGateCounts {
            one_qubit: step.len() - two_qubit,
            two_qubit,
            depolarizing_1q: d1,
            depolarizing_2q: d2,
        }
    }
}

/// Lowers `circuit` (gates RX, RY, RZ, X, ZZ) to the noisy native form.
pub fn compile_noisy(circuit: &Circuit, model: &NoiseModel) -> Result<NoisyCircuit> {
    model.validate()?;
    let mut base = Circuit::new(circuit.n_qubits());
    let mut insertions = Vec::new();
    let uzz = GateKind::Uzz(uzz_phase(model.zeta, model.t_gate));
    let gates: Vec<Gate> = circuit.gates().copied().collect();
    let ranges = circuit.step_ranges();

    let push_1q = |base: &mut Circuit, insertions: &mut Vec<Insertion>, g: Gate| -> Result<()> {
        base.push(g)?;
        insertions.push(Insertion {
            position: base.len(),
            support: g.support,
            epsilon: model.epsilon1,
        });
        Ok(())
    };

    for (i, range) in ranges.iter().enumerate() {
        for g in &gates[range.clone()] {
            match (g.kind, g.support) {
                (GateKind::Rx(_) | GateKind::Ry(_) | GateKind::Rz(_) | GateKind::X, _) => {
                    push_1q(&mut base, &mut insertions, *g)?;
                }
                (GateKind::Zz(alpha), Support::Two(a, b)) => {
                    for d in decompose_zz_to_sqiswap(alpha, a, b) {
                        if d.kind == GateKind::SqrtISwap {
                            base.push(Gate::two(uzz, a, b))?;
                            base.push(d)?;
                        } else {
                            push_1q(&mut base, &mut insertions, d)?;
                        }
                    }
                    insertions.push(Insertion {
                        position: base.len(),
                        support: g.support,
                        epsilon: model.epsilon2,
                    });
                }
                (kind, _) => return Err(Error::UnsupportedGate(kind.name().to_string())),
            }
        }
        if i < circuit.step_marks().len() {
            base.mark_step();
        }
    }
    Ok(NoisyCircuit { base, insertions })
}
