//! Layered circuits, the plain-text gate listing and greedy gate fusion.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gate::{lift_to_pair, mul2, mul4, Gate, GateKind, GateMatrix, Support, Unitary};
use crate::state::StateVector;

/// Ordered list of moments; gates within one moment act on disjoint qubits.
///
/// `step_marks` holds flat gate counts at which a Trotter step ends, so a
/// caller can sample observables between steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    moments: Vec<Vec<Gate>>,
    step_marks: Vec<usize>,
    n_gates: usize,
    /// First moment index that later pushes may join.
    open_from: usize,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            ..Self::default()
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn moments(&self) -> &[Vec<Gate>] {
        &self.moments
    }

    pub fn len(&self) -> usize {
        self.n_gates
    }

    pub fn is_empty(&self) -> bool {
        self.n_gates == 0
    }

    pub fn step_marks(&self) -> &[usize] {
        &self.step_marks
    }

    /// Gates in program order.
    pub fn gates(&self) -> impl Iterator<Item = &Gate> + '_ {
        self.moments.iter().flatten()
    }

    /// Appends a gate, joining the last moment when its qubits are free there.
    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.support.validate(self.n_qubits)?;
        let joinable = self.moments.len() > self.open_from
            && self
                .moments
                .last()
                .is_some_and(|m| m.iter().all(|g| !overlaps(&g.support, &gate.support)));
        if joinable {
            self.moments.last_mut().unwrap().push(gate);
        } else {
            self.moments.push(vec![gate]);
        }
        self.n_gates += 1;
        Ok(())
    }

    /// Appends a whole layer as its own moment (possibly empty).
    pub fn push_layer(&mut self, layer: Vec<Gate>) -> Result<()> {
        let mut used = vec![false; self.n_qubits];
        for g in &layer {
            g.support.validate(self.n_qubits)?;
            for q in g.support.qubits() {
                if std::mem::replace(&mut used[q], true) {
                    return Err(Error::LayerConflict { qubit: q });
                }
            }
        }
        self.n_gates += layer.len();
        self.moments.push(layer);
        self.open_from = self.moments.len();
        Ok(())
    }

    /// Records a step boundary after all gates pushed so far.
    pub fn mark_step(&mut self) {
        self.step_marks.push(self.n_gates);
        self.open_from = self.moments.len();
    }

    /// Appends all moments and step marks of `other`.
    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch {
                left: self.n_qubits,
                right: other.n_qubits,
            });
        }
        let offset = self.n_gates;
        self.open_from = self.moments.len();
        for m in &other.moments {
            self.push_layer(m.clone())?;
        }
        self.step_marks.extend(other.step_marks.iter().map(|s| s + offset));
        Ok(())
    }

    /// Flat gate ranges between consecutive step marks. Gates after the last
    /// mark (or all gates when there are no marks) form a trailing segment.
    pub fn step_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.step_marks.len() + 1);
        let mut start = 0;
        for &m in &self.step_marks {
            out.push(start..m);
            start = m;
        }
        if start < self.n_gates {
            out.push(start..self.n_gates);
        }
        out
    }

    /// Applies every gate in order.
    pub fn apply_to(&self, state: &mut StateVector) -> Result<()> {
        for g in self.gates() {
            state.apply(&g.matrix())?;
        }
        Ok(())
    }

    /// Plain-text listing: a `qubits N` header, `moment` separators, `step`
    /// markers and one gate per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("qubits {}\n", self.n_qubits);
        let mut count = 0;
        let mut marks = self.step_marks.iter().peekable();
        while marks.next_if(|&&m| m == 0).is_some() {
            out.push_str("step\n");
        }
        for m in &self.moments {
            out.push_str("moment\n");
            for g in m {
                let _ = writeln!(out, "{g}");
                count += 1;
                while marks.next_if(|&&m| m == count).is_some() {
                    out.push_str("step\n");
                }
            }
        }
        out
    }

    /// Parses the output of [`Circuit::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty circuit text".into()))?;
        let n_qubits = header
            .strip_prefix("qubits ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad header `{header}`")))?;
        let mut circuit = Circuit::new(n_qubits);
        let mut current: Option<Vec<Gate>> = None;
        let mut pending_marks = Vec::new();
        for line in lines {
            match line {
                "moment" => {
                    if let Some(m) = current.take() {
                        circuit.push_layer(m)?;
                    }
                    current = Some(Vec::new());
                }
                "step" => pending_marks.push(
                    circuit.n_gates + current.as_ref().map_or(0, Vec::len),
                ),
                gate => current
                    .get_or_insert_with(Vec::new)
                    .push(gate.parse::<Gate>()?),
            }
        }
        if let Some(m) = current {
            circuit.push_layer(m)?;
        }
        circuit.step_marks = pending_marks;
        Ok(circuit)
    }
}

fn overlaps(a: &Support, b: &Support) -> bool {
    a.qubits().any(|q| b.contains(q))
}

/// Gate counts by arity.
pub fn count_gates(circuit: &Circuit) -> (usize, usize) {
    circuit.gates().fold((0, 0), |(one, two), g| match g.arity() {
        1 => (one + 1, two),
        _ => (one, two + 1),
    })
}

/// Greedy left-to-right fusion with at most two-qubit support.
///
/// A gate is merged into the latest gate touching its qubits when no later
/// gate touches the combined support. A two-qubit gate also absorbs earlier
/// gates that are the latest on all their qubits and lie inside its support.
#[derive(Debug)]
pub struct Fuser {
    slots: Vec<Option<FusedEntry>>,
    last: Vec<Option<usize>>,
}

#[derive(Clone, Copy, Debug)]
struct FusedEntry {
    matrix: GateMatrix,
    /// Set while the entry is a single untouched input gate.
    original: Option<Gate>,
}

impl Fuser {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            slots: Vec::new(),
            last: vec![None; n_qubits],
        }
    }

    pub fn push_gate(&mut self, gate: Gate) {
        self.push_entry(FusedEntry {
            matrix: gate.matrix(),
            original: Some(gate),
        });
    }

    pub fn push_matrix(&mut self, matrix: GateMatrix) {
        self.push_entry(FusedEntry {
            matrix,
            original: None,
        });
    }

    fn push_entry(&mut self, entry: FusedEntry) {
        let support = entry.matrix.support;
        let mut owners: Vec<usize> = support.qubits().filter_map(|q| self.last[q]).collect();
        owners.sort_unstable();
        owners.dedup();

        if let [j] = owners[..] {
            let prev = self.slots[j].as_ref().unwrap().matrix.support;
            if let Some((u0, u1)) = union_pair(&prev, &support) {
                let covered = [u0, u1].into_iter().flatten().all(|q| self.last[q].is_none_or(|o| o == j));
                if covered {
                    let prev_entry = self.slots[j].take().unwrap();
                    let merged = compose(&prev_entry.matrix, &entry.matrix, u0, u1);
                    for q in merged.support.qubits() {
                        self.last[q] = Some(j);
                    }
                    self.slots[j] = Some(FusedEntry {
                        matrix: merged,
                        original: None,
                    });
                    return;
                }
            }
        }

        let mut entry = entry;
        if let Support::Two(a, b) = support {
            for &j in &owners {
                let prev = self.slots[j].as_ref().unwrap().matrix.support;
                let absorbable = prev.qubits().all(|q| support.contains(q) && self.last[q] == Some(j));
                if absorbable {
                    let prev_entry = self.slots[j].take().unwrap();
                    entry = FusedEntry {
                        matrix: compose(&prev_entry.matrix, &entry.matrix, Some(a), Some(b)),
                        original: None,
                    };
                }
            }
        }
        let idx = self.slots.len();
        for q in entry.matrix.support.qubits() {
            self.last[q] = Some(idx);
        }
        self.slots.push(Some(entry));
    }

    /// Fused gate matrices in execution order.
    pub fn finish_matrices(self) -> Vec<GateMatrix> {
        self.slots.into_iter().flatten().map(|e| e.matrix).collect()
    }

    /// Fused gates; untouched inputs keep their original kind.
    pub fn finish_gates(self) -> Vec<Gate> {
        self.slots
            .into_iter()
            .flatten()
            .map(|e| {
                e.original.unwrap_or_else(|| Gate {
                    kind: match e.matrix.unitary {
                        Unitary::One(m) => GateKind::Matrix1(m),
                        Unitary::Two(m) => GateKind::Matrix2(m),
                    },
                    support: e.matrix.support,
                })
            })
            .collect()
    }
}

/// Ordered qubit pair covering both supports, if it has at most two qubits.
/// A single-qubit union is returned as `(Some(q), None)`.
fn union_pair(a: &Support, b: &Support) -> Option<(Option<usize>, Option<usize>)> {
    let mut qs: Vec<usize> = a.qubits().collect();
    for q in b.qubits() {
        if !qs.contains(&q) {
            qs.push(q);
        }
    }
    match qs[..] {
        [q] => Some((Some(q), None)),
        [q0, q1] => Some((Some(q0), Some(q1))),
        _ => None,
    }
}

/// `later * earlier` expressed on the union support.
fn compose(earlier: &GateMatrix, later: &GateMatrix, u0: Option<usize>, u1: Option<usize>) -> GateMatrix {
    match (u0, u1) {
        (Some(q), None) => match (&earlier.unitary, &later.unitary) {
            (Unitary::One(e), Unitary::One(l)) => GateMatrix::one(q, mul2(l, e)),
            _ => unreachable!("single-qubit union with a two-qubit gate"),
        },
        (Some(a), Some(b)) => {
            let e = lift_to_pair(earlier, a, b);
            let l = lift_to_pair(later, a, b);
            GateMatrix::two(a, b, mul4(&l, &e))
        }
        _ => unreachable!(),
    }
}

/// Fuses each step segment of `circuit` independently, keeping step marks.
pub fn fuse(circuit: &Circuit) -> Circuit {
    let gates: Vec<Gate> = circuit.gates().copied().collect();
    let mut out = Circuit::new(circuit.n_qubits);
    let ranges = circuit.step_ranges();
    for (i, range) in ranges.iter().enumerate() {
        let mut fuser = Fuser::new(circuit.n_qubits);
        for g in &gates[range.clone()] {
            fuser.push_gate(*g);
        }
        for g in fuser.finish_gates() {
            out.push(g).expect("fused gates stay on valid qubits");
        }
        if i < circuit.step_marks.len() {
            out.mark_step();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::{phase_distance, rz, C64};
    use crate::testutil::random_state;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gate(n: usize, rng: &mut ChaCha8Rng) -> Gate {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let t = rng.random::<f64>() * 6.0 - 3.0;
        match rng.random_range(0..7) {
            0 => Gate::rx(a, t),
            1 => Gate::ry(a, t),
            2 => Gate::rz(a, t),
            3 => Gate::zz(a, b, t),
            4 => Gate::sqrt_iswap(a, b),
            5 => Gate::two(GateKind::Uzz(t), a, b),
            _ => Gate::x(a),
        }
    }

    #[test]
    fn push_packs_disjoint_gates_into_one_moment() {
        let mut c = Circuit::new(3);
        c.push(Gate::x(0)).unwrap();
        c.push(Gate::x(1)).unwrap();
        c.push(Gate::zz(1, 2, 0.1)).unwrap();
        assert_eq!(c.moments().len(), 2);
        assert_eq!(count_gates(&c), (2, 1));
        assert!(c.push(Gate::x(3)).is_err());
    }

    #[test]
    fn layer_rejects_repeated_qubit() {
        let mut c = Circuit::new(3);
        let err = c.push_layer(vec![Gate::zz(0, 1, 0.1), Gate::x(1)]).unwrap_err();
        assert_eq!(err, Error::LayerConflict { qubit: 1 });
    }

    #[test]
    fn consecutive_rz_fuse_to_sum() {
        let mut c = Circuit::new(1);
        c.push(Gate::rz(0, 0.3)).unwrap();
        c.push(Gate::rz(0, 0.5)).unwrap();
        let f = fuse(&c);
        assert_eq!(f.len(), 1);
        let g = f.gates().next().unwrap();
        let GateKind::Matrix1(m) = g.kind else { panic!("expected fused matrix") };
        assert!(phase_distance(&m, &rz(0.8)) < 1e-12);
    }

    #[test]
    fn rx_zz_rx_fuse_into_one_two_qubit_gate() {
        let mut c = Circuit::new(2);
        c.push(Gate::rx(0, 0.4)).unwrap();
        c.push(Gate::zz(0, 1, 0.7)).unwrap();
        c.push(Gate::rx(1, -0.2)).unwrap();
        let f = fuse(&c);
        assert_eq!(f.len(), 1);
        // Dense oracle: product of the three 4x4 matrices in basis index order.
        let dense = |g: &Gate| {
            let mut m = [C64::new(0.0, 0.0); 16];
            for col in 0..4 {
                let mut s = StateVector::basis(2, col).unwrap();
                s.apply(&g.matrix()).unwrap();
                for row in 0..4 {
                    m[row * 4 + col] = s.amplitudes()[row];
                }
            }
            m
        };
        let gs: Vec<Gate> = c.gates().copied().collect();
        let expected = mul4(&dense(&gs[2]), &mul4(&dense(&gs[1]), &dense(&gs[0])));
        let got = dense(f.gates().next().unwrap());
        assert!(phase_distance(&expected, &got) < 1e-9);
        assert!(expected.iter().zip(&got).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn empty_circuit_fuses_to_empty() {
        let c = Circuit::new(4);
        assert!(fuse(&c).is_empty());
    }

    #[test]
    fn fusion_preserves_random_six_qubit_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let mut c = Circuit::new(6);
            for _ in 0..100 {
                c.push(random_gate(6, &mut rng)).unwrap();
            }
            let f = fuse(&c);
            assert!(f.len() < c.len());
            let s0 = random_state(6, &mut rng);
            let (mut a, mut b) = (s0.clone(), s0);
            c.apply_to(&mut a).unwrap();
            f.apply_to(&mut b).unwrap();
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                assert!((x - y).norm() < 1e-9);
            }
            assert!((b.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn moment_order_is_irrelevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = vec![Gate::zz(0, 3, 0.2), Gate::rx(1, 0.9), Gate::sqrt_iswap(2, 4), Gate::ry(5, 0.1)];
        let s0 = random_state(6, &mut rng);
        let (mut a, mut b) = (s0.clone(), s0);
        for g in &layer {
            a.apply(&g.matrix()).unwrap();
        }
        for g in layer.iter().rev() {
            b.apply(&g.matrix()).unwrap();
        }
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn text_roundtrip_keeps_moments_and_marks() {
        let mut c = Circuit::new(3);
        c.push_layer(vec![Gate::rx(0, 0.5), Gate::rx(1, 0.5)]).unwrap();
        c.push_layer(vec![Gate::zz(0, 2, 0.25)]).unwrap();
        c.mark_step();
        c.push_layer(vec![]).unwrap();
        c.push_layer(vec![Gate::rz(2, -1.0)]).unwrap();
        c.mark_step();
        let parsed = Circuit::from_text(&c.to_text()).unwrap();
        assert_eq!(parsed.moments(), c.moments());
        assert_eq!(parsed.step_marks(), c.step_marks());
    }

    #[test]
    fn fuse_keeps_step_marks() {
        let mut c = Circuit::new(2);
        for _ in 0..3 {
            c.push(Gate::rx(0, 0.1)).unwrap();
            c.push(Gate::zz(0, 1, 0.1)).unwrap();
            c.mark_step();
        }
        let f = fuse(&c);
        assert_eq!(f.step_marks(), &[1, 2, 3]);
    }
}
