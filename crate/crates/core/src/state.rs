//! Dense statevector storage and gate application.
//!
//! Qubit `q` is bit `q` of the amplitude index. A `k`-qubit gate touches
//! groups of `2^k` amplitudes that differ only in the target bits; every
//! group is identified by a "base" index with the target bits cleared.
//! Large states split the base range into contiguous chunks handled by the
//! rayon pool.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gate::{GateMatrix, Mat2, Mat4, Support, Unitary, C64, ONE, ZERO};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "Z2SIM_THREADS";

/// States below this many qubits are updated on the calling thread.
pub(crate) const PARALLEL_MIN_QUBITS: usize = 14;
const CHUNK_BASES: usize = 1 << 12;

/// Worker count from `Z2SIM_THREADS`, else the host's available parallelism.
pub fn configured_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Initializes the global rayon pool once. An explicit `threads` wins over the
/// environment. Returns the thread count actually in effect.
pub fn init_thread_pool(threads: Option<usize>) -> usize {
    static INIT: OnceLock<usize> = OnceLock::new();
    *INIT.get_or_init(|| {
        let n = threads.filter(|&n| n > 0).unwrap_or_else(configured_threads);
        // A pool may already exist if rayon was touched first; keep whatever it has.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        rayon::current_num_threads()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1usize << n_qubits];
        amplitudes[0] = ONE;
        Self { n_qubits, amplitudes }
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if index >> n_qubits != 0 {
            return Err(Error::InvalidParameter(format!(
                "basis index {index} needs more than {n_qubits} qubits"
            )));
        }
        let mut s = Self {
            n_qubits,
            amplitudes: vec![ZERO; 1usize << n_qubits],
        };
        s.amplitudes[index] = ONE;
        Ok(s)
    }

    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "amplitude count {len} is not a power of two"
            )));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    /// Bytes held by one state of `n_qubits` qubits.
    pub fn bytes_for(n_qubits: usize) -> u64 {
        (std::mem::size_of::<C64>() as u64) << n_qubits
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.check_same_size(other)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    fn check_same_size(&self, other: &StateVector) -> Result<()> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch {
                left: self.n_qubits,
                right: other.n_qubits,
            });
        }
        Ok(())
    }

    /// Applies `gate` in place. Targets are validated against the state size.
    pub fn apply(&mut self, gate: &GateMatrix) -> Result<()> {
        gate.support.validate(self.n_qubits)?;
        let parallel = self.n_qubits >= PARALLEL_MIN_QUBITS && rayon::current_num_threads() > 1;
        match (gate.support, &gate.unitary) {
            (Support::One(q), Unitary::One(m)) => apply_1q(&mut self.amplitudes, q, m, parallel),
            (Support::Two(a, b), Unitary::Two(m)) => apply_2q(&mut self.amplitudes, a, b, m, parallel),
            _ => {
                return Err(Error::InvalidParameter(
                    "gate support and matrix arity disagree".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn apply_all<'a>(&mut self, gates: impl IntoIterator<Item = &'a GateMatrix>) -> Result<()> {
        for g in gates {
            self.apply(g)?;
        }
        Ok(())
    }
}

/// Functional form of [`StateVector::apply`].
pub fn apply_gate(mut state: StateVector, gate: &GateMatrix) -> Result<StateVector> {
    state.apply(gate)?;
    Ok(state)
}

/// `<psi1| X_site |psi2>`.
pub fn pauli_x_cross_term(psi1: &StateVector, psi2: &StateVector, site: usize) -> Result<C64> {
    psi1.check_same_size(psi2)?;
    if site >= psi1.n_qubits {
        return Err(Error::QubitOutOfRange {
            index: site,
            n_qubits: psi1.n_qubits,
        });
    }
    let mask = 1usize << site;
    let a = &psi1.amplitudes;
    let b = &psi2.amplitudes;
    let term = |i: usize| a[i].conj() * b[i ^ mask];
    let total = if psi1.n_qubits >= PARALLEL_MIN_QUBITS && rayon::current_num_threads() > 1 {
        (0..a.len()).into_par_iter().with_min_len(CHUNK_BASES).map(term).sum()
    } else {
        (0..a.len()).map(term).sum()
    };
    Ok(total)
}

/// Raw pointer that may be shared across workers. Each worker writes only the
/// amplitude groups of its own base-index range and those groups are disjoint.
#[derive(Clone, Copy)]
struct SharedAmps(*mut C64);
unsafe impl Send for SharedAmps {}
unsafe impl Sync for SharedAmps {}

impl SharedAmps {
    // Method access keeps closures capturing the whole wrapper (and its Sync impl)
    // rather than the raw pointer field.
    fn get(self) -> *mut C64 {
        self.0
    }
}

/// Runs `body` over `0..n_bases`, in parallel chunks when requested.
fn for_each_base(n_bases: usize, parallel: bool, body: impl Fn(usize, usize) + Sync) {
    if parallel && n_bases > CHUNK_BASES {
        (0..n_bases.div_ceil(CHUNK_BASES)).into_par_iter().for_each(|c| {
            let lo = c * CHUNK_BASES;
            body(lo, (lo + CHUNK_BASES).min(n_bases));
        });
    } else {
        body(0, n_bases);
    }
}

#[inline]
fn insert_zero_bit(x: usize, bit: usize) -> usize {
    let low = x & ((1usize << bit) - 1);
    ((x >> bit) << (bit + 1)) | low
}

fn apply_1q(amps: &mut [C64], q: usize, m: &Mat2, parallel: bool) {
    let stride = 1usize << q;
    let n_bases = amps.len() >> 1;
    let ptr = SharedAmps(amps.as_mut_ptr());
    let [m00, m01, m10, m11] = *m;
    if m01 == ZERO && m10 == ZERO {
        for_each_base(n_bases, parallel, |lo, hi| {
            let p = ptr.get();
            for r in lo..hi {
                let i0 = insert_zero_bit(r, q);
                // SAFETY: i0 and i0 + stride are < len and unique to base r.
                unsafe {
                    *p.add(i0) *= m00;
                    *p.add(i0 + stride) *= m11;
                }
            }
        });
        return;
    }
    for_each_base(n_bases, parallel, |lo, hi| {
        let p = ptr.get();
        for r in lo..hi {
            let i0 = insert_zero_bit(r, q);
            let i1 = i0 + stride;
            // SAFETY: the pair (i0, i1) belongs to base r only.
            unsafe {
                let a0 = *p.add(i0);
                let a1 = *p.add(i1);
                *p.add(i0) = m00 * a0 + m01 * a1;
                *p.add(i1) = m10 * a0 + m11 * a1;
            }
        }
    });
}

fn apply_2q(amps: &mut [C64], a: usize, b: usize, m: &Mat4, parallel: bool) {
    let (lo_bit, hi_bit) = if a < b { (a, b) } else { (b, a) };
    let (ma, mb) = (1usize << a, 1usize << b);
    let offsets = [0, ma, mb, ma | mb];
    let n_bases = amps.len() >> 2;
    let ptr = SharedAmps(amps.as_mut_ptr());
    let diagonal = Unitary::Two(*m).is_diagonal();
    for_each_base(n_bases, parallel, |lo, hi| {
        let p = ptr.get();
        for r in lo..hi {
            let base = insert_zero_bit(insert_zero_bit(r, lo_bit), hi_bit);
            // SAFETY: the four indices base|offset are distinct and owned by base r.
            unsafe {
                if diagonal {
                    for (l, off) in offsets.iter().enumerate() {
                        *p.add(base + off) *= m[l * 5];
                    }
                    continue;
                }
                let v = [
                    *p.add(base),
                    *p.add(base + offsets[1]),
                    *p.add(base + offsets[2]),
                    *p.add(base + offsets[3]),
                ];
                for (row, off) in offsets.iter().enumerate() {
                    let mr = &m[row * 4..row * 4 + 4];
                    *p.add(base + off) = mr[0] * v[0] + mr[1] * v[1] + mr[2] * v[2] + mr[3] * v[3];
                }
            }
        }
    });
}
