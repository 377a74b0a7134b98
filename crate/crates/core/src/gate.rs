//! Gate kinds, their matrices and small-matrix algebra used by fusion.
//!
//! Matrices are stored row-major. For a two-qubit gate on `Support::Two(a, b)`
//! the local basis index is `bit_a + 2 * bit_b`, i.e. the first target is the
//! least significant local bit, matching the little-endian statevector layout.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

pub type Mat2 = [C64; 4];
pub type Mat4 = [C64; 16];

/// Qubits a gate acts on, in matrix order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Support {
    One(usize),
    Two(usize, usize),
}

impl Support {
    pub fn arity(&self) -> usize {
        match self {
            Support::One(_) => 1,
            Support::Two(..) => 2,
        }
    }

    pub fn qubits(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            Support::One(a) => (a, None),
            Support::Two(a, b) => (a, Some(b)),
        };
        std::iter::once(a).chain(b)
    }

    pub fn contains(&self, q: usize) -> bool {
        match *self {
            Support::One(a) => a == q,
            Support::Two(a, b) => a == q || b == q,
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        for q in self.qubits() {
            if q >= n_qubits {
                return Err(Error::QubitOutOfRange { index: q, n_qubits });
            }
        }
        if let Support::Two(a, b) = *self {
            if a == b {
                return Err(Error::DuplicateTargets(a));
            }
        }
        Ok(())
    }
}

/// Dense unitary for one or two qubits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unitary {
    One(Mat2),
    Two(Mat4),
}

impl Unitary {
    pub fn dim(&self) -> usize {
        match self {
            Unitary::One(_) => 2,
            Unitary::Two(_) => 4,
        }
    }

    pub fn entries(&self) -> &[C64] {
        match self {
            Unitary::One(m) => m,
            Unitary::Two(m) => m,
        }
    }

    /// Max-entry deviation of `U U^dagger` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.dim();
        let m = self.entries();
        let mut err: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    acc += m[r * d + k] * m[c * d + k].conj();
                }
                let target = if r == c { ONE } else { ZERO };
                err = err.max((acc - target).norm());
            }
        }
        err
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        let m = self.entries();
        (0..d).all(|r| (0..d).all(|c| r == c || m[r * d + c] == ZERO))
    }
}

/// A gate matrix bound to its target qubits; the unit the kernel applies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateMatrix {
    pub support: Support,
    pub unitary: Unitary,
}

impl GateMatrix {
    pub fn one(target: usize, m: Mat2) -> Self {
        Self {
            support: Support::One(target),
            unitary: Unitary::One(m),
        }
    }

    pub fn two(a: usize, b: usize, m: Mat4) -> Self {
        Self {
            support: Support::Two(a, b),
            unitary: Unitary::Two(m),
        }
    }

    /// Checks unitarity within `1e-10`.
    pub fn validate_unitary(&self) -> Result<()> {
        let err = self.unitary.unitarity_error();
        if err > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "gate matrix not unitary (deviation {err:e})"
            )));
        }
        Ok(())
    }
}

/// Gate vocabulary shared by the builders, the noise compiler and fusion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateKind {
    X,
    Y,
    Z,
    /// `exp(-i theta X / 2)`
    Rx(f64),
    /// `exp(-i theta Y / 2)`
    Ry(f64),
    /// `exp(-i theta Z / 2)`
    Rz(f64),
    /// `exp(-i alpha Z⊗Z)`, full angle.
    Zz(f64),
    SqrtISwap,
    /// `diag(1, 1, 1, exp(i phase))`; crosstalk phase error on `|11>`.
    Uzz(f64),
    Matrix1(Mat2),
    Matrix2(Mat4),
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::Rx(_) => "rx",
            GateKind::Ry(_) => "ry",
            GateKind::Rz(_) => "rz",
            GateKind::Zz(_) => "zz",
            GateKind::SqrtISwap => "sqiswap",
            GateKind::Uzz(_) => "uzz",
            GateKind::Matrix1(_) => "u1",
            GateKind::Matrix2(_) => "u2",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            GateKind::Zz(_) | GateKind::SqrtISwap | GateKind::Uzz(_) | GateKind::Matrix2(_) => 2,
            _ => 1,
        }
    }

    pub fn unitary(&self) -> Unitary {
        match *self {
            GateKind::X => Unitary::One(pauli_x()),
            GateKind::Y => Unitary::One(pauli_y()),
            GateKind::Z => Unitary::One(pauli_z()),
            GateKind::Rx(t) => Unitary::One(rx(t)),
            GateKind::Ry(t) => Unitary::One(ry(t)),
            GateKind::Rz(t) => Unitary::One(rz(t)),
            GateKind::Zz(a) => Unitary::Two(zz(a)),
            GateKind::SqrtISwap => Unitary::Two(sqrt_iswap()),
            GateKind::Uzz(p) => Unitary::Two(diag4([ONE, ONE, ONE, C64::from_polar(1.0, p)])),
            GateKind::Matrix1(m) => Unitary::One(m),
            GateKind::Matrix2(m) => Unitary::Two(m),
        }
    }
}

/// A gate instance on concrete qubits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub support: Support,
}

impl Gate {
    pub fn new(kind: GateKind, support: Support) -> Result<Self> {
        if kind.arity() != support.arity() {
            return Err(Error::InvalidParameter(format!(
                "gate `{}` has arity {}, got {} targets",
                kind.name(),
                kind.arity(),
                support.arity()
            )));
        }
        if let Support::Two(a, b) = support {
            if a == b {
                return Err(Error::DuplicateTargets(a));
            }
        }
        Ok(Self { kind, support })
    }

    pub fn one(kind: GateKind, q: usize) -> Self {
        debug_assert_eq!(kind.arity(), 1);
        Self {
            kind,
            support: Support::One(q),
        }
    }

    pub fn two(kind: GateKind, a: usize, b: usize) -> Self {
        debug_assert_eq!(kind.arity(), 2);
        debug_assert_ne!(a, b);
        Self {
            kind,
            support: Support::Two(a, b),
        }
    }

    pub fn x(q: usize) -> Self {
        Self::one(GateKind::X, q)
    }
    pub fn rx(q: usize, theta: f64) -> Self {
        Self::one(GateKind::Rx(theta), q)
    }
    pub fn ry(q: usize, theta: f64) -> Self {
        Self::one(GateKind::Ry(theta), q)
    }
    pub fn rz(q: usize, theta: f64) -> Self {
        Self::one(GateKind::Rz(theta), q)
    }
    pub fn zz(a: usize, b: usize, alpha: f64) -> Self {
        Self::two(GateKind::Zz(alpha), a, b)
    }
    pub fn sqrt_iswap(a: usize, b: usize) -> Self {
        Self::two(GateKind::SqrtISwap, a, b)
    }

    pub fn arity(&self) -> usize {
        self.support.arity()
    }

    pub fn matrix(&self) -> GateMatrix {
        GateMatrix {
            support: self.support,
            unitary: self.kind.unitary(),
        }
    }
}

impl fmt::Display for Gate {
    /// Line format: `name targets... params...`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.name())?;
        for q in self.support.qubits() {
            write!(f, " {q}")?;
        }
        match self.kind {
            GateKind::Rx(t) | GateKind::Ry(t) | GateKind::Rz(t) | GateKind::Zz(t) | GateKind::Uzz(t) => {
                write!(f, " {t:?}")
            }
            GateKind::Matrix1(m) => write_entries(f, &m),
            GateKind::Matrix2(m) => write_entries(f, &m),
            _ => Ok(()),
        }
    }
}

fn write_entries(f: &mut fmt::Formatter<'_>, m: &[C64]) -> fmt::Result {
    for z in m {
        write!(f, " {:?} {:?}", z.re, z.im)?;
    }
    Ok(())
}

impl std::str::FromStr for Gate {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut it = line.split_whitespace();
        let name = it.next().ok_or_else(|| Error::Parse("empty gate line".into()))?;
        let rest: Vec<&str> = it.collect();
        let bad = |what: &str| Error::Parse(format!("gate line `{line}`: {what}"));
        let arity = match name {
            "x" | "y" | "z" | "rx" | "ry" | "rz" | "u1" => 1,
            "zz" | "sqiswap" | "uzz" | "u2" => 2,
            _ => return Err(bad("unknown gate name")),
        };
        if rest.len() < arity {
            return Err(bad("missing targets"));
        }
        let q = |s: &str| s.parse::<usize>().map_err(|_| bad("bad target"));
        let support = if arity == 1 {
            Support::One(q(rest[0])?)
        } else {
            Support::Two(q(rest[0])?, q(rest[1])?)
        };
        let params: Vec<f64> = rest[arity..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad parameter")))
            .collect::<Result<_>>()?;
        let scalar = || -> Result<f64> {
            match params.as_slice() {
                [p] => Ok(*p),
                _ => Err(bad("expected one parameter")),
            }
        };
        let kind = match name {
            "x" => GateKind::X,
            "y" => GateKind::Y,
            "z" => GateKind::Z,
            "rx" => GateKind::Rx(scalar()?),
            "ry" => GateKind::Ry(scalar()?),
            "rz" => GateKind::Rz(scalar()?),
            "zz" => GateKind::Zz(scalar()?),
            "uzz" => GateKind::Uzz(scalar()?),
            "sqiswap" => GateKind::SqrtISwap,
            "u1" | "u2" => {
                let d = if name == "u1" { 4 } else { 16 };
                if params.len() != 2 * d {
                    return Err(bad("wrong number of matrix entries"));
                }
                let entries: Vec<C64> = params.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
                if d == 4 {
                    GateKind::Matrix1(entries.try_into().unwrap())
                } else {
                    GateKind::Matrix2(entries.try_into().unwrap())
                }
            }
            _ => unreachable!(),
        };
        let takes_none = matches!(kind, GateKind::X | GateKind::Y | GateKind::Z | GateKind::SqrtISwap);
        if takes_none && !params.is_empty() {
            return Err(bad("unexpected parameters"));
        }
        Gate::new(kind, support)
    }
}

pub fn pauli_x() -> Mat2 {
    [ZERO, ONE, ONE, ZERO]
}

pub fn pauli_y() -> Mat2 {
    [ZERO, -I, I, ZERO]
}

pub fn pauli_z() -> Mat2 {
    [ONE, ZERO, ZERO, -ONE]
}

pub fn identity2() -> Mat2 {
    [ONE, ZERO, ZERO, ONE]
}

pub fn identity4() -> Mat4 {
    diag4([ONE; 4])
}

pub fn rx(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [C64::new(c, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(c, 0.0)]
}

pub fn ry(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)]
}

pub fn rz(theta: f64) -> Mat2 {
    [C64::from_polar(1.0, -theta / 2.0), ZERO, ZERO, C64::from_polar(1.0, theta / 2.0)]
}

pub fn zz(alpha: f64) -> Mat4 {
    let even = C64::from_polar(1.0, -alpha);
    let odd = C64::from_polar(1.0, alpha);
    diag4([even, odd, odd, even])
}

pub fn sqrt_iswap() -> Mat4 {
    let c = C64::new(FRAC_1_SQRT_2, 0.0);
    let s = C64::new(0.0, FRAC_1_SQRT_2);
    let mut m = [ZERO; 16];
    m[0] = ONE;
    m[5] = c;
    m[6] = s;
    m[9] = s;
    m[10] = c;
    m[15] = ONE;
    m
}

pub fn diag4(d: [C64; 4]) -> Mat4 {
    let mut m = [ZERO; 16];
    for (i, v) in d.into_iter().enumerate() {
        m[i * 5] = v;
    }
    m
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

pub fn mul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [ZERO; 16];
    for r in 0..4 {
        for k in 0..4 {
            let x = a[r * 4 + k];
            if x == ZERO {
                continue;
            }
            for c in 0..4 {
                out[r * 4 + c] += x * b[k * 4 + c];
            }
        }
    }
    out
}

/// Embeds a one-qubit matrix into the two-qubit local space; `slot` 0 is the
/// low local bit.
pub fn embed1(m: &Mat2, slot: usize) -> Mat4 {
    let mut out = [ZERO; 16];
    for r in 0..4usize {
        for c in 0..4usize {
            let (rs, cs) = ((r >> slot) & 1, (c >> slot) & 1);
            let (ro, co) = ((r >> (1 - slot)) & 1, (c >> (1 - slot)) & 1);
            if ro == co {
                out[r * 4 + c] = m[rs * 2 + cs];
            }
        }
    }
    out
}

/// Conjugates a two-qubit matrix by SWAP, i.e. re-expresses a gate on
/// `(a, b)` as the equivalent gate on `(b, a)`.
pub fn swap_conjugate(m: &Mat4) -> Mat4 {
    let p = |i: usize| ((i & 1) << 1) | (i >> 1);
    let mut out = [ZERO; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[p(r) * 4 + p(c)] = m[r * 4 + c];
        }
    }
    out
}

/// Expresses a gate matrix in the local two-qubit basis of `(u0, u1)`.
/// The gate's support must be contained in `{u0, u1}`.
pub fn lift_to_pair(g: &GateMatrix, u0: usize, u1: usize) -> Mat4 {
    match (g.support, &g.unitary) {
        (Support::One(q), Unitary::One(m)) => {
            debug_assert!(q == u0 || q == u1);
            embed1(m, usize::from(q == u1))
        }
        (Support::Two(a, b), Unitary::Two(m)) => {
            if (a, b) == (u0, u1) {
                *m
            } else {
                debug_assert_eq!((a, b), (u1, u0));
                swap_conjugate(m)
            }
        }
        _ => unreachable!("support and unitary arity disagree"),
    }
}

/// Max-entry distance between `a` and `b` after removing the best global phase.
pub fn phase_distance(a: &[C64], b: &[C64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let ip: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let phase = if ip.norm() > 0.0 { ip / ip.norm() } else { ONE };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x * phase - y).norm())
        .fold(0.0, f64::max)
}
