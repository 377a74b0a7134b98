//! Shared helpers for unit tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::gate::{Mat4, C64, ZERO};
use crate::state::StateVector;

pub(crate) fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateVector {
    let mut v: Vec<C64> = (0..1 << n)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    StateVector::from_amplitudes(v).unwrap()
}

/// Random unitary by Gram-Schmidt on a random complex matrix.
pub(crate) fn random_unitary4(rng: &mut ChaCha8Rng) -> Mat4 {
    let mut cols: Vec<[C64; 4]> = Vec::new();
    while cols.len() < 4 {
        let mut v = [ZERO; 4];
        for x in &mut v {
            *x = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
        for c in &cols {
            let ip: C64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for k in 0..4 {
                v[k] -= ip * c[k];
            }
        }
        let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|a| *a /= n);
            cols.push(v);
        }
    }
    let mut m = [ZERO; 16];
    for r in 0..4 {
        for c in 0..4 {
            m[r * 4 + c] = cols[c][r];
        }
    }
    m
}
