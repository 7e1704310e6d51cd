#![allow(dead_code)]

use jtomo::linalg::{c, CMat};
use jtomo::random::{random_complex_matrix, rng_from_seed, SimRng};

pub fn rng(seed: u64) -> SimRng {
    rng_from_seed(seed)
}

pub fn pauli(k: usize) -> CMat {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match k {
        0 => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        1 => CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// Amplitude damping with decay `g`.
pub fn amplitude_damping(g: f64) -> Vec<CMat> {
    let z = c(0.0, 0.0);
    vec![
        CMat::from_row_slice(2, 2, &[c(1.0, 0.0), z, z, c((1.0 - g).sqrt(), 0.0)]),
        CMat::from_row_slice(2, 2, &[z, c(g.sqrt(), 0.0), z, z]),
    ]
}

/// Kraus operators `G_i S^{-1/2}` from Ginibre draws, so that `Σ A†A = I`.
pub fn random_tp_kraus(d: usize, rank: usize, seed: u64) -> Vec<CMat> {
    let mut r = rng(seed);
    let gs: Vec<CMat> = (0..rank)
        .map(|_| random_complex_matrix(d, d, &mut r))
        .collect();
    let s = gs
        .iter()
        .fold(CMat::zeros(d, d), |acc, g| acc + g.adjoint() * g);
    let e = s.clone().symmetric_eigen();
    let inv_sqrt = &e.eigenvectors
        * CMat::from_diagonal(&e.eigenvalues.map(|v| c(1.0 / v.sqrt(), 0.0)))
        * e.eigenvectors.adjoint();
    gs.into_iter().map(|g| g * &inv_sqrt).collect()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn eigenvalues(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let mut v: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}
