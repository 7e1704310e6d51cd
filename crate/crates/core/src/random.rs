//! Seeded random matrices and seed derivation.

use crate::linalg::{c, CMat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of indices into an independent sub-seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Ginibre matrix with i.i.d. standard complex normal entries.
pub fn random_complex_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-random unitary (QR of a Ginibre matrix with the phase of `R`'s diagonal removed).
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let z = random_complex_matrix(d, d, rng);
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..d {
        let rk = r[(k, k)];
        let phase = if rk.norm() > 0.0 {
            rk / rk.norm()
        } else {
            c(1.0, 0.0)
        };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    q
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let g = random_complex_matrix(d, d, rng);
    (&g + g.adjoint()) * c(0.5, 0.0)
}

/// Random traceless Hermitian matrix with unit Frobenius norm.
pub fn random_traceless_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let mut h = random_hermitian(d, rng);
    let tr = crate::linalg::trace(&h) / c(d as f64, 0.0);
    for k in 0..d {
        h[(k, k)] -= tr;
    }
    let n = h.norm();
    h / c(n, 0.0)
}

/// Random density matrix `G G† / Tr(G G†)` with `G` a `d × rank` Ginibre matrix.
pub fn random_density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> CMat {
    let g = random_complex_matrix(d, rank, rng);
    let m = &g * g.adjoint();
    let tr = crate::linalg::trace(&m);
    m / tr
}

/// `V diag(spectrum) V†` with Haar-random `V`.
pub fn rotated_diagonal<R: Rng + ?Sized>(spectrum: &[f64], rng: &mut R) -> CMat {
    let d = spectrum.len();
    let v = haar_unitary(d, rng);
    with_spectrum(&v, spectrum)
}

pub fn with_spectrum(v: &CMat, spectrum: &[f64]) -> CMat {
    let d = spectrum.len();
    let diag = CMat::from_fn(d, d, |i, j| {
        if i == j {
            c(spectrum[i], 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    v * diag * v.adjoint()
}
