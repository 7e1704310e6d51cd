//! Orthonormal Hermitian operator basis and the real parameterization of
//! states and detector elements.
//!
//! The basis is the generalized Gell-Mann set, normalized so that
//! `Tr(Ω_i† Ω_j) = δ_ij`. Ordering is fixed:
//!
//! 1. `Ω_0 = I/√d`
//! 2. symmetric off-diagonal elements `(|j⟩⟨k| + |k⟩⟨j|)/√2` for `j < k`
//! 3. antisymmetric elements `(−i|j⟩⟨k| + i|k⟩⟨j|)/√2` for `j < k`
//! 4. diagonal elements `(Σ_{m<l}|m⟩⟨m| − l|l⟩⟨l|)/√(l(l+1))` for `l = 1..d−1`
//!
//! Pairs `(j, k)` are enumerated row by row. For `d = 2` this gives the Pauli
//! matrices in `x, y, z` order, each divided by `√2`.
//!
//! `vec` stacks columns, so `vec(ABC) = (Cᵀ ⊗ A) vec(B)`.

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec, RVec};
use serde::{Deserialize, Serialize};

/// Relative Frobenius deviation from Hermiticity accepted by the parameterization maps.
pub const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct OperatorBasis {
    d: usize,
    omegas: Vec<CMat>,
}

/// `U`, whose `j`-th row is `vec(Ω_j)†`.
#[derive(Debug, Clone)]
pub struct ChangeOfBasis {
    pub u: CMat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCoordinates {
    /// `Tr(ρ)/√d`; equals `1/√d` for a density matrix.
    pub trace_component: f64,
    pub x: RVec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmCoordinates {
    pub c0: f64,
    pub c: RVec,
}

impl OperatorBasis {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut omegas = Vec::with_capacity(d * d);
        omegas.push(CMat::identity(d, d) * c(1.0 / (d as f64).sqrt(), 0.0));

        let pairs: Vec<(usize, usize)> = (0..d)
            .flat_map(|j| (j + 1..d).map(move |k| (j, k)))
            .collect();
        for &(j, k) in &pairs {
            let mut m = CMat::zeros(d, d);
            m[(j, k)] = c(s2, 0.0);
            m[(k, j)] = c(s2, 0.0);
            omegas.push(m);
        }
        for &(j, k) in &pairs {
            let mut m = CMat::zeros(d, d);
            m[(j, k)] = c(0.0, -s2);
            m[(k, j)] = c(0.0, s2);
            omegas.push(m);
        }
        for l in 1..d {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut m = CMat::zeros(d, d);
            for mm in 0..l {
                m[(mm, mm)] = c(norm, 0.0);
            }
            m[(l, l)] = c(-(l as f64) * norm, 0.0);
            omegas.push(m);
        }
        debug_assert_eq!(omegas.len(), d * d);
        Ok(Self { d, omegas })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of traceless elements, `d² − 1`.
    pub fn n_params(&self) -> usize {
        self.d * self.d - 1
    }

    pub fn omegas(&self) -> &[CMat] {
        &self.omegas
    }

    pub fn omega(&self, j: usize) -> &CMat {
        &self.omegas[j]
    }

    pub fn change_of_basis(&self) -> ChangeOfBasis {
        let n = self.d * self.d;
        let mut u = CMat::zeros(n, n);
        for (j, om) in self.omegas.iter().enumerate() {
            for (k, v) in om.iter().enumerate() {
                u[(j, k)] = v.conj();
            }
        }
        ChangeOfBasis { u }
    }

    /// All `d²` coordinates `Tr(Ω_k A)` of a Hermitian matrix.
    ///
    /// Matrices with relative anti-Hermitian part above [`HERMITIAN_TOL`] are rejected.
    pub fn coordinates(&self, a: &CMat) -> Result<RVec> {
        self.check_square(a)?;
        let dev = crate::linalg::hermiticity_error(a);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(self.coordinates_unchecked(a))
    }

    /// Real parts of `Tr(Ω_k A)`; the anti-Hermitian part of `A` is discarded.
    pub fn coordinates_unchecked(&self, a: &CMat) -> RVec {
        RVec::from_iterator(
            self.omegas.len(),
            self.omegas.iter().map(|om| inner(om, a).re),
        )
    }

    /// `c0·Ω_0 + Σ_k x_k Ω_k`
    pub fn matrix_from_coordinates(&self, c0: f64, x: &RVec) -> CMat {
        assert_eq!(x.len(), self.n_params(), "coordinate length");
        let mut m = &self.omegas[0] * c(c0, 0.0);
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                m += &self.omegas[k + 1] * c(xk, 0.0);
            }
        }
        m
    }

    pub fn state_to_coords(&self, rho: &CMat) -> Result<StateCoordinates> {
        let all = self.coordinates(rho)?;
        Ok(StateCoordinates {
            trace_component: all[0],
            x: all.rows(1, self.n_params()).into_owned(),
        })
    }

    pub fn coords_to_state(&self, coords: &StateCoordinates) -> CMat {
        self.matrix_from_coordinates(coords.trace_component, &coords.x)
    }

    /// `h(x)`: the unit-trace Hermitian matrix with traceless coordinates `x`.
    pub fn state_from_x(&self, x: &RVec) -> CMat {
        self.matrix_from_coordinates(1.0 / (self.d as f64).sqrt(), x)
    }

    pub fn povm_element_to_coords(&self, p: &CMat) -> Result<PovmCoordinates> {
        let all = self.coordinates(p)?;
        Ok(PovmCoordinates {
            c0: all[0],
            c: all.rows(1, self.n_params()).into_owned(),
        })
    }

    pub fn coords_to_povm_element(&self, coords: &PovmCoordinates) -> CMat {
        self.matrix_from_coordinates(coords.c0, &coords.c)
    }

    fn check_square(&self, a: &CMat) -> Result<()> {
        if a.nrows() != self.d || a.ncols() != self.d {
            return Err(Error::Shape(format!(
                "expected {d}x{d} matrix, got {}x{}",
                a.nrows(),
                a.ncols(),
                d = self.d
            )));
        }
        Ok(())
    }
}

/// `Tr(A† B)`
pub fn inner(a: &CMat, b: &CMat) -> num_complex::Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Column-major stacking of a matrix.
pub fn vectorize(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

/// Inverse of [`vectorize`] for vectors of perfect-square length.
pub fn devectorize(v: &CVec) -> Result<CMat> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n || n == 0 {
        return Err(Error::Shape(format!(
            "vector of length {n} is not the vectorization of a square matrix"
        )));
    }
    Ok(CMat::from_column_slice(d, d, v.as_slice()))
}
