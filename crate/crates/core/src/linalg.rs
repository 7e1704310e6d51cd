//! Small dense linear-algebra helpers shared by the other modules.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;
pub type CVec = DVector<Complex64>;
pub type RVec = DVector<f64>;

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_RTOL: f64 = 1e-8;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: ComplexField>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.kronecker(b)
}

pub fn kron_vec<T: ComplexField>(a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    let mut out = DVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (k, bk) in b.iter().enumerate() {
            out[i * b.len() + k] = ai.clone() * bk.clone();
        }
    }
    out
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| c(x, 0.0))
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `(m + m†)/2`
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// `‖m − m†‖ / ‖m‖`, or the absolute deviation when `m` is zero.
pub fn hermiticity_error(m: &CMat) -> f64 {
    let dev = (m - m.adjoint()).norm();
    let n = m.norm();
    if n > 0.0 {
        dev / n
    } else {
        dev
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
/// Column `i` of the returned matrix is the eigenvector of eigenvalue `i`.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitian_part(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps lower index first among equal eigenvalues
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// `V diag(λ) V†`
pub fn from_spectrum(values: &[f64], vectors: &CMat) -> CMat {
    let n = vectors.nrows();
    let mut out = CMat::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (&v * v.adjoint()) * c(lam, 0.0);
    }
    out
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_part(m)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Numerical rank from a list of singular values.
pub fn rank_from_singular_values(sv: &[f64], rtol: f64) -> usize {
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * max).count()
}

pub fn numerical_rank<T: Scalar>(m: &DMatrix<T>) -> usize {
    if m.is_empty() {
        return 0;
    }
    match svd(m) {
        Ok(f) => rank_from_singular_values(&f.singular_values, RANK_RTOL),
        Err(_) => 0,
    }
}

/// Scalars the estimators run on: `f64` for real coordinates, `Complex64` for the natural basis.
pub trait Scalar: ComplexField<RealField = f64> + Copy {
    #[doc(hidden)]
    fn faer_svd(m: &DMatrix<Self>) -> Option<Svd<Self>>;
}

/// Thin SVD `m = u·diag(σ)·v_t`, singular values in non-increasing order.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: DMatrix<T>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<T>,
}

// nalgebra's SVD can return wrong factors for some rank-deficient inputs, so faer does it.
macro_rules! faer_scalar {
    ($t:ty, $re:expr) => {
        impl Scalar for $t {
            fn faer_svd(m: &DMatrix<Self>) -> Option<Svd<Self>> {
                let a = faer::Mat::<$t>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
                let f = a.thin_svd().ok()?;
                let (u, s, v) = (f.U(), f.S().column_vector(), f.V());
                let k = s.nrows();
                let mut order: Vec<usize> = (0..k).collect();
                let sv: Vec<f64> = (0..k).map(|i| $re(s[i])).collect();
                order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]));
                Some(Svd {
                    u: DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, order[j])]),
                    singular_values: order.iter().map(|&i| sv[i]).collect(),
                    v_t: DMatrix::from_fn(k, m.ncols(), |i, j| {
                        ComplexField::conjugate(v[(j, order[i])])
                    }),
                })
            }
        }
    };
}

faer_scalar!(f64, |x: f64| x);
faer_scalar!(Complex64, |x: Complex64| x.re);

pub fn svd<T: Scalar>(m: &DMatrix<T>) -> Result<Svd<T>, String> {
    if m.is_empty() {
        return Err("SVD of an empty matrix".into());
    }
    if m.iter().any(|x| !x.clone().modulus().is_finite()) {
        return Err("SVD of a matrix with non-finite entries".into());
    }
    T::faer_svd(m).ok_or_else(|| "SVD did not converge".into())
}

/// Moore-Penrose pseudoinverse dropping singular values at or below `rtol·σ_max`.
pub fn pinv<T: Scalar>(m: &DMatrix<T>, rtol: f64) -> Result<DMatrix<T>, String> {
    let f = svd(m)?;
    let cut = rtol * f.singular_values.first().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in f.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            let vk = f.v_t.row(k).adjoint();
            let uk = f.u.column(k).adjoint();
            out += (vk * uk).unscale(s);
        }
    }
    Ok(out)
}

/// Hermitian matrix function applied through the spectrum.
pub fn hermitian_map(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let mapped: Vec<f64> = vals.into_iter().map(f).collect();
    from_spectrum(&mapped, &vecs)
}

/// Euclidean projection of `v` onto the probability simplex `{λ ≥ 0, Σλ = total}`.
pub fn project_to_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - total) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}
