//! Closed-form joint estimation of the input state and the detector.
//!
//! Both versions run the same four steps: a linear regression for the
//! Kronecker-structured unknown `z_j`, a rank-one factorization of its
//! rearrangement, fixing the scale ambiguity of that factorization, and
//! projecting the results onto physical states and POVMs.
//!
//! * v1 works with real coordinates in the orthonormal operator basis and fixes
//!   the scale with one independently measured state coordinate.
//! * v2 works with complex vectorizations in the natural basis and fixes the
//!   scale by normalizing the trace of the state.

use crate::basis::{devectorize, OperatorBasis, HERMITIAN_TOL};
use crate::error::{Error, Result, Stage};
use crate::linalg::{self, c, CMat, CVec, RMat, RVec, Scalar, RANK_RTOL};
use crate::measurement::{DensityMatrix, MeasurementDataset, Povm};
use nalgebra::{ComplexField, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Below this top singular value the rearranged regression output is treated as zero.
pub const KRON_ZERO_TOL: f64 = 1e-12;
/// Relative anchor tolerance: `|x̃_{0,k}| < ANCHOR_TOL·‖x̃₀‖` is rejected.
pub const ANCHOR_TOL: f64 = 1e-6;
/// Relative gap below which the top two singular values count as tied.
pub const TIE_TOL: f64 = 1e-9;
/// Minimum admissible trace of the symmetrized v2 state candidate.
pub const TRACE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Method {
    PlainLs,
    MpInverse,
    Tikhonov,
}

impl std::str::FromStr for Stage1Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "plain_ls" | "ls" => Ok(Self::PlainLs),
            "mp_inverse" | "mp" => Ok(Self::MpInverse),
            "tikhonov" => Ok(Self::Tikhonov),
            _ => Err(Error::Validation(format!(
                "unknown stage-1 method {s:?} (expected plain_ls, mp_inverse or tikhonov)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    pub method: Stage1Method,
    /// `D = scale·I` for Tikhonov; `None` means `100/N` with `N` the total copy count.
    pub reg_matrix_scale: Option<f64>,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self::plain_ls()
    }
}

impl Stage1Config {
    pub fn plain_ls() -> Self {
        Self {
            method: Stage1Method::PlainLs,
            reg_matrix_scale: None,
        }
    }

    pub fn mp_inverse() -> Self {
        Self {
            method: Stage1Method::MpInverse,
            reg_matrix_scale: None,
        }
    }

    pub fn tikhonov(scale: Option<f64>) -> Self {
        Self {
            method: Stage1Method::Tikhonov,
            reg_matrix_scale: scale,
        }
    }

    /// Regularization scale actually used for a dataset of `total_copies`.
    pub fn resolved_scale(&self, total_copies: Option<u64>) -> Result<f64> {
        if self.method != Stage1Method::Tikhonov {
            return Ok(0.0);
        }
        match (self.reg_matrix_scale, total_copies) {
            (Some(s), _) if s >= 0.0 && s.is_finite() => Ok(s),
            (Some(s), _) => Err(Error::Validation(format!(
                "regularization scale must be ≥ 0, got {s}"
            ))),
            (None, Some(n)) if n > 0 => Ok(100.0 / n as f64),
            (None, _) => Err(Error::Validation(
                "automatic regularization needs the total copy count".into(),
            )),
        }
    }
}

/// Precomputed linear map `Ŷ_j ↦ ẑ_j`, reused for every outcome `j`.
#[derive(Debug, Clone)]
pub struct Stage1Operator<T: Scalar> {
    b: DMatrix<T>,
    g: DMatrix<T>,
    rank: usize,
    method: Stage1Method,
    reg_scale: f64,
}

impl<T: Scalar> Stage1Operator<T> {
    pub fn new(b: &DMatrix<T>, cfg: &Stage1Config, total_copies: Option<u64>) -> Result<Self> {
        let reg_scale = cfg.resolved_scale(total_copies)?;
        let cols = b.ncols();
        if b.nrows() == 0 || cols == 0 {
            return Err(Error::Shape("empty regression matrix".into()));
        }
        let rank = linalg::numerical_rank(b);
        let bh = b.adjoint();
        let g = match cfg.method {
            Stage1Method::PlainLs => {
                if rank < cols {
                    return Err(Error::RankDeficient { rank, cols });
                }
                let gram = &bh * b;
                let chol = gram.cholesky().ok_or_else(|| {
                    Error::Numerical("normal equations are not positive definite".into())
                })?;
                chol.solve(&bh)
            }
            Stage1Method::MpInverse => linalg::pinv(b, RANK_RTOL).map_err(Error::Numerical)?,
            Stage1Method::Tikhonov => {
                let mut gram = &bh * b;
                for k in 0..cols {
                    gram[(k, k)] += T::from_real(reg_scale);
                }
                let chol = gram.cholesky().ok_or_else(|| {
                    Error::Numerical("regularized normal equations are singular".into())
                })?;
                chol.solve(&bh)
            }
        };
        Ok(Self {
            b: b.clone(),
            g,
            rank,
            method: cfg.method,
            reg_scale,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn method(&self) -> Stage1Method {
        self.method
    }

    pub fn reg_scale(&self) -> f64 {
        self.reg_scale
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn solve(&self, y: &DVector<T>) -> Result<DVector<T>> {
        if y.len() != self.b.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.b.nrows(),
                got: y.len(),
            });
        }
        Ok(&self.g * y)
    }

    /// `‖y − B z‖`
    pub fn residual(&self, y: &DVector<T>, z: &DVector<T>) -> f64 {
        (y - &self.b * z).norm()
    }
}

/// One-shot stage-1 solve; build a [`Stage1Operator`] to reuse the work across `j`.
pub fn stage1_solve<T: Scalar>(
    b: &DMatrix<T>,
    y: &DVector<T>,
    cfg: &Stage1Config,
    total_copies: Option<u64>,
) -> Result<DVector<T>> {
    Stage1Operator::new(b, cfg, total_copies)?.solve(y)
}

/// Rearranges `z` into a `rows × cols` matrix whose row `i` is `z[i·cols..(i+1)·cols]`,
/// so that `x ⊗ y` maps to `x yᵀ`.
pub fn rearrange<T: ComplexField>(z: &DVector<T>, rows: usize, cols: usize) -> Result<DMatrix<T>> {
    if z.len() != rows * cols {
        return Err(Error::Shape(format!(
            "cannot rearrange a vector of length {} into {rows}x{cols}",
            z.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, z.as_slice()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KroneckerFactorization<T: Scalar> {
    pub left: DVector<T>,
    pub right: DVector<T>,
    /// `‖ẑ − left ⊗ right‖`
    pub residual: f64,
    pub top_singular_values: Vec<f64>,
    /// Set when the top two singular values coincide; the first triplet is used.
    pub tie: bool,
}

/// Best rank-one Kronecker approximation `ẑ ≈ left ⊗ right`.
///
/// The factors are only defined up to `(q·left, right/q)`; here both carry `√σ₁`.
pub fn nearest_kronecker<T: Scalar>(
    z: &DVector<T>,
    rows: usize,
    cols: usize,
) -> Result<KroneckerFactorization<T>> {
    let r = rearrange(z, rows, cols)?;
    let svd = linalg::svd(&r).map_err(Error::Numerical)?;
    let (u, v_t) = (&svd.u, &svd.v_t);
    let sv = svd.singular_values.as_slice();
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let top = order[0];
    let s1 = sv[top];
    if !(s1 > KRON_ZERO_TOL) {
        return Err(Error::Degenerate(format!(
            "rearranged regression output is zero (σ₁ = {s1:.3e}); the state or detector has no traceless part"
        )));
    }
    let tie = order.len() > 1 && sv[order[1]] >= s1 * (1.0 - TIE_TOL);
    let root = T::from_real(s1.sqrt());
    let left = u.column(top).into_owned() * root.clone();
    let right = v_t.row(top).transpose() * root;
    let residual = (z - linalg::kron_vec(&left, &right)).norm();
    Ok(KroneckerFactorization {
        left,
        right,
        residual,
        top_singular_values: order.iter().map(|&i| sv[i]).collect(),
        tie,
    })
}

/// Resolves the `(q, 1/q)` ambiguity so that coordinate `anchor` of the state
/// factor equals the measured value `x01_bar`.
pub fn fix_scale_v1(
    fac: &KroneckerFactorization<f64>,
    x01_bar: f64,
    anchor: usize,
    tol: f64,
) -> Result<(RVec, RVec)> {
    let x = &fac.left;
    if anchor >= x.len() {
        return Err(Error::Validation(format!(
            "anchor index {anchor} out of range 0..{}",
            x.len()
        )));
    }
    let xt = x[anchor];
    if xt.abs() < tol * x.norm() || xt == 0.0 {
        return Err(Error::Degenerate(format!(
            "anchor coordinate {anchor} of the state factor is ~0 ({xt:.3e}); measure a different observable"
        )));
    }
    if x01_bar == 0.0 || !x01_bar.is_finite() {
        return Err(Error::Degenerate(format!(
            "measured anchor value is {x01_bar}; measure a different observable"
        )));
    }
    let q = x01_bar / xt;
    Ok((x * q, &fac.right / q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    Average,
    /// One-based outcome index.
    Pick(usize),
    /// One rank-one fit of all outcomes side by side, sharing the state factor.
    Joint,
}

impl Default for CombineMode {
    fn default() -> Self {
        Self::Joint
    }
}

pub fn combine_state_estimates<T: Scalar>(
    per_j: &[DVector<T>],
    mode: CombineMode,
) -> Result<DVector<T>> {
    let Some(first) = per_j.first() else {
        return Err(Error::Validation("no state candidates to combine".into()));
    };
    match mode {
        CombineMode::Average => {
            let mut sum = DVector::zeros(first.len());
            for v in per_j {
                sum += v;
            }
            Ok(sum / T::from_real(per_j.len() as f64))
        }
        CombineMode::Pick(j) => j
            .checked_sub(1)
            .and_then(|i| per_j.get(i))
            .cloned()
            .ok_or_else(|| {
                Error::Validation(format!(
                    "pick({j}) out of range for {} candidates",
                    per_j.len()
                ))
            }),
        CombineMode::Joint => Err(Error::Validation(
            "joint mode combines factorizations, not candidates".into(),
        )),
    }
}

/// Shared-left-factor rank-one fit: `z_j ≈ left ⊗ right_j` for every `j`.
#[derive(Debug, Clone)]
pub struct JointFactorization<T: Scalar> {
    pub left: DVector<T>,
    pub rights: Vec<DVector<T>>,
    pub residual: f64,
    pub top_singular_values: Vec<f64>,
}

pub fn nearest_kronecker_joint<T: Scalar>(
    zs: &[DVector<T>],
    rows: usize,
    cols: usize,
) -> Result<JointFactorization<T>> {
    if zs.is_empty() {
        return Err(Error::Validation("no regression outputs to factor".into()));
    }
    let m = zs.len();
    let mut big = DMatrix::<T>::zeros(rows, cols * m);
    for (j, z) in zs.iter().enumerate() {
        big.columns_mut(j * cols, cols)
            .copy_from(&rearrange(z, rows, cols)?);
    }
    let svd = linalg::svd(&big).map_err(Error::Numerical)?;
    let (u, v_t) = (&svd.u, &svd.v_t);
    let sv = svd.singular_values.as_slice();
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let top = order[0];
    let s1 = sv[top];
    if !(s1 > KRON_ZERO_TOL) {
        return Err(Error::Degenerate(format!(
            "rearranged regression outputs are zero (σ₁ = {s1:.3e})"
        )));
    }
    let root = T::from_real(s1.sqrt());
    let left = u.column(top).into_owned() * root.clone();
    let row = v_t.row(top).transpose() * root;
    let rights: Vec<DVector<T>> = (0..m)
        .map(|j| row.rows(j * cols, cols).into_owned())
        .collect();
    let residual = zs
        .iter()
        .zip(&rights)
        .map(|(z, r)| (z - linalg::kron_vec(&left, r)).norm_squared())
        .sum::<f64>()
        .sqrt();
    Ok(JointFactorization {
        left,
        rights,
        residual,
        top_singular_values: order.iter().map(|&i| sv[i]).collect(),
    })
}

/// Replaces the spectrum of `rho_bar` by its projection onto the probability simplex.
pub fn correct_state(rho_bar: &CMat) -> Result<DensityMatrix> {
    let dev = linalg::hermiticity_error(rho_bar);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let (vals, vecs) = linalg::hermitian_eigen(rho_bar);
    let proj = linalg::project_to_simplex(&vals, 1.0);
    let rho = linalg::hermitian_part(&linalg::from_spectrum(&proj, &vecs));
    DensityMatrix::new(rho)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PovmCorrection {
    pub povm: Povm,
    /// Diagonal shift spread over the elements when `ΣP_j` was near-singular.
    pub epsilon: Option<f64>,
}

/// Symmetrize, clip negative eigenvalues, then renormalize with `S^{−1/2}·S^{−1/2}`.
pub fn correct_povm(elements: &[CMat]) -> Result<PovmCorrection> {
    let Some(first) = elements.first() else {
        return Err(Error::Validation("no POVM elements to correct".into()));
    };
    let d = first.nrows();
    let m = elements.len();
    let mut clipped: Vec<CMat> = elements
        .iter()
        .map(|p| linalg::hermitian_map(&linalg::hermitian_part(p), |l| l.max(0.0)))
        .collect();
    let mut s = CMat::zeros(d, d);
    for p in &clipped {
        s += p;
    }
    let norm = s.norm();
    let mut epsilon = None;
    if linalg::min_eigenvalue(&s) <= 1e-12 * norm {
        let eps = 1e-8 * norm;
        if eps <= 0.0 {
            return Err(Error::Degenerate(
                "all POVM elements vanish after clipping".into(),
            ));
        }
        let shift = CMat::identity(d, d) * c(eps / m as f64, 0.0);
        for p in &mut clipped {
            *p += &shift;
        }
        s += CMat::identity(d, d) * c(eps, 0.0);
        epsilon = Some(eps);
    }
    let (vals, vecs) = linalg::hermitian_eigen(&s);
    if vals[d - 1] <= 0.0 {
        return Err(Error::Degenerate(
            "POVM normalization matrix is singular".into(),
        ));
    }
    let mut out = sandwich(&clipped, &vals, &vecs);
    // an ill-conditioned S leaves rounding in the sum; a second pass with S ≈ I removes it
    let mut s2 = CMat::zeros(d, d);
    for p in &out {
        s2 += p;
    }
    let (vals2, vecs2) = linalg::hermitian_eigen(&s2);
    if vals2[d - 1] > 0.0 {
        out = sandwich(&out, &vals2, &vecs2);
    }
    Ok(PovmCorrection {
        povm: Povm::new(out)?,
        epsilon,
    })
}

fn sandwich(elements: &[CMat], vals: &[f64], vecs: &CMat) -> Vec<CMat> {
    let inv_sqrt: Vec<f64> = vals.iter().map(|l| 1.0 / l.sqrt()).collect();
    let w = linalg::from_spectrum(&inv_sqrt, vecs);
    elements
        .iter()
        .map(|p| linalg::hermitian_part(&(&w * p * &w)))
        .collect()
}

/// `v₁v₁†` for the top eigenvector of `rho_bar`; the flag reports a tied top eigenvalue.
pub fn project_pure(rho_bar: &CMat) -> Result<(DensityMatrix, bool)> {
    let dev = linalg::hermiticity_error(rho_bar);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let (vals, vecs) = linalg::hermitian_eigen(rho_bar);
    let scale = vals[0].abs().max(1e-300);
    let tie = vals.len() > 1 && (vals[0] - vals[1]).abs() <= TIE_TOL * scale;
    let v = vecs.column(0);
    let rho = &v * v.adjoint();
    Ok((DensityMatrix::new(linalg::hermitian_part(&rho))?, tie))
}

/// `Ŷ_aj = ŷ_aj − x̂_a0·Ĉ_j0`, which for trace-preserving processes is `ŷ_aj − Ĉ_j0/√d`.
pub fn build_targets_v1(ds: &MeasurementDataset, basis: &OperatorBasis) -> Result<RMat> {
    ds.validate()?;
    let l = ds.n_processes();
    let m = ds.n_outcomes();
    let inv_sqrt_d = 1.0 / (basis.dim() as f64).sqrt();
    Ok(RMat::from_fn(l, m, |a, j| {
        let x0 = if ds.tp_flags[a] {
            inv_sqrt_d
        } else {
            ds.x_a0_hat[a]
        };
        ds.y_hat[a][j] - x0 * ds.c_j0_hat[j]
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub stage1: Stage1Config,
    pub combine: CombineMode,
    /// Replace the state correction by the rank-one projection.
    pub pure: bool,
    pub anchor_tol: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            stage1: Stage1Config::default(),
            combine: CombineMode::Joint,
            pure: false,
            anchor_tol: ANCHOR_TOL,
        }
    }
}

impl EstimatorConfig {
    pub fn with_stage1(stage1: Stage1Config) -> Self {
        Self {
            stage1,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Version {
    V1,
    V2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub version: Version,
    pub method: Stage1Method,
    pub reg_scale: f64,
    pub rank_used: usize,
    pub columns: usize,
    /// `‖Ŷ_j − B ẑ_j‖` per outcome.
    pub stage1_residuals: Vec<f64>,
    /// `‖ẑ_j − left ⊗ right‖` per outcome.
    pub kronecker_residuals: Vec<f64>,
    /// Leading singular values of each rearranged `ẑ_j` (at most three).
    pub top_singular_values: Vec<Vec<f64>>,
    pub singular_ties: Vec<bool>,
    pub combine: CombineMode,
    /// Largest Frobenius distance between a per-outcome state candidate and the combined one.
    pub candidate_spread: f64,
    pub state_correction_distance: f64,
    /// `Σ_j ‖P̂_j − P̄_j‖`
    pub povm_correction_distance: f64,
    pub povm_epsilon: Option<f64>,
    pub pure_tie: Option<bool>,
    pub total_copies: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub rho_hat: DensityMatrix,
    pub povm_hat: Povm,
    #[serde(with = "crate::io::cmat")]
    pub rho_bar: CMat,
    #[serde(with = "crate::io::cmat_list")]
    pub povm_bar: Vec<CMat>,
    pub diagnostics: Diagnostics,
}

fn finish(
    rho_bar: CMat,
    povm_bar: Vec<CMat>,
    cfg: &EstimatorConfig,
    mut diagnostics: Diagnostics,
) -> Result<EstimateResult> {
    let at = Error::at(Stage::Correction);
    let rho_hat = if cfg.pure {
        let (rho, tie) = project_pure(&rho_bar).map_err(at)?;
        diagnostics.pure_tie = Some(tie);
        rho
    } else {
        correct_state(&rho_bar).map_err(at)?
    };
    let corr = correct_povm(&povm_bar).map_err(Error::at(Stage::Correction))?;
    diagnostics.state_correction_distance = (rho_hat.matrix() - &rho_bar).norm();
    diagnostics.povm_correction_distance = corr
        .povm
        .elements()
        .iter()
        .zip(&povm_bar)
        .map(|(a, b)| (a - b).norm())
        .sum();
    diagnostics.povm_epsilon = corr.epsilon;
    Ok(EstimateResult {
        rho_hat,
        povm_hat: corr.povm,
        rho_bar,
        povm_bar,
        diagnostics,
    })
}

fn empty_diagnostics<T: Scalar>(
    version: Version,
    op: &Stage1Operator<T>,
    cfg: &EstimatorConfig,
    total_copies: u64,
) -> Diagnostics {
    Diagnostics {
        version,
        method: op.method(),
        reg_scale: op.reg_scale(),
        rank_used: op.rank(),
        columns: op.matrix().ncols(),
        stage1_residuals: Vec::new(),
        kronecker_residuals: Vec::new(),
        top_singular_values: Vec::new(),
        singular_ties: Vec::new(),
        combine: cfg.combine,
        candidate_spread: 0.0,
        state_correction_distance: 0.0,
        povm_correction_distance: 0.0,
        povm_epsilon: None,
        pure_tie: None,
        total_copies,
    }
}

/// Real-coordinate estimator with a freshly built stage-1 operator.
pub fn estimate_joint_v1(
    ds: &MeasurementDataset,
    b: &RMat,
    basis: &OperatorBasis,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    let op = Stage1Operator::new(b, &cfg.stage1, Some(ds.total_copies()))
        .map_err(Error::at(Stage::Regression))?;
    estimate_joint_v1_with(ds, &op, basis, cfg)
}

/// Real-coordinate estimator reusing a precomputed stage-1 operator.
pub fn estimate_joint_v1_with(
    ds: &MeasurementDataset,
    op: &Stage1Operator<f64>,
    basis: &OperatorBasis,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    let n = basis.n_params();
    if op.matrix().ncols() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: op.matrix().ncols(),
        });
    }
    let targets = build_targets_v1(ds, basis).map_err(Error::at(Stage::Targets))?;
    let m = targets.ncols();
    let mut diag = empty_diagnostics(Version::V1, op, cfg, ds.total_copies());

    let mut zs = Vec::with_capacity(m);
    let mut facs = Vec::with_capacity(m);
    for j in 0..m {
        let y = targets.column(j).into_owned();
        let z = op.solve(&y).map_err(Error::at(Stage::Regression))?;
        diag.stage1_residuals.push(op.residual(&y, &z));
        let fac = nearest_kronecker(&z, n, n).map_err(Error::at(Stage::Factorization))?;
        diag.kronecker_residuals.push(fac.residual);
        diag.top_singular_values
            .push(fac.top_singular_values.iter().take(3).cloned().collect());
        diag.singular_ties.push(fac.tie);
        zs.push(z);
        facs.push(fac);
    }
    let (x_bar, povm_parts) = if cfg.combine == CombineMode::Joint {
        let joint = nearest_kronecker_joint(&zs, n, n).map_err(Error::at(Stage::Factorization))?;
        let xt = joint.left[ds.anchor.min(n - 1)];
        if ds.anchor >= n || !(xt.abs() >= cfg.anchor_tol * joint.left.norm()) {
            return Err(Error::at(Stage::ScaleFixing)(Error::Degenerate(format!(
                "joint state factor has anchor coordinate {xt:.3e}"
            ))));
        }
        let q = ds.x01_bar / xt;
        let parts: Vec<RVec> = joint.rights.iter().map(|r| r / q).collect();
        (joint.left * q, parts)
    } else {
        let mut states = Vec::with_capacity(m);
        let mut parts = Vec::with_capacity(m);
        for fac in &facs {
            let (x, cj) = fix_scale_v1(fac, ds.x01_bar, ds.anchor, cfg.anchor_tol)
                .map_err(Error::at(Stage::ScaleFixing))?;
            states.push(x);
            parts.push(cj);
        }
        let x_bar =
            combine_state_estimates(&states, cfg.combine).map_err(Error::at(Stage::ScaleFixing))?;
        diag.candidate_spread = states
            .iter()
            .map(|x| (x - &x_bar).norm())
            .fold(0.0, f64::max);
        (x_bar, parts)
    };

    let rho_bar = basis.state_from_x(&x_bar);
    let povm_bar = povm_parts
        .iter()
        .zip(&ds.c_j0_hat)
        .map(|(cj, &c0)| basis.matrix_from_coordinates(c0, cj))
        .collect();
    finish(rho_bar, povm_bar, cfg, diag)
}

fn normalizing_trace(rho: &CMat, j: usize) -> Result<num_complex::Complex64> {
    let t = linalg::trace(rho);
    if t.norm() < TRACE_TOL * rho.norm() || t.norm() == 0.0 {
        return Err(Error::at(Stage::ScaleFixing)(Error::Degenerate(format!(
            "state candidate {j} has trace {:.3e}",
            t.norm()
        ))));
    }
    Ok(t)
}

/// Natural-basis estimator with a freshly built stage-1 operator.
pub fn estimate_joint_v2(
    ds: &MeasurementDataset,
    b_natural: &CMat,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    let op = Stage1Operator::new(b_natural, &cfg.stage1, Some(ds.total_copies()))
        .map_err(Error::at(Stage::Regression))?;
    estimate_joint_v2_with(ds, &op, cfg)
}

/// Natural-basis estimator on the raw frequencies `ŷ`, reusing a stage-1 operator.
pub fn estimate_joint_v2_with(
    ds: &MeasurementDataset,
    op: &Stage1Operator<num_complex::Complex64>,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    ds.validate().map_err(Error::at(Stage::Targets))?;
    let cols = op.matrix().ncols();
    let d2 = (cols as f64).sqrt().round() as usize;
    let d = (d2 as f64).sqrt().round() as usize;
    if d * d * d * d != cols || d < 2 {
        return Err(Error::Shape(format!(
            "natural regression matrix has {cols} columns, not d⁴"
        )));
    }
    let m = ds.n_outcomes();
    let mut diag = empty_diagnostics(Version::V2, op, cfg, ds.total_copies());

    let mut zs = Vec::with_capacity(m);
    let mut facs = Vec::with_capacity(m);
    for j in 0..m {
        let y = CVec::from_iterator(ds.n_processes(), ds.y_hat.iter().map(|row| c(row[j], 0.0)));
        let z = op.solve(&y).map_err(Error::at(Stage::Regression))?;
        diag.stage1_residuals.push(op.residual(&y, &z));
        let fac = nearest_kronecker(&z, d2, d2).map_err(Error::at(Stage::Factorization))?;
        diag.kronecker_residuals.push(fac.residual);
        diag.top_singular_values
            .push(fac.top_singular_values.iter().take(3).cloned().collect());
        diag.singular_ties.push(fac.tie);
        zs.push(z);
        facs.push(fac);
    }

    let (avg, povm_parts) = if cfg.combine == CombineMode::Joint {
        let joint =
            nearest_kronecker_joint(&zs, d2, d2).map_err(Error::at(Stage::Factorization))?;
        let rho = devectorize(&joint.left).map_err(Error::at(Stage::Factorization))?;
        let t = normalizing_trace(&rho, 0)?;
        let mut parts = Vec::with_capacity(m);
        for r in &joint.rights {
            let p = devectorize(r)
                .map_err(Error::at(Stage::Factorization))?
                .transpose();
            parts.push(p * t);
        }
        (rho / t, parts)
    } else {
        let mut states = Vec::with_capacity(m);
        let mut parts = Vec::with_capacity(m);
        for (j, fac) in facs.iter().enumerate() {
            let rho = devectorize(&fac.left).map_err(Error::at(Stage::Factorization))?;
            let p = devectorize(&fac.right)
                .map_err(Error::at(Stage::Factorization))?
                .transpose();
            // per-candidate trace normalization aligns the complex phase across outcomes
            let t = normalizing_trace(&rho, j)?;
            states.push(rho / t);
            parts.push(p * t);
        }
        let flat: Vec<CVec> = states.iter().map(crate::basis::vectorize).collect();
        let avg =
            combine_state_estimates(&flat, cfg.combine).map_err(Error::at(Stage::ScaleFixing))?;
        let avg = devectorize(&avg).map_err(Error::at(Stage::ScaleFixing))?;
        diag.candidate_spread = states.iter().map(|s| (s - &avg).norm()).fold(0.0, f64::max);
        (avg, parts)
    };
    let sym = linalg::hermitian_part(&avg);
    let tr = linalg::trace(&sym).re;
    if tr.abs() < TRACE_TOL {
        return Err(Error::at(Stage::ScaleFixing)(Error::Degenerate(format!(
            "symmetrized state has trace {tr:.3e}"
        ))));
    }
    let rho_bar = sym / c(tr, 0.0);
    let povm_bar = povm_parts.iter().map(linalg::hermitian_part).collect();
    finish(rho_bar, povm_bar, cfg, diag)
}
