//! Quantum processes: Kraus channels, their natural-basis superoperators
//! `𝓑 = Σ A_i* ⊗ A_i`, real transfer matrices in the operator basis, and the
//! probe-process families used for joint estimation.

use crate::basis::{vectorize, OperatorBasis, HERMITIAN_TOL};
use crate::error::{Error, Result};
use crate::linalg::{self, c, kron, CMat, RMat};
use crate::random::{haar_unitary, random_complex_matrix, rng_from_seed};

/// Tolerance on `Σ A†A ≤ I` and on trace preservation.
pub const CHANNEL_TOL: f64 = 1e-10;
/// Two channels belong to the same group when `‖𝓐_a − 𝓐_b‖` is below this.
pub const GROUP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    d: usize,
    kraus: Vec<CMat>,
    label: String,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMat>) -> Result<Self> {
        Self::with_label(kraus, String::new())
    }

    pub fn with_label(kraus: Vec<CMat>, label: impl Into<String>) -> Result<Self> {
        let Some(first) = kraus.first() else {
            return Err(Error::Validation(
                "a channel needs at least one Kraus operator".into(),
            ));
        };
        let d = first.nrows();
        if d == 0 {
            return Err(Error::Validation("empty Kraus operator".into()));
        }
        for k in &kraus {
            if k.nrows() != d || k.ncols() != d {
                return Err(Error::Shape(format!(
                    "Kraus operators must all be {d}x{d}, got {}x{}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        let ch = Self {
            d,
            kraus,
            label: label.into(),
        };
        let top = linalg::hermitian_eigen(&ch.sum_adag_a()).0[0];
        if top > 1.0 + CHANNEL_TOL {
            return Err(Error::Validation(format!(
                "Kraus operators violate Σ A†A ≤ I (largest eigenvalue {top})"
            )));
        }
        Ok(ch)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    /// `𝓐 = Σ A†A`
    pub fn sum_adag_a(&self) -> CMat {
        self.kraus
            .iter()
            .fold(CMat::zeros(self.d, self.d), |acc, a| acc + a.adjoint() * a)
    }

    /// `𝓔(I) = Σ A A†`
    pub fn sum_a_adag(&self) -> CMat {
        self.kraus
            .iter()
            .fold(CMat::zeros(self.d, self.d), |acc, a| acc + a * a.adjoint())
    }

    pub fn is_trace_preserving(&self) -> bool {
        (self.sum_adag_a() - CMat::identity(self.d, self.d)).norm() <= CHANNEL_TOL * self.d as f64
    }

    /// `Σ A ρ A†`
    pub fn apply(&self, rho: &CMat) -> CMat {
        self.kraus
            .iter()
            .fold(CMat::zeros(self.d, self.d), |acc, a| {
                acc + a * rho * a.adjoint()
            })
    }

    /// The same channel with every Kraus operator multiplied by `√alpha`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Validation(format!("scale {alpha} outside (0, 1]")));
        }
        let s = c(alpha.sqrt(), 0.0);
        Self::with_label(
            self.kraus.iter().map(|k| k * s).collect(),
            format!("scaled({alpha},{})", self.label),
        )
    }
}

/// `𝓑 = Σ A_i* ⊗ A_i`, so that `vec(𝓔(ρ)) = 𝓑 vec(ρ)`.
#[derive(Debug, Clone)]
pub struct NaturalSuperoperator {
    pub b: CMat,
}

pub fn superoperator(ch: &KrausChannel) -> NaturalSuperoperator {
    let n = ch.d * ch.d;
    let b = ch
        .kraus
        .iter()
        .fold(CMat::zeros(n, n), |acc, a| acc + kron(&a.conjugate(), a));
    NaturalSuperoperator { b }
}

/// `U 𝓑 U†` partitioned as `[[r, tᵀ], [h, E]]`.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub full: RMat,
    pub r: f64,
    pub t: linalg::RVec,
    pub h: linalg::RVec,
    pub e: RMat,
}

impl TransferMatrix {
    pub fn from_full(full: RMat) -> Self {
        let n = full.nrows() - 1;
        Self {
            r: full[(0, 0)],
            t: full.view((0, 1), (1, n)).transpose().column(0).into_owned(),
            h: full.view((1, 0), (n, 1)).column(0).into_owned(),
            e: full.view((1, 1), (n, n)).into_owned(),
            full,
        }
    }
}

pub fn transfer_matrix(ch: &KrausChannel, basis: &OperatorBasis) -> Result<TransferMatrix> {
    check_dim(basis, ch.d)?;
    let u = basis.change_of_basis().u;
    let full = &u * superoperator(ch).b * u.adjoint();
    let scale = full.norm().max(1.0);
    let max_im = full.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if max_im > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "transfer matrix has imaginary residue {max_im:.3e}"
        )));
    }
    Ok(TransferMatrix::from_full(full.map(|z| z.re)))
}

/// Generalized-unital test through the `h` block. Returns the flag and, when
/// set, the constant `α` with `𝓔(I) = αI`.
pub fn is_generalized_unital(
    ch: &KrausChannel,
    basis: &OperatorBasis,
    tol: f64,
) -> Result<(bool, Option<f64>)> {
    let tm = transfer_matrix(ch, basis)?;
    if tm.h.norm() <= tol {
        Ok((true, Some(tm.r)))
    } else {
        Ok((false, None))
    }
}

fn check_dim(basis: &OperatorBasis, d: usize) -> Result<()> {
    if basis.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: d,
        });
    }
    Ok(())
}

fn check_hamiltonian(h: &CMat, basis: &OperatorBasis) -> Result<()> {
    if h.nrows() != h.ncols() {
        return Err(Error::Shape("Hamiltonian must be square".into()));
    }
    check_dim(basis, h.nrows())?;
    let dev = linalg::hermiticity_error(h);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let tr = linalg::trace(h).norm();
    if tr > HERMITIAN_TOL * h.norm().max(1.0) {
        return Err(Error::Validation(format!(
            "Hamiltonian must be traceless (trace {tr:.3e})"
        )));
    }
    Ok(())
}

/// Real antisymmetric generator `R` of the coherence-vector dynamics `ẋ = R x`
/// under `ρ̇ = −i[H, ρ]`, with `R_jk = i·Tr([H, Ω_j] Ω_k)`.
pub fn hamiltonian_generator(h: &CMat, basis: &OperatorBasis) -> Result<RMat> {
    check_hamiltonian(h, basis)?;
    let n = basis.n_params();
    let mut r = RMat::zeros(n, n);
    for j in 0..n {
        let oj = basis.omega(j + 1);
        let comm = h * oj - oj * h;
        for k in 0..n {
            let v = c(0.0, 1.0) * linalg::trace(&(&comm * basis.omega(k + 1)));
            r[(j, k)] = v.re;
        }
    }
    Ok(r)
}

/// `[Q, Q², …, Qⁿ]` with `Q = exp(R Δt)`.
pub fn discretize_hamiltonian(r: &RMat, dt: f64, n: usize) -> Result<Vec<RMat>> {
    if n == 0 || !(dt > 0.0) {
        return Err(Error::Validation(format!(
            "need n ≥ 1 and Δt > 0 (got n={n}, Δt={dt})"
        )));
    }
    let q = (r * dt).exp();
    let mut out = Vec::with_capacity(n);
    let mut acc = q.clone();
    for _ in 0..n {
        out.push(acc.clone());
        acc = &acc * &q;
    }
    Ok(out)
}

/// `exp(−iHt)` through the spectral decomposition of `H`.
pub fn unitary_from_hamiltonian(h: &CMat, t: f64) -> CMat {
    let (vals, vecs) = linalg::hermitian_eigen(h);
    let d = vals.len();
    let phases = CMat::from_fn(d, d, |i, j| {
        if i == j {
            c(0.0, -vals[i] * t).exp()
        } else {
            c(0.0, 0.0)
        }
    });
    &vecs * phases * vecs.adjoint()
}

/// `E(t) = Σ σ_i exp(R_i t)` for a mixture of Hamiltonian evolutions.
pub fn mixed_unitary_transfer(
    weights: &[f64],
    hams: &[CMat],
    basis: &OperatorBasis,
    t: f64,
) -> Result<RMat> {
    if weights.len() != hams.len() || weights.is_empty() {
        return Err(Error::Validation("need one weight per Hamiltonian".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Validation("mixture weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if total > 1.0 + CHANNEL_TOL {
        return Err(Error::Validation(format!(
            "mixture weights sum to {total} > 1"
        )));
    }
    let n = basis.n_params();
    let mut e = RMat::zeros(n, n);
    for (&w, h) in weights.iter().zip(hams) {
        e += (hamiltonian_generator(h, basis)? * t).exp() * w;
    }
    Ok(e)
}

/// Kraus form of the mixture `ρ ↦ Σ σ_i U_i(t) ρ U_i(t)†`.
pub fn mixed_unitary_channel(weights: &[f64], hams: &[CMat], t: f64) -> Result<KrausChannel> {
    if weights.iter().any(|&w| !(w > 0.0)) || weights.len() != hams.len() {
        return Err(Error::Validation(
            "mixture weights must be positive, one per Hamiltonian".into(),
        ));
    }
    let kraus = weights
        .iter()
        .zip(hams)
        .map(|(&w, h)| unitary_from_hamiltonian(h, t) * c(w.sqrt(), 0.0))
        .collect();
    KrausChannel::with_label(kraus, format!("mixed-unitary t={t}"))
}

#[derive(Debug, Clone)]
pub enum ChannelKind {
    BitFlip(f64),
    PhaseFlip(f64),
    /// Random trace-decreasing CP map with `rank` Kraus operators.
    RandomCp {
        d: usize,
        rank: usize,
        seed: u64,
    },
    /// Random trace-preserving channel with `rank` Kraus operators.
    RandomTp {
        d: usize,
        rank: usize,
        seed: u64,
    },
    Unitary(CMat),
    Scaled(f64, Box<KrausChannel>),
}

pub fn make_named_channel(kind: ChannelKind) -> Result<KrausChannel> {
    let prob = |p: f64| {
        if (0.0..=1.0).contains(&p) {
            Ok(())
        } else {
            Err(Error::Validation(format!("probability {p} outside [0, 1]")))
        }
    };
    match kind {
        ChannelKind::BitFlip(p) => {
            prob(p)?;
            let x = CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
            KrausChannel::with_label(
                vec![
                    CMat::identity(2, 2) * c(p.sqrt(), 0.0),
                    x * c((1.0 - p).sqrt(), 0.0),
                ],
                format!("bit-flip p={p}"),
            )
        }
        ChannelKind::PhaseFlip(p) => {
            prob(p)?;
            let z = CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]);
            KrausChannel::with_label(
                vec![
                    CMat::identity(2, 2) * c(p.sqrt(), 0.0),
                    z * c((1.0 - p).sqrt(), 0.0),
                ],
                format!("phase-flip p={p}"),
            )
        }
        ChannelKind::RandomTp { d, rank, seed } => {
            let (gs, s_inv_half) = random_kraus_seed(d, rank, seed)?;
            let kraus = gs.iter().map(|g| g * &s_inv_half).collect();
            KrausChannel::with_label(kraus, format!("random-tp d={d} rank={rank} seed={seed}"))
        }
        ChannelKind::RandomCp { d, rank, seed } => {
            let (gs, s_inv_half) = random_kraus_seed(d, rank, seed)?;
            // Σ K†K = T with spectrum in [0.3, 0.95] and a random eigenbasis
            let mut rng = rng_from_seed(crate::random::derive_seed(seed, &[0xc0ffee]));
            let spectrum: Vec<f64> = (0..d)
                .map(|_| rand::Rng::gen_range(&mut rng, 0.3..0.95))
                .collect();
            let v = haar_unitary(d, &mut rng);
            let sqrt_t = crate::random::with_spectrum(
                &v,
                &spectrum.iter().map(|x: &f64| x.sqrt()).collect::<Vec<_>>(),
            );
            let kraus = gs.iter().map(|g| g * &s_inv_half * &sqrt_t).collect();
            KrausChannel::with_label(kraus, format!("random-cp d={d} rank={rank} seed={seed}"))
        }
        ChannelKind::Unitary(u) => {
            let d = u.nrows();
            if u.ncols() != d || (&u * u.adjoint() - CMat::identity(d, d)).norm() > 1e-9 {
                return Err(Error::Validation("matrix is not unitary".into()));
            }
            KrausChannel::with_label(vec![u], "unitary")
        }
        ChannelKind::Scaled(alpha, ch) => ch.scaled(alpha),
    }
}

fn random_kraus_seed(d: usize, rank: usize, seed: u64) -> Result<(Vec<CMat>, CMat)> {
    if d < 1 || rank < 1 {
        return Err(Error::Validation(
            "random channel needs d ≥ 1 and rank ≥ 1".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let gs: Vec<CMat> = (0..rank)
        .map(|_| random_complex_matrix(d, d, &mut rng))
        .collect();
    let s = gs
        .iter()
        .fold(CMat::zeros(d, d), |acc, g| acc + g.adjoint() * g);
    let s_inv_half = linalg::hermitian_map(&s, |x| 1.0 / x.sqrt());
    Ok((gs, s_inv_half))
}

/// The four CP maps splitting a Pauli-sandwich process.
#[derive(Debug, Clone)]
pub struct PauliSandwich {
    pub phi1_plus: KrausChannel,
    pub phi1_minus: KrausChannel,
    pub phi2_plus: KrausChannel,
    pub phi2_minus: KrausChannel,
    /// Largest `g` for which all four maps are trace non-increasing.
    pub max_g: f64,
}

impl PauliSandwich {
    /// `(Φ₁⁺ − Φ₁⁻)(ρ) − i(Φ₂⁺ − Φ₂⁻)(ρ)`, which equals `g·V1 ρ V2*`.
    pub fn combined_action(&self, rho: &CMat) -> CMat {
        let p1 = self.phi1_plus.apply(rho) - self.phi1_minus.apply(rho);
        let p2 = self.phi2_plus.apply(rho) - self.phi2_minus.apply(rho);
        p1 - p2 * c(0.0, 1.0)
    }
}

/// Choi matrix `Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)` of a linear map on `d × d` matrices.
pub fn choi_matrix(d: usize, map: impl Fn(&CMat) -> CMat) -> CMat {
    let mut j = CMat::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            let mut e = CMat::zeros(d, d);
            e[(a, b)] = c(1.0, 0.0);
            let out = map(&e);
            j.view_mut((a * d, b * d), (d, d)).copy_from(&out);
        }
    }
    j
}

/// Splits a Hermitian Choi matrix into the Kraus operators of its positive and
/// negative parts.
fn signed_kraus(choi: &CMat, d: usize) -> (Vec<CMat>, Vec<CMat>) {
    let (vals, vecs) = linalg::hermitian_eigen(choi);
    let cutoff = 1e-14 * vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= cutoff {
            continue;
        }
        let v = vecs.column(k);
        let a = CMat::from_fn(d, d, |r, i| v[i * d + r] * lam.abs().sqrt());
        if lam > 0.0 {
            plus.push(a);
        } else {
            minus.push(a);
        }
    }
    (plus, minus)
}

fn kraus_or_zero(kraus: Vec<CMat>, d: usize) -> Vec<CMat> {
    if kraus.is_empty() {
        vec![CMat::zeros(d, d)]
    } else {
        kraus
    }
}

/// CP decomposition of `ρ ↦ g V1 ρ V2*` into four physically realizable maps.
pub fn pauli_sandwich_processes(v1: &CMat, v2: &CMat, g: f64) -> Result<PauliSandwich> {
    let d = v1.nrows();
    for v in [v1, v2] {
        if v.nrows() != d || v.ncols() != d {
            return Err(Error::Shape(
                "Pauli unitaries must share a square shape".into(),
            ));
        }
        if linalg::hermiticity_error(v) > HERMITIAN_TOL
            || (v * v - CMat::identity(d, d)).norm() > 1e-9
        {
            return Err(Error::Validation(
                "Pauli unitaries must be Hermitian and unitary".into(),
            ));
        }
    }
    if !(g > 0.0) {
        return Err(Error::Validation(format!("g must be positive, got {g}")));
    }
    let w = v2.conjugate();
    let half = c(0.5, 0.0);
    let e1 = |rho: &CMat| (v1 * rho * &w + &w * rho * v1) * half;
    let e2 = |rho: &CMat| (v1 * rho * &w - &w * rho * v1) * c(0.0, 0.5);
    let (p1, m1) = signed_kraus(&choi_matrix(d, e1), d);
    let (p2, m2) = signed_kraus(&choi_matrix(d, e2), d);

    let parts = [p1, m1, p2, m2];
    let mut max_g = f64::INFINITY;
    for ks in &parts {
        if ks.is_empty() {
            continue;
        }
        let a = ks
            .iter()
            .fold(CMat::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        let top = linalg::hermitian_eigen(&a).0[0];
        if top > 0.0 {
            max_g = max_g.min(1.0 / top);
        }
    }
    if g > max_g * (1.0 + 1e-12) {
        return Err(Error::Validation(format!(
            "g = {g} makes a component map trace-increasing; maximal admissible g is {max_g}"
        )));
    }
    let s = c(g.sqrt(), 0.0);
    let names = ["phi1+", "phi1-", "phi2+", "phi2-"];
    let mut chans = parts
        .into_iter()
        .zip(names)
        .map(|(ks, name)| {
            let scaled = kraus_or_zero(ks.into_iter().map(|k| k * s).collect(), d);
            KrausChannel::with_label(scaled, name)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    Ok(PauliSandwich {
        phi1_plus: chans.next().unwrap(),
        phi1_minus: chans.next().unwrap(),
        phi2_plus: chans.next().unwrap(),
        phi2_minus: chans.next().unwrap(),
        max_g,
    })
}

/// Ordered list of known processes sharing one dimension.
#[derive(Debug, Clone)]
pub struct ProcessEnsemble {
    d: usize,
    channels: Vec<KrausChannel>,
}

impl ProcessEnsemble {
    pub fn new(channels: Vec<KrausChannel>) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::Validation(
                "ensemble must contain at least one channel".into(),
            ));
        };
        let d = first.dim();
        if let Some(bad) = channels.iter().find(|ch| ch.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.dim(),
            });
        }
        Ok(Self { d, channels })
    }

    /// Unitary evolutions `exp(−iH kΔt)`, `k = 1..n`, for each Hamiltonian in turn.
    pub fn from_hamiltonians(hams: &[CMat], dt: f64, n: usize) -> Result<Self> {
        let mut chans = Vec::with_capacity(hams.len() * n);
        for (i, h) in hams.iter().enumerate() {
            for k in 1..=n {
                let u = unitary_from_hamiltonian(h, k as f64 * dt);
                chans.push(KrausChannel::with_label(
                    vec![u],
                    format!("H{} k={k}", i + 1),
                )?);
            }
        }
        Self::new(chans)
    }

    /// Mixed-unitary processes sampled at `t = kΔt`, `k = 1..n`, one block per
    /// set of Hamiltonians.
    pub fn from_mixed_unitaries(
        weights: &[f64],
        ham_sets: &[Vec<CMat>],
        dt: f64,
        n: usize,
    ) -> Result<Self> {
        let mut chans = Vec::with_capacity(ham_sets.len() * n);
        for (i, hams) in ham_sets.iter().enumerate() {
            for k in 1..=n {
                let mut ch = mixed_unitary_channel(weights, hams, k as f64 * dt)?;
                ch.set_label(format!("mix{} k={k}", i + 1));
                chans.push(ch);
            }
        }
        Self::new(chans)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[KrausChannel] {
        &self.channels
    }

    pub fn labels(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.label()).collect()
    }

    pub fn tp_flags(&self) -> Vec<bool> {
        self.channels
            .iter()
            .map(|c| c.is_trace_preserving())
            .collect()
    }

    /// Group sizes `L_j` under equality of `𝓐 = Σ A†A`.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut reps: Vec<(CMat, usize)> = Vec::new();
        for ch in &self.channels {
            let a = ch.sum_adag_a();
            match reps.iter_mut().find(|(r, _)| (r - &a).norm() < GROUP_TOL) {
                Some((_, n)) => *n += 1,
                None => reps.push((a, 1)),
            }
        }
        reps.into_iter().map(|(_, n)| n).collect()
    }
}

/// Stacked regression matrices and their rank diagnostics.
#[derive(Debug, Clone)]
pub struct RegressionMatrices {
    /// `L × (d²−1)²`, rows `vec(E_a)ᵀ`.
    pub b: RMat,
    /// `L × d⁴`, rows `vec(𝓑_a)ᵀ`.
    pub b_natural: CMat,
    pub rank_b: usize,
    pub rank_b_natural: usize,
    pub complete_v1: bool,
    pub complete_v2: bool,
}

pub fn build_regression_matrices(
    ens: &ProcessEnsemble,
    basis: &OperatorBasis,
) -> Result<RegressionMatrices> {
    check_dim(basis, ens.dim())?;
    let d = ens.dim();
    let n = basis.n_params();
    let l = ens.len();
    let mut b = RMat::zeros(l, n * n);
    let mut b_natural = CMat::zeros(l, d.pow(4));
    for (a, ch) in ens.channels().iter().enumerate() {
        let sup = superoperator(ch);
        let tm = transfer_matrix(ch, basis)?;
        b.row_mut(a).copy_from_slice(tm.e.as_slice());
        let v = vectorize(&sup.b);
        for (k, z) in v.iter().enumerate() {
            b_natural[(a, k)] = *z;
        }
    }
    let rank_b = linalg::numerical_rank(&b);
    let rank_b_natural = linalg::numerical_rank(&b_natural);
    Ok(RegressionMatrices {
        complete_v1: rank_b == n * n,
        complete_v2: rank_b_natural == d.pow(4),
        b,
        b_natural,
        rank_b,
        rank_b_natural,
    })
}

/// Upper bound `min(Σ_j min(L_j, d⁴ − d² + 1), d⁴)` on `rank(𝓑)`.
pub fn rank_bound(ens: &ProcessEnsemble) -> usize {
    let d4 = ens.dim().pow(4);
    let cap = d4 - ens.dim().pow(2) + 1;
    let s: usize = ens.group_sizes().into_iter().map(|lj| lj.min(cap)).sum();
    s.min(d4)
}

/// Minimum number of distinct Hamiltonians for a complete `B`, and the
/// minimum number of sampling points per Hamiltonian, `d² − d + 1`.
pub fn min_hamiltonian_count(d: usize) -> (usize, usize) {
    let num = (d * d - 1).pow(2);
    let den = d * d - d + 1;
    (num.div_ceil(den), den)
}
