//! States, detectors, Born-rule statistics and finite-shot simulation of the
//! data-collection protocol.
//!
//! For every process `a` the output state is measured with the unknown detector
//! (`ŷ_aj`). Trace-decreasing outputs are modeled with an extra loss outcome,
//! and their trace `x_a0 = Tr(ρ_a)/√d` is estimated separately with the
//! two-outcome measurement `{I, loss}`. The detector's trace part `C_j0` is
//! estimated by measuring the maximally mixed state, and one coordinate
//! `x_{0,k}` of the input state (the scale anchor) is estimated by a projective
//! measurement of `Ω_k` in its eigenbasis.

use crate::basis::OperatorBasis;
use crate::channels::ProcessEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::random::{derive_seed, rng_from_seed};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

pub const STATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: CMat,
}

impl DensityMatrix {
    /// Validates Hermiticity, positivity (min eigenvalue ≥ −1e−10) and unit trace.
    pub fn new(rho: CMat) -> Result<Self> {
        if rho.nrows() != rho.ncols() || rho.nrows() == 0 {
            return Err(Error::Shape("density matrix must be square".into()));
        }
        let dev = linalg::hermiticity_error(&rho);
        if dev > crate::basis::HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let rho = linalg::hermitian_part(&rho);
        let tr = linalg::trace(&rho).re;
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::Validation(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        let min = linalg::min_eigenvalue(&rho);
        if min < -STATE_TOL {
            return Err(Error::Validation(format!(
                "density matrix is not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        Ok(Self { rho })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            rho: CMat::identity(d, d) * c(1.0 / d as f64, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.rho
    }

    pub fn into_matrix(self) -> CMat {
        self.rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    elements: Vec<CMat>,
}

impl Povm {
    /// Validates that every element is Hermitian and PSD and that they sum to `I`.
    pub fn new(elements: Vec<CMat>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::Validation(
                "a POVM needs at least one element".into(),
            ));
        };
        let d = first.nrows();
        let mut sum = CMat::zeros(d, d);
        let mut clean = Vec::with_capacity(elements.len());
        for (j, p) in elements.iter().enumerate() {
            if p.nrows() != d || p.ncols() != d {
                return Err(Error::Shape(format!("POVM element {j} is not {d}x{d}")));
            }
            let dev = linalg::hermiticity_error(p);
            if dev > crate::basis::HERMITIAN_TOL {
                return Err(Error::NotHermitian(dev));
            }
            let p = linalg::hermitian_part(p);
            let min = linalg::min_eigenvalue(&p);
            if min < -STATE_TOL {
                return Err(Error::Validation(format!(
                    "POVM element {j} is not positive semidefinite (min eigenvalue {min:.3e})"
                )));
            }
            sum += &p;
            clean.push(p);
        }
        let dev = (sum - CMat::identity(d, d)).norm();
        if dev > STATE_TOL {
            return Err(Error::Validation(format!(
                "POVM elements do not sum to identity (deviation {dev:.3e})"
            )));
        }
        Ok(Self { elements: clean })
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMat] {
        &self.elements
    }

    /// Computational-basis projective measurement.
    pub fn computational(d: usize) -> Self {
        let elements = (0..d)
            .map(|k| {
                let mut p = CMat::zeros(d, d);
                p[(k, k)] = c(1.0, 0.0);
                p
            })
            .collect();
        Self { elements }
    }
}

/// `p_j = Tr(P_j ρ)` for a (possibly subnormalized) state.
pub fn born_probabilities(rho: &CMat, povm: &Povm) -> Result<Vec<f64>> {
    if rho.nrows() != povm.dim() || rho.ncols() != povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: povm.dim(),
            got: rho.nrows(),
        });
    }
    Ok(povm
        .elements
        .iter()
        .map(|p| {
            let v = crate::basis::inner(p, rho).re;
            if v < 0.0 && v > -1e-12 {
                0.0
            } else {
                v
            }
        })
        .collect())
}

/// One multinomial draw of `n0` shots over the outcomes in `p` plus an implicit
/// loss outcome carrying `1 − Σp`. Returns the observed frequencies of the
/// listed outcomes only.
pub fn sample_frequencies_with<R: Rng + ?Sized>(
    p: &[f64],
    n0: u64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n0 == 0 {
        return Err(Error::Validation("shot count must be positive".into()));
    }
    if let Some(bad) = p.iter().find(|&&x| x < -1e-12 || !x.is_finite()) {
        return Err(Error::Validation(format!("invalid probability {bad}")));
    }
    let total: f64 = p.iter().map(|x| x.max(0.0)).sum();
    if total > 1.0 + 1e-9 {
        return Err(Error::Validation(format!(
            "probabilities sum to {total} > 1"
        )));
    }
    let mut remaining_n = n0;
    let mut remaining_p = total.max(1.0);
    let mut out = Vec::with_capacity(p.len());
    for &pj in p {
        let pj = pj.max(0.0);
        let count = if remaining_n == 0 || pj <= 0.0 {
            0
        } else {
            let q = (pj / remaining_p).min(1.0);
            Binomial::new(remaining_n, q)
                .map_err(|e| Error::Numerical(format!("binomial sampling failed: {e}")))?
                .sample(rng)
        };
        remaining_n -= count;
        remaining_p = (remaining_p - pj).max(0.0);
        out.push(count as f64 / n0 as f64);
    }
    Ok(out)
}

pub fn sample_frequencies(p: &[f64], n0: u64, seed: u64) -> Result<Vec<f64>> {
    sample_frequencies_with(p, n0, &mut rng_from_seed(seed))
}

/// Shot budget per measurement configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotPlan {
    /// Shots per process for the detector statistics `ŷ_aj`.
    pub outputs: u64,
    /// Shots per trace-decreasing process for `x̂_a0`.
    pub output_traces: u64,
    /// Shots on the maximally mixed state for `Ĉ_j0`.
    pub detector_traces: u64,
    /// Shots for the anchor coordinate `x̄_{0,k}`.
    pub anchor: u64,
}

impl ShotPlan {
    pub fn uniform(n0: u64) -> Self {
        Self {
            outputs: n0,
            output_traces: n0,
            detector_traces: n0,
            anchor: n0,
        }
    }

    pub fn total_copies(&self, tp_flags: &[bool]) -> u64 {
        let l = tp_flags.len() as u64;
        let non_tp = tp_flags.iter().filter(|&&tp| !tp).count() as u64;
        l * self.outputs + non_tp * self.output_traces + self.detector_traces + self.anchor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementDataset {
    /// `L × M` observed frequencies.
    pub y_hat: Vec<Vec<f64>>,
    /// Estimated `Tr(ρ_a)/√d`; exactly `1/√d` for trace-preserving processes.
    pub x_a0_hat: Vec<f64>,
    pub c_j0_hat: Vec<f64>,
    /// Estimate of the anchor coordinate `x_{0,anchor+1}`.
    pub x01_bar: f64,
    pub n0: u64,
    pub tp_flags: Vec<bool>,
    /// Zero-based index into the traceless coordinates of the anchor observable.
    #[serde(default)]
    pub anchor: usize,
    #[serde(default)]
    pub shots: Option<ShotPlan>,
    #[serde(default)]
    pub exact: bool,
}

impl MeasurementDataset {
    pub fn n_processes(&self) -> usize {
        self.y_hat.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.c_j0_hat.len()
    }

    pub fn shot_plan(&self) -> ShotPlan {
        self.shots.unwrap_or_else(|| ShotPlan::uniform(self.n0))
    }

    /// Total number of state copies consumed.
    pub fn total_copies(&self) -> u64 {
        self.shot_plan().total_copies(&self.tp_flags)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.y_hat.len();
        let m = self.c_j0_hat.len();
        if l == 0 || m == 0 {
            return Err(Error::Validation(
                "dataset has no processes or no outcomes".into(),
            ));
        }
        if self.x_a0_hat.len() != l || self.tp_flags.len() != l {
            return Err(Error::Validation(format!(
                "x_a0_hat/tp_flags must have one entry per process ({l})"
            )));
        }
        for (a, row) in self.y_hat.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Validation(format!(
                    "y_hat row {a} has {} entries, expected {m}",
                    row.len()
                )));
            }
            let s: f64 = row.iter().sum();
            if s > 1.0 + 1e-9 {
                return Err(Error::Validation(format!("y_hat row {a} sums to {s} > 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub shots: ShotPlan,
    pub seed: u64,
    /// Zero-based index of the anchor coordinate `x_{0,k}`.
    pub anchor: usize,
    /// Noiseless mode: every estimate equals its ideal value.
    pub exact: bool,
}

impl SimulationOptions {
    pub fn new(n0: u64, seed: u64) -> Self {
        Self {
            shots: ShotPlan::uniform(n0),
            seed,
            anchor: 0,
            exact: false,
        }
    }

    pub fn exact() -> Self {
        Self {
            exact: true,
            ..Self::new(1, 0)
        }
    }
}

const STREAM_OUTPUTS: u64 = 1;
const STREAM_TRACES: u64 = 2;
const STREAM_DETECTOR: u64 = 3;
const STREAM_ANCHOR: u64 = 4;

pub fn simulate_dataset(
    ens: &ProcessEnsemble,
    truth_state: &DensityMatrix,
    truth_povm: &Povm,
    opts: &SimulationOptions,
) -> Result<MeasurementDataset> {
    let d = ens.dim();
    if truth_state.dim() != d || truth_povm.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if truth_state.dim() != d {
                truth_state.dim()
            } else {
                truth_povm.dim()
            },
        });
    }
    if opts.anchor >= d * d - 1 {
        return Err(Error::Validation(format!(
            "anchor index {} out of range 0..{}",
            opts.anchor,
            d * d - 1
        )));
    }
    let sqrt_d = (d as f64).sqrt();
    let rho0 = truth_state.matrix();
    let tp_flags = ens.tp_flags();

    let mut y_hat = Vec::with_capacity(ens.len());
    let mut x_a0_hat = Vec::with_capacity(ens.len());
    for (a, ch) in ens.channels().iter().enumerate() {
        let rho_a = ch.apply(rho0);
        let p = born_probabilities(&rho_a, truth_povm)?;
        let tr = linalg::trace(&rho_a).re;
        if opts.exact {
            y_hat.push(p);
        } else {
            let mut rng = rng_from_seed(derive_seed(opts.seed, &[STREAM_OUTPUTS, a as u64]));
            y_hat.push(sample_frequencies_with(&p, opts.shots.outputs, &mut rng)?);
        }
        let x0 = if tp_flags[a] {
            1.0 / sqrt_d
        } else if opts.exact {
            tr / sqrt_d
        } else {
            let mut rng = rng_from_seed(derive_seed(opts.seed, &[STREAM_TRACES, a as u64]));
            sample_frequencies_with(&[tr.clamp(0.0, 1.0)], opts.shots.output_traces, &mut rng)?[0]
                / sqrt_d
        };
        x_a0_hat.push(x0);
    }

    let mixed = DensityMatrix::maximally_mixed(d);
    let p_mixed = born_probabilities(mixed.matrix(), truth_povm)?;
    let c_j0_hat = if opts.exact {
        p_mixed.iter().map(|p| p * sqrt_d).collect()
    } else {
        let mut rng = rng_from_seed(derive_seed(opts.seed, &[STREAM_DETECTOR]));
        sample_frequencies_with(&p_mixed, opts.shots.detector_traces, &mut rng)?
            .into_iter()
            .map(|f| f * sqrt_d)
            .collect()
    };

    let basis = OperatorBasis::new(d)?;
    let x01_bar = measure_anchor(&basis, rho0, opts)?;

    Ok(MeasurementDataset {
        y_hat,
        x_a0_hat,
        c_j0_hat,
        x01_bar,
        n0: opts.shots.outputs,
        tp_flags,
        anchor: opts.anchor,
        shots: Some(opts.shots),
        exact: opts.exact,
    })
}

/// Projective measurement of `Ω_{k+1}` in its eigenbasis; returns `Σ λ f_λ`.
fn measure_anchor(basis: &OperatorBasis, rho: &CMat, opts: &SimulationOptions) -> Result<f64> {
    let omega = basis.omega(opts.anchor + 1);
    if opts.exact {
        return Ok(crate::basis::inner(omega, rho).re);
    }
    let (vals, vecs) = linalg::hermitian_eigen(omega);
    let probs: Vec<f64> = (0..vals.len())
        .map(|k| {
            let v = vecs.column(k);
            (v.adjoint() * rho * v)[(0, 0)].re.clamp(0.0, 1.0)
        })
        .collect();
    let total: f64 = probs.iter().sum();
    let probs: Vec<f64> = probs.iter().map(|p| p / total.max(1.0)).collect();
    let mut rng = rng_from_seed(derive_seed(opts.seed, &[STREAM_ANCHOR]));
    let freqs = sample_frequencies_with(&probs, opts.shots.anchor, &mut rng)?;
    Ok(freqs.iter().zip(&vals).map(|(f, l)| f * l).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{make_named_channel, ChannelKind, KrausChannel};
    use crate::random::random_density;

    fn qubit_povm() -> Povm {
        Povm::computational(2)
    }

    #[test]
    fn born_rule_basic() {
        let mixed = DensityMatrix::maximally_mixed(2);
        let p = born_probabilities(mixed.matrix(), &qubit_povm()).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        let zero = CMat::from_fn(2, 2, |i, j| {
            if i == 0 && j == 0 {
                c(1., 0.)
            } else {
                c(0., 0.)
            }
        });
        let p = born_probabilities(&zero, &qubit_povm()).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        assert!(born_probabilities(&CMat::identity(3, 3), &qubit_povm()).is_err());
    }

    #[test]
    fn density_and_povm_validation() {
        assert!(DensityMatrix::new(CMat::identity(2, 2)).is_err());
        let neg = CMat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(1.1, 0.),
            (1, 1) => c(-0.1, 0.),
            _ => c(0., 0.),
        });
        assert!(DensityMatrix::new(neg).is_err());
        let half = CMat::identity(2, 2) * c(0.5, 0.0);
        assert!(Povm::new(vec![half.clone()]).is_err());
        assert!(Povm::new(vec![half.clone(), half]).is_ok());
    }

    #[test]
    fn sampling_degenerate_and_concentrated() {
        let f = sample_frequencies(&[1.0, 0.0], 1000, 3).unwrap();
        assert_eq!(f, vec![1.0, 0.0]);
        let f = sample_frequencies(&[0.5, 0.5], 1_000_000, 4).unwrap();
        assert!(f.iter().all(|x| (x - 0.5).abs() < 0.005));
        let f = sample_frequencies(&[0.3, 0.4], 1_000_000, 5).unwrap();
        let s: f64 = f.iter().sum();
        assert!(s <= 1.0 && (s - 0.7).abs() < 0.005);
        assert!(sample_frequencies(&[-0.1, 1.1], 10, 0).is_err());
        assert!(sample_frequencies(&[0.7, 0.7], 10, 0).is_err());
        assert_eq!(
            sample_frequencies(&[0.2, 0.8], 77, 9).unwrap(),
            sample_frequencies(&[0.2, 0.8], 77, 9).unwrap()
        );
    }

    #[test]
    fn copy_accounting() {
        let plan = ShotPlan::uniform(100);
        assert_eq!(plan.total_copies(&[true; 15]), 17 * 100);
        assert_eq!(plan.total_copies(&[false; 17]), 36 * 100);
    }

    #[test]
    fn exact_dataset_matches_ideal_values() {
        let mut rng = rng_from_seed(1);
        let rho = DensityMatrix::new(random_density(2, 2, &mut rng)).unwrap();
        let chans = vec![
            make_named_channel(ChannelKind::RandomCp {
                d: 2,
                rank: 2,
                seed: 3,
            })
            .unwrap(),
            KrausChannel::new(vec![CMat::identity(2, 2)]).unwrap(),
        ];
        let ens = ProcessEnsemble::new(chans).unwrap();
        let povm = qubit_povm();
        let ds = simulate_dataset(&ens, &rho, &povm, &SimulationOptions::exact()).unwrap();
        ds.validate().unwrap();
        let out = ens.channels()[0].apply(rho.matrix());
        let tr = linalg::trace(&out).re;
        assert!((ds.x_a0_hat[0] - tr / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(ds.x_a0_hat[1], 1.0 / 2f64.sqrt());
        assert_eq!(ds.tp_flags, vec![false, true]);
        let basis = OperatorBasis::new(2).unwrap();
        let x = basis.state_to_coords(rho.matrix()).unwrap().x;
        assert!((ds.x01_bar - x[0]).abs() < 1e-15);
        assert!((ds.c_j0_hat[0] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sampled_dataset_is_deterministic() {
        let mut rng = rng_from_seed(2);
        let rho = DensityMatrix::new(random_density(2, 2, &mut rng)).unwrap();
        let ens = ProcessEnsemble::new(vec![make_named_channel(ChannelKind::RandomCp {
            d: 2,
            rank: 2,
            seed: 3,
        })
        .unwrap()])
        .unwrap();
        let opts = SimulationOptions::new(1000, 42);
        let a = simulate_dataset(&ens, &rho, &qubit_povm(), &opts).unwrap();
        let b = simulate_dataset(&ens, &rho, &qubit_povm(), &opts).unwrap();
        assert_eq!(a, b);
        let bad = SimulationOptions { anchor: 3, ..opts };
        assert!(simulate_dataset(&ens, &rho, &qubit_povm(), &bad).is_err());
    }
}
