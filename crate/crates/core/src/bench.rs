//! Scenario presets and the MSE-versus-copies experiment harness.

use crate::basis::OperatorBasis;
use crate::channels::{
    build_regression_matrices, make_named_channel, ChannelKind, ProcessEnsemble, RegressionMatrices,
};
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_joint_v1_with, estimate_joint_v2_with, CombineMode, EstimateResult, EstimatorConfig,
    Stage1Config, Stage1Operator,
};
use crate::linalg::{self, c, CMat};
use crate::measurement::{
    simulate_dataset, DensityMatrix, MeasurementDataset, Povm, SimulationOptions,
};
use crate::random::{derive_seed, random_traceless_hermitian, rng_from_seed, rotated_diagonal};
use crate::refine::{refine_alternating, RefineOptions};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const PRESET_NAMES: [&str; 4] = [
    "one_qubit_closed_complete",
    "one_qubit_closed_incomplete",
    "one_qubit_pure_random",
    "two_qubit_mixed_unitary",
];

/// Default `N₀` grid of the experiments.
pub const DEFAULT_N0_GRID: [u64; 4] = [1_000, 10_000, 100_000, 1_000_000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleSpec {
    /// `exp(−iH·kΔt)` for `k = 1..n` and each Hamiltonian.
    Hamiltonians {
        #[serde(with = "crate::io::cmat_list")]
        hamiltonians: Vec<CMat>,
        dt: f64,
        n: usize,
    },
    /// Random trace-decreasing CP maps.
    RandomCp {
        d: usize,
        count: usize,
        rank: usize,
        seed: u64,
    },
    /// Mixtures of two unitary evolutions with fixed weights, one block of `n`
    /// sampling times per random Hamiltonian pair.
    MixedUnitary {
        d: usize,
        weights: Vec<f64>,
        pairs: usize,
        dt: f64,
        n: usize,
        seed: u64,
    },
}

impl EnsembleSpec {
    pub fn build(&self) -> Result<ProcessEnsemble> {
        match self {
            EnsembleSpec::Hamiltonians {
                hamiltonians,
                dt,
                n,
            } => ProcessEnsemble::from_hamiltonians(hamiltonians, *dt, *n),
            EnsembleSpec::RandomCp {
                d,
                count,
                rank,
                seed,
            } => {
                let chans = (0..*count)
                    .map(|a| {
                        make_named_channel(ChannelKind::RandomCp {
                            d: *d,
                            rank: *rank,
                            seed: derive_seed(*seed, &[a as u64]),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                ProcessEnsemble::new(chans)
            }
            EnsembleSpec::MixedUnitary {
                d,
                weights,
                pairs,
                dt,
                n,
                seed,
            } => {
                let mut rng = rng_from_seed(*seed);
                let sets: Vec<Vec<CMat>> = (0..*pairs)
                    .map(|_| {
                        (0..weights.len())
                            .map(|_| random_traceless_hermitian(*d, &mut rng))
                            .collect()
                    })
                    .collect();
                ProcessEnsemble::from_mixed_unitaries(weights, &sets, *dt, *n)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    V1,
    V2,
}

/// One estimator configuration evaluated on every simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpec {
    pub name: String,
    pub stage1: Stage1Config,
    /// Run the alternating refinement from the closed-form estimate.
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub combine: CombineMode,
}

impl ConfigSpec {
    pub fn new(name: &str, stage1: Stage1Config) -> Self {
        Self {
            name: name.to_string(),
            stage1,
            refine: false,
            combine: CombineMode::default(),
        }
    }

    pub fn with_combine(mut self, combine: CombineMode) -> Self {
        self.combine = combine;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub d: usize,
    pub ensemble: EnsembleSpec,
    /// Eigenvalues of the true state, rotated by a random unitary.
    pub truth_spectrum: Vec<f64>,
    /// Spectra of the first `M − 1` detector elements; the last element is the remainder.
    pub detector_spectra: Vec<Vec<f64>>,
    pub pipeline: Pipeline,
    pub pure: bool,
    /// Zero-based index of the anchor coordinate used by v1.
    pub anchor: usize,
    pub configs: Vec<ConfigSpec>,
    /// Whether the preset's regression matrix is expected to have full column rank.
    pub expect_complete: bool,
}

/// Fully materialized scenario.
#[derive(Debug, Clone)]
pub struct ScenarioInstance {
    pub scenario: Scenario,
    pub basis: OperatorBasis,
    pub ensemble: ProcessEnsemble,
    pub regression: RegressionMatrices,
    pub truth_state: DensityMatrix,
    pub truth_povm: Povm,
}

const STREAM_STATE: u64 = 0x51;
const STREAM_DETECTOR: u64 = 0x52;

impl Scenario {
    pub fn n_outcomes(&self) -> usize {
        self.detector_spectra.len() + 1
    }

    pub fn truth_state(&self) -> Result<DensityMatrix> {
        if self.truth_spectrum.len() != self.d {
            return Err(Error::Validation(
                "truth spectrum length must equal d".into(),
            ));
        }
        let mut rng = rng_from_seed(derive_seed(self.seed, &[STREAM_STATE]));
        DensityMatrix::new(linalg::hermitian_part(&rotated_diagonal(
            &self.truth_spectrum,
            &mut rng,
        )))
    }

    pub fn truth_povm(&self) -> Result<Povm> {
        let mut rng = rng_from_seed(derive_seed(self.seed, &[STREAM_DETECTOR]));
        let mut elements = Vec::with_capacity(self.n_outcomes());
        let mut rest = CMat::identity(self.d, self.d);
        for spec in &self.detector_spectra {
            if spec.len() != self.d {
                return Err(Error::Validation(
                    "detector spectrum length must equal d".into(),
                ));
            }
            let p = linalg::hermitian_part(&rotated_diagonal(spec, &mut rng));
            rest -= &p;
            elements.push(p);
        }
        elements.push(linalg::hermitian_part(&rest));
        Povm::new(elements)
    }

    pub fn instantiate(&self) -> Result<ScenarioInstance> {
        let basis = OperatorBasis::new(self.d)?;
        let ensemble = self.ensemble.build()?;
        if ensemble.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: ensemble.dim(),
            });
        }
        let regression = build_regression_matrices(&ensemble, &basis)?;
        Ok(ScenarioInstance {
            truth_state: self.truth_state()?,
            truth_povm: self.truth_povm()?,
            scenario: self.clone(),
            basis,
            ensemble,
            regression,
        })
    }

    /// Copies per shot budget: `N/N₀`.
    pub fn copies_per_n0(&self) -> Result<u64> {
        let ens = self.ensemble.build()?;
        Ok(crate::measurement::ShotPlan::uniform(1).total_copies(&ens.tp_flags()))
    }
}

fn pauli(k: usize) -> CMat {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match k {
        0 => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        1 => CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// `(σx±σy)/2, (σy±σz)/2, (σz+σx)/2`
pub fn five_qubit_hamiltonians() -> Vec<CMat> {
    let (x, y, z) = (pauli(0), pauli(1), pauli(2));
    let h = Complex64::new(0.5, 0.0);
    vec![
        (&x + &y) * h,
        (&x - &y) * h,
        (&y + &z) * h,
        (&y - &z) * h,
        (&z + &x) * h,
    ]
}

fn qubit_detector() -> Vec<Vec<f64>> {
    vec![vec![0.4, 0.1], vec![0.5, 0.1]]
}

/// Default scenario seeds; chosen so that the anchor coordinate of the true state is well away from zero.
fn default_seed(name: &str) -> u64 {
    match name {
        "two_qubit_mixed_unitary" => 0,
        _ => 7,
    }
}

pub fn preset(name: &str) -> Result<Scenario> {
    preset_with_seed(name, default_seed(name))
}

pub fn preset_with_seed(name: &str, seed: u64) -> Result<Scenario> {
    let auto_tikhonov = Stage1Config::tikhonov(None);
    let sc = match name {
        "one_qubit_closed_complete" => Scenario {
            name: name.into(),
            seed,
            d: 2,
            ensemble: EnsembleSpec::Hamiltonians {
                hamiltonians: five_qubit_hamiltonians(),
                dt: 1.0,
                n: 3,
            },
            truth_spectrum: vec![0.1, 0.9],
            detector_spectra: qubit_detector(),
            pipeline: Pipeline::V1,
            pure: false,
            anchor: 0,
            configs: vec![ConfigSpec::new("ls", Stage1Config::plain_ls())],
            expect_complete: true,
        },
        "one_qubit_closed_incomplete" => Scenario {
            name: name.into(),
            seed,
            d: 2,
            ensemble: EnsembleSpec::Hamiltonians {
                hamiltonians: five_qubit_hamiltonians().into_iter().take(3).collect(),
                dt: 1.0,
                n: 2,
            },
            truth_spectrum: vec![0.1, 0.9],
            detector_spectra: qubit_detector(),
            pipeline: Pipeline::V1,
            pure: false,
            anchor: 0,
            configs: vec![
                ConfigSpec::new("mp", Stage1Config::mp_inverse()),
                ConfigSpec::new("tikhonov", auto_tikhonov),
            ],
            expect_complete: false,
        },
        "one_qubit_pure_random" => Scenario {
            name: name.into(),
            seed,
            d: 2,
            ensemble: EnsembleSpec::RandomCp {
                d: 2,
                count: 17,
                rank: 2,
                seed: derive_seed(seed, &[0x17]),
            },
            truth_spectrum: vec![1.0, 0.0],
            detector_spectra: qubit_detector(),
            pipeline: Pipeline::V2,
            pure: true,
            anchor: 0,
            configs: vec![ConfigSpec::new("ls", Stage1Config::plain_ls())],
            expect_complete: true,
        },
        "two_qubit_mixed_unitary" => Scenario {
            name: name.into(),
            seed,
            d: 4,
            ensemble: EnsembleSpec::MixedUnitary {
                d: 4,
                weights: vec![0.3, 0.7],
                pairs: 30,
                dt: 1.0,
                n: 30,
                seed: derive_seed(seed, &[0x30]),
            },
            truth_spectrum: vec![0.1, 0.2, 0.3, 0.4],
            detector_spectra: vec![vec![0.1, 0.1, 0.1, 0.3], vec![0.1, 0.1, 0.1, 0.5]],
            pipeline: Pipeline::V1,
            pure: false,
            anchor: 0,
            configs: vec![ConfigSpec::new("ls", Stage1Config::plain_ls())],
            expect_complete: true,
        },
        _ => {
            return Err(Error::Validation(format!(
                "unknown scenario {name:?}; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(sc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    /// Total copies `N`.
    pub n: u64,
    pub n0: u64,
    pub mse_state: f64,
    pub se_state: f64,
    pub mse_povm: f64,
    pub se_povm: f64,
    /// Successful trials.
    pub trials: usize,
    /// Trials that failed with a degenerate-input error.
    pub failures: usize,
    /// Trials whose final state was not exactly rank one (pure scenarios only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_violations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseTable {
    pub config: String,
    pub rows: Vec<MseRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MseColumn {
    State,
    Povm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub n0_grid: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    pub exact: bool,
}

impl ExperimentOptions {
    pub fn new(n0_grid: &[u64], trials: usize, seed: u64) -> Self {
        Self {
            n0_grid: n0_grid.to_vec(),
            trials,
            seed,
            exact: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub options: ExperimentOptions,
    pub copies_per_n0: u64,
    pub rank_b: usize,
    pub rank_b_natural: usize,
    pub tables: Vec<MseTable>,
}

impl ExperimentReport {
    pub fn table(&self, config: &str) -> Option<&MseTable> {
        self.tables.iter().find(|t| t.config == config)
    }
}

fn mean_sem(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Squared Frobenius errors `(‖ρ̂−ρ‖², Σ_j‖P̂_j−P_j‖²)`.
pub fn squared_errors(
    est: &EstimateResult,
    truth_state: &DensityMatrix,
    truth_povm: &Povm,
) -> (f64, f64) {
    let es = (est.rho_hat.matrix() - truth_state.matrix()).norm_squared();
    let ep = est
        .povm_hat
        .elements()
        .iter()
        .zip(truth_povm.elements())
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    (es, ep)
}

enum Operator {
    Real(Stage1Operator<f64>),
    Complex(Stage1Operator<Complex64>),
}

impl ScenarioInstance {
    fn operator(&self, cfg: &Stage1Config, total_copies: u64) -> Result<Operator> {
        Ok(match self.scenario.pipeline {
            Pipeline::V1 => Operator::Real(Stage1Operator::new(
                &self.regression.b,
                cfg,
                Some(total_copies),
            )?),
            Pipeline::V2 => Operator::Complex(Stage1Operator::new(
                &self.regression.b_natural,
                cfg,
                Some(total_copies),
            )?),
        })
    }

    fn estimate(
        &self,
        ds: &MeasurementDataset,
        op: &Operator,
        spec: &ConfigSpec,
    ) -> Result<EstimateResult> {
        let cfg = EstimatorConfig {
            stage1: spec.stage1,
            combine: spec.combine,
            pure: self.scenario.pure,
            ..EstimatorConfig::default()
        };
        let est = match op {
            Operator::Real(op) => estimate_joint_v1_with(ds, op, &self.basis, &cfg)?,
            Operator::Complex(op) => estimate_joint_v2_with(ds, op, &cfg)?,
        };
        if spec.refine && self.scenario.pipeline == Pipeline::V1 {
            return Ok(refine_alternating(
                ds,
                &self.regression.b,
                &self.basis,
                &est,
                &RefineOptions::default(),
            )?
            .estimate);
        }
        Ok(est)
    }

    pub fn simulate(&self, n0: u64, seed: u64, exact: bool) -> Result<MeasurementDataset> {
        let mut opts = SimulationOptions::new(n0, seed);
        opts.anchor = self.scenario.anchor;
        opts.exact = exact;
        simulate_dataset(&self.ensemble, &self.truth_state, &self.truth_povm, &opts)
    }

    /// Runs a single configuration on one dataset.
    pub fn estimate_with(
        &self,
        ds: &MeasurementDataset,
        spec: &ConfigSpec,
    ) -> Result<EstimateResult> {
        let op = self.operator(&spec.stage1, ds.total_copies())?;
        self.estimate(ds, &op, spec)
    }
}

/// Simulates `trials` datasets per `N₀` and evaluates every configuration of the
/// scenario on the same datasets.
pub fn run_mse_experiment(sc: &Scenario, opts: &ExperimentOptions) -> Result<ExperimentReport> {
    if opts.trials < 2 {
        return Err(Error::Validation(
            "an MSE experiment needs at least 2 trials".into(),
        ));
    }
    if opts.n0_grid.is_empty()
        || opts.n0_grid.windows(2).any(|w| w[1] <= w[0])
        || opts.n0_grid[0] == 0
    {
        return Err(Error::Validation(
            "the N₀ grid must be positive and strictly increasing".into(),
        ));
    }
    let inst = sc.instantiate()?;
    let copies_per_n0 =
        crate::measurement::ShotPlan::uniform(1).total_copies(&inst.ensemble.tp_flags());
    let mut tables: Vec<MseTable> = sc
        .configs
        .iter()
        .map(|cfg| MseTable {
            config: cfg.name.clone(),
            rows: Vec::new(),
        })
        .collect();

    for (gi, &n0) in opts.n0_grid.iter().enumerate() {
        let total = copies_per_n0 * n0;
        let ops = sc
            .configs
            .iter()
            .map(|cfg| inst.operator(&cfg.stage1, total))
            .collect::<Result<Vec<_>>>()?;
        let mut state_err = vec![Vec::with_capacity(opts.trials); sc.configs.len()];
        let mut povm_err = vec![Vec::with_capacity(opts.trials); sc.configs.len()];
        let mut failures = vec![0usize; sc.configs.len()];
        let mut rank_violations = vec![0usize; sc.configs.len()];
        for t in 0..opts.trials {
            let seed = derive_seed(opts.seed, &[gi as u64, t as u64]);
            let ds = inst.simulate(n0, seed, opts.exact)?;
            for (ci, (cfg, op)) in sc.configs.iter().zip(&ops).enumerate() {
                match inst.estimate(&ds, op, cfg) {
                    Ok(est) => {
                        if sc.pure && linalg::numerical_rank(est.rho_hat.matrix()) != 1 {
                            rank_violations[ci] += 1;
                        }
                        let (es, ep) = squared_errors(&est, &inst.truth_state, &inst.truth_povm);
                        state_err[ci].push(es);
                        povm_err[ci].push(ep);
                    }
                    Err(e) if e.is_degenerate() => failures[ci] += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        for (ci, table) in tables.iter_mut().enumerate() {
            let (ms, ss) = mean_sem(&state_err[ci]);
            let (mp, sp) = mean_sem(&povm_err[ci]);
            table.rows.push(MseRow {
                n: total,
                n0,
                mse_state: ms,
                se_state: ss,
                mse_povm: mp,
                se_povm: sp,
                trials: state_err[ci].len(),
                failures: failures[ci],
                rank_violations: sc.pure.then_some(rank_violations[ci]),
            });
        }
    }
    Ok(ExperimentReport {
        scenario: sc.clone(),
        options: opts.clone(),
        copies_per_n0,
        rank_b: inst.regression.rank_b,
        rank_b_natural: inst.regression.rank_b_natural,
        tables,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Validation(
            "a log-log fit needs at least 3 paired points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Validation(
            "log-log fit needs positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Validation(
            "log-log fit needs distinct x values".into(),
        ));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        0.0
    };
    Ok(LogLogFit {
        slope,
        intercept,
        r2,
    })
}

pub fn fit_loglog_slope(table: &MseTable, column: MseColumn) -> Result<LogLogFit> {
    let xs: Vec<f64> = table.rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = table
        .rows
        .iter()
        .map(|r| match column {
            MseColumn::State => r.mse_state,
            MseColumn::Povm => r.mse_povm,
        })
        .collect();
    fit_loglog(&xs, &ys)
}

pub const CSV_HEADER: &str = "N,mse_state,se_state,mse_povm,se_povm,trials";

/// CSV with standard errors of the mean in the `se_*` columns.
pub fn table_to_csv(table: &MseTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{}",
            r.n, r.mse_state, r.se_state, r.mse_povm, r.se_povm, r.trials
        );
    }
    s
}

/// Writes one CSV per configuration plus `<scenario>.json` with the full metadata.
/// Returns the written paths.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut paths = Vec::new();
    for table in &report.tables {
        let path = dir.join(format!("{}_{}.csv", report.scenario.name, table.config));
        crate::io::write_text(&path, &table_to_csv(table))?;
        paths.push(path);
    }
    let meta = dir.join(format!("{}.json", report.scenario.name));
    crate::io::write_json(&meta, report)?;
    paths.push(meta);
    Ok(paths)
}
