mod common;

use common::{eigenvalues, rng};
use jtomo::basis::OperatorBasis;
use jtomo::bench::{preset, ScenarioInstance};
use jtomo::channels::ProcessEnsemble;
use jtomo::estimator::*;
use jtomo::linalg::{c, kron_vec, CMat, RMat, RVec};
use jtomo::measurement::{simulate_dataset, DensityMatrix, Povm, SimulationOptions};
use jtomo::random::{haar_unitary, random_density, with_spectrum};
use proptest::prelude::*;
use rand::Rng;
use std::time::Instant;

fn instance(name: &str) -> ScenarioInstance {
    preset(name).unwrap().instantiate().unwrap()
}

fn povm_dist(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).sum()
}

fn assert_physical(rho: &DensityMatrix, povm: &Povm) {
    let d = rho.dim();
    let m = rho.matrix();
    assert!((m.trace() - c(1.0, 0.0)).norm() < 1e-10);
    assert!((m - m.adjoint()).norm() < 1e-10);
    assert!(*eigenvalues(m).last().unwrap() >= -1e-10);
    let mut sum = CMat::zeros(d, d);
    for p in povm.elements() {
        assert!((p - p.adjoint()).norm() < 1e-10);
        assert!(*eigenvalues(p).last().unwrap() >= -1e-10);
        sum += p;
    }
    assert!((sum - CMat::identity(d, d)).norm() < 1e-10);
}

fn random_hermitian_with(spec: &[f64], seed: u64) -> CMat {
    with_spectrum(&haar_unitary(spec.len(), &mut rng(seed)), spec)
}

#[test]
fn exact_v1_recovers_truth_in_every_combine_mode() {
    let inst = instance("one_qubit_closed_complete");
    let ds = inst.simulate(1, 0, true).unwrap();
    let m = inst.truth_povm.len();
    let mut modes = vec![CombineMode::Joint, CombineMode::Average];
    modes.extend((1..=m).map(CombineMode::Pick));
    for mode in modes {
        let cfg = EstimatorConfig {
            combine: mode,
            ..EstimatorConfig::default()
        };
        let est = estimate_joint_v1(&ds, &inst.regression.b, &inst.basis, &cfg).unwrap();
        assert!(
            (&est.rho_bar - inst.truth_state.matrix()).norm() < 1e-7,
            "{mode:?}"
        );
        assert!(
            povm_dist(&est.povm_bar, inst.truth_povm.elements()) < 1e-7,
            "{mode:?}"
        );
        assert!((est.rho_hat.matrix() - inst.truth_state.matrix()).norm() < 1e-8);
        assert!(povm_dist(est.povm_hat.elements(), inst.truth_povm.elements()) < 1e-7);
        assert!(est.diagnostics.candidate_spread < 1e-10);
    }
}

#[test]
fn exact_v2_recovers_truth_for_random_non_tp_ensemble() {
    let inst = instance("one_qubit_pure_random");
    // mixed truth on the same processes
    let rho = DensityMatrix::new(random_density(2, 2, &mut rng(4))).unwrap();
    for truth in [inst.truth_state.clone(), rho] {
        let ds = simulate_dataset(
            &inst.ensemble,
            &truth,
            &inst.truth_povm,
            &SimulationOptions::exact(),
        )
        .unwrap();
        let est = estimate_joint_v2(&ds, &inst.regression.b_natural, &EstimatorConfig::default())
            .unwrap();
        assert!((&est.rho_bar - truth.matrix()).norm() < 1e-7);
        assert!(povm_dist(&est.povm_bar, inst.truth_povm.elements()) < 1e-7);
    }
}

#[test]
fn stage_one_is_exact_on_noiseless_targets() {
    let inst = instance("one_qubit_closed_complete");
    let ds = inst.simulate(1, 0, true).unwrap();
    let targets = build_targets_v1(&ds, &inst.basis).unwrap();
    let x0 = inst
        .basis
        .state_to_coords(inst.truth_state.matrix())
        .unwrap()
        .x;
    let op = Stage1Operator::new(&inst.regression.b, &Stage1Config::plain_ls(), None).unwrap();
    for (j, p) in inst.truth_povm.elements().iter().enumerate() {
        let cj = inst.basis.povm_element_to_coords(p).unwrap().c;
        let z = op.solve(&targets.column(j).into_owned()).unwrap();
        assert!((z - kron_vec(&x0, &cj)).amax() < 1e-10);
    }
}

/// Minimum-norm least squares through the eigen-decomposition of `BᵀB`.
fn min_norm_oracle(b: &RMat, y: &RVec) -> RVec {
    let e = (b.transpose() * b).symmetric_eigen();
    let lmax = e.eigenvalues.amax();
    let bty = b.transpose() * y;
    let mut z = RVec::zeros(b.ncols());
    for (k, &l) in e.eigenvalues.iter().enumerate() {
        if l > 1e-12 * lmax {
            let v = e.eigenvectors.column(k);
            z += v * (v.dot(&bty) / l);
        }
    }
    z
}

#[test]
fn mp_inverse_gives_minimum_norm_solution() {
    let inst = instance("one_qubit_closed_incomplete");
    let b = &inst.regression.b;
    let op = Stage1Operator::new(b, &Stage1Config::mp_inverse(), None).unwrap();
    assert!(op.rank() < b.ncols());
    let mut g = rng(3);
    for _ in 0..20 {
        let y = RVec::from_fn(b.nrows(), |_, _| g.gen_range(-1.0..1.0));
        let z = op.solve(&y).unwrap();
        let want = min_norm_oracle(b, &y);
        assert!((&z - &want).norm() < 1e-9 * want.norm().max(1.0));
        // normal equations hold and no other solution is shorter
        assert!((b.transpose() * (b * &z - &y)).amax() < 1e-9);
    }
    let err = Stage1Operator::new(b, &Stage1Config::plain_ls(), None).unwrap_err();
    assert!(err.is_degenerate());
}

#[test]
fn tikhonov_matches_regularized_normal_equations() {
    let inst = instance("one_qubit_closed_incomplete");
    let b = &inst.regression.b;
    let n = 16_000u64;
    let op = Stage1Operator::new(b, &Stage1Config::tikhonov(None), Some(n)).unwrap();
    assert_eq!(op.reg_scale(), 100.0 / n as f64);
    let gram = b.transpose() * b + RMat::identity(b.ncols(), b.ncols()) * (100.0 / n as f64);
    let y = RVec::from_fn(b.nrows(), |i, _| (i as f64 * 0.37).sin());
    let want = gram.lu().solve(&(b.transpose() * &y)).unwrap();
    assert!((op.solve(&y).unwrap() - want).amax() < 1e-9);
}

#[test]
fn correct_state_known_spectra() {
    let v2 = haar_unitary(2, &mut rng(1));
    let out = correct_state(&with_spectrum(&v2, &[1.1, -0.1])).unwrap();
    assert!((out.matrix() - with_spectrum(&v2, &[1.0, 0.0])).norm() < 1e-12);
    let v3 = haar_unitary(3, &mut rng(2));
    let out = correct_state(&with_spectrum(&v3, &[0.7, 0.4, -0.1])).unwrap();
    assert!((out.matrix() - with_spectrum(&v3, &[0.65, 0.35, 0.0])).norm() < 1e-12);
}

fn grid_best(spec: &[f64], step: f64) -> f64 {
    let k = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    match spec.len() {
        2 => {
            for i in 0..=k {
                let a = i as f64 * step;
                best = best.min((spec[0] - a).powi(2) + (spec[1] - (1.0 - a)).powi(2));
            }
        }
        3 => {
            for i in 0..=k {
                for j in 0..=(k - i) {
                    let (a, b) = (i as f64 * step, j as f64 * step);
                    let cc = 1.0 - a - b;
                    best = best.min(
                        (spec[0] - a).powi(2) + (spec[1] - b).powi(2) + (spec[2] - cc).powi(2),
                    );
                }
            }
        }
        _ => unreachable!(),
    }
    best.sqrt()
}

#[test]
fn correct_state_beats_simplex_grid() {
    let mut g = rng(12);
    for d in [2usize, 3] {
        let step = if d == 2 { 1e-5 } else { 2e-3 };
        for t in 0..15 {
            let spec: Vec<f64> = (0..d).map(|_| g.gen_range(-0.6..1.4)).collect();
            let rho_bar = random_hermitian_with(&spec, 100 + t);
            let out = correct_state(&rho_bar).unwrap();
            let dist = (out.matrix() - &rho_bar).norm();
            let best = grid_best(&spec, step);
            assert!(dist <= best + 1e-12, "d={d} {spec:?}: {dist} > {best}");
            assert!(dist >= best - step * 2.0, "grid oracle too coarse");
        }
    }
}

#[test]
fn correct_povm_known_cases() {
    let z = c(0.0, 0.0);
    let p0 = CMat::from_row_slice(2, 2, &[c(1.2, 0.0), z, z, z]);
    let p1 = CMat::from_row_slice(2, 2, &[z, z, z, c(1.2, 0.0)]);
    let out = correct_povm(&[p0, p1]).unwrap();
    let e = out.povm.elements();
    assert!((e[0][(0, 0)] - c(1.0, 0.0)).norm() < 1e-12 && e[0][(1, 1)].norm() < 1e-12);
    assert!((e[1][(1, 1)] - c(1.0, 0.0)).norm() < 1e-12 && e[1][(0, 0)].norm() < 1e-12);

    let v = haar_unitary(2, &mut rng(9));
    let bad = with_spectrum(&v, &[0.6, -0.05]);
    let rest = CMat::identity(2, 2) - &bad;
    let out = correct_povm(&[bad, rest]).unwrap();
    let sum = out
        .povm
        .elements()
        .iter()
        .fold(CMat::zeros(2, 2), |a, p| a + p);
    assert!((sum - CMat::identity(2, 2)).norm() < 1e-12);
    assert!(out
        .povm
        .elements()
        .iter()
        .all(|p| *eigenvalues(p).last().unwrap() >= -1e-12));
}

#[test]
fn rearrangement_preserves_kronecker_distance() {
    let mut g = rng(14);
    for _ in 0..50 {
        let (r, s) = (g.gen_range(1..6), g.gen_range(1..6));
        let z = RVec::from_fn(r * s, |_, _| g.gen_range(-1.0..1.0));
        let x = RVec::from_fn(r, |_, _| g.gen_range(-1.0..1.0));
        let cc = RVec::from_fn(s, |_, _| g.gen_range(-1.0..1.0));
        let lhs = (&z - kron_vec(&x, &cc)).norm();
        let rhs = (rearrange(&z, r, s).unwrap() - &x * cc.transpose()).norm();
        assert!((lhs - rhs).abs() < 1e-14);
    }
}

#[test]
fn estimator_runtime_grows_at_most_linearly_in_processes() {
    let inst = instance("one_qubit_closed_complete");
    let hams = jtomo::bench::five_qubit_hamiltonians();
    let time = |n: usize| {
        let ens = ProcessEnsemble::from_hamiltonians(&hams, 0.37, n).unwrap();
        let basis = OperatorBasis::new(2).unwrap();
        let b = jtomo::channels::build_regression_matrices(&ens, &basis)
            .unwrap()
            .b;
        let ds = simulate_dataset(
            &ens,
            &inst.truth_state,
            &inst.truth_povm,
            &SimulationOptions::new(1000, 1),
        )
        .unwrap();
        let cfg = EstimatorConfig::default();
        (0..30)
            .map(|_| {
                let t = Instant::now();
                estimate_joint_v1(&ds, &b, &basis, &cfg).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let small = time(20);
    let large = time(160);
    // 8× the processes; allow generous slack over the linear ratio
    assert!(large / small < 8.0 * 2.5, "ratio {}", large / small);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kronecker_residual_is_eckart_young_tail(r in 2usize..6, s in 2usize..6, seed in any::<u64>(), noise in 0.0f64..0.5) {
        let mut g = rng(seed);
        let x = RVec::from_fn(r, |_, _| g.gen_range(-1.0..1.0));
        let cc = RVec::from_fn(s, |_, _| g.gen_range(-1.0..1.0));
        let z = kron_vec(&x, &cc) + RVec::from_fn(r * s, |_, _| g.gen_range(-noise..=noise));
        prop_assume!(z.norm() > 1e-6);
        let fac = nearest_kronecker(&z, r, s).unwrap();
        let rm = rearrange(&z, r, s).unwrap();
        let mut ev: Vec<f64> = (&rm * rm.transpose()).symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0)).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let tail: f64 = ev[1..].iter().sum::<f64>().sqrt();
        prop_assert!((fac.residual - tail).abs() < 1e-10);
        prop_assert!((fac.residual - (&z - kron_vec(&fac.left, &fac.right)).norm()).abs() < 1e-12);
    }

    #[test]
    fn scale_fix_is_gauge_invariant(seed in any::<u64>(), q in 0.05f64..20.0, flip in any::<bool>(), x01 in 0.05f64..0.7) {
        let mut g = rng(seed);
        let left = RVec::from_fn(3, |_, _| g.gen_range(-1.0..1.0));
        prop_assume!(left[0].abs() > 0.05);
        let right = RVec::from_fn(3, |_, _| g.gen_range(-1.0..1.0));
        let sign = if flip { -1.0 } else { 1.0 };
        let fac = |l: RVec, r: RVec| KroneckerFactorization { left: l, right: r, residual: 0.0, top_singular_values: vec![1.0], tie: false };
        let (xa, ca) = fix_scale_v1(&fac(left.clone(), right.clone()), x01, 0, ANCHOR_TOL).unwrap();
        let (xb, cb) = fix_scale_v1(&fac(&left * (q * sign), &right / (q * sign)), x01, 0, ANCHOR_TOL).unwrap();
        prop_assert!((&xa - &xb).amax() < 1e-12 * xa.amax().max(1.0));
        prop_assert!((&ca - &cb).amax() < 1e-10 * ca.amax().max(1.0));
        prop_assert!((xa[0] - x01).abs() < 1e-15);
    }

    #[test]
    fn corrections_are_physical(d in 2usize..=4, seed in any::<u64>(), m in 2usize..5, spread in 0.0f64..0.4) {
        let mut g = rng(seed);
        let spec: Vec<f64> = (0..d).map(|_| g.gen_range(-0.5..1.5)).collect();
        let rho_bar = with_spectrum(&haar_unitary(d, &mut g), &spec);
        let rho = correct_state(&rho_bar).unwrap();
        let elems: Vec<CMat> = (0..m)
            .map(|_| {
                let sp: Vec<f64> = (0..d).map(|_| g.gen_range(-spread..(2.0 / m as f64))).collect();
                with_spectrum(&haar_unitary(d, &mut g), &sp)
            })
            .collect();
        let povm = correct_povm(&elems).unwrap();
        assert_physical(&rho, &povm.povm);
        let (pure, _) = project_pure(&rho_bar).unwrap();
        let p = pure.matrix();
        prop_assert!((p * p - p).norm() < 1e-12);
    }

    #[test]
    fn noisy_estimates_are_always_physical(
        preset_idx in 0usize..3,
        n0 in 5u64..300,
        seed in any::<u64>(),
        method in 0usize..3,
    ) {
        let name = ["one_qubit_closed_complete", "one_qubit_closed_incomplete", "one_qubit_pure_random"][preset_idx];
        let inst = instance(name);
        let ds = inst.simulate(n0, seed, false).unwrap();
        let stage1 = match (preset_idx, method) {
            (1, 0) | (_, 1) => Stage1Config::mp_inverse(),
            (_, 2) => Stage1Config::tikhonov(None),
            _ => Stage1Config::plain_ls(),
        };
        let cfg = EstimatorConfig { stage1, pure: preset_idx == 2, ..EstimatorConfig::default() };
        let res = if preset_idx == 2 {
            estimate_joint_v2(&ds, &inst.regression.b_natural, &cfg)
        } else {
            estimate_joint_v1(&ds, &inst.regression.b, &inst.basis, &cfg)
        };
        match res {
            Ok(est) => assert_physical(&est.rho_hat, &est.povm_hat),
            Err(e) => prop_assert!(e.is_degenerate(), "{e}"),
        }
    }
}
