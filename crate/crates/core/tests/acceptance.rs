//! Acceptance suite. Run with `cargo test -p jtomo --test acceptance -- --nocapture`.

use jtomo::basis::OperatorBasis;
use jtomo::bench::*;
use jtomo::channels::*;
use jtomo::estimator::*;
use jtomo::linalg::{c, kron, kron_vec, CMat, RVec};
use jtomo::random::{
    derive_seed, haar_unitary, random_complex_matrix, random_hermitian, random_traceless_hermitian,
    rng_from_seed, with_spectrum,
};
use jtomo::refine::*;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn eigs(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let mut v: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn slopes(sc: &Scenario, trials: usize, config: &str) -> (LogLogFit, LogLogFit, ExperimentReport) {
    let rep = run_mse_experiment(
        sc,
        &ExperimentOptions::new(&DEFAULT_N0_GRID, trials, sc.seed),
    )
    .unwrap();
    let t = rep.table(config).unwrap();
    let s = fit_loglog_slope(t, MseColumn::State).unwrap();
    let p = fit_loglog_slope(t, MseColumn::Povm).unwrap();
    (s, p, rep)
}

fn complete_scaling() -> Outcome {
    let sc = preset("one_qubit_closed_complete").unwrap();
    let (s, p, _) = slopes(&sc, 50, "ls");
    let ok = |f: &LogLogFit| (-1.2..=-0.8).contains(&f.slope) && f.r2 > 0.95;
    outcome(
        ok(&s) && ok(&p),
        format!(
            "state slope {:.3} (r² {:.4}), detector slope {:.3} (r² {:.4})",
            s.slope, s.r2, p.slope, p.r2
        ),
    )
}

fn pipeline_exactness() -> Outcome {
    let inst = preset("one_qubit_closed_complete")
        .unwrap()
        .instantiate()
        .unwrap();
    let ds = inst.simulate(1, 0, true).unwrap();
    let cfg = EstimatorConfig::with_stage1(Stage1Config::plain_ls());
    let est = estimate_joint_v1(&ds, &inst.regression.b, &inst.basis, &cfg).unwrap();
    let es = (&est.rho_bar - inst.truth_state.matrix()).norm();
    let ep = est
        .povm_bar
        .iter()
        .zip(inst.truth_povm.elements())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    outcome(
        es < 1e-7 && ep < 1e-7,
        format!("state {es:.2e}, worst detector element {ep:.2e}"),
    )
}

fn incomplete_scenario() -> Outcome {
    let sc = preset("one_qubit_closed_incomplete").unwrap();
    let rep =
        run_mse_experiment(&sc, &ExperimentOptions::new(&DEFAULT_N0_GRID, 50, sc.seed)).unwrap();
    let mp = rep.table("mp").unwrap();
    let tk = rep.table("tikhonov").unwrap();
    let slope = fit_loglog_slope(mp, MseColumn::State).unwrap().slope;
    let mp_last = mp.rows.last().unwrap().mse_state;
    let tk_last = tk.rows.last().unwrap().mse_state;
    outcome(
        slope > -0.3 && tk_last <= mp_last,
        format!("pseudo-inverse slope {slope:.3}; MSE at N₀=1e6: Tikhonov {tk_last:.9e} vs pseudo-inverse {mp_last:.9e}"),
    )
}

fn pure_scenario() -> Outcome {
    let sc = preset("one_qubit_pure_random").unwrap();
    let (s, p, rep) = slopes(&sc, 50, "ls");
    let violations: usize = rep.tables[0]
        .rows
        .iter()
        .map(|r| r.rank_violations.unwrap_or(usize::MAX))
        .sum();
    let failures: usize = rep.tables[0].rows.iter().map(|r| r.failures).sum();
    outcome(
        (-1.2..=-0.8).contains(&s.slope) && violations == 0,
        format!("state slope {:.3} (detector {:.3}); rank-one violations {violations}; failed trials {failures}", s.slope, p.slope),
    )
}

fn two_qubit_scenario() -> Outcome {
    let sc = preset("two_qubit_mixed_unitary").unwrap();
    let (s, p, _) = slopes(&sc, 20, "ls");
    let ok = |f: &LogLogFit| (-1.25..=-0.75).contains(&f.slope);
    outcome(
        ok(&s) && ok(&p),
        format!("state slope {:.3}, detector slope {:.3}", s.slope, p.slope),
    )
}

fn realness() -> Outcome {
    let mut worst = 0.0f64;
    // without the conjugate the same basis change is genuinely complex
    let mut control = f64::INFINITY;
    for d in [2usize, 3] {
        let u = OperatorBasis::new(d).unwrap().change_of_basis().u;
        let mut g = rng_from_seed(600 + d as u64);
        for _ in 0..100 {
            let a = random_complex_matrix(d, d, &mut g);
            let m = &u * kron(&a.conjugate(), &a) * u.adjoint();
            worst = m.iter().map(|z| z.im.abs()).fold(worst, f64::max);
            let n = &u * kron(&a, &a) * u.adjoint();
            control = control.min(n.iter().map(|z| z.im.abs()).fold(0.0, f64::max));
        }
    }
    outcome(
        worst < 1e-10 && control > 1e-3,
        format!("largest imaginary entry {worst:.2e}; unconjugated control ≥ {control:.2e}"),
    )
}

fn generalized_unital() -> Outcome {
    let mut disagreements = 0;
    let mut counts = [0usize; 2];
    for d in [2usize, 3] {
        let basis = OperatorBasis::new(d).unwrap();
        let mut g = rng_from_seed(700 + d as u64);
        for i in 0..200 {
            let ch = match i % 4 {
                0 => {
                    let hs = vec![
                        random_traceless_hermitian(d, &mut g),
                        random_traceless_hermitian(d, &mut g),
                    ];
                    let w = g.gen_range(0.1..0.9);
                    mixed_unitary_channel(&[w, 1.0 - w], &hs, g.gen_range(0.1..3.0)).unwrap()
                }
                1 => KrausChannel::new(vec![haar_unitary(d, &mut g)])
                    .unwrap()
                    .scaled(g.gen_range(0.1..1.0))
                    .unwrap(),
                2 => make_named_channel(ChannelKind::RandomTp {
                    d,
                    rank: 1 + i % 3,
                    seed: g.gen(),
                })
                .unwrap(),
                _ => make_named_channel(ChannelKind::RandomCp {
                    d,
                    rank: 2,
                    seed: g.gen(),
                })
                .unwrap(),
            };
            let (flag, _) = is_generalized_unital(&ch, &basis, 1e-8).unwrap();
            let s = ch
                .kraus()
                .iter()
                .fold(CMat::zeros(d, d), |acc, a| acc + a * a.adjoint());
            let alpha = s.trace() / c(d as f64, 0.0);
            let direct = (s - CMat::identity(d, d) * alpha).norm() <= 1e-8;
            counts[direct as usize] += 1;
            if flag != direct {
                disagreements += 1;
            }
        }
    }
    outcome(
        disagreements == 0,
        format!(
            "400 channels ({} generalized-unital, {} not); disagreements {disagreements}",
            counts[1], counts[0]
        ),
    )
}

fn rank_bounds() -> Outcome {
    let basis2 = OperatorBasis::new(2).unwrap();
    let tp = ProcessEnsemble::new(
        (0..20)
            .map(|a| {
                make_named_channel(ChannelKind::RandomTp {
                    d: 2,
                    rank: 4,
                    seed: derive_seed(81, &[a]),
                })
                .unwrap()
            })
            .collect(),
    )
    .unwrap();
    let r_tp = build_regression_matrices(&tp, &basis2)
        .unwrap()
        .rank_b_natural;
    let mut worst_single = Vec::new();
    for d in [2usize, 3] {
        let basis = OperatorBasis::new(d).unwrap();
        let mut g = rng_from_seed(82 + d as u64);
        let mut worst = 0;
        for _ in 0..10 {
            let h = random_traceless_hermitian(d, &mut g);
            let ens = ProcessEnsemble::from_hamiltonians(&[h], g.gen_range(0.1..1.5), 40).unwrap();
            let reg = build_regression_matrices(&ens, &basis).unwrap();
            worst = worst.max(reg.rank_b_natural).max(reg.rank_b);
        }
        worst_single.push((d, worst, d * d - d + 1));
    }
    let flips: Vec<usize> = [
        ChannelKind::BitFlip as fn(f64) -> ChannelKind,
        ChannelKind::PhaseFlip,
    ]
    .iter()
    .map(|kind| {
        let ens = ProcessEnsemble::new(
            [0.1, 0.35, 0.6, 0.85]
                .iter()
                .map(|&p| make_named_channel(kind(p)).unwrap())
                .collect(),
        )
        .unwrap();
        build_regression_matrices(&ens, &basis2)
            .unwrap()
            .rank_b_natural
    })
    .collect();
    let ok = r_tp <= 13 && worst_single.iter().all(|(_, w, cap)| w <= cap) && flips == [2, 2];
    outcome(
        ok,
        format!(
            "20 TP channels: rank {r_tp} ≤ 13; single Hamiltonian (d, max rank, cap) {worst_single:?}; bit/phase flip ranks {flips:?}"
        ),
    )
}

fn semialgebraic() -> Outcome {
    let mut worst = 0.0f64;
    for d in 2..=4usize {
        let mut g = rng_from_seed(900 + d as u64);
        for _ in 0..100 {
            let rho = random_hermitian(d, &mut g);
            let k = k_coefficients(&rho).unwrap().k;
            let mut coef = vec![1.0];
            for l in eigs(&rho) {
                let mut next = vec![0.0; coef.len() + 1];
                for (i, &a) in coef.iter().enumerate() {
                    next[i] += a;
                    next[i + 1] -= a * l;
                }
                coef = next;
            }
            for p in 0..=d {
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                worst = worst.max((coef[p] - sign * k[p]).abs());
            }
        }
    }
    let mut mismatches = 0;
    let mut members = 0;
    for d in [2usize, 3] {
        let basis = OperatorBasis::new(d).unwrap();
        let mut g = rng_from_seed(950 + d as u64);
        for _ in 0..1000 {
            let x = RVec::from_fn(d * d - 1, |_, _| g.gen_range(-0.7..0.7));
            let psd = *eigs(&basis.state_from_x(&x)).last().unwrap() >= -1e-12;
            let member = in_physical_set(&x, &basis, 1e-12);
            members += member as usize;
            mismatches += (psd != member) as usize;
        }
    }
    outcome(
        worst < 1e-10 && mismatches == 0,
        format!("largest coefficient error {worst:.2e}; membership mismatches {mismatches}/2000 ({members} inside)"),
    )
}

fn kronecker_optimality() -> Outcome {
    let mut g = rng_from_seed(1000);
    let mut worst = 0.0f64;
    let mut beaten = 0;
    for i in 0..100 {
        let (r, s) = if i % 2 == 0 { (3, 3) } else { (8, 8) };
        let x = RVec::from_fn(r, |_, _| g.gen_range(-1.0..1.0));
        let cc = RVec::from_fn(s, |_, _| g.gen_range(-1.0..1.0));
        let noise = g.gen_range(1e-3..0.3);
        let z = kron_vec(&x, &cc) + RVec::from_fn(r * s, |_, _| g.gen_range(-noise..noise));
        let fac = nearest_kronecker(&z, r, s).unwrap();
        let rm = rearrange(&z, r, s).unwrap();
        let mut ev: Vec<f64> = (&rm * rm.transpose())
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|v| v.max(0.0))
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let tail = ev[1..].iter().sum::<f64>().sqrt();
        worst = worst.max((fac.residual - tail).abs());
        for _ in 0..20 {
            let eps = 10f64.powf(g.gen_range(-6.0..-1.0));
            let l = &fac.left + RVec::from_fn(r, |_, _| g.gen_range(-eps..eps));
            let rr = &fac.right + RVec::from_fn(s, |_, _| g.gen_range(-eps..eps));
            if (&z - kron_vec(&l, &rr)).norm() < fac.residual - 1e-12 {
                beaten += 1;
            }
        }
    }
    outcome(
        worst < 1e-10 && beaten == 0,
        format!(
            "largest |residual − tail| {worst:.2e}; perturbations that beat the fit {beaten}/2000"
        ),
    )
}

fn correction_validity() -> Outcome {
    let mut g = rng_from_seed(1100);
    let mut violations = 0;
    for i in 0..1000 {
        let d = 2 + i % 3;
        let spec: Vec<f64> = (0..d).map(|_| g.gen_range(-0.4..0.9)).collect();
        let shift = (1.0 - spec.iter().sum::<f64>()) / d as f64;
        let spec: Vec<f64> = spec
            .iter()
            .map(|v| v + shift + g.gen_range(-0.05..0.05))
            .collect();
        let rho_bar = with_spectrum(&haar_unitary(d, &mut g), &spec);
        let rho = correct_state(&rho_bar).unwrap();
        let r = rho.matrix();
        if (r.trace() - c(1.0, 0.0)).norm() > 1e-10
            || *eigs(r).last().unwrap() < -1e-10
            || (r - r.adjoint()).norm() > 1e-10
        {
            violations += 1;
        }
        let m = 2 + i % 3;
        let defect = g.gen_range(-0.2..0.2);
        let mut elems: Vec<CMat> = (0..m)
            .map(|_| {
                let sp: Vec<f64> = (0..d).map(|_| g.gen_range(-0.1..1.0)).collect();
                with_spectrum(&haar_unitary(d, &mut g), &sp)
            })
            .collect();
        let sum = elems.iter().fold(CMat::zeros(d, d), |a, p| a + p);
        // rescale so that Σ P̄_j deviates from I by `defect` in trace norm per dimension
        let scale = (1.0 + defect) * d as f64 / sum.trace().re;
        for p in &mut elems {
            *p *= c(scale, 0.0);
        }
        let out = correct_povm(&elems).unwrap();
        let mut s = CMat::zeros(d, d);
        for p in out.povm.elements() {
            if *eigs(p).last().unwrap() < -1e-10 || (p - p.adjoint()).norm() > 1e-10 {
                violations += 1;
            }
            s += p;
        }
        if (s - CMat::identity(d, d)).norm() > 1e-10 {
            violations += 1;
        }
    }

    let inst = preset("one_qubit_closed_complete")
        .unwrap()
        .instantiate()
        .unwrap();
    let cfg = EstimatorConfig::default();
    let mut worst_ratio = 0.0f64;
    let mut trials = 0;
    for (i, &n0) in DEFAULT_N0_GRID.iter().enumerate() {
        for t in 0..50 {
            let ds = inst
                .simulate(n0, derive_seed(inst.scenario.seed, &[i as u64, t]), false)
                .unwrap();
            let Ok(est) = estimate_joint_v1(&ds, &inst.regression.b, &inst.basis, &cfg) else {
                continue;
            };
            trials += 1;
            let truth = inst.truth_state.matrix();
            let before = (&est.rho_bar - truth).norm();
            let after = (est.rho_hat.matrix() - truth).norm();
            let pb: f64 = est
                .povm_bar
                .iter()
                .zip(inst.truth_povm.elements())
                .map(|(a, b)| (a - b).norm())
                .sum();
            let pa: f64 = est
                .povm_hat
                .elements()
                .iter()
                .zip(inst.truth_povm.elements())
                .map(|(a, b)| (a - b).norm())
                .sum();
            worst_ratio = worst_ratio.max(after / before).max(pa / pb);
        }
    }
    outcome(
        violations == 0 && worst_ratio <= 3.0,
        format!("physicality violations {violations}/1000 inputs; worst distance ratio after/before {worst_ratio:.3} over {trials} noisy trials"),
    )
}

fn export_fidelity() -> Outcome {
    let inst = preset("one_qubit_closed_complete")
        .unwrap()
        .instantiate()
        .unwrap();
    let ds = inst.simulate(10_000, 5, false).unwrap();
    let prob = build_sos_problem(&ds, &inst.regression.b, &inst.basis).unwrap();
    let x = inst
        .basis
        .state_to_coords(inst.truth_state.matrix())
        .unwrap()
        .x;
    let cs: Vec<RVec> = inst
        .truth_povm
        .elements()
        .iter()
        .map(|p| inst.basis.povm_element_to_coords(p).unwrap().c)
        .collect();
    let targets = build_targets_v1(&ds, &inst.basis).unwrap();
    let direct: f64 = cs
        .iter()
        .enumerate()
        .map(|(j, cj)| (targets.column(j) - &inst.regression.b * kron_vec(&x, cj)).norm_squared())
        .sum();
    let exported = parse_sos_problem(&prob.to_text()).unwrap();
    let gap = (exported.objective.eval_real(&stack_variables(&x, &cs)) - direct).abs();

    let m = inst.truth_povm.len();
    let mut labels: Vec<String> = exported
        .inequalities
        .iter()
        .map(|q| q.label.clone())
        .collect();
    labels.sort();
    let mut want: Vec<String> = std::iter::once("state_k2".to_string())
        .chain((1..=m).map(|j| format!("povm{j}_k2")))
        .collect();
    want.sort();
    let mut g = rng_from_seed(1200);
    let mut ball_err = 0.0f64;
    for _ in 0..50 {
        let v: Vec<f64> = (0..exported.nvars())
            .map(|_| g.gen_range(-1.0..1.0))
            .collect();
        let x2: f64 = v[..3].iter().map(|t| t * t).sum();
        ball_err = ball_err.max(
            (exported.inequality("state_k2").unwrap().poly.eval_real(&v) - (0.25 - x2 / 2.0)).abs(),
        );
        for j in 0..m {
            let c2: f64 = v[3 + 3 * j..6 + 3 * j].iter().map(|t| t * t).sum();
            let c0 = ds.c_j0_hat[j];
            let got = exported
                .inequality(&format!("povm{}_k2", j + 1))
                .unwrap()
                .poly
                .eval_real(&v);
            ball_err = ball_err.max((got - (0.25 - c2 / (4.0 * c0 * c0))).abs());
        }
    }
    outcome(
        gap < 1e-10 && labels == want && ball_err < 1e-12,
        format!("objective gap {gap:.2e}; inequalities {labels:?}; ball-form error {ball_err:.2e}"),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("complete-scenario scaling", complete_scaling),
        ("noiseless pipeline exactness", pipeline_exactness),
        ("incomplete scenario", incomplete_scenario),
        ("pure-state scenario", pure_scenario),
        ("two-qubit mixed-unitary scenario", two_qubit_scenario),
        ("realness of transfer matrices", realness),
        ("generalized-unital test", generalized_unital),
        ("rank bounds", rank_bounds),
        ("semialgebraic membership", semialgebraic),
        ("nearest-Kronecker optimality", kronecker_optimality),
        ("correction validity", correction_validity),
        ("polynomial export fidelity", export_fidelity),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = std::time::Instant::now();
        let o = run();
        println!(
            "{} [{:>2}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
