//! Local refinement of the closed-form estimate on an informationally
//! incomplete ensemble, and export of the polynomial program.

use jtomo::bench::{preset, squared_errors};
use jtomo::estimator::{estimate_joint_v1, EstimatorConfig, Stage1Config};
use jtomo::refine::{build_sos_problem, refine_alternating, RefineOptions};

fn sci(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> jtomo::Result<()> {
    let inst = preset("one_qubit_closed_incomplete")?.instantiate()?;
    let ds = inst.simulate(10_000, 3, false)?;
    let cfg = EstimatorConfig::with_stage1(Stage1Config::mp_inverse());
    let init = estimate_joint_v1(&ds, &inst.regression.b, &inst.basis, &cfg)?;
    let out = refine_alternating(
        &ds,
        &inst.regression.b,
        &inst.basis,
        &init,
        &RefineOptions::default(),
    )?;
    let (e0, p0) = squared_errors(&init, &inst.truth_state, &inst.truth_povm);
    let (e1, p1) = squared_errors(&out.estimate, &inst.truth_state, &inst.truth_povm);
    println!(
        "objective history (first 5): {}",
        sci(&out.history[..out.history.len().min(5)])
    );
    println!(
        "iterations {} converged {} improved {}",
        out.iterations, out.converged, out.improved
    );
    println!("closed form  state {e0:.3e}  povm {p0:.3e}");
    println!("refined      state {e1:.3e}  povm {p1:.3e}");

    let complete = preset("one_qubit_closed_complete")?.instantiate()?;
    let ds = complete.simulate(10_000, 3, false)?;
    let problem = build_sos_problem(&ds, &complete.regression.b, &complete.basis)?;
    println!(
        "exported problem: {} variables, objective with {} terms, {} equalities, {} inequalities",
        problem.vars.len(),
        problem.objective.n_terms(),
        problem.equalities.len(),
        problem.inequalities.len()
    );
    for c in &problem.inequalities {
        println!("  {} (degree {})", c.label, c.poly.degree());
    }
    let text = problem.to_text();
    println!("{}", text.lines().take(12).collect::<Vec<_>>().join("\n"));
    Ok(())
}
