//! Closed-form joint estimate of a qubit state and a three-outcome detector
//! from simulated data, using the real-coordinate pipeline.

use jtomo::bench::{preset, squared_errors};
use jtomo::estimator::{estimate_joint_v1, EstimatorConfig};

fn sci(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> jtomo::Result<()> {
    let inst = preset("one_qubit_closed_complete")?.instantiate()?;
    let cfg = EstimatorConfig::default();
    for n0 in [1_000, 100_000] {
        let ds = inst.simulate(n0, 5, false)?;
        let est = estimate_joint_v1(&ds, &inst.regression.b, &inst.basis, &cfg)?;
        let (es, ep) = squared_errors(&est, &inst.truth_state, &inst.truth_povm);
        let d = &est.diagnostics;
        println!("N0 = {n0}, N = {}", d.total_copies);
        println!("  stage-1 residuals     {}", sci(&d.stage1_residuals));
        println!("  kronecker residuals   {}", sci(&d.kronecker_residuals));
        println!(
            "  correction distances  state {:.2e}, povm {:.2e}",
            d.state_correction_distance, d.povm_correction_distance
        );
        println!("  squared errors        state {es:.3e}, povm {ep:.3e}");
    }
    let ds = inst.simulate(1, 0, true)?;
    let est = estimate_joint_v1(&ds, &inst.regression.b, &inst.basis, &cfg)?;
    println!(
        "noiseless data, state error {:.2e}",
        (&est.rho_bar - inst.truth_state.matrix()).norm()
    );
    println!("rho_hat =\n{:.5}", est.rho_hat.matrix());
    Ok(())
}
