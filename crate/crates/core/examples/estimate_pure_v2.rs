//! Pure input state probed through random trace-decreasing channels; the
//! natural-basis pipeline with the pure-state projection.

use jtomo::bench::{preset, squared_errors};
use jtomo::estimator::{estimate_joint_v2, EstimatorConfig};

fn main() -> jtomo::Result<()> {
    let inst = preset("one_qubit_pure_random")?.instantiate()?;
    println!(
        "{} channels, rank of natural regression matrix {}",
        inst.ensemble.len(),
        inst.regression.rank_b_natural
    );
    let cfg = EstimatorConfig {
        pure: true,
        ..EstimatorConfig::default()
    };
    for n0 in [1_000, 10_000, 100_000] {
        let ds = inst.simulate(n0, 11, false)?;
        let est = estimate_joint_v2(&ds, &inst.regression.b_natural, &cfg)?;
        let (es, ep) = squared_errors(&est, &inst.truth_state, &inst.truth_povm);
        let purity = (est.rho_hat.matrix() * est.rho_hat.matrix()).trace().re;
        println!("N0={n0:<7} state {es:.3e}  povm {ep:.3e}  purity {purity:.12}");
    }
    Ok(())
}
