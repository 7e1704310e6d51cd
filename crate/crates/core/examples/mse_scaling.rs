//! Mean squared error against total copy count on a preset, with the fitted
//! log-log slope. Pass a preset name and a trial count to change the defaults.

use jtomo::bench::{fit_loglog_slope, preset, run_mse_experiment, ExperimentOptions, MseColumn};

fn main() -> jtomo::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args
        .next()
        .unwrap_or_else(|| "one_qubit_closed_complete".into());
    let trials = args.next().and_then(|t| t.parse().ok()).unwrap_or(20);
    let sc = preset(&name)?;
    let opts = ExperimentOptions::new(&[1_000, 10_000, 100_000, 1_000_000], trials, sc.seed);
    let report = run_mse_experiment(&sc, &opts)?;
    println!(
        "{name}: {} copies per N0, rank(B) = {}",
        report.copies_per_n0, report.rank_b
    );
    for table in &report.tables {
        println!("config {}", table.config);
        println!("  {:>10} {:>12} {:>12}", "N", "mse state", "mse povm");
        for r in &table.rows {
            println!("  {:>10} {:>12.4e} {:>12.4e}", r.n, r.mse_state, r.mse_povm);
        }
        let s = fit_loglog_slope(table, MseColumn::State)?;
        let p = fit_loglog_slope(table, MseColumn::Povm)?;
        println!(
            "  slopes: state {:.3} (r2 {:.3}), povm {:.3} (r2 {:.3})",
            s.slope, s.r2, p.slope, p.r2
        );
    }
    Ok(())
}
