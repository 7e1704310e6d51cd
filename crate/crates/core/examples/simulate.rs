//! Simulates finite-shot statistics for the complete one-qubit scenario and
//! compares them with the exact probabilities.

use jtomo::bench::preset;

fn main() -> jtomo::Result<()> {
    let inst = preset("one_qubit_closed_complete")?.instantiate()?;
    let exact = inst.simulate(1, 0, true)?;
    for n0 in [100, 10_000, 1_000_000] {
        let ds = inst.simulate(n0, 42, false)?;
        let dev: f64 = ds
            .y_hat
            .iter()
            .zip(&exact.y_hat)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)))
            .sum::<f64>()
            .sqrt();
        println!(
            "N0={n0:<8} N={:<9} |y_hat - y| = {dev:.3e}  anchor estimate {:.4} (exact {:.4})",
            ds.total_copies(),
            ds.x01_bar,
            exact.x01_bar
        );
    }
    println!("first process frequencies: {:.4?}", exact.y_hat[0]);
    Ok(())
}
