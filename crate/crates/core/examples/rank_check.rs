//! Rank of the stacked regression matrices for several process ensembles and
//! what that means for identifiability.

use jtomo::basis::OperatorBasis;
use jtomo::bench::five_qubit_hamiltonians;
use jtomo::channels::{
    build_regression_matrices, make_named_channel, min_hamiltonian_count, rank_bound, ChannelKind,
    ProcessEnsemble,
};

fn report(name: &str, ens: &ProcessEnsemble) -> jtomo::Result<()> {
    let basis = OperatorBasis::new(ens.dim())?;
    let reg = build_regression_matrices(ens, &basis)?;
    let n = basis.n_params();
    println!(
        "{name:<28} L={:<3} rank(B)={}/{}  rank(natural)={}/{} (bound {})",
        ens.len(),
        reg.rank_b,
        n * n,
        reg.rank_b_natural,
        ens.dim().pow(4),
        rank_bound(ens)
    );
    Ok(())
}

fn main() -> jtomo::Result<()> {
    let hams = five_qubit_hamiltonians();
    report(
        "5 Hamiltonians, n=3",
        &ProcessEnsemble::from_hamiltonians(&hams, 1.0, 3)?,
    )?;
    report(
        "3 Hamiltonians, n=2",
        &ProcessEnsemble::from_hamiltonians(&hams[..3], 1.0, 2)?,
    )?;
    let tp: Vec<_> = (0..20)
        .map(|s| {
            make_named_channel(ChannelKind::RandomTp {
                d: 2,
                rank: 2,
                seed: s,
            })
        })
        .collect::<jtomo::Result<_>>()?;
    report("20 random TP channels", &ProcessEnsemble::new(tp)?)?;
    let cp: Vec<_> = (0..20)
        .map(|s| {
            make_named_channel(ChannelKind::RandomCp {
                d: 2,
                rank: 2,
                seed: s,
            })
        })
        .collect::<jtomo::Result<_>>()?;
    report("20 random trace-decreasing", &ProcessEnsemble::new(cp)?)?;
    let flips: Vec<_> = [0.1, 0.5, 0.9]
        .iter()
        .map(|&p| make_named_channel(ChannelKind::BitFlip(p)))
        .collect::<jtomo::Result<_>>()?;
    report("bit flips", &ProcessEnsemble::new(flips)?)?;
    for d in 2..=4 {
        let (h, per) = min_hamiltonian_count(d);
        println!("d={d}: closed systems need >= {h} Hamiltonians, {per} samples each");
    }
    Ok(())
}
