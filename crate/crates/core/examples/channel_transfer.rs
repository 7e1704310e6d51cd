//! Transfer matrices of a few channels, the generalized-unital test, and a
//! non-unital channel split into four generalized-unital pieces.

use jtomo::basis::OperatorBasis;
use jtomo::channels::{
    is_generalized_unital, make_named_channel, pauli_sandwich_processes, transfer_matrix,
    ChannelKind,
};
use jtomo::random::{haar_unitary, rng_from_seed};

fn main() -> jtomo::Result<()> {
    let basis = OperatorBasis::new(2)?;
    let channels = [
        make_named_channel(ChannelKind::BitFlip(0.2))?,
        make_named_channel(ChannelKind::PhaseFlip(0.4))?,
        make_named_channel(ChannelKind::RandomTp {
            d: 2,
            rank: 2,
            seed: 3,
        })?,
        make_named_channel(ChannelKind::RandomCp {
            d: 2,
            rank: 2,
            seed: 4,
        })?,
    ];
    for ch in &channels {
        let tm = transfer_matrix(ch, &basis)?;
        let (unital, alpha) = is_generalized_unital(ch, &basis, 1e-8)?;
        println!("{}", ch.label());
        println!(
            "  r = {:.4}, |t| = {:.2e}, |h| = {:.2e}",
            tm.r,
            tm.t.norm(),
            tm.h.norm()
        );
        println!("  E = {:.4}", tm.e);
        println!("  generalized unital: {unital} (alpha {alpha:?})");
    }

    let mut rng = rng_from_seed(8);
    let (v1, v2) = (haar_unitary(2, &mut rng), haar_unitary(2, &mut rng));
    let split = pauli_sandwich_processes(&v1, &v2, 0.2)?;
    println!("sandwich split, g_max = {:.4}", split.max_g);
    for ch in [
        &split.phi1_plus,
        &split.phi1_minus,
        &split.phi2_plus,
        &split.phi2_minus,
    ] {
        let (unital, _) = is_generalized_unital(ch, &basis, 1e-8)?;
        println!("  {}: generalized unital {unital}", ch.label());
    }
    Ok(())
}
