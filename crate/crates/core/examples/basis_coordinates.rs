//! Coordinates of a qutrit state in the orthonormal Hermitian basis and the
//! polynomial positivity certificate computed from them.

use jtomo::basis::OperatorBasis;
use jtomo::random::{random_density, rng_from_seed};
use jtomo::refine::{in_physical_set, k_coefficients};

fn main() -> jtomo::Result<()> {
    let basis = OperatorBasis::new(3)?;
    let mut rng = rng_from_seed(1);
    let rho = random_density(3, 2, &mut rng);

    let coords = basis.state_to_coords(&rho)?;
    println!("d = 3, {} traceless coordinates", basis.n_params());
    println!("trace component  {:.6}", coords.trace_component);
    println!("x = {:.4?}", coords.x.as_slice());
    let back = basis.coords_to_state(&coords);
    println!("round-trip error {:.2e}", (back - &rho).norm());

    let cert = k_coefficients(&rho)?;
    println!("k = {:.6?}", cert.k);
    println!(
        "in physical set: {}",
        in_physical_set(&coords.x, &basis, 1e-12)
    );

    // push the Bloch-like vector outward until positivity fails
    for s in [1.0, 1.5, 2.0, 3.0] {
        let x = &coords.x * s;
        println!(
            "scaled by {s}: physical = {}",
            in_physical_set(&x, &basis, 1e-12)
        );
    }
    Ok(())
}
