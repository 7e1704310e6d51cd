mod common;

use common::{pauli, rng};
use jtomo::basis::{devectorize, inner, vectorize, OperatorBasis};
use jtomo::linalg::{c, kron, CMat};
use jtomo::random::{random_complex_matrix, random_hermitian};
use proptest::prelude::*;

#[test]
fn gram_matrix_is_identity_for_small_dims() {
    for d in 2..=4 {
        let basis = OperatorBasis::new(d).unwrap();
        let om = basis.omegas();
        assert_eq!(om.len(), d * d);
        for i in 0..om.len() {
            for j in 0..om.len() {
                let g = (om[i].adjoint() * &om[j]).trace();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - c(want, 0.0)).norm() < 1e-12, "d={d} ({i},{j}) {g}");
            }
        }
        assert!((&om[0] - CMat::identity(d, d) * c(1.0 / (d as f64).sqrt(), 0.0)).norm() < 1e-15);
    }
}

#[test]
fn qubit_state_and_detector_coordinates() {
    let basis = OperatorBasis::new(2).unwrap();
    let ket0 = CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]);
    let s = 1.0 / 2f64.sqrt();
    let coords = basis.state_to_coords(&ket0).unwrap();
    for (got, want) in coords.x.iter().zip([0.0, 0.0, s]) {
        assert!((got - want).abs() < 1e-15);
    }
    let p = basis.povm_element_to_coords(&ket0).unwrap();
    assert!((p.c0 - s).abs() < 1e-15);
    for (got, want) in p.c.iter().zip([0.0, 0.0, s]) {
        assert!((got - want).abs() < 1e-15);
    }
    // Pauli ordering (x, y, z), each scaled by 1/√2.
    for k in 0..3 {
        assert!((basis.omega(k + 1) - pauli(k) * c(s, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn vec_of_product_is_kronecker_action() {
    let mut r = rng(11);
    for _ in 0..20 {
        let a = random_complex_matrix(2, 2, &mut r);
        let b = random_complex_matrix(2, 2, &mut r);
        let cm = random_complex_matrix(2, 2, &mut r);
        let lhs = vectorize(&(&a * &b * &cm));
        let rhs = kron(&cm.transpose(), &a) * vectorize(&b);
        assert!((lhs - rhs).norm() < 1e-12);
    }
}

#[test]
fn conjugated_kronecker_is_real_in_operator_basis() {
    for d in [2usize, 3] {
        let u = OperatorBasis::new(d).unwrap().change_of_basis().u;
        let mut r = rng(100 + d as u64);
        for _ in 0..100 {
            let a = random_complex_matrix(d, d, &mut r);
            let m = &u * kron(&a.conjugate(), &a) * u.adjoint();
            let im = m.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            assert!(im < 1e-10, "d={d} max imag {im:e}");
        }
    }
}

fn arb_hermitian(d: usize) -> impl Strategy<Value = CMat> {
    any::<u64>().prop_map(move |s| random_hermitian(d, &mut rng(s)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coordinates_are_linear(
        d in 2usize..=4,
        s1 in any::<u64>(),
        s2 in any::<u64>(),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let basis = OperatorBasis::new(d).unwrap();
        let a = random_hermitian(d, &mut rng(s1));
        let b = random_hermitian(d, &mut rng(s2));
        let mix = &a * c(alpha, 0.0) + &b * c(beta, 0.0);
        let lhs = basis.coordinates(&mix).unwrap();
        let rhs = basis.coordinates(&a).unwrap() * alpha + basis.coordinates(&b).unwrap() * beta;
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn coordinates_are_trace_inner_products(a in (2usize..=4).prop_flat_map(arb_hermitian)) {
        let d = a.nrows();
        let basis = OperatorBasis::new(d).unwrap();
        let x = basis.coordinates(&a).unwrap();
        for (k, om) in basis.omegas().iter().enumerate() {
            prop_assert!((x[k] - inner(om, &a).re).abs() < 1e-12);
        }
        let back = basis.matrix_from_coordinates(x[0], &x.rows(1, d * d - 1).into_owned());
        prop_assert!((back - a).norm() < 1e-12);
    }

    #[test]
    fn vec_and_devec_are_inverse(rows in 1usize..=5, seed in any::<u64>()) {
        let a = random_complex_matrix(rows, rows, &mut rng(seed));
        let v = vectorize(&a);
        prop_assert_eq!(v.len(), rows * rows);
        // column-major: entry (i, j) sits at j·rows + i
        prop_assert_eq!(v[rows * (rows - 1)], a[(0, rows - 1)]);
        prop_assert_eq!(devectorize(&v).unwrap(), a);
        let w = jtomo::linalg::CVec::from_fn(rows * rows, |k, _| c(k as f64, -(k as f64)));
        prop_assert_eq!(vectorize(&devectorize(&w).unwrap()), w);
    }
}
