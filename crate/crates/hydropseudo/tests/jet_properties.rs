//! Property tests for the jet arithmetic: the algebraic laws every later
//! derivative extraction silently relies on.

use hydropseudo::jets::Jet;
use hydropseudo::numerics::fd::central_derivative;
use proptest::prelude::*;

/// Coefficients stay O(1) so truncation error, not overflow, is what the
/// assertions probe.
fn jet_pair(order: usize) -> impl Strategy<Value = (Jet, Jet)> {
    let coeff = -1.5f64..1.5;
    let len = Jet::constant(2, order, 0.0).unwrap().coeffs().len();
    (
        proptest::collection::vec(coeff.clone(), len),
        proptest::collection::vec(coeff, len),
    )
        .prop_map(move |(a, b)| {
            (
                Jet::from_coeffs(2, order, a).unwrap(),
                Jet::from_coeffs(2, order, b).unwrap(),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn addition_commutes((a, b) in jet_pair(3)) {
        let ab = a.try_add(&b).unwrap();
        let ba = b.try_add(&a).unwrap();
        for (x, y) in ab.coeffs().iter().zip(ba.coeffs()) {
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn multiplication_commutes((a, b) in jet_pair(3)) {
        let ab = a.try_mul(&b).unwrap();
        let ba = b.try_mul(&a).unwrap();
        for (x, y) in ab.coeffs().iter().zip(ba.coeffs()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn multiplication_distributes((a, b) in jet_pair(3), (c, _) in jet_pair(3)) {
        let left = a.try_mul(&b.try_add(&c).unwrap()).unwrap();
        let right = a.try_mul(&b).unwrap().try_add(&a.try_mul(&c).unwrap()).unwrap();
        for (x, y) in left.coeffs().iter().zip(right.coeffs()) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn division_inverts_multiplication((a, b) in jet_pair(3)) {
        prop_assume!(b.value().abs() > 0.1);
        let q = a.try_div(&b).unwrap();
        let back = q.try_mul(&b).unwrap();
        for (x, y) in back.coeffs().iter().zip(a.coeffs()) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn exp_ln_round_trip(x0 in 0.2f64..3.0) {
        let x = Jet::variable(1, 4, 0, x0).unwrap();
        let back = x.ln_abs().unwrap().exp();
        for (got, want) in back.coeffs().iter().zip(x.coeffs()) {
            prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn product_rule_on_partials((a, b) in jet_pair(2)) {
        // partial() of a product equals the Leibniz combination of the
        // factors' values and first partials.
        let p = a.try_mul(&b).unwrap();
        for var in 0..2 {
            let alpha = if var == 0 { [1usize, 0] } else { [0usize, 1] };
            let got = p.partial(&alpha).unwrap();
            let want = a.partial(&alpha).unwrap() * b.value()
                + a.value() * b.partial(&alpha).unwrap();
            prop_assert!((got - want).abs() <= 1e-11 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn jet_derivatives_match_finite_differences(x0 in -1.5f64..1.5) {
        // Stay clear of the log singularity at -2 so the difference
        // stencil never straddles it.
        // d^k/dx^k of exp(x)·ln|2 + x| via jets vs central differences.
        let f = |x: f64| x.exp() * (2.0 + x).abs().ln();
        let x = Jet::variable(1, 3, 0, x0).unwrap();
        let jet = x.exp().try_mul(&x.add_scalar(2.0).ln_abs().unwrap()).unwrap();
        for k in 1..=2usize {
            let fd = central_derivative(f, x0, k, 1e-2);
            let exact = jet.partial(&[k]).unwrap();
            prop_assert!(
                (fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()),
                "order {} fd {} jet {}", k, fd, exact
            );
        }
    }
}

#[test]
fn variable_jets_seed_the_expected_coefficients() {
    let x = Jet::variable(2, 2, 0, 3.0).unwrap();
    assert_eq!(x.value(), 3.0);
    assert_eq!(x.raw(&[1, 0]).unwrap(), 1.0);
    assert_eq!(x.raw(&[0, 1]).unwrap(), 0.0);
    assert_eq!(x.raw(&[2, 0]).unwrap(), 0.0);
}

#[test]
fn composition_with_a_series_matches_direct_evaluation() {
    // sin-like cubic series composed with a shifted variable.
    let series = [0.0, 1.0, 0.0, -1.0 / 6.0];
    let x = Jet::variable(1, 3, 0, 0.4).unwrap();
    let dx = x.add_scalar(-0.4); // zero-valued increment
    let composed = dx.compose_series(&series);
    // Value and first derivative of t - t^3/6 at t = 0.
    assert_eq!(composed.value(), 0.0);
    assert!((composed.partial(&[1]).unwrap() - 1.0).abs() <= 1e-14);
    assert!((composed.partial(&[3]).unwrap() + 1.0).abs() <= 1e-12);
}
