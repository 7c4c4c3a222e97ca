//! The coefficient-matrix constructions checked against each other: the
//! general two-formula route versus the per-family closed forms, plus the
//! structural properties (row sums, flux gradients, diagonal recovery)
//! that certify the assembly.

use hydropseudo::builder::{
    build_example, build_general, check_constraints, diagonal_cross_check, sigma_fluxes,
    SystemSpec,
};
use hydropseudo::hkernels::{sample_tuples, HKernelFamily, Kernel, Slot};
use proptest::prelude::*;

fn spec(family: HKernelFamily, lambda: Vec<f64>, c: Vec<f64>) -> SystemSpec {
    SystemSpec::new(Kernel::new(family).unwrap(), lambda, c).unwrap()
}

fn sampled_points(spec: &SystemSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let plan = spec.kernel().sample_plan();
    let slots = vec![Slot::U; spec.n()];
    sample_tuples(&plan, &slots, count, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn example1_matches_the_general_construction(seed in 0u64..500) {
        let s = spec(
            HKernelFamily::LogKappa { kappa: 0.0 },
            vec![0.3, 1.1, -0.8, 2.0],
            vec![1.0, -0.4, 0.9, 1.7],
        );
        for u in sampled_points(&s, 5, seed) {
            let general = build_general(&s, &u).unwrap();
            let example = build_example(1, &s, &u).unwrap();
            prop_assert!(general.max_abs_diff(&example) <= 1e-10);
        }
    }

    #[test]
    fn example3_matches_the_general_construction(seed in 0u64..500) {
        let s = spec(
            HKernelFamily::ShiftedLog,
            vec![0.5, 1.5, -1.0, 2.5],
            vec![0.8, -1.2, 0.5, 1.0],
        );
        for u in sampled_points(&s, 5, seed) {
            let general = build_general(&s, &u).unwrap();
            let example = build_example(3, &s, &u).unwrap();
            prop_assert!(general.max_abs_diff(&example) <= 1e-10);
        }
    }

    #[test]
    fn example2_matches_general_up_to_the_weight_flip(seed in 0u64..500, kappa in -1.0f64..1.0) {
        // The printed Example-2 matrix corresponds to the general formulas
        // applied with negated weights.
        let lambda = vec![0.2, 1.3, -0.7, 1.9];
        let c = vec![0.6, -1.1, 0.4, 0.9];
        let s = spec(HKernelFamily::ExpKappa { kappa }, lambda.clone(), c.clone());
        let flipped = s.with_c(c.iter().map(|v| -v).collect()).unwrap();
        for u in sampled_points(&s, 5, seed) {
            let example = build_example(2, &s, &u).unwrap();
            let general = build_general(&flipped, &u).unwrap();
            prop_assert!(example.max_abs_diff(&general) <= 1e-10);
        }
    }

    #[test]
    fn rows_of_printed_matrices_sum_to_zero(seed in 0u64..200) {
        // Examples 1 and 2 print the diagonal as the negative row sum, so
        // the full rows must cancel identically.
        for s in [
            spec(HKernelFamily::LogKappa { kappa: 0.0 }, vec![0.0, 1.0, 2.0], vec![1.0, 2.0, -0.5]),
            spec(HKernelFamily::ExpKappa { kappa: 0.4 }, vec![0.0, 1.0, 2.0], vec![1.0, 2.0, -0.5]),
        ] {
            let which = match s.kernel().family() {
                HKernelFamily::LogKappa { .. } => 1,
                _ => 2,
            };
            for u in sampled_points(&s, 4, seed) {
                let b = build_example(which, &s, &u).unwrap();
                for i in 0..s.n() {
                    prop_assert!(b.row_sum(i).abs() <= 1e-11);
                }
            }
        }
    }

    #[test]
    fn flux_gradient_recovers_the_matrix(seed in 0u64..200) {
        // dσ_i/du_j = b_ij off the diagonal: the conservative form and the
        // coefficient form describe the same system.
        let s = spec(
            HKernelFamily::LogKappa { kappa: 0.0 },
            vec![0.4, 1.6, -0.9],
            vec![1.2, -0.7, 0.5],
        );
        for u in sampled_points(&s, 3, seed) {
            let b = build_general(&s, &u).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    if i == j {
                        continue;
                    }
                    let h = 1e-5;
                    let mut up = u.clone();
                    let mut dn = u.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (sigma_fluxes(&s, &up).unwrap()[i]
                        - sigma_fluxes(&s, &dn).unwrap()[i])
                        / (2.0 * h);
                    prop_assert!(
                        (fd - b.get(i, j)).abs() <= 1e-6 * (1.0 + b.get(i, j).abs()),
                        "entry ({}, {}): fd {} vs {}", i, j, fd, b.get(i, j)
                    );
                }
            }
        }
    }
}

#[test]
fn example4_with_trivial_polynomials_reduces_to_example1() {
    let quad = hydropseudo::hkernels::quadrature::preset("unit-p").unwrap();
    let mut trivial = quad;
    trivial.z = [0.0, 0.0];
    // With P = 1 and Z = 0 the integral kernels collapse to logarithms.
    let s4 = SystemSpec::new(
        Kernel::new(HKernelFamily::Quadrature(trivial)).unwrap(),
        vec![0.3, 1.4],
        vec![1.0, 0.7],
    )
    .unwrap();
    let s1 = spec(
        HKernelFamily::LogKappa { kappa: 0.0 },
        vec![0.3, 1.4],
        vec![1.0, 0.7],
    );
    let u = vec![2.3, 2.8];
    let b4 = build_example(4, &s4, &u).unwrap();
    let b1 = build_example(1, &s1, &u).unwrap();
    assert!(b4.max_abs_diff(&b1) <= 1e-10);
}

#[test]
fn constraint_report_tracks_nu_and_the_sums() {
    // Kernel with vanishing right-hand side: no constraints needed.
    let free = spec(
        HKernelFamily::LogKappa { kappa: 0.0 },
        vec![1.0, 2.0],
        vec![3.0, 4.0],
    );
    let r = check_constraints(&free);
    assert!(!r.needed);

    // ShiftedLog needs both sums to vanish.
    let bad = spec(HKernelFamily::ShiftedLog, vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]);
    let r = check_constraints(&bad);
    assert!(r.needed && !r.satisfied);

    let good = spec(
        HKernelFamily::ShiftedLog,
        vec![1.0, 2.0, 3.0],
        vec![1.0, -2.0, 1.0],
    );
    let r = check_constraints(&good);
    assert!(r.needed && r.satisfied);
    assert!(r.sum_c.abs() <= 1e-12 && r.sum_lambda_c.abs() <= 1e-12);
}

#[test]
fn diagonal_recovery_detects_the_constraints() {
    // The alternative diagonal formula holds exactly iff the compatibility
    // constraints do, so its gap doubles as a constraint detector.
    let good = spec(
        HKernelFamily::ShiftedLog,
        vec![1.0, 2.0, 3.0],
        vec![1.0, -2.0, 1.0],
    );
    let u = vec![0.9, 1.7, 2.8];
    let gaps = diagonal_cross_check(&good, &u).unwrap();
    assert!(gaps.iter().all(|g| g.abs() <= 1e-9), "{gaps:?}");

    let bad = good.with_c(vec![1.0, 1.0, 1.0]).unwrap();
    let gaps = diagonal_cross_check(&bad, &u).unwrap();
    assert!(gaps.iter().any(|g| g.abs() >= 1e-4), "{gaps:?}");
}

#[test]
fn quadrature_is_outside_the_general_construction() {
    let s = SystemSpec::new(
        Kernel::new(HKernelFamily::Quadrature(
            hydropseudo::hkernels::quadrature::preset("unit-p").unwrap(),
        ))
        .unwrap(),
        vec![1.0, 2.0],
        vec![1.0, -1.0],
    )
    .unwrap();
    assert!(build_general(&s, &[2.3, 2.8]).is_err());
    assert!(build_example(4, &s, &[2.3, 2.8]).is_ok());
}
