mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roa_core::lmikit::{min_eigenvalue, VERIFY_TOL};
use roa_core::{solve_pwq, solve_quadratic_ldi, verify_certificate, LdiSystem, LmiError};

/// Vertices `S - (alpha + spectral abscissa of S) I`, so each is Hurwitz.
fn hurwitz_ldi(rng: &mut ChaCha8Rng, count: usize) -> LdiSystem {
    let vertices = (0..count)
        .map(|_| {
            let s = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
            let abscissa = s.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let shift = abscissa + rng.random_range(0.1..1.0);
            s - DMatrix::identity(2, 2) * shift
        })
        .collect();
    ldi(vertices)
}

#[test]
fn solved_certificates_verify_and_scale() {
    let sys = ldi(identity_vertices());
    let sol = solve_pwq(&sys, &roa_core::DEFAULT_LAMBDA_GRID).unwrap();
    let base = verify_certificate(&sol.certificate, &sys, VERIFY_TOL).unwrap();
    assert!(base.accepted && base.min_margin >= VERIFY_TOL);
    for c in [0.5, 2.0, 10.0] {
        let r = verify_certificate(&sol.certificate.scaled(c), &sys, VERIFY_TOL).unwrap();
        assert!(r.accepted);
        assert!((r.min_margin - c * base.min_margin).abs() <= 1e-9 * c);
    }
}

#[test]
fn certificate_survives_vertex_subsets() {
    let vertices = shear_vertices(-1.0);
    let sys = ldi(vertices.clone());
    let sol = solve_pwq(&sys, &roa_core::DEFAULT_LAMBDA_GRID).unwrap();
    for mask in 1u32..(1 << vertices.len()) {
        let subset: Vec<_> = (0..vertices.len()).filter(|i| mask >> i & 1 == 1).map(|i| vertices[i].clone()).collect();
        let r = verify_certificate(&sol.certificate, &ldi(subset), VERIFY_TOL).unwrap();
        assert!(r.accepted, "subset mask {mask:b}");
    }
}

#[test]
fn zero_lambda_matches_common_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..8 {
        let sys = hurwitz_ldi(&mut rng, 3);
        let pwq = solve_pwq(&sys, &[0.0]);
        let quad = solve_quadratic_ldi(&sys);
        assert_eq!(pwq.is_ok(), quad.is_ok(), "pwq {pwq:?} quad {quad:?}");
    }
}

#[test]
fn unstable_vertex_has_no_certificate() {
    let sys = ldi(vec![mat(&[[-1.0, 0.0], [0.0, -1.0]]), mat(&[[0.5, 0.0], [0.0, -1.0]])]);
    assert!(solve_quadratic_ldi(&sys).is_err());
    assert!(matches!(solve_pwq(&sys, &[0.0, 1.0]), Err(LmiError::GridExhausted { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_returned_certificate_verifies(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = hurwitz_ldi(&mut rng, 2);
        if let Ok(sol) = solve_pwq(&sys, &[0.0, 1.0, 10.0]) {
            let r = verify_certificate(&sol.certificate, &sys, VERIFY_TOL).unwrap();
            prop_assert!(r.accepted);
            for p in &sol.certificate.pieces {
                prop_assert!(min_eigenvalue(p.matrix()) > 0.0);
            }
        }
    }

    #[test]
    fn single_vertex_hurwitz_is_always_certified(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = hurwitz_ldi(&mut rng, 1);
        prop_assert!(solve_quadratic_ldi(&sys).is_ok());
    }
}
