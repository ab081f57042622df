use roa_core::{integrate, validate_region, BoxDomain, PolyMap, RoaEstimate, SimOptions, SymMatrix, Transform};

fn decay() -> PolyMap {
    PolyMap::linear(&nalgebra::DMatrix::from_element(1, 1, -1.0)).unwrap()
}

fn endpoint_error(dt: f64) -> f64 {
    let opts = SimOptions { dt, horizon: 1.0, conv_radius: 0.0 };
    let tr = integrate(&decay(), &[1.0], &opts);
    (tr.states.last().unwrap()[0] - (-1.0f64).exp()).abs()
}

#[test]
fn rk4_is_fourth_order() {
    for dt in [0.1, 0.05, 0.02] {
        let ratio = endpoint_error(dt) / endpoint_error(dt / 2.0);
        assert!((12.0..=20.0).contains(&ratio), "dt {dt}: ratio {ratio}");
    }
}

#[test]
fn validation_is_deterministic() {
    let bx = BoxDomain::symmetric(&[1.0]).unwrap();
    let roa = RoaEstimate::new(vec![SymMatrix::identity(1)], 0.5, Transform::identity(1), bx, false).unwrap();
    let opts = SimOptions { horizon: 20.0, ..Default::default() };
    let a = validate_region(&roa, &decay(), 64, 11, &opts);
    let b = validate_region(&roa, &decay(), 64, 11, &opts);
    assert_eq!(a, b);
    assert!(a.all_converged());
}
