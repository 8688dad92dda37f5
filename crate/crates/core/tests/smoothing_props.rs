use proptest::prelude::*;
use std::sync::Arc;
use tentlab_core::field::{Constant, FieldRef};
use tentlab_core::smoothing::{decompose, initial_split, kernel_mass, mollify, DecomposeOptions};
use tentlab_core::{Error, Mat, MatrixField, Point};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kernel_has_unit_mass(x in 0.0..1.0f64, t in 1e-3..1.0f64, lambda in 1.2..32.0f64) {
        prop_assert!((kernel_mass(2, &Point::new2(x, t), lambda, 64) - 1.0).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn constants_survive_mollification(c in prop::collection::vec(0.5..2.0f64, 2), x in 0.0..1.0f64, t in 1e-3..0.5f64) {
        let a: FieldRef = Arc::new(Constant { a: Mat::diag(&c) });
        let (b1, _) = initial_split(a.clone());
        let b = mollify(b1, 4.0).unwrap();
        let p = Point::new2(x, t);
        prop_assert!((b.eval(&p) - a.eval(&p)).max_abs() < 1e-12);
    }
}

#[test]
fn eps_outside_unit_interval_is_rejected() {
    let a: FieldRef = Arc::new(Constant { a: Mat::identity(2) });
    assert!(matches!(decompose(a, 1.5, &DecomposeOptions::default()), Err(Error::Config(_))));
}
