use proptest::prelude::*;
use std::sync::Arc;
use tentlab_core::chgvar::{build_rho, conjugate};
use tentlab_core::field::{Constant, DkpSmooth, FieldRef};
use tentlab_core::{Mat, MatrixField, Point};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constant_maps_conjugate_in_closed_form(v in -0.5..0.5f64, h in 0.5..2.0f64, x in 0.0..1.0f64, t in 0.01..1.0f64) {
        let b: FieldRef = Arc::new(Constant { a: Mat::from_rows(2, &[1.0, 0.0, v, h]) });
        let rho = Arc::new(build_rho(b, 200).unwrap());
        let id: FieldRef = Arc::new(Constant { a: Mat::identity(2) });
        let a_rho = conjugate(id, rho).unwrap();
        // J = [[1, v], [0, h]]
        let jac = Mat::from_rows(2, &[1.0, v, 0.0, h]);
        let jinv = jac.inverse().unwrap();
        let want = (jinv.clone() * jinv.transpose()).scale(h);
        prop_assert!((a_rho.eval(&Point::new2(x, t)) - want).max_abs() < 1e-12);
    }

    #[test]
    fn inverse_undoes_the_map(x in 0.0..1.0f64, t in 0.02..1.0f64) {
        let b: FieldRef = Arc::new(DkpSmooth::with_ones(2, 0.05, 1.0));
        let rho = build_rho(b, 500).unwrap();
        let p = Point::new2(x, t);
        let back = rho.invert(&rho.map(&p)).unwrap();
        prop_assert!((back.x[0] - x).abs() < 1e-9 && (back.t - t).abs() < 1e-9);
    }
}
