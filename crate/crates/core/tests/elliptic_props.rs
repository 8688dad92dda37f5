use proptest::prelude::*;
use tentlab_core::elliptic::{boundary_samples, solve_dirichlet, TrigData};
use tentlab_core::field::{Constant, DkpSmooth};
use tentlab_core::{HalfSpaceMesh, Mat};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solutions_are_linear_in_the_data(a0 in -1.0..1.0f64, a1 in -1.0..1.0f64, c in -2.0..2.0f64) {
        let mesh = HalfSpaceMesh::new(2, 4).unwrap();
        let field = DkpSmooth::new(2, 0.2, 1.0);
        let f = boundary_samples(&mesh, |x| a0 * (2.0 * std::f64::consts::PI * x[0]).cos());
        let g = boundary_samples(&mesh, |x| a1 * (4.0 * std::f64::consts::PI * x[0]).sin());
        let mix: Vec<f64> = f.iter().zip(&g).map(|(u, v)| u + c * v).collect();
        let (uf, ug, um) = (
            solve_dirichlet(&field, &f, &mesh).unwrap(),
            solve_dirichlet(&field, &g, &mesh).unwrap(),
            solve_dirichlet(&field, &mix, &mesh).unwrap(),
        );
        for i in 0..um.values.len() {
            prop_assert!((um.values[i] - uf.values[i] - c * ug.values[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn discrete_maximum_principle(modes in prop::collection::vec(-1.0..1.0f64, 3)) {
        let mesh = HalfSpaceMesh::new(2, 4).unwrap();
        let data = TrigData { mean: 0.0, modes: modes.iter().enumerate().map(|(k, c)| (k as u32 + 1, *c, 0.0)).collect() };
        let f = boundary_samples(&mesh, |x| data.eval(x[0]));
        let sol = solve_dirichlet(&Constant { a: Mat::identity(2) }, &f, &mesh).unwrap();
        let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        let lo = f.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
        prop_assert!(sol.values.iter().all(|v| *v <= hi + 1e-8 && *v >= lo - 1e-8));
    }
}
