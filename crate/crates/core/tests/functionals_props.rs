use proptest::prelude::*;
use tentlab_core::functionals::{area, avg_ntmax, band_mask, dual_witness, lp_norm, ntmax, truncated_ntmax};
use tentlab_core::HalfSpaceMesh;

fn mesh() -> HalfSpaceMesh {
    HalfSpaceMesh::new(2, 4).unwrap()
}

fn cells() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, mesh().n_cells())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn maximal_functions_are_homogeneous(v in cells(), c in 0.1..5.0f64) {
        let m = mesh();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        for (a, b) in ntmax(&v, &m).values.iter().zip(&ntmax(&scaled, &m).values) {
            prop_assert!((c * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        for (a, b) in area(&v, &m).values.iter().zip(&area(&scaled, &m).values) {
            prop_assert!((c * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn ntmax_is_subadditive(v in cells(), w in cells()) {
        let m = mesh();
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        let (nv, nw, ns) = (ntmax(&v, &m), ntmax(&w, &m), ntmax(&sum, &m));
        for i in 0..m.nx {
            prop_assert!(ns.values[i] <= nv.values[i] + nw.values[i] + 1e-12);
        }
    }

    #[test]
    fn averaged_maximal_is_below_pointwise(v in cells()) {
        let m = mesh();
        let (n, avg) = (ntmax(&v, &m), avg_ntmax(&v, &m));
        for i in 0..m.nx {
            prop_assert!(avg.values[i] <= n.values[i] + 1e-12);
        }
    }

    #[test]
    fn power_mean_ordering(v in cells()) {
        let m = mesh();
        let k = band_mask(&m, 0.1, 0.8);
        let p1 = truncated_ntmax(&v, &m, &k, 1.0).unwrap();
        let p2 = truncated_ntmax(&v, &m, &k, 2.0).unwrap();
        for i in 0..m.nx {
            prop_assert!(p1.profile.values[i] <= p2.profile.values[i] + 1e-12);
        }
    }

    #[test]
    fn lp_norm_is_monotone_in_p(v in prop::collection::vec(0.0..4.0f64, 16)) {
        let m = mesh();
        let prof = tentlab_core::functionals::FunctionalProfile::new("v", v, &m);
        prop_assert!(lp_norm(&prof, 1.5) <= lp_norm(&prof, 3.0) + 1e-12);
    }

    #[test]
    fn witness_certificate_is_scale_invariant(v in prop::collection::vec(-1.0..1.0f64, 2 * 256), c in 0.2..4.0f64) {
        let m = mesh();
        let k = band_mask(&m, 1.0 / 8.0, 0.5);
        let f: Vec<[f64; 3]> = (0..m.n_cells()).map(|i| [v[2 * i], 0.0, v[2 * i + 1]]).collect();
        let g: Vec<[f64; 3]> = f.iter().map(|x| [c * x[0], 0.0, c * x[2]]).collect();
        if let (Ok(a), Ok(b)) = (dual_witness(&f, &m, &k, 2.0), dual_witness(&g, &m, &k, 2.0)) {
            prop_assert!(a.certificate >= 0.5);
            prop_assert!((a.certificate - b.certificate).abs() < 1e-10);
            prop_assert!((c * a.target - b.target).abs() < 1e-10 * b.target.max(1.0));
        }
    }
}
