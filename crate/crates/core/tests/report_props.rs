use proptest::prelude::*;
use std::collections::BTreeMap;
use tentlab_core::probes::{CaseRow, Environment, ProbeReport, ProbeSummary};
use tentlab_core::report::{aggregate, cases_csv, parse_probe_report, to_json};

fn report(ratios: &[f64], j: u32) -> ProbeReport {
    let cases: Vec<CaseRow> = ratios
        .iter()
        .enumerate()
        .map(|(i, r)| CaseRow { id: format!("case{i}"), numerator: *r, denominator: 1.0, ratio: *r })
        .collect();
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    ProbeReport {
        probe: "regularity".into(),
        preset: "dkp_smooth".into(),
        j,
        p: 2.0,
        family: "trig".into(),
        params: BTreeMap::new(),
        cases,
        skipped: vec![],
        summary: ProbeSummary { max_ratio: max, min_ratio: min, spread: max / min },
        extra: BTreeMap::new(),
        environment: Environment { seed: 1, solver_tol: 1e-10, quadrature_tol: 1e-6 },
    }
}

proptest! {
    #[test]
    fn json_round_trip_is_exact(ratios in prop::collection::vec(0.01..10.0f64, 1..8), j in 3u32..9) {
        let r = report(&ratios, j);
        let text = to_json("probe", &r, "t").unwrap();
        prop_assert_eq!(parse_probe_report(&text).unwrap(), r.clone());
        prop_assert_eq!(cases_csv(&r).lines().count(), ratios.len() + 1);
    }

    #[test]
    fn aggregation_keeps_one_row_per_report(a in prop::collection::vec(0.5..2.0f64, 1..4), b in prop::collection::vec(0.5..2.0f64, 1..4)) {
        let rows = aggregate(&[report(&a, 6), report(&b, 5)]);
        prop_assert_eq!(rows.len(), 2);
        prop_assert!(rows[0].j < rows[1].j);
        prop_assert!(rows.iter().all(|r| r.j_spread >= 1.0));
    }
}
