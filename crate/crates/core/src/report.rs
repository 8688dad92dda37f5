//! Report files: versioned JSON envelopes, per-case CSV, whitespace `.dat`
//! tables, and aggregation of several probe reports.

use crate::error::{Error, Result};
use crate::probes::ProbeReport;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

pub const SCHEMA: u32 = 1;

/// Everything except `timestamp` is a deterministic function of the inputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: u32,
    pub kind: String,
    pub timestamp: String,
    pub report: T,
}

pub fn to_json<T: Serialize>(kind: &str, report: &T, timestamp: &str) -> Result<String> {
    let env = Envelope { schema: SCHEMA, kind: kind.to_string(), timestamp: timestamp.to_string(), report };
    serde_json::to_string_pretty(&env).map_err(|e| Error::Numerical(format!("cannot serialize report: {e}")))
}

/// Parses a probe report envelope, checking the schema version.
pub fn parse_probe_report(text: &str) -> Result<ProbeReport> {
    let env: Envelope<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed report: {e}")))?;
    if env.schema != SCHEMA {
        return Err(Error::Config(format!("unsupported report schema {}", env.schema)));
    }
    if env.kind != "probe" {
        return Err(Error::Config(format!("expected a probe report, found '{}'", env.kind)));
    }
    serde_json::from_value(env.report).map_err(|e| Error::Config(format!("malformed probe report: {e}")))
}

pub fn cases_csv(report: &ProbeReport) -> String {
    let mut s = String::from("case,numerator,denominator,ratio\n");
    for c in &report.cases {
        let _ = writeln!(s, "{},{},{},{}", c.id, c.numerator, c.denominator, c.ratio);
    }
    s
}

/// `index ratio numerator denominator`, one line per case.
pub fn cases_dat(report: &ProbeReport) -> String {
    let mut s = format!("# {} {} J={} p={}\n# index ratio numerator denominator\n", report.probe, report.preset, report.j, report.p);
    for (i, c) in report.cases.iter().enumerate() {
        let _ = writeln!(s, "{i} {} {} {}", c.ratio, c.numerator, c.denominator);
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub probe: String,
    pub preset: String,
    pub j: u32,
    pub p: f64,
    pub cases: usize,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// Spread over the data family.
    pub spread: f64,
    /// `max/min` of `max_ratio` over all rows sharing probe, preset and p.
    pub j_spread: f64,
}

/// One row per report, sorted by (probe, preset, J, p).
pub fn aggregate(reports: &[ProbeReport]) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = reports
        .iter()
        .map(|r| AggregateRow {
            probe: r.probe.clone(),
            preset: r.preset.clone(),
            j: r.j,
            p: r.p,
            cases: r.cases.len(),
            max_ratio: r.summary.max_ratio,
            min_ratio: r.summary.min_ratio,
            spread: r.summary.spread,
            j_spread: 1.0,
        })
        .collect();
    rows.sort_by(|a, b| {
        (&a.probe, &a.preset, a.j).cmp(&(&b.probe, &b.preset, b.j)).then(a.p.total_cmp(&b.p))
    });
    let mut groups: BTreeMap<(String, String, u64), (f64, f64)> = BTreeMap::new();
    for r in &rows {
        let e = groups.entry((r.probe.clone(), r.preset.clone(), r.p.to_bits())).or_insert((f64::INFINITY, 0.0));
        e.0 = e.0.min(r.max_ratio);
        e.1 = e.1.max(r.max_ratio);
    }
    for r in &mut rows {
        let (lo, hi) = groups[&(r.probe.clone(), r.preset.clone(), r.p.to_bits())];
        r.j_spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    }
    rows
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from("probe,preset,J,p,cases,max_ratio,min_ratio,spread,j_spread\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.probe, r.preset, r.j, r.p, r.cases, r.max_ratio, r.min_ratio, r.spread, r.j_spread
        );
    }
    s
}

/// Plot tables per probe: `J max_ratio min_ratio spread` per preset block.
pub fn aggregate_dat(rows: &[AggregateRow]) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for r in rows {
        let s = out.entry(r.probe.clone()).or_insert_with(|| "# J max_ratio min_ratio spread preset p\n".to_string());
        let _ = writeln!(s, "{} {} {} {} {} {}", r.j, r.max_ratio, r.min_ratio, r.spread, r.preset, r.p);
    }
    out
}

/// Fixed-width summary table for terminals.
pub fn summary_table(rows: &[AggregateRow]) -> String {
    let mut s = format!("{:<16} {:<24} {:>3} {:>5} {:>12} {:>10} {:>10}\n", "probe", "preset", "J", "p", "max_ratio", "spread", "J-spread");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<16} {:<24} {:>3} {:>5} {:>12.6} {:>10.4} {:>10.4}",
            r.probe, r.preset, r.j, r.p, r.max_ratio, r.spread, r.j_spread
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::{CaseRow, Environment, ProbeSummary};

    fn report(j: u32, max: f64) -> ProbeReport {
        ProbeReport {
            probe: "regularity".into(),
            preset: "constant".into(),
            j,
            p: 2.0,
            family: "trig".into(),
            params: BTreeMap::new(),
            cases: vec![CaseRow { id: "cos1".into(), numerator: max, denominator: 1.0, ratio: max }],
            skipped: vec![],
            summary: ProbeSummary { max_ratio: max, min_ratio: max, spread: 1.0 },
            extra: BTreeMap::new(),
            environment: Environment { seed: 1, solver_tol: 1e-10, quadrature_tol: 1e-6 },
        }
    }

    #[test]
    fn json_round_trip() {
        let r = report(5, 1.25);
        let text = to_json("probe", &r, "0").unwrap();
        assert!(text.contains("\"schema\": 1"));
        assert_eq!(parse_probe_report(&text).unwrap(), r);
        assert!(parse_probe_report("{").is_err());
        assert!(parse_probe_report(&text.replace("\"schema\": 1", "\"schema\": 2")).is_err());
    }

    #[test]
    fn timestamp_is_the_only_difference() {
        let r = report(5, 1.25);
        let a = to_json("probe", &r, "100").unwrap();
        let b = to_json("probe", &r, "200").unwrap();
        let diff: Vec<_> = a.lines().zip(b.lines()).filter(|(x, y)| x != y).collect();
        assert_eq!(diff.len(), 1);
        assert!(diff[0].0.contains("timestamp"));
    }

    #[test]
    fn two_resolutions_give_two_rows_with_spread() {
        let rows = aggregate(&[report(6, 1.5), report(5, 1.2)]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].j, 5);
        assert!((rows[0].j_spread - 1.25).abs() < 1e-12);
        let csv = aggregate_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
    }
}
