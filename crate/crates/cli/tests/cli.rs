use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tentlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tentlab")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tentlab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn without_timestamp(text: &str) -> String {
    text.lines().filter(|l| !l.trim_start().starts_with("\"timestamp\"")).collect::<Vec<_>>().join("\n")
}

#[test]
fn analyze_constant_has_zero_norms() {
    let dir = scratch("analyze");
    let out = tentlab(&["analyze", "--preset", "constant", "--J", "4", "--out", s(&dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(dir.join("analyze.json")).unwrap();
    assert!(json.contains("\"schema\": 1"));
    assert!(json.contains("\"norm\": 0.0"));
}

#[test]
fn invalid_resolution_exits_with_validation_code() {
    let out = tentlab(&["solve", "--preset", "dkp_smooth", "--J", "99"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("J"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = scratch("badcfg");
    let cfg = dir.join("exp.toml");
    std::fs::write(&cfg, "[mesh]\nJ = 4\nresolution = 7\n").unwrap();
    let out = tentlab(&["analyze", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn regularity_probe_writes_reproducible_reports() {
    let dir = scratch("probe");
    let args = |d: &str| {
        vec!["probe", "regularity", "--preset", "dkp_smooth", "--delta", "0.1", "--J", "5", "--p", "2", "--out"]
            .into_iter()
            .map(String::from)
            .chain([d.to_string()])
            .collect::<Vec<_>>()
    };
    let (a, b) = (dir.join("a"), dir.join("b"));
    for d in [&a, &b] {
        let argv = args(s(d));
        let out = tentlab(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ja = std::fs::read_to_string(a.join("report.json")).unwrap();
    let jb = std::fs::read_to_string(b.join("report.json")).unwrap();
    assert_eq!(without_timestamp(&ja), without_timestamp(&jb));
    let csv = std::fs::read_to_string(a.join("cases.csv")).unwrap();
    assert!(csv.starts_with("case,numerator,denominator,ratio\n"));
    assert_eq!(csv.lines().count(), 7);
    assert!(a.join("regularity.dat").exists());
}

#[test]
fn config_file_drives_the_probe_and_flags_win() {
    let dir = scratch("cfgprobe");
    let cfg = dir.join("exp.toml");
    std::fs::write(
        &cfg,
        "[mesh]\nJ = 6\n[field]\npreset = \"constant\"\n[probe]\nname = \"dirichlet\"\nfamily = \"trig\"\n[output]\nformats = [\"json\"]\n",
    )
    .unwrap();
    let out = tentlab(&["probe", "--config", s(&cfg), "--J", "4", "--out", s(&dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(dir.join("report.json")).unwrap();
    assert!(json.contains("\"probe\": \"dirichlet\""));
    assert!(json.contains("\"j\": 4"));
    assert!(!dir.join("cases.csv").exists());
}

#[test]
fn report_skips_corrupt_files() {
    let dir = scratch("report");
    for j in ["4", "5"] {
        let out = tentlab(&["probe", "regularity", "--family", "trig", "--J", j, "--out", s(&dir.join(j))]);
        assert_eq!(out.status.code(), Some(0));
    }
    std::fs::write(dir.join("corrupt.json"), "{ not json").unwrap();
    let pattern = format!("{}/*/report.json", s(&dir));
    let agg = dir.join("agg");
    let out = tentlab(&["report", &pattern, s(&dir.join("corrupt.json")), "--out", s(&agg)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let csv = std::fs::read_to_string(agg.join("aggregate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().next().unwrap().contains("j_spread"));
    let only_bad = tentlab(&["report", s(&dir.join("corrupt.json")), "--out", s(&agg)]);
    assert_eq!(only_bad.status.code(), Some(2));
}

#[test]
fn codim_identities_probe_runs() {
    let dir = scratch("codim");
    let out = tentlab(&["probe", "codim-identities", "--out", s(&dir)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(std::fs::read_to_string(dir.join("report.json")).unwrap().contains("codim-identities"));
}

#[test]
fn unknown_probe_is_a_validation_error() {
    assert_eq!(tentlab(&["probe", "nonsense"]).status.code(), Some(2));
}
