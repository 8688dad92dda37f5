//! Experiment configuration: a TOML file overlaid by command-line flags.

use crate::error::{CliError, CliResult};
use clap::Args;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use tentlab_core::field::{build_preset, FieldRef, PresetSpec};
use tentlab_core::probes::{Comparison, DataFamily, ProbeSettings};
use tentlab_core::HalfSpaceMesh;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub n: Option<usize>,
    #[serde(rename = "J")]
    pub j: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub preset: Option<String>,
    pub delta: Option<f64>,
    pub ell: Option<f64>,
    pub seed: Option<u64>,
    pub entries: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub name: Option<String>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub family: Option<String>,
    pub seed: Option<u64>,
    pub eps: Option<f64>,
    pub c_delta: Option<f64>,
    pub comparison: Option<String>,
    pub data: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub formats: Option<Vec<String>>,
}

/// Flags shared by every computing subcommand. Each overrides the matching
/// config key.
#[derive(Debug, Default, Clone, Args)]
pub struct CommonArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dimension of the half-space, 2 or 3.
    #[arg(long)]
    pub n: Option<usize>,
    /// Resolution: the mesh has 2^J cells per unit length.
    #[arg(long = "J", alias = "j")]
    pub j: Option<u32>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub ell: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Row-major matrix entries for `constant` (A0) or `dkp_smooth` (E).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub entries: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of json, csv, dat.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<String>>,
}

#[derive(Debug, Default, Clone, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub p: Option<f64>,
    /// Exponent of the Dirichlet problem paired in the duality probe.
    #[arg(long)]
    pub q: Option<f64>,
    /// Boundary data: trig, bumps, full, or a sum such as "cos1 + 0.5sin3".
    #[arg(long)]
    pub family: Option<String>,
    /// Mollification target for decompose, conjugate and bilipschitz.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Size of the Carleson perturbation in the perturbation probe.
    #[arg(long)]
    pub c_delta: Option<f64>,
    /// Comparison solution in the duality probe: oracle or discrete.
    #[arg(long)]
    pub comparison: Option<String>,
}

pub const FORMATS: [&str; 3] = ["json", "csv", "dat"];

/// Fully resolved and validated settings.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub n: usize,
    pub j: u32,
    pub preset: PresetSpec,
    pub p: f64,
    pub q: f64,
    pub family: String,
    pub seed: u64,
    pub eps: f64,
    pub c_delta: f64,
    pub comparison: Comparison,
    pub out: PathBuf,
    pub formats: Vec<String>,
    pub probe_name: Option<String>,
}

impl Resolved {
    pub fn field(&self) -> CliResult<FieldRef> {
        Ok(build_preset(self.n, &self.preset)?)
    }

    pub fn mesh(&self) -> CliResult<HalfSpaceMesh> {
        Ok(HalfSpaceMesh::new(self.n, self.j)?)
    }

    pub fn settings(&self) -> CliResult<ProbeSettings> {
        Ok(ProbeSettings { j: self.j, p: self.p, seed: self.seed, family: DataFamily::parse(&self.family)? })
    }

    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

pub fn read_file(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    parse_file(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn parse_file(text: &str) -> Result<FileConfig, toml::de::Error> {
    toml::from_str(text)
}

/// Merges flags over the file over defaults and validates every value
/// before anything is computed.
pub fn resolve(common: &CommonArgs, probe: &ProbeArgs) -> CliResult<Resolved> {
    let file = match &common.config {
        Some(path) => read_file(path)?,
        None => FileConfig::default(),
    };
    let defaults = PresetSpec::default();
    let preset = PresetSpec {
        name: common.preset.clone().or(file.field.preset).unwrap_or(defaults.name),
        delta: common.delta.or(file.field.delta).unwrap_or(defaults.delta),
        ell: common.ell.or(file.field.ell).unwrap_or(defaults.ell),
        seed: common.seed.or(file.field.seed).unwrap_or(defaults.seed),
        entries: common.entries.clone().or(file.field.entries).unwrap_or_default(),
    };
    let comparison = match probe.comparison.clone().or(file.probe.comparison).as_deref() {
        None | Some("discrete") => Comparison::DiscreteLaplace,
        Some("oracle") => Comparison::Oracle,
        Some(other) => return Err(CliError::Validation(format!("unknown comparison '{other}' (oracle, discrete)"))),
    };
    let r = Resolved {
        n: common.n.or(file.mesh.n).unwrap_or(2),
        j: common.j.or(file.mesh.j).unwrap_or(5),
        preset,
        p: probe.p.or(file.probe.p).unwrap_or(2.0),
        q: probe.q.or(file.probe.q).unwrap_or(2.0),
        family: probe.family.clone().or(file.probe.family).or(file.probe.data).unwrap_or_else(|| "full".into()),
        seed: common.seed.or(file.probe.seed).unwrap_or(1),
        eps: probe.eps.or(file.probe.eps).unwrap_or(0.05),
        c_delta: probe.c_delta.or(file.probe.c_delta).unwrap_or(0.1),
        comparison,
        out: common.out.clone().or(file.output.dir).unwrap_or_else(|| PathBuf::from("tentlab-out")),
        formats: common
            .formats
            .clone()
            .or(file.output.formats)
            .unwrap_or_else(|| FORMATS.iter().map(|s| s.to_string()).collect()),
        probe_name: file.probe.name,
    };
    validate(&r)?;
    Ok(r)
}

fn validate(r: &Resolved) -> CliResult<()> {
    r.mesh()?;
    r.field()?;
    r.settings()?;
    if !(r.p >= 1.0 && r.p.is_finite()) {
        return Err(CliError::Validation(format!("p must be a finite number ≥ 1, got {}", r.p)));
    }
    if !(r.q > 1.0 && r.q.is_finite()) {
        return Err(CliError::Validation(format!("q must be in (1, ∞), got {}", r.q)));
    }
    if !(r.eps > 0.0 && r.eps < 1.0) {
        return Err(CliError::Validation(format!("eps must be in (0, 1), got {}", r.eps)));
    }
    if !(r.c_delta >= 0.0 && r.c_delta < 1.0) {
        return Err(CliError::Validation(format!("c_delta must be in [0, 1), got {}", r.c_delta)));
    }
    if let Some(bad) = r.formats.iter().find(|f| !FORMATS.contains(&f.as_str())) {
        return Err(CliError::Validation(format!("unknown output format '{bad}' (json, csv, dat)")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_file("[mesh]\nJ = 5\nwidth = 3\n").is_err());
        assert!(parse_file("[solver]\ntol = 1\n").is_err());
        assert!(parse_file("[mesh]\nJ = 5\n[field]\npreset = \"dkp_smooth\"\ndelta = 0.1\n").is_ok());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = std::env::temp_dir().join(format!("tentlab-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("exp.toml");
        std::fs::write(&path, "[mesh]\nJ = 4\n[field]\npreset = \"dkp_smooth\"\ndelta = 0.2\n").unwrap();
        let common = CommonArgs { config: Some(path), delta: Some(0.05), ..Default::default() };
        let r = resolve(&common, &ProbeArgs::default()).unwrap();
        assert_eq!(r.j, 4);
        assert_eq!(r.preset.name, "dkp_smooth");
        assert_eq!(r.preset.delta, 0.05);
        assert_eq!(r.p, 2.0);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        let common = CommonArgs { j: Some(99), ..Default::default() };
        let err = resolve(&common, &ProbeArgs::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let probe = ProbeArgs { eps: Some(2.0), ..Default::default() };
        assert_eq!(resolve(&CommonArgs::default(), &probe).unwrap_err().exit_code(), 2);
    }
}
