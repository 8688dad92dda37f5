use crate::config::Resolved;
use crate::error::{CliError, CliResult};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use tentlab_core::carleson::{self, CarlesonReport};
use tentlab_core::chgvar::{self, MapConstants};
use tentlab_core::codim::{self, DerivativeCheck, RadialReport};
use tentlab_core::elliptic::{boundary_samples, solve_dirichlet, TrigData};
use tentlab_core::field::{check_ellipticity, CarlesonPerturbation, FieldRef};
use tentlab_core::probes::{self, IbpSetup, ProbeReport};
use tentlab_core::report;
use tentlab_core::smoothing::{self, DecomposeOptions, DecompositionSummary};
use tentlab_core::Error;

pub const PROBES: [&str; 9] = [
    "dirichlet",
    "regularity",
    "perturbation",
    "bilipschitz",
    "ibp",
    "moser",
    "duality",
    "codim-radial",
    "codim-identities",
];

fn timestamp() -> String {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_default()
}

fn write(dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

fn write_json<T: Serialize>(r: &Resolved, name: &str, kind: &str, body: &T) -> CliResult<Option<PathBuf>> {
    if !r.wants("json") {
        return Ok(None);
    }
    let text = report::to_json(kind, body, &timestamp())?;
    write(&r.out, name, &text).map(Some)
}

/// Compact view of a Carleson report: the full tent table stays out of
/// the JSON.
#[derive(Debug, Serialize)]
pub struct NormEntry {
    pub status: String,
    pub norm: Option<f64>,
    pub norm_sq: Option<f64>,
    pub refined_norm_sq: Option<f64>,
    pub argmax_center: Option<[f64; 2]>,
    pub argmax_scale: Option<f64>,
}

impl NormEntry {
    fn from_result(r: tentlab_core::Result<CarlesonReport>) -> CliResult<Self> {
        match r {
            Ok(rep) => Ok(NormEntry {
                status: if rep.diverging { "diverging" } else { "finite" }.into(),
                norm: Some(rep.norm),
                norm_sq: Some(rep.norm_sq),
                refined_norm_sq: rep.refined_norm_sq,
                argmax_center: Some(rep.argmax.center),
                argmax_scale: Some(rep.argmax.scale),
            }),
            Err(Error::NotApplicable(_)) => Ok(NormEntry {
                status: "not_applicable".into(),
                norm: None,
                norm_sq: None,
                refined_norm_sq: None,
                argmax_center: None,
                argmax_scale: None,
            }),
            Err(e) => Err(e.into()),
        }
    }

    fn show(&self) -> String {
        match self.norm {
            Some(v) => format!("{v:.6} ({})", self.status),
            None => self.status.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct AnalyzeOutput {
    preset: String,
    params: BTreeMap<String, f64>,
    n: usize,
    j: u32,
    min_eigenvalue: f64,
    max_norm: f64,
    weak_dkp: NormEntry,
    dkp: NormEntry,
    linfty_whitney: NormEntry,
}

pub fn analyze(r: &Resolved) -> CliResult<()> {
    let a = r.field()?;
    let mesh = r.mesh()?;
    let (lo, hi) = check_ellipticity(a.as_ref(), 4096)?;
    let out = AnalyzeOutput {
        preset: a.name(),
        params: a.params(),
        n: r.n,
        j: r.j,
        min_eigenvalue: lo,
        max_norm: hi,
        weak_dkp: NormEntry::from_result(carleson::weak_dkp_norm(a.as_ref(), &mesh))?,
        dkp: NormEntry::from_result(carleson::dkp_norm(a.as_ref(), &mesh))?,
        linfty_whitney: NormEntry::from_result(carleson::linfty_whitney_norm(a.as_ref(), &mesh))?,
    };
    println!("preset {} n={} J={}", out.preset, r.n, r.j);
    println!("ellipticity     {lo:.6}  bound {hi:.6}");
    println!("weak_dkp (M^2)  {}", out.weak_dkp.show());
    println!("dkp             {}", out.dkp.show());
    println!("linfty_whitney  {}", out.linfty_whitney.show());
    if let Some(p) = write_json(r, "analyze.json", "analyze", &out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn show_decomposition(s: &DecompositionSummary) {
    println!("lambda          {}", s.lambda);
    println!("eps achieved    {:.6} (target {})", s.eps_achieved, s.eps_target);
    println!("M_B             {:.6}", s.m_b);
    println!("M_C             {:.6}", s.m_c);
    println!("ellipticity(B)  {:.6}", s.ellipticity);
}

#[derive(Debug, Serialize)]
struct DecomposeOutput {
    preset: String,
    lambda: f64,
    eps_target: f64,
    eps_achieved: f64,
    m_b: f64,
    m_c: f64,
    ellipticity: f64,
    mesh_j: u32,
    ladder: Vec<smoothing::LadderStep>,
}

impl DecomposeOutput {
    fn new(preset: String, s: &DecompositionSummary) -> Self {
        DecomposeOutput {
            preset,
            lambda: s.lambda,
            eps_target: s.eps_target,
            eps_achieved: s.eps_achieved,
            m_b: s.m_b,
            m_c: s.m_c,
            ellipticity: s.ellipticity,
            mesh_j: s.mesh_j,
            ladder: s.ladder.clone(),
        }
    }
}

fn decompose_opts(r: &Resolved) -> DecomposeOptions {
    DecomposeOptions { mesh_j: r.j, ..Default::default() }
}

pub fn decompose(r: &Resolved) -> CliResult<()> {
    let a = r.field()?;
    let dec = smoothing::decompose(a.clone(), r.eps, &decompose_opts(r))?;
    show_decomposition(&dec.summary);
    let out = DecomposeOutput::new(a.name(), &dec.summary);
    if let Some(p) = write_json(r, "decompose.json", "decompose", &out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ConjugateOutput {
    decomposition: DecomposeOutput,
    map: MapConstants,
    analytic_jacobian: bool,
    last_row_deviation: NormEntry,
    upper_block: NormEntry,
    upper_block_norm: String,
}

pub fn conjugate(r: &Resolved) -> CliResult<()> {
    let a = r.field()?;
    let mesh = r.mesh()?;
    let dec = smoothing::decompose(a.clone(), r.eps, &decompose_opts(r))?;
    let rho = Arc::new(chgvar::build_rho(dec.b.clone(), chgvar::INVERTIBILITY_SAMPLES)?);
    let a_rho = chgvar::conjugate(a.clone(), rho.clone())?;
    let st = chgvar::structure_check(&a_rho, &mesh)?;
    show_decomposition(&dec.summary);
    let c = &rho.constants;
    println!("bi-Lipschitz    {:.6}", c.bilipschitz());
    println!("det J           [{:.6}, {:.6}]", c.min_det, c.max_det);
    println!("last-row CM     {:.6}", st.deviation.norm);
    println!("upper block     {:.6} ({})", st.upper.norm, st.upper_kind);
    let out = ConjugateOutput {
        decomposition: DecomposeOutput::new(a.name(), &dec.summary),
        map: c.clone(),
        analytic_jacobian: rho.analytic,
        last_row_deviation: NormEntry::from_result(Ok(st.deviation))?,
        upper_block: NormEntry::from_result(Ok(st.upper))?,
        upper_block_norm: st.upper_kind,
    };
    if let Some(p) = write_json(r, "conjugate.json", "conjugate", &out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SolveOutput {
    preset: String,
    n: usize,
    j: u32,
    data: String,
    method: String,
    iterations: usize,
    residual: f64,
    energy: f64,
}

pub fn solve(r: &Resolved, data: &str) -> CliResult<()> {
    let a = r.field()?;
    let mesh = r.mesh()?;
    let trig: TrigData = data.parse()?;
    let f = boundary_samples(&mesh, |x| trig.eval(x[0]));
    let sol = solve_dirichlet(a.as_ref(), &f, &mesh)?;
    let energy = sol.energy(|p| a.eval(p));
    println!("method {} iterations {} residual {:.3e} energy {:.6}", sol.method, sol.iterations, sol.residual, energy);
    let out = SolveOutput {
        preset: a.name(),
        n: r.n,
        j: r.j,
        data: data.into(),
        method: sol.method.clone(),
        iterations: sol.iterations,
        residual: sol.residual,
        energy,
    };
    if let Some(p) = write_json(r, "solve.json", "solve", &out)? {
        eprintln!("wrote {}", p.display());
    }
    if r.wants("dat") {
        let mut text = String::from(if r.n == 2 { "# x t u\n" } else { "# x1 x2 t u\n" });
        for (i, v) in sol.values.iter().enumerate() {
            let p = sol.grid.node_point(i);
            if r.n == 2 {
                text.push_str(&format!("{} {} {}\n", p.x[0], p.t, v));
            } else {
                text.push_str(&format!("{} {} {} {}\n", p.x[0], p.x[1], p.t, v));
            }
        }
        let p = write(&r.out, "solution.dat", &text)?;
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn ibp_ladder(j: u32) -> Vec<u32> {
    (j.saturating_sub(3).max(4)..=j.max(4)).collect()
}

fn run_probe(name: &str, a: FieldRef, r: &Resolved) -> CliResult<ProbeReport> {
    let settings = r.settings()?;
    let rep = match name {
        "dirichlet" => probes::dirichlet_probe(a.as_ref(), &settings)?,
        "regularity" => probes::regularity_probe(a.as_ref(), &settings)?,
        "perturbation" => {
            let c: FieldRef = Arc::new(CarlesonPerturbation::new(r.n, r.c_delta, r.seed));
            probes::perturbation_probe(a, c, &settings)?
        }
        "bilipschitz" => probes::bilipschitz_stability_probe(a, r.eps, &settings)?,
        "ibp" => probes::ibp_identity_probe(&IbpSetup { delta: r.preset.delta, i: 0, j: 1 }, &ibp_ladder(r.j))?,
        "moser" => probes::moser_probe(a.as_ref(), &settings)?,
        "duality" => probes::poisson_duality_probe(a.as_ref(), r.q, r.comparison, &settings)?,
        other => return Err(CliError::Validation(format!("unknown probe '{other}' (known: {})", PROBES.join(", ")))),
    };
    Ok(rep)
}

#[derive(Debug, Serialize)]
struct CodimRadialOutput {
    data: String,
    rows: Vec<RadialReport>,
    l2_slope: f64,
}

#[derive(Debug, Serialize)]
struct CodimIdentityOutput {
    seed: u64,
    check: DerivativeCheck,
}

pub fn probe(name: &str, r: &Resolved) -> CliResult<()> {
    match name {
        "codim-radial" => {
            let data = match r.family.as_str() {
                "trig" | "bumps" | "full" => "cos1".to_string(),
                other => other.to_string(),
            };
            let trig: TrigData = data.parse()?;
            let js: Vec<u32> = (4.min(r.j)..=r.j).collect();
            let rows: Vec<RadialReport> =
                js.iter().map(|&j| codim::radial_identity_probe(&trig, j)).collect::<Result<_, _>>()?;
            let hs: Vec<f64> = rows.iter().map(|x| x.h).collect();
            let errs: Vec<f64> = rows.iter().map(|x| x.l2_error).collect();
            let slope = if rows.len() > 1 { tentlab_core::elliptic::rate(&hs, &errs) } else { f64::NAN };
            for row in &rows {
                println!("J={} h={:.5} L2 {:.4e} max {:.4e} theta spread {:.2e}", row.j, row.h, row.l2_error, row.max_error, row.theta_spread);
            }
            println!("L2 slope {slope:.3}");
            let out = CodimRadialOutput { data, rows, l2_slope: slope };
            if let Some(p) = write_json(r, "report.json", "codim-radial", &out)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        "codim-identities" => {
            let check = codim::cylindrical_derivative_check(1000, r.seed);
            println!(
                "gradient {:.2e} angle {:.2e} radial {:.2e} over {} samples",
                check.gradient_residual, check.angle_residual, check.radial_residual, check.samples
            );
            let out = CodimIdentityOutput { seed: r.seed, check };
            if let Some(p) = write_json(r, "report.json", "codim-identities", &out)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        _ => {
            let a = r.field()?;
            let rep = run_probe(name, a, r)?;
            print!("{}", report::summary_table(&report::aggregate(std::slice::from_ref(&rep))));
            for c in &rep.cases {
                println!("  {:<24} {:.6}", c.id, c.ratio);
            }
            for s in &rep.skipped {
                println!("  {:<24} skipped: {}", s.id, s.reason);
            }
            write_probe_outputs(r, &rep)
        }
    }
}

fn write_probe_outputs(r: &Resolved, rep: &ProbeReport) -> CliResult<()> {
    let mut written = Vec::new();
    if let Some(p) = write_json(r, "report.json", "probe", rep)? {
        written.push(p);
    }
    if r.wants("csv") {
        written.push(write(&r.out, "cases.csv", &report::cases_csv(rep))?);
    }
    if r.wants("dat") {
        written.push(write(&r.out, &format!("{}.dat", rep.probe), &report::cases_dat(rep))?);
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

/// Aggregates probe reports matched by the given paths or glob patterns.
pub fn aggregate_reports(patterns: &[String], out: &Path) -> CliResult<()> {
    let mut paths = Vec::new();
    for pat in patterns {
        let matches = glob::glob(pat).map_err(|e| CliError::Validation(format!("bad pattern '{pat}': {e}")))?;
        for m in matches.flatten() {
            paths.push(m);
        }
    }
    paths.sort();
    paths.dedup();
    let mut reports = Vec::new();
    for path in &paths {
        let parsed = std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|text| report::parse_probe_report(&text).map_err(|e| e.to_string()));
        match parsed {
            Ok(rep) => reports.push(rep),
            Err(e) => eprintln!("warning: skipping {}: {e}", path.display()),
        }
    }
    if reports.is_empty() {
        return Err(CliError::Validation("no valid probe reports found".into()));
    }
    let rows = report::aggregate(&reports);
    print!("{}", report::summary_table(&rows));
    let p = write(out, "aggregate.csv", &report::aggregate_csv(&rows))?;
    eprintln!("wrote {}", p.display());
    for (probe, text) in report::aggregate_dat(&rows) {
        let p = write(out, &format!("{probe}.dat"), &text)?;
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}
