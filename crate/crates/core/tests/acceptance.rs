//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, with the
//! measured quantity and the wall time against its budget.

use std::sync::Arc;
use std::time::{Duration, Instant};

use tentlab_core::carleson::{carleson_embedding_check, cm_norm, cm_norm_cells, dkp_norm, linfty_whitney_norm, weak_dkp_norm};
use tentlab_core::chgvar::{build_rho, conjugate};
use tentlab_core::codim::{cylindrical_derivative_check, radial_identity_probe};
use tentlab_core::elliptic::{convergence_test, rate, strip_mode_errors, StripOracle, TrigData};
use tentlab_core::field::{
    grad_norm, gradient_or_fd, sample_points, Constant, DkpSmooth, FieldRef, LogOscillation, WhitneyPiecewise,
};
use tentlab_core::functionals::{self, dual_witness};
use tentlab_core::probes::{
    bilipschitz_stability_probe, duality_band, ibp_terms, pullback_difference, regularity_probe, BoundaryData,
    DataFamily, IbpSetup, ProbeSettings,
};
use tentlab_core::quadrature::hash_unit;
use tentlab_core::smoothing::{initial_split, kernel_mass, mollify, sup_t_dt, t_grad_carleson};
use tentlab_core::{Error, HalfSpaceMesh, Mat, MatrixField, Point, Result};

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn settings(j: u32, family: DataFamily) -> ProbeSettings {
    ProbeSettings { j, p: 2.0, seed: 1, family }
}

fn ac1_kernel_normalization() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for lambda in [2f64.powf(0.25), 4.0, 16.0] {
        for i in 0..10 {
            let p = Point::new2(hash_unit(&[1, i, 0]), 0.001 + 0.5 * hash_unit(&[1, i, 1]));
            worst = worst.max((kernel_mass(2, &p, lambda, 64) - 1.0).abs());
        }
    }
    outcome(worst < 1e-6, format!("max |mass - 1| = {worst:.2e}"))
}

fn ac2_mollifier_decay() -> Result<Outcome> {
    let a: FieldRef = Arc::new(WhitneyPiecewise { n: 2, delta: 0.2, seed: 1 });
    let (b1, _) = initial_split(a);
    let mesh = HalfSpaceMesh::new(2, 5)?;
    let s16 = sup_t_dt(mollify(b1.clone(), 16.0)?.as_ref(), &mesh);
    let s64 = sup_t_dt(mollify(b1, 64.0)?.as_ref(), &mesh);
    let measured = s16 / s64;
    let predicted = 64f64.ln() / 16f64.ln();
    let ok = s64 < s16 && measured / predicted >= 0.5 && measured / predicted <= 2.0;
    outcome(ok, format!("sup|t dB/dt| 16 -> 64: {s16:.4} -> {s64:.4}, ratio {measured:.3} vs 1/ln law {predicted:.3}"))
}

fn ac3_uniform_carleson() -> Result<Outcome> {
    let a: FieldRef = Arc::new(DkpSmooth::new(2, 0.2, 1.0));
    let (b1, _) = initial_split(a);
    let mesh = HalfSpaceMesh::new(2, 5)?;
    let mut norms = Vec::new();
    for lambda in [4.0, 16.0, 64.0] {
        norms.push(t_grad_carleson(mollify(b1.clone(), lambda)?.as_ref(), &mesh)?.norm);
    }
    let hi = norms.iter().cloned().fold(0.0, f64::max);
    let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    outcome(spread <= 3.0, format!("cm_norm(t grad B) at 4/16/64 = {norms:.4?}, spread {spread:.2}"))
}

fn ac4_constant_zeros() -> Result<Outcome> {
    let mesh = HalfSpaceMesh::new(2, 4)?;
    let c = Constant { a: Mat::from_rows(2, &[2.0, 0.3, -0.1, 1.5]) };
    let cm = cm_norm(
        &|p: &Point| p.t * gradient_or_fd(&c, p, 1e-4).map(|g| grad_norm(&g, 2)).unwrap_or(f64::NAN),
        &mesh,
    )?
    .norm;
    let weak = weak_dkp_norm(&c, &mesh)?.norm;
    let dkp = dkp_norm(&c, &mesh)?.norm;
    let linf = linfty_whitney_norm(&c, &mesh)?.norm;
    let worst = cm.max(weak).max(dkp).max(linf);
    outcome(worst <= 1e-12, format!("cm {cm:.1e}, weak_dkp {weak:.1e}, dkp {dkp:.1e}, linfty {linf:.1e}"))
}

fn ac5_divergence() -> Result<Outcome> {
    let mesh = HalfSpaceMesh::new(2, 5)?;
    let log = dkp_norm(&LogOscillation { n: 2, delta: 0.2 }, &mesh)?;
    let smooth = dkp_norm(&DkpSmooth::new(2, 0.2, 1.0), &mesh)?;
    outcome(
        log.diverging && !smooth.diverging,
        format!(
            "log_oscillation M^2 {:.4} -> {:.4} (diverging {}), dkp_smooth M^2 {:.4} -> {:.4} (diverging {})",
            log.norm_sq,
            log.refined_norm_sq.unwrap_or(f64::NAN),
            log.diverging,
            smooth.norm_sq,
            smooth.refined_norm_sq.unwrap_or(f64::NAN),
            smooth.diverging
        ),
    )
}

fn ac6_solver_convergence() -> Result<Outcome> {
    let id = Constant { a: Mat::identity(2) };
    let data = TrigData::cos(1);
    let rep = convergence_test(2, &[4, 5, 6, 7], |m| strip_mode_errors(&id, &data, m))?;
    let ok = (rep.l2_slope - 2.0).abs() <= 0.3 && (rep.h1_slope - 1.0).abs() <= 0.3;
    outcome(ok, format!("L2 slope {:.3}, H1 slope {:.3}", rep.l2_slope, rep.h1_slope))
}

fn ac7_square_function() -> Result<Outcome> {
    let mesh = HalfSpaceMesh::new(2, 7)?;
    let oracle = StripOracle::half_plane(TrigData::cos(1));
    let g = mesh.sample(|p| {
        let g = oracle.grad(p.x[0], p.t);
        g[0].hypot(g[1])
    });
    let s = functionals::square(&g, &mesh);
    let target = 0.5f64.sqrt();
    let worst = s.values.iter().map(|v| (v - target).abs() / target).fold(0.0, f64::max);
    outcome(worst <= 0.05, format!("max relative deviation from 1/sqrt(2): {:.2}%", 100.0 * worst))
}

fn ac8_laplacian_regularity() -> Result<Outcome> {
    let id = Constant { a: Mat::identity(2) };
    let r = regularity_probe(&id, &settings(7, DataFamily::trig()))?;
    let ratios: Vec<f64> = r.cases.iter().map(|c| c.ratio).collect();
    outcome(r.summary.spread <= 1.5, format!("J=7 ratios {ratios:.4?}, spread {:.3}", r.summary.spread))
}

fn ac9_dkp_regularity() -> Result<Outcome> {
    let a = DkpSmooth::new(2, 0.1, 1.0);
    let r5 = regularity_probe(&a, &settings(5, DataFamily::full()))?.summary.max_ratio;
    let r7 = regularity_probe(&a, &settings(7, DataFamily::full()))?.summary.max_ratio;
    let change = (r7 / r5 - 1.0).abs();
    outcome(r5.is_finite() && r7.is_finite() && change <= 0.25, format!("max ratio J5 {r5:.4}, J7 {r7:.4}, change {:.1}%", 100.0 * change))
}

fn ac10_conjugation() -> Result<Outcome> {
    let id: FieldRef = Arc::new(Constant { a: Mat::identity(2) });
    let stretch = Arc::new(build_rho(Arc::new(Constant { a: Mat::diag(&[1.0, 2.0]) }), 1000)?);
    let same = Arc::new(build_rho(id.clone(), 1000)?);
    let a_stretch = conjugate(id.clone(), stretch)?;
    let a_same = conjugate(id.clone(), same)?;
    let want = Mat::diag(&[2.0, 0.5]);
    let mut worst: f64 = 0.0;
    for p in sample_points(2, 50, 1e-3) {
        worst = worst.max((a_stretch.eval(&p) - want).max_abs());
        worst = worst.max((a_same.eval(&p) - id.eval(&p)).max_abs());
    }
    outcome(worst <= 1e-13, format!("max entry error {worst:.1e}"))
}

fn ac11_bilipschitz() -> Result<Outcome> {
    let id: FieldRef = Arc::new(Constant { a: Mat::identity(2) });
    let rho = Arc::new(build_rho(Arc::new(Constant { a: Mat::diag(&[1.0, 2.0]) }), 1000)?);
    let a_rho = conjugate(id.clone(), rho.clone())?;
    let data = BoundaryData::Trig(TrigData::cos(1));
    let (mut hs, mut diffs) = (Vec::new(), Vec::new());
    for j in [4, 5, 6] {
        let mesh = HalfSpaceMesh::new(2, j)?;
        hs.push(mesh.h);
        diffs.push(pullback_difference(id.as_ref(), &a_rho, &rho, &data, &mesh)?.l2_difference);
    }
    let slope = rate(&hs, &diffs);
    let a: FieldRef = Arc::new(DkpSmooth::with_ones(2, 0.05, 1.0));
    let r = bilipschitz_stability_probe(a, 0.02, &settings(5, DataFamily::full()))?;
    let diff = r.extra["ratio_difference"];
    outcome(
        slope >= 0.7 && diff <= 0.30,
        format!("linear map L2 difference [{}], slope {slope:.2}; dkp_smooth(0.05) ratio difference {:.2}%", sci(&diffs), 100.0 * diff),
    )
}

fn ac12_ibp() -> Result<Outcome> {
    let setup = IbpSetup { delta: 0.3, i: 0, j: 1 };
    let residuals: Vec<f64> = [4, 5, 6, 7].iter().map(|&j| ibp_terms(&setup, j).map(|r| r.residual)).collect::<Result<_>>()?;
    let factors: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = factors.iter().all(|f| (3.0..=5.0).contains(f));
    outcome(ok, format!("residuals [{}], reduction factors {factors:.2?}", sci(&residuals)))
}

/// Whitney-box index of `(x, t)`, boxes below height `2^-4` share the
/// columns of layer 4.
fn coarse_box(x: f64, t: f64) -> (i64, i64) {
    let k = ((-t.log2()).floor() as i64).clamp(0, 4);
    let slot = (x.rem_euclid(1.0) * (1i64 << k) as f64).floor() as i64;
    (k, slot)
}

fn random_piece(seed: i64, kind: i64, x: f64, t: f64) -> f64 {
    let (k, slot) = coarse_box(x, t);
    2.0 * hash_unit(&[seed, kind, k, slot]) - 1.0
}

fn embedding_max_ratio(j: u32, trials: i64) -> Result<f64> {
    let mesh = HalfSpaceMesh::new(2, j)?;
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let a = mesh.sample(|p| random_piece(trial, 0, p.x[0], p.t).abs() * p.t.sqrt());
        let f = mesh.sample(|p| random_piece(trial, 1, p.x[0], p.t));
        let g = mesh.sample(|p| random_piece(trial, 2, p.x[0], p.t) * p.t.sqrt());
        let m = cm_norm_cells(&a, &mesh).norm;
        worst = worst.max(carleson_embedding_check(&a, &f, &g, &mesh, m).ratio_l2);
    }
    Ok(worst)
}

fn ac13_embedding() -> Result<Outcome> {
    let c5 = embedding_max_ratio(5, 100)?;
    let c6 = embedding_max_ratio(6, 100)?;
    let change = (c6 / c5 - 1.0).abs();
    outcome(c5.is_finite() && c6.is_finite() && change <= 0.25, format!("max C at J5 {c5:.4}, J6 {c6:.4}, change {:.1}%", 100.0 * change))
}

fn ac14_dual_witness() -> Result<Outcome> {
    let mesh = HalfSpaceMesh::new(2, 5)?;
    let band = duality_band(&mesh);
    let mut worst = f64::INFINITY;
    for seed in 0..50 {
        let f: Vec<[f64; 3]> = (0..mesh.n_cells())
            .map(|c| {
                let p = mesh.cell_center(c);
                let (k, slot) = coarse_box(p.x[0], p.t);
                let comp = |d: i64| 2.0 * hash_unit(&[seed, d, k, slot]) - 1.0;
                [comp(0), 0.0, comp(1)]
            })
            .collect();
        worst = worst.min(dual_witness(&f, &mesh, &band, 2.0)?.certificate);
    }
    outcome(worst >= 0.5, format!("min certificate over 50 cases {worst:.4}"))
}

fn ac15_codim() -> Result<Outcome> {
    let data = TrigData::cos(1);
    let (mut hs, mut errs) = (Vec::new(), Vec::new());
    for j in [4, 5, 6] {
        let r = radial_identity_probe(&data, j)?;
        hs.push(r.h);
        errs.push(r.l2_error);
    }
    let slope = rate(&hs, &errs);
    let d = cylindrical_derivative_check(200, 7);
    let ident = d.gradient_residual.max(d.angle_residual).max(d.radial_residual);
    outcome(
        slope >= 0.7 && ident <= 1e-10,
        format!("radial L2 errors [{}], slope {slope:.2}; derivative identities {ident:.1e}", sci(&errs)),
    )
}

fn ac16_classification() -> Result<Outcome> {
    let mesh = HalfSpaceMesh::new(2, 4)?;
    let piecewise = WhitneyPiecewise { n: 2, delta: 0.2, seed: 1 };
    let smooth = DkpSmooth::new(2, 0.2, 1.0);
    let pw_weak = weak_dkp_norm(&piecewise, &mesh)?.norm;
    let pw_strong = dkp_norm(&piecewise, &mesh);
    let sm_weak = weak_dkp_norm(&smooth, &mesh)?.norm;
    let sm_strong = dkp_norm(&smooth, &mesh)?.norm;
    let ok = pw_weak.is_finite()
        && matches!(pw_strong, Err(Error::NotApplicable(_)))
        && sm_weak.is_finite()
        && sm_strong.is_finite();
    let pw_label = match pw_strong {
        Err(Error::NotApplicable(_)) => "not_applicable".to_string(),
        Ok(r) => format!("{:.4}", r.norm),
        Err(e) => e.to_string(),
    };
    outcome(ok, format!("whitney_piecewise weak {pw_weak:.4} / dkp {pw_label}; dkp_smooth weak {sm_weak:.4} / dkp {sm_strong:.4}"))
}

/// Criteria that fail on this implementation and are documented as such
/// in the README. They still print `FAIL`; only unexpected failures (or an
/// unexpected pass) change the exit status.
const KNOWN_FAILURES: &[u32] = &[3];

type Criterion = (u32, &'static str, Duration, fn() -> Result<Outcome>);

fn criteria() -> Vec<Criterion> {
    let s = Duration::from_secs;
    vec![
        (1, "kernel normalization", s(1), ac1_kernel_normalization),
        (2, "mollifier decay", s(60), ac2_mollifier_decay),
        (3, "uniform Carleson bound across lambda", s(300), ac3_uniform_carleson),
        (4, "constant-field zeros", s(1), ac4_constant_zeros),
        (5, "divergence detection", s(60), ac5_divergence),
        (6, "solver convergence", s(60), ac6_solver_convergence),
        (7, "square-function closed form", s(10), ac7_square_function),
        (8, "Laplacian regularity scale-stability", s(120), ac8_laplacian_regularity),
        (9, "DKP regularity stability", s(600), ac9_dkp_regularity),
        (10, "conjugation exactness", s(1), ac10_conjugation),
        (11, "bi-Lipschitz stability", s(300), ac11_bilipschitz),
        (12, "integration-by-parts identity", s(120), ac12_ibp),
        (13, "Carleson embedding", s(300), ac13_embedding),
        (14, "dual witness certificate", s(120), ac14_dual_witness),
        (15, "codimension radial identity", s(300), ac15_codim),
        (16, "weak vs strong DKP classification", s(60), ac16_classification),
    ]
}

fn main() {
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.strip_prefix("AC").and_then(|n| n.parse().ok()));
    let mut failed = Vec::new();
    for (id, name, budget, run) in criteria() {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t0 = Instant::now();
        let res = run();
        let took = t0.elapsed();
        let (pass, detail) = match res {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = took <= budget;
        let pass = pass && in_time;
        let timing = format!("{:.2}s of {}s{}", took.as_secs_f64(), budget.as_secs(), if in_time { "" } else { ", over budget" });
        println!("AC{id:<2} {} {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(id);
        }
    }
    let unexpected: Vec<u32> = failed.iter().copied().filter(|id| !KNOWN_FAILURES.contains(id)).collect();
    let fixed: Vec<u32> = KNOWN_FAILURES
        .iter()
        .copied()
        .filter(|id| only.is_none_or(|o| o == *id) && !failed.contains(id))
        .collect();
    println!("failed: {failed:?} (known: {KNOWN_FAILURES:?})");
    if !fixed.is_empty() {
        println!("known failures now passing, update the list: {fixed:?}");
    }
    if !unexpected.is_empty() || !fixed.is_empty() {
        std::process::exit(1);
    }
}
