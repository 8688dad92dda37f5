//! Three operations for the static demo page: Carleson norms of a preset,
//! a Dirichlet solve sampled on the node grid, and the regularity probe.
//! Results cross the boundary as JSON strings or flat `f64` arrays.

use serde::Serialize;
use tentlab_core::carleson::{self, CarlesonReport};
use tentlab_core::elliptic::{boundary_samples, solve_dirichlet, TrigData};
use tentlab_core::field::{build_preset, FieldRef, PresetSpec};
use tentlab_core::probes::{regularity_probe, DataFamily, ProbeSettings};
use tentlab_core::{Error, HalfSpaceMesh, Result};
use wasm_bindgen::prelude::*;

/// The demo stays in two dimensions and caps the resolution so a call
/// finishes in a few seconds on one thread.
pub const MAX_DEMO_J: u32 = 7;

fn field(preset: &str, delta: f64) -> Result<FieldRef> {
    build_preset(2, &PresetSpec { name: preset.into(), delta, ..Default::default() })
}

fn mesh(j: u32) -> Result<HalfSpaceMesh> {
    if j > MAX_DEMO_J {
        return Err(Error::Config(format!("the demo allows J ≤ {MAX_DEMO_J}, got {j}")));
    }
    HalfSpaceMesh::new(2, j)
}

fn js_err(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Serialize)]
struct Norm {
    status: &'static str,
    norm: Option<f64>,
    refined_norm_sq: Option<f64>,
}

fn norm(r: Result<CarlesonReport>) -> Result<Norm> {
    match r {
        Ok(rep) => Ok(Norm {
            status: if rep.diverging { "diverging" } else { "finite" },
            norm: Some(rep.norm),
            refined_norm_sq: rep.refined_norm_sq,
        }),
        Err(Error::NotApplicable(_)) => Ok(Norm { status: "not_applicable", norm: None, refined_norm_sq: None }),
        Err(e) => Err(e),
    }
}

#[derive(Serialize)]
struct Analysis {
    preset: String,
    j: u32,
    weak_dkp: Norm,
    dkp: Norm,
    linfty_whitney: Norm,
}

pub fn analyze_json(preset: &str, delta: f64, j: u32) -> Result<String> {
    let a = field(preset, delta)?;
    let m = mesh(j)?;
    let out = Analysis {
        preset: a.name(),
        j,
        weak_dkp: norm(carleson::weak_dkp_norm(a.as_ref(), &m))?,
        dkp: norm(carleson::dkp_norm(a.as_ref(), &m))?,
        linfty_whitney: norm(carleson::linfty_whitney_norm(a.as_ref(), &m))?,
    };
    serde_json::to_string(&out).map_err(|e| Error::Numerical(e.to_string()))
}

/// Nodal values, row `k` (height `k·h`) after row `k−1`, `2^J` values per row.
pub fn solve_grid(preset: &str, delta: f64, j: u32, data: &str) -> Result<Vec<f64>> {
    let a = field(preset, delta)?;
    let m = mesh(j)?;
    let trig: TrigData = data.parse()?;
    let f = boundary_samples(&m, |x| trig.eval(x[0]));
    Ok(solve_dirichlet(a.as_ref(), &f, &m)?.values)
}

pub fn regularity_json(preset: &str, delta: f64, j: u32, family: &str) -> Result<String> {
    let a = field(preset, delta)?;
    mesh(j)?;
    let settings = ProbeSettings { j, p: 2.0, seed: 1, family: DataFamily::parse(family)? };
    let rep = regularity_probe(a.as_ref(), &settings)?;
    serde_json::to_string(&rep).map_err(|e| Error::Numerical(e.to_string()))
}

/// JSON with the weak-DKP, DKP and sup-deviation Carleson norms.
#[wasm_bindgen]
pub fn analyze(preset: &str, delta: f64, j: u32) -> std::result::Result<String, JsValue> {
    analyze_json(preset, delta, j).map_err(js_err)
}

/// Dirichlet solve on the unit strip; `(2^J + 1)` rows of `2^J` values.
#[wasm_bindgen]
pub fn solve(preset: &str, delta: f64, j: u32, data: &str) -> std::result::Result<Vec<f64>, JsValue> {
    solve_grid(preset, delta, j, data).map_err(js_err)
}

/// Regularity probe report as JSON.
#[wasm_bindgen]
pub fn regularity(preset: &str, delta: f64, j: u32, family: &str) -> std::result::Result<String, JsValue> {
    regularity_json(preset, delta, j, family).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_preset_has_zero_norms() {
        let v: serde_json::Value = serde_json::from_str(&analyze_json("constant", 0.1, 4).unwrap()).unwrap();
        for key in ["weak_dkp", "dkp", "linfty_whitney"] {
            assert_eq!(v[key]["status"], "finite");
            assert!(v[key]["norm"].as_f64().unwrap() < 1e-6);
        }
        let w = analyze_json("whitney_piecewise", 0.2, 4).unwrap();
        assert!(w.contains("not_applicable"));
    }

    #[test]
    fn solve_grid_has_the_node_layout() {
        let v = solve_grid("dkp_smooth", 0.1, 4, "cos1").unwrap();
        assert_eq!(v.len(), 16 * 17);
        assert!((v[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resolution_is_capped() {
        assert!(matches!(solve_grid("constant", 0.1, 8, "cos1"), Err(Error::Config(_))));
        assert!(regularity_json("nope", 0.1, 4, "trig").is_err());
    }
}
