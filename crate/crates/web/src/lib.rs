//! Browser bindings. Each export returns a JSON string; the page in
//! `www/` parses and plots it.

use nardf::finite::{rd_curve_with, KernelForm, SolverOptions};
use nardf::gauss::{simulate, Design, SimulationOptions};
use nardf::model::{DistortionSpec, FiniteMarkovSource, StateSpaceModel};
use nardf::waterfill::allocate;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

pub fn waterfill_value(eigenvalues: &[f64], distortion: f64) -> Result<Value, String> {
    let a = allocate(eigenvalues, distortion).map_err(|e| e.to_string())?;
    Ok(json!({
        "water_level": a.water_level(),
        "deltas": a.deltas(),
        "rate_nats": a.rate(),
    }))
}

/// Binary symmetric Markov source with the given flip probability, Hamming
/// distortion, `points` multipliers spread evenly from `s_max` down to `s_min`.
pub fn binary_curve_value(
    flip: f64,
    horizon: usize,
    s_min: f64,
    s_max: f64,
    points: usize,
    causal: bool,
) -> Result<Value, String> {
    if points < 2 || !(s_min < s_max) || s_max > 0.0 {
        return Err("need points >= 2 and s_min < s_max <= 0".into());
    }
    let source: FiniteMarkovSource = serde_json::from_value(json!({
        "initial_pmf": [0.5, 0.5],
        "transition": [[1.0 - flip, flip], [flip, 1.0 - flip]],
        "horizon": horizon,
    }))
    .map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (0..points)
        .map(|i| s_max - (s_max - s_min) * i as f64 / (points - 1) as f64)
        .collect();
    let form = if causal { KernelForm::Causal } else { KernelForm::Tilt };
    let curve = rd_curve_with(&source, &DistortionSpec::hamming(2), &grid, &SolverOptions::default(), form)
        .map_err(|e| e.to_string())?;
    let rows: Vec<Value> = curve
        .iter()
        .map(|p| {
            let r = &p.report;
            json!({ "s": r.s, "rate_nats": r.rate, "distortion": r.distortion, "converged": r.converged })
        })
        .collect();
    Ok(json!({ "points": rows }))
}

/// One steady-state trial of the scalar cascade `x' = a x + w`, `y = x + g v`.
pub fn scalar_trace_value(a: f64, g: f64, distortion: f64, q: f64, steps: usize, seed: u64) -> Result<Value, String> {
    let model = StateSpaceModel::scalar(a, 1.0, 1.0, g);
    let opts = SimulationOptions {
        design: Design::SteadyState,
        distortion,
        q,
        horizon: steps,
        trials: 1,
        seed,
        record_trace: true,
        ..SimulationOptions::default()
    };
    let res = simulate(&model, &opts).map_err(|e| e.to_string())?;
    let trace = res.trace.unwrap_or_default();
    let y: Vec<f64> = trace.steps.iter().map(|s| s.y[0]).collect();
    let y_tilde: Vec<f64> = trace.steps.iter().map(|s| s.y_tilde[0]).collect();
    Ok(json!({
        "y": y,
        "y_tilde": y_tilde,
        "mean_distortion": res.mean_distortion,
        "target_distortion": res.target_distortion,
    }))
}

#[wasm_bindgen]
pub fn waterfill(eigenvalues: Vec<f64>, distortion: f64) -> Result<String, JsError> {
    to_js(waterfill_value(&eigenvalues, distortion))
}

#[wasm_bindgen]
pub fn binary_curve(
    flip: f64,
    horizon: usize,
    s_min: f64,
    s_max: f64,
    points: usize,
    causal: bool,
) -> Result<String, JsError> {
    to_js(binary_curve_value(flip, horizon, s_min, s_max, points, causal))
}

#[wasm_bindgen]
pub fn scalar_trace(a: f64, g: f64, distortion: f64, q: f64, steps: usize, seed: u64) -> Result<String, JsError> {
    to_js(scalar_trace_value(a, g, distortion, q, steps, seed))
}
