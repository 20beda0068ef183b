//! Browser bindings: coefficient curves, analytic field maps and imprint
//! profiles computed from the closed-form soliton solutions.

use lambda_mb::analysis::{analytic_density, locate_imprint};
use lambda_mb::doppler::coefficient_table;
use lambda_mb::ist::SolitonSolution;
use lambda_mb::types::Axis;
use lambda_mb::{DopplerSpec, NormingConstantInit, SpectralParameter};
use wasm_bindgen::prelude::*;

const COEFF_NODES: usize = 64;
const ENSEMBLE_NODES: usize = 32;
/// Storage pair signal/control ratio and retrieval seed amplitude.
const STORAGE_C2: f64 = 0.05;
const RETRIEVAL_C2: f64 = 1e-5;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn solution(tau2: Option<f64>, width: f64, mean: f64) -> Result<SolitonSolution, String> {
    let spec = DopplerSpec::from_width(width, mean).map_err(err)?;
    let mut params = vec![SpectralParameter::unit()];
    let mut inits = vec![NormingConstantInit::real(1.0, STORAGE_C2).map_err(err)?];
    if let Some(tau2) = tau2 {
        params.push(SpectralParameter::new(0.0, tau2).map_err(err)?);
        inits.push(NormingConstantInit::real(0.0, RETRIEVAL_C2).map_err(err)?);
    }
    SolitonSolution::new(params, inits, &spec, 1.0).map_err(err)
}

fn axis(start: f64, end: f64, n: usize) -> Result<Axis, String> {
    if n < 2 || !(end > start) {
        return Err(format!("bad axis [{start}, {end}] with {n} points"));
    }
    Axis::new(start, (end - start) / (n - 1) as f64, n).map_err(err)
}

/// Interleaved (κ/κ₀, δ/κ₀) for each width at fixed mean detuning.
pub fn coefficients(widths: &[f64], mean: f64) -> Result<Vec<f64>, String> {
    let rows = coefficient_table(widths, &[mean], COEFF_NODES).map_err(err)?;
    Ok(rows.iter().flat_map(|r| [r.kappa, r.delta]).collect())
}

/// |Ω_s| then |Ω_c| on an nz × nt grid (z-major) for the storage pair
/// followed by a retrieval control of duration `tau2`.
pub fn field_maps(tau2: f64, width: f64, mean: f64, length: f64, nz: usize, t_min: f64, t_max: f64, nt: usize) -> Result<Vec<f64>, String> {
    let sol = solution(Some(tau2), width, mean)?;
    let (z, t) = (axis(0.0, length, nz)?, axis(t_min, t_max, nt)?);
    let mut out = vec![0.0; 2 * nz * nt];
    let (signal, control) = out.split_at_mut(nz * nt);
    for i in 0..nz {
        for j in 0..nt {
            let (s, c) = sol.reconstruct_fields(z.at(i), t.at(j)).map_err(err)?;
            signal[i * nt + j] = s.norm();
            control[i * nt + j] = c.norm();
        }
    }
    Ok(out)
}

/// `[z_stored, z_retrieved, ρ₂₂ stored (nz), ρ₂₂ after retrieval (nz)]`.
/// Locations are NaN when no imprint lies inside the medium.
pub fn imprint_profiles(tau2: f64, width: f64, mean: f64, length: f64, nz: usize) -> Result<Vec<f64>, String> {
    let z = axis(0.0, length, nz)?;
    let spec = DopplerSpec::from_width(width, mean).map_err(err)?;
    let mut locations = Vec::new();
    let mut profiles = Vec::new();
    for sol in [solution(None, width, mean)?, solution(Some(tau2), width, mean)?] {
        let field = analytic_density(&sol, z, &spec, ENSEMBLE_NODES);
        locations.push(locate_imprint(&field).map_or(f64::NAN, |p| p.location));
        profiles.extend(field.rho22_profile());
    }
    locations.extend(profiles);
    Ok(locations)
}

/// Phase-lag check value for the displayed τ₂: ln((1+τ₂)/|1−τ₂|).
pub fn phase_lag(tau2: f64) -> Result<f64, String> {
    let b = SpectralParameter::new(0.0, tau2).map_err(err)?;
    lambda_mb::ist::phase_lag(&SpectralParameter::unit(), &b).map_err(err)
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = coefficients)]
pub fn coefficients_js(widths: &[f64], mean: f64) -> Result<Vec<f64>, JsError> {
    js(coefficients(widths, mean))
}

#[wasm_bindgen(js_name = fieldMaps)]
pub fn field_maps_js(tau2: f64, width: f64, mean: f64, length: f64, nz: usize, t_min: f64, t_max: f64, nt: usize) -> Result<Vec<f64>, JsError> {
    js(field_maps(tau2, width, mean, length, nz, t_min, t_max, nt))
}

#[wasm_bindgen(js_name = imprintProfiles)]
pub fn imprint_profiles_js(tau2: f64, width: f64, mean: f64, length: f64, nz: usize) -> Result<Vec<f64>, JsError> {
    js(imprint_profiles(tau2, width, mean, length, nz))
}

#[wasm_bindgen(js_name = phaseLag)]
pub fn phase_lag_js(tau2: f64) -> Result<f64, JsError> {
    js(phase_lag(tau2))
}

