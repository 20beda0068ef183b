//! Observables extracted from analytic or numeric runs, and the parameter
//! scans built on them.

use crate::cmb::{self, Boundary, CmbError, Simulation, SolverSettings};
use crate::doppler::{broadening_coefficients, DopplerError, Ensemble};
use crate::ist::{phase_lag, IstError, SolitonSolution};
use crate::quadrature::{golden_max, parabolic_offset};
use crate::state::DensityMatrix3;
use crate::types::{Axis, Channel, DensityField, DopplerSpec, FieldGrid, MediumConfig, ParamError, SpectralParameter};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// ρ₂₂ peak below which no imprint is reported.
pub const MIN_IMPRINT: f64 = 1e-4;
/// Integrated coherence below which a survival ratio is undefined.
pub const MIN_COHERENCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no imprint: max rho22 = {0:e}")]
    NoImprintFound(f64),
    #[error("integrated coherence before retrieval is {0:e}")]
    DivisionByZeroCoherence(f64),
    #[error("pulse peak lost at the first station")]
    PeakLost,
    #[error("density fields do not share a grid")]
    GridMismatch,
    #[error("scan has no points")]
    EmptyScan,
    #[error(transparent)]
    Cmb(#[from] CmbError),
    #[error(transparent)]
    Ist(#[from] IstError),
    #[error(transparent)]
    Doppler(#[from] DopplerError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprintProfile {
    pub z_axis: Axis,
    pub rho22: Vec<f64>,
    pub rho12: Vec<C64>,
    /// Refined peak position of ρ₂₂.
    pub location: f64,
    /// Full width at half maximum.
    pub width: f64,
    pub peak: f64,
}

/// Refined position of the maximum of uniformly sampled `values`.
fn refined_argmax(values: &[f64], axis: &Axis) -> (usize, f64) {
    let (k, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
    let off = if k > 0 && k + 1 < values.len() {
        parabolic_offset(values[k - 1], values[k], values[k + 1])
    } else {
        0.0
    };
    (k, axis.at(k) + off * axis.step)
}

/// Linear-interpolated crossing of `level` between samples `a` and `b`.
fn crossing(axis: &Axis, values: &[f64], a: usize, b: usize, level: f64) -> f64 {
    let (va, vb) = (values[a], values[b]);
    let frac = if va == vb { 0.0 } else { (level - va) / (vb - va) };
    axis.at(a) + frac * (axis.at(b) - axis.at(a))
}

/// Position, height and width of the Doppler-averaged ρ₂₂ imprint.
pub fn locate_imprint(density: &DensityField) -> Result<ImprintProfile, AnalysisError> {
    let rho22 = density.rho22_profile();
    let rho12 = density.rho12_profile();
    let axis = density.z_axis;
    let (k, location) = refined_argmax(&rho22, &axis);
    let peak = rho22[k];
    if !(peak >= MIN_IMPRINT) {
        return Err(AnalysisError::NoImprintFound(peak));
    }
    let half = 0.5 * peak;
    let left = (0..k)
        .rev()
        .find(|&i| rho22[i] < half)
        .map(|i| crossing(&axis, &rho22, i, i + 1, half))
        .unwrap_or(axis.start);
    let right = (k + 1..rho22.len())
        .find(|&i| rho22[i] < half)
        .map(|i| crossing(&axis, &rho22, i - 1, i, half))
        .unwrap_or(axis.end());
    Ok(ImprintProfile {
        z_axis: axis,
        rho22,
        rho12,
        location,
        width: right - left,
        peak,
    })
}

/// Post-pulse density of an analytic solution on `z_axis` and the Doppler
/// ensemble of `doppler` (the same Gauss-Hermite nodes the solver uses).
pub fn analytic_density(sol: &SolitonSolution, z_axis: Axis, doppler: &DopplerSpec, nodes: usize) -> DensityField {
    let ens = Ensemble::gauss_hermite(doppler, nodes).normalized();
    let stations: Vec<usize> = (0..z_axis.len).collect();
    let rows = crate::par_map(&stations, |&k| {
        ens.detunings
            .iter()
            .map(|&d| sol.final_density(z_axis.at(k), d))
            .collect::<Vec<DensityMatrix3>>()
    });
    DensityField {
        z_axis,
        delta_nodes: ens.detunings,
        weights: ens.weights,
        rho: rows.into_iter().flatten().collect(),
    }
}

/// Ratio of the Doppler-weighted ∫|ρ₁₂|dz after and before retrieval.
pub fn coherence_survival(before: &DensityField, after: &DensityField) -> Result<f64, AnalysisError> {
    if before.z_axis != after.z_axis || before.weights != after.weights {
        return Err(AnalysisError::GridMismatch);
    }
    let pre = before.coherence_l1();
    if !(pre >= MIN_COHERENCE) {
        return Err(AnalysisError::DivisionByZeroCoherence(pre));
    }
    Ok(after.coherence_l1() / pre)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// (z, T of the peak of |Ω|).
    pub points: Vec<(f64, f64)>,
    /// First station where the peak dropped below the threshold.
    pub lost_at: Option<f64>,
}

impl Trajectory {
    /// Least-squares slope dT/dZ over points with z in `[z0, z1]`.
    pub fn slope(&self, z0: f64, z1: f64) -> Option<f64> {
        let pts: Vec<&(f64, f64)> = self.points.iter().filter(|(z, _)| *z >= z0 && *z <= z1).collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mz = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mt = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mz) * (p.1 - mt)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mz).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// Peak of |Ω| in T at every stored Z row, until it falls below `threshold`.
pub fn peak_trajectory(fields: &FieldGrid, which: Channel, threshold: f64) -> Result<Trajectory, AnalysisError> {
    let mut points = Vec::new();
    let mut lost_at = None;
    for k in 0..fields.z_axis.len {
        let row = match which {
            Channel::Signal => fields.signal_row(k),
            Channel::Control => fields.control_row(k),
        };
        let mags: Vec<f64> = row.iter().map(|v| v.norm()).collect();
        let (i, t) = refined_argmax(&mags, &fields.t_axis);
        if !(mags[i] >= threshold) || mags[i] == 0.0 {
            lost_at = Some(fields.z_axis.at(k));
            break;
        }
        points.push((fields.z_axis.at(k), t));
    }
    if points.is_empty() {
        return Err(AnalysisError::PeakLost);
    }
    Ok(Trajectory { points, lost_at })
}

/// Medium and Doppler parameters of one scan curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    /// τ₁Γ.
    pub gamma: f64,
    /// τ₁/T₂*.
    pub width: f64,
    /// τ₁Δ̄.
    pub mean: f64,
}

impl Variant {
    pub fn doppler(&self) -> Result<DopplerSpec, ParamError> {
        DopplerSpec::from_width(self.width, self.mean)
    }

    /// κ₁/κ₀ of a resonant unit-duration soliton.
    pub fn kappa(&self) -> Result<f64, AnalysisError> {
        Ok(broadening_coefficients(&SpectralParameter::unit(), &self.doppler()?, 1.0)?.kappa1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub parameter_name: String,
    pub observable_name: String,
    pub variant: Variant,
    /// Fixed scan inputs other than the variant, e.g. ("theta_c", 0.05π).
    pub metadata: Vec<(String, f64)>,
    pub parameter: Vec<f64>,
    /// `None` where the point failed.
    pub observable: Vec<Option<f64>>,
    pub reference: Vec<f64>,
    pub failures: Vec<(usize, String)>,
}

impl ScanResult {
    /// Parameter and observable at the largest observable.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.parameter
            .iter()
            .zip(&self.observable)
            .filter_map(|(p, o)| o.map(|o| (*p, o)))
            .fold(None, |best: Option<(f64, f64)>, x| match best {
                Some(b) if b.1 >= x.1 => Some(b),
                _ => Some(x),
            })
    }

    /// CSV with a header naming the swept parameter, the observable, the
    /// analytic reference and the fixed metadata; failed points are left
    /// empty and flagged.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},reference,gamma,width,mean", self.parameter_name, self.observable_name);
        for (k, _) in &self.metadata {
            let _ = write!(out, ",{k}");
        }
        out.push_str(",status\n");
        for (i, p) in self.parameter.iter().enumerate() {
            let obs = self.observable[i].map(|v| format!("{v:.10e}")).unwrap_or_default();
            let _ = write!(
                out,
                "{p:.10e},{obs},{:.10e},{},{},{}",
                self.reference[i], self.variant.gamma, self.variant.width, self.variant.mean
            );
            for (_, v) in &self.metadata {
                let _ = write!(out, ",{v}");
            }
            let status = self
                .failures
                .iter()
                .find(|(j, _)| *j == i)
                .map(|(_, e)| format!("failed: {}", e.replace([',', '\n'], ";")))
                .unwrap_or_else(|| "ok".into());
            let _ = writeln!(out, ",{status}");
        }
        out
    }
}

/// Settings shared by every point of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanBase {
    pub solver: SolverSettings,
    /// Centre of the storage pair.
    pub storage_center: f64,
    /// Extra medium length beyond the furthest predicted imprint.
    pub margin: f64,
}

impl Default for ScanBase {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            storage_center: 0.0,
            margin: 4.0,
        }
    }
}

/// Run `f` over `items` on at most `jobs` threads (0 = all cores),
/// preserving order.
pub fn run_pool<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            return pool.install(|| crate::par_map(items, &f));
        }
    }
    let _ = jobs;
    items.iter().map(f).collect()
}

/// One storage run: imprint location for a matched pair with control area
/// `theta_c` and two-pulse area 2π.
pub fn storage_location(base: &ScanBase, variant: &Variant, theta_c: f64) -> Result<(f64, Simulation), AnalysisError> {
    let doppler = variant.doppler()?;
    let kappa = variant.kappa()?;
    let (theta_s, theta_c) = cmb::matched_areas(theta_c);
    let predicted = (theta_s / theta_c).ln() / kappa;
    let medium = MediumConfig::new(variant.gamma, predicted + base.margin, DensityMatrix3::ground())?;
    let boundary = Boundary::StoragePair {
        lambda: SpectralParameter::unit(),
        theta_s,
        theta_c,
        t_center: base.storage_center,
    };
    let sim = cmb::simulate(&medium, &doppler, &boundary, &base.solver)?;
    let loc = locate_imprint(&sim.final_density)?.location;
    Ok((loc, sim))
}

/// Imprint location against control area for each variant, with the
/// analytic reference ln(θ_s/θ_c)·κ₀/κ₁.
pub fn scan_storage_location(
    base: &ScanBase,
    theta_c_values: &[f64],
    variants: &[Variant],
    jobs: usize,
) -> Result<Vec<ScanResult>, AnalysisError> {
    if theta_c_values.is_empty() || variants.is_empty() {
        return Err(AnalysisError::EmptyScan);
    }
    let jobs_list: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..theta_c_values.len()).map(move |i| (v, i)))
        .collect();
    let outcomes = run_pool(&jobs_list, jobs, |&(v, i)| {
        storage_location(base, &variants[v], theta_c_values[i]).map(|(loc, _)| loc)
    });
    let mut results = Vec::with_capacity(variants.len());
    for (v, variant) in variants.iter().enumerate() {
        let kappa = variant.kappa()?;
        let mut res = ScanResult {
            parameter_name: "theta_c".into(),
            observable_name: "location".into(),
            variant: *variant,
            metadata: Vec::new(),
            parameter: theta_c_values.to_vec(),
            observable: Vec::new(),
            reference: Vec::new(),
            failures: Vec::new(),
        };
        for (i, &tc) in theta_c_values.iter().enumerate() {
            let (ts, tc) = cmb::matched_areas(tc);
            res.reference.push((ts / tc).ln() / kappa);
            match &outcomes[v * theta_c_values.len() + i] {
                Ok(loc) => res.observable.push(Some(*loc)),
                Err(e) => {
                    res.observable.push(None);
                    res.failures.push((i, e.to_string()));
                }
            }
        }
        results.push(res);
    }
    Ok(results)
}

/// Timing of a storage + retrieval run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPlan {
    /// κ₀x₁ of the storage stage.
    pub storage_location: f64,
    pub storage_center: f64,
    pub control_center: f64,
    /// Extra medium length beyond the analytic displaced imprint (capped).
    pub margin: f64,
    /// Upper bound on the medium length.
    pub max_length: f64,
}

impl Default for RetrievalPlan {
    fn default() -> Self {
        Self {
            storage_location: 5.0,
            storage_center: -12.0,
            control_center: 6.0,
            margin: 4.0,
            max_length: 14.0,
        }
    }
}

/// Outcome of one storage + retrieval run.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalRun {
    /// Imprint before the retrieval control arrives.
    pub before: ImprintProfile,
    /// Imprint after the retrieval control has left.
    pub after: Result<ImprintProfile, AnalysisError>,
    pub coherence_survival: Result<f64, AnalysisError>,
    pub simulation: Simulation,
}

impl RetrievalRun {
    pub fn displacement(&self) -> Result<f64, AnalysisError> {
        Ok(self.after.as_ref().map_err(Clone::clone)?.location - self.before.location)
    }
}

/// Store at κ₀x₁ with a matched pair, then send a free 2π control of
/// duration `tau2`; record the medium in between.
pub fn retrieval_run(
    solver: &SolverSettings,
    plan: &RetrievalPlan,
    variant: &Variant,
    tau2: f64,
) -> Result<RetrievalRun, AnalysisError> {
    let doppler = variant.doppler()?;
    let kappa = variant.kappa()?;
    let ratio = (plan.storage_location * kappa).exp();
    let theta_c = 2.0 * std::f64::consts::PI / (ratio * ratio + 1.0).sqrt();
    let theta_s = theta_c * ratio;
    let lambda = SpectralParameter::unit();
    let control = SpectralParameter::new(0.0, tau2)?;
    let chi = if tau2 == 1.0 { f64::INFINITY } else { phase_lag(&lambda, &control)? };
    let length = (plan.storage_location + chi / kappa + plan.margin).min(plan.max_length);
    let medium = MediumConfig::new(variant.gamma, length, DensityMatrix3::ground())?;
    let boundary = Boundary::StorageRetrieval {
        lambda,
        theta_s,
        theta_c,
        t_center: plan.storage_center,
        control,
        control_center: plan.control_center,
    };
    let snapshot = plan.control_center - 5.0 * tau2;
    let t_max = plan.control_center + 22.0 * tau2 + 2.0 * length;
    let mut settings = solver.resolved_for(tau2);
    settings.t_window = (settings.t_window.0.min(plan.storage_center - 21.0), settings.t_window.1.max(t_max));
    settings.snapshot_times = vec![snapshot];
    let sim = cmb::simulate(&medium, &doppler, &boundary, &settings)?;
    let before_field = &sim.snapshots[0].1;
    let before = locate_imprint(before_field)?;
    let after = locate_imprint(&sim.final_density);
    let survival = coherence_survival(before_field, &sim.final_density);
    Ok(RetrievalRun {
        before,
        after,
        coherence_survival: survival,
        simulation: sim,
    })
}

/// Displacement of the imprint against retrieval duration τ₂, with the
/// analytic reference ln((τ₁+τ₂)/|τ₁−τ₂|)·κ₀/κ₁. With `refine_tol` the
/// best grid point is refined by golden-section search over its
/// neighbouring interval; the refined point is appended to the result.
pub fn scan_displacement(
    solver: &SolverSettings,
    plan: &RetrievalPlan,
    tau2_values: &[f64],
    variants: &[Variant],
    refine_tol: Option<f64>,
    jobs: usize,
) -> Result<Vec<ScanResult>, AnalysisError> {
    if tau2_values.is_empty() || variants.is_empty() {
        return Err(AnalysisError::EmptyScan);
    }
    let jobs_list: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..tau2_values.len()).map(move |i| (v, i)))
        .collect();
    let outcomes = run_pool(&jobs_list, jobs, |&(v, i)| {
        retrieval_run(solver, plan, &variants[v], tau2_values[i]).and_then(|r| r.displacement())
    });
    let mut results = Vec::with_capacity(variants.len());
    for (v, variant) in variants.iter().enumerate() {
        let kappa = variant.kappa()?;
        let mut res = ScanResult {
            parameter_name: "tau2".into(),
            observable_name: "displacement".into(),
            variant: *variant,
            metadata: vec![("storage_location".into(), plan.storage_location)],
            parameter: tau2_values.to_vec(),
            observable: Vec::new(),
            reference: tau2_values.iter().map(|t| analytic_displacement(*t, kappa)).collect(),
            failures: Vec::new(),
        };
        for i in 0..tau2_values.len() {
            match &outcomes[v * tau2_values.len() + i] {
                Ok(d) => res.observable.push(Some(*d)),
                Err(e) => {
                    res.observable.push(None);
                    res.failures.push((i, e.to_string()));
                }
            }
        }
        if let (Some(tol), Some((best, _))) = (refine_tol, res.peak()) {
            let i = tau2_values.iter().position(|t| *t == best).unwrap_or(0);
            let lo = tau2_values[i.saturating_sub(1)];
            let hi = tau2_values[(i + 1).min(tau2_values.len() - 1)];
            if hi > lo {
                let eval = |t: f64| {
                    retrieval_run(solver, plan, variant, t)
                        .and_then(|r| r.displacement())
                        .unwrap_or(f64::NEG_INFINITY)
                };
                let t = golden_max(eval, lo, hi, tol);
                let d = eval(t);
                res.parameter.push(t);
                if d.is_finite() {
                    res.observable.push(Some(d));
                } else {
                    res.failures.push((res.observable.len(), "refinement run failed".into()));
                    res.observable.push(None);
                }
                res.reference.push(analytic_displacement(t, kappa));
            }
        }
        results.push(res);
    }
    Ok(results)
}

/// ln((τ₁+τ₂)/|τ₁−τ₂|)·κ₀/κ₁ for τ₁ = 1.
pub fn analytic_displacement(tau2: f64, kappa: f64) -> f64 {
    ((1.0 + tau2) / (1.0 - tau2).abs()).ln() / kappa
}
