//! Numerical integration of the coupled Maxwell-Bloch equations in
//! travelling-wave coordinates.
//!
//! Method of characteristics: at each Z station the Bloch equations of every
//! Doppler class are marched in T with classical RK4 (fields at half steps
//! from cubic interpolation), then the fields are advanced in Z with a Heun
//! predictor-corrector on ∂Ω_s/∂Z = −iμ⟨ρ₁₃⟩, ∂Ω_c/∂Z = −iμ⟨ρ₂₃⟩.

use crate::doppler::{broadening_coefficients, DopplerError, Ensemble};
use crate::ist::{self, AsymptoticRegime, IstError, SolitonSolution};
use crate::state::DensityMatrix3;
use crate::types::{Axis, DensityField, DopplerSpec, FieldGrid, MediumConfig, NormingConstantInit, ParamError, SpectralParameter};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// |ρ_ab| above which the integration is declared unstable.
pub const BLOWUP_LIMIT: f64 = 1.0 + 1e-3;
/// Pulses shorter than this many T steps trigger a warning.
pub const MIN_STEPS_PER_DURATION: f64 = 10.0;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CmbError {
    #[error("density matrix blew up at z = {z}, t = {t}, detuning {delta} (|rho| = {value})")]
    StateBlowup { z: f64, t: f64, delta: f64, value: f64 },
    #[error("boundary field has not decayed at the window edge (|Omega| = {0:e})")]
    WindowTooSmall(f64),
    #[error("boundary arrays have length {got}, the T axis has {expected} points")]
    BoundaryShape { got: usize, expected: usize },
    #[error("bad solver settings: {0}")]
    BadSettings(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Ist(#[from] IstError),
    #[error(transparent)]
    Doppler(#[from] DopplerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SolverWarning {
    /// A pulse of duration `duration` is resolved by fewer than ten T steps.
    GridUnderresolved { duration: f64, dt: f64 },
    /// The predicted imprint lies beyond the end of the medium.
    StorageOutsideMedium { location: f64, z_length: f64 },
}

impl std::fmt::Display for SolverWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::GridUnderresolved { duration, dt } => {
                write!(f, "pulse duration {duration} is under-resolved by dt = {dt}")
            }
            Self::StorageOutsideMedium { location, z_length } => {
                write!(f, "predicted imprint at z = {location} lies beyond the medium (length {z_length})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub dt: f64,
    pub dz: f64,
    /// Field samples with |τ₁Ω| below this are zeroed after every Z step.
    pub clamp_threshold: f64,
    pub t_window: (f64, f64),
    /// Gauss-Hermite nodes of the Doppler ensemble (ignored without broadening).
    pub ensemble_nodes: usize,
    /// T values at which the whole medium is additionally recorded.
    pub snapshot_times: Vec<f64>,
    /// Keep every `field_stride`-th Z row of the field grid.
    pub field_stride: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dt: 0.02,
            dz: 0.02,
            clamp_threshold: 1e-5,
            t_window: (-20.0, 40.0),
            ensemble_nodes: 32,
            snapshot_times: Vec::new(),
            field_stride: 1,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), CmbError> {
        let bad = |m: String| Err(CmbError::BadSettings(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.dz > 0.0 && self.dz.is_finite()) {
            return bad(format!("dz must be positive, got {}", self.dz));
        }
        if !(self.clamp_threshold >= 0.0) {
            return bad(format!("clamp threshold must be non-negative, got {}", self.clamp_threshold));
        }
        if !(self.t_window.1 > self.t_window.0) {
            return bad(format!("empty T window {:?}", self.t_window));
        }
        if self.ensemble_nodes == 0 {
            return bad("ensemble needs at least one node".into());
        }
        if self.field_stride == 0 {
            return bad("field stride must be at least 1".into());
        }
        Ok(())
    }

    /// Copy with `dt` reduced so that a pulse of duration `tau` spans at
    /// least as many steps as a unit pulse does at the current `dt`.
    pub fn resolved_for(&self, tau: f64) -> Self {
        Self {
            dt: self.dt.min(self.dt * tau),
            ..self.clone()
        }
    }

    pub fn t_axis(&self) -> Result<Axis, CmbError> {
        Ok(Axis::spanning(self.t_window.0, self.t_window.1, self.dt)?)
    }
}

/// Hermitian density matrix of one Doppler class in compact form:
/// populations and the three upper off-diagonal elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    pub p: [f64; 3],
    pub r12: C64,
    pub r13: C64,
    pub r23: C64,
}

impl BlochState {
    pub fn from_matrix(rho: &DensityMatrix3) -> Self {
        Self {
            p: [rho[(0, 0)].re, rho[(1, 1)].re, rho[(2, 2)].re],
            r12: rho[(0, 1)],
            r13: rho[(0, 2)],
            r23: rho[(1, 2)],
        }
    }

    pub fn to_matrix(&self) -> DensityMatrix3 {
        let mut m = DensityMatrix3::diag(self.p[0], self.p[1], self.p[2]);
        m[(0, 1)] = self.r12;
        m[(1, 0)] = self.r12.conj();
        m[(0, 2)] = self.r13;
        m[(2, 0)] = self.r13.conj();
        m[(1, 2)] = self.r23;
        m[(2, 1)] = self.r23.conj();
        m
    }

    #[inline]
    fn axpy(&self, h: f64, k: &Self) -> Self {
        Self {
            p: [self.p[0] + h * k.p[0], self.p[1] + h * k.p[1], self.p[2] + h * k.p[2]],
            r12: self.r12 + k.r12 * h,
            r13: self.r13 + k.r13 * h,
            r23: self.r23 + k.r23 * h,
        }
    }

    fn max_abs(&self) -> f64 {
        self.p
            .iter()
            .map(|x| x.abs())
            .chain([self.r12.norm(), self.r13.norm(), self.r23.norm()])
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// dρ/dT for one Doppler class.
#[inline]
fn rhs(r: &BlochState, s: C64, c: C64, delta: f64, gamma: f64) -> BlochState {
    let i = C64::i();
    let ih = C64::new(0.0, 0.5);
    let w1 = (s * r.r13.conj()).im;
    let w2 = (c * r.r23.conj()).im;
    let decay = gamma * r.p[2];
    BlochState {
        p: [-w1 + 0.5 * decay, -w2 + 0.5 * decay, w1 + w2 - decay],
        r12: ih * (s * r.r23.conj() - c.conj() * r.r13),
        r13: ih * (s * (r.p[2] - r.p[0]) - c * r.r12) + (i * delta - 0.5 * gamma) * r.r13,
        r23: ih * (c * (r.p[2] - r.p[1]) - s * r.r12.conj()) + (i * delta - 0.5 * gamma) * r.r23,
    }
}

/// Right-hand side of the Bloch equation with decay, for a full matrix.
pub fn bloch_rhs(rho: &DensityMatrix3, omega_s: C64, omega_c: C64, delta: f64, gamma: f64) -> DensityMatrix3 {
    rhs(&BlochState::from_matrix(rho), omega_s, omega_c, delta, gamma).to_matrix()
}

/// One classical RK4 step with fields `f0`, `fh`, `f1` at T, T + dt/2, T + dt.
#[inline]
pub fn rk4_step(r: &BlochState, f0: (C64, C64), fh: (C64, C64), f1: (C64, C64), delta: f64, gamma: f64, dt: f64) -> BlochState {
    let k1 = rhs(r, f0.0, f0.1, delta, gamma);
    let k2 = rhs(&r.axpy(0.5 * dt, &k1), fh.0, fh.1, delta, gamma);
    let k3 = rhs(&r.axpy(0.5 * dt, &k2), fh.0, fh.1, delta, gamma);
    let k4 = rhs(&r.axpy(dt, &k3), f1.0, f1.1, delta, gamma);
    let h = dt / 6.0;
    BlochState {
        p: [
            r.p[0] + h * (k1.p[0] + 2.0 * k2.p[0] + 2.0 * k3.p[0] + k4.p[0]),
            r.p[1] + h * (k1.p[1] + 2.0 * k2.p[1] + 2.0 * k3.p[1] + k4.p[1]),
            r.p[2] + h * (k1.p[2] + 2.0 * k2.p[2] + 2.0 * k3.p[2] + k4.p[2]),
        ],
        r12: r.r12 + (k1.r12 + 2.0 * k2.r12 + 2.0 * k3.r12 + k4.r12) * h,
        r13: r.r13 + (k1.r13 + 2.0 * k2.r13 + 2.0 * k3.r13 + k4.r13) * h,
        r23: r.r23 + (k1.r23 + 2.0 * k2.r23 + 2.0 * k3.r23 + k4.r23) * h,
    }
}

/// Doppler classes at one (Z, T) point.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochEnsembleState {
    pub detunings: Vec<f64>,
    pub weights: Vec<f64>,
    pub members: Vec<BlochState>,
}

impl BlochEnsembleState {
    pub fn uniform(ensemble: &Ensemble, rho: &DensityMatrix3) -> Self {
        Self {
            detunings: ensemble.detunings.clone(),
            weights: ensemble.weights.clone(),
            members: vec![BlochState::from_matrix(rho); ensemble.len()],
        }
    }

    /// Advance every member by `dt`; fields at the start, middle and end of
    /// the step.
    pub fn step_bloch(
        &mut self,
        f0: (C64, C64),
        fh: (C64, C64),
        f1: (C64, C64),
        gamma: f64,
        dt: f64,
    ) -> Result<(), CmbError> {
        for (r, &d) in self.members.iter_mut().zip(&self.detunings) {
            *r = rk4_step(r, f0, fh, f1, d, gamma, dt);
            let m = r.max_abs();
            if !(m <= BLOWUP_LIMIT) {
                return Err(CmbError::StateBlowup { z: f64::NAN, t: f64::NAN, delta: d, value: m });
            }
        }
        Ok(())
    }

    /// Weighted (⟨ρ₁₃⟩, ⟨ρ₂₃⟩).
    pub fn averaged_coherences(&self) -> (C64, C64) {
        self.members
            .iter()
            .zip(&self.weights)
            .fold((ZERO, ZERO), |acc, (r, w)| (acc.0 + r.r13 * *w, acc.1 + r.r23 * *w))
    }
}

/// Signal and control samples along the T axis at one Z station.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRow {
    pub signal: Vec<C64>,
    pub control: Vec<C64>,
}

impl FieldRow {
    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    fn at(&self, k: usize) -> (C64, C64) {
        (self.signal[k], self.control[k])
    }

    /// Fields at the midpoints T_k + dt/2: four-point cubic interpolation
    /// in the interior, linear at the ends.
    pub fn midpoints(&self) -> Vec<(C64, C64)> {
        let n = self.len();
        let mid = |f: &[C64], k: usize| {
            if k >= 1 && k + 2 < n {
                (-f[k - 1] + 9.0 * f[k] + 9.0 * f[k + 1] - f[k + 2]) / 16.0
            } else {
                0.5 * (f[k] + f[k + 1])
            }
        };
        (0..n.saturating_sub(1))
            .map(|k| (mid(&self.signal, k), mid(&self.control, k)))
            .collect()
    }

    /// Zero every sample with |Ω| below `threshold`.
    pub fn clamp(&mut self, threshold: f64) {
        for f in self.signal.iter_mut().chain(self.control.iter_mut()) {
            if f.norm() < threshold {
                *f = ZERO;
            }
        }
    }
}

/// Heun update of the fields over one Z step from the averaged coherences
/// at the current station (`coh_now`) and at the predicted next station
/// (`coh_pred`). With `coh_pred = None` the Euler predictor is returned.
pub fn step_maxwell(
    fields: &FieldRow,
    coh_now: &[(C64, C64)],
    coh_pred: Option<&[(C64, C64)]>,
    mu: f64,
    dz: f64,
) -> FieldRow {
    let g = C64::new(0.0, -mu);
    let n = fields.len();
    let mut out = fields.clone();
    for k in 0..n {
        let (ps, pc) = match coh_pred {
            Some(pred) => (0.5 * (coh_now[k].0 + pred[k].0), 0.5 * (coh_now[k].1 + pred[k].1)),
            None => coh_now[k],
        };
        out.signal[k] += g * ps * dz;
        out.control[k] += g * pc * dz;
    }
    out
}

/// Result of one T sweep through the ensemble.
struct Sweep {
    coherences: Vec<(C64, C64)>,
    finals: Vec<BlochState>,
    snapshots: Vec<Vec<BlochState>>,
    max_trace_error: f64,
}

struct Integrator<'a> {
    ensemble: &'a Ensemble,
    initial: BlochState,
    gamma: f64,
    t_axis: Axis,
    snapshot_idx: Vec<usize>,
}

impl Integrator<'_> {
    fn sweep(&self, fields: &FieldRow, z: f64) -> Result<Sweep, CmbError> {
        let nt = self.t_axis.len;
        let dt = self.t_axis.step;
        let mids = fields.midpoints();
        let nodes: Vec<usize> = (0..self.ensemble.len()).collect();
        let per_node = crate::par_map(&nodes, |&d| {
            let delta = self.ensemble.detunings[d];
            let mut r = self.initial;
            let mut coh = Vec::with_capacity(nt);
            let mut snaps = Vec::with_capacity(self.snapshot_idx.len());
            let mut trace_err: f64 = 0.0;
            coh.push((r.r13, r.r23));
            for k in 0..nt - 1 {
                if self.snapshot_idx.contains(&k) {
                    snaps.push(r);
                }
                r = rk4_step(&r, fields.at(k), mids[k], fields.at(k + 1), delta, self.gamma, dt);
                let m = r.max_abs();
                if !(m <= BLOWUP_LIMIT) {
                    return Err(CmbError::StateBlowup {
                        z,
                        t: self.t_axis.at(k + 1),
                        delta,
                        value: m,
                    });
                }
                trace_err = trace_err.max((r.trace() - 1.0).abs());
                coh.push((r.r13, r.r23));
            }
            if self.snapshot_idx.contains(&(nt - 1)) {
                snaps.push(r);
            }
            Ok((coh, r, snaps, trace_err))
        });
        let mut out = Sweep {
            coherences: vec![(ZERO, ZERO); nt],
            finals: Vec::with_capacity(nodes.len()),
            snapshots: vec![Vec::with_capacity(nodes.len()); self.snapshot_idx.len()],
            max_trace_error: 0.0,
        };
        for (res, w) in per_node.into_iter().zip(&self.ensemble.weights) {
            let (coh, fin, snaps, terr) = res?;
            for (acc, c) in out.coherences.iter_mut().zip(coh) {
                acc.0 += c.0 * *w;
                acc.1 += c.1 * *w;
            }
            out.finals.push(fin);
            for (s, r) in out.snapshots.iter_mut().zip(snaps) {
                s.push(r);
            }
            out.max_trace_error = out.max_trace_error.max(terr);
        }
        Ok(out)
    }
}

/// Boundary fields at Z = 0.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    /// Exact reflection-less solution evaluated at Z = 0.
    Solitons(SolitonSolution),
    /// Matched sech signal/control pair with areas θ_s, θ_c centred at `t_center`.
    StoragePair {
        lambda: SpectralParameter,
        theta_s: f64,
        theta_c: f64,
        t_center: f64,
    },
    /// Storage pair followed by a free 2π control pulse.
    StorageRetrieval {
        lambda: SpectralParameter,
        theta_s: f64,
        theta_c: f64,
        t_center: f64,
        control: SpectralParameter,
        control_center: f64,
    },
    /// Leading-order storage + retrieval pairs.
    AsymptoticPairs {
        first: SpectralParameter,
        second: SpectralParameter,
        init1: NormingConstantInit,
        init2: NormingConstantInit,
        regime: AsymptoticRegime,
    },
    /// Arbitrary samples on the solver's T axis.
    Sampled { signal: Vec<C64>, control: Vec<C64> },
}

fn sech(x: f64) -> f64 {
    if x.abs() > 700.0 {
        0.0
    } else {
        1.0 / x.cosh()
    }
}

impl Boundary {
    fn eval(&self, t: f64) -> Result<(C64, C64), CmbError> {
        Ok(match self {
            Self::Solitons(sol) => sol.reconstruct_fields(0.0, t)?,
            Self::StoragePair { lambda, theta_s, theta_c, t_center } => {
                ist::storage_pair_fields(lambda, *theta_s, *theta_c, -t_center / lambda.tau, t)
            }
            Self::StorageRetrieval {
                lambda,
                theta_s,
                theta_c,
                t_center,
                control,
                control_center,
            } => {
                let (s, c) = ist::storage_pair_fields(lambda, *theta_s, *theta_c, -t_center / lambda.tau, t);
                let env = 2.0 / control.tau * sech((t - control_center) / control.tau);
                (s, c + C64::from_polar(env, control.xi * t))
            }
            Self::AsymptoticPairs {
                first,
                second,
                init1,
                init2,
                regime,
            } => ist::second_order_boundary_fields(first, second, init1, init2, t, regime)?,
            Self::Sampled { .. } => unreachable!("sampled boundaries are not evaluated pointwise"),
        })
    }

    /// Samples on `t_axis`.
    pub fn sample(&self, t_axis: &Axis) -> Result<FieldRow, CmbError> {
        if let Self::Sampled { signal, control } = self {
            for v in [signal, control] {
                if v.len() != t_axis.len {
                    return Err(CmbError::BoundaryShape {
                        got: v.len(),
                        expected: t_axis.len,
                    });
                }
            }
            return Ok(FieldRow {
                signal: signal.clone(),
                control: control.clone(),
            });
        }
        let mut row = FieldRow {
            signal: Vec::with_capacity(t_axis.len),
            control: Vec::with_capacity(t_axis.len),
        };
        for i in 0..t_axis.len {
            let (s, c) = self.eval(t_axis.at(i))?;
            row.signal.push(s);
            row.control.push(c);
        }
        Ok(row)
    }

    /// Durations of the pulses involved, for resolution checks.
    pub fn durations(&self) -> Vec<f64> {
        match self {
            Self::Solitons(sol) => sol.params.iter().map(|p| p.tau).collect(),
            Self::StoragePair { lambda, .. } => vec![lambda.tau],
            Self::StorageRetrieval { lambda, control, .. } => vec![lambda.tau, control.tau],
            Self::AsymptoticPairs { first, second, .. } => vec![first.tau, second.tau],
            Self::Sampled { .. } => Vec::new(),
        }
    }

    /// Analytic imprint location of the storage stage, when defined.
    pub fn predicted_storage(&self, doppler: &DopplerSpec, kappa0: f64) -> Result<Option<f64>, CmbError> {
        let (lambda, ratio) = match self {
            Self::StoragePair { lambda, theta_s, theta_c, .. }
            | Self::StorageRetrieval { lambda, theta_s, theta_c, .. } => (*lambda, theta_s / theta_c),
            Self::Solitons(sol) => (sol.params[0], (sol.inits[0].sigma12()).exp()),
            Self::AsymptoticPairs { first, init1, .. } => (*first, init1.sigma12().exp()),
            Self::Sampled { .. } => return Ok(None),
        };
        if !(ratio.is_finite() && ratio > 0.0) {
            return Ok(None);
        }
        let k = broadening_coefficients(&lambda, doppler, kappa0)?.kappa1;
        Ok(Some(ratio.ln() / k))
    }
}

/// Hygiene statistics gathered over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// max |tr ρ − 1| over every node and time step of the physical sweeps.
    pub max_trace_error: f64,
    /// Largest Hermiticity defect of the recorded densities.
    pub max_hermiticity_error: f64,
    /// Smallest eigenvalue over the recorded densities.
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub fields: FieldGrid,
    /// Density after the pulses (T = t_max) at every Z station.
    pub final_density: DensityField,
    /// Whole-medium densities at the requested snapshot times.
    pub snapshots: Vec<(f64, DensityField)>,
    pub warnings: Vec<SolverWarning>,
    pub diagnostics: Diagnostics,
}

fn density_field(z_axis: Axis, ensemble: &Ensemble, rows: Vec<Vec<BlochState>>) -> DensityField {
    DensityField {
        z_axis,
        delta_nodes: ensemble.detunings.clone(),
        weights: ensemble.weights.clone(),
        rho: rows.into_iter().flatten().map(|r| r.to_matrix()).collect(),
    }
}

/// The Doppler ensemble used by [`simulate`].
pub fn solver_ensemble(doppler: &DopplerSpec, settings: &SolverSettings) -> Ensemble {
    Ensemble::gauss_hermite(doppler, settings.ensemble_nodes).normalized()
}

/// Integrate the medium from Z = 0 to its length.
pub fn simulate(
    medium: &MediumConfig,
    doppler: &DopplerSpec,
    boundary: &Boundary,
    settings: &SolverSettings,
) -> Result<Simulation, CmbError> {
    settings.validate()?;
    let t_axis = settings.t_axis()?;
    let z_axis = Axis::spanning(0.0, medium.z_length, settings.dz)?;
    let mut fields = boundary.sample(&t_axis)?;
    let edge = [fields.signal[0], fields.control[0], fields.signal[t_axis.len - 1], fields.control[t_axis.len - 1]]
        .iter()
        .map(|f| f.norm())
        .fold(0.0, f64::max);
    if edge >= ist::EDGE_THRESHOLD {
        return Err(CmbError::WindowTooSmall(edge));
    }

    let mut warnings = Vec::new();
    for duration in boundary.durations() {
        if duration < MIN_STEPS_PER_DURATION * t_axis.step {
            warnings.push(SolverWarning::GridUnderresolved { duration, dt: t_axis.step });
        }
    }
    if let Some(location) = boundary.predicted_storage(doppler, medium.kappa0)? {
        if ist::storage_outside_medium(location, medium.z_length) {
            warnings.push(SolverWarning::StorageOutsideMedium {
                location,
                z_length: medium.z_length,
            });
        }
    }

    let ensemble = solver_ensemble(doppler, settings);
    let snapshot_idx: Vec<usize> = settings
        .snapshot_times
        .iter()
        .map(|t| (((t - t_axis.start) / t_axis.step).round().max(0.0) as usize).min(t_axis.len - 1))
        .collect();
    let integ = Integrator {
        ensemble: &ensemble,
        initial: BlochState::from_matrix(&medium.initial_state),
        gamma: medium.gamma,
        t_axis,
        snapshot_idx,
    };
    let mu = medium.mu();
    let dz = z_axis.step;
    let stride = settings.field_stride;
    let kept: Vec<usize> = (0..z_axis.len).filter(|k| k % stride == 0).collect();
    let field_z = Axis {
        start: 0.0,
        step: dz * stride as f64,
        len: kept.len(),
    };
    let mut grid = FieldGrid::zeros(field_z, t_axis);
    let mut finals = Vec::with_capacity(z_axis.len);
    let mut snaps: Vec<Vec<Vec<BlochState>>> = vec![Vec::with_capacity(z_axis.len); settings.snapshot_times.len()];
    let mut max_trace_error: f64 = 0.0;

    for k in 0..z_axis.len {
        let z = z_axis.at(k);
        let now = integ.sweep(&fields, z)?;
        if k % stride == 0 {
            let row = k / stride;
            let n = t_axis.len;
            grid.omega_s[row * n..(row + 1) * n].copy_from_slice(&fields.signal);
            grid.omega_c[row * n..(row + 1) * n].copy_from_slice(&fields.control);
        }
        max_trace_error = max_trace_error.max(now.max_trace_error);
        finals.push(now.finals);
        for (s, r) in snaps.iter_mut().zip(now.snapshots) {
            s.push(r);
        }
        if k + 1 == z_axis.len {
            break;
        }
        let predicted = step_maxwell(&fields, &now.coherences, None, mu, dz);
        let pred = integ.sweep(&predicted, z + dz)?;
        fields = step_maxwell(&fields, &now.coherences, Some(&pred.coherences), mu, dz);
        fields.clamp(settings.clamp_threshold);
    }

    let final_density = density_field(z_axis, &ensemble, finals);
    let snapshots: Vec<(f64, DensityField)> = settings
        .snapshot_times
        .iter()
        .zip(snaps)
        .map(|(t, rows)| (*t, density_field(z_axis, &ensemble, rows)))
        .collect();
    let mut diagnostics = Diagnostics {
        max_trace_error,
        max_hermiticity_error: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    for field in std::iter::once(&final_density).chain(snapshots.iter().map(|(_, f)| f)) {
        for r in &field.rho {
            diagnostics.max_hermiticity_error = diagnostics.max_hermiticity_error.max(r.hermiticity_error());
            diagnostics.min_eigenvalue = diagnostics.min_eigenvalue.min(r.min_eigenvalue());
        }
    }
    Ok(Simulation {
        fields: grid,
        final_density,
        snapshots,
        warnings,
        diagnostics,
    })
}

/// Areas of a matched storage pair with two-pulse area 2π.
pub fn matched_areas(theta_c: f64) -> (f64, f64) {
    (((2.0 * PI).powi(2) - theta_c * theta_c).sqrt(), theta_c)
}
