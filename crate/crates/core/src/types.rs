//! Domain types shared by the analytic and numerical routes.

use crate::state::{DensityError, DensityMatrix3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("pulse duration tau must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("decay rate gamma must be non-negative, got {0}")]
    NegativeGamma(f64),
    #[error("norming constant has both components zero")]
    ZeroNormingConstant,
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("bad Doppler distribution: {0}")]
    BadDoppler(String),
    #[error("initial state must be a valid block-diagonal density matrix: {0}")]
    BadInitialState(String),
    #[error("value must be finite, got {0}")]
    NotFinite(f64),
}

/// IST eigenvalue λ = ξ − i/τ in the lower half plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParameter {
    /// Self-detuning ξ (units 1/τ₁).
    pub xi: f64,
    /// Pulse duration τ (units τ₁), strictly positive.
    pub tau: f64,
}

impl SpectralParameter {
    pub fn new(xi: f64, tau: f64) -> Result<Self, ParamError> {
        if !xi.is_finite() {
            return Err(ParamError::NotFinite(xi));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(ParamError::NonPositiveTau(tau));
        }
        Ok(Self { xi, tau })
    }

    /// Resonant soliton of unit duration, λ = −i.
    pub fn unit() -> Self {
        Self { xi: 0.0, tau: 1.0 }
    }

    pub fn lambda(&self) -> C64 {
        C64::new(self.xi, -1.0 / self.tau)
    }
}

/// Initial (Z = 0) value of a two-component norming constant β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormingConstantInit {
    pub c1: C64,
    pub c2: C64,
}

impl NormingConstantInit {
    pub fn new(c1: C64, c2: C64) -> Result<Self, ParamError> {
        for v in [c1.re, c1.im, c2.re, c2.im] {
            if !v.is_finite() {
                return Err(ParamError::NotFinite(v));
            }
        }
        if c1 == C64::new(0.0, 0.0) && c2 == C64::new(0.0, 0.0) {
            return Err(ParamError::ZeroNormingConstant);
        }
        Ok(Self { c1, c2 })
    }

    pub fn real(c1: f64, c2: f64) -> Result<Self, ParamError> {
        Self::new(c1.into(), c2.into())
    }

    /// σᵢ = ln(|cᵢ| τ); −∞ for a vanishing component.
    pub fn sigma(&self, tau: f64) -> [f64; 2] {
        [
            (self.c1.norm() * tau).ln(),
            (self.c2.norm() * tau).ln(),
        ]
    }

    /// σ₁₂ = ln|c₁/c₂|.
    pub fn sigma12(&self) -> f64 {
        self.c1.norm().ln() - self.c2.norm().ln()
    }

    pub fn norm(&self) -> f64 {
        self.c1.norm().hypot(self.c2.norm())
    }

    /// Norming constant of a matched storage pair at Z = 0: signal and
    /// control areas `theta_s`, `theta_c` (θ_s² + θ_c² = (2π)² is assumed),
    /// both pulses centred at `t_center` with duration `tau`.
    pub fn matched_pair(theta_s: f64, theta_c: f64, tau: f64, t_center: f64) -> Result<Self, ParamError> {
        let total = theta_s.hypot(theta_c);
        let magnitude = (-t_center / tau).exp() / tau;
        Self::real(magnitude * theta_s / total, magnitude * theta_c / total)
    }
}

/// Gaussian distribution of one-photon detunings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerSpec {
    /// Doppler lifetime T₂* (units τ₁); `f64::INFINITY` means no broadening.
    pub t2star: f64,
    /// Mean detuning Δ̄ (units 1/τ₁).
    pub mean_detuning: f64,
    /// Quadrature node count used for the broadening coefficients.
    pub n_nodes: usize,
}

impl DopplerSpec {
    pub const DEFAULT_NODES: usize = 64;

    /// From the dimensionless width τ₁/T₂* (0 = no broadening) and mean τ₁Δ̄.
    pub fn from_width(width: f64, mean_detuning: f64) -> Result<Self, ParamError> {
        if !(width >= 0.0) || !width.is_finite() {
            return Err(ParamError::BadDoppler(format!(
                "width must be finite and non-negative, got {width}"
            )));
        }
        if !mean_detuning.is_finite() {
            return Err(ParamError::NotFinite(mean_detuning));
        }
        let t2star = if width == 0.0 { f64::INFINITY } else { 1.0 / width };
        Ok(Self {
            t2star,
            mean_detuning,
            n_nodes: Self::DEFAULT_NODES,
        })
    }

    pub fn none() -> Self {
        Self {
            t2star: f64::INFINITY,
            mean_detuning: 0.0,
            n_nodes: Self::DEFAULT_NODES,
        }
    }

    pub fn with_nodes(mut self, n: usize) -> Self {
        self.n_nodes = n;
        self
    }

    /// Standard deviation 1/T₂* of the detuning distribution.
    pub fn width(&self) -> f64 {
        if self.t2star.is_infinite() {
            0.0
        } else {
            1.0 / self.t2star
        }
    }

    pub fn is_delta(&self) -> bool {
        self.t2star.is_infinite()
    }
}

/// Medium parameters. Lengths in 1/κ₀ with κ₀ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumConfig {
    pub kappa0: f64,
    /// Spontaneous decay rate Γ of the excited state (units 1/τ₁).
    pub gamma: f64,
    pub z_length: f64,
    /// State at T → −∞, block diagonal.
    pub initial_state: DensityMatrix3,
}

impl MediumConfig {
    pub fn new(gamma: f64, z_length: f64, initial_state: DensityMatrix3) -> Result<Self, ParamError> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(ParamError::NegativeGamma(gamma));
        }
        if !(z_length > 0.0) || !z_length.is_finite() {
            return Err(ParamError::BadGrid(format!(
                "medium length must be positive, got {z_length}"
            )));
        }
        initial_state
            .validate(crate::state::ANALYTIC_TOL)
            .map_err(|e: DensityError| ParamError::BadInitialState(e.to_string()))?;
        if !initial_state.is_block_diagonal(0.0) {
            return Err(ParamError::BadInitialState(
                "optical coherences rho13, rho23 must vanish".into(),
            ));
        }
        Ok(Self {
            kappa0: 1.0,
            gamma,
            z_length,
            initial_state,
        })
    }

    /// Resonant coupling μ = 2κ₀/τ₁.
    pub fn mu(&self) -> f64 {
        2.0 * self.kappa0
    }
}

/// Uniformly spaced axis `start + i·step`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self, ParamError> {
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() {
            return Err(ParamError::BadGrid(format!(
                "axis needs finite start and positive step, got start={start}, step={step}"
            )));
        }
        if len < 2 {
            return Err(ParamError::BadGrid(format!("axis needs at least 2 points, got {len}")));
        }
        Ok(Self { start, step, len })
    }

    /// Axis covering `[start, end]` with spacing as close to `step` as the
    /// integer point count allows (never coarser).
    pub fn spanning(start: f64, end: f64, step: f64) -> Result<Self, ParamError> {
        if !(end > start) {
            return Err(ParamError::BadGrid(format!("empty interval [{start}, {end}]")));
        }
        if !(step > 0.0) {
            return Err(ParamError::BadGrid(format!("step must be positive, got {step}")));
        }
        let intervals = ((end - start) / step - 1e-9).ceil().max(1.0) as usize;
        Self::new(start, (end - start) / intervals as f64, intervals + 1)
    }

    pub fn at(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn end(&self) -> f64 {
        self.at(self.len - 1)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.at(i)).collect()
    }
}

/// Complex Rabi envelopes Ω_s, Ω_c on a (Z, T) grid, row-major in Z.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub z_axis: Axis,
    pub t_axis: Axis,
    pub omega_s: Vec<C64>,
    pub omega_c: Vec<C64>,
}

impl FieldGrid {
    pub fn zeros(z_axis: Axis, t_axis: Axis) -> Self {
        let n = z_axis.len * t_axis.len;
        Self {
            z_axis,
            t_axis,
            omega_s: vec![C64::new(0.0, 0.0); n],
            omega_c: vec![C64::new(0.0, 0.0); n],
        }
    }

    /// Fill by evaluating `f(z, t)` at every grid point.
    pub fn from_fn<F>(z_axis: Axis, t_axis: Axis, f: F) -> Self
    where
        F: Fn(f64, f64) -> (C64, C64) + Sync + Send,
    {
        let rows: Vec<usize> = (0..z_axis.len).collect();
        let computed = crate::par_map(&rows, |&k| {
            let z = z_axis.at(k);
            (0..t_axis.len)
                .map(|i| f(z, t_axis.at(i)))
                .collect::<Vec<_>>()
        });
        let mut grid = Self::zeros(z_axis, t_axis);
        for (k, row) in computed.into_iter().enumerate() {
            for (i, (s, c)) in row.into_iter().enumerate() {
                grid.omega_s[k * t_axis.len + i] = s;
                grid.omega_c[k * t_axis.len + i] = c;
            }
        }
        grid
    }

    pub fn index(&self, k: usize, i: usize) -> usize {
        k * self.t_axis.len + i
    }

    pub fn signal_row(&self, k: usize) -> &[C64] {
        let n = self.t_axis.len;
        &self.omega_s[k * n..(k + 1) * n]
    }

    pub fn control_row(&self, k: usize) -> &[C64] {
        let n = self.t_axis.len;
        &self.omega_c[k * n..(k + 1) * n]
    }

    pub fn check_shape(&self) -> Result<(), ParamError> {
        let n = self.z_axis.len * self.t_axis.len;
        if self.omega_s.len() != n || self.omega_c.len() != n {
            return Err(ParamError::BadGrid(format!(
                "field arrays have {} and {} entries, axes need {n}",
                self.omega_s.len(),
                self.omega_c.len()
            )));
        }
        Ok(())
    }
}

/// Which of the two fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Signal,
    Control,
}

/// Post-pulse density matrices over Z and a discrete Doppler ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub z_axis: Axis,
    /// Detunings Δ of the ensemble members (units 1/τ₁).
    pub delta_nodes: Vec<f64>,
    /// Quadrature weights of the ensemble, summing to one.
    pub weights: Vec<f64>,
    /// Indexed `[k * delta_nodes.len() + d]`.
    pub rho: Vec<DensityMatrix3>,
}

impl DensityField {
    pub fn at(&self, k: usize, d: usize) -> &DensityMatrix3 {
        &self.rho[k * self.delta_nodes.len() + d]
    }

    /// Doppler-weighted average ⟨ρ⟩ at station `k`.
    pub fn averaged(&self, k: usize) -> DensityMatrix3 {
        let mut acc = DensityMatrix3::zeros();
        for (d, w) in self.weights.iter().enumerate() {
            let r = self.at(k, d);
            for (a, b) in acc.entries.iter_mut().zip(r.entries.iter()) {
                *a += b * *w;
            }
        }
        acc
    }

    /// Doppler-averaged ρ₂₂(z).
    pub fn rho22_profile(&self) -> Vec<f64> {
        (0..self.z_axis.len).map(|k| self.averaged(k)[(1, 1)].re).collect()
    }

    /// Doppler-averaged ρ₁₂(z).
    pub fn rho12_profile(&self) -> Vec<C64> {
        (0..self.z_axis.len).map(|k| self.averaged(k)[(0, 1)]).collect()
    }

    /// Doppler-weighted ∫|ρ₁₂| dz (trapezoid).
    pub fn coherence_l1(&self) -> f64 {
        let per_z: Vec<f64> = (0..self.z_axis.len)
            .map(|k| {
                self.weights
                    .iter()
                    .enumerate()
                    .map(|(d, w)| w * self.at(k, d)[(0, 1)].norm())
                    .sum()
            })
            .collect();
        crate::quadrature::trapezoid(&per_z, self.z_axis.step)
    }

    /// Check every member against the density-matrix invariants.
    pub fn validate(&self, tol: f64) -> Result<(), (usize, usize, DensityError)> {
        let nd = self.delta_nodes.len();
        for (idx, r) in self.rho.iter().enumerate() {
            r.validate(tol).map_err(|e| (idx / nd, idx % nd, e))?;
        }
        Ok(())
    }
}
