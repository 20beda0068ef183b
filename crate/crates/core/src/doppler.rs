//! Doppler distribution, its discretisation, and the broadening-dependent
//! absorption depth κ and refractive shift δ of a soliton.
//!
//! The averages are integrals of a Gaussian against a Lorentzian of unit
//! half-width in ν = τ(Δ − ξ). Two rules are used:
//!
//! * Gauss-Hermite in the Gaussian variable when the Gaussian is narrower
//!   than the Lorentzian (σ_ν = τ/T₂* ≤ [`HERMITE_MAX_WIDTH`]);
//! * Gauss-Legendre in φ with ν = tan φ otherwise. The Lorentzian pole then
//!   sits far from the integration path and the integrand in φ is smooth.
//!
//! Either rule is refined by node doubling until two successive estimates
//! agree to [`CONVERGENCE_TOL`].

use crate::quadrature::{gauss_hermite, gauss_legendre};
use crate::types::{DopplerSpec, SpectralParameter};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use thiserror::Error;

pub const HERMITE_MAX_WIDTH: f64 = 0.75;
pub const CONVERGENCE_TOL: f64 = 1e-8;
pub const MAX_NODES: usize = 4096;
/// Relative step in τ/T₂* for the width derivative.
pub const WIDTH_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DopplerError {
    #[error("the detuning distribution is a delta function (T2* = inf); it has no pointwise density")]
    DeltaDistributionQuery,
    #[error("quadrature did not converge: {nodes} vs {} nodes differ by {change:e} (relative)", 2 * nodes)]
    QuadratureNotConverged { nodes: usize, change: f64 },
}

/// Absorption depth κ and extra refractive contribution δ (units of κ₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BroadeningCoefficients {
    pub kappa1: f64,
    pub delta1: f64,
}

impl BroadeningCoefficients {
    /// Coefficients of an undamped, unshifted medium (κ = 1, δ = 0).
    pub fn resonant(kappa0: f64) -> Self {
        Self {
            kappa1: kappa0,
            delta1: 0.0,
        }
    }
}

/// Gaussian detuning density F(Δ) = T₂*/√(2π) exp(−(Δ−Δ̄)²T₂*²/2).
pub fn distribution_value(delta: f64, spec: &DopplerSpec) -> Result<f64, DopplerError> {
    if spec.is_delta() {
        return Err(DopplerError::DeltaDistributionQuery);
    }
    let t = spec.t2star;
    let u = (delta - spec.mean_detuning) * t;
    Ok(t / (2.0 * PI).sqrt() * (-0.5 * u * u).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    Delta,
    Hermite,
    ArctanLegendre,
}

/// Discrete Doppler ensemble: detunings Δ_i and weights w_i with
/// ⟨g⟩ ≈ Σ w_i g(Δ_i).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub kind: RuleKind,
    pub detunings: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Ensemble {
    /// Build an `n`-node ensemble adapted to a soliton `lambda`: the
    /// Lorentzian centre ξ and width 1/τ decide the rule and node placement.
    pub fn new(spec: &DopplerSpec, lambda: &SpectralParameter, n: usize) -> Self {
        if spec.is_delta() {
            return Self {
                kind: RuleKind::Delta,
                detunings: vec![spec.mean_detuning],
                weights: vec![1.0],
            };
        }
        let sigma = spec.width();
        if lambda.tau * sigma <= HERMITE_MAX_WIDTH {
            Self::gauss_hermite(spec, n)
        } else {
            let rule = gauss_legendre(n);
            let mut detunings = Vec::with_capacity(n);
            let mut weights = Vec::with_capacity(n);
            for (y, w) in rule.nodes.iter().zip(&rule.weights) {
                let phi = FRAC_PI_2 * y;
                let (s, c) = phi.sin_cos();
                let nu = s / c;
                let delta = lambda.xi + nu / lambda.tau;
                // dΔ/dφ = sec²φ / τ
                let jac = FRAC_PI_2 / (c * c * lambda.tau);
                let f = distribution_value(delta, spec).unwrap_or(0.0);
                detunings.push(delta);
                weights.push(w * jac * f);
            }
            Self {
                kind: RuleKind::ArctanLegendre,
                detunings,
                weights,
            }
        }
    }

    /// Plain Gauss-Hermite ensemble in the Gaussian variable. Its nodes stay
    /// within a few widths of Δ̄, which keeps explicit time stepping stable.
    pub fn gauss_hermite(spec: &DopplerSpec, n: usize) -> Self {
        if spec.is_delta() {
            return Self {
                kind: RuleKind::Delta,
                detunings: vec![spec.mean_detuning],
                weights: vec![1.0],
            };
        }
        let sigma = spec.width();
        let rule = gauss_hermite(n);
        let scale = 1.0 / PI.sqrt();
        Self {
            kind: RuleKind::Hermite,
            detunings: rule
                .nodes
                .iter()
                .map(|x| spec.mean_detuning + SQRT_2 * sigma * x)
                .collect(),
            weights: rule.weights.iter().map(|w| w * scale).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }

    /// Rescale weights to sum to one.
    pub fn normalized(mut self) -> Self {
        let total: f64 = self.weights.iter().sum();
        if total > 0.0 {
            self.weights.iter_mut().for_each(|w| *w /= total);
        }
        self
    }

    /// Σ w_i g(Δ_i).
    pub fn average<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.detunings
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * g(*d))
            .sum()
    }
}

/// Lorentzian averages in the normalised variable ν = τ(Δ − ξ).
fn coefficients_on(ens: &Ensemble, lambda: &SpectralParameter, kappa0: f64) -> BroadeningCoefficients {
    let tau = lambda.tau;
    let mut k = 0.0;
    let mut d = 0.0;
    for (delta, w) in ens.detunings.iter().zip(&ens.weights) {
        let nu = tau * (delta - lambda.xi);
        let l = w / (nu * nu + 1.0);
        k += l;
        d += l * nu;
    }
    BroadeningCoefficients {
        kappa1: kappa0 * tau * k,
        delta1: kappa0 * tau * d,
    }
}

/// The same averages written in the raw detuning,
/// κ = (μ/2τ)⟨1/((Δ−ξ)² + τ⁻²)⟩, δ = (μ/2)⟨(Δ−ξ)/((Δ−ξ)² + τ⁻²)⟩ with μ = 2κ₀.
fn coefficients_on_detuning_form(
    ens: &Ensemble,
    lambda: &SpectralParameter,
    kappa0: f64,
) -> BroadeningCoefficients {
    let mu = 2.0 * kappa0;
    let inv_tau2 = 1.0 / (lambda.tau * lambda.tau);
    let denom = |delta: f64| (delta - lambda.xi).powi(2) + inv_tau2;
    BroadeningCoefficients {
        kappa1: mu / (2.0 * lambda.tau) * ens.average(|d| 1.0 / denom(d)),
        delta1: mu / 2.0 * ens.average(|d| (d - lambda.xi) / denom(d)),
    }
}

fn converge<F>(spec: &DopplerSpec, lambda: &SpectralParameter, eval: F) -> Result<BroadeningCoefficients, DopplerError>
where
    F: Fn(&Ensemble) -> BroadeningCoefficients,
{
    let mut n = spec.n_nodes.max(2);
    let mut coarse = eval(&Ensemble::new(spec, lambda, n));
    loop {
        let fine = eval(&Ensemble::new(spec, lambda, 2 * n));
        let scale = fine.kappa1.abs().max(fine.delta1.abs());
        let change = (fine.kappa1 - coarse.kappa1)
            .abs()
            .max((fine.delta1 - coarse.delta1).abs())
            / scale;
        if change <= CONVERGENCE_TOL || scale == 0.0 {
            return Ok(fine);
        }
        if 2 * n >= MAX_NODES {
            return Err(DopplerError::QuadratureNotConverged { nodes: n, change });
        }
        n *= 2;
        coarse = fine;
    }
}

/// κ and δ for soliton `lambda` in a medium whose resonant absorption
/// coefficient (for a pulse of duration τ₁ = 1) is `kappa0`.
pub fn broadening_coefficients(
    lambda: &SpectralParameter,
    spec: &DopplerSpec,
    kappa0: f64,
) -> Result<BroadeningCoefficients, DopplerError> {
    if spec.is_delta() {
        let nu = lambda.tau * (spec.mean_detuning - lambda.xi);
        let l = kappa0 * lambda.tau / (nu * nu + 1.0);
        return Ok(BroadeningCoefficients {
            kappa1: l,
            delta1: l * nu,
        });
    }
    converge(spec, lambda, |e| coefficients_on(e, lambda, kappa0))
}

/// [`broadening_coefficients`] evaluated with the integrand written in the
/// raw detuning Δ rather than ν.
pub fn broadening_coefficients_detuning_form(
    lambda: &SpectralParameter,
    spec: &DopplerSpec,
    kappa0: f64,
) -> Result<BroadeningCoefficients, DopplerError> {
    if spec.is_delta() {
        let ens = Ensemble::new(spec, lambda, 1);
        return Ok(coefficients_on_detuning_form(&ens, lambda, kappa0));
    }
    converge(spec, lambda, |e| coefficients_on_detuning_form(e, lambda, kappa0))
}

/// κ for dimensionless width `w = τ/T₂*` and mean `τΔ̄`, in units of κ₀,
/// for a resonant soliton of unit duration.
pub fn kappa_at(width: f64, mean: f64) -> Result<f64, DopplerError> {
    let spec = DopplerSpec::from_width(width, mean).map_err(|_| DopplerError::DeltaDistributionQuery)?;
    broadening_coefficients(&SpectralParameter::unit(), &spec, 1.0).map(|c| c.kappa1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slope {
    Decreasing,
    Flat,
    Increasing,
}

/// Probe width for the one-sided slope at zero broadening.
pub const ZERO_WIDTH_PROBE: f64 = 1e-2;

/// Central difference of κ with respect to the width τ/T₂*.
///
/// κ is even in the width, so the derivative vanishes at zero broadening
/// for every mean detuning. There the one-sided secant over
/// [`ZERO_WIDTH_PROBE`] is returned instead: the direction κ moves when
/// broadening is switched on.
pub fn kappa_width_derivative(
    lambda: &SpectralParameter,
    spec: &DopplerSpec,
    kappa0: f64,
) -> Result<f64, DopplerError> {
    let w = lambda.tau * spec.width();
    let at = |width: f64| {
        let s = DopplerSpec {
            t2star: if width == 0.0 { f64::INFINITY } else { lambda.tau / width },
            ..*spec
        };
        broadening_coefficients(lambda, &s, kappa0).map(|c| c.kappa1)
    };
    if w == 0.0 {
        return Ok((at(ZERO_WIDTH_PROBE)? - at(0.0)?) / ZERO_WIDTH_PROBE);
    }
    let h = (WIDTH_STEP * w).max(1e-7);
    let lo = (w - h).max(f64::MIN_POSITIVE);
    Ok((at(w + h)? - at(lo)?) / (w + h - lo))
}

/// Sign of ∂κ/∂(τ/T₂*); `Flat` when |∂κ| ≤ `flat_tol`.
pub fn kappa_width_derivative_sign(
    lambda: &SpectralParameter,
    spec: &DopplerSpec,
    kappa0: f64,
    flat_tol: f64,
) -> Result<Slope, DopplerError> {
    let d = kappa_width_derivative(lambda, spec, kappa0)?;
    Ok(if d.abs() <= flat_tol {
        Slope::Flat
    } else if d > 0.0 {
        Slope::Increasing
    } else {
        Slope::Decreasing
    })
}

/// One row of a coefficient table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    /// τ/T₂*
    pub width: f64,
    /// τΔ̄
    pub mean: f64,
    /// κ/κ₀
    pub kappa: f64,
    /// δ/κ₀
    pub delta: f64,
}

/// κ/κ₀ and δ/κ₀ over every (width, mean) pair, widths outermost.
pub fn coefficient_table(widths: &[f64], means: &[f64], nodes: usize) -> Result<Vec<CoefficientRow>, DopplerError> {
    let lambda = SpectralParameter::unit();
    let mut rows = Vec::with_capacity(widths.len() * means.len());
    for &width in widths {
        for &mean in means {
            let spec = DopplerSpec::from_width(width, mean)
                .map_err(|_| DopplerError::DeltaDistributionQuery)?
                .with_nodes(nodes);
            let c = broadening_coefficients(&lambda, &spec, 1.0)?;
            rows.push(CoefficientRow {
                width,
                mean,
                kappa: c.kappa1,
                delta: c.delta1,
            });
        }
    }
    Ok(rows)
}
