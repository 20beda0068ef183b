//! Reflection-less soliton solutions of the coupled Maxwell-Bloch equations.
//!
//! A solution is fixed by the spectral parameters λ_j = ξ_j − i/τ_j, the
//! Z = 0 norming constants β^(j)(0) and the initial (T → −∞) medium. The
//! norming constants evolve along Z with the Doppler-averaged absorption κ
//! and refraction δ; the fields follow from an n×n linear solve per (Z, T)
//! point and the post-pulse density matrix from a product of n rank-one
//! dressing factors.
//!
//! Magnitudes such as |β| e^{T/τ} overflow for moderate windows, so norming
//! constants are carried as log-magnitude and phase and the kernel is
//! solved in rescaled form (see [`SolitonSolution::reconstruct_fields`]).

use crate::doppler::{broadening_coefficients, BroadeningCoefficients, DopplerError};
use crate::linalg::{self, Mat2, SmallMatrix, MAX_DIM};
use crate::state::DensityMatrix3;
use crate::types::{DopplerSpec, NormingConstantInit, SpectralParameter};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use thiserror::Error;

/// Kernel condition number above which a reconstruction is rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Field magnitude (units 1/τ₁) a pulse must fall below at the window edges.
pub const EDGE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IstError {
    #[error("initial ground-state block must be diagonal with no optical coherences")]
    NonDiagonalInitialState,
    #[error("soliton kernel is numerically singular (condition number {0:e})")]
    SingularKernel(f64),
    #[error("spectral parameters {0} and {1} coincide")]
    DegenerateSpectralParameters(usize, usize),
    #[error("between 1 and {MAX_DIM} solitons are supported, got {0}")]
    UnsupportedOrder(usize),
    #[error("{params} spectral parameters but {inits} norming constants")]
    LengthMismatch { params: usize, inits: usize },
    #[error("pulse has not decayed at the window edge (|Omega| = {0:e})")]
    WindowTooSmall(f64),
    #[error("pulse areas must be positive (theta_s = {0}, theta_c = {1})")]
    NonPositiveArea(f64, f64),
    #[error("asymptotic two-pair form is outside its regime: {0}")]
    AsymptoticRegimeViolated(String),
    #[error("phase lag is infinite for identical spectral parameters")]
    InfinitePhaseLag,
    #[error(transparent)]
    Doppler(#[from] DopplerError),
}

/// A norming-constant vector stored as per-component log-magnitude and phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormingVector {
    pub log_mag: [f64; 2],
    pub phase: [f64; 2],
}

impl NormingVector {
    pub fn from_init(init: &NormingConstantInit) -> Self {
        let c = [init.c1, init.c2];
        Self {
            log_mag: [c[0].norm().ln(), c[1].norm().ln()],
            phase: [c[0].arg(), c[1].arg()],
        }
    }

    /// ln ‖β‖.
    pub fn log_norm(&self) -> f64 {
        let m = self.log_mag[0].max(self.log_mag[1]);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + 0.5 * ((2.0 * (self.log_mag[0] - m)).exp() + (2.0 * (self.log_mag[1] - m)).exp()).ln()
    }

    /// β/‖β‖.
    pub fn unit(&self) -> [C64; 2] {
        let n = self.log_norm();
        [0, 1].map(|i| C64::from_polar((self.log_mag[i] - n).exp(), self.phase[i]))
    }

    /// β itself; may overflow for extreme magnitudes.
    pub fn to_complex(&self) -> [C64; 2] {
        [0, 1].map(|i| C64::from_polar(self.log_mag[i].exp(), self.phase[i]))
    }
}

/// Diagonal populations (p₁, p₂, p₃) of an initial state accepted by the
/// reflection-less construction.
pub fn diagonal_populations(rho: &DensityMatrix3) -> Result<[f64; 3], IstError> {
    if rho[(0, 1)].norm() > 0.0 || rho[(1, 0)].norm() > 0.0 || !rho.is_block_diagonal(0.0) {
        return Err(IstError::NonDiagonalInitialState);
    }
    Ok([rho[(0, 0)].re, rho[(1, 1)].re, rho[(2, 2)].re])
}

/// β(Z) for a medium prepared in the diagonal state with populations
/// `populations`: each component decays independently,
/// βᵢ(Z) = cᵢ exp(−(pᵢ − p₃)(κ + iδ)Z).
pub fn evolve_norming_log(
    init: &NormingConstantInit,
    coeffs: &BroadeningCoefficients,
    populations: &[f64; 3],
    z: f64,
) -> NormingVector {
    let mut v = NormingVector::from_init(init);
    for i in 0..2 {
        let w = populations[i] - populations[2];
        if v.log_mag[i].is_finite() {
            v.log_mag[i] -= w * coeffs.kappa1 * z;
            v.phase[i] -= w * coeffs.delta1 * z;
        }
    }
    v
}

/// β(Z) as a complex 2-vector. `initial_state` must be diagonal.
pub fn evolve_norming_constant(
    init: &NormingConstantInit,
    coeffs: &BroadeningCoefficients,
    initial_state: &DensityMatrix3,
    z: f64,
) -> Result<[C64; 2], IstError> {
    let p = diagonal_populations(initial_state)?;
    Ok(evolve_norming_log(init, coeffs, &p, z).to_complex())
}

/// An n-soliton solution with its Doppler-averaged coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonSolution {
    pub params: Vec<SpectralParameter>,
    pub inits: Vec<NormingConstantInit>,
    pub coefficients: Vec<BroadeningCoefficients>,
    pub populations: [f64; 3],
    alphas: Vec<C64>,
}

impl SolitonSolution {
    /// Medium initially in |1⟩ with the given Doppler distribution and κ₀.
    pub fn new(
        params: Vec<SpectralParameter>,
        inits: Vec<NormingConstantInit>,
        doppler: &DopplerSpec,
        kappa0: f64,
    ) -> Result<Self, IstError> {
        let coefficients = params
            .iter()
            .map(|p| broadening_coefficients(p, doppler, kappa0))
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_coefficients(params, inits, coefficients, &DensityMatrix3::ground())
    }

    pub fn with_coefficients(
        params: Vec<SpectralParameter>,
        inits: Vec<NormingConstantInit>,
        coefficients: Vec<BroadeningCoefficients>,
        initial_state: &DensityMatrix3,
    ) -> Result<Self, IstError> {
        let n = params.len();
        if n == 0 || n > MAX_DIM {
            return Err(IstError::UnsupportedOrder(n));
        }
        if inits.len() != n || coefficients.len() != n {
            return Err(IstError::LengthMismatch {
                params: n,
                inits: inits.len(),
            });
        }
        for i in 0..n {
            for j in i + 1..n {
                if params[i].lambda() == params[j].lambda() {
                    return Err(IstError::DegenerateSpectralParameters(i, j));
                }
            }
        }
        let populations = diagonal_populations(initial_state)?;
        let lambdas: Vec<C64> = params.iter().map(|p| p.lambda()).collect();
        let alphas = (0..n)
            .map(|i| {
                let num: C64 = lambdas.iter().map(|l| l.conj() - lambdas[i]).product();
                let den: C64 = lambdas
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, l)| l - lambdas[i])
                    .product();
                num / (2.0 * den)
            })
            .collect();
        Ok(Self {
            params,
            inits,
            coefficients,
            populations,
            alphas,
        })
    }

    pub fn order(&self) -> usize {
        self.params.len()
    }

    /// αᵢ = Π_j(λ_j* − λᵢ) / (2 Π_{j≠i}(λ_j − λᵢ)).
    pub fn alphas(&self) -> &[C64] {
        &self.alphas
    }

    pub fn norming(&self, j: usize, z: f64) -> NormingVector {
        evolve_norming_log(&self.inits[j], &self.coefficients[j], &self.populations, z)
    }

    /// (Ω_s, Ω_c) at (Z, T).
    ///
    /// With g_j = β^(j) e^{iλ_j T} = s_j ĝ_j (‖ĝ_j‖ = 1) and d_j = max(1, s_j)
    /// the kernel K_ij = 2(α_i*α_j + g_j·g_i*)/(λ_i − λ_j*) factors as D K̃ D,
    /// D = diag(d). Every entry of K̃, of D⁻¹α* and of s_j/d_j is bounded, so
    /// Ω = −4 Σ_j (K⁻¹α*)_j g_j is evaluated without overflow.
    pub fn reconstruct_fields(&self, z: f64, t: f64) -> Result<(C64, C64), IstError> {
        let n = self.order();
        let mut log_s = [0.0; MAX_DIM];
        let mut log_d = [0.0; MAX_DIM];
        let mut g_hat = [[C64::new(0.0, 0.0); 2]; MAX_DIM];
        for j in 0..n {
            let p = &self.params[j];
            let nv = self.norming(j, z);
            log_s[j] = nv.log_norm() + t / p.tau;
            log_d[j] = log_s[j].max(0.0);
            let rot = C64::from_polar(1.0, p.xi * t);
            let u = nv.unit();
            g_hat[j] = [u[0] * rot, u[1] * rot];
        }
        let lambdas: Vec<C64> = self.params.iter().map(|p| p.lambda()).collect();
        let mut k = SmallMatrix::zeros(n);
        let mut rhs = [C64::new(0.0, 0.0); MAX_DIM];
        for i in 0..n {
            rhs[i] = self.alphas[i].conj() * (-log_d[i]).exp();
            for j in 0..n {
                let alpha_term = self.alphas[i].conj() * self.alphas[j] * (-log_d[i] - log_d[j]).exp();
                let overlap = g_hat[j][0] * g_hat[i][0].conj() + g_hat[j][1] * g_hat[i][1].conj();
                let g_term = overlap * ((log_s[i] - log_d[i]) + (log_s[j] - log_d[j])).exp();
                k.set(i, j, 2.0 * (alpha_term + g_term) / (lambdas[i] - lambdas[j].conj()));
            }
        }
        let lu = k.lu().ok_or(IstError::SingularKernel(f64::INFINITY))?;
        if n > 1 {
            let cond = k.norm1() * lu.inverse().norm1();
            if !(cond <= MAX_CONDITION) {
                return Err(IstError::SingularKernel(cond));
            }
        }
        let x = lu.solve(&rhs[..n]);
        let mut omega = [C64::new(0.0, 0.0); 2];
        for j in 0..n {
            let scale = (log_s[j] - log_d[j]).exp();
            for c in 0..2 {
                omega[c] += x[j] * scale * g_hat[j][c];
            }
        }
        Ok((-4.0 * omega[0], -4.0 * omega[1]))
    }

    /// Dressing factor l_j(λ) = I + (λ_j − λ_j*)/(λ − λ_j) · v v†/‖v‖².
    fn dressing(lambda_j: C64, v: &[C64; 2], at: C64) -> Mat2 {
        let norm2 = v[0].norm_sqr() + v[1].norm_sqr();
        let f = (lambda_j - lambda_j.conj()) / (at - lambda_j) / norm2;
        let mut m = linalg::identity2();
        for a in 0..2 {
            for b in 0..2 {
                m[a][b] += f * v[a] * v[b].conj();
            }
        }
        m
    }

    /// Scattering block ā(λ) = l₁(λ)⋯l_n(λ) at station `z`.
    pub fn scattering_matrix(&self, z: f64, at: C64) -> Mat2 {
        let n = self.order();
        let lambdas: Vec<C64> = self.params.iter().map(|p| p.lambda()).collect();
        let mut vs: Vec<[C64; 2]> = Vec::with_capacity(n);
        for i in 0..n {
            let beta = self.norming(i, z).unit();
            let v = if i == 0 {
                beta
            } else {
                let mut m = linalg::identity2();
                for (j, v) in vs.iter().enumerate() {
                    m = linalg::mul2(&m, &Self::dressing(lambdas[j], v, lambdas[i]));
                }
                linalg::solve2(&m, &beta)
            };
            vs.push(v);
        }
        let mut a = linalg::identity2();
        for (j, v) in vs.iter().enumerate() {
            a = linalg::mul2(&a, &Self::dressing(lambdas[j], v, at));
        }
        a
    }

    /// Density matrix after all pulses have passed, for atoms of detuning Δ.
    pub fn final_density(&self, z: f64, delta: f64) -> DensityMatrix3 {
        let a = self.scattering_matrix(z, C64::new(delta, 0.0));
        let [p1, p2, p3] = self.populations;
        let rho0: Mat2 = [
            [C64::new(p1, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(p2, 0.0)],
        ];
        let g = linalg::mul2(&linalg::adjoint2(&a), &linalg::mul2(&rho0, &a));
        DensityMatrix3::from_blocks(g, p3)
    }
}

fn sech(x: f64) -> f64 {
    if x.abs() > 700.0 {
        0.0
    } else {
        1.0 / x.cosh()
    }
}

/// Closed-form one-soliton fields for a medium initially in |1⟩.
pub fn one_soliton_fields(
    lambda: &SpectralParameter,
    init: &NormingConstantInit,
    coeffs: &BroadeningCoefficients,
    z: f64,
    t: f64,
) -> (C64, C64) {
    let tau = lambda.tau;
    let (k, d) = (coeffs.kappa1, coeffs.delta1);
    let (a1, a2) = (init.c1.norm(), init.c2.norm());
    let [s1, s2] = init.sigma(tau);
    let omega_s = if a1 == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        let den = 2.0 * a1 * (t / tau - k * z + s1).cosh()
            + if a2 == 0.0 { 0.0 } else { a2 * (t / tau + k * z + s2).exp() };
        4.0 * init.c1 / tau * C64::from_polar(1.0, lambda.xi * t - d * z) / den
    };
    let omega_c = if a2 == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        let den = 2.0 * a2 * (t / tau + s2).cosh()
            + if a1 == 0.0 { 0.0 } else { a1 * (t / tau - 2.0 * k * z + s1).exp() };
        4.0 * init.c2 / tau * C64::from_polar(1.0, lambda.xi * t) / den
    };
    (omega_s, omega_c)
}

/// Matched storage pair of the boundary Z = 0 in the |c₁| ≫ |c₂| limit:
/// both fields ∝ (θ/πτ) e^{iξT} sech(T/τ + σ₁).
pub fn storage_pair_fields(
    lambda: &SpectralParameter,
    theta_s: f64,
    theta_c: f64,
    sigma1: f64,
    t: f64,
) -> (C64, C64) {
    let env = C64::from_polar(sech(t / lambda.tau + sigma1) / (PI * lambda.tau), lambda.xi * t);
    (env * theta_s, env * theta_c)
}

/// Free 2π control pulse of a norming constant (0, d).
pub fn control_pulse(lambda: &SpectralParameter, d: C64, t: f64) -> C64 {
    let zeta = (d.norm() * lambda.tau).ln();
    d / d.norm() * C64::from_polar(2.0 / lambda.tau * sech(t / lambda.tau + zeta), lambda.xi * t)
}

/// θ = ∫|Ω| dT by the trapezoid rule on uniform samples.
pub fn pulse_area_samples(samples: &[C64], dt: f64) -> Result<f64, IstError> {
    if let (Some(first), Some(last)) = (samples.first(), samples.last()) {
        let edge = first.norm().max(last.norm());
        if edge >= EDGE_THRESHOLD {
            return Err(IstError::WindowTooSmall(edge));
        }
    }
    let mags: Vec<f64> = samples.iter().map(|z| z.norm()).collect();
    Ok(crate::quadrature::trapezoid(&mags, dt))
}

/// θ of `field` over `[t_min, t_max]` sampled at `n` points.
pub fn pulse_area<F: Fn(f64) -> C64>(field: F, t_min: f64, t_max: f64, n: usize) -> Result<f64, IstError> {
    let dt = (t_max - t_min) / (n - 1) as f64;
    let samples: Vec<C64> = (0..n).map(|i| field(t_min + dt * i as f64)).collect();
    pulse_area_samples(&samples, dt)
}

/// x₁ = ln(θ_s/θ_c)/κ.
pub fn imprint_location(theta_s: f64, theta_c: f64, kappa1: f64) -> Result<f64, IstError> {
    if !(theta_s > 0.0 && theta_c > 0.0) {
        return Err(IstError::NonPositiveArea(theta_s, theta_c));
    }
    Ok((theta_s / theta_c).ln() / kappa1)
}

/// True when the predicted imprint lies beyond the medium.
pub fn storage_outside_medium(location: f64, z_length: f64) -> bool {
    location > z_length
}

/// Phase-lag χ between two solitons.
pub fn phase_lag(first: &SpectralParameter, second: &SpectralParameter) -> Result<f64, IstError> {
    let (t1, t2) = (first.tau, second.tau);
    let dxi = (first.xi - second.xi) * t1 * t2;
    let num = (t1 + t2).powi(2) + dxi * dxi;
    let den = (t1 - t2).powi(2) + dxi * dxi;
    if den == 0.0 {
        return Err(IstError::InfinitePhaseLag);
    }
    Ok(0.5 * (num / den).ln())
}

/// κx₂ = σ₁₂ + χ.
pub fn displaced_imprint_location(sigma12: f64, chi: f64, kappa1: f64) -> f64 {
    (sigma12 + chi) / kappa1
}

/// Regime thresholds for [`second_order_boundary_fields`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticRegime {
    /// Minimum |c₁/c₂|.
    pub min_ratio: f64,
    /// Minimum σ₁ − ζ.
    pub min_separation: f64,
}

impl Default for AsymptoticRegime {
    fn default() -> Self {
        Self {
            min_ratio: 10.0,
            min_separation: 2.0,
        }
    }
}

/// Leading-order boundary (Z = 0) fields of the storage + retrieval
/// solution: a storage pair of duration τ₁ followed by a retrieval pair of
/// duration τ₂ with swapped amplitudes, valid for |c₁| ≫ |c₂| and σ₁ ≫ ζ.
/// `second` must be of the form (0, d).
pub fn second_order_boundary_fields(
    first: &SpectralParameter,
    second: &SpectralParameter,
    init1: &NormingConstantInit,
    init2: &NormingConstantInit,
    t: f64,
    regime: &AsymptoticRegime,
) -> Result<(C64, C64), IstError> {
    if init2.c1.norm() != 0.0 {
        return Err(IstError::AsymptoticRegimeViolated(
            "retrieval norming constant must have a vanishing first component".into(),
        ));
    }
    let ratio = init1.c1.norm() / init1.c2.norm();
    if !(ratio >= regime.min_ratio) {
        return Err(IstError::AsymptoticRegimeViolated(format!(
            "|c1/c2| = {ratio} < {}",
            regime.min_ratio
        )));
    }
    let sigma1 = init1.sigma(first.tau)[0];
    let zeta = (init2.c2.norm() * second.tau).ln();
    if !(sigma1 - zeta >= regime.min_separation) {
        return Err(IstError::AsymptoticRegimeViolated(format!(
            "sigma1 - zeta = {} < {}",
            sigma1 - zeta,
            regime.min_separation
        )));
    }
    let chi = phase_lag(first, second)?;
    let norm = init1.norm();
    let store = C64::from_polar(2.0 / first.tau * sech(t / first.tau + sigma1), first.xi * t) / norm;
    let retrieve = C64::from_polar(2.0 / second.tau * sech(t / second.tau + zeta - chi), second.xi * t) / norm;
    Ok((
        init1.c1 * store + init1.c2 * retrieve,
        init1.c2 * store + init1.c1 * retrieve,
    ))
}

fn c12_phase(init: &NormingConstantInit) -> C64 {
    let p = init.c1 * init.c2.conj();
    if p.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        p / p.norm()
    }
}

/// Imprint-shaped final density with sech argument `arg` and an extra
/// coherence phase.
fn imprint_density(
    lambda: &SpectralParameter,
    init: &NormingConstantInit,
    coeffs: &BroadeningCoefficients,
    z: f64,
    delta: f64,
    arg: f64,
    extra_phase: f64,
) -> DensityMatrix3 {
    let u = lambda.tau * (delta - lambda.xi);
    let lor = 1.0 / (u * u + 1.0);
    let (th, sh) = if arg.is_infinite() {
        (arg.signum(), 0.0)
    } else {
        (arg.tanh(), sech(arg))
    };
    let mut rho = DensityMatrix3::zeros();
    rho[(0, 0)] = (1.0 + lor * (th * th - 1.0)).into();
    rho[(1, 1)] = (lor * sh * sh).into();
    let phase = c12_phase(init) * C64::from_polar(1.0, extra_phase - coeffs.delta1 * z);
    let r12 = -phase * lor * C64::new(th, u) * sh;
    rho[(0, 1)] = r12;
    rho[(1, 0)] = r12.conj();
    rho
}

/// Closed-form post-pulse density of the one-soliton solution (medium in |1⟩).
pub fn one_soliton_final_density(
    lambda: &SpectralParameter,
    init: &NormingConstantInit,
    coeffs: &BroadeningCoefficients,
    z: f64,
    delta: f64,
) -> DensityMatrix3 {
    let arg = coeffs.kappa1 * z - init.sigma12();
    imprint_density(lambda, init, coeffs, z, delta, arg, 0.0)
}

/// Extra coherence phase φ acquired by the imprint when the retrieval
/// soliton passes. Exactly π for purely imaginary spectral parameters;
/// otherwise measured from the general dressing formula.
pub fn retrieval_phase(
    first: &SpectralParameter,
    second: &SpectralParameter,
    init1: &NormingConstantInit,
    init2: &NormingConstantInit,
    coeffs: &BroadeningCoefficients,
) -> Result<f64, IstError> {
    if first.xi == 0.0 && second.xi == 0.0 {
        return Ok(PI);
    }
    let sol = SolitonSolution::with_coefficients(
        vec![*first, *second],
        vec![*init1, *init2],
        vec![*coeffs, BroadeningCoefficients::resonant(1.0)],
        &DensityMatrix3::ground(),
    )?;
    let chi = phase_lag(first, second)?;
    // One unit past the imprint centre, at the soliton's own detuning, so
    // that tanh·sech is well away from zero.
    let z = (init1.sigma12() + chi + 1.0) / coeffs.kappa1;
    let general = sol.final_density(z, first.xi)[(0, 1)];
    let reference = imprint_density(first, init1, coeffs, z, first.xi, 1.0, 0.0)[(0, 1)];
    Ok((general / reference).arg())
}

/// Closed-form post-pulse density after a retrieval soliton (0, d) of
/// parameter `second` has crossed the imprint left by `first`.
pub fn final_density_after_retrieval(
    first: &SpectralParameter,
    second: &SpectralParameter,
    init1: &NormingConstantInit,
    init2: &NormingConstantInit,
    coeffs: &BroadeningCoefficients,
    z: f64,
    delta: f64,
) -> Result<DensityMatrix3, IstError> {
    let chi = phase_lag(first, second)?;
    let phi = retrieval_phase(first, second, init1, init2, coeffs)?;
    let arg = coeffs.kappa1 * z - init1.sigma12() - chi;
    Ok(imprint_density(first, init1, coeffs, z, delta, arg, phi))
}

/// v_g/c = 1/(1 + κcτ).
pub fn group_velocity(kappa_c_tau: f64) -> f64 {
    1.0 / (1.0 + kappa_c_tau)
}

/// Delay per unit length of the signal peak in the travelling frame,
/// dT/dZ = κτ (the c → ∞ form of 1/v_g − 1/c).
pub fn travelling_frame_delay(kappa1: f64, tau: f64) -> f64 {
    kappa1 * tau
}
