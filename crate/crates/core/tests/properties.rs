use lambda_mb::analysis::coherence_survival;
use lambda_mb::cmb::{bloch_rhs, rk4_step, BlochState};
use lambda_mb::config::{validate_config, BoundaryKind, BoundarySection, ConfigFile, ScanKind, ScanSection, SolitonEntry};
use lambda_mb::doppler::broadening_coefficients;
use lambda_mb::dump::{read_grid, write_grid};
use lambda_mb::ist::{self, phase_lag, SolitonSolution};
use lambda_mb::state::{ANALYTIC_TOL, NUMERIC_TOL};
use lambda_mb::types::{Axis, DensityField, FieldGrid};
use lambda_mb::{DensityMatrix3, DopplerSpec, NormingConstantInit, SpectralParameter, C64};
use proptest::prelude::*;
use std::f64::consts::PI;

fn c64() -> impl Strategy<Value = C64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| C64::new(a, b))
}

/// A random pure state in the ground manifold plus excited admixture.
fn state() -> impl Strategy<Value = DensityMatrix3> {
    (c64(), c64(), c64()).prop_filter_map("zero vector", |(a, b, c)| {
        let n = (a.norm_sqr() + b.norm_sqr() + c.norm_sqr()).sqrt();
        if n < 1e-3 {
            return None;
        }
        let v = [a / n, b / n, c / n];
        let mut m = DensityMatrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = v[i] * v[j].conj();
            }
        }
        Some(m)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bloch_derivative_is_traceless_and_hermitian(rho in state(), s in c64(), c in c64(), d in -5.0..5.0f64, g in 0.0..1.0f64) {
        let dr = bloch_rhs(&rho, s, c, d, g);
        prop_assert!(dr.trace().abs() < 1e-12);
        prop_assert!(dr.hermiticity_error() < 1e-12);
    }

    #[test]
    fn rk4_step_keeps_density_valid(rho in state(), s in c64(), c in c64(), d in -3.0..3.0f64, g in 0.0..0.5f64) {
        let r = BlochState::from_matrix(&rho);
        let mut x = r;
        for _ in 0..50 {
            x = rk4_step(&x, (s, c), (s, c), (s, c), d, g, 0.01);
        }
        let m = x.to_matrix();
        prop_assert!((m.trace() - 1.0).abs() < NUMERIC_TOL);
        prop_assert!(m.validate(NUMERIC_TOL).is_ok(), "{:?}", m.validate(NUMERIC_TOL));
    }

    #[test]
    fn kappa_even_and_delta_odd_in_mean(w in 0.0..6.0f64, m in -3.0..3.0f64) {
        let lambda = SpectralParameter::unit();
        let p = broadening_coefficients(&lambda, &DopplerSpec::from_width(w, m).unwrap(), 1.0).unwrap();
        let q = broadening_coefficients(&lambda, &DopplerSpec::from_width(w, -m).unwrap(), 1.0).unwrap();
        prop_assert!((p.kappa1 - q.kappa1).abs() < 1e-9);
        prop_assert!((p.delta1 + q.delta1).abs() < 1e-9);
        prop_assert!(p.kappa1 > 0.0 && p.kappa1 <= 1.0 + 1e-12);
    }

    #[test]
    fn phase_lag_symmetric_and_positive(t1 in 0.2..3.0f64, t2 in 0.2..3.0f64, x1 in -2.0..2.0f64, x2 in -2.0..2.0f64) {
        prop_assume!((t1 - t2).abs() > 1e-3 || (x1 - x2).abs() > 1e-3);
        let a = SpectralParameter::new(x1, t1).unwrap();
        let b = SpectralParameter::new(x2, t2).unwrap();
        let chi = phase_lag(&a, &b).unwrap();
        prop_assert!(chi > 0.0);
        prop_assert!((chi - phase_lag(&b, &a).unwrap()).abs() < 1e-12 * chi.max(1.0));
    }

    #[test]
    fn single_soliton_carries_two_pi(z in 0.0..8.0f64, c2 in 0.01..1.0f64, w in 0.0..2.0f64) {
        let init = NormingConstantInit::real(1.0, c2).unwrap();
        let spec = DopplerSpec::from_width(w, 0.0).unwrap();
        let sol = SolitonSolution::new(vec![SpectralParameter::unit()], vec![init], &spec, 1.0).unwrap();
        let area = ist::pulse_area(
            |t| {
                let (s, c) = sol.reconstruct_fields(z, t).unwrap();
                C64::new(s.norm().hypot(c.norm()), 0.0)
            },
            -40.0,
            60.0,
            20_001,
        ).unwrap();
        prop_assert!((area / (2.0 * PI) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_soliton_final_density_is_physical(
        t2 in 0.3..2.5f64, xi2 in -1.0..1.0f64, c in c64(), d in c64(), z in 0.0..10.0f64, delta in -3.0..3.0f64,
    ) {
        prop_assume!(c.norm() > 1e-2 && d.norm() > 1e-2);
        prop_assume!((t2 - 1.0).abs() > 1e-2 || xi2.abs() > 1e-2);
        let params = vec![SpectralParameter::unit(), SpectralParameter::new(xi2, t2).unwrap()];
        let inits = vec![NormingConstantInit::new(C64::new(1.0, 0.0), c).unwrap(), NormingConstantInit::new(C64::new(0.0, 0.0), d).unwrap()];
        let sol = SolitonSolution::new(params, inits, &DopplerSpec::none(), 1.0).unwrap();
        let rho = sol.final_density(z, delta);
        prop_assert!(rho.validate(1e-10).is_ok(), "{:?}", rho.validate(1e-10));
        prop_assert!(rho[(2, 2)].norm() < ANALYTIC_TOL);
    }

    #[test]
    fn grid_dump_round_trips(nz in 2usize..5, nt in 2usize..7, nd in 1usize..4, seed in any::<u64>()) {
        let z = Axis::new(0.0, 0.3, nz).unwrap();
        let t = Axis::new(-2.0, 0.1, nt).unwrap();
        let k = seed as f64 * 1e-19;
        let g = FieldGrid::from_fn(z, t, |z, t| (C64::new(z + k, t), C64::new(t * k, -z)));
        let d = DensityField {
            z_axis: z,
            delta_nodes: (0..nd).map(|i| i as f64 - k).collect(),
            weights: vec![1.0 / nd as f64; nd],
            rho: (0..nz * nd).map(|i| { let p = i as f64 / (2 * nz * nd) as f64 + k; DensityMatrix3::diag(1.0 - p, p, 0.0) }).collect(),
        };
        let mut buf = Vec::new();
        write_grid(&mut buf, &g, Some(&d)).unwrap();
        let (g2, d2) = read_grid(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(g2, g);
        prop_assert_eq!(d2.unwrap(), d);
    }

    #[test]
    fn coherence_survival_of_unchanged_field_is_one(amp in 0.01..0.5f64, x0 in 1.0..4.0f64) {
        let z = Axis::new(0.0, 0.05, 120).unwrap();
        let rho = (0..z.len)
            .map(|k| {
                let p = amp / (z.at(k) - x0).cosh();
                let mut m = DensityMatrix3::diag(1.0 - p, p, 0.0);
                let r = C64::new((p * (1.0 - p)).sqrt(), 0.0);
                m[(0, 1)] = r;
                m[(1, 0)] = r;
                m
            })
            .collect();
        let f = DensityField { z_axis: z, delta_nodes: vec![0.0], weights: vec![1.0], rho };
        prop_assert!((coherence_survival(&f, &f).unwrap() - 1.0).abs() < 1e-12);
    }
}

fn config_file() -> impl Strategy<Value = ConfigFile> {
    let soliton = (-2.0..2.0f64, 0.1..3.0f64, c64(), c64()).prop_filter_map("zero", |(xi, tau, c1, c2)| {
        (c1.norm() + c2.norm() > 1e-3).then_some(SolitonEntry {
            xi,
            tau,
            c1: [c1.re, c1.im],
            c2: [c2.re, c2.im],
        })
    });
    (
        prop::collection::vec(soliton, 2..4),
        (0.0..4.0f64, -2.0..2.0f64, 1usize..128),
        (0.0..0.2f64, 0.5..20.0f64),
        (0.001..0.1f64, 0.001..0.1f64, -30.0..-5.0f64, 5.0..60.0f64, 0.0..1e-3f64),
        prop::option::of((0.01..1.9f64, 0.1..3.0f64, 0u8..4)),
        prop::option::of((prop::collection::vec(0.01..1.9f64, 1..5), prop::option::of(1e-4..1e-1f64))),
    )
        .prop_map(|(solitons, (w, m, nodes), (g, len), (dt, dz, t0, t1, clamp), b, s)| {
            let mut f = ConfigFile {
                solitons,
                ..ConfigFile::default()
            };
            f.doppler.width = w;
            f.doppler.mean = m;
            f.doppler.nodes = nodes;
            f.medium.gamma = g;
            f.medium.length = len;
            f.grid.dt = dt;
            f.grid.dz = dz;
            f.grid.t_min = t0;
            f.grid.t_max = t1;
            f.grid.clamp = clamp;
            f.boundary = b.map(|(theta, tau2, k)| BoundarySection {
                kind: [
                    BoundaryKind::Solitons,
                    BoundaryKind::StoragePair,
                    BoundaryKind::StorageRetrieval,
                    BoundaryKind::AsymptoticPairs,
                ][k as usize],
                theta_c: theta,
                tau2,
                ..BoundarySection::default()
            });
            f.scan = s.map(|(values, refine_tol)| ScanSection {
                kind: ScanKind::Storage,
                values,
                refine_tol,
                ..ScanSection::default()
            });
            f
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_round_trips_through_toml(file in config_file()) {
        let v = validate_config(&file).unwrap();
        let text = v.file.to_toml();
        let back = ConfigFile::parse(&text).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(validate_config(&back).unwrap(), v);
    }
}
