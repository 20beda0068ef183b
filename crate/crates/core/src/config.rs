//! TOML configuration: the raw file schema and its validation into solver
//! inputs. The key set is documented in `docs/CONFIG.md`.
//!
//! All physical inputs use the dimensionless groups of the model: τ/T₂*
//! and τΔ̄ for the Doppler distribution, τΓ for decay, κ₀Z for lengths and
//! θ/π for pulse areas.

use crate::analysis::{RetrievalPlan, ScanBase, Variant};
use crate::cmb::{self, Boundary, SolverSettings};
use crate::ist::{AsymptoticRegime, SolitonSolution};
use crate::state::DensityMatrix3;
use crate::types::{DopplerSpec, MediumConfig, NormingConstantInit, ParamError, SpectralParameter};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// A validation failure tied to the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    /// Dotted key path, e.g. `soliton[1].tau`.
    pub field: String,
    pub error: ParamError,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<FieldError>),
}

fn list(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ConfigError {
    /// Field errors, empty for parse failures.
    pub fn fields(&self) -> &[FieldError] {
        match self {
            Self::Invalid(v) => v,
            Self::Parse(_) => &[],
        }
    }
}

/// One `[[soliton]]` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonEntry {
    #[serde(default)]
    pub xi: f64,
    pub tau: f64,
    /// Signal component of the norming constant as `[re, im]`.
    pub c1: [f64; 2],
    /// Control component of the norming constant as `[re, im]`.
    pub c2: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DopplerSection {
    /// τ/T₂*; zero disables broadening.
    pub width: f64,
    /// τΔ̄.
    pub mean: f64,
    /// Quadrature nodes for the analytic coefficients.
    pub nodes: usize,
}

impl Default for DopplerSection {
    fn default() -> Self {
        Self {
            width: 0.0,
            mean: 0.0,
            nodes: DopplerSpec::DEFAULT_NODES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumSection {
    /// τΓ.
    pub gamma: f64,
    /// κ₀L.
    pub length: f64,
    /// Diagonal of the initial density matrix.
    pub populations: [f64; 3],
}

impl Default for MediumSection {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            length: 10.0,
            populations: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub dt: f64,
    pub dz: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub clamp: f64,
    pub ensemble_nodes: usize,
    pub field_stride: usize,
    pub snapshot_times: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            dt: s.dt,
            dz: s.dz,
            t_min: s.t_window.0,
            t_max: s.t_window.1,
            clamp: s.clamp_threshold,
            ensemble_nodes: s.ensemble_nodes,
            field_stride: s.field_stride,
            snapshot_times: s.snapshot_times,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Exact solution built from the `[[soliton]]` list.
    Solitons,
    /// Matched storage pair with two-pulse area 2π.
    StoragePair,
    /// Storage pair followed by a free 2π control of duration `tau2`.
    StorageRetrieval,
    /// Leading-order storage + retrieval pairs from two solitons.
    AsymptoticPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySection {
    pub kind: BoundaryKind,
    /// θ_c/π of the storage pair.
    pub theta_c: f64,
    /// Centre of the storage pair.
    pub t_center: f64,
    /// Duration of the retrieval control.
    pub tau2: f64,
    /// Centre of the retrieval control.
    pub control_center: f64,
}

impl Default for BoundarySection {
    fn default() -> Self {
        Self {
            kind: BoundaryKind::Solitons,
            theta_c: 0.05,
            t_center: 0.0,
            tau2: 1.0,
            control_center: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    /// Imprint location against θ_c/π.
    Storage,
    /// Imprint displacement against τ₂.
    Displacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub kind: ScanKind,
    /// θ_c/π values or τ₂ values depending on `kind`.
    pub values: Vec<f64>,
    /// Variants are the Cartesian product gammas × widths × means.
    pub gammas: Vec<f64>,
    pub widths: Vec<f64>,
    pub means: Vec<f64>,
    /// Golden-section tolerance for the displacement peak; absent = no refinement.
    pub refine_tol: Option<f64>,
    /// κ₀x₁ of the storage stage in displacement scans.
    pub storage_location: f64,
    /// Extra medium length beyond the predicted imprint.
    pub margin: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            kind: ScanKind::Storage,
            values: Vec::new(),
            gammas: vec![0.0],
            widths: vec![0.0],
            means: vec![0.0],
            refine_tol: None,
            storage_location: RetrievalPlan::default().storage_location,
            margin: 4.0,
        }
    }
}

/// The configuration file as written on disk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, rename = "soliton")]
    pub solitons: Vec<SolitonEntry>,
    #[serde(default)]
    pub doppler: DopplerSection,
    #[serde(default)]
    pub medium: MediumSection,
    #[serde(default)]
    pub grid: GridSection,
    pub boundary: Option<BoundarySection>,
    pub scan: Option<ScanSection>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }
}

/// Checked configuration ready for the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    pub file: ConfigFile,
    pub solitons: Vec<(SpectralParameter, NormingConstantInit)>,
    pub doppler: DopplerSpec,
    pub medium: MediumConfig,
    pub settings: SolverSettings,
}

struct Collector(Vec<FieldError>);

impl Collector {
    fn check<T>(&mut self, field: impl Into<String>, r: Result<T, ParamError>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(error) => {
                self.0.push(FieldError {
                    field: field.into(),
                    error,
                });
                None
            }
        }
    }

    fn grid(&mut self, field: &str, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(FieldError {
                field: field.into(),
                error: ParamError::BadGrid(msg()),
            });
        }
    }
}

fn finite(v: f64) -> Result<f64, ParamError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ParamError::NotFinite(v))
    }
}

fn positive_gamma(g: f64) -> Result<f64, ParamError> {
    if g >= 0.0 && g.is_finite() {
        Ok(g)
    } else {
        Err(ParamError::NegativeGamma(g))
    }
}

/// Check every key and collect all failures rather than stopping at the first.
pub fn validate_config(file: &ConfigFile) -> Result<ValidatedConfig, ConfigError> {
    let mut c = Collector(Vec::new());

    let mut solitons = Vec::new();
    for (i, s) in file.solitons.iter().enumerate() {
        let p = c.check(format!("soliton[{i}].tau"), SpectralParameter::new(s.xi, s.tau));
        let n = c.check(
            format!("soliton[{i}].c1"),
            NormingConstantInit::new(C64::new(s.c1[0], s.c1[1]), C64::new(s.c2[0], s.c2[1])),
        );
        if let (Some(p), Some(n)) = (p, n) {
            solitons.push((p, n));
        }
    }

    let d = &file.doppler;
    let doppler = c
        .check("doppler.width", DopplerSpec::from_width(d.width, d.mean))
        .map(|s| s.with_nodes(d.nodes));
    c.grid("doppler.nodes", d.nodes > 0, || "at least one quadrature node".into());

    let m = &file.medium;
    c.check("medium.gamma", positive_gamma(m.gamma));
    let p = m.populations;
    let medium = c.check(
        "medium.populations",
        p.iter().try_for_each(|v| finite(*v).map(|_| ())).and_then(|_| {
            MediumConfig::new(m.gamma.max(0.0), 1.0, DensityMatrix3::diag(p[0], p[1], p[2]))
        }),
    );
    c.grid("medium.length", m.length > 0.0 && m.length.is_finite(), || {
        format!("medium length must be positive, got {}", m.length)
    });

    let g = &file.grid;
    c.grid("grid.dt", g.dt > 0.0 && g.dt.is_finite(), || format!("dt must be positive, got {}", g.dt));
    c.grid("grid.dz", g.dz > 0.0 && g.dz.is_finite(), || format!("dz must be positive, got {}", g.dz));
    c.grid("grid.t_max", g.t_max > g.t_min && g.t_min.is_finite() && g.t_max.is_finite(), || {
        format!("empty T window [{}, {}]", g.t_min, g.t_max)
    });
    c.grid("grid.clamp", g.clamp >= 0.0 && g.clamp.is_finite(), || {
        format!("clamp threshold must be non-negative, got {}", g.clamp)
    });
    c.grid("grid.ensemble_nodes", g.ensemble_nodes > 0, || "at least one node".into());
    c.grid("grid.field_stride", g.field_stride > 0, || "stride must be at least 1".into());
    for (i, t) in g.snapshot_times.iter().enumerate() {
        c.check(format!("grid.snapshot_times[{i}]"), finite(*t));
    }

    if let Some(b) = &file.boundary {
        for (key, v) in [
            ("boundary.theta_c", b.theta_c),
            ("boundary.t_center", b.t_center),
            ("boundary.control_center", b.control_center),
        ] {
            c.check(key, finite(v));
        }
        if matches!(b.kind, BoundaryKind::StoragePair | BoundaryKind::StorageRetrieval) {
            c.grid("boundary.theta_c", b.theta_c > 0.0 && b.theta_c < 2.0, || {
                format!("theta_c/pi must lie in (0, 2), got {}", b.theta_c)
            });
        }
        if b.kind == BoundaryKind::StorageRetrieval {
            c.check("boundary.tau2", SpectralParameter::new(0.0, b.tau2));
        }
        let need = match b.kind {
            BoundaryKind::Solitons => 1,
            BoundaryKind::AsymptoticPairs => 2,
            _ => 0,
        };
        c.grid("soliton", file.solitons.len() >= need && file.solitons.len() <= crate::linalg::MAX_DIM, || {
            format!("boundary kind needs {need}..=4 solitons, got {}", file.solitons.len())
        });
    }

    if let Some(s) = &file.scan {
        c.grid("scan.values", !s.values.is_empty(), || "scan range is empty".into());
        for (i, v) in s.values.iter().enumerate() {
            let ok = v.is_finite() && *v > 0.0 && (s.kind == ScanKind::Displacement || *v < 2.0);
            c.grid(&format!("scan.values[{i}]"), ok, || format!("bad scan value {v}"));
        }
        for (key, list) in [("scan.gammas", &s.gammas), ("scan.widths", &s.widths), ("scan.means", &s.means)] {
            c.grid(key, !list.is_empty(), || "list is empty".into());
        }
        for (i, g) in s.gammas.iter().enumerate() {
            c.check(format!("scan.gammas[{i}]"), positive_gamma(*g));
        }
        for (i, w) in s.widths.iter().enumerate() {
            c.check(format!("scan.widths[{i}]"), DopplerSpec::from_width(*w, 0.0));
        }
        for (i, m) in s.means.iter().enumerate() {
            c.check(format!("scan.means[{i}]"), finite(*m));
        }
        if let Some(t) = s.refine_tol {
            c.grid("scan.refine_tol", t > 0.0 && t.is_finite(), || format!("tolerance must be positive, got {t}"));
        }
        c.grid("scan.storage_location", s.storage_location > 0.0 && s.storage_location.is_finite(), || {
            "storage location must be positive".into()
        });
        c.grid("scan.margin", s.margin >= 0.0 && s.margin.is_finite(), || "margin must be non-negative".into());
    }

    if !c.0.is_empty() {
        return Err(ConfigError::Invalid(c.0));
    }
    let medium = medium.expect("checked above");
    Ok(ValidatedConfig {
        file: file.clone(),
        solitons,
        doppler: doppler.expect("checked above"),
        medium: MediumConfig {
            gamma: m.gamma,
            z_length: m.length,
            ..medium
        },
        settings: SolverSettings {
            dt: g.dt,
            dz: g.dz,
            clamp_threshold: g.clamp,
            t_window: (g.t_min, g.t_max),
            ensemble_nodes: g.ensemble_nodes,
            snapshot_times: g.snapshot_times.clone(),
            field_stride: g.field_stride,
        },
    })
}

/// Parse and validate in one step.
pub fn load_config(text: &str) -> Result<ValidatedConfig, ConfigError> {
    validate_config(&ConfigFile::parse(text)?)
}

impl ValidatedConfig {
    pub fn params(&self) -> Vec<SpectralParameter> {
        self.solitons.iter().map(|s| s.0).collect()
    }

    pub fn inits(&self) -> Vec<NormingConstantInit> {
        self.solitons.iter().map(|s| s.1).collect()
    }

    /// Exact solution for the configured solitons, medium and broadening.
    pub fn soliton_solution(&self) -> Result<SolitonSolution, crate::ist::IstError> {
        let coefficients = self
            .params()
            .iter()
            .map(|p| crate::doppler::broadening_coefficients(p, &self.doppler, self.medium.kappa0))
            .collect::<Result<Vec<_>, _>>()?;
        SolitonSolution::with_coefficients(self.params(), self.inits(), coefficients, &self.medium.initial_state)
    }

    /// Boundary fields for the solver; `None` without a `[boundary]` table.
    pub fn boundary(&self) -> Result<Option<Boundary>, cmb::CmbError> {
        let Some(b) = &self.file.boundary else {
            return Ok(None);
        };
        let lambda = self.solitons.first().map(|s| s.0).unwrap_or_else(SpectralParameter::unit);
        let (theta_s, theta_c) = cmb::matched_areas(b.theta_c * PI);
        Ok(Some(match b.kind {
            BoundaryKind::Solitons => Boundary::Solitons(self.soliton_solution()?),
            BoundaryKind::StoragePair => Boundary::StoragePair {
                lambda,
                theta_s,
                theta_c,
                t_center: b.t_center,
            },
            BoundaryKind::StorageRetrieval => Boundary::StorageRetrieval {
                lambda,
                theta_s,
                theta_c,
                t_center: b.t_center,
                control: SpectralParameter::new(0.0, b.tau2)?,
                control_center: b.control_center,
            },
            BoundaryKind::AsymptoticPairs => Boundary::AsymptoticPairs {
                first: self.solitons[0].0,
                second: self.solitons[1].0,
                init1: self.solitons[0].1,
                init2: self.solitons[1].1,
                regime: AsymptoticRegime::default(),
            },
        }))
    }

    /// Scan variants (Γ × width × mean), empty without a `[scan]` table.
    pub fn variants(&self) -> Vec<Variant> {
        let Some(s) = &self.file.scan else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for &gamma in &s.gammas {
            for &width in &s.widths {
                for &mean in &s.means {
                    out.push(Variant { gamma, width, mean });
                }
            }
        }
        out
    }

    pub fn scan_base(&self) -> ScanBase {
        let margin = self.file.scan.as_ref().map_or(ScanBase::default().margin, |s| s.margin);
        ScanBase {
            solver: self.settings.clone(),
            storage_center: self.file.boundary.map_or(0.0, |b| b.t_center),
            margin,
        }
    }

    pub fn retrieval_plan(&self) -> RetrievalPlan {
        let mut plan = RetrievalPlan::default();
        if let Some(s) = &self.file.scan {
            plan.storage_location = s.storage_location;
            plan.margin = s.margin;
        }
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[[soliton]]
tau = 1.0
c1 = [1.0, 0.0]
c2 = [0.05, 0.0]
"#;

    #[test]
    fn minimal_file_is_valid() {
        let cfg = load_config(EXAMPLE).unwrap();
        assert_eq!(cfg.solitons.len(), 1);
        assert!(cfg.doppler.is_delta());
        assert_eq!(cfg.medium.kappa0, 1.0);
        assert_eq!(cfg.settings, SolverSettings::default());
    }

    #[test]
    fn negative_tau_names_the_field() {
        let text = EXAMPLE.replace("tau = 1.0", "tau = -1.0");
        let err = load_config(&text).unwrap_err();
        assert_eq!(err.fields()[0].field, "soliton[0].tau");
        assert_eq!(err.fields()[0].error, ParamError::NonPositiveTau(-1.0));
    }

    #[test]
    fn zero_norming_constant_rejected() {
        let text = EXAMPLE.replace("[1.0, 0.0]", "[0.0, 0.0]").replace("[0.05, 0.0]", "[0.0, 0.0]");
        let err = load_config(&text).unwrap_err();
        assert_eq!(err.fields()[0].error, ParamError::ZeroNormingConstant);
    }

    #[test]
    fn collects_every_error() {
        let text = format!("{EXAMPLE}\n[medium]\ngamma = -0.1\n[grid]\ndt = 0.0\ndz = -1.0\n");
        let err = load_config(&text).unwrap_err();
        let fields: Vec<&str> = err.fields().iter().map(|e| e.field.as_str()).collect();
        assert!(fields.contains(&"medium.gamma"));
        assert!(fields.contains(&"grid.dt"));
        assert!(fields.contains(&"grid.dz"));
        assert!(err.fields().iter().any(|e| e.error == ParamError::NegativeGamma(-0.1)));
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        assert!(matches!(ConfigFile::parse("[medium]\ngama = 1.0\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn empty_scan_rejected() {
        let text = "[scan]\nkind = \"storage\"\nvalues = []\n";
        let err = load_config(text).unwrap_err();
        assert_eq!(err.fields()[0].field, "scan.values");
    }

    #[test]
    fn builds_boundaries() {
        let text = format!("{EXAMPLE}\n[boundary]\nkind = \"storage_retrieval\"\ntheta_c = 0.1\ntau2 = 0.5\n");
        let cfg = load_config(&text).unwrap();
        match cfg.boundary().unwrap().unwrap() {
            Boundary::StorageRetrieval { theta_s, theta_c, control, .. } => {
                assert!((theta_s.hypot(theta_c) - 2.0 * PI).abs() < 1e-12);
                assert_eq!(control.tau, 0.5);
            }
            other => panic!("unexpected boundary {other:?}"),
        }
    }
}
