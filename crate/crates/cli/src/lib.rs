//! Command-line front end: argument parsing, subcommand dispatch and the
//! files each run writes.

use clap::{Args, Parser, Subcommand};
use lambda_mb::analysis::{analytic_density, scan_displacement, scan_storage_location, ScanResult};
use lambda_mb::cmb::{self, Boundary, Simulation, SolverSettings};
use lambda_mb::config::{validate_config, ConfigError, ConfigFile, ScanKind, ValidatedConfig};
use lambda_mb::doppler::coefficient_table;
use lambda_mb::dump;
use lambda_mb::ist::SolitonSolution;
use lambda_mb::types::{Axis, FieldGrid};
use lambda_mb::{DensityField, C64};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "LAMBDA_MB_OUT";

#[derive(Debug, Parser)]
#[command(name = "lambda-mb", version, about = "Pulse storage and retrieval in Doppler-broadened Lambda media")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = "lambda-mb-out")]
    pub out: PathBuf,
    /// Worker threads for scans (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Override the T step of the grid.
    #[arg(long, global = true)]
    pub grid_dt: Option<f64>,
    /// Override the Z step of the grid.
    #[arg(long, global = true)]
    pub grid_dz: Option<f64>,
    /// Override the field clamp threshold.
    #[arg(long, global = true)]
    pub clamp: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate κ/κ₀ and δ/κ₀ over widths τ/T₂* and mean detunings τΔ̄.
    Coeffs(CoeffsArgs),
    /// Evaluate the exact soliton solution on the grid.
    Analytic(AnalyticArgs),
    /// Integrate the Maxwell-Bloch equations.
    Simulate(SimulateArgs),
    /// Run a storage-location or displacement scan.
    Scan,
    /// Overlay analytic and numeric fields and report the differences.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CoeffsArgs {
    /// Comma-separated widths τ/T₂*.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0, 2.0, 4.0, 16.0])]
    pub widths: Vec<f64>,
    /// Comma-separated mean detunings τΔ̄.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = vec![0.0])]
    pub means: Vec<f64>,
    /// Initial quadrature nodes.
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    /// Single row without broadening at resonance.
    #[arg(long)]
    pub no_broadening: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyticArgs {
    /// Also write the density at this single detuning τΔ along Z.
    #[arg(long, allow_hyphen_values = true)]
    pub delta_slice: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Check the result against the exact solution (solitons boundary only).
    #[arg(long)]
    pub compare_analytic: bool,
    /// Relative L∞ tolerance of the analytic comparison.
    #[arg(long, default_value_t = 1e-2)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Fail with a validation error above this relative L∞ difference.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("validation failure: {0}")]
    Validation(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Io { .. } => 1,
            Self::Numerical(_) => 2,
            Self::Validation(_) => 3,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Parse(m) => Self::Usage(m),
            ConfigError::Invalid(_) => Self::Validation(e.to_string()),
        }
    }
}

/// Record of one successful run, written as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// FNV-1a 64 of the normalised configuration, hex.
    pub config_hash: String,
    pub subcommand: String,
    pub parameters: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
    pub settings: Option<SolverSettings>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Files written so far; removed again unless the run succeeds.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            committed: false,
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.files.push(path);
        Ok(())
    }

    fn grid(&mut self, name: &str, fields: &FieldGrid, density: Option<&DensityField>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        dump::write_grid(&mut buf, fields, density).map_err(numerical)?;
        self.write(name, &buf)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for f in &self.files {
                let _ = fs::remove_file(f);
            }
        }
    }
}

struct Run {
    outputs: Outputs,
    started: Instant,
    subcommand: &'static str,
    hash: String,
    parameters: serde_json::Value,
    settings: Option<SolverSettings>,
    warnings: Vec<String>,
    summary: serde_json::Value,
}

impl Run {
    fn new(global: &GlobalArgs, subcommand: &'static str, canonical: &str, parameters: serde_json::Value) -> Result<Self, CliError> {
        Ok(Self {
            outputs: Outputs::new(&global.out)?,
            started: Instant::now(),
            subcommand,
            hash: format!("{:016x}", fnv1a(canonical.as_bytes())),
            parameters,
            settings: None,
            warnings: Vec::new(),
            summary: serde_json::Value::Null,
        })
    }

    fn finish(mut self) -> Result<RunManifest, CliError> {
        let mut outputs = self.outputs.files.clone();
        let manifest_path = self.outputs.dir.join("manifest.json");
        outputs.push(manifest_path);
        let manifest = RunManifest {
            config_hash: self.hash.clone(),
            subcommand: self.subcommand.into(),
            parameters: self.parameters.clone(),
            outputs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            settings: self.settings.clone(),
            warnings: self.warnings.clone(),
            summary: self.summary.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        self.outputs.write("manifest.json", json.as_bytes())?;
        self.outputs.committed = true;
        Ok(manifest)
    }
}

/// Read, override and validate the configuration.
pub fn load(global: &GlobalArgs) -> Result<ValidatedConfig, CliError> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required for this subcommand".into()))?;
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let mut file = ConfigFile::parse(&text)?;
    if let Some(dt) = global.grid_dt {
        file.grid.dt = dt;
    }
    if let Some(dz) = global.grid_dz {
        file.grid.dz = dz;
    }
    if let Some(c) = global.clamp {
        file.grid.clamp = c;
    }
    Ok(validate_config(&file)?)
}

fn parameters(cfg: &ValidatedConfig) -> serde_json::Value {
    serde_json::to_value(&cfg.file).expect("config serialises")
}

pub fn cmd_coeffs(global: &GlobalArgs, args: &CoeffsArgs) -> Result<RunManifest, CliError> {
    let (widths, means) = if args.no_broadening {
        (vec![0.0], vec![0.0])
    } else {
        (args.widths.clone(), args.means.clone())
    };
    if widths.is_empty() || means.is_empty() {
        return Err(CliError::Usage("widths and means must be non-empty".into()));
    }
    if let Some(w) = widths.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(CliError::Usage(format!("width must be finite and non-negative, got {w}")));
    }
    if let Some(m) = means.iter().find(|m| !m.is_finite()) {
        return Err(CliError::Usage(format!("mean detuning must be finite, got {m}")));
    }
    if args.nodes == 0 {
        return Err(CliError::Usage("--nodes must be positive".into()));
    }
    let params = serde_json::json!({ "widths": widths, "means": means, "nodes": args.nodes });
    let mut run = Run::new(global, "coeffs", &params.to_string(), params)?;
    let rows = coefficient_table(&widths, &means, args.nodes).map_err(numerical)?;
    let mut csv = String::from("width,mean,kappa,delta\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{:.15e},{:.15e}", r.width, r.mean, r.kappa, r.delta);
    }
    run.outputs.write("coeffs.csv", csv.as_bytes())?;
    run.finish()
}

fn z_axis(cfg: &ValidatedConfig) -> Result<Axis, CliError> {
    Axis::spanning(0.0, cfg.medium.z_length, cfg.settings.dz).map_err(|e| CliError::Validation(e.to_string()))
}

fn t_axis(cfg: &ValidatedConfig) -> Result<Axis, CliError> {
    cfg.settings.t_axis().map_err(|e| CliError::Validation(e.to_string()))
}

fn solution(cfg: &ValidatedConfig) -> Result<SolitonSolution, CliError> {
    if cfg.solitons.is_empty() {
        return Err(CliError::Usage("at least one [[soliton]] is required".into()));
    }
    cfg.soliton_solution().map_err(numerical)
}

/// Exact fields on the given axes; fails if any point cannot be evaluated.
fn analytic_fields(sol: &SolitonSolution, z: Axis, t: Axis) -> Result<FieldGrid, CliError> {
    let nan = C64::new(f64::NAN, f64::NAN);
    let grid = FieldGrid::from_fn(z, t, |z, t| sol.reconstruct_fields(z, t).unwrap_or((nan, nan)));
    if grid.omega_s.iter().chain(&grid.omega_c).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        let first = (0..z.len)
            .flat_map(|k| (0..t.len).map(move |i| (k, i)))
            .find(|&(k, i)| !grid.omega_s[grid.index(k, i)].re.is_finite() || !grid.omega_c[grid.index(k, i)].re.is_finite())
            .unwrap();
        let err = sol.reconstruct_fields(z.at(first.0), t.at(first.1)).err();
        return Err(CliError::Numerical(format!(
            "field reconstruction failed at z = {}, t = {}: {}",
            z.at(first.0),
            t.at(first.1),
            err.map_or_else(|| "non-finite value".into(), |e| e.to_string())
        )));
    }
    Ok(grid)
}

fn write_field_slices(out: &mut Outputs, prefix: &str, fields: &FieldGrid) -> Result<(), CliError> {
    out.write(&format!("{prefix}_z_start.csv"), dump::field_slice_at_z(fields, 0).as_bytes())?;
    out.write(
        &format!("{prefix}_z_end.csv"),
        dump::field_slice_at_z(fields, fields.z_axis.len - 1).as_bytes(),
    )
}

pub fn cmd_analytic(global: &GlobalArgs, args: &AnalyticArgs) -> Result<RunManifest, CliError> {
    let cfg = load(global)?;
    let sol = solution(&cfg)?;
    let mut run = Run::new(global, "analytic", &cfg.file.to_toml(), parameters(&cfg))?;
    let (z, t) = (z_axis(&cfg)?, t_axis(&cfg)?);
    let fields = analytic_fields(&sol, z, t)?;
    let density = analytic_density(&sol, z, &cfg.doppler, cfg.settings.ensemble_nodes);
    run.outputs.grid("analytic.bin", &fields, Some(&density))?;
    write_field_slices(&mut run.outputs, "analytic_fields", &fields)?;
    run.outputs.write("analytic_density.csv", dump::density_profile(&density).as_bytes())?;
    if let Some(delta) = args.delta_slice {
        if !delta.is_finite() {
            return Err(CliError::Usage(format!("--delta-slice must be finite, got {delta}")));
        }
        let mut csv = String::from("z,rho11,rho22,rho33,rho12_re,rho12_im\n");
        for k in 0..z.len {
            let r = sol.final_density(z.at(k), delta);
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                z.at(k),
                r[(0, 0)].re,
                r[(1, 1)].re,
                r[(2, 2)].re,
                r[(0, 1)].re,
                r[(0, 1)].im
            );
        }
        run.outputs.write("analytic_delta_slice.csv", csv.as_bytes())?;
    }
    run.summary = serde_json::json!({
        "coefficients": sol.coefficients,
        "z_points": z.len,
        "t_points": t.len,
    });
    run.finish()
}

fn boundary(cfg: &ValidatedConfig) -> Result<Boundary, CliError> {
    cfg.boundary()
        .map_err(numerical)?
        .ok_or_else(|| CliError::Usage("a [boundary] table is required".into()))
}

fn simulate(cfg: &ValidatedConfig, boundary: &Boundary) -> Result<Simulation, CliError> {
    cmb::simulate(&cfg.medium, &cfg.doppler, boundary, &cfg.settings).map_err(numerical)
}

/// L∞ and L² differences of two grids on identical axes, relative to the
/// peak of the reference.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridDelta {
    pub linf: f64,
    pub l2: f64,
    pub linf_relative: f64,
    pub reference_peak: f64,
}

pub fn grid_delta(numeric: &FieldGrid, reference: &FieldGrid) -> GridDelta {
    let mut linf: f64 = 0.0;
    let mut sq = 0.0;
    let mut peak: f64 = 0.0;
    for (a, b) in numeric
        .omega_s
        .iter()
        .chain(&numeric.omega_c)
        .zip(reference.omega_s.iter().chain(&reference.omega_c))
    {
        let d = (a - b).norm();
        linf = linf.max(d);
        sq += d * d;
        peak = peak.max(b.norm());
    }
    GridDelta {
        linf,
        l2: (sq * numeric.z_axis.step * numeric.t_axis.step).sqrt(),
        linf_relative: if peak > 0.0 { linf / peak } else { linf },
        reference_peak: peak,
    }
}

fn compare_with_analytic(cfg: &ValidatedConfig, sim: &Simulation) -> Result<(FieldGrid, GridDelta), CliError> {
    let sol = solution(cfg)?;
    let reference = analytic_fields(&sol, sim.fields.z_axis, sim.fields.t_axis)?;
    let delta = grid_delta(&sim.fields, &reference);
    Ok((reference, delta))
}

fn per_z_delta_csv(numeric: &FieldGrid, reference: &FieldGrid) -> String {
    let mut csv = String::from("z,signal_linf,control_linf\n");
    for k in 0..numeric.z_axis.len {
        let d = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let _ = writeln!(
            csv,
            "{},{},{}",
            numeric.z_axis.at(k),
            d(numeric.signal_row(k), reference.signal_row(k)),
            d(numeric.control_row(k), reference.control_row(k))
        );
    }
    csv
}

fn record_simulation(run: &mut Run, sim: &Simulation) -> Result<(), CliError> {
    run.outputs.grid("simulation.bin", &sim.fields, Some(&sim.final_density))?;
    write_field_slices(&mut run.outputs, "fields", &sim.fields)?;
    run.outputs.write("final_density.csv", dump::density_profile(&sim.final_density).as_bytes())?;
    for (i, (_, field)) in sim.snapshots.iter().enumerate() {
        run.outputs.write(&format!("snapshot_{i}.csv"), dump::density_profile(field).as_bytes())?;
    }
    run.warnings = sim.warnings.iter().map(|w| w.to_string()).collect();
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn cmd_simulate(global: &GlobalArgs, args: &SimulateArgs) -> Result<RunManifest, CliError> {
    let cfg = load(global)?;
    let boundary = boundary(&cfg)?;
    if args.compare_analytic && !matches!(boundary, Boundary::Solitons(_)) {
        return Err(CliError::Usage("--compare-analytic needs a solitons boundary".into()));
    }
    let mut run = Run::new(global, "simulate", &cfg.file.to_toml(), parameters(&cfg))?;
    run.settings = Some(cfg.settings.clone());
    let sim = simulate(&cfg, &boundary)?;
    record_simulation(&mut run, &sim)?;
    let mut summary = serde_json::json!({ "diagnostics": sim.diagnostics });
    if args.compare_analytic {
        let (_, delta) = compare_with_analytic(&cfg, &sim)?;
        summary["analytic_comparison"] = serde_json::to_value(delta).unwrap();
        if !(delta.linf_relative <= args.tolerance) {
            return Err(CliError::Validation(format!(
                "numeric fields differ from the exact solution by {:.3e} (relative), tolerance {:.3e}",
                delta.linf_relative, args.tolerance
            )));
        }
    }
    run.summary = summary;
    run.finish()
}

pub fn cmd_compare(global: &GlobalArgs, args: &CompareArgs) -> Result<RunManifest, CliError> {
    let cfg = load(global)?;
    let sol = solution(&cfg)?;
    let mut run = Run::new(global, "compare", &cfg.file.to_toml(), parameters(&cfg))?;
    run.settings = Some(cfg.settings.clone());
    let sim = simulate(&cfg, &Boundary::Solitons(sol))?;
    let (reference, delta) = compare_with_analytic(&cfg, &sim)?;
    run.outputs.grid("numeric.bin", &sim.fields, Some(&sim.final_density))?;
    run.outputs.grid("analytic.bin", &reference, None)?;
    run.outputs.write("compare.csv", per_z_delta_csv(&sim.fields, &reference).as_bytes())?;
    println!(
        "L_inf = {:.6e} ({:.3e} of peak {:.4}), L2 = {:.6e}",
        delta.linf, delta.linf_relative, delta.reference_peak, delta.l2
    );
    run.summary = serde_json::json!({ "delta": delta, "diagnostics": sim.diagnostics });
    if let Some(tol) = args.tolerance {
        if !(delta.linf_relative <= tol) {
            return Err(CliError::Validation(format!(
                "relative L_inf difference {:.3e} exceeds {tol:.3e}",
                delta.linf_relative
            )));
        }
    }
    run.finish()
}

fn scan_file_name(kind: ScanKind, i: usize, r: &ScanResult) -> String {
    let k = match kind {
        ScanKind::Storage => "storage",
        ScanKind::Displacement => "displacement",
    };
    let v = r.variant;
    format!("scan_{k}_{i:02}_g{}_w{}_m{}.csv", v.gamma, v.width, v.mean)
}

pub fn cmd_scan(global: &GlobalArgs) -> Result<RunManifest, CliError> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required for this subcommand".into()))?;
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    match ConfigFile::parse(&text)?.scan {
        None => return Err(CliError::Usage("a [scan] table is required".into())),
        Some(s) if s.values.is_empty() => return Err(CliError::Usage("scan range is empty".into())),
        Some(_) => {}
    }
    let cfg = load(global)?;
    let scan = cfg.file.scan.clone().expect("checked above");
    let variants = cfg.variants();
    let mut run = Run::new(global, "scan", &cfg.file.to_toml(), parameters(&cfg))?;
    run.settings = Some(cfg.settings.clone());
    let results = match scan.kind {
        ScanKind::Storage => {
            let thetas: Vec<f64> = scan.values.iter().map(|v| v * std::f64::consts::PI).collect();
            let mut r = scan_storage_location(&cfg.scan_base(), &thetas, &variants, global.jobs).map_err(numerical)?;
            for res in &mut r {
                res.parameter_name = "theta_c_over_pi".into();
                res.parameter = scan.values.clone();
            }
            r
        }
        ScanKind::Displacement => scan_displacement(
            &cfg.settings,
            &cfg.retrieval_plan(),
            &scan.values,
            &variants,
            scan.refine_tol,
            global.jobs,
        )
        .map_err(numerical)?,
    };
    let mut failures = 0;
    let mut peaks = Vec::new();
    for (i, r) in results.iter().enumerate() {
        for (j, e) in &r.failures {
            eprintln!("scan point {j} of variant {:?} failed: {e}", r.variant);
            failures += 1;
        }
        peaks.push(r.peak());
        run.outputs.write(&scan_file_name(scan.kind, i, r), r.to_csv().as_bytes())?;
    }
    run.summary = serde_json::json!({ "variants": variants, "failed_points": failures, "peaks": peaks });
    run.finish()
}

/// Run the parsed command.
pub fn run(cli: &Cli) -> Result<RunManifest, CliError> {
    match &cli.command {
        Command::Coeffs(a) => cmd_coeffs(&cli.global, a),
        Command::Analytic(a) => cmd_analytic(&cli.global, a),
        Command::Simulate(a) => cmd_simulate(&cli.global, a),
        Command::Scan => cmd_scan(&cli.global),
        Command::Compare(a) => cmd_compare(&cli.global, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Numerical(String::new()).exit_code(), 2);
        assert_eq!(CliError::Validation(String::new()).exit_code(), 3);
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["lambda-mb", "simulate", "--config", "x.toml", "--grid-dt", "0.01", "--compare-analytic"]).unwrap();
        assert_eq!(cli.global.grid_dt, Some(0.01));
        assert!(matches!(cli.command, Command::Simulate(SimulateArgs { compare_analytic: true, .. })));
    }
}
