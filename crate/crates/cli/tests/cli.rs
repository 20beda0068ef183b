use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lambda-mb"));
    c.env_remove("LAMBDA_MB_OUT");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn assert_manifest_complete(out: &Path) {
    let m = manifest(out);
    for f in m["outputs"].as_array().unwrap() {
        let p = PathBuf::from(f.as_str().unwrap());
        assert!(fs::metadata(&p).map(|m| m.len() > 0).unwrap_or(false), "{p:?} missing or empty");
    }
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 16);
}

const ONE_SOLITON: &str = r#"
[[soliton]]
tau = 1.0
c1 = [1.0, 0.0]
c2 = [0.05, 0.0]

[medium]
length = 2.0

[grid]
dt = 0.05
dz = 0.05

[boundary]
kind = "solitons"
"#;

#[test]
fn coeffs_zero_detuning_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["coeffs", "--widths", "0,1,2,4,16", "--means", "0"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("coeffs.csv"));
    assert_eq!(header, ["width", "mean", "kappa", "delta"]);
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[1][2] < w[0][2]));
    assert!(rows.iter().all(|r| r[3].abs() < 1e-12));
    assert_manifest_complete(dir.path());
}

#[test]
fn coeffs_no_broadening_is_unit() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["coeffs", "--no-broadening"], dir.path()).status.success());
    let (_, rows) = read_csv(&dir.path().join("coeffs.csv"));
    assert_eq!(rows, vec![vec![0.0, 0.0, 1.0, 0.0]]);
}

#[test]
fn coeffs_delta_antisymmetric_in_mean() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["coeffs", "--widths", "0.5,2", "--means", "-1.5,-0.4,0.4,1.5"], dir.path());
    assert!(o.status.success());
    let (_, rows) = read_csv(&dir.path().join("coeffs.csv"));
    for block in rows.chunks(4) {
        for i in 0..2 {
            let (a, b) = (&block[i], &block[3 - i]);
            assert!((a[2] - b[2]).abs() < 1e-10);
            assert!((a[3] + b[3]).abs() < 1e-10);
        }
    }
}

#[test]
fn output_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(run(&["coeffs", "--means", "-0.6,1.2"], d.path()).status.success());
    }
    assert_eq!(
        fs::read(a.path().join("coeffs.csv")).unwrap(),
        fs::read(b.path().join("coeffs.csv")).unwrap()
    );
    assert_eq!(manifest(a.path())["config_hash"], manifest(b.path())["config_hash"]);
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["coeffs", "--no-broadening"]).env("LAMBDA_MB_OUT", dir.path()).output().unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("coeffs.csv").exists());
}

#[test]
fn analytic_two_soliton_restores_imprint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("store_retrieve.toml");
    let o = run(&["analytic", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&dir.path().join("analytic_density.csv"));
    let peak = rows.iter().max_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
    // ln(1/0.05) + ln 3
    let expected = 20f64.ln() + 3f64.ln();
    assert!((peak[0] - expected).abs() < 0.05, "{}", peak[0]);
    // the signal leaves the medium in three lobes along Z: input, retrieved, none at the end
    let (_, end) = read_csv(&dir.path().join("analytic_fields_z_end.csv"));
    let signal_end = end.iter().map(|r| r[3]).fold(0.0, f64::max);
    let (_, start) = read_csv(&dir.path().join("analytic_fields_z_start.csv"));
    let signal_start = start.iter().map(|r| r[3]).fold(0.0, f64::max);
    assert!(signal_end < 0.1 * signal_start);
    assert_manifest_complete(dir.path());
}

#[test]
fn analytic_control_only_is_uniform_in_z() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &ONE_SOLITON.replace("c1 = [1.0, 0.0]", "c1 = [0.0, 0.0]").replace("c2 = [0.05, 0.0]", "c2 = [1.0, 0.0]"),
    );
    let out = dir.path().join("out");
    assert!(run(&["analytic", "--config", cfg.to_str().unwrap()], &out).status.success());
    let (_, a) = read_csv(&out.join("analytic_fields_z_start.csv"));
    let (_, b) = read_csv(&out.join("analytic_fields_z_end.csv"));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x[3], 0.0);
        assert!((x[6] - y[6]).abs() < 1e-12);
    }
    let peak = a.iter().map(|r| r[6]).fold(0.0, f64::max);
    assert!((peak - 2.0).abs() < 1e-3);
}

#[test]
fn analytic_detuned_slice_is_lorentzian_scaled() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &ONE_SOLITON.replace("length = 2.0", "length = 6.0"));
    let peak = |delta: &str| {
        let out = dir.path().join(format!("o{delta}"));
        let o = run(&["analytic", "--config", cfg.to_str().unwrap(), "--delta-slice", delta], &out);
        assert!(o.status.success());
        let (_, rows) = read_csv(&out.join("analytic_delta_slice.csv"));
        rows.iter().map(|r| r[2]).fold(0.0, f64::max)
    };
    let ratio = peak("0.75") / peak("0");
    assert!((ratio - 1.0 / (0.75f64.powi(2) + 1.0)).abs() < 1e-12, "{ratio}");
}

#[test]
fn simulate_passes_analytic_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", ONE_SOLITON);
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--compare-analytic"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert!(m["summary"]["analytic_comparison"]["linf_relative"].as_f64().unwrap() < 1e-2);
    assert_eq!(m["settings"]["dt"].as_f64(), Some(0.05));
    assert_manifest_complete(&out);
}

#[test]
fn grid_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", ONE_SOLITON);
    let out = dir.path().join("out");
    let o = run(
        &["simulate", "--config", cfg.to_str().unwrap(), "--grid-dt", "0.04", "--grid-dz", "0.1", "--clamp", "0"],
        &out,
    );
    assert!(o.status.success());
    let s = &manifest(&out)["settings"];
    assert_eq!(s["dt"].as_f64(), Some(0.04));
    assert_eq!(s["dz"].as_f64(), Some(0.1));
    assert_eq!(s["clamp_threshold"].as_f64(), Some(0.0));
}

#[test]
fn compare_reports_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", ONE_SOLITON);
    let out = dir.path().join("ok");
    let o = run(&["compare", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("L_inf"));
    assert_manifest_complete(&out);

    // an impossible tolerance fails validation and leaves no files behind
    let out = dir.path().join("strict");
    let o = run(&["compare", "--config", cfg.to_str().unwrap(), "--tolerance", "1e-12"], &out);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn missing_boundary_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &ONE_SOLITON.replace("[boundary]\nkind = \"solitons\"", ""));
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["analytic"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(1));
}

#[test]
fn empty_scan_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[scan]\nkind = \"storage\"\nvalues = []\n");
    let o = run(&["scan", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_config_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &ONE_SOLITON.replace("tau = 1.0", "tau = -1.0"));
    let o = run(&["analytic", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("soliton[0].tau"));
}

#[test]
fn truncated_window_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &ONE_SOLITON.replace("dz = 0.05", "dz = 0.05\nt_min = -3.0"));
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn storage_scan_writes_one_csv_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        "[grid]\ndt = 0.05\ndz = 0.05\n[scan]\nkind = \"storage\"\nvalues = [0.1, 0.5]\ngammas = [0.0, 0.1]\n",
    );
    let out = dir.path().join("out");
    let o = run(&["scan", "--config", cfg.to_str().unwrap(), "--jobs", "1"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut csvs: Vec<PathBuf> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    csvs.sort();
    assert_eq!(csvs.len(), 2);
    let (header, rows) = read_csv(&csvs[0]);
    assert_eq!(&header[..3], ["theta_c_over_pi", "location", "reference"]);
    for r in &rows {
        assert!((r[1] - r[2]).abs() < 0.1, "{r:?}");
    }
    let (_, decayed) = read_csv(&csvs[1]);
    assert!(decayed[0][1] < rows[0][1]);
    assert_manifest_complete(&out);
}

/// Width at half maximum of |Ω_s| along T.
fn fwhm(rows: &[Vec<f64>]) -> f64 {
    let (k, peak) = rows.iter().enumerate().fold((0, 0.0), |a, (i, r)| if r[3] > a.1 { (i, r[3]) } else { a });
    let half = peak / 2.0;
    let lo = (0..k).rev().find(|&i| rows[i][3] < half).unwrap();
    let hi = (k..rows.len()).find(|&i| rows[i][3] < half).unwrap();
    let x = |i: usize, j: usize| rows[i][0] + (half - rows[i][3]) / (rows[j][3] - rows[i][3]) * (rows[j][0] - rows[i][0]);
    x(hi - 1, hi) - x(lo, lo + 1)
}

#[test]
fn retrieved_signal_inherits_control_duration() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(configs().join("retrieval.toml")).unwrap();
    let mut widths = Vec::new();
    for tau2 in ["1.0", "1.15"] {
        let cfg = write_config(dir.path(), "r.toml", &base.replace("tau2 = 1.15", &format!("tau2 = {tau2}")));
        let out = dir.path().join(tau2);
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--grid-dz", "0.05"], &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let (_, rows) = read_csv(&out.join("fields_z_end.csv"));
        // only the part of the window after the retrieval control was sent
        let late: Vec<Vec<f64>> = rows.into_iter().filter(|r| r[0] > 0.0).collect();
        widths.push(fwhm(&late));
    }
    let ratio = widths[1] / widths[0];
    assert!((ratio - 1.15).abs() < 0.1, "{widths:?}");
}
