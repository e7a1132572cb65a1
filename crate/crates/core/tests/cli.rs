use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pairloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairloc"))
        .args(args)
        .env_remove("PAIRLOC_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SWEEP: &str = r#"
engine = "pair-gge"
n_realizations = 3
[cloud]
preset = "strong"
n = 30
[fields]
values_mhz = [-1.0, -0.5, 0.0, 0.5, 1.0]
"#;

fn sweep_csv(dir: &Path) -> Vec<(f64, f64)> {
    let mut rd = csv::Reader::from_path(dir.join("sweep.csv")).unwrap();
    let h = rd.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let (w, m) = (col("omega_mhz"), col("m_late"));
    rd.records()
        .map(|r| {
            let r = r.unwrap();
            (r[w].parse().unwrap(), r[m].parse().unwrap())
        })
        .collect()
}

#[test]
fn presets_lists_all_parameter_sets() {
    let out = pairloc(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["weak", "strong", "vdw"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn sweep_writes_csv_and_manifest_with_minimum_at_zero_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SWEEP);
    let out_dir = tmp.path().join("out");
    let out = pairloc(&["sweep", "-c", &cfg, "-o", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = sweep_csv(&out_dir);
    assert_eq!(rows.len(), 5);
    let (w0, m0) = rows[2];
    assert_eq!(w0, 0.0);
    assert!(rows.iter().all(|&(_, m)| m >= m0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["realization_seeds"].as_array().unwrap().len(), 3);
}

#[test]
fn rerun_from_manifest_reproduces_the_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SWEEP);
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    assert!(pairloc(&["sweep", "-c", &cfg, "-o", first.to_str().unwrap()]).status.success());
    let manifest = first.join("manifest.json");
    let out = pairloc(&[
        "--workers",
        "2",
        "sweep",
        "-c",
        manifest.to_str().unwrap(),
        "-o",
        second.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(first.join("sweep.csv")).unwrap(),
        fs::read(second.join("sweep.csv")).unwrap()
    );
}

#[test]
fn malformed_config_fails_with_the_offending_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "engine = \"pair-gge\"\nn_realisations = 3\n");
    let out = pairloc(&["sweep", "-c", &cfg, "-o", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("n_realisations"), "{err}");
}

#[test]
fn fit_reads_a_trace_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("trace.csv");
    let mut text = String::from("t_us,sx_mean,sx_stderr\n");
    for k in 0..50 {
        let t = 0.2 * k as f64;
        let m = 0.15 + 0.35 * (-(t / 2.0).powf(0.7)).exp();
        text.push_str(&format!("{t},{m},0\n"));
    }
    fs::write(&path, text).unwrap();
    let out = pairloc(&["fit", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((fit["m_inf"].as_f64().unwrap() - 0.15).abs() < 1e-6);
    assert!((fit["tau"].as_f64().unwrap() - 2.0).abs() < 1e-5);
}
