use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lrd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrd")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Deterministic stratified uniform sample on [0, 1] with a binary treatment and instrument.
fn fixture(dir: &Path) -> PathBuf {
    let path = dir.join("sample.csv");
    let mut s = String::from("x,t,d,z1\n");
    let n = 600;
    for i in 0..n {
        let x = ((i * 389) % n) as f64 / n as f64 + 0.5 / n as f64;
        let d = i % 2;
        let t = usize::from((i * 7) % 10 < 2 + 6 * d);
        let z = ((i * 13) % 97) as f64 / 97.0;
        s.push_str(&format!("{x:.6},{t},{d},{z:.4}\n"));
    }
    std::fs::write(&path, s).unwrap();
    path
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn fit_cdf_is_monotone_and_density_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let o = lrd(&["fit", "-i", input.to_str().unwrap(), "--grid", "0.2:0.8:7", "--h", "0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let cdf = column(&out, "cdf");
    assert!(cdf.windows(2).all(|w| w[1] > w[0]));
    for (&c, x) in cdf.iter().zip([0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]) {
        assert!((c - x).abs() < 0.01, "{c} vs {x}");
    }
    for f in column(&out, "estimate") {
        assert!((f - 1.0).abs() < 0.1, "{f}");
    }
}

#[test]
fn efficiency_table_reproduces_constants() {
    let o = lrd(&["efficiency", "--table", "sa"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 29);
    assert!(out.contains("a,0,1,uniform,0.600000"));
    let o = lrd(&["efficiency", "--table", "md", "--p", "1", "--deriv", "0", "--j", "1"]);
    let q = column(&stdout(&o), "quadrature")[0];
    assert!((q - 15.0 / 28.0).abs() < 1e-9, "{q}");
}

#[test]
fn json_sidecar_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let out = dir.path().join("band.csv");
    let o = lrd(&[
        "band",
        "-i",
        input.to_str().unwrap(),
        "--grid",
        "0.2:0.8:5",
        "--draws",
        "500",
        "--seed",
        "7",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("band.csv.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema"], "lrd-output-v1");
    assert_eq!(v["command"], "band");
    assert_eq!(v["seed"], 7);
    assert_eq!(v["rows"], 5);
    assert_eq!(v["config"]["band"]["draws"], 500);
    assert!(v["results"]["q"].as_f64().unwrap() > v["results"]["z"].as_f64().unwrap());
    let csv = std::fs::read_to_string(&out).unwrap();
    let (lo, hi) = (column(&csv, "lo"), column(&csv, "hi"));
    let (plo, phi) = (column(&csv, "pointwise_lo"), column(&csv, "pointwise_hi"));
    for i in 0..5 {
        assert!(lo[i] < plo[i] && phi[i] < hi[i]);
    }
}

#[test]
fn band_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let args = ["band", "-i", input.to_str().unwrap(), "--grid", "0.3:0.7:4", "--draws", "300", "--seed", "3"];
    assert_eq!(stdout(&lrd(&args)), stdout(&lrd(&args)));
}

#[test]
fn weights_append_a_column_with_mean_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    for scheme in ["subgroup1", "counterfactual", "complier"] {
        let o = lrd(&["weights", "-i", input.to_str().unwrap(), "--scheme", scheme, "--covariates", "z1"]);
        assert!(o.status.success(), "{scheme}: {}", stderr(&o));
        let out = stdout(&o);
        assert!(out.starts_with("x,t,d,z1,weight\n"));
        let w = column(&out, "weight");
        assert_eq!(w.len(), 600);
        let m = w.iter().sum::<f64>() / w.len() as f64;
        assert!((m - 1.0).abs() < 0.05, "{scheme}: {m}");
    }
}

#[test]
fn ivcheck_and_simulate_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let o = lrd(&["ivcheck", "-i", input.to_str().unwrap(), "--grid", "0.3:0.7:3", "--draws", "300"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);
    let o = lrd(&["simulate", "--dgp", "uniform", "--n", "400", "--reps", "20", "--x", "0.5", "--h", "0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cov = column(&stdout(&o), "coverage")[0];
    assert!((0.0..=1.0).contains(&cov));
}

#[test]
fn config_file_sets_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# fixed bandwidth\nh = 0.25\nkernel = \"epanechnikov\"\n").unwrap();
    let base = ["--config", cfg.to_str().unwrap(), "fit", "-i", input.to_str().unwrap(), "--grid", "0.5"];
    let o = lrd(&base);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(column(&stdout(&o), "h")[0], 0.25);
    let mut over = base.to_vec();
    over.extend(["--h", "0.3"]);
    assert_eq!(column(&stdout(&lrd(&over)), "h")[0], 0.3);
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let o = lrd(&["fit", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "bandwith = 0.2\n").unwrap();
    let o = lrd(&["--config", cfg.to_str().unwrap(), "fit", "-i", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bandwith"));
}

#[test]
fn malformed_cell_names_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x\n0.1\n0.2\nabc\n0.4\n").unwrap();
    let o = lrd(&["fit", "-i", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("row 3") && e.contains("\"x\""), "{e}");
}

#[test]
fn missing_input_exits_one() {
    let o = lrd(&["fit", "-i", "/nonexistent/data.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let o = lrd(&["fit", "-i", input.to_str().unwrap(), "--h", "1e-6", "--grid", "0.1:0.9:3"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn help_exits_zero() {
    let o = lrd(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["fit", "band", "efficiency", "weights", "ivcheck", "simulate"] {
        assert!(stdout(&o).contains(sub));
    }
}
