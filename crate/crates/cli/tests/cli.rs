use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biofilm-fbp")).args(args).output().expect("binary runs")
}

fn short_benchmark(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(configs().join("monod_benchmark.toml"))
        .unwrap()
        .replace("t_end = 1.0", "t_end = 0.04")
        .replace("dt = 0.005", "dt = 0.01")
        .replace("stride = 20", "stride = 2");
    let path = dir.join("short.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn verify_kernels_passes() {
    let out = run(&["verify-kernels", "--samples", "50"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).lines().all(|l| l.starts_with("pass")));
}

#[test]
fn small_data_is_certified() {
    let cfg = configs().join("small_data.toml");
    let out = run(&["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict = certified"));
}

#[test]
fn benchmark_is_uncertified() {
    let cfg = configs().join("monod_benchmark.toml");
    let out = run(&["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict = uncertified"));
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = fs::read_to_string(configs().join("monod_benchmark.toml")).unwrap().replace("N_z = 32", "N_z = 32\nfoo = 1");
    fs::write(&path, text).unwrap();
    let out = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));

    let missing = dir.path().join("absent.toml");
    assert_eq!(run(&["certify", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn simulate_writes_profiles_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_benchmark(dir.path());
    let out_dir = dir.path().join("run");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> =
        fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["profile_00000.csv", "profile_00001.csv", "profile_00002.csv", "series.csv"]);
    let series = fs::read_to_string(out_dir.join("series.csv")).unwrap();
    assert!(series.contains("# mode = image-corrected"));
    assert_eq!(series.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn compare_oracle_reports_differences() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_benchmark(dir.path());
    let out = run(&["compare-oracle", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let value = |key: &str| -> f64 {
        text.lines().find_map(|l| l.strip_prefix(key)).unwrap().trim_start_matches(" = ").parse().unwrap()
    };
    assert!(value("snapshots compared") >= 2.0);
    assert!(value("sup |C - C_oracle| / sup psi") < 5e-2);
}
