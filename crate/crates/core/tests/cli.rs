use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_ddsde-lab");

const BOUNDS: &str = r#"
experiment = "bounds-table"
[bounds]
kappa = [2.0]
r = [0.0, 1e-8, 1e-4, 1.0]
g_l1 = [0.5, 1.0]
"#;

const TANAKA: &str = r#"
experiment = "tanaka-check"
seeds = [3, 4]
[grid]
horizon = 1.0
steps = 64
[drift]
family = "mean_attraction"
kappa = 1.0
[noise.initial]
law = "gaussian"
mean = [0.0]
variance = [1.0]
[noise.process]
kind = "brownian"
sigma = 1.0
[tanaka]
n = 8
"#;

fn run(sub: &str, config: &str, dir: &Path, extra: &[&str]) -> (i32, String) {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let o = Command::new(BIN)
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned())
}

#[test]
fn bounds_table_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = run("bounds-table", BOUNDS, dir.path(), &[]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("PASS monotone_in_r"));
    let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("name,method,inputs,value,error_estimate,reason"));
    assert_eq!(lines.count(), 4 * 2 + 2);
    let meta = fs::read_to_string(dir.path().join("out/report.meta")).unwrap();
    assert!(meta.contains("experiment = bounds-table"));
    assert!(meta.contains("config_sha256 = "));
    assert!(meta.ends_with("result = pass\n"));
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run("tanaka-check", TANAKA, dir.path(), &["--threads", "2"]);
    assert_eq!(code, 0);
    let first = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    let meta = fs::read_to_string(dir.path().join("out/report.meta")).unwrap();
    let (code, _) = run("tanaka-check", TANAKA, dir.path(), &[]);
    assert_eq!(code, 0);
    assert_eq!(fs::read_to_string(dir.path().join("out/report.csv")).unwrap(), first);
    assert_eq!(fs::read_to_string(dir.path().join("out/report.meta")).unwrap(), meta);
}

#[test]
fn seed_override_replaces_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run("tanaka-check", TANAKA, dir.path(), &["--seed-override", "100"]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    let seeds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(seeds, ["100", "101"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let strict = TANAKA.replace("[tanaka]", "[tolerances]\ntanaka_factor = 0.0\n[tanaka]");
    let strict = strict.replace("kappa = 1.0", "kappa = 1.0\n").replace("mean_attraction", "lipschitz_linear");
    let strict = strict.replace(
        "kappa = 1.0\n",
        "dim = 1\na = [-0.5]\nc = [0.5]\nc0 = [0.3]\ng = 1.0\nh = 1.3",
    );
    let (code, stdout) = run("tanaka-check", &strict, dir.path(), &[]);
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("FAIL gap"));

    let unknown = TANAKA.replace("n = 8", "n = 8\nsize = 3");
    assert_eq!(run("tanaka-check", &unknown, dir.path(), &[]).0, 2);
    assert_eq!(run("stability", TANAKA, dir.path(), &[]).0, 2);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let (cfg, _) = ddsde_core::harness::ExperimentConfig::load(&path).unwrap();
            if cfg.drift.is_some() {
                cfg.drift_spec().unwrap();
                cfg.noise_spec().unwrap();
            }
            seen += 1;
        }
    }
    assert_eq!(seen, 5);
}
