use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn phsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phsim")).args(args).output().expect("spawn phsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const STEEP_ORDER2: &str = r#"
[inline]
n_cells = 32
t_end = 1.0
profile = "n2"

[inline.model]
order = 2
dim = 2
p = [
  [[0.0, 0.0], [0.0, 0.0]],
  [[0.0, 0.0], [0.0, 0.0]],
  [[0.0, -1.0], [1.0, 0.0]],
]
hamiltonian = { kind = "diagonal", profiles = [
  { kind = "exp", scale = 1.0, rate = 3.0 },
  { kind = "exp", scale = 1.0, rate = 3.0 },
] }

[inline.model.ports]
kind = "trace"
u = [
  [0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
  [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
  [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
  [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0],
]
y = [
  [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
  [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
  [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
  [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
]

[inline.feedback]
kind = "static"
phi = { kind = "linear", matrix = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]] }
"#;

#[test]
fn conservative_run_has_no_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = phsim(&["run", "--scenario", "wave-neumann-conservative", "--set", "t_end=2", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&dir.path().join("summary.json"));
    assert!(s["decay"]["omega_hat"].as_f64().unwrap().abs() < 1e-6);
    assert_eq!(s["tag_consistent"], Value::Bool(true));
    let header = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(header.starts_with("t,E_state,E_ctrl,power_residual,diffquot_norm,u_1,u_2,y_1,y_2\n"));
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = phsim(&["run", "--scenario", "wave-relay-damper", "--seed", "7", "--set", "t_end=1", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("trace.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let both = dir.path().join("both.toml");
    std::fs::write(&both, format!("scenario = \"wave-sector-damper\"\n{STEEP_ORDER2}")).unwrap();
    assert_eq!(code(&phsim(&["run", both.to_str().unwrap()])), 1);
    assert_eq!(code(&phsim(&["run", "--scenario", "no-such-thing"])), 1);
    assert_eq!(code(&phsim(&["run", "--scenario", "wave-sector-damper", "--set", "dt=0"])), 1);
    assert_eq!(code(&phsim(&["run", "--scenario", "wave-sector-damper", "--set", "bogus=1"])), 1);
    assert_eq!(code(&phsim(&["run", "--no-such-flag"])), 1);
}

#[test]
fn check_exit_codes() {
    assert_eq!(code(&phsim(&["check", "--scenario", "eb-beam-damped"])), 0);
    assert_eq!(code(&phsim(&["check", "--scenario", "wave-sector-damper", "--profile", "n2"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let steep = dir.path().join("steep.toml");
    std::fs::write(&steep, STEEP_ORDER2).unwrap();
    let o = phsim(&["check", steep.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let order2 = &report["reports"][0];
    assert_eq!(order2["passed"], Value::Bool(false));
    let first = &order2["terms"][0];
    assert_eq!(first["name"], "hamiltonian_gradient");
    assert!((first["value"].as_f64().unwrap() - 3.0).abs() < 1e-3);
}

#[test]
fn transfer_matches_the_free_string() {
    let o = phsim(&["transfer", "--scenario", "wave-neumann-conservative", "--lambda", "1"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let (coth, csch) = (1f64.cosh() / 1f64.sinh(), 1.0 / 1f64.sinh());
    for (k, want) in [(2, coth), (4, csch), (6, csch), (8, coth)] {
        assert!((row[k] - want).abs() < 1e-6, "column {k}: {} vs {want}", row[k]);
    }

    assert_eq!(code(&phsim(&["transfer", "--scenario", "wave-sector-damper", "--lambda", "-1"])), 1);
    let o = phsim(&["transfer", "--scenario", "wave-sector-damper", "--grid", "20"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 21);
}

#[test]
fn list_shows_the_catalog() {
    let o = phsim(&["list", "--json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 7);
    assert!(names.contains(&"wave-saturating-damper"));
    let o = phsim(&["list"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("eb-beam-collocated"));
}

#[test]
fn sweep_writes_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "scenario = \"wave-sector-damper\"\n[overrides]\nt_end = 1.0\n[sweep]\nvariants = [{ n_cells = 16 }, { n_cells = 32 }]\nseeds = [1, 2]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = phsim(&["sweep", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&out.join("sweep.json"));
    let runs = s["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    assert!(runs.iter().all(|r| r["exit_code"] == 0));
}

#[test]
fn shipped_configs_check() {
    for name in ["wave-static.toml", "wave-relay.toml", "eb-controller.toml", "sweep-grid.toml"] {
        let path = configs().join(name);
        let o = phsim(&["check", path.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
