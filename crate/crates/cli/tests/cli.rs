use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn snls(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_snls"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("SNLS_WORKERS", w),
        None => cmd.env_remove("SNLS_WORKERS"),
    };
    cmd.output().expect("failed to execute snls")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const MARTINGALE: &str = r#"
experiment = "martingale"
seed = 21
n_paths = 24
[[noise.modes]]
mu = 0.5
shape = "cosine"
wavenumber = [1]
[solver]
dt = 2e-3
t_final = 0.1
record_every = 5
"#;

const MASS: &str = r#"
experiment = "mass-identity"
seed = 5
n_paths = 6
[[noise.modes]]
mu = 1.0
shape = "cosine"
wavenumber = [1]
[solver]
dt = 2e-3
t_final = 0.1
record_every = 10
"#;

#[test]
fn outputs_identical_across_worker_counts_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [("m.toml", MARTINGALE), ("q.toml", MASS)] {
        let cfg = write_config(dir.path(), name, body);
        let mut outs = Vec::new();
        for (tag, w) in [("a", "1"), ("b", "4"), ("c", "4")] {
            let out = dir.path().join(format!("{name}-{tag}"));
            let o = snls(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], Some(w));
            assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
            outs.push(out);
        }
        for f in ["timeseries.csv", "paths.ndjson", "verdict.json"] {
            let first = fs::read(outs[0].join(f)).unwrap();
            for other in &outs[1..] {
                assert_eq!(first, fs::read(other.join(f)).unwrap(), "{name}: {f} differs");
            }
        }
    }
}

#[test]
fn manifest_lists_every_file_with_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.toml", MARTINGALE);
    let out = dir.path().join("out");
    let o = snls(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], Some("2"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let m: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let names: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["timeseries.csv", "paths.ndjson", "verdict.json"]);
    assert_eq!(m["seeds"].as_array().unwrap().len(), 24);
    assert!(m["scheme"]["theta_cutoff"].is_string());
    assert!(m["scheme"]["energy_pairing"].is_string());
    assert_eq!(m["config"]["seed"], 21);
    let ndjson = fs::read_to_string(out.join("paths.ndjson")).unwrap();
    assert_eq!(ndjson.lines().count(), 24);
    for line in ndjson.lines() {
        let row: Value = serde_json::from_str(line).unwrap();
        assert!(row["final_q"].is_number());
    }
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.toml", MARTINGALE);
    let out = dir.path().join("out");
    let o = snls(
        &["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "4", "--paths", "3", "--dt", "1e-3"],
        Some("1"),
    );
    assert!(code(&o) <= 1);
    let m: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 4);
    assert_eq!(m["config"]["n_paths"], 3);
    assert_eq!(m["config"]["solver"]["dt"], 1e-3);
}

#[test]
fn conservation_without_noise_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "experiment = \"conservation\"\n[solver]\ndt = 2e-3\nt_final = 0.2\nrecord_every = 10\n",
    );
    let out = dir.path().join("out");
    let o = snls(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 4, "{stdout}");
    let v: Value = serde_json::from_slice(&fs::read(out.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
}

#[test]
fn blowup_demo_is_a_detector_not_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.toml",
        "experiment = \"blowup-demo\"\n[solver]\ndt = 1e-2\nt_final = 0.1\nblowup_threshold = 1e-6\n",
    );
    let out = dir.path().join("out");
    let o = snls(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&fs::read(out.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "detector");
    assert_eq!(v["details"]["blowup"]["step"], 0);
}

#[test]
fn verify_reports_all_violations_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        "experiment = \"mass-identity\"\n[params]\nlambda = 5.0\n[solver]\ndt = 1e-3\nbogus = 1\n",
    );
    let o = snls(&["verify", "--config", &cfg], None);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bogus"), "{err}");
    assert!(err.contains("compatibility condition"), "{err}");
}

#[test]
fn verify_accepts_shipped_presets() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(configs).unwrap() {
        let p = entry.unwrap().path();
        let o = snls(&["verify", "--config", p.to_str().unwrap()], None);
        assert_eq!(code(&o), 0, "{}: {}", p.display(), String::from_utf8_lossy(&o.stderr));
        n += 1;
    }
    assert!(n >= 7);
}

#[test]
fn equivalence_rejects_unstable_dt() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e.toml", "experiment = \"equivalence\"\n[solver]\ndt = 1e-2\n");
    let o = snls(&["verify", "--config", &cfg], None);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stability bound"));
}

#[test]
fn missing_file_and_bad_worker_env_are_config_errors() {
    let o = snls(&["verify", "--config", "/nonexistent/x.toml"], None);
    assert_eq!(code(&o), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.toml", MARTINGALE);
    let out = dir.path().join("out");
    let o = snls(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], Some("zero"));
    assert_eq!(code(&o), 2);
}

#[test]
fn incomplete_equivalence_check_fails_with_exit_1() {
    // the stiff damping term stops the rescaled run through the blow-up monitor
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "e.toml",
        "experiment = \"equivalence\"\n[[noise.modes]]\nmu = 200.0\nshape = \"cosine\"\nwavenumber = [0]\n[solver]\ndt = 1e-3\n",
    );
    let out = dir.path().join("out");
    let o = snls(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL comparison horizon"));
}

#[test]
fn amplitude_overflow_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "o.toml",
        "experiment = \"equivalence\"\nseed = 1\n[grid]\nn = 16\nbox_length = 8.0\n[[noise.modes]]\nmu = 50.0\nshape = \"cosine\"\nwavenumber = [0]\n[solver]\ndt = 5e-4\nt_final = 1.0\nrecord_every = 100\nblowup_threshold = 1e300\n",
    );
    let out = dir.path().join("out");
    let o = snls(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("amplitude overflow"));
}
