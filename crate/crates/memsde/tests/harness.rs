use std::path::Path;
use std::process::Command;

use memsde::config::ExperimentConfig;
use memsde::{run_experiment, HarnessError, RunManifest, RunOptions, TaskStatus};
use memsde_core::io::{load_trajectory, read_csv};
use memsde_core::{solve_cauchy, Extension, FullPath, HistoryPath, LinearMarkovDrift, SolverConfig};

const SIMULATE: &str = r#"
experiment = "simulate"
seeds = [7, 8]

[drift]
kind = "markov_linear"
slope = -1.0

[past]
value = [0.25]
window = 1.0

[solver]
dt = 0.01
horizon = 2.0
"#;

fn opts(dir: &Path) -> RunOptions {
    RunOptions {
        out: Some(dir.to_path_buf()),
        csv: true,
    }
}

fn run_dir(base: &Path, m: &RunManifest) -> std::path::PathBuf {
    base.join(&m.config_hash[..12])
}

#[test]
fn identical_config_gives_identical_digests() {
    let cfg = ExperimentConfig::from_toml(SIMULATE).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_experiment(&cfg, &opts(a.path())).unwrap();
    let mb = run_experiment(&cfg, &opts(b.path())).unwrap();
    assert_eq!(ma.status(), TaskStatus::Ok);
    assert_eq!(ma.files, mb.files);
    assert!(ma.files.contains_key("traj_seed7.msde"));
    assert!(ma.files.contains_key("traj_seed8.csv"));
    assert!(ma.mismatched_files(&run_dir(a.path(), &ma)).is_empty());
    assert_eq!(RunManifest::read(&run_dir(a.path(), &ma)).unwrap(), ma);

    let mut other = cfg.clone();
    other.seeds = vec![9];
    let mc = run_experiment(&other, &opts(a.path())).unwrap();
    assert_ne!(mc.config_hash, ma.config_hash);
}

#[test]
fn tampering_is_detected() {
    let cfg = ExperimentConfig::from_toml(SIMULATE).unwrap();
    let d = tempfile::tempdir().unwrap();
    let m = run_experiment(&cfg, &opts(d.path())).unwrap();
    let f = run_dir(d.path(), &m).join("traj_seed7.csv");
    std::fs::write(&f, "t,x0\n").unwrap();
    assert_eq!(m.mismatched_files(&run_dir(d.path(), &m)), vec!["traj_seed7.csv".to_owned()]);
}

#[test]
fn stored_trajectory_matches_direct_solve() {
    let cfg = ExperimentConfig::from_toml(SIMULATE).unwrap();
    let d = tempfile::tempdir().unwrap();
    let m = run_experiment(&cfg, &opts(d.path())).unwrap();
    let full: FullPath<f64> = load_trajectory(&run_dir(d.path(), &m).join("traj_seed7.msde"), Extension::Constant).unwrap();
    let past = HistoryPath::constant(0.01, 101, &[0.25], Extension::Constant).unwrap();
    let y = solve_cauchy(&LinearMarkovDrift::new(1, -1.0), &past, 7, &SolverConfig::new(0.01, 2.0)).unwrap();
    assert_eq!(full.future(), y);
    assert_eq!(full.past(), past);
    let (header, rows) = read_csv(&run_dir(d.path(), &m).join("traj_seed7.csv")).unwrap();
    assert_eq!(header, vec!["t", "x0"]);
    assert_eq!(rows.len(), 201);
    assert_eq!(rows[200][1], y.row(200)[0]);
}

#[test]
fn kb_without_seeds_is_a_validation_error() {
    let text = r#"
experiment = "kb"
seeds = []
[drift]
kind = "markov_linear"
[past]
value = [0.0]
[solver]
dt = 0.01
horizon = 10.0
[kb]
burn_in = 1.0
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let d = tempfile::tempdir().unwrap();
    match run_experiment(&cfg, &opts(d.path())) {
        Err(HarnessError::Validation(msg)) => assert!(msg.contains("seeds"), "{msg}"),
        other => panic!("{other:?}"),
    }
    // nothing was started
    assert_eq!(std::fs::read_dir(d.path()).unwrap().count(), 0);
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let text = r#"
experiment = "spde"
seeds = [1]
[spde]
model = "gl"
experiment = "sync"
nu = 1.0
n0 = 1.0
cutoff = 6
dt = 0.001
horizon = 0.2
[sweep]
n0 = [1.0, 2.0, 3.0]
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let d = tempfile::tempdir().unwrap();
    let m = run_experiment(&cfg, &opts(d.path())).unwrap();
    assert_eq!(m.points.len(), 3);
    let rd = run_dir(d.path(), &m);
    for p in &m.points {
        assert!(rd.join(&p.dir).is_dir(), "{}", p.dir);
        assert!(m.files.contains_key(&format!("{}/sync_seed1.csv", p.dir)));
        assert!(m.files.contains_key(&format!("{}/summary.json", p.dir)));
    }
    assert_eq!(m.status(), TaskStatus::Ok);
}

#[test]
fn girsanov_identical_drifts_have_zero_density() {
    let text = r#"
experiment = "girsanov"
seeds = [3]
[drift]
kind = "gaussian_kernel"
[past]
value = [0.5]
window = 5.0
[solver]
dt = 0.01
horizon = 1.0
[girsanov]
n_paths = 20
drift_b = { kind = "gaussian_kernel" }
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let d = tempfile::tempdir().unwrap();
    let m = run_experiment(&cfg, &opts(d.path())).unwrap();
    let (_, rows) = read_csv(&run_dir(d.path(), &m).join("girsanov_seed3.csv")).unwrap();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r[1] == 0.0 && r[2] == 0.0));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_memsde"))
}

#[test]
fn cli_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("sim.toml");
    std::fs::write(&cfg, SIMULATE).unwrap();
    let out = d.path().join("out");
    let ok = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "5"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    // subcommand and config disagree
    let wrong = bin().args(["kb", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(wrong.status.code(), Some(1));

    let bad = d.path().join("bad.toml");
    std::fs::write(&bad, SIMULATE.replace("window = 1.0", "window = 1.0\nwindwo = 2.0")).unwrap();
    let r = bin().args(["simulate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("windwo"));

    // an impossible tail ceiling fails the check, not the run
    let tails = d.path().join("tails.toml");
    std::fs::write(
        &tails,
        r#"
experiment = "tails"
seeds = [1]
[drift]
kind = "markov_linear"
slope = 0.0
[past]
value = [0.0]
[solver]
dt = 0.01
horizon = 50.0
[tails]
lags = [0.05, 0.1]
z = [0.2, 0.4]
[tolerances]
tail_c_max = 1e-9
"#,
    )
    .unwrap();
    let r = bin().args(["tails", "--config"]).arg(&tails).arg("--out").arg(&out).output().unwrap();
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stdout));

    let r = bin()
        .args(["spde", "gl", "--nu", "1", "--n0", "2", "--cutoff", "8", "--dt", "0.001", "--horizon", "0.5"])
        .args(["--experiment", "probe", "--seed", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));

    let r = bin().args(["spde", "nse", "--nu", "1", "--n0", "1"]).output().unwrap();
    assert_eq!(r.status.code(), Some(1));

    let r = bin().args(["simulate"]).output().unwrap();
    assert_eq!(r.status.code(), Some(1));
}
