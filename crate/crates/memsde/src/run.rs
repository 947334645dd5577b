//! Experiment execution.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use memsde_core::drift::{DEFAULT_FINITENESS_CAP, DEFAULT_TAIL_TOL};
use memsde_core::ergodics::{
    coupling_experiment, girsanov_logdensity, increment_tail_check, krylov_bogoliubov, KbConfig,
    DEFAULT_NOVIKOV_CAP,
};
use memsde_core::io::{emit_csv, MsdeFile};
use memsde_core::lyapunov::{audit_generator, time_average_v, v_series, LyapunovSpec};
use memsde_core::solver::{euler_maruyama_full, picard_solve, solve_cauchy_full, BlowupGuard};
use memsde_core::spde::reduction::{high_u_norm, DEFAULT_PSI_TOL, MAX_LOOKBACK_STEPS};
use memsde_core::spde::{
    factorization_residual, probe_dissipative, probe_lip, reconstruct_psi, simulate, sync_experiment,
    AssumptionConstants, ForcingSpec, GalerkinModel, GlModel, LHSplit, NseModel, ReducedPdeDrift, SpdeRun,
};
use memsde_core::{
    concat, Extension, FullPath, GaussianKernelDrift, HistoryPath, LinearMarkovDrift, MemoryDrift,
    PathDependentKernelDrift, SolverConfig,
};

use crate::config::{
    DriftConfig, ExperimentConfig, ExperimentKind, ExtensionKind, Method, SpdeExperiment, SpdeModel, SpdeSection,
};
use crate::manifest::{sha256_file, PointRecord, RunManifest, TaskRecord, TaskStatus};
use crate::HarnessError;

const DEFAULT_TAIL_C_MAX: f64 = 48.0;
const RUN_DIR_HASH_LEN: usize = 12;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Base directory; the run directory is `<out>/<hash prefix>`.
    pub out: Option<PathBuf>,
    /// Also write trajectories as CSV.
    pub csv: bool,
}

/// Outcome of one task: a status and a summary merged into the point summary.
struct TaskOutcome {
    name: String,
    status: TaskStatus,
    message: Option<String>,
    summary: Value,
    wall_seconds: f64,
}

fn timed(name: String, f: impl FnOnce() -> Result<(Value, Option<String>), HarnessError>) -> TaskOutcome {
    let t0 = Instant::now();
    let (status, message, summary) = match f() {
        Ok((summary, None)) => (TaskStatus::Ok, None, summary),
        Ok((summary, Some(why))) => (TaskStatus::CheckFailed, Some(why), summary),
        Err(e) => (TaskStatus::Failed, Some(e.to_string()), Value::Null),
    };
    TaskOutcome {
        name,
        status,
        message,
        summary,
        wall_seconds: t0.elapsed().as_secs_f64(),
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Validates, expands and executes `config`, then writes the manifest.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest, HarnessError> {
    config.validate()?;
    let started = unix_now();
    let t0 = Instant::now();
    let hash = config.hash();
    let base = opts
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let run_dir = base.join(&hash[..RUN_DIR_HASH_LEN]);
    std::fs::create_dir_all(&run_dir)?;
    std::fs::write(run_dir.join("config.toml"), config.to_toml())?;

    let points = config.expand();
    let records: Vec<PointRecord> = points
        .par_iter()
        .map(|p| {
            let rel = if p.label.is_empty() { ".".to_owned() } else { p.label.clone() };
            let dir = run_dir.join(&rel);
            std::fs::create_dir_all(&dir)?;
            let outcomes = run_point(&p.config, &dir, opts.csv);
            let summary: BTreeMap<String, Value> =
                outcomes.iter().map(|o| (o.name.clone(), o.summary.clone())).collect();
            let text = serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Runtime(e.to_string()))?;
            std::fs::write(dir.join("summary.json"), text)?;
            Ok(PointRecord {
                label: p.label.clone(),
                dir: rel,
                seeds: p.config.seeds.clone(),
                tasks: outcomes
                    .into_iter()
                    .map(|o| TaskRecord {
                        name: o.name,
                        status: o.status,
                        message: o.message,
                        wall_seconds: o.wall_seconds,
                    })
                    .collect(),
            })
        })
        .collect::<Result<_, HarnessError>>()?;

    let mut seeds: Vec<u64> = records.iter().flat_map(|r| r.seeds.iter().copied()).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let manifest = RunManifest {
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION").to_owned(),
        experiment: config.experiment.name().to_owned(),
        seeds,
        started_unix: started,
        finished_unix: unix_now(),
        wall_seconds: t0.elapsed().as_secs_f64(),
        files: digest_tree(&run_dir)?,
        points: records,
    };
    manifest.write(&run_dir)?;
    Ok(manifest)
}

fn digest_tree(root: &Path) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != RunManifest::FILE_NAME) {
                let rel = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
                out.insert(rel, sha256_file(&path)?);
            }
        }
    }
    Ok(out)
}

fn run_point(cfg: &ExperimentConfig, dir: &Path, csv: bool) -> Vec<TaskOutcome> {
    if cfg.experiment == ExperimentKind::Kb {
        // chains over all seeds pool into one measure
        return vec![timed("kb".to_owned(), || run_kb(cfg, dir))];
    }
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let name = format!("{}-seed{seed}", cfg.experiment.name());
            timed(name, || match cfg.experiment {
                ExperimentKind::Simulate => run_simulate(cfg, seed, dir, csv),
                ExperimentKind::Couple => run_couple(cfg, seed, dir),
                ExperimentKind::Girsanov => run_girsanov(cfg, seed, dir),
                ExperimentKind::Tails => run_tails(cfg, seed, dir),
                ExperimentKind::LyapunovAudit => run_audit(cfg, seed, dir),
                ExperimentKind::Spde => run_spde(cfg, seed, dir, csv),
                ExperimentKind::Kb => unreachable!(),
            })
        })
        .collect()
}

fn solver_cfg(cfg: &ExperimentConfig) -> SolverConfig<f64> {
    let s = cfg.solver.as_ref().expect("validated");
    let mut c = SolverConfig::new(s.dt, s.horizon);
    if let Some(r) = s.blowup_radius {
        c = c.with_blowup_radius(r);
    }
    c
}

fn extension(e: ExtensionKind) -> Extension {
    match e {
        ExtensionKind::Constant => Extension::Constant,
        ExtensionKind::Zero => Extension::Zero,
    }
}

fn constant_past(value: &[f64], window: f64, dt: f64, ext: Extension) -> Result<HistoryPath<f64>, HarnessError> {
    let n = (window / dt).round() as usize + 1;
    Ok(HistoryPath::constant(dt, n, value, ext)?)
}

fn config_past(cfg: &ExperimentConfig) -> Result<HistoryPath<f64>, HarnessError> {
    let p = cfg.past.as_ref().expect("validated");
    constant_past(&p.value, p.window, solver_cfg(cfg).dt, extension(p.extension))
}

fn forcing_for<M: GalerkinModel<f64>>(model: &M, s: &SpdeSection) -> Result<ForcingSpec<f64>, HarnessError> {
    Ok(ForcingSpec::low_modes(model, s.n0, s.amp)?)
}

/// Number of forced modes, i.e. the dimension of the reduced equation.
pub fn reduced_dim(s: &SpdeSection) -> Result<usize, HarnessError> {
    Ok(match s.model {
        SpdeModel::Gl => forcing_for(&GlModel::new(s.cutoff, s.nu)?, s)?.forced().len(),
        SpdeModel::Nse => forcing_for(&NseModel::new(s.cutoff, s.nu)?, s)?.forced().len(),
    })
}

pub fn build_drift(d: &DriftConfig, spde: Option<&SpdeSection>) -> Result<Box<dyn MemoryDrift<f64>>, HarnessError> {
    Ok(match d {
        DriftConfig::GaussianKernel { tail_tol } => {
            Box::new(GaussianKernelDrift::new(tail_tol.unwrap_or(DEFAULT_TAIL_TOL))?)
        }
        DriftConfig::PathdepKernel { finiteness_cap, tail_tol } => Box::new(PathDependentKernelDrift::new(
            finiteness_cap.unwrap_or(DEFAULT_FINITENESS_CAP),
            tail_tol.unwrap_or(DEFAULT_TAIL_TOL),
        )?),
        DriftConfig::MarkovLinear { dim, slope } => {
            Box::new(LinearMarkovDrift::new(dim.unwrap_or(1), slope.unwrap_or(-1.0)))
        }
        DriftConfig::ReducedPde { lookback_steps } => {
            let s = spde.ok_or_else(|| HarnessError::Validation("`spde`: section is required".into()))?;
            let lookback = lookback_steps.unwrap_or(256);
            match s.model {
                SpdeModel::Gl => {
                    let m = GlModel::new(s.cutoff, s.nu)?;
                    let f = forcing_for(&m, s)?;
                    Box::new(ReducedPdeDrift::new(m, &f, lookback)?)
                }
                SpdeModel::Nse => {
                    let m = NseModel::new(s.cutoff, s.nu)?;
                    let f = forcing_for(&m, s)?;
                    Box::new(ReducedPdeDrift::new(m, &f, lookback)?)
                }
            }
        }
    })
}

fn lyapunov_spec(d: &DriftConfig) -> LyapunovSpec<f64> {
    match d {
        DriftConfig::GaussianKernel { .. } => LyapunovSpec::ex61(),
        DriftConfig::PathdepKernel { .. } => LyapunovSpec::ex62(),
        _ => LyapunovSpec::markov_quadratic(),
    }
}

fn drift_of(cfg: &ExperimentConfig) -> Result<Box<dyn MemoryDrift<f64>>, HarnessError> {
    build_drift(cfg.drift.as_ref().expect("validated"), cfg.spde.as_ref())
}

fn solve(cfg: &ExperimentConfig, a: &dyn MemoryDrift<f64>, past: &HistoryPath<f64>, seed: u64) -> Result<FullPath<f64>, HarnessError> {
    let sc = solver_cfg(cfg);
    let method = cfg.solver.as_ref().expect("validated").method;
    Ok(match method {
        Method::Euler => solve_cauchy_full(a, past, seed, 0, &sc, BlowupGuard::Norm)?,
        Method::Picard => {
            let w = memsde_core::sample_wiener(seed, 0, a.dim(), sc.dt, sc.n_steps())?;
            concat(past, &picard_solve(a, past, &w, &sc)?)?
        }
    })
}

fn future_rows(p: &FullPath<f64>) -> Vec<Vec<f64>> {
    let fut = p.future();
    (0..fut.len())
        .map(|k| {
            let mut row = vec![k as f64 * p.dt()];
            row.extend_from_slice(fut.row(k));
            row
        })
        .collect()
}

fn coord_header(dim: usize) -> Vec<String> {
    std::iter::once("t".to_owned())
        .chain((0..dim).map(|c| format!("x{c}")))
        .collect()
}

fn run_simulate(cfg: &ExperimentConfig, seed: u64, dir: &Path, csv: bool) -> Result<(Value, Option<String>), HarnessError> {
    let a = drift_of(cfg)?;
    let past = config_past(cfg)?;
    let full = solve(cfg, &*a, &past, seed)?;
    MsdeFile::from_full(&full, seed).write(&dir.join(format!("traj_seed{seed}.msde")))?;
    if csv {
        let header = coord_header(full.dim());
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        emit_csv(&dir.join(format!("traj_seed{seed}.csv")), &h, &future_rows(&full))?;
    }
    let fut = full.future();
    let sup = fut.chronological().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((json!({ "final": fut.row(fut.len() - 1), "sup_abs": sup, "steps": fut.len() - 1 }), None))
}

/// Weighted quantiles of one coordinate.
fn weighted_quantiles(values: impl Iterator<Item = f64>, weights: &[f64], qs: &[f64]) -> Vec<f64> {
    let mut pairs: Vec<(f64, f64)> = values.zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = weights.iter().sum();
    qs.iter()
        .map(|&q| {
            let mut acc = 0.0;
            for &(x, w) in &pairs {
                acc += w;
                if acc >= q * total {
                    return x;
                }
            }
            pairs.last().map_or(f64::NAN, |p| p.0)
        })
        .collect()
}

fn run_kb(cfg: &ExperimentConfig, dir: &Path) -> Result<(Value, Option<String>), HarnessError> {
    let a = drift_of(cfg)?;
    let past = config_past(cfg)?;
    let s = cfg.solver.as_ref().expect("validated");
    let kb = cfg.kb.as_ref().expect("validated");
    let kc = KbConfig {
        horizon: s.horizon,
        burn_in: kb.burn_in,
        dt: s.dt,
        thin: kb.thin,
        seeds: cfg.seeds.clone(),
    };
    let r = krylov_bogoliubov(&*a, &past, &kc)?;
    let m = &r.measure;
    let qs: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let cols: Vec<Vec<f64>> = (0..m.dim).map(|c| weighted_quantiles(m.coordinate(c), &m.weights, &qs)).collect();
    let rows: Vec<Vec<f64>> = qs
        .iter()
        .enumerate()
        .map(|(i, &q)| std::iter::once(q).chain(cols.iter().map(|c| c[i])).collect())
        .collect();
    let header: Vec<String> = std::iter::once("q".to_owned())
        .chain((0..m.dim).map(|c| format!("x{c}")))
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    emit_csv(&dir.join("kb_quantiles.csv"), &h, &rows)?;
    let summary = json!({
        "mean": (0..m.dim).map(|c| m.mean(c)).collect::<Vec<_>>(),
        "variance": (0..m.dim).map(|c| m.variance(c)).collect::<Vec<_>>(),
        "half_variances": [r.half_variances.0, r.half_variances.1],
        "converged": r.converged,
        "n_samples": m.len(),
    });
    let check = (!r.converged).then(|| "half-window variances disagree by more than 20%".to_owned());
    Ok((summary, check))
}

fn run_couple(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<(Value, Option<String>), HarnessError> {
    let a = drift_of(cfg)?;
    let c = cfg.couple.as_ref().expect("validated");
    let sc = solver_cfg(cfg);
    let x1 = constant_past(&c.value_a, c.window, sc.dt, Extension::Constant)?;
    let mut rows = x1.chronological().to_vec();
    let dim = c.value_a.len();
    let n = rows.len() / dim;
    for k in 0..n - 1 {
        rows[k * dim..(k + 1) * dim].copy_from_slice(&c.value_b);
    }
    let x2 = HistoryPath::from_chronological(dim, sc.dt, rows, Extension::Constant, 0.0)?;
    let s = coupling_experiment(&*a, &x1, &x2, seed, &sc)?;
    emit_csv(
        &dir.join(format!("couple_seed{seed}.csv")),
        &["t", "gap"],
        &s.times.iter().zip(&s.gaps).map(|(&t, &g)| vec![t, g]).collect::<Vec<_>>(),
    )?;
    Ok((json!({ "fitted_rate": s.fitted_rate, "fitted_c": s.fitted_c }), None))
}

fn run_girsanov(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<(Value, Option<String>), HarnessError> {
    let a = drift_of(cfg)?;
    let g = cfg.girsanov.as_ref().expect("validated");
    let b = build_drift(&g.drift_b, cfg.spde.as_ref())?;
    let past = config_past(cfg)?;
    let sc = solver_cfg(cfg);
    let cap = g.novikov_cap.unwrap_or(DEFAULT_NOVIKOV_CAP);
    let reports = (0..g.n_paths)
        .into_par_iter()
        .map(|i| {
            let w = memsde_core::sample_wiener(seed, i as u64, a.dim(), sc.dt, sc.n_steps())?;
            let traj = euler_maruyama_full(&*a, &past, &w, &sc, BlowupGuard::Norm)?;
            Ok(girsanov_logdensity(&*a, &*b, &traj, &w, cap)?)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let rows: Vec<Vec<f64>> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i as f64, r.log_density, r.novikov_stat, r.truncated.map_or(-1.0, |k| k as f64)])
        .collect();
    emit_csv(
        &dir.join(format!("girsanov_seed{seed}.csv")),
        &["path", "log_density", "novikov", "truncated_step"],
        &rows,
    )?;
    let mean_density = reports.iter().map(|r| r.log_density.exp()).sum::<f64>() / reports.len() as f64;
    let truncated = reports.iter().filter(|r| r.truncated.is_some()).count();
    Ok((json!({ "mean_density": mean_density, "truncated_paths": truncated, "n_paths": reports.len() }), None))
}

fn run_tails(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<(Value, Option<String>), HarnessError> {
    let a = drift_of(cfg)?;
    let t = cfg.tails.as_ref().expect("validated");
    let past = config_past(cfg)?;
    let full = solve(cfg, &*a, &past, seed)?;
    let dt = full.dt();
    let burn = (t.burn_in / dt).round() as usize;
    let fut = full.future();
    let traj = &fut.chronological()[burn * full.dim()..];
    let table = increment_tail_check(traj, full.dim(), dt, &t.lags, &t.z)?;
    let rows: Vec<Vec<f64>> = table.rows.iter().map(|r| vec![r.lag, r.z, r.empirical_prob, r.bound]).collect();
    emit_csv(&dir.join(format!("tails_seed{seed}.csv")), &["lag", "z", "empirical", "bound"], &rows)?;
    let c_max = cfg.tolerances.tail_c_max.unwrap_or(DEFAULT_TAIL_C_MAX);
    let check = (!table.dominated_by(c_max)).then(|| format!("fitted constant {} exceeds {c_max}", table.c_min));
    Ok((json!({ "c_min": table.c_min, "c_max": c_max }), check))
}

fn run_audit(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<(Value, Option<String>), HarnessError> {
    let a = drift_of(cfg)?;
    let au = cfg.audit.as_ref().expect("validated");
    let spec = lyapunov_spec(cfg.drift.as_ref().expect("validated"));
    let past = config_past(cfg)?;
    let full = solve(cfg, &*a, &past, seed)?;
    let dt = full.dt();
    let first = (au.burn_in / dt).round() as usize;
    let last = full.n_future() - 1;
    let steps: Vec<usize> = (0..au.n_points)
        .map(|i| first + (last - first) * i / au.n_points.max(1))
        .collect();
    let paths = steps
        .iter()
        .map(|&k| Ok(full.view_at_step(k as i64)?.to_owned_path()))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let rows = audit_generator(&*a, &spec, &paths, au.m, au.dt_probe, seed)?;
    let csv_rows: Vec<Vec<f64>> = steps
        .iter()
        .zip(&rows)
        .map(|(&k, r)| vec![k as f64 * dt, r.v, r.estimate, r.std_error, r.bound, f64::from(u8::from(r.ok))])
        .collect();
    emit_csv(
        &dir.join(format!("audit_seed{seed}.csv")),
        &["t", "v", "estimate", "std_error", "bound", "ok"],
        &csv_rows,
    )?;
    let failures = rows.iter().filter(|r| !r.ok).count();
    let v = v_series(&full, &spec)?;
    let avg = time_average_v(&v, dt, spec.gamma).ok().and_then(|s| s.last().copied());
    let summary = json!({
        "failures": failures,
        "points": rows.len(),
        "terminal_time_average_v": avg,
        "average_bound": spec.average_bound(),
    });
    let check = (failures > 0).then(|| format!("{failures} of {} generator checks failed", rows.len()));
    Ok((summary, check))
}

fn run_spde(cfg: &ExperimentConfig, seed: u64, dir: &Path, csv: bool) -> Result<(Value, Option<String>), HarnessError> {
    let s = cfg.spde.as_ref().expect("validated");
    let psi_tol = cfg.tolerances.psi_tol.unwrap_or(DEFAULT_PSI_TOL);
    match s.model {
        SpdeModel::Gl => {
            let m = GlModel::new(s.cutoff, s.nu)?;
            if s.experiment == SpdeExperiment::Probe {
                return spde_probe(&m, s, seed, dir);
            }
            spde_generic(&m, s, seed, dir, csv, psi_tol)
        }
        SpdeModel::Nse => spde_generic(&NseModel::new(s.cutoff, s.nu)?, s, seed, dir, csv, psi_tol),
    }
}

fn steps_of(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

/// Deterministic high-mode offset with l2 norm `amp`.
fn offset<M: GalerkinModel<f64>>(_: &M, split: &LHSplit, amp: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..split.high.len()).map(|i| (0.7 * i as f64 + 0.3).sin()).collect();
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| amp * v / n).collect()
}

fn write_state(run: &SpdeRun<f64>, k: usize, seed: u64, path: &Path) -> Result<(), HarnessError> {
    let f = MsdeFile {
        dim: run.len,
        dt: run.dt,
        origin_time: k as f64 * run.dt,
        seed,
        data: run.state(k).to_vec(),
    };
    f.write(path)?;
    Ok(())
}

fn spde_generic<M: GalerkinModel<f64>>(
    m: &M,
    s: &SpdeSection,
    seed: u64,
    dir: &Path,
    csv: bool,
    psi_tol: f64,
) -> Result<(Value, Option<String>), HarnessError> {
    let forcing = forcing_for(m, s)?;
    let split = LHSplit::from_forcing(&forcing);
    let nb = steps_of(s.burn_in, s.dt);
    let n = steps_of(s.horizon, s.dt);
    let zeros = vec![0.0; m.len()];
    match s.experiment {
        SpdeExperiment::Sync => {
            let u0 = if nb > 0 {
                let burn = simulate(m, &forcing, &zeros, s.dt, nb, seed)?;
                burn.state(nb).to_vec()
            } else {
                zeros
            };
            let ha = vec![0.0; split.high.len()];
            let hb = offset(m, &split, s.h0_amp);
            let r = sync_experiment(m, &forcing, &u0, s.dt, n, seed.wrapping_add(1), &ha, &hb)?;
            let stride = (r.times.len() / 10_000).max(1);
            let rows: Vec<Vec<f64>> = r
                .times
                .iter()
                .zip(&r.gaps)
                .step_by(stride)
                .map(|(&t, &g)| vec![t, g])
                .collect();
            emit_csv(&dir.join(format!("sync_seed{seed}.csv")), &["t", "gap"], &rows)?;
            let ratio = r.gaps.last().unwrap() / r.gaps[0];
            Ok((
                json!({
                    "fitted_rate": r.fitted_rate,
                    "gap_ratio": ratio,
                    "threshold_violation": r.threshold_violation,
                    "forced_modes": split.d(),
                    "n0": forcing.n0,
                    "n1": forcing.n1,
                }),
                None,
            ))
        }
        SpdeExperiment::Psi => {
            let run = simulate(m, &forcing, &zeros, s.dt, nb + n, seed)?;
            let last = run.n_rows() - 1;
            let ell = run.ell_rows(&split, last);
            let view = memsde_core::HistoryRef::new(split.d(), s.dt, &ell, Extension::Constant, 0.0);
            let h0a = vec![0.0; split.high.len()];
            let h0b = offset(m, &split, s.h0_amp);
            let ra = reconstruct_psi(m, &split, &view, &h0a, psi_tol, s.lookback, MAX_LOOKBACK_STEPS)?;
            let rb = reconstruct_psi(m, &split, &view, &h0b, psi_tol, s.lookback, MAX_LOOKBACK_STEPS)?;
            let (_, h_true) = split.split(run.state(last));
            let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| a - b).collect() };
            let h0_gap = high_u_norm(m, &split, &diff(&ra.h, &rb.h));
            let residual = high_u_norm(m, &split, &diff(&ra.h, &h_true));
            let rows: Vec<Vec<f64>> = (0..split.high.len())
                .map(|j| vec![split.high[j] as f64, ra.h[j], rb.h[j], h_true[j]])
                .collect();
            emit_csv(&dir.join(format!("psi_seed{seed}.csv")), &["index", "psi", "psi_alt_h0", "h"], &rows)?;
            write_state(&run, last, seed, &dir.join(format!("state_seed{seed}.msde")))?;
            if csv {
                let (l, _) = split.split(run.state(last));
                emit_csv(
                    &dir.join(format!("low_seed{seed}.csv")),
                    &["index", "l"],
                    &split.low.iter().zip(&l).map(|(&i, &v)| vec![i as f64, v]).collect::<Vec<_>>(),
                )?;
            }
            let check = (h0_gap >= psi_tol).then(|| format!("reconstructions from different h0 differ by {h0_gap}"));
            Ok((
                json!({
                    "lookback_steps": ra.lookback_steps,
                    "last_delta": ra.last_delta,
                    "h0_gap": h0_gap,
                    "residual": residual,
                }),
                check,
            ))
        }
        SpdeExperiment::Factor => {
            let lookbacks: Vec<usize> = (0..6).map(|j| s.lookback << j).collect();
            let lmax = *lookbacks.last().unwrap();
            let run = simulate(m, &forcing, &zeros, s.dt, nb + n, seed)?;
            let first = nb.max(lmax);
            let last = run.n_rows() - 1;
            if first > last {
                return Err(HarnessError::Validation(format!(
                    "`spde.horizon`: run of {last} steps is shorter than the largest lookback {lmax}"
                )));
            }
            let samples: Vec<usize> = (0..s.samples)
                .map(|i| first + (last - first) * i / s.samples.max(1))
                .collect();
            let per = lookbacks
                .par_iter()
                .map(|&l| factorization_residual(m, &split, &run, &samples, l, None).map(|r| (l, r)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut rows = Vec::new();
            let mut medians = Vec::new();
            for (l, res) in &per {
                for &(t, r) in res {
                    rows.push(vec![*l as f64, t, r]);
                }
                let v: Vec<f64> = res.iter().map(|p| p.1).collect();
                medians.push(json!({ "lookback": l, "median": memsde_core::stats::quantile(&v, 0.5) }));
            }
            emit_csv(&dir.join(format!("factor_seed{seed}.csv")), &["lookback", "t", "residual"], &rows)?;
            write_state(&run, last, seed, &dir.join(format!("state_seed{seed}.msde")))?;
            Ok((json!({ "medians": medians }), None))
        }
        SpdeExperiment::Probe => unreachable!("probes run through the Ginzburg-Landau path"),
    }
}

fn spde_probe(m: &GlModel<f64>, s: &SpdeSection, seed: u64, dir: &Path) -> Result<(Value, Option<String>), HarnessError> {
    let forcing = forcing_for(m, s)?;
    let split = LHSplit::from_forcing(&forcing);
    let consts = AssumptionConstants::gl(m, &split);
    let nb = steps_of(s.burn_in, s.dt);
    let n = steps_of(s.horizon, s.dt);
    let run = simulate(m, &forcing, &vec![0.0; m.len()], s.dt, nb + n, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(usize, usize)> = (0..s.samples)
        .map(|_| (rng.random_range(nb..=nb + n), rng.random_range(nb..=nb + n)))
        .collect();
    let mut rows = Vec::with_capacity(pairs.len());
    let mut failures = 0;
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let (u, v) = (run.state(i), run.state(j));
        let d = probe_dissipative(m, &split, u, v, &consts);
        let (l, h) = split.split(u);
        let (_, g) = split.split(v);
        let lp = probe_lip(m, &split, &l, &h, &g, &consts);
        failures += usize::from(!d.ok) + usize::from(!lp.ok);
        rows.push(vec![p as f64, i as f64, j as f64, d.lhs, d.rhs, lp.lhs, lp.rhs]);
    }
    emit_csv(
        &dir.join(format!("probe_seed{seed}.csv")),
        &["pair", "i", "j", "dissipative_lhs", "dissipative_rhs", "lip_lhs", "lip_rhs"],
        &rows,
    )?;
    let summary = json!({
        "pairs": pairs.len(),
        "failures": failures,
        "constants": {
            "c1": consts.c1, "c2": consts.c2, "c3": consts.c3, "p1": consts.p1, "p2": consts.p2,
            "c4": consts.c4, "p3": consts.p3, "p4": consts.p4,
        },
    });
    let check = (failures > 0).then(|| format!("{failures} probe inequalities failed"));
    Ok((summary, check))
}
