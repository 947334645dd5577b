use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use memsde::config::{ExperimentConfig, ExperimentKind, SpdeExperiment, SpdeModel, SpdeSection};
use memsde::{run_experiment, HarnessError, RunOptions};

/// Experiments on SDEs with memory and reduced stochastic PDEs.
#[derive(Parser)]
#[command(name = "memsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Cauchy problem per seed and store trajectories.
    Simulate(Common),
    /// Krylov-Bogoliubov occupation measure over all seeds.
    Kb(Common),
    /// Drift gap between two pasts along a shared future.
    Couple(Common),
    /// Girsanov log-densities between two drifts.
    Girsanov(Common),
    /// Increment tail table against the moment bound.
    Tails(Common),
    /// Monte Carlo audit of the Lyapunov generator inequality.
    LyapunovAudit(Common),
    /// Galerkin SPDE experiments.
    Spde(SpdeArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct OutArgs {
    /// Replace the configured seed list with this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write trajectories as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Gl,
    Nse,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Sync,
    Psi,
    Factor,
    Probe,
}

#[derive(Args)]
struct SpdeArgs {
    model: ModelArg,
    /// Base config; flags override its `[spde]` values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nu: Option<f64>,
    /// Force every mode with |k| <= n0.
    #[arg(long)]
    n0: Option<f64>,
    /// Highest retained wavenumber.
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum)]
    experiment: Option<ExperimentArg>,
    #[command(flatten)]
    out: OutArgs,
}

fn load(path: &PathBuf, expect: ExperimentKind) -> Result<ExperimentConfig, HarnessError> {
    let cfg = ExperimentConfig::load(path)?;
    if cfg.experiment != expect {
        return Err(HarnessError::Validation(format!(
            "`experiment`: config declares `{}` but the subcommand is `{}`",
            cfg.experiment.name(),
            expect.name()
        )));
    }
    Ok(cfg)
}

fn missing(flag: &str) -> HarnessError {
    HarnessError::Validation(format!("`spde.{flag}`: pass --{flag} or set it in the config"))
}

fn spde_config(a: &SpdeArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &a.config {
        Some(p) => load(p, ExperimentKind::Spde)?,
        None => ExperimentConfig {
            experiment: ExperimentKind::Spde,
            seeds: vec![0],
            out_dir: None,
            drift: None,
            past: None,
            solver: None,
            kb: None,
            couple: None,
            girsanov: None,
            tails: None,
            audit: None,
            spde: None,
            tolerances: Default::default(),
            sweep: None,
        },
    };
    let model = match a.model {
        ModelArg::Gl => SpdeModel::Gl,
        ModelArg::Nse => SpdeModel::Nse,
    };
    let experiment = a.experiment.map(|e| match e {
        ExperimentArg::Sync => SpdeExperiment::Sync,
        ExperimentArg::Psi => SpdeExperiment::Psi,
        ExperimentArg::Factor => SpdeExperiment::Factor,
        ExperimentArg::Probe => SpdeExperiment::Probe,
    });
    let base = cfg.spde.take();
    let pick = |flag: Option<f64>, from: Option<f64>, name: &str| flag.or(from).ok_or_else(|| missing(name));
    let spde = SpdeSection {
        model,
        experiment: experiment
            .or(base.as_ref().map(|s| s.experiment))
            .ok_or_else(|| missing("experiment"))?,
        nu: pick(a.nu, base.as_ref().map(|s| s.nu), "nu")?,
        n0: pick(a.n0, base.as_ref().map(|s| s.n0), "n0")?,
        cutoff: a
            .cutoff
            .or(base.as_ref().map(|s| s.cutoff))
            .ok_or_else(|| missing("cutoff"))?,
        dt: pick(a.dt, base.as_ref().map(|s| s.dt), "dt")?,
        horizon: pick(a.horizon, base.as_ref().map(|s| s.horizon), "horizon")?,
        amp: base.as_ref().map_or(1.0, |s| s.amp),
        burn_in: base.as_ref().map_or(0.0, |s| s.burn_in),
        h0_amp: base.as_ref().map_or(0.1, |s| s.h0_amp),
        lookback: base.as_ref().map_or(16, |s| s.lookback),
        samples: base.as_ref().map_or(100, |s| s.samples),
    };
    cfg.spde = Some(spde);
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<i32, HarnessError> {
    let (mut cfg, out) = match &cli.command {
        Command::Simulate(c) => (load(&c.config, ExperimentKind::Simulate)?, &c.out),
        Command::Kb(c) => (load(&c.config, ExperimentKind::Kb)?, &c.out),
        Command::Couple(c) => (load(&c.config, ExperimentKind::Couple)?, &c.out),
        Command::Girsanov(c) => (load(&c.config, ExperimentKind::Girsanov)?, &c.out),
        Command::Tails(c) => (load(&c.config, ExperimentKind::Tails)?, &c.out),
        Command::LyapunovAudit(c) => (load(&c.config, ExperimentKind::LyapunovAudit)?, &c.out),
        Command::Spde(a) => (spde_config(a)?, &a.out),
    };
    if let Some(s) = out.seed {
        cfg.seeds = vec![s];
    }
    let opts = RunOptions {
        out: out.out.clone(),
        csv: out.csv,
    };
    let manifest = run_experiment(&cfg, &opts)?;
    for p in &manifest.points {
        for t in &p.tasks {
            let label = if p.label.is_empty() { String::new() } else { format!("{}/", p.label) };
            match &t.message {
                Some(m) => println!("{:?} {label}{}: {m}", t.status, t.name),
                None => println!("{:?} {label}{}", t.status, t.name),
            }
        }
    }
    let base = opts.out.or(cfg.out_dir).unwrap_or_else(|| PathBuf::from("runs"));
    println!("run directory: {}", base.join(&manifest.config_hash[..12]).display());
    Ok(manifest.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
