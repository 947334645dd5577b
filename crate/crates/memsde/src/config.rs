//! Experiment configuration.
//!
//! Configs are TOML with strict keys. A minimal example:
//!
//! ```toml
//! experiment = "simulate"
//! seeds = [1, 2]
//!
//! [drift]
//! kind = "gaussian_kernel"
//!
//! [past]
//! value = [0.5]
//! window = 10.0
//!
//! [solver]
//! dt = 0.01
//! horizon = 100.0
//! ```
//!
//! A `[sweep]` table lists values for `n0`, `nu`, `dt` or `seed`; the run
//! expands into the cartesian product, one output subdirectory per point.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Kb,
    Couple,
    Girsanov,
    Tails,
    LyapunovAudit,
    Spde,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Kb => "kb",
            ExperimentKind::Couple => "couple",
            ExperimentKind::Girsanov => "girsanov",
            ExperimentKind::Tails => "tails",
            ExperimentKind::LyapunovAudit => "lyapunov-audit",
            ExperimentKind::Spde => "spde",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    GaussianKernel {
        tail_tol: Option<f64>,
    },
    PathdepKernel {
        finiteness_cap: Option<f64>,
        tail_tol: Option<f64>,
    },
    MarkovLinear {
        dim: Option<usize>,
        slope: Option<f64>,
    },
    /// Low modes of the model in `[spde]`, in noise-scaled coordinates.
    ReducedPde {
        lookback_steps: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionKind {
    #[default]
    Constant,
    Zero,
}

/// A constant past on `[-window, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PastConfig {
    pub value: Vec<f64>,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default)]
    pub extension: ExtensionKind,
}

fn default_window() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Euler,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub method: Method,
    pub blowup_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbSection {
    pub burn_in: f64,
    #[serde(default = "one")]
    pub thin: usize,
}

fn one() -> usize {
    1
}

/// Pasts `value_a` and `value_b` on `[-window, -dt]`, both equal to `value_a` at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSection {
    pub value_a: Vec<f64>,
    pub value_b: Vec<f64>,
    #[serde(default = "default_window")]
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovSection {
    pub n_paths: usize,
    /// Drift of the reference law; paths are simulated under `[drift]`.
    pub drift_b: DriftConfig,
    pub novikov_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsSection {
    pub lags: Vec<f64>,
    pub z: Vec<f64>,
    #[serde(default)]
    pub burn_in: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    pub n_points: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_dt_probe")]
    pub dt_probe: f64,
    #[serde(default)]
    pub burn_in: f64,
}

fn default_m() -> usize {
    200
}

fn default_dt_probe() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpdeModel {
    Gl,
    Nse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpdeExperiment {
    Sync,
    Psi,
    Factor,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdeSection {
    pub model: SpdeModel,
    pub experiment: SpdeExperiment,
    pub nu: f64,
    /// Every mode with `|k| <= n0` is forced.
    pub n0: f64,
    /// Highest retained wavenumber `K` (per axis for the torus).
    pub cutoff: usize,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "unit")]
    pub amp: f64,
    #[serde(default)]
    pub burn_in: f64,
    /// Size of the initial high-mode offset in sync runs.
    #[serde(default = "default_h0_amp")]
    pub h0_amp: f64,
    /// Starting lookback, in steps, for reconstructions.
    #[serde(default = "default_lookback")]
    pub lookback: usize,
    /// Probe pairs or factorization samples.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn unit() -> f64 {
    1.0
}

fn default_h0_amp() -> f64 {
    0.1
}

fn default_lookback() -> usize {
    16
}

fn default_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// U-norm tolerance of the lookback doubling.
    pub psi_tol: Option<f64>,
    /// Largest acceptable constant in the increment tail bound.
    pub tail_c_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub n0: Option<Vec<f64>>,
    pub nu: Option<Vec<f64>>,
    pub dt: Option<Vec<f64>>,
    pub seed: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub drift: Option<DriftConfig>,
    pub past: Option<PastConfig>,
    pub solver: Option<SolverSection>,
    pub kb: Option<KbSection>,
    pub couple: Option<CoupleSection>,
    pub girsanov: Option<GirsanovSection>,
    pub tails: Option<TailsSection>,
    pub audit: Option<AuditSection>,
    pub spde: Option<SpdeSection>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub sweep: Option<Sweep>,
}

/// One expanded sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub config: ExperimentConfig,
}

fn invalid(key: &str, reason: impl std::fmt::Display) -> HarnessError {
    HarnessError::Validation(format!("`{key}`: {reason}"))
}

fn positive(key: &str, v: f64) -> Result<(), HarnessError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

fn require<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T, HarnessError> {
    v.as_ref().ok_or_else(|| invalid(key, "section is required for this experiment"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Validation(e.message().to_owned()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn drift_dim(&self) -> Result<usize, HarnessError> {
        match require(&self.drift, "drift")? {
            DriftConfig::MarkovLinear { dim, .. } => Ok(dim.unwrap_or(1)),
            DriftConfig::GaussianKernel { .. } | DriftConfig::PathdepKernel { .. } => Ok(1),
            DriftConfig::ReducedPde { .. } => {
                let s = require(&self.spde, "spde")?;
                crate::run::reduced_dim(s).map_err(|e| invalid("spde", e))
            }
        }
    }

    /// Checks every key the named experiment reads.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if let Some(sw) = &self.sweep {
            for (k, n) in [
                ("sweep.n0", sw.n0.as_ref().map(Vec::len)),
                ("sweep.nu", sw.nu.as_ref().map(Vec::len)),
                ("sweep.dt", sw.dt.as_ref().map(Vec::len)),
                ("sweep.seed", sw.seed.as_ref().map(Vec::len)),
            ] {
                if n == Some(0) {
                    return Err(invalid(k, "must list at least one value"));
                }
            }
            if (sw.n0.is_some() || sw.nu.is_some()) && self.spde.is_none() {
                return Err(invalid("sweep", "n0 and nu sweeps need an [spde] section"));
            }
        }
        for p in self.expand() {
            p.config.validate_point()?;
        }
        Ok(())
    }

    fn validate_point(&self) -> Result<(), HarnessError> {
        use ExperimentKind::*;
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if let Some(t) = self.tolerances.psi_tol {
            positive("tolerances.psi_tol", t)?;
        }
        if let Some(t) = self.tolerances.tail_c_max {
            positive("tolerances.tail_c_max", t)?;
        }
        if self.experiment == Spde {
            return self.validate_spde();
        }
        let drift = require(&self.drift, "drift")?;
        validate_drift(drift, "drift", self)?;
        let solver = require(&self.solver, "solver")?;
        positive("solver.dt", solver.dt)?;
        positive("solver.horizon", solver.horizon)?;
        if solver.horizon < solver.dt {
            return Err(invalid("solver.horizon", "must cover at least one step"));
        }
        if let Some(r) = solver.blowup_radius {
            positive("solver.blowup_radius", r)?;
        }
        let dim = self.drift_dim()?;
        let check_value = |key: &str, v: &[f64]| -> Result<(), HarnessError> {
            if v.len() != dim {
                return Err(invalid(key, format!("needs {dim} components, got {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(key, "must be finite"));
            }
            Ok(())
        };
        if self.experiment != Couple {
            let past = require(&self.past, "past")?;
            check_value("past.value", &past.value)?;
            positive("past.window", past.window)?;
        }
        match self.experiment {
            Simulate | Spde => {}
            Kb => {
                let kb = require(&self.kb, "kb")?;
                positive("kb.burn_in", kb.burn_in)?;
                if kb.burn_in >= solver.horizon {
                    return Err(invalid("kb.burn_in", "must be below solver.horizon"));
                }
                if kb.thin == 0 {
                    return Err(invalid("kb.thin", "must be at least 1"));
                }
            }
            Couple => {
                let c = require(&self.couple, "couple")?;
                check_value("couple.value_a", &c.value_a)?;
                check_value("couple.value_b", &c.value_b)?;
                positive("couple.window", c.window)?;
            }
            Girsanov => {
                let g = require(&self.girsanov, "girsanov")?;
                if g.n_paths == 0 {
                    return Err(invalid("girsanov.n_paths", "must be at least 1"));
                }
                validate_drift(&g.drift_b, "girsanov.drift_b", self)?;
                let dim_b = match &g.drift_b {
                    DriftConfig::MarkovLinear { dim, .. } => dim.unwrap_or(1),
                    DriftConfig::ReducedPde { .. } => dim,
                    _ => 1,
                };
                if dim_b != dim {
                    return Err(invalid("girsanov.drift_b", format!("dimension {dim_b} differs from drift dimension {dim}")));
                }
                if let Some(c) = g.novikov_cap {
                    positive("girsanov.novikov_cap", c)?;
                }
            }
            Tails => {
                let t = require(&self.tails, "tails")?;
                if t.lags.is_empty() || t.z.is_empty() {
                    return Err(invalid("tails", "lags and z must be non-empty"));
                }
                for &l in &t.lags {
                    positive("tails.lags", l)?;
                }
                for &z in &t.z {
                    positive("tails.z", z)?;
                }
                if !(t.burn_in >= 0.0 && t.burn_in < solver.horizon) {
                    return Err(invalid("tails.burn_in", "must lie in [0, horizon)"));
                }
            }
            LyapunovAudit => {
                let a = require(&self.audit, "audit")?;
                if a.n_points == 0 {
                    return Err(invalid("audit.n_points", "must be at least 1"));
                }
                if a.m < 100 {
                    return Err(invalid("audit.m", "needs at least 100 continuations"));
                }
                positive("audit.dt_probe", a.dt_probe)?;
                if matches!(drift, DriftConfig::ReducedPde { .. }) {
                    return Err(invalid("drift.kind", "reduced_pde has no Lyapunov functional to audit"));
                }
                if !(a.burn_in >= 0.0 && a.burn_in < solver.horizon) {
                    return Err(invalid("audit.burn_in", "must lie in [0, horizon)"));
                }
            }
        }
        Ok(())
    }

    fn validate_spde(&self) -> Result<(), HarnessError> {
        let s = require(&self.spde, "spde")?;
        positive("spde.nu", s.nu)?;
        positive("spde.dt", s.dt)?;
        positive("spde.horizon", s.horizon)?;
        positive("spde.amp", s.amp)?;
        if !(s.n0 >= 0.0) {
            return Err(invalid("spde.n0", "must be nonnegative"));
        }
        if !(s.burn_in >= 0.0) {
            return Err(invalid("spde.burn_in", "must be nonnegative"));
        }
        let min_cutoff = if s.model == SpdeModel::Nse { 2 } else { 1 };
        if s.cutoff < min_cutoff {
            return Err(invalid("spde.cutoff", format!("must be at least {min_cutoff}")));
        }
        if s.n0 >= s.cutoff as f64 {
            return Err(invalid("spde.n0", "must leave unforced modes below the cutoff"));
        }
        if s.model == SpdeModel::Nse && s.n0 < 1.0 {
            return Err(invalid("spde.n0", "the torus has no constant mode; force at least |k| = 1"));
        }
        if s.experiment == SpdeExperiment::Probe && s.model != SpdeModel::Gl {
            return Err(invalid("spde.model", "assumption probes use the Ginzburg-Landau constants"));
        }
        if matches!(s.experiment, SpdeExperiment::Probe | SpdeExperiment::Factor) && s.samples == 0 {
            return Err(invalid("spde.samples", "must be at least 1"));
        }
        if s.lookback == 0 {
            return Err(invalid("spde.lookback", "must be at least 1"));
        }
        if (s.horizon / s.dt).round() < 1.0 {
            return Err(invalid("spde.horizon", "must cover at least one step"));
        }
        Ok(())
    }

    /// Cartesian product of the sweep lists; a single point without a sweep.
    pub fn expand(&self) -> Vec<SweepPoint> {
        let Some(sw) = &self.sweep else {
            return vec![SweepPoint {
                label: String::new(),
                config: self.clone(),
            }];
        };
        let mut points = vec![(String::new(), {
            let mut c = self.clone();
            c.sweep = None;
            c
        })];
        let mut axis = |name: &str, values: Option<Vec<String>>, apply: &dyn Fn(&mut ExperimentConfig, usize)| {
            let Some(values) = values else { return };
            points = points
                .iter()
                .flat_map(|(label, cfg)| {
                    values.iter().enumerate().map(move |(i, v)| {
                        let mut c = cfg.clone();
                        apply(&mut c, i);
                        let l = if label.is_empty() {
                            format!("{name}-{v}")
                        } else {
                            format!("{label}_{name}-{v}")
                        };
                        (l, c)
                    })
                })
                .collect();
        };
        let fmt = |v: &Option<Vec<f64>>| v.as_ref().map(|v| v.iter().map(|x| format!("{x}")).collect());
        let n0 = sw.n0.clone();
        axis("n0", fmt(&sw.n0), &|c, i| {
            if let Some(s) = c.spde.as_mut() {
                s.n0 = n0.as_ref().unwrap()[i];
            }
        });
        let nu = sw.nu.clone();
        axis("nu", fmt(&sw.nu), &|c, i| {
            if let Some(s) = c.spde.as_mut() {
                s.nu = nu.as_ref().unwrap()[i];
            }
        });
        let dt = sw.dt.clone();
        axis("dt", fmt(&sw.dt), &|c, i| {
            let v = dt.as_ref().unwrap()[i];
            if let Some(s) = c.solver.as_mut() {
                s.dt = v;
            }
            if let Some(s) = c.spde.as_mut() {
                s.dt = v;
            }
        });
        let seed = sw.seed.clone();
        axis(
            "seed",
            sw.seed.as_ref().map(|v| v.iter().map(|x| x.to_string()).collect()),
            &|c, i| c.seeds = vec![seed.as_ref().unwrap()[i]],
        );
        points
            .into_iter()
            .enumerate()
            .map(|(i, (label, config))| SweepPoint {
                label: format!("p{i:03}_{label}"),
                config,
            })
            .collect()
    }
}

fn validate_drift(d: &DriftConfig, key: &str, cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    match d {
        DriftConfig::GaussianKernel { tail_tol } => {
            if let Some(t) = tail_tol {
                positive(&format!("{key}.tail_tol"), *t)?;
            }
        }
        DriftConfig::PathdepKernel { finiteness_cap, tail_tol } => {
            if let Some(t) = tail_tol {
                positive(&format!("{key}.tail_tol"), *t)?;
            }
            if let Some(c) = finiteness_cap {
                positive(&format!("{key}.finiteness_cap"), *c)?;
            }
        }
        DriftConfig::MarkovLinear { dim, slope } => {
            if *dim == Some(0) {
                return Err(invalid(&format!("{key}.dim"), "must be at least 1"));
            }
            if let Some(s) = slope {
                if !s.is_finite() {
                    return Err(invalid(&format!("{key}.slope"), "must be finite"));
                }
            }
        }
        DriftConfig::ReducedPde { lookback_steps } => {
            if *lookback_steps == Some(0) {
                return Err(invalid(&format!("{key}.lookback_steps"), "must be at least 1"));
            }
            if cfg.spde.is_none() {
                return Err(invalid("spde", "reduced_pde drift reads the model from [spde]"));
            }
            cfg.validate_spde()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIM: &str = r#"
experiment = "simulate"
seeds = [3]

[drift]
kind = "gaussian_kernel"

[past]
value = [0.5]

[solver]
dt = 0.01
horizon = 1.0
"#;

    #[test]
    fn parses_and_roundtrips() {
        let c = ExperimentConfig::from_toml(SIM).unwrap();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SIM.replace("horizon = 1.0", "horizon = 1.0\nhorizn = 2.0");
        let e = ExperimentConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(e.contains("horizn"), "{e}");
        let bad = SIM.replace("kind = \"gaussian_kernel\"", "kind = \"gaussian_kernel\"\nslope = 1.0");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SIM.replace("gaussian_kernel", "gauss");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn validation_names_the_key() {
        let c = ExperimentConfig::from_toml(&SIM.replace("dt = 0.01", "dt = -0.01")).unwrap();
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("solver.dt"), "{e}");
        let c = ExperimentConfig::from_toml(&SIM.replace("value = [0.5]", "value = [0.5, 1.0]")).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("past.value"));
    }

    #[test]
    fn sweep_expands_cartesian() {
        let text = r#"
experiment = "spde"
[spde]
model = "gl"
experiment = "sync"
nu = 1.0
n0 = 2.0
cutoff = 8
dt = 0.001
horizon = 1.0
[sweep]
n0 = [1.0, 2.0, 3.0]
nu = [0.5, 1.0]
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        let pts = c.expand();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].label, "p000_n0-1_nu-0.5");
        assert_eq!(pts[5].config.spde.as_ref().unwrap().n0, 3.0);
        assert_eq!(pts[5].config.spde.as_ref().unwrap().nu, 1.0);
        assert!(pts.iter().all(|p| p.config.sweep.is_none()));
    }
}
