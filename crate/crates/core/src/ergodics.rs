//! Stationary measures and uniqueness probes.
//!
//! Occupation measures are built by time-averaging long trajectories pooled
//! over seeds. The remaining tools compare them (weighted two-sample KS),
//! bound their increments, weigh paths against each other (Girsanov) and
//! couple two pasts through one future.

use rayon::prelude::*;

use crate::drift::MemoryDrift;
use crate::error::{Error, Result};
use crate::pathspace::{concat, row_norm, FullPath, HistoryPath};
use crate::scalar::{snap_index, Real};
use crate::solver::{solve_cauchy_full, BlowupGuard, SolverConfig, WienerPath};
use crate::stats::fit_line;

/// Weighted samples of a marginal law.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    pub dim: usize,
    /// Row-major, one row per sample.
    pub samples: Vec<f64>,
    pub weights: Vec<f64>,
    pub t_window: f64,
    pub n_chains: usize,
}

impl OccupationMeasure {
    /// Uniform weights over `samples`.
    pub fn uniform(dim: usize, samples: Vec<f64>, t_window: f64, n_chains: usize) -> Result<Self> {
        if dim == 0 || samples.len() % dim != 0 {
            return Err(Error::invalid("samples", "length must be a multiple of dim"));
        }
        let n = samples.len() / dim;
        if n == 0 {
            return Err(Error::EmptyMeasure);
        }
        Ok(Self {
            dim,
            samples,
            weights: vec![1.0 / n as f64; n],
            t_window,
            n_chains,
        })
    }

    /// Compensated sum of the weights.
    pub fn total_weight(&self) -> f64 {
        neumaier_sum(&self.weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn coordinate(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().skip(c).step_by(self.dim).copied()
    }

    /// Pools two measures, weighting each by its share of the total window.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let total = self.t_window + other.t_window;
        let (fa, fb) = if total > 0.0 {
            (self.t_window / total, other.t_window / total)
        } else {
            (0.5, 0.5)
        };
        let mut weights: Vec<f64> = self.weights.iter().map(|w| w * fa).collect();
        weights.extend(other.weights.iter().map(|w| w * fb));
        let sum = neumaier_sum(&weights);
        weights.iter_mut().for_each(|w| *w /= sum);
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        Ok(Self {
            dim: self.dim,
            samples,
            weights,
            t_window: total,
            n_chains: self.n_chains + other.n_chains,
        })
    }

    /// Weighted mean of coordinate `c`.
    pub fn mean(&self, c: usize) -> f64 {
        self.coordinate(c).zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    /// Weighted variance of coordinate `c`.
    pub fn variance(&self, c: usize) -> f64 {
        let m = self.mean(c);
        self.coordinate(c)
            .zip(&self.weights)
            .map(|(x, w)| w * (x - m) * (x - m))
            .sum()
    }
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, PartialEq)]
pub struct KbConfig {
    pub horizon: f64,
    pub burn_in: f64,
    pub dt: f64,
    /// Keep every `thin`-th step.
    pub thin: usize,
    pub seeds: Vec<u64>,
}

impl KbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in > 0.0 && self.horizon > self.burn_in) {
            return Err(Error::invalid("burn_in", "need T > burn_in > 0"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "need at least one seed"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KbResult {
    pub measure: OccupationMeasure,
    /// Summed coordinate variances over the first and second half of the
    /// averaging window.
    pub half_variances: (f64, f64),
    /// Whether the two halves agree to within 20%.
    pub converged: bool,
}

/// Time-averaged marginal of one Cauchy solution per seed after burn-in.
pub fn krylov_bogoliubov<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    past: &HistoryPath<S>,
    cfg: &KbConfig,
) -> Result<KbResult> {
    cfg.validate()?;
    let dt = S::lit(cfg.dt);
    if past.dt() != dt {
        return Err(Error::DtMismatch {
            a: past.dt().f64(),
            b: cfg.dt,
        });
    }
    let scfg = SolverConfig::new(dt, S::lit(cfg.horizon));
    let n = scfg.n_steps();
    let start = snap_index(cfg.burn_in, cfg.dt).max(0) as usize;
    let mid = start + (n - start) / 2;
    let dim = a.dim();
    let chains: Vec<std::result::Result<(Vec<f64>, Vec<f64>), u64>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let path = solve_cauchy_full(a, past, seed, 0, &scfg, BlowupGuard::Norm).map_err(|_| seed)?;
            let fut = path.future();
            let mut first = Vec::new();
            let mut second = Vec::new();
            for k in (start..=n).step_by(cfg.thin) {
                let row = fut.row(k).iter().map(|v| v.f64());
                if k < mid {
                    first.extend(row);
                } else {
                    second.extend(row);
                }
            }
            Ok((first, second))
        })
        .collect();
    let failed: Vec<u64> = chains.iter().filter_map(|c| c.as_ref().err().copied()).collect();
    if !failed.is_empty() {
        return Err(Error::PartialFailure { failed_seeds: failed });
    }
    let window = cfg.horizon - cfg.burn_in;
    let mut measure: Option<OccupationMeasure> = None;
    let mut first_all = Vec::new();
    let mut second_all = Vec::new();
    for (first, second) in chains.into_iter().flatten() {
        first_all.extend_from_slice(&first);
        second_all.extend_from_slice(&second);
        let mut s = first;
        s.extend(second);
        let m = OccupationMeasure::uniform(dim, s, window, 1)?;
        measure = Some(match measure {
            None => m,
            Some(acc) => acc.merge(&m)?,
        });
    }
    let measure = measure.ok_or(Error::EmptyMeasure)?;
    let var = |v: Vec<f64>| -> Result<f64> {
        let m = OccupationMeasure::uniform(dim, v, 1.0, 1)?;
        Ok((0..dim).map(|c| m.variance(c)).sum())
    };
    let v1 = var(first_all)?;
    let v2 = var(second_all)?;
    let converged = (v1 - v2).abs() <= 0.2 * v1.max(v2);
    Ok(KbResult {
        measure,
        half_variances: (v1, v2),
        converged,
    })
}

fn ks_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut all: Vec<(f64, f64, bool)> = a
        .iter()
        .map(|&(x, w)| (x, w, true))
        .chain(b.iter().map(|&(x, w)| (x, w, false)))
        .collect();
    all.sort_by(|p, q| p.0.total_cmp(&q.0));
    let (mut fa, mut fb, mut d) = (0.0f64, 0.0f64, 0.0f64);
    let mut i = 0;
    while i < all.len() {
        let x = all[i].0;
        while i < all.len() && all[i].0 == x {
            if all[i].2 {
                fa += all[i].1;
            } else {
                fb += all[i].1;
            }
            i += 1;
        }
        d = d.max((fa - fb).abs());
    }
    d.min(1.0)
}

/// Weighted two-sample Kolmogorov-Smirnov statistic, maximised over coordinates.
pub fn marginal_distance(m1: &OccupationMeasure, m2: &OccupationMeasure) -> Result<f64> {
    if m1.is_empty() || m2.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if m1.dim != m2.dim {
        return Err(Error::DimMismatch {
            expected: m1.dim,
            found: m2.dim,
        });
    }
    let norm = |m: &OccupationMeasure, c: usize| -> Vec<(f64, f64)> {
        let s = m.total_weight();
        m.coordinate(c).zip(m.weights.iter().map(|w| w / s)).collect()
    };
    Ok((0..m1.dim)
        .map(|c| ks_1d(&norm(m1, c), &norm(m2, c)))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub lag: f64,
    pub z: f64,
    pub empirical_prob: f64,
    /// `C (z^-4 + z^-2) lag^2` with the reported `C`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailTable {
    pub rows: Vec<TailRow>,
    /// Smallest `C` for which every row passes.
    pub c_min: f64,
}

impl TailTable {
    pub fn dominated_by(&self, c: f64) -> bool {
        self.c_min <= c
    }
}

fn tail_shape(z: f64, lag: f64) -> f64 {
    (z.powi(-4) + z.powi(-2)) * lag * lag
}

/// Exceedance frequencies `P{|X(t + lag) - X(t)| > z}` over all grid times.
///
/// `traj` holds the rows of a trajectory on a grid of step `dt`.
pub fn increment_tail_check(
    traj: &[f64],
    dim: usize,
    dt: f64,
    lags: &[f64],
    z_grid: &[f64],
) -> Result<TailTable> {
    if dim == 0 || traj.len() % dim != 0 {
        return Err(Error::invalid("traj", "length must be a multiple of dim"));
    }
    let n = traj.len() / dim;
    let mut rows = Vec::with_capacity(lags.len() * z_grid.len());
    let mut c_min = 0.0f64;
    for &lag in lags {
        let k = snap_index(lag, dt);
        if k < 1 || k as usize >= n {
            return Err(Error::invalid("lags", format!("lag {lag} does not fit the trajectory")));
        }
        let k = k as usize;
        let incs: Vec<f64> = (0..n - k)
            .map(|i| {
                let d: Vec<f64> = (0..dim).map(|c| traj[(i + k) * dim + c] - traj[i * dim + c]).collect();
                row_norm(&d)
            })
            .collect();
        let eff_lag = k as f64 * dt;
        for &z in z_grid {
            if !(z > 0.0) {
                return Err(Error::invalid("z_grid", "levels must be positive"));
            }
            let hits = incs.iter().filter(|&&d| d > z).count();
            let p = hits as f64 / incs.len() as f64;
            c_min = c_min.max(p / tail_shape(z, eff_lag));
            rows.push(TailRow {
                lag: eff_lag,
                z,
                empirical_prob: p,
                bound: 0.0,
            });
        }
    }
    for r in &mut rows {
        r.bound = c_min * tail_shape(r.z, r.lag);
    }
    Ok(TailTable { rows, c_min })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GirsanovReport {
    pub log_density: f64,
    /// `1/2 int |D|^2 dt` up to the stopping step.
    pub novikov_stat: f64,
    /// Step at which the Novikov statistic would have exceeded the cap.
    pub truncated: Option<usize>,
}

pub const DEFAULT_NOVIKOV_CAP: f64 = 50.0;

/// Log of the stochastic exponent of `D = a1 - a2` along `traj` driven by `w`.
pub fn girsanov_logdensity<S: Real, D1: MemoryDrift<S> + ?Sized, D2: MemoryDrift<S> + ?Sized>(
    a1: &D1,
    a2: &D2,
    traj: &FullPath<S>,
    w: &WienerPath<S>,
    novikov_cap: f64,
) -> Result<GirsanovReport> {
    let dim = a1.dim();
    if a2.dim() != dim || traj.dim() != dim || w.dim != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            found: a2.dim().max(traj.dim()).max(w.dim),
        });
    }
    if w.dt != traj.dt() {
        return Err(Error::DtMismatch {
            a: w.dt.f64(),
            b: traj.dt().f64(),
        });
    }
    let steps = (traj.n_future() - 1).min(w.n_steps);
    let dt = traj.dt().f64();
    let mut d1 = vec![S::zero(); dim];
    let mut d2 = vec![S::zero(); dim];
    let mut log_density = 0.0;
    let mut novikov = 0.0;
    let mut truncated = None;
    for k in 0..steps {
        let view = traj.view_at_step(k as i64)?;
        a1.eval_into(&view, &mut d1)?;
        a2.eval_into(&view, &mut d2)?;
        let dw = w.increment(k);
        let mut ito = 0.0;
        let mut sq = 0.0;
        for c in 0..dim {
            let d = (d1[c] - d2[c]).f64();
            ito += d * dw[c].f64();
            sq += d * d;
        }
        let next = novikov + 0.5 * sq * dt;
        if next > novikov_cap {
            truncated = Some(k);
            break;
        }
        novikov = next;
        log_density += ito - 0.5 * sq * dt;
    }
    Ok(GirsanovReport {
        log_density,
        novikov_stat: novikov,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSeries {
    pub times: Vec<f64>,
    pub gaps: Vec<f64>,
    /// The common future `y`, one row per time.
    pub future: Vec<f64>,
    /// Slope of `log gap` against `t` over the points with `gap > 1e-14`.
    pub fitted_rate: Option<f64>,
    /// `sup_t gap(t) e^t`.
    pub fitted_c: f64,
}

/// Runs one future from `x1` and records `|a(pi_t(x1:y)) - a(pi_t(x2:y))|`.
pub fn coupling_experiment<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    x1: &HistoryPath<S>,
    x2: &HistoryPath<S>,
    seed: u64,
    cfg: &SolverConfig<S>,
) -> Result<CouplingSeries> {
    let p1 = solve_cauchy_full(a, x1, seed, 0, cfg, BlowupGuard::Norm)?;
    let y = p1.future();
    let p2 = concat(x2, &y)?;
    let dt = cfg.dt.f64();
    let n = y.len();
    let gaps: Vec<f64> = (0..n as i64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let g1 = a.eval(&p1.view_at_step(i)?)?;
            let g2 = a.eval(&p2.view_at_step(i)?)?;
            let d: Vec<S> = g1.iter().zip(&g2).map(|(&u, &v)| u - v).collect();
            Ok(row_norm(&d).f64())
        })
        .collect::<Result<_>>()?;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&gaps)
        .filter(|(_, &g)| g > 1e-14)
        .map(|(&t, &g)| (t, g.ln()))
        .unzip();
    let fitted_rate = fit_line(&xs, &ys).map(|f| f.slope);
    let fitted_c = times
        .iter()
        .zip(&gaps)
        .map(|(t, g)| g * t.exp())
        .fold(0.0, f64::max);
    Ok(CouplingSeries {
        times,
        gaps,
        future: y.chronological().iter().map(|v| v.f64()).collect(),
        fitted_rate,
        fitted_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{ConstantDrift, GaussianKernelDrift, LinearMarkovDrift, PathDependentKernelDrift};
    use crate::pathspace::Extension;
    use crate::solver::{euler_maruyama_full, sample_wiener};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn ks_trivial_cases() {
        let m = OccupationMeasure::uniform(1, normals(1, 100), 1.0, 1).unwrap();
        assert_eq!(marginal_distance(&m, &m).unwrap(), 0.0);
        let a = OccupationMeasure::uniform(1, vec![0.0], 1.0, 1).unwrap();
        let b = OccupationMeasure::uniform(1, vec![1.0], 1.0, 1).unwrap();
        assert_eq!(marginal_distance(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn ks_null_behaviour() {
        let a = OccupationMeasure::uniform(1, normals(2, 10_000), 1.0, 1).unwrap();
        let b = OccupationMeasure::uniform(1, normals(3, 10_000), 1.0, 1).unwrap();
        let d = marginal_distance(&a, &b).unwrap();
        assert!(d < 0.03, "{d}");
    }

    #[test]
    fn ks_ties_are_handled_jointly() {
        let a = OccupationMeasure::uniform(1, vec![0.0, 1.0], 1.0, 1).unwrap();
        let b = OccupationMeasure::uniform(1, vec![1.0, 0.0], 1.0, 1).unwrap();
        assert_eq!(marginal_distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn empty_measure_is_an_error() {
        assert!(matches!(
            OccupationMeasure::uniform(1, vec![], 1.0, 1),
            Err(Error::EmptyMeasure)
        ));
    }

    #[test]
    fn kb_ou_variance() {
        let dt = 1e-2;
        let past = HistoryPath::constant(dt, 1, &[0.0], Extension::Constant).unwrap();
        let cfg = KbConfig {
            horizon: 1000.0,
            burn_in: 10.0,
            dt,
            thin: 10,
            seeds: (0..8).collect(),
        };
        let r = krylov_bogoliubov(&LinearMarkovDrift::new(1, -1.0), &past, &cfg).unwrap();
        // Euler stationary variance at dt is 1/(2 - dt)
        let v = r.measure.variance(0);
        assert!((v - 1.0 / (2.0 - dt)).abs() < 0.05 / 2.0, "{v}");
        assert!(r.converged);
        assert!((r.measure.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kb_drift_free_is_flagged() {
        let dt = 1e-2;
        let past = HistoryPath::constant(dt, 1, &[0.0], Extension::Constant).unwrap();
        let cfg = KbConfig {
            horizon: 400.0,
            burn_in: 1.0,
            dt,
            thin: 10,
            seeds: (0..4).collect(),
        };
        let r = krylov_bogoliubov(&ConstantDrift::zero(1), &past, &cfg).unwrap();
        assert!(!r.converged, "{:?}", r.half_variances);
    }

    #[test]
    fn kb_reports_failed_seeds() {
        let dt = 1e-2;
        let past = HistoryPath::constant(dt, 1, &[1.0], Extension::Constant).unwrap();
        let cfg = KbConfig {
            horizon: 100.0,
            burn_in: 1.0,
            dt,
            thin: 1,
            seeds: vec![4, 5],
        };
        match krylov_bogoliubov(&LinearMarkovDrift::new(1, 1.0), &past, &cfg) {
            Err(Error::PartialFailure { failed_seeds }) => assert_eq!(failed_seeds, vec![4, 5]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kb_rejects_empty_seed_list() {
        let past = HistoryPath::constant(0.01, 1, &[0.0], Extension::Constant).unwrap();
        let cfg = KbConfig {
            horizon: 10.0,
            burn_in: 1.0,
            dt: 0.01,
            thin: 1,
            seeds: vec![],
        };
        assert!(krylov_bogoliubov(&LinearMarkovDrift::new(1, -1.0), &past, &cfg).is_err());
    }

    #[test]
    fn tails_drift_free() {
        let dt = 1e-2;
        let w = sample_wiener::<f64>(8, 0, 1, dt, 200_000).unwrap();
        let traj = w.cumulative();
        let lags = [0.01, 0.02, 0.05, 0.1];
        let zs = [0.05, 0.1, 0.2, 0.5, 1.0, 50.0];
        let t = increment_tail_check(&traj, 1, dt, &lags, &zs).unwrap();
        assert!(t.c_min <= 48.0, "{}", t.c_min);
        for r in &t.rows {
            assert!(r.empirical_prob <= r.bound + 1e-15);
            if r.z == 50.0 {
                assert_eq!(r.empirical_prob, 0.0);
            }
        }
        // the bound scales with lag^2
        let b1 = t.rows.iter().find(|r| r.lag == 0.05 && r.z == 1.0).unwrap().bound;
        let b2 = t.rows.iter().find(|r| r.lag == 0.1 && r.z == 1.0).unwrap().bound;
        assert!((b2 / b1 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn girsanov_identical_drifts() {
        let dt = 1e-2;
        let past = HistoryPath::constant(dt, 100, &[0.5], Extension::Constant).unwrap();
        let cfg = SolverConfig::new(dt, 1.0);
        let w = sample_wiener(1, 0, 1, dt, 100).unwrap();
        let a = GaussianKernelDrift::default();
        let traj = euler_maruyama_full(&a, &past, &w, &cfg, BlowupGuard::Norm).unwrap();
        let r = girsanov_logdensity(&a, &a, &traj, &w, DEFAULT_NOVIKOV_CAP).unwrap();
        assert_eq!(r.log_density, 0.0);
        assert_eq!(r.novikov_stat, 0.0);
        assert!(r.truncated.is_none());
    }

    #[test]
    fn girsanov_constant_pair_closed_form() {
        let dt = 1e-2;
        let mu = 0.7;
        let past = HistoryPath::constant(dt, 1, &[0.0], Extension::Constant).unwrap();
        let cfg = SolverConfig::new(dt, 1.0);
        let w = sample_wiener(2, 0, 1, dt, 100).unwrap();
        let a1 = ConstantDrift::zero(1);
        let a2 = ConstantDrift::new(vec![mu]);
        let traj = euler_maruyama_full(&a1, &past, &w, &cfg, BlowupGuard::Norm).unwrap();
        let r = girsanov_logdensity(&a1, &a2, &traj, &w, DEFAULT_NOVIKOV_CAP).unwrap();
        let wt: f64 = w.increments.iter().sum();
        let expect = -mu * wt - 0.5 * mu * mu * 1.0;
        assert!((r.log_density - expect).abs() < 1e-12, "{} vs {expect}", r.log_density);
        assert!((r.novikov_stat - 0.5 * mu * mu).abs() < 1e-12);

        let swapped = girsanov_logdensity(&a2, &a1, &traj, &w, DEFAULT_NOVIKOV_CAP).unwrap();
        assert_eq!(swapped.novikov_stat, r.novikov_stat);
    }

    #[test]
    fn girsanov_truncates_at_cap() {
        let dt = 1e-2;
        let past = HistoryPath::constant(dt, 1, &[0.0], Extension::Constant).unwrap();
        let cfg = SolverConfig::new(dt, 1.0);
        let w = sample_wiener(2, 0, 1, dt, 100).unwrap();
        let a1 = ConstantDrift::zero(1);
        let a2 = ConstantDrift::new(vec![20.0]);
        let traj = euler_maruyama_full(&a1, &past, &w, &cfg, BlowupGuard::Norm).unwrap();
        let r = girsanov_logdensity(&a1, &a2, &traj, &w, 50.0).unwrap();
        // 1/2 * 400 * k dt > 50 first at k = 25
        assert_eq!(r.truncated, Some(25));
        assert!(r.novikov_stat <= 50.0);
    }

    #[test]
    fn coupling_identical_pasts() {
        let dt = 1e-2;
        let x = HistoryPath::constant(dt, 800, &[0.4], Extension::Constant).unwrap();
        let s = coupling_experiment(&GaussianKernelDrift::default(), &x, &x, 3, &SolverConfig::new(dt, 5.0)).unwrap();
        assert!(s.gaps.iter().all(|&g| g == 0.0));
        assert!(s.fitted_rate.is_none());
    }

    #[test]
    fn coupling_markov_gap_vanishes() {
        let dt = 1e-2;
        let x1 = HistoryPath::constant(dt, 100, &[0.0], Extension::Constant).unwrap();
        let x2 = HistoryPath::from_fn(dt, 100, Extension::Constant, |t| if t < 0.0 { 1.0 } else { 0.0 }).unwrap();
        let s = coupling_experiment(&LinearMarkovDrift::new(1, -1.0), &x1, &x2, 3, &SolverConfig::new(dt, 5.0)).unwrap();
        assert!(s.gaps.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn coupling_gaussian_decays() {
        let dt = 1e-2;
        let x1 = HistoryPath::constant(dt, 800, &[0.0], Extension::Constant).unwrap();
        let x2 = HistoryPath::from_fn(dt, 800, Extension::Constant, |t| if t < 0.0 { 1.0 } else { 0.0 }).unwrap();
        let s = coupling_experiment(&GaussianKernelDrift::default(), &x1, &x2, 3, &SolverConfig::new(dt, 20.0)).unwrap();
        assert!(s.fitted_rate.unwrap() <= -0.9);
    }

    #[test]
    fn coupling_pathdep_square_integrable() {
        let dt = 1e-2;
        let x1 = HistoryPath::constant(dt, 800, &[0.0], Extension::Constant).unwrap();
        let x2 = HistoryPath::from_fn(dt, 800, Extension::Constant, |t| if t < 0.0 { 0.5 } else { 0.0 }).unwrap();
        let s = coupling_experiment(&PathDependentKernelDrift::default(), &x1, &x2, 5, &SolverConfig::new(dt, 40.0)).unwrap();
        let integral = |upto: f64| -> f64 {
            s.times
                .iter()
                .zip(&s.gaps)
                .filter(|(&t, _)| t <= upto)
                .map(|(_, g)| g * g * dt)
                .sum()
        };
        let (i20, i40) = (integral(20.0), integral(40.0));
        assert!(i40 - i20 <= 0.01 * i20.max(1e-300), "{i20} {i40}");
    }

    proptest! {
        #[test]
        fn ks_in_unit_interval(a in proptest::collection::vec(-5.0f64..5.0, 1..60), b in proptest::collection::vec(-5.0f64..5.0, 1..60)) {
            let ma = OccupationMeasure::uniform(1, a, 1.0, 1).unwrap();
            let mb = OccupationMeasure::uniform(1, b, 1.0, 1).unwrap();
            let d = marginal_distance(&ma, &mb).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(marginal_distance(&ma, &ma).unwrap(), 0.0);
        }

        #[test]
        fn merge_is_associative(a in proptest::collection::vec(-5.0f64..5.0, 1..20), b in proptest::collection::vec(-5.0f64..5.0, 1..20), c in proptest::collection::vec(-5.0f64..5.0, 1..20), ta in 0.5f64..3.0, tb in 0.5f64..3.0, tc in 0.5f64..3.0) {
            let ma = OccupationMeasure::uniform(1, a, ta, 1).unwrap();
            let mb = OccupationMeasure::uniform(1, b, tb, 1).unwrap();
            let mc = OccupationMeasure::uniform(1, c, tc, 1).unwrap();
            let left = ma.merge(&mb).unwrap().merge(&mc).unwrap();
            let right = ma.merge(&mb.merge(&mc).unwrap()).unwrap();
            prop_assert!((left.total_weight() - 1.0).abs() < 1e-12);
            for (x, y) in left.weights.iter().zip(&right.weights) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
