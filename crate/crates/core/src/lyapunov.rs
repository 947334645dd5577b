//! Lyapunov functionals with memory and the Monte Carlo checks built on them.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::drift::{GaussianKernelDrift, KernelIntegral, MemoryDrift, PathDependentKernelDrift};
use crate::error::{Error, Result};
use crate::pathspace::{FullPath, HistoryPath, HistoryRef};
use crate::scalar::{snap_index, Real};
use crate::solver::{euler_maruyama_full, sample_wiener, BlowupGuard, SolverConfig};
use crate::stats::{fit_line, quantile, LineFit, Moments};

/// A functional `V` on pasts, possibly `+inf`.
pub trait LyapunovFunctional<S: Real>: Send + Sync {
    fn value(&self, x: &HistoryRef<'_, S>) -> S;
}

impl<S: Real, F: Fn(&HistoryRef<'_, S>) -> S + Send + Sync> LyapunovFunctional<S> for F {
    fn value(&self, x: &HistoryRef<'_, S>) -> S {
        self(x)
    }
}

/// The Lyapunov functionals of the bundled drifts.
#[derive(Debug, Clone)]
pub enum ExampleV<S> {
    /// `x(0)^2 + Psi(x)^2` with the Gaussian kernel.
    Ex61(GaussianKernelDrift<S>),
    /// `x(0)^2 + Psi_hat(x)^2`; `+inf` when `Psi_hat` is infinite or overflows.
    Ex62(PathDependentKernelDrift<S>),
    /// `|x(0)|^2`.
    Quadratic,
}

impl<S: Real> ExampleV<S> {
    pub fn ex61() -> Self {
        ExampleV::Ex61(GaussianKernelDrift::default())
    }

    pub fn ex62() -> Self {
        ExampleV::Ex62(PathDependentKernelDrift::default())
    }
}

impl<S: Real> LyapunovFunctional<S> for ExampleV<S> {
    fn value(&self, x: &HistoryRef<'_, S>) -> S {
        let x0 = x.present();
        let sq: S = x0.iter().map(|&v| v * v).sum();
        match self {
            ExampleV::Quadratic => sq,
            ExampleV::Ex61(d) => {
                let p = d.psi(x);
                sq + p * p
            }
            ExampleV::Ex62(d) => match d.psi_hat(x) {
                Ok(KernelIntegral::Finite(p)) => sq + p * p,
                Ok(KernelIntegral::Infinite) | Err(_) => S::infinity(),
            },
        }
    }
}

/// Which bundled functional to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    Ex61,
    Ex62,
}

pub fn eval_v_example<S: Real>(which: Example, x: &HistoryRef<'_, S>) -> Result<S> {
    if x.dim() != 1 {
        return Err(Error::DimMismatch {
            expected: 1,
            found: x.dim(),
        });
    }
    Ok(match which {
        Example::Ex61 => ExampleV::ex61().value(x),
        Example::Ex62 => ExampleV::ex62().value(x),
    })
}

/// `V` together with the constants of `h < C1 - C2 V^gamma`, `|f| <= C3 V^delta`
/// and `V >= C0 |x(0)|^l`.
#[derive(Clone)]
pub struct LyapunovSpec<S: Real> {
    pub v: Arc<dyn LyapunovFunctional<S>>,
    pub c0: S,
    pub l: S,
    pub c1: S,
    pub c2: S,
    pub gamma: S,
    pub delta: S,
    pub c3: S,
}

impl<S: Real> std::fmt::Debug for LyapunovSpec<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LyapunovSpec")
            .field("c0", &self.c0)
            .field("l", &self.l)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("gamma", &self.gamma)
            .field("delta", &self.delta)
            .field("c3", &self.c3)
            .finish_non_exhaustive()
    }
}

impl<S: Real> LyapunovSpec<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        v: Arc<dyn LyapunovFunctional<S>>,
        c0: S,
        l: S,
        c1: S,
        c2: S,
        gamma: S,
        delta: S,
        c3: S,
    ) -> Result<Self> {
        let spec = Self {
            v,
            c0,
            l,
            c1,
            c2,
            gamma,
            delta,
            c3,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ex61() -> Self {
        Self::new(
            Arc::new(ExampleV::ex61()),
            S::one(),
            S::lit(2.0),
            S::one(),
            S::one(),
            S::one(),
            S::lit(0.5),
            S::lit(2.0),
        )
        .expect("constants are valid")
    }

    pub fn ex62() -> Self {
        Self::new(
            Arc::new(ExampleV::ex62()),
            S::one(),
            S::lit(2.0),
            S::one(),
            S::lit(2.0),
            S::one(),
            S::lit(0.5),
            S::lit(2.0),
        )
        .expect("constants are valid")
    }

    /// `V = |x(0)|^2` for Markov drifts such as `-x(0)`.
    pub fn markov_quadratic() -> Self {
        Self::new(
            Arc::new(ExampleV::<S>::Quadratic),
            S::one(),
            S::lit(2.0),
            S::one(),
            S::lit(2.0),
            S::one(),
            S::lit(0.5),
            S::lit(2.0),
        )
        .expect("constants are valid")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("C0", self.c0),
            ("l", self.l),
            ("C1", self.c1),
            ("C2", self.c2),
            ("gamma", self.gamma),
            ("C3", self.c3),
        ] {
            if !(v > S::zero()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.delta >= S::zero() && self.delta < (S::one() + self.gamma) / S::lit(2.0)) {
            return Err(Error::invalid("delta", "must lie in [0, (1 + gamma)/2)"));
        }
        Ok(())
    }

    pub fn value(&self, x: &HistoryRef<'_, S>) -> S {
        self.v.value(x)
    }

    /// `C1 / C2`.
    pub fn average_bound(&self) -> S {
        self.c1 / self.c2
    }

    /// Checks `V(x) >= C0 |x(0)|^l`.
    pub fn check_lower_bound(&self, x: &HistoryRef<'_, S>) -> bool {
        let v = self.value(x);
        let n = crate::pathspace::row_norm(x.present());
        v >= self.c0 * n.powf(self.l) * (S::one() - S::lit(1e-12))
    }
}

/// Monte Carlo estimate of the Ito drift `h(x)` of `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Mean of `[V increment]^2 / dt_probe`, the footprint of `f^2`.
    pub diffusion_sq: f64,
    pub excluded: usize,
    pub used: usize,
}

/// Averages `[V(pi_{dt_probe} X) - V(x)] / dt_probe` over `m` continuations of `x`.
///
/// Each continuation takes `round(dt_probe / x.dt)` Euler steps on its own
/// stream; continuations that blow up are excluded.
pub fn generator_drift_estimate<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    spec: &LyapunovSpec<S>,
    x: &HistoryPath<S>,
    m: usize,
    dt_probe: S,
    seed: u64,
) -> Result<GeneratorEstimate> {
    if m < 100 {
        return Err(Error::invalid("m", "need at least 100 continuations"));
    }
    let dt = x.dt();
    let k = snap_index(dt_probe, dt).max(1) as usize;
    let h = S::from_usize_lossy(k) * dt;
    let v0 = spec.value(&x.view());
    if !v0.is_finite() {
        return Err(Error::InfiniteValue { index: 0 });
    }
    let cfg = SolverConfig::new(dt, h);
    let results: Vec<Option<(f64, f64)>> = (0..m as u64)
        .into_par_iter()
        .map(|stream| {
            let w = sample_wiener(seed, stream, a.dim(), dt, k).ok()?;
            let path = euler_maruyama_full(a, x, &w, &cfg, BlowupGuard::Norm).ok()?;
            let end = path.view_at_step(k as i64).ok()?;
            let v1 = spec.value(&end);
            if !v1.is_finite() {
                return None;
            }
            let dv = (v1 - v0).f64();
            Some((dv / h.f64(), dv * dv / h.f64()))
        })
        .collect();
    let mut mom = Moments::default();
    let mut diff = Moments::default();
    let mut excluded = 0;
    for r in results {
        match r {
            Some((g, q)) => {
                mom.push(g);
                diff.push(q);
            }
            None => excluded += 1,
        }
    }
    if excluded * 10 > m {
        return Err(Error::UnreliableEstimate { excluded, total: m });
    }
    Ok(GeneratorEstimate {
        estimate: mom.mean(),
        std_error: mom.std_error(),
        diffusion_sq: diff.mean(),
        excluded,
        used: mom.count,
    })
}

/// One row of a generator audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRow {
    pub v: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// `C1 - C2 V^gamma`.
    pub bound: f64,
    pub ok: bool,
}

/// Checks `h(x) <= C1 - C2 V(x)^gamma + 3 SE` on each path.
pub fn audit_generator<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    spec: &LyapunovSpec<S>,
    paths: &[HistoryPath<S>],
    m: usize,
    dt_probe: S,
    seed: u64,
) -> Result<Vec<AuditRow>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let v = spec.value(&x.view()).f64();
            let est = generator_drift_estimate(a, spec, x, m, dt_probe, seed.wrapping_add((i as u64) << 32))?;
            let bound = spec.c1.f64() - spec.c2.f64() * v.powf(spec.gamma.f64());
            Ok(AuditRow {
                v,
                estimate: est.estimate,
                std_error: est.std_error,
                bound,
                ok: est.estimate <= bound + 3.0 * est.std_error,
            })
        })
        .collect()
}

/// `V(pi_t X)` for every future grid point `t = 0, dt, ..., T` of `traj`.
pub fn v_series<S: Real>(traj: &FullPath<S>, spec: &LyapunovSpec<S>) -> Result<Vec<S>> {
    let n = traj.n_future();
    let out: Vec<S> = (0..n as i64)
        .into_par_iter()
        .map(|i| traj.view_at_step(i).map(|view| spec.value(&view)))
        .collect::<Result<_>>()?;
    if let Some(index) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::InfiniteValue { index });
    }
    Ok(out)
}

/// Running averages `(1/T) int_0^T V^gamma dt` (trapezoid), one per grid point.
///
/// Entry 0 is `V(0)^gamma`.
pub fn time_average_v<S: Real>(v: &[S], dt: S, gamma: S) -> Result<Vec<S>> {
    let needed = (S::lit(10.0) / dt).ceil().to_usize().unwrap_or(usize::MAX);
    if v.len() < needed {
        return Err(Error::invalid(
            "traj",
            format!("need at least 10/dt = {needed} samples, got {}", v.len()),
        ));
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InfiniteValue { index });
    }
    let half = dt / S::lit(2.0);
    let mut out = Vec::with_capacity(v.len());
    let mut acc = S::zero();
    let mut prev = v[0].abs().powf(gamma);
    out.push(prev);
    for (k, &vk) in v.iter().enumerate().skip(1) {
        let cur = vk.abs().powf(gamma);
        acc += half * (prev + cur);
        prev = cur;
        out.push(acc / (S::from_usize_lossy(k) * dt));
    }
    Ok(out)
}

/// Window means of `V^kappa` with a trend test.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub window_means: Vec<f64>,
    /// Least-squares slope of the window means against the window index.
    pub slope: f64,
    /// Bootstrap 95% interval for the slope.
    pub ci: (f64, f64),
}

impl MomentReport {
    pub fn ci_contains_zero(&self) -> bool {
        self.ci.0 <= 0.0 && 0.0 <= self.ci.1
    }

    /// No window mean above ten times the median.
    pub fn heavy_tail_guard(&self) -> bool {
        let med = quantile(&self.window_means, 0.5);
        self.window_means.iter().all(|&m| m <= 10.0 * med)
    }
}

pub fn moment_series<S: Real>(v: &[S], kappa: S, n_windows: usize, seed: u64) -> Result<MomentReport> {
    if !(kappa > S::zero()) {
        return Err(Error::invalid("kappa", "must be positive"));
    }
    if n_windows < 2 || v.len() < n_windows {
        return Err(Error::invalid("n_windows", "need at least 2 windows, each nonempty"));
    }
    let len = v.len() / n_windows;
    let means: Vec<f64> = (0..n_windows)
        .map(|w| {
            let m: Moments = v[w * len..(w + 1) * len]
                .iter()
                .map(|x| x.abs().powf(kappa).f64())
                .collect();
            m.mean()
        })
        .collect();
    let idx: Vec<f64> = (0..n_windows).map(|i| i as f64).collect();
    let slope = fit_line(&idx, &means).map(|f| f.slope).unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let (mut xs, mut ys) = (Vec::with_capacity(n_windows), Vec::with_capacity(n_windows));
        for _ in 0..n_windows {
            let j = rng.random_range(0..n_windows);
            xs.push(idx[j]);
            ys.push(means[j]);
        }
        if let Some(f) = fit_line(&xs, &ys) {
            slopes.push(f.slope);
        }
    }
    let ci = if slopes.is_empty() {
        (slope, slope)
    } else {
        (quantile(&slopes, 0.025), quantile(&slopes, 0.975))
    };
    Ok(MomentReport {
        window_means: means,
        slope,
        ci,
    })
}

/// Reference growth for envelope ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthForm {
    /// `1 + |t|^rho`, for `V` or `|X|`.
    PolyRho(f64),
    /// `1 + |t|^kappa`, for `|FV|`.
    FlucKappa(f64),
}

impl GrowthForm {
    pub fn exponent(self) -> f64 {
        match self {
            GrowthForm::PolyRho(p) | GrowthForm::FlucKappa(p) => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    /// Slope of `log envelope` against `log(1 + |t|)` over `|t| >= 1`.
    pub exponent: f64,
    /// `sup_t envelope(t) / (1 + |t|^p)`.
    pub sup_ratio: f64,
}

/// Running maximum of `|values|`.
pub fn envelope(values: &[f64]) -> Vec<f64> {
    let mut m = 0.0f64;
    values
        .iter()
        .map(|v| {
            m = m.max(v.abs());
            m
        })
        .collect()
}

pub fn growth_exponent(times: &[f64], values: &[f64], form: GrowthForm) -> Result<GrowthFit> {
    if times.len() != values.len() {
        return Err(Error::DimMismatch {
            expected: times.len(),
            found: values.len(),
        });
    }
    if times.len() < 100 {
        return Err(Error::invalid("series", "need at least 100 points"));
    }
    let env = envelope(values);
    let p = form.exponent();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sup_ratio = 0.0f64;
    for (&t, &e) in times.iter().zip(&env) {
        let at = t.abs();
        sup_ratio = sup_ratio.max(e / (1.0 + at.powf(p)));
        if at >= 1.0 && e > 0.0 {
            xs.push((1.0 + at).ln());
            ys.push(e.ln());
        }
    }
    let exponent = fit_line(&xs, &ys).map(|LineFit { slope, .. }| slope).unwrap_or(0.0);
    Ok(GrowthFit { exponent, sup_ratio })
}
