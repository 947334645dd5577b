//! Memory drifts `a: C^- -> R^d`.
//!
//! Two path-dependent kernels are provided together with Markov
//! (present-only) and constant drifts:
//!
//! * [`GaussianKernelDrift`]: `a(x) = -x(0) (1 + Psi(x))` with
//!   `Psi(x) = int_{-inf}^0 exp(-s^2 + s) x(s)^2 ds`.
//! * [`PathDependentKernelDrift`]: `a(x) = -x(0) (1 + Psi(x)) + Psi(x)^2` with
//!   `Psi_hat(x) = int_{-inf}^0 exp(-2|s| - int_{-|s|}^0 x(r) dr) x(s)^2 ds`,
//!   and `Psi = Psi_hat` when finite, `0` otherwise.
//!
//! Kernel integrals use the trapezoid rule on the history grid. Lags beyond
//! the stored window take values from the history's [`Extension`].

use crate::error::{Error, Result};
use crate::pathspace::{concat, row_norm, Extension, FuturePath, HistoryPath, HistoryRef};
use crate::scalar::{snap_index, Real};

/// Default quadrature tolerance for truncating kernel tails.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Default numeric stand-in for `Psi_hat < inf`.
pub const DEFAULT_FINITENESS_CAP: f64 = 1e12;

/// Declared bound `|a(x)| <= K + sum_i w_i V(pi_{-lag_i} x)^beta`, a discrete
/// measure `nu` given as `(lag, weight)` pairs with `lag >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthBound<S> {
    pub k: S,
    pub beta: S,
    pub nu_weights: Vec<(S, S)>,
}

/// A drift functional evaluated on pasts.
pub trait MemoryDrift<S: Real>: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `a(x)` into `out` (length `dim`).
    fn eval_into(&self, x: &HistoryRef<'_, S>, out: &mut [S]) -> Result<()>;

    fn eval(&self, x: &HistoryRef<'_, S>) -> Result<Vec<S>> {
        let mut out = vec![S::zero(); self.dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    fn growth(&self) -> Option<&GrowthBound<S>> {
        None
    }

    fn kernel_tail_tol(&self) -> S {
        S::lit(DEFAULT_TAIL_TOL)
    }

    /// True when `a(x)` reads only `x(0)`.
    fn is_markov(&self) -> bool {
        false
    }
}

impl<S: Real, D: MemoryDrift<S> + ?Sized> MemoryDrift<S> for Box<D> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, x: &HistoryRef<'_, S>, out: &mut [S]) -> Result<()> {
        (**self).eval_into(x, out)
    }
    fn growth(&self) -> Option<&GrowthBound<S>> {
        (**self).growth()
    }
    fn kernel_tail_tol(&self) -> S {
        (**self).kernel_tail_tol()
    }
    fn is_markov(&self) -> bool {
        (**self).is_markov()
    }
}

impl<S: Real, D: MemoryDrift<S> + ?Sized> MemoryDrift<S> for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, x: &HistoryRef<'_, S>, out: &mut [S]) -> Result<()> {
        (**self).eval_into(x, out)
    }
    fn growth(&self) -> Option<&GrowthBound<S>> {
        (**self).growth()
    }
    fn kernel_tail_tol(&self) -> S {
        (**self).kernel_tail_tol()
    }
    fn is_markov(&self) -> bool {
        (**self).is_markov()
    }
}

fn require_dim<S: Real>(x: &HistoryRef<'_, S>, dim: usize) -> Result<()> {
    if x.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            found: x.dim(),
        });
    }
    Ok(())
}

/// Gaussian-weighted memory drift `a(x) = -x(0) (1 + Psi(x))`.
#[derive(Debug, Clone)]
pub struct GaussianKernelDrift<S> {
    tail_tol: S,
    growth: GrowthBound<S>,
}

impl<S: Real> Default for GaussianKernelDrift<S> {
    fn default() -> Self {
        Self::new(S::lit(DEFAULT_TAIL_TOL)).expect("default tolerance is valid")
    }
}

impl<S: Real> GaussianKernelDrift<S> {
    pub fn new(tail_tol: S) -> Result<Self> {
        if !(tail_tol > S::zero() && tail_tol < S::one()) {
            return Err(Error::invalid("kernel_tail_tol", "must lie in (0, 1)"));
        }
        // |x0|(1 + Psi) <= 1/2 + x0^2 + Psi^2 / 2 <= 1/2 + V with V = x0^2 + Psi^2
        let growth = GrowthBound {
            k: S::lit(0.5),
            beta: S::one(),
            nu_weights: vec![(S::zero(), S::one())],
        };
        Ok(Self { tail_tol, growth })
    }

    /// Overrides the declared growth metadata.
    pub fn with_growth(mut self, growth: GrowthBound<S>) -> Self {
        self.growth = growth;
        self
    }

    /// Lag `u` beyond which `exp(-u^2 - u) < tail_tol`.
    pub fn truncation_lag(&self) -> S {
        let l = -self.tail_tol.ln();
        (-S::one() + (S::one() + S::lit(4.0) * l).sqrt()) / S::lit(2.0)
    }

    /// `Psi(x)` by the trapezoid rule out to the truncation lag.
    pub fn psi(&self, x: &HistoryRef<'_, S>) -> S {
        let dt = x.dt();
        let steps = (self.truncation_lag() / dt).ceil().to_usize().unwrap_or(0).max(1);
        // kernel at s = -j dt is exp(-(j dt)^2 - j dt); successive ratios
        // exp(-(2j+1) dt^2 - dt) shrink by exp(-2 dt^2) each step
        let q = (-S::lit(2.0) * dt * dt).exp();
        let mut ratio = (-dt * dt - dt).exp();
        let mut kernel = S::one();
        let n = x.len();
        let tail_value = match x.extension() {
            Extension::Constant => x.oldest()[0],
            Extension::Zero => S::zero(),
        };
        let mut acc = S::zero();
        for j in 0..=steps {
            let v = if j < n { x.back(j)[0] } else { tail_value };
            let w = if j == 0 || j == steps { S::lit(0.5) } else { S::one() };
            acc += w * kernel * v * v;
            kernel *= ratio;
            ratio *= q;
        }
        acc * dt
    }
}

impl<S: Real> MemoryDrift<S> for GaussianKernelDrift<S> {
    fn dim(&self) -> usize {
        1
    }

    fn eval_into(&self, x: &HistoryRef<'_, S>, out: &mut [S]) -> Result<()> {
        require_dim(x, 1)?;
        let psi = self.psi(x);
        out[0] = -x.present()[0] * (S::one() + psi);
        Ok(())
    }

    fn growth(&self) -> Option<&GrowthBound<S>> {
        Some(&self.growth)
    }

    fn kernel_tail_tol(&self) -> S {
        self.tail_tol
    }
}

/// Value of `Psi_hat`, which may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelIntegral<S> {
    Finite(S),
    Infinite,
}

impl<S: Real> KernelIntegral<S> {
    pub fn value(self) -> S {
        match self {
            KernelIntegral::Finite(v) => v,
            KernelIntegral::Infinite => S::infinity(),
        }
    }
}

/// Memory drift whose kernel depends on the running integral of the path.
#[derive(Debug, Clone)]
pub struct PathDependentKernelDrift<S> {
    finiteness_cap: S,
    tail_tol: S,
    growth: GrowthBound<S>,
}

impl<S: Real> Default for PathDependentKernelDrift<S> {
    fn default() -> Self {
        Self::new(S::lit(DEFAULT_FINITENESS_CAP), S::lit(DEFAULT_TAIL_TOL))
            .expect("default parameters are valid")
    }
}

impl<S: Real> PathDependentKernelDrift<S> {
    pub fn new(finiteness_cap: S, tail_tol: S) -> Result<Self> {
        if !(finiteness_cap > S::zero()) {
            return Err(Error::invalid("finiteness_cap", "must be positive"));
        }
        if !(tail_tol > S::zero() && tail_tol < S::one()) {
            return Err(Error::invalid("kernel_tail_tol", "must lie in (0, 1)"));
        }
        // |x0|(1 + Psi) + Psi^2 <= 1/2 + x0^2 + 3 Psi^2 / 2 <= 1/2 + 3 V / 2
        let growth = GrowthBound {
            k: S::lit(0.5),
            beta: S::one(),
            nu_weights: vec![(S::zero(), S::lit(1.5))],
        };
        Ok(Self {
            finiteness_cap,
            tail_tol,
            growth,
        })
    }

    pub fn finiteness_cap(&self) -> S {
        self.finiteness_cap
    }

    /// `Psi_hat(x)`.
    ///
    /// The inner integral is a trapezoid prefix sum shared by all outer nodes.
    /// Integration stops once the kernel drops below the tail tolerance; if
    /// the stored window ends first, a constant extension `c` contributes the
    /// exact tail `c^2 k_W / (2 + c)` (infinite when `c <= -2`, `c != 0`).
    pub fn psi_hat(&self, x: &HistoryRef<'_, S>) -> Result<KernelIntegral<S>> {
        require_dim(x, 1)?;
        let dt = x.dt();
        let half = dt / S::lit(2.0);
        let two = S::lit(2.0);
        let log_tol = self.tail_tol.ln();
        let log_max = S::max_value().ln();
        let n = x.len();
        let mut prefix = S::zero();
        let mut prev_x = x.back(0)[0];
        let mut acc = S::zero();
        let mut prev_term = prev_x * prev_x;
        let mut log_kernel = S::zero();
        for j in 1..n {
            let xj = x.back(j)[0];
            prefix += half * (prev_x + xj);
            log_kernel = -two * S::from_usize_lossy(j) * dt - prefix;
            if log_kernel > log_max {
                return Err(Error::Divergence {
                    lag: (S::from_usize_lossy(j) * dt).f64(),
                });
            }
            let term = log_kernel.exp() * xj * xj;
            acc += half * (prev_term + term);
            if log_kernel < log_tol {
                return Ok(KernelIntegral::Finite(acc));
            }
            prev_term = term;
            prev_x = xj;
        }
        let tail = match x.extension() {
            Extension::Zero => S::zero(),
            Extension::Constant => {
                let c = x.oldest()[0];
                if c == S::zero() {
                    S::zero()
                } else if two + c > S::zero() {
                    c * c * log_kernel.exp() / (two + c)
                } else {
                    return Ok(KernelIntegral::Infinite);
                }
            }
        };
        let total = acc + tail;
        if total.is_finite() {
            Ok(KernelIntegral::Finite(total))
        } else {
            Ok(KernelIntegral::Infinite)
        }
    }

    /// `Psi`: `Psi_hat` when it is below the finiteness cap, zero otherwise.
    pub fn psi(&self, x: &HistoryRef<'_, S>) -> Result<S> {
        Ok(match self.psi_hat(x)? {
            KernelIntegral::Finite(v) if v <= self.finiteness_cap => v,
            _ => S::zero(),
        })
    }
}

impl<S: Real> MemoryDrift<S> for PathDependentKernelDrift<S> {
    fn dim(&self) -> usize {
        1
    }

    fn eval_into(&self, x: &HistoryRef<'_, S>, out: &mut [S]) -> Result<()> {
        let psi = self.psi(x)?;
        out[0] = -x.present()[0] * (S::one() + psi) + psi * psi;
        Ok(())
    }

    fn growth(&self) -> Option<&GrowthBound<S>> {
        Some(&self.growth)
    }

    fn kernel_tail_tol(&self) -> S {
        self.tail_tol
    }
}

/// Drift reading only the present, `a(x) = g(x(0))`.
pub struct MarkovDrift<S, F> {
    dim: usize,
    g: F,
    growth: Option<GrowthBound<S>>,
}

impl<S: Real, F> MarkovDrift<S, F>
where
    F: Fn(&[S], &mut [S]) + Send + Sync,
{
    pub fn new(dim: usize, g: F) -> Self {
        Self {
            dim,
            g,
            growth: None,
        }
    }

    pub fn with_growth(mut self, growth: GrowthBound<S>) -> Self {
        self.growth = Some(growth);
        self
    }
}

impl<S: Real, F> MemoryDrift<S> for MarkovDrift<S, F>
where
    F: Fn(&[S], &mut [S]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &HistoryRef<'_, S>, out: &mut [S]) -> Result<()> {
        require_dim(x, self.dim)?;
        (self.g)(x.present(), out);
        Ok(())
    }

    fn growth(&self) -> Option<&GrowthBound<S>> {
        self.growth.as_ref()
    }

    fn is_markov(&self) -> bool {
        true
    }
}

/// `a(x) = slope * x(0)`; `slope = -1` is the Ornstein-Uhlenbeck drift.
#[derive(Debug, Clone)]
pub struct LinearMarkovDrift<S> {
    dim: usize,
    slope: S,
    growth: GrowthBound<S>,
}

impl<S: Real> LinearMarkovDrift<S> {
    pub fn new(dim: usize, slope: S) -> Self {
        // |slope x0| <= |slope| (1 + x0^2) / 2 with V = |x0|^2
        let growth = GrowthBound {
            k: slope.abs() / S::lit(2.0),
            beta: S::one(),
            nu_weights: vec![(S::zero(), slope.abs() / S::lit(2.0))],
        };
        Self { dim, slope, growth }
    }

    pub fn slope(&self) -> S {
        self.slope
    }
}

impl<S: Real> MemoryDrift<S> for LinearMarkovDrift<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &HistoryRef<'_, S>, out: &mut [S]) -> Result<()> {
        require_dim(x, self.dim)?;
        for (o, &v) in out.iter_mut().zip(x.present()) {
            *o = self.slope * v;
        }
        Ok(())
    }

    fn growth(&self) -> Option<&GrowthBound<S>> {
        Some(&self.growth)
    }

    fn is_markov(&self) -> bool {
        true
    }
}

/// Constant drift `a(x) = mu`.
#[derive(Debug, Clone)]
pub struct ConstantDrift<S> {
    value: Vec<S>,
}

impl<S: Real> ConstantDrift<S> {
    pub fn new(value: Vec<S>) -> Self {
        Self { value }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            value: vec![S::zero(); dim],
        }
    }
}

impl<S: Real> MemoryDrift<S> for ConstantDrift<S> {
    fn dim(&self) -> usize {
        self.value.len()
    }

    fn eval_into(&self, x: &HistoryRef<'_, S>, out: &mut [S]) -> Result<()> {
        require_dim(x, self.value.len())?;
        out.copy_from_slice(&self.value);
        Ok(())
    }

    fn is_markov(&self) -> bool {
        true
    }
}

/// `a(x) = g(x(0))` evaluated on a one-row history.
pub fn eval_markov_drift<S: Real>(g: impl Fn(&[S], &mut [S]), x: &HistoryRef<'_, S>) -> Vec<S> {
    let mut out = vec![S::zero(); x.dim()];
    g(x.present(), &mut out);
    out
}

/// `|a(pi_t(x1:y)) - a(pi_t(x2:y))|`.
pub fn drift_gap<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    x1: &HistoryPath<S>,
    x2: &HistoryPath<S>,
    y: &FuturePath<S>,
    t: S,
) -> Result<S> {
    let p1 = concat(x1, y)?;
    let p2 = concat(x2, y)?;
    if t < S::zero() {
        return Err(Error::invalid("t", "must be nonnegative"));
    }
    let i = p1.step_of(t);
    let a1 = a.eval(&p1.view_at_step(i)?)?;
    let a2 = a.eval(&p2.view_at_step(i)?)?;
    let diff: Vec<S> = a1.iter().zip(&a2).map(|(&u, &v)| u - v).collect();
    Ok(row_norm(&diff))
}

/// Outcome of a growth-bound audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport<S> {
    pub lhs: S,
    pub rhs: S,
    pub ok: bool,
}

/// Checks `|a(x)| <= K + sum_i w_i V(pi_{-lag_i} x)^beta`.
///
/// `v[k]` is `V(pi_{-k dt} x)`; lags beyond `v` use its last entry.
pub fn verify_growth_bound<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    v: &[S],
    x: &HistoryRef<'_, S>,
) -> Result<GrowthReport<S>> {
    let growth = a
        .growth()
        .ok_or_else(|| Error::Unsupported("drift declares no growth bound".into()))?;
    if v.is_empty() {
        return Err(Error::invalid("v", "need at least V(x)"));
    }
    let lhs = row_norm(&a.eval(x)?);
    let mut rhs = growth.k;
    for &(lag, w) in &growth.nu_weights {
        let idx = snap_index(lag, x.dt()).max(0) as usize;
        let vk = v[idx.min(v.len() - 1)];
        rhs += w * vk.abs().powf(growth.beta);
    }
    let tol = S::lit(1e-12) * (S::one() + rhs.abs());
    Ok(GrowthReport {
        lhs,
        rhs,
        ok: lhs <= rhs + tol,
    })
}
