//! Wiener paths and solvers for the Cauchy problem
//! `dX = a(pi_t X) dt + dW`, `X = x` on `(-inf, 0]`.
//!
//! [`euler_maruyama`] is the workhorse. [`picard_solve`] iterates the map
//! `y -> x(0) + int_0^t a(pi_s(x:y)) ds + W(t)` (trapezoid quadrature on the
//! grid) over chunks of adaptively chosen length and is used to cross-check
//! Euler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::drift::MemoryDrift;
use crate::error::{Error, Result};
use crate::lyapunov::LyapunovFunctional;
use crate::pathspace::{concat, row_norm, FullPath, FuturePath, HistoryPath, HistoryRef};
use crate::scalar::{snap_index, Real};

/// Gaussian increments of a standard `dim`-dimensional Wiener process.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath<S> {
    pub dim: usize,
    pub dt: S,
    pub n_steps: usize,
    /// Row-major, `n_steps x dim`; each entry has variance `dt`.
    pub increments: Vec<S>,
    pub seed: u64,
    pub stream_id: u64,
}

/// Deterministic increments keyed by `(seed, stream_id)`.
///
/// Streams come from ChaCha8 with the stream id selecting an independent
/// keystream, so no global generator state is involved.
pub fn sample_wiener<S: Real>(
    seed: u64,
    stream_id: u64,
    dim: usize,
    dt: S,
    n_steps: usize,
) -> Result<WienerPath<S>> {
    if !(dt > S::zero()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if dim == 0 {
        return Err(Error::invalid("dim", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    let sd = dt.f64().sqrt();
    let increments = (0..n_steps * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            S::lit(z * sd)
        })
        .collect();
    Ok(WienerPath {
        dim,
        dt,
        n_steps,
        increments,
        seed,
        stream_id,
    })
}

impl<S: Real> WienerPath<S> {
    pub fn increment(&self, k: usize) -> &[S] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    /// `W(k dt)` for `k = 0..=n_steps`, row-major.
    pub fn cumulative(&self) -> Vec<S> {
        let mut out = vec![S::zero(); (self.n_steps + 1) * self.dim];
        for k in 0..self.n_steps {
            for c in 0..self.dim {
                out[(k + 1) * self.dim + c] = out[k * self.dim + c] + self.increments[k * self.dim + c];
            }
        }
        out
    }

    /// The same Brownian path on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(Error::invalid(
                "factor",
                format!("must divide n_steps = {}", self.n_steps),
            ));
        }
        let n = self.n_steps / factor;
        let mut increments = vec![S::zero(); n * self.dim];
        for k in 0..self.n_steps {
            for c in 0..self.dim {
                increments[(k / factor) * self.dim + c] += self.increments[k * self.dim + c];
            }
        }
        Ok(Self {
            dim: self.dim,
            dt: self.dt * S::from_usize_lossy(factor),
            n_steps: n,
            increments,
            seed: self.seed,
            stream_id: self.stream_id,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<S> {
    pub dt: S,
    pub horizon: S,
    /// `R` of the stopping time `tau_R`.
    pub blowup_radius: S,
    pub picard_tol: S,
    pub picard_max_iter: usize,
}

impl<S: Real> SolverConfig<S> {
    pub fn new(dt: S, horizon: S) -> Self {
        Self {
            dt,
            horizon,
            blowup_radius: S::lit(1e8),
            picard_tol: S::lit(1e-12),
            picard_max_iter: 200,
        }
    }

    pub fn with_blowup_radius(mut self, r: S) -> Self {
        self.blowup_radius = r;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("horizon", self.horizon),
            ("blowup_radius", self.blowup_radius),
            ("picard_tol", self.picard_tol),
        ] {
            if !(v > S::zero()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.picard_max_iter == 0 {
            return Err(Error::invalid("picard_max_iter", "must be at least 1"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        snap_index(self.horizon, self.dt).max(0) as usize
    }
}

/// Quantity watched by the blowup guard.
#[derive(Clone, Copy, Default)]
pub enum BlowupGuard<'a, S> {
    /// `|X(t)|`.
    #[default]
    Norm,
    /// `V(pi_t X)`.
    Lyapunov(&'a dyn LyapunovFunctional<S>),
}

impl<S: Real> BlowupGuard<'_, S> {
    fn value(&self, view: &HistoryRef<'_, S>) -> S {
        match self {
            BlowupGuard::Norm => row_norm(view.present()),
            BlowupGuard::Lyapunov(v) => v.value(view),
        }
    }
}

fn check_inputs<S: Real>(past: &HistoryPath<S>, w: &WienerPath<S>, cfg: &SolverConfig<S>, dim: usize) -> Result<()> {
    cfg.validate()?;
    if past.dt() != cfg.dt || w.dt != cfg.dt {
        return Err(Error::DtMismatch {
            a: past.dt().f64(),
            b: w.dt.f64(),
        });
    }
    if past.dim() != dim || w.dim != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            found: past.dim().max(w.dim),
        });
    }
    if w.n_steps < cfg.n_steps() {
        return Err(Error::invalid(
            "wiener",
            format!("{} increments cannot cover {} steps", w.n_steps, cfg.n_steps()),
        ));
    }
    Ok(())
}

/// Euler-Maruyama with an explicit guard; returns past and future together.
pub fn euler_maruyama_full<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    past: &HistoryPath<S>,
    w: &WienerPath<S>,
    cfg: &SolverConfig<S>,
    guard: BlowupGuard<'_, S>,
) -> Result<FullPath<S>> {
    let dim = a.dim();
    check_inputs(past, w, cfg, dim)?;
    let n = cfg.n_steps();
    let dt = cfg.dt;
    let mut buf = Vec::with_capacity(past.chronological().len() + n * dim);
    buf.extend_from_slice(past.chronological());
    let mut drift = vec![S::zero(); dim];
    let mut next = vec![S::zero(); dim];
    for k in 0..n {
        {
            let view = HistoryRef::new(dim, dt, &buf, past.extension(), S::from_usize_lossy(k) * dt);
            a.eval_into(&view, &mut drift)?;
            let cur = view.present();
            let dw = w.increment(k);
            for c in 0..dim {
                next[c] = cur[c] + drift[c] * dt + dw[c];
            }
        }
        buf.extend_from_slice(&next);
        let view = HistoryRef::new(dim, dt, &buf, past.extension(), S::from_usize_lossy(k + 1) * dt);
        let monitored = guard.value(&view);
        if !monitored.is_finite() || monitored >= cfg.blowup_radius || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup {
                step: k + 1,
                time: (S::from_usize_lossy(k + 1) * dt).f64(),
                value: monitored.f64(),
                radius: cfg.blowup_radius.f64(),
            });
        }
    }
    FullPath::from_raw(dim, dt, buf, past.len(), past.extension())
}

/// `X_{k+1} = X_k + a(pi_{t_k} X) dt + dW_k`, guarded on `|X|`.
pub fn euler_maruyama<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    past: &HistoryPath<S>,
    w: &WienerPath<S>,
    cfg: &SolverConfig<S>,
) -> Result<FuturePath<S>> {
    Ok(euler_maruyama_full(a, past, w, cfg, BlowupGuard::Norm)?.future())
}

/// Per-chunk record of a Picard solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardChunk<S> {
    pub start_step: usize,
    pub steps: usize,
    /// Sup-norm change of each iterate.
    pub residuals: Vec<S>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome<S> {
    pub path: FuturePath<S>,
    pub chunks: Vec<PicardChunk<S>>,
}

/// Fixed-point iteration on one chunk appended to `buf`.
#[allow(clippy::too_many_arguments)]
fn picard_chunk<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    buf: &mut Vec<S>,
    extension: crate::pathspace::Extension,
    w: &WienerPath<S>,
    start_step: usize,
    steps: usize,
    cfg: &SolverConfig<S>,
) -> Result<PicardChunk<S>> {
    let dim = a.dim();
    let dt = cfg.dt;
    let half = dt / S::lit(2.0);
    let base_rows = buf.len() / dim;
    let x0: Vec<S> = buf[(base_rows - 1) * dim..].to_vec();

    // initial guess y0(t) = x(0) + W(t) - W(start)
    let mut wc = vec![S::zero(); (steps + 1) * dim];
    for k in 0..steps {
        let dw = w.increment(start_step + k);
        for c in 0..dim {
            wc[(k + 1) * dim + c] = wc[k * dim + c] + dw[c];
        }
    }
    let mut y: Vec<S> = (0..=steps).flat_map(|k| (0..dim).map(move |c| (k, c))).map(|(k, c)| x0[c] + wc[k * dim + c]).collect();
    buf.extend_from_slice(&y[dim..]);

    let mut drifts = vec![S::zero(); (steps + 1) * dim];
    let mut residuals = Vec::new();
    let mut growth_run = 0usize;
    let mut converged = false;
    for _ in 0..cfg.picard_max_iter {
        for j in 0..=steps {
            let end = (base_rows + j) * dim;
            let view = HistoryRef::new(dim, dt, &buf[..end], extension, S::from_usize_lossy(start_step + j) * dt);
            a.eval_into(&view, &mut drifts[j * dim..(j + 1) * dim])?;
        }
        let mut change = S::zero();
        let mut integral = vec![S::zero(); dim];
        for k in 1..=steps {
            for c in 0..dim {
                integral[c] += half * (drifts[(k - 1) * dim + c] + drifts[k * dim + c]);
                let new = x0[c] + integral[c] + wc[k * dim + c];
                let d = (new - y[k * dim + c]).abs();
                if d > change || d.is_nan() {
                    change = d;
                }
                y[k * dim + c] = new;
            }
        }
        if !change.is_finite() || y.iter().any(|v| v.abs() >= cfg.blowup_radius) {
            let bad = (1..=steps).find(|&k| row_norm(&y[k * dim..(k + 1) * dim]) >= cfg.blowup_radius || y[k * dim..(k + 1) * dim].iter().any(|v| !v.is_finite())).unwrap_or(steps);
            return Err(Error::Blowup {
                step: start_step + bad,
                time: (S::from_usize_lossy(start_step + bad) * dt).f64(),
                value: row_norm(&y[bad * dim..(bad + 1) * dim]).f64(),
                radius: cfg.blowup_radius.f64(),
            });
        }
        buf.truncate(base_rows * dim);
        buf.extend_from_slice(&y[dim..]);
        if let Some(&prev) = residuals.last() {
            if change > prev {
                growth_run += 1;
            } else {
                growth_run = 0;
            }
        }
        residuals.push(change);
        if growth_run >= 3 {
            buf.truncate(base_rows * dim);
            return Err(Error::ContractionFailure {
                iterations: residuals.len(),
                chunk_steps: steps,
            });
        }
        if change < cfg.picard_tol {
            converged = true;
            break;
        }
    }
    Ok(PicardChunk {
        start_step,
        steps,
        residuals,
        converged,
    })
}

/// Picard iteration chained over chunks, with per-chunk residual histories.
///
/// Chunks start at `min(1, T)` time units and halve whenever the iteration
/// stops contracting.
pub fn picard_solve_detailed<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    past: &HistoryPath<S>,
    w: &WienerPath<S>,
    cfg: &SolverConfig<S>,
) -> Result<PicardOutcome<S>> {
    let dim = a.dim();
    check_inputs(past, w, cfg, dim)?;
    let n = cfg.n_steps();
    let unit = snap_index(S::one(), cfg.dt).max(1) as usize;
    let mut chunk = unit.min(n.max(1));
    let mut buf = past.chronological().to_vec();
    let mut chunks = Vec::new();
    let mut done = 0usize;
    while done < n {
        let steps = chunk.min(n - done);
        match picard_chunk(a, &mut buf, past.extension(), w, done, steps, cfg) {
            Ok(report) => {
                done += steps;
                chunks.push(report);
            }
            Err(Error::ContractionFailure { .. }) if steps > 1 => {
                chunk = steps / 2;
            }
            Err(e) => return Err(e),
        }
    }
    let full = FullPath::from_raw(dim, cfg.dt, buf, past.len(), past.extension())?;
    Ok(PicardOutcome {
        path: full.future(),
        chunks,
    })
}

pub fn picard_solve<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    past: &HistoryPath<S>,
    w: &WienerPath<S>,
    cfg: &SolverConfig<S>,
) -> Result<FuturePath<S>> {
    Ok(picard_solve_detailed(a, past, w, cfg)?.path)
}

/// Samples stream 0 of `seed` and runs Euler-Maruyama.
pub fn solve_cauchy<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    past: &HistoryPath<S>,
    seed: u64,
    cfg: &SolverConfig<S>,
) -> Result<FuturePath<S>> {
    Ok(solve_cauchy_full(a, past, seed, 0, cfg, BlowupGuard::Norm)?.future())
}

/// [`solve_cauchy`] returning the concatenated path and taking a stream id and guard.
pub fn solve_cauchy_full<S: Real, D: MemoryDrift<S> + ?Sized>(
    a: &D,
    past: &HistoryPath<S>,
    seed: u64,
    stream_id: u64,
    cfg: &SolverConfig<S>,
    guard: BlowupGuard<'_, S>,
) -> Result<FullPath<S>> {
    cfg.validate()?;
    let w = sample_wiener(seed, stream_id, a.dim(), cfg.dt, cfg.n_steps())?;
    euler_maruyama_full(a, past, &w, cfg, guard)
}

/// Sup-norm distance between two futures on their common grid.
pub fn sup_distance<S: Real>(a: &FuturePath<S>, b: &FuturePath<S>) -> S {
    a.chronological()
        .iter()
        .zip(b.chronological())
        .map(|(&u, &v)| (u - v).abs())
        .fold(S::zero(), |m, d| if d > m { d } else { m })
}

/// Glues `past` to a future obtained from the solver.
pub fn assemble<S: Real>(past: &HistoryPath<S>, future: &FuturePath<S>) -> Result<FullPath<S>> {
    concat(past, future)
}
