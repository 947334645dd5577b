//! Reduction of a Galerkin SPDE to a memory equation for its forced modes.
//!
//! With `u = l + h` split along [`LHSplit`], the unforced modes obey the
//! random ODE `dh/dt = P_h F(l + h)`. Integrating it from a distant past
//! forgets the initial `h`, which defines the reconstruction map `Psi` from a
//! low-mode past to the present high modes. The low modes then solve
//! `dl = P_l F(l + Psi(pi_t l)) dt + P_l G dB`, an instance of the memory
//! equations handled by [`crate::solver`].

use crate::drift::MemoryDrift;
use crate::error::{Error, Result};
use crate::pathspace::{Extension, HistoryRef};
use crate::scalar::Real;
use crate::stats::fit_line;

use super::{check_finite, forcing_noise, step_into, ForcingSpec, GalerkinModel, GlModel, LHSplit, SpdeRun};

/// `sqrt(U(h))` for a vector supported on the high modes.
pub fn high_u_norm<S: Real, M: GalerkinModel<S> + ?Sized>(model: &M, split: &LHSplit, h: &[S]) -> S {
    let zeros = vec![S::zero(); split.d()];
    model.lyapunov_u(&split.recompose(&zeros, h)).sqrt()
}

fn l2<S: Real>(v: &[S]) -> S {
    v.iter().map(|&x| x * x).sum::<S>().sqrt()
}

/// Slaved high-mode integrator sharing the full system's time step.
struct Slave<'a, S: Real, M: GalerkinModel<S> + ?Sized> {
    model: &'a M,
    split: &'a LHSplit,
    dt: S,
    u: Vec<S>,
    out: Vec<S>,
}

impl<'a, S: Real, M: GalerkinModel<S> + ?Sized> Slave<'a, S, M> {
    fn new(model: &'a M, split: &'a LHSplit, dt: S) -> Self {
        let n = model.len();
        Self {
            model,
            split,
            dt,
            u: vec![S::zero(); n],
            out: vec![S::zero(); n],
        }
    }

    /// `h <- (h + dt P_h N(l + h)) / (1 + dt nu lambda)`.
    fn step(&mut self, ell: &[S], h: &mut [S]) {
        self.split.recompose_into(ell, h, &mut self.u);
        step_into(self.model, &self.u, self.dt, |_| S::zero(), &mut self.out);
        for (hv, &i) in h.iter_mut().zip(&self.split.high) {
            *hv = self.out[i];
        }
    }
}

/// `Psi_{-L dt, 0}`: the high modes at time 0 after slaving `h0` to the
/// low-mode past over `lookback_steps` steps. Lags beyond the stored window
/// follow the history's extension.
pub fn reconstruct_psi_fixed<S: Real, M: GalerkinModel<S> + ?Sized>(
    model: &M,
    split: &LHSplit,
    ell: &HistoryRef<'_, S>,
    h0: &[S],
    lookback_steps: usize,
) -> Result<Vec<S>> {
    let d = split.d();
    if ell.dim() != d {
        return Err(Error::DimMismatch {
            expected: d,
            found: ell.dim(),
        });
    }
    if h0.len() != split.high.len() {
        return Err(Error::DimMismatch {
            expected: split.high.len(),
            found: h0.len(),
        });
    }
    let mut slave = Slave::new(model, split, ell.dt());
    let mut h = h0.to_vec();
    let mut row = vec![S::zero(); d];
    for j in (1..=lookback_steps).rev() {
        for (c, r) in row.iter_mut().enumerate() {
            *r = ell.get(j, c);
        }
        slave.step(&row, &mut h);
    }
    check_finite(&h, lookback_steps, ell.dt())?;
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiResult<S> {
    pub h: Vec<S>,
    pub lookback_steps: usize,
    /// U-norm change at the last doubling.
    pub last_delta: S,
}

pub const DEFAULT_PSI_TOL: f64 = 1e-8;
pub const MAX_LOOKBACK_STEPS: usize = 1 << 14;

/// Doubles the lookback from `start_steps` until `Psi` moves by less than
/// `psi_tol` in the U-norm.
pub fn reconstruct_psi<S: Real, M: GalerkinModel<S> + ?Sized>(
    model: &M,
    split: &LHSplit,
    ell: &HistoryRef<'_, S>,
    h0: &[S],
    psi_tol: S,
    start_steps: usize,
    max_steps: usize,
) -> Result<PsiResult<S>> {
    if !(psi_tol > S::zero()) {
        return Err(Error::invalid("psi_tol", "must be positive"));
    }
    let mut steps = start_steps.max(1);
    let mut prev = reconstruct_psi_fixed(model, split, ell, h0, steps)?;
    let mut delta = S::infinity();
    while steps * 2 <= max_steps {
        steps *= 2;
        let cur = reconstruct_psi_fixed(model, split, ell, h0, steps)?;
        let diff: Vec<S> = cur.iter().zip(&prev).map(|(&a, &b)| a - b).collect();
        delta = high_u_norm(model, split, &diff);
        prev = cur;
        if delta < psi_tol {
            return Ok(PsiResult {
                h: prev,
                lookback_steps: steps,
                last_delta: delta,
            });
        }
    }
    Err(Error::NonConvergence {
        last_delta: delta.f64(),
        lookback_steps: steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncSeries {
    pub times: Vec<f64>,
    /// `||h_a - h_b||`.
    pub gaps: Vec<f64>,
    /// Slope of `log gap` over the points above `1e-12` times the initial gap.
    pub fitted_rate: Option<f64>,
    /// The window maxima grew three windows running.
    pub threshold_violation: bool,
}

/// Slaves two high-mode copies to one simulated low-mode path.
#[allow(clippy::too_many_arguments)]
pub fn sync_experiment<S: Real, M: GalerkinModel<S> + ?Sized>(
    model: &M,
    forcing: &ForcingSpec<S>,
    u0: &[S],
    dt: S,
    n_steps: usize,
    seed: u64,
    h0_a: &[S],
    h0_b: &[S],
) -> Result<SyncSeries> {
    let split = LHSplit::from_forcing(forcing);
    let n = model.len();
    if u0.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            found: u0.len(),
        });
    }
    if h0_a.len() != split.high.len() || h0_b.len() != split.high.len() {
        return Err(Error::DimMismatch {
            expected: split.high.len(),
            found: h0_a.len().max(h0_b.len()),
        });
    }
    let noise = forcing_noise(forcing, seed, 0, dt, n_steps)?;
    let forced = &split.low;
    let d = forced.len();
    let mut u = u0.to_vec();
    let mut next = vec![S::zero(); n];
    let mut kick = vec![S::zero(); n];
    let (mut ha, mut hb) = (h0_a.to_vec(), h0_b.to_vec());
    let mut slave = Slave::new(model, &split, dt);
    let gap = |a: &[S], b: &[S]| a.iter().zip(b).map(|(&x, &y)| ((x - y) * (x - y)).f64()).sum::<f64>().sqrt();
    let mut times = vec![0.0];
    let mut gaps = vec![gap(&ha, &hb)];
    for k in 0..n_steps {
        let (ell, _) = split.split(&u);
        slave.step(&ell, &mut ha);
        slave.step(&ell, &mut hb);
        for (j, &i) in forced.iter().enumerate() {
            kick[i] = forcing.sigma[i] * noise[k * d + j];
        }
        step_into(model, &u, dt, |i| kick[i], &mut next);
        check_finite(&next, k + 1, dt)?;
        std::mem::swap(&mut u, &mut next);
        times.push((k + 1) as f64 * dt.f64());
        gaps.push(gap(&ha, &hb));
    }
    let floor = 1e-12 * gaps[0];
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&gaps)
        .filter(|(_, &g)| g > floor && g > 0.0)
        .map(|(&t, &g)| (t, g.ln()))
        .unzip();
    let fitted_rate = fit_line(&xs, &ys).map(|f| f.slope);
    let windows = 20.min(gaps.len());
    let wl = gaps.len() / windows;
    let maxima: Vec<f64> = (0..windows)
        .map(|w| gaps[w * wl..(w + 1) * wl].iter().copied().fold(0.0, f64::max))
        .collect();
    let threshold_violation = maxima
        .windows(4)
        .any(|m| m[1] > m[0] && m[2] > m[1] && m[3] > m[2] && m[0] > floor);
    Ok(SyncSeries {
        times,
        gaps,
        fitted_rate,
        threshold_violation,
    })
}

/// Constants of the dissipativity and low-mode Lipschitz assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConstants<S> {
    pub c1: S,
    pub c2: S,
    pub gamma: S,
    pub c3: S,
    pub p1: S,
    pub p2: S,
    pub c4: S,
    pub p3: S,
    pub p4: S,
}

/// The Ginzburg-Landau constants for a given split.
pub type GlConstants<S> = AssumptionConstants<S>;

impl<S: Real> AssumptionConstants<S> {
    /// `sup|u|^2 <= C_S U(u)` on the circle, `C_S = sum_k 1/(1 + 4 pi^2 k^2) = coth(1/2)/2`.
    pub fn sobolev_constant() -> S {
        let half = S::lit(0.5);
        (half.cosh() / half.sinh()) / S::lit(2.0)
    }

    /// `c1 = nu lambda_min(H) - 1`, `c2 = 0`, `c3 = 3 C_S / 8`, `p1 = 2`, `p2 = 1`;
    /// `c4 = 9 C_S^2 / 2`, `p3 = p4 = 2`.
    pub fn gl(model: &GlModel<S>, split: &LHSplit) -> Self {
        let lam = model.eigenvalues();
        let lmin = split
            .high
            .iter()
            .map(|&i| lam[i])
            .fold(S::infinity(), |a, b| a.min(b));
        let cs = Self::sobolev_constant();
        Self {
            c1: model.viscosity() * lmin - S::one(),
            c2: S::zero(),
            gamma: S::one(),
            c3: S::lit(3.0) * cs / S::lit(8.0),
            p1: S::lit(2.0),
            p2: S::one(),
            c4: S::lit(4.5) * cs * cs,
            p3: S::lit(2.0),
            p4: S::lit(2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport<S> {
    pub lhs: S,
    pub rhs: S,
    pub ok: bool,
}

fn report<S: Real>(lhs: S, rhs: S) -> ProbeReport<S> {
    let tol = S::lit(1e-10) * (S::one() + lhs.abs() + rhs.abs());
    ProbeReport {
        lhs,
        rhs,
        ok: lhs <= rhs + tol,
    }
}

/// `<F(u) - F(v), P_h(u - v)> <= ||P_h(u-v)||^2 (-c1 + c2 U(u)^gamma)
///   + c3 ||P_l(u-v)||^p1 (1 + U(u)^p2 + U(v)^p2)`.
pub fn probe_dissipative<S: Real, M: GalerkinModel<S> + ?Sized>(
    model: &M,
    split: &LHSplit,
    u: &[S],
    v: &[S],
    c: &AssumptionConstants<S>,
) -> ProbeReport<S> {
    let n = model.len();
    let (mut fu, mut fv) = (vec![S::zero(); n], vec![S::zero(); n]);
    model.rhs(u, &mut fu);
    model.rhs(v, &mut fv);
    let lhs: S = split.high.iter().map(|&i| (fu[i] - fv[i]) * (u[i] - v[i])).sum();
    let dh: S = split.high.iter().map(|&i| (u[i] - v[i]) * (u[i] - v[i])).sum();
    let dl = split
        .low
        .iter()
        .map(|&i| (u[i] - v[i]) * (u[i] - v[i]))
        .sum::<S>()
        .sqrt();
    let (uu, uv) = (model.lyapunov_u(u), model.lyapunov_u(v));
    let rhs = dh * (-c.c1 + c.c2 * uu.powf(c.gamma))
        + c.c3 * dl.powf(c.p1) * (S::one() + uu.powf(c.p2) + uv.powf(c.p2));
    report(lhs, rhs)
}

/// `|P_l F(l + h) - P_l F(l + g)|^2 <= c4 (1 + U(l+h)^p3 + U(l+g)^p3) ||h - g||^p4`.
pub fn probe_lip<S: Real, M: GalerkinModel<S> + ?Sized>(
    model: &M,
    split: &LHSplit,
    ell: &[S],
    h: &[S],
    g: &[S],
    c: &AssumptionConstants<S>,
) -> ProbeReport<S> {
    let u = split.recompose(ell, h);
    let v = split.recompose(ell, g);
    let n = model.len();
    let (mut fu, mut fv) = (vec![S::zero(); n], vec![S::zero(); n]);
    model.rhs(&u, &mut fu);
    model.rhs(&v, &mut fv);
    let lhs: S = split.low.iter().map(|&i| (fu[i] - fv[i]) * (fu[i] - fv[i])).sum();
    let diff: Vec<S> = h.iter().zip(g).map(|(&a, &b)| a - b).collect();
    let rhs = c.c4
        * (S::one() + model.lyapunov_u(&u).powf(c.p3) + model.lyapunov_u(&v).powf(c.p3))
        * l2(&diff).powf(c.p4);
    report(lhs, rhs)
}

/// `||P_h u(t) - Psi(pi_t P_l u)||` at the sampled steps of a stored run.
///
/// `Psi` starts from `h0` (zero when `None`) `lookback_steps` steps back;
/// sampled steps must be at least that far from the start of the run.
pub fn factorization_residual<S: Real, M: GalerkinModel<S> + ?Sized>(
    model: &M,
    split: &LHSplit,
    run: &SpdeRun<S>,
    sample_steps: &[usize],
    lookback_steps: usize,
    h0: Option<&[S]>,
) -> Result<Vec<(f64, f64)>> {
    let zeros = vec![S::zero(); split.high.len()];
    let h0 = h0.unwrap_or(&zeros);
    let d = split.d();
    let ell = run.ell_rows(split, run.n_rows() - 1);
    sample_steps
        .iter()
        .map(|&k| {
            if k < lookback_steps || k >= run.n_rows() {
                return Err(Error::invalid(
                    "sample_steps",
                    format!("step {k} needs {lookback_steps} steps of history inside the run"),
                ));
            }
            let view = HistoryRef::new(d, run.dt, &ell[..(k + 1) * d], Extension::Constant, S::zero());
            let psi = reconstruct_psi_fixed(model, split, &view, h0, lookback_steps)?;
            let (_, h) = split.split(run.state(k));
            let diff: Vec<S> = h.iter().zip(&psi).map(|(&a, &b)| a - b).collect();
            Ok(((S::from_usize_lossy(k) * run.dt).f64(), l2(&diff).f64()))
        })
        .collect()
}

/// `a(x) = P_l F(l(0) + Psi(l)) / sigma` in the coordinates `x = l / sigma`,
/// in which the low-mode noise is a standard Wiener process.
#[derive(Debug, Clone)]
pub struct ReducedPdeDrift<S: Real, M> {
    model: M,
    split: LHSplit,
    sigma_low: Vec<S>,
    lookback_steps: usize,
}

impl<S: Real, M: GalerkinModel<S>> ReducedPdeDrift<S, M> {
    pub fn new(model: M, forcing: &ForcingSpec<S>, lookback_steps: usize) -> Result<Self> {
        let split = LHSplit::from_forcing(forcing);
        Self::with_split(model, forcing, split, lookback_steps)
    }

    /// Refuses splits whose low block contains an unforced mode, which would
    /// make the low-mode noise degenerate.
    pub fn with_split(model: M, forcing: &ForcingSpec<S>, split: LHSplit, lookback_steps: usize) -> Result<Self> {
        if split.len() != model.len() {
            return Err(Error::DimMismatch {
                expected: model.len(),
                found: split.len(),
            });
        }
        let sigma_low: Vec<S> = split.low.iter().map(|&i| forcing.sigma[i]).collect();
        if let Some(j) = sigma_low.iter().position(|&s| !(s > S::zero())) {
            return Err(Error::ContractViolation(format!(
                "low mode {} has zero noise amplitude",
                split.low[j]
            )));
        }
        Ok(Self {
            model,
            split,
            sigma_low,
            lookback_steps,
        })
    }

    pub fn split(&self) -> &LHSplit {
        &self.split
    }

    pub fn sigma_low(&self) -> &[S] {
        &self.sigma_low
    }

    pub fn to_scaled(&self, ell: &[S]) -> Vec<S> {
        ell.iter().zip(&self.sigma_low).map(|(&l, &s)| l / s).collect()
    }

    pub fn from_scaled(&self, x: &[S]) -> Vec<S> {
        x.iter().zip(&self.sigma_low).map(|(&v, &s)| v * s).collect()
    }
}

impl<S: Real, M: GalerkinModel<S>> MemoryDrift<S> for ReducedPdeDrift<S, M> {
    fn dim(&self) -> usize {
        self.split.d()
    }

    fn eval_into(&self, x: &HistoryRef<'_, S>, out: &mut [S]) -> Result<()> {
        let d = self.split.d();
        if x.dim() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: x.dim(),
            });
        }
        let rows = self.lookback_steps + 1;
        let mut buf = vec![S::zero(); rows * d];
        for j in 0..rows {
            for c in 0..d {
                buf[(rows - 1 - j) * d + c] = x.get(j, c) * self.sigma_low[c];
            }
        }
        let ell = HistoryRef::new(d, x.dt(), &buf, Extension::Constant, x.origin_time());
        let h0 = vec![S::zero(); self.split.high.len()];
        let psi = reconstruct_psi_fixed(&self.model, &self.split, &ell, &h0, self.lookback_steps)?;
        let u = self.split.recompose(ell.present(), &psi);
        let mut f = vec![S::zero(); self.model.len()];
        self.model.rhs(&u, &mut f);
        for (j, &i) in self.split.low.iter().enumerate() {
            out[j] = f[i] / self.sigma_low[j];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::drift_gap;
    use crate::pathspace::{FuturePath, HistoryPath};
    use crate::solver::{euler_maruyama, SolverConfig, WienerPath};
    use crate::spde::simulate;
    use std::f64::consts::PI;

    fn gl_setup(nu: f64, k: usize, n0: f64) -> (GlModel<f64>, ForcingSpec<f64>, LHSplit) {
        let m = GlModel::new(k, nu).unwrap();
        let f = ForcingSpec::low_modes(&m, n0, 1.0).unwrap();
        let s = LHSplit::from_forcing(&f);
        (m, f, s)
    }

    #[test]
    fn psi_of_zero_history_is_zero_and_decays_from_single_mode() {
        let (m, _, s) = gl_setup(5.0, 8, 1.0);
        let zeros = vec![0.0; 3 * 50];
        let ell = HistoryRef::new(3, 1e-3, &zeros, Extension::Constant, 0.0);
        let mut h0 = vec![0.0; s.high.len()];
        h0[0] = 1e-3;
        let lam = 4.0 * PI * PI * 4.0;
        let l = 40;
        let h = reconstruct_psi_fixed(&m, &s, &ell, &h0, l).unwrap();
        // linearised: per step (1 + dt)/(1 + dt nu lambda), cubic term is O(eps^3)
        let want = 1e-3 * ((1.0 + 1e-3) / (1.0 + 1e-3 * 5.0 * lam)).powi(l as i32);
        assert!((h[0] - want).abs() < 1e-9 * want.max(1e-12) + 1e-15, "{} {want}", h[0]);
        let r = reconstruct_psi(&m, &s, &ell, &h0, 1e-8, 8, MAX_LOOKBACK_STEPS).unwrap();
        assert!(r.h.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn psi_is_independent_of_h0() {
        let (m, f, s) = gl_setup(1.0, 16, 2.0);
        let dt = 1e-3;
        let u0 = vec![0.0; m.len()];
        let run = simulate(&m, &f, &u0, dt, 3000, 4).unwrap();
        let ell = run.ell_rows(&s, 3000);
        let view = HistoryRef::new(s.d(), dt, &ell, Extension::Constant, 0.0);
        let ha = vec![0.0; s.high.len()];
        let hb: Vec<f64> = (0..s.high.len()).map(|i| 0.2 * ((i as f64) * 0.7).cos()).collect();
        let ra = reconstruct_psi(&m, &s, &view, &ha, 1e-8, 8, MAX_LOOKBACK_STEPS).unwrap();
        let rb = reconstruct_psi(&m, &s, &view, &hb, 1e-8, 8, MAX_LOOKBACK_STEPS).unwrap();
        let diff: Vec<f64> = ra.h.iter().zip(&rb.h).map(|(a, b)| a - b).collect();
        assert!(high_u_norm(&m, &s, &diff) < 1e-8);
    }

    #[test]
    fn psi_is_lipschitz_in_the_low_past() {
        let (m, f, s) = gl_setup(1.0, 16, 2.0);
        let dt = 1e-3;
        let u0 = vec![0.0; m.len()];
        let run = simulate(&m, &f, &u0, dt, 2000, 5).unwrap();
        let ell = run.ell_rows(&s, 2000);
        let h0 = vec![0.0; s.high.len()];
        let base = reconstruct_psi_fixed(&m, &s, &HistoryRef::new(s.d(), dt, &ell, Extension::Constant, 0.0), &h0, 512).unwrap();
        let mut ratios = Vec::new();
        for delta in [1e-2, 1e-3, 1e-4, 1e-5] {
            let pert: Vec<f64> = ell.iter().enumerate().map(|(i, v)| v + delta * ((i as f64) * 1.3).sin()).collect();
            let p = reconstruct_psi_fixed(&m, &s, &HistoryRef::new(s.d(), dt, &pert, Extension::Constant, 0.0), &h0, 512).unwrap();
            let diff: Vec<f64> = p.iter().zip(&base).map(|(a, b)| a - b).collect();
            ratios.push(l2(&diff) / delta);
        }
        let c = ratios.iter().copied().fold(0.0, f64::max);
        assert!(ratios.iter().all(|&r| r <= c && r > 0.0));
        // ratios settle as delta shrinks
        assert!((ratios[3] / ratios[2] - 1.0).abs() < 0.05, "{ratios:?}");
    }

    #[test]
    fn non_convergence_reports_delta() {
        let (m, _, s) = gl_setup(0.001, 4, 0.0);
        let ell_rows = vec![0.0; 20];
        let ell = HistoryRef::new(1, 1e-2, &ell_rows, Extension::Constant, 0.0);
        let mut h0 = vec![0.0; s.high.len()];
        h0[0] = 0.5;
        match reconstruct_psi(&m, &s, &ell, &h0, 1e-8, 8, 64) {
            Err(Error::NonConvergence { last_delta, lookback_steps }) => {
                assert_eq!(lookback_steps, 64);
                assert!(last_delta > 1e-8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sync_identical_copies_and_decay() {
        let (m, f, s) = gl_setup(1.0, 16, 2.0);
        let u0 = vec![0.0; m.len()];
        let h = vec![0.1; s.high.len()];
        let same = sync_experiment(&m, &f, &u0, 1e-3, 500, 1, &h, &h).unwrap();
        assert!(same.gaps.iter().all(|&g| g == 0.0));
        let zero = vec![0.0; s.high.len()];
        let r = sync_experiment(&m, &f, &u0, 1e-3, 2000, 1, &h, &zero).unwrap();
        let lmin = 4.0 * PI * PI * 9.0;
        assert!(r.fitted_rate.unwrap() <= -(lmin - 1.0) / 2.0, "{:?}", r.fitted_rate);
        assert!(!r.threshold_violation);
    }

    #[test]
    fn sync_shift_invariance() {
        // adding the same vector to both copies leaves the gap series unchanged
        let (m, f, s) = gl_setup(1.0, 8, 2.0);
        let u0 = vec![0.0; m.len()];
        let a = vec![0.05; s.high.len()];
        let b = vec![0.0; s.high.len()];
        let r1 = sync_experiment(&m, &f, &u0, 1e-3, 200, 2, &a, &b).unwrap();
        assert!((r1.gaps[0] - l2(&a)).abs() < 1e-15);
        let shift: Vec<f64> = (0..s.high.len()).map(|i| 0.01 * i as f64).collect();
        let a2: Vec<f64> = a.iter().zip(&shift).map(|(x, y)| x + y).collect();
        let r2 = sync_experiment(&m, &f, &u0, 1e-3, 200, 2, &a2, &shift).unwrap();
        assert!((r2.gaps[0] - r1.gaps[0]).abs() < 1e-15);
    }

    #[test]
    fn sync_fails_below_threshold() {
        // e0-only forcing, weak enough that the mean stays near zero; the slaved
        // copies settle on mirror-image patterns instead of merging
        let m = GlModel::new(8, 0.01).unwrap();
        let f = ForcingSpec::low_modes(&m, 0.0, 0.05).unwrap();
        let s = LHSplit::from_forcing(&f);
        let mut u0 = vec![0.0; m.len()];
        u0[1] = 0.5;
        let mut ha = vec![0.0; s.high.len()];
        let mut hb = ha.clone();
        ha[0] = 0.5;
        hb[0] = -0.5;
        let r = sync_experiment(&m, &f, &u0, 1e-3, 10_000, 3, &ha, &hb).unwrap();
        assert!(*r.gaps.last().unwrap() > 0.1 * r.gaps[0], "{}", r.gaps.last().unwrap());
    }

    #[test]
    fn sobolev_constant_value() {
        let direct: f64 = 1.0 + 2.0 * (1..200_000u64).map(|k| 1.0 / (1.0 + 4.0 * PI * PI * (k * k) as f64)).sum::<f64>();
        assert!((AssumptionConstants::<f64>::sobolev_constant() - direct).abs() < 1e-6);
    }

    #[test]
    fn probes_trivial_and_random() {
        use rand::{Rng, SeedableRng};
        let (m, _, s) = gl_setup(1.0, 16, 2.0);
        let c = AssumptionConstants::gl(&m, &s);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let u: Vec<f64> = (0..m.len()).map(|_| rng.random_range(-0.2..0.2)).collect();
        let r = probe_dissipative(&m, &s, &u, &u, &c);
        assert!(r.ok && r.lhs == 0.0);
        let (l, h) = s.split(&u);
        assert!(probe_lip(&m, &s, &l, &h, &h, &c).ok);
        for _ in 0..200 {
            let u: Vec<f64> = (0..m.len()).map(|_| rng.random_range(-0.3..0.3)).collect();
            let v: Vec<f64> = (0..m.len()).map(|_| rng.random_range(-0.3..0.3)).collect();
            assert!(probe_dissipative(&m, &s, &u, &v, &c).ok);
            let (l, h) = s.split(&u);
            let (_, g) = s.split(&v);
            assert!(probe_lip(&m, &s, &l, &h, &g, &c).ok);
        }
    }

    #[test]
    fn factorization_linear_is_exact() {
        let m = GlModel::new(8, 1.0).unwrap().without_cubic();
        let f = ForcingSpec::low_modes(&m, 2.0, 1.0).unwrap();
        let s = LHSplit::from_forcing(&f);
        let mut u0 = vec![0.0; m.len()];
        u0[7] = 0.4;
        let run = simulate(&m, &f, &u0, 1e-3, 3000, 2).unwrap();
        let res = factorization_residual(&m, &s, &run, &[2000, 2500, 3000], 1024, None).unwrap();
        assert!(res.iter().all(|&(_, r)| r < 1e-8), "{res:?}");
        // lookback 0 compares with h0 itself
        let r0 = factorization_residual(&m, &s, &run, &[10], 0, None).unwrap();
        let (_, h) = s.split(run.state(10));
        assert!((r0[0].1 - l2(&h)).abs() < 1e-15);
    }

    #[test]
    fn reduced_drift_basics() {
        let (m, f, s) = gl_setup(1.0, 8, 2.0);
        let a = ReducedPdeDrift::new(m.clone(), &f, 64).unwrap();
        let zeros = vec![0.0; s.d() * 10];
        let x = HistoryRef::new(s.d(), 1e-3, &zeros, Extension::Constant, 0.0);
        assert!(a.eval(&x).unwrap().iter().all(|&v| v == 0.0));
        let bad = LHSplit::new(m.len(), vec![0, 1, 2, 3, 4, 5]).unwrap();
        assert!(matches!(
            ReducedPdeDrift::with_split(m, &f, bad, 64),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn reduced_equation_tracks_full_low_modes() {
        let (m, f, s) = gl_setup(1.0, 8, 2.0);
        let dt = 1e-3;
        let burn = 2000;
        let horizon = 5.0;
        let n = (horizon / dt) as usize;
        let u0 = vec![0.0; m.len()];
        let run = simulate(&m, &f, &u0, dt, burn + n, 6).unwrap();
        let a = ReducedPdeDrift::new(m.clone(), &f, 256).unwrap();
        let ell = run.ell_rows(&s, burn);
        let past_rows: Vec<f64> = ell.chunks(s.d()).flat_map(|r| a.to_scaled(r)).collect();
        let past = HistoryPath::from_chronological(s.d(), dt, past_rows, Extension::Constant, 0.0).unwrap();
        let noise = forcing_noise(&f, 6, 0, dt, burn + n).unwrap();
        let w = WienerPath {
            dim: s.d(),
            dt,
            n_steps: n,
            increments: noise[burn * s.d()..].to_vec(),
            seed: 6,
            stream_id: 0,
        };
        let y = euler_maruyama(&a, &past, &w, &SolverConfig::new(dt, horizon)).unwrap();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..=n {
            let full = a.to_scaled(&s.split(run.state(burn + k)).0);
            for (p, q) in y.row(k).iter().zip(&full) {
                worst = worst.max((p - q).abs());
                scale = scale.max(q.abs());
            }
        }
        // both discretise the same dynamics to O(dt); the gap stays a small fraction of the path
        assert!(worst < 0.05 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn reduced_drift_gap_decays() {
        let (m, f, s) = gl_setup(1.0, 8, 2.0);
        let dt = 1e-3;
        let a = ReducedPdeDrift::new(m, &f, 128).unwrap();
        let d = s.d();
        let x1 = HistoryPath::constant(dt, 200, &vec![0.3; d], Extension::Constant).unwrap();
        let mut rows = vec![-0.3; 200 * d];
        rows[199 * d..].iter_mut().for_each(|v| *v = 0.3);
        let x2 = HistoryPath::from_chronological(d, dt, rows, Extension::Constant, 0.0).unwrap();
        let y = FuturePath::from_chronological(d, dt, vec![0.3; 101 * d]).unwrap();
        let g0 = drift_gap(&a, &x1, &x2, &y, 0.0).unwrap();
        let g1 = drift_gap(&a, &x1, &x2, &y, 0.05).unwrap();
        let g2 = drift_gap(&a, &x1, &x2, &y, 0.1).unwrap();
        assert!(g0 > 0.0 && g1 < 0.1 * g0 && g2 < 0.1 * g1, "{g0} {g1} {g2}");
    }
}
