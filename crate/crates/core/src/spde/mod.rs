//! Spectral Galerkin models of dissipative SPDEs with degenerate forcing.
//!
//! Fields live on L2-orthonormal real Fourier bases, so Parseval sums carry no
//! weights. A model supplies the eigenvalues `lambda` of `-Laplacian` on its
//! basis and the explicit part `N` of `F(u) = -nu lambda u + N(u)`. Time
//! stepping is semi-implicit:
//!
//! `u_{n+1} = (u_n + dt N(u_n) + sigma dB_n) / (1 + dt nu lambda)`.
//!
//! The reduction to forced low modes ([`reduction`]) reuses the same scheme
//! for the slaved high modes, so slaving is exact at the discrete level.

pub mod gl;
pub mod nse;
pub mod reduction;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::solver::sample_wiener;

pub use gl::GlModel;
pub use nse::NseModel;
pub use reduction::{
    factorization_residual, probe_dissipative, probe_lip, reconstruct_psi, reconstruct_psi_fixed,
    high_u_norm, sync_experiment, AssumptionConstants, GlConstants, ProbeReport, PsiResult,
    ReducedPdeDrift, SyncSeries,
};

/// A finite-dimensional Galerkin system `du = F(u) dt + G dB`.
pub trait GalerkinModel<S: Real>: Send + Sync {
    /// Number of real coefficients.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Eigenvalue of `-Laplacian` for each coefficient.
    fn eigenvalues(&self) -> &[S];

    fn viscosity(&self) -> S;

    /// Wavenumber radius `|k|` of each coefficient.
    fn wavenumber(&self, idx: usize) -> S {
        (self.eigenvalues()[idx] / (S::lit(4.0) * S::PI() * S::PI())).sqrt()
    }

    /// The part of `F` stepped explicitly.
    fn explicit_rhs(&self, u: &[S], out: &mut [S]);

    /// `F(u) = -nu lambda u + N(u)`.
    fn rhs(&self, u: &[S], out: &mut [S]) {
        self.explicit_rhs(u, out);
        let nu = self.viscosity();
        for ((o, &x), &l) in out.iter_mut().zip(u).zip(self.eigenvalues()) {
            *o -= nu * l * x;
        }
    }

    /// The Lyapunov functional `U` of the model.
    fn lyapunov_u(&self, u: &[S]) -> S;
}

/// Noise amplitudes per coefficient; `sigma_k > 0` marks a forced mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec<S> {
    pub sigma: Vec<S>,
    /// Largest radius `N0` with every coefficient of radius `<= N0` forced.
    pub n0: S,
    /// Smallest radius `N1` beyond every forced coefficient.
    pub n1: S,
}

impl<S: Real> ForcingSpec<S> {
    pub fn new<M: GalerkinModel<S> + ?Sized>(model: &M, sigma: Vec<S>) -> Result<Self> {
        if sigma.len() != model.len() {
            return Err(Error::DimMismatch {
                expected: model.len(),
                found: sigma.len(),
            });
        }
        if sigma.iter().any(|s| !(*s >= S::zero()) || !s.is_finite()) {
            return Err(Error::invalid("sigma", "amplitudes must be finite and nonnegative"));
        }
        if sigma.iter().all(|s| *s == S::zero()) {
            return Err(Error::invalid("sigma", "at least one mode must be forced"));
        }
        let radius = |i: usize| model.wavenumber(i);
        let first_unforced = (0..sigma.len())
            .filter(|&i| sigma[i] == S::zero())
            .map(radius)
            .fold(S::infinity(), |a, b| a.min(b));
        let n0 = (0..sigma.len())
            .filter(|&i| sigma[i] > S::zero() && radius(i) < first_unforced)
            .map(radius)
            .fold(S::zero(), |a, b| a.max(b));
        let last_forced = (0..sigma.len())
            .filter(|&i| sigma[i] > S::zero())
            .map(radius)
            .fold(S::zero(), |a, b| a.max(b));
        let n1 = (0..sigma.len())
            .map(radius)
            .filter(|&r| r > last_forced)
            .fold(S::infinity(), |a, b| a.min(b));
        Ok(Self { sigma, n0, n1 })
    }

    /// Forces every coefficient with `|k| <= n0` at amplitude `amp`.
    pub fn low_modes<M: GalerkinModel<S> + ?Sized>(model: &M, n0: S, amp: S) -> Result<Self> {
        let tol = S::lit(1e-9);
        let sigma = (0..model.len())
            .map(|i| if model.wavenumber(i) <= n0 + tol { amp } else { S::zero() })
            .collect();
        Self::new(model, sigma)
    }

    pub fn forced(&self) -> Vec<usize> {
        (0..self.sigma.len()).filter(|&i| self.sigma[i] > S::zero()).collect()
    }

    /// `E_m = sum lambda_k^m sigma_k^2`.
    pub fn energy<M: GalerkinModel<S> + ?Sized>(&self, model: &M, m: i32) -> S {
        self.sigma
            .iter()
            .zip(model.eigenvalues())
            .map(|(&s, &l)| if s > S::zero() { l.powi(m) * s * s } else { S::zero() })
            .sum()
    }
}

/// Index sets of the forced low modes and their complement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LHSplit {
    pub low: Vec<usize>,
    pub high: Vec<usize>,
}

impl LHSplit {
    pub fn new(len: usize, low: Vec<usize>) -> Result<Self> {
        let mut mark = vec![false; len];
        for &i in &low {
            if i >= len || mark[i] {
                return Err(Error::invalid("low", "indices must be distinct and in range"));
            }
            mark[i] = true;
        }
        let high = (0..len).filter(|&i| !mark[i]).collect();
        Ok(Self { low, high })
    }

    /// Low modes are exactly the forced ones.
    pub fn from_forcing<S: Real>(forcing: &ForcingSpec<S>) -> Self {
        Self::new(forcing.sigma.len(), forcing.forced()).expect("forced indices are valid")
    }

    pub fn len(&self) -> usize {
        self.low.len() + self.high.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d(&self) -> usize {
        self.low.len()
    }

    pub fn split<S: Real>(&self, u: &[S]) -> (Vec<S>, Vec<S>) {
        (
            self.low.iter().map(|&i| u[i]).collect(),
            self.high.iter().map(|&i| u[i]).collect(),
        )
    }

    pub fn recompose<S: Real>(&self, ell: &[S], h: &[S]) -> Vec<S> {
        let mut u = vec![S::zero(); self.len()];
        self.recompose_into(ell, h, &mut u);
        u
    }

    pub fn recompose_into<S: Real>(&self, ell: &[S], h: &[S], u: &mut [S]) {
        for (&i, &v) in self.low.iter().zip(ell) {
            u[i] = v;
        }
        for (&i, &v) in self.high.iter().zip(h) {
            u[i] = v;
        }
    }
}

pub fn split_lh<S: Real>(u: &[S], split: &LHSplit) -> (Vec<S>, Vec<S>) {
    split.split(u)
}

/// One semi-implicit step. `noise` holds Brownian increments per coefficient
/// and must vanish off the forced set.
pub fn spde_step<S: Real, M: GalerkinModel<S> + ?Sized>(
    model: &M,
    u: &[S],
    forcing: &ForcingSpec<S>,
    dt: S,
    noise: &[S],
) -> Result<Vec<S>> {
    let n = model.len();
    if u.len() != n || noise.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            found: if u.len() != n { u.len() } else { noise.len() },
        });
    }
    if let Some(i) = (0..n).find(|&i| noise[i] != S::zero() && forcing.sigma[i] == S::zero()) {
        return Err(Error::ContractViolation(format!(
            "noise on unforced coefficient {i}"
        )));
    }
    let mut out = vec![S::zero(); n];
    step_into(model, u, dt, |i| forcing.sigma[i] * noise[i], &mut out);
    check_finite(&out, 0, dt)?;
    Ok(out)
}

pub(crate) fn step_into<S: Real, M: GalerkinModel<S> + ?Sized>(
    model: &M,
    u: &[S],
    dt: S,
    kick: impl Fn(usize) -> S,
    out: &mut [S],
) {
    model.explicit_rhs(u, out);
    let nu = model.viscosity();
    for (i, (o, &l)) in out.iter_mut().zip(model.eigenvalues()).enumerate() {
        *o = (u[i] + dt * *o + kick(i)) / (S::one() + dt * nu * l);
    }
}

pub(crate) fn check_finite<S: Real>(u: &[S], step: usize, dt: S) -> Result<()> {
    if let Some(bad) = u.iter().find(|v| !v.is_finite()) {
        return Err(Error::Blowup {
            step,
            time: (S::from_usize_lossy(step) * dt).f64(),
            value: bad.f64(),
            radius: f64::INFINITY,
        });
    }
    Ok(())
}

/// Stored run of a Galerkin system.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdeRun<S> {
    pub len: usize,
    pub dt: S,
    /// Row-major, `n_steps + 1` rows.
    pub states: Vec<S>,
}

impl<S: Real> SpdeRun<S> {
    pub fn n_rows(&self) -> usize {
        self.states.len() / self.len
    }

    pub fn state(&self, k: usize) -> &[S] {
        &self.states[k * self.len..(k + 1) * self.len]
    }

    /// Low-mode rows `0..=k`, chronological.
    pub fn ell_rows(&self, split: &LHSplit, upto: usize) -> Vec<S> {
        (0..=upto)
            .flat_map(|k| split.low.iter().map(move |&i| (k, i)))
            .map(|(k, i)| self.states[k * self.len + i])
            .collect()
    }
}

/// Increments of the forced modes, keyed by `(seed, stream)`.
///
/// Row `k` holds the `d` Brownian increments of step `k` in forced-index order.
pub fn forcing_noise<S: Real>(forcing: &ForcingSpec<S>, seed: u64, stream: u64, dt: S, n_steps: usize) -> Result<Vec<S>> {
    Ok(sample_wiener(seed, stream, forcing.forced().len(), dt, n_steps)?.increments)
}

/// Simulates `n_steps` semi-implicit steps from `u0`.
pub fn simulate<S: Real, M: GalerkinModel<S> + ?Sized>(
    model: &M,
    forcing: &ForcingSpec<S>,
    u0: &[S],
    dt: S,
    n_steps: usize,
    seed: u64,
) -> Result<SpdeRun<S>> {
    let noise = forcing_noise(forcing, seed, 0, dt, n_steps)?;
    simulate_with_noise(model, forcing, u0, dt, n_steps, &noise)
}

pub fn simulate_with_noise<S: Real, M: GalerkinModel<S> + ?Sized>(
    model: &M,
    forcing: &ForcingSpec<S>,
    u0: &[S],
    dt: S,
    n_steps: usize,
    noise: &[S],
) -> Result<SpdeRun<S>> {
    let n = model.len();
    if u0.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            found: u0.len(),
        });
    }
    let forced = forcing.forced();
    let d = forced.len();
    if noise.len() < n_steps * d {
        return Err(Error::invalid("noise", "too few increments"));
    }
    let mut kick = vec![S::zero(); n];
    let mut states = Vec::with_capacity((n_steps + 1) * n);
    states.extend_from_slice(u0);
    let mut next = vec![S::zero(); n];
    for k in 0..n_steps {
        for (j, &i) in forced.iter().enumerate() {
            kick[i] = forcing.sigma[i] * noise[k * d + j];
        }
        let cur = &states[k * n..(k + 1) * n];
        step_into(model, cur, dt, |i| kick[i], &mut next);
        check_finite(&next, k + 1, dt)?;
        states.extend_from_slice(&next);
    }
    Ok(SpdeRun { len: n, dt, states })
}
