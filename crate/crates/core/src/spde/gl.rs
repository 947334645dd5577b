//! Ginzburg-Landau `du = [nu u_xx + u - u^3] dt + G dW` on the unit circle.
//!
//! Coefficient `0` multiplies `1`; coefficients `2k-1` and `2k` multiply
//! `sqrt(2) sin(2 pi k x)` and `sqrt(2) cos(2 pi k x)` for `k = 1..=K`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::GalerkinModel;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone)]
pub struct GlModel<S: Real> {
    k_max: usize,
    nu: S,
    cubic: bool,
    lambda: Vec<S>,
    grid: usize,
    fwd: Arc<dyn Fft<S>>,
    inv: Arc<dyn Fft<S>>,
}

impl<S: Real> std::fmt::Debug for GlModel<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GlModel")
            .field("k_max", &self.k_max)
            .field("nu", &self.nu)
            .field("cubic", &self.cubic)
            .field("grid", &self.grid)
            .finish()
    }
}

impl<S: Real> GlModel<S> {
    /// Modes up to wavenumber `k_max`, i.e. `2 k_max + 1` coefficients.
    pub fn new(k_max: usize, nu: S) -> Result<Self> {
        if k_max < 1 {
            return Err(Error::invalid("cutoff", "need at least 3 modes"));
        }
        if !(nu > S::zero()) {
            return Err(Error::invalid("nu", "must be positive"));
        }
        let four_pi2 = S::lit(4.0) * S::PI() * S::PI();
        let mut lambda = vec![S::zero(); 2 * k_max + 1];
        for k in 1..=k_max {
            let l = four_pi2 * S::from_usize_lossy(k * k);
            lambda[2 * k - 1] = l;
            lambda[2 * k] = l;
        }
        // cubes of band-K functions reach 3K; 4K+1 points keep |k| <= K alias-free
        let grid = (4 * k_max + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Ok(Self {
            k_max,
            nu,
            cubic: true,
            lambda,
            grid,
            fwd: planner.plan_fft_forward(grid),
            inv: planner.plan_fft_inverse(grid),
        })
    }

    /// Drops the cubic term, leaving the linear equation.
    pub fn without_cubic(mut self) -> Self {
        self.cubic = false;
        self
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn grid_size(&self) -> usize {
        self.grid
    }

    pub fn sin_index(k: usize) -> usize {
        2 * k - 1
    }

    pub fn cos_index(k: usize) -> usize {
        2 * k
    }

    /// Values on the collocation grid `x_j = j / grid`.
    pub fn to_grid(&self, u: &[S]) -> Vec<S> {
        let mut buf = self.spectrum(u);
        self.inv.process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Coefficients of the band-limited interpolant of grid values, truncated to `K`.
    pub fn from_grid(&self, vals: &[S]) -> Vec<S> {
        let mut buf: Vec<Complex<S>> = vals.iter().map(|&v| Complex::new(v, S::zero())).collect();
        self.fwd.process(&mut buf);
        self.coefficients(&buf)
    }

    fn spectrum(&self, u: &[S]) -> Vec<Complex<S>> {
        let m = self.grid;
        let r2 = S::SQRT_2().recip();
        let mut buf = vec![Complex::new(S::zero(), S::zero()); m];
        buf[0] = Complex::new(u[0], S::zero());
        for k in 1..=self.k_max {
            let c = Complex::new(u[2 * k] * r2, -u[2 * k - 1] * r2);
            buf[k] = c;
            buf[m - k] = c.conj();
        }
        buf
    }

    fn coefficients(&self, buf: &[Complex<S>]) -> Vec<S> {
        let m = S::from_usize_lossy(self.grid);
        let s2 = S::SQRT_2();
        let mut out = vec![S::zero(); 2 * self.k_max + 1];
        out[0] = buf[0].re / m;
        for k in 1..=self.k_max {
            out[2 * k] = s2 * buf[k].re / m;
            out[2 * k - 1] = -s2 * buf[k].im / m;
        }
        out
    }

    /// Galerkin projection of `u^3`.
    pub fn cubic_term(&self, u: &[S]) -> Vec<S> {
        let mut buf = self.spectrum(u);
        self.inv.process(&mut buf);
        for c in buf.iter_mut() {
            let v = c.re;
            *c = Complex::new(v * v * v, S::zero());
        }
        self.fwd.process(&mut buf);
        self.coefficients(&buf)
    }

    /// `F(u) = nu u_xx + u - u^3`.
    pub fn gl_rhs(&self, u: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.len()];
        self.rhs(u, &mut out);
        out
    }

    /// `int u^2 + |u_x|^2` by quadrature on the collocation grid.
    pub fn lyapunov_u_quadrature(&self, u: &[S]) -> S {
        let m = self.grid;
        let vals = self.to_grid(u);
        // derivative coefficients: d/dx sqrt2 sin = 2 pi k sqrt2 cos, d/dx sqrt2 cos = -2 pi k sqrt2 sin
        let mut du = vec![S::zero(); self.len()];
        let two_pi = S::lit(2.0) * S::PI();
        for k in 1..=self.k_max {
            let w = two_pi * S::from_usize_lossy(k);
            du[2 * k] = w * u[2 * k - 1];
            du[2 * k - 1] = -w * u[2 * k];
        }
        let dvals = self.to_grid(&du);
        let n = S::from_usize_lossy(m);
        vals.iter().zip(&dvals).map(|(&v, &d)| v * v + d * d).sum::<S>() / n
    }
}

impl<S: Real> GalerkinModel<S> for GlModel<S> {
    fn len(&self) -> usize {
        2 * self.k_max + 1
    }

    fn eigenvalues(&self) -> &[S] {
        &self.lambda
    }

    fn viscosity(&self) -> S {
        self.nu
    }

    fn explicit_rhs(&self, u: &[S], out: &mut [S]) {
        if self.cubic {
            let c = self.cubic_term(u);
            for ((o, &x), &y) in out.iter_mut().zip(u).zip(&c) {
                *o = x - y;
            }
        } else {
            out.copy_from_slice(u);
        }
    }

    /// `U(u) = ||u||^2 + ||u_x||^2`.
    fn lyapunov_u(&self, u: &[S]) -> S {
        u.iter().zip(&self.lambda).map(|(&c, &l)| (S::one() + l) * c * c).sum()
    }
}
