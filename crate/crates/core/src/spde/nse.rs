//! 2D Navier-Stokes on the unit torus in vorticity form,
//! `d omega = [nu Lap omega - u . grad omega] dt + G dW`, `u = curl^{-1} omega`.
//!
//! Wavevectors run over the half plane `k1 > 0` or `k1 = 0, k2 > 0` with
//! `|k1|, |k2| <= K`; each carries `sqrt(2) cos(2 pi k.x)` (even slot) and
//! `sqrt(2) sin(2 pi k.x)` (odd slot). Products are evaluated on an `n x n`
//! grid with `n >= 3K + 1`, which removes all aliasing of the quadratic term.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::GalerkinModel;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone)]
pub struct NseModel<S: Real> {
    k_max: usize,
    n: usize,
    nu: S,
    modes: Vec<(i64, i64)>,
    lambda: Vec<S>,
    fwd: Arc<dyn Fft<S>>,
    inv: Arc<dyn Fft<S>>,
}

impl<S: Real> std::fmt::Debug for NseModel<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NseModel")
            .field("k_max", &self.k_max)
            .field("grid", &self.n)
            .field("nu", &self.nu)
            .finish()
    }
}

type Grid<S> = Vec<Complex<S>>;

impl<S: Real> NseModel<S> {
    /// Truncation `K = k_max` on the smallest even grid with `n >= 3K + 1`.
    pub fn new(k_max: usize, nu: S) -> Result<Self> {
        let n = (3 * k_max + 1).div_ceil(2) * 2;
        Self::build(k_max, n, nu)
    }

    /// Largest truncation that an `n x n` grid dealiases exactly.
    pub fn with_grid(n: usize, nu: S) -> Result<Self> {
        if n < 4 {
            return Err(Error::invalid("cutoff", "grid too small"));
        }
        Self::build((n - 1) / 3, n, nu)
    }

    fn build(k_max: usize, n: usize, nu: S) -> Result<Self> {
        if k_max < 2 {
            return Err(Error::invalid("cutoff", "need at least 8 points per axis"));
        }
        if !(nu >= S::zero()) {
            return Err(Error::invalid("nu", "must be nonnegative"));
        }
        let k = k_max as i64;
        let mut modes = Vec::new();
        for k1 in 0..=k {
            for k2 in -k..=k {
                if k1 > 0 || k2 > 0 {
                    modes.push((k1, k2));
                }
            }
        }
        let four_pi2 = S::lit(4.0) * S::PI() * S::PI();
        let lambda = modes
            .iter()
            .flat_map(|&(a, b)| {
                let l = four_pi2 * S::from_i64(a * a + b * b).unwrap();
                [l, l]
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            k_max,
            n,
            nu,
            modes,
            lambda,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn with_viscosity(mut self, nu: S) -> Self {
        self.nu = nu;
        self
    }

    pub fn modes(&self) -> &[(i64, i64)] {
        &self.modes
    }

    /// Slot of the cosine (`sine = false`) or sine coefficient of `k`.
    pub fn index_of(&self, k: (i64, i64), sine: bool) -> Option<usize> {
        self.modes.iter().position(|&m| m == k).map(|i| 2 * i + sine as usize)
    }

    fn wrap(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    fn fft2(&self, buf: &mut [Complex<S>], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        plan.process(buf);
        let mut col = vec![Complex::new(S::zero(), S::zero()); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = buf[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                buf[i * n + j] = col[i];
            }
        }
    }

    /// Complex spectrum on the full grid; entry `(i, j)` holds wavevector
    /// `(k1, k2)` with `i = k1 mod n`, `j = k2 mod n`, scaled by `mult(k)`.
    fn spectrum(&self, w: &[S], mult: impl Fn(i64, i64) -> Complex<S>) -> Grid<S> {
        let n = self.n;
        let r2 = S::SQRT_2().recip();
        let mut buf = vec![Complex::new(S::zero(), S::zero()); n * n];
        for (m, &(k1, k2)) in self.modes.iter().enumerate() {
            let om = Complex::new(w[2 * m] * r2, -w[2 * m + 1] * r2) * mult(k1, k2);
            buf[self.wrap(k1) * n + self.wrap(k2)] = om;
            let neg = Complex::new(w[2 * m] * r2, w[2 * m + 1] * r2) * mult(-k1, -k2);
            buf[self.wrap(-k1) * n + self.wrap(-k2)] = neg;
        }
        buf
    }

    fn physical(&self, w: &[S], mult: impl Fn(i64, i64) -> Complex<S>) -> Vec<S> {
        let mut buf = self.spectrum(w, mult);
        self.fft2(&mut buf, true);
        buf.into_iter().map(|c| c.re).collect()
    }

    fn project(&self, vals: &[S]) -> Vec<S> {
        let n = self.n;
        let mut buf: Grid<S> = vals.iter().map(|&v| Complex::new(v, S::zero())).collect();
        self.fft2(&mut buf, false);
        let scale = S::from_usize_lossy(n * n);
        let s2 = S::SQRT_2();
        let mut out = vec![S::zero(); self.len()];
        for (m, &(k1, k2)) in self.modes.iter().enumerate() {
            let c = buf[self.wrap(k1) * n + self.wrap(k2)] / scale;
            out[2 * m] = s2 * c.re;
            out[2 * m + 1] = -s2 * c.im;
        }
        out
    }

    /// Vorticity on the `n x n` grid, row index along `x1`.
    pub fn to_grid(&self, w: &[S]) -> Vec<S> {
        self.physical(w, |_, _| Complex::new(S::one(), S::zero()))
    }

    pub fn from_grid(&self, vals: &[S]) -> Vec<S> {
        self.project(vals)
    }

    /// Velocity `(u1, u2) = (d_y psi, -d_x psi)` with `-Lap psi = omega`.
    pub fn velocity(&self, w: &[S]) -> (Vec<S>, Vec<S>) {
        let two_pi = S::lit(2.0) * S::PI();
        let inv_lap = move |k1: i64, k2: i64| {
            let l = two_pi * two_pi * S::from_i64(k1 * k1 + k2 * k2).unwrap();
            if l == S::zero() {
                S::zero()
            } else {
                l.recip()
            }
        };
        let u1 = self.physical(w, |k1, k2| Complex::new(S::zero(), two_pi * S::from_i64(k2).unwrap() * inv_lap(k1, k2)));
        let u2 = self.physical(w, |k1, k2| Complex::new(S::zero(), -two_pi * S::from_i64(k1).unwrap() * inv_lap(k1, k2)));
        (u1, u2)
    }

    /// Galerkin projection of `-u . grad omega`.
    pub fn advection(&self, w: &[S]) -> Vec<S> {
        let two_pi = S::lit(2.0) * S::PI();
        let (u1, u2) = self.velocity(w);
        let wx = self.physical(w, |k1, _| Complex::new(S::zero(), two_pi * S::from_i64(k1).unwrap()));
        let wy = self.physical(w, |_, k2| Complex::new(S::zero(), two_pi * S::from_i64(k2).unwrap()));
        let prod: Vec<S> = (0..u1.len()).map(|i| -(u1[i] * wx[i] + u2[i] * wy[i])).collect();
        self.project(&prod)
    }

    /// `nu Lap omega - u . grad omega`.
    pub fn nse_rhs(&self, w: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.len()];
        self.rhs(w, &mut out);
        out
    }

    /// Kinetic energy `||u||^2 = sum |omega_k|^2 / lambda_k`.
    pub fn energy(&self, w: &[S]) -> S {
        w.iter().zip(&self.lambda).map(|(&c, &l)| c * c / l).sum()
    }

    /// Enstrophy `||omega||^2`.
    pub fn enstrophy(&self, w: &[S]) -> S {
        w.iter().map(|&c| c * c).sum()
    }

    /// One classical RK4 step of the inviscid, unforced advection.
    pub fn advect_rk4(&self, w: &[S], dt: S) -> Vec<S> {
        let half = dt / S::lit(2.0);
        let axpy = |a: &[S], s: S, b: &[S]| -> Vec<S> { a.iter().zip(b).map(|(&x, &y)| x + s * y).collect() };
        let k1 = self.advection(w);
        let k2 = self.advection(&axpy(w, half, &k1));
        let k3 = self.advection(&axpy(w, half, &k2));
        let k4 = self.advection(&axpy(w, dt, &k3));
        let six = S::lit(6.0);
        (0..w.len())
            .map(|i| w[i] + dt / six * (k1[i] + S::lit(2.0) * (k2[i] + k3[i]) + k4[i]))
            .collect()
    }
}

impl<S: Real> GalerkinModel<S> for NseModel<S> {
    fn len(&self) -> usize {
        2 * self.modes.len()
    }

    fn eigenvalues(&self) -> &[S] {
        &self.lambda
    }

    fn viscosity(&self) -> S {
        self.nu
    }

    fn explicit_rhs(&self, u: &[S], out: &mut [S]) {
        out.copy_from_slice(&self.advection(u));
    }

    /// `U = ||grad u||^2 = ||omega||^2`.
    fn lyapunov_u(&self, u: &[S]) -> S {
        self.enstrophy(u)
    }
}
