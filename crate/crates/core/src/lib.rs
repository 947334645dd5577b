//! Simulation and diagnostics for Ito equations `dX = a(pi_t X) dt + dW`
//! whose drift depends on the whole past, and for the memory equations that
//! arise from reducing stochastically forced dissipative PDEs to their forced
//! low modes.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common case.

pub mod drift;
pub mod ergodics;
pub mod error;
pub mod io;
pub mod lyapunov;
pub mod pathspace;
pub mod scalar;
pub mod solver;
pub mod spde;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub use drift::{
    ConstantDrift, GaussianKernelDrift, LinearMarkovDrift, MarkovDrift, MemoryDrift,
    PathDependentKernelDrift,
};
pub use pathspace::{concat, Extension, FullPath, FuturePath, HistoryPath, HistoryRef};
pub use solver::{euler_maruyama, picard_solve, sample_wiener, solve_cauchy, SolverConfig, WienerPath};

pub type HistoryPath64 = HistoryPath<f64>;
pub type FuturePath64 = FuturePath<f64>;
pub type FullPath64 = FullPath<f64>;
pub type WienerPath64 = WienerPath<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type GaussianKernelDrift64 = GaussianKernelDrift<f64>;
pub type PathDependentKernelDrift64 = PathDependentKernelDrift<f64>;

pub type HistoryPath32 = HistoryPath<f32>;
pub type FuturePath32 = FuturePath<f32>;
pub type FullPath32 = FullPath<f32>;
pub type WienerPath32 = WienerPath<f32>;
pub type SolverConfig32 = SolverConfig<f32>;
pub type GaussianKernelDrift32 = GaussianKernelDrift<f32>;
pub type PathDependentKernelDrift32 = PathDependentKernelDrift<f32>;
