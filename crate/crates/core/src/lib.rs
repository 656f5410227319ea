//! Finite difference simulation of the stochastic cubic Schrödinger equation
//!
//! ```text
//! i du + (Δu + λ|u|²u) dt = u ∘ dW   on (0, 1), u = 0 on the boundary,
//! ```
//!
//! driven by a Q-Wiener process, together with the Monte Carlo harness used
//! to measure the strong spatial convergence rate of the central difference
//! scheme and the continuous dependence of solutions on data and noise.
//!
//! Modules, bottom-up:
//! - [`grid`]: uniform mesh, `δ₊`, `δ₋`, `δ₊δ₋`, discrete norms, restriction.
//! - [`noise`]: spectral covariance, counter-keyed Gaussian streams, increments.
//! - [`functionals`]: charge, discrete energy, Lyapunov proxy, inequality checks.
//! - [`scheme`]: the semi-discrete system and its charge-conserving stepper.
//! - [`experiments`]: coupled ensembles, rate fits, residual and dependence studies.
//! - [`io`]: CSV and binary encodings of grid functions and trajectories.

pub mod experiments;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod noise;
pub mod scheme;

pub use grid::{GridError, GridFunction, UniformGrid};
pub use noise::{fork_stream, NoiseSource, SpectralCovariance, StreamNoise};
pub use scheme::{evolve, InitialProfile, Regime, Scheme, SchemeConfig, SchemeError, TrajectoryState};
