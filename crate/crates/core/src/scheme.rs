//! Central difference semi-discretization with a stochastic implicit midpoint
//! time stepper.
//!
//! One step solves
//!
//! ```text
//! u⁺ = u + i dt δ₊δ₋m + i λ dt |m|² m − i m ΔW,   m = (u + u⁺)/2
//! ```
//!
//! which is the midpoint rule for the Stratonovich form
//! `i du + (δ₊δ₋u + λ|u|²u) dt = u ∘ dW`. Writing the local terms as a real
//! potential `V = λ dt |m|² − ΔW`, the step is the Cayley transform
//! `(I − iA) u⁺ = (I + iA) u` with `A = (dt/2) δ₊δ₋ + V/2` Hermitian. The
//! potential is iterated to a fixed point while each iterate is obtained from
//! one complex tridiagonal solve, so every iterate, converged or not, has the
//! same discrete charge as `u` up to rounding.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functionals::FunctionalReport;
use crate::grid::{GridError, GridFunction, UniformGrid};
use crate::noise::{ModeTable, NoiseError, NoiseIncrement, NoiseSource, SpectralCovariance};

/// Sign of the cubic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `λ = +1`
    Focusing,
    /// `λ = −1`
    Defocusing,
}

impl Regime {
    pub fn lambda(self) -> f64 {
        match self {
            Regime::Focusing => 1.0,
            Regime::Defocusing => -1.0,
        }
    }

    pub fn from_lambda(lambda: f64) -> Option<Self> {
        if lambda == 1.0 {
            Some(Regime::Focusing)
        } else if lambda == -1.0 {
            Some(Regime::Defocusing)
        } else {
            None
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("fixed-point iteration did not converge at t = {t} after {iterations} iterations (last update {residual:e})")]
    FixedPointDiverged { t: f64, iterations: usize, residual: f64 },
    #[error("blow-up at t = {t}: sup norm {linf:e} exceeds the threshold")]
    BlowUp { t: f64, linf: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

impl SchemeError {
    /// Time at which a stepping failure happened.
    pub fn time(&self) -> Option<f64> {
        match self {
            SchemeError::FixedPointDiverged { t, .. } | SchemeError::BlowUp { t, .. } => Some(*t),
            _ => None,
        }
    }
}

/// Full specification of a single trajectory run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub n_interior: usize,
    pub dt: f64,
    pub t_final: f64,
    pub regime: Regime,
    pub covariance: SpectralCovariance,
    pub seed: u64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Relaxation weight for the potential update, in `(0, 1]`.
    pub fp_damping: f64,
    pub blowup_threshold: f64,
    /// Record a [`FunctionalReport`] every this many steps; `0` keeps only the
    /// first and last states.
    pub report_every: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            n_interior: 63,
            dt: 1e-4,
            t_final: 0.5,
            regime: Regime::Defocusing,
            covariance: SpectralCovariance::power_law(32, 12.0).expect("valid default spectrum"),
            seed: 0,
            fp_tol: 1e-12,
            fp_max_iter: 100,
            fp_damping: 1.0,
            blowup_threshold: 1e6,
            report_every: 1,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_interior == 0 {
            return Err(ConfigError::new("n", "need at least one interior node"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ConfigError::new("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(ConfigError::new("t", format!("must be nonnegative, got {}", self.t_final)));
        }
        if self.t_final > 0.0 && self.dt > self.t_final {
            return Err(ConfigError::new(
                "dt",
                format!("time step {} exceeds the final time {}", self.dt, self.t_final),
            ));
        }
        if !(self.fp_tol.is_finite() && self.fp_tol > 0.0) {
            return Err(ConfigError::new("fp_tol", "must be positive"));
        }
        if self.fp_max_iter == 0 {
            return Err(ConfigError::new("fp_max_iter", "must be at least 1"));
        }
        if !(self.fp_damping > 0.0 && self.fp_damping <= 1.0) {
            return Err(ConfigError::new("fp_damping", "must lie in (0, 1]"));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(ConfigError::new("blowup_threshold", "must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<UniformGrid, GridError> {
        UniformGrid::new(self.n_interior)
    }

    /// Step sizes covering `[0, T]`: full steps of `dt`, then one shorter
    /// step if `T/dt` is not an integer.
    pub fn step_sizes(&self) -> Vec<f64> {
        if self.t_final == 0.0 {
            return Vec::new();
        }
        let ratio = self.t_final / self.dt;
        let nearest = ratio.round();
        let mut steps;
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            steps = vec![self.dt; nearest as usize];
        } else {
            let full = ratio.floor() as usize;
            steps = vec![self.dt; full];
            steps.push(self.t_final - full as f64 * self.dt);
        }
        steps
    }
}

/// Built-in deterministic initial profiles; boundary values are always zeroed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialProfile {
    /// `a · sin(kπx)`
    Sine { mode: u32, amplitude: f64 },
    /// `a · sech((x − c)/w)`
    Sech { amplitude: f64, center: f64, width: f64 },
}

impl InitialProfile {
    pub fn sample(&self, grid: &UniformGrid) -> GridFunction {
        match *self {
            InitialProfile::Sine { mode, amplitude } => GridFunction::dirichlet_from_fn(*grid, |x| {
                Complex64::new(amplitude * (mode as f64 * PI * x).sin(), 0.0)
            }),
            InitialProfile::Sech {
                amplitude,
                center,
                width,
            } => GridFunction::dirichlet_from_fn(*grid, |x| {
                Complex64::new(amplitude / ((x - center) / width).cosh(), 0.0)
            }),
        }
    }
}

/// Itô drift `i δ₊δ₋u + iλ|u|²u − ½F_Q u` at interior nodes, zero on the boundary.
pub fn drift(u: &GridFunction, regime: Regime, f_q: &GridFunction) -> Result<GridFunction, GridError> {
    if u.grid() != f_q.grid() {
        return Err(GridError::Mismatch {
            left: u.grid().n_interior(),
            right: f_q.grid().n_interior(),
        });
    }
    let lambda = regime.lambda();
    let n = u.grid().n_interior();
    let mut out = u.laplacian();
    let (uv, fv) = (u.values(), f_q.values());
    for (l, d) in out.values_mut().iter_mut().enumerate() {
        if l == 0 || l == n + 1 {
            *d = Complex64::new(0.0, 0.0);
        } else {
            let z = uv[l];
            *d = Complex64::i() * (*d + z * (lambda * z.norm_sqr())) - z * (0.5 * fv[l].re);
        }
    }
    Ok(out)
}

/// State of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub t: f64,
    pub u: GridFunction,
    pub step_index: u64,
    pub reports: Vec<FunctionalReport>,
}

impl TrajectoryState {
    pub fn initial(u: GridFunction) -> Self {
        Self {
            t: 0.0,
            u,
            step_index: 0,
            reports: Vec::new(),
        }
    }

    /// `max_t |charge(t) − charge(0)| / charge(0)` over the recorded reports.
    pub fn max_relative_charge_drift(&self) -> f64 {
        let Some(first) = self.reports.first() else {
            return 0.0;
        };
        let c0 = first.charge;
        let worst = self.reports.iter().map(|r| (r.charge - c0).abs()).fold(0.0, f64::max);
        if c0 > 0.0 {
            worst / c0
        } else {
            worst
        }
    }

    /// Supremum of the sup norm over the recorded reports.
    pub fn sup_linf(&self) -> f64 {
        self.reports.iter().map(|r| r.linf).fold(0.0, f64::max)
    }

    pub fn sup_h1_seminorm(&self) -> f64 {
        self.reports.iter().map(|r| r.h1_seminorm).fold(0.0, f64::max)
    }
}

/// Per-grid integrator: mode table, `F_Q`, solver settings and scratch space.
#[derive(Debug, Clone)]
pub struct Scheme {
    grid: UniformGrid,
    regime: Regime,
    covariance: SpectralCovariance,
    modes: ModeTable,
    f_q: GridFunction,
    fp_tol: f64,
    fp_max_iter: usize,
    fp_damping: f64,
    blowup_threshold: f64,
    potential: Vec<f64>,
    rhs: Vec<Complex64>,
    sweep: Vec<Complex64>,
    guess: Vec<Complex64>,
    noise: Vec<f64>,
}

impl Scheme {
    pub fn new(cfg: &SchemeConfig) -> Result<Self, SchemeError> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let n = grid.len();
        Ok(Self {
            grid,
            regime: cfg.regime,
            covariance: cfg.covariance.clone(),
            modes: cfg.covariance.mode_table(&grid),
            f_q: cfg.covariance.evaluate_fq(&grid),
            fp_tol: cfg.fp_tol,
            fp_max_iter: cfg.fp_max_iter,
            fp_damping: cfg.fp_damping,
            blowup_threshold: cfg.blowup_threshold,
            potential: vec![0.0; n],
            rhs: vec![Complex64::new(0.0, 0.0); n],
            sweep: vec![Complex64::new(0.0, 0.0); n],
            guess: vec![Complex64::new(0.0, 0.0); n],
            noise: vec![0.0; n],
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn covariance(&self) -> &SpectralCovariance {
        &self.covariance
    }

    pub fn f_q(&self) -> &GridFunction {
        &self.f_q
    }

    /// Evaluates `scale · ΔW` on this grid from shared draws into internal scratch.
    pub fn load_increment(&mut self, draws: &[f64], dt: f64, scale: f64) {
        let coeffs: Vec<f64> = self
            .covariance
            .coefficients(dt, draws)
            .into_iter()
            .map(|c| c * scale)
            .collect();
        self.modes.accumulate(&coeffs, &mut self.noise);
    }

    /// Nodal values of the increment last loaded by [`Scheme::load_increment`].
    pub fn loaded_increment(&self) -> &[f64] {
        &self.noise
    }

    /// Advances `u` by one step using the increment loaded into scratch.
    /// Returns the number of fixed-point iterations. `t` only labels errors.
    pub fn advance_loaded(&mut self, u: &mut GridFunction, dt: f64, t: f64) -> Result<usize, SchemeError> {
        let noise = std::mem::take(&mut self.noise);
        let out = self.advance(u, &noise, dt, t);
        self.noise = noise;
        out
    }

    /// Advances `u` by one step with nodal increment `dw`. On error `u` is
    /// left untouched.
    pub fn advance(&mut self, u: &mut GridFunction, dw: &[f64], dt: f64, t: f64) -> Result<usize, SchemeError> {
        let n = self.grid.n_interior();
        if u.grid() != &self.grid {
            return Err(GridError::Mismatch {
                left: self.grid.n_interior(),
                right: u.grid().n_interior(),
            }
            .into());
        }
        let h = self.grid.step();
        let a = dt / (2.0 * h * h);
        let lambda_dt = self.regime.lambda() * dt;
        let uv = u.values();
        let scale = uv.iter().map(|z| z.norm()).fold(1.0, f64::max);

        self.guess.copy_from_slice(uv);
        for l in 0..n + 2 {
            self.potential[l] = lambda_dt * uv[l].norm_sqr() - dw[l];
        }

        let mut residual = f64::INFINITY;
        for iteration in 1..=self.fp_max_iter {
            self.cayley_solve(uv, a, t)?;
            residual = 0.0;
            for l in 1..=n {
                residual = f64::max(residual, (self.rhs[l] - self.guess[l]).norm());
            }
            // `rhs` now holds the new iterate.
            std::mem::swap(&mut self.rhs, &mut self.guess);
            if !residual.is_finite() {
                break;
            }
            if residual <= self.fp_tol * scale {
                let linf = self.guess.iter().map(|z| z.norm()).fold(0.0, f64::max);
                if !(linf <= self.blowup_threshold) {
                    return Err(SchemeError::BlowUp { t: t + dt, linf });
                }
                let out = u.values_mut();
                out.copy_from_slice(&self.guess);
                out[0] = Complex64::new(0.0, 0.0);
                out[n + 1] = Complex64::new(0.0, 0.0);
                return Ok(iteration);
            }
            let theta = self.fp_damping;
            for l in 1..=n {
                let mid = 0.5 * (uv[l] + self.guess[l]);
                let fresh = lambda_dt * mid.norm_sqr() - dw[l];
                self.potential[l] = (1.0 - theta) * self.potential[l] + theta * fresh;
            }
        }
        let linf = self.guess.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !linf.is_finite() || linf > self.blowup_threshold {
            return Err(SchemeError::BlowUp { t: t + dt, linf });
        }
        Err(SchemeError::FixedPointDiverged {
            t: t + dt,
            iterations: self.fp_max_iter,
            residual,
        })
    }

    /// Solves `(I − iA) x = (I + iA) u` for the current potential; the
    /// solution lands in `self.rhs`.
    fn cayley_solve(&mut self, u: &[Complex64], a: f64, t: f64) -> Result<(), SchemeError> {
        let n = self.grid.n_interior();
        let i = Complex64::i();
        let off = Complex64::new(0.0, -a);
        for l in 1..=n {
            let lap = u[l + 1] - u[l] * 2.0 + u[l - 1];
            self.rhs[l] = u[l] + i * (lap * a + u[l] * (0.5 * self.potential[l]));
        }
        // Thomas sweep on interior nodes 1..=N with constant off-diagonals.
        let mut prev_c = Complex64::new(0.0, 0.0);
        let mut prev_d = Complex64::new(0.0, 0.0);
        for l in 1..=n {
            let diag = Complex64::new(1.0, 2.0 * a - 0.5 * self.potential[l]);
            let pivot = diag - off * prev_c;
            if !(pivot.norm() > 1e-300) {
                return Err(SchemeError::FixedPointDiverged {
                    t,
                    iterations: 0,
                    residual: f64::INFINITY,
                });
            }
            let inv = pivot.inv();
            prev_c = off * inv;
            prev_d = (self.rhs[l] - off * prev_d) * inv;
            self.sweep[l] = prev_c;
            self.rhs[l] = prev_d;
        }
        for l in (1..n).rev() {
            let next = self.rhs[l + 1];
            self.rhs[l] -= self.sweep[l] * next;
        }
        self.rhs[0] = Complex64::new(0.0, 0.0);
        self.rhs[n + 1] = Complex64::new(0.0, 0.0);
        Ok(())
    }

    /// Advances `state` by one step with `increment`. On error the state is unchanged.
    pub fn step(&mut self, state: &mut TrajectoryState, increment: &NoiseIncrement) -> Result<(), SchemeError> {
        if !(increment.dt.is_finite() && increment.dt > 0.0) {
            return Err(NoiseError::BadStep(increment.dt).into());
        }
        let dw = increment.real_values();
        let mut next = state.u.clone();
        self.advance(&mut next, &dw, increment.dt, state.t)?;
        state.u = next;
        state.t += increment.dt;
        state.step_index += 1;
        Ok(())
    }
}

/// Failure during [`evolve`], with the trajectory up to the last good state.
#[derive(Debug, Clone, Error)]
#[error("{error}")]
pub struct EvolveFailure {
    pub error: SchemeError,
    pub partial: Box<TrajectoryState>,
}

/// What an observer sees after the initial state and after every step.
#[derive(Debug, Clone, Copy)]
pub struct StepEvent<'a> {
    pub state: &'a TrajectoryState,
    /// Draws `ξ_1..ξ_K` consumed by the step just taken; empty for the initial state.
    pub draws: &'a [f64],
}

/// Integrates `initial` to `cfg.t_final`, drawing noise from `noise`.
pub fn evolve(
    cfg: &SchemeConfig,
    initial: GridFunction,
    noise: &mut impl NoiseSource,
) -> Result<TrajectoryState, EvolveFailure> {
    evolve_with(cfg, initial, noise, |_| {})
}

/// [`evolve`] with a callback invoked on the initial state and after each step.
pub fn evolve_with(
    cfg: &SchemeConfig,
    initial: GridFunction,
    noise: &mut impl NoiseSource,
    mut observer: impl FnMut(StepEvent<'_>),
) -> Result<TrajectoryState, EvolveFailure> {
    let mut state = TrajectoryState::initial(initial);
    let fail = |error: SchemeError, state: TrajectoryState| EvolveFailure {
        error,
        partial: Box::new(state),
    };
    let mut scheme = match Scheme::new(cfg) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, state)),
    };
    if state.u.grid() != scheme.grid() {
        let e = GridError::Mismatch {
            left: cfg.n_interior,
            right: state.u.grid().n_interior(),
        };
        return Err(fail(e.into(), state));
    }
    state.reports.push(FunctionalReport::evaluate(0.0, &state.u, cfg.regime));
    observer(StepEvent {
        state: &state,
        draws: &[],
    });

    let steps = cfg.step_sizes();
    let last = steps.len();
    let modes = cfg.covariance.truncation();
    for (k, &dt) in steps.iter().enumerate() {
        let draws = noise.draws(k as u64, modes);
        scheme.load_increment(&draws, dt, 1.0);
        let mut u = state.u.clone();
        if let Err(e) = scheme.advance_loaded(&mut u, dt, state.t) {
            return Err(fail(e, state));
        }
        state.u = u;
        state.step_index = k as u64 + 1;
        state.t = if state.step_index as usize == last {
            cfg.t_final
        } else {
            state.step_index as f64 * cfg.dt
        };
        let due = cfg.report_every > 0 && state.step_index.is_multiple_of(cfg.report_every as u64);
        if due || state.step_index as usize == last {
            state.reports.push(FunctionalReport::evaluate(state.t, &state.u, cfg.regime));
        }
        observer(StepEvent {
            state: &state,
            draws: &draws,
        });
    }
    Ok(state)
}
