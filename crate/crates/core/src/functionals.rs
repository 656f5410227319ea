//! Scalar diagnostics evaluated along trajectories.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::{GridError, GridFunction};
use crate::scheme::Regime;

/// Highest difference order accepted by [`sobolev_seminorm_h`].
pub const MAX_SEMINORM_ORDER: usize = 5;

/// Absolute slack allowed when checking the energy sandwich.
pub const ENERGY_BOUND_SLACK: f64 = 1e-10;

/// `‖u‖²_h`.
pub fn charge(u: &GridFunction) -> f64 {
    u.norm_h_sqr()
}

/// `U^h(u) = ½‖δ₊u‖²_h − (λ/4)‖u‖⁴_{l⁴_h}`.
pub fn energy_h(u: &GridFunction, regime: Regime) -> f64 {
    0.5 * u.forward_diff().norm_h_sqr() - 0.25 * regime.lambda() * u.norm_l4h().powi(4)
}

/// Lower bound, energy and upper bound of the sandwich
/// `¼‖δ₊u‖² − ¼‖u‖⁶ ≤ U^h(u) ≤ ¾‖δ₊u‖² + ¼‖u‖⁶`.
pub fn energy_bounds(u: &GridFunction, regime: Regime) -> (f64, f64, f64) {
    let grad = u.forward_diff().norm_h_sqr();
    let sextic = u.norm_h_sqr().powi(3);
    (
        0.25 * grad - 0.25 * sextic,
        energy_h(u, regime),
        0.75 * grad + 0.25 * sextic,
    )
}

/// Whether the energy sandwich holds for both signs of `λ`.
pub fn energy_bounds_check(u: &GridFunction) -> bool {
    [Regime::Focusing, Regime::Defocusing].into_iter().all(|r| {
        let (lo, e, hi) = energy_bounds(u, r);
        lo <= e + ENERGY_BOUND_SLACK && e <= hi + ENERGY_BOUND_SLACK
    })
}

/// `2‖u‖_h‖δ₊u‖_h − ‖u‖²_{l∞}`, nonnegative for Dirichlet `u`.
pub fn gn_slack(u: &GridFunction) -> f64 {
    2.0 * u.norm_h() * u.forward_diff().norm_h() - u.norm_linf().powi(2)
}

/// Centered difference of order `m`: `L^{m/2}u` for even `m`, `δ₊L^{(m−1)/2}u`
/// for odd `m`, with `L = δ₊δ₋`.
pub fn centered_difference(u: &GridFunction, m: usize) -> Result<GridFunction, GridError> {
    let n = u.grid().n_interior();
    if m > n {
        return Err(GridError::TooSmall { n, order: m });
    }
    let mut d = u.clone();
    for _ in 0..m / 2 {
        d = d.laplacian();
    }
    if m % 2 == 1 {
        d = d.forward_diff();
    }
    Ok(d)
}

/// `‖D^m u‖_h` for `m ≤ 5`, see [`centered_difference`].
pub fn sobolev_seminorm_h(u: &GridFunction, m: usize) -> Result<f64, GridError> {
    if m > MAX_SEMINORM_ORDER {
        return Err(GridError::TooSmall {
            n: u.grid().n_interior(),
            order: m,
        });
    }
    Ok(centered_difference(u, m)?.norm_h())
}

/// Grid proxy of the Lyapunov functional
/// `f(u) = ‖D^s u‖²_h − λ⟨(−L)^{s−1}u, |u|²u⟩_h`.
pub fn lyapunov_f(u: &GridFunction, regime: Regime, s: usize) -> Result<f64, GridError> {
    let n = u.grid().n_interior();
    if s < 2 || s > n {
        return Err(GridError::TooSmall { n, order: s });
    }
    let leading = centered_difference(u, s)?.norm_h_sqr();
    let mut power = u.clone();
    for _ in 0..s - 1 {
        power = power.laplacian().scale(Complex64::new(-1.0, 0.0));
    }
    let cubic = u.map(|z| z * z.norm_sqr());
    Ok(leading - regime.lambda() * power.inner_h(&cubic)?)
}

/// One row of monitored quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub time: f64,
    pub charge: f64,
    pub energy_h: f64,
    /// `None` when the grid has fewer than two interior nodes.
    pub lyapunov_2: Option<f64>,
    pub h1_seminorm: f64,
    pub linf: f64,
    pub gn_slack: f64,
}

impl FunctionalReport {
    pub const CSV_HEADER: [&'static str; 7] =
        ["t", "charge", "energy_h", "lyapunov_2", "h1_seminorm", "linf", "gn_slack"];

    pub fn evaluate(time: f64, u: &GridFunction, regime: Regime) -> Self {
        let grad = u.forward_diff();
        let h1 = grad.norm_h();
        let linf = u.norm_linf();
        Self {
            time,
            charge: charge(u),
            energy_h: 0.5 * h1 * h1 - 0.25 * regime.lambda() * u.norm_l4h().powi(4),
            lyapunov_2: lyapunov_f(u, regime, 2).ok(),
            h1_seminorm: h1,
            linf,
            gn_slack: 2.0 * u.norm_h() * h1 - linf * linf,
        }
    }
}
