//! Consistency defect `R^h = Δu − δ₊δ₋u` of the difference stencil on
//! closed-form functions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fit::{fit_log_log, LogLogFit};
use super::ExperimentError;
use crate::grid::{GridFunction, UniformGrid};

/// Smooth functions with known second derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnalyticProfile {
    /// `a · sin(kπx)`
    Sine { mode: u32, amplitude: f64 },
    /// `slope · x + offset`
    Affine { slope: f64, offset: f64 },
}

impl AnalyticProfile {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            AnalyticProfile::Sine { mode, amplitude } => amplitude * (mode as f64 * PI * x).sin(),
            AnalyticProfile::Affine { slope, offset } => slope * x + offset,
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            AnalyticProfile::Sine { mode, amplitude } => {
                let w = mode as f64 * PI;
                -w * w * amplitude * (w * x).sin()
            }
            AnalyticProfile::Affine { .. } => 0.0,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            AnalyticProfile::Sine { mode, amplitude } => format!("sine:{mode}:{amplitude}"),
            AnalyticProfile::Affine { slope, offset } => format!("affine:{slope}:{offset}"),
        }
    }
}

/// `R^h(l) = u''(x_l) − δ₊δ₋u(l)` at interior nodes, zero on the boundary.
/// The stencil uses the true boundary values of `u`.
pub fn truncation_residual(profile: &AnalyticProfile, grid: &UniformGrid) -> GridFunction {
    let sampled = GridFunction::from_fn(*grid, |x| Complex64::new(profile.value(x), 0.0));
    let lap = sampled.laplacian();
    let n = grid.n_interior();
    let mut values = lap.into_values();
    for (l, v) in values.iter_mut().enumerate() {
        *v = if l == 0 || l == n + 1 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(profile.second_derivative(grid.node(l)), 0.0) - *v
        };
    }
    GridFunction::new(*grid, values).expect("finite residual")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualLevel {
    pub n_interior: usize,
    pub h: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub profile: AnalyticProfile,
    pub levels: Vec<ResidualLevel>,
    /// Slope of `ln ‖R^h‖_∞` against `ln h`; absent when some residual is
    /// exactly zero.
    pub fit: Option<LogLogFit>,
}

impl ResidualReport {
    pub const CSV_HEADER: [&'static str; 3] = ["N", "h", "residual_linf"];
}

/// Residual sup norms over a ladder of at least three grids, and their rate.
pub fn residual_study(profile: &AnalyticProfile, ladder: &[usize]) -> Result<ResidualReport, ExperimentError> {
    if ladder.len() < 3 {
        return Err(ExperimentError::InsufficientGrids {
            need: 3,
            got: ladder.len(),
        });
    }
    let levels = ladder
        .iter()
        .map(|&n| {
            let grid = UniformGrid::new(n)?;
            Ok(ResidualLevel {
                n_interior: n,
                h: grid.step(),
                linf: truncation_residual(profile, &grid).norm_linf(),
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let fit = if levels.iter().all(|l| l.linf > 0.0) {
        let h: Vec<f64> = levels.iter().map(|l| l.h).collect();
        let r: Vec<f64> = levels.iter().map(|l| l.linf).collect();
        Some(fit_log_log(&h, &r)?)
    } else {
        None
    };
    Ok(ResidualReport {
        profile: *profile,
        levels,
        fit,
    })
}
