//! Continuous dependence on initial data and on the noise amplitude, and
//! exponential-moment probes of the discrete gradient.

use serde::{Deserialize, Serialize};

use super::coupled::{collect_sups, run_ensemble, CoupledSpec, EnsembleSummary, MemberSpec, SampleOutcome};
use super::fit::{bootstrap_rate, fit_log_log, moment_estimates, LogLogFit, RateFit};
use super::ExperimentError;
use crate::grid::GridFunction;
use crate::scheme::SchemeConfig;

/// Distance between two coupled trajectories started from different data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencePoint {
    /// `‖u₀ − v₀‖_h`
    pub input_distance: f64,
    /// `(E[sup_t ‖u(t) − v(t)‖²_h])^{1/2}`
    pub output_error: f64,
    pub std_error: f64,
    pub summary: EnsembleSummary,
}

/// Runs `u₀` and `v₀` on the same grid and noise for `samples` paths.
pub fn initial_dependence(
    u0: &GridFunction,
    v0: &GridFunction,
    base: &SchemeConfig,
    samples: usize,
    workers: usize,
) -> Result<DependencePoint, ExperimentError> {
    if u0.grid() != v0.grid() {
        return Err(ExperimentError::Incompatible("initial data live on different grids".into()));
    }
    let spec = CoupledSpec {
        base: base.clone(),
        members: vec![MemberSpec::new(u0.clone()), MemberSpec::new(v0.clone())],
        pairs: vec![(0, 1)],
    };
    let (sups, summary) = collect_sups(&run_ensemble(&spec, samples, workers)?);
    let est = moment_estimates(&sups, 2.0)
        .first()
        .copied()
        .ok_or_else(|| ExperimentError::Degenerate("every sample was excluded".into()))?;
    Ok(DependencePoint {
        input_distance: u0.sub(v0)?.norm_h(),
        output_error: est.value,
        std_error: est.std_error,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDependenceStudy {
    pub deltas: Vec<f64>,
    pub points: Vec<DependencePoint>,
    /// Slope of `ln(output error)` against `ln δ`.
    pub fit: Option<LogLogFit>,
}

/// Perturbs `u0` by `δ · direction` for each `δ` and measures the output error.
pub fn initial_dependence_study(
    u0: &GridFunction,
    direction: &GridFunction,
    deltas: &[f64],
    base: &SchemeConfig,
    samples: usize,
    workers: usize,
) -> Result<InitialDependenceStudy, ExperimentError> {
    let points = deltas
        .iter()
        .map(|&d| {
            let v0 = u0.add(&direction.scale(num_complex::Complex64::new(d, 0.0)))?;
            initial_dependence(u0, &v0, base, samples, workers)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fit = if points.len() >= 2 && points.iter().all(|p| p.output_error > 0.0) {
        let y: Vec<f64> = points.iter().map(|p| p.output_error).collect();
        Some(fit_log_log(deltas, &y)?)
    } else {
        None
    };
    Ok(InitialDependenceStudy {
        deltas: deltas.to_vec(),
        points,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub epsilon: f64,
    /// `(E[sup_t ‖u^ε(t) − u⁰(t)‖²_h])^{1/2}`
    pub error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseScalingRecord {
    pub levels: Vec<NoiseLevel>,
    /// Slope of `ln error` against `ln |ε|` over the nonzero `ε`.
    pub fit: Option<RateFit>,
    pub summary: EnsembleSummary,
}

impl NoiseScalingRecord {
    pub const CSV_HEADER: [&'static str; 3] = ["epsilon", "error", "stderr"];
}

/// Compares runs with noise `ε·W` against the noise-free run from the same
/// datum. All `ε` share each sample path.
pub fn noise_scaling(
    epsilons: &[f64],
    u0: &GridFunction,
    base: &SchemeConfig,
    samples: usize,
    workers: usize,
    bootstrap_resamples: usize,
) -> Result<NoiseScalingRecord, ExperimentError> {
    let mut members = vec![MemberSpec {
        initial: u0.clone(),
        noise_scale: 0.0,
    }];
    members.extend(epsilons.iter().map(|&e| MemberSpec {
        initial: u0.clone(),
        noise_scale: e,
    }));
    let spec = CoupledSpec {
        base: base.clone(),
        members,
        pairs: (1..=epsilons.len()).map(|j| (j, 0)).collect(),
    };
    let (sups, summary) = collect_sups(&run_ensemble(&spec, samples, workers)?);
    let est = moment_estimates(&sups, 2.0);
    let levels: Vec<NoiseLevel> = epsilons
        .iter()
        .enumerate()
        .map(|(j, &epsilon)| NoiseLevel {
            epsilon,
            error: est.get(j).map_or(f64::NAN, |e| e.value),
            std_error: est.get(j).map_or(f64::NAN, |e| e.std_error),
        })
        .collect();

    let keep: Vec<usize> = (0..epsilons.len()).filter(|&j| epsilons[j] != 0.0).collect();
    let fit = if keep.len() >= 2 && keep.iter().all(|&j| levels[j].error > 0.0) {
        let x: Vec<f64> = keep.iter().map(|&j| epsilons[j].abs()).collect();
        let y: Vec<Vec<f64>> = sups.iter().map(|row| keep.iter().map(|&j| row[j]).collect()).collect();
        Some(bootstrap_rate(&x, &y, 2.0, bootstrap_resamples, base.seed)?)
    } else {
        None
    };
    Ok(NoiseScalingRecord { levels, fit, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentEstimate {
    pub samples_used: usize,
    /// `E[exp(∫₀^T ‖u₀‖_h ‖δ₊u(r)‖_h dr)]`
    pub q1: f64,
    /// `E[exp(2∫₀^T ‖u₀‖_h ‖δ₊u(r)‖_h dr)]^{1/2}`
    pub q2: f64,
    pub summary: EnsembleSummary,
}

/// `(mean_m exp(q·I_m))^{1/q}` evaluated in log space.
fn lq_exp_mean(integrals: &[f64], q: f64) -> f64 {
    let max = integrals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(q * b));
    let sum: f64 = integrals.iter().map(|&i| (q * i - max).exp()).sum();
    let log_mean = max + sum.ln() - (integrals.len() as f64).ln();
    (log_mean / q).exp()
}

/// Monte Carlo estimate of the exponential moments of the gradient integral.
pub fn exp_moment_probe(
    u0: &GridFunction,
    base: &SchemeConfig,
    samples: usize,
    workers: usize,
) -> Result<ExpMomentEstimate, ExperimentError> {
    let spec = CoupledSpec {
        base: base.clone(),
        members: vec![MemberSpec::new(u0.clone())],
        pairs: Vec::new(),
    };
    let outcomes = run_ensemble(&spec, samples, workers)?;
    let integrals: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o {
            SampleOutcome::Completed { members, .. } => Some(members[0].exp_integral),
            SampleOutcome::Failed { .. } => None,
        })
        .collect();
    let (_, summary) = collect_sups(&outcomes);
    if integrals.is_empty() {
        return Err(ExperimentError::Degenerate("every sample was excluded".into()));
    }
    Ok(ExpMomentEstimate {
        samples_used: integrals.len(),
        q1: lq_exp_mean(&integrals, 1.0),
        q2: lq_exp_mean(&integrals, 2.0),
        summary,
    })
}
