//! Moment estimates over Monte Carlo samples and log-log rate fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares on `(ln x_i, ln y_i)`. Needs at least two points,
/// all strictly positive.
pub fn fit_log_log(x: &[f64], y: &[f64]) -> Result<LogLogFit, ExperimentError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(ExperimentError::InsufficientGrids { need: 2, got: x.len().min(y.len()) });
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(ExperimentError::Degenerate("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ExperimentError::Degenerate("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

/// `(E[S^p])^{1/p}` with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Estimates `(E[S^p])^{1/p}` for each column of the sample-major matrix `sups`.
pub fn moment_estimates(sups: &[Vec<f64>], p: f64) -> Vec<MomentEstimate> {
    let cols = sups.first().map_or(0, Vec::len);
    let m = sups.len() as f64;
    (0..cols)
        .map(|j| {
            if sups.is_empty() {
                return MomentEstimate {
                    value: f64::NAN,
                    std_error: f64::NAN,
                };
            }
            let powered: Vec<f64> = sups.iter().map(|row| row[j].powf(p)).collect();
            let mean = powered.iter().sum::<f64>() / m;
            let var = if sups.len() > 1 {
                powered.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            let value = mean.powf(1.0 / p);
            let se_mean = (var / m).sqrt();
            let std_error = if mean > 0.0 {
                se_mean * value / (p * mean)
            } else {
                0.0
            };
            MomentEstimate { value, std_error }
        })
        .collect()
}

/// A fitted rate with a percentile bootstrap interval over Monte Carlo samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub resamples: usize,
}

/// Fits `ln(E[S_j^p])^{1/p}` against `ln x_j` and bootstraps the slope by
/// resampling rows of `sups` with replacement. Deterministic in `seed`.
pub fn bootstrap_rate(
    x: &[f64],
    sups: &[Vec<f64>],
    p: f64,
    resamples: usize,
    seed: u64,
) -> Result<RateFit, ExperimentError> {
    let point: Vec<f64> = moment_estimates(sups, p).iter().map(|e| e.value).collect();
    let fit = fit_log_log(x, &point)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb007_57a9_0000_0001);
    let m = sups.len();
    let mut slopes = Vec::with_capacity(resamples);
    let mut resampled = vec![Vec::new(); m];
    for _ in 0..resamples {
        for row in resampled.iter_mut() {
            *row = sups[rng.random_range(0..m)].clone();
        }
        let y: Vec<f64> = moment_estimates(&resampled, p).iter().map(|e| e.value).collect();
        if let Ok(f) = fit_log_log(x, &y) {
            slopes.push(f.slope);
        }
    }
    let confidence = 0.95;
    let (ci_low, ci_high) = if slopes.is_empty() {
        (fit.slope, fit.slope)
    } else {
        slopes.sort_by(|a, b| a.total_cmp(b));
        (percentile(&slopes, 0.025), percentile(&slopes, 0.975))
    };
    Ok(RateFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        ci_low,
        ci_high,
        confidence,
        resamples: slopes.len(),
    })
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_power_law_is_recovered() {
        let x = [0.5, 0.25, 0.125, 0.0625];
        let y: Vec<f64> = x.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        let f = fit_log_log(&x, &y).unwrap();
        assert_relative_eq!(f.slope, 2.0, max_relative = 1e-12);
        assert_relative_eq!(f.intercept, 3f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_log_log(&[1.0], &[1.0]).is_err());
        assert!(fit_log_log(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(fit_log_log(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn moments_by_hand() {
        let sups = vec![vec![1.0, 0.0], vec![3.0, 0.0]];
        let e = moment_estimates(&sups, 2.0);
        assert_relative_eq!(e[0].value, 5f64.sqrt());
        // var of {1, 9} is 32, se of mean is 4, delta method divides by 2√5.
        assert_relative_eq!(e[0].std_error, 4.0 / (2.0 * 5f64.sqrt()), max_relative = 1e-14);
        assert_eq!(e[1].value, 0.0);
        assert_eq!(e[1].std_error, 0.0);
    }

    #[test]
    fn bootstrap_interval_brackets_slope_and_is_deterministic() {
        let x = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sups: Vec<Vec<f64>> = (0..64)
            .map(|_| {
                let c: f64 = 1.0 + 0.3 * rng.random::<f64>();
                x.iter().map(|h| c * h * h * (1.0 + 0.05 * rng.random::<f64>())).collect()
            })
            .collect();
        let a = bootstrap_rate(&x, &sups, 2.0, 500, 7).unwrap();
        let b = bootstrap_rate(&x, &sups, 2.0, 500, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.ci_low <= a.slope && a.slope <= a.ci_high);
        assert!((a.slope - 2.0).abs() < 0.05);
    }
}
