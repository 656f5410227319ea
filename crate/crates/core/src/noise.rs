//! Q-Wiener increments in a truncated sine eigenbasis.
//!
//! `Q^{1/2}` acts diagonally: `Q^{1/2} e_k = √q_k e_k` with
//! `e_k(x) = √2 sin(kπx)`. An increment over `dt` evaluated at node `x_l` is
//! `ΔW(l) = Σ_k √q_k √dt ξ_k e_k(x_l)` for i.i.d. standard normal `ξ_k`.
//!
//! Draws come from counter-keyed streams: the `ξ_k` for step `n` of Monte
//! Carlo sample `m` depend only on `(seed, m, n)`, and mode `k` is the `k`-th
//! draw of that stream. Two grids fed the same draws agree bit-for-bit on the
//! nodes they share, which is what couples coarse and fine trajectories.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridFunction, UniformGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("eigenvalue q_{k} = {value} must be finite and nonnegative")]
    BadEigenvalue { k: usize, value: f64 },
    #[error("decay exponent must be finite and positive, got {0}")]
    BadDecay(f64),
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// `e_k(x) = √2 sin(kπx)`, orthonormal in `L²(0,1)` and zero at both ends.
    Sine,
}

/// The covariance operator `Q`, given by its eigenvalues on the sine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCovariance {
    basis: BasisKind,
    eigenvalues: Vec<f64>,
    decay_exponent: Option<f64>,
}

impl SpectralCovariance {
    /// No noise (`K = 0`).
    pub fn none() -> Self {
        Self {
            basis: BasisKind::Sine,
            eigenvalues: Vec::new(),
            decay_exponent: None,
        }
    }

    /// `q_k = k^{-r}` for `k = 1..=modes`.
    pub fn power_law(modes: usize, decay_exponent: f64) -> Result<Self, NoiseError> {
        if !(decay_exponent.is_finite() && decay_exponent > 0.0) {
            return Err(NoiseError::BadDecay(decay_exponent));
        }
        Ok(Self {
            basis: BasisKind::Sine,
            eigenvalues: (1..=modes).map(|k| (k as f64).powf(-decay_exponent)).collect(),
            decay_exponent: Some(decay_exponent),
        })
    }

    pub fn from_eigenvalues(eigenvalues: Vec<f64>) -> Result<Self, NoiseError> {
        if let Some((i, &value)) = eigenvalues
            .iter()
            .enumerate()
            .find(|(_, q)| !(q.is_finite() && **q >= 0.0))
        {
            return Err(NoiseError::BadEigenvalue { k: i + 1, value });
        }
        Ok(Self {
            basis: BasisKind::Sine,
            eigenvalues,
            decay_exponent: None,
        })
    }

    /// Covariance of `ε W`: every eigenvalue multiplied by `ε²`.
    pub fn scaled(&self, epsilon: f64) -> Self {
        Self {
            basis: self.basis,
            eigenvalues: self.eigenvalues.iter().map(|q| q * epsilon * epsilon).collect(),
            decay_exponent: self.decay_exponent,
        }
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    /// Truncation level `K`.
    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn decay_exponent(&self) -> Option<f64> {
        self.decay_exponent
    }

    /// Whether the generated decay `q_k = k^{-r}` keeps `Q^{1/2}` Hilbert–Schmidt
    /// into `H^s` without truncation, i.e. `r > 2s + 1`. Explicit spectra are
    /// finite and always admissible.
    pub fn admits_sobolev(&self, s: u32) -> bool {
        match self.decay_exponent {
            Some(r) => r > 2.0 * s as f64 + 1.0,
            None => true,
        }
    }

    /// `‖Q^{1/2}‖_{L₂(L², H^s)} = (Σ_k q_k ‖e_k‖²_{H^s})^{1/2}` with
    /// `‖e_k‖²_{H^s} = Σ_{j=0}^{s} (kπ)^{2j}`.
    pub fn hs_norm(&self, s: u32) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &q)| {
                let w = ((i + 1) as f64 * PI).powi(2);
                let sobolev: f64 = (0..=s).map(|j| w.powi(j as i32)).sum();
                q * sobolev
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `F_Q(x_l) = Σ_k q_k e_k(x_l)²`, the Itô correction density.
    pub fn evaluate_fq(&self, grid: &UniformGrid) -> GridFunction {
        let table = self.mode_table(grid);
        let mut fq = vec![0.0; grid.len()];
        for (q, row) in self.eigenvalues.iter().zip(table.rows()) {
            for (f, e) in fq.iter_mut().zip(row) {
                *f += q * e * e;
            }
        }
        GridFunction::from_real(*grid, &fq).expect("finite eigenvalues give a finite F_Q")
    }

    /// Basis values `e_k(x_l)` tabulated on `grid`.
    pub fn mode_table(&self, grid: &UniformGrid) -> ModeTable {
        ModeTable::new(grid, self.truncation())
    }

    /// Mode amplitudes `√q_k √dt ξ_k`.
    pub fn coefficients(&self, dt: f64, draws: &[f64]) -> Vec<f64> {
        let sdt = dt.sqrt();
        self.eigenvalues
            .iter()
            .zip(draws)
            .map(|(q, xi)| q.sqrt() * sdt * xi)
            .collect()
    }

    /// Draws `K` standard normals from `rng` and evaluates the increment on `grid`.
    pub fn sample_increment<R: Rng + ?Sized>(
        &self,
        grid: &UniformGrid,
        dt: f64,
        rng: &mut R,
    ) -> Result<NoiseIncrement, NoiseError> {
        let draws: Vec<f64> = (0..self.truncation()).map(|_| rng.sample(StandardNormal)).collect();
        self.increment_from_draws(&self.mode_table(grid), dt, draws)
    }

    pub fn increment_from_draws(
        &self,
        table: &ModeTable,
        dt: f64,
        draws: Vec<f64>,
    ) -> Result<NoiseIncrement, NoiseError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(NoiseError::BadStep(dt));
        }
        let mut values = vec![0.0; table.grid.len()];
        table.accumulate(&self.coefficients(dt, &draws), &mut values);
        Ok(NoiseIncrement {
            values: GridFunction::from_real(table.grid, &values).expect("finite increment"),
            dt,
            draws,
        })
    }
}

/// `e_k(x_l)` for `k = 1..=K` on one grid, stored row-major by mode.
#[derive(Debug, Clone)]
pub struct ModeTable {
    grid: UniformGrid,
    modes: usize,
    values: Vec<f64>,
}

impl ModeTable {
    pub fn new(grid: &UniformGrid, modes: usize) -> Self {
        let n = grid.len();
        let mut values = Vec::with_capacity(modes * n);
        for k in 1..=modes {
            for l in 0..n {
                values.push(sine_mode(k, grid.node(l)));
            }
        }
        // sin(kπ) is not exactly zero in floating point; pin the boundary.
        for row in values.chunks_mut(n) {
            row[0] = 0.0;
            row[n - 1] = 0.0;
        }
        Self {
            grid: *grid,
            modes,
            values,
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.grid.len().max(1))
    }

    /// Overwrites `out` with `Σ_k coeffs[k] e_k(x_l)`, summing modes in order.
    pub fn accumulate(&self, coeffs: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (c, row) in coeffs.iter().zip(self.rows()) {
            for (o, e) in out.iter_mut().zip(row) {
                *o += c * e;
            }
        }
    }
}

fn sine_mode(k: usize, x: f64) -> f64 {
    SQRT_2 * (k as f64 * PI * x).sin()
}

/// One Wiener increment evaluated at the grid nodes, with the draws behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub values: GridFunction,
    pub dt: f64,
    pub draws: Vec<f64>,
}

impl NoiseIncrement {
    /// Real parts of the nodal values.
    pub fn real_values(&self) -> Vec<f64> {
        self.values.values().iter().map(|z| z.re).collect()
    }
}

/// Deterministic Gaussian stream keyed by `(seed, sample, step)`.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha12Rng,
}

const STREAM_DOMAIN: u64 = 0x5eed_5c4e_d1ff_0001;

/// Opens the stream for one time step of one Monte Carlo sample.
///
/// The triple is embedded verbatim into the 256-bit ChaCha key, so distinct
/// triples never share a key.
pub fn fork_stream(seed: u64, sample: u64, step: u64) -> NoiseStream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&sample.to_le_bytes());
    key[16..24].copy_from_slice(&step.to_le_bytes());
    key[24..].copy_from_slice(&STREAM_DOMAIN.to_le_bytes());
    NoiseStream {
        rng: ChaCha12Rng::from_seed(key),
    }
}

impl NoiseStream {
    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn gaussians(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.gaussian()).collect()
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }
}

/// Supplier of the per-step Gaussian draws `ξ_1..ξ_K`.
pub trait NoiseSource {
    fn draws(&mut self, step_index: u64, modes: usize) -> Vec<f64>;
}

/// Draws for a single Monte Carlo sample from [`fork_stream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamNoise {
    pub seed: u64,
    pub sample: u64,
}

impl NoiseSource for StreamNoise {
    fn draws(&mut self, step_index: u64, modes: usize) -> Vec<f64> {
        fork_stream(self.seed, self.sample, step_index).gaussians(modes)
    }
}

/// Replays a fixed list of per-step draws.
#[derive(Debug, Clone, Default)]
pub struct RecordedNoise {
    pub steps: Vec<Vec<f64>>,
}

impl NoiseSource for RecordedNoise {
    fn draws(&mut self, step_index: u64, modes: usize) -> Vec<f64> {
        let mut d = self.steps.get(step_index as usize).cloned().unwrap_or_default();
        d.resize(modes, 0.0);
        d
    }
}

/// Outcome of comparing empirical and closed-form increment covariances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub samples: usize,
    pub dt: f64,
    pub pairs: Vec<CovariancePair>,
    pub tolerance_sigmas: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariancePair {
    pub l: usize,
    pub m: usize,
    pub expected: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub z_score: f64,
}

/// Empirical `E[ΔW(x_l) ΔW(x_m)]` over `samples` independent increments
/// against `dt Σ_k q_k e_k(x_l) e_k(x_m)`, at the given node pairs.
///
/// Increment `i` draws from `fork_stream(seed, i, 0)`.
pub fn covariance_check(
    cov: &SpectralCovariance,
    grid: &UniformGrid,
    dt: f64,
    samples: usize,
    pairs: &[(usize, usize)],
    tolerance_sigmas: f64,
    seed: u64,
) -> Result<CovarianceCheck, NoiseError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(NoiseError::BadStep(dt));
    }
    let table = cov.mode_table(grid);
    let n = grid.len();
    let mut sum = vec![0.0; pairs.len()];
    let mut sum_sq = vec![0.0; pairs.len()];
    let mut values = vec![0.0; n];
    for i in 0..samples {
        let draws = fork_stream(seed, i as u64, 0).gaussians(cov.truncation());
        table.accumulate(&cov.coefficients(dt, &draws), &mut values);
        for (j, &(l, m)) in pairs.iter().enumerate() {
            let p = values[l] * values[m];
            sum[j] += p;
            sum_sq[j] += p * p;
        }
    }
    let rows: Vec<&[f64]> = table.rows().collect();
    let count = samples as f64;
    let mut out = Vec::with_capacity(pairs.len());
    let mut passed = true;
    for (j, &(l, m)) in pairs.iter().enumerate() {
        let expected = dt
            * cov
                .eigenvalues()
                .iter()
                .zip(&rows)
                .map(|(q, e)| q * e[l] * e[m])
                .sum::<f64>();
        let mean = sum[j] / count;
        let var = (sum_sq[j] / count - mean * mean).max(0.0) * count / (count - 1.0).max(1.0);
        let std_error = (var / count).sqrt();
        let diff = mean - expected;
        let z_score = if std_error > 0.0 {
            diff / std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        passed &= z_score.abs() <= tolerance_sigmas;
        out.push(CovariancePair {
            l,
            m,
            expected,
            empirical: mean,
            std_error,
            z_score,
        });
    }
    Ok(CovarianceCheck {
        samples,
        dt,
        pairs: out,
        tolerance_sigmas,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> UniformGrid {
        UniformGrid::new(n).unwrap()
    }

    #[test]
    fn no_modes_no_noise() {
        let cov = SpectralCovariance::none();
        let mut s = fork_stream(1, 2, 3);
        let inc = cov.sample_increment(&grid(9), 0.01, s.rng()).unwrap();
        assert!(inc.values.values().iter().all(|z| z.re == 0.0 && z.im == 0.0));
        assert!(inc.draws.is_empty());
        assert!(cov.evaluate_fq(&grid(9)).values().iter().all(|z| z.re == 0.0));
    }

    #[test]
    fn single_mode_closed_form() {
        let cov = SpectralCovariance::from_eigenvalues(vec![1.0]).unwrap();
        let g = grid(15);
        let inc = cov.increment_from_draws(&cov.mode_table(&g), 1.0, vec![1.0]).unwrap();
        for l in 1..=15 {
            let x = g.node(l);
            assert_relative_eq!(inc.values.values()[l].re, SQRT_2 * (PI * x).sin(), max_relative = 1e-15);
            assert_eq!(inc.values.values()[l].im, 0.0);
        }
        assert_eq!(inc.values.values()[0].re, 0.0);
        assert_eq!(inc.values.values()[16].re, 0.0);
    }

    #[test]
    fn fq_examples() {
        let cov = SpectralCovariance::from_eigenvalues(vec![1.0]).unwrap();
        let g = grid(1);
        let fq = cov.evaluate_fq(&g);
        assert_relative_eq!(fq.values()[1].re, 2.0, max_relative = 1e-15);

        let cov = SpectralCovariance::power_law(8, 3.0).unwrap();
        let fq = cov.evaluate_fq(&grid(20));
        assert_eq!(fq.values()[0].re, 0.0);
        assert_eq!(fq.values()[21].re, 0.0);
        assert!(fq.values().iter().all(|z| z.re >= 0.0 && z.im == 0.0));
    }

    #[test]
    fn hs_norm_examples() {
        assert_eq!(SpectralCovariance::from_eigenvalues(vec![0.0; 4]).unwrap().hs_norm(3), 0.0);
        let one = SpectralCovariance::from_eigenvalues(vec![1.0]).unwrap();
        assert_relative_eq!(one.hs_norm(0), 1.0);
        assert_relative_eq!(one.hs_norm(1), (1.0 + PI * PI).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn sobolev_admissibility() {
        let cov = SpectralCovariance::power_law(32, 12.0).unwrap();
        assert!(cov.admits_sobolev(5));
        assert!(!SpectralCovariance::power_law(32, 11.0).unwrap().admits_sobolev(5));
        assert!(cov.hs_norm(5).is_finite());
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(matches!(
            SpectralCovariance::from_eigenvalues(vec![1.0, -0.1]),
            Err(NoiseError::BadEigenvalue { k: 2, .. })
        ));
        assert!(SpectralCovariance::power_law(4, 0.0).is_err());
        let cov = SpectralCovariance::from_eigenvalues(vec![1.0]).unwrap();
        assert!(cov.increment_from_draws(&cov.mode_table(&grid(3)), 0.0, vec![1.0]).is_err());
    }

    #[test]
    fn streams_are_deterministic() {
        let a = fork_stream(7, 3, 11).gaussians(16);
        let b = fork_stream(7, 3, 11).gaussians(16);
        assert_eq!(a, b);
        assert_ne!(a, fork_stream(7, 4, 11).gaussians(16));
        assert_ne!(a, fork_stream(7, 3, 12).gaussians(16));
        assert_ne!(a, fork_stream(8, 3, 11).gaussians(16));
    }

    #[test]
    fn distinct_samples_uncorrelated() {
        let n = 10_000;
        let a = fork_stream(42, 0, 0).gaussians(n);
        let b = fork_stream(42, 1, 0).gaussians(n);
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn disjoint_steps_uncorrelated() {
        // Per-mode correlation z-scores between steps 0 and 1 of the same sample
        // should look standard normal across seeds and modes.
        let n = 20_000;
        let modes = 4;
        let mut z = Vec::new();
        for seed in 0..6u64 {
            let mut acc = vec![0.0; modes];
            for m in 0..n as u64 {
                let a = fork_stream(seed, m, 0).gaussians(modes);
                let b = fork_stream(seed, m, 1).gaussians(modes);
                for k in 0..modes {
                    acc[k] += a[k] * b[k];
                }
            }
            z.extend(acc.iter().map(|s| s / (n as f64).sqrt()));
        }
        let mean_sq = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
        assert!(z.iter().all(|v| v.abs() < 4.0), "{z:?}");
        assert!(mean_sq < 2.0, "{mean_sq}");
    }

    #[test]
    fn variance_is_linear_in_dt() {
        let cov = SpectralCovariance::power_law(6, 4.0).unwrap();
        let g = grid(15);
        let l = 5;
        let n = 40_000;
        let table = cov.mode_table(&g);
        let dts = [1e-3, 2e-3, 4e-3];
        let fq = cov.evaluate_fq(&g).values()[l].re;
        let mut vars = Vec::new();
        for (j, &dt) in dts.iter().enumerate() {
            let mut s = 0.0;
            let mut s4 = 0.0;
            for m in 0..n as u64 {
                let w = cov
                    .increment_from_draws(&table, dt, fork_stream(9, m, j as u64).gaussians(6))
                    .unwrap()
                    .values
                    .values()[l]
                    .re;
                s += w * w;
                s4 += w.powi(4);
            }
            let mean = s / n as f64;
            let se = ((s4 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!((mean - fq * dt).abs() < 3.0 * se, "dt = {dt}");
            vars.push(mean);
        }
        let slope = ((vars[2] / vars[0]).ln()) / ((dts[2] / dts[0]).ln());
        assert!((slope - 1.0).abs() < 0.05, "slope = {slope}");
    }

    #[test]
    fn spectral_evaluation_commutes_with_restriction() {
        let cov = SpectralCovariance::power_law(16, 12.0).unwrap();
        let (fine, coarse) = (grid(511), grid(63));
        for step in 0..20 {
            let draws = fork_stream(3, 1, step).gaussians(16);
            let f = cov.increment_from_draws(&cov.mode_table(&fine), 1e-4, draws.clone()).unwrap();
            let c = cov.increment_from_draws(&cov.mode_table(&coarse), 1e-4, draws).unwrap();
            let r = f.values.restrict(&coarse).unwrap();
            for (a, b) in r.values().iter().zip(c.values.values()) {
                assert_eq!(a.re.to_bits(), b.re.to_bits());
            }
        }
    }

    #[test]
    fn covariance_matches_closed_form() {
        let cov = SpectralCovariance::from_eigenvalues(vec![1.0]).unwrap();
        let g = grid(7);
        let report = covariance_check(&cov, &g, 0.01, 20_000, &[(1, 3), (4, 4), (2, 6)], 3.0, 17).unwrap();
        assert!(report.passed, "{report:?}");
        let x = |l: usize| g.node(l);
        let closed = 0.01 * 2.0 * (PI * x(1)).sin() * (PI * x(3)).sin();
        assert_relative_eq!(report.pairs[0].expected, closed, max_relative = 1e-14);
    }
}
