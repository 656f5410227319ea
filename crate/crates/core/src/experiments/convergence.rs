//! Strong error of coarse grids against a fine reference grid on shared noise.
//!
//! For each coarse grid `h`, `ê(h) = (E[sup_t ‖restrict(u_ref) − u_h‖²_h])^{1/2}`
//! is estimated from `M` coupled samples and the rate is the least-squares
//! slope of `ln ê` against `ln h`.

use serde::{Deserialize, Serialize};

use super::coupled::{collect_sups, run_ensemble, CoupledSpec, EnsembleSummary, MemberSpec};
use super::fit::{bootstrap_rate, moment_estimates, RateFit};
use super::ExperimentError;
use crate::grid::UniformGrid;
use crate::scheme::{InitialProfile, SchemeConfig};

/// Exclusion fractions above this invalidate a record.
pub const MAX_EXCLUSION_FRACTION: f64 = 0.05;

/// Minimum refinement `(N_ref + 1)/(N_coarse + 1)` for a proper reference.
pub const MIN_REFERENCE_RATIO: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSetup {
    /// Shared `dt`, `T`, `λ`, covariance, seed and solver settings.
    pub base: SchemeConfig,
    pub initial: InitialProfile,
    pub coarse: Vec<usize>,
    pub fine: usize,
    pub samples: usize,
    pub workers: usize,
    pub bootstrap_resamples: usize,
}

impl ConvergenceSetup {
    /// Checks grid nesting. A coarse grid equal to the reference is allowed
    /// (it must reproduce the reference exactly); any other coarse grid must be
    /// at least [`MIN_REFERENCE_RATIO`] times coarser.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.base.validate()?;
        let fine = UniformGrid::new(self.fine)?;
        for &n in &self.coarse {
            let ratio = fine.refinement_of(&UniformGrid::new(n)?)?;
            if ratio != 1 && ratio < MIN_REFERENCE_RATIO {
                return Err(ExperimentError::Incompatible(format!(
                    "reference N = {} is only {ratio}x finer than N = {n}; need at least {MIN_REFERENCE_RATIO}x",
                    self.fine
                )));
            }
        }
        if self.samples == 0 {
            return Err(ExperimentError::Incompatible("need at least one sample".into()));
        }
        Ok(())
    }

    fn spec(&self) -> Result<CoupledSpec, ExperimentError> {
        let mut members = vec![MemberSpec::new(self.initial.sample(&UniformGrid::new(self.fine)?))];
        for &n in &self.coarse {
            members.push(MemberSpec::new(self.initial.sample(&UniformGrid::new(n)?)));
        }
        Ok(CoupledSpec {
            base: self.base.clone(),
            members,
            pairs: (1..=self.coarse.len()).map(|j| (0, j)).collect(),
        })
    }
}

/// Per-sample sup errors of every coarse grid against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledEnsemble {
    pub setup: ConvergenceSetup,
    /// `sup_t ‖restrict(u_ref) − u_h‖_h`, one row per completed sample, one
    /// column per coarse grid.
    pub sups: Vec<Vec<f64>>,
    pub summary: EnsembleSummary,
    /// Largest count of steps with nonzero error over samples, per coarse grid.
    pub max_nonzero_steps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub n_interior: usize,
    pub h: f64,
    pub error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    /// Moment `p` in `(E[sup_t ‖·‖^p_h])^{1/p}`.
    pub moment: f64,
    pub reference_n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub lambda: f64,
    pub modes: usize,
    pub seed: u64,
    pub levels: Vec<LevelError>,
    /// Present when at least three grids have positive error.
    pub fit: Option<RateFit>,
    pub samples_requested: usize,
    pub samples_used: usize,
    pub excluded: usize,
    pub exclusion_fraction: f64,
    pub valid: bool,
    pub max_charge_drift: f64,
    pub energy_violations: u64,
}

impl ConvergenceRecord {
    pub const CSV_HEADER: [&'static str; 4] = ["h", "error", "stderr", "N"];
}

/// Runs the coupled reference/coarse ensemble.
pub fn run_coupled_ensemble(setup: &ConvergenceSetup) -> Result<CoupledEnsemble, ExperimentError> {
    setup.validate()?;
    let spec = setup.spec()?;
    let outcomes = run_ensemble(&spec, setup.samples, setup.workers)?;
    let mut max_nonzero_steps = vec![0u64; setup.coarse.len()];
    for o in &outcomes {
        if let super::coupled::SampleOutcome::Completed { pair_nonzero_steps, .. } = o {
            for (m, &c) in max_nonzero_steps.iter_mut().zip(pair_nonzero_steps) {
                *m = (*m).max(c);
            }
        }
    }
    let (sups, summary) = collect_sups(&outcomes);
    Ok(CoupledEnsemble {
        setup: setup.clone(),
        sups,
        summary,
        max_nonzero_steps,
    })
}

/// `(E[sup_t ‖u_ref − u_h‖^p_h])^{1/p}` per coarse grid.
pub fn lp_error(ensemble: &CoupledEnsemble, p: f64) -> Vec<f64> {
    moment_estimates(&ensemble.sups, p).iter().map(|e| e.value).collect()
}

impl CoupledEnsemble {
    /// Convergence record for moment `p` (`p = 2` is the strong error).
    pub fn record(&self, p: f64) -> Result<ConvergenceRecord, ExperimentError> {
        let setup = &self.setup;
        let estimates = moment_estimates(&self.sups, p);
        let levels: Vec<LevelError> = setup
            .coarse
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                let est = estimates.get(j).copied();
                LevelError {
                    n_interior: n,
                    h: 1.0 / (n + 1) as f64,
                    error: est.map_or(f64::NAN, |e| e.value),
                    std_error: est.map_or(f64::NAN, |e| e.std_error),
                }
            })
            .collect();
        let fit = if levels.len() >= 3 && levels.iter().all(|l| l.error > 0.0) {
            let h: Vec<f64> = levels.iter().map(|l| l.h).collect();
            Some(bootstrap_rate(&h, &self.sups, p, setup.bootstrap_resamples, setup.base.seed)?)
        } else {
            None
        };
        let s = &self.summary;
        Ok(ConvergenceRecord {
            moment: p,
            reference_n: setup.fine,
            dt: setup.base.dt,
            t_final: setup.base.t_final,
            lambda: setup.base.regime.lambda(),
            modes: setup.base.covariance.truncation(),
            seed: setup.base.seed,
            levels,
            fit,
            samples_requested: s.requested,
            samples_used: self.sups.len(),
            excluded: s.excluded,
            exclusion_fraction: s.exclusion_fraction,
            valid: s.exclusion_fraction <= MAX_EXCLUSION_FRACTION && !self.sups.is_empty(),
            max_charge_drift: s.max_charge_drift,
            energy_violations: s.energy_violations,
        })
    }
}
