//! Lock-step integration of several trajectories on one noise realization.
//!
//! Every member consumes the same per-step draws `ξ_k` from
//! `fork_stream(seed, sample, step)`, evaluated on its own grid and scaled by
//! its own noise factor. Distances between members are tracked at every step
//! time, restricting the finer member onto the coarser grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::functionals::{charge, energy_bounds_check};
use crate::grid::{GridFunction, UniformGrid};
use crate::noise::fork_stream;
use crate::scheme::{Scheme, SchemeConfig, SchemeError};

/// One trajectory of a coupled run.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberSpec {
    pub initial: GridFunction,
    /// Multiplies every noise increment (`ε` in `i du + ... = ε u ∘ dW`).
    pub noise_scale: f64,
}

impl MemberSpec {
    pub fn new(initial: GridFunction) -> Self {
        Self {
            initial,
            noise_scale: 1.0,
        }
    }
}

/// Members integrated together, and the `(fine, coarse)` member pairs whose
/// distance `sup_t ‖restrict(fine) − coarse‖_h` is recorded.
#[derive(Debug, Clone)]
pub struct CoupledSpec {
    /// Shared settings; `n_interior` is taken from each member's initial datum.
    pub base: SchemeConfig,
    pub members: Vec<MemberSpec>,
    pub pairs: Vec<(usize, usize)>,
}

impl CoupledSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.base.validate()?;
        for &(fine, coarse) in &self.pairs {
            let grid = |i: usize| -> Result<UniformGrid, ExperimentError> {
                self.members
                    .get(i)
                    .map(|m| *m.initial.grid())
                    .ok_or_else(|| ExperimentError::Incompatible(format!("pair refers to missing member {i}")))
            };
            grid(fine)?.refinement_of(&grid(coarse)?)?;
        }
        Ok(())
    }

    fn member_config(&self, member: &MemberSpec) -> SchemeConfig {
        SchemeConfig {
            n_interior: member.initial.grid().n_interior(),
            ..self.base.clone()
        }
    }
}

/// Per-member observations over one sample path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDiagnostics {
    /// `max_t |charge(t) − charge(0)| / charge(0)` (absolute when `charge(0) = 0`).
    pub max_charge_drift: f64,
    /// States violating the energy sandwich.
    pub energy_violations: u64,
    /// Trapezoidal `∫₀^T ‖u(0)‖_h ‖δ₊u(r)‖_h dr`.
    pub exp_integral: f64,
    pub max_fp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleOutcome {
    Completed {
        /// `sup_t ‖restrict(fine) − coarse‖_h` per pair.
        pair_sups: Vec<f64>,
        /// Step times (initial state included) at which a pair distance was nonzero.
        pair_nonzero_steps: Vec<u64>,
        members: Vec<MemberDiagnostics>,
    },
    Failed {
        member: usize,
        error: SchemeError,
    },
}

impl SampleOutcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, SampleOutcome::Completed { .. })
    }
}

struct MemberRun {
    scheme: Scheme,
    u: GridFunction,
    scale: f64,
    charge0: f64,
    norm0: f64,
    integrand: f64,
    diag: MemberDiagnostics,
}

impl MemberRun {
    fn observe(&mut self, dt: Option<f64>) {
        let c = charge(&self.u);
        let drift = if self.charge0 > 0.0 {
            (c - self.charge0).abs() / self.charge0
        } else {
            (c - self.charge0).abs()
        };
        self.diag.max_charge_drift = self.diag.max_charge_drift.max(drift);
        if !energy_bounds_check(&self.u) {
            self.diag.energy_violations += 1;
        }
        let g = self.norm0 * self.u.forward_diff().norm_h();
        if let Some(dt) = dt {
            self.diag.exp_integral += 0.5 * dt * (self.integrand + g);
        }
        self.integrand = g;
    }
}

/// Runs Monte Carlo sample `sample` of `spec`.
pub fn run_sample(spec: &CoupledSpec, sample: u64) -> Result<SampleOutcome, ExperimentError> {
    let mut runs = Vec::with_capacity(spec.members.len());
    for m in &spec.members {
        let scheme = Scheme::new(&spec.member_config(m))?;
        let mut run = MemberRun {
            scheme,
            u: m.initial.clone(),
            scale: m.noise_scale,
            charge0: charge(&m.initial),
            norm0: m.initial.norm_h(),
            integrand: 0.0,
            diag: MemberDiagnostics {
                max_charge_drift: 0.0,
                energy_violations: 0,
                exp_integral: 0.0,
                max_fp_iterations: 0,
            },
        };
        run.observe(None);
        runs.push(run);
    }

    let mut sups = vec![0.0f64; spec.pairs.len()];
    let mut nonzero = vec![0u64; spec.pairs.len()];
    let track = |runs: &[MemberRun], sups: &mut [f64], nonzero: &mut [u64]| -> Result<(), ExperimentError> {
        for (j, &(fine, coarse)) in spec.pairs.iter().enumerate() {
            let d = runs[fine].u.restricted_distance_h(&runs[coarse].u)?;
            if d != 0.0 {
                nonzero[j] += 1;
            }
            sups[j] = sups[j].max(d);
        }
        Ok(())
    };
    track(&runs, &mut sups, &mut nonzero)?;

    let modes = spec.base.covariance.truncation();
    let mut t = 0.0;
    for (step, dt) in spec.base.step_sizes().into_iter().enumerate() {
        let draws = fork_stream(spec.base.seed, sample, step as u64).gaussians(modes);
        for (i, run) in runs.iter_mut().enumerate() {
            run.scheme.load_increment(&draws, dt, run.scale);
            match run.scheme.advance_loaded(&mut run.u, dt, t) {
                Ok(iters) => run.diag.max_fp_iterations = run.diag.max_fp_iterations.max(iters),
                Err(error @ (SchemeError::BlowUp { .. } | SchemeError::FixedPointDiverged { .. })) => {
                    return Ok(SampleOutcome::Failed { member: i, error });
                }
                Err(e) => return Err(e.into()),
            }
            run.observe(Some(dt));
        }
        track(&runs, &mut sups, &mut nonzero)?;
        t += dt;
    }

    Ok(SampleOutcome::Completed {
        pair_sups: sups,
        pair_nonzero_steps: nonzero,
        members: runs.into_iter().map(|r| r.diag).collect(),
    })
}

/// Runs samples `0..samples` on a pool of `workers` threads. The result is
/// ordered by sample index and does not depend on `workers`.
pub fn run_ensemble(spec: &CoupledSpec, samples: usize, workers: usize) -> Result<Vec<SampleOutcome>, ExperimentError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;
    pool.install(|| {
        (0..samples as u64)
            .into_par_iter()
            .map(|m| run_sample(spec, m))
            .collect::<Result<Vec<_>, _>>()
    })
}

/// Completed samples split from failures.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub requested: usize,
    pub excluded: usize,
    pub exclusion_fraction: f64,
    /// Worst relative charge drift over every member of every completed sample.
    pub max_charge_drift: f64,
    pub energy_violations: u64,
}

/// Splits outcomes into per-sample pair sups (completed samples only) and a summary.
pub fn collect_sups(outcomes: &[SampleOutcome]) -> (Vec<Vec<f64>>, EnsembleSummary) {
    let mut sups = Vec::new();
    let mut summary = EnsembleSummary {
        requested: outcomes.len(),
        ..EnsembleSummary::default()
    };
    for o in outcomes {
        match o {
            SampleOutcome::Completed { pair_sups, members, .. } => {
                sups.push(pair_sups.clone());
                for d in members {
                    summary.max_charge_drift = summary.max_charge_drift.max(d.max_charge_drift);
                    summary.energy_violations += d.energy_violations;
                }
            }
            SampleOutcome::Failed { .. } => summary.excluded += 1,
        }
    }
    if summary.requested > 0 {
        summary.exclusion_fraction = summary.excluded as f64 / summary.requested as f64;
    }
    (sups, summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::SpectralCovariance;
    use crate::scheme::{InitialProfile, Regime};

    fn base() -> SchemeConfig {
        SchemeConfig {
            dt: 1e-3,
            t_final: 0.05,
            covariance: SpectralCovariance::power_law(8, 4.0).unwrap(),
            seed: 9,
            report_every: 0,
            ..SchemeConfig::default()
        }
    }

    fn sine(n: usize) -> GridFunction {
        InitialProfile::Sine { mode: 1, amplitude: 1.0 }.sample(&UniformGrid::new(n).unwrap())
    }

    #[test]
    fn identical_members_never_separate() {
        let spec = CoupledSpec {
            base: base(),
            members: vec![MemberSpec::new(sine(31)), MemberSpec::new(sine(31))],
            pairs: vec![(0, 1)],
        };
        for sample in 0..4 {
            match run_sample(&spec, sample).unwrap() {
                SampleOutcome::Completed {
                    pair_sups,
                    pair_nonzero_steps,
                    ..
                } => {
                    assert_eq!(pair_sups, vec![0.0]);
                    assert_eq!(pair_nonzero_steps, vec![0]);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn members_match_standalone_runs() {
        use crate::noise::StreamNoise;
        use crate::scheme::evolve;
        let spec = CoupledSpec {
            base: base(),
            members: vec![MemberSpec::new(sine(31)), MemberSpec::new(sine(7))],
            pairs: vec![(0, 1)],
        };
        let SampleOutcome::Completed { pair_sups, .. } = run_sample(&spec, 2).unwrap() else {
            panic!()
        };
        let solo = |n: usize| {
            let cfg = SchemeConfig {
                n_interior: n,
                ..base()
            };
            evolve(&cfg, sine(n), &mut StreamNoise { seed: 9, sample: 2 }).unwrap().u
        };
        let d = solo(31).restricted_distance_h(&solo(7)).unwrap();
        assert!(pair_sups[0] >= d);
        assert!(pair_sups[0] > 0.0);
    }

    #[test]
    fn results_independent_of_worker_count() {
        let spec = CoupledSpec {
            base: SchemeConfig {
                regime: Regime::Focusing,
                ..base()
            },
            members: vec![MemberSpec::new(sine(15)), MemberSpec::new(sine(7)), MemberSpec::new(sine(3))],
            pairs: vec![(0, 1), (0, 2)],
        };
        let one = run_ensemble(&spec, 12, 1).unwrap();
        let many = run_ensemble(&spec, 12, 5).unwrap();
        assert_eq!(one, many);
    }

    #[test]
    fn rejects_unnested_pairs() {
        let spec = CoupledSpec {
            base: base(),
            members: vec![MemberSpec::new(sine(10)), MemberSpec::new(sine(7))],
            pairs: vec![(0, 1)],
        };
        assert!(run_ensemble(&spec, 1, 1).is_err());
    }

    #[test]
    fn failures_are_counted() {
        let outcomes = vec![
            SampleOutcome::Failed {
                member: 0,
                error: SchemeError::BlowUp { t: 0.1, linf: 1e7 },
            },
            SampleOutcome::Completed {
                pair_sups: vec![0.5],
                pair_nonzero_steps: vec![3],
                members: vec![MemberDiagnostics {
                    max_charge_drift: 1e-14,
                    energy_violations: 0,
                    exp_integral: 0.1,
                    max_fp_iterations: 3,
                }],
            },
        ];
        let (sups, summary) = collect_sups(&outcomes);
        assert_eq!(sups, vec![vec![0.5]]);
        assert_eq!(summary.excluded, 1);
        assert_eq!(summary.exclusion_fraction, 0.5);
    }
}
