use std::fmt::Write as _;

use rand::Rng;
use serde_json::json;
use stochnls::experiments::{
    exp_moment_probe, initial_dependence, initial_dependence_study, noise_scaling, residual_study,
    run_coupled_ensemble, ConvergenceRecord, ConvergenceSetup, RateFit, ResidualReport,
};
use stochnls::functionals::FunctionalReport;
use stochnls::io::{grid_function_csv_fields, grid_function_csv_header, noise_path_rows, BinaryTrajectoryWriter, TrajectoryHeader};
use stochnls::noise::covariance_check;
use stochnls::scheme::evolve_with;
use stochnls::{fork_stream, GridFunction, StreamNoise, TrajectoryState, UniformGrid};

use crate::error::CliError;
use crate::output::{Cell, Outputs, Table};
use crate::params::Params;

/// Result of a command whose outputs are ready to be written. `status`
/// carries a failure that should set the exit code after writing.
pub struct Run {
    pub status: Option<CliError>,
    pub headline: String,
}

fn grid(n: usize) -> Result<UniformGrid, CliError> {
    UniformGrid::new(n).map_err(|e| CliError::config("n", e.to_string()))
}

fn grid_row(step: u64, t: f64, u: &GridFunction) -> Vec<Cell> {
    let mut row = vec![Cell::I(step), Cell::F(t)];
    row.extend(grid_function_csv_fields(u).into_iter().map(Cell::S));
    row
}

fn fmt_fit(fit: Option<&RateFit>) -> String {
    match fit {
        Some(f) => format!(
            "{:.6} (95% bootstrap CI [{:.6}, {:.6}], R^2 {:.6}, {} resamples)",
            f.slope, f.ci_low, f.ci_high, f.r_squared, f.resamples
        ),
        None => "not fitted".into(),
    }
}

pub fn simulate(p: &mut Params, out: &mut Outputs) -> Result<Run, CliError> {
    let n: usize = p.get("n", "63")?;
    let cfg = p.scheme_config(n, "32")?;
    let initial = p.initial("initial", "sine:1:1")?;
    let dump_every: u64 = p.get("dump_every", "100")?;
    let dump_noise = p.get_bool("dump_noise", false)?;
    p.reject_unknown()?;

    let u0 = initial.sample(&grid(n)?);
    let mut bin = BinaryTrajectoryWriter::new(Vec::new(), &TrajectoryHeader::from_config(&cfg))?;
    let mut traj = Table::new(["step".to_string(), "t".to_string()].into_iter().chain(grid_function_csv_header(n)));
    let mut noise = Table::new(["step", "k", "xi"]);
    let mut last_dump = None;
    let mut io_error = None;

    let mut dump = |state: &TrajectoryState, bin: &mut BinaryTrajectoryWriter<Vec<u8>>, traj: &mut Table| {
        if last_dump == Some(state.step_index) {
            return;
        }
        last_dump = Some(state.step_index);
        traj.push(grid_row(state.step_index, state.t, &state.u));
        if let Err(e) = bin.snapshot(state.step_index, state.t, &state.u) {
            io_error.get_or_insert(e);
        }
    };

    let result = evolve_with(&cfg, u0, &mut StreamNoise { seed: cfg.seed, sample: 0 }, |ev| {
        let s = ev.state;
        if dump_noise && s.step_index > 0 {
            for row in noise_path_rows(s.step_index - 1, ev.draws) {
                noise.push(row.into_iter().map(Cell::S).collect());
            }
        }
        if s.step_index == 0 || (dump_every > 0 && s.step_index % dump_every == 0) {
            dump(s, &mut bin, &mut traj);
        }
    });
    let (state, status) = match result {
        Ok(state) => (state, None),
        Err(failure) => (*failure.partial, Some(CliError::from(failure.error))),
    };
    dump(&state, &mut bin, &mut traj);
    if let Some(e) = io_error {
        return Err(e.into());
    }

    let mut functionals = Table::new(FunctionalReport::CSV_HEADER);
    for r in &state.reports {
        functionals.push(vec![
            r.time.into(),
            r.charge.into(),
            r.energy_h.into(),
            r.lyapunov_2.into(),
            r.h1_seminorm.into(),
            r.linf.into(),
            r.gn_slack.into(),
        ]);
    }
    out.table("functionals", functionals, None);
    out.table("trajectory", traj, None);
    out.binary("trajectory.bin", bin.finish()?);
    if dump_noise {
        out.table("noise", noise, None);
    }

    let outcome = match &status {
        None => "completed".to_string(),
        Some(e) => format!("stopped: {e}"),
    };
    let mut summary = String::new();
    writeln!(summary, "status: {outcome}").unwrap();
    writeln!(summary, "steps: {}", state.step_index).unwrap();
    writeln!(summary, "t: {}", state.t).unwrap();
    writeln!(summary, "max relative charge drift: {:e}", state.max_relative_charge_drift()).unwrap();
    writeln!(summary, "sup linf: {}", state.sup_linf()).unwrap();
    out.text("summary.txt", summary);
    Ok(Run {
        status,
        headline: format!("simulate: {outcome} at t = {} after {} steps", state.t, state.step_index),
    })
}

pub fn converge(p: &mut Params, workers: usize, out: &mut Outputs) -> Result<Run, CliError> {
    let coarse: Vec<usize> = p.get_list("coarse", "15,31,63")?;
    let fine: usize = p.get("fine", "511")?;
    let base = p.scheme_config(fine, "16")?;
    let initial = p.initial("initial", "sine:1:1")?;
    let samples: usize = p.get("samples", "64")?;
    let bootstrap: usize = p.get("bootstrap", "2000")?;
    let moments: Vec<f64> = p.get_list("moments", "2")?;
    p.reject_unknown()?;
    if coarse.len() < 3 {
        return Err(CliError::config("coarse", format!("need ≥ 3 grids, got {}", coarse.len())));
    }
    if moments.is_empty() || moments.iter().any(|&m| !(m >= 1.0)) {
        return Err(CliError::config("moments", "every moment must be at least 1"));
    }

    let ensemble = run_coupled_ensemble(&ConvergenceSetup {
        base,
        initial,
        coarse,
        fine,
        samples,
        workers,
        bootstrap_resamples: bootstrap,
    })?;
    let records = moments
        .iter()
        .map(|&m| ensemble.record(m))
        .collect::<Result<Vec<ConvergenceRecord>, _>>()?;

    let mut table = Table::new(["p", "N", "h", "error", "stderr", "fitted_error"]);
    let mut summary = String::new();
    for r in &records {
        for l in &r.levels {
            let fitted = r.fit.map(|f| f.intercept.exp() * l.h.powf(f.slope));
            table.push(vec![r.moment.into(), l.n_interior.into(), l.h.into(), l.error.into(), l.std_error.into(), fitted.into()]);
        }
        writeln!(summary, "p = {}: order {}", r.moment, fmt_fit(r.fit.as_ref())).unwrap();
        for l in &r.levels {
            writeln!(summary, "  N = {:4}  h = {:.6e}  error = {:.6e} ± {:.2e}", l.n_interior, l.h, l.error, l.std_error).unwrap();
        }
    }
    let first = &records[0];
    writeln!(summary, "reference N: {}", first.reference_n).unwrap();
    writeln!(
        summary,
        "samples: {} used of {} ({} excluded, fraction {})",
        first.samples_used, first.samples_requested, first.excluded, first.exclusion_fraction
    )
    .unwrap();
    writeln!(summary, "max relative charge drift: {:e}", first.max_charge_drift).unwrap();
    writeln!(summary, "energy sandwich violations: {}", first.energy_violations).unwrap();
    writeln!(summary, "valid: {}", first.valid).unwrap();
    out.table("convergence", table, Some(json!(records)));
    out.text("summary.txt", summary);

    let status = (!first.valid).then(|| {
        CliError::BlowUp(format!(
            "{} of {} samples blew up; the record is invalid",
            first.excluded, first.samples_requested
        ))
    });
    Ok(Run {
        status,
        headline: format!("converge: order {}", fmt_fit(first.fit.as_ref())),
    })
}

pub fn residual(p: &mut Params, out: &mut Outputs) -> Result<Run, CliError> {
    let profile = p.analytic("profile", "sine:1:1")?;
    let ladder: Vec<usize> = p.get_list("ladder", "15,31,63,127")?;
    let _: u64 = p.get("seed", "0")?;
    p.reject_unknown()?;
    if ladder.len() < 3 {
        return Err(CliError::config("ladder", format!("need ≥ 3 grids, got {}", ladder.len())));
    }
    let report: ResidualReport = residual_study(&profile, &ladder)?;
    let mut table = Table::new(ResidualReport::CSV_HEADER);
    for l in &report.levels {
        table.push(vec![l.n_interior.into(), l.h.into(), l.linf.into()]);
    }
    let order = match report.fit {
        Some(f) => format!("{:.6} (R^2 {:.6})", f.slope, f.r_squared),
        None => "not fitted (some residual is exactly zero)".into(),
    };
    let mut summary = format!("profile: {}\norder: {order}\n", profile.label());
    for l in &report.levels {
        writeln!(summary, "  N = {:4}  residual sup = {:.6e}", l.n_interior, l.linf).unwrap();
    }
    out.table("residual", table, Some(json!(report)));
    out.text("summary.txt", summary);
    Ok(Run {
        status: None,
        headline: format!("residual: order {order}"),
    })
}

pub fn depend(p: &mut Params, workers: usize, out: &mut Outputs) -> Result<Run, CliError> {
    let study = p.get_string("study", "initial");
    let n: usize = p.get("n", "63")?;
    let base = p.scheme_config(n, "16")?;
    let u0 = p.initial("initial", "sine:1:1")?.sample(&grid(n)?);
    let mut summary = String::new();
    let headline;
    match study.as_str() {
        "initial" => {
            let samples: usize = p.get("samples", "64")?;
            if p.has("v0") {
                let v0 = p.initial("v0", "")?.sample(&grid(n)?);
                p.reject_unknown()?;
                let point = initial_dependence(&u0, &v0, &base, samples, workers)?;
                let mut table = Table::new(["input_distance", "error", "stderr"]);
                table.push(vec![point.input_distance.into(), point.output_error.into(), point.std_error.into()]);
                headline = format!("depend: error {:e} for input distance {:e}", point.output_error, point.input_distance);
                writeln!(summary, "{headline}").unwrap();
                out.table("dependence", table, Some(json!(point)));
            } else {
                let direction = p.initial("direction", "sine:2:1")?.sample(&grid(n)?);
                let deltas: Vec<f64> = p.get_list("deltas", "1e-3,1e-2,1e-1")?;
                p.reject_unknown()?;
                let s = initial_dependence_study(&u0, &direction, &deltas, &base, samples, workers)?;
                let mut table = Table::new(["delta", "input_distance", "error", "stderr"]);
                for (d, pt) in s.deltas.iter().zip(&s.points) {
                    table.push(vec![(*d).into(), pt.input_distance.into(), pt.output_error.into(), pt.std_error.into()]);
                    writeln!(summary, "  delta = {d:e}  error = {:.6e} ± {:.2e}", pt.output_error, pt.std_error).unwrap();
                }
                let slope = s.fit.map_or("not fitted".to_string(), |f| format!("{:.6}", f.slope));
                headline = format!("depend: slope in delta {slope}");
                writeln!(summary, "slope: {slope}").unwrap();
                out.table("dependence", table, Some(json!(s)));
            }
        }
        "noise" => {
            let samples: usize = p.get("samples", "64")?;
            let eps: Vec<f64> = p.get_list("eps", "0.05,0.1,0.2,0.4")?;
            let bootstrap: usize = p.get("bootstrap", "2000")?;
            p.reject_unknown()?;
            let r = noise_scaling(&eps, &u0, &base, samples, workers, bootstrap)?;
            let mut table = Table::new(["epsilon", "error", "stderr"]);
            for l in &r.levels {
                table.push(vec![l.epsilon.into(), l.error.into(), l.std_error.into()]);
                writeln!(summary, "  eps = {}  error = {:.6e} ± {:.2e}", l.epsilon, l.error, l.std_error).unwrap();
            }
            headline = format!("depend: slope in epsilon {}", fmt_fit(r.fit.as_ref()));
            writeln!(summary, "slope: {}", fmt_fit(r.fit.as_ref())).unwrap();
            out.table("noise_scaling", table, Some(json!(r)));
        }
        "exp-moment" => {
            let samples: usize = p.get("samples", "128")?;
            p.reject_unknown()?;
            let e = exp_moment_probe(&u0, &base, samples, workers)?;
            let mut table = Table::new(["q", "estimate", "samples"]);
            table.push(vec![1.0.into(), e.q1.into(), e.samples_used.into()]);
            table.push(vec![2.0.into(), e.q2.into(), e.samples_used.into()]);
            headline = format!("depend: exponential moments q=1 {} q=2 {}", e.q1, e.q2);
            writeln!(summary, "{headline}").unwrap();
            out.table("exp_moment", table, Some(json!(e)));
        }
        other => {
            return Err(CliError::config(
                "study",
                format!("unknown study {other:?}; use initial, noise or exp-moment"),
            ))
        }
    }
    out.text("summary.txt", summary);
    Ok(Run { status: None, headline })
}

pub fn noise_check(p: &mut Params, out: &mut Outputs) -> Result<Run, CliError> {
    let n: usize = p.get("n", "31")?;
    let cov = p.covariance("4")?;
    let dt: f64 = p.get("dt", "1e-3")?;
    let samples: usize = p.get("samples", "100000")?;
    let pair_count: usize = p.get("pairs", "20")?;
    let sigmas: f64 = p.get("sigmas", "3")?;
    let seed: u64 = p.get("seed", "0")?;
    p.reject_unknown()?;
    let grid = grid(n)?;
    if samples < 2 {
        return Err(CliError::config("samples", "need at least 2"));
    }

    let mut stream = fork_stream(seed, u64::MAX, 0);
    let pairs: Vec<(usize, usize)> = (0..pair_count)
        .map(|_| (stream.rng().random_range(1..=n), stream.rng().random_range(1..=n)))
        .collect();
    let check = covariance_check(&cov, &grid, dt, samples, &pairs, sigmas, seed)
        .map_err(|e| CliError::config("dt", e.to_string()))?;

    let mut table = Table::new(["l", "m", "x_l", "x_m", "expected", "empirical", "stderr", "z"]);
    for c in &check.pairs {
        table.push(vec![
            c.l.into(),
            c.m.into(),
            grid.node(c.l).into(),
            grid.node(c.m).into(),
            c.expected.into(),
            c.empirical.into(),
            c.std_error.into(),
            c.z_score.into(),
        ]);
    }
    let worst = check.pairs.iter().map(|c| c.z_score.abs()).fold(0.0, f64::max);
    let verdict = if check.passed { "pass" } else { "fail" };
    let headline = format!(
        "noise-check: {verdict} (max |z| {worst:.3} over {} pairs, tolerance {sigmas})",
        check.pairs.len()
    );
    out.table("noise_check", table, Some(json!(check)));
    out.text("summary.txt", format!("{headline}\n"));
    Ok(Run {
        status: (!check.passed).then(|| CliError::CheckFailed(headline.clone())),
        headline,
    })
}
