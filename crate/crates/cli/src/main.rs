//! `stochnls` command-line driver.

mod commands;
mod error;
mod output;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;
use crate::output::{unix_now, Format, ManifestHeader, Outputs};
use crate::params::Params;

const ABOUT: &str = "Finite difference simulator and Monte Carlo harness for the stochastic cubic Schrödinger equation \
on (0, 1) with Dirichlet boundary conditions and multiplicative noise.";

const EXIT_CODES: &str = "Exit codes: 0 success, 1 I/O error or failed check, 2 configuration error, 3 blow-up, \
4 fixed-point divergence.

Configuration files are flat INI: keys outside any section apply to every command, keys in a [command] \
section override them, and command-line flags override both. Keys use the flag names with '_' for '-'.";

#[derive(Parser, Debug)]
#[command(name = "stochnls", version, about = ABOUT, after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// INI configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed of the noise streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo ensembles [default: available parallelism].
    #[arg(long, global = true, env = "STOCHNLS_WORKERS")]
    workers: Option<usize>,
    /// Output directory [default: stochnls-out].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Format of tabular outputs [default: csv].
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

/// Settings shared by every command that integrates trajectories.
#[derive(Args, Debug, Default)]
struct SchemeArgs {
    /// Time step.
    #[arg(long)]
    dt: Option<String>,
    /// Final time.
    #[arg(long)]
    t: Option<String>,
    /// 1 (focusing) or -1 (defocusing).
    #[arg(long)]
    lambda: Option<String>,
    /// Number of noise modes K (0 disables the noise).
    #[arg(long)]
    modes: Option<String>,
    /// Decay exponent r of the eigenvalues q_k = k^-r.
    #[arg(long)]
    decay: Option<String>,
    /// Explicit eigenvalues q_1,...,q_K (excludes --modes/--decay).
    #[arg(long, value_name = "LIST")]
    eigenvalues: Option<String>,
    /// Initial datum: sine:MODE:AMPLITUDE or sech:AMPLITUDE:CENTER:WIDTH.
    #[arg(long, value_name = "PROFILE")]
    initial: Option<String>,
    /// Fixed-point tolerance.
    #[arg(long)]
    fp_tol: Option<String>,
    /// Fixed-point iteration cap.
    #[arg(long)]
    fp_max_iter: Option<String>,
    /// Fixed-point relaxation weight in (0, 1].
    #[arg(long)]
    fp_damping: Option<String>,
    /// Sup-norm threshold treated as blow-up.
    #[arg(long)]
    blowup_threshold: Option<String>,
}

impl SchemeArgs {
    fn apply(&self, p: &mut Params) {
        p.set_opt("dt", self.dt.as_ref());
        p.set_opt("t", self.t.as_ref());
        p.set_opt("lambda", self.lambda.as_ref());
        p.set_opt("modes", self.modes.as_ref());
        p.set_opt("decay", self.decay.as_ref());
        p.set_opt("eigenvalues", self.eigenvalues.as_ref());
        p.set_opt("initial", self.initial.as_ref());
        p.set_opt("fp_tol", self.fp_tol.as_ref());
        p.set_opt("fp_max_iter", self.fp_max_iter.as_ref());
        p.set_opt("fp_damping", self.fp_damping.as_ref());
        p.set_opt("blowup_threshold", self.blowup_threshold.as_ref());
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory.
    #[command(allow_negative_numbers = true, after_help = "Outputs:
  functionals.csv  t,charge,energy_h,lyapunov_2,h1_seminorm,linf,gn_slack (every --report-every steps and at the end)
  trajectory.csv   step,t,N,h,re_0,im_0,...,re_{N+1},im_{N+1} (every --dump-every steps, first and last state)
  trajectory.bin   the same states in the little-endian binary trajectory format
  noise.csv        step,k,xi (with --dump-noise)
  summary.txt, manifest.json")]
    Simulate {
        /// Interior grid nodes N (h = 1/(N+1)).
        #[arg(long)]
        n: Option<String>,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Store the state every this many steps (0: first and last only).
        #[arg(long)]
        dump_every: Option<String>,
        /// Evaluate monitored functionals every this many steps.
        #[arg(long)]
        report_every: Option<String>,
        /// Also write the Gaussian draws of every step.
        #[arg(long)]
        dump_noise: bool,
    },
    /// Strong error of coarse grids against a fine reference grid on shared noise.
    #[command(allow_negative_numbers = true, after_help = "Outputs:
  convergence.csv  p,N,h,error,stderr,fitted_error (error = (E[sup_t |u_ref - u_h|_h^p])^(1/p))
  summary.txt      fitted order with 95% bootstrap interval, exclusions, conservation diagnostics
  manifest.json")]
    Converge {
        /// Coarse interior sizes, at least three.
        #[arg(long, value_name = "LIST")]
        coarse: Option<String>,
        /// Reference interior size.
        #[arg(long)]
        fine: Option<String>,
        /// Monte Carlo samples M.
        #[arg(long)]
        samples: Option<String>,
        /// Moments p to report.
        #[arg(long, value_name = "LIST")]
        moments: Option<String>,
        /// Bootstrap resamples for the order interval.
        #[arg(long)]
        bootstrap: Option<String>,
        #[command(flatten)]
        scheme: SchemeArgs,
    },
    /// Consistency defect of the difference Laplacian on a closed-form function.
    #[command(after_help = "Outputs:
  residual.csv  N,h,residual_linf
  summary.txt, manifest.json")]
    Residual {
        /// sine:MODE:AMPLITUDE or affine:SLOPE:OFFSET.
        #[arg(long)]
        profile: Option<String>,
        /// Interior sizes, at least three.
        #[arg(long, value_name = "LIST")]
        ladder: Option<String>,
    },
    /// Continuous dependence on initial data or noise amplitude, or exponential moments.
    #[command(allow_negative_numbers = true, after_help = "Outputs by study:
  initial     dependence.csv     delta,input_distance,error,stderr (or input_distance,error,stderr with --v0)
  noise       noise_scaling.csv  epsilon,error,stderr
  exp-moment  exp_moment.csv     q,estimate,samples
  summary.txt, manifest.json")]
    Depend {
        /// initial, noise or exp-moment.
        #[arg(long)]
        study: Option<String>,
        /// Interior grid nodes N.
        #[arg(long)]
        n: Option<String>,
        /// Monte Carlo samples M.
        #[arg(long)]
        samples: Option<String>,
        /// Perturbation sizes for the initial study.
        #[arg(long, value_name = "LIST")]
        deltas: Option<String>,
        /// Perturbation direction profile for the initial study.
        #[arg(long, value_name = "PROFILE")]
        direction: Option<String>,
        /// Second initial datum, compared directly with --initial.
        #[arg(long, value_name = "PROFILE")]
        v0: Option<String>,
        /// Noise amplitudes for the noise study.
        #[arg(long, value_name = "LIST")]
        eps: Option<String>,
        /// Bootstrap resamples for the noise study.
        #[arg(long)]
        bootstrap: Option<String>,
        #[command(flatten)]
        scheme: SchemeArgs,
    },
    /// Empirical covariance of noise increments against the closed form.
    #[command(name = "noise-check", allow_negative_numbers = true, after_help = "Outputs:
  noise_check.csv  l,m,x_l,x_m,expected,empirical,stderr,z
  summary.txt, manifest.json
Exits with 1 when some |z| exceeds --sigmas.")]
    NoiseCheck {
        /// Interior grid nodes N.
        #[arg(long)]
        n: Option<String>,
        /// Number of noise modes K.
        #[arg(long)]
        modes: Option<String>,
        /// Decay exponent r of q_k = k^-r.
        #[arg(long)]
        decay: Option<String>,
        /// Explicit eigenvalues.
        #[arg(long, value_name = "LIST")]
        eigenvalues: Option<String>,
        /// Increment time step.
        #[arg(long)]
        dt: Option<String>,
        /// Number of independent increments.
        #[arg(long)]
        samples: Option<String>,
        /// Number of random node pairs.
        #[arg(long)]
        pairs: Option<String>,
        /// Tolerance in standard errors.
        #[arg(long)]
        sigmas: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Converge { .. } => "converge",
            Command::Residual { .. } => "residual",
            Command::Depend { .. } => "depend",
            Command::NoiseCheck { .. } => "noise-check",
        }
    }

    fn apply(&self, p: &mut Params) {
        match self {
            Command::Simulate {
                n,
                scheme,
                dump_every,
                report_every,
                dump_noise,
            } => {
                p.set_opt("n", n.as_ref());
                scheme.apply(p);
                p.set_opt("dump_every", dump_every.as_ref());
                p.set_opt("report_every", report_every.as_ref());
                if *dump_noise {
                    p.set("dump_noise", "true");
                }
            }
            Command::Converge {
                coarse,
                fine,
                samples,
                moments,
                bootstrap,
                scheme,
            } => {
                p.set_opt("coarse", coarse.as_ref());
                p.set_opt("fine", fine.as_ref());
                p.set_opt("samples", samples.as_ref());
                p.set_opt("moments", moments.as_ref());
                p.set_opt("bootstrap", bootstrap.as_ref());
                scheme.apply(p);
            }
            Command::Residual { profile, ladder } => {
                p.set_opt("profile", profile.as_ref());
                p.set_opt("ladder", ladder.as_ref());
            }
            Command::Depend {
                study,
                n,
                samples,
                deltas,
                direction,
                v0,
                eps,
                bootstrap,
                scheme,
            } => {
                p.set_opt("study", study.as_ref());
                p.set_opt("n", n.as_ref());
                p.set_opt("samples", samples.as_ref());
                p.set_opt("deltas", deltas.as_ref());
                p.set_opt("direction", direction.as_ref());
                p.set_opt("v0", v0.as_ref());
                p.set_opt("eps", eps.as_ref());
                p.set_opt("bootstrap", bootstrap.as_ref());
                scheme.apply(p);
            }
            Command::NoiseCheck {
                n,
                modes,
                decay,
                eigenvalues,
                dt,
                samples,
                pairs,
                sigmas,
            } => {
                p.set_opt("n", n.as_ref());
                p.set_opt("modes", modes.as_ref());
                p.set_opt("decay", decay.as_ref());
                p.set_opt("eigenvalues", eigenvalues.as_ref());
                p.set_opt("dt", dt.as_ref());
                p.set_opt("samples", samples.as_ref());
                p.set_opt("pairs", pairs.as_ref());
                p.set_opt("sigmas", sigmas.as_ref());
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = unix_now();
    let command = cli.command.name();
    let mut p = match &cli.common.config {
        Some(path) => Params::from_ini(path, command)?,
        None => Params::default(),
    };
    cli.command.apply(&mut p);
    if let Some(seed) = cli.common.seed {
        p.set("seed", seed.to_string());
    }
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let workers = match cli.common.workers {
        Some(w) => w,
        None if p.has("workers") => p.get("workers", "1")?,
        None => available,
    };
    if workers == 0 {
        return Err(CliError::config("workers", "must be at least 1"));
    }
    let format = match cli.common.format {
        Some(f) => f,
        None => match p.get_string("format", "csv").as_str() {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(CliError::config("format", format!("expected csv or json, got {other:?}"))),
        },
    };
    let dir = match cli.common.out {
        Some(d) => d,
        None => PathBuf::from(p.get_string("out", "stochnls-out")),
    };

    let mut outputs = Outputs::new(&dir, format);
    let result = match &cli.command {
        Command::Simulate { .. } => commands::simulate(&mut p, &mut outputs)?,
        Command::Converge { .. } => commands::converge(&mut p, workers, &mut outputs)?,
        Command::Residual { .. } => commands::residual(&mut p, &mut outputs)?,
        Command::Depend { .. } => commands::depend(&mut p, workers, &mut outputs)?,
        Command::NoiseCheck { .. } => commands::noise_check(&mut p, &mut outputs)?,
    };

    let mut config = p.resolved().clone();
    for key in ["out", "format", "workers"] {
        config.remove(key);
    }
    let header = ManifestHeader {
        tool: "stochnls",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        seed: config.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0),
        config,
        started_unix: started,
        finished_unix: unix_now(),
        workers,
        available_parallelism: available,
    };
    outputs.finish(&header)?;
    println!("{}", result.headline);
    println!("outputs written to {}", dir.display());
    match result.status {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stochnls: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
