//! `ruin` — ruin probabilities for risk reserves whose driving parameters
//! are resampled at Poisson epochs.
//!
//! Five subcommands cover the library surface: `validate` checks a model
//! file, `asymptotics` computes the exact decay rate and prefactor, `bound`
//! evaluates the uniform exponential bound, `simulate` estimates the ruin
//! probability by Monte Carlo, and `table` regenerates the reference tables.
//! Results go to standard output as JSON or CSV (`--format`); progress notes
//! go to standard error unless `--quiet`.
//!
//! Exit codes: 0 success; 1 invalid input (bad flags, malformed or
//! inconsistent model); 2 numerical failure; 3 I/O error.

// `!(x >= 0.0)`-style checks are deliberate: they reject NaN along with the
// out-of-range values, unlike the suggested `x < 0.0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ruin_core::simulate::{ruin_probability_crude, ruin_probability_is, Estimate};
use ruin_core::{asymptotics, spectral, twist, Error, Model, Result};

/// The bundled two-state example configuration (`configs/table_model.json`),
/// used whenever `--model` is not given. It is the model behind the
/// reference tables: resampling speed `q = 0.75`, claim rates `(0.45, 1.8)`
/// with probabilities `(2/3, 1/3)`, unit premium, variance, and claim mean.
const BUNDLED_MODEL: &str = include_str!("../../../configs/table_model.json");

/// Reserve level of the vary-`q` reference table.
const TABLE_U: f64 = 175.0;

/// Reserve grid of the vary-`u` reference table.
const TABLE_U_GRID: [f64; 5] = [125.0, 137.5, 150.0, 162.5, 175.0];

#[derive(Parser)]
#[command(
    name = "ruin",
    version,
    about = "Ruin probabilities for risk reserves with randomly resampled parameters",
    after_help = "Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 I/O error."
)]
struct Cli {
    /// Output format; defaults to json (table: csv).
    #[arg(long, global = true, value_enum, value_name = "FORMAT")]
    format: Option<Format>,

    /// Suppress progress notes on standard error.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// `--model` flag shared by every subcommand.
#[derive(Args)]
struct ModelArg {
    /// Model configuration file (JSON); defaults to the bundled two-state
    /// example.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
}

impl ModelArg {
    fn load(&self) -> Result<Model> {
        match &self.model {
            Some(path) => Model::from_path(path),
            None => Model::from_json(BUNDLED_MODEL),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Importance sampling under the exponential change of measure
    /// (bounded relative error, the default).
    Is,
    /// Crude Monte Carlo over a truncated horizon (cross-checks at small u).
    Crude,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Vary {
    /// Resampling speed q over 3*4^i, i = -2..2, at u = 175 (table 1).
    Q,
    /// Initial reserve u over 125..175 in steps of 12.5 (table 2).
    U,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model configuration.
    Validate {
        #[command(flatten)]
        model: ModelArg,
    },

    /// Exact asymptotics of the ruin probability: decay rate, prefactor,
    /// ladder data.
    ///
    /// With `--format csv` this instead dumps the eigenvalue curves
    /// theta_k(alpha) of the matrix exponent on a grid — the diagnostic
    /// behind the asymptotics (the dominant curve vanishes at -omega_star
    /// and the determinant vanishes again at the positive roots).
    Asymptotics {
        #[command(flatten)]
        model: ModelArg,
        /// Left end of the eigenvalue grid (default: -omega_star).
        #[arg(long, value_name = "REAL")]
        alpha_min: Option<f64>,
        /// Right end of the eigenvalue grid (default: past the largest
        /// positive determinant root, or omega_star if there is none).
        #[arg(long, value_name = "REAL")]
        alpha_max: Option<f64>,
        /// Number of grid points in the eigenvalue dump.
        #[arg(long, default_value_t = 101, value_name = "INT")]
        alpha_steps: usize,
    },

    /// Uniform bound Omega * exp(-omega_star * u) at the requested reserves.
    Bound {
        #[command(flatten)]
        model: ModelArg,
        /// Initial reserve; repeat the flag for several values.
        #[arg(long = "u", required = true, value_name = "REAL")]
        u: Vec<f64>,
    },

    /// Monte Carlo estimate of the ruin probability.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        /// Initial reserve.
        #[arg(long, value_name = "REAL")]
        u: f64,
        /// Number of independent runs.
        #[arg(long, default_value_t = 200_000, value_name = "INT")]
        runs: u64,
        /// Base seed; run k uses substream k of this seed, so the estimate
        /// is identical for any --jobs value.
        #[arg(long, default_value_t = 715, value_name = "INT")]
        seed: u64,
        /// Estimator.
        #[arg(long, value_enum, default_value_t = MethodArg::Is)]
        method: MethodArg,
        /// Worker threads: 0 = all cores, 1 = sequential.
        #[arg(long, default_value_t = 0, value_name = "INT")]
        jobs: usize,
    },

    /// Regenerate a reference table (CSV columns: exact, asymptotic, bound,
    /// no_modulation).
    ///
    /// Table 1 varies the resampling speed q at u = 175; table 2 varies the
    /// reserve u at the model's own q. `exact` is the importance-sampling
    /// estimate, `asymptotic` the exact asymptote A*exp(-omega_star*u),
    /// `bound` the uniform bound, and `no_modulation` the estimate for the
    /// model collapsed to a single averaged state.
    Table {
        #[command(flatten)]
        model: ModelArg,
        /// Which table: 1 (vary q) or 2 (vary u).
        #[arg(long, value_name = "1|2")]
        which: Option<u8>,
        /// Alias for --which: q is table 1, u is table 2.
        #[arg(long, value_enum, value_name = "q|u")]
        vary: Option<Vary>,
        /// Number of runs per simulated cell.
        #[arg(long, default_value_t = 200_000, value_name = "INT")]
        runs: u64,
        /// Base seed for every simulated cell.
        #[arg(long, default_value_t = 715, value_name = "INT")]
        seed: u64,
        /// Worker threads: 0 = all cores, 1 = sequential.
        #[arg(long, default_value_t = 0, value_name = "INT")]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version print to stdout and succeed; genuine
            // usage errors are invalid input.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Invalid(_) | Error::Parse(_) => 1,
                Error::Domain(_) | Error::Numerical(_) => 2,
                Error::Io(_) => 3,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let quiet = cli.quiet;
    let format = |default| cli.format.unwrap_or(default);
    match cli.command {
        Command::Validate { model } => cmd_validate(&model, format(Format::Json)),
        Command::Asymptotics {
            model,
            alpha_min,
            alpha_max,
            alpha_steps,
        } => cmd_asymptotics(
            &model,
            format(Format::Json),
            alpha_min,
            alpha_max,
            alpha_steps,
        ),
        Command::Bound { model, u } => cmd_bound(&model, format(Format::Json), &u),
        Command::Simulate {
            model,
            u,
            runs,
            seed,
            method,
            jobs,
        } => cmd_simulate(
            &model,
            format(Format::Json),
            quiet,
            u,
            runs,
            seed,
            method,
            jobs,
        ),
        Command::Table {
            model,
            which,
            vary,
            runs,
            seed,
            jobs,
        } => {
            let vary = resolve_vary(which, vary)?;
            cmd_table(&model, format(Format::Csv), quiet, vary, runs, seed, jobs)
        }
    }
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("plain JSON value")
    );
}

fn cmd_validate(model: &ModelArg, format: Format) -> Result<()> {
    let m = model.load()?;
    let kappa = m.kappa();
    let omega_max = m.omega_max()?;
    match format {
        // Non-finite floats (omega_max can be infinite) serialize as null.
        Format::Json => print_json(&serde_json::json!({
            "valid": true,
            "d": m.d(),
            "q": m.q,
            "kappa": kappa,
            "omega_max": omega_max,
        })),
        Format::Csv => {
            println!("valid,d,q,kappa,omega_max");
            println!("true,{},{},{kappa},{omega_max}", m.d(), m.q);
        }
    }
    Ok(())
}

fn cmd_asymptotics(
    model: &ModelArg,
    format: Format,
    alpha_min: Option<f64>,
    alpha_max: Option<f64>,
    alpha_steps: usize,
) -> Result<()> {
    let m = model.load()?;
    let asym = asymptotics::asymptotics(&m)?;
    let ladder = spectral::ladder(&m)?;
    match format {
        Format::Json => print_json(&serde_json::json!({
            "omega_star": asym.omega_star,
            "A": asym.constant,
            "kappa": m.kappa(),
            "alpha_star": ladder.roots.first(),
            "det_roots": ladder.roots,
            "pibar": ladder.pibar,
        })),
        Format::Csv => {
            let lo = alpha_min.unwrap_or(-asym.omega_star);
            let hi = alpha_max
                .unwrap_or_else(|| ladder.roots.last().map_or(asym.omega_star, |r| 1.25 * r));
            if !(hi > lo) || alpha_steps < 2 {
                return Err(Error::Invalid(format!(
                    "eigenvalue grid needs alpha_min < alpha_max and at least two \
                     steps, got [{lo}, {hi}] with {alpha_steps}"
                )));
            }
            let names: Vec<String> = (1..=m.d()).map(|k| format!("theta_{k}")).collect();
            println!("alpha,{}", names.join(","));
            for i in 0..alpha_steps {
                let a = lo + (hi - lo) * i as f64 / (alpha_steps - 1) as f64;
                let row: Vec<String> = spectral::eigenvalues(&m, a)?
                    .iter()
                    .map(|t| format!("{t:.12e}"))
                    .collect();
                println!("{a:.12e},{}", row.join(","));
            }
        }
    }
    Ok(())
}

fn cmd_bound(model: &ModelArg, format: Format, us: &[f64]) -> Result<()> {
    let m = model.load()?;
    for &u in us {
        if !(u.is_finite() && u >= 0.0) {
            return Err(Error::Invalid(format!(
                "initial reserve must be nonnegative, got {u}"
            )));
        }
    }
    let tw = twist::twist(&m)?;
    match format {
        Format::Json => {
            let gamma: Vec<f64> = tw.states.iter().map(|s| s.gamma).collect();
            let bounds: Vec<serde_json::Value> = us
                .iter()
                .map(|&u| serde_json::json!({ "u": u, "value": tw.bound(u) }))
                .collect();
            print_json(&serde_json::json!({
                "omega_star": tw.omega_star,
                "gamma": gamma,
                "omega_big": tw.omega_big,
                "path_bound": tw.path_bound,
                "bounds": bounds,
            }));
        }
        Format::Csv => {
            println!("u,bound");
            for &u in us {
                println!("{u},{:.12e}", tw.bound(u));
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model: &ModelArg,
    format: Format,
    quiet: bool,
    u: f64,
    runs: u64,
    seed: u64,
    method: MethodArg,
    jobs: usize,
) -> Result<()> {
    let m = model.load()?;
    let label = match method {
        MethodArg::Is => "importance-sampling",
        MethodArg::Crude => "crude",
    };
    if !quiet {
        let workers = if jobs == 0 {
            "all cores".to_string()
        } else {
            format!("{jobs}")
        };
        eprintln!("simulating {runs} {label} runs at u = {u} (seed {seed}, jobs: {workers})");
    }
    let est = match method {
        MethodArg::Is => ruin_probability_is(&m, u, runs, seed, jobs)?,
        MethodArg::Crude => ruin_probability_crude(&m, u, runs, seed, jobs)?,
    };
    print_estimate(&est, format)?;
    Ok(())
}

fn print_estimate(est: &Estimate, format: Format) -> Result<()> {
    match format {
        Format::Json => {
            let value = serde_json::to_value(est)?;
            print_json(&value);
        }
        Format::Csv => {
            println!("mean,se,rel_err,ci_low,ci_high,runs,seed,method");
            println!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}",
                est.mean,
                est.std_error,
                est.relative_error,
                est.ci_low,
                est.ci_high,
                est.runs,
                est.seed,
                match est.method {
                    ruin_core::simulate::Method::ImportanceSampling => "importance_sampling",
                    ruin_core::simulate::Method::Crude => "crude",
                }
            );
        }
    }
    Ok(())
}

fn resolve_vary(which: Option<u8>, vary: Option<Vary>) -> Result<Vary> {
    let from_which = match which {
        Some(1) => Some(Vary::Q),
        Some(2) => Some(Vary::U),
        Some(other) => {
            return Err(Error::Invalid(format!(
                "--which must be 1 or 2, got {other}"
            )));
        }
        None => None,
    };
    match (from_which, vary) {
        (Some(a), Some(b)) if a == b => Ok(a),
        (Some(_), Some(_)) => Err(Error::Invalid(
            "--which and --vary select different tables".into(),
        )),
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Err(Error::Invalid(
            "pick a table with --which 1|2 or --vary q|u".into(),
        )),
    }
}

/// One table row: the varied value and the four columns.
struct Row {
    key: f64,
    exact: f64,
    asymptotic: f64,
    bound: f64,
    no_modulation: f64,
}

fn cmd_table(
    model: &ModelArg,
    format: Format,
    quiet: bool,
    vary: Vary,
    runs: u64,
    seed: u64,
    jobs: usize,
) -> Result<()> {
    let base = model.load()?;
    let (key, rows) = match vary {
        Vary::Q => ("q", table_vary_q(&base, quiet, runs, seed, jobs)?),
        Vary::U => ("u", table_vary_u(&base, quiet, runs, seed, jobs)?),
    };
    match format {
        Format::Csv => {
            println!("{key},exact,asymptotic,bound,no_modulation");
            for r in &rows {
                println!(
                    "{},{:.6e},{:.6e},{:.6e},{:.6e}",
                    r.key, r.exact, r.asymptotic, r.bound, r.no_modulation
                );
            }
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        key: r.key,
                        "exact": r.exact,
                        "asymptotic": r.asymptotic,
                        "bound": r.bound,
                        "no_modulation": r.no_modulation,
                    })
                })
                .collect();
            print_json(&serde_json::json!({ "vary": key, "rows": rows }));
        }
    }
    Ok(())
}

fn note(quiet: bool, text: &str) {
    if !quiet {
        eprintln!("{text}");
    }
}

fn table_vary_q(base: &Model, quiet: bool, runs: u64, seed: u64, jobs: usize) -> Result<Vec<Row>> {
    // The collapsed comparison model ignores q (resampling an i.i.d. single
    // state does not change the law), so one estimate serves every row.
    note(
        quiet,
        &format!("no-modulation column: {runs} runs at u = {TABLE_U}"),
    );
    let no_modulation = ruin_probability_is(&base.no_modulation(), TABLE_U, runs, seed, jobs)?.mean;
    let mut rows = Vec::new();
    for i in -2..=2 {
        let q = 3.0 * 4.0_f64.powi(i);
        let m = Model {
            q,
            states: base.states.clone(),
        };
        m.validate()?;
        note(quiet, &format!("q = {q}: {runs} runs at u = {TABLE_U}"));
        let est = ruin_probability_is(&m, TABLE_U, runs, seed, jobs)?;
        let asym = asymptotics::asymptotics(&m)?;
        let tw = twist::twist(&m)?;
        rows.push(Row {
            key: q,
            exact: est.mean,
            asymptotic: asym.decay(TABLE_U),
            bound: tw.bound(TABLE_U),
            no_modulation,
        });
    }
    Ok(rows)
}

fn table_vary_u(base: &Model, quiet: bool, runs: u64, seed: u64, jobs: usize) -> Result<Vec<Row>> {
    let asym = asymptotics::asymptotics(base)?;
    let tw = twist::twist(base)?;
    let collapsed = base.no_modulation();
    let mut rows = Vec::new();
    for u in TABLE_U_GRID {
        note(
            quiet,
            &format!("u = {u}: {runs} runs (modulated and collapsed)"),
        );
        let est = ruin_probability_is(base, u, runs, seed, jobs)?;
        let no_modulation = ruin_probability_is(&collapsed, u, runs, seed, jobs)?.mean;
        rows.push(Row {
            key: u,
            exact: est.mean,
            asymptotic: asym.decay(u),
            bound: tw.bound(u),
            no_modulation,
        });
    }
    Ok(rows)
}
