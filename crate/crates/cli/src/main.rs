//! `habit-entry`: command-line front end.
//!
//! Exit codes: 0 success, 1 failed residual check or other error,
//! 2 invalid configuration, 3 solver non-convergence.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use habit_entry::checks::check_odes;
use habit_entry::interior::InteriorValue;
use habit_entry::report::{
    run_sweep, write_boundary_csv, write_paths_csv, write_surface_csv, Provenance, SweepGrid,
    SweepParam, SweepSpec,
};
use habit_entry::simulation::{
    run_composite_with, run_stage2_with, CompositeOptions, PathConfig, Stage2Start,
};
use habit_entry::vi::{
    build_obstacle, entry_rule, extract_boundary, required_half_width, solve_vi, Grid2D, Scheme,
    VISolution,
};
use habit_entry::{validate, Error, ModelConfig};
use serde::Serialize;

const BUILD: &str = env!("HABIT_ENTRY_BUILD");

#[derive(Parser)]
#[command(
    name = "habit-entry",
    version,
    about = "Optimal entry and habit-formation consumption under a partially observed drift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArg {
    /// Model configuration (JSON); defaults to the reference parameter set.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone, Copy)]
struct GridArgs {
    /// Time nodes, including both ends.
    #[arg(long, default_value_t = 500)]
    nt: usize,
    /// Drift nodes.
    #[arg(long, default_value_t = 400)]
    neta: usize,
    /// Time-stepping weight: 1 implicit Euler, 0.5 Crank-Nicolson.
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Fixed drift half-width around the long-run level; widened automatically when absent.
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    psor_tol: f64,
    #[arg(long, default_value_t = 20_000)]
    psor_max_iter: usize,
    #[arg(long, default_value_t = 1.5)]
    omega: f64,
}

impl GridArgs {
    fn scheme(&self) -> Scheme {
        Scheme {
            theta: self.theta,
            psor_tol: self.psor_tol,
            psor_max_iter: self.psor_max_iter,
            omega: self.omega,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMode {
    /// Post-entry utility from a given state against the closed form.
    Stage2,
    /// Entry under the solved rule, then the reward of entering.
    Composite,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration; exit 2 when invalid.
    Validate {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Closed-form post-entry value and policies at one state (JSON).
    Value {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Wealth; defaults to x0.
        #[arg(long)]
        x: Option<f64>,
        /// Habit level; defaults to z0.
        #[arg(long)]
        z: Option<f64>,
        /// Filtered drift; defaults to mu0.
        #[arg(long)]
        eta: Option<f64>,
        /// Time the filter variance starts from zero; defaults to `t`.
        #[arg(long)]
        start: Option<f64>,
    },
    /// Solve the entry problem; writes surface.csv, boundary.csv and summary.json.
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve and print the free boundary as CSV.
    Boundary {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        grid: GridArgs,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate; prints aggregate JSON.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum, default_value = "stage2")]
        mode: SimMode,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        no_antithetic: bool,
        /// Stage-2 start time.
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        z: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        /// Composite mode: simulate one post-entry path per entry.
        #[arg(long)]
        nested: bool,
        /// Per-path CSV.
        #[arg(long)]
        paths_csv: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Solve a parameter ladder on a shared grid; one boundary CSV per value plus summary.json.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// delta, alpha, z0, kappa, rho or sigma_mu.
        #[arg(long)]
        param: String,
        /// Strictly increasing, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Residuals of the closed forms against ODE integration (CSV); exit 1 on failure.
    CheckOdes {
        #[command(flatten)]
        config: ConfigArg,
        /// Override every tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    NonConvergence(String),
    Check(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) | Failure::Other(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::NonConvergence(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m)
            | Failure::NonConvergence(m)
            | Failure::Check(m)
            | Failure::Other(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Parse(_) | Error::Sweep(_) => {
                Failure::Invalid(e.to_string())
            }
            Error::PsorNonConvergence { .. } => Failure::NonConvergence(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Other(format!("json: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn load(arg: &ConfigArg) -> Result<ModelConfig, Failure> {
    match &arg.config {
        None => Ok(ModelConfig::figure1(0.25)),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
            Ok(ModelConfig::from_json(&text)?)
        }
    }
}

fn load_valid(arg: &ConfigArg) -> Result<ModelConfig, Failure> {
    let config = load(arg)?;
    config.validated()?;
    Ok(config)
}

fn print_json(value: &impl Serialize) -> Outcome {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn solve(config: &ModelConfig, args: &GridArgs) -> Result<VISolution, Failure> {
    let half_width = match args.half_width {
        Some(w) => w,
        None => required_half_width(config, args.nt)?,
    };
    let grid = Grid2D::centered(&config.market, args.nt, args.neta, half_width)?;
    let obstacle = build_obstacle(config, &grid)?;
    Ok(solve_vi(&config.market, &grid, &obstacle, args.scheme())?)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

#[derive(Serialize)]
struct SolveSummary {
    provenance: Provenance,
    v0: f64,
    mu0: f64,
    half_width: f64,
    tol_gap: f64,
    complementarity_residual: f64,
    psor_iterations: usize,
    max_abs_obstacle: f64,
}

fn cmd_validate(arg: &ConfigArg) -> Outcome {
    let config = load(arg)?;
    let report = validate(&config);
    println!("{}", report.to_string().trim_end());
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::Invalid("configuration is invalid".into()))
    }
}

fn cmd_value(
    arg: &ConfigArg,
    t: f64,
    x: Option<f64>,
    z: Option<f64>,
    eta: Option<f64>,
    start: Option<f64>,
) -> Outcome {
    let config = load_valid(arg)?;
    let iv = InteriorValue::new(&config, start.unwrap_or(t))?;
    let eval = iv.evaluate(
        t,
        x.unwrap_or(config.cost.x0),
        z.unwrap_or(config.habit.z0),
        eta.unwrap_or(config.market.mu0),
    )?;
    print_json(&eval)
}

fn cmd_solve(arg: &ConfigArg, grid: &GridArgs, out: &Path) -> Outcome {
    let config = load_valid(arg)?;
    let sol = solve(&config, grid)?;
    let prov = Provenance::new(&config, Some(&sol.grid), Some(&sol.scheme), BUILD);
    fs::create_dir_all(out)?;
    let mut w = create(&out.join("surface.csv"))?;
    write_surface_csv(&mut w, &sol, &prov)?;
    w.flush()?;
    let mut w = create(&out.join("boundary.csv"))?;
    write_boundary_csv(&mut w, &extract_boundary(&sol), &prov)?;
    w.flush()?;
    let summary = SolveSummary {
        v0: sol.initial_value(config.market.mu0),
        mu0: config.market.mu0,
        half_width: sol.grid.eta_max() - config.market.mu_bar,
        tol_gap: sol.tol_gap,
        complementarity_residual: sol.complementarity_residual(),
        psor_iterations: sol.total_iterations(),
        max_abs_obstacle: sol.obstacle.max_abs(),
        provenance: prov,
    };
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    print_json(&summary)
}

fn cmd_boundary(arg: &ConfigArg, grid: &GridArgs, out: Option<&Path>) -> Outcome {
    let config = load_valid(arg)?;
    let sol = solve(&config, grid)?;
    let prov = Provenance::new(&config, Some(&sol.grid), Some(&sol.scheme), BUILD);
    let records = extract_boundary(&sol);
    match out {
        Some(path) => {
            let mut w = create(path)?;
            write_boundary_csv(&mut w, &records, &prov)?;
            w.flush()?;
        }
        None => write_boundary_csv(io::stdout().lock(), &records, &prov)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    mode: &'static str,
    mean: f64,
    stderr: f64,
    n: u64,
    n_paths: usize,
    dt: f64,
    flags: SimulateFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coarse_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_effect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    consistent: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nested_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nested_stderr: Option<f64>,
    provenance: Provenance,
}

#[derive(Serialize)]
struct SimulateFlags {
    /// Paths that crossed the subsistence floor.
    flagged: usize,
    /// Steps with consumption at or below the habit level.
    consumption_below_habit: usize,
    /// Smallest surplus over wealth floor seen; absent when no path was kept.
    min_surplus: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    arg: &ConfigArg,
    mode: SimMode,
    pathcfg: PathConfig,
    start: (f64, Option<f64>, Option<f64>, Option<f64>),
    nested: bool,
    paths_csv: Option<&Path>,
    grid: &GridArgs,
) -> Outcome {
    let config = load_valid(arg)?;
    let keep = paths_csv.is_some();
    let (summary, records) = match mode {
        SimMode::Stage2 => {
            let start = Stage2Start {
                t: start.0,
                x: start.1.unwrap_or(config.wealth_after_cost(start.0)),
                z: start.2.unwrap_or(config.habit.z0),
                mu: start.3.unwrap_or(config.market.mu0),
            };
            let r = run_stage2_with(&config, start, &pathcfg, keep)?;
            let summary = SimulateSummary {
                mode: "stage2",
                mean: r.fine.mean,
                stderr: r.fine.stderr,
                n: r.fine.n,
                n_paths: r.n_paths,
                dt: r.dt,
                flags: SimulateFlags {
                    flagged: r.flagged,
                    consumption_below_habit: r.consumption_below_habit,
                    min_surplus: Some(r.min_surplus).filter(|m| m.is_finite()),
                },
                closed_form: Some(r.closed_form),
                coarse_mean: Some(r.coarse.mean),
                step_effect: Some(r.step_effect.mean),
                consistent: Some(r.consistent()),
                v0: None,
                mean_tau: None,
                nested_mean: None,
                nested_stderr: None,
                provenance: Provenance::new(&config, None, None, BUILD),
            };
            (summary, r.records)
        }
        SimMode::Composite => {
            let sol = solve(&config, grid)?;
            let rule = entry_rule(&sol);
            let opts = CompositeOptions {
                nested,
                keep_paths: keep,
            };
            let b = run_composite_with(&config, &rule, &pathcfg, opts)?;
            let summary = SimulateSummary {
                mode: "composite",
                mean: b.estimate.mean,
                stderr: b.estimate.stderr,
                n: b.estimate.n,
                n_paths: b.n_paths,
                dt: b.dt,
                flags: SimulateFlags {
                    flagged: b.flagged,
                    consumption_below_habit: 0,
                    min_surplus: b
                        .records
                        .as_ref()
                        .map(|r| r.iter().fold(f64::INFINITY, |m, p| m.min(p.min_surplus)))
                        .filter(|m| m.is_finite()),
                },
                closed_form: None,
                coarse_mean: None,
                step_effect: None,
                consistent: None,
                v0: Some(sol.initial_value(config.market.mu0)),
                mean_tau: Some(b.mean_tau),
                nested_mean: b.nested.map(|e| e.mean),
                nested_stderr: b.nested.map(|e| e.stderr),
                provenance: Provenance::new(&config, Some(&sol.grid), Some(&sol.scheme), BUILD),
            };
            (summary, b.records)
        }
    };
    if let (Some(path), Some(records)) = (paths_csv, records.as_ref()) {
        let mut w = create(path)?;
        write_paths_csv(&mut w, records, &summary.provenance)?;
        w.flush()?;
    }
    print_json(&summary)
}

fn cmd_sweep(
    arg: &ConfigArg,
    param: &str,
    values: Vec<f64>,
    grid: &GridArgs,
    out: &Path,
) -> Outcome {
    let base = load(arg)?;
    let param: SweepParam = param
        .parse()
        .map_err(|e: Error| Failure::Invalid(e.to_string()))?;
    let spec = SweepSpec {
        param,
        values,
        base,
    };
    spec.configs()?;
    let sweep_grid = SweepGrid {
        n_t: grid.nt,
        n_eta: grid.neta,
        half_width: grid.half_width,
    };
    let scheme = grid.scheme();
    let report = run_sweep(&spec, sweep_grid, scheme)?;
    let files = report.write(out, &spec, &scheme, BUILD)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn cmd_check_odes(arg: &ConfigArg, tol: Option<f64>) -> Outcome {
    let config = load_valid(arg)?;
    let suite = check_odes(&config, tol)?;
    suite.write_csv(io::stdout().lock())?;
    if suite.passed() {
        Ok(())
    } else {
        Err(Failure::Check("residual check failed".into()))
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Value {
            config,
            t,
            x,
            z,
            eta,
            start,
        } => cmd_value(&config, t, x, z, eta, start),
        Command::Solve { config, grid, out } => cmd_solve(&config, &grid, &out),
        Command::Boundary { config, grid, out } => cmd_boundary(&config, &grid, out.as_deref()),
        Command::Simulate {
            config,
            mode,
            paths,
            dt,
            seed,
            no_antithetic,
            t,
            x,
            z,
            mu,
            nested,
            paths_csv,
            grid,
        } => {
            let pathcfg = PathConfig {
                n_paths: paths,
                dt,
                seed,
                antithetic: !no_antithetic,
            };
            cmd_simulate(
                &config,
                mode,
                pathcfg,
                (t, x, z, mu),
                nested,
                paths_csv.as_deref(),
                &grid,
            )
        }
        Command::Sweep {
            config,
            param,
            values,
            grid,
            out,
        } => cmd_sweep(&config, &param, values, &grid, &out),
        Command::CheckOdes { config, tol } => cmd_check_odes(&config, tol),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
