//! Command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bandit::{make_params, run_bandit};
use crate::config::ExperimentConfig;
use crate::demand::{validate_bounds, LinkFunction};
use crate::error::Error;
use crate::estimation::{default_init, mle_fit, LikelihoodSpec, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::harness::{loglog_slope, regret_sweep, rho_curve, RhoMethod, SweepRow};
use crate::io::{self, Series, Table};
use crate::solver::dp::{solve_dp_with, DpConfig};
use crate::solver::{
    build_policy, evaluate_policy_revenue, linear_optimal_policy, PiecewiseLinearPolicy,
};
use crate::utility::discretize;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "fairprice",
    version,
    about = "Utility-fair contextual pricing: optimal policies, cost of fairness, and demand-learning simulations"
)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base random seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal fair pricing policies.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Cost of fairness.
    #[command(subcommand)]
    Fairness(FairnessCommand),
    /// Demand-learning simulations.
    #[command(subcommand)]
    Bandit(BanditCommand),
    /// Render a CSV file as an SVG line chart.
    Plot(PlotArgs),
    /// Fit demand parameters to observations.
    Estimate(EstimateArgs),
}

#[derive(Debug, Subcommand)]
enum PolicyCommand {
    /// Solve for the optimal fair policy and write it as `u,price` rows.
    Solve(SolveArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolveMethod {
    Auto,
    Dp,
    Linear,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum, default_value = "auto")]
    method: SolveMethod,
    /// Also write the dynamic-programming value table to this CSV.
    #[arg(long, value_name = "PATH")]
    value_table: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum FairnessCommand {
    /// Cost-of-fairness curve as `delta0,rho` rows.
    Curve(CurveArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CurveMethod {
    Auto,
    Closed,
    Numeric,
}

#[derive(Debug, Args)]
struct CurveArgs {
    /// `a:b:step` (inclusive) or a comma-separated list.
    #[arg(long, value_name = "SPEC")]
    delta0: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<CurveMethod>,
}

#[derive(Debug, Subcommand)]
enum BanditCommand {
    /// One run; writes the per-period trace.
    Run(RunArgs),
    /// Relative regret against the horizon over several trials.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long = "T", value_name = "N")]
    horizon: Option<usize>,
    #[arg(long)]
    delta0: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated horizons; entries may be written `2^k`.
    #[arg(long = "T", value_name = "LIST")]
    horizons: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    delta0: Option<f64>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Column for the x axis; the first column by default.
    #[arg(long)]
    x: Option<String>,
    /// Columns to draw; the second column by default.
    #[arg(long, value_delimiter = ',')]
    y: Vec<String>,
    /// Plot the x axis on a log2 scale.
    #[arg(long)]
    log_x: bool,
    #[arg(long)]
    title: Option<String>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Observations as `x1,...,xd,p,y`.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    #[arg(long, value_enum)]
    link: Option<LinkArg>,
    #[arg(long)]
    price_coeff: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LinkArg {
    Linear,
    Logistic,
    Exponential,
}

impl From<LinkArg> for LinkFunction {
    fn from(l: LinkArg) -> Self {
        match l {
            LinkArg::Linear => LinkFunction::Linear,
            LinkArg::Logistic => LinkFunction::Logistic,
            LinkArg::Exponential => LinkFunction::Exponential,
        }
    }
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Format { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(Failure::config(format!(
                    "config file not found: {}",
                    path.display()
                )));
            }
            ExperimentConfig::load(path)
                .map_err(|e| Failure::config(format!("invalid config: {e}")))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = Some(s);
    }
    Ok(config)
}

fn execute(cli: Cli) -> CliResult<()> {
    let config = load_config(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Policy(PolicyCommand::Solve(a)) => policy_solve(&config, a, out),
        Command::Fairness(FairnessCommand::Curve(a)) => fairness_curve(&config, a, out),
        Command::Bandit(BanditCommand::Run(a)) => bandit_run(&config, a, out),
        Command::Bandit(BanditCommand::Sweep(a)) => bandit_sweep(&config, a, out),
        Command::Plot(a) => plot(a, out),
        Command::Estimate(a) => estimate(&config, a, out),
    }
}

/// Writes the primary output to `out` or standard output.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => Ok(io::write_text(p, text)?),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure {
                code: EXIT_RUNTIME,
                message: format!("stdout: {e}"),
            }),
    }
}

/// Writes a JSON sidecar next to `out`, or to standard error.
fn emit_sidecar<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    let text = io::to_json(value);
    match out {
        Some(p) => Ok(io::write_text(&p.with_extension("json"), &text)?),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

fn policy_solve(config: &ExperimentConfig, a: &SolveArgs, out: Option<&Path>) -> CliResult<()> {
    let env = config.environment()?;
    let delta0 = a.delta0.unwrap_or(config.delta0());
    let eps = a.eps.unwrap_or(config.eps());
    let b = env.utility_bound();
    let grid = discretize(&env.utility_dist, b, eps)?;
    let report = validate_bounds(&env.model, (-b, b))?;
    let use_linear = match a.method {
        SolveMethod::Linear => true,
        SolveMethod::Dp => false,
        SolveMethod::Auto => delta0 <= report.bounds.linear_structure_limit(),
    };
    let policy: PiecewiseLinearPolicy = if use_linear {
        let lin = linear_optimal_policy(
            &env.model,
            &grid,
            env.utility_dist.moments(),
            delta0,
            &report.bounds,
        )?;
        if let Some(w) = lin.warning {
            eprintln!("warning: {w}");
        }
        lin.policy
    } else {
        let dp_config = DpConfig {
            min_price_points: config.price_points.unwrap_or(0),
            ..DpConfig::default()
        };
        let sol = solve_dp_with(&env.model, &grid, delta0, eps, &dp_config)?;
        if let (Some(path), Some(table)) = (&a.value_table, &sol.value_table) {
            io::value_table_csv(table, &grid.points, &sol.price_grid).write(path)?;
        }
        build_policy(&sol, &grid, delta0)?
    };
    let revenue = evaluate_policy_revenue(&policy, &env.model, &grid)?;
    emit(out, &io::policy_table(&policy).to_csv())?;
    emit_sidecar(out, &io::policy_meta(&policy, Some(revenue)))
}

/// Parses `a:b:step` (inclusive, values rounded to 12 decimals), a
/// comma-separated list, or a single number.
pub fn parse_delta0_spec(spec: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("not a number: {s:?}"))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.len() {
        1 => spec.split(',').map(num).collect(),
        3 => {
            let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || b < a {
                return Err(format!("range {spec:?} needs a <= b and step > 0"));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..n)
                .map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        _ => Err(format!("expected a:b:step or a list, got {spec:?}")),
    }
}

fn parse_horizons(spec: &str) -> std::result::Result<Vec<usize>, String> {
    spec.split(',')
        .map(|s| {
            let s = s.trim();
            if let Some(k) = s.strip_prefix("2^") {
                let k: u32 = k.parse().map_err(|_| format!("bad exponent in {s:?}"))?;
                1usize
                    .checked_shl(k)
                    .ok_or_else(|| format!("{s} is too large"))
            } else {
                s.parse().map_err(|_| format!("not a horizon: {s:?}"))
            }
        })
        .collect()
}

fn fairness_curve(config: &ExperimentConfig, a: &CurveArgs, out: Option<&Path>) -> CliResult<()> {
    let env = config.environment()?;
    let list = match &a.delta0 {
        Some(s) => parse_delta0_spec(s).map_err(Failure::config)?,
        None => config.delta0_list(),
    };
    let method = match a.method {
        Some(CurveMethod::Auto) => RhoMethod::Auto,
        Some(CurveMethod::Closed) => RhoMethod::ClosedForm,
        Some(CurveMethod::Numeric) => RhoMethod::Numeric,
        None => config.rho_method,
    };
    let eps = a.eps.unwrap_or(config.eps());
    let rows = rho_curve(
        &env,
        &list,
        eps,
        method,
        &DpConfig::with_price_points(config.rho_price_points()),
    )?;
    emit(out, &io::rho_table(&rows).to_csv())
}

fn bandit_run(config: &ExperimentConfig, a: &RunArgs, out: Option<&Path>) -> CliResult<()> {
    let env = config.environment()?;
    let delta0 = a.delta0.unwrap_or(config.delta0());
    let horizon = a
        .horizon
        .or(config.horizon)
        .unwrap_or(crate::config::DEFAULT_HORIZON);
    let params = make_params(
        horizon,
        env.model.dim(),
        delta0,
        config.param_mode(&env)?,
        (env.model.price_min, env.model.price_max),
    )?;
    let bench = env.benchmark(delta0)?;
    let seed = config.seed();
    let trace = run_bandit(&env, &bench, &params, &mut ChaCha8Rng::seed_from_u64(seed))?;
    for d in &trace.diagnostics {
        eprintln!("note: {d}");
    }
    emit(out, &io::trace_table(&trace).to_csv())?;
    emit_sidecar(out, &trace.summary(seed))
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    delta0: f64,
    seeds: &'a [u64],
    loglog_slope: Option<f64>,
    rows: &'a [SweepRow],
}

fn bandit_sweep(config: &ExperimentConfig, a: &SweepArgs, out: Option<&Path>) -> CliResult<()> {
    let env = config.environment()?;
    let delta0 = a.delta0.unwrap_or(config.delta0());
    let horizons = match &a.horizons {
        Some(s) => parse_horizons(s).map_err(Failure::config)?,
        None => config.horizons(),
    };
    let mut config = config.clone();
    if let Some(n) = a.trials {
        config.n_trials = Some(n);
        config.seeds = None;
    }
    let seeds = config.trial_seeds()?;
    let bench = env.benchmark(delta0)?;
    let rows = regret_sweep(&env, &bench, &horizons, &seeds, config.param_mode(&env)?)?;
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.horizon as f64, r.mean_rel_regret))
        .collect();
    let slope = loglog_slope(&points).ok();
    if rows
        .iter()
        .any(|r| !(0.0..=1.0).contains(&r.mean_rel_regret))
    {
        eprintln!("warning: mean relative regret outside [0, 1]");
    }
    emit(out, &io::sweep_table(&rows).to_csv())?;
    emit_sidecar(
        out,
        &SweepSummary {
            delta0,
            seeds: &seeds,
            loglog_slope: slope,
            rows: &rows,
        },
    )
}

fn plot(a: &PlotArgs, out: Option<&Path>) -> CliResult<()> {
    let table = Table::read(&a.input).map_err(|e| match e {
        Error::Io { .. } => Failure::config(e),
        other => other.into(),
    })?;
    if table.header.len() < 2 {
        return Err(Failure::config(format!(
            "{}: need at least two columns",
            a.input.display()
        )));
    }
    let x_name = a.x.clone().unwrap_or_else(|| table.header[0].clone());
    let ys = if a.y.is_empty() {
        vec![table.header[1].clone()]
    } else {
        a.y.clone()
    };
    let col = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| Failure::config(format!("{}: no column {name:?}", a.input.display())))
    };
    let xc = col(&x_name)?;
    let mut series = Vec::new();
    for y in &ys {
        let yc = col(y)?;
        let points = (0..table.rows.len())
            .map(|r| {
                Ok((
                    table.number(r, xc, &a.input)?,
                    table.number(r, yc, &a.input)?,
                ))
            })
            .collect::<crate::error::Result<Vec<_>>>()?;
        series.push(Series {
            name: y.clone(),
            points,
        });
    }
    let title = a
        .title
        .clone()
        .unwrap_or_else(|| format!("{} vs {x_name}", ys.join(", ")));
    let y_label = ys.join(", ");
    emit(
        out,
        &io::svg_line_chart(&series, &title, &x_name, &y_label, a.log_x),
    )
}

fn estimate(config: &ExperimentConfig, a: &EstimateArgs, out: Option<&Path>) -> CliResult<()> {
    let data = io::read_observations(&a.data).map_err(|e| match e {
        Error::Io { .. } => Failure::config(e),
        other => other.into(),
    })?;
    let (link, coeff) = match a.link {
        Some(l) => (LinkFunction::from(l), a.price_coeff.unwrap_or(0.5)),
        None => {
            let env = config.environment()?;
            (
                env.model.link,
                a.price_coeff.unwrap_or(env.model.price_coeff),
            )
        }
    };
    let spec = LikelihoodSpec::with_price_coeff(link, coeff);
    let d = data.first().map_or(0, |o| o.x.len());
    let est = mle_fit(
        &spec,
        &data,
        &default_init(link, d),
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    )?;
    emit(out, &io::to_json(&est))
}
