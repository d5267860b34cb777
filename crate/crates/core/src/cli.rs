//! Command-line front end.
//!
//! Exit codes: 0 pass, 1 usage/parse/validation error, 2 fail,
//! 3 inconclusive (depth cap reached or truncated simulation).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::biaffine::{check_sufficient, SufficientConclusion};
use crate::error::{Error, Result};
use crate::lift::StatePoint;
use crate::rank::{
    check_condition_1, check_condition_2, check_hormander_lifted, check_rank_at_state,
    BracketMode, CheckOptions, RankReport, Verdict, DEFAULT_TOL,
};
use crate::rational::{parse_rational, Rational};
use crate::simulate::output::{closed_form_table, monte_carlo_table, statlin_table, SimulationSummary, Table};
use crate::simulate::{
    euler_maruyama, genericity_experiment, integrate_statlin, lyapunov_closed_form, CompiledSystem,
    GenericityOptions, IntegrateOptions, MonteCarloOptions,
};
use crate::spec_file::SystemSpec;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

/// Environment variable overriding the default seed.
pub const SEED_ENV: &str = "STATLIN_SEED";

#[derive(Debug, Parser)]
#[command(name = "statlin", version, about = "Rank conditions and simulation for statistically linearized control systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a rank condition at sample points.
    Check(CheckArgs),
    /// Test the biaffine sufficient conditions and sample the rank.
    Biaffine(BiaffineArgs),
    /// Integrate the mean/covariance dynamics or run Monte Carlo.
    Simulate(SimulateArgs),
    /// Pass fraction of condition 1 under random drift perturbations.
    Genericity(GenericityArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Condition {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Hormander,
    State,
}

#[derive(Debug, clap::Args)]
pub struct CheckArgs {
    pub spec: PathBuf,
    #[arg(long, value_enum, default_value = "1")]
    pub condition: Condition,
    /// Points as `x1,x2;y1,y2` (rational literals); overrides the spec.
    #[arg(long)]
    pub points: Option<String>,
    /// Bracket depth cap (default 2N+1).
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, clap::Args)]
pub struct BiaffineArgs {
    pub spec: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Rk4,
    Closedform,
    Mc,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    pub spec: PathBuf,
    #[arg(long, value_enum, default_value = "rk4")]
    pub method: Method,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Directory receiving `trajectory.csv` and `summary.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct GenericityArgs {
    pub spec: PathBuf,
    #[arg(long, default_value = "1/10")]
    pub eps: String,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

fn load(path: &Path) -> Result<SystemSpec> {
    SystemSpec::from_path(path).map_err(|e| Error::Spec(format!("{}: {e}", path.display())))
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Invalid(format!("{SEED_ENV} must be an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, spec: &SystemSpec) -> u64 {
    flag.or(spec.seed).unwrap_or(0)
}

/// `"1,0;1/2,-1"` into points of length `n`.
pub fn parse_points(text: &str, n: usize) -> Result<Vec<Vec<Rational>>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pt| {
            let v = pt.split(',').map(parse_rational).collect::<Result<Vec<_>>>()?;
            if v.len() != n {
                return Err(Error::Dimension(format!("point {pt:?} needs {n} coordinates")));
            }
            Ok(v)
        })
        .collect()
}

fn exit_for(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail => EXIT_FAIL,
        Verdict::InconclusiveAtCap => EXIT_INCONCLUSIVE,
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Human-readable table for a rank report.
pub fn render_report(r: &RankReport) -> String {
    let mut s = format!(
        "condition {} ({}), n = {}, N = {}\ndepth cap {}, depth used {}, {}\n",
        r.condition,
        r.mode,
        r.n,
        r.target,
        r.depth_cap,
        r.depth_used,
        if r.closed { "family closed" } else { "family open" }
    );
    let rows: Vec<[String; 5]> = r
        .points
        .iter()
        .chain(&r.generic)
        .map(|p| {
            let mut at = format!("m=({})", p.m.join(", "));
            if let Some(pm) = &p.p {
                let rows: Vec<String> = pm.iter().map(|row| row.join(" ")).collect();
                at.push_str(&format!(" P=[{}]", rows.join("; ")));
            }
            [p.label.clone(), at, p.rank.to_string(), p.svd_rank.to_string(), p.verdict.to_string()]
        })
        .collect();
    let head = ["label", "at", "rank", "svd", "verdict"];
    let widths: Vec<usize> = (0..5)
        .map(|c| rows.iter().map(|r| r[c].len()).chain([head[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[&str]| {
        let mut l = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        l.truncate(l.trim_end().len());
        l + "\n"
    };
    s.push_str(&line(&head));
    for r in &rows {
        s.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    s.push_str(&format!("basis: {}\n", r.basis.join(" ")));
    s.push_str(&format!("verdict: {}\n", r.verdict));
    s
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load(&a.spec)?;
    let sys = spec.system()?;
    let n = sys.n();
    let opts = CheckOptions {
        depth_cap: a.depth,
        tol: a.tol,
        seed: env_seed()?.or(spec.seed).unwrap_or(0),
        generic: true,
        ..CheckOptions::default()
    };
    let points = match &a.points {
        Some(text) => parse_points(text, n)?,
        None => spec.points()?,
    };
    let report = if a.condition == Condition::State {
        let mut states = spec.states()?;
        if a.points.is_some() || states.is_empty() {
            states = points.into_iter().map(StatePoint::at_identity).collect();
        }
        if states.is_empty() {
            return Err(Error::Invalid("no states given (spec states, points or --points)".into()));
        }
        check_rank_at_state(&sys, &states, &opts, BracketMode::ZeroTimeIdeal)?
    } else {
        if points.is_empty() {
            return Err(Error::Invalid("no points given (spec points or --points)".into()));
        }
        match a.condition {
            Condition::One => check_condition_1(&sys, &points, &opts)?,
            Condition::Two => check_condition_2(&sys, &points, &opts)?,
            _ => check_hormander_lifted(&sys, &points, &opts)?,
        }
    };
    let text = if a.json { to_json(&report)? } else { render_report(&report) };
    out.write_all(text.as_bytes())?;
    Ok(exit_for(report.verdict))
}

fn cmd_biaffine(a: &BiaffineArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load(&a.spec)?;
    let sys = spec.biaffine()?;
    let opts = CheckOptions {
        seed: resolve_seed(a.seed, &spec),
        ..CheckOptions::default()
    };
    let report = check_sufficient(&sys, a.samples, &opts)?;
    out.write_all(to_json(&report)?.as_bytes())?;
    Ok(match report.conclusion {
        SufficientConclusion::AccessibleOnOpenDenseSet => EXIT_PASS,
        SufficientConclusion::NoConclusion => EXIT_FAIL,
    })
}

fn write_outputs(dir: &Path, table: &Table, summary: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    table.write_csv(std::fs::File::create(dir.join("trajectory.csv"))?)?;
    std::fs::write(dir.join("summary.json"), summary)?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load(&a.spec)?;
    let sys = CompiledSystem::new(&spec.system()?);
    let n = sys.n();
    let u = spec.control_signal(a.dt)?;
    let sim = spec.simulation.clone().unwrap_or(crate::spec_file::SimulationSpec {
        horizon: None,
        dt: None,
        m0: None,
        p0: None,
        paths: None,
        record_every: None,
    });
    let m0 = sim.m0.clone().unwrap_or_else(|| vec![0.0; n]);
    let p0 = match &sim.p0 {
        Some(rows) => DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        None => DMatrix::identity(n, n),
    };
    let iopts = IntegrateOptions::default();
    let (table, summary, truncated) = match a.method {
        Method::Rk4 => {
            let r = integrate_statlin(&sys, &u, &m0, &p0, &iopts)?;
            (statlin_table(&r), SimulationSummary::statlin(&r, u.dt(), u.horizon()), !r.completed())
        }
        Method::Closedform => {
            let r = lyapunov_closed_form(&sys, &u, &m0, &p0, &iopts)?;
            let bad = r.diagnostic.is_some();
            (closed_form_table(&r), SimulationSummary::closed_form(&r, u.dt(), u.horizon()), bad)
        }
        Method::Mc => {
            let opts = MonteCarloOptions {
                paths: a.paths.or(sim.paths).unwrap_or(10_000),
                seed: resolve_seed(a.seed, &spec),
                record_every: sim.record_every.unwrap_or((u.steps() / 100).max(1)),
                ..MonteCarloOptions::default()
            };
            let r = euler_maruyama(&sys, &u, &m0, &p0, &opts)?;
            (monte_carlo_table(&r), SimulationSummary::monte_carlo(&r, u.dt(), u.horizon()), false)
        }
    };
    let json = to_json(&summary)?;
    if let Some(dir) = &a.out {
        write_outputs(dir, &table, &json)?;
    }
    out.write_all(json.as_bytes())?;
    Ok(if truncated { EXIT_INCONCLUSIVE } else { EXIT_PASS })
}

fn cmd_genericity(a: &GenericityArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load(&a.spec)?;
    let sys = spec.system()?;
    let opts = GenericityOptions {
        epsilon: parse_rational(&a.eps)?,
        trials: a.trials,
        degree: a.degree,
        seed: resolve_seed(a.seed, &spec),
        points: spec.points()?,
        ..GenericityOptions::default()
    };
    let report = genericity_experiment(&sys, &opts)?;
    out.write_all(to_json(&report)?.as_bytes())?;
    Ok(EXIT_PASS)
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Check(a) => cmd_check(a, out),
        Command::Biaffine(a) => cmd_biaffine(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Genericity(a) => cmd_genericity(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}
