//! `bdpint`: distributions of first-passage times and reward integrals of
//! birth-death processes from the command line.

mod output;
mod reproduce;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bdp_integral::laplace::{transition_probability, DistCurve, InversionPlan};
use bdp_integral::mc::{empirical_cdf, sample_outcomes, simulate_path, write_paths_csv, Horizon};
use bdp_integral::modelspec::{build_model, BdpModel, ModelFile};
use bdp_integral::passage::{explosion_check, fpt_cdf, fpt_density, EXPLOSION_TERMS};
use bdp_integral::reward::{reward_cdf, reward_density};
use bdp_integral::search::{min_control, min_strike, ControlSearch};
use bdp_integral::{Error, ModelError};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use output::{curve_csv, fmt12, merge, num, nums};

#[derive(Parser)]
#[command(name = "bdpint", version, about = "First-passage and reward-integral distributions of birth-death processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Copy)]
struct NumericArgs {
    /// Target digits of the inversion (A = gamma ln 10).
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    /// Continued-fraction truncation tolerance per contour point.
    #[arg(long)]
    tol: Option<f64>,
}

impl NumericArgs {
    fn plan(&self) -> InversionPlan {
        InversionPlan {
            trunc_tol: self.tol,
            ..InversionPlan::with_gamma(self.gamma)
        }
    }
}

#[derive(Args)]
struct CurveArgs {
    /// JSON model file.
    #[arg(long)]
    model: PathBuf,
    /// Start state.
    #[arg(long)]
    i: usize,
    /// Grid as start:stop:step.
    #[arg(long)]
    grid: String,
    /// Output the distribution function (default when neither flag is given).
    #[arg(long)]
    cdf: bool,
    /// Output the density.
    #[arg(long)]
    density: bool,
    #[command(flatten)]
    numeric: NumericArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Transition probabilities P_ij(t).
    Transition {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        i: usize,
        #[arg(long)]
        j: usize,
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        numeric: NumericArgs,
    },
    /// First passage time into the model's taboo set.
    Fpt(CurveArgs),
    /// Reward accumulated until the taboo set is entered.
    RewardDist(CurveArgs),
    /// Test whether the chain reaches infinity in finite expected time.
    Explosive {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = EXPLOSION_TERMS)]
        terms: usize,
    },
    /// Simulate paths; prints the empirical distribution of the reward on
    /// `--grid`, or a summary without it.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        i: usize,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        grid: Option<String>,
        /// Stop paths after this much time.
        #[arg(long, conflicts_with = "reward_horizon")]
        time_horizon: Option<f64>,
        /// Stop paths after this much accumulated reward.
        #[arg(long)]
        reward_horizon: Option<f64>,
        /// Also write the trajectories of the first `--dump-paths` paths here.
        #[arg(long, requires = "dump_paths")]
        dump: Option<PathBuf>,
        #[arg(long)]
        dump_paths: Option<usize>,
    },
    /// Smallest value of a model parameter with Pr(W < cost) >= 1 - alpha.
    SearchControl {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        i: usize,
        /// Name of the parameter to vary.
        #[arg(long, default_value = "epsilon")]
        param: String,
        #[arg(long)]
        cost: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Search range as lower:upper.
        #[arg(long, default_value = "0:10")]
        range: String,
        /// Coarse grid spacing.
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        /// Final bracket width.
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        #[command(flatten)]
        numeric: NumericArgs,
    },
    /// Lowest strike k with Pr(W(k) > return) > 1 - alpha.
    SearchStrike {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        i: usize,
        #[arg(long = "return")]
        ret: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Strikes to scan as first:last.
        #[arg(long)]
        k_range: String,
        #[command(flatten)]
        numeric: NumericArgs,
    },
    /// Regenerate the data behind one of the worked examples.
    Reproduce {
        #[arg(value_parser = ["fig2", "fig3", "fig4", "fig5", "fig6"])]
        figure: String,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        numeric: NumericArgs,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
    Infeasible(String),
    Io(std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Lib(e.into())
    }
}

impl From<bdp_integral::NumericError> for CliError {
    fn from(e: bdp_integral::NumericError) -> Self {
        CliError::Lib(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Lib(Error::Model(_) | Error::Simulation(_)) => 2,
            CliError::Lib(Error::Numeric(_) | Error::NonMonotone(_)) => 3,
            CliError::Infeasible(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parse `start:stop:step` into the points `start + k·step ≤ stop`.
pub(crate) fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Usage(format!("grid must be start:stop:step with positive numbers, got `{spec}`"));
    let [a, b, h] = parts[..] else { return Err(bad()) };
    let (a, b, h): (f64, f64, f64) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
        h.trim().parse().map_err(|_| bad())?,
    );
    if !(a > 0.0 && b >= a && h > 0.0 && b.is_finite()) {
        return Err(bad());
    }
    let n = ((b - a) / h * (1.0 + 1e-12) + 1e-9).floor() as usize;
    if n > 10_000_000 {
        return Err(CliError::Usage(format!("grid `{spec}` has too many points")));
    }
    Ok((0..=n).map(|k| a + k as f64 * h).collect())
}

fn parse_pair<T: std::str::FromStr>(spec: &str, what: &str) -> CliResult<(T, T)> {
    let bad = || CliError::Usage(format!("{what} must be lower:upper, got `{spec}`"));
    let (a, b) = spec.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn read_model_file(path: &Path) -> CliResult<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Lib(ModelError::Io(e).into()))?;
    Ok(serde_json::from_str(&text).map_err(ModelError::Json)?)
}

fn load(path: &Path) -> CliResult<BdpModel> {
    Ok(build_model(&read_model_file(path)?)?)
}

fn curves(
    c: &CurveArgs,
    f_cdf: impl Fn(&BdpModel, usize, &[f64], &InversionPlan) -> bdp_integral::Result<DistCurve>,
    f_density: impl Fn(&BdpModel, usize, &[f64], &InversionPlan) -> bdp_integral::Result<DistCurve>,
) -> CliResult<String> {
    let model = load(&c.model)?;
    let grid = parse_grid(&c.grid)?;
    let plan = c.numeric.plan();
    let want_cdf = c.cdf || !c.density;
    let cdf = want_cdf.then(|| f_cdf(&model, c.i, &grid, &plan)).transpose()?;
    let density = c.density.then(|| f_density(&model, c.i, &grid, &plan)).transpose()?;
    let curve = merge(cdf, density);
    for w in &curve.warnings {
        eprintln!("warning: {w}");
    }
    Ok(curve_csv(&curve))
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Transition { model, i, j, grid, numeric } => {
            let model = load(&model)?;
            let grid = parse_grid(&grid)?;
            let plan = numeric.plan();
            let mut out = String::from("t,probability,err\n");
            for &t in &grid {
                let p = transition_probability(&model, i, j, t, &plan)?;
                out.push_str(&format!("{},{},{}\n", fmt12(t), fmt12(p.value), fmt12(p.err)));
            }
            Ok(out)
        }
        Command::Fpt(c) => curves(
            &c,
            |m, i, g, p| fpt_cdf(m, i, m.taboo(), g, p),
            |m, i, g, p| fpt_density(m, i, m.taboo(), g, p),
        ),
        Command::RewardDist(c) => curves(&c, reward_cdf, reward_density),
        Command::Explosive { model, terms } => {
            let model = load(&model)?;
            let r = explosion_check(&model, terms);
            Ok(to_json(&json!({
                "verdict": r.verdict,
                "expected_passage_to_infinity": num(r.expected_passage_to_infinity),
                "partial_sum_trace": nums(&r.partial_sum_trace),
            })))
        }
        Command::Simulate {
            model,
            i,
            paths,
            seed,
            grid,
            time_horizon,
            reward_horizon,
            dump,
            dump_paths,
        } => {
            let model = load(&model)?;
            let horizon = match (time_horizon, reward_horizon) {
                (Some(t), _) => Horizon::Time(t),
                (_, Some(w)) => Horizon::Reward(w),
                _ => Horizon::None,
            };
            if paths == 0 {
                return Err(CliError::Usage("--paths must be positive".into()));
            }
            if let (Some(file), Some(k)) = (dump, dump_paths) {
                let samples = (0..k as u64)
                    .map(|p| simulate_path(&model, i, model.taboo(), seed, p, horizon))
                    .collect::<Result<Vec<_>, _>>()?;
                let f = std::fs::File::create(&file).map_err(CliError::Io)?;
                write_paths_csv(std::io::BufWriter::new(f), &samples).map_err(CliError::Io)?;
            }
            let outcomes = sample_outcomes(&model, i, model.taboo(), seed, paths, horizon)?;
            match grid {
                Some(g) => {
                    let curve = empirical_cdf(&outcomes, &parse_grid(&g)?)?;
                    for w in &curve.warnings {
                        eprintln!("warning: {w}");
                    }
                    Ok(curve_csv(&curve))
                }
                None => {
                    let done: Vec<f64> = outcomes.iter().filter(|o| !o.censored).map(|o| o.reward).collect();
                    let mean = done.iter().sum::<f64>() / done.len().max(1) as f64;
                    Ok(to_json(&json!({
                        "paths": paths,
                        "seed": seed,
                        "censored": paths - done.len(),
                        "mean_reward_uncensored": num(mean),
                        "mean_time": num(outcomes.iter().map(|o| o.time).sum::<f64>() / paths as f64),
                    })))
                }
            }
        }
        Command::SearchControl {
            model,
            i,
            param,
            cost,
            alpha,
            range,
            step,
            resolution,
            numeric,
        } => {
            let file = read_model_file(&model)?;
            let (lower, upper) = parse_pair(&range, "--range")?;
            let family = |x: f64| {
                let mut f = file.clone();
                f.params.insert(param.clone(), x);
                build_model(&f)
            };
            let search = ControlSearch { lower, upper, step, tol: resolution };
            let r = min_control(family, i, cost, alpha, &search, &numeric.plan())?;
            let v = reproduce::control_json(&r);
            if !r.feasible {
                return Err(CliError::Infeasible(format!(
                    "no {param} in [{lower}, {upper}] gives Pr(W < {cost}) >= {}\n{}",
                    1.0 - alpha,
                    to_json(&v)
                )));
            }
            Ok(to_json(&v))
        }
        Command::SearchStrike { model, i, ret, alpha, k_range, numeric } => {
            let model = load(&model)?;
            let (first, last) = parse_pair::<usize>(&k_range, "--k-range")?;
            let r = min_strike(&model, i, ret, alpha, first..=last, &numeric.plan())?;
            let v = reproduce::strike_json(&r);
            if !r.feasible {
                return Err(CliError::Infeasible(format!(
                    "no strike in {first}..={last} gives Pr(W > {ret}) > {}\n{}",
                    1.0 - alpha,
                    to_json(&v)
                )));
            }
            Ok(to_json(&v))
        }
        Command::Reproduce { figure, paths, seed, numeric } => {
            let plan = numeric.plan();
            let v = reproduce::figure(&figure, &plan, paths, seed)?;
            Ok(to_json(&v))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("usage error: --threads must be positive");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    let out_path = cli.out.clone();
    let result = run(cli).and_then(|text| match &out_path {
        Some(p) => std::fs::write(p, text).map_err(CliError::Io),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(CliError::Io),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bdpint: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
