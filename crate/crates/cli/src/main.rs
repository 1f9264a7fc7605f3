use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use opdyn::estimate::{estimate_all_report, select_decays, EstimateConfig, IntensityModel};
use opdyn::eval::{dataset_stats, emit_plot_data, evaluate, running_average, EvalConfig, ParamsSource, Series};
use opdyn::forecast::{
    covariance_dynamics, default_step, forecast_hawkes, forecast_mc, forecast_poisson, reconstruct_state, steady_state,
    McRuns, Regime,
};
use opdyn::netgen::{self, KroneckerSpec, ParamGenSpec};
use opdyn::{io, Error, EventLog, Network, Result, SentimentModel, SimConfig};

#[derive(Parser)]
#[command(name = "opdyn", version, about = "Simulate, fit and forecast opinion dynamics on social networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic follow network.
    Netgen(NetgenArgs),
    /// Draw random model parameters on a network.
    Paramgen(ParamgenArgs),
    /// Simulate an event log.
    Simulate(SimulateArgs),
    /// Fit model parameters to an event log.
    Estimate(EstimateArgs),
    /// Forecast expected opinions.
    Forecast(ForecastArgs),
    /// Steady-state opinions and stability.
    Steady(SteadyArgs),
    /// Opinion variance over time.
    Variance(VarianceArgs),
    /// Held-out sentiment prediction error.
    Evaluate(EvaluateArgs),
    /// Dataset summary and running-average sentiment.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SeedKind {
    Assortative,
    Dissortative,
    CorePeriphery,
}

#[derive(Args)]
struct NetgenArgs {
    /// Kronecker power; the network has 2^k users.
    #[arg(long, conflicts_with = "users")]
    k: Option<u32>,
    #[arg(long, value_enum, default_value = "assortative")]
    seed_matrix: SeedKind,
    /// Custom 2x2 seed as "a,b,c,d" (row-major); overrides --seed-matrix.
    #[arg(long)]
    probabilities: Option<String>,
    /// Random follow graph with this many users instead of a Kronecker graph.
    #[arg(long, requires = "degree")]
    users: Option<usize>,
    /// Followees per user for the random follow graph.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParamgenArgs {
    #[arg(long)]
    network: PathBuf,
    /// JSON file with a parameter generation spec; flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    hawkes_fraction: Option<f64>,
    #[arg(long)]
    max_branching_ratio: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SentimentArg {
    Gaussian,
    Logistic,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    params: PathBuf,
    /// End time, e.g. 100, 30m or 6h.
    #[arg(long, value_parser = duration)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_events: Option<usize>,
    #[arg(long, value_enum, default_value = "gaussian")]
    sentiment: SentimentArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// Opinion decay; pass a comma list to select by held-out error.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    omega: Vec<f64>,
    /// Intensity decay; pass a comma list to select by held-out likelihood.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    nu: Vec<f64>,
    #[arg(long, default_value_t = 1e-3)]
    ridge: f64,
    /// Fit constant intensities only.
    #[arg(long)]
    poisson: bool,
    /// Training share of the log when selecting decays.
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ForecastMode {
    /// Closed form for Poisson intensities, mean ODE for diagonal excitation.
    Analytic,
    /// Mean ODE; requires diagonal excitation.
    Hawkes,
    /// Average of simulated continuations.
    Mc,
}

#[derive(Args)]
struct McArgs {
    /// Fixed number of simulations.
    #[arg(long)]
    runs: Option<usize>,
    /// Target accuracy for the automatic sample size.
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Failure probability for the automatic sample size.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl McArgs {
    fn runs(&self) -> McRuns {
        match self.runs {
            Some(r) => McRuns::Fixed(r),
            None => McRuns::Auto {
                eps: self.eps,
                delta: self.delta,
            },
        }
    }
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    params: PathBuf,
    /// History; omitted means the process starts at its baseline at t0.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Forecast origin; defaults to the end of the history.
    #[arg(long, value_parser = duration)]
    t0: Option<f64>,
    /// How far past the origin to forecast.
    #[arg(long, value_parser = duration)]
    ahead: f64,
    #[arg(long, value_enum, default_value = "analytic")]
    mode: ForecastMode,
    #[command(flatten)]
    mc: McArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Poisson,
    Hawkes,
    Covariance,
}

#[derive(Args)]
struct SteadyArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_enum, default_value = "poisson")]
    regime: RegimeArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum VarianceMode {
    Ode,
    Mc,
}

#[derive(Args)]
struct VarianceArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long, value_parser = duration)]
    t0: Option<f64>,
    /// Comma-separated offsets past the origin.
    #[arg(long, value_delimiter = ',', value_parser = duration, required = true)]
    ahead: Vec<f64>,
    #[arg(long, value_enum, default_value = "ode")]
    mode: VarianceMode,
    #[command(flatten)]
    mc: McArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// Use these parameters instead of fitting on the training split.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    omega: f64,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 1e-3)]
    ridge: f64,
    #[arg(long)]
    poisson: bool,
    /// Comma-separated horizons, e.g. 0,1h,4h.
    #[arg(long, value_delimiter = ',', value_parser = duration, default_value = "0")]
    horizons: Vec<f64>,
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    events: PathBuf,
    /// Counts users and edges from this network; otherwise users are
    /// inferred from the log.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Write the running-average sentiment as CSV plot data.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Trailing window of the running average.
    #[arg(long, value_parser = duration, default_value = "10m")]
    window: f64,
}

fn duration(s: &str) -> std::result::Result<f64, String> {
    io::parse_duration(s).map_err(|e| e.to_string())
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

fn load_history(events: Option<&Path>, t0: Option<f64>) -> Result<(EventLog, f64)> {
    let log = match events {
        Some(p) => io::read_events(p)?,
        None => EventLog::empty(t0.unwrap_or(0.0).max(f64::MIN_POSITIVE))?,
    };
    let t0 = t0.unwrap_or(if events.is_some() { log.horizon() } else { 0.0 });
    Ok((log, t0))
}

fn run_netgen(a: NetgenArgs) -> Result<()> {
    let network = match (a.users, a.k) {
        (Some(n), _) => netgen::random_follow_graph(n, a.degree.unwrap_or(0), a.seed)?,
        (None, Some(k)) => {
            let seed_matrix = match &a.probabilities {
                Some(text) => {
                    let v: Vec<f64> = text
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::InvalidInput(format!("cannot parse probabilities '{text}'")))?;
                    if v.len() != 4 {
                        return Err(Error::InvalidInput("--probabilities needs exactly 4 values".into()));
                    }
                    [[v[0], v[1]], [v[2], v[3]]]
                }
                None => match a.seed_matrix {
                    SeedKind::Assortative => netgen::ASSORTATIVE,
                    SeedKind::Dissortative => netgen::DISSORTATIVE,
                    SeedKind::CorePeriphery => netgen::CORE_PERIPHERY,
                },
            };
            netgen::kronecker_graph(&KroneckerSpec::new(seed_matrix, k, a.seed))?
        }
        (None, None) => return Err(Error::InvalidInput("pass --k for a Kronecker graph or --users/--degree".into())),
    };
    io::write_network(&network, &a.out)?;
    log::info!("wrote {} users, {} edges", network.n_users(), network.n_edges());
    Ok(())
}

fn run_paramgen(a: ParamgenArgs) -> Result<()> {
    let network = io::read_network(&a.network)?;
    let mut spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            serde_json::from_str::<ParamGenSpec>(&text).map_err(|e| Error::Format {
                path: path.display().to_string(),
                line: e.line(),
                msg: e.to_string(),
            })?
        }
        None => ParamGenSpec::default(),
    };
    if let Some(v) = a.omega {
        spec.omega = v;
    }
    if let Some(v) = a.nu {
        spec.nu = v;
    }
    if let Some(v) = a.sigma {
        spec.sigma = v;
    }
    if let Some(v) = a.hawkes_fraction {
        spec.hawkes_fraction = v;
    }
    if a.max_branching_ratio.is_some() {
        spec.max_branching_ratio = a.max_branching_ratio;
    }
    let params = netgen::gen_params(&network, &spec, a.seed)?;
    io::write_params(&params, &a.out)
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let network = io::read_network(&a.network)?;
    let params = io::read_params(&a.params)?;
    let sentiment = match a.sentiment {
        SentimentArg::Gaussian => SentimentModel::Gaussian,
        SentimentArg::Logistic => SentimentModel::Logistic,
    };
    let mut config = SimConfig::new(a.horizon, a.seed).with_sentiment(sentiment);
    if let Some(cap) = a.max_events {
        config = config.with_max_events(cap);
    }
    let log = match opdyn::simulate(&network, &params, &config) {
        Ok(log) => log,
        Err(Error::Truncated { cap, partial }) => {
            log::warn!("stopped at {cap} events; writing the partial log");
            *partial
        }
        Err(e) => return Err(e),
    };
    io::write_events(&log, &a.out)?;
    log::info!("wrote {} events", log.len());
    Ok(())
}

fn run_estimate(a: EstimateArgs) -> Result<()> {
    let network = io::read_network(&a.network)?;
    let log = io::read_events(&a.events)?;
    let intensity = if a.poisson {
        IntensityModel::Poisson
    } else {
        IntensityModel::Hawkes
    };
    let base = EstimateConfig::new(a.omega[0], a.nu[0])
        .with_ridge(a.ridge)
        .with_intensity(intensity);
    let config = if a.omega.len() > 1 || a.nu.len() > 1 {
        let sel = select_decays(&log, &network, &base, &a.omega, &a.nu, a.train_fraction)?;
        log::info!("selected omega {} nu {}", sel.omega, sel.nu);
        EstimateConfig {
            omega: sel.omega,
            nu: sel.nu,
            ..base
        }
    } else {
        base
    };
    let report = estimate_all_report(&log, &network, &config)?;
    let stuck = report.unconverged();
    if !stuck.is_empty() {
        log::warn!("{} user(s) hit the iteration cap: {:?}", stuck.len(), stuck);
    }
    io::write_params(&report.params, &a.out)
}

fn run_forecast(a: ForecastArgs) -> Result<()> {
    let network = io::read_network(&a.network)?;
    let params = io::read_params(&a.params)?;
    params.validate(&network)?;
    let (log, t0) = load_history(a.events.as_deref(), a.t0)?;
    let t = t0 + a.ahead;
    let result = match a.mode {
        ForecastMode::Mc => forecast_mc(&log, &params, &network, t0, t, a.mc.runs(), a.mc.seed)?,
        ForecastMode::Analytic | ForecastMode::Hawkes => {
            let state = reconstruct_state(&log, &params, &network, t0)?;
            if a.mode == ForecastMode::Analytic && params.b.is_zero() {
                forecast_poisson(&state, &params, t)?
            } else {
                forecast_hawkes(&state, &params, t, default_step(&params))?
            }
        }
    };
    emit(&serde_json::to_value(&result).expect("forecast serializes"), a.out.as_deref())
}

fn run_steady(a: SteadyArgs) -> Result<()> {
    let params = io::read_params(&a.params)?;
    let regime = match a.regime {
        RegimeArg::Poisson => Regime::Poisson,
        RegimeArg::Hawkes => Regime::Hawkes,
        RegimeArg::Covariance => Regime::Covariance,
    };
    let report = steady_state(&params, regime)?;
    emit(&serde_json::to_value(&report).expect("report serializes"), a.out.as_deref())
}

fn run_variance(a: VarianceArgs) -> Result<()> {
    let network = io::read_network(&a.network)?;
    let params = io::read_params(&a.params)?;
    params.validate(&network)?;
    let (log, t0) = load_history(a.events.as_deref(), a.t0)?;
    let mut rows = Vec::with_capacity(a.ahead.len());
    for &ahead in &a.ahead {
        let t = t0 + ahead;
        let (mean, variance) = match a.mode {
            VarianceMode::Ode => {
                let state = reconstruct_state(&log, &params, &network, t0)?;
                let cov = covariance_dynamics(&state, &params, t, default_step(&params))?;
                let var = cov.variance();
                (cov.mean, var)
            }
            VarianceMode::Mc => {
                let r = forecast_mc(&log, &params, &network, t0, t, a.mc.runs(), a.mc.seed)?;
                (r.mean, r.variance.unwrap_or_default())
            }
        };
        rows.push(json!({ "t": t, "mean": mean, "variance": variance }));
    }
    emit(&json!({ "t0": t0, "forecasts": rows }), a.out.as_deref())
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let network = io::read_network(&a.network)?;
    let log = io::read_events(&a.events)?;
    let source = match &a.params {
        Some(p) => ParamsSource::Given(io::read_params(p)?),
        None => {
            let intensity = if a.poisson {
                IntensityModel::Poisson
            } else {
                IntensityModel::Hawkes
            };
            ParamsSource::Fit(
                EstimateConfig::new(a.omega, a.nu)
                    .with_ridge(a.ridge)
                    .with_intensity(intensity),
            )
        }
    };
    let mut config = EvalConfig::new(source, a.horizons);
    config.train_fraction = a.train_fraction;
    let report = evaluate(&log, &network, &config)?;
    emit(&serde_json::to_value(&report).expect("report serializes"), a.out.as_deref())
}

fn run_stats(a: StatsArgs) -> Result<()> {
    let log = io::read_events(&a.events)?;
    let network = match &a.network {
        Some(p) => io::read_network(p)?,
        None => {
            let n = log.events().iter().map(|e| e.u + 1).max().unwrap_or(0);
            Network::empty(n)?
        }
    };
    log.check_users(network.n_users())?;
    let stats = dataset_stats(&network, &log);
    if let Some(path) = &a.plot {
        let series = Series {
            id: "running_average".into(),
            points: running_average(log.events(), a.window),
        };
        emit_plot_data(&[series], path)?;
    }
    let mut value = serde_json::to_value(stats).expect("stats serialize");
    if a.network.is_none() {
        value["n_edges"] = serde_json::Value::Null;
    }
    emit(&value, None)
}

fn configure_threads() {
    if let Ok(text) = std::env::var("OPDYN_THREADS") {
        match text.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring OPDYN_THREADS={text}: expected a positive integer"),
        }
    }
}

fn error_line(kind: &str, msg: &str) {
    eprintln!("error kind={kind} msg={}", serde_json::Value::String(msg.replace('\n', " ")));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            error_line("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    configure_threads();
    let outcome = match cli.command {
        Command::Netgen(a) => run_netgen(a),
        Command::Paramgen(a) => run_paramgen(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Estimate(a) => run_estimate(a),
        Command::Forecast(a) => run_forecast(a),
        Command::Steady(a) => run_steady(a),
        Command::Variance(a) => run_variance(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Stats(a) => run_stats(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error_line(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
