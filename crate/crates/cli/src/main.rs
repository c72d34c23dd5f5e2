use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use renewal_trend::estimators::{self, EstimatorKind};
use renewal_trend::event_data::{self, DataFormat, EventSeries, MultiProcessData, Process};
use renewal_trend::null_dist::{self, LimitKind, LimitTable, Sidedness};
use renewal_trend::seeding;
use renewal_trend::statistics::{run_test, CvmWeights, PValueMethod, TestKind, TestSpec};
use renewal_trend::study::{self, Scenario, StudyConfig};
use renewal_trend::trp_sim::{Bathtub, Trend, TrpModel};
use renewal_trend::{build_bridge, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "rtrend",
    version,
    about = "Trend tests for recurrent event data under a renewal-process null"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a trend test and report statistic and p-value.
    Test(TestArgs),
    /// Estimate mean, standard deviation and coefficient of variation of the gaps.
    Estimate(EstimateArgs),
    /// Simulate trend-renewal processes as long CSV.
    Simulate(SimulateArgs),
    /// Run a level or power study.
    Study(StudyArgs),
    /// Print the corners of the tied-down bridge path as CSV.
    PlotBridge(PlotBridgeArgs),
    /// Build Monte Carlo limit tables for the CvM and AD statistics.
    Tables(TablesArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Bundled dataset name (lhd) or path to a data file.
    #[arg(long)]
    data: String,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Censoring time for processes without a censoring row.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Sample,
    Censored,
    Diff,
    Weibull,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Sample => EstimatorKind::Sample,
            EstimatorArg::Censored => EstimatorKind::Censored,
            EstimatorArg::Diff => EstimatorKind::Diff,
            EstimatorArg::Weibull => EstimatorKind::Weibull,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SidedArg {
    Two,
    Greater,
    Less,
}

impl From<SidedArg> for Sidedness {
    fn from(s: SidedArg) -> Self {
        match s {
            SidedArg::Two => Sidedness::TwoSided,
            SidedArg::Greater => Sidedness::Greater,
            SidedArg::Less => Sidedness::Less,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PValueArg {
    Asymptotic,
    Permutation,
    Mc,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightsArg {
    /// Weights proportional to the censoring times.
    Tau,
    /// Weights proportional to gamma * tau * sqrt(N).
    GammaTauSqrtN,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TestArg {
    Lr,
    Ks,
    Cvm,
    Ad,
    Elr,
    Lrm,
    Elrm,
    Gl,
    Cvmm,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Test to run.
    #[arg(long, value_enum)]
    test: TestArg,
    /// Split point of the ELR tests, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    a: f64,
    #[arg(long, value_enum, default_value = "sample")]
    estimator: EstimatorArg,
    /// Known coefficient of variation; skips estimation.
    #[arg(long)]
    gamma: Option<f64>,
    /// Share one estimate across processes.
    #[arg(long)]
    pooled: bool,
    /// Alternative for signed statistics.
    #[arg(long, value_enum, default_value = "two")]
    sided: SidedArg,
    #[arg(long, value_enum, default_value = "asymptotic")]
    pvalue: PValueArg,
    /// Number of bridges for --pvalue mc.
    #[arg(long, default_value_t = 100_000)]
    mc_size: usize,
    /// Grid points per bridge for --pvalue mc.
    #[arg(long, default_value_t = 4096)]
    mc_grid: usize,
    /// Permutation replicates for --pvalue permutation.
    #[arg(short = 'B', long = "permutations", default_value_t = 999)]
    b: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Weights of the multi-process CvM test.
    #[arg(long, value_enum, default_value = "tau")]
    weights: WeightsArg,
    /// Emit the result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "sample")]
    estimator: EstimatorArg,
    /// Estimate from all processes jointly.
    #[arg(long)]
    pooled: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// powerlaw:b=<b> | bathtub:c=<c>,d=<d>,e=<e> | constant:d=<rate>
    #[arg(long)]
    trend: String,
    /// Weibull shape of the renewal distribution.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Censoring time.
    #[arg(long, conflicts_with = "expected_n")]
    tau: Option<f64>,
    /// Expected event count; sets tau from the cumulative trend.
    #[arg(long)]
    expected_n: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of independent processes.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// level | monotonic | bathtub | multi:<m>
    #[arg(long)]
    scenario: String,
    /// Grid such as "shape=0.75,1.5;n=10,30;b=0.8,1"; scenario defaults fill missing keys.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated tests; scenario defaults when omitted.
    #[arg(long)]
    tests: Option<String>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "sample")]
    estimator: EstimatorArg,
    /// Pool estimates across processes in multi-process scenarios.
    #[arg(long)]
    pooled: bool,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    max_seconds: Option<u64>,
    /// Output directory for results.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlotBridgeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Process to plot; required when the data hold several processes.
    #[arg(long)]
    process: Option<String>,
    /// Scale of the path; ignored when --estimator is given.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Estimate the scale from the data instead of using --gamma.
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
}

#[derive(Args, Debug)]
struct TablesArgs {
    #[arg(long, default_value_t = null_dist::SHIPPED_M)]
    m: usize,
    #[arg(long, default_value_t = null_dist::SHIPPED_GRID_N)]
    grid_n: usize,
    #[arg(long, default_value_t = null_dist::SHIPPED_SEED)]
    seed: u64,
    /// Directory receiving cvm.rplt and ad.rplt.
    #[arg(long)]
    out_dir: PathBuf,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

type CliResult = Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) => EXIT_USAGE,
        e if e.is_numeric() => EXIT_NUMERIC,
        Error::ResourceCap(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Study(a) => cmd_study(a),
        Command::PlotBridge(a) => cmd_plot_bridge(a),
        Command::Tables(a) => cmd_tables(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_data(args: &DataArgs) -> Result<MultiProcessData, Failure> {
    if let Some(d) = event_data::bundled(&args.data) {
        return Ok(d);
    }
    let path = Path::new(&args.data);
    let format = match args.format {
        Some(FormatArg::Json) => DataFormat::Json,
        Some(FormatArg::Csv) => DataFormat::LongCsv,
        None if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json")) =>
        {
            DataFormat::Json
        }
        None => DataFormat::LongCsv,
    };
    let text = std::fs::read_to_string(path)?;
    Ok(event_data::parse_events(&text, format, args.tau)?)
}

fn cmd_test(a: TestArgs) -> CliResult {
    let data = load_data(&a.data)?;
    let name = format!("{:?}", a.test).to_ascii_lowercase();
    let mut spec = TestSpec::new(TestKind::parse(&name, a.a)?);
    spec.estimator = a.estimator.into();
    spec.gamma = a.gamma;
    spec.pooled = a.pooled;
    spec.sided = a.sided.into();
    spec.cvm_weights = match a.weights {
        WeightsArg::Tau => CvmWeights::ProportionalTau,
        WeightsArg::GammaTauSqrtN => CvmWeights::GammaTauSqrtN,
    };
    spec.pvalue = match a.pvalue {
        PValueArg::Asymptotic => PValueMethod::Asymptotic,
        PValueArg::Permutation => PValueMethod::Permutation {
            b: a.b,
            seed: a.seed,
        },
        PValueArg::Mc => PValueMethod::MonteCarlo {
            m: a.mc_size,
            grid_n: a.mc_grid,
            seed: a.seed,
        },
    };
    let r = run_test(&data, &spec)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r).map_err(Error::from)?);
        return Ok(());
    }
    let mut out = String::new();
    let _ = writeln!(out, "test:       {}", r.test.label());
    if let TestKind::Elr { a } | TestKind::ElrMulti { a } = r.test {
        let _ = writeln!(out, "a:          {a}");
    }
    let _ = writeln!(out, "statistic:  {:.6}", r.statistic);
    let _ = writeln!(out, "p-value:    {:.6}", r.p_value);
    let _ = writeln!(out, "method:     {}", snake(&r.p_method));
    if let Some(s) = r.sidedness {
        let _ = writeln!(out, "sidedness:  {}", snake(&s));
    }
    if let Some(e) = r.estimator {
        let _ = writeln!(out, "estimator:  {}", snake(&e));
    }
    if let Some(g) = r.gamma {
        let _ = writeln!(out, "gamma:      {g:.6}");
    }
    let _ = writeln!(out, "events:     {}", r.n_effective);
    for w in &r.warnings {
        let _ = writeln!(out, "warning:    {w}");
    }
    print!("{out}");
    Ok(())
}

fn snake<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn cmd_estimate(a: EstimateArgs) -> CliResult {
    let data = load_data(&a.data)?;
    let kind: EstimatorKind = a.estimator.into();
    let rows: Vec<(String, estimators::Estimates)> = if a.pooled {
        vec![("pooled".into(), estimators::pooled_estimates(&data, kind)?)]
    } else {
        data.processes()
            .iter()
            .map(|p| Ok((p.id.clone(), estimators::estimate(&p.series, kind)?)))
            .collect::<Result<_, Error>>()?
    };
    if a.json {
        let v: Vec<serde_json::Value> = rows
            .iter()
            .map(|(id, e)| serde_json::json!({ "process_id": id, "estimates": e }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
    } else {
        println!("process_id,mu,sigma,gamma,method");
        for (id, e) in rows {
            println!(
                "{id},{:.6},{:.6},{:.6},{}",
                e.mu,
                e.sigma,
                e.gamma,
                snake(&e.method)
            );
        }
    }
    Ok(())
}

fn parse_trend(spec: &str) -> Result<Trend, Failure> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut params = std::collections::HashMap::new();
    for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("trend parameter '{part}' lacks '='")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("trend parameter '{part}' is not a number")))?;
        params.insert(k.trim().to_string(), v);
    }
    let get = |k: &str| {
        params
            .get(k)
            .copied()
            .ok_or_else(|| Failure::Usage(format!("trend '{kind}' needs {k}=<value>")))
    };
    match kind {
        "powerlaw" => Ok(Trend::power_law(get("b")?)?),
        "constant" => Ok(Trend::constant(get("d")?)?),
        "bathtub" => {
            let (c, d, e) = (get("c")?, get("d")?, get("e")?);
            let tau = params.get("tau").copied().unwrap_or(3.0 * e);
            Ok(Trend::Bathtub(Bathtub::new(c, d, e, tau)?))
        }
        other => Err(Failure::Usage(format!("unknown trend '{other}'"))),
    }
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let trend = parse_trend(&a.trend)?;
    let tau = match (a.tau, a.expected_n, &trend) {
        (Some(t), _, _) => t,
        (None, Some(n), _) => trend.tau_for_expected(n),
        (None, None, Trend::Bathtub(b)) => b.tau,
        (None, None, _) => return Err(Failure::Usage("give --tau or --expected-n".into())),
    };
    if a.reps == 0 {
        return Err(Failure::Usage("--reps must be at least 1".into()));
    }
    let model = TrpModel::new(trend, a.beta)?;
    let processes = (0..a.reps as u64)
        .map(|i| {
            let mut rng = seeding::stream(a.seed, i);
            Ok(Process {
                id: format!("p{i}"),
                series: model.sample(tau, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let csv = event_data::to_long_csv(&MultiProcessData::new(processes)?);
    match a.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_study(a: StudyArgs) -> CliResult {
    let scenario = Scenario::parse(&a.scenario)?;
    let mut cfg = StudyConfig::new(scenario, a.reps, a.seed);
    if let Some(g) = &a.grid {
        cfg.grid = study::parse_grid(scenario, g)?;
    }
    if let Some(t) = &a.tests {
        cfg.tests = t
            .split(',')
            .map(|name| TestKind::parse(name.trim(), 0.5))
            .collect::<Result<_, Error>>()?;
    }
    cfg.alpha = a.alpha;
    cfg.estimator = a.estimator.into();
    cfg.pooled = a.pooled;
    cfg.time_budget = a.max_seconds.map(Duration::from_secs);
    let start = Instant::now();
    let result = study::run_study(&cfg)?;
    study::emit_results(&result, &a.out)?;
    eprintln!(
        "{} rows written to {} in {:.1}s{}",
        result.rows.len(),
        a.out.display(),
        start.elapsed().as_secs_f64(),
        if result.is_complete() {
            ""
        } else {
            " (time budget exhausted; partial)"
        }
    );
    Ok(())
}

fn pick_series<'a>(
    data: &'a MultiProcessData,
    id: Option<&str>,
) -> Result<&'a EventSeries, Failure> {
    match id {
        Some(id) => data
            .get(id)
            .ok_or_else(|| Failure::Core(Error::InvalidData(format!("no process '{id}'")))),
        None if data.len() == 1 => Ok(&data.processes()[0].series),
        None => Err(Failure::Usage(
            "data hold several processes; choose one with --process".into(),
        )),
    }
}

fn cmd_plot_bridge(a: PlotBridgeArgs) -> CliResult {
    let data = load_data(&a.data)?;
    let series = pick_series(&data, a.process.as_deref())?;
    let gamma = match a.estimator {
        Some(k) => estimators::estimate(series, k.into())?.gamma,
        None => a.gamma,
    };
    let path = build_bridge(series, gamma)?;
    let mut out = String::from("s,v\n");
    for (s, v) in path.corners() {
        let _ = writeln!(out, "{s},{v}");
    }
    print!("{out}");
    Ok(())
}

fn cmd_tables(a: TablesArgs) -> CliResult {
    std::fs::create_dir_all(&a.out_dir)?;
    let start = Instant::now();
    let tables = LimitTable::build_many(&[LimitKind::CvM, LimitKind::AD], a.m, a.grid_n, a.seed)?;
    for t in &tables {
        let path = a.out_dir.join(format!("{}.rplt", t.kind.name()));
        let file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        t.write_to(file)?;
        eprintln!("wrote {} (mean {:.6})", path.display(), t.mean());
    }
    eprintln!("built in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
