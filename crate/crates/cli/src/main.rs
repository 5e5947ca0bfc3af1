use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use inferbench_core::api::{self, ApiConfig};
use inferbench_core::bench::{bench_run, parse_samples, BenchError, BenchPlan};
use inferbench_core::client::EndpointConfig;
use inferbench_core::dataset::{
    featurize, ingest, keys, parse_raw_records, snapshot, validate, DatasetStore, FromRunError,
    RunDescriptor,
};
use inferbench_core::predictor::{
    rank, Constraints, CostBook, MemoryBook, PredictError, PredictionQuery, Predictor, RankReport,
    DEFAULT_OVERHEAD_FACTOR,
};
use inferbench_core::scenario::LatencyPreset;
use inferbench_core::sim::{self, SimProfile};
use inferbench_core::{ScenarioConfig, ScenarioKind};

/// Environment variable holding the bearer token for the inference endpoint.
const API_KEY_ENV: &str = "INFERBENCH_API_KEY";

const EXIT_INVALID: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "inferbench",
    version,
    about = "LLM inference benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a benchmark against an inference endpoint
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Manage the result dataset
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Rank accelerators by predicted tokens per dollar
    Predict(PredictArgs),
    /// Serve the dataset and predictor over HTTP
    Serve(ServeArgs),
    /// Run the simulated inference server
    Sim(SimArgs),
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    Run(Box<BenchRunArgs>),
}

#[derive(Debug, Args)]
struct BenchRunArgs {
    #[arg(long, default_value = "offline")]
    scenario: ScenarioKind,
    /// Arrival rate for the server scenario
    #[arg(long)]
    target_qps: Option<f64>,
    #[arg(long, default_value = "http://127.0.0.1:8000")]
    endpoint: String,
    #[arg(long, default_value = "default")]
    model: String,
    /// Prompts: one per line, plain text or {"prompt", "id", "max_tokens"}
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = 128)]
    max_output_tokens: u32,
    #[arg(long, default_value_t = 100)]
    min_query_count: usize,
    /// Seconds
    #[arg(long, default_value_t = 10.0)]
    min_duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Milliseconds, p99
    #[arg(long)]
    ttft_limit: Option<f64>,
    /// Milliseconds, mean
    #[arg(long)]
    tpot_limit: Option<f64>,
    /// Latency limits preset, e.g. datacenter-llm
    #[arg(long)]
    preset: Option<LatencyPreset>,
    #[arg(long, default_value_t = 64)]
    max_concurrency: usize,
    /// Per-request timeout in seconds
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Disable streaming; TTFT then equals latency
    #[arg(long)]
    no_stream: bool,
    /// Reference outputs (JSONL id/reference or id<TAB>text) for ROUGE
    #[arg(long)]
    references: Option<PathBuf>,
    /// Record store to append the result to
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// JSON object of extra record fields (system.*, model.*, submission.*)
    #[arg(long)]
    system: Option<PathBuf>,
    /// Overrides the probed framework identity
    #[arg(long)]
    framework: Option<String>,
    #[arg(long)]
    params_b: Option<f64>,
    #[arg(long)]
    dtype: Option<String>,
    #[arg(long)]
    accelerator: Option<String>,
    #[arg(long)]
    vendor: Option<String>,
    #[arg(long)]
    accelerator_count: Option<u64>,
    #[arg(long)]
    division: Option<String>,
    #[arg(long)]
    organization: Option<String>,
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Clean raw result files and append them to the store
    Ingest {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        store: PathBuf,
    },
    /// Report invariant violations per record
    Validate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print the feature vector of every record as JSON lines
    Featurize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Write the store as a single snapshot document
    Export {
        #[arg(long)]
        store: PathBuf,
        /// Defaults to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    store: PathBuf,
    /// JSON object: accelerator key -> cost per hour
    #[arg(long)]
    costs: PathBuf,
    /// JSON object: accelerator key -> memory GB
    #[arg(long)]
    memory_book: Option<PathBuf>,
    #[arg(long)]
    params_b: f64,
    #[arg(long, default_value = "bf16")]
    dtype: String,
    #[arg(long, default_value = "offline")]
    scenario: ScenarioKind,
    /// Tokens/s across the whole deployment
    #[arg(long)]
    min_throughput: Option<f64>,
    /// Milliseconds, p99
    #[arg(long)]
    max_ttft: Option<f64>,
    #[arg(long)]
    must_fit_memory: bool,
    /// Comma-separated accelerator keys
    #[arg(long, value_delimiter = ',')]
    accelerators: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_OVERHEAD_FACTOR)]
    overhead_factor: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long)]
    memory_book: Option<PathBuf>,
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8000)]
    port: u16,
    #[arg(long, default_value_t = 50.0)]
    prefill_base_ms: f64,
    #[arg(long, default_value_t = 0.0)]
    prefill_per_token_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    decode_per_token_ms: f64,
    #[arg(long, default_value_t = 4)]
    max_concurrency: usize,
    #[arg(long, default_value_t = 0.0)]
    jitter_pct: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
    fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_IO, message)
    }
    fn invalid(message: impl Into<String>) -> Self {
        Self::new(EXIT_INVALID, message)
    }
}

type CliResult = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(EXIT_IO);
        }
    };
    let result = runtime.block_on(async {
        match cli.command {
            Command::Bench(BenchCommand::Run(args)) => bench(*args).await,
            Command::Dataset(cmd) => dataset(cmd),
            Command::Predict(args) => predict(args),
            Command::Serve(args) => serve(args).await,
            Command::Sim(args) => run_sim(args).await,
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn scenario_config(args: &BenchRunArgs) -> Result<ScenarioConfig, Failure> {
    let mut config = match args.scenario {
        ScenarioKind::Offline => ScenarioConfig::offline(),
        ScenarioKind::Server => {
            let qps = args
                .target_qps
                .ok_or_else(|| Failure::usage("--scenario server requires --target-qps"))?;
            ScenarioConfig::server(qps)
        }
    };
    if let Some(p) = args.preset {
        config = config.with_preset(p);
    }
    if args.ttft_limit.is_some() {
        config.ttft_limit_ms = args.ttft_limit;
    }
    if args.tpot_limit.is_some() {
        config.tpot_limit_ms = args.tpot_limit;
    }
    if !(args.min_duration >= 0.0 && args.min_duration.is_finite()) {
        return Err(Failure::usage("--min-duration must be >= 0"));
    }
    config.min_query_count = args.min_query_count;
    config.min_duration = Duration::from_secs_f64(args.min_duration);
    config.max_concurrency = args.max_concurrency;
    config.rng_seed = args.seed;
    config
        .validate()
        .map_err(|e| Failure::usage(e.to_string()))?;
    Ok(config)
}

fn descriptor(args: &BenchRunArgs) -> Result<RunDescriptor, Failure> {
    let mut d = RunDescriptor::new(args.framework.clone().unwrap_or_default());
    if let Some(path) = &args.system {
        let v: Value = serde_json::from_str(&read_text(path)?)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let Value::Object(map) = v else {
            return Err(Failure::usage(format!(
                "{}: expected a JSON object",
                path.display()
            )));
        };
        for (k, v) in map {
            d = d.with(&k, v);
        }
    }
    d = d.with(keys::MODEL_NAME, args.model.clone());
    let optional: [(&str, Option<Value>); 7] = [
        (keys::MODEL_PARAMS, args.params_b.map(Value::from)),
        (keys::MODEL_DTYPE, args.dtype.clone().map(Value::from)),
        (keys::ACCEL_NAME, args.accelerator.clone().map(Value::from)),
        (keys::ACCEL_VENDOR, args.vendor.clone().map(Value::from)),
        (keys::ACCEL_TOTAL, args.accelerator_count.map(Value::from)),
        (keys::DIVISION, args.division.clone().map(Value::from)),
        (
            keys::ORGANIZATION,
            args.organization.clone().map(Value::from),
        ),
    ];
    for (k, v) in optional {
        if let Some(v) = v {
            d = d.with(k, v);
        }
    }
    Ok(d)
}

async fn bench(args: BenchRunArgs) -> CliResult {
    let config = scenario_config(&args)?;
    if !(args.timeout > 0.0 && args.timeout.is_finite()) {
        return Err(Failure::usage("--timeout must be > 0"));
    }
    let mut endpoint = EndpointConfig::new(args.endpoint.clone(), args.model.clone());
    endpoint.request_timeout = Duration::from_secs_f64(args.timeout);
    endpoint.stream = !args.no_stream;
    endpoint.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
    endpoint
        .validate()
        .map_err(|e| Failure::usage(e.to_string()))?;

    let samples = parse_samples(&read_text(&args.samples)?, args.max_output_tokens)
        .map_err(|e| Failure::usage(e.to_string()))?;
    if samples.is_empty() {
        return Err(Failure::usage(format!(
            "{}: no samples",
            args.samples.display()
        )));
    }
    let references = match &args.references {
        Some(p) => Some(
            inferbench_core::accuracy::parse_references(&read_text(p)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };

    let plan = BenchPlan {
        config,
        endpoint,
        samples,
        references,
        descriptor: descriptor(&args)?,
        out_dir: Some(args.out_dir.clone()),
        store_path: args.store.clone(),
    };
    let outcome = bench_run(plan).await.map_err(|e| match e {
        e if e.is_io_or_transport() => Failure::io(e.to_string()),
        BenchError::Summary(e) => Failure::invalid(e.to_string()),
        e => Failure::usage(e.to_string()),
    })?;

    let s = &outcome.summary;
    println!("framework:        {}", outcome.framework);
    println!("scenario:         {}", s.scenario);
    println!(
        "completed/failed: {}/{}",
        s.completed_queries, s.failed_queries
    );
    println!("wall time:        {:.3} s", s.wall_time_s);
    println!(
        "throughput:       {:.2} Tokens/s",
        s.throughput_tokens_per_s
    );
    println!("achieved qps:     {:.3}", s.achieved_qps);
    println!(
        "ttft p50/p90/p99: {:.1} / {:.1} / {:.1} ms",
        s.ttft_p50_ms, s.ttft_p90_ms, s.ttft_p99_ms
    );
    println!(
        "latency p50/p90/p99: {:.1} / {:.1} / {:.1} ms",
        s.latency_p50_ms, s.latency_p90_ms, s.latency_p99_ms
    );
    if let Some(a) = &outcome.accuracy {
        println!("accuracy:         {}", a.to_metric_text());
    }
    println!("results in {}", args.out_dir.display());
    match &outcome.record {
        Ok(_) => {
            println!("result: VALID");
            Ok(())
        }
        Err(FromRunError::InvalidRun(reasons)) => {
            println!("result: INVALID ({})", reasons.join(", "));
            Err(Failure::invalid(format!(
                "run invalid: {}",
                reasons.join(", ")
            )))
        }
        Err(e) => Err(Failure::invalid(e.to_string())),
    }
}

/// Raw values from every input file, in order.
fn read_raw(inputs: &[PathBuf]) -> Result<Vec<(String, Value)>, Failure> {
    let mut out = Vec::new();
    for path in inputs {
        let text = read_text(path)?;
        let raw = parse_raw_records(&text)
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
        for (i, v) in raw.into_iter().enumerate() {
            out.push((format!("{}#{}", path.display(), i + 1), v));
        }
    }
    Ok(out)
}

fn dataset(cmd: DatasetCommand) -> CliResult {
    match cmd {
        DatasetCommand::Ingest { inputs, store } => {
            let raw = read_raw(&inputs)?;
            let mut db = DatasetStore::open(&store).map_err(|e| Failure::io(e.to_string()))?;
            let mut errors = 0usize;
            let mut added = 0usize;
            for (at, v) in &raw {
                match ingest(v) {
                    Ok(r) => {
                        db.append(r).map_err(|e| Failure::io(e.to_string()))?;
                        added += 1;
                    }
                    Err(e) => {
                        errors += 1;
                        eprintln!("{at}: {e}");
                    }
                }
            }
            println!("ingested {added} records, {errors} errors");
            if errors > 0 {
                return Err(Failure::invalid(format!("{errors} records rejected")));
            }
            Ok(())
        }
        DatasetCommand::Validate { inputs } => {
            let raw = read_raw(&inputs)?;
            let mut bad = 0usize;
            for (at, v) in &raw {
                let problems: Vec<String> = match ingest(v) {
                    Ok(r) => validate(&r)
                        .into_iter()
                        .map(|v| format!("{}: {}", v.key, v.message))
                        .collect(),
                    Err(e) => vec![e.to_string()],
                };
                if problems.is_empty() {
                    println!("{at}: ok");
                } else {
                    bad += 1;
                    for p in problems {
                        println!("{at}: {p}");
                    }
                }
            }
            println!("{} records, {bad} with violations", raw.len());
            if bad > 0 {
                return Err(Failure::invalid(format!("{bad} records failed validation")));
            }
            Ok(())
        }
        DatasetCommand::Featurize { inputs } => {
            for (at, v) in read_raw(&inputs)? {
                let line = match ingest(&v)
                    .map_err(|e| e.to_string())
                    .and_then(|r| featurize(&r).map_err(|e| e.to_string()))
                {
                    Ok(f) => serde_json::to_string(&f).expect("features serialize"),
                    Err(e) => serde_json::json!({ "source": at, "error": e }).to_string(),
                };
                println!("{line}");
            }
            Ok(())
        }
        DatasetCommand::Export { store, out } => {
            if !store.exists() {
                return Err(Failure::io(format!("{}: no such file", store.display())));
            }
            let db = DatasetStore::open(&store).map_err(|e| Failure::io(e.to_string()))?;
            let text = serde_json::to_string_pretty(&snapshot(db.records())).expect("json") + "\n";
            write_text(out.as_deref(), &text)
        }
    }
}

fn load_book<T>(
    path: Option<&Path>,
    parse: impl Fn(&str) -> Result<T, inferbench_core::predictor::BookError>,
) -> Result<Option<T>, Failure> {
    match path {
        Some(p) => parse(&read_text(p)?)
            .map(Some)
            .map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => Ok(None),
    }
}

fn print_report(report: &RankReport) {
    println!(
        "{:<4} {:<32} {:>12} {:>8} {:>10} {:>14} {:<16} violations",
        "rank", "accelerator", "tok/s/accel", "n_accel", "$/hour", "tokens/$", "method"
    );
    for (i, c) in report.ranked.iter().enumerate() {
        let method = format!("{:?}{}", c.method, if c.extrapolated { "*" } else { "" });
        println!(
            "{:<4} {:<32} {:>12.2} {:>8} {:>10.3} {:>14.0} {:<16} {}",
            i + 1,
            c.accelerator_key,
            c.predicted_per_accel_throughput,
            c.accelerators_needed,
            c.cost_per_hour,
            c.tokens_per_dollar,
            method,
            if c.feasible {
                "-".to_string()
            } else {
                c.violations.join(",")
            }
        );
    }
    for u in &report.unranked {
        println!("---- {:<32} unranked: {}", u.accelerator_key, u.reason);
    }
}

fn predict(args: PredictArgs) -> CliResult {
    if !args.store.exists() {
        return Err(Failure::io(format!(
            "{}: no such file",
            args.store.display()
        )));
    }
    let costs = load_book(Some(&args.costs), CostBook::from_json)?.unwrap_or_default();
    let memory = load_book(args.memory_book.as_deref(), MemoryBook::from_json)?.unwrap_or_default();
    let db = DatasetStore::open(&args.store).map_err(|e| Failure::io(e.to_string()))?;
    let predictor = Predictor::fit(db.records()).map_err(|e| Failure::invalid(e.to_string()))?;
    let query = PredictionQuery {
        params_b: args.params_b,
        weight_data_type: args.dtype,
        scenario: args.scenario,
        constraints: Constraints {
            min_throughput: args.min_throughput,
            max_ttft: args.max_ttft,
            must_fit_memory: args.must_fit_memory,
        },
        accelerators: args.accelerators,
    };
    let report =
        rank(&predictor, &query, &costs, &memory, args.overhead_factor).map_err(|e| match e {
            PredictError::InvalidQuery(_) => Failure::usage(e.to_string()),
            e => Failure::invalid(e.to_string()),
        })?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        print_report(&report);
    }
    Ok(())
}

async fn serve(args: ServeArgs) -> CliResult {
    let mut config = ApiConfig::new(args.store);
    if let Some(c) = load_book(args.costs.as_deref(), CostBook::from_json)? {
        config.costs = c;
    }
    if let Some(m) = load_book(args.memory_book.as_deref(), MemoryBook::from_json)? {
        config.memory = m;
    }
    config.ui_dir = args.ui_dir;
    let handle = api::serve(config, SocketAddr::new(args.host, args.port))
        .await
        .map_err(|e| Failure::io(e.to_string()))?;
    println!("listening on {}", handle.base_url());
    wait_for_ctrl_c().await;
    handle.shutdown().await;
    Ok(())
}

async fn run_sim(args: SimArgs) -> CliResult {
    let profile = SimProfile {
        prefill_base_ms: args.prefill_base_ms,
        prefill_per_token_ms: args.prefill_per_token_ms,
        decode_per_token_ms: args.decode_per_token_ms,
        max_concurrency: args.max_concurrency,
        jitter_pct: args.jitter_pct,
        seed: args.seed,
    };
    let handle = sim::serve(profile, SocketAddr::new(args.host, args.port))
        .await
        .map_err(|e| match e {
            sim::SimError::InvalidProfile(_) => Failure::usage(e.to_string()),
            e => Failure::io(e.to_string()),
        })?;
    let report = handle.capability_report();
    println!("{} listening on {}", report.identity, handle.base_url());
    println!(
        "{}",
        serde_json::to_string(&report.profile).expect("profile serializes")
    );
    wait_for_ctrl_c().await;
    handle.shutdown().await;
    Ok(())
}

async fn wait_for_ctrl_c() {
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
}
