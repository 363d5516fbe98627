use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use treeons_bench::config::{preset_len, preset_rates};
use treeons_bench::output::version_stamp;
use treeons_bench::regret::regret_check;
use treeons_bench::runner::run_experiment_with;
use treeons_bench::sweep::{ordering_applies, sweep, write_sweep_csv, GridPoint};
use treeons_bench::timing::{timing_profile, write_profile_csv, ProfileCase, ProfileSettings};
use treeons_bench::{
    Algorithm, BenchError, DataSource, ExperimentConfig, Rates, RegretOracleConfig, Result, ScaleMode,
    SyntheticSource,
};
use treeons_core::{GeneratorKind, GeneratorSpec};

#[derive(Parser)]
#[command(name = "treeons", version = env!("CARGO_PKG_VERSION"), about = "Online piecewise-linear regression benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream one data set through one model.
    #[command(allow_negative_numbers = true)]
    Run(RunArgs),
    /// Write a synthetic data set as CSV.
    #[command(allow_negative_numbers = true)]
    Generate(GenerateArgs),
    /// Grid of learning rates for several algorithms.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// Cumulative regret against the best fixed comparator in hindsight.
    #[command(allow_negative_numbers = true)]
    Regret(RegretArgs),
    /// Median per-step update time across model sizes.
    Profile(ProfileArgs),
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    separators: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eta_combiner: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    separator_epsilon: Option<f64>,
    #[arg(long)]
    freeze_separators: bool,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    skip_budget: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// CSV file, last column is the target.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// matched, mismatched, gauss_map, lorenz or fig1.
    #[arg(long)]
    synthetic: Option<GeneratorKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Noise variance of the synthetic target.
    #[arg(long)]
    noise: Option<f64>,
    /// minmax, online_minmax or none.
    #[arg(long)]
    scale: Option<ScaleMode>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated iterations at which boundaries and checkpoints are recorded.
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<usize>,
    #[arg(long)]
    metrics_every: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML generator spec; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    synthetic: Option<GeneratorKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise: Option<f64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Algorithms to compare.
    #[arg(long, value_delimiter = ',', default_value = "linear,sp,fmp,ensemble")]
    algos: Vec<Algorithm>,
    /// Learning rates, shared by all parameter groups of a run.
    #[arg(long, value_delimiter = ',', default_value = "0.005,0.01,0.02,0.05,0.1,0.2,0.5,1")]
    rates: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10,100,1000")]
    epsilons: Vec<f64>,
    /// Directory for sweep.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RegretArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Bound A on the distance to the comparator.
    #[arg(long, default_value_t = 1.0)]
    diameter: f64,
    /// Exp-concavity constant of the loss.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Ridge of the comparator fit; the model epsilon when omitted.
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long, value_delimiter = ',', default_value = "linear,sp,fmp,ensemble")]
    algos: Vec<Algorithm>,
    /// Depths (tree models) or separator counts (sp).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    sizes: Vec<usize>,
    /// Raw feature dimensions.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    m: Vec<usize>,
    #[arg(long, default_value_t = 4096)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_text(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
}

fn resolve_rates(a: &ModelArgs, algorithm: Algorithm, data: &DataSource, current: Option<Rates>) -> Result<Rates> {
    let preset = match data {
        DataSource::Synthetic(s) => preset_rates(s.kind, algorithm),
        DataSource::Csv { .. } => None,
    };
    let mut rates = match (current.or(preset), a.beta) {
        (Some(r), _) => r,
        (None, Some(beta)) => Rates::uniform(beta, a.epsilon.unwrap_or(1.0)),
        (None, None) => {
            return Err(BenchError::Config(
                "no preset rates for this data; pass --beta (and --eta for partitioned models)".into(),
            ))
        }
    };
    if let Some(v) = a.beta {
        rates.beta = v;
    }
    if let Some(v) = a.eta {
        rates.eta = v;
    }
    if let Some(v) = a.eta_combiner {
        rates.eta_combiner = v;
    }
    if let Some(v) = a.epsilon {
        rates.epsilon = v;
    }
    if a.separator_epsilon.is_some() {
        rates.separator_epsilon = a.separator_epsilon;
    }
    Ok(rates)
}

/// Config file first, then scenario preset, then explicit flags.
fn build_config(a: &ModelArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => Some(ExperimentConfig::from_toml(&read_text(path)?)?),
        None => None,
    };
    let d = &a.data;
    let data = match (&d.data, d.synthetic, &cfg) {
        (Some(path), _, _) => DataSource::Csv { path: path.clone() },
        (None, Some(kind), _) => DataSource::Synthetic(SyntheticSource::new(kind)),
        (None, None, Some(c)) => c.data.clone(),
        (None, None, None) => return Err(BenchError::Config("one of --data or --synthetic is required".into())),
    };
    let algorithm = a
        .algo
        .or(cfg.as_ref().map(|c| c.algorithm))
        .ok_or_else(|| BenchError::Config("--algo is required".into()))?;
    let keep_rates = cfg
        .as_ref()
        .filter(|c| c.algorithm == algorithm && c.data == data)
        .map(|c| c.rates);
    let rates = resolve_rates(a, algorithm, &data, keep_rates)?;
    let c = match cfg.take() {
        Some(mut c) => {
            c.algorithm = algorithm;
            c.data = data;
            c.rates = rates;
            c
        }
        None => {
            let mut c = match &data {
                DataSource::Synthetic(s) if preset_rates(s.kind, algorithm).is_some() => {
                    ExperimentConfig::preset(s.kind, algorithm)?
                }
                _ => {
                    let mut c = ExperimentConfig::preset(GeneratorKind::Matched, algorithm)?;
                    c.scale = treeons_bench::config::default_scale(&data);
                    c.n = match &data {
                        DataSource::Synthetic(s) => Some(preset_len(s.kind)),
                        DataSource::Csv { .. } => None,
                    };
                    c
                }
            };
            c.data = data;
            c.rates = rates;
            c
        }
    };
    let mut c = c;
    if let Some(v) = a.depth {
        c.depth = Some(v);
    }
    if let Some(v) = a.separators {
        c.separators = Some(v);
    }
    c.depth = c.depth.or(matches!(algorithm, Algorithm::Fmp | Algorithm::Ensemble).then_some(2));
    c.separators = c.separators.or((algorithm == Algorithm::Sp).then_some(2));
    c.freeze_separators |= a.freeze_separators;
    if let DataSource::Synthetic(s) = &mut c.data {
        if d.noise.is_some() {
            s.noise_variance = d.noise;
        }
    }
    if let Some(v) = d.n {
        c.n = Some(v);
    }
    if let Some(v) = d.seed {
        c.seed = v;
    }
    if let Some(v) = d.scale {
        c.scale = v;
    }
    if let Some(v) = a.skip_budget {
        c.skip_budget = v;
    }
    c.validate()?;
    Ok(c)
}

fn write_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut cfg = build_config(&a.model)?;
    if a.out.is_some() {
        cfg.out = a.out;
    }
    if !a.snapshots.is_empty() {
        cfg.snapshots = a.snapshots;
    }
    if let Some(v) = a.metrics_every {
        cfg.metrics_every = v;
    }
    cfg.validate()?;
    let r = run_experiment_with(&cfg, None)?;
    write_json(&treeons_bench::output::summary(&cfg, &r))
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(path) => toml::from_str::<GeneratorSpec>(&read_text(path)?).map_err(|e| BenchError::Config(e.to_string()))?,
        None => {
            let kind = a
                .synthetic
                .ok_or_else(|| BenchError::Config("--synthetic or --config is required".into()))?;
            GeneratorSpec::new(kind, preset_len(kind), 0)
        }
    };
    if let Some(kind) = a.synthetic {
        spec.kind = kind;
    }
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if a.noise.is_some() {
        spec.noise_variance = a.noise;
    }
    let samples = spec.generate()?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(io::BufWriter::new(sink));
    let m = spec.kind.feature_dim();
    let header: Vec<String> = (1..=m).map(|i| format!("x{i}")).chain(["y".to_string()]).collect();
    let csv_err = |e: csv::Error| BenchError::Io(io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    for s in &samples {
        let row: Vec<String> = s.x.iter().chain([&s.y]).map(|v| v.to_string()).collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    // Algorithm and rates are overridden per grid point; any valid placeholder works.
    let mut model = a.model.clone();
    model.algo = model.algo.or(a.algos.first().copied());
    model.beta = model.beta.or(a.rates.first().copied());
    let base = build_config(&model)?;
    let grid: Vec<GridPoint> = a
        .rates
        .iter()
        .flat_map(|&rate| a.epsilons.iter().map(move |&epsilon| GridPoint { rate, epsilon }))
        .collect();
    if grid.is_empty() || a.algos.is_empty() {
        return Err(BenchError::Config("empty sweep grid".into()));
    }
    let report = sweep(&base, &a.algos, &grid)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        let mut f = io::BufWriter::new(fs::File::create(dir.join("sweep.csv"))?);
        write_sweep_csv(&mut f, &report.rows)?;
        f.flush()?;
    }
    let ordering = report.ordering.as_ref().filter(|_| ordering_applies(&base));
    write_json(&serde_json::json!({
        "version": version_stamp(),
        "best": report.best,
        "ordering": ordering,
    }))
}

fn cmd_regret(a: RegretArgs) -> Result<()> {
    let mut cfg = build_config(&a.model)?;
    cfg.freeze_separators = true;
    cfg.out = a.out;
    let ridge = a.ridge.unwrap_or(cfg.rates.epsilon);
    let r = run_experiment_with(&cfg, Some(ridge))?;
    let m = &r.output.metrics;
    let (Some(curve), Some(g), Some(dim)) = (&m.cum_regret, m.max_grad_norm, m.comparator_dim) else {
        return Err(BenchError::Numeric("regret curve was not recorded".into()));
    };
    let theory = RegretOracleConfig {
        diameter: a.diameter,
        grad_bound: g.max(f64::MIN_POSITIVE),
        alpha: a.alpha,
    };
    theory.validate()?;
    let report = regret_check(curve, &theory, dim);
    write_json(&serde_json::json!({
        "version": version_stamp(),
        "theory": theory,
        "comparator_dim": dim,
        "report": report,
    }))
}

fn cmd_profile(a: ProfileArgs) -> Result<()> {
    let mut cases = Vec::new();
    for &m in &a.m {
        for &algorithm in &a.algos {
            let sizes: &[usize] = if algorithm == Algorithm::Linear { &[0] } else { &a.sizes };
            cases.extend(sizes.iter().map(|&size| ProfileCase { algorithm, size, m }));
        }
    }
    let settings = ProfileSettings {
        steps: a.steps,
        seed: a.seed,
        ..ProfileSettings::default()
    };
    let rows = timing_profile(&cases, &settings)?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = io::BufWriter::new(sink);
    write_profile_csv(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Regret(a) => cmd_regret(a),
        Command::Profile(a) => cmd_profile(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
