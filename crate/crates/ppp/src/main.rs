//! `ppp`: simulate point patterns, build training sets, train and apply the
//! estimation network, and run the classical baselines and envelope tests.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ppp::cache::FactorCache;
use ppp::config::RunConfig;
use ppp::dataset::TrainingSet;
use ppp::io::{parse_floats, read_pattern, write_pattern, WindowArg};
use ppp::model_file::TrainedModel;
use ppp::pipeline::{
    coverage_check, evaluate_on_test, generate_training_data, size_study, train_model,
    validate_fit_parallel,
};
use ppp::rng::{substream, TEST_STREAMS, TRAIN_STREAMS};
use ppp_core::baselines::{
    linspace, minimum_contrast_lgcp, profile_mple_strauss, MinContrastOptions, DEFAULT_PROFILE_LEN,
    DEFAULT_PROFILE_RANGE,
};
use ppp_core::envelopes::EnvelopeResult;
use ppp_core::simulate::{simulate_traced, ModelKind, SimulationSettings};
use ppp_core::sumstats::{default_grid_for, estimate, r_grid, SummaryKind};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ppp", version, about = "Neural-network parameter estimation for spatial point processes")]
struct Cli {
    /// Worker threads for parallel jobs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one pattern from a model.
    Simulate(SimulateArgs),
    /// Estimate a summary function (K, L, F, G or J) of a pattern.
    Summarize(SummarizeArgs),
    /// Simulate a training set and optionally a test set.
    MakeData(MakeDataArgs),
    /// Train a network on a training set.
    Train(TrainArgs),
    /// Score a trained network on a test set.
    Evaluate(EvaluateArgs),
    /// Estimate parameters of an observed pattern.
    Estimate(EstimateArgs),
    /// Minimum contrast (LGCP) or profile pseudo-likelihood (Strauss).
    Baseline(BaselineArgs),
    /// Global envelope test of a model against a pattern.
    Envelope(EnvelopeArgs),
    /// Test error as a function of training-set size.
    SizeStudy(SizeStudyArgs),
    /// Check that a pattern is well represented in a training set.
    CoverageCheck(CoverageArgs),
}

#[derive(Args)]
struct SimArgs {
    /// Field grid cells per side for LGCP-type models.
    #[arg(long)]
    resolution: Option<usize>,
    /// Birth-death iterations for Gibbs models (overrides both defaults).
    #[arg(long)]
    iters: Option<usize>,
}

impl SimArgs {
    fn settings(&self) -> SimulationSettings {
        let mut s = SimulationSettings::default();
        if let Some(r) = self.resolution {
            s.resolution = r;
        }
        if let Some(n) = self.iters {
            s.strauss_iterations = n;
            s.lgcp_strauss_iterations = n;
        }
        s
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// lgcp, strauss, lgcp-strauss or poisson.
    #[arg(long)]
    model: String,
    /// Comma-separated parameters in model order (`ppp simulate --help`
    /// lists: lgcp mu,sigma2,s; strauss beta,gamma,R;
    /// lgcp-strauss mu,sigma2,s,gamma,R; poisson intensity).
    #[arg(long, allow_hyphen_values = true)]
    params: String,
    #[arg(long, default_value = "0,1,0,1")]
    window: WindowArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    out: PathBuf,
    /// Write the chain trace of Gibbs models as CSV `iter,n,s_r`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Trace every this many iterations.
    #[arg(long, default_value_t = 100)]
    thin: usize,
}

#[derive(Args)]
struct PatternArgs {
    /// Point pattern CSV with header `x,y`.
    pattern: PathBuf,
    /// Window `xmin,xmax,ymin,ymax`; default: the sidecar `<pattern>.window.json`.
    #[arg(long)]
    window: Option<WindowArg>,
}

impl PatternArgs {
    fn read(&self) -> Result<ppp_core::PointPattern> {
        Ok(read_pattern(&self.pattern, self.window.map(|w| w.0))?)
    }
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long, default_value = "L")]
    stat: String,
    #[command(flatten)]
    input: PatternArgs,
    /// Largest distance; default depends on the statistic.
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long, default_value_t = 513)]
    grid_len: usize,
    /// Output CSV `r,value,valid`; default stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MakeDataArgs {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in study: lgcp, strauss, lgcp-strauss or oak.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    window: Option<WindowArg>,
    /// Parameter range `name=lo,hi`; repeatable.
    #[arg(long = "range", allow_hyphen_values = true)]
    ranges: Vec<String>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_len: Option<usize>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    strauss_iters: Option<usize>,
    #[arg(long)]
    lgcp_strauss_iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    test_out: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

impl MakeDataArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => {
                let model = self
                    .model
                    .as_deref()
                    .ok_or_else(|| anyhow!("give --config, --preset or --model"))?;
                RunConfig::preset(model)?
            }
        };
        if let Some(m) = &self.model {
            if *m != cfg.model {
                cfg.model = m.clone();
                cfg.ranges.clear();
            }
        }
        if let Some(w) = self.window {
            cfg.window = [w.0.x_min(), w.0.x_max(), w.0.y_min(), w.0.y_max()];
        }
        for r in &self.ranges {
            let (name, vals) = r
                .split_once('=')
                .ok_or_else(|| anyhow!("range {r:?} is not name=lo,hi"))?;
            let v = parse_floats(vals).map_err(|e| anyhow!(e))?;
            if v.len() != 2 {
                bail!("range {r:?} needs two numbers");
            }
            cfg.ranges.insert(name.trim().to_string(), [v[0], v[1]]);
        }
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(self.n_train, cfg.n_train);
        set!(self.n_test, cfg.n_test);
        set!(self.seed, cfg.seed);
        set!(self.grid_len, cfg.grid.len);
        set!(self.resolution, cfg.simulation.resolution);
        set!(self.strauss_iters, cfg.simulation.strauss_iterations);
        set!(self.lgcp_strauss_iters, cfg.simulation.lgcp_strauss_iterations);
        set!(self.out.clone(), cfg.output.train);
        set!(self.test_out.clone(), cfg.output.test);
        if self.r_max.is_some() {
            cfg.grid.r_max = self.r_max;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "model.ppnn")]
    out: PathBuf,
    /// Per-epoch CSV `epoch,train_mse,test_mse`.
    #[arg(long, default_value = "history.csv")]
    history: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Per-row CSV `row,<name>,<name>_hat,...`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: PatternArgs,
    /// Training set to run the coverage check against.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    /// mincontrast (LGCP) or mple (Strauss).
    #[arg(long)]
    method: String,
    #[command(flatten)]
    input: PatternArgs,
    /// Profile grid for the Strauss radius `lo,hi,steps`.
    #[arg(long)]
    radii: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnvelopeArgs {
    #[arg(long, default_value = "J")]
    stat: String,
    #[arg(long, default_value_t = 2499)]
    nsim: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    model: String,
    #[arg(long, allow_hyphen_values = true)]
    params: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    input: PatternArgs,
    /// CSV `r,lower,central,upper,data`.
    #[arg(long, default_value = "envelope.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SizeStudyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "500,1000,2000,4000")]
    sizes: String,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV `n_train,mse,<name>_mse...`; default stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    input: PatternArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// CSV `r,lower,central,upper,data` of the training-curve envelope.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::MakeData(a) => make_data_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Baseline(a) => baseline_cmd(a),
        Command::Envelope(a) => envelope_cmd(a),
        Command::SizeStudy(a) => size_study_cmd(a),
        Command::CoverageCheck(a) => coverage_cmd(a),
    }
}

fn parse_model(model: &str, params: &str) -> Result<ppp_core::simulate::Model> {
    let kind = ModelKind::parse(model).ok_or_else(|| anyhow!("unknown model {model:?}"))?;
    let theta = parse_floats(params).map_err(|e| anyhow!(e))?;
    kind.with_theta(&theta).with_context(|| {
        format!("{kind} takes parameters {}", kind.parameter_names().join(","))
    })
}

/// CSV to a file, or to stdout when `path` is `None`.
fn emit(path: Option<&Path>, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    match path {
        Some(p) => ppp::io::write_table(p, header, rows)?,
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            w.write_record(header)?;
            for r in rows {
                w.write_record(&r)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn envelope_rows(e: &EnvelopeResult) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..e.r.len()).map(move |i| {
        vec![
            e.r[i].to_string(),
            e.lower[i].to_string(),
            e.central[i].to_string(),
            e.upper[i].to_string(),
            e.data[i].to_string(),
        ]
    })
}

const ENVELOPE_HEADER: [&str; 5] = ["r", "lower", "central", "upper", "data"];

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let model = parse_model(&a.model, &a.params)?;
    let mut rng = substream(a.seed, 0);
    let thin = if a.trace.is_some() { a.thin.max(1) } else { 0 };
    let (x, trace) = simulate_traced(&model, &a.window.0, &a.sim.settings(), &ppp_core::simulate::Uncached, thin, &mut rng)?;
    write_pattern(&a.out, &x)?;
    log::info!("{} points written to {}", x.n(), a.out.display());
    if let Some(path) = a.trace {
        let t = trace.ok_or_else(|| anyhow!("{} has no Markov chain to trace", a.model))?;
        let rows = (0..t.len()).map(|i| {
            vec![
                t.iteration[i].to_string(),
                t.count[i].to_string(),
                t.close_pairs[i].to_string(),
            ]
        });
        ppp::io::write_table(&path, &["iter", "n", "s_r"], rows)?;
    }
    Ok(())
}

fn summarize_cmd(a: SummarizeArgs) -> Result<()> {
    let kind = SummaryKind::parse(&a.stat).ok_or_else(|| anyhow!("unknown statistic {:?}", a.stat))?;
    let x = a.input.read()?;
    let r = match a.r_max {
        Some(rm) => r_grid(rm, a.grid_len),
        None => {
            let d = default_grid_for(kind, &x);
            r_grid(*d.last().unwrap(), a.grid_len)
        }
    };
    let c = estimate(kind, &x, &r)?;
    let rows = (0..c.len()).map(|i| {
        vec![
            c.r[i].to_string(),
            c.values[i].to_string(),
            u8::from(c.is_valid(i)).to_string(),
        ]
    });
    emit(a.out.as_deref(), &["r", "value", "valid"], rows)
}

fn make_data_cmd(a: MakeDataArgs) -> Result<()> {
    let cfg = a.resolve()?;
    if a.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let cache = FactorCache::default();
    let train = generate_training_data(&cfg, cfg.n_train, TRAIN_STREAMS, &cache)?;
    train.save(&cfg.output.train)?;
    log::info!("{} training rows written to {}", train.len(), cfg.output.train.display());
    if cfg.n_test > 0 {
        let test = generate_training_data(&cfg, cfg.n_test, TEST_STREAMS, &cache)?;
        test.save(&cfg.output.test)?;
        log::info!("{} test rows written to {}", test.len(), cfg.output.test.display());
    }
    Ok(())
}

fn history_rows(h: &ppp_core::nn::History) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..h.epochs()).map(|e| {
        vec![
            (e + 1).to_string(),
            h.train_mse[e].to_string(),
            h.test_mse[e].map(|v| v.to_string()).unwrap_or_default(),
        ]
    })
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data = TrainingSet::load(&a.data)?;
    let test = a.test.as_deref().map(TrainingSet::load).transpose()?;
    let opts = ppp::config::TrainingConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
    };
    let (model, history) = train_model(&data, test.as_ref(), &opts)?;
    model.save(&a.out)?;
    ppp::io::write_table(&a.history, &["epoch", "train_mse", "test_mse"], history_rows(&history))?;
    log::info!("model written to {}", a.out.display());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let test = TrainingSet::load(&a.test)?;
    let e = evaluate_on_test(&model, &test)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "parameter,rmse,bias,correlation,standardized_mse")?;
    for (j, name) in e.parameter_names.iter().enumerate() {
        writeln!(
            out,
            "{name},{},{},{},{}",
            e.rmse[j], e.bias[j], e.correlation[j], e.standardized_mse[j]
        )?;
    }
    writeln!(out, "overall,,,,{}", e.overall_mse)?;
    if let Some(path) = a.out {
        let k = e.parameter_names.len();
        let mut header = vec!["row".to_string()];
        for n in &e.parameter_names {
            header.push(n.clone());
            header.push(format!("{n}_hat"));
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = (0..e.rows()).map(|i| {
            let mut r = vec![i.to_string()];
            for j in 0..k {
                r.push(e.truth[i * k + j].to_string());
                r.push(e.predicted[i * k + j].to_string());
            }
            r
        });
        ppp::io::write_table(&path, &header, rows)?;
    }
    Ok(())
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let x = a.input.read()?;
    let est = model.estimate(&x)?;
    let mut record = serde_json::Map::new();
    record.insert("model".into(), json!(model.header.model));
    record.insert("n".into(), json!(est.count));
    for (name, v) in model.header.parameter_names.iter().zip(&est.theta) {
        record.insert(name.clone(), json!(v));
    }
    if let Some(path) = a.data {
        let data = TrainingSet::load(&path)?;
        let c = coverage_check(&data, &x, 0.05)?;
        if !c.curve_inside() {
            log::warn!("the observed L curve leaves the 95% envelope of the training curves");
        }
        record.insert(
            "coverage".into(),
            json!({"count_quantile": c.count_quantile, "curve_inside": c.curve_inside(), "p_value": c.envelope.p_value}),
        );
    }
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}

fn baseline_cmd(a: BaselineArgs) -> Result<()> {
    let x = a.input.read()?;
    let record = match a.method.as_str() {
        "mincontrast" => {
            let f = minimum_contrast_lgcp(&x, &MinContrastOptions::default())?;
            json!({"method": "mincontrast", "mu": f.mu, "sigma2": f.sigma2, "s": f.s,
                   "contrast": f.contrast, "evaluations": f.evals, "converged": f.converged})
        }
        "mple" => {
            let grid = match &a.radii {
                Some(s) => {
                    let v = parse_floats(s).map_err(|e| anyhow!(e))?;
                    if v.len() != 3 {
                        bail!("--radii takes lo,hi,steps");
                    }
                    linspace(v[0], v[1], v[2] as usize)
                }
                None => linspace(DEFAULT_PROFILE_RANGE.0, DEFAULT_PROFILE_RANGE.1, DEFAULT_PROFILE_LEN),
            };
            let f = profile_mple_strauss(&x, &grid)?;
            json!({"method": "mple", "beta": f.beta, "gamma": f.gamma, "R": f.radius})
        }
        other => bail!("unknown method {other:?} (mincontrast or mple)"),
    };
    let text = serde_json::to_string_pretty(&record)?;
    match a.out {
        Some(p) => std::fs::write(&p, text).with_context(|| p.display().to_string())?,
        None => println!("{text}"),
    }
    Ok(())
}

fn envelope_cmd(a: EnvelopeArgs) -> Result<()> {
    let kind = SummaryKind::parse(&a.stat).ok_or_else(|| anyhow!("unknown statistic {:?}", a.stat))?;
    let model = parse_model(&a.model, &a.params)?;
    let x = a.input.read()?;
    let cache = FactorCache::default();
    let e = validate_fit_parallel(&x, &model, a.nsim, kind, a.alpha, &a.sim.settings(), &cache, a.seed)?;
    ppp::io::write_table(&a.out, &ENVELOPE_HEADER, envelope_rows(&e))?;
    println!("p-value {} ({} simulations)", e.p_value, e.n_sim);
    println!("{}", if e.rejects() { "rejected" } else { "not rejected" });
    Ok(())
}

fn size_study_cmd(a: SizeStudyArgs) -> Result<()> {
    let data = TrainingSet::load(&a.data)?;
    let test = TrainingSet::load(&a.test)?;
    let sizes = parse_floats(&a.sizes)
        .map_err(|e| anyhow!(e))?
        .into_iter()
        .map(|v| v as usize)
        .collect::<Vec<_>>();
    let opts = ppp::config::TrainingConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
    };
    let results = size_study(&data, &test, &sizes, &opts)?;
    let mut header = vec!["n_train".to_string(), "mse".to_string()];
    header.extend(data.meta.parameter_names.iter().map(|n| format!("{n}_mse")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = results.iter().map(|r| {
        let mut row = vec![r.n_train.to_string(), r.evaluation.overall_mse.to_string()];
        row.extend(r.evaluation.standardized_mse.iter().map(|v| v.to_string()));
        row
    });
    emit(a.out.as_deref(), &header, rows)
}

fn coverage_cmd(a: CoverageArgs) -> Result<()> {
    let data = TrainingSet::load(&a.data)?;
    let x = a.input.read()?;
    let c = coverage_check(&data, &x, a.alpha)?;
    println!(
        "count {} (quantile {:.4} of training counts, range {}..{})",
        c.count, c.count_quantile, c.count_range[0], c.count_range[1]
    );
    println!(
        "L curve {} the {:.0}% envelope of {} training curves (p-value {})",
        if c.curve_inside() { "inside" } else { "outside" },
        100.0 * (1.0 - a.alpha),
        c.envelope.n_sim,
        c.envelope.p_value
    );
    if let Some(path) = a.out {
        ppp::io::write_table(&path, &ENVELOPE_HEADER, envelope_rows(&c.envelope))?;
    }
    Ok(())
}
