//! Command-line front end: corpus statistics, exchange planning, paired
//! sync simulation, toy training runs and traffic sweeps.

pub mod manifest;
pub mod simulate;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use uniqsync::cluster::Scheduler;
use uniqsync::corpus::{build_vocabulary, encode, log_checkpoints, type_token_curve, PowerLawFit, TokenMode, TypeTokenCurve};
use uniqsync::embed_sync::{complexity_plan, SyncPath};
use uniqsync::precision::Compression;
use uniqsync::sampling::{plan_seeds, SeedPolicy};
use uniqsync::trainer::{train, CorpusSource, TrainerConfig};
use uniqsync::{seed, Error, Result};

use manifest::RunWriter;
use simulate::SimulateConfig;

#[derive(Debug, Parser)]
#[command(name = "uniqsync", version, about = "Embedding-gradient exchange simulator and toolkit")]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Rendering of the summary printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Vocabulary, type/token curve and power-law fit of a text file.
    Stats(StatsArgs),
    /// Power-law fit of an `n,u` curve CSV.
    Fit(FitArgs),
    /// Closed-form memory and traffic of both exchange paths.
    Plan(PlanArgs),
    /// Synchronize synthetic Zipf batches through both paths and count bytes.
    Simulate(SimulateArgs),
    /// Train the toy model from a key=value config file.
    Train(TrainArgs),
    /// Traffic of both paths over a sweep of worker counts.
    Bench(BenchArgs),
}

fn parse_with<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_with::<TokenMode>, default_value = "word")]
    pub mode: TokenMode,
    /// Vocabulary cap including the unknown entry; unlimited when omitted.
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub per_decade: u32,
    /// Explicit comma-separated checkpoints instead of log spacing.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with header `n,u`.
    pub curve: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, default_value_t = 256)]
    pub g: u64,
    #[arg(long, default_value_t = 19200)]
    pub k: u64,
    #[arg(long, default_value_t = 1792)]
    pub d: u64,
    #[arg(long, default_value_t = 0.64)]
    pub alpha: f64,
    #[arg(long, default_value_t = 4)]
    pub element_bytes: u64,
    #[arg(long, default_value_t = 4)]
    pub index_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathChoice {
    Both,
    Baseline,
    Unique,
}

impl PathChoice {
    fn paths(self) -> Vec<SyncPath> {
        match self {
            PathChoice::Both => vec![SyncPath::Baseline, SyncPath::Unique],
            PathChoice::Baseline => vec![SyncPath::Baseline],
            PathChoice::Unique => vec![SyncPath::Unique],
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 16)]
    pub g: usize,
    #[arg(long, default_value_t = 512)]
    pub k: usize,
    #[arg(long, default_value_t = 512)]
    pub d: usize,
    #[arg(long, default_value_t = 100_000)]
    pub vocab: usize,
    #[arg(long, default_value_t = 1.0)]
    pub zipf_s: f64,
    #[arg(long, value_enum, default_value_t = PathChoice::Both)]
    pub path: PathChoice,
    #[arg(long, value_parser = parse_with::<Compression>, default_value = "off")]
    pub compress: Compression,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long)]
    pub integer_grads: bool,
    #[arg(long, value_parser = parse_with::<Scheduler>, default_value = "sequential")]
    pub scheduler: Scheduler,
}

impl SimulateArgs {
    fn config(&self) -> SimulateConfig {
        SimulateConfig {
            g: self.g,
            k: self.k,
            d: self.d,
            vocab: self.vocab,
            zipf_s: self.zipf_s,
            paths: self.path.paths(),
            compress: self.compress,
            steps: self.steps,
            lr: self.lr,
            integer_grads: self.integer_grads,
            scheduler: self.scheduler,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` file; relative corpus paths resolve against it.
    pub config: PathBuf,
    /// Overrides `seed_policy`: distinct, same, log2, loge, log10 or power:<alpha>.
    #[arg(long, value_parser = parse_with::<SeedPolicy>)]
    pub seed_policy: Option<SeedPolicy>,
    /// Overrides `compression`.
    #[arg(long, value_parser = parse_with::<Compression>)]
    pub compress: Option<Compression>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub g_list: Vec<u64>,
    #[arg(long, default_value_t = 256)]
    pub k: usize,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value_t = 100_000)]
    pub vocab: usize,
    #[arg(long, default_value_t = 1.0)]
    pub zipf_s: f64,
    #[arg(long, value_parser = parse_with::<Compression>, default_value = "off")]
    pub compress: Compression,
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 3,
        Error::Protocol(_) | Error::Consistency(_) | Error::Accounting(_) | Error::Alignment(_) => 4,
        _ => 2,
    }
}

/// Runs one command, writes its files and returns what goes to stdout.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Stats(a) => cmd_stats(cli, a),
        Command::Fit(a) => cmd_fit(cli, a),
        Command::Plan(a) => cmd_plan(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn fit_json(fit: &PowerLawFit) -> Value {
    json!({ "alpha": fit.alpha, "coeff": fit.coeff, "r_squared": fit.r_squared })
}

pub fn cmd_stats(cli: &Cli, a: &StatsArgs) -> Result<String> {
    let config = json!({
        "corpus": a.corpus.display().to_string(),
        "mode": a.mode.to_string(),
        "max_vocab": a.max_vocab,
        "per_decade": a.per_decade,
        "checkpoints": a.checkpoints,
    });
    let mut out = RunWriter::new(&cli.out_dir, "stats", cli.seed, config)?;
    let text = out.read_input(&a.corpus)?;
    let vocab = build_vocabulary(&text, a.mode, a.max_vocab.unwrap_or(usize::MAX))?;
    let stream = encode(&text, &vocab)?;
    let n = stream.len() as u64;
    let checkpoints = a.checkpoints.clone().unwrap_or_else(|| log_checkpoints(n, a.per_decade));
    let curve = type_token_curve(&stream, &checkpoints)?;
    let fit = PowerLawFit::from_curve(&curve)?;
    let summary = json!({
        "tokens": n,
        "types": curve.points.last().map_or(0, |p| p.1),
        "vocab_size": vocab.len(),
        "coverage": vocab.coverage(),
        "source_bytes": stream.source_bytes,
        "fit": fit_json(&fit),
    });
    out.write("vocab.tsv", &vocab.to_tsv())?;
    out.write("curve.csv", &curve.to_csv())?;
    out.write_json("fit.json", &fit_json(&fit))?;
    out.write_json("stats.json", &summary)?;
    out.finish()?;
    Ok(match cli.format {
        Format::Json => pretty(&summary),
        Format::Csv => curve.to_csv(),
    })
}

fn read_curve(text: &str) -> Result<TypeTokenCurve> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
            continue;
        }
        let bad = || Error::Fit(format!("curve line {}: expected `n,u`", i + 1));
        let (n, u) = line.split_once(',').ok_or_else(bad)?;
        let n = n.trim().parse().map_err(|_| bad())?;
        let u = u.trim().parse().map_err(|_| bad())?;
        points.push((n, u));
    }
    Ok(TypeTokenCurve { points })
}

pub fn cmd_fit(cli: &Cli, a: &FitArgs) -> Result<String> {
    let config = json!({ "curve": a.curve.display().to_string() });
    let mut out = RunWriter::new(&cli.out_dir, "fit", cli.seed, config)?;
    let bytes = out.read_input(&a.curve)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Decode { offset: e.utf8_error().valid_up_to() })?;
    let fit = PowerLawFit::from_curve(&read_curve(&text)?)?;
    out.write_json("fit.json", &fit_json(&fit))?;
    out.finish()?;
    Ok(match cli.format {
        Format::Json => pretty(&fit_json(&fit)),
        Format::Csv => format!("alpha,coeff,r_squared\n{},{},{}\n", fit.alpha, fit.coeff, fit.r_squared),
    })
}

pub fn cmd_plan(cli: &Cli, a: &PlanArgs) -> Result<String> {
    let plan = complexity_plan(a.g, a.k, a.d, a.alpha, a.element_bytes, a.index_bytes)?;
    let config = json!({
        "g": a.g, "k": a.k, "d": a.d, "alpha": a.alpha,
        "element_bytes": a.element_bytes, "index_bytes": a.index_bytes,
    });
    let mut out = RunWriter::new(&cli.out_dir, "plan", cli.seed, config)?;
    out.write_json("plan.json", &plan)?;
    out.write("plan.txt", &plan.to_table())?;
    out.finish()?;
    eprint!("{}", plan.to_table());
    Ok(match cli.format {
        Format::Json => pretty(&serde_json::to_value(plan).expect("plan serializes")),
        Format::Csv => {
            let v = serde_json::to_value(plan).expect("plan serializes");
            let mut s = String::from("field,value\n");
            for (k, v) in v.as_object().expect("plan is an object") {
                s.push_str(&format!("{k},{v}\n"));
            }
            s
        }
    })
}

fn totals_csv(report: &simulate::SimulateReport) -> String {
    let mut s = String::from("path,index_sent,gradient_sent,gradient_peak,total_sent\n");
    for (path, t) in &report.totals {
        s.push_str(&format!(
            "{path},{},{},{},{}\n",
            t.index_sent, t.gradient_sent, t.gradient_peak, t.total_sent
        ));
    }
    s
}

pub fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<String> {
    let cfg = a.config();
    let master = seed::derive(cli.seed, "simulate");
    let config = serde_json::to_value(&cfg).expect("config serializes");
    let mut out = RunWriter::new(&cli.out_dir, "simulate", cli.seed, config)?;
    let sim = simulate::run(&cfg, master)?;
    out.write_json("simulate.json", &sim.report)?;
    out.write("trace.jsonl", &sim.trace_jsonl)?;
    out.write("totals.csv", &totals_csv(&sim.report))?;
    out.finish()?;
    Ok(match cli.format {
        Format::Json => pretty(&json!({
            "totals": sim.report.totals,
            "gradient_ratio": sim.report.gradient_ratio,
            "peak_ratio": sim.report.peak_ratio,
            "u_g": sim.report.steps.iter().map(|s| s.u_g).collect::<Vec<_>>(),
        })),
        Format::Csv => totals_csv(&sim.report),
    })
}

fn resolve_corpus(cfg: &mut TrainerConfig, config_path: &Path) {
    if let CorpusSource::File(p) = &cfg.corpus {
        if p.is_relative() {
            if let Some(dir) = config_path.parent() {
                cfg.corpus = CorpusSource::File(dir.join(p));
            }
        }
    }
}

pub fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<String> {
    let text = std::fs::read(&a.config).map_err(|e| Error::io(&a.config, e))?;
    let text = String::from_utf8(text).map_err(|e| Error::Decode { offset: e.utf8_error().valid_up_to() })?;
    let mut cfg = TrainerConfig::parse_kv(&text)?;
    if let Some(p) = a.seed_policy {
        cfg.seed_policy = p;
    }
    if let Some(c) = a.compress {
        cfg.compression = c;
    }
    cfg.validate()?;
    let master = cfg.resolve_seed(cli.seed);
    let mut echo = serde_json::Map::new();
    for (k, v) in cfg.to_pairs() {
        echo.insert(k.into(), Value::String(v));
    }
    echo.insert("resolved_master_seed".into(), json!(master));
    let mut out = RunWriter::new(&cli.out_dir, "train", cli.seed, Value::Object(echo))?;
    out.read_input(&a.config)?;
    resolve_corpus(&mut cfg, &a.config);
    if let CorpusSource::File(p) = &cfg.corpus {
        out.read_input(p)?;
    }
    let corpus = cfg.load_corpus(master)?;
    let outcome = train(&cfg, &corpus, master)?;
    out.write_json("seeds.json", &plan_seeds(cfg.g, cfg.seed_policy, master)?)?;
    out.write("metrics.csv", &outcome.metrics_csv())?;
    out.write_json("report.json", &outcome.report)?;
    out.finish()?;
    Ok(match cli.format {
        Format::Json => pretty(&json!({
            "epochs": outcome.report.epochs,
            "traffic": outcome.report.traffic,
            "warnings": outcome.report.warnings,
        })),
        Format::Csv => outcome.metrics_csv(),
    })
}

pub fn cmd_bench(cli: &Cli, a: &BenchArgs) -> Result<String> {
    let config = json!({
        "g_list": a.g_list, "k": a.k, "d": a.d, "vocab": a.vocab,
        "zipf_s": a.zipf_s, "compress": a.compress.to_string(),
    });
    let mut out = RunWriter::new(&cli.out_dir, "bench", cli.seed, config)?;
    let master = seed::derive(cli.seed, "bench");
    let mut csv = String::from("g,k,tokens,u_g,path,index_sent,gradient_sent,gradient_peak,total_sent\n");
    for &g in &a.g_list {
        let cfg = SimulateConfig {
            g: g as usize,
            k: a.k,
            d: a.d,
            vocab: a.vocab,
            zipf_s: a.zipf_s,
            paths: PathChoice::Both.paths(),
            compress: a.compress,
            steps: 1,
            lr: 0.5,
            integer_grads: false,
            scheduler: Scheduler::Sequential,
        };
        let started = std::time::Instant::now();
        let sim = simulate::run(&cfg, seed::derive_indexed(master, "g", g))?;
        eprintln!("g={g}: {:.2}s", started.elapsed().as_secs_f64());
        let u_g = sim.report.steps[0].u_g;
        for (path, t) in &sim.report.totals {
            csv.push_str(&format!(
                "{g},{},{},{u_g},{path},{},{},{},{}\n",
                a.k,
                g as usize * a.k,
                t.index_sent,
                t.gradient_sent,
                t.gradient_peak,
                t.total_sent
            ));
        }
    }
    out.write("bench.csv", &csv)?;
    out.finish()?;
    Ok(match cli.format {
        Format::Json => {
            let rows: Vec<Value> = csv
                .lines()
                .skip(1)
                .map(|l| {
                    let f: Vec<&str> = l.split(',').collect();
                    json!({
                        "g": f[0].parse::<u64>().unwrap_or(0),
                        "u_g": f[3].parse::<u64>().unwrap_or(0),
                        "path": f[4],
                        "gradient_sent": f[6].parse::<u64>().unwrap_or(0),
                        "total_sent": f[8].parse::<u64>().unwrap_or(0),
                    })
                })
                .collect();
            pretty(&Value::Array(rows))
        }
        Format::Csv => csv,
    })
}
