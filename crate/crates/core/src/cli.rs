//! The `lda-trio` command line: `train`, `eval` and `benchmark`.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 1 for
//! failures during training or evaluation.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{load_bow, load_vocabulary, split_held_out, Corpus, Vocabulary};
use crate::error::Error;
use crate::eval::{held_out_perplexity_with, EvalResult, PerplexityMonitor};
use crate::gibbs::{self, GibbsConfig};
use crate::math::Rng;
use crate::model_file::{top_words, ModelKind, TopicModel};
use crate::online_vb::{self, OnlineConfig};
use crate::report::{Algorithm, TrainReport};
use crate::vb::{self, EStepConfig, VbConfig};

/// Environment variable capping concurrent E-step workers.
pub const THREADS_ENV: &str = "LDA_TRIO_THREADS";

/// Exact header of the benchmark CSV.
pub const BENCHMARK_HEADER: [&str; 6] = [
    "algorithm",
    "documents",
    "wall_seconds",
    "perplexity",
    "convergence_stat",
    "error",
];

#[derive(Debug, Parser)]
#[command(name = "lda-trio", version, about = "Topic models by collapsed Gibbs sampling, batch VB and online VB")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write model, top-words and report files.
    Train(TrainArgs),
    /// Held-out perplexity bound of a trained model.
    Eval(EvalArgs),
    /// Train and evaluate every algorithm over a grid of training-set sizes.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    /// Number of topics K
    #[arg(long, default_value_t = 100)]
    pub topics: usize,
    /// Symmetric Dirichlet prior on document mixtures
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Symmetric Dirichlet prior on topics
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct EStepArgs {
    /// E-step stops when the mean relative change of gamma is below this
    #[arg(long = "e-tol", default_value_t = 0.001)]
    pub e_tol: f64,
    /// E-step iteration cap
    #[arg(long = "e-max-iter", default_value_t = 100)]
    pub e_max_iter: usize,
}

impl EStepArgs {
    fn config(&self) -> EStepConfig {
        EStepConfig {
            tol: self.e_tol,
            max_iter: self.e_max_iter,
            random_init: false,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainerArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub e_step: EStepArgs,
    /// Batch VB stops when the relative ELBO improvement is below this
    #[arg(long = "elbo-tol", default_value_t = 0.001)]
    pub elbo_tol: f64,
    /// Batch VB outer-iteration cap
    #[arg(long = "max-iter", default_value_t = 100)]
    pub max_iter: usize,
    /// Gibbs stops when fewer than this fraction of assignments change in a sweep
    #[arg(long = "z-threshold", default_value_t = 0.20)]
    pub z_threshold: f64,
    /// Gibbs sweep cap
    #[arg(long = "max-sweeps", default_value_t = 1000)]
    pub max_sweeps: usize,
    /// Online VB documents per update
    #[arg(long = "batch-size", default_value_t = 100)]
    pub batch_size: usize,
    /// Online VB delay tau0 of the step-size schedule
    #[arg(long, default_value_t = 1024.0)]
    pub tau0: f64,
    /// Online VB forgetting rate kappa, in (0.5, 1]
    #[arg(long, default_value_t = 0.7)]
    pub kappa: f64,
    /// Online VB total stream size M [default: number of training documents]
    #[arg(long = "corpus-size")]
    pub corpus_size: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// One of gibbs, vb, online-vb
    #[arg(long)]
    pub algorithm: String,
    /// Training corpus, `docId termId count` lines
    #[arg(long)]
    pub bow: PathBuf,
    /// Vocabulary, one term per line
    #[arg(long)]
    pub vocab: PathBuf,
    /// Held-out corpus for perplexity checkpoints
    #[arg(long = "held-out")]
    pub held_out: Option<PathBuf>,
    /// Evaluate held-out perplexity every N sweeps/iterations (documents for online-vb); 0 disables
    #[arg(long = "checkpoint-every", default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Words per topic in topics.json
    #[arg(long = "top-words", default_value_t = 20)]
    pub top_words: usize,
    /// Output directory
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub trainer: TrainerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Model file written by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Held-out corpus
    #[arg(long = "held-out")]
    pub held_out: PathBuf,
    /// Vocabulary [default: placeholder terms sized by the model]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Expected number of topics; must match the model when given
    #[arg(long)]
    pub topics: Option<usize>,
    /// Symmetric Dirichlet prior on document mixtures
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[command(flatten)]
    pub e_step: EStepArgs,
    /// Output directory for eval.json
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    /// Comma-separated algorithms
    #[arg(long, default_value = "gibbs,vb,online-vb")]
    pub algorithm: String,
    /// Pool of training documents; a cell of size N trains on the first N
    #[arg(long)]
    pub bow: PathBuf,
    /// Vocabulary, one term per line
    #[arg(long)]
    pub vocab: PathBuf,
    /// Held-out corpus [default: 100 documents split off the pool by seed]
    #[arg(long = "held-out")]
    pub held_out: Option<PathBuf>,
    /// Comma-separated training-set sizes
    #[arg(long, default_value = "1000,2000,3000,4000,5000,6000,7000,8000")]
    pub grid: String,
    /// Output directory for benchmark.csv
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Run independent cells concurrently
    #[arg(long = "parallel-cells")]
    pub parallel_cells: bool,
    #[command(flatten)]
    pub trainer: TrainerArgs,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Input problems are configuration errors; everything else is a runtime failure.
fn classify(e: Error) -> CliError {
    match e {
        Error::Argument(_) | Error::Ingestion { .. } | Error::Io { .. } | Error::Format(_) => {
            CliError::Config(e.to_string())
        }
        _ => CliError::Runtime(e.to_string()),
    }
}

fn runtime(e: Error) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = threads_from_env();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a, threads),
        Command::Eval(a) => cmd_eval(a, threads),
        Command::Benchmark(a) => cmd_benchmark(a, threads),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Config(m) => eprintln!("error: {m}"),
                CliError::Runtime(m) => eprintln!("runtime failure: {m}"),
            }
            e.exit_code()
        }
    }
}

fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(1)
}

/// Fully resolved settings for one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub gibbs: GibbsConfig,
    pub vb: VbConfig,
    pub online: OnlineConfig,
}

impl RunConfig {
    pub fn from_args(algorithm: Algorithm, args: &TrainerArgs, threads: usize) -> Self {
        let h = &args.hyper;
        let e_step = args.e_step.config();
        RunConfig {
            algorithm,
            gibbs: GibbsConfig {
                topics: h.topics,
                alpha: h.alpha,
                beta: h.beta,
                max_sweeps: args.max_sweeps,
                z_change_threshold: args.z_threshold,
                seed: h.seed,
            },
            vb: VbConfig {
                topics: h.topics,
                alpha: h.alpha,
                beta: h.beta,
                e_step,
                elbo_rel_tol: args.elbo_tol,
                max_iterations: args.max_iter,
                seed: h.seed,
                threads,
                ..VbConfig::default()
            },
            online: OnlineConfig {
                topics: h.topics,
                alpha: h.alpha,
                beta: h.beta,
                batch_size: args.batch_size,
                tau0: args.tau0,
                kappa: args.kappa,
                corpus_size: args.corpus_size,
                e_step,
                seed: h.seed,
                threads,
                rho_override: None,
            },
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        match self.algorithm {
            Algorithm::Gibbs => self.gibbs.validate(),
            Algorithm::Vb => self.vb.validate(),
            Algorithm::OnlineVb => self.online.validate(),
        }
    }

    fn alpha(&self) -> f64 {
        self.vb.alpha
    }

    fn e_step(&self) -> EStepConfig {
        self.vb.e_step
    }
}

/// Result of one training run in a form the CLI can persist.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: TopicModel,
    pub report: TrainReport,
}

/// Runs the configured trainer on `corpus`.
pub fn train_model(
    corpus: &Corpus,
    config: &RunConfig,
    monitor: Option<&PerplexityMonitor<'_>>,
) -> crate::Result<TrainedModel> {
    config.validate()?;
    Ok(match config.algorithm {
        Algorithm::Gibbs => {
            let m = gibbs::train_monitored(corpus, &config.gibbs, monitor)?;
            TrainedModel {
                model: TopicModel {
                    kind: ModelKind::Phi,
                    matrix: m.phi,
                },
                report: m.report,
            }
        }
        Algorithm::Vb => {
            let m = vb::train_monitored(corpus, &config.vb, monitor)?;
            TrainedModel {
                model: TopicModel {
                    kind: ModelKind::Lambda,
                    matrix: m.topics.into_matrix(),
                },
                report: m.report,
            }
        }
        Algorithm::OnlineVb => {
            let m = online_vb::train_monitored(corpus, &config.online, monitor)?;
            TrainedModel {
                model: TopicModel {
                    kind: ModelKind::Lambda,
                    matrix: m.topics.into_matrix(),
                },
                report: m.report,
            }
        }
    })
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("file not found: {}", path.display())))
    }
}

fn load_corpus(bow: &Path, vocab: &Vocabulary) -> Result<Corpus, CliError> {
    require_file(bow)?;
    load_bow(bow, vocab).map_err(classify)
}

fn load_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    require_file(path)?;
    load_vocabulary(path).map_err(classify)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_train(args: &TrainArgs, threads: usize) -> Result<(), CliError> {
    let algorithm: Algorithm = args.algorithm.parse().map_err(classify)?;
    let config = RunConfig::from_args(algorithm, &args.trainer, threads);
    config.validate().map_err(classify)?;
    let vocab = load_vocab(&args.vocab)?;
    let corpus = load_corpus(&args.bow, &vocab)?;
    let held = match &args.held_out {
        Some(p) => Some(load_corpus(p, &vocab)?),
        None => None,
    };
    if args.checkpoint_every > 0 && held.is_none() {
        return Err(CliError::Config("--checkpoint-every needs --held-out".into()));
    }
    ensure_dir(&args.out)?;

    let monitor = held.as_ref().map(|h| PerplexityMonitor {
        held: h,
        every: args.checkpoint_every,
        alpha: config.alpha(),
        e_step: config.e_step(),
        threads,
    });
    let trained = train_model(&corpus, &config, monitor.as_ref()).map_err(runtime)?;

    let model_path = args.out.join(format!("model.{}.tsv", trained.model.kind));
    trained.model.save(&model_path).map_err(runtime)?;
    let words = top_words(&trained.model, &vocab, args.top_words).map_err(runtime)?;
    let json = serde_json::to_string_pretty(&words).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&args.out.join("topics.json"), json + "\n")?;
    let mut csv = Vec::new();
    trained.report.write_csv(&mut csv).map_err(runtime)?;
    write_file(&args.out.join("report.csv"), csv)?;

    println!(
        "{} trained on {} documents in {:.3}s ({} records), model written to {}",
        algorithm,
        corpus.len(),
        trained.report.wall_seconds(),
        trained.report.records.len(),
        model_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalJson<'a> {
    model: String,
    kind: &'static str,
    topics: usize,
    #[serde(flatten)]
    result: &'a EvalResult,
}

fn cmd_eval(args: &EvalArgs, threads: usize) -> Result<(), CliError> {
    require_file(&args.model)?;
    let model = TopicModel::load(&args.model).map_err(classify)?;
    if let Some(k) = args.topics {
        if k != model.topics() {
            return Err(CliError::Config(format!(
                "--topics {k} does not match the model's K={}",
                model.topics()
            )));
        }
    }
    let vocab = match &args.vocab {
        Some(p) => load_vocab(p)?,
        None => Vocabulary::placeholder(model.terms()),
    };
    if vocab.len() != model.terms() {
        return Err(CliError::Config(format!(
            "vocabulary has {} terms, model has V={}",
            vocab.len(),
            model.terms()
        )));
    }
    let held = load_corpus(&args.held_out, &vocab)?;
    if held.total_tokens() == 0 {
        return Err(CliError::Config(format!(
            "held-out set {} contains no tokens",
            args.held_out.display()
        )));
    }
    let e_step = args.e_step.config();
    e_step.validate().map_err(classify)?;
    if !(args.alpha > 0.0) {
        return Err(CliError::Config("--alpha must be positive".into()));
    }
    let elog = model.expected_log().map_err(classify)?;
    let result = held_out_perplexity_with(&held, &elog, args.alpha, &e_step, threads).map_err(runtime)?;

    ensure_dir(&args.out)?;
    let json = serde_json::to_string_pretty(&EvalJson {
        model: args.model.display().to_string(),
        kind: model.kind.name(),
        topics: model.topics(),
        result: &result,
    })
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&args.out.join("eval.json"), json + "\n")?;
    println!("held-out documents: {}", held.len());
    println!("tokens: {}", result.total_tokens);
    println!("per-word bound: {}", result.per_word_bound);
    println!("{}", result.perplexity);
    Ok(())
}

/// One line of the benchmark CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub algorithm: Algorithm,
    pub documents: usize,
    pub wall_seconds: f64,
    pub perplexity: Option<f64>,
    pub convergence_stat: Option<f64>,
    pub error: Option<String>,
}

impl MetricsRow {
    fn record(&self) -> [String; 6] {
        let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        [
            self.algorithm.to_string(),
            self.documents.to_string(),
            self.wall_seconds.to_string(),
            num(self.perplexity),
            num(self.convergence_stat),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

fn parse_list<T, F>(text: &str, what: &str, parse: F) -> Result<Vec<T>, CliError>
where
    F: Fn(&str) -> Option<T>,
{
    let items: Option<Vec<T>> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(&parse)
        .collect();
    match items {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(CliError::Config(format!("bad {what} list {text:?}"))),
    }
}

/// Trains and evaluates one benchmark cell. Failures become the row's error.
pub fn benchmark_cell(
    pool: &Corpus,
    held: &Corpus,
    documents: usize,
    config: &RunConfig,
    threads: usize,
) -> MetricsRow {
    let mut row = MetricsRow {
        algorithm: config.algorithm,
        documents,
        wall_seconds: 0.0,
        perplexity: None,
        convergence_stat: None,
        error: None,
    };
    if documents > pool.len() {
        row.error = Some(format!("only {} training documents available", pool.len()));
        return row;
    }
    let train = pool.prefix(documents);
    let outcome = train_model(&train, config, None).and_then(|t| {
        let elog = t.model.expected_log()?;
        let eval = held_out_perplexity_with(held, &elog, config.alpha(), &config.e_step(), threads)?;
        Ok((t.report, eval))
    });
    match outcome {
        Ok((report, eval)) => {
            row.wall_seconds = report.wall_seconds();
            row.perplexity = Some(eval.perplexity);
            row.convergence_stat = report.final_statistic();
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn existing_rows(path: &Path) -> Result<Vec<(String, usize, bool)>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .clone();
    if header.iter().ne(BENCHMARK_HEADER) {
        return Err(CliError::Config(format!(
            "{} exists with an unexpected header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let docs = rec[1]
            .parse()
            .map_err(|_| CliError::Config(format!("{}: bad documents value", path.display())))?;
        rows.push((rec[0].to_owned(), docs, rec[5].is_empty()));
    }
    Ok(rows)
}

fn cmd_benchmark(args: &BenchmarkArgs, threads: usize) -> Result<(), CliError> {
    let algorithms = parse_list(&args.algorithm, "algorithm", |s| s.parse::<Algorithm>().ok())?;
    let grid = parse_list(&args.grid, "grid", |s| s.parse::<usize>().ok().filter(|n| *n > 0))?;
    let configs: Vec<RunConfig> = algorithms
        .iter()
        .map(|a| RunConfig::from_args(*a, &args.trainer, threads))
        .collect();
    for c in &configs {
        c.validate().map_err(classify)?;
    }
    let vocab = load_vocab(&args.vocab)?;
    let pool = load_corpus(&args.bow, &vocab)?;
    let (pool, held) = match &args.held_out {
        Some(p) => (pool, load_corpus(p, &vocab)?),
        None => {
            let n_held = 100.min(pool.len());
            split_held_out(&pool, n_held, &mut Rng::new(args.trainer.hyper.seed)).map_err(classify)?
        }
    };
    if held.total_tokens() == 0 {
        return Err(CliError::Config("held-out set contains no tokens".into()));
    }
    ensure_dir(&args.out)?;
    let path = args.out.join("benchmark.csv");
    let existing = existing_rows(&path)?;
    let done: HashSet<(String, usize)> = existing.iter().map(|(a, d, _)| (a.clone(), *d)).collect();
    let mut succeeded = existing.iter().filter(|(_, _, ok)| *ok).count();

    let pending: Vec<(usize, &RunConfig)> = grid
        .iter()
        .flat_map(|n| configs.iter().map(move |c| (*n, c)))
        .filter(|(n, c)| !done.contains(&(c.algorithm.to_string(), *n)))
        .collect();
    let skipped = grid.len() * configs.len() - pending.len();
    if skipped > 0 {
        eprintln!("skipping {skipped} cells already in {}", path.display());
    }

    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut writer = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    if existing.is_empty() && fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true) {
        writer.write_record(BENCHMARK_HEADER).map_err(csv_err)?;
        writer.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    }

    let workers = if args.parallel_cells { threads.max(2) } else { 1 };
    for group in pending.chunks(workers) {
        let rows: Vec<MetricsRow> = if group.len() == 1 {
            vec![benchmark_cell(&pool, &held, group[0].0, group[0].1, threads)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|(n, c)| {
                        let (pool, held) = (&pool, &held);
                        s.spawn(move || benchmark_cell(pool, held, *n, c, 1))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("benchmark cell panicked"))
                    .collect()
            })
        };
        for row in rows {
            match &row.error {
                None => {
                    succeeded += 1;
                    eprintln!(
                        "{} documents={} wall={:.3}s perplexity={}",
                        row.algorithm,
                        row.documents,
                        row.wall_seconds,
                        row.perplexity.unwrap_or(f64::NAN)
                    );
                }
                Some(e) => eprintln!("{} documents={} failed: {e}", row.algorithm, row.documents),
            }
            writer.write_record(row.record()).map_err(csv_err)?;
            writer.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    println!("{}", path.display());
    if succeeded == 0 {
        return Err(CliError::Runtime("no benchmark cell succeeded".into()));
    }
    Ok(())
}
