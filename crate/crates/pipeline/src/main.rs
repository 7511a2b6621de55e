use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use counterpoint::admission::StreamFilterConfig;
use counterpoint::clock::Clock;
use counterpoint::engine::{Engine, EngineConfig};
use counterpoint::fixture::{self, FixtureSpec};
use counterpoint::limiter::RateLimitConfig;
use counterpoint::replay::{first_timestamp, replay, ReplayOptions};
use counterpoint::report::report;
use counterpoint::server::{self, AppState};
use counterpoint::store::{Period, Store};
use counterpoint_core::corpus::{load_labeled_dataset, load_roster, Label, NameTable};
use counterpoint_core::eval::{
    ablation, auc, kde_report, kfold_cv, sweep, sweep_grid, write_fold_csv, write_summary_csv, CvConfig, FeatureGroup,
    GbdtLearner,
};
use counterpoint_core::gbdt::{train, TrainParams};
use counterpoint_core::scorers::{
    featurize, load_hate_corpus, train_hate_scorer, FeatureRegistry, HateModel, HateScorer, HateTrainParams,
    HttpToxicityClient, MockRules, RuleToxicityScorer, ScorerSet, ToxicityScorer, TRIGGER_FEATURE,
};
use counterpoint_core::FeatureDataset;
use futures::stream::{self, StreamExt, TryStreamExt};

const SCORER_KEY_ENV: &str = "SCORER_API_KEY";
const OPERATOR_TOKEN_ENV: &str = "OPERATOR_TOKEN";

#[derive(Parser)]
#[command(
    name = "counterpoint",
    version,
    about = "Abuse-triggered positivitweet pipeline and its evaluation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ingestion endpoint and operator API.
    Serve(ServeArgs),
    /// Feed a JSON Lines fixture through the pipeline.
    Replay(ReplayArgs),
    /// Election report from a store.
    Report(ReportArgs),
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Score a labeled CSV into a feature CSV.
    Featurize(FeaturizeArgs),
    /// Train the boosted-tree classifier on a feature CSV.
    Train(TrainArgs),
    /// Train the three-class hate scorer.
    TrainHate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the rule-based toxicity scorer over HTTP.
    MockScorer {
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8081")]
        listen: SocketAddr,
    },
    /// Write a synthetic replay fixture with roster, rules and library.
    GenFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        total: usize,
        #[arg(long, default_value_t = 100)]
        abusive: usize,
        #[arg(long, default_value_t = 60)]
        spacing_secs: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    #[command(subcommand)]
    Library(LibraryCommand),
}

#[derive(Args, Clone)]
struct ScorerArgs {
    /// Toxicity service root; the key is read from SCORER_API_KEY.
    #[arg(long, env = "SCORER_URL", conflicts_with = "rules")]
    scorer_url: Option<String>,
    /// Score toxicity in-process from a mock rules file instead.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Hate-scorer model; the bundled demonstration model otherwise.
    #[arg(long)]
    hate_model: Option<PathBuf>,
}

impl ScorerArgs {
    fn build(&self) -> anyhow::Result<ScorerSet> {
        let tox: Arc<dyn ToxicityScorer> = match (&self.scorer_url, &self.rules) {
            (Some(url), _) => Arc::new(HttpToxicityClient::new(url, std::env::var(SCORER_KEY_ENV).ok())?),
            (None, Some(path)) => Arc::new(RuleToxicityScorer::new(MockRules::load(path)?)?),
            (None, None) => bail!("one of --scorer-url or --rules is required"),
        };
        let hate: Arc<dyn HateScorer> = match &self.hate_model {
            Some(path) => Arc::new(HateModel::load(path)?),
            None => Arc::new(HateModel::demo()),
        };
        Ok(ScorerSet::new(Some(tox), Some(hate)))
    }
}

#[derive(Args, Clone)]
struct PipelineArgs {
    #[arg(long)]
    roster: PathBuf,
    /// JSON Lines positivitweet library imported into a store that has none.
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value = "counterpoint.db")]
    store: PathBuf,
    #[arg(long, default_value = "paritybot")]
    self_handle: String,
    #[arg(long, default_value_t = 100)]
    daily_cap: u32,
    #[arg(long, default_value_t = 30)]
    min_interval: u32,
    #[command(flatten)]
    scorer: ScorerArgs,
}

impl PipelineArgs {
    fn engine(&self, clock: Clock, seed: u64) -> anyhow::Result<Engine> {
        let roster = load_roster(&self.roster, &NameTable::bundled())?;
        let mut cfg = EngineConfig::new(StreamFilterConfig::from_roster(&roster, &self.self_handle));
        cfg.theta = self.theta;
        cfg.seed = seed;
        cfg.rate = RateLimitConfig {
            daily_cap: self.daily_cap,
            min_interval_secs: self.min_interval,
        };
        let store = Store::open(&self.store).with_context(|| format!("opening {}", self.store.display()))?;
        let engine = Engine::new(
            store,
            self.scorer.build()?,
            Arc::new(FeatureRegistry::default()),
            cfg,
            clock,
        )?;
        if let Some(path) = &self.library {
            if engine.list_curation(None)?.is_empty() {
                let n = engine.import_library(BufReader::new(open(path)?))?;
                tracing::info!(entries = n, "imported positivitweet library");
            }
        }
        Ok(engine)
    }
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds between retry-queue sweeps.
    #[arg(long, default_value_t = 60)]
    retry_every: u64,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    fixture: PathBuf,
    /// Tweets per second; 0 for as fast as possible.
    #[arg(long, default_value_t = 0.0)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "counterpoint.db")]
    store: PathBuf,
    #[arg(long)]
    from: Option<DateTime<Utc>>,
    #[arg(long)]
    to: Option<DateTime<Utc>>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args, Clone)]
struct EvalArgs {
    /// Feature CSV as written by `featurize`.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl EvalArgs {
    fn cv_config(&self) -> CvConfig {
        CvConfig {
            k: self.k,
            seed: self.seed,
            ..CvConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum EvalCommand {
    /// AUC of the raw trigger feature as a score.
    Auc(EvalArgs),
    /// Stratified k-fold CV of the classifier on all features.
    Cv(EvalArgs),
    /// CV per feature family plus a random baseline.
    Ablate(EvalArgs),
    /// Per-class density and histogram of the trigger feature.
    Kde {
        #[command(flatten)]
        args: EvalArgs,
        #[arg(long)]
        bandwidth: Option<f64>,
    },
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Labeled CSV (id,text,label).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    concurrency: usize,
    #[command(flatten)]
    scorer: ScorerArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 31)]
    leaves: usize,
    /// Pick hyperparameters by CV over the fixed grid first.
    #[arg(long)]
    sweep: bool,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum LibraryCommand {
    Import {
        #[arg(long, default_value = "counterpoint.db")]
        store: PathBuf,
        #[arg(long)]
        file: PathBuf,
    },
    Export {
        #[arg(long, default_value = "counterpoint.db")]
        store: PathBuf,
        #[arg(long)]
        file: PathBuf,
    },
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "counterpoint=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve(a) => serve(a).await,
        Command::Replay(a) => run_replay(a).await,
        Command::Report(a) => {
            let store = Store::open(&a.store)?;
            let r = report(store.conn(), &Period { from: a.from, to: a.to })?;
            match a.format {
                Format::Json => println!("{}", r.to_json()?),
                Format::Text => print!("{}", r.to_text()),
            }
            Ok(())
        }
        Command::Eval(cmd) => eval(cmd),
        Command::Featurize(a) => featurize_corpus(a).await,
        Command::Train(a) => train_model(a),
        Command::TrainHate { corpus, out } => {
            let model = train_hate_scorer(&load_hate_corpus(&corpus)?, &HateTrainParams::default())?;
            model.save(&out)?;
            eprintln!(
                "hate scorer with {} terms written to {}",
                model.vocabulary_len(),
                out.display()
            );
            Ok(())
        }
        Command::MockScorer { rules, listen } => {
            let rules = match rules {
                Some(p) => MockRules::load(p)?,
                None => fixture::mock_rules(),
            };
            let app = server::mock_scorer_router(RuleToxicityScorer::new(rules)?, std::env::var(SCORER_KEY_ENV).ok());
            let listener = tokio::net::TcpListener::bind(listen).await?;
            tracing::info!(%listen, "mock scorer listening");
            axum::serve(listener, app).await?;
            Ok(())
        }
        Command::GenFixture {
            out,
            total,
            abusive,
            spacing_secs,
            seed,
        } => {
            let spec = FixtureSpec {
                spacing_secs,
                seed,
                ..FixtureSpec::new(total, abusive)
            };
            fixture::write_bundle(&spec, &out)?;
            eprintln!(
                "fixture with {total} tweets ({abusive} abusive) written to {}",
                out.display()
            );
            Ok(())
        }
        Command::Library(LibraryCommand::Import { store, file }) => {
            let store = Store::open(&store)?;
            let tx = store.conn().unchecked_transaction()?;
            let n = counterpoint::curation::import_jsonl(&tx, BufReader::new(open(&file)?))?;
            tx.commit()?;
            eprintln!("imported {n} entries");
            Ok(())
        }
        Command::Library(LibraryCommand::Export { store, file }) => {
            let store = Store::open(&store)?;
            let n = counterpoint::curation::export_jsonl(store.conn(), create(&file)?)?;
            eprintln!("exported {n} entries");
            Ok(())
        }
    }
}

async fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let engine = Arc::new(a.pipeline.engine(Clock::System, a.seed)?);
    let token = std::env::var(OPERATOR_TOKEN_ENV).ok().filter(|t| !t.is_empty());
    if token.is_none() {
        tracing::warn!("{OPERATOR_TOKEN_ENV} unset: operator API is unauthenticated");
    }
    let state = AppState::new(engine, token);
    server::spawn_retry_loop(state.clone(), Duration::from_secs(a.retry_every.max(1)));
    let listener = tokio::net::TcpListener::bind(a.listen).await?;
    tracing::info!(listen = %a.listen, "serving");
    axum::serve(listener, server::router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn run_replay(a: ReplayArgs) -> anyhow::Result<()> {
    let start = first_timestamp(BufReader::new(open(&a.fixture)?))?.unwrap_or(DateTime::UNIX_EPOCH);
    let engine = a.pipeline.engine(Clock::manual(start), a.seed)?;
    let opts = ReplayOptions {
        rate: a.rate,
        ..ReplayOptions::default()
    };
    let summary = replay(&engine, BufReader::new(open(&a.fixture)?), &opts).await?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn eval(cmd: EvalCommand) -> anyhow::Result<()> {
    match cmd {
        EvalCommand::Auc(a) => {
            let ds = FeatureDataset::load_csv(&a.dataset)?;
            let column = ds
                .column(TRIGGER_FEATURE)
                .with_context(|| format!("dataset has no {TRIGGER_FEATURE} column"))?;
            let pairs: Vec<(f64, Label)> = column.into_iter().zip(ds.labels().iter().copied()).collect();
            let value = auc(&pairs)?;
            let out = a.out.join("auc.json");
            serde_json::to_writer_pretty(
                create(&out)?,
                &serde_json::json!({"feature": TRIGGER_FEATURE, "auc": value}),
            )?;
            println!("{TRIGGER_FEATURE} auc {value:.4}");
        }
        EvalCommand::Cv(a) => {
            let ds = FeatureDataset::load_csv(&a.dataset)?;
            let learner = GbdtLearner {
                params: TrainParams::default(),
            };
            let r = kfold_cv(&ds, &a.cv_config(), &learner, "all")?;
            let reports = [r];
            write_fold_csv(&reports, create(&a.out.join("cv_folds.csv"))?)?;
            write_summary_csv(&reports, create(&a.out.join("cv_summary.csv"))?)?;
            println!(
                "mean auc {:.4} ± {:.4} over {} folds",
                reports[0].mean, reports[0].std, a.k
            );
        }
        EvalCommand::Ablate(a) => {
            let ds = FeatureDataset::load_csv(&a.dataset)?;
            let reports = ablation(&ds, &FeatureGroup::standard(), &a.cv_config(), &TrainParams::default())?;
            write_fold_csv(&reports, create(&a.out.join("ablation_folds.csv"))?)?;
            write_summary_csv(&reports, create(&a.out.join("ablation_summary.csv"))?)?;
            for r in &reports {
                println!("{:<10} {:.4} ± {:.4}", r.feature_set, r.mean, r.std);
            }
        }
        EvalCommand::Kde { args, bandwidth } => {
            let ds = FeatureDataset::load_csv(&args.dataset)?;
            let column = ds
                .column(TRIGGER_FEATURE)
                .with_context(|| format!("dataset has no {TRIGGER_FEATURE} column"))?;
            let (mut neg, mut pos) = (Vec::new(), Vec::new());
            for (v, l) in column.into_iter().zip(ds.labels()) {
                if l.is_positive() {
                    pos.push(v)
                } else {
                    neg.push(v)
                }
            }
            let curves = kde_report(&neg, &pos, bandwidth)?;
            curves.write_density_csv(create(&args.out.join("kde_density.csv"))?)?;
            curves.write_histogram_csv(create(&args.out.join("kde_histogram.csv"))?)?;
            serde_json::to_writer_pretty(create(&args.out.join("kde_summary.json"))?, &curves.summary_json())?;
            println!("kde written to {}", args.out.display());
        }
    }
    Ok(())
}

async fn featurize_corpus(a: FeaturizeArgs) -> anyhow::Result<()> {
    let corpus = load_labeled_dataset(&a.dataset)?;
    let scorers = a.scorer.build()?;
    let registry = Arc::new(FeatureRegistry::default());
    let rows: Vec<Vec<f64>> = stream::iter(corpus.examples())
        .map(|ex| {
            let (registry, scorers) = (&registry, &scorers);
            async move {
                featurize(&ex.clean_text, registry, scorers)
                    .await
                    .map(|fv| fv.values)
                    .with_context(|| format!("example {}", ex.id))
            }
        })
        .buffered(a.concurrency.max(1))
        .try_collect()
        .await?;
    let values = rows.concat();
    let labels = corpus.examples().iter().map(|e| e.label).collect();
    let ids = corpus.examples().iter().map(|e| e.id.clone()).collect();
    let ds = FeatureDataset::new(registry, values, labels, ids)?;
    ds.save_csv(&a.out)?;
    eprintln!("{} rows written to {}", ds.len(), a.out.display());
    Ok(())
}

fn train_model(a: TrainArgs) -> anyhow::Result<()> {
    let ds = FeatureDataset::load_csv(&a.dataset)?;
    let mut params = TrainParams {
        num_trees: a.trees,
        learning_rate: a.learning_rate,
        max_leaves: a.leaves,
        seed: a.seed,
        ..TrainParams::default()
    };
    if a.sweep {
        let cfg = CvConfig {
            k: a.k,
            seed: a.seed,
            ..CvConfig::default()
        };
        let outcome = sweep(&ds, &sweep_grid(&params), &cfg)?;
        for (p, r) in &outcome.reports {
            eprintln!(
                "trees {:>3} lr {:<4} leaves {:>2}  auc {:.4} ± {:.4}",
                p.num_trees, p.learning_rate, p.max_leaves, r.mean, r.std
            );
        }
        params = outcome.best;
    }
    let model = train(&ds, &params)?;
    model.save(&a.out)?;
    eprintln!("{} trees written to {}", model.trees.len(), a.out.display());
    Ok(())
}
