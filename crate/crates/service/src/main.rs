//! `fuzzkb`: batch pipeline, sensitivity sweeps and the chat HTTP service.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fuzzkb_core::dataset::SplitConfig;
use fuzzkb_core::fuzzy_rough::{DistanceVariant, Implicator, ScoringConfig};
use fuzzkb_core::prediction::DEFAULT_NEIGHBORS;
use fuzzkb_service::api::router;
use fuzzkb_service::pipeline::{run_pipeline, PipelineConfig, PredictionSource};
use fuzzkb_service::session::SessionStore;
use fuzzkb_service::sweep::{run_sweep_to_dir, SweepSpec};

#[derive(Parser, Debug)]
#[command(name = "fuzzkb", version, about = "Fuzzy symbolic knowledge bases that explain black-box classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// ARFF dataset to explain.
    #[arg(long)]
    data: Option<PathBuf>,

    /// CSV of `id,class[,confidence]` predictions aligned with the dataset.
    #[arg(long, conflicts_with = "baseline")]
    predictions: Option<PathBuf>,

    /// Use the built-in kNN classifier instead of a predictions file.
    #[arg(long)]
    baseline: bool,

    /// Neighbours of the baseline classifier.
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    k: usize,

    /// Seed of the train/test split used by the baseline.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Number of linguistic terms per numeric feature.
    #[arg(long, default_value_t = 5)]
    symbols: usize,

    /// fodor, goguen, godel or lukasiewicz.
    #[arg(long, default_value = "lukasiewicz")]
    implicator: Implicator,

    /// crisp or fuzzy.
    #[arg(long, default_value = "fuzzy")]
    distance: DistanceVariant,

    #[arg(long, default_value_t = 1.0)]
    lambda: f64,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Run the sweep described by this TOML (or JSON) file instead.
    #[arg(long, conflicts_with_all = ["data", "predictions", "baseline"])]
    sweep: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "FUZZKB_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of ARFF files sessions may load by name.
        #[arg(long, env = "FUZZKB_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        /// Keep session snapshots in this directory.
        #[arg(long, env = "FUZZKB_SESSION_DIR")]
        persist: Option<PathBuf>,
    },
}

fn run_batch(args: RunArgs) -> anyhow::Result<()> {
    if let Some(spec_path) = &args.sweep {
        let spec = SweepSpec::load(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
        let rows = run_sweep_to_dir(&spec, &args.out)?;
        let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
        println!("wrote {} rows to {} ({failed} failed cells)", rows.len(), args.out.join("sweep.csv").display());
        return Ok(());
    }
    let Some(data) = args.data else {
        bail!("--data is required (or use --sweep, or the serve subcommand)");
    };
    let predictions = match (args.predictions, args.baseline) {
        (Some(p), false) => PredictionSource::File(p),
        (None, true) => PredictionSource::Baseline {
            k: args.k,
            split: SplitConfig { seed: args.seed, ..Default::default() },
        },
        _ => bail!("give a --predictions file or pass --baseline"),
    };
    let cfg = PipelineConfig {
        data,
        predictions,
        symbols: args.symbols,
        scoring: ScoringConfig { implicator: args.implicator, distance: args.distance, lambda: args.lambda },
        out: args.out,
    };
    let run = run_pipeline(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&run.summary)?);
    Ok(())
}

async fn serve(host: String, port: u16, data_dir: PathBuf, persist: Option<PathBuf>) -> anyhow::Result<()> {
    let mut store = SessionStore::new(data_dir);
    if let Some(dir) = persist {
        store = store.with_persistence(dir)?;
    }
    let app = router(Arc::new(store));
    let listener = tokio::net::TcpListener::bind((host.as_str(), port))
        .await
        .with_context(|| format!("binding {host}:{port}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Some(Command::Serve { port, host, data_dir, persist }) => tokio::runtime::Runtime::new()?
            .block_on(serve(host, port, data_dir, persist)),
        None => run_batch(cli.run),
    }
}
