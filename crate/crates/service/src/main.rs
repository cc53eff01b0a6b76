use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use egomedia_core::engine::Engine;
use egomedia_core::lexicon::Lexicon;
use egomedia_service::commands::{self, CrossUserConfig, CurveConfig, GenSynthConfig};
use egomedia_service::{router, AppState, DataDir, ServiceConfig};
use log::info;
use serde::de::DeserializeOwned;

#[derive(Debug, Parser)]
#[command(name = "egomedia", version, about = "Spatio-temporal question answering over geo-tagged media")]
struct Cli {
    /// TOML file with defaults for every flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "EGOMEDIA_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add named OSM nodes to the fact store.
    IngestOsm { file: PathBuf },
    /// Add media records from a line-delimited JSON manifest.
    IngestMedia { manifest: PathBuf },
    /// Build a synthetic world into the data directory and write a corpus.
    GenSynth { config: Option<PathBuf> },
    /// Train the shared parameters on a corpus.
    Train { corpus: PathBuf },
    /// Score the shared parameters on a corpus.
    Eval {
        corpus: PathBuf,
        /// Also report item-level recall.
        #[arg(long)]
        standard_recall: bool,
    },
    /// Accuracy against training-set size on a synthetic world, as CSV.
    Curve {
        config: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Simulated personalization and the cross-user matrix.
    Crossuser { config: Option<PathBuf> },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

fn read_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            toml::from_str(&text).with_context(|| p.display().to_string())
        }
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => ServiceConfig::from_file(p).with_context(|| p.display().to_string())?,
        None => ServiceConfig::default(),
    };
    let data_root = cli.data_dir.clone().or(cfg.data_dir.clone()).unwrap_or_else(|| PathBuf::from("egomedia-data"));
    let engine = Engine::new(Arc::new(Lexicon::default()), cfg.geometry);

    match cli.command {
        Command::IngestOsm { file } => {
            let rep = commands::ingest_osm(&DataDir::open(&data_root)?, &file)?;
            println!("{}", serde_json::to_string(&rep)?);
        }
        Command::IngestMedia { manifest } => {
            let rep = commands::ingest_media(&DataDir::open(&data_root)?, &manifest)?;
            println!("{}", serde_json::to_string(&rep)?);
        }
        Command::GenSynth { config } => {
            let c: GenSynthConfig = read_toml(config.as_deref())?;
            let (n, out) = commands::gen_synth(&DataDir::open(&data_root)?, &c, &engine)?;
            println!("wrote {n} pairs to {}", out.display());
        }
        Command::Train { corpus } => {
            let (theta, rep) = commands::train(&DataDir::open(&data_root)?, &corpus, &cfg.learner, &engine)?;
            for e in &rep.epochs {
                println!("{}", serde_json::to_string(e)?);
            }
            println!(
                "trained on {} pairs ({} without a consistent parse, {} unparsed); {} weights, version {}",
                rep.pairs,
                rep.skipped_pairs,
                rep.unparsed_pairs,
                theta.len(),
                theta.version
            );
        }
        Command::Eval { corpus, standard_recall } => {
            let rep = commands::evaluate_corpus(&DataDir::open(&data_root)?, &corpus, &engine, standard_recall)?;
            println!("{}", serde_json::to_string(&rep)?);
            println!("{rep}");
        }
        Command::Curve { config, csv } => {
            let c: CurveConfig = read_toml(config.as_deref())?;
            let text = commands::curve_csv(&commands::curve(&c, &engine)?);
            match csv {
                Some(p) => std::fs::write(&p, text).with_context(|| p.display().to_string())?,
                None => print!("{text}"),
            }
        }
        Command::Crossuser { config } => {
            let c: CrossUserConfig = read_toml(config.as_deref())?;
            print!("{}", commands::matrix_table(&commands::crossuser(&c, &engine)?));
        }
        Command::Serve { port } => {
            let data = DataDir::open(&data_root)?;
            let world = data.load_world()?;
            let params = data.load_params()?;
            let media_root = cfg.media_root.clone().unwrap_or_else(|| data.media_root());
            info!(
                "loaded {} facts, {} media, {} user forks from {}",
                world.facts().len(),
                world.media().len(),
                params.users().count(),
                data.root().display()
            );
            let state = AppState::new(world, params, engine, cfg.learner.clone(), media_root)
                .with_data_dir(data)
                .with_query_log_capacity(cfg.query_log_capacity);
            let addr = SocketAddr::from(([0, 0, 0, 0], port.unwrap_or(cfg.port)));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                info!("listening on {addr}");
                axum::serve(listener, router(Arc::new(state)))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
            })?;
        }
    }
    Ok(())
}
