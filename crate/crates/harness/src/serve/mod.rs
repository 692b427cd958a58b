//! Backend of the pairwise rating study: schedules image pairs to raters,
//! records votes in an append-only log and reports preference rates.

pub mod pairs;
pub mod routes;
pub mod state;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{Context, Result};
use axum::Router;

pub use pairs::{load_pairs, PairSpec};
pub use routes::{router, AppState};
pub use state::{
    comparison_results, comparison_seed, Assignment, ResultSettings, ResultsPayload, Scheduler, SchedulerConfig,
    VoteRequest, DEFAULT_LEASE, DEFAULT_PROMPT, DEFAULT_QUOTA,
};
pub use store::{read_votes, Choice, VoteLog, VoteRecord};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub pairs_dir: PathBuf,
    pub vote_log: PathBuf,
    pub quota: usize,
    pub lease_ttl: Duration,
    pub prompt: String,
    pub results: ResultSettings,
    pub static_dir: Option<PathBuf>,
}

impl ServeConfig {
    pub fn new(pairs_dir: impl Into<PathBuf>, vote_log: impl Into<PathBuf>) -> Self {
        Self {
            pairs_dir: pairs_dir.into(),
            vote_log: vote_log.into(),
            quota: DEFAULT_QUOTA,
            lease_ttl: DEFAULT_LEASE,
            prompt: DEFAULT_PROMPT.to_string(),
            results: ResultSettings::default(),
            static_dir: None,
        }
    }
}

/// Loads the pair table, replays the vote log and builds the router.
pub fn build_app(config: &ServeConfig) -> Result<Router> {
    anyhow::ensure!(config.quota > 0, "quota must be at least 1");
    let pairs = load_pairs(&config.pairs_dir)?;
    let (log, replay) = VoteLog::open(&config.vote_log)?;
    tracing::info!(
        pairs = pairs.len(),
        votes = replay.votes.len(),
        log = %config.vote_log.display(),
        "vote log replayed"
    );
    let scheduler = Scheduler::new(
        pairs,
        log,
        replay.votes,
        SchedulerConfig {
            quota: config.quota,
            lease_ttl: config.lease_ttl,
            prompt: config.prompt.clone(),
            seed: config.results.seed,
        },
    );
    Ok(router(
        AppState {
            scheduler: Arc::new(Mutex::new(scheduler)),
            results: config.results,
        },
        config.static_dir.as_deref(),
    ))
}

/// Serves until Ctrl-C.
pub async fn serve_eval(addr: SocketAddr, config: &ServeConfig) -> Result<()> {
    let app = build_app(config)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!(addr = %listener.local_addr()?, "rating service listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
