//! Dataset assembly, training, evaluation and the planted-signal experiment.

pub mod artifacts;
pub mod dataset;
pub mod evaluation;
pub mod experiment;
pub mod synthetic;
pub mod train;
pub mod universe;

use volcast_core::corpus::CorpusError;
use volcast_core::garch::GarchError;
use volcast_core::marketdata::MarketDataError;
use volcast_core::metrics::MetricsError;
use volcast_nn::autodiff::AutodiffError;
use volcast_nn::model::Model;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Garch(#[from] GarchError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] AutodiffError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("stock universe: {0}")]
    Universe(String),
    #[error("sentence vectors: {0}")]
    Sidecar(String),
    #[error("leakage: {0}")]
    Leakage(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize, last_finite: Box<Model> },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;
