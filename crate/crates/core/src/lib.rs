//! Market data, GARCH benchmark, evaluation metrics and news-corpus handling.

pub mod corpus;
pub mod garch;
pub mod marketdata;
pub mod metrics;
