//! Reverse-mode autodiff and the hierarchical news/price volatility network.

pub mod autodiff;
pub mod model;
pub mod suite;
