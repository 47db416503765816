//! Forecast accuracy: MSE, MAE and the Mincer-Zarnowitz regression
//! `proxy_t = a + b * forecast_t + e_t`.
//!
//! All inputs are volatilities (square roots of variance proxies).

use serde::{Deserialize, Serialize};

use crate::marketdata::EstimatorKind;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {forecast} forecasts vs {proxy} proxies")]
    LengthMismatch { forecast: usize, proxy: usize },
    #[error("need at least {need} pairs, got {got}")]
    TooFew { got: usize, need: usize },
    #[error("forecast is constant; the regression slope is undefined")]
    DegenerateRegressor,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check(forecast: &[f64], proxy: &[f64], need: usize) -> Result<()> {
    if forecast.len() != proxy.len() {
        return Err(MetricsError::LengthMismatch {
            forecast: forecast.len(),
            proxy: proxy.len(),
        });
    }
    if forecast.len() < need {
        return Err(MetricsError::TooFew {
            got: forecast.len(),
            need,
        });
    }
    if let Some(i) = forecast
        .iter()
        .zip(proxy)
        .position(|(f, p)| !(f.is_finite() && p.is_finite()))
    {
        return Err(MetricsError::NonFinite(i));
    }
    Ok(())
}

pub fn mse(forecast: &[f64], proxy: &[f64]) -> Result<f64> {
    check(forecast, proxy, 1)?;
    let n = forecast.len() as f64;
    Ok(forecast.iter().zip(proxy).map(|(f, p)| (f - p) * (f - p)).sum::<f64>() / n)
}

pub fn mae(forecast: &[f64], proxy: &[f64]) -> Result<f64> {
    check(forecast, proxy, 1)?;
    let n = forecast.len() as f64;
    Ok(forecast.iter().zip(proxy).map(|(f, p)| (f - p).abs()).sum::<f64>() / n)
}

/// OLS of the proxy on the forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MzRegression {
    pub intercept: f64,
    pub slope: f64,
    /// `1 - SSR / sum (proxy - mean proxy)^2`.
    pub r2: f64,
    /// `1 - SSR / sum (forecast - mean forecast)^2`: the denominator centres
    /// the forecast instead of the proxy. Equal to `r2` exactly when both
    /// series have the same sample variance.
    pub r2_forecast_centered: f64,
}

pub fn mincer_zarnowitz(forecast: &[f64], proxy: &[f64]) -> Result<MzRegression> {
    check(forecast, proxy, 3)?;
    let n = forecast.len() as f64;
    let mf = forecast.iter().sum::<f64>() / n;
    let mp = proxy.iter().sum::<f64>() / n;
    let sff: f64 = forecast.iter().map(|f| (f - mf) * (f - mf)).sum();
    let spp: f64 = proxy.iter().map(|p| (p - mp) * (p - mp)).sum();
    let sfp: f64 = forecast.iter().zip(proxy).map(|(f, p)| (f - mf) * (p - mp)).sum();
    if sff.is_nan() || sff <= 0.0 || sff.sqrt() <= 1e-14 * mf.abs() * n.sqrt() {
        return Err(MetricsError::DegenerateRegressor);
    }
    let slope = sfp / sff;
    let intercept = mp - slope * mf;
    let ssr: f64 = forecast
        .iter()
        .zip(proxy)
        .map(|(f, p)| {
            let e = p - intercept - slope * f;
            e * e
        })
        .sum();
    let r2 = if spp > 0.0 { 1.0 - ssr / spp } else { 1.0 };
    Ok(MzRegression {
        intercept,
        slope,
        r2,
        r2_forecast_centered: 1.0 - ssr / sff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
    pub r2_forecast_centered: f64,
    pub mz_intercept: f64,
    pub mz_slope: f64,
    pub n: usize,
    pub proxy_kind: EstimatorKind,
}

impl EvalReport {
    pub fn tsv_header() -> &'static str {
        "model\tproxy\tsector\tn\tr2\tmse\tmae\tmz_intercept\tmz_slope\tr2_forecast_centered"
    }

    /// One table row; `model` and `sector` label the row.
    pub fn tsv_row(&self, model: &str, sector: &str) -> String {
        format!(
            "{model}\t{}\t{sector}\t{}\t{:.6}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6}\t{:.6}",
            self.proxy_kind,
            self.n,
            self.r2,
            self.mse,
            self.mae,
            self.mz_intercept,
            self.mz_slope,
            self.r2_forecast_centered
        )
    }
}

/// All metrics for one forecast/proxy pairing.
pub fn evaluate(forecast: &[f64], proxy: &[f64], proxy_kind: EstimatorKind) -> Result<EvalReport> {
    let mz = mincer_zarnowitz(forecast, proxy)?;
    Ok(EvalReport {
        mse: mse(forecast, proxy)?,
        mae: mae(forecast, proxy)?,
        r2: mz.r2,
        r2_forecast_centered: mz.r2_forecast_centered,
        mz_intercept: mz.intercept,
        mz_slope: mz.slope,
        n: forecast.len(),
        proxy_kind,
    })
}
