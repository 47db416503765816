//! Forecast evaluation against range-based proxies, overall and per sector.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use volcast_core::garch::{fit_with, forecast_one_step, FitOptions, FitSummary};
use volcast_core::marketdata::{EstimatorKind, PriceSeries};
use volcast_core::metrics::{evaluate, EvalReport};
use volcast_nn::model::{Model, Sample};

use crate::dataset::{Normalizer, SampleMeta};
use crate::train::predict_samples;
use crate::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorReport {
    pub all: EvalReport,
    pub sectors: BTreeMap<String, EvalReport>,
}

impl SectorReport {
    /// Rows for the aggregate (sector `all`) and each sector.
    pub fn tsv_rows(&self, model: &str) -> Vec<String> {
        let mut rows = vec![self.all.tsv_row(model, "all")];
        rows.extend(self.sectors.iter().map(|(s, r)| r.tsv_row(model, s)));
        rows
    }
}

/// Header plus one row per (model, proxy, sector).
pub fn reports_tsv<'a>(reports: impl IntoIterator<Item = (&'a str, &'a SectorReport)>) -> String {
    let mut out = String::from(EvalReport::tsv_header());
    out.push('\n');
    for (model, r) in reports {
        for row in r.tsv_rows(model) {
            out.push_str(&row);
            out.push('\n');
        }
    }
    out
}

pub fn proxy_values(meta: &[SampleMeta], kind: EstimatorKind) -> Result<Vec<f64>> {
    match kind {
        EstimatorKind::GarmanKlass => Ok(meta.iter().map(|m| m.gk_vol).collect()),
        EstimatorKind::Parkinson => Ok(meta.iter().map(|m| m.pk_vol).collect()),
        EstimatorKind::SquaredReturn => Err(PipelineError::Config(
            "evaluation proxies are garman_klass or parkinson".into(),
        )),
    }
}

pub fn evaluate_forecasts(forecasts: &[f64], meta: &[SampleMeta], kind: EstimatorKind) -> Result<SectorReport> {
    if meta.is_empty() {
        return Err(PipelineError::EmptySplit("test"));
    }
    if forecasts.len() != meta.len() {
        return Err(PipelineError::Config(format!(
            "{} forecasts for {} samples",
            forecasts.len(),
            meta.len()
        )));
    }
    let proxy = proxy_values(meta, kind)?;
    let all = evaluate(forecasts, &proxy, kind)?;
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((f, p), m) in forecasts.iter().zip(&proxy).zip(meta) {
        let e = groups.entry(m.sector.as_str()).or_default();
        e.0.push(*f);
        e.1.push(*p);
    }
    let mut sectors = BTreeMap::new();
    for (s, (f, p)) in groups {
        sectors.insert(s.to_string(), evaluate(&f, &p, kind)?);
    }
    Ok(SectorReport { all, sectors })
}

/// Network forecasts in volatility units, negative outputs clamped to zero.
pub fn model_forecasts(model: &Model, normalizer: &Normalizer, samples: &[Sample], chunk: usize) -> Result<Vec<f64>> {
    let normalized = normalizer.apply_all(samples);
    Ok(predict_samples(model, &normalized, chunk)?
        .into_iter()
        .map(|y| normalizer.denormalize(y).max(0.0))
        .collect())
}

/// One-step GARCH(1,1) volatility forecasts for each sample's target date.
///
/// Each stock is fitted once on the close-to-close returns dated up to
/// `fit_end`; the variance recursion then runs forward on realized returns
/// with the fitted parameters.
pub fn garch_forecasts(
    prices: &[PriceSeries],
    fit_end: NaiveDate,
    meta: &[SampleMeta],
    opts: &FitOptions,
) -> Result<(Vec<f64>, BTreeMap<String, FitSummary>)> {
    let mut by_stock: BTreeMap<&str, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut fits = BTreeMap::new();
    for series in prices {
        if !meta.iter().any(|m| m.stock_id == series.stock_id) {
            continue;
        }
        let bars = series.bars();
        let returns = series.close_returns();
        let m = bars.iter().skip(1).take_while(|b| b.date <= fit_end).count();
        let fit = fit_with(&returns[..m], opts)?;
        let p = fit.params;
        let mut var = BTreeMap::new();
        for (k, s2) in fit.cond_variance.iter().enumerate() {
            var.insert(bars[k + 1].date, *s2);
        }
        let mut s2 = forecast_one_step(&fit);
        for k in m..returns.len() {
            var.insert(bars[k + 1].date, s2);
            let e = returns[k] - p.mu;
            s2 = p.a0 + p.a1 * e * e + p.b1 * s2;
        }
        fits.insert(series.stock_id.clone(), fit.summary());
        by_stock.insert(series.stock_id.as_str(), var);
    }
    let forecasts = meta
        .iter()
        .map(|m| {
            by_stock
                .get(m.stock_id.as_str())
                .and_then(|v| v.get(&m.target_date))
                .map(|s2| s2.sqrt())
                .ok_or_else(|| PipelineError::Config(format!("no returns for {} on {}", m.stock_id, m.target_date)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((forecasts, fits))
}
