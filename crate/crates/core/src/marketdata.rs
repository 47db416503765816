//! OHLC bars, simple returns and range-based daily variance estimators.
//!
//! The estimators return *variances*. Callers take square roots explicitly
//! when they need a volatility.
//!
//! The module also carries a zero-drift intraday random-walk simulator used
//! as an oracle for the estimators' bias and relative efficiency.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Open price of every simulated day.
pub const SIMULATED_OPEN: f64 = 100.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MarketDataError {
    #[error("non-positive price {0}")]
    NonPositivePrice(f64),
    #[error("invalid bar on {date}: {reason}")]
    InvalidBar { date: NaiveDate, reason: String },
    #[error("dates not strictly increasing at {0}")]
    UnorderedDates(NaiveDate),
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: u64, reason: String },
    #[error("invalid simulation input: {0}")]
    InvalidSimulation(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MarketDataError>;

/// One trading day of prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl OhlcBar {
    /// Builds a bar and checks `low <= open, close <= high` with positive prices.
    pub fn new(date: NaiveDate, open: f64, high: f64, low: f64, close: f64) -> Result<Self> {
        let bar = OhlcBar {
            date,
            open,
            high,
            low,
            close,
        };
        bar.validate()?;
        Ok(bar)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| MarketDataError::InvalidBar {
            date: self.date,
            reason: reason.to_string(),
        };
        for p in [self.open, self.high, self.low, self.close] {
            if !(p.is_finite() && p > 0.0) {
                return Err(invalid(&format!("non-positive or non-finite price {p}")));
            }
        }
        if self.low > self.high {
            return Err(invalid("low above high"));
        }
        if self.open < self.low || self.open > self.high {
            return Err(invalid("open outside [low, high]"));
        }
        if self.close < self.low || self.close > self.high {
            return Err(invalid("close outside [low, high]"));
        }
        Ok(())
    }
}

/// Chronologically ordered bars for one stock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub stock_id: String,
    bars: Vec<OhlcBar>,
}

impl PriceSeries {
    pub fn new(stock_id: impl Into<String>, bars: Vec<OhlcBar>) -> Result<Self> {
        for w in bars.windows(2) {
            if w[1].date <= w[0].date {
                return Err(MarketDataError::UnorderedDates(w[1].date));
            }
        }
        for b in &bars {
            b.validate()?;
        }
        Ok(PriceSeries {
            stock_id: stock_id.into(),
            bars,
        })
    }

    pub fn bars(&self) -> &[OhlcBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// Close-to-close simple returns; element `i` is the return of bar `i + 1`.
    pub fn close_returns(&self) -> Vec<f64> {
        self.bars.windows(2).map(|w| w[1].close / w[0].close - 1.0).collect()
    }

    /// Reads `<dir>/<stock_id>.csv`.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let stock_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let file = std::fs::File::open(path).map_err(|e| MarketDataError::Io(e.to_string()))?;
        Self::from_csv_reader(stock_id, file, &path.display().to_string())
    }

    /// Parses `date,open,high,low,close` rows. Errors carry the 1-based line number.
    pub fn from_csv_reader<R: Read>(stock_id: String, reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let parse_err = |line: u64, reason: String| MarketDataError::Parse {
            path: source.to_string(),
            line,
            reason,
        };
        let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let expected = ["date", "open", "high", "low", "close"];
        if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(parse_err(
                1,
                format!("expected header {:?}, found {:?}", expected.join(","), headers),
            ));
        }
        let mut bars: Vec<OhlcBar> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 5 {
                return Err(parse_err(line, format!("expected 5 fields, found {}", rec.len())));
            }
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|e| parse_err(line, format!("bad date {:?}: {e}", &rec[0])))?;
            let mut px = [0.0; 4];
            for (i, slot) in px.iter_mut().enumerate() {
                *slot = rec[i + 1]
                    .parse::<f64>()
                    .map_err(|e| parse_err(line, format!("bad price {:?}: {e}", &rec[i + 1])))?;
            }
            let bar = OhlcBar::new(date, px[0], px[1], px[2], px[3]).map_err(|e| parse_err(line, e.to_string()))?;
            if let Some(prev) = bars.last() {
                if bar.date <= prev.date {
                    return Err(parse_err(line, format!("date {} not after {}", bar.date, prev.date)));
                }
            }
            bars.push(bar);
        }
        PriceSeries::new(stock_id, bars)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("date,open,high,low,close\n");
        for b in &self.bars {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.date.format("%Y-%m-%d"),
                b.open,
                b.high,
                b.low,
                b.close
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Parkinson,
    GarmanKlass,
    SquaredReturn,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Parkinson => "parkinson",
            EstimatorKind::GarmanKlass => "garman_klass",
            EstimatorKind::SquaredReturn => "squared_return",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "parkinson" | "pk" => Ok(EstimatorKind::Parkinson),
            "garman_klass" | "gk" => Ok(EstimatorKind::GarmanKlass),
            "squared_return" => Ok(EstimatorKind::SquaredReturn),
            other => Err(format!("unknown estimator {other:?}")),
        }
    }
}

/// A day's variance estimate in squared-return units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyVolProxy {
    pub date: NaiveDate,
    pub variance: f64,
    pub estimator_kind: EstimatorKind,
}

fn check_price(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 {
        Ok(())
    } else {
        Err(MarketDataError::NonPositivePrice(p))
    }
}

/// Simple return `p_t / p_prev - 1`.
pub fn close_return(p_t: f64, p_prev: f64) -> Result<f64> {
    check_price(p_t)?;
    check_price(p_prev)?;
    Ok(p_t / p_prev - 1.0)
}

/// Open, high, low and close expressed as simple returns over the previous close.
pub fn price_features(bar: &OhlcBar, close_prev: f64) -> Result<[f64; 4]> {
    bar.validate()?;
    check_price(close_prev)?;
    Ok([
        bar.open / close_prev - 1.0,
        bar.high / close_prev - 1.0,
        bar.low / close_prev - 1.0,
        bar.close / close_prev - 1.0,
    ])
}

fn parkinson_variance(high: f64, low: f64) -> f64 {
    let range = (high / low).ln();
    range * range / (4.0 * std::f64::consts::LN_2)
}

fn garman_klass_variance(open: f64, high: f64, low: f64, close: f64) -> f64 {
    let range = (high / low).ln();
    let drift = (close / open).ln();
    0.5 * range * range - (2.0 * std::f64::consts::LN_2 - 1.0) * drift * drift
}

/// `ln(H/L)^2 / (4 ln 2)`. A flat bar (`H == L`) yields zero.
pub fn parkinson(bar: &OhlcBar) -> Result<DailyVolProxy> {
    check_price(bar.high)?;
    check_price(bar.low)?;
    if bar.high < bar.low {
        return Err(MarketDataError::InvalidBar {
            date: bar.date,
            reason: "high below low".into(),
        });
    }
    Ok(DailyVolProxy {
        date: bar.date,
        variance: parkinson_variance(bar.high, bar.low),
        estimator_kind: EstimatorKind::Parkinson,
    })
}

/// `0.5 ln(H/L)^2 - (2 ln 2 - 1) ln(C/O)^2`.
pub fn garman_klass(bar: &OhlcBar) -> Result<DailyVolProxy> {
    bar.validate()?;
    Ok(DailyVolProxy {
        date: bar.date,
        variance: garman_klass_variance(bar.open, bar.high, bar.low, bar.close),
        estimator_kind: EstimatorKind::GarmanKlass,
    })
}

pub fn squared_return_proxy(date: NaiveDate, r_t: f64) -> DailyVolProxy {
    DailyVolProxy {
        date,
        variance: r_t * r_t,
        estimator_kind: EstimatorKind::SquaredReturn,
    }
}

/// Variance of `bar` under `kind`. The squared-return proxy needs the previous close.
pub fn estimate(kind: EstimatorKind, bar: &OhlcBar, close_prev: Option<f64>) -> Result<DailyVolProxy> {
    match kind {
        EstimatorKind::Parkinson => parkinson(bar),
        EstimatorKind::GarmanKlass => garman_klass(bar),
        EstimatorKind::SquaredReturn => {
            let prev = close_prev.ok_or_else(|| MarketDataError::InvalidBar {
                date: bar.date,
                reason: "squared return needs a previous close".into(),
            })?;
            Ok(squared_return_proxy(bar.date, close_return(bar.close, prev)?))
        }
    }
}

/// Log-price extremes of one simulated day, relative to the open.
#[derive(Debug, Clone, Copy)]
struct IntradayPath {
    max: f64,
    min: f64,
    last: f64,
}

fn walk(rng: &mut ChaCha8Rng, step_sd: f64, n_steps: usize) -> IntradayPath {
    let mut x = 0.0f64;
    let mut max = 0.0f64;
    let mut min = 0.0f64;
    for _ in 0..n_steps {
        let z: f64 = StandardNormal.sample(rng);
        x += step_sd * z;
        if x > max {
            max = x;
        } else if x < min {
            min = x;
        }
    }
    IntradayPath { max, min, last: x }
}

fn check_simulation(sigma_daily: f64, n_steps: usize) -> Result<()> {
    if !(sigma_daily.is_finite() && sigma_daily >= 0.0) {
        return Err(MarketDataError::InvalidSimulation(format!(
            "sigma must be finite and non-negative, got {sigma_daily}"
        )));
    }
    if n_steps == 0 {
        return Err(MarketDataError::InvalidSimulation("n_steps must be >= 1".into()));
    }
    Ok(())
}

/// Drives a zero-drift intraday log random walk from `open` and returns the bar.
///
/// Log increments are i.i.d. `N(0, sigma_daily^2 / n_steps)`.
pub fn simulate_intraday(
    rng: &mut ChaCha8Rng,
    date: NaiveDate,
    open: f64,
    sigma_daily: f64,
    n_steps: usize,
) -> Result<OhlcBar> {
    check_simulation(sigma_daily, n_steps)?;
    check_price(open)?;
    let path = walk(rng, sigma_daily / (n_steps as f64).sqrt(), n_steps);
    // Clamp against exp round-off so the bar invariants hold exactly.
    let high = open * path.max.exp();
    let low = open * path.min.exp();
    let close = (open * path.last.exp()).clamp(low, high);
    OhlcBar::new(date, open, high.max(open), low.min(open), close)
}

/// One synthetic bar with open normalized to 100.
pub fn simulate_gbm_day(date: NaiveDate, sigma_daily: f64, n_steps: usize, rng_seed: u64) -> Result<OhlcBar> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    simulate_intraday(&mut rng, date, SIMULATED_OPEN, sigma_daily, n_steps)
}

/// Per-estimator Monte Carlo summary over simulated constant-volatility days.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyStudy {
    pub n_days: usize,
    pub n_steps: usize,
    pub sigma: f64,
    /// Sample means of each estimator divided by `sigma^2`.
    pub mean_ratio_parkinson: f64,
    pub mean_ratio_garman_klass: f64,
    pub mean_ratio_squared_return: f64,
    /// Sample variances of each estimator.
    pub var_parkinson: f64,
    pub var_garman_klass: f64,
    pub var_squared_return: f64,
}

impl EfficiencyStudy {
    /// `Var[squared return] / Var[kind]`.
    pub fn efficiency(&self, kind: EstimatorKind) -> f64 {
        let denom = match kind {
            EstimatorKind::Parkinson => self.var_parkinson,
            EstimatorKind::GarmanKlass => self.var_garman_klass,
            EstimatorKind::SquaredReturn => self.var_squared_return,
        };
        self.var_squared_return / denom
    }

    pub fn mean_ratio(&self, kind: EstimatorKind) -> f64 {
        match kind {
            EstimatorKind::Parkinson => self.mean_ratio_parkinson,
            EstimatorKind::GarmanKlass => self.mean_ratio_garman_klass,
            EstimatorKind::SquaredReturn => self.mean_ratio_squared_return,
        }
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Simulates `n_days` independent days and evaluates all three estimators on each.
pub fn efficiency_study(n_days: usize, n_steps: usize, sigma: f64, rng_seed: u64) -> Result<EfficiencyStudy> {
    if n_days < 1000 {
        return Err(MarketDataError::InvalidSimulation(format!(
            "need at least 1000 days, got {n_days}"
        )));
    }
    check_simulation(sigma, n_steps)?;
    if sigma == 0.0 {
        return Err(MarketDataError::InvalidSimulation("sigma must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let step_sd = sigma / (n_steps as f64).sqrt();
    let mut pk = Vec::with_capacity(n_days);
    let mut gk = Vec::with_capacity(n_days);
    let mut sq = Vec::with_capacity(n_days);
    for _ in 0..n_days {
        let path = walk(&mut rng, step_sd, n_steps);
        let (high, low, close) = (path.max.exp(), path.min.exp(), path.last.exp());
        pk.push(parkinson_variance(high, low));
        gk.push(garman_klass_variance(1.0, high, low, close));
        let r = close - 1.0;
        sq.push(r * r);
    }
    let s2 = sigma * sigma;
    let (m_pk, v_pk) = mean_var(&pk);
    let (m_gk, v_gk) = mean_var(&gk);
    let (m_sq, v_sq) = mean_var(&sq);
    Ok(EfficiencyStudy {
        n_days,
        n_steps,
        sigma,
        mean_ratio_parkinson: m_pk / s2,
        mean_ratio_garman_klass: m_gk / s2,
        mean_ratio_squared_return: m_sq / s2,
        var_parkinson: v_pk,
        var_garman_klass: v_gk,
        var_squared_return: v_sq,
    })
}

/// Relative efficiency of `kind` against the squared-return proxy.
pub fn estimator_efficiency(
    kind: EstimatorKind,
    n_days: usize,
    n_steps: usize,
    sigma: f64,
    rng_seed: u64,
) -> Result<f64> {
    Ok(efficiency_study(n_days, n_steps, sigma, rng_seed)?.efficiency(kind))
}
