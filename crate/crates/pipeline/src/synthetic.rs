//! Synthetic news-shock market: GARCH(1,1) daily variance, intraday random-walk
//! bars, and headlines where a designated token announces a volatility jump on
//! the following trading day.

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, Duration, NaiveDate, NaiveTime, TimeZone, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use volcast_core::corpus::{Embeddings, HeadlineRecord, TradingCalendar};
use volcast_core::garch::GarchParams;
use volcast_core::marketdata::{simulate_intraday, PriceSeries, SIMULATED_OPEN};

use crate::universe::StockUniverse;
use crate::{PipelineError, Result};

pub const SHOCK_TOKEN: &str = "halted";
const SECTORS: [&str; 3] = ["Technology", "Financials", "Energy"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    pub start: NaiveDate,
    pub garch: GarchParams,
    /// Volatility multiplier on the trading day after a shock headline.
    pub lambda: f64,
    pub shock_prob: f64,
    /// Chance of distractor-only news on a day without a shock.
    pub news_prob: f64,
    /// Most distractor headlines on any day; shock days get at least one.
    pub max_distractors: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub vocab_size: usize,
    /// Share of words with no pretrained vector.
    pub oov_rate: f64,
    pub d_w: usize,
    pub intraday_steps: usize,
    /// Share of headlines stamped after the previous session's close.
    pub after_close_share: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_stocks: 5,
            n_days: 1500,
            start: NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date"),
            garch: GarchParams {
                mu: 0.0,
                a0: 2e-6,
                a1: 0.05,
                b1: 0.9,
            },
            lambda: 2.0,
            shock_prob: 0.1,
            news_prob: 0.4,
            max_distractors: 3,
            min_words: 3,
            max_words: 8,
            vocab_size: 200,
            oov_rate: 0.05,
            d_w: 16,
            intraday_steps: 100,
            after_close_share: 0.25,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(format!("synthetic: {m}")));
        if self.n_stocks == 0 || self.n_days < 2 {
            return bad("need at least one stock and two days");
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        for (name, p) in [
            ("shock_prob", self.shock_prob),
            ("news_prob", self.news_prob),
            ("oov_rate", self.oov_rate),
            ("after_close_share", self.after_close_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.min_words == 0 || self.max_words < self.min_words {
            return bad("need 1 <= min_words <= max_words");
        }
        if self.vocab_size == 0 || self.d_w == 0 || self.intraday_steps == 0 {
            return bad("vocab_size, d_w and intraday_steps must be positive");
        }
        self.garch.validate()?;
        if self.effective_persistence() >= 1.0 {
            return bad("shocks make the variance process explosive");
        }
        Ok(())
    }

    /// `b1 + a1 E[m^2]` where the shock multiplier `m` is `lambda` with
    /// probability `shock_prob` and 1 otherwise.
    pub fn effective_persistence(&self) -> f64 {
        let m2 = 1.0 + self.shock_prob * (self.lambda * self.lambda - 1.0);
        self.garch.b1 + self.garch.a1 * m2
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub prices: Vec<PriceSeries>,
    pub headlines: Vec<HeadlineRecord>,
    pub embeddings: Embeddings,
    pub universe: StockUniverse,
    pub calendar: TradingCalendar,
    /// Trading days carrying a shock headline, per stock.
    pub shock_days: BTreeMap<String, Vec<NaiveDate>>,
}

/// Weekdays from `start`; the synthetic market has no holidays.
pub fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn word(i: usize) -> String {
    format!("w{i:03}")
}

fn oov_word(i: usize) -> String {
    format!("zz{i:03}")
}

fn random_embeddings(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig) -> Embeddings {
    let mut vectors = HashMap::new();
    let tokens = (0..cfg.vocab_size).map(word).chain([SHOCK_TOKEN.to_string()]);
    for t in tokens {
        let v = (0..cfg.d_w).map(|_| rng.random_range(-1.0..1.0)).collect();
        vectors.insert(t, v);
    }
    Embeddings::new(cfg.d_w, vectors)
}

fn headline_words(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, shock: bool) -> Vec<String> {
    let n = rng.random_range(cfg.min_words..=cfg.max_words);
    let mut words: Vec<String> = (0..n)
        .map(|_| {
            let i = rng.random_range(0..cfg.vocab_size);
            if rng.random_bool(cfg.oov_rate) {
                oov_word(i)
            } else {
                word(i)
            }
        })
        .collect();
    if shock {
        let at = rng.random_range(0..=words.len());
        words.insert(at, SHOCK_TOKEN.to_string());
    }
    words
}

/// A UTC instant inside the session of `day` (09:45-15:45 New York in either
/// offset), or after the close of `prev` when given.
fn stamp(rng: &mut ChaCha8Rng, day: NaiveDate, prev: Option<NaiveDate>) -> String {
    let (date, lo, hi) = match prev {
        Some(p) => (p, 21 * 3600 + 30 * 60, 23 * 3600 + 30 * 60),
        None => (day, 14 * 3600 + 45 * 60, 19 * 3600 + 45 * 60),
    };
    let secs = rng.random_range(lo..hi);
    let time = NaiveTime::from_num_seconds_from_midnight_opt(secs, 0).expect("in range");
    Utc.from_utc_datetime(&date.and_time(time)).to_rfc3339()
}

/// Builds the whole market from one seed.
pub fn generate(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticMarket> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embeddings = random_embeddings(&mut rng, cfg);
    let dates = weekdays(cfg.start, cfg.n_days);
    let universe = StockUniverse::new(
        (0..cfg.n_stocks)
            .map(|i| (format!("SYN{i}"), SECTORS[i % SECTORS.len()].to_string()))
            .collect(),
    )?;
    let g = cfg.garch;
    let mut prices = Vec::new();
    let mut headlines = Vec::new();
    let mut shock_days = BTreeMap::new();
    for stock in universe.stocks() {
        let mut bars = Vec::with_capacity(cfg.n_days);
        let mut shocks = Vec::new();
        let mut s2 = g.unconditional_variance();
        let mut prev_eps = 0.0;
        let mut prev_close = SIMULATED_OPEN;
        let mut shocked_yesterday = false;
        for (t, &date) in dates.iter().enumerate() {
            if t > 0 {
                s2 = g.a0 + g.a1 * prev_eps * prev_eps + g.b1 * s2;
            }
            let sigma = s2.sqrt() * if shocked_yesterday { cfg.lambda } else { 1.0 };
            let bar = simulate_intraday(&mut rng, date, prev_close, sigma, cfg.intraday_steps)?;
            prev_eps = (bar.close / bar.open).ln() - g.mu;
            prev_close = bar.close;
            bars.push(bar);

            let shock = rng.random_bool(cfg.shock_prob);
            let distractors = if shock || rng.random_bool(cfg.news_prob) {
                rng.random_range(1..=cfg.max_distractors.max(1))
            } else {
                0
            };
            let mut texts: Vec<Vec<String>> = (0..distractors).map(|_| headline_words(&mut rng, cfg, false)).collect();
            if shock {
                let at = rng.random_range(0..=texts.len());
                texts.insert(at, headline_words(&mut rng, cfg, true));
                shocks.push(date);
            }
            for words in texts {
                let prev = (t > 0 && rng.random_bool(cfg.after_close_share)).then(|| dates[t - 1]);
                let ts = stamp(&mut rng, date, prev);
                headlines.push(HeadlineRecord::new(stock, &ts, words.join(" "))?);
            }
            shocked_yesterday = shock;
        }
        prices.push(PriceSeries::new(stock, bars)?);
        shock_days.insert(stock.to_string(), shocks);
    }
    Ok(SyntheticMarket {
        prices,
        headlines,
        embeddings,
        universe,
        calendar: TradingCalendar::default(),
        shock_days,
    })
}
