//! Sliding-window samples, chronological splits, normalization and batching.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use chrono::{NaiveDate, NaiveTime};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use volcast_core::corpus::{slot_headlines, AlignedCorpus, AlignedDay, Vocabulary};
use volcast_core::marketdata::{garman_klass, parkinson, price_features, PriceSeries};
use volcast_nn::model::{NewsWindow, Sample};

use crate::universe::StockUniverse;
use crate::{PipelineError, Result};

/// Inclusive calendar interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// Samples are assigned to a split by the date of their target bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: DateRange,
    pub validation: DateRange,
    pub test: DateRange,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
        ] {
            if r.start > r.end {
                return Err(PipelineError::Split(format!("{name} range ends before it starts")));
            }
        }
        if self.train.end >= self.validation.start || self.validation.end >= self.test.start {
            return Err(PipelineError::Split(
                "ranges must be ordered train < validation < test without overlap".into(),
            ));
        }
        Ok(())
    }

    /// Cuts a sorted date list into consecutive blocks by fraction; the rest is test.
    pub fn by_fraction(dates: &[NaiveDate], train: f64, validation: f64) -> Result<Self> {
        let n = dates.len();
        let a = (n as f64 * train).round() as usize;
        let b = (n as f64 * (train + validation)).round() as usize;
        if a == 0 || b <= a || b >= n {
            return Err(PipelineError::Split(format!(
                "fractions {train}/{validation} leave an empty split over {n} dates"
            )));
        }
        let spec = SplitSpec {
            train: DateRange {
                start: dates[0],
                end: dates[a - 1],
            },
            validation: DateRange {
                start: dates[a],
                end: dates[b - 1],
            },
            test: DateRange {
                start: dates[b],
                end: dates[n - 1],
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Window geometry shared by every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub t: usize,
    pub l_n: usize,
    pub l_s: usize,
}

/// Precomputed headline vectors keyed by headline id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sidecar {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct SidecarLine {
    id: String,
    vec: Vec<f64>,
}

impl Sidecar {
    /// One `{"id": str, "vec": [..]}` object per line, all of one width.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut out = Sidecar::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SidecarLine =
                serde_json::from_str(&line).map_err(|e| PipelineError::Sidecar(format!("line {}: {e}", i + 1)))?;
            if out.vectors.is_empty() {
                out.dim = rec.vec.len();
            }
            if rec.vec.len() != out.dim || out.dim == 0 {
                return Err(PipelineError::Sidecar(format!(
                    "line {}: expected {} values, found {}",
                    i + 1,
                    out.dim,
                    rec.vec.len()
                )));
            }
            out.vectors.insert(rec.id, rec.vec);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub stock_id: String,
    pub sector: String,
    /// Last day of the window.
    pub date: NaiveDate,
    pub target_date: NaiveDate,
    /// Square roots of the Garman-Klass and Parkinson variances of the target bar.
    pub gk_vol: f64,
    pub pk_vol: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub meta: Vec<SampleMeta>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn push(&mut self, s: Sample, m: SampleMeta) {
        self.samples.push(s);
        self.meta.push(m);
    }
}

/// Days that produced no sample, per stock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    /// Fewer than `t` earlier bars.
    pub insufficient_history: usize,
    /// Last bar of the series, nothing to predict.
    pub no_target: usize,
    /// Target date outside every split range.
    pub outside_splits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub window: WindowSpec,
    pub split: SplitSpec,
    pub train: SampleSet,
    pub validation: SampleSet,
    pub test: SampleSet,
    pub skipped: BTreeMap<String, SkipCounts>,
}

impl Dataset {
    /// Every test target date lies after every date any training or
    /// validation sample touches.
    pub fn check_no_leakage(&self) -> Result<()> {
        let seen = self
            .train
            .meta
            .iter()
            .chain(&self.validation.meta)
            .map(|m| m.target_date.max(m.date))
            .max();
        let first_test = self.test.meta.iter().map(|m| m.target_date).min();
        if let (Some(seen), Some(first)) = (seen, first_test) {
            if seen >= first {
                return Err(PipelineError::Leakage(format!(
                    "training data reaches {seen}, test starts at {first}"
                )));
            }
        }
        Ok(())
    }
}

fn news_day(
    day: Option<&AlignedDay>,
    vocab: &Vocabulary,
    window: &WindowSpec,
    cutoff: chrono::NaiveDateTime,
    sidecar: Option<&Sidecar>,
    tokens: &mut Vec<u32>,
    vectors: &mut Option<Vec<f64>>,
) -> Result<()> {
    let slots = match day {
        Some(d) => slot_headlines(d, vocab, window.l_n),
        None => Vec::new(),
    };
    for (h, _) in &slots {
        if h.local_time > cutoff {
            return Err(PipelineError::Leakage(format!(
                "headline {} at {} is past the {} cutoff",
                h.id, h.local_time, cutoff
            )));
        }
    }
    let start = tokens.len();
    tokens.resize(start + window.l_n * window.l_s, 0);
    for (k, (_, ids)) in slots.iter().enumerate() {
        for (c, &id) in ids.iter().take(window.l_s).enumerate() {
            tokens[start + k * window.l_s + c] = id;
        }
    }
    if let (Some(out), Some(side)) = (vectors.as_mut(), sidecar) {
        for k in 0..window.l_n {
            match slots.get(k) {
                Some((h, _)) => {
                    let v = side
                        .vectors
                        .get(&h.id)
                        .ok_or_else(|| PipelineError::Sidecar(format!("no vector for headline {}", h.id)))?;
                    out.extend_from_slice(v);
                }
                None => out.extend(std::iter::repeat_n(0.0, side.dim)),
            }
        }
    }
    Ok(())
}

/// Builds every sample whose target bar falls in one of the split ranges.
///
/// The sample for day `t` uses the price features and aligned news of the
/// `window.t` trading days ending at `t` and targets the square-rooted
/// Garman-Klass variance of day `t + 1`.
pub fn build_samples(
    prices: &[PriceSeries],
    corpus: &AlignedCorpus,
    vocab: &Vocabulary,
    universe: &StockUniverse,
    split: &SplitSpec,
    window: &WindowSpec,
    sidecar: Option<&Sidecar>,
) -> Result<Dataset> {
    split.validate()?;
    if window.t == 0 || window.l_n == 0 || window.l_s == 0 {
        return Err(PipelineError::Config("window sizes must be >= 1".into()));
    }
    let close = NaiveTime::from_hms_opt(16, 0, 0).expect("valid time");
    let mut ds = Dataset {
        window: *window,
        split: *split,
        train: SampleSet::default(),
        validation: SampleSet::default(),
        test: SampleSet::default(),
        skipped: BTreeMap::new(),
    };
    for series in prices {
        let stock = series.stock_id.as_str();
        let index = universe
            .index_of(stock)
            .ok_or_else(|| PipelineError::Universe(format!("stock {stock} is not in the universe")))?;
        let sector = universe.sector(stock).unwrap_or_default().to_string();
        let bars = series.bars();
        let mut features = Vec::with_capacity(bars.len());
        features.push(None);
        for w in bars.windows(2) {
            features.push(Some(price_features(&w[1], w[0].close)?));
        }
        let mut skip = SkipCounts::default();
        for i in 0..bars.len() {
            if i + 1 >= bars.len() {
                skip.no_target += 1;
                continue;
            }
            if i < window.t {
                skip.insufficient_history += 1;
                continue;
            }
            let target_bar = &bars[i + 1];
            let set = if split.train.contains(target_bar.date) {
                &mut ds.train
            } else if split.validation.contains(target_bar.date) {
                &mut ds.validation
            } else if split.test.contains(target_bar.date) {
                &mut ds.test
            } else {
                skip.outside_splits += 1;
                continue;
            };
            let days = i + 1 - window.t..=i;
            let mut price_window = Vec::with_capacity(window.t * 4);
            for j in days.clone() {
                price_window.extend_from_slice(&features[j].expect("j >= 1"));
            }
            let cutoff = bars[i].date.and_time(close);
            let mut tokens = Vec::with_capacity(window.t * window.l_n * window.l_s);
            let mut vectors = sidecar.map(|_| Vec::new());
            for j in days {
                news_day(
                    corpus.day(stock, bars[j].date),
                    vocab,
                    window,
                    cutoff,
                    sidecar,
                    &mut tokens,
                    &mut vectors,
                )?;
            }
            let gk_vol = garman_klass(target_bar)?.variance.sqrt();
            let pk_vol = parkinson(target_bar)?.variance.sqrt();
            set.push(
                Sample {
                    price_window,
                    news: NewsWindow {
                        days: window.t,
                        l_n: window.l_n,
                        l_s: window.l_s,
                        tokens,
                        vectors,
                    },
                    stock: index,
                    target: gk_vol,
                },
                SampleMeta {
                    stock_id: stock.to_string(),
                    sector: sector.clone(),
                    date: bars[i].date,
                    target_date: target_bar.date,
                    gk_vol,
                    pk_vol,
                },
            );
        }
        ds.skipped.insert(stock.to_string(), skip);
    }
    ds.check_no_leakage()?;
    Ok(ds)
}

/// Standardizes price features per column and the target, with statistics
/// from the training split only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub price_mean: [f64; 4],
    pub price_std: [f64; 4],
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len().max(1) as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    let sd = var.sqrt();
    (m, if sd > 0.0 { sd } else { 1.0 })
}

impl Normalizer {
    pub fn fit(samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(PipelineError::EmptySplit("train"));
        }
        let mut price_mean = [0.0; 4];
        let mut price_std = [0.0; 4];
        for c in 0..4 {
            (price_mean[c], price_std[c]) = mean_std(
                samples
                    .iter()
                    .flat_map(|s| s.price_window.iter().skip(c).step_by(4).copied()),
            );
        }
        let (target_mean, target_std) = mean_std(samples.iter().map(|s| s.target));
        Ok(Normalizer {
            price_mean,
            price_std,
            target_mean,
            target_std,
        })
    }

    pub fn apply(&self, s: &Sample) -> Sample {
        let mut out = s.clone();
        for (i, v) in out.price_window.iter_mut().enumerate() {
            *v = (*v - self.price_mean[i % 4]) / self.price_std[i % 4];
        }
        out.target = (s.target - self.target_mean) / self.target_std;
        out
    }

    pub fn apply_all(&self, samples: &[Sample]) -> Vec<Sample> {
        samples.iter().map(|s| self.apply(s)).collect()
    }

    /// Back to volatility units.
    pub fn denormalize(&self, y: f64) -> f64 {
        y * self.target_std + self.target_mean
    }
}

/// Shuffled index batches over a pooled multi-stock sample set, reshuffled
/// on every call to [`BatchSampler::epoch`].
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(PipelineError::EmptySplit("batches"));
        }
        if batch_size == 0 {
            return Err(PipelineError::Config("batch_size must be >= 1".into()));
        }
        Ok(BatchSampler {
            order: (0..n).collect(),
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        self.order.shuffle(&mut self.rng);
        self.order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// The batches of the first epoch for `seed`.
pub fn multi_stock_batches(n: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    Ok(BatchSampler::new(n, batch_size, seed)?.epoch())
}
