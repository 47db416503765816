//! End-to-end run on a synthetic news-shock market: the full network, its
//! daily-averaging variant, the price-only variant and GARCH(1,1).

use std::time::Instant;

use serde::{Deserialize, Serialize};
use volcast_core::corpus::{align, build_vocab, AlignedCorpus, Vocabulary};
use volcast_core::garch::FitOptions;
use volcast_core::marketdata::EstimatorKind;
use volcast_nn::autodiff::Tensor;
use volcast_nn::model::{Model, ModelConfig};

use crate::dataset::{build_samples, Dataset, Normalizer, SplitSpec, WindowSpec};
use crate::evaluation::{evaluate_forecasts, garch_forecasts, model_forecasts, SectorReport};
use crate::synthetic::{generate, weekdays, SyntheticConfig, SyntheticMarket};
use crate::train::{train, EpochRecord, TrainConfig};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedConfig {
    pub synthetic: SyntheticConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub garch: FitOptions,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            synthetic: SyntheticConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig {
                max_epochs: 20,
                patience: 4,
                ..TrainConfig::default()
            },
            train_fraction: 0.7,
            validation_fraction: 0.15,
            garch: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// News with relevance attention over each day's headlines.
    Full,
    /// News with a plain mean over each day's headlines.
    DailyAverage,
    PriceOnly,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::DailyAverage, Variant::PriceOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::DailyAverage => "daily_average",
            Variant::PriceOnly => "price_only",
        }
    }

    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => c.nra_enabled = true,
            Variant::DailyAverage => c.nra_enabled = false,
            Variant::PriceOnly => c.price_only = true,
        }
        c
    }
}

/// Everything up to the training stage.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub market: SyntheticMarket,
    pub corpus: AlignedCorpus,
    pub vocab: Vocabulary,
    pub dataset: Dataset,
    pub normalizer: Normalizer,
    pub model: ModelConfig,
}

impl Prepared {
    pub fn embeddings(&self) -> Result<Tensor> {
        Ok(Tensor::new(
            vec![self.vocab.len() + 1, self.vocab.dim],
            self.vocab.matrix().to_vec(),
        )?)
    }
}

pub fn prepare(cfg: &PlantedConfig, seed: u64) -> Result<Prepared> {
    let market = generate(&cfg.synthetic, seed)?;
    let corpus = align(&market.headlines, &market.calendar);
    let vocab = build_vocab(corpus.all_days(), &market.embeddings);
    let dates = weekdays(cfg.synthetic.start, cfg.synthetic.n_days);
    let split = SplitSpec::by_fraction(&dates, cfg.train_fraction, cfg.validation_fraction)?;
    let window = WindowSpec {
        t: cfg.model.t,
        l_n: cfg.model.l_n,
        l_s: cfg.model.l_s,
    };
    let dataset = build_samples(&market.prices, &corpus, &vocab, &market.universe, &split, &window, None)?;
    let normalizer = Normalizer::fit(&dataset.train.samples)?;
    let model = ModelConfig {
        n_stocks: market.universe.len(),
        d_w: vocab.dim,
        ..cfg.model.clone()
    };
    Ok(Prepared {
        market,
        corpus,
        vocab,
        dataset,
        normalizer,
        model,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub report: SectorReport,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedOutcome {
    pub seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub variants: Vec<VariantResult>,
    pub garch: SectorReport,
}

impl PlantedOutcome {
    pub fn variant(&self, v: Variant) -> Option<&VariantResult> {
        self.variants.iter().find(|r| r.variant == v)
    }
}

/// Trains one variant on prepared data and scores it on the test split.
pub fn run_variant(p: &Prepared, cfg: &TrainConfig, variant: Variant, seed: u64) -> Result<VariantResult> {
    let start = Instant::now();
    let model = Model::new(variant.apply(&p.model), p.embeddings()?, seed)?;
    let train_set = p.normalizer.apply_all(&p.dataset.train.samples);
    let val_set = p.normalizer.apply_all(&p.dataset.validation.samples);
    let cfg = TrainConfig { seed, ..*cfg };
    let out = train(model, &train_set, &val_set, &cfg)?;
    let forecasts = model_forecasts(&out.model, &p.normalizer, &p.dataset.test.samples, cfg.eval_batch)?;
    let report = evaluate_forecasts(&forecasts, &p.dataset.test.meta, EstimatorKind::GarmanKlass)?;
    Ok(VariantResult {
        variant,
        report,
        history: out.history,
        best_epoch: out.best_epoch,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_garch(p: &Prepared, opts: &FitOptions) -> Result<SectorReport> {
    let meta = &p.dataset.test.meta;
    let (forecasts, _) = garch_forecasts(&p.market.prices, p.dataset.split.validation.end, meta, opts)?;
    evaluate_forecasts(&forecasts, meta, EstimatorKind::GarmanKlass)
}

pub fn run_planted(cfg: &PlantedConfig, seed: u64) -> Result<PlantedOutcome> {
    let p = prepare(cfg, seed)?;
    let variants = Variant::ALL
        .iter()
        .map(|&v| run_variant(&p, &cfg.train, v, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(PlantedOutcome {
        seed,
        n_train: p.dataset.train.len(),
        n_validation: p.dataset.validation.len(),
        n_test: p.dataset.test.len(),
        variants,
        garch: run_garch(&p, &cfg.garch)?,
    })
}
