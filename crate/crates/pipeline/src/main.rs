use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use volcast_core::corpus::{
    align, build_vocab, category_histogram, filter_by_surface_forms, headline_to_json, histogram_tsv,
    parse_headlines_jsonl, AlignedCorpus, Embeddings, SurfaceForms, TradingCalendar, Vocabulary,
};
use volcast_core::garch::{
    filter_variance, fit_with, forecast_multi_step, simulate_garch_path, FitOptions, FitSummary, GarchParams,
};
use volcast_core::marketdata::{
    efficiency_study, estimate, simulate_intraday, EstimatorKind, PriceSeries, SIMULATED_OPEN,
};
use volcast_nn::autodiff::{Checkpoint, Tensor};
use volcast_nn::model::{Model, ModelConfig};
use volcast_nn::suite;
use volcast_pipeline::artifacts::TrainedModel;
use volcast_pipeline::dataset::{build_samples, Dataset, Normalizer, SampleSet, Sidecar, SplitSpec, WindowSpec};
use volcast_pipeline::evaluation::{evaluate_forecasts, garch_forecasts, model_forecasts, reports_tsv, SectorReport};
use volcast_pipeline::synthetic::{generate, weekdays, SyntheticConfig};
use volcast_pipeline::train::{train, TrainConfig};
use volcast_pipeline::universe::StockUniverse;

const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "volcast", version, about = "Volatility forecasting from prices and news")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file or directory; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Random-walk OHLC bars at constant daily volatility, as CSV.
    SimulateGbm(Common),
    /// GARCH(1,1) returns and conditional variances, as TSV.
    SimulateGarch(Common),
    /// Daily variance proxies from an OHLC CSV, as TSV.
    Estimate(Common),
    /// Maximum-likelihood GARCH(1,1) fit, as JSON.
    GarchFit(Common),
    /// Multi-step GARCH variance forecasts, as JSON.
    GarchForecast(Common),
    /// Parses and filters a headline JSONL file, writing accepted records as JSONL.
    Ingest(Common),
    /// Aligns headlines to trading days, as JSON.
    Align(Common),
    /// Windows, splits and encodes samples, as JSON.
    BuildDataset(Common),
    /// Trains a network on a built dataset and writes its checkpoint.
    Train(Common),
    /// Forecasts for one split of a built dataset, as TSV.
    Predict(Common),
    /// Scores checkpoints and GARCH(1,1) on the test split, as TSV.
    Evaluate(Common),
    /// Finite-difference check of every op and encoder, as TSV.
    Gradcheck(Common),
    /// Monte Carlo efficiency of the range estimators, as JSON.
    Efficiency(Common),
    /// Writes a synthetic news-shock market to a directory.
    Synthesize(Common),
}

fn load_config<T: DeserializeOwned + Default>(c: &Common) -> anyhow::Result<T> {
    match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(T::default()),
    }
}

fn emit(c: &Common, text: &str) -> anyhow::Result<()> {
    match &c.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn require(p: &Option<PathBuf>, field: &str) -> anyhow::Result<PathBuf> {
    p.clone().with_context(|| format!("config field {field:?} is required"))
}

fn read_json<T: DeserializeOwned>(p: &Path) -> anyhow::Result<T> {
    let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", p.display()))
}

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").expect("valid literal")
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GbmConfig {
    stock_id: String,
    n_days: usize,
    sigma: f64,
    steps: usize,
    start: NaiveDate,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            stock_id: "SIM".into(),
            n_days: 250,
            sigma: 0.02,
            steps: 390,
            start: date("2016-01-04"),
        }
    }
}

fn simulate_gbm(c: &Common) -> anyhow::Result<()> {
    let cfg: GbmConfig = load_config(c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut open = SIMULATED_OPEN;
    let mut bars = Vec::with_capacity(cfg.n_days);
    for d in weekdays(cfg.start, cfg.n_days) {
        let bar = simulate_intraday(&mut rng, d, open, cfg.sigma, cfg.steps)?;
        open = bar.close;
        bars.push(bar);
    }
    emit(c, &PriceSeries::new(cfg.stock_id, bars)?.to_csv_string())
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GarchSimConfig {
    params: GarchParams,
    n: usize,
}

impl Default for GarchSimConfig {
    fn default() -> Self {
        GarchSimConfig {
            params: GarchParams {
                mu: 0.0,
                a0: 1e-6,
                a1: 0.1,
                b1: 0.85,
            },
            n: 1000,
        }
    }
}

fn simulate_garch(c: &Common) -> anyhow::Result<()> {
    let cfg: GarchSimConfig = load_config(c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let (returns, variances) = simulate_garch_path(&cfg.params, cfg.n, &mut rng)?;
    let mut out = String::from("t\treturn\tvariance\n");
    for (t, (r, v)) in returns.iter().zip(&variances).enumerate() {
        out.push_str(&format!("{}\t{r}\t{v}\n", t + 1));
    }
    emit(c, &out)
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct EstimateConfig {
    input: Option<PathBuf>,
    estimator: Option<EstimatorKind>,
}

fn estimate_cmd(c: &Common) -> anyhow::Result<()> {
    let cfg: EstimateConfig = load_config(c)?;
    let series = PriceSeries::from_csv_path(require(&cfg.input, "input")?)?;
    let kind = cfg.estimator.unwrap_or(EstimatorKind::GarmanKlass);
    let mut out = String::from("date\testimator\tvariance\tvolatility\n");
    let bars = series.bars();
    for (i, bar) in bars.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| bars[j].close);
        if kind == EstimatorKind::SquaredReturn && prev.is_none() {
            continue;
        }
        let p = estimate(kind, bar, prev)?;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.date,
            kind,
            p.variance,
            p.variance.sqrt()
        ));
    }
    emit(c, &out)
}

/// A return series from an OHLC CSV (`prices`) or a TSV whose `return`
/// column, or first column without a header, holds the returns.
#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ReturnsSource {
    prices: Option<PathBuf>,
    returns: Option<PathBuf>,
}

impl ReturnsSource {
    fn load(&self) -> anyhow::Result<Vec<f64>> {
        match (&self.prices, &self.returns) {
            (Some(p), None) => Ok(PriceSeries::from_csv_path(p)?.close_returns()),
            (None, Some(p)) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
                let mut col = 0;
                if let Some(first) = lines.peek() {
                    let cells: Vec<&str> = first.split('\t').collect();
                    if cells[0].trim().parse::<f64>().is_err() {
                        col = cells
                            .iter()
                            .position(|c| c.trim() == "return")
                            .context("no return column")?;
                        lines.next();
                    }
                }
                lines
                    .enumerate()
                    .map(|(i, l)| {
                        let cell = l.split('\t').nth(col).unwrap_or("");
                        cell.trim()
                            .parse::<f64>()
                            .with_context(|| format!("row {}: bad return {cell:?}", i + 1))
                    })
                    .collect()
            }
            _ => bail!("give exactly one of \"prices\" or \"returns\""),
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct GarchFitConfig {
    #[serde(flatten)]
    source: ReturnsSource,
    options: Option<FitOptions>,
}

fn garch_fit(c: &Common) -> anyhow::Result<()> {
    let cfg: GarchFitConfig = load_config(c)?;
    let returns = cfg.source.load()?;
    let opts = FitOptions {
        seed: c.seed,
        ..cfg.options.unwrap_or_default()
    };
    emit(c, &json(&fit_with(&returns, &opts)?.summary())?)
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GarchForecastConfig {
    #[serde(flatten)]
    source: ReturnsSource,
    horizon: usize,
    /// A `garch-fit` result; when omitted the series is fitted first.
    fit: Option<PathBuf>,
    options: Option<FitOptions>,
}

impl Default for GarchForecastConfig {
    fn default() -> Self {
        GarchForecastConfig {
            source: ReturnsSource::default(),
            horizon: 10,
            fit: None,
            options: None,
        }
    }
}

fn garch_forecast(c: &Common) -> anyhow::Result<()> {
    let cfg: GarchForecastConfig = load_config(c)?;
    let returns = cfg.source.load()?;
    let fit = match &cfg.fit {
        Some(p) => {
            let summary: FitSummary = read_json(p)?;
            filter_variance(&returns, &summary.params()?)?
        }
        None => fit_with(
            &returns,
            &FitOptions {
                seed: c.seed,
                ..cfg.options.unwrap_or_default()
            },
        )?,
    };
    emit(c, &json(&forecast_multi_step(&fit, cfg.horizon)?)?)
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct IngestConfig {
    headlines: Option<PathBuf>,
    surface_forms: Option<PathBuf>,
}

fn ingest(c: &Common) -> anyhow::Result<()> {
    let cfg: IngestConfig = load_config(c)?;
    let path = require(&cfg.headlines, "headlines")?;
    let f = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let (mut records, rejected) = parse_headlines_jsonl(BufReader::new(f))?;
    for r in &rejected {
        eprintln!("{}", serde_json::json!({"rejected_line": r.line, "reason": r.reason}));
    }
    if let Some(p) = &cfg.surface_forms {
        let forms = SurfaceForms::from_json(&fs::read_to_string(p)?)?;
        records = filter_by_surface_forms(records, &forms);
    }
    let mut out = String::new();
    for r in &records {
        out.push_str(&headline_to_json(r));
        out.push('\n');
    }
    emit(c, &out)
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct AlignConfig {
    headlines: Option<PathBuf>,
    holidays: Option<PathBuf>,
    /// Also write the time-category histogram here.
    histogram: Option<PathBuf>,
}

fn load_calendar(p: &Option<PathBuf>) -> anyhow::Result<TradingCalendar> {
    Ok(match p {
        Some(p) => {
            TradingCalendar::from_reader(fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?
        }
        None => TradingCalendar::default(),
    })
}

fn align_cmd(c: &Common) -> anyhow::Result<()> {
    let cfg: AlignConfig = load_config(c)?;
    let path = require(&cfg.headlines, "headlines")?;
    let (records, rejected) = parse_headlines_jsonl(BufReader::new(fs::File::open(&path)?))?;
    if !rejected.is_empty() {
        bail!(
            "{} invalid headline lines in {}; run ingest first",
            rejected.len(),
            path.display()
        );
    }
    let calendar = load_calendar(&cfg.holidays)?;
    if let Some(h) = &cfg.histogram {
        fs::write(h, histogram_tsv(&category_histogram(&records, &calendar)))?;
    }
    emit(c, &json(&align(&records, &calendar))?)
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BuildConfig {
    /// Directory of `<stock_id>.csv` files, one per universe stock.
    prices_dir: Option<PathBuf>,
    aligned: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    universe: Option<PathBuf>,
    sidecar: Option<PathBuf>,
    split: Option<SplitSpec>,
    window: WindowSpec,
}

impl Default for BuildConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        BuildConfig {
            prices_dir: None,
            aligned: None,
            embeddings: None,
            universe: None,
            sidecar: None,
            split: None,
            window: WindowSpec {
                t: m.t,
                l_n: m.l_n,
                l_s: m.l_s,
            },
        }
    }
}

/// A built dataset with the vocabulary its token ids refer to.
#[derive(Serialize, Deserialize)]
struct DatasetFile {
    dataset: Dataset,
    vocab: Vocabulary,
    sidecar_dim: Option<usize>,
}

fn load_prices(dir: &Path, universe: &StockUniverse) -> anyhow::Result<Vec<PriceSeries>> {
    universe
        .stocks()
        .map(|s| {
            let p = dir.join(format!("{s}.csv"));
            PriceSeries::from_csv_path(&p).with_context(|| format!("loading {}", p.display()))
        })
        .collect()
}

fn build_dataset(c: &Common) -> anyhow::Result<()> {
    let cfg: BuildConfig = load_config(c)?;
    let universe = StockUniverse::from_path(require(&cfg.universe, "universe")?)?;
    let prices = load_prices(&require(&cfg.prices_dir, "prices_dir")?, &universe)?;
    let corpus: AlignedCorpus = match &cfg.aligned {
        Some(p) => read_json(p)?,
        None => AlignedCorpus::default(),
    };
    let emb_path = require(&cfg.embeddings, "embeddings")?;
    let embeddings = Embeddings::from_reader(fs::File::open(&emb_path)?)?;
    let vocab = build_vocab(corpus.all_days(), &embeddings);
    let sidecar = match &cfg.sidecar {
        Some(p) => Some(Sidecar::from_reader(BufReader::new(fs::File::open(p)?))?),
        None => None,
    };
    let split = cfg.split.context("config field \"split\" is required")?;
    let dataset = build_samples(
        &prices,
        &corpus,
        &vocab,
        &universe,
        &split,
        &cfg.window,
        sidecar.as_ref(),
    )?;
    for (stock, skip) in &dataset.skipped {
        eprintln!("{}", serde_json::json!({"stock": stock, "skipped": skip}));
    }
    let file = DatasetFile {
        dataset,
        vocab,
        sidecar_dim: sidecar.map(|s| s.dim),
    };
    emit(c, &serde_json::to_string(&file)?)
}

fn read_dataset(p: &Path) -> anyhow::Result<DatasetFile> {
    let mut f: DatasetFile = read_json(p)?;
    f.vocab = f.vocab.reindex();
    Ok(f)
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TrainCmdConfig {
    dataset: Option<PathBuf>,
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

fn train_cmd(c: &Common) -> anyhow::Result<()> {
    let cfg: TrainCmdConfig = load_config(c)?;
    let file = read_dataset(&require(&cfg.dataset, "dataset")?)?;
    let ds = &file.dataset;
    let model_cfg = ModelConfig {
        t: ds.window.t,
        l_n: ds.window.l_n,
        l_s: ds.window.l_s,
        d_w: file.vocab.dim,
        transferred_dim: file.sidecar_dim.or(cfg.model.as_ref().and_then(|m| m.transferred_dim)),
        n_stocks: ds
            .train
            .samples
            .iter()
            .chain(&ds.validation.samples)
            .chain(&ds.test.samples)
            .map(|s| s.stock + 1)
            .max()
            .unwrap_or(1),
        ..cfg.model.unwrap_or_default()
    };
    let embeddings = Tensor::new(vec![file.vocab.len() + 1, file.vocab.dim], file.vocab.matrix().to_vec())?;
    let model = Model::new(model_cfg, embeddings, c.seed)?;
    let normalizer = Normalizer::fit(&ds.train.samples)?;
    let train_cfg = TrainConfig {
        seed: c.seed,
        ..cfg.train.unwrap_or_default()
    };
    let out = train(
        model,
        &normalizer.apply_all(&ds.train.samples),
        &normalizer.apply_all(&ds.validation.samples),
        &train_cfg,
    )?;
    for h in &out.history {
        eprintln!("{}", serde_json::to_string(h)?);
    }
    let trained = TrainedModel {
        model: out.model,
        normalizer,
        history: out.history,
        best_epoch: out.best_epoch,
    };
    emit(c, &trained.to_checkpoint()?.to_json())
}

#[derive(Deserialize, Clone, Copy, Default, PartialEq)]
#[serde(rename_all = "snake_case")]
enum SplitName {
    Train,
    Validation,
    #[default]
    Test,
}

fn split_of(ds: &Dataset, s: SplitName) -> &SampleSet {
    match s {
        SplitName::Train => &ds.train,
        SplitName::Validation => &ds.validation,
        SplitName::Test => &ds.test,
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct PredictConfig {
    checkpoint: Option<PathBuf>,
    dataset: Option<PathBuf>,
    split: SplitName,
}

fn load_trained(p: &Path) -> anyhow::Result<TrainedModel> {
    Ok(TrainedModel::from_checkpoint(&Checkpoint::load(p)?)?)
}

fn predict(c: &Common) -> anyhow::Result<()> {
    let cfg: PredictConfig = load_config(c)?;
    let trained = load_trained(&require(&cfg.checkpoint, "checkpoint")?)?;
    let file = read_dataset(&require(&cfg.dataset, "dataset")?)?;
    let set = split_of(&file.dataset, cfg.split);
    let forecasts = model_forecasts(&trained.model, &trained.normalizer, &set.samples, 256)?;
    let mut out = String::from("stock_id\tdate\ttarget_date\tforecast\tgk_vol\tpk_vol\n");
    for (f, m) in forecasts.iter().zip(&set.meta) {
        out.push_str(&format!(
            "{}\t{}\t{}\t{f}\t{}\t{}\n",
            m.stock_id, m.date, m.target_date, m.gk_vol, m.pk_vol
        ));
    }
    emit(c, &out)
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateConfig {
    dataset: Option<PathBuf>,
    /// Label to checkpoint path.
    checkpoints: BTreeMap<String, PathBuf>,
    /// GARCH(1,1) is fitted when this directory of price CSVs is given.
    prices_dir: Option<PathBuf>,
    universe: Option<PathBuf>,
    proxies: Vec<EstimatorKind>,
    garch_options: Option<FitOptions>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            dataset: None,
            checkpoints: BTreeMap::new(),
            prices_dir: None,
            universe: None,
            proxies: vec![EstimatorKind::GarmanKlass, EstimatorKind::Parkinson],
            garch_options: None,
        }
    }
}

fn evaluate_cmd(c: &Common) -> anyhow::Result<()> {
    let cfg: EvaluateConfig = load_config(c)?;
    let file = read_dataset(&require(&cfg.dataset, "dataset")?)?;
    let test = &file.dataset.test;
    let mut forecasts: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, path) in &cfg.checkpoints {
        let t = load_trained(path)?;
        forecasts.push((
            name.clone(),
            model_forecasts(&t.model, &t.normalizer, &test.samples, 256)?,
        ));
    }
    if let Some(dir) = &cfg.prices_dir {
        let universe = StockUniverse::from_path(require(&cfg.universe, "universe")?)?;
        let prices = load_prices(dir, &universe)?;
        let opts = FitOptions {
            seed: c.seed,
            ..cfg.garch_options.unwrap_or_default()
        };
        let (f, _) = garch_forecasts(&prices, file.dataset.split.validation.end, &test.meta, &opts)?;
        forecasts.push(("garch".into(), f));
    }
    if forecasts.is_empty() {
        bail!("nothing to evaluate: give checkpoints and/or prices_dir");
    }
    let mut reports: Vec<(String, SectorReport)> = Vec::new();
    for (name, f) in &forecasts {
        for &kind in &cfg.proxies {
            reports.push((name.clone(), evaluate_forecasts(f, &test.meta, kind)?));
        }
    }
    emit(c, &reports_tsv(reports.iter().map(|(n, r)| (n.as_str(), r))))
}

fn gradcheck(c: &Common) -> anyhow::Result<bool> {
    let mut rows = suite::ops(c.seed)?;
    rows.extend(suite::encoders(c.seed)?);
    let mut out = String::from("name\tmax_rel_error\tpass\n");
    let mut ok = true;
    for (name, err) in &rows {
        let pass = *err < GRADCHECK_TOLERANCE;
        ok &= pass;
        out.push_str(&format!("{name}\t{err:.3e}\t{pass}\n"));
    }
    emit(c, &out)?;
    Ok(ok)
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EfficiencyConfig {
    n_days: usize,
    n_steps: usize,
    sigma: f64,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        EfficiencyConfig {
            n_days: 20_000,
            n_steps: 2_000,
            sigma: 0.02,
        }
    }
}

#[derive(Serialize)]
struct EfficiencyReport {
    #[serde(flatten)]
    study: volcast_core::marketdata::EfficiencyStudy,
    efficiency_parkinson: f64,
    efficiency_garman_klass: f64,
}

fn efficiency(c: &Common) -> anyhow::Result<()> {
    let cfg: EfficiencyConfig = load_config(c)?;
    let study = efficiency_study(cfg.n_days, cfg.n_steps, cfg.sigma, c.seed)?;
    let report = EfficiencyReport {
        efficiency_parkinson: study.efficiency(EstimatorKind::Parkinson),
        efficiency_garman_klass: study.efficiency(EstimatorKind::GarmanKlass),
        study,
    };
    emit(c, &json(&report)?)
}

fn synthesize(c: &Common) -> anyhow::Result<()> {
    let cfg: SyntheticConfig = load_config(c)?;
    let dir = require(&c.out, "--out")?;
    let m = generate(&cfg, c.seed)?;
    fs::create_dir_all(dir.join("prices"))?;
    for s in &m.prices {
        fs::write(
            dir.join("prices").join(format!("{}.csv", s.stock_id)),
            s.to_csv_string(),
        )?;
    }
    let mut headlines = String::new();
    for h in &m.headlines {
        headlines.push_str(&headline_to_json(h));
        headlines.push('\n');
    }
    fs::write(dir.join("headlines.jsonl"), headlines)?;
    fs::write(dir.join("embeddings.txt"), m.embeddings.to_text())?;
    fs::write(dir.join("universe.tsv"), m.universe.to_tsv())?;
    fs::write(dir.join("shocks.json"), json(&m.shock_days)?)?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::SimulateGbm(c) => simulate_gbm(c)?,
        Command::SimulateGarch(c) => simulate_garch(c)?,
        Command::Estimate(c) => estimate_cmd(c)?,
        Command::GarchFit(c) => garch_fit(c)?,
        Command::GarchForecast(c) => garch_forecast(c)?,
        Command::Ingest(c) => ingest(c)?,
        Command::Align(c) => align_cmd(c)?,
        Command::BuildDataset(c) => build_dataset(c)?,
        Command::Train(c) => train_cmd(c)?,
        Command::Predict(c) => predict(c)?,
        Command::Evaluate(c) => evaluate_cmd(c)?,
        Command::Gradcheck(c) => return gradcheck(c),
        Command::Efficiency(c) => efficiency(c)?,
        Command::Synthesize(c) => synthesize(c)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", serde_json::json!({"error": chain.join(": ")}));
            ExitCode::FAILURE
        }
    }
}
