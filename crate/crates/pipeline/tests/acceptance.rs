//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use volcast_core::corpus::{self, HeadlineRecord, TimeCategory, TradingCalendar};
use volcast_core::garch::{self, GarchParams};
use volcast_core::marketdata::{efficiency_study, EstimatorKind};
use volcast_core::metrics::mincer_zarnowitz;
use volcast_nn::model::{Model, ModelConfig, Sample};
use volcast_nn::suite;
use volcast_pipeline::experiment::{run_planted, PlantedConfig, Variant};
use volcast_pipeline::train::{train, TrainConfig};

type Check = (bool, String);

fn efficiency() -> (Check, Check) {
    let t0 = Instant::now();
    let study = efficiency_study(20_000, 2_000, 0.02, 1).expect("study runs");
    let secs = t0.elapsed().as_secs_f64();
    let pk = study.efficiency(EstimatorKind::Parkinson);
    let gk = study.efficiency(EstimatorKind::GarmanKlass);
    let eff_ok = (3.7..=6.1).contains(&pk) && (5.6..=9.2).contains(&gk) && gk > pk && secs < 60.0;
    let m_pk = study.mean_ratio(EstimatorKind::Parkinson);
    let m_gk = study.mean_ratio(EstimatorKind::GarmanKlass);
    let bias_ok = (0.90..=1.02).contains(&m_pk) && (0.90..=1.02).contains(&m_gk);
    (
        (
            eff_ok,
            format!("efficiency parkinson {pk:.3} garman_klass {gk:.3} in {secs:.1}s"),
        ),
        (
            bias_ok,
            format!("mean/sigma^2 parkinson {m_pk:.4} garman_klass {m_gk:.4}"),
        ),
    )
}

fn garch_recovery() -> Check {
    let truth = GarchParams::new(0.0, 1e-6, 0.1, 0.85).unwrap();
    let returns = garch::simulate_garch(&truth, 20_000, 7).unwrap();
    let t0 = Instant::now();
    let fit = garch::fit(&returns).expect("fit converges");
    let secs = t0.elapsed().as_secs_f64();
    let p = fit.params;
    let ok = (p.a1 - truth.a1).abs() <= 0.03
        && (p.b1 - truth.b1).abs() <= 0.03
        && (p.persistence() - truth.persistence()).abs() <= 0.02
        && p.a0 / truth.a0 <= 2.0
        && truth.a0 / p.a0 <= 2.0
        && secs < 30.0;
    (
        ok,
        format!(
            "a0 {:.3e} a1 {:.4} b1 {:.4} persistence {:.4} in {secs:.2}s",
            p.a0,
            p.a1,
            p.b1,
            p.persistence()
        ),
    )
}

fn forecast_identity() -> Check {
    let params = GarchParams::new(0.0, 1e-6, 0.1, 0.85).unwrap();
    let returns = garch::simulate_garch(&params, 500, 3).unwrap();
    let fit = garch::filter_variance(&returns, &params).unwrap();
    let fc = garch::forecast_multi_step(&fit, 100).unwrap();
    let u = fc.unconditional_variance;
    let first = fc.expected_variance[0];
    let mut worst: f64 = 0.0;
    for (k, e) in fc.expected_variance.iter().enumerate() {
        let closed = u + params.persistence().powi(k as i32) * (first - u);
        worst = worst.max((e - closed).abs() / closed.abs());
    }
    let gaps: Vec<f64> = fc.expected_variance.iter().map(|e| (e - u).abs()).collect();
    let same_side = fc
        .expected_variance
        .iter()
        .all(|e| (e - u).signum() == (first - u).signum());
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]) && same_side;
    let u_ok = (u - 2e-5).abs() / 2e-5 < 1e-12;
    (
        worst < 1e-12 && monotone && u_ok,
        format!("max relative error {worst:.2e}, monotone {monotone}"),
    )
}

fn gradients() -> Check {
    let mut rows = suite::ops(1).expect("op checks run");
    rows.extend(suite::encoders(3).expect("encoder checks run"));
    let (name, worst) = rows
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |acc, (n, e)| if e > acc.1 { (n, e) } else { acc });
    let failing = rows.iter().filter(|(_, e)| e.is_nan() || *e >= 1e-5).count();
    (
        failing == 0,
        format!("{} checks, {failing} failing, worst {name} {worst:.2e}", rows.len()),
    )
}

fn invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = ModelConfig {
        d_w: 6,
        n: 5,
        d_a: 4,
        n_t: 4,
        d_mp: 4,
        n_stocks: 3,
        ..ModelConfig::default()
    };
    let vocab = 30;
    let model = Model::new(cfg.clone(), suite::random_embeddings(&mut rng, vocab, cfg.d_w), 5).unwrap();
    let samples: Vec<Sample> = (0..16).map(|_| suite::random_sample(&mut rng, &cfg, vocab)).collect();
    let predict = |s: &[Sample]| model.predict(&s.iter().collect::<Vec<_>>()).unwrap();
    let base = predict(&samples);
    let reversed: Vec<Sample> = samples
        .iter()
        .map(|s| {
            let mut out = s.clone();
            for day in 0..s.news.days {
                for k in 0..s.news.l_n {
                    let dst = (day * s.news.l_n + k) * s.news.l_s;
                    out.news.tokens[dst..dst + s.news.l_s].copy_from_slice(s.news.slot(day, s.news.l_n - 1 - k));
                }
            }
            out
        })
        .collect();
    let padded: Vec<Sample> = samples
        .iter()
        .map(|s| Sample {
            news: s.news.padded_to(s.news.l_n + 2, s.news.l_s + 3),
            ..s.clone()
        })
        .collect();
    let diff = |other: &[f64]| base.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (dp, dpad) = (diff(&predict(&reversed)), diff(&predict(&padded)));
    (
        dp < 1e-12 && dpad < 1e-12,
        format!("permutation {dp:.1e}, padding {dpad:.1e}"),
    )
}

fn mincer_zarnowitz_fixtures() -> Check {
    let x = [0.3, 1.2, 0.7, 2.5, 1.9];
    let perfect = mincer_zarnowitz(&x, &x).unwrap();
    let inv = mincer_zarnowitz(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let f: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let p: Vec<f64> = f.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
    let noisy = mincer_zarnowitz(&f, &p).unwrap();
    let ok = (perfect.r2 - 1.0).abs() <= 1e-12
        && (inv.slope + 1.0).abs() <= 1e-12
        && (inv.intercept - 4.0).abs() <= 1e-12
        && (inv.r2 - 1.0).abs() <= 1e-12
        && (noisy.r2 - 0.5).abs() <= 0.02;
    (
        ok,
        format!(
            "perfect r2 {:.15}, inverse b {:.3} a {:.3} r2 {:.3}, noise r2 {:.4}",
            perfect.r2, inv.slope, inv.intercept, inv.r2, noisy.r2
        ),
    )
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn corpus_golden() -> Check {
    let cal = TradingCalendar::default();
    let cat = |ts: &str| corpus::categorize(HeadlineRecord::new("X", ts, "h").unwrap().new_york_time(), &cal);
    let cats_ok = cat("2007-04-17T08:54:27-04:00") == TimeCategory::BeforeMarket
        && cat("2016-09-22T15:32:13-04:00") == TimeCategory::DuringMarket;
    let day = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
    let shifted = corpus::align(
        &[
            HeadlineRecord::new("X", "2016-09-20T16:05:00-04:00", "tuesday").unwrap(),
            HeadlineRecord::new("X", "2016-09-23T17:00:00-04:00", "friday").unwrap(),
        ],
        &cal,
    );
    let lands = |d: &str, word: &str| {
        shifted
            .day("X", day(d))
            .is_some_and(|a| a.headlines.len() == 1 && a.headlines[0].tokens == [word])
    };
    let align_ok = lands("2016-09-21", "tuesday") && lands("2016-09-26", "friday");
    let holidays = TradingCalendar::from_reader(fs::File::open(fixture("holidays.txt")).unwrap()).unwrap();
    let (records, rejected) =
        corpus::parse_headlines_jsonl(fs::File::open(fixture("headlines_200.jsonl")).unwrap()).unwrap();
    let got = corpus::histogram_tsv(&corpus::category_histogram(&records, &holidays));
    let golden = fs::read_to_string(fixture("headlines_200.categories.tsv")).unwrap();
    let hist_ok = rejected.is_empty() && records.len() == 200 && got == golden;
    (
        cats_ok && align_ok && hist_ok,
        format!("categories {cats_ok}, next-day alignment {align_ok}, histogram byte-equal {hist_ok}"),
    )
}

fn overfit() -> Check {
    let cfg = ModelConfig {
        d_w: 8,
        n: 8,
        d_a: 8,
        n_t: 8,
        d_mp: 8,
        n_stocks: 4,
        ..ModelConfig::default()
    };
    let vocab = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let embeddings = suite::random_embeddings(&mut rng, vocab, cfg.d_w);
    let samples: Vec<Sample> = (0..32)
        .map(|_| {
            let mut s = suite::random_sample(&mut rng, &cfg, vocab);
            s.target = rng.sample(StandardNormal);
            s
        })
        .collect();
    let tc = TrainConfig {
        batch_size: 8,
        max_epochs: 500,
        patience: 500,
        seed: 3,
        ..TrainConfig::default()
    };
    let run = || {
        let model = Model::new(cfg.clone(), embeddings.clone(), 2).unwrap();
        train(model, &samples, &samples, &tc).expect("training runs")
    };
    let a = run();
    let b = run();
    let initial = a.history[0].val_mse;
    let (epoch, best) = a
        .history
        .iter()
        .map(|r| (r.epoch, r.val_mse))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let deterministic = a.history == b.history;
    (
        best < 0.1 * initial && deterministic,
        format!(
            "initial {initial:.4}, best {best:.2e} ({:.3}%) at epoch {epoch}, deterministic {deterministic}",
            100.0 * best / initial
        ),
    )
}

fn planted() -> Check {
    let cfg = PlantedConfig::default();
    let t0 = Instant::now();
    let (mut full_avg, mut avg_price, mut r2_garch) = (0, 0, 0);
    for seed in 1..=5 {
        let out = run_planted(&cfg, seed).expect("experiment runs");
        let mse = |v| out.variant(v).expect("variant ran").report.all.mse;
        let full = out.variant(Variant::Full).unwrap().report.all.r2;
        let g = out.garch.all.r2;
        let (f, a, p) = (mse(Variant::Full), mse(Variant::DailyAverage), mse(Variant::PriceOnly));
        full_avg += (f < a) as usize;
        avg_price += (a < p) as usize;
        r2_garch += (full > g) as usize;
        println!("  seed {seed}: mse full {f:.4e} average {a:.4e} price-only {p:.4e}; r2 full {full:.3} garch {g:.3}");
    }
    let secs = t0.elapsed().as_secs_f64();
    (
        full_avg >= 4 && avg_price >= 4 && r2_garch >= 4 && secs < 900.0,
        format!(
            "full<average {full_avg}/5, average<price-only {avg_price}/5, r2 full>garch {r2_garch}/5 in {secs:.0}s"
        ),
    )
}

fn main() -> ExitCode {
    let (c1, c2) = efficiency();
    let mut results = vec![(1, c1), (2, c2)];
    results.push((3, garch_recovery()));
    results.push((4, forecast_identity()));
    results.push((5, gradients()));
    results.push((6, invariance()));
    results.push((7, mincer_zarnowitz_fixtures()));
    results.push((8, corpus_golden()));
    results.push((9, overfit()));
    for (n, (ok, msg)) in &results {
        println!("criterion {n}: {} {msg}", if *ok { "PASS" } else { "FAIL" });
    }
    let c10 = planted();
    println!("criterion 10: {} {}", if c10.0 { "PASS" } else { "FAIL" }, c10.1);
    results.push((10, c10));
    let failed = results.iter().filter(|(_, (ok, _))| !ok).count();
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
