use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn volcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = volcast(args);
    assert!(
        out.status.success(),
        "volcast {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, v: Value) -> String {
    let p = dir.join(name);
    fs::write(&p, v.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn price_and_garch_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gbm = write_config(d, "gbm.json", serde_json::json!({"n_days": 30, "steps": 50}));
    let csv = d.join("SIM.csv");
    ok(&["simulate-gbm", "--config", &gbm, "--seed", "3", "--out", s(&csv)]);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 31);

    let est = write_config(
        d,
        "est.json",
        serde_json::json!({"input": csv, "estimator": "parkinson"}),
    );
    let tsv = ok(&["estimate", "--config", &est]);
    assert_eq!(tsv.lines().next(), Some("date\testimator\tvariance\tvolatility"));
    assert_eq!(tsv.lines().count(), 31);
    assert!(tsv.lines().nth(1).unwrap().contains("\tparkinson\t"));

    let sim = write_config(d, "sim.json", serde_json::json!({"n": 500}));
    let returns = d.join("returns.tsv");
    ok(&["simulate-garch", "--config", &sim, "--seed", "1", "--out", s(&returns)]);
    let fit_cfg = write_config(d, "fit.json", serde_json::json!({"returns": returns}));
    let fit_path = d.join("fit.json.out");
    ok(&["garch-fit", "--config", &fit_cfg, "--out", s(&fit_path)]);
    let fit: Value = serde_json::from_str(&fs::read_to_string(&fit_path).unwrap()).unwrap();
    for k in ["mu", "a0", "a1", "b1", "log_likelihood", "converged", "iterations"] {
        assert!(fit.get(k).is_some(), "missing {k}");
    }
    let fc_cfg = write_config(
        d,
        "fc.json",
        serde_json::json!({"returns": returns, "fit": fit_path, "horizon": 5}),
    );
    let fc: Value = serde_json::from_str(&ok(&["garch-forecast", "--config", &fc_cfg])).unwrap();
    assert_eq!(fc["expected_variance"].as_array().unwrap().len(), 5);

    let eff = write_config(d, "eff.json", serde_json::json!({"n_days": 1000, "n_steps": 100}));
    let e: Value = serde_json::from_str(&ok(&["efficiency", "--config", &eff])).unwrap();
    assert!(e["efficiency_garman_klass"].as_f64().unwrap() > 1.0);
}

#[test]
fn news_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let market = d.join("market");
    let syn = write_config(d, "syn.json", serde_json::json!({"n_stocks": 2, "n_days": 120}));
    ok(&["synthesize", "--config", &syn, "--seed", "2", "--out", s(&market)]);

    let forms = d.join("forms.json");
    fs::write(&forms, r#"{"SYN0": ["w001"], "SYN1": ["w002"]}"#).unwrap();
    let ingest = write_config(
        d,
        "ingest.json",
        serde_json::json!({"headlines": market.join("headlines.jsonl")}),
    );
    let ingested = d.join("ingested.jsonl");
    ok(&["ingest", "--config", &ingest, "--out", s(&ingested)]);
    let all = fs::read_to_string(market.join("headlines.jsonl"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(fs::read_to_string(&ingested).unwrap().lines().count(), all);
    let filtered = write_config(
        d,
        "filter.json",
        serde_json::json!({"headlines": market.join("headlines.jsonl"), "surface_forms": forms}),
    );
    assert!(ok(&["ingest", "--config", &filtered]).lines().count() < all);

    let hist = d.join("hist.tsv");
    let aligned = d.join("aligned.json");
    let align = write_config(
        d,
        "align.json",
        serde_json::json!({"headlines": ingested, "histogram": hist}),
    );
    ok(&["align", "--config", &align, "--out", s(&aligned)]);
    let h = fs::read_to_string(&hist).unwrap();
    assert!(h.starts_with("category\tcount\n"));
    let counted: usize = h
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(counted, all);

    let dataset = d.join("dataset.json");
    let build = write_config(
        d,
        "build.json",
        serde_json::json!({
            "prices_dir": market.join("prices"),
            "aligned": aligned,
            "embeddings": market.join("embeddings.txt"),
            "universe": market.join("universe.tsv"),
            "split": {
                "train": {"start": "2010-01-04", "end": "2010-04-09"},
                "validation": {"start": "2010-04-12", "end": "2010-05-14"},
                "test": {"start": "2010-05-17", "end": "2010-06-30"}
            },
            "window": {"t": 3, "l_n": 4, "l_s": 6}
        }),
    );
    ok(&["build-dataset", "--config", &build, "--out", s(&dataset)]);

    let model = serde_json::json!({"n": 4, "d_a": 4, "n_t": 4, "d_mp": 4, "d_e": 2, "d_jr": 8});
    let ckpt = d.join("model.json");
    let train = write_config(
        d,
        "train.json",
        serde_json::json!({"dataset": dataset, "model": model, "train": {"max_epochs": 2}}),
    );
    ok(&["train", "--config", &train, "--seed", "5", "--out", s(&ckpt)]);
    let c: Value = serde_json::from_str(&fs::read_to_string(&ckpt).unwrap()).unwrap();
    assert_eq!(c["metadata"]["history"].as_array().unwrap().len(), 3);

    let predict = write_config(
        d,
        "predict.json",
        serde_json::json!({"checkpoint": ckpt, "dataset": dataset}),
    );
    let p = ok(&["predict", "--config", &predict]);
    assert_eq!(
        p.lines().next(),
        Some("stock_id\tdate\ttarget_date\tforecast\tgk_vol\tpk_vol")
    );
    assert!(p
        .lines()
        .skip(1)
        .all(|l| l.split('\t').nth(3).unwrap().parse::<f64>().unwrap() >= 0.0));

    let eval = write_config(
        d,
        "eval.json",
        serde_json::json!({
            "dataset": dataset,
            "checkpoints": {"full": ckpt},
            "prices_dir": market.join("prices"),
            "universe": market.join("universe.tsv")
        }),
    );
    let t = ok(&["evaluate", "--config", &eval]);
    // Two models, two proxies, the aggregate plus two sectors.
    assert_eq!(t.lines().count(), 1 + 2 * 2 * 3);
    assert!(t.lines().any(|l| l.starts_with("garch\tparkinson\tall\t")));
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck", "--seed", "4"]);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert!(rows.len() > 30);
    assert!(rows.iter().all(|r| r.ends_with("\ttrue")));
}

#[test]
fn failures_exit_nonzero_with_json() {
    let out = volcast(&["estimate"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("input"));
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", serde_json::json!({"n_dayz": 3}));
    assert!(!volcast(&["simulate-gbm", "--config", &bad]).status.success());
}
