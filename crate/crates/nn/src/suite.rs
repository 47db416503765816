//! Finite-difference checks of every op and every composite encoder at tiny sizes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{gradcheck, Graph, ParamStore, Result, Tensor, Var, GRADCHECK_STEP};
use crate::model::layers::{self, AttentionVars, DayLayout, DenseVars, LstmVars, Packing};
use crate::model::{EncoderKind, Model, ModelConfig, NewsWindow, Sample, SnliActivation, TlHeads};

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

/// Entries with magnitude in `[0.1, 1)` so no kink is straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let v = (0..n)
        .map(|_| rng.random_range(0.1..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Tensor::new(shape.to_vec(), v).expect("shape")
}

/// Reduces any output to a scalar with fixed pseudo-random weights.
fn project(g: &mut Graph, v: Var) -> Result<Var> {
    if g.value(v).len() == 1 && g.shape(v).is_empty() {
        return Ok(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let w = rand_tensor(&mut rng, g.shape(v));
    let w = g.constant(w);
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

fn check<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    gradcheck(
        |g, xs| {
            let out = f(g, xs)?;
            project(g, out)
        },
        inputs,
        GRADCHECK_STEP,
    )
}

/// Gradcheck over every tensor in `store` plus `extra` inputs.
fn check_params<F>(store: &ParamStore, extra: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &BTreeMap<String, Var>, &[Var]) -> Result<Var>,
{
    let names: Vec<String> = store.names().cloned().collect();
    let mut inputs: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
    inputs.extend_from_slice(extra);
    check(&inputs, |g, xs| {
        let bound: BTreeMap<String, Var> = names.iter().cloned().zip(xs.iter().copied()).collect();
        f(g, &bound, &xs[names.len()..])
    })
}

/// Maximum relative gradient error of each primitive op.
pub fn ops(seed: u64) -> Result<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a34 = rand_tensor(&mut rng, &[3, 4]);
    let b34 = rand_tensor(&mut rng, &[3, 4]);
    let b45 = rand_tensor(&mut rng, &[4, 5]);
    let v4 = rand_tensor(&mut rng, &[4]);
    let x234 = rand_tensor(&mut rng, &[2, 3, 4]);
    let w23 = rand_tensor(&mut rng, &[2, 3]);
    let r32 = rand_tensor(&mut rng, &[3, 2]);
    let r24 = rand_tensor(&mut rng, &[2, 4]);
    let apart = away_from_zero(&mut rng, &[3, 4]);
    let mask = [true, false, true, true, true, false];
    let row_mask = [
        true, false, true, true, false, false, false, false, true, true, true, true,
    ];
    let probs = {
        let mut g = Graph::new();
        let v = g.constant(rand_tensor(&mut rng, &[2, 5]));
        let s = g.softmax(v)?;
        g.value(s).clone()
    };
    let onehot = Tensor::new(vec![2, 5], vec![0., 0., 1., 0., 0., 1., 0., 0., 0., 0.])?;
    let labels = Tensor::new(vec![2, 3], vec![1., 0., 1., 0., 0., 1.])?;
    let q = Tensor::new(vec![2, 3], vec![0.7, 0.2, 0.4, 0.1, 0.5, 0.9])?;
    let target = Tensor::full(&[3, 4], 0.3);

    let mut out = Vec::new();
    let mut push = |name: &str, e: Result<f64>| -> Result<()> {
        out.push((name.to_string(), e?));
        Ok(())
    };
    push("matmul", check(&[a34.clone(), b45], |g, x| g.matmul(x[0], x[1])))?;
    push("add", check(&[a34.clone(), b34.clone()], |g, x| g.add(x[0], x[1])))?;
    push("add_broadcast", check(&[x234.clone(), v4], |g, x| g.add(x[0], x[1])))?;
    push("sub", check(&[a34.clone(), b34.clone()], |g, x| g.sub(x[0], x[1])))?;
    push("mul", check(&[a34.clone(), b34.clone()], |g, x| g.mul(x[0], x[1])))?;
    push(
        "abs_diff",
        check(&[apart.clone(), Tensor::zeros(&[3, 4])], |g, x| g.abs_diff(x[0], x[1])),
    )?;
    push(
        "scale",
        check(std::slice::from_ref(&a34), |g, x| Ok(g.scale(x[0], -2.5))),
    )?;
    push("sigmoid", check(std::slice::from_ref(&a34), |g, x| Ok(g.sigmoid(x[0]))))?;
    push("tanh", check(std::slice::from_ref(&a34), |g, x| Ok(g.tanh(x[0]))))?;
    push("relu", check(std::slice::from_ref(&apart), |g, x| Ok(g.relu(x[0]))))?;
    push(
        "softplus",
        check(std::slice::from_ref(&a34), |g, x| Ok(g.softplus(x[0]))),
    )?;
    push("softmax", check(std::slice::from_ref(&a34), |g, x| g.softmax(x[0])))?;
    push(
        "masked_softmax",
        check(std::slice::from_ref(&a34), |g, x| {
            g.masked_softmax(x[0], Some(&row_mask))
        }),
    )?;
    push(
        "max_over_axis",
        check(std::slice::from_ref(&x234), |g, x| {
            g.max_over_axis(x[0], 1, Some(&mask))
        }),
    )?;
    push(
        "mean_over_axis",
        check(std::slice::from_ref(&x234), |g, x| {
            g.mean_over_axis(x[0], 1, Some(&mask))
        }),
    )?;
    push(
        "weighted_sum",
        check(&[w23, x234.clone()], |g, x| g.weighted_sum(x[0], x[1])),
    )?;
    push("sum", check(std::slice::from_ref(&a34), |g, x| Ok(g.sum(x[0]))))?;
    push("mean", check(std::slice::from_ref(&a34), |g, x| g.mean(x[0])))?;
    push("concat", check(&[a34.clone(), r32], |g, x| g.concat(&[x[0], x[1]], 1)))?;
    push(
        "concat_rows",
        check(&[a34.clone(), r24], |g, x| g.concat(&[x[0], x[1]], 0)),
    )?;
    push(
        "gather_rows",
        check(std::slice::from_ref(&a34), |g, x| {
            g.gather_rows(x[0], &[Some(2), None, Some(0), Some(2)])
        }),
    )?;
    push(
        "slice_rows",
        check(std::slice::from_ref(&a34), |g, x| g.slice_rows(x[0], 1, 3)),
    )?;
    push(
        "slice_cols",
        check(std::slice::from_ref(&x234), |g, x| g.slice_cols(x[0], 1, 3)),
    )?;
    push(
        "reshape",
        check(std::slice::from_ref(&a34), |g, x| g.reshape(x[0], &[4, 3])),
    )?;
    push("mse_loss", check(&[a34], |g, x| g.mse_loss(x[0], &target)))?;
    push(
        "multilabel_logloss",
        check(&[q], |g, x| g.multilabel_logloss(x[0], &labels)),
    )?;
    push(
        "categorical_logloss",
        check(&[probs], |g, x| g.categorical_logloss(x[0], &onehot)),
    )?;
    Ok(out)
}

/// The configuration used for composite checks: every dimension tiny.
pub fn tiny_config(kind: EncoderKind) -> ModelConfig {
    ModelConfig {
        d_w: 3,
        n: 3,
        d_a: 3,
        t: 2,
        l_n: 2,
        l_s: 3,
        n_t: 2,
        d_mp: 3,
        d_e: 2,
        d_jr: 4,
        n_stocks: 3,
        encoder_kind: kind,
        transferred_dim: (kind == EncoderKind::FixedTransferred).then_some(4),
        nra_enabled: true,
        price_only: false,
    }
}

/// Random embeddings for `vocab` tokens plus the zero padding row.
pub fn random_embeddings(rng: &mut ChaCha8Rng, vocab: usize, d_w: usize) -> Tensor {
    let mut v = vec![0.0; d_w];
    v.extend((0..vocab * d_w).map(|_| rng.random_range(-1.0..1.0)));
    Tensor::new(vec![vocab + 1, d_w], v).expect("shape")
}

/// A sample with a random mix of empty and non-empty days and ragged headlines.
pub fn random_sample(rng: &mut ChaCha8Rng, c: &ModelConfig, vocab: usize) -> Sample {
    let mut news = NewsWindow::empty(c.t, c.l_n, c.l_s);
    for day in 0..c.t {
        let count = if day == 0 { c.l_n } else { rng.random_range(0..=c.l_n) };
        for k in 0..count {
            let len = rng.random_range(1..=c.l_s);
            for p in 0..len {
                news.tokens[(day * c.l_n + k) * c.l_s + p] = rng.random_range(1..=vocab as u32);
            }
        }
    }
    if let Some(d) = c.transferred_dim {
        let v = (0..c.t * c.l_n)
            .flat_map(|slot| {
                let present = news.tokens[slot * c.l_s..(slot + 1) * c.l_s].iter().any(|&x| x != 0);
                (0..d)
                    .map(|_| if present { rng.random_range(-1.0..1.0) } else { 0.0 })
                    .collect::<Vec<_>>()
            })
            .collect();
        news.vectors = Some(v);
    }
    Sample {
        price_window: (0..c.t * 4).map(|_| rng.random_range(-0.05..0.05)).collect(),
        news,
        stock: rng.random_range(0..c.n_stocks),
        target: rng.random_range(0.0..0.05),
    }
}

fn subset(model: &Model, prefixes: &[&str]) -> ParamStore {
    let mut p = ParamStore::new();
    for (k, t) in model.params.iter() {
        if prefixes.iter().any(|pre| k.starts_with(pre)) {
            p.insert(k.clone(), t.clone());
        }
    }
    p
}

/// Maximum relative gradient error of each composite block at a tiny size.
pub fn encoders(seed: u64) -> Result<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = 6;
    let cfg = tiny_config(EncoderKind::BilstmAtt);
    let emb = random_embeddings(&mut rng, vocab, cfg.d_w);
    let model = Model::new(cfg.clone(), emb.clone(), seed)?;
    let n = cfg.n;
    let mut out = Vec::new();

    let word = subset(&model, &["word_lstm_fwd"]);
    let x = rand_tensor(&mut rng, &[2, cfg.d_w]);
    let h0 = rand_tensor(&mut rng, &[2, n]);
    let c0 = rand_tensor(&mut rng, &[2, n]);
    out.push((
        "lstm_step".to_string(),
        check_params(&word, &[x, h0, c0], |g, b, xs| {
            let p = LstmVars::bind(b, "word_lstm_fwd", n)?;
            let (h, c) = layers::lstm_step(g, xs[0], xs[1], xs[2], &p)?;
            g.concat(&[h, c], 1)
        })?,
    ));

    let packing = Packing::new(&[3, 1, 2])?;
    let xs = rand_tensor(&mut rng, &[packing.total(), cfg.d_w]);
    let bi = subset(&model, &["word_lstm"]);
    out.push((
        "bilstm".to_string(),
        check_params(&bi, std::slice::from_ref(&xs), |g, b, x| {
            let f = LstmVars::bind(b, "word_lstm_fwd", n)?;
            let r = LstmVars::bind(b, "word_lstm_bwd", n)?;
            layers::bilstm(g, x[0], &packing, &f, &r)
        })?,
    ));
    let hs = rand_tensor(&mut rng, &[packing.total(), 2 * n]);
    out.push((
        "encode_maxpool".to_string(),
        check(std::slice::from_ref(&hs), |g, x| {
            layers::encode_maxpool(g, x[0], &packing)
        })?,
    ));
    let att = subset(&model, &["sentence_att"]);
    out.push((
        "encode_attention".to_string(),
        check_params(&att, &[hs], |g, b, x| {
            let a = AttentionVars::bind(b, "sentence_att")?;
            layers::encode_attention(g, x[0], &packing, &a)
        })?,
    ));
    let wl = Model::new(tiny_config(EncoderKind::WlAtt), emb.clone(), seed)?;
    let wl_att = subset(&wl, &["sentence_att"]);
    out.push((
        "encode_wl_att".to_string(),
        check_params(&wl_att, &[xs], |g, b, x| {
            let a = AttentionVars::bind(b, "sentence_att")?;
            layers::encode_attention(g, x[0], &packing, &a)
        })?,
    ));

    let layout = DayLayout::new(&[vec![0, 2], vec![], vec![1], vec![3, 4]]);
    let sents = rand_tensor(&mut rng, &[5, cfg.d_s()]);
    let nra = subset(&model, &["nra"]);
    out.push((
        "nra".to_string(),
        check_params(&nra, std::slice::from_ref(&sents), |g, b, x| {
            let a = AttentionVars::bind(b, "nra")?;
            layers::nra(g, x[0], &layout, &a)
        })?,
    ));
    out.push((
        "daily_average".to_string(),
        check(&[sents], |g, x| layers::daily_average(g, x[0], &layout))?,
    ));

    let temporal = subset(&model, &["news_lstm", "news_att"]);
    let dn = rand_tensor(&mut rng, &[2 * cfg.t, cfg.d_s()]);
    let has_news = [true, false, true, true];
    out.push((
        "zi_temporal_context".to_string(),
        check_params(&temporal, &[dn], |g, b, x| {
            let zi = layers::zi_impute(g, x[0], &has_news)?;
            let f = LstmVars::bind(b, "news_lstm_fwd", cfg.n_t)?;
            let r = LstmVars::bind(b, "news_lstm_bwd", cfg.n_t)?;
            let a = AttentionVars::bind(b, "news_att")?;
            layers::news_temporal_context(g, zi, 2, cfg.t, &f, &r, &a)
        })?,
    ));

    let price = subset(&model, &["price_lstm"]);
    let pw = rand_tensor(&mut rng, &[2 * cfg.t, 4]);
    out.push((
        "price_encoder".to_string(),
        check_params(&price, &[pw], |g, b, x| {
            let p1 = LstmVars::bind(b, "price_lstm1", cfg.d_mp)?;
            let p2 = LstmVars::bind(b, "price_lstm2", cfg.d_mp)?;
            layers::price_encoder(g, x[0], 2, cfg.t, &p1, &p2)
        })?,
    ));

    let stock = subset(&model, &["stock_emb"]);
    let onehot = Tensor::new(vec![2, 3], vec![0., 1., 0., 1., 0., 0.])?;
    out.push((
        "stock_embed".to_string(),
        check_params(&stock, &[], |g, b, _| {
            let d = DenseVars::bind(b, "stock_emb")?;
            layers::stock_embed(g, &onehot, &d)
        })?,
    ));

    for kind in [
        EncoderKind::BilstmAtt,
        EncoderKind::BilstmMp,
        EncoderKind::WlAtt,
        EncoderKind::FixedTransferred,
    ] {
        for nra_enabled in [true, false] {
            let c = ModelConfig {
                nra_enabled,
                ..tiny_config(kind)
            };
            let m = Model::new(c.clone(), emb.clone(), seed)?;
            let samples: Vec<Sample> = (0..2).map(|_| random_sample(&mut rng, &c, vocab)).collect();
            let refs: Vec<&Sample> = samples.iter().collect();
            let name = format!(
                "forward_{}{}",
                serde_json::to_value(kind).expect("enum").as_str().unwrap_or("?"),
                if nra_enabled { "" } else { "_avg" }
            );
            out.push((name, check_params(&m.params, &[], |g, b, _| m.forward(g, b, &refs))?));
        }
    }
    let po = ModelConfig {
        price_only: true,
        ..tiny_config(EncoderKind::BilstmAtt)
    };
    let m = Model::new(po.clone(), emb.clone(), seed)?;
    let samples: Vec<Sample> = (0..2).map(|_| random_sample(&mut rng, &po, vocab)).collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    out.push((
        "forward_price_only".to_string(),
        check_params(&m.params, &[], |g, b, _| m.forward(g, b, &refs))?,
    ));

    let sentences: Vec<Vec<u32>> = vec![vec![1, 2, 3], vec![4], vec![5, 6]];
    for activation in [SnliActivation::Relu, SnliActivation::Softplus] {
        let heads = TlHeads::new(cfg.d_s(), 4, activation, seed);
        let mut store = subset(&model, &["word_lstm", "sentence_att"]);
        for (k, t) in heads.params.iter() {
            store.insert(k.clone(), t.clone());
        }
        let labels = Tensor::new(
            vec![3, crate::model::RCV1_LABELS],
            (0..3 * crate::model::RCV1_LABELS)
                .map(|i| if i % 7 == 0 { 1.0 } else { 0.0 })
                .collect(),
        )?;
        if activation == SnliActivation::Relu {
            out.push((
                "rcv1_head".to_string(),
                check_params(&store, &[], |g, b, _| {
                    let s = model.encode_sentences(g, b, &sentences)?;
                    let p = heads.rcv1_head(g, b, s)?;
                    g.multilabel_logloss(p, &labels)
                })?,
            ));
        }
        let y = Tensor::new(vec![2, 3], vec![1., 0., 0., 0., 0., 1.])?;
        out.push((
            format!(
                "snli_head_{}",
                serde_json::to_value(activation).expect("enum").as_str().unwrap_or("?")
            ),
            check_params(&store, &[], |g, b, _| {
                let s = model.encode_sentences(g, b, &sentences)?;
                let sp = g.slice_rows(s, 0, 2)?;
                let sh = g.slice_rows(s, 1, 3)?;
                let p = heads.snli_head(g, b, sp, sh)?;
                g.categorical_logloss(p, &y)
            })?,
        ));
    }
    Ok(out)
}
