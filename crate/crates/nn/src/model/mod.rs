//! The hierarchical news and price network for next-day volatility.
//!
//! Headlines are encoded per sentence, pooled per day (attention or plain
//! average), tagged with a missing-news indicator, run through a temporal
//! BiLSTM with attention, joined with a stacked-LSTM price encoding and a
//! stock embedding, and mapped to one scalar.

mod heads;
pub mod layers;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Graph, ParamStore, Result, Tensor, Var};
pub use heads::{SnliActivation, TlHeads, RCV1_LABELS, SNLI_CLASSES};
use layers::{AttentionVars, DayLayout, DenseVars, LstmVars, Packing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    BilstmAtt,
    BilstmMp,
    WlAtt,
    FixedTransferred,
}

impl std::str::FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bilstm_att" => Ok(EncoderKind::BilstmAtt),
            "bilstm_mp" => Ok(EncoderKind::BilstmMp),
            "wl_att" => Ok(EncoderKind::WlAtt),
            "fixed_transferred" => Ok(EncoderKind::FixedTransferred),
            other => Err(format!("unknown encoder kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Word-embedding width.
    pub d_w: usize,
    /// Units per direction of the word-level BiLSTM.
    pub n: usize,
    /// Attention hidden size.
    pub d_a: usize,
    /// Days per window.
    pub t: usize,
    /// Headline and token caps used when encoding news.
    pub l_n: usize,
    pub l_s: usize,
    /// Units per direction of the temporal news BiLSTM; the news encoding has `2 n_t` entries.
    pub n_t: usize,
    /// Units of both price LSTMs.
    pub d_mp: usize,
    pub d_e: usize,
    pub d_jr: usize,
    pub n_stocks: usize,
    pub encoder_kind: EncoderKind,
    /// Width of precomputed sentence vectors for `fixed_transferred`.
    pub transferred_dim: Option<usize>,
    pub nra_enabled: bool,
    pub price_only: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_w: 16,
            n: 16,
            d_a: 16,
            t: 5,
            l_n: 4,
            l_s: 12,
            n_t: 16,
            d_mp: 16,
            d_e: 4,
            d_jr: 32,
            n_stocks: 1,
            encoder_kind: EncoderKind::BilstmAtt,
            transferred_dim: None,
            nra_enabled: true,
            price_only: false,
        }
    }
}

impl ModelConfig {
    /// Sentence-vector width.
    pub fn d_s(&self) -> usize {
        match self.encoder_kind {
            EncoderKind::BilstmAtt | EncoderKind::BilstmMp => 2 * self.n,
            EncoderKind::WlAtt => self.d_w,
            EncoderKind::FixedTransferred => self.transferred_dim.unwrap_or(0),
        }
    }

    pub fn d_mn(&self) -> usize {
        2 * self.n_t
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_w", self.d_w),
            ("n", self.n),
            ("d_a", self.d_a),
            ("t", self.t),
            ("l_n", self.l_n),
            ("l_s", self.l_s),
            ("n_t", self.n_t),
            ("d_mp", self.d_mp),
            ("d_e", self.d_e),
            ("d_jr", self.d_jr),
            ("n_stocks", self.n_stocks),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(AutodiffError::InvalidArgument {
                op: "model_config",
                reason: format!("{name} must be at least 1"),
            });
        }
        if self.encoder_kind == EncoderKind::FixedTransferred && self.transferred_dim.is_none_or(|d| d == 0) {
            return Err(AutodiffError::InvalidArgument {
                op: "model_config",
                reason: "fixed_transferred needs transferred_dim".into(),
            });
        }
        Ok(())
    }
}

/// A window of encoded headlines: `days x l_n x l_s` token ids, 0 = padding.
/// A slot holds a headline when any of its ids is non-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsWindow {
    pub days: usize,
    pub l_n: usize,
    pub l_s: usize,
    pub tokens: Vec<u32>,
    /// Precomputed sentence vectors, `days x l_n x d` with `d` the transferred width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<f64>>,
}

impl NewsWindow {
    pub fn empty(days: usize, l_n: usize, l_s: usize) -> Self {
        NewsWindow {
            days,
            l_n,
            l_s,
            tokens: vec![0; days * l_n * l_s],
            vectors: None,
        }
    }

    pub fn slot(&self, day: usize, k: usize) -> &[u32] {
        let i = (day * self.l_n + k) * self.l_s;
        &self.tokens[i..i + self.l_s]
    }

    pub fn slot_present(&self, day: usize, k: usize) -> bool {
        self.slot(day, k).iter().any(|&x| x != 0)
    }

    pub fn has_news(&self, day: usize) -> bool {
        (0..self.l_n).any(|k| self.slot_present(day, k))
    }

    /// The same headlines in a larger grid; extra slots and positions are padding.
    pub fn padded_to(&self, l_n: usize, l_s: usize) -> Self {
        assert!(l_n >= self.l_n && l_s >= self.l_s);
        let mut tokens = vec![0; self.days * l_n * l_s];
        let mut vectors = self.vectors.as_ref().map(|_| Vec::new());
        let d = self.vector_dim();
        for day in 0..self.days {
            for k in 0..l_n {
                if k < self.l_n {
                    let dst = (day * l_n + k) * l_s;
                    tokens[dst..dst + self.l_s].copy_from_slice(self.slot(day, k));
                }
                if let (Some(out), Some(src)) = (vectors.as_mut(), self.vectors.as_ref()) {
                    if k < self.l_n {
                        let i = (day * self.l_n + k) * d;
                        out.extend_from_slice(&src[i..i + d]);
                    } else {
                        out.extend(std::iter::repeat_n(0.0, d));
                    }
                }
            }
        }
        NewsWindow {
            days: self.days,
            l_n,
            l_s,
            tokens,
            vectors,
        }
    }

    fn vector_dim(&self) -> usize {
        self.vectors
            .as_ref()
            .map(|v| v.len() / (self.days * self.l_n).max(1))
            .unwrap_or(0)
    }

    fn check(&self) -> Result<()> {
        if self.tokens.len() != self.days * self.l_n * self.l_s {
            return Err(AutodiffError::BadLength {
                shape: vec![self.days, self.l_n, self.l_s],
                len: self.tokens.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// `t x 4` price features, row per day.
    pub price_window: Vec<f64>,
    pub news: NewsWindow,
    /// Index into the stock universe; the network sees it one-hot encoded.
    pub stock: usize,
    pub target: f64,
}

impl Sample {
    pub fn stock_onehot(&self, n_stocks: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_stocks];
        v[self.stock] = 1.0;
        v
    }
}

/// Parameters, frozen word embeddings and configuration of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    /// `[vocab + 1, d_w]`, row 0 all zeros for padding. Not trained.
    pub embeddings: Tensor,
}

impl Model {
    pub fn new(config: ModelConfig, embeddings: Tensor, seed: u64) -> Result<Self> {
        config.validate()?;
        let needs_words = !config.price_only && config.encoder_kind != EncoderKind::FixedTransferred;
        if needs_words && (embeddings.rank() != 2 || embeddings.last_dim() != config.d_w) {
            return Err(AutodiffError::ShapeMismatch {
                op: "model_embeddings",
                left: embeddings.shape().to_vec(),
                right: vec![0, config.d_w],
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let c = &config;
        if !c.price_only {
            match c.encoder_kind {
                EncoderKind::BilstmAtt | EncoderKind::BilstmMp => {
                    layers::init_lstm(&mut p, "word_lstm_fwd", c.d_w, c.n, &mut rng);
                    layers::init_lstm(&mut p, "word_lstm_bwd", c.d_w, c.n, &mut rng);
                    if c.encoder_kind == EncoderKind::BilstmAtt {
                        layers::init_attention(&mut p, "sentence_att", 2 * c.n, c.d_a, &mut rng);
                    }
                }
                EncoderKind::WlAtt => layers::init_attention(&mut p, "sentence_att", c.d_w, c.d_a, &mut rng),
                EncoderKind::FixedTransferred => {}
            }
            if c.nra_enabled {
                layers::init_attention(&mut p, "nra", c.d_s(), c.d_a, &mut rng);
            }
            layers::init_lstm(&mut p, "news_lstm_fwd", c.d_s() + 1, c.n_t, &mut rng);
            layers::init_lstm(&mut p, "news_lstm_bwd", c.d_s() + 1, c.n_t, &mut rng);
            layers::init_attention(&mut p, "news_att", c.d_mn(), c.d_a, &mut rng);
        }
        layers::init_lstm(&mut p, "price_lstm1", 4, c.d_mp, &mut rng);
        layers::init_lstm(&mut p, "price_lstm2", c.d_mp, c.d_mp, &mut rng);
        layers::init_dense(&mut p, "stock_emb", c.n_stocks, c.d_e, &mut rng);
        let joint_in = c.d_mp + c.d_e + if c.price_only { 0 } else { c.d_mn() };
        layers::init_dense(&mut p, "joint", joint_in, c.d_jr, &mut rng);
        layers::init_dense(&mut p, "out", c.d_jr, 1, &mut rng);
        Ok(Model {
            config,
            params: p,
            embeddings,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_values()
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        let c = &self.config;
        s.news.check()?;
        if s.price_window.len() != c.t * 4 || s.news.days != c.t {
            return Err(AutodiffError::InvalidArgument {
                op: "forward",
                reason: format!(
                    "sample has {} price values and {} news days, config expects t = {}",
                    s.price_window.len(),
                    s.news.days,
                    c.t
                ),
            });
        }
        if s.stock >= c.n_stocks {
            return Err(AutodiffError::InvalidArgument {
                op: "forward",
                reason: format!("stock index {} out of range for {} stocks", s.stock, c.n_stocks),
            });
        }
        if c.encoder_kind == EncoderKind::FixedTransferred && !c.price_only {
            let want = s.news.days * s.news.l_n * c.d_s();
            if s.news.vectors.as_ref().is_none_or(|v| v.len() != want) {
                return Err(AutodiffError::InvalidArgument {
                    op: "forward",
                    reason: format!("fixed_transferred needs {want} precomputed sentence values"),
                });
            }
        }
        Ok(())
    }

    /// Sentence vectors `[sentences.len(), d_s]` for token-id sequences (zeros are skipped).
    pub fn encode_sentences(
        &self,
        g: &mut Graph,
        bound: &BTreeMap<String, Var>,
        sentences: &[Vec<u32>],
    ) -> Result<Var> {
        let c = &self.config;
        let ids: Vec<Vec<usize>> = sentences
            .iter()
            .map(|s| s.iter().filter(|&&x| x != 0).map(|&x| x as usize).collect())
            .collect();
        let lengths: Vec<usize> = ids.iter().map(Vec::len).collect();
        let packing = Packing::new(&lengths)?;
        let emb = g.constant(self.embeddings.clone());
        let rows: Vec<Option<usize>> = packing.pack_index(&ids).into_iter().map(Some).collect();
        let x = g.gather_rows(emb, &rows)?;
        match c.encoder_kind {
            EncoderKind::BilstmAtt | EncoderKind::BilstmMp => {
                let fwd = LstmVars::bind(bound, "word_lstm_fwd", c.n)?;
                let bwd = LstmVars::bind(bound, "word_lstm_bwd", c.n)?;
                let h = layers::bilstm(g, x, &packing, &fwd, &bwd)?;
                if c.encoder_kind == EncoderKind::BilstmAtt {
                    let att = AttentionVars::bind(bound, "sentence_att")?;
                    layers::encode_attention(g, h, &packing, &att)
                } else {
                    layers::encode_maxpool(g, h, &packing)
                }
            }
            EncoderKind::WlAtt => {
                let att = AttentionVars::bind(bound, "sentence_att")?;
                layers::encode_attention(g, x, &packing, &att)
            }
            EncoderKind::FixedTransferred => Err(AutodiffError::InvalidArgument {
                op: "encode_sentences",
                reason: "fixed_transferred consumes precomputed vectors".into(),
            }),
        }
    }

    /// Market-news encoding `[batch, d_mn]`.
    fn news_branch(&self, g: &mut Graph, bound: &BTreeMap<String, Var>, batch: &[&Sample]) -> Result<Var> {
        let c = &self.config;
        let mut per_day: Vec<Vec<usize>> = Vec::with_capacity(batch.len() * c.t);
        let mut sentences: Vec<Vec<u32>> = Vec::new();
        let mut fixed: Vec<f64> = Vec::new();
        let d_s = c.d_s();
        for s in batch {
            for day in 0..c.t {
                let mut rows = Vec::new();
                for k in 0..s.news.l_n {
                    if !s.news.slot_present(day, k) {
                        continue;
                    }
                    rows.push(sentences.len());
                    sentences.push(s.news.slot(day, k).to_vec());
                    if let Some(v) = &s.news.vectors {
                        let i = (day * s.news.l_n + k) * d_s;
                        fixed.extend_from_slice(&v[i..i + d_s]);
                    }
                }
                per_day.push(rows);
            }
        }
        let layout = DayLayout::new(&per_day);
        let dn = if sentences.is_empty() {
            g.constant(Tensor::zeros(&[layout.days, d_s]))
        } else {
            let sv = if c.encoder_kind == EncoderKind::FixedTransferred {
                g.constant(Tensor::new(vec![sentences.len(), d_s], fixed)?)
            } else {
                self.encode_sentences(g, bound, &sentences)?
            };
            if c.nra_enabled {
                let att = AttentionVars::bind(bound, "nra")?;
                layers::nra(g, sv, &layout, &att)?
            } else {
                layers::daily_average(g, sv, &layout)?
            }
        };
        let zi = layers::zi_impute(g, dn, &layout.has_news())?;
        let fwd = LstmVars::bind(bound, "news_lstm_fwd", c.n_t)?;
        let bwd = LstmVars::bind(bound, "news_lstm_bwd", c.n_t)?;
        let att = AttentionVars::bind(bound, "news_att")?;
        layers::news_temporal_context(g, zi, batch.len(), c.t, &fwd, &bwd, &att)
    }

    /// Predictions `[batch, 1]` for parameters bound into `g` (trainable or constant).
    pub fn forward(&self, g: &mut Graph, bound: &BTreeMap<String, Var>, batch: &[&Sample]) -> Result<Var> {
        let c = &self.config;
        if batch.is_empty() {
            return Err(AutodiffError::InvalidArgument {
                op: "forward",
                reason: "empty batch".into(),
            });
        }
        for s in batch {
            self.check_sample(s)?;
        }
        let b = batch.len();
        let prices: Vec<f64> = batch.iter().flat_map(|s| s.price_window.iter().copied()).collect();
        let prices = g.constant(Tensor::new(vec![b * c.t, 4], prices)?);
        let first = LstmVars::bind(bound, "price_lstm1", c.d_mp)?;
        let second = LstmVars::bind(bound, "price_lstm2", c.d_mp)?;
        let mp = layers::price_encoder(g, prices, b, c.t, &first, &second)?;
        let onehot: Vec<f64> = batch.iter().flat_map(|s| s.stock_onehot(c.n_stocks)).collect();
        let emb = DenseVars::bind(bound, "stock_emb")?;
        let e = layers::stock_embed(g, &Tensor::new(vec![b, c.n_stocks], onehot)?, &emb)?;
        let mut parts = Vec::with_capacity(3);
        if !c.price_only {
            parts.push(self.news_branch(g, bound, batch)?);
        }
        parts.push(mp);
        parts.push(e);
        let jr_in = g.concat(&parts, 1)?;
        let jr = DenseVars::bind(bound, "joint")?.apply(g, jr_in)?;
        let jr = g.relu(jr);
        DenseVars::bind(bound, "out")?.apply(g, jr)
    }

    /// Forward pass without gradient tracking.
    pub fn predict(&self, batch: &[&Sample]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let bound: BTreeMap<String, Var> = self
            .params
            .iter()
            .map(|(k, t)| (k.clone(), g.constant(t.clone())))
            .collect();
        let out = self.forward(&mut g, &bound, batch)?;
        Ok(g.value(out).values().to_vec())
    }
}
