//! Building blocks shared by the volatility network and the transfer-learning heads.
//!
//! Sequence layers work on packed batches: sequences are ordered by
//! decreasing length and step `t` only touches the sequences still running,
//! so padding is never fed through a recurrence.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, Graph, ParamStore, Result, Tensor, Var};

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, shape: &[usize]) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-a..a)).collect()).expect("shape")
}

fn lookup(bound: &BTreeMap<String, Var>, name: String) -> Result<Var> {
    bound.get(&name).copied().ok_or(AutodiffError::UnknownParameter(name))
}

/// Gate blocks are laid out along the columns in the order input, forget, output, candidate.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    /// `[d_in, 4n]`
    pub w: Var,
    /// `[n, 4n]`
    pub u: Var,
    /// `[4n]`
    pub b: Var,
    pub units: usize,
}

impl LstmVars {
    pub fn bind(bound: &BTreeMap<String, Var>, prefix: &str, units: usize) -> Result<Self> {
        Ok(LstmVars {
            w: lookup(bound, format!("{prefix}.W"))?,
            u: lookup(bound, format!("{prefix}.U"))?,
            b: lookup(bound, format!("{prefix}.b"))?,
            units,
        })
    }
}

pub fn init_lstm(store: &mut ParamStore, prefix: &str, d_in: usize, units: usize, rng: &mut ChaCha8Rng) {
    store.insert(format!("{prefix}.W"), glorot(rng, d_in, units, &[d_in, 4 * units]));
    store.insert(format!("{prefix}.U"), glorot(rng, units, units, &[units, 4 * units]));
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[4 * units]));
}

/// `4 (n d_in + n^2 + n)`.
pub fn lstm_param_count(d_in: usize, units: usize) -> usize {
    4 * (units * d_in + units * units + units)
}

#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub w: Var,
    pub b: Var,
}

impl DenseVars {
    pub fn bind(bound: &BTreeMap<String, Var>, prefix: &str) -> Result<Self> {
        Ok(DenseVars {
            w: lookup(bound, format!("{prefix}.W"))?,
            b: lookup(bound, format!("{prefix}.b"))?,
        })
    }

    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.affine(x, self.w, self.b)
    }
}

pub fn init_dense(store: &mut ParamStore, prefix: &str, d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) {
    store.insert(format!("{prefix}.W"), glorot(rng, d_in, d_out, &[d_in, d_out]));
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[d_out]));
}

/// `h~ = sigmoid(h W + b)`, score `= h~ . v`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    /// `[d_in, d_a]`
    pub w: Var,
    /// `[d_a]`
    pub b: Var,
    /// `[d_a, 1]`
    pub v: Var,
}

impl AttentionVars {
    pub fn bind(bound: &BTreeMap<String, Var>, prefix: &str) -> Result<Self> {
        Ok(AttentionVars {
            w: lookup(bound, format!("{prefix}.W"))?,
            b: lookup(bound, format!("{prefix}.b"))?,
            v: lookup(bound, format!("{prefix}.v"))?,
        })
    }

    /// Unnormalized scores, one per row of `h: [rows, d_in]`, as `[rows, 1]`.
    pub fn scores(&self, g: &mut Graph, h: Var) -> Result<Var> {
        let z = g.affine(h, self.w, self.b)?;
        let ht = g.sigmoid(z);
        g.matmul(ht, self.v)
    }
}

pub fn init_attention(store: &mut ParamStore, prefix: &str, d_in: usize, d_a: usize, rng: &mut ChaCha8Rng) {
    store.insert(format!("{prefix}.W"), glorot(rng, d_in, d_a, &[d_in, d_a]));
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[d_a]));
    store.insert(format!("{prefix}.v"), glorot(rng, d_a, 1, &[d_a, 1]));
}

/// One LSTM step for a batch: `x: [B, d_in]`, states `[B, n]`.
pub fn lstm_step(g: &mut Graph, x: Var, h_prev: Var, c_prev: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let z = g.affine(x, p.w, p.b)?;
    lstm_cell(g, z, Some((h_prev, c_prev)), p)
}

/// The recurrence given the input projection `z = x W + b`. A missing state means zeros.
fn lstm_cell(g: &mut Graph, z: Var, state: Option<(Var, Var)>, p: &LstmVars) -> Result<(Var, Var)> {
    let n = p.units;
    let z = match state {
        Some((h, _)) => {
            let hu = g.matmul(h, p.u)?;
            g.add(z, hu)?
        }
        None => z,
    };
    let zs = g.slice_cols(z, 0, 3 * n)?;
    let gates = g.sigmoid(zs);
    let i = g.slice_cols(gates, 0, n)?;
    let o = g.slice_cols(gates, 2 * n, 3 * n)?;
    let zc = g.slice_cols(z, 3 * n, 4 * n)?;
    let cand = g.tanh(zc);
    let mut c = g.mul(i, cand)?;
    if let Some((_, c_prev)) = state {
        let f = g.slice_cols(gates, n, 2 * n)?;
        let keep = g.mul(f, c_prev)?;
        c = g.add(c, keep)?;
    }
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Row layout of a batch of variable-length sequences in time-major packed form.
#[derive(Debug, Clone, PartialEq)]
pub struct Packing {
    lengths: Vec<usize>,
    /// `rank[s]` is the position of sequence `s` once sorted by decreasing length.
    rank: Vec<usize>,
    /// Number of sequences still running at each step.
    batch_sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl Packing {
    pub fn new(lengths: &[usize]) -> Result<Self> {
        if lengths.contains(&0) {
            return Err(AutodiffError::InvalidArgument {
                op: "packing",
                reason: "empty sequence".into(),
            });
        }
        let mut order: Vec<usize> = (0..lengths.len()).collect();
        order.sort_by_key(|&s| std::cmp::Reverse(lengths[s]));
        let mut rank = vec![0; lengths.len()];
        for (r, &s) in order.iter().enumerate() {
            rank[s] = r;
        }
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let batch_sizes: Vec<usize> = (0..steps).map(|t| lengths.iter().filter(|&&l| l > t).count()).collect();
        let mut offsets = Vec::with_capacity(steps);
        let mut acc = 0;
        for &b in &batch_sizes {
            offsets.push(acc);
            acc += b;
        }
        Ok(Packing {
            lengths: lengths.to_vec(),
            rank,
            batch_sizes,
            offsets,
        })
    }

    /// All sequences share one length.
    pub fn uniform(count: usize, len: usize) -> Result<Self> {
        Self::new(&vec![len; count])
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn num_sequences(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.batch_sizes.len()
    }

    pub fn total(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Packed row of step `t` of sequence `s`.
    pub fn row(&self, s: usize, t: usize) -> usize {
        debug_assert!(t < self.lengths[s]);
        self.offsets[t] + self.rank[s]
    }

    /// Source rows that lay out per-sequence items (given in sequence-major
    /// order, `items[s][t]`) in packed order.
    pub fn pack_index<T: Copy>(&self, items: &[Vec<T>]) -> Vec<T> {
        let mut out: Vec<Option<T>> = vec![None; self.total()];
        for (s, seq) in items.iter().enumerate() {
            for (t, &x) in seq.iter().enumerate() {
                out[self.row(s, t)] = Some(x);
            }
        }
        out.into_iter().map(|x| x.expect("every packed row filled")).collect()
    }

    /// For each row of the packed sequences read backwards, the packed row
    /// of the same token in forward order.
    pub fn reversed_rows(&self) -> Vec<usize> {
        let mut out = vec![0; self.total()];
        for (s, &len) in self.lengths.iter().enumerate() {
            for t in 0..len {
                out[self.row(s, t)] = self.row(s, len - 1 - t);
            }
        }
        out
    }

    /// Gather index producing `[num_sequences * max_len]` sequence-major rows, `None` past each end.
    pub fn padded_index(&self) -> Vec<Option<usize>> {
        let l = self.max_len();
        let mut out = vec![None; self.num_sequences() * l];
        for (s, &len) in self.lengths.iter().enumerate() {
            for t in 0..len {
                out[s * l + t] = Some(self.row(s, t));
            }
        }
        out
    }

    /// Validity mask matching [`Packing::padded_index`].
    pub fn padded_mask(&self) -> Vec<bool> {
        self.padded_index().iter().map(Option::is_some).collect()
    }

    /// Packed row of the last step of every sequence.
    pub fn last_rows(&self) -> Vec<Option<usize>> {
        (0..self.num_sequences())
            .map(|s| Some(self.row(s, self.lengths[s] - 1)))
            .collect()
    }
}

/// Runs one LSTM over packed input `x: [total, d_in]`, returning packed hidden states `[total, n]`.
pub fn run_lstm(g: &mut Graph, x: Var, packing: &Packing, p: &LstmVars) -> Result<Var> {
    let xw = g.affine(x, p.w, p.b)?;
    let mut outputs = Vec::with_capacity(packing.max_len());
    let mut state: Option<(Var, Var)> = None;
    for (t, &bs) in packing.batch_sizes.iter().enumerate() {
        let off = packing.offsets[t];
        let z = g.slice_rows(xw, off, off + bs)?;
        let prev = match state {
            Some((h, c)) if g.shape(h)[0] != bs => Some((g.slice_rows(h, 0, bs)?, g.slice_rows(c, 0, bs)?)),
            s => s,
        };
        let (h, c) = lstm_cell(g, z, prev, p)?;
        outputs.push(h);
        state = Some((h, c));
    }
    if outputs.len() == 1 {
        return Ok(outputs[0]);
    }
    g.concat(&outputs, 0)
}

/// Forward and backward LSTMs over packed input; row `r` of the result is
/// `[h_fwd, h_bwd]` for the token at packed row `r`.
pub fn bilstm(g: &mut Graph, x: Var, packing: &Packing, fwd: &LstmVars, bwd: &LstmVars) -> Result<Var> {
    let hf = run_lstm(g, x, packing, fwd)?;
    let rev = packing.reversed_rows();
    let rev_idx: Vec<Option<usize>> = rev.iter().map(|&r| Some(r)).collect();
    let xr = g.gather_rows(x, &rev_idx)?;
    let hb_rev = run_lstm(g, xr, packing, bwd)?;
    // The reversal is an involution, so the same index maps it back.
    let hb = g.gather_rows(hb_rev, &rev_idx)?;
    g.concat(&[hf, hb], 1)
}

/// Packed rows laid out as `[sequences, max_len, d]` with zero rows past each end.
pub fn pad_packed(g: &mut Graph, h: Var, packing: &Packing) -> Result<Var> {
    let d = g.value(h).last_dim();
    let padded = g.gather_rows(h, &packing.padded_index())?;
    g.reshape(padded, &[packing.num_sequences(), packing.max_len(), d])
}

/// Per-coordinate maximum over each sequence's real steps.
pub fn encode_maxpool(g: &mut Graph, h: Var, packing: &Packing) -> Result<Var> {
    let padded = pad_packed(g, h, packing)?;
    g.max_over_axis(padded, 1, Some(&packing.padded_mask()))
}

/// Attention pooling of packed rows into one vector per sequence.
pub fn encode_attention(g: &mut Graph, h: Var, packing: &Packing, p: &AttentionVars) -> Result<Var> {
    let scores = p.scores(g, h)?;
    let index = packing.padded_index();
    let mask = packing.padded_mask();
    let s = g.gather_rows(scores, &index)?;
    let s = g.reshape(s, &[packing.num_sequences(), packing.max_len()])?;
    let alpha = g.masked_softmax(s, Some(&mask))?;
    let padded = pad_packed(g, h, packing)?;
    g.weighted_sum(alpha, padded)
}

/// Which sentence fills each headline slot of each day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayLayout {
    pub days: usize,
    /// Slots per day after dropping trailing empty ones.
    pub width: usize,
    /// `[days * width]` sentence row per slot.
    pub slots: Vec<Option<usize>>,
}

impl DayLayout {
    /// `per_day[d]` lists the sentence rows of day `d`.
    pub fn new(per_day: &[Vec<usize>]) -> Self {
        let width = per_day.iter().map(Vec::len).max().unwrap_or(0);
        let mut slots = vec![None; per_day.len() * width];
        for (d, rows) in per_day.iter().enumerate() {
            for (k, &r) in rows.iter().enumerate() {
                slots[d * width + k] = Some(r);
            }
        }
        DayLayout {
            days: per_day.len(),
            width,
            slots,
        }
    }

    pub fn mask(&self) -> Vec<bool> {
        self.slots.iter().map(Option::is_some).collect()
    }

    pub fn has_news(&self) -> Vec<bool> {
        (0..self.days)
            .map(|d| {
                self.slots[d * self.width..(d + 1) * self.width]
                    .iter()
                    .any(Option::is_some)
            })
            .collect()
    }
}

fn day_sentences(g: &mut Graph, sentences: Var, layout: &DayLayout) -> Result<Var> {
    let d = g.value(sentences).last_dim();
    let x = g.gather_rows(sentences, &layout.slots)?;
    g.reshape(x, &[layout.days, layout.width, d])
}

fn no_news(g: &mut Graph, layout: &DayLayout, d: usize) -> Var {
    g.constant(Tensor::zeros(&[layout.days, d]))
}

/// News relevance attention: one attention-weighted vector per day. Days
/// without headlines come out as zeros.
pub fn nra(g: &mut Graph, sentences: Var, layout: &DayLayout, p: &AttentionVars) -> Result<Var> {
    let d = g.value(sentences).last_dim();
    if layout.width == 0 {
        return Ok(no_news(g, layout, d));
    }
    let scores = p.scores(g, sentences)?;
    let s = g.gather_rows(scores, &layout.slots)?;
    let s = g.reshape(s, &[layout.days, layout.width])?;
    let beta = g.masked_softmax(s, Some(&layout.mask()))?;
    let x = day_sentences(g, sentences, layout)?;
    g.weighted_sum(beta, x)
}

/// Unweighted mean of each day's headline vectors.
pub fn daily_average(g: &mut Graph, sentences: Var, layout: &DayLayout) -> Result<Var> {
    let d = g.value(sentences).last_dim();
    if layout.width == 0 {
        return Ok(no_news(g, layout, d));
    }
    let x = day_sentences(g, sentences, layout)?;
    g.mean_over_axis(x, 1, Some(&layout.mask()))
}

/// Appends a missing-news indicator column; days without news are zeroed.
pub fn zi_impute(g: &mut Graph, dn: Var, has_news: &[bool]) -> Result<Var> {
    let shape = g.shape(dn).to_vec();
    if shape.len() != 2 || shape[0] != has_news.len() {
        return Err(AutodiffError::ShapeMismatch {
            op: "zi_impute",
            left: shape,
            right: vec![has_news.len()],
        });
    }
    let keep = Tensor::new(
        shape.clone(),
        has_news
            .iter()
            .flat_map(|&h| std::iter::repeat_n(if h { 1.0 } else { 0.0 }, shape[1]))
            .collect(),
    )?;
    let keep = g.constant(keep);
    let dn = g.mul(dn, keep)?;
    let ind = Tensor::new(
        vec![has_news.len(), 1],
        has_news.iter().map(|&h| if h { 0.0 } else { 1.0 }).collect(),
    )?;
    let ind = g.constant(ind);
    g.concat(&[dn, ind], 1)
}

/// Sample-major `[batch * steps, d]` rows to time-major packed order.
fn time_major(g: &mut Graph, x: Var, batch: usize, steps: usize) -> Result<(Var, Packing)> {
    let packing = Packing::uniform(batch, steps)?;
    let index: Vec<Vec<usize>> = (0..batch)
        .map(|b| (0..steps).map(|t| b * steps + t).collect())
        .collect();
    let rows: Vec<Option<usize>> = packing.pack_index(&index).into_iter().map(Some).collect();
    Ok((g.gather_rows(x, &rows)?, packing))
}

/// BiLSTM over each sample's `steps` daily vectors followed by attention pooling.
/// `x` holds sample-major rows `[batch * steps, d]`.
pub fn news_temporal_context(
    g: &mut Graph,
    x: Var,
    batch: usize,
    steps: usize,
    fwd: &LstmVars,
    bwd: &LstmVars,
    att: &AttentionVars,
) -> Result<Var> {
    let (xt, packing) = time_major(g, x, batch, steps)?;
    let h = bilstm(g, xt, &packing, fwd, bwd)?;
    encode_attention(g, h, &packing, att)
}

/// Two stacked LSTMs over `[batch * steps, 4]` sample-major price rows; returns the top layer's last state.
pub fn price_encoder(
    g: &mut Graph,
    x: Var,
    batch: usize,
    steps: usize,
    first: &LstmVars,
    second: &LstmVars,
) -> Result<Var> {
    let (xt, packing) = time_major(g, x, batch, steps)?;
    let h1 = run_lstm(g, xt, &packing, first)?;
    let h2 = run_lstm(g, h1, &packing, second)?;
    g.gather_rows(h2, &packing.last_rows())
}

/// Affine map of one-hot rows `[batch, n_stocks]`.
pub fn stock_embed(g: &mut Graph, onehot: &Tensor, p: &DenseVars) -> Result<Var> {
    let n = onehot.last_dim();
    for row in onehot.values().chunks(n.max(1)) {
        let ones = row.iter().filter(|&&x| x == 1.0).count();
        let zeros = row.iter().filter(|&&x| x == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(AutodiffError::InvalidArgument {
                op: "stock_embed",
                reason: format!("not a one-hot row: {row:?}"),
            });
        }
    }
    let x = g.constant(onehot.clone());
    p.apply(g, x)
}
