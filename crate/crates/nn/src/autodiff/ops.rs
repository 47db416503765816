use super::graph::{accumulate, Node};
use super::tensor::matmul_into;
use super::{AutodiffError, Graph, Result, Tensor, Var};

/// Probabilities are clipped into `[CLIP, 1 - CLIP]` before taking logs.
pub const LOGLOSS_CLIP: f64 = 1e-7;

pub(crate) enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    /// `b` is either the same shape as `a` or a suffix of it, repeated over the leading axes.
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    AbsDiff {
        a: Var,
        b: Var,
    },
    Scale {
        a: Var,
        c: f64,
    },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Softmax {
        a: Var,
        width: usize,
    },
    /// `argmax[j]` is the flat input index feeding output `j`, or `None` when fully masked.
    MaxOverAxis {
        a: Var,
        argmax: Vec<Option<usize>>,
    },
    MeanOverAxis {
        a: Var,
        outer: usize,
        len: usize,
        inner: usize,
        weights: Vec<f64>,
    },
    WeightedSum {
        w: Var,
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Sum(Var),
    Mean(Var),
    Concat {
        parts: Vec<Var>,
        outer: usize,
        widths: Vec<usize>,
    },
    GatherRows {
        a: Var,
        width: usize,
        index: Vec<Option<usize>>,
    },
    SliceRows {
        a: Var,
        width: usize,
        start: usize,
    },
    SliceCols {
        a: Var,
        cols: usize,
        start: usize,
        take: usize,
    },
    Reshape(Var),
    MseLoss {
        pred: Var,
        target: Vec<f64>,
    },
    MultilabelLogloss {
        pred: Var,
        target: Vec<f64>,
    },
    CategoricalLogloss {
        pred: Var,
        target: Vec<f64>,
        rows: usize,
    },
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

fn invalid(op: &'static str, reason: impl Into<String>) -> AutodiffError {
    AutodiffError::InvalidArgument {
        op,
        reason: reason.into(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Splits `shape` around `axis` into `(outer, len, inner)`.
fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(invalid(op, format!("axis {axis} out of range for shape {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn check_mask(op: &'static str, mask: Option<&[bool]>, expect: usize) -> Result<()> {
    match mask {
        Some(m) if m.len() != expect => Err(invalid(op, format!("mask has {} entries, expected {expect}", m.len()))),
        _ => Ok(()),
    }
}

impl Graph {
    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let values = t.values().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(t.shape().to_vec(), values).expect("same shape");
        let rg = self.requires_grad(a);
        self.push(out, op, rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch(op, sa, sb));
        }
        Ok(())
    }

    fn binary(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(op_name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let values = ta.values().iter().zip(tb.values()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), values).expect("same shape");
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, op, rg))
    }

    /// `[m, k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).values(), self.value(b).values(), &mut out, m, k, n);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul { a, b, m, k, n }, rg))
    }

    /// Elementwise sum. `b` may also match a trailing part of `a`'s shape and
    /// is then repeated over the leading axes (a bias row added to every row).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(mismatch("add", sa, sb));
        }
        let tb = self.value(b).values();
        let w = tb.len().max(1);
        let values = self
            .value(a)
            .values()
            .iter()
            .enumerate()
            .map(|(i, x)| x + tb[i % w])
            .collect();
        let out = Tensor::new(sa.to_vec(), values)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// `|a - b|` elementwise.
    pub fn abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("abs_diff", a, b, |x, y| (x - y).abs(), Op::AbsDiff { a, b })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale { a, c })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// `ln(1 + e^x)`.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    /// `x W + b` for `x: [m, k]`, `W: [k, n]`, `b: [n]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.masked_softmax(a, None)
    }

    /// Softmax over the last axis. Entries with `valid[i] == false` get
    /// probability zero; a row with no valid entry is all zeros.
    pub fn masked_softmax(&mut self, a: Var, valid: Option<&[bool]>) -> Result<Var> {
        let t = self.value(a);
        if t.rank() == 0 {
            return Err(invalid("softmax", "scalar input"));
        }
        check_mask("softmax", valid, t.len())?;
        let width = t.last_dim();
        let x = t.values();
        let mut out = vec![0.0; x.len()];
        for r in 0..t.leading() {
            let span = r * width..(r + 1) * width;
            let keep = |i: usize| valid.is_none_or(|m| m[i]);
            let max = span
                .clone()
                .filter(|&i| keep(i))
                .map(|i| x[i])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for i in span.clone() {
                if keep(i) {
                    out[i] = (x[i] - max).exp();
                    total += out[i];
                }
            }
            out[span].iter_mut().for_each(|v| *v /= total);
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::Softmax { a, width }, rg))
    }

    /// Maximum along `axis`, skipping positions whose mask entry is false.
    /// The mask covers the axis and everything before it. Ties go to the
    /// lowest index; a fully masked slice yields zero.
    pub fn max_over_axis(&mut self, a: Var, axis: usize, valid: Option<&[bool]>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, len, inner) = split_axis("max_over_axis", &shape, axis)?;
        check_mask("max_over_axis", valid, outer * len)?;
        let x = self.value(a).values();
        let mut out = vec![0.0; outer * inner];
        let mut argmax = vec![None; outer * inner];
        for o in 0..outer {
            for j in 0..inner {
                let mut best: Option<usize> = None;
                for t in 0..len {
                    if valid.is_some_and(|m| !m[o * len + t]) {
                        continue;
                    }
                    let idx = (o * len + t) * inner + j;
                    if best.is_none_or(|b| x[idx] > x[b]) {
                        best = Some(idx);
                    }
                }
                if let Some(b) = best {
                    out[o * inner + j] = x[b];
                }
                argmax[o * inner + j] = best;
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::MaxOverAxis { a, argmax }, rg))
    }

    /// Mean along `axis` over unmasked positions; a fully masked slice yields zero.
    pub fn mean_over_axis(&mut self, a: Var, axis: usize, valid: Option<&[bool]>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, len, inner) = split_axis("mean_over_axis", &shape, axis)?;
        check_mask("mean_over_axis", valid, outer * len)?;
        let mut weights = vec![0.0; outer * len];
        for o in 0..outer {
            let count = (0..len).filter(|&t| valid.is_none_or(|m| m[o * len + t])).count();
            if count == 0 {
                continue;
            }
            for t in 0..len {
                if valid.is_none_or(|m| m[o * len + t]) {
                    weights[o * len + t] = 1.0 / count as f64;
                }
            }
        }
        let x = self.value(a).values();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for t in 0..len {
                let w = weights[o * len + t];
                if w == 0.0 {
                    continue;
                }
                for j in 0..inner {
                    out[o * inner + j] += w * x[(o * len + t) * inner + j];
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let rg = self.requires_grad(a);
        let op = Op::MeanOverAxis {
            a,
            outer,
            len,
            inner,
            weights,
        };
        Ok(self.push(Tensor::new(out_shape, out)?, op, rg))
    }

    /// `out[o, :] = sum_t w[o, t] x[o, t, :]` for `w: [.., len]` and `x: [.., len, inner]`.
    pub fn weighted_sum(&mut self, w: Var, x: Var) -> Result<Var> {
        let (sw, sx) = (self.shape(w).to_vec(), self.shape(x).to_vec());
        if sx.len() != sw.len() + 1 || sx[..sw.len()] != sw[..] || sw.is_empty() {
            return Err(mismatch("weighted_sum", &sw, &sx));
        }
        let len = *sw.last().expect("non-empty");
        let outer = sw.iter().product::<usize>() / len.max(1);
        let inner = *sx.last().expect("non-empty");
        let (wv, xv) = (self.value(w).values(), self.value(x).values());
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for t in 0..len {
                let a = wv[o * len + t];
                for j in 0..inner {
                    out[o * inner + j] += a * xv[(o * len + t) * inner + j];
                }
            }
        }
        let mut out_shape = sw;
        *out_shape.last_mut().expect("non-empty") = inner;
        let rg = self.requires_grad(w) || self.requires_grad(x);
        let op = Op::WeightedSum {
            w,
            x,
            outer,
            len,
            inner,
        };
        Ok(self.push(Tensor::new(out_shape, out)?, op, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).values().iter().sum();
        let rg = self.requires_grad(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(invalid("mean", "empty tensor"));
        }
        let m = t.values().iter().sum::<f64>() / t.len() as f64;
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::scalar(m), Op::Mean(a), rg))
    }

    /// Joins tensors along `axis`; every other axis must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(invalid("concat", "no inputs"));
        };
        let base = self.shape(first).to_vec();
        let (outer, _, inner) = split_axis("concat", &base, axis)?;
        let mut widths = Vec::with_capacity(parts.len());
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(mismatch("concat", &base, s));
            }
            out_shape[axis] += s[axis];
            widths.push(s[axis] * inner);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).values()[o * w..(o + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        let op = Op::Concat {
            parts: parts.to_vec(),
            outer,
            widths,
        };
        Ok(self.push(Tensor::new(out_shape, out)?, op, rg))
    }

    /// Picks rows of `a` (viewed as `[rows, last_dim]`); `None` gives a zero row.
    pub fn gather_rows(&mut self, a: Var, index: &[Option<usize>]) -> Result<Var> {
        let t = self.value(a);
        if t.rank() < 1 {
            return Err(invalid("gather_rows", "scalar input"));
        }
        let width = t.last_dim();
        let rows = t.leading();
        let mut out = vec![0.0; index.len() * width];
        for (r, i) in index.iter().enumerate() {
            if let Some(i) = *i {
                if i >= rows {
                    return Err(invalid("gather_rows", format!("row {i} out of range for {rows} rows")));
                }
                out[r * width..(r + 1) * width].copy_from_slice(&t.values()[i * width..(i + 1) * width]);
            }
        }
        let rg = self.requires_grad(a);
        let op = Op::GatherRows {
            a,
            width,
            index: index.to_vec(),
        };
        Ok(self.push(Tensor::new(vec![index.len(), width], out)?, op, rg))
    }

    /// Rows `start..end` of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 || start > end || end > s[0] {
            return Err(invalid("slice_rows", format!("rows {start}..{end} of shape {s:?}")));
        }
        let width = s[1];
        let out = self.value(a).values()[start * width..end * width].to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(
            Tensor::new(vec![end - start, width], out)?,
            Op::SliceRows { a, width, start },
            rg,
        ))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let cols = t.last_dim();
        if t.rank() == 0 || start > end || end > cols {
            return Err(invalid(
                "slice_cols",
                format!("columns {start}..{end} of shape {:?}", t.shape()),
            ));
        }
        let take = end - start;
        let mut out = Vec::with_capacity(t.leading() * take);
        for r in 0..t.leading() {
            out.extend_from_slice(&t.values()[r * cols + start..r * cols + end]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = take;
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::SliceCols { a, cols, start, take }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Mean squared error against a fixed target of the same shape.
    pub fn mse_loss(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() || p.is_empty() {
            return Err(mismatch("mse_loss", p.shape(), target.shape()));
        }
        let n = p.len() as f64;
        let loss = p
            .values()
            .iter()
            .zip(target.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        let rg = self.requires_grad(pred);
        let op = Op::MseLoss {
            pred,
            target: target.values().to_vec(),
        };
        Ok(self.push(Tensor::scalar(loss), op, rg))
    }

    /// Binary cross-entropy averaged over every label of every row.
    pub fn multilabel_logloss(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() || p.is_empty() {
            return Err(mismatch("multilabel_logloss", p.shape(), target.shape()));
        }
        let n = p.len() as f64;
        let loss = -p
            .values()
            .iter()
            .zip(target.values())
            .map(|(&q, &y)| {
                let q = q.clamp(LOGLOSS_CLIP, 1.0 - LOGLOSS_CLIP);
                y * q.ln() + (1.0 - y) * (1.0 - q).ln()
            })
            .sum::<f64>()
            / n;
        let rg = self.requires_grad(pred);
        let op = Op::MultilabelLogloss {
            pred,
            target: target.values().to_vec(),
        };
        Ok(self.push(Tensor::scalar(loss), op, rg))
    }

    /// `-sum_k y_k ln p_k` averaged over rows of a `[rows, classes]` prediction.
    pub fn categorical_logloss(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() || p.is_empty() {
            return Err(mismatch("categorical_logloss", p.shape(), target.shape()));
        }
        let rows = p.leading();
        let loss = -p
            .values()
            .iter()
            .zip(target.values())
            .filter(|(_, &y)| y != 0.0)
            .map(|(&q, &y)| y * q.max(LOGLOSS_CLIP).ln())
            .sum::<f64>()
            / rows as f64;
        let rg = self.requires_grad(pred);
        let op = Op::CategoricalLogloss {
            pred,
            target: target.values().to_vec(),
            rows,
        };
        Ok(self.push(Tensor::scalar(loss), op, rg))
    }
}

impl Op {
    /// Pushes the upstream gradient `g` of a node with output `y` to its parents.
    pub(crate) fn backward(&self, nodes: &[Node], y: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: &Var| nodes[v.0].value.values();
        match self {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let (av, bv) = (val(a), val(b));
                accumulate(grads, nodes, *a, |ga| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bv[p * n + j];
                            }
                            ga[i * k + p] += s;
                        }
                    }
                });
                accumulate(grads, nodes, *b, |gb| {
                    for i in 0..m {
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += x * g[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                accumulate(grads, nodes, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, d)| *x += d));
                accumulate(grads, nodes, *b, |gb| {
                    let w = gb.len().max(1);
                    for (i, d) in g.iter().enumerate() {
                        gb[i % w] += d;
                    }
                });
            }
            Op::Sub { a, b } => {
                accumulate(grads, nodes, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, d)| *x += d));
                accumulate(grads, nodes, *b, |gb| gb.iter_mut().zip(g).for_each(|(x, d)| *x -= d));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (val(a), val(b));
                accumulate(grads, nodes, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                accumulate(grads, nodes, *b, |gb| {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::AbsDiff { a, b } => {
                let (av, bv) = (val(a), val(b));
                let sign = |i: usize| {
                    let d = av[i] - bv[i];
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                accumulate(grads, nodes, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * sign(i);
                    }
                });
                accumulate(grads, nodes, *b, |gb| {
                    for i in 0..g.len() {
                        gb[i] -= g[i] * sign(i);
                    }
                });
            }
            Op::Scale { a, c } => {
                accumulate(grads, nodes, *a, |ga| {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += c * d)
                });
            }
            Op::Sigmoid(a) => {
                let yv = y.values();
                accumulate(grads, nodes, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * yv[i] * (1.0 - yv[i]);
                    }
                });
            }
            Op::Tanh(a) => {
                let yv = y.values();
                accumulate(grads, nodes, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
                    }
                });
            }
            Op::Relu(a) => {
                let av = val(a);
                accumulate(grads, nodes, *a, |ga| {
                    for i in 0..g.len() {
                        if av[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::Softplus(a) => {
                let av = val(a);
                accumulate(grads, nodes, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * sigmoid(av[i]);
                    }
                });
            }
            Op::Softmax { a, width } => {
                let yv = y.values();
                let w = *width;
                accumulate(grads, nodes, *a, |ga| {
                    for r in 0..yv.len() / w.max(1) {
                        let span = r * w..(r + 1) * w;
                        let dot: f64 = span.clone().map(|i| g[i] * yv[i]).sum();
                        for i in span {
                            ga[i] += yv[i] * (g[i] - dot);
                        }
                    }
                });
            }
            Op::MaxOverAxis { a, argmax } => {
                accumulate(grads, nodes, *a, |ga| {
                    for (j, src) in argmax.iter().enumerate() {
                        if let Some(s) = src {
                            ga[*s] += g[j];
                        }
                    }
                });
            }
            Op::MeanOverAxis {
                a,
                outer,
                len,
                inner,
                weights,
            } => {
                accumulate(grads, nodes, *a, |ga| {
                    for o in 0..*outer {
                        for t in 0..*len {
                            let w = weights[o * len + t];
                            for j in 0..*inner {
                                ga[(o * len + t) * inner + j] += w * g[o * inner + j];
                            }
                        }
                    }
                });
            }
            Op::WeightedSum {
                w,
                x,
                outer,
                len,
                inner,
            } => {
                let (wv, xv) = (val(w), val(x));
                let (outer, len, inner) = (*outer, *len, *inner);
                accumulate(grads, nodes, *w, |gw| {
                    for o in 0..outer {
                        for t in 0..len {
                            let mut s = 0.0;
                            for j in 0..inner {
                                s += g[o * inner + j] * xv[(o * len + t) * inner + j];
                            }
                            gw[o * len + t] += s;
                        }
                    }
                });
                accumulate(grads, nodes, *x, |gx| {
                    for o in 0..outer {
                        for t in 0..len {
                            let a = wv[o * len + t];
                            for j in 0..inner {
                                gx[(o * len + t) * inner + j] += a * g[o * inner + j];
                            }
                        }
                    }
                });
            }
            Op::Sum(a) => {
                accumulate(grads, nodes, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::Mean(a) => {
                accumulate(grads, nodes, *a, |ga| {
                    let d = g[0] / ga.len() as f64;
                    ga.iter_mut().for_each(|x| *x += d);
                });
            }
            Op::Concat { parts, outer, widths } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                for (p, &w) in parts.iter().zip(widths) {
                    accumulate(grads, nodes, *p, |gp| {
                        for o in 0..*outer {
                            let src = &g[o * total + offset..o * total + offset + w];
                            gp[o * w..(o + 1) * w].iter_mut().zip(src).for_each(|(x, d)| *x += d);
                        }
                    });
                    offset += w;
                }
            }
            Op::GatherRows { a, width, index } => {
                let w = *width;
                accumulate(grads, nodes, *a, |ga| {
                    for (r, i) in index.iter().enumerate() {
                        if let Some(i) = *i {
                            let src = &g[r * w..(r + 1) * w];
                            ga[i * w..(i + 1) * w].iter_mut().zip(src).for_each(|(x, d)| *x += d);
                        }
                    }
                });
            }
            Op::SliceRows { a, width, start } => {
                let off = start * width;
                accumulate(grads, nodes, *a, |ga| {
                    ga[off..off + g.len()].iter_mut().zip(g).for_each(|(x, d)| *x += d);
                });
            }
            Op::SliceCols { a, cols, start, take } => {
                accumulate(grads, nodes, *a, |ga| {
                    for r in 0..g.len() / take.max(&1) {
                        for j in 0..*take {
                            ga[r * cols + start + j] += g[r * take + j];
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                accumulate(grads, nodes, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, d)| *x += d));
            }
            Op::MseLoss { pred, target } => {
                let pv = val(pred);
                let n = pv.len() as f64;
                accumulate(grads, nodes, *pred, |gp| {
                    for i in 0..pv.len() {
                        gp[i] += g[0] * 2.0 * (pv[i] - target[i]) / n;
                    }
                });
            }
            Op::MultilabelLogloss { pred, target } => {
                let pv = val(pred);
                let n = pv.len() as f64;
                accumulate(grads, nodes, *pred, |gp| {
                    for i in 0..pv.len() {
                        let q = pv[i];
                        if !(LOGLOSS_CLIP..=1.0 - LOGLOSS_CLIP).contains(&q) {
                            continue;
                        }
                        let y = target[i];
                        gp[i] += g[0] * (-(y / q) + (1.0 - y) / (1.0 - q)) / n;
                    }
                });
            }
            Op::CategoricalLogloss { pred, target, rows } => {
                let pv = val(pred);
                accumulate(grads, nodes, *pred, |gp| {
                    for i in 0..pv.len() {
                        let y = target[i];
                        if y == 0.0 || pv[i] < LOGLOSS_CLIP {
                            continue;
                        }
                        gp[i] -= g[0] * y / (pv[i] * *rows as f64);
                    }
                });
            }
        }
    }
}
