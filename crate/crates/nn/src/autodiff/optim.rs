use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AutodiffError, Graph, Result, Tensor, Var};

/// Named trainable tensors. Iteration order is by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| AutodiffError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| AutodiffError::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Registers every tensor as a trainable leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> BTreeMap<String, Var> {
        self.tensors
            .iter()
            .map(|(k, t)| (k.clone(), g.param(t.clone())))
            .collect()
    }

    /// Reads the leaf gradients of a previous [`ParamStore::bind`]. Parameters
    /// the loss did not depend on get zeros.
    pub fn gradients(&self, g: &Graph, bound: &BTreeMap<String, Var>) -> BTreeMap<String, Tensor> {
        bound
            .iter()
            .map(|(k, &v)| {
                let grad = g.grad(v).unwrap_or_else(|| Tensor::zeros(g.shape(v)));
                (k.clone(), grad)
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.values().iter().all(|x| x.is_finite()))
    }
}

/// Scales all gradients down together so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|t| t.values())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for t in grads.values_mut() {
            t.values_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with moments keyed by parameter name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every parameter named in `grads`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, g) in grads {
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (name, g) in grads {
            let p = params.get_mut(name)?;
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for (i, (x, &d)) in p.values_mut().iter_mut().zip(g.values()).enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * d;
                v[i] = beta2 * v[i] + (1.0 - beta2) * d * d;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                *x -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(values));
        s
    }

    fn grads(values: Vec<f64>) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("w".to_string(), Tensor::vector(values))])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = store(vec![1.0, -2.0]);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut p, &grads(vec![0.0, 0.0])).unwrap();
        }
        assert_eq!(p.get("w").unwrap().values(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_is_normalized() {
        let mut p = store(vec![0.0, 0.0, 0.0]);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg);
        let g = [0.5, -3.0, 1e-3];
        adam.step(&mut p, &grads(g.to_vec())).unwrap();
        for (x, d) in p.get("w").unwrap().values().iter().zip(g) {
            let want = -cfg.lr * d / (d.abs() + cfg.eps);
            assert!((x - want).abs() < 1e-15, "{x} vs {want}");
        }
    }

    #[test]
    fn constant_gradient_moves_at_lr() {
        let mut p = store(vec![0.0]);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg);
        let mut prev = 0.0;
        for _ in 0..200 {
            adam.step(&mut p, &grads(vec![4.0])).unwrap();
            let x = p.get("w").unwrap().values()[0];
            let delta = prev - x;
            assert!((delta - cfg.lr).abs() < 1e-9);
            prev = x;
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = store(vec![0.0]);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(adam.step(&mut p, &grads(vec![1.0, 2.0])).is_err());
        assert_eq!(adam.steps(), 0);
        let unknown = BTreeMap::from([("nope".to_string(), Tensor::vector(vec![1.0]))]);
        assert!(matches!(
            adam.step(&mut p, &unknown),
            Err(AutodiffError::UnknownParameter(_))
        ));
    }

    #[test]
    fn clipping_scales_jointly() {
        let mut g = grads(vec![3.0, 4.0]);
        let n = clip_global_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        let v = g["w"].values();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
    }
}
