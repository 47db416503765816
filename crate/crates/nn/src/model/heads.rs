//! Sentence-level pretraining heads: multi-label topic tagging and three-way inference.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, DenseVars};
use crate::autodiff::{Graph, ParamStore, Result, Var};

pub const RCV1_LABELS: usize = 55;
pub const SNLI_CLASSES: usize = 3;

/// Hidden activation of the inference head. The two are not interchangeable:
/// `Softplus` is `ln(1 + e^x)`, `Relu` is `max(0, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnliActivation {
    #[default]
    Relu,
    Softplus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlHeads {
    pub d_s: usize,
    pub hidden: usize,
    pub activation: SnliActivation,
    pub params: ParamStore,
}

impl TlHeads {
    pub fn new(d_s: usize, hidden: usize, activation: SnliActivation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        layers::init_dense(&mut params, "rcv1", d_s, RCV1_LABELS, &mut rng);
        layers::init_dense(&mut params, "snli_hidden", 4 * d_s, hidden, &mut rng);
        layers::init_dense(&mut params, "snli_out", hidden, SNLI_CLASSES, &mut rng);
        TlHeads {
            d_s,
            hidden,
            activation,
            params,
        }
    }

    /// Label probabilities `[batch, 55]` from sentence vectors `[batch, d_s]`.
    pub fn rcv1_head(&self, g: &mut Graph, bound: &BTreeMap<String, Var>, s: Var) -> Result<Var> {
        let z = DenseVars::bind(bound, "rcv1")?.apply(g, s)?;
        Ok(g.sigmoid(z))
    }

    /// Class probabilities `[batch, 3]` (entailment, contradiction, neutral)
    /// from premise and hypothesis vectors made by the same encoder.
    pub fn snli_head(&self, g: &mut Graph, bound: &BTreeMap<String, Var>, sp: Var, sh: Var) -> Result<Var> {
        let diff = g.abs_diff(sp, sh)?;
        let prod = g.mul(sp, sh)?;
        let joint = g.concat(&[sp, sh, diff, prod], 1)?;
        let z = DenseVars::bind(bound, "snli_hidden")?.apply(g, joint)?;
        let a = match self.activation {
            SnliActivation::Relu => g.relu(z),
            SnliActivation::Softplus => g.softplus(z),
        };
        let logits = DenseVars::bind(bound, "snli_out")?.apply(g, a)?;
        g.softmax(logits)
    }
}
