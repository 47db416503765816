use super::{Graph, Result, Tensor, Var};

pub const GRADCHECK_STEP: f64 = 1e-5;

/// Largest `|a - n| / max(1, |a| + |n|)` between the backward-pass gradient `a`
/// and the central difference `n` over every element of every input.
///
/// `f` must build a scalar from the given leaves and be deterministic.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        g.value(out)
            .item()
            .ok_or_else(|| super::AutodiffError::NonScalarLoss(g.shape(out).to_vec()))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| g.grad(v).unwrap_or_else(|| Tensor::zeros(g.shape(v))))
        .collect();

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (i, a) in analytic.iter().enumerate() {
        for j in 0..a.len() {
            let x = probe[i].values()[j];
            probe[i].values_mut()[j] = x + h;
            let up = eval(&probe)?;
            probe[i].values_mut()[j] = x - h;
            let down = eval(&probe)?;
            probe[i].values_mut()[j] = x;
            let num = (up - down) / (2.0 * h);
            let an = a.values()[j];
            worst = worst.max((an - num).abs() / (an.abs() + num.abs()).max(1.0));
        }
    }
    Ok(worst)
}
