use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const TOL: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Contracts any output with fixed random weights so every element matters.
fn project(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_tensor(&mut rng, g.shape(v));
    let w = g.constant(w);
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

fn check<F>(f: F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    gradcheck(
        |g, xs| {
            let out = f(g, xs)?;
            if g.value(out).len() == 1 && g.shape(out).is_empty() {
                Ok(out)
            } else {
                project(g, out, 99)
            }
        },
        inputs,
        GRADCHECK_STEP,
    )
    .unwrap()
}

#[test]
fn gradcheck_every_op() {
    for (name, err) in crate::suite::ops(1).unwrap() {
        assert!(err < TOL, "{name}: {err}");
    }
}

#[test]
fn quadratic_gradient_is_exact() {
    let x = Tensor::vector(vec![0.3, -1.2, 2.0]);
    let e = gradcheck(
        |g, v| {
            let sq = g.mul(v[0], v[0])?;
            Ok(g.sum(sq))
        },
        &[x],
        GRADCHECK_STEP,
    )
    .unwrap();
    assert!(e < 1e-9, "{e}");
}

#[test]
fn softmax_with_categorical_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let logits = rand_tensor(&mut rng, &[4, 3]);
    let y = Tensor::new(vec![4, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1., 1., 0., 0.]).unwrap();
    let e = gradcheck(
        |g, v| {
            let p = g.softmax(v[0])?;
            g.categorical_logloss(p, &y)
        },
        &[logits],
        GRADCHECK_STEP,
    )
    .unwrap();
    assert!(e < 1e-6, "{e}");
}

#[test]
fn op_examples() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::full(&[5], 0.7));
    let s = g.softmax(c).unwrap();
    assert!(g.value(s).values().iter().all(|p| (p - 0.2).abs() < 1e-15));

    let x = g.constant(Tensor::vector(vec![-2.0, 0.0, 3.0]));
    let r = g.relu(x);
    assert_eq!(g.value(r).values(), &[0.0, 0.0, 3.0]);

    let m = g.param(Tensor::new(vec![3, 1], vec![3.0, 1.0, 2.0]).unwrap());
    let mx = g.max_over_axis(m, 0, None).unwrap();
    let loss = g.sum(mx);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(m).unwrap().values(), &[1.0, 0.0, 0.0]);

    let tie = g.param(Tensor::new(vec![3, 1], vec![2.0, 2.0, 1.0]).unwrap());
    let mt = g.max_over_axis(tie, 0, None).unwrap();
    let lt = g.sum(mt);
    g.backward(lt).unwrap();
    assert_eq!(g.grad(tie).unwrap().values(), &[1.0, 0.0, 0.0]);
}

#[test]
fn loss_examples() {
    let mut g = Graph::new();
    let uniform = g.constant(Tensor::full(&[1, 3], 1.0 / 3.0));
    let y = Tensor::new(vec![1, 3], vec![0.0, 1.0, 0.0]).unwrap();
    let l = g.categorical_logloss(uniform, &y).unwrap();
    assert!((g.value(l).item().unwrap() - 3f64.ln()).abs() < 1e-12);

    let t = Tensor::new(vec![1, 4], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let p = g.constant(t.clone());
    let l = g.multilabel_logloss(p, &t).unwrap();
    assert!(g.value(l).item().unwrap() < 1e-6);

    let x = g.constant(Tensor::vector(vec![1.0, 2.0]));
    let l = g.mse_loss(x, &Tensor::vector(vec![1.0, 2.0])).unwrap();
    assert_eq!(g.value(l).item(), Some(0.0));
}

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let w = g.param(Tensor::vector(vec![0.5, -1.0, 2.0]));
    let x = g.constant(Tensor::vector(vec![3.0, 4.0, 5.0]));
    let wx = g.mul(w, x).unwrap();
    let loss = g.sum(wx);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(w).unwrap().values(), &[3.0, 4.0, 5.0]);
    assert!(g.grad(x).is_none());

    // Repeated backward accumulates until reset.
    g.backward(loss).unwrap();
    assert_eq!(g.grad(w).unwrap().values(), &[6.0, 8.0, 10.0]);
    g.zero_grad();
    assert!(g.grad(w).is_none());

    // Two uses of one tensor sum their contributions.
    let mut g = Graph::new();
    let a = g.param(Tensor::vector(vec![1.5, -2.0]));
    let s1 = g.scale(a, 2.0);
    let s2 = g.scale(a, 3.0);
    let t = g.add(s1, s2).unwrap();
    let loss = g.sum(t);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(a).unwrap().values(), &[5.0, 5.0]);

    assert!(matches!(g.backward(t), Err(AutodiffError::NonScalarLoss(_))));
}

#[test]
fn shape_errors_name_the_op() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    match g.matmul(a, b) {
        Err(AutodiffError::ShapeMismatch { op, left, right }) => {
            assert_eq!(op, "matmul");
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![2, 3]);
        }
        other => panic!("unexpected {other:?}"),
    }
    let v = g.constant(Tensor::zeros(&[2]));
    assert!(g.add(a, v).is_err());
    assert!(g.mul(a, v).is_err());
    assert!(g.concat(&[a, v], 1).is_err());
    assert!(g.gather_rows(a, &[Some(5)]).is_err());
}

#[test]
fn fully_masked_rows_are_zero() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let s = g.masked_softmax(x, Some(&[false, false, true, false])).unwrap();
    assert_eq!(g.value(s).values(), &[0.0, 0.0, 1.0, 0.0]);
    let m = g.max_over_axis(x, 1, Some(&[false, false, true, true])).unwrap();
    assert_eq!(g.value(m).values(), &[0.0, 4.0]);
    let m = g.mean_over_axis(x, 1, Some(&[false, false, true, false])).unwrap();
    assert_eq!(g.value(m).values(), &[0.0, 3.0]);
    let loss = g.sum(m);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap().values(), &[0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut g = Graph::new();
        let a = g.constant(rand_tensor(&mut rng, &[6, 5]));
        let b = g.constant(rand_tensor(&mut rng, &[5, 7]));
        let c = g.matmul(a, b).unwrap();
        let s = g.softmax(c).unwrap();
        let t = g.tanh(s);
        g.value(t).clone()
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..8, seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let x = rand_tensor(&mut rng, &[rows, cols]);
        let scaled = Tensor::new(x.shape().to_vec(), x.values().iter().map(|v| v * 50.0).collect()).unwrap();
        let v = g.constant(scaled);
        let s = g.softmax(v).unwrap();
        for row in g.value(s).values().chunks(cols) {
            prop_assert!(row.iter().all(|p| *p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_shapes_pass_gradcheck(m in 1usize..5, k in 1usize..5, n in 1usize..5, seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor(&mut rng, &[m, k]);
        let b = rand_tensor(&mut rng, &[k, n]);
        let bias = rand_tensor(&mut rng, &[n]);
        let e = check(|g, x| {
            let y = g.affine(x[0], x[1], x[2])?;
            let y = g.tanh(y);
            let s = g.softmax(y)?;
            let c = g.concat(&[s, y], 1)?;
            g.max_over_axis(c, 0, None)
        }, &[a, b, bias]);
        prop_assert!(e < TOL, "{}", e);
    }
}
