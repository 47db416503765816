//! GARCH(1,1) with constant mean.
//!
//! ```text
//! r_t     = mu + eps_t
//! eps_t   = sigma_t * z_t,          z_t ~ iid N(0, 1)
//! sigma2_t = a0 + a1 * eps2_{t-1} + b1 * sigma2_{t-1}
//! ```
//!
//! Fitting is two-step Gaussian QMLE: `mu` is the sample mean, then the
//! variance parameters are optimized over an unconstrained space
//!
//! ```text
//! a0 = exp(t0),  p = logistic(t1),  q = logistic(t2),  a1 = p q,  b1 = p (1 - q)
//! ```
//!
//! so every candidate satisfies `a0 > 0, a1, b1 >= 0, a1 + b1 < 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Shortest series accepted by the filter and the fitter.
pub const MIN_OBSERVATIONS: usize = 20;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GarchError {
    #[error("series too short: {got} observations, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("invalid GARCH parameters: {0}")]
    InvalidParams(String),
    #[error("non-stationary parameters: a1 + b1 = {0} >= 1")]
    NonStationary(f64),
    #[error("non-finite return at index {0}")]
    NonFiniteReturn(usize),
    #[error("fit failed after {restarts} restarts: {reason}")]
    FitFailed { restarts: usize, reason: String },
    #[error("horizon must be >= 1")]
    ZeroHorizon,
}

pub type Result<T> = std::result::Result<T, GarchError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub mu: f64,
    pub a0: f64,
    pub a1: f64,
    pub b1: f64,
}

impl GarchParams {
    pub fn new(mu: f64, a0: f64, a1: f64, b1: f64) -> Result<Self> {
        let p = GarchParams { mu, a0, a1, b1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.a0.is_finite() && self.a1.is_finite() && self.b1.is_finite()) {
            return Err(GarchError::InvalidParams(format!("non-finite value in {self:?}")));
        }
        if self.a0 <= 0.0 {
            return Err(GarchError::InvalidParams(format!("a0 = {} must be > 0", self.a0)));
        }
        if self.a1 < 0.0 || self.b1 < 0.0 {
            return Err(GarchError::InvalidParams(format!(
                "a1 = {}, b1 = {} must be >= 0",
                self.a1, self.b1
            )));
        }
        if self.persistence() >= 1.0 {
            return Err(GarchError::NonStationary(self.persistence()));
        }
        Ok(())
    }

    pub fn persistence(&self) -> f64 {
        self.a1 + self.b1
    }

    /// Long-run variance `a0 / (1 - a1 - b1)`.
    pub fn unconditional_variance(&self) -> f64 {
        self.a0 / (1.0 - self.persistence())
    }
}

/// Parameters with the filtered variance path they imply on a return series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: GarchParams,
    pub cond_variance: Vec<f64>,
    pub residuals: Vec<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// The serialized form of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub mu: f64,
    pub a0: f64,
    pub a1: f64,
    pub b1: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl GarchFit {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            mu: self.params.mu,
            a0: self.params.a0,
            a1: self.params.a1,
            b1: self.params.b1,
            log_likelihood: self.log_likelihood,
            converged: self.converged,
            iterations: self.iterations,
        }
    }
}

impl FitSummary {
    pub fn params(&self) -> Result<GarchParams> {
        GarchParams::new(self.mu, self.a0, self.a1, self.b1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchForecast {
    pub horizon: usize,
    /// `E_T[sigma2_{T+k}]` for `k = 1..=horizon`.
    pub expected_variance: Vec<f64>,
    pub unconditional_variance: f64,
}

fn check_returns(returns: &[f64]) -> Result<()> {
    if returns.len() < MIN_OBSERVATIONS {
        return Err(GarchError::TooShort {
            got: returns.len(),
            need: MIN_OBSERVATIONS,
        });
    }
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(GarchError::NonFiniteReturn(i));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance of the demeaned series; seeds `sigma2_1`.
fn initial_variance(returns: &[f64]) -> f64 {
    let m = mean(returns);
    returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / returns.len() as f64
}

/// Gaussian quasi log-likelihood without storing the path.
fn log_likelihood(returns: &[f64], mu: f64, a0: f64, a1: f64, b1: f64, sigma2_init: f64) -> f64 {
    let mut s2 = sigma2_init;
    let mut ll = 0.0;
    let mut prev_eps2 = 0.0;
    for (t, r) in returns.iter().enumerate() {
        if t > 0 {
            s2 = a0 + a1 * prev_eps2 + b1 * s2;
        }
        let eps = r - mu;
        let eps2 = eps * eps;
        ll += -0.5 * (LN_2PI + s2.ln() + eps2 / s2);
        prev_eps2 = eps2;
    }
    ll
}

/// Runs the conditional-variance recursion and scores the path.
pub fn filter_variance(returns: &[f64], params: &GarchParams) -> Result<GarchFit> {
    check_returns(returns)?;
    params.validate()?;
    let GarchParams { mu, a0, a1, b1 } = *params;
    let mut cond_variance = Vec::with_capacity(returns.len());
    let mut residuals = Vec::with_capacity(returns.len());
    let mut s2 = initial_variance(returns);
    if s2 <= 0.0 {
        // A constant series has no sample variance to start from.
        s2 = params.unconditional_variance();
    }
    let mut ll = 0.0;
    for (t, r) in returns.iter().enumerate() {
        if t > 0 {
            let e: f64 = residuals[t - 1];
            s2 = a0 + a1 * e * e + b1 * s2;
        }
        let eps = r - mu;
        ll += -0.5 * (LN_2PI + s2.ln() + eps * eps / s2);
        cond_variance.push(s2);
        residuals.push(eps);
    }
    Ok(GarchFit {
        params: *params,
        cond_variance,
        residuals,
        log_likelihood: ll,
        converged: true,
        iterations: 0,
    })
}

/// Optimizer settings for [`fit_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop once the relative log-likelihood gain of an iteration drops below this.
    pub rel_tolerance: f64,
    /// Central-difference step in the unconstrained coordinates.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 5,
            max_iterations: 2000,
            rel_tolerance: 1e-9,
            fd_step: 1e-5,
            seed: 0x6172_6368,
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn to_params(mu: f64, theta: &[f64; 3]) -> GarchParams {
    let p = logistic(theta[1]);
    let q = logistic(theta[2]);
    GarchParams {
        mu,
        a0: theta[0].exp(),
        a1: p * q,
        b1: p * (1.0 - q),
    }
}

struct Objective<'a> {
    returns: &'a [f64],
    mu: f64,
    sigma2_init: f64,
    evaluations: usize,
}

impl Objective<'_> {
    /// Negative log-likelihood; `+inf` where the recursion is not finite.
    fn value(&mut self, theta: &[f64; 3]) -> f64 {
        self.evaluations += 1;
        let p = to_params(self.mu, theta);
        if p.validate().is_err() {
            return f64::INFINITY;
        }
        let ll = log_likelihood(self.returns, self.mu, p.a0, p.a1, p.b1, self.sigma2_init);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&mut self, theta: &[f64; 3], h: f64) -> Option<[f64; 3]> {
        let mut g = [0.0; 3];
        for i in 0..3 {
            let mut up = *theta;
            let mut dn = *theta;
            up[i] += h;
            dn[i] -= h;
            let (fu, fd) = (self.value(&up), self.value(&dn));
            if !(fu.is_finite() && fd.is_finite()) {
                return None;
            }
            g[i] = (fu - fd) / (2.0 * h);
        }
        Some(g)
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct LocalOptimum {
    theta: [f64; 3],
    neg_ll: f64,
    converged: bool,
    iterations: usize,
}

/// BFGS with Armijo backtracking on the unconstrained coordinates.
fn minimize(obj: &mut Objective<'_>, start: [f64; 3], opts: &FitOptions) -> Option<LocalOptimum> {
    let mut x = start;
    let mut fx = obj.value(&x);
    if !fx.is_finite() {
        return None;
    }
    let mut g = obj.gradient(&x, opts.fd_step)?;
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut hinv = identity;
    let mut converged = false;
    let mut iterations = 0;
    let mut just_reset = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut dir = [0.0; 3];
        for i in 0..3 {
            dir[i] = -(0..3).map(|j| hinv[i][j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            hinv = identity;
            dir = [-g[0], -g[1], -g[2]];
            slope = dot(&g, &dir);
        }
        // Cap the step so a bad curvature estimate cannot jump across the space.
        let norm = dot(&dir, &dir).sqrt();
        let mut step = if norm > 5.0 { 5.0 / norm } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let cand = [x[0] + step * dir[0], x[1] + step * dir[1], x[2] + step * dir[2]];
            let fc = obj.value(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            if just_reset {
                // Steepest descent made no progress either: at a stationary point
                // up to finite-difference noise.
                converged = true;
                break;
            }
            hinv = identity;
            just_reset = true;
            continue;
        };
        just_reset = false;
        let gain = (fx - fxn) / fx.abs().max(1e-300);
        let Some(gn) = obj.gradient(&xn, opts.fd_step) else {
            x = xn;
            fx = fxn;
            break;
        };
        let s = [xn[0] - x[0], xn[1] - x[1], xn[2] - x[2]];
        let y = [gn[0] - g[0], gn[1] - g[1], gn[2] - g[2]];
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let rho = 1.0 / sy;
            let mut hy = [0.0; 3];
            for i in 0..3 {
                hy[i] = (0..3).map(|j| hinv[i][j] * y[j]).sum();
            }
            let yhy = dot(&y, &hy);
            let mut next = hinv;
            for i in 0..3 {
                for j in 0..3 {
                    next[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            hinv = next;
        }
        x = xn;
        fx = fxn;
        g = gn;
        if gain < opts.rel_tolerance {
            converged = true;
            break;
        }
    }
    Some(LocalOptimum {
        theta: x,
        neg_ll: fx,
        converged,
        iterations,
    })
}

/// Fits with [`FitOptions::default`].
pub fn fit(returns: &[f64]) -> Result<GarchFit> {
    fit_with(returns, &FitOptions::default())
}

/// Two-step QMLE: `mu` from the sample mean, variance parameters by BFGS
/// from one moment-matched start plus `opts.restarts` random starts.
pub fn fit_with(returns: &[f64], opts: &FitOptions) -> Result<GarchFit> {
    check_returns(returns)?;
    let mu = mean(returns);
    let var = initial_variance(returns);
    if var.is_nan() || var <= 0.0 {
        return Err(GarchError::FitFailed {
            restarts: 0,
            reason: "returns have zero variance".into(),
        });
    }
    let mut obj = Objective {
        returns,
        mu,
        sigma2_init: var,
        evaluations: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start_for = |p: f64, q: f64| [(var * (1.0 - p)).ln(), logit(p), logit(q)];
    let mut starts = vec![start_for(0.9, 0.1)];
    for _ in 0..opts.restarts {
        let p = rng.random_range(0.05..0.98);
        let q = rng.random_range(0.02..0.6);
        starts.push(start_for(p, q));
    }
    let mut best: Option<LocalOptimum> = None;
    let mut total_iterations = 0;
    for s in starts {
        if let Some(opt) = minimize(&mut obj, s, opts) {
            total_iterations += opt.iterations;
            let better = best.as_ref().is_none_or(|b| opt.neg_ll < b.neg_ll);
            if better {
                best = Some(opt);
            }
        }
    }
    let best = best.ok_or_else(|| GarchError::FitFailed {
        restarts: opts.restarts + 1,
        reason: format!("likelihood not finite at any start ({} evaluations)", obj.evaluations),
    })?;
    let params = to_params(mu, &best.theta);
    let mut out = filter_variance(returns, &params)?;
    out.converged = best.converged;
    out.iterations = total_iterations;
    Ok(out)
}

/// `a0 + a1 eps2_T + b1 sigma2_T` from the last filtered values.
pub fn forecast_one_step(fit: &GarchFit) -> f64 {
    let GarchParams { a0, a1, b1, .. } = fit.params;
    let eps = fit.residuals.last().copied().unwrap_or(0.0);
    let s2 = fit
        .cond_variance
        .last()
        .copied()
        .unwrap_or_else(|| fit.params.unconditional_variance());
    a0 + a1 * eps * eps + b1 * s2
}

/// Expected variances `1..=horizon` steps ahead via `E_{k+1} = a0 + (a1 + b1) E_k`.
pub fn forecast_multi_step(fit: &GarchFit, horizon: usize) -> Result<GarchForecast> {
    if horizon == 0 {
        return Err(GarchError::ZeroHorizon);
    }
    let p = fit.params.persistence();
    if p >= 1.0 {
        return Err(GarchError::NonStationary(p));
    }
    let mut expected_variance = Vec::with_capacity(horizon);
    let mut e = forecast_one_step(fit);
    expected_variance.push(e);
    for _ in 1..horizon {
        e = fit.params.a0 + p * e;
        expected_variance.push(e);
    }
    Ok(GarchForecast {
        horizon,
        expected_variance,
        unconditional_variance: fit.params.unconditional_variance(),
    })
}

/// Draws `n` returns with `sigma2_1` at the unconditional level.
pub fn simulate_garch(params: &GarchParams, n: usize, rng_seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(simulate_garch_path(params, n, &mut rng)?.0)
}

/// Returns `(returns, conditional variances)` driven by `rng`.
pub fn simulate_garch_path<R: Rng>(params: &GarchParams, n: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    let mut returns = Vec::with_capacity(n);
    let mut variances = Vec::with_capacity(n);
    let mut s2 = params.unconditional_variance();
    let mut prev_eps = 0.0;
    for t in 0..n {
        if t > 0 {
            s2 = params.a0 + params.a1 * prev_eps * prev_eps + params.b1 * s2;
        }
        let z: f64 = StandardNormal.sample(rng);
        let eps = s2.sqrt() * z;
        returns.push(params.mu + eps);
        variances.push(s2);
        prev_eps = eps;
    }
    Ok((returns, variances))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> GarchParams {
        GarchParams::new(0.0, 1e-6, 0.1, 0.85).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(GarchParams::new(0.0, 0.0, 0.1, 0.8).is_err());
        assert!(GarchParams::new(0.0, 1e-6, -0.1, 0.8).is_err());
        assert!(matches!(
            GarchParams::new(0.0, 1e-6, 0.2, 0.8),
            Err(GarchError::NonStationary(_))
        ));
        assert_relative_eq!(reference().unconditional_variance(), 2e-5, max_relative = 1e-12);
    }

    #[test]
    fn filter_rejects_short_series() {
        let r = vec![0.01; 19];
        assert_eq!(
            filter_variance(&r, &reference()).unwrap_err(),
            GarchError::TooShort { got: 19, need: 20 }
        );
    }

    #[test]
    fn constant_variance_when_no_dynamics() {
        let r = simulate_garch(&GarchParams::new(0.0, 4e-4, 0.0, 0.0).unwrap(), 200, 1).unwrap();
        let f = filter_variance(&r, &GarchParams::new(0.0, 3e-4, 0.0, 0.0).unwrap()).unwrap();
        assert!(f.cond_variance[1..].iter().all(|&v| v == 3e-4));
    }

    #[test]
    fn constant_returns_decay_geometrically() {
        let mut r = vec![0.001; 60];
        // A non-degenerate start so the sample variance is positive.
        r[0] = 0.02;
        let params = GarchParams::new(0.001, 1e-6, 0.1, 0.8).unwrap();
        let f = filter_variance(&r, &params).unwrap();
        let limit = 1e-6 / (1.0 - 0.8);
        for t in 2..r.len() {
            // Closed form for t >= 2: limit + b1^(t-1) (sigma2_1 - limit).
            let want = limit + 0.8f64.powi(t as i32 - 1) * (f.cond_variance[1] - limit);
            assert_relative_eq!(f.cond_variance[t], want, max_relative = 1e-12);
        }
        assert!(f.residuals[1..].iter().all(|&e| e == 0.0));
    }

    #[test]
    fn exactly_constant_returns() {
        let r = vec![0.001; 200];
        let params = GarchParams::new(0.001, 1e-6, 0.1, 0.8).unwrap();
        let f = filter_variance(&r, &params).unwrap();
        assert!(f.residuals.iter().all(|&e| e == 0.0));
        assert!(f.log_likelihood.is_finite());
        assert_relative_eq!(*f.cond_variance.last().unwrap(), 1e-6 / 0.2, max_relative = 1e-9);
        let gaps: Vec<f64> = f.cond_variance.iter().map(|v| (v - 5e-6).abs()).collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn recursion_spot_check() {
        let mut r = vec![0.0; 20];
        r[18] = 0.02; // eps^2 = 4e-4
        let f = filter_variance(&r, &GarchParams::new(0.0, 1e-6, 0.1, 0.85).unwrap()).unwrap();
        let want = 1e-6 + 0.1 * 4e-4 + 0.85 * f.cond_variance[18];
        assert_relative_eq!(f.cond_variance[19], want, max_relative = 1e-14);
        // Direct single-step arithmetic from the worked values.
        let step: f64 = 1e-6 + 0.1 * 4e-4 + 0.85 * 2.5e-4;
        assert_relative_eq!(step, 2.535e-4, max_relative = 1e-12);
    }

    fn synthetic_fit(eps: f64, s2: f64) -> GarchFit {
        GarchFit {
            params: reference(),
            cond_variance: vec![s2],
            residuals: vec![eps],
            log_likelihood: 0.0,
            converged: true,
            iterations: 0,
        }
    }

    #[test]
    fn one_step_examples() {
        assert_relative_eq!(
            forecast_one_step(&synthetic_fit(0.02, 2.5e-4)),
            2.535e-4,
            max_relative = 1e-12
        );
        let mut f = synthetic_fit(0.02, 2.5e-4);
        f.params = GarchParams::new(0.0, 3e-5, 0.0, 0.0).unwrap();
        assert_eq!(forecast_one_step(&f), 3e-5);
        let su = reference().unconditional_variance();
        assert_relative_eq!(
            forecast_one_step(&synthetic_fit(su.sqrt(), su)),
            su,
            max_relative = 1e-12
        );
    }

    #[test]
    fn multi_step_examples() {
        let fc = forecast_multi_step(&synthetic_fit(0.02, 2.5e-4), 3).unwrap();
        assert_relative_eq!(fc.unconditional_variance, 2e-5, max_relative = 1e-12);
        assert_relative_eq!(fc.expected_variance[2], 2.307_337_5e-4, max_relative = 1e-12);
        assert_eq!(
            forecast_multi_step(&synthetic_fit(0.02, 2.5e-4), 0).unwrap_err(),
            GarchError::ZeroHorizon
        );
        let long = forecast_multi_step(&synthetic_fit(0.02, 2.5e-4), 2000).unwrap();
        assert_relative_eq!(*long.expected_variance.last().unwrap(), 2e-5, max_relative = 1e-12);
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = simulate_garch(&reference(), 500, 42).unwrap();
        let b = simulate_garch(&reference(), 500, 42).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn simulated_variance_matches_unconditional() {
        let r = simulate_garch(&reference(), 100_000, 5).unwrap();
        let v = initial_variance(&r);
        assert!((v / 2e-5 - 1.0).abs() < 0.05, "sample variance {v}");
    }

    #[test]
    fn simulation_without_dynamics_is_iid() {
        let p = GarchParams::new(0.0, 1e-4, 0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (r, v) = simulate_garch_path(&p, 50_000, &mut rng).unwrap();
        assert!(v.iter().all(|&x| x == 1e-4));
        assert!((initial_variance(&r) / 1e-4 - 1.0).abs() < 0.03);
    }

    #[test]
    fn summary_round_trips_through_json() {
        let r = simulate_garch(&reference(), 500, 1).unwrap();
        let f = filter_variance(&r, &reference()).unwrap();
        let s = f.summary();
        let json = serde_json::to_string(&s).unwrap();
        let back: FitSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        for key in ["mu", "a0", "a1", "b1", "log_likelihood", "converged", "iterations"] {
            assert!(json.contains(&format!("\"{key}\"")));
        }
    }
}
