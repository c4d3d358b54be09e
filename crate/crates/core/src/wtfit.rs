//! Exponential-sum approximation of the power-law waiting-time tail and its
//! mapping to internal-state parameters.
//!
//! The target is t^{−(1+α)} on a window [t_min, t_max], approximated by
//! Σ μ̃ᵢ e^{−sᵢ t}. The fit error is the relative L2 misfit with a uniform
//! measure in t, evaluated by trapezoidal quadrature on a log-spaced grid.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::tail_amplitude;

const OPT_GRID: usize = 512;
const REPORT_GRID: usize = 2048;
const START_JITTER: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub multistarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Fail with the best fit attached if its error stays above this.
    pub ceiling: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { multistarts: 16, max_iter: 400, tol: 1e-13, seed: 0, ceiling: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub alpha: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub n: usize,
    pub options: FitOptions,
}

impl FitProblem {
    pub fn new(alpha: f64, t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        let p = FitProblem { alpha, t_min, t_max, n, options: FitOptions::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn with_options(mut self, options: FitOptions) -> Self {
        self.options = options;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.t_min > 0.0 && self.t_max > self.t_min && self.t_max.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < t_min < t_max, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if self.n == 0 {
            return Err(Error::invalid("state count must be at least 1"));
        }
        if self.options.multistarts == 0 {
            return Err(Error::invalid("need at least one start"));
        }
        Ok(())
    }
}

/// Weights μ̃ᵢ and increasing nodes sᵢ of the exponential sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureFit {
    pub weights: Vec<f64>,
    pub nodes: Vec<f64>,
    pub eps_mod: f64,
}

impl QuadratureFit {
    pub fn evaluate(&self, t: f64) -> f64 {
        self.weights.iter().zip(&self.nodes).map(|(m, s)| m * (-s * t).exp()).sum()
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.nodes.len() || self.nodes.is_empty() {
            return Err(Error::invalid("weights and nodes must be non-empty and of equal length"));
        }
        if self.weights.iter().chain(&self.nodes).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("weights and nodes must be positive"));
        }
        if self.nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("nodes must be strictly increasing"));
        }
        Ok(())
    }
}

/// Log grid with trapezoid weights for ∫ · dt/(t_max − t_min).
struct Grid {
    t: Vec<f64>,
    w: Vec<f64>,
    target: Vec<f64>,
}

impl Grid {
    fn new(p: &FitProblem, n: usize) -> Self {
        let (a, b) = (p.t_min.ln(), p.t_max.ln());
        let du = (b - a) / (n - 1) as f64;
        let span = p.t_max - p.t_min;
        let mut t = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for j in 0..n {
            let tj = (a + du * j as f64).exp();
            let end = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            t.push(tj);
            w.push(end * du * tj / span);
        }
        // residual is F(t)·t^{1+α} − 1
        let target = t.iter().map(|tj: &f64| tj.powf(1.0 + p.alpha)).collect();
        Grid { t, w, target }
    }

    fn error(&self, weights: &[f64], nodes: &[f64]) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.t.len() {
            let f: f64 = weights.iter().zip(nodes).map(|(m, s)| m * (-s * self.t[j]).exp()).sum();
            let r = f * self.target[j] - 1.0;
            acc += self.w[j] * r * r;
        }
        acc.sqrt()
    }
}

/// Recompute the fit error on a fixed 2048-point grid.
pub fn model_error(fit: &QuadratureFit, p: &FitProblem) -> f64 {
    Grid::new(p, REPORT_GRID).error(&fit.weights, &fit.nodes)
}

/// Fit N exponentials to t^{−(1+α)} on the problem window.
pub fn fit_exponential_sum(p: &FitProblem) -> Result<QuadratureFit> {
    p.validate()?;
    let grid = Grid::new(p, OPT_GRID);
    let starts = start_points(p);
    let results: Vec<Option<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|s0| local_fit(&grid, p, s0))
        .collect();
    // lowest error wins, earliest start on ties
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (e, x) in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, x));
        }
    }
    let (_, x) = best.ok_or_else(|| Error::Numerical("no start produced a valid fit".into()))?;
    let fit = assemble(p, &x)?;
    if let Some(c) = p.options.ceiling {
        if fit.eps_mod > c {
            return Err(Error::FitCeiling {
                best: fit.eps_mod,
                ceiling: c,
                nodes: fit.nodes,
                weights: fit.weights,
            });
        }
    }
    Ok(fit)
}

/// Increase N from `p.n` until the fit error drops to `target`.
pub fn fit_auto(p: &FitProblem, target: f64, n_max: usize) -> Result<QuadratureFit> {
    let mut last = None;
    for n in p.n..=n_max {
        let q = FitProblem { n, ..*p };
        let fit = fit_exponential_sum(&FitProblem { options: FitOptions { ceiling: None, ..p.options }, ..q })?;
        if fit.eps_mod <= target {
            return Ok(fit);
        }
        last = Some(fit);
    }
    let fit = last.ok_or_else(|| Error::invalid("n_max below the starting state count"))?;
    Err(Error::FitCeiling { best: fit.eps_mod, ceiling: target, nodes: fit.nodes, weights: fit.weights })
}

fn assemble(p: &FitProblem, x: &[f64]) -> Result<QuadratureFit> {
    let n = p.n;
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|i| (x[i].exp(), x[n + i].exp())).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut fit = QuadratureFit {
        nodes: pairs.iter().map(|q| q.0).collect(),
        weights: pairs.iter().map(|q| q.1).collect(),
        eps_mod: 0.0,
    };
    fit.check()?;
    fit.eps_mod = model_error(&fit, p);
    Ok(fit)
}

fn start_points(p: &FitProblem) -> Vec<Vec<f64>> {
    let n = p.n;
    let (lo, hi) = ((1.0 / p.t_max).ln(), (1.0 / p.t_min).ln());
    let base: Vec<f64> = (0..n)
        .map(|i| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(p.options.seed);
    let jitter = Normal::new(0.0, START_JITTER).expect("valid normal");
    (0..p.options.multistarts)
        .map(|k| {
            if k == 0 {
                base.clone()
            } else {
                base.iter().map(|b| b + jitter.sample(&mut rng)).collect()
            }
        })
        .collect()
}

/// Weighted linear least squares for μ̃ with nodes frozen, clipped positive.
fn initial_weights(grid: &Grid, log_nodes: &[f64]) -> Vec<f64> {
    let (m, n) = (grid.t.len(), log_nodes.len());
    let a = DMatrix::from_fn(m, n, |j, i| {
        grid.w[j].sqrt() * grid.target[j] * (-log_nodes[i].exp() * grid.t[j]).exp()
    });
    let b = DVector::from_fn(m, |j, _| grid.w[j].sqrt());
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map(|v| v.iter().copied().collect::<Vec<_>>())
        .unwrap_or_else(|_| vec![1.0; n]);
    let top = sol.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    sol.iter().map(|v| v.max(1e-3 * top)).collect()
}

fn residuals(grid: &Grid, x: &[f64], n: usize, jac: Option<&mut DMatrix<f64>>) -> DVector<f64> {
    let m = grid.t.len();
    let s: Vec<f64> = x[..n].iter().map(|v| v.exp()).collect();
    let mu: Vec<f64> = x[n..].iter().map(|v| v.exp()).collect();
    let mut r = DVector::zeros(m);
    let mut jac = jac;
    for j in 0..m {
        let sw = grid.w[j].sqrt();
        let (t, g) = (grid.t[j], grid.target[j]);
        let mut f = 0.0;
        for i in 0..n {
            let e = (-s[i] * t).exp();
            f += mu[i] * e;
            if let Some(jm) = jac.as_deref_mut() {
                jm[(j, i)] = -sw * g * mu[i] * s[i] * t * e;
                jm[(j, n + i)] = sw * g * mu[i] * e;
            }
        }
        r[j] = sw * (f * g - 1.0);
    }
    r
}

/// Levenberg-Marquardt in (log s, log μ̃). Returns the optimizer-grid error.
fn local_fit(grid: &Grid, p: &FitProblem, log_nodes: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = p.n;
    let mut x: Vec<f64> = log_nodes.to_vec();
    x.extend(initial_weights(grid, log_nodes).iter().map(|v| v.ln()));
    let m = grid.t.len();
    let mut jac = DMatrix::zeros(m, 2 * n);
    let mut r = residuals(grid, &x, n, Some(&mut jac));
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    // keep nodes within a few decades of the window
    let (lo, hi) = ((1e-3 / p.t_max).ln(), (1e3 / p.t_min).ln());
    for _ in 0..p.options.max_iter {
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * &r;
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for d in 0..2 * n {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-30);
            }
            let step = match a.cholesky() {
                Some(c) => c.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            for v in &mut trial[..n] {
                *v = v.clamp(lo, hi);
            }
            let rt = residuals(grid, &trial, n, None);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost.max(1e-300);
                x = trial;
                r = residuals(grid, &x, n, Some(&mut jac));
                cost = ct;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > p.options.tol;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    cost.is_finite().then(|| (cost.sqrt(), x))
}

/// Internal-state parameters derived from an exponential-sum fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateParams {
    pub n: usize,
    /// Mean residence times, strictly increasing.
    pub tau_i: Vec<f64>,
    /// Redistribution weights, summing to one.
    pub mu_i: Vec<f64>,
    /// Weights as supplied, before normalization.
    pub raw_weights: Vec<f64>,
    pub tau: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub k_alpha: f64,
}

impl StateParams {
    /// Build from a tabulated parameter set. The time scale is taken as given
    /// and σ² = K_α τ^α; the weights are normalized for the operators while
    /// the supplied values are kept in `raw_weights`.
    pub fn from_tabulated(alpha: f64, k_alpha: f64, tau: f64, tau_i: &[f64], weights: &[f64]) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0,1], got {alpha}")));
        }
        if !(k_alpha > 0.0 && tau > 0.0) {
            return Err(Error::invalid("K_alpha and tau must be positive"));
        }
        if tau_i.is_empty() || tau_i.len() != weights.len() {
            return Err(Error::invalid("tau_i and weights must be non-empty and of equal length"));
        }
        if tau_i.iter().chain(weights).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("tau_i and weights must be positive"));
        }
        if tau_i.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tau_i must be strictly increasing"));
        }
        let total: f64 = weights.iter().sum();
        Ok(StateParams {
            n: tau_i.len(),
            tau_i: tau_i.to_vec(),
            mu_i: weights.iter().map(|w| w / total).collect(),
            raw_weights: weights.to_vec(),
            tau,
            sigma2: k_alpha * tau.powf(alpha),
            alpha,
            k_alpha,
        })
    }

    /// The exponential sum these parameters stand for, reading `raw_weights`
    /// as tail-matched weights at time scale `tau`.
    pub fn quadrature(&self, p: &FitProblem) -> QuadratureFit {
        let amp = tail_amplitude(self.alpha) * self.tau.powf(self.alpha);
        let mut pairs: Vec<(f64, f64)> = self
            .tau_i
            .iter()
            .zip(&self.raw_weights)
            .map(|(t, w)| (1.0 / t, w / (t * amp)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut fit = QuadratureFit {
            nodes: pairs.iter().map(|q| q.0).collect(),
            weights: pairs.iter().map(|q| q.1).collect(),
            eps_mod: 0.0,
        };
        fit.eps_mod = model_error(&fit, p);
        fit
    }

    /// Rescale τ so the tail-matched weights sum to one, then recompute σ².
    /// Equivalent to mapping `quadrature()` back through `to_state_params`.
    pub fn self_consistent(&self) -> StateParams {
        let total: f64 = self.raw_weights.iter().sum();
        let tau = self.tau * total.powf(-1.0 / self.alpha);
        StateParams {
            raw_weights: self.mu_i.clone(),
            tau,
            sigma2: self.k_alpha * tau.powf(self.alpha),
            ..self.clone()
        }
    }

    /// Diffusion coefficient of state i.
    pub fn diffusivity(&self, i: usize) -> f64 {
        self.sigma2 / self.tau_i[i]
    }
}

/// Map a fit to internal states: τᵢ = 1/sᵢ, μᵢ ∝ μ̃ᵢ/sᵢ, τ from the tail
/// amplitude, σ² = K_α τ^α.
pub fn to_state_params(fit: &QuadratureFit, k_alpha: f64, p: &FitProblem) -> Result<StateParams> {
    fit.check()?;
    if !(k_alpha > 0.0) {
        return Err(Error::invalid("K_alpha must be positive"));
    }
    let alpha = p.alpha;
    // nodes increase, so times come out reversed
    let tau_i: Vec<f64> = fit.nodes.iter().rev().map(|s| 1.0 / s).collect();
    let ratio: Vec<f64> = fit.weights.iter().zip(&fit.nodes).rev().map(|(m, s)| m / s).collect();
    let total: f64 = ratio.iter().sum();
    let tau = (tail_amplitude(alpha) * total).powf(-1.0 / alpha);
    let mu: Vec<f64> = ratio.iter().map(|r| r / total).collect();
    let amp = tail_amplitude(alpha) * tau.powf(alpha);
    Ok(StateParams {
        n: tau_i.len(),
        tau_i,
        mu_i: mu,
        raw_weights: ratio.iter().map(|r| amp * r).collect(),
        tau,
        sigma2: k_alpha * tau.powf(alpha),
        alpha,
        k_alpha,
    })
}

/// Mixture-of-exponentials waiting-time density Σ μᵢ/τᵢ e^{−t/τᵢ}.
pub fn approx_waiting_pdf(sp: &StateParams, t: f64) -> f64 {
    sp.mu_i.iter().zip(&sp.tau_i).map(|(m, tau)| m / tau * (-t / tau).exp()).sum()
}

/// Short-time equivalent Poisson time scale.
pub fn tau_eq(sp: &StateParams) -> f64 {
    let num: f64 = sp.mu_i.iter().zip(&sp.tau_i).map(|(m, t)| m / t).sum();
    let den: f64 = sp.mu_i.iter().zip(&sp.tau_i).map(|(m, t)| m / (t * t)).sum();
    num / den
}
