//! Natural policy gradient primal-dual solver.
//!
//! Each outer iteration `j`:
//!
//! 1. fits the compatible direction `w_j` by `L` steps of SGD on
//!    `E(w) = E[(w . grad log pi(u|x, mu) - A_lambda(x, mu, u))^2]` over the
//!    discounted occupancy measure, returning the average of the iterates;
//! 2. moves `Phi_{j+1} = clip(Phi_j + eta1 / (1 - gamma) * w_j)`;
//! 3. estimates the cost value of `Phi_j` from `dual_batch` rollouts and
//!    projects `lambda_{j+1} = max(0, lambda_j + eta2 (v_c - zeta))`.
//!
//! Everything runs on the mean-field system from a fixed `mu0`.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{tightened_zeta, BoundInputs, TighteningMode};
use crate::envmodel::Environment;
use crate::error::{Error, Result};
use crate::meanfield::{mf_values, DEFAULT_TOL};
use crate::policy::{param_dim, PolicyParams, DEFAULT_NORM_BOUND};
use crate::sampler::Sampler;
use crate::simplex::StateDistribution;

/// Solver hyperparameters. Defaults are the firms experiment settings and
/// fill in any field left out when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub alpha: f64,
    /// Outer iterations `J`.
    pub outer_iters: usize,
    /// Inner SGD steps `L`.
    pub inner_iters: usize,
    pub gamma: f64,
    pub zeta: f64,
    pub lambda0: f64,
    pub inner_batch: usize,
    pub dual_batch: usize,
    pub norm_bound: f64,
    /// Initial SGD iterate; zeros when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<f64>>,
    /// Initial policy parameters; zeros (the uniform policy) when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi0: Option<Vec<f64>>,
    /// Replace `zeta` by `zeta - 2 G_C` before training.
    pub tighten_with_bounds: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta1: 1e-3,
            eta2: 1e-3,
            alpha: 1e-3,
            outer_iters: 100,
            inner_iters: 100,
            gamma: 0.9,
            zeta: 5.0,
            lambda0: 0.0,
            inner_batch: 1,
            dual_batch: 16,
            norm_bound: DEFAULT_NORM_BOUND,
            w0: None,
            phi0: None,
            tighten_with_bounds: false,
        }
    }
}

impl SolverConfig {
    /// Checks ranges. Rates may be zero, which freezes the matching variable.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2), ("alpha", self.alpha)] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return bad("outer_iters and inner_iters must be at least 1".into());
        }
        if self.inner_batch == 0 || self.dual_batch == 0 {
            return bad("inner_batch and dual_batch must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma = {} outside [0, 1)", self.gamma));
        }
        if !self.zeta.is_finite() {
            return bad("zeta must be finite".into());
        }
        if !(self.lambda0 >= 0.0) || !self.lambda0.is_finite() {
            return bad(format!("lambda0 = {} must be finite and non-negative", self.lambda0));
        }
        if !(self.norm_bound > 0.0) {
            return bad(format!("norm_bound = {} must be positive", self.norm_bound));
        }
        Ok(())
    }

    /// Copy with `zeta` lowered by twice the cost approximation width.
    pub fn with_tightened_zeta(&self, inputs: &BoundInputs) -> Result<Self> {
        let zeta = tightened_zeta(inputs, TighteningMode::Solver, self.zeta)?;
        Ok(Self { zeta, tighten_with_bounds: false, ..self.clone() })
    }

    fn initial_params(&self, n_states: usize, n_actions: usize) -> Result<(PolicyParams, Vec<f64>)> {
        let d = param_dim(n_states, n_actions);
        let phi = match &self.phi0 {
            Some(v) => PolicyParams::from_vec(n_states, n_actions, v.clone())?,
            None => PolicyParams::zeros(n_states, n_actions),
        };
        let w0 = match &self.w0 {
            Some(v) if v.len() != d => return Err(Error::DimensionMismatch { left: v.len(), right: d }),
            Some(v) => v.clone(),
            None => vec![0.0; d],
        };
        Ok((phi, w0))
    }
}

/// SGD on the least-squares objective `E(w)` with samples from `draw`.
///
/// Each of the `steps` updates averages `(w . g - a) g` over `batch` draws
/// and moves `w -= alpha * h`. Returns the mean of the iterates
/// `w_1..w_steps`, or the index of the first step producing a non-finite
/// iterate.
pub fn compatible_sgd<F>(w0: &[f64], alpha: f64, steps: usize, batch: usize, mut draw: F) -> std::result::Result<Vec<f64>, usize>
where
    F: FnMut() -> (Vec<f64>, f64),
{
    let d = w0.len();
    let mut w = w0.to_vec();
    let mut avg = vec![0.0; d];
    let mut h = vec![0.0; d];
    for l in 0..steps {
        h.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..batch {
            let (g, a) = draw();
            let resid = w.iter().zip(&g).map(|(wi, gi)| wi * gi).sum::<f64>() - a;
            h.iter_mut().zip(&g).for_each(|(hi, gi)| *hi += resid * gi);
        }
        let scale = alpha / batch as f64;
        w.iter_mut().zip(&h).for_each(|(wi, hi)| *wi -= scale * hi);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(l);
        }
        avg.iter_mut().zip(&w).for_each(|(a, wi)| *a += wi);
    }
    avg.iter_mut().for_each(|a| *a /= steps as f64);
    Ok(avg)
}

/// Compatible direction at `(phi, lambda)` from fresh occupancy samples.
#[allow(clippy::too_many_arguments)]
pub fn inner_sgd<E, R>(
    phi: &PolicyParams,
    lambda: f64,
    w0: &[f64],
    cfg: &SolverConfig,
    env: &E,
    mu0: &StateDistribution,
    iteration: usize,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let mut sampler = Sampler::new(mu0.clone(), phi, env, cfg.gamma);
    let draw = || {
        let s = sampler.sample_occupancy(rng);
        let g = phi.log_prob_grad(s.x, &s.mu, s.u).grad;
        let a = sampler.estimate_advantage(&s, lambda, rng).a_hat_lambda;
        (g, a)
    };
    compatible_sgd(w0, cfg.alpha, cfg.inner_iters, cfg.inner_batch, draw)
        .map_err(|step| Error::SgdDiverged { iteration, step })
}

/// `clip(phi + eta1 / (1 - gamma) * w)`.
pub fn npg_step(phi: &PolicyParams, w: &[f64], cfg: &SolverConfig) -> PolicyParams {
    assert_eq!(phi.dim(), w.len(), "direction has wrong dimension");
    let mut next = phi.clone();
    let scale = cfg.eta1 / (1.0 - cfg.gamma);
    next.as_mut_slice().iter_mut().zip(w).for_each(|(p, wi)| *p += scale * wi);
    next.clip_to_norm_bound(cfg.norm_bound);
    next
}

/// Projected dual ascent.
pub fn dual_step(lambda: f64, v_hat_c: f64, cfg: &SolverConfig) -> f64 {
    (lambda + cfg.eta2 * (v_hat_c - cfg.zeta)).max(0.0)
}

/// One row of the training trace, describing outer iteration `iter`
/// (1-based) after its updates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// `lambda_iter`.
    pub lambda: f64,
    pub w_l1: f64,
    /// Averaged cost-value estimate used in the dual step.
    pub v_hat_c: f64,
    /// Mean-field values of `Phi_iter`.
    pub v_inf_r: f64,
    pub v_inf_c: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    /// `Phi_1..Phi_J`.
    pub policies: Vec<PolicyParams>,
    /// The constraint level actually used.
    pub zeta: f64,
}

impl SolverTrace {
    pub fn final_policy(&self) -> &PolicyParams {
        self.policies.last().expect("trace has at least one iteration")
    }

    pub fn final_lambda(&self) -> f64 {
        self.records.last().map(|r| r.lambda).unwrap_or(0.0)
    }
}

/// Runs `J` outer iterations from `mu0`.
///
/// `cfg.tighten_with_bounds` is not applied here; use
/// [`SolverConfig::with_tightened_zeta`] first.
pub fn solve<E, R>(cfg: &SolverConfig, env: &E, mu0: &StateDistribution, rng: &mut R) -> Result<SolverTrace>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let (nx, na) = (env.n_states(), env.n_actions());
    if mu0.len() != nx {
        return Err(Error::DimensionMismatch { left: mu0.len(), right: nx });
    }
    let (mut phi, w0) = cfg.initial_params(nx, na)?;
    let mut lambda = cfg.lambda0;
    let start = Instant::now();
    let mut records = Vec::with_capacity(cfg.outer_iters);
    let mut policies = Vec::with_capacity(cfg.outer_iters);

    for j in 0..cfg.outer_iters {
        let iter = j + 1;
        let w = inner_sgd(&phi, lambda, &w0, cfg, env, mu0, iter, rng)?;
        let next = npg_step(&phi, &w, cfg);

        let mut sampler = Sampler::new(mu0.clone(), &phi, env, cfg.gamma);
        let v_hat_c =
            (0..cfg.dual_batch).map(|_| sampler.estimate_constraint_value(rng)).sum::<f64>() / cfg.dual_batch as f64;
        lambda = dual_step(lambda, v_hat_c, cfg);

        phi = next;
        let mf = mf_values(mu0, &phi, env, cfg.gamma, DEFAULT_TOL)?;
        records.push(TraceRecord {
            iter,
            lambda,
            w_l1: w.iter().map(|v| v.abs()).sum(),
            v_hat_c,
            v_inf_r: mf.v_r,
            v_inf_c: mf.v_c,
            wall_s: start.elapsed().as_secs_f64(),
        });
        policies.push(phi.clone());
    }
    Ok(SolverTrace { records, policies, zeta: cfg.zeta })
}
