//! Deterministic infinite-population dynamics.
//!
//! Given the state distribution `mu` and a policy, the population's action
//! distribution, next state distribution and average reward/cost follow by
//! exact summation over `(x, u)`. Values are forward sums over a truncated
//! horizon whose tail is provably below the requested tolerance.

use serde::Serialize;

use crate::envmodel::Environment;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::simplex::{ActionDistribution, StateDistribution};

/// Default truncation tolerance for value functions.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Horizons above this are rejected as impractical.
pub const MAX_HORIZON: usize = 10_000_000;

/// `nu(u) = sum_x pi(x, mu)(u) mu(x)`.
pub fn nu_mf<P: Policy + ?Sized>(mu: &StateDistribution, pi: &P) -> ActionDistribution {
    let mut nu = vec![0.0; pi.n_actions()];
    for (x, &m) in mu.probs().iter().enumerate() {
        if m > 0.0 {
            let a = pi.action_dist(x, mu);
            nu.iter_mut().zip(a.probs()).for_each(|(n, p)| *n += m * p);
        }
    }
    ActionDistribution::from_weights(nu)
}

/// One step of the mean-field map, with every intermediate quantity kept.
#[derive(Debug, Clone)]
pub struct MeanFieldStep {
    pub mu: StateDistribution,
    pub nu: ActionDistribution,
    /// `pi(x, mu)` for every state.
    pub action_rows: Vec<ActionDistribution>,
    /// Population-average reward and cost.
    pub reward: f64,
    pub cost: f64,
    pub next_mu: StateDistribution,
}

impl MeanFieldStep {
    pub fn compute<P, E>(mu: &StateDistribution, pi: &P, env: &E) -> Self
    where
        P: Policy + ?Sized,
        E: Environment + ?Sized,
    {
        let nx = env.n_states();
        let action_rows: Vec<ActionDistribution> = (0..nx).map(|x| pi.action_dist(x, mu)).collect();
        let mut nu = vec![0.0; env.n_actions()];
        for (row, &m) in action_rows.iter().zip(mu.probs()) {
            nu.iter_mut().zip(row.probs()).for_each(|(n, p)| *n += m * p);
        }
        let nu = ActionDistribution::from_weights(nu);

        let mut next = vec![0.0; nx];
        let (mut reward, mut cost) = (0.0, 0.0);
        for (x, (row, &m)) in action_rows.iter().zip(mu.probs()).enumerate() {
            if m == 0.0 {
                continue;
            }
            for (u, &p) in row.probs().iter().enumerate() {
                let w = m * p;
                if w == 0.0 {
                    continue;
                }
                reward += w * env.reward(x, u, mu, &nu);
                cost += w * env.cost(x, u, mu, &nu);
                let kernel = env.transition(x, u, mu, &nu);
                next.iter_mut().zip(kernel.probs()).for_each(|(n, k)| *n += w * k);
            }
        }
        Self {
            mu: mu.clone(),
            nu,
            action_rows,
            reward,
            cost,
            next_mu: StateDistribution::from_weights(next),
        }
    }
}

/// Next state distribution under the mean-field map.
pub fn p_mf<P, E>(mu: &StateDistribution, pi: &P, env: &E) -> StateDistribution
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
{
    MeanFieldStep::compute(mu, pi, env).next_mu
}

/// Population-average reward `sum_x sum_u r(x, u, mu, nu) pi(x, mu)(u) mu(x)`.
pub fn r_mf<P, E>(mu: &StateDistribution, pi: &P, env: &E) -> f64
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
{
    MeanFieldStep::compute(mu, pi, env).reward
}

/// Population-average cost.
pub fn c_mf<P, E>(mu: &StateDistribution, pi: &P, env: &E) -> f64
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
{
    MeanFieldStep::compute(mu, pi, env).cost
}

/// Smallest `T` with `gamma^T * bound / (1 - gamma) < tol`.
pub fn truncation_horizon(gamma: f64, bound: f64, tol: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!("discount {gamma} outside [0, 1)")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance {tol} must be positive")));
    }
    if bound <= 0.0 || gamma == 0.0 {
        return Ok(1);
    }
    let tail = bound / (1.0 - gamma);
    if tail < tol {
        return Ok(1);
    }
    // gamma^T < tol / tail
    let t = ((tol / tail).ln() / gamma.ln()).floor() + 1.0;
    if !t.is_finite() || t > MAX_HORIZON as f64 {
        return Err(Error::HorizonTooLong { horizon: t, tol });
    }
    let mut t = t.max(1.0) as usize;
    // guard against ln rounding
    while gamma.powi(t as i32) * tail >= tol {
        t += 1;
    }
    Ok(t)
}

/// Per-step record of a mean-field trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct MfRecord {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MfTrajectory {
    pub steps: Vec<MfRecord>,
    pub gamma: f64,
}

impl MfTrajectory {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone)]
pub struct MfValues {
    pub v_r: f64,
    pub v_c: f64,
    pub trajectory: MfTrajectory,
}

/// Discounted reward and cost values of a stationary policy from `mu0`.
/// The horizon is chosen so the truncated tail is below `tol` for both.
pub fn mf_values<P, E>(mu0: &StateDistribution, pi: &P, env: &E, gamma: f64, tol: f64) -> Result<MfValues>
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
{
    let k = env.constants();
    let horizon = truncation_horizon(gamma, k.m_r.max(k.m_c), tol)?;
    Ok(mf_values_nonstationary(mu0, std::iter::repeat_n(pi, horizon), env, gamma))
}

/// Forward sums for a policy sequence; the horizon is the sequence length.
pub fn mf_values_nonstationary<'a, P, E, I>(mu0: &StateDistribution, policies: I, env: &E, gamma: f64) -> MfValues
where
    P: Policy + ?Sized + 'a,
    E: Environment + ?Sized,
    I: IntoIterator<Item = &'a P>,
{
    let mut mu = mu0.clone();
    let (mut v_r, mut v_c, mut disc) = (0.0, 0.0, 1.0);
    let mut steps = Vec::new();
    for pi in policies {
        let s = MeanFieldStep::compute(&mu, pi, env);
        v_r += disc * s.reward;
        v_c += disc * s.cost;
        disc *= gamma;
        steps.push(MfRecord {
            mu: s.mu.into_probs(),
            nu: s.nu.into_probs(),
            reward: s.reward,
            cost: s.cost,
        });
        mu = s.next_mu;
    }
    MfValues { v_r, v_c, trajectory: MfTrajectory { steps, gamma } }
}
