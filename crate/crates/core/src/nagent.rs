//! Finite-population simulator.
//!
//! `N` exchangeable agents each observe their own state and the empirical
//! state distribution, act independently given that distribution, and then
//! transition independently through the kernel evaluated at the empirical
//! state and action distributions.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::envmodel::Environment;
use crate::error::{Error, Result};
use crate::meanfield::truncation_horizon;
use crate::policy::Policy;
use crate::rng::stream;
use crate::simplex::{sample_index, ActionDistribution, StateDistribution};

/// States of all `N` agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointState {
    states: Vec<usize>,
    n_states: usize,
}

impl JointState {
    pub fn new(states: Vec<usize>, n_states: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if let Some(&id) = states.iter().find(|&&s| s >= n_states) {
            return Err(Error::InvalidState { id, n_states });
        }
        Ok(Self { states, n_states })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn n_agents(&self) -> usize {
        self.states.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn empirical(&self) -> StateDistribution {
        StateDistribution::empirical(&self.states, self.n_states).expect("validated on construction")
    }
}

/// Result of one synchronous step of all agents.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: JointState,
    pub avg_reward: f64,
    pub avg_cost: f64,
    /// Empirical action distribution of the step.
    pub nu: ActionDistribution,
    /// Empirical state distribution the step started from.
    pub mu: StateDistribution,
}

/// Advances every agent by one step.
///
/// Random draws happen in agent order: first all actions, then all next
/// states. Reward, cost and kernel see the empirical `nu`, not the
/// mean-field one.
pub fn step<P, E, R>(s: &JointState, pi: &P, env: &E, rng: &mut R) -> StepOutcome
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let (nx, na) = (env.n_states(), env.n_actions());
    let mu = s.empirical();
    let rows: Vec<Option<ActionDistribution>> = mu
        .probs()
        .iter()
        .enumerate()
        .map(|(x, &m)| (m > 0.0).then(|| pi.action_dist(x, &mu)))
        .collect();

    let actions: Vec<usize> = s
        .states
        .iter()
        .map(|&x| rows[x].as_ref().expect("occupied state").sample(rng))
        .collect();
    let nu = ActionDistribution::empirical(&actions, na).expect("nonempty population");

    // reward, cost and kernel depend on (x, u) only once mu and nu are fixed
    let mut table: Vec<Option<(f64, f64, StateDistribution)>> = vec![None; nx * na];
    let (mut reward, mut cost) = (0.0, 0.0);
    let mut next = Vec::with_capacity(s.states.len());
    for (&x, &u) in s.states.iter().zip(&actions) {
        let entry = table[x * na + u].get_or_insert_with(|| {
            (env.reward(x, u, &mu, &nu), env.cost(x, u, &mu, &nu), env.transition(x, u, &mu, &nu))
        });
        reward += entry.0;
        cost += entry.1;
        next.push(sample_index(entry.2.probs(), rng));
    }
    let n = s.states.len() as f64;
    StepOutcome {
        next: JointState { states: next, n_states: nx },
        avg_reward: reward / n,
        avg_cost: cost / n,
        nu,
        mu,
    }
}

/// Draws `n` agents independently from `mu0`.
pub fn sample_initial_joint_state<R: Rng + ?Sized>(mu0: &StateDistribution, n: usize, rng: &mut R) -> Result<JointState> {
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    let states = (0..n).map(|_| mu0.sample(rng)).collect();
    Ok(JointState { states, n_states: mu0.len() })
}

/// Monte Carlo estimate of the N-agent discounted values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NAgentEstimate {
    pub v_r: f64,
    pub v_c: f64,
    pub std_err_r: f64,
    pub std_err_c: f64,
    pub episodes: usize,
    pub horizon: usize,
}

/// Default number of Monte Carlo episodes.
pub const DEFAULT_EPISODES: usize = 32;

fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Discounted reward and cost sums of one episode of `horizon` steps.
pub fn run_episode<P, E, R>(x0: &JointState, pi: &P, env: &E, gamma: f64, horizon: usize, rng: &mut R) -> (f64, f64)
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let mut state = x0.clone();
    let (mut vr, mut vc, mut disc) = (0.0, 0.0, 1.0);
    for _ in 0..horizon {
        let out = step(&state, pi, env, rng);
        vr += disc * out.avg_reward;
        vc += disc * out.avg_cost;
        disc *= gamma;
        state = out.next;
    }
    (vr, vc)
}

/// Averages truncated discounted sums over independent episodes from `x0`.
///
/// The horizon follows the same tolerance rule as
/// [`crate::meanfield::mf_values`], so both are truncated identically. Each
/// episode runs on its own stream seeded from `rng`; episodes run in
/// parallel and are reduced in index order.
pub fn estimate_values<P, E, R>(
    x0: &JointState,
    pi: &P,
    env: &E,
    gamma: f64,
    episodes: usize,
    tol: f64,
    rng: &mut R,
) -> Result<NAgentEstimate>
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be at least 1".into()));
    }
    if x0.n_states() != env.n_states() {
        return Err(Error::DimensionMismatch { left: x0.n_states(), right: env.n_states() });
    }
    let k = env.constants();
    let horizon = truncation_horizon(gamma, k.m_r.max(k.m_c), tol)?;
    let seeds: Vec<u64> = (0..episodes).map(|_| rng.random()).collect();
    let sums: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&seed| run_episode(x0, pi, env, gamma, horizon, &mut stream(seed)))
        .collect();
    let (rs, cs): (Vec<f64>, Vec<f64>) = sums.into_iter().unzip();
    let (v_r, std_err_r) = mean_and_std_err(&rs);
    let (v_c, std_err_c) = mean_and_std_err(&cs);
    Ok(NAgentEstimate { v_r, v_c, std_err_r, std_err_c, episodes, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmodel::{firms_env, EnvConstants, FirmsEnvConfig, FnEnv};
    use crate::policy::{PolicyParams, TabularPolicy};
    use crate::rng::stream;

    #[test]
    fn single_agent_identity_step() {
        let env = FnEnv::new(3, 2).with_reward(|x, u, mu: &StateDistribution, nu: &ActionDistribution| {
            (x as f64) + 10.0 * u as f64 + 100.0 * mu[x] + 1000.0 * nu[u]
        });
        let s = JointState::new(vec![2], 3).unwrap();
        let out = step(&s, &TabularPolicy::constant(3, 2, 1), &env, &mut stream(1));
        assert_eq!(out.next, s);
        // r(2, 1, delta_2, delta_1)
        assert_eq!(out.avg_reward, 2.0 + 10.0 + 100.0 + 1000.0);
        assert_eq!(out.nu.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn saturated_firms_stay_and_pay() {
        let env = firms_env(FirmsEnvConfig::default()).unwrap();
        let s = JointState::new(vec![9; 50], 10).unwrap();
        let out = step(&s, &TabularPolicy::constant(10, 2, 1), &env, &mut stream(2));
        assert_eq!(out.next, s);
        assert_eq!(out.avg_cost, 1.0);
    }

    #[test]
    fn frozen_firms_keep_distribution() {
        let env = firms_env(FirmsEnvConfig::default()).unwrap();
        let mut rng = stream(3);
        let s = sample_initial_joint_state(&StateDistribution::uniform(10), 10_000, &mut rng).unwrap();
        let out = step(&s, &TabularPolicy::constant(10, 2, 0), &env, &mut rng);
        assert_eq!(out.next.empirical(), s.empirical());
    }

    #[test]
    fn initial_state_sampling() {
        let mut rng = stream(4);
        let s = sample_initial_joint_state(&StateDistribution::delta(6, 3), 5, &mut rng).unwrap();
        assert_eq!(s.states(), &[3, 3, 3, 3, 3]);
        let s = sample_initial_joint_state(&StateDistribution::new(vec![0.0, 1.0]).unwrap(), 1, &mut rng).unwrap();
        assert_eq!(s.states(), &[1]);
        let u = StateDistribution::uniform(10);
        let s = sample_initial_joint_state(&u, 100_000, &mut rng).unwrap();
        assert!(s.empirical().l1(&u) < 0.05);
        assert!(sample_initial_joint_state(&u, 0, &mut rng).is_err());
    }

    #[test]
    fn joint_state_validation() {
        assert_eq!(JointState::new(vec![], 3), Err(Error::EmptyPopulation));
        assert_eq!(JointState::new(vec![0, 3], 3), Err(Error::InvalidState { id: 3, n_states: 3 }));
    }

    #[test]
    fn constant_reward_estimate_is_exact() {
        let env = FnEnv::new(2, 2).with_reward(|_, _, _, _| 1.0).with_constants(EnvConstants {
            m_r: 1.0,
            m_c: 0.0,
            l_r: 0.0,
            l_c: 0.0,
            l_p: 0.0,
        });
        let x0 = JointState::new(vec![0, 1, 1], 2).unwrap();
        let est = estimate_values(&x0, &TabularPolicy::uniform(2, 2), &env, 0.9, 8, 1e-6, &mut stream(5)).unwrap();
        assert!((est.v_r - 10.0).abs() < 1e-6);
        assert!(est.std_err_r < 1e-12);
        assert_eq!(est.episodes, 8);
    }

    #[test]
    fn never_invest_costs_nothing() {
        let env = firms_env(FirmsEnvConfig::default()).unwrap();
        let mut rng = stream(6);
        let x0 = sample_initial_joint_state(&StateDistribution::uniform(10), 100, &mut rng).unwrap();
        let est = estimate_values(&x0, &TabularPolicy::constant(10, 2, 0), &env, 0.9, 4, 1e-6, &mut rng).unwrap();
        assert_eq!((est.v_c, est.std_err_c), (0.0, 0.0));
        let k = env.constants();
        assert!(est.v_r.abs() <= k.m_r / 0.1 + 1e-6);
    }

    #[test]
    fn estimates_are_reproducible() {
        let env = firms_env(FirmsEnvConfig::default()).unwrap();
        let phi = PolicyParams::random(10, 2, 1.0, &mut stream(7));
        let x0 = sample_initial_joint_state(&StateDistribution::uniform(10), 50, &mut stream(8)).unwrap();
        let a = estimate_values(&x0, &phi, &env, 0.9, 6, 1e-4, &mut stream(9)).unwrap();
        let b = estimate_values(&x0, &phi, &env, 0.9, 6, 1e-4, &mut stream(9)).unwrap();
        assert_eq!(a, b);
        assert!(estimate_values(&x0, &phi, &env, 0.9, 0, 1e-4, &mut stream(9)).is_err());
    }
}
