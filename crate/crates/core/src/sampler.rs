//! Geometric-horizon sampling along the mean-field dynamics.
//!
//! A representative agent moves through the stochastic kernel while the
//! population distribution follows the deterministic mean-field map. Stopping
//! each step with probability `1 - gamma` turns undiscounted sums into
//! unbiased estimates of discounted quantities:
//!
//! * the stopped triple `(x_T, mu_T, u_T)` is a draw from the normalized
//!   discounted occupancy measure, `P(T = t) = (1 - gamma) gamma^t`;
//! * a continuation that accumulates reward *before* each stopping test has
//!   expectation `sum_t gamma^t E[r_t]`.
//!
//! The advantage estimator flips a fair coin: heads continues from the sampled
//! action (a Q estimate), tails redraws the first action from the policy (a
//! V estimate). `2 * (Q_hat - V_hat)`, with the unselected branch zero, is then
//! unbiased for `Q - V`. Reward and cost share one rollout and one coin.

use rand::Rng;

use crate::envmodel::Environment;
use crate::policy::Policy;
use crate::simplex::{sample_index, ActionDistribution, StateDistribution};

/// Tables for one time step of the mean-field path.
#[derive(Debug, Clone)]
struct PathStep {
    mu: StateDistribution,
    rows: Vec<ActionDistribution>,
    // indexed by x * n_actions + u
    reward: Vec<f64>,
    cost: Vec<f64>,
    kernel: Vec<StateDistribution>,
}

/// The deterministic population path from an initial distribution, extended
/// lazily and shared by every rollout under the same policy.
pub struct MeanFieldPath<'a, P: ?Sized, E: ?Sized> {
    policy: &'a P,
    env: &'a E,
    steps: Vec<PathStep>,
    next_mu: StateDistribution,
}

impl<'a, P: Policy + ?Sized, E: Environment + ?Sized> MeanFieldPath<'a, P, E> {
    pub fn new(mu0: StateDistribution, policy: &'a P, env: &'a E) -> Self {
        Self { policy, env, steps: Vec::new(), next_mu: mu0 }
    }

    fn extend(&mut self) {
        let env = self.env;
        let (nx, na) = (env.n_states(), env.n_actions());
        let mu = self.next_mu.clone();
        let rows: Vec<ActionDistribution> = (0..nx).map(|x| self.policy.action_dist(x, &mu)).collect();
        let mut nu = vec![0.0; na];
        for (row, &m) in rows.iter().zip(mu.probs()) {
            nu.iter_mut().zip(row.probs()).for_each(|(n, p)| *n += m * p);
        }
        let nu = ActionDistribution::from_weights(nu);
        let mut reward = Vec::with_capacity(nx * na);
        let mut cost = Vec::with_capacity(nx * na);
        let mut kernel = Vec::with_capacity(nx * na);
        let mut next = vec![0.0; nx];
        for x in 0..nx {
            for u in 0..na {
                reward.push(env.reward(x, u, &mu, &nu));
                cost.push(env.cost(x, u, &mu, &nu));
                let k = env.transition(x, u, &mu, &nu);
                let w = mu[x] * rows[x][u];
                next.iter_mut().zip(k.probs()).for_each(|(n, p)| *n += w * p);
                kernel.push(k);
            }
        }
        self.next_mu = StateDistribution::from_weights(next);
        self.steps.push(PathStep { mu, rows, reward, cost, kernel });
    }

    fn at(&mut self, t: usize) -> &PathStep {
        while self.steps.len() <= t {
            self.extend();
        }
        &self.steps[t]
    }

    /// Population distribution at time `t`.
    pub fn mu(&mut self, t: usize) -> &StateDistribution {
        &self.at(t).mu
    }

    fn draw_action<R: Rng + ?Sized>(&mut self, t: usize, x: usize, rng: &mut R) -> usize {
        self.at(t).rows[x].sample(rng)
    }
}

/// A draw `(x_T, mu_T, u_T)` from the discounted occupancy measure.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySample {
    pub x: usize,
    pub mu: StateDistribution,
    pub u: usize,
    /// Stopping time.
    pub t: usize,
}

/// Output of one advantage estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvantageEstimate {
    pub a_hat_r: f64,
    pub a_hat_c: f64,
    /// `a_hat_r - lambda * a_hat_c`.
    pub a_hat_lambda: f64,
    /// Cost sum when the coin chose the V branch, zero otherwise;
    /// `2 * v_hat_c` is unbiased for `V^C(x_T, mu_T)`.
    pub v_hat_c: f64,
}

/// Sampler bound to one policy and initial distribution.
pub struct Sampler<'a, P: ?Sized, E: ?Sized> {
    path: MeanFieldPath<'a, P, E>,
    gamma: f64,
}

impl<'a, P: Policy + ?Sized, E: Environment + ?Sized> Sampler<'a, P, E> {
    pub fn new(mu0: StateDistribution, policy: &'a P, env: &'a E, gamma: f64) -> Self {
        assert!((0.0..1.0).contains(&gamma), "discount {gamma} outside [0, 1)");
        Self { path: MeanFieldPath::new(mu0, policy, env), gamma }
    }

    fn stop<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random::<f64>() >= self.gamma
    }

    /// Moves the representative agent from `(x, u)` at time `t` to time `t+1`.
    fn update<R: Rng + ?Sized>(&mut self, t: usize, x: usize, u: usize, rng: &mut R) -> (usize, usize) {
        let na = self.path.env.n_actions();
        let x_next = sample_index(self.path.at(t).kernel[x * na + u].probs(), rng);
        let u_next = self.path.draw_action(t + 1, x_next, rng);
        (x_next, u_next)
    }

    pub fn sample_occupancy<R: Rng + ?Sized>(&mut self, rng: &mut R) -> OccupancySample {
        let mut x = self.path.mu(0).sample(rng);
        let mut u = self.path.draw_action(0, x, rng);
        let mut t = 0;
        while !self.stop(rng) {
            (x, u) = self.update(t, x, u, rng);
            t += 1;
        }
        OccupancySample { x, mu: self.path.mu(t).clone(), u, t }
    }

    /// Undiscounted reward and cost sums from `(x, u)` at time `t` until the
    /// geometric stop, counting the starting step.
    fn rollout<R: Rng + ?Sized>(&mut self, mut t: usize, mut x: usize, mut u: usize, rng: &mut R) -> (f64, f64) {
        let na = self.path.env.n_actions();
        let (mut sr, mut sc) = (0.0, 0.0);
        loop {
            let step = self.path.at(t);
            sr += step.reward[x * na + u];
            sc += step.cost[x * na + u];
            if self.stop(rng) {
                return (sr, sc);
            }
            (x, u) = self.update(t, x, u, rng);
            t += 1;
        }
    }

    /// Advantage estimate at a sample drawn by this sampler (its `t` indexes
    /// this sampler's path).
    pub fn estimate_advantage<R: Rng + ?Sized>(
        &mut self,
        sample: &OccupancySample,
        lambda: f64,
        rng: &mut R,
    ) -> AdvantageEstimate {
        debug_assert!(self.path.mu(sample.t).l1(&sample.mu) < 1e-9, "sample not on this path");
        let q_branch = rng.random_bool(0.5);
        let first = if q_branch { sample.u } else { self.path.draw_action(sample.t, sample.x, rng) };
        let (sr, sc) = self.rollout(sample.t, sample.x, first, rng);
        let sign = if q_branch { 2.0 } else { -2.0 };
        let (a_hat_r, a_hat_c) = (sign * sr, sign * sc);
        AdvantageEstimate {
            a_hat_r,
            a_hat_c,
            a_hat_lambda: a_hat_r - lambda * a_hat_c,
            v_hat_c: if q_branch { 0.0 } else { sc },
        }
    }

    /// Rollout cost sum from `x0 ~ mu0`; unbiased for the mean-field cost value.
    pub fn estimate_constraint_value<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let x = self.path.mu(0).sample(rng);
        let u = self.path.draw_action(0, x, rng);
        self.rollout(0, x, u, rng).1
    }
}

pub fn sample_occupancy<P, E, R>(mu0: &StateDistribution, pi: &P, env: &E, gamma: f64, rng: &mut R) -> OccupancySample
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    Sampler::new(mu0.clone(), pi, env, gamma).sample_occupancy(rng)
}

/// Advantage estimate at an arbitrary sample. The continuation's population
/// path is rebuilt from `sample.mu`, which reproduces the original path from
/// time `sample.t` on.
pub fn estimate_advantage<P, E, R>(
    sample: &OccupancySample,
    pi: &P,
    lambda: f64,
    env: &E,
    gamma: f64,
    rng: &mut R,
) -> AdvantageEstimate
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let shifted = OccupancySample { t: 0, ..sample.clone() };
    Sampler::new(sample.mu.clone(), pi, env, gamma).estimate_advantage(&shifted, lambda, rng)
}

pub fn estimate_constraint_value<P, E, R>(mu0: &StateDistribution, pi: &P, env: &E, gamma: f64, rng: &mut R) -> f64
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    Sampler::new(mu0.clone(), pi, env, gamma).estimate_constraint_value(rng)
}
