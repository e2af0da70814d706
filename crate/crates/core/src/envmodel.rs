//! Environment abstraction and the bundled benchmark environments.
//!
//! An environment supplies per-agent reward, cost and transition kernel, each
//! a function of the agent's own state and action and of the population's
//! state and action distributions. Authors declare bound and Lipschitz
//! constants ([`EnvConstants`]); [`validate_lipschitz`] spot-checks them by
//! sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{ActionDistribution, StateDistribution};

/// Declared bound and Lipschitz constants of an environment.
///
/// `|r| <= m_r`, `|c| <= m_c`, and `r`, `c`, `P` are Lipschitz in
/// `|mu1 - mu2|_1 + |nu1 - nu2|_1` with constants `l_r`, `l_c`, `l_p`
/// (the kernel in L1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConstants {
    pub m_r: f64,
    pub m_c: f64,
    pub l_r: f64,
    pub l_c: f64,
    pub l_p: f64,
}

pub trait Environment: Send + Sync {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reward(&self, x: usize, u: usize, mu: &StateDistribution, nu: &ActionDistribution) -> f64;
    fn cost(&self, x: usize, u: usize, mu: &StateDistribution, nu: &ActionDistribution) -> f64;
    fn transition(
        &self,
        x: usize,
        u: usize,
        mu: &StateDistribution,
        nu: &ActionDistribution,
    ) -> StateDistribution;
    fn constants(&self) -> EnvConstants;
}

impl<E: Environment + ?Sized> Environment for &E {
    fn n_states(&self) -> usize {
        (**self).n_states()
    }
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }
    fn reward(&self, x: usize, u: usize, mu: &StateDistribution, nu: &ActionDistribution) -> f64 {
        (**self).reward(x, u, mu, nu)
    }
    fn cost(&self, x: usize, u: usize, mu: &StateDistribution, nu: &ActionDistribution) -> f64 {
        (**self).cost(x, u, mu, nu)
    }
    fn transition(
        &self,
        x: usize,
        u: usize,
        mu: &StateDistribution,
        nu: &ActionDistribution,
    ) -> StateDistribution {
        (**self).transition(x, u, mu, nu)
    }
    fn constants(&self) -> EnvConstants {
        (**self).constants()
    }
}

// ---------------------------------------------------------------------------
// Firms product-quality model
// ---------------------------------------------------------------------------

/// Parameters of the firms product-quality model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FirmsEnvConfig {
    /// Number of quality levels.
    pub q: usize,
    pub alpha_r: f64,
    pub beta_r: f64,
    pub lambda_r: f64,
    pub lambda_c: f64,
}

impl Default for FirmsEnvConfig {
    fn default() -> Self {
        Self { q: 10, alpha_r: 1.0, beta_r: 0.5, lambda_r: 0.5, lambda_c: 1.0 }
    }
}

impl FirmsEnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::InvalidConfig(format!("q = {} must be at least 2", self.q)));
        }
        let coeffs = [self.alpha_r, self.beta_r, self.lambda_r, self.lambda_c];
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidConfig("firms coefficients must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Firms that either stay put (action 0) or invest (action 1) to raise their
/// quality level. Investment moves quality from `x` to `x + floor(chi * c)`
/// with `chi ~ U[0, 1)` and headroom `c = (1 - mean(mu)/(Q-1)) (Q-1-x)`.
///
/// Reward is `alpha_r x - beta_r mean(mu) - lambda_r u`, cost is
/// `lambda_c u`; neither depends on the action distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmsEnv {
    cfg: FirmsEnvConfig,
}

pub fn firms_env(cfg: FirmsEnvConfig) -> Result<FirmsEnv> {
    cfg.validate()?;
    Ok(FirmsEnv { cfg })
}

impl FirmsEnv {
    pub fn config(&self) -> &FirmsEnvConfig {
        &self.cfg
    }

    /// Investment headroom `c(x, mu)`.
    pub fn headroom(&self, x: usize, mean: f64) -> f64 {
        let top = (self.cfg.q - 1) as f64;
        ((1.0 - mean / top) * (top - x as f64)).max(0.0)
    }
}

/// Exact law of `floor(chi * c)` for `chi ~ U[0, 1)`: mass
/// `min((k + 1) / c, 1) - k / c` on `k = 0..=floor(c)`, point mass at 0 when
/// `c < 1`. The result has length `max_k + 1`; mass beyond `max_k` (only
/// reachable through rounding) is folded into `max_k`.
pub fn floor_uniform_law(c: f64, max_k: usize) -> Vec<f64> {
    let mut law = vec![0.0; max_k + 1];
    if c < 1.0 {
        law[0] = 1.0;
        return law;
    }
    let top = c.floor() as usize;
    for k in 0..=top {
        let p = ((k as f64 + 1.0) / c).min(1.0) - k as f64 / c;
        if p > 0.0 {
            law[k.min(max_k)] += p;
        }
    }
    law
}

impl Environment for FirmsEnv {
    fn n_states(&self) -> usize {
        self.cfg.q
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn reward(&self, x: usize, u: usize, mu: &StateDistribution, _nu: &ActionDistribution) -> f64 {
        self.cfg.alpha_r * x as f64 - self.cfg.beta_r * mu.mean() - self.cfg.lambda_r * u as f64
    }

    fn cost(&self, _x: usize, u: usize, _mu: &StateDistribution, _nu: &ActionDistribution) -> f64 {
        self.cfg.lambda_c * u as f64
    }

    fn transition(
        &self,
        x: usize,
        u: usize,
        mu: &StateDistribution,
        _nu: &ActionDistribution,
    ) -> StateDistribution {
        let q = self.cfg.q;
        if u == 0 {
            return StateDistribution::delta(q, x);
        }
        let law = floor_uniform_law(self.headroom(x, mu.mean()), q - 1 - x);
        let mut probs = vec![0.0; q];
        probs[x..].copy_from_slice(&law);
        StateDistribution::from_weights(probs)
    }

    /// Analytic constants.
    ///
    /// * `m_r = max(alpha_r (Q-1), beta_r (Q-1) + lambda_r)`, the extremes of
    ///   `alpha_r x - beta_r mean - lambda_r u` over `x, mean in [0, Q-1]`.
    /// * `mean(mu)` is `(Q-1)/2`-Lipschitz in L1 (differences of
    ///   distributions sum to zero), so `l_r = beta_r (Q-1) / 2` and `l_c = 0`.
    /// * `|law(c1) - law(c2)|_1 <= 2 |c1 - c2|` (flooring cannot increase the
    ///   L1 gap `2 (1 - c1/c2)` between `U[0,c1]` and `U[0,c2]`, and laws for
    ///   `c < 1` coincide with `c = 1`), and `|dc| <= |d mean|`, so
    ///   `l_p = Q - 1`. The bound is attained near `c = 1` at `x = 0`.
    fn constants(&self) -> EnvConstants {
        let top = (self.cfg.q - 1) as f64;
        EnvConstants {
            m_r: (self.cfg.alpha_r * top).max(self.cfg.beta_r * top + self.cfg.lambda_r),
            m_c: self.cfg.lambda_c,
            l_r: self.cfg.beta_r * top / 2.0,
            l_c: 0.0,
            l_p: top,
        }
    }
}

// ---------------------------------------------------------------------------
// Congestion model
// ---------------------------------------------------------------------------

/// Parameters of [`CongestionEnv`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CongestionEnvConfig {
    pub n_states: usize,
    /// Weight of the population distribution mixed into every kernel row.
    pub herding: f64,
    /// Penalty on the share of the population in the agent's own state.
    pub crowd_penalty: f64,
    /// Penalty on the share of the population taking the agent's action.
    pub action_crowd_penalty: f64,
    /// Share of the move cost that scales with the fraction of movers.
    pub move_congestion: f64,
}

impl Default for CongestionEnvConfig {
    fn default() -> Self {
        Self {
            n_states: 3,
            herding: 0.01,
            crowd_penalty: 0.02,
            action_crowd_penalty: 0.02,
            move_congestion: 0.02,
        }
    }
}

/// Small ring-world with weak mean-field coupling, suited to regimes where
/// the approximation bounds are finite (`gamma * S_P < 1`).
///
/// Action 0 stays, action 1 moves one step around the ring. Every kernel row
/// is blended with the population: `(1 - herding) * base + herding * mu`.
/// Reward `x/(n-1) - crowd_penalty mu(x) - action_crowd_penalty nu(u)`;
/// cost `u (1 - move_congestion + move_congestion nu(1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestionEnv {
    cfg: CongestionEnvConfig,
}

pub fn congestion_env(cfg: CongestionEnvConfig) -> Result<CongestionEnv> {
    if cfg.n_states < 2 {
        return Err(Error::InvalidConfig("congestion env needs at least 2 states".into()));
    }
    let unit = [cfg.herding, cfg.move_congestion];
    if unit.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidConfig("herding and move_congestion must lie in [0, 1]".into()));
    }
    if [cfg.crowd_penalty, cfg.action_crowd_penalty].iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig("penalties must be finite and >= 0".into()));
    }
    Ok(CongestionEnv { cfg })
}

impl Environment for CongestionEnv {
    fn n_states(&self) -> usize {
        self.cfg.n_states
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn reward(&self, x: usize, u: usize, mu: &StateDistribution, nu: &ActionDistribution) -> f64 {
        x as f64 / (self.cfg.n_states - 1) as f64
            - self.cfg.crowd_penalty * mu[x]
            - self.cfg.action_crowd_penalty * nu[u]
    }

    fn cost(&self, _x: usize, u: usize, _mu: &StateDistribution, nu: &ActionDistribution) -> f64 {
        let k = self.cfg.move_congestion;
        u as f64 * (1.0 - k + k * nu[1])
    }

    fn transition(
        &self,
        x: usize,
        u: usize,
        mu: &StateDistribution,
        _nu: &ActionDistribution,
    ) -> StateDistribution {
        let n = self.cfg.n_states;
        let h = self.cfg.herding;
        let mut probs: Vec<f64> = mu.probs().iter().map(|p| h * p).collect();
        probs[(x + u) % n] += 1.0 - h;
        StateDistribution::from_weights(probs)
    }

    /// A single coordinate of a distribution moves by at most half the L1
    /// gap, which gives the `/ 2` factors.
    fn constants(&self) -> EnvConstants {
        let c = &self.cfg;
        EnvConstants {
            m_r: 1.0f64.max(c.crowd_penalty + c.action_crowd_penalty),
            m_c: 1.0,
            l_r: c.crowd_penalty.max(c.action_crowd_penalty) / 2.0,
            l_c: c.move_congestion / 2.0,
            l_p: c.herding,
        }
    }
}

// ---------------------------------------------------------------------------
// Closure-backed environment
// ---------------------------------------------------------------------------

type ScalarFn = Box<dyn Fn(usize, usize, &StateDistribution, &ActionDistribution) -> f64 + Send + Sync>;
type KernelFn =
    Box<dyn Fn(usize, usize, &StateDistribution, &ActionDistribution) -> StateDistribution + Send + Sync>;

/// Environment assembled from closures. Defaults: zero reward, zero cost,
/// identity transition, all constants zero.
pub struct FnEnv {
    n_states: usize,
    n_actions: usize,
    reward: ScalarFn,
    cost: ScalarFn,
    transition: KernelFn,
    constants: EnvConstants,
}

impl FnEnv {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            reward: Box::new(|_, _, _, _| 0.0),
            cost: Box::new(|_, _, _, _| 0.0),
            transition: Box::new(move |x, _, _, _| StateDistribution::delta(n_states, x)),
            constants: EnvConstants { m_r: 0.0, m_c: 0.0, l_r: 0.0, l_c: 0.0, l_p: 0.0 },
        }
    }

    pub fn with_reward(
        mut self,
        f: impl Fn(usize, usize, &StateDistribution, &ActionDistribution) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.reward = Box::new(f);
        self
    }

    pub fn with_cost(
        mut self,
        f: impl Fn(usize, usize, &StateDistribution, &ActionDistribution) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.cost = Box::new(f);
        self
    }

    pub fn with_transition(
        mut self,
        f: impl Fn(usize, usize, &StateDistribution, &ActionDistribution) -> StateDistribution
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.transition = Box::new(f);
        self
    }

    pub fn with_constants(mut self, constants: EnvConstants) -> Self {
        self.constants = constants;
        self
    }
}

impl Environment for FnEnv {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn reward(&self, x: usize, u: usize, mu: &StateDistribution, nu: &ActionDistribution) -> f64 {
        (self.reward)(x, u, mu, nu)
    }
    fn cost(&self, x: usize, u: usize, mu: &StateDistribution, nu: &ActionDistribution) -> f64 {
        (self.cost)(x, u, mu, nu)
    }
    fn transition(
        &self,
        x: usize,
        u: usize,
        mu: &StateDistribution,
        nu: &ActionDistribution,
    ) -> StateDistribution {
        (self.transition)(x, u, mu, nu)
    }
    fn constants(&self) -> EnvConstants {
        self.constants
    }
}

// ---------------------------------------------------------------------------
// Sampling-based verification of declared constants
// ---------------------------------------------------------------------------

/// Largest observed ratios from [`validate_lipschitz`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub trials: usize,
    pub declared: EnvConstants,
    pub max_reward_ratio: f64,
    pub max_cost_ratio: f64,
    pub max_transition_ratio: f64,
    pub max_abs_reward: f64,
    pub max_abs_cost: f64,
    /// Names of the declared constants that some sample exceeded.
    pub violations: Vec<&'static str>,
}

impl LipschitzReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

// Relative slack for ratios that sit exactly on a tight constant.
const RATIO_SLACK: f64 = 1e-9;

fn exceeds(observed: f64, declared: f64) -> bool {
    observed > declared * (1.0 + RATIO_SLACK) + RATIO_SLACK
}

/// Partner for a random distribution: independent, or a perturbation at a
/// random scale so that local slopes get probed as well as global ones.
pub(crate) fn partner<S, R: Rng + ?Sized>(
    base: &crate::simplex::Distribution<S>,
    rng: &mut R,
) -> crate::simplex::Distribution<S> {
    let other = crate::simplex::Distribution::random(base.len(), rng);
    match rng.random_range(0..4) {
        0 => other,
        k => base.mix(&other, 10f64.powi(-2 * k)),
    }
}

/// Samples random `(x, u, mu1, mu2, nu1, nu2)` tuples and reports the largest
/// ratios `|dr| / (|dmu|_1 + |dnu|_1)` (likewise for cost and kernel), along
/// with the largest observed `|r|` and `|c|`. Violations are reported, not
/// raised.
pub fn validate_lipschitz<E: Environment + ?Sized, R: Rng + ?Sized>(
    env: &E,
    trials: usize,
    rng: &mut R,
) -> LipschitzReport {
    let (nx, nu_len) = (env.n_states(), env.n_actions());
    let declared = env.constants();
    let mut rep = LipschitzReport {
        trials,
        declared,
        max_reward_ratio: 0.0,
        max_cost_ratio: 0.0,
        max_transition_ratio: 0.0,
        max_abs_reward: 0.0,
        max_abs_cost: 0.0,
        violations: Vec::new(),
    };
    for _ in 0..trials {
        let x = rng.random_range(0..nx);
        let u = rng.random_range(0..nu_len);
        let mu1 = StateDistribution::random(nx, rng);
        let mu2 = partner(&mu1, rng);
        let nu1 = ActionDistribution::random(nu_len, rng);
        let nu2 = if rng.random_bool(0.5) { nu1.clone() } else { partner(&nu1, rng) };
        let gap = mu1.l1(&mu2) + nu1.l1(&nu2);

        let (r1, r2) = (env.reward(x, u, &mu1, &nu1), env.reward(x, u, &mu2, &nu2));
        let (c1, c2) = (env.cost(x, u, &mu1, &nu1), env.cost(x, u, &mu2, &nu2));
        rep.max_abs_reward = rep.max_abs_reward.max(r1.abs()).max(r2.abs());
        rep.max_abs_cost = rep.max_abs_cost.max(c1.abs()).max(c2.abs());
        if gap <= 1e-12 {
            continue;
        }
        let p1 = env.transition(x, u, &mu1, &nu1);
        let p2 = env.transition(x, u, &mu2, &nu2);
        // discount floating-point noise in the numerator so that tiny gaps
        // do not manufacture spurious slopes
        let slope = |diff: f64, scale: f64| (diff - 8.0 * f64::EPSILON * scale.max(1.0)).max(0.0) / gap;
        rep.max_reward_ratio = rep.max_reward_ratio.max(slope((r1 - r2).abs(), r1.abs().max(r2.abs())));
        rep.max_cost_ratio = rep.max_cost_ratio.max(slope((c1 - c2).abs(), c1.abs().max(c2.abs())));
        rep.max_transition_ratio = rep.max_transition_ratio.max(slope(p1.l1(&p2), nx as f64));
    }
    let checks = [
        ("m_r", rep.max_abs_reward, declared.m_r),
        ("m_c", rep.max_abs_cost, declared.m_c),
        ("l_r", rep.max_reward_ratio, declared.l_r),
        ("l_c", rep.max_cost_ratio, declared.l_c),
        ("l_p", rep.max_transition_ratio, declared.l_p),
    ];
    rep.violations = checks.iter().filter(|(_, o, d)| exceeds(*o, *d)).map(|(n, _, _)| *n).collect();
    rep
}
