//! Empirical checks of the regularity and concentration properties that the
//! approximation widths rest on.
//!
//! The Lipschitz suite samples random `(mu1, mu2, pi)` triples and compares
//! the observed slopes of the mean-field maps with their constants:
//!
//! ```text
//! |nu(mu1) - nu(mu2)|_1   <= (1 + L_Q) |mu1 - mu2|_1
//! |P(mu1)  - P(mu2)|_1    <= S_P       |mu1 - mu2|_1
//! |r(mu1)  - r(mu2)|      <= S_R       |mu1 - mu2|_1     (likewise S_C)
//! ```
//!
//! The concentration suite steps an `N`-agent population and averages the
//! one-step deviations from the mean-field map, against
//!
//! ```text
//! E|nu^N - nu(mu^N)|_1          <= sqrt|U| / sqrt N
//! E|mu^N_{t+1} - P(mu^N)|_1     <= C_P (sqrt|X| + sqrt|U|) / sqrt N
//! E|r^N - r(mu^N)|              <= (M_R + L_R sqrt|U|) / sqrt N   (likewise cost)
//! ```

use rand::Rng;
use serde::Serialize;

use crate::bounds::{compute_bounds, BoundInputs};
use crate::envmodel::{partner, Environment};
use crate::error::Result;
use crate::meanfield::{nu_mf, MeanFieldStep};
use crate::nagent::{sample_initial_joint_state, step};
use crate::policy::{Policy, PolicyParams};
use crate::simplex::StateDistribution;

/// Largest observed value of a ratio or mean deviation, with its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub observed: f64,
    pub bound: f64,
}

impl Check {
    fn new(bound: f64) -> Self {
        Self { observed: 0.0, bound }
    }

    fn record(&mut self, v: f64) {
        self.observed = self.observed.max(v);
    }

    pub fn holds(&self) -> bool {
        self.observed <= self.bound * (1.0 + 1e-9) + 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzSuite {
    pub trials: usize,
    /// Slopes divided by their per-trial bound, so that one `Check` covers
    /// trials with different policies.
    pub nu: Check,
    pub p: Check,
    pub r: Check,
    pub c: Check,
}

impl LipschitzSuite {
    pub fn holds(&self) -> bool {
        [self.nu, self.p, self.r, self.c].iter().all(Check::holds)
    }
}

// floating-point noise allowance for differences of O(scale) quantities
fn denoise(diff: f64, scale: f64) -> f64 {
    (diff - 16.0 * f64::EPSILON * scale.max(1.0)).max(0.0)
}

/// Samples `trials` random `(mu1, mu2, pi)` triples. Policies are softmax
/// policies with parameters uniform in `[-phi_scale, phi_scale]`, with the
/// scale itself drawn uniformly per trial; ratios are reported relative to
/// the bound for that policy's `L_Q`, so the bound of every check is 1.
pub fn lipschitz_suite<E, R>(env: &E, trials: usize, phi_scale: f64, rng: &mut R) -> Result<LipschitzSuite>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let (nx, na) = (env.n_states(), env.n_actions());
    let k = env.constants();
    let mut suite =
        LipschitzSuite { trials, nu: Check::new(1.0), p: Check::new(1.0), r: Check::new(1.0), c: Check::new(1.0) };
    for _ in 0..trials {
        let scale = phi_scale * rng.random::<f64>();
        let phi = PolicyParams::random(nx, na, scale, rng);
        let l_q = phi.lipschitz_constant();
        let inputs = BoundInputs::from_env(&k, l_q, 0.5, 1, nx, na, -1.0);
        let b = compute_bounds(&inputs)?;

        let mu1 = StateDistribution::random(nx, rng);
        let mu2 = partner(&mu1, rng);
        let gap = mu1.l1(&mu2);
        if gap <= 1e-12 {
            continue;
        }
        let s1 = MeanFieldStep::compute(&mu1, &phi, env);
        let s2 = MeanFieldStep::compute(&mu2, &phi, env);
        let nu_gap = denoise(nu_mf(&mu1, &phi).l1(&nu_mf(&mu2, &phi)), na as f64);
        suite.nu.record(nu_gap / gap / (1.0 + l_q));
        suite.p.record(denoise(s1.next_mu.l1(&s2.next_mu), nx as f64) / gap / b.s_p);
        let ratio = |d: f64, s: f64| if s > 0.0 { d / gap / s } else if d > 0.0 { f64::INFINITY } else { 0.0 };
        let scale_r = s1.reward.abs().max(s2.reward.abs());
        let scale_c = s1.cost.abs().max(s2.cost.abs());
        suite.r.record(ratio(denoise((s1.reward - s2.reward).abs(), scale_r), b.s_r));
        suite.c.record(ratio(denoise((s1.cost - s2.cost).abs(), scale_c), b.s_c));
    }
    Ok(suite)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationSuite {
    pub n_agents: usize,
    pub steps: usize,
    /// Mean deviations over all steps against their bounds.
    pub nu: Check,
    pub p: Check,
    pub r: Check,
    pub c: Check,
}

impl ConcentrationSuite {
    pub fn holds(&self) -> bool {
        [self.nu, self.p, self.r, self.c].iter().all(Check::holds)
    }
}

/// Steps of each trajectory before the population is redrawn from `mu0`.
const RESTART_EVERY: usize = 20;

/// Averages one-step deviations of an `n`-agent population from the
/// mean-field map over `steps` steps.
pub fn concentration_suite<P, E, R>(
    env: &E,
    pi: &P,
    mu0: &StateDistribution,
    n: usize,
    steps: usize,
    rng: &mut R,
) -> Result<ConcentrationSuite>
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let (nx, na) = (env.n_states(), env.n_actions());
    let k = env.constants();
    let b = compute_bounds(&BoundInputs::from_env(&k, pi.lipschitz_constant(), 0.5, n, nx, na, -1.0))?;
    let root_n = (n as f64).sqrt();
    let (root_x, root_u) = ((nx as f64).sqrt(), (na as f64).sqrt());
    let mut sums = [0.0; 4];
    let mut state = sample_initial_joint_state(mu0, n, rng)?;
    for t in 0..steps {
        if t > 0 && t % RESTART_EVERY == 0 {
            state = sample_initial_joint_state(mu0, n, rng)?;
        }
        let out = step(&state, pi, env, rng);
        let mf = MeanFieldStep::compute(&out.mu, pi, env);
        sums[0] += out.nu.l1(&mf.nu);
        sums[1] += out.next.empirical().l1(&mf.next_mu);
        sums[2] += (out.avg_reward - mf.reward).abs();
        sums[3] += (out.avg_cost - mf.cost).abs();
        state = out.next;
    }
    let mean = |s: f64| s / steps.max(1) as f64;
    let check = |s: f64, bound: f64| Check { observed: mean(s), bound };
    Ok(ConcentrationSuite {
        n_agents: n,
        steps,
        nu: check(sums[0], root_u / root_n),
        p: check(sums[1], b.c_p * (root_x + root_u) / root_n),
        r: check(sums[2], (k.m_r + k.l_r * root_u) / root_n),
        c: check(sums[3], (k.m_c + k.l_c * root_u) / root_n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmodel::{congestion_env, firms_env, CongestionEnvConfig, FirmsEnvConfig};
    use crate::policy::TabularPolicy;
    use crate::rng::stream;

    #[test]
    fn lipschitz_suite_passes_on_builtin_envs() {
        let firms = firms_env(FirmsEnvConfig::default()).unwrap();
        let s = lipschitz_suite(&firms, 2000, 3.0, &mut stream(1)).unwrap();
        assert!(s.holds(), "{s:?}");
        assert!(s.nu.observed > 0.0 && s.p.observed > 0.0 && s.r.observed > 0.0);
        let cong = congestion_env(CongestionEnvConfig::default()).unwrap();
        let s = lipschitz_suite(&cong, 2000, 3.0, &mut stream(2)).unwrap();
        assert!(s.holds(), "{s:?}");
    }

    #[test]
    fn concentration_suite_passes_on_firms() {
        let env = firms_env(FirmsEnvConfig::default()).unwrap();
        let mu0 = StateDistribution::uniform(10);
        let pi = TabularPolicy::uniform(10, 2);
        for n in [10, 100] {
            let s = concentration_suite(&env, &pi, &mu0, n, 200, &mut stream(3)).unwrap();
            assert!(s.holds(), "{s:?}");
            assert_eq!(s.steps, 200);
        }
    }

    #[test]
    fn deterministic_policy_has_no_action_noise() {
        let env = firms_env(FirmsEnvConfig::default()).unwrap();
        let pi = TabularPolicy::constant(10, 2, 0);
        let s = concentration_suite(&env, &pi, &StateDistribution::uniform(10), 50, 40, &mut stream(4)).unwrap();
        // never investing freezes everyone and pays nothing
        assert_eq!((s.nu.observed, s.p.observed, s.c.observed), (0.0, 0.0, 0.0));
    }
}
