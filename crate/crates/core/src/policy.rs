//! Stochastic policies `pi(x, mu)` over actions.
//!
//! The trainable class is a softmax over logits that are linear in the
//! feature vector `[1, mu(0), .., mu(|X|-1)]`, with a separate weight row per
//! `(x, u)`. Parameters are stored flat, x-major, then action, then feature
//! index, so the dimension is `|X| * |U| * (1 + |X|)`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{ActionDistribution, StateDistribution};

/// Default max-norm bound on policy parameters.
pub const DEFAULT_NORM_BOUND: f64 = 50.0;

/// A (possibly population-dependent) stationary policy.
pub trait Policy: Sync {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn action_dist(&self, x: usize, mu: &StateDistribution) -> ActionDistribution;

    /// Upper bound on `|pi(x, mu1) - pi(x, mu2)|_1 / |mu1 - mu2|_1` over all
    /// `x` and distinct `mu1`, `mu2`.
    fn lipschitz_constant(&self) -> f64;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn n_states(&self) -> usize {
        (**self).n_states()
    }
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }
    fn action_dist(&self, x: usize, mu: &StateDistribution) -> ActionDistribution {
        (**self).action_dist(x, mu)
    }
    fn lipschitz_constant(&self) -> f64 {
        (**self).lipschitz_constant()
    }
}

/// A fixed action distribution per state, independent of the population.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    rows: Vec<ActionDistribution>,
}

impl TabularPolicy {
    pub fn new(rows: Vec<ActionDistribution>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidConfig("tabular policy needs at least one state".into()));
        };
        if let Some(r) = rows.iter().find(|r| r.len() != first.len()) {
            return Err(Error::DimensionMismatch { left: first.len(), right: r.len() });
        }
        Ok(Self { rows })
    }

    /// Every state plays `action` with probability one.
    pub fn constant(n_states: usize, n_actions: usize, action: usize) -> Self {
        Self { rows: vec![ActionDistribution::delta(n_actions, action); n_states] }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { rows: vec![ActionDistribution::uniform(n_actions); n_states] }
    }
}

impl Policy for TabularPolicy {
    fn n_states(&self) -> usize {
        self.rows.len()
    }
    fn n_actions(&self) -> usize {
        self.rows[0].len()
    }
    fn action_dist(&self, x: usize, _mu: &StateDistribution) -> ActionDistribution {
        self.rows[x].clone()
    }
    fn lipschitz_constant(&self) -> f64 {
        0.0
    }
}

/// Parameters of the softmax-linear policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    n_states: usize,
    n_actions: usize,
    phi: Vec<f64>,
}

/// `grad_phi log pi_phi(x, mu)(u)`, dense over all parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient {
    pub grad: Vec<f64>,
}

impl ScoreGradient {
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.grad.iter().zip(w).map(|(g, w)| g * w).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.grad.iter().map(|g| g.abs()).sum()
    }
}

pub fn param_dim(n_states: usize, n_actions: usize) -> usize {
    n_states * n_actions * (1 + n_states)
}

impl PolicyParams {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, phi: vec![0.0; param_dim(n_states, n_actions)] }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, phi: Vec<f64>) -> Result<Self> {
        let d = param_dim(n_states, n_actions);
        if phi.len() != d {
            return Err(Error::DimensionMismatch { left: d, right: phi.len() });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("policy parameters must be finite".into()));
        }
        Ok(Self { n_states, n_actions, phi })
    }

    /// Entries drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, scale: f64, rng: &mut R) -> Self {
        let phi = (0..param_dim(n_states, n_actions)).map(|_| rng.random_range(-scale..=scale)).collect();
        Self { n_states, n_actions, phi }
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.phi
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.phi
    }

    fn features(&self) -> usize {
        1 + self.n_states
    }

    /// Offset of the weight row for `(x, u)`.
    pub fn row_offset(&self, x: usize, u: usize) -> usize {
        (x * self.n_actions + u) * self.features()
    }

    fn row(&self, x: usize, u: usize) -> &[f64] {
        let o = self.row_offset(x, u);
        &self.phi[o..o + self.features()]
    }

    pub fn logits(&self, x: usize, mu: &StateDistribution) -> Vec<f64> {
        debug_assert_eq!(mu.len(), self.n_states);
        (0..self.n_actions)
            .map(|u| {
                let row = self.row(x, u);
                row[0] + row[1..].iter().zip(mu.probs()).map(|(w, m)| w * m).sum::<f64>()
            })
            .collect()
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// Score function `feature(x, u, mu) - E_{u' ~ pi}[feature(x, u', mu)]`.
    /// Only the rows of state `x` are nonzero.
    pub fn log_prob_grad(&self, x: usize, mu: &StateDistribution, u: usize) -> ScoreGradient {
        let probs = Self::softmax(&self.logits(x, mu));
        let mut grad = vec![0.0; self.dim()];
        for (a, p) in probs.iter().enumerate() {
            let coef = if a == u { 1.0 - p } else { -p };
            let o = self.row_offset(x, a);
            grad[o] = coef;
            for (g, m) in grad[o + 1..o + self.features()].iter_mut().zip(mu.probs()) {
                *g = coef * m;
            }
        }
        ScoreGradient { grad }
    }

    /// `log pi(x, mu)(u)`.
    pub fn log_prob(&self, x: usize, mu: &StateDistribution, u: usize) -> f64 {
        let l = self.logits(x, mu);
        let max = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + l.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        l[u] - lse
    }

    /// Clamps every entry to `[-bound, bound]`.
    pub fn clip_to_norm_bound(&mut self, bound: f64) {
        for v in &mut self.phi {
            *v = v.clamp(-bound, bound);
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.phi.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes a checkpoint: a header line `n_states n_actions` followed by one
    /// parameter per line in storage order. Floats use shortest round-trip
    /// formatting, so reading back is exact.
    pub fn to_checkpoint_string(&self) -> String {
        let mut s = format!("{} {}\n", self.n_states, self.n_actions);
        for v in &self.phi {
            writeln!(s, "{v:?}").unwrap();
        }
        s
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Checkpoint("empty file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Checkpoint(format!("bad header {header:?}"))))
            .collect::<Result<_>>()?;
        let [n_states, n_actions] = dims[..] else {
            return Err(Error::Checkpoint(format!("bad header {header:?}")));
        };
        let phi = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| Error::Checkpoint(format!("bad value {l:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_vec(n_states, n_actions, phi).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Self::from_checkpoint_str(&text)
    }
}

impl Policy for PolicyParams {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn action_dist(&self, x: usize, mu: &StateDistribution) -> ActionDistribution {
        ActionDistribution::from_weights(Self::softmax(&self.logits(x, mu)))
    }

    /// `max_x max_{u,u'} spread(W[x,u] - W[x,u']) / 4`, where `W[x,u]` is the
    /// population block of row `(x, u)` and `spread(v) = max(v) - min(v)`.
    ///
    /// Derivation: for `d` with entries summing to zero, `|v . d| <=
    /// spread(v) |d|_1 / 2`, so every logit gap moves by at most
    /// `spread / 2 * |dmu|_1`. Along the segment between the two logit
    /// vectors the softmax Jacobian maps a logit change `dl` to a probability
    /// change of L1 norm `sum_u p_u |dl_u - E_p dl|`, a mean absolute
    /// deviation, which is at most half the range of `dl`.
    fn lipschitz_constant(&self) -> f64 {
        let mut best: f64 = 0.0;
        for x in 0..self.n_states {
            for u in 0..self.n_actions {
                for v in (u + 1)..self.n_actions {
                    let (a, b) = (&self.row(x, u)[1..], &self.row(x, v)[1..]);
                    let (lo, hi) = a
                        .iter()
                        .zip(b)
                        .map(|(p, q)| p - q)
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
                    best = best.max(hi - lo);
                }
            }
        }
        best / 4.0
    }
}

/// Convenience free functions mirroring the methods.
pub fn action_dist(phi: &PolicyParams, x: usize, mu: &StateDistribution) -> ActionDistribution {
    phi.action_dist(x, mu)
}

pub fn log_prob_grad(phi: &PolicyParams, x: usize, mu: &StateDistribution, u: usize) -> ScoreGradient {
    phi.log_prob_grad(x, mu, u)
}

pub fn lipschitz_constant(phi: &PolicyParams) -> f64 {
    phi.lipschitz_constant()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_params_give_uniform() {
        let phi = PolicyParams::zeros(3, 4);
        let mu = StateDistribution::uniform(3);
        assert_eq!(phi.action_dist(1, &mu), ActionDistribution::uniform(4));
        assert_eq!(phi.lipschitz_constant(), 0.0);
    }

    #[test]
    fn equal_logits_split_evenly() {
        let mut phi = PolicyParams::zeros(2, 2);
        let mu = StateDistribution::new(vec![0.4, 0.6]).unwrap();
        // row (0,0): 5 + 0*mu ; row (0,1): 0 + (5/0.4, 0)·mu = 5
        let o0 = phi.row_offset(0, 0);
        let o1 = phi.row_offset(0, 1);
        phi.as_mut_slice()[o0] = 5.0;
        phi.as_mut_slice()[o1 + 1] = 5.0 / 0.4;
        let p = phi.action_dist(0, &mu);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ln3_gap_gives_quarter_three_quarters() {
        let mut phi = PolicyParams::zeros(1, 2);
        let o = phi.row_offset(0, 1);
        phi.as_mut_slice()[o] = 3f64.ln();
        let p = phi.action_dist(0, &StateDistribution::uniform(1));
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn uniform_score_pattern() {
        let phi = PolicyParams::zeros(3, 2);
        let mu = StateDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let g = phi.log_prob_grad(1, &mu, 0);
        let feat = [1.0, 0.2, 0.3, 0.5];
        let (o0, o1) = (phi.row_offset(1, 0), phi.row_offset(1, 1));
        for (i, f) in feat.iter().enumerate() {
            assert!((g.grad[o0 + i] - 0.5 * f).abs() < 1e-15);
            assert!((g.grad[o1 + i] + 0.5 * f).abs() < 1e-15);
        }
        let nonzero = g.grad.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 8);
    }

    #[test]
    fn score_has_zero_mean_and_bounded_norm() {
        let mut rng = stream(3);
        for _ in 0..100 {
            let phi = PolicyParams::random(4, 3, 3.0, &mut rng);
            let mu = StateDistribution::random(4, &mut rng);
            let x = rng.random_range(0..4);
            let p = phi.action_dist(x, &mu);
            let mut acc = vec![0.0; phi.dim()];
            for u in 0..3 {
                let g = phi.log_prob_grad(x, &mu, u);
                assert!(g.l1_norm() <= 4.0 + 1e-12);
                acc.iter_mut().zip(&g.grad).for_each(|(a, v)| *a += p[u] * v);
            }
            assert!(acc.iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn probabilities_are_strictly_interior() {
        let mut rng = stream(4);
        let phi = PolicyParams::random(3, 3, DEFAULT_NORM_BOUND / 4.0, &mut rng);
        for _ in 0..100 {
            let mu = StateDistribution::random(3, &mut rng);
            let p = phi.action_dist(rng.random_range(0..3), &mu);
            assert!(p.probs().iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn zero_population_block_gives_zero_lipschitz() {
        let mut rng = stream(5);
        let mut phi = PolicyParams::random(3, 2, 2.0, &mut rng);
        for x in 0..3 {
            for u in 0..2 {
                let o = phi.row_offset(x, u);
                phi.as_mut_slice()[o + 1..o + 4].fill(0.0);
            }
        }
        assert_eq!(phi.lipschitz_constant(), 0.0);
    }

    #[test]
    fn sampled_ratio_never_exceeds_bound() {
        let mut rng = stream(6);
        for _ in 0..20 {
            let phi = PolicyParams::random(4, 3, 3.0, &mut rng);
            let bound = phi.lipschitz_constant();
            for _ in 0..500 {
                let m1 = StateDistribution::random(4, &mut rng);
                let m2 = if rng.random_bool(0.5) {
                    StateDistribution::random(4, &mut rng)
                } else {
                    m1.mix(&StateDistribution::random(4, &mut rng), 1e-3)
                };
                let d = m1.l1(&m2);
                if d < 1e-12 {
                    continue;
                }
                let x = rng.random_range(0..4);
                let r = phi.action_dist(x, &m1).l1(&phi.action_dist(x, &m2)) / d;
                assert!(r <= bound * (1.0 + 1e-9), "ratio {r} > bound {bound}");
            }
        }
    }

    #[test]
    fn clipping_enforces_max_norm() {
        let mut phi = PolicyParams::random(2, 2, 100.0, &mut stream(7));
        phi.clip_to_norm_bound(50.0);
        assert!(phi.max_norm() <= 50.0);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let phi = PolicyParams::random(3, 2, 1.0, &mut stream(8));
        let back = PolicyParams::from_checkpoint_str(&phi.to_checkpoint_string()).unwrap();
        assert_eq!(phi, back);
        assert!(PolicyParams::from_checkpoint_str("3 2\n1.0\n").is_err());
        assert!(PolicyParams::from_checkpoint_str("").is_err());
        assert!(PolicyParams::from_checkpoint_str("x y\n").is_err());
    }

    #[test]
    fn tabular_rows_must_agree() {
        let rows = vec![ActionDistribution::uniform(2), ActionDistribution::uniform(3)];
        assert!(TabularPolicy::new(rows).is_err());
        assert!(TabularPolicy::new(vec![]).is_err());
    }
}
