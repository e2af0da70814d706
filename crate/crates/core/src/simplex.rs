//! Probability vectors over finite state and action spaces.
//!
//! [`Distribution`] is a dense point on the probability simplex, tagged with
//! the space it lives on so that state and action distributions cannot be
//! mixed up. Construction renormalizes sums within [`SUM_TOLERANCE`] of one and
//! rejects anything further away.

use std::fmt;
use std::marker::PhantomData;
use std::ops::Index;

use rand::Rng;
use rand_distr::{Distribution as _, Exp1};

use crate::error::{Error, Result};

/// Maximum deviation of the raw sum from one that construction absorbs.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Marker for distributions over the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum States {}

/// Marker for distributions over the action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actions {}

/// A probability vector over `{0, .., len-1}`.
pub struct Distribution<S> {
    probs: Vec<f64>,
    _space: PhantomData<S>,
}

pub type StateDistribution = Distribution<States>;
pub type ActionDistribution = Distribution<Actions>;

impl<S> Clone for Distribution<S> {
    fn clone(&self) -> Self {
        Self::wrap(self.probs.clone())
    }
}

impl<S> PartialEq for Distribution<S> {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs
    }
}

impl<S> fmt::Debug for Distribution<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Distribution").field(&self.probs).finish()
    }
}

impl<S> Index<usize> for Distribution<S> {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

impl<S> Distribution<S> {
    fn wrap(probs: Vec<f64>) -> Self {
        Self { probs, _space: PhantomData }
    }

    /// Validates and renormalizes a probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::NotSimplex("empty vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::NotSimplex(format!("entry {p} is negative or not finite")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotSimplex(format!("entries sum to {sum}")));
        }
        Ok(Self::from_weights(probs))
    }

    /// Normalizes nonnegative weights with a positive total. Used internally
    /// on vectors that are probability vectors up to rounding.
    pub(crate) fn from_weights(mut probs: Vec<f64>) -> Self {
        let sum: f64 = probs.iter().sum();
        debug_assert!(sum > 0.0 && sum.is_finite(), "weights sum to {sum}");
        debug_assert!(probs.iter().all(|p| *p >= 0.0));
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Self::wrap(probs)
    }

    /// Point mass at `i`.
    pub fn delta(len: usize, i: usize) -> Self {
        assert!(i < len, "delta index {i} out of range {len}");
        let mut probs = vec![0.0; len];
        probs[i] = 1.0;
        Self::wrap(probs)
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0);
        Self::wrap(vec![1.0 / len as f64; len])
    }

    /// Empirical distribution of a list of ids: `probs[i] = count(i) / n`.
    pub fn empirical(ids: &[usize], len: usize) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let mut counts = vec![0usize; len];
        for &id in ids {
            *counts.get_mut(id).ok_or_else(|| Error::NotSimplex(format!("id {id} >= {len}")))? += 1;
        }
        let n = ids.len() as f64;
        Ok(Self::wrap(counts.into_iter().map(|c| c as f64 / n).collect()))
    }

    /// Uniformly random point on the simplex (flat Dirichlet).
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let w: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
        Self::from_weights(w)
    }

    /// Convex combination `(1 - t) * self + t * other`.
    pub fn mix(&self, other: &Self, t: f64) -> Self {
        assert_eq!(self.len(), other.len());
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| ((1.0 - t) * a + t * b).max(0.0))
            .collect();
        Self::from_weights(probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// `sum_i i * probs[i]`.
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
    }

    /// L1 distance; panics on a dimension mismatch. See [`l1_distance`] for
    /// the checked variant.
    pub fn l1(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "l1 distance between different dimensions");
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Draws an index with probability `probs[i]` by inverting the CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.probs, rng)
    }
}

/// Inverse-CDF draw from a probability slice. Never returns an index with
/// zero probability.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left u just above the accumulated total
    last
}

/// Empirical distribution of agent states.
pub fn empirical_state_dist(states: &[usize], n_states: usize) -> Result<StateDistribution> {
    if let Some(&id) = states.iter().find(|&&s| s >= n_states) {
        return Err(Error::InvalidState { id, n_states });
    }
    Distribution::empirical(states, n_states)
}

/// Empirical distribution of agent actions.
pub fn empirical_action_dist(actions: &[usize], n_actions: usize) -> Result<ActionDistribution> {
    if let Some(&id) = actions.iter().find(|&&a| a >= n_actions) {
        return Err(Error::InvalidAction { id, n_actions });
    }
    Distribution::empirical(actions, n_actions)
}

/// Checked L1 distance.
pub fn l1_distance<S>(a: &Distribution<S>, b: &Distribution<S>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { left: a.len(), right: b.len() });
    }
    Ok(a.l1(b))
}

pub fn sample<S, R: Rng + ?Sized>(dist: &Distribution<S>, rng: &mut R) -> usize {
    dist.sample(rng)
}
