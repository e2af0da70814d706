//! Solver behaviour on frozen data and on the firms model.

use mfc_core::envmodel::{firms_env, FirmsEnvConfig};
use mfc_core::npgpd::{compatible_sgd, solve, SolverConfig};
use mfc_core::policy::PolicyParams;
use mfc_core::rng::stream;
use mfc_core::sampler::Sampler;
use mfc_core::simplex::StateDistribution;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn residual(data: &[(Vec<f64>, f64)], w: &[f64]) -> f64 {
    data.iter()
        .map(|(g, a)| (g.iter().zip(w).map(|(gi, wi)| gi * wi).sum::<f64>() - a).powi(2))
        .sum::<f64>()
        / data.len() as f64
}

/// Minimum-norm least-squares solution by SVD.
fn least_squares(data: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let d = data[0].0.len();
    let g = DMatrix::from_fn(data.len(), d, |i, j| data[i].0[j]);
    let a = DVector::from_iterator(data.len(), data.iter().map(|(_, a)| *a));
    g.svd(true, true).solve(&a, 1e-10).unwrap().iter().copied().collect()
}

fn sgd_on(data: &[(Vec<f64>, f64)], alpha: f64, steps: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed);
    let d = data[0].0.len();
    compatible_sgd(&vec![0.0; d], alpha, steps, 1, || data[rng.random_range(0..data.len())].clone()).unwrap()
}

#[test]
fn sgd_approaches_least_squares_on_sampled_advantages() {
    let env = firms_env(FirmsEnvConfig::default()).unwrap();
    let phi = PolicyParams::random(10, 2, 0.5, &mut stream(41));
    let mu0 = StateDistribution::uniform(10);
    let mut sampler = Sampler::new(mu0, &phi, &env, 0.9);
    let mut rng = stream(42);
    let data: Vec<(Vec<f64>, f64)> = (0..2000)
        .map(|_| {
            let s = sampler.sample_occupancy(&mut rng);
            let g = phi.log_prob_grad(s.x, &s.mu, s.u).grad;
            (g, sampler.estimate_advantage(&s, 0.5, &mut rng).a_hat_lambda)
        })
        .collect();
    let best = residual(&data, &least_squares(&data));
    let w = sgd_on(&data, 0.02, 50_000, 43);
    assert!(residual(&data, &w) <= 1.1 * best, "{} vs {best}", residual(&data, &w));
}

#[test]
fn sgd_recovers_a_planted_direction() {
    let mut rng = stream(44);
    let w_true: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
    let data: Vec<(Vec<f64>, f64)> = (0..500)
        .map(|_| {
            let g: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = g.iter().zip(&w_true).map(|(x, y)| x * y).sum::<f64>() + 0.1 * rng.random_range(-1.0..1.0);
            (g, a)
        })
        .collect();
    let best = residual(&data, &least_squares(&data));
    let zero = residual(&data, &[0.0; 6]);
    assert!(zero > 50.0 * best);
    let w = sgd_on(&data, 0.05, 20_000, 45);
    assert!(residual(&data, &w) <= 1.1 * best, "{} vs {best}", residual(&data, &w));
}

#[test]
fn averaged_reward_value_trends_upward_with_more_iterations() {
    let env = firms_env(FirmsEnvConfig::default()).unwrap();
    let mu0 = StateDistribution::uniform(10);
    let cfg = SolverConfig::default();
    // the drift per iteration is small next to SGD noise, so the pool has to be wide
    let seeds = 0..40u64;
    let traces: Vec<_> = seeds.map(|s| solve(&cfg, &env, &mu0, &mut stream(1000 + s)).unwrap()).collect();
    // a run with J iterations is the J-prefix of the longest run
    let averaged = |j: usize| {
        traces.iter().map(|t| t.records[..j].iter().map(|r| r.v_inf_r).sum::<f64>() / j as f64).sum::<f64>()
            / traces.len() as f64
    };
    let (a25, a50, a100) = (averaged(25), averaged(50), averaged(100));
    assert!(a25 <= a50 && a50 <= a100, "{a25} {a50} {a100}");
}

#[test]
fn shorter_runs_are_prefixes_of_longer_ones() {
    let env = firms_env(FirmsEnvConfig::default()).unwrap();
    let mu0 = StateDistribution::uniform(10);
    let long = solve(&SolverConfig { outer_iters: 8, inner_iters: 10, ..Default::default() }, &env, &mu0, &mut stream(46)).unwrap();
    let short = solve(&SolverConfig { outer_iters: 3, inner_iters: 10, ..Default::default() }, &env, &mu0, &mut stream(46)).unwrap();
    assert_eq!(&long.policies[..3], &short.policies[..]);
}
