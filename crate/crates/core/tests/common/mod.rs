//! Exact discounted quantities along the mean-field path by explicit
//! recursion, written against the raw `Environment`/`Policy` interfaces.

#![allow(dead_code)]

use mfc_core::envmodel::Environment;
use mfc_core::policy::Policy;
use mfc_core::simplex::{ActionDistribution, StateDistribution};

pub struct PathTables {
    pub mu: Vec<Vec<f64>>,
    /// `pi_t(u | x)`, indexed `[t][x][u]`.
    pub pi: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
    pub cost: Vec<Vec<Vec<f64>>>,
    /// `P_t(x' | x, u)`, indexed `[t][x][u][x']`.
    pub kernel: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Forward recursion of the population for `horizon` steps.
pub fn forward_path(env: &dyn Environment, pi: &dyn Policy, mu0: &[f64], horizon: usize) -> PathTables {
    let (nx, na) = (env.n_states(), env.n_actions());
    let mut tables = PathTables { mu: vec![], pi: vec![], reward: vec![], cost: vec![], kernel: vec![] };
    let mut mu = mu0.to_vec();
    for _ in 0..horizon {
        let mu_d = StateDistribution::new(mu.clone()).unwrap();
        let rows: Vec<Vec<f64>> = (0..nx).map(|x| pi.action_dist(x, &mu_d).probs().to_vec()).collect();
        let mut nu = vec![0.0; na];
        for x in 0..nx {
            for u in 0..na {
                nu[u] += mu[x] * rows[x][u];
            }
        }
        let nu_d = ActionDistribution::new(nu).unwrap();
        let mut next = vec![0.0; nx];
        let mut r = vec![vec![0.0; na]; nx];
        let mut c = vec![vec![0.0; na]; nx];
        let mut k = vec![vec![vec![]; na]; nx];
        for x in 0..nx {
            for u in 0..na {
                r[x][u] = env.reward(x, u, &mu_d, &nu_d);
                c[x][u] = env.cost(x, u, &mu_d, &nu_d);
                let p = env.transition(x, u, &mu_d, &nu_d).probs().to_vec();
                for y in 0..nx {
                    next[y] += mu[x] * rows[x][u] * p[y];
                }
                k[x][u] = p;
            }
        }
        tables.mu.push(mu);
        tables.pi.push(rows);
        tables.reward.push(r);
        tables.cost.push(c);
        tables.kernel.push(k);
        mu = next;
    }
    tables
}

/// `Q_0(x, u)` and `V_0(x)` for one payoff table by backward recursion.
pub fn q_and_v(tables: &PathTables, payoff: &[Vec<Vec<f64>>], gamma: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let horizon = tables.mu.len();
    let nx = tables.mu[0].len();
    let na = tables.pi[0][0].len();
    let mut v_next = vec![0.0; nx];
    let mut q = vec![vec![0.0; na]; nx];
    for t in (0..horizon).rev() {
        for x in 0..nx {
            for u in 0..na {
                let cont: f64 = (0..nx).map(|y| tables.kernel[t][x][u][y] * v_next[y]).sum();
                q[x][u] = payoff[t][x][u] + gamma * cont;
            }
        }
        v_next = (0..nx).map(|x| (0..na).map(|u| tables.pi[t][x][u] * q[x][u]).sum()).collect();
    }
    (q, v_next)
}

/// `(1 - gamma) sum_t gamma^t mu_t(x) pi_t(u | x)`, flattened as `x * na + u`.
pub fn occupancy(tables: &PathTables, gamma: f64) -> Vec<f64> {
    let nx = tables.mu[0].len();
    let na = tables.pi[0][0].len();
    let mut d = vec![0.0; nx * na];
    let mut disc = 1.0 - gamma;
    for t in 0..tables.mu.len() {
        for x in 0..nx {
            for u in 0..na {
                d[x * na + u] += disc * tables.mu[t][x] * tables.pi[t][x][u];
            }
        }
        disc *= gamma;
    }
    d
}

pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
