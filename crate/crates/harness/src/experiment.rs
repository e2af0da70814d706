//! Training, evaluation, bounds and invariant runs, each writing its
//! artifacts under the output directory.
//!
//! Artifacts:
//!
//! * `trace.csv`: one row per outer iteration,
//!   `iter,lambda,w_l1,v_hat_c,v_inf_r,v_inf_c,wall_s`;
//! * `policy.txt` and `checkpoints/phi_NNNN.txt`: policy parameters;
//! * `results.csv`: one row per `(seed, N)`,
//!   `seed,N,v_N_r,v_N_c,v_inf_r,v_inf_c,error_pct,zeta,runtime_s,error_is_absolute`;
//! * `bounds.json`: approximation widths and their inputs;
//! * `invariants.json`: Lipschitz and concentration suite results.
//!
//! When `v_inf_r` is within `1e-9` of zero the relative error is undefined;
//! `error_pct` then holds the absolute difference and `error_is_absolute` is
//! `true`. Timing columns are zero unless `output.record_timing` is set.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mfc_core::bounds::{compute_bounds, BoundInputs, BoundOutputs};
use mfc_core::checks::{concentration_suite, lipschitz_suite, ConcentrationSuite, LipschitzSuite};
use mfc_core::envmodel::Environment;
use mfc_core::meanfield::mf_values;
use mfc_core::nagent::{estimate_values, sample_initial_joint_state};
use mfc_core::npgpd::{solve, SolverConfig, SolverTrace};
use mfc_core::policy::{Policy, PolicyParams};
use mfc_core::rng::derived_stream;
use mfc_core::simplex::StateDistribution;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, IoContext, Result};

pub const TRACE_FILE: &str = "trace.csv";
pub const POLICY_FILE: &str = "policy.txt";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const RESULTS_FILE: &str = "results.csv";
pub const BOUNDS_FILE: &str = "bounds.json";
pub const INVARIANTS_FILE: &str = "invariants.json";

pub const TRACE_HEADER: [&str; 7] = ["iter", "lambda", "w_l1", "v_hat_c", "v_inf_r", "v_inf_c", "wall_s"];
pub const RESULTS_HEADER: [&str; 10] = [
    "seed",
    "N",
    "v_N_r",
    "v_N_c",
    "v_inf_r",
    "v_inf_c",
    "error_pct",
    "zeta",
    "runtime_s",
    "error_is_absolute",
];

/// `|v_inf_r|` below this switches `error_pct` to an absolute difference.
pub const ZERO_VALUE_THRESHOLD: f64 = 1e-9;

/// Lipschitz-suite trials and concentration steps used by `invariants`.
pub const LIPSCHITZ_TRIALS: usize = 10_000;
pub const CONCENTRATION_STEPS: usize = 200;
pub const CONCENTRATION_GRID: [usize; 3] = [10, 100, 1000];

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).at(dir)
}

/// Initial distribution: uniform over states.
pub fn initial_distribution(env: &dyn Environment) -> StateDistribution {
    StateDistribution::uniform(env.n_states())
}

/// Solver config after optional constraint tightening.
pub fn effective_solver_config(cfg: &ExperimentConfig, env: &dyn Environment) -> Result<SolverConfig> {
    if !cfg.solver.tighten_with_bounds {
        return Ok(cfg.solver.clone());
    }
    // the tightening must hold for every admissible policy, so use the
    // Lipschitz constant of the whole norm-bounded class
    let l_q = cfg.solver.norm_bound;
    let inputs = bound_inputs(cfg, env, l_q);
    Ok(cfg.solver.with_tightened_zeta(&inputs)?)
}

fn bound_inputs(cfg: &ExperimentConfig, env: &dyn Environment, policy_l_q: f64) -> BoundInputs {
    let b = &cfg.bounds;
    let k = b.constants.unwrap_or_else(|| env.constants());
    let mut inputs = BoundInputs::from_env(
        &k,
        b.l_q.unwrap_or(policy_l_q),
        b.gamma.unwrap_or(cfg.solver.gamma),
        b.n_agents,
        b.n_states.unwrap_or(env.n_states()),
        b.n_actions.unwrap_or(env.n_actions()),
        b.zeta0,
    );
    inputs.zeta1 = b.zeta1;
    inputs
}

fn fmt(v: f64) -> String {
    // Display never uses exponent notation and round-trips exactly
    format!("{v}")
}

/// Trains on the mean-field system and writes the trace, checkpoints and
/// final policy.
pub fn run_train(cfg: &ExperimentConfig) -> Result<SolverTrace> {
    let env = cfg.env.build()?;
    let solver = effective_solver_config(cfg, env.as_ref())?;
    let mu0 = initial_distribution(env.as_ref());
    let mut rng = derived_stream(cfg.seed, "train", &[]);
    let trace = solve(&solver, env.as_ref(), &mu0, &mut rng)?;

    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let path = dir.join(TRACE_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        let wall = if cfg.output.record_timing { r.wall_s } else { 0.0 };
        w.write_record([r.iter.to_string(), fmt(r.lambda), fmt(r.w_l1), fmt(r.v_hat_c), fmt(r.v_inf_r), fmt(r.v_inf_c), fmt(wall)])?;
    }
    w.flush().at(&path)?;

    let stride = cfg.output.checkpoint_stride;
    if stride > 0 {
        let ck = dir.join(CHECKPOINT_DIR);
        ensure_dir(&ck)?;
        for (j, phi) in trace.policies.iter().enumerate() {
            let iter = j + 1;
            if iter % stride == 0 || iter == trace.policies.len() {
                phi.save(&ck.join(format!("phi_{iter:04}.txt")))?;
            }
        }
    }
    trace.final_policy().save(&dir.join(POLICY_FILE))?;
    Ok(trace)
}

pub fn policy_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output.dir.join(POLICY_FILE)
}

pub fn load_policy(cfg: &ExperimentConfig) -> Result<PolicyParams> {
    let path = policy_path(cfg);
    if !path.exists() {
        return Err(HarnessError::MissingPolicy(path));
    }
    Ok(PolicyParams::load(&path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub v_n_r: f64,
    pub v_n_c: f64,
    pub v_inf_r: f64,
    pub v_inf_c: f64,
    pub error_pct: f64,
    pub zeta: f64,
    pub runtime_s: f64,
    pub error_is_absolute: bool,
}

impl ResultRow {
    fn record(&self) -> [String; 10] {
        [
            self.seed.to_string(),
            self.n.to_string(),
            fmt(self.v_n_r),
            fmt(self.v_n_c),
            fmt(self.v_inf_r),
            fmt(self.v_inf_c),
            fmt(self.error_pct),
            fmt(self.zeta),
            fmt(self.runtime_s),
            self.error_is_absolute.to_string(),
        ]
    }
}

/// `|v_n - v_inf| / |v_inf| * 100`, or the absolute difference when `v_inf`
/// is numerically zero.
pub fn error_pct(v_n: f64, v_inf: f64) -> (f64, bool) {
    if v_inf.abs() <= ZERO_VALUE_THRESHOLD {
        ((v_n - v_inf).abs(), true)
    } else {
        (((v_n - v_inf) / v_inf).abs() * 100.0, false)
    }
}

/// Evaluates `pi` on every `(seed, N)` cell against its mean-field values.
///
/// Each cell draws its initial population and episodes from a stream derived
/// from `(master seed, seed, N)`, so cells are independent of each other and
/// of the grid they belong to. Rows are sorted by `(seed, N)`.
pub fn evaluate_policy<P: Policy>(cfg: &ExperimentConfig, env: &dyn Environment, pi: &P, zeta: f64) -> Result<Vec<ResultRow>> {
    let mu0 = initial_distribution(env);
    let gamma = cfg.solver.gamma;
    let mf = mf_values(&mu0, pi, env, gamma, cfg.eval.tol)?;
    let mut cells: Vec<(u64, usize)> =
        cfg.eval.seeds.iter().flat_map(|&s| cfg.eval.n_grid.iter().map(move |&n| (s, n))).collect();
    cells.sort_unstable();
    cells
        .par_iter()
        .map(|&(seed, n)| {
            let start = Instant::now();
            let mut rng = derived_stream(cfg.seed, "eval", &[seed, n as u64]);
            let x0 = sample_initial_joint_state(&mu0, n, &mut rng)?;
            let est = estimate_values(&x0, pi, env, gamma, cfg.eval.episodes, cfg.eval.tol, &mut rng)?;
            let (error_pct, error_is_absolute) = error_pct(est.v_r, mf.v_r);
            let runtime_s = if cfg.output.record_timing { start.elapsed().as_secs_f64() } else { 0.0 };
            Ok(ResultRow {
                seed,
                n,
                v_n_r: est.v_r,
                v_n_c: est.v_c,
                v_inf_r: mf.v_r,
                v_inf_c: mf.v_c,
                error_pct,
                zeta,
                runtime_s,
                error_is_absolute,
            })
        })
        .collect()
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush().at(path)
}

/// Evaluates the trained policy and writes `results.csv`.
pub fn run_eval(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let env = cfg.env.build()?;
    let pi = load_policy(cfg)?;
    if pi.n_states() != env.n_states() || pi.n_actions() != env.n_actions() {
        return Err(HarnessError::Invalid(format!(
            "policy is for {}x{} but env is {}x{}",
            pi.n_states(),
            pi.n_actions(),
            env.n_states(),
            env.n_actions()
        )));
    }
    let zeta = effective_solver_config(cfg, env.as_ref())?.zeta;
    let rows = evaluate_policy(cfg, env.as_ref(), &pi, zeta)?;
    ensure_dir(&cfg.output.dir)?;
    write_results(&cfg.output.dir.join(RESULTS_FILE), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub inputs: BoundInputs,
    #[serde(flatten)]
    pub outputs: BoundOutputs,
}

/// Computes the approximation widths and writes `bounds.json`.
///
/// The policy Lipschitz constant comes from `bounds.l_q`, else the trained
/// policy if one exists, else the initial policy.
pub fn run_bounds(cfg: &ExperimentConfig) -> Result<BoundsReport> {
    let env = cfg.env.build()?;
    let l_q = match load_policy(cfg) {
        Ok(pi) => pi.lipschitz_constant(),
        Err(HarnessError::MissingPolicy(_)) => match &cfg.solver.phi0 {
            Some(v) => PolicyParams::from_vec(env.n_states(), env.n_actions(), v.clone())?.lipschitz_constant(),
            None => 0.0,
        },
        Err(e) => return Err(e),
    };
    let inputs = bound_inputs(cfg, env.as_ref(), l_q);
    let report = BoundsReport { inputs, outputs: compute_bounds(&inputs)? };
    ensure_dir(&cfg.output.dir)?;
    let path = cfg.output.dir.join(BOUNDS_FILE);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text).at(&path)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantsReport {
    pub lipschitz: LipschitzSuite,
    pub concentration: Vec<ConcentrationSuite>,
}

impl InvariantsReport {
    pub fn holds(&self) -> bool {
        self.lipschitz.holds() && self.concentration.iter().all(ConcentrationSuite::holds)
    }
}

/// Runs the Lipschitz suite over random softmax policies and the
/// concentration suite under the trained policy (uniform if untrained), and
/// writes `invariants.json`.
pub fn run_invariants(cfg: &ExperimentConfig) -> Result<InvariantsReport> {
    let env = cfg.env.build()?;
    let env = env.as_ref();
    let pi = match load_policy(cfg) {
        Ok(pi) => pi,
        Err(HarnessError::MissingPolicy(_)) => PolicyParams::zeros(env.n_states(), env.n_actions()),
        Err(e) => return Err(e),
    };
    let mu0 = initial_distribution(env);
    let lipschitz = lipschitz_suite(env, LIPSCHITZ_TRIALS, 3.0, &mut derived_stream(cfg.seed, "lipschitz", &[]))?;
    let concentration = CONCENTRATION_GRID
        .par_iter()
        .map(|&n| {
            let mut rng = derived_stream(cfg.seed, "concentration", &[n as u64]);
            concentration_suite(env, &pi, &mu0, n, CONCENTRATION_STEPS, &mut rng)
        })
        .collect::<mfc_core::Result<Vec<_>>>()?;
    let report = InvariantsReport { lipschitz, concentration };
    ensure_dir(&cfg.output.dir)?;
    let path = cfg.output.dir.join(INVARIANTS_FILE);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text).at(&path)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct AllReport {
    pub trace: SolverTrace,
    pub rows: Vec<ResultRow>,
    pub bounds: BoundsReport,
    pub invariants: InvariantsReport,
}

/// Train, evaluate, bounds and invariants in sequence.
pub fn run_all(cfg: &ExperimentConfig) -> Result<AllReport> {
    let trace = run_train(cfg)?;
    let rows = run_eval(cfg)?;
    let bounds = run_bounds(cfg)?;
    let invariants = run_invariants(cfg)?;
    Ok(AllReport { trace, rows, bounds, invariants })
}
