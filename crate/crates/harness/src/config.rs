//! Experiment configuration.
//!
//! A TOML file with `[env]`, `[solver]`, `[eval]`, `[output]` and optional
//! `[bounds]` sections. Every section has defaults reproducing the firms
//! experiment, so an empty file is a valid configuration. Unknown keys are
//! rejected.
//!
//! ```toml
//! seed = 0
//!
//! [env]
//! kind = "firms"       # or "congestion"
//! q = 10
//!
//! [solver]
//! eta1 = 1e-3
//! outer_iters = 100
//!
//! [eval]
//! n_grid = [50, 100, 200, 500, 1000]
//! seeds = [0, 1, 2]
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use mfc_core::envmodel::{
    congestion_env, firms_env, CongestionEnvConfig, EnvConstants, Environment, FirmsEnvConfig,
};
use mfc_core::meanfield::DEFAULT_TOL;
use mfc_core::nagent::DEFAULT_EPISODES;
use mfc_core::npgpd::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, IoContext, Result};

/// Seeds evaluated by default, and in fast mode.
pub const DEFAULT_SEED_COUNT: u64 = 25;
pub const FAST_SEED_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSection {
    Firms(FirmsEnvConfig),
    Congestion(CongestionEnvConfig),
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection::Firms(FirmsEnvConfig::default())
    }
}

impl EnvSection {
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvSection::Firms(c) => Box::new(firms_env(*c)?),
            EnvSection::Congestion(c) => Box::new(congestion_env(*c)?),
        })
    }
}

fn default_n_grid() -> Vec<usize> {
    vec![50, 100, 200, 500, 1000]
}

fn default_seeds() -> Vec<u64> {
    (0..DEFAULT_SEED_COUNT).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Population sizes, ascending.
    pub n_grid: Vec<usize>,
    /// Monte Carlo episodes per `(seed, N)` cell.
    pub episodes: usize,
    /// Truncation tolerance for discounted sums.
    pub tol: f64,
    pub seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { n_grid: default_n_grid(), episodes: DEFAULT_EPISODES, tol: DEFAULT_TOL, seeds: default_seeds() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Save `Phi_j` every this many outer iterations; 0 disables.
    pub checkpoint_stride: usize,
    /// Write measured wall-clock times. Off by default so that artifacts are
    /// byte-reproducible.
    pub record_timing: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), checkpoint_stride: 10, record_timing: false }
    }
}

/// Inputs to the approximation widths that are not implied by the rest of
/// the config. Any environment constant given here replaces the declared one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub n_agents: usize,
    pub zeta0: f64,
    pub zeta1: Option<f64>,
    pub constants: Option<EnvConstants>,
    /// Policy Lipschitz constant; defaults to that of the trained policy,
    /// or of the initial policy before training.
    pub l_q: Option<f64>,
    pub gamma: Option<f64>,
    pub n_states: Option<usize>,
    pub n_actions: Option<usize>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            n_agents: 1000,
            zeta0: -1.0,
            zeta1: None,
            constants: None,
            l_q: None,
            gamma: None,
            n_states: None,
            n_actions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed for every random stream.
    pub seed: u64,
    pub env: EnvSection,
    pub solver: SolverConfig,
    pub eval: EvalSection,
    pub output: OutputSection,
    pub bounds: BoundsSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let cfg = Self::from_toml_str(&text)
            .map_err(|source| HarnessError::Config { path: path.to_path_buf(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Invalid(m.into()));
        self.solver.validate()?;
        let grid = &self.eval.n_grid;
        if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("eval.n_grid must be nonempty, positive and strictly ascending");
        }
        if self.eval.seeds.is_empty() {
            return bad("eval.seeds must be nonempty");
        }
        let mut seeds = self.eval.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return bad("eval.seeds contains duplicates");
        }
        if self.eval.episodes == 0 {
            return bad("eval.episodes must be at least 1");
        }
        if !(self.eval.tol > 0.0) {
            return bad("eval.tol must be positive");
        }
        self.env.build()?;
        Ok(())
    }

    /// Keeps only the first few evaluation seeds.
    pub fn fast(mut self) -> Self {
        self.eval.seeds.truncate(FAST_SEED_COUNT);
        self
    }
}
