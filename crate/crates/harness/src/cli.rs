//! Command-line interface.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::experiment::{run_all, run_bounds, run_eval, run_invariants, run_train, InvariantsReport, ResultRow};

#[derive(Debug, Parser)]
#[command(name = "harness", about = "Train, evaluate and check constrained mean-field control policies")]
pub struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Evaluate on five seeds only.
    #[arg(long, global = true)]
    pub fast: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train on the mean-field system; writes trace.csv and the policy.
    Train,
    /// Evaluate the trained policy over the population grid; writes results.csv.
    Eval,
    /// Compute approximation widths; writes bounds.json.
    Bounds,
    /// Run the Lipschitz and concentration suites; writes invariants.json.
    Invariants,
    /// All of the above, in order.
    All,
}

impl Cli {
    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if self.fast {
            cfg = cfg.fast();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summarize_rows(rows: &[ResultRow]) -> String {
    let mut grid: Vec<usize> = rows.iter().map(|r| r.n).collect();
    grid.dedup();
    grid.sort_unstable();
    grid.dedup();
    let mut out = String::new();
    for n in grid {
        let errs: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.error_pct).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        out.push_str(&format!("N={n:<6} mean error_pct {mean:.4} over {} seeds\n", errs.len()));
    }
    out
}

fn summarize_invariants(rep: &InvariantsReport) -> String {
    let mut out = format!("lipschitz suite ({} trials): {}\n", rep.lipschitz.trials, verdict(rep.lipschitz.holds()));
    for c in &rep.concentration {
        out.push_str(&format!("concentration N={}: {}\n", c.n_agents, verdict(c.holds())));
    }
    out
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "holds"
    } else {
        "VIOLATED"
    }
}

/// Runs a parsed command line and returns the text to print.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = cli.experiment_config()?;
    let dir = cfg.output.dir.display().to_string();
    Ok(match cli.command {
        Command::Train => {
            let t = run_train(&cfg)?;
            format!("trained {} iterations; final lambda {}; wrote {dir}\n", t.records.len(), t.final_lambda())
        }
        Command::Eval => summarize_rows(&run_eval(&cfg)?),
        Command::Bounds => {
            let b = run_bounds(&cfg)?;
            let mut s = serde_json::to_string_pretty(&b)?;
            s.push('\n');
            s
        }
        Command::Invariants => summarize_invariants(&run_invariants(&cfg)?),
        Command::All => {
            let all = run_all(&cfg)?;
            let mut s = format!("trained {} iterations\n", all.trace.records.len());
            s.push_str(&summarize_rows(&all.rows));
            s.push_str(&format!("contraction_ok: {}\n", all.bounds.outputs.contraction_ok));
            s.push_str(&summarize_invariants(&all.invariants));
            s.push_str(&format!("wrote {dir}\n"));
            s
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_anywhere() {
        let cli = Cli::try_parse_from(["harness", "all", "--seed", "7", "--fast", "--out", "x"]).unwrap();
        assert_eq!(cli.command, Command::All);
        let cfg = cli.experiment_config().unwrap();
        assert_eq!((cfg.seed, cfg.eval.seeds.len()), (7, 5));
        assert_eq!(cfg.output.dir, PathBuf::from("x"));
        assert!(Cli::try_parse_from(["harness", "--seed", "3", "bounds"]).is_ok());
        assert!(Cli::try_parse_from(["harness", "plot"]).is_err());
    }
}
