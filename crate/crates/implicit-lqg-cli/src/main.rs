use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use implicit_lqg_cli::config::{load_config, Experiment, ExperimentConfig, PolicyName, SystemSpec, TargetSpec};
use implicit_lqg_cli::{run, CliError};

#[derive(Parser)]
#[command(name = "implicit-lqg", version, about = "Leader-follower tracking with implicit target signalling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the tracking gains
    Gains(Common),
    /// Monte Carlo evaluation of one policy
    Simulate(Common),
    /// Solve for a power schedule and write it
    OptimizePower(Common),
    /// Monte Carlo evaluation of several policies on shared seeds
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment file; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// fully-actuated-vi-a or under-actuated-vi-b
    #[arg(long)]
    preset: Option<String>,
    /// Policy name; for `compare`, a comma-separated list
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ratio of the geometric heuristic schedule
    #[arg(long)]
    theta: Option<f64>,
    /// Terminal covariance ratio for the scalar solver
    #[arg(long)]
    epsilon: Option<f64>,
    /// Cost evaluations allowed to the coordinate search
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated target vector, or `sampled`
    #[arg(long)]
    target: Option<String>,
}

impl Common {
    fn experiment(&self, compare: bool) -> Result<Experiment, CliError> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?.config,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.preset {
            cfg.system = SystemSpec::Preset { preset: p.clone() };
        }
        if let Some(p) = &self.policy {
            let names = p
                .split(',')
                .map(|s| s.trim().parse::<PolicyName>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::validation("policy", e))?;
            if compare {
                cfg.policies = names;
            } else if let [one] = names[..] {
                cfg.policy.name = one;
            } else {
                return Err(CliError::validation("policy", "simulate takes a single policy"));
            }
        }
        cfg.runs = self.runs.unwrap_or(cfg.runs);
        cfg.horizon = self.horizon.or(cfg.horizon);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.policy.theta = self.theta.unwrap_or(cfg.policy.theta);
        cfg.policy.epsilon = self.epsilon.unwrap_or(cfg.policy.epsilon);
        cfg.policy.budget = self.budget.unwrap_or(cfg.policy.budget);
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(t) = &self.target {
            cfg.target = Some(t.parse::<TargetSpec>().map_err(|e| CliError::validation("target", e))?);
        }
        cfg.resolve()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gains(c) => c.experiment(false).and_then(|e| run::gains(&e)),
        Command::Simulate(c) => c.experiment(false).and_then(|e| {
            let s = run::simulate(&e)?;
            println!(
                "{}: mean cost {:.4} (sd {:.4}) over {} runs",
                s.policy, s.mean_total_cost, s.std_total_cost, s.runs
            );
            Ok(())
        }),
        Command::OptimizePower(c) => c.experiment(false).and_then(|e| {
            let r = run::optimize_power(&e)?;
            println!(
                "{}: expected cost {:.4} (heuristic {:.4}), terminal ratio {:.3e}",
                r.optimizer.method, r.expected_cost, r.heuristic_expected_cost, r.achieved_terminal_ratio
            );
            Ok(())
        }),
        Command::Compare(c) => c.experiment(true).and_then(|e| {
            for s in run::compare(&e)? {
                println!("{:<18} {:>12.4} {:>10.4}", s.policy, s.mean_total_cost, s.std_total_cost);
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
