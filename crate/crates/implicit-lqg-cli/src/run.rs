//! Subcommand drivers.

use std::path::Path;
use std::time::Instant;

use implicit_lqg::coordination::Policy;
use implicit_lqg::power::{
    costate_z, heuristic_schedule, scalar_backward_solve, scalar_constants, ua_optimize, Mdp, PowerSchedule,
    ScalarOptions,
};
use implicit_lqg::sim::{monte_carlo, AggregateReport, Scenario, Target};

use crate::config::{Experiment, PolicyName, PolicySpec};
use crate::output::{self, float, OptimizerInfo, Summary};
use crate::CliError;

/// A power schedule together with how it was found.
pub struct DesignedSchedule {
    pub schedule: PowerSchedule,
    pub info: OptimizerInfo,
}

/// Heuristic schedule, or the optimized one when `optimize` is set.
pub fn design_schedule(scenario: &Scenario, spec: &PolicySpec, optimize: bool) -> Result<DesignedSchedule, CliError> {
    let m = &scenario.model;
    let ch = scenario.channel()?;
    let heu = heuristic_schedule(spec.theta, m.n, ch.lambda_dim())?;
    if !optimize {
        return Ok(DesignedSchedule {
            schedule: heu,
            info: OptimizerInfo {
                method: "heuristic",
                evaluations: None,
                budget: None,
                exhausted: None,
                max_residual: None,
                terminal_costate: None,
            },
        });
    }
    let mdp = Mdp::new(m, &scenario.gains, ch)?;
    if ch.is_fully_actuated() {
        let consts = scalar_constants(&mdp)?;
        let sol = scalar_backward_solve(
            &consts,
            &costate_z(&scenario.gains, m),
            &ScalarOptions::with_epsilon(spec.epsilon),
        )?;
        Ok(DesignedSchedule {
            info: OptimizerInfo {
                method: "scalar",
                evaluations: None,
                budget: None,
                exhausted: None,
                max_residual: Some(sol.max_residual()),
                terminal_costate: Some(sol.terminal_costate),
            },
            schedule: sol.schedule,
        })
    } else {
        let out = ua_optimize(&heu, &mdp, spec.budget)?;
        Ok(DesignedSchedule {
            schedule: out.schedule,
            info: OptimizerInfo {
                method: "coordinate-search",
                evaluations: Some(out.evaluations),
                budget: Some(spec.budget),
                exhausted: Some(out.exhausted),
                max_residual: None,
                terminal_costate: None,
            },
        })
    }
}

struct Built {
    policy: Policy,
    designed: Option<DesignedSchedule>,
}

fn build(scenario: &Scenario, name: PolicyName, spec: &PolicySpec) -> Result<Built, CliError> {
    let policy = match name {
        PolicyName::ExComm => Policy::ExComm,
        PolicyName::LeaderOnly => Policy::LeaderOnly,
        PolicyName::NoComm => Policy::NoComm,
        PolicyName::ImCommHeuristic | PolicyName::ImCommOpt => {
            let designed = design_schedule(scenario, spec, name == PolicyName::ImCommOpt)?;
            let policy = Policy::im_comm(scenario.channel()?, designed.schedule.clone());
            return Ok(Built {
                policy,
                designed: Some(designed),
            });
        }
    };
    Ok(Built { policy, designed: None })
}

fn evaluate(exp: &Experiment, scenario: &Scenario, name: PolicyName) -> Result<(AggregateReport, Summary), CliError> {
    let start = Instant::now();
    let built = build(scenario, name, &exp.config.policy)?;
    let mut report = monte_carlo(&built.policy, scenario, &exp.target, exp.config.runs, exp.config.seed)?;
    report.policy = name.to_string();
    let analytic = match &built.designed {
        Some(d) if matches!(exp.target, Target::Sampled) => Some(Mdp::new(&scenario.model, &scenario.gains, scenario.channel()?)?.expected_cost(&d.schedule)?),
        _ => None,
    };
    let summary = Summary {
        policy: report.policy.clone(),
        runs: report.runs,
        mean_total_cost: report.mean_total_cost,
        std_total_cost: report.std_total_cost,
        achieved_terminal_ratio: report.mean_sigma_traces[report.horizon()] / scenario.model.sigma0.trace(),
        wall_time_s: start.elapsed().as_secs_f64(),
        analytic_expected_cost: analytic,
        optimizer: built.designed.map(|d| d.info),
    };
    Ok((report, summary))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

/// Simulate one policy and write `aggregate.csv`, `series.csv`, `plot.csv`,
/// `summary.json` and the resolved `config.json`.
pub fn simulate(exp: &Experiment) -> Result<Summary, CliError> {
    let scenario = Scenario::new(exp.model.clone())?;
    let (report, summary) = evaluate(exp, &scenario, exp.config.policy.name)?;
    let out = &exp.config.out;
    prepare_out(out)?;
    output::write(out, "config.json", &exp.config.to_json())?;
    output::write(out, "aggregate.csv", &output::aggregate_csv(std::slice::from_ref(&report)))?;
    output::write(out, "series.csv", &output::series_csv(&report))?;
    output::write(out, "plot.csv", &output::emit_plot_series(std::slice::from_ref(&report))?)?;
    output::write(out, "summary.json", &output::json(&summary))?;
    Ok(summary)
}

/// Simulate every policy in `config.policies` on shared seeds.
pub fn compare(exp: &Experiment) -> Result<Vec<Summary>, CliError> {
    let scenario = Scenario::new(exp.model.clone())?;
    let mut reports = Vec::new();
    let mut summaries = Vec::new();
    for &name in &exp.config.policies {
        let (r, s) = evaluate(exp, &scenario, name)?;
        reports.push(r);
        summaries.push(s);
    }
    let out = &exp.config.out;
    prepare_out(out)?;
    output::write(out, "config.json", &exp.config.to_json())?;
    output::write(out, "aggregate.csv", &output::aggregate_csv(&reports))?;
    for r in &reports {
        output::write(out, &format!("series-{}.csv", r.policy), &output::series_csv(r))?;
    }
    output::write(out, "plot.csv", &output::emit_plot_series(&reports)?)?;
    output::write(out, "summary.json", &output::json(&summaries))?;
    Ok(summaries)
}

/// Write the tracking gains as `gains.csv` in long format.
pub fn gains(exp: &Experiment) -> Result<(), CliError> {
    let scenario = Scenario::new(exp.model.clone())?;
    let g = &scenario.gains;
    let mut text = String::from("t,matrix,row,col,value\n");
    let mut push = |t: usize, name: &str, m: &implicit_lqg::matcore::Mat| {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                text.push_str(&format!("{t},{name},{i},{j},{}\n", float(m[(i, j)])));
            }
        }
    };
    for t in 0..=exp.model.n {
        if t < exp.model.n {
            push(t, "K", &g.k[t]);
            push(t, "D", &g.d[t]);
        }
        push(t, "Phi", &g.phi[t]);
        push(t, "Dbar", &g.dbar[t]);
    }
    prepare_out(&exp.config.out)?;
    output::write(&exp.config.out, "gains.csv", &text)
}

/// Solve for the optimized schedule and write `schedule.csv` and `power.json`.
pub fn optimize_power(exp: &Experiment) -> Result<PowerReport, CliError> {
    let scenario = Scenario::new(exp.model.clone())?;
    let start = Instant::now();
    let designed = design_schedule(&scenario, &exp.config.policy, true)?;
    let ch = scenario.channel()?;
    let mdp = Mdp::new(&scenario.model, &scenario.gains, ch)?;
    let roll = mdp.rollout(&designed.schedule)?;
    let traces = roll.sigma_traces();
    let heu = heuristic_schedule(exp.config.policy.theta, exp.model.n, ch.lambda_dim())?;
    let report = PowerReport {
        expected_cost: mdp.expected_cost(&designed.schedule)?,
        heuristic_expected_cost: mdp.expected_cost(&heu)?,
        achieved_terminal_ratio: traces[exp.model.n] / traces[0],
        wall_time_s: start.elapsed().as_secs_f64(),
        optimizer: designed.info,
    };
    let s = &designed.schedule;
    let dim = ch.lambda_dim();
    let mut header = vec!["t".to_string(), "a".into(), "b".into()];
    header.extend((0..dim).map(|j| format!("lambda_{j}")));
    let mut text = header.join(",") + "\n";
    for t in 0..s.horizon() {
        let mut row = vec![
            t.to_string(),
            s.a.get(t).map_or(String::new(), |&a| float(a)),
            s.b.get(t).map_or(String::new(), |&b| float(b)),
        ];
        row.extend(s.lambda[t].iter().map(|&l| float(l)));
        text += &(row.join(",") + "\n");
    }
    prepare_out(&exp.config.out)?;
    output::write(&exp.config.out, "schedule.csv", &text)?;
    output::write(&exp.config.out, "power.json", &output::json(&report))?;
    Ok(report)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PowerReport {
    pub expected_cost: f64,
    pub heuristic_expected_cost: f64,
    pub achieved_terminal_ratio: f64,
    pub wall_time_s: f64,
    pub optimizer: OptimizerInfo,
}
