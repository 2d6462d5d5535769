//! Derivative-free search over power schedules.
//!
//! Coordinate descent on the log of every power entry with a fixed set of
//! multiplicative steps. Used when the leader is under-actuated and no scalar
//! reduction exists, but it accepts any channel.

use crate::error::{Error, Result};

use super::mdp::{Mdp, MdpState};
use super::PowerSchedule;

/// Multiplicative steps tried in both directions for every coordinate.
pub const STEP_FACTORS: [f64; 4] = [4.0, 2.0, 1.25, 1.06];

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub schedule: PowerSchedule,
    /// Recursion cost of `schedule`, without the dropped constant.
    pub cost: f64,
    pub initial_cost: f64,
    pub evaluations: usize,
    /// True when the evaluation budget ran out before a sweep without improvement.
    pub exhausted: bool,
}

/// Rollout cache that re-evaluates only the suffix after a changed step.
struct Cache {
    states: Vec<MdpState>,
    /// `prefix[t]` is the summed stage cost of steps `0..t`.
    prefix: Vec<f64>,
}

impl Cache {
    fn build(mdp: &Mdp, schedule: &PowerSchedule) -> Result<(Self, f64)> {
        let mut states = vec![mdp.initial_state()?];
        let mut prefix = vec![0.0];
        for (t, lambda) in schedule.lambda.iter().enumerate() {
            let (c, next) = mdp.advance(&states[t], lambda, t)?;
            prefix.push(prefix[t] + c);
            states.push(next);
        }
        let total = prefix[mdp.horizon()] + mdp.terminal_cost(&states[mdp.horizon()]);
        Ok((Self { states, prefix }, total))
    }

    fn cost_from(&self, mdp: &Mdp, schedule: &PowerSchedule, t0: usize) -> Result<f64> {
        let mut state = self.states[t0].clone();
        let mut total = self.prefix[t0];
        for t in t0..mdp.horizon() {
            let (c, next) = mdp.advance(&state, &schedule.lambda[t], t)?;
            total += c;
            state = next;
        }
        Ok(total + mdp.terminal_cost(&state))
    }
}

/// Minimize the recursion cost from `init` within `budget` rollouts.
pub fn ua_optimize(init: &PowerSchedule, mdp: &Mdp, budget: usize) -> Result<SearchOutcome> {
    if let Some(v) = init.lambda.iter().flat_map(|l| l.iter()).find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "search starts from positive power entries, found {v}"
        )));
    }
    let mut best = PowerSchedule::full(init.lambda.clone());
    let (mut cache, initial_cost) = Cache::build(mdp, &best)?;
    let mut cost = initial_cost;
    let mut evaluations = 1;
    let mut exhausted = false;
    'sweeps: loop {
        let mut improved = false;
        for t in 0..best.horizon() {
            for j in 0..best.lambda[t].len() {
                let base = best.lambda[t][j];
                let mut pick: Option<(f64, f64)> = None;
                for f in STEP_FACTORS.iter().flat_map(|&f| [f, 1.0 / f]) {
                    if evaluations >= budget {
                        exhausted = true;
                        if let Some((v, _)) = pick {
                            best.lambda[t][j] = v;
                            cost = pick.map_or(cost, |(_, c)| c);
                        }
                        break 'sweeps;
                    }
                    let mut trial = best.clone();
                    trial.lambda[t][j] = base * f;
                    let c = cache.cost_from(mdp, &trial, t)?;
                    evaluations += 1;
                    if c < pick.map_or(cost, |(_, pc)| pc) {
                        pick = Some((base * f, c));
                    }
                }
                if let Some((v, c)) = pick {
                    best.lambda[t][j] = v;
                    cost = c;
                    improved = true;
                    cache = Cache::build(mdp, &best)?.0;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(SearchOutcome {
        schedule: best,
        cost,
        initial_cost,
        evaluations,
        exhausted,
    })
}
