//! Seeded Monte Carlo rollouts and their aggregation.
//!
//! Each run draws from its own ChaCha8 generator seeded by a SplitMix64 mix
//! of the master seed and the run index. Normal variates use the ziggurat
//! sampler of `rand_distr`. Stream 0 supplies `x_0` and then `w_0 .. w_{n-1}`;
//! stream 1 supplies a sampled target.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::ChannelSetup;
use crate::coordination::{baseline_inputs, Coordinator, Policy};
use crate::error::{Error, Result};
use crate::gains::{self, GainSchedule};
use crate::matcore::{self, Mat, Vector};
use crate::model::SystemModel;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `index` under `master`.
pub fn run_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Reproducible standard normal vectors.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn standard(&mut self, dim: usize) -> Vector {
        Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut self.rng))
    }

    /// A draw from `N(0, factor factor^T)`.
    pub fn shaped(&mut self, factor: &Mat) -> Vector {
        let z = self.standard(factor.ncols());
        factor * z
    }
}

/// Factor `L` with `L L^T = cov`: Cholesky when it exists, the symmetric root otherwise.
pub fn covariance_factor(cov: &Mat) -> Result<Mat> {
    match matcore::symmetrize(cov).cholesky() {
        Some(c) => Ok(c.l()),
        None => matcore::psd_sqrt(cov),
    }
}

/// A model together with every schedule a policy might need.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: SystemModel,
    pub gains: GainSchedule,
    /// Present when `(A, B1)` is controllable.
    pub leader_gains: Option<GainSchedule>,
    pub channel: std::result::Result<ChannelSetup, Error>,
    x0_factor: Mat,
    w_factor: Mat,
    sigma0_factor: Mat,
}

impl Scenario {
    pub fn new(model: SystemModel) -> Result<Self> {
        let gains = gains::backward_riccati(&model)?;
        let leader_gains = gains::leader_only_gains(&model).ok();
        let channel = ChannelSetup::new(&model);
        Ok(Self {
            x0_factor: covariance_factor(&model.x0)?,
            w_factor: covariance_factor(&model.w)?,
            sigma0_factor: covariance_factor(&model.sigma0)?,
            model,
            gains,
            leader_gains,
            channel,
        })
    }

    pub fn channel(&self) -> Result<&ChannelSetup> {
        self.channel.as_ref().map_err(|e| e.clone())
    }

    fn sample_target(&self, target: &Target, seed: u64) -> Vector {
        match target {
            Target::Fixed(v) => v.clone(),
            Target::Sampled => GaussianStream::new(seed, 1).shaped(&self.sigma0_factor),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Fixed(Vector),
    /// Drawn per run from `N(0, Sigma_0)`.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    pub x_star: Vector,
    pub states: Vec<Vector>,
    pub inputs_v: Vec<Vector>,
    pub inputs_q: Vec<Vector>,
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub z_norms: Vec<f64>,
    /// `Tr Sigma_t`: zero when the target is shared, `Tr Sigma_0` when nothing is signalled.
    pub sigma_traces: Vec<f64>,
    /// The follower's estimate of the target at each step.
    pub estimates: Vec<Vector>,
    pub seed: u64,
}

impl RolloutTrace {
    pub fn total_cost(&self) -> f64 {
        self.stage_costs.iter().sum::<f64>() + self.terminal_cost
    }
}

fn quad(m: &Mat, v: &Vector) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}

/// One closed-loop run; a deterministic function of its arguments.
pub fn rollout(policy: &Policy, scenario: &Scenario, target: &Target, seed: u64) -> Result<RolloutTrace> {
    let m = &scenario.model;
    let n = m.n;
    if policy.schedule().is_some() {
        policy.check(scenario.channel()?, n)?;
    }
    let x_star = scenario.sample_target(target, seed);
    crate::model::expect_dims("target", x_star.len(), m.d0())?;
    let mut noise = GaussianStream::new(seed, 0);
    let mut x = noise.shaped(&scenario.x0_factor);
    let mut coord = match policy.schedule() {
        Some(s) => Some(Coordinator::new(m, &scenario.gains, scenario.channel()?, s, &x_star)?),
        None => None,
    };
    let silent_trace = match policy {
        Policy::ExComm => 0.0,
        _ => m.sigma0.trace(),
    };
    let mut trace = RolloutTrace {
        x_star: x_star.clone(),
        states: Vec::with_capacity(n + 1),
        inputs_v: Vec::with_capacity(n),
        inputs_q: Vec::with_capacity(n),
        stage_costs: Vec::with_capacity(n),
        terminal_cost: 0.0,
        z_norms: Vec::with_capacity(n + 1),
        sigma_traces: Vec::with_capacity(n + 1),
        estimates: Vec::with_capacity(n + 1),
        seed,
    };
    let record_sigma = |coord: &Option<Coordinator>, trace: &mut RolloutTrace| {
        let (s, est) = match coord {
            Some(c) => (c.sigma_trace(), c.estimate().clone()),
            None => (
                silent_trace,
                if matches!(policy, Policy::ExComm) { x_star.clone() } else { Vector::zeros(m.d0()) },
            ),
        };
        trace.sigma_traces.push(s);
        trace.estimates.push(est);
    };
    for t in 0..n {
        let (v, q) = match coord.as_mut() {
            Some(c) => c.compute_inputs(&x)?,
            None => baseline_inputs(policy, &scenario.gains, scenario.leader_gains.as_ref(), t, &x, &x_star)?,
        };
        let z = &x - &x_star;
        trace.stage_costs.push(quad(&m.f, &z) + quad(&m.g1, &v) + quad(&m.g2, &q));
        trace.z_norms.push(z.norm());
        record_sigma(&coord, &mut trace);
        let w = noise.shaped(&scenario.w_factor);
        let x_next = &m.a * &x + &m.b1 * &v + &m.b2 * &q + w;
        if let Some(c) = coord.as_mut() {
            c.observe_and_update(&x, &x_next)?;
        }
        trace.states.push(std::mem::replace(&mut x, x_next));
        trace.inputs_v.push(v);
        trace.inputs_q.push(q);
    }
    let z = &x - &x_star;
    trace.terminal_cost = quad(&m.f_n, &z);
    trace.z_norms.push(z.norm());
    record_sigma(&coord, &mut trace);
    trace.states.push(x);
    Ok(trace)
}

/// Per-step averages and cost statistics over many runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub policy: String,
    pub runs: usize,
    pub mean_total_cost: f64,
    /// Sample standard deviation (`runs - 1` denominator, zero for one run).
    pub std_total_cost: f64,
    pub mean_z_norms: Vec<f64>,
    pub mean_sigma_traces: Vec<f64>,
    pub mean_stage_costs: Vec<f64>,
    pub mean_terminal_cost: f64,
}

impl AggregateReport {
    pub fn horizon(&self) -> usize {
        self.mean_stage_costs.len()
    }

    pub fn standard_error(&self) -> f64 {
        self.std_total_cost / (self.runs as f64).sqrt()
    }

    pub fn mean_final_z_norm(&self) -> f64 {
        self.mean_z_norms.last().copied().unwrap_or(0.0)
    }
}

/// Run `runs` independent rollouts in parallel and reduce them in run order.
pub fn monte_carlo(
    policy: &Policy,
    scenario: &Scenario,
    target: &Target,
    runs: usize,
    master_seed: u64,
) -> Result<AggregateReport> {
    if runs == 0 {
        return Err(Error::InvalidArgument("at least one run is required".into()));
    }
    let n = scenario.model.n;
    let summaries = (0..runs)
        .into_par_iter()
        .map(|i| {
            rollout(policy, scenario, target, run_seed(master_seed, i as u64))
                .map(|tr| (tr.total_cost(), tr.z_norms, tr.sigma_traces, tr.stage_costs, tr.terminal_cost))
                .map_err(|e| Error::RolloutFailed {
                    run: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = runs as f64;
    let mut z = vec![0.0; n + 1];
    let mut s = vec![0.0; n + 1];
    let mut c = vec![0.0; n];
    let mut total = 0.0;
    let mut terminal = 0.0;
    for (cost, zn, st, sc, term) in &summaries {
        total += cost;
        terminal += term;
        for t in 0..=n {
            z[t] += zn[t];
            s[t] += st[t];
        }
        for t in 0..n {
            c[t] += sc[t];
        }
    }
    let mean = total / k;
    let std = if runs > 1 {
        (summaries.iter().map(|(x, ..)| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x / k).collect();
    Ok(AggregateReport {
        policy: policy.name().to_string(),
        runs,
        mean_total_cost: mean,
        std_total_cost: std,
        mean_z_norms: scale(z),
        mean_sigma_traces: scale(s),
        mean_stage_costs: scale(c),
        mean_terminal_cost: terminal / k,
    })
}
