//! Agent-level policies: the implicit coordination scheme and its baselines.

use crate::channel::{ChannelSetup, ChannelStep};
use crate::error::{Error, Result};
use crate::gains::GainSchedule;
use crate::matcore::{self, Mat, Vector};
use crate::model::SystemModel;
use crate::power::PowerSchedule;

/// Who knows what, and how the leader's knowledge reaches the follower.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Both agents know the target.
    ExComm,
    /// The leader steers alone on `(A, B1)`, the follower is idle.
    LeaderOnly,
    /// The follower steers to the prior mean, the leader to the target.
    NoComm,
    /// Implicit signalling with a fully actuated leader.
    ImCommFa(PowerSchedule),
    /// Implicit signalling with an under-actuated leader.
    ImCommUa(PowerSchedule),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ExComm => "ex-comm",
            Self::LeaderOnly => "leader-only",
            Self::NoComm => "no-comm",
            Self::ImCommFa(_) => "im-comm-fa",
            Self::ImCommUa(_) => "im-comm-ua",
        }
    }

    /// Implicit signalling with the variant that fits the channel.
    pub fn im_comm(channel: &ChannelSetup, schedule: PowerSchedule) -> Self {
        if channel.is_fully_actuated() {
            Self::ImCommFa(schedule)
        } else {
            Self::ImCommUa(schedule)
        }
    }

    pub fn schedule(&self) -> Option<&PowerSchedule> {
        match self {
            Self::ImCommFa(s) | Self::ImCommUa(s) => Some(s),
            _ => None,
        }
    }

    /// Reject implicit variants that do not match the channel or horizon.
    pub fn check(&self, channel: &ChannelSetup, n: usize) -> Result<()> {
        let fa = channel.is_fully_actuated();
        match self {
            Self::ImCommFa(_) if !fa => Err(Error::PolicyMismatch(
                "fully actuated signalling on an under-actuated leader".into(),
            )),
            Self::ImCommUa(_) if fa => Err(Error::PolicyMismatch(
                "under-actuated signalling on a fully actuated leader".into(),
            )),
            Self::ImCommFa(s) | Self::ImCommUa(s) => {
                if s.horizon() != n {
                    return Err(Error::PolicyMismatch(format!(
                        "schedule has {} steps, horizon is {n}",
                        s.horizon()
                    )));
                }
                let dim = channel.lambda_dim();
                if let Some(l) = s.lambda.iter().find(|l| l.len() != dim) {
                    return Err(Error::PolicyMismatch(format!(
                        "power vectors have length {}, channel needs {dim}",
                        l.len()
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn split(u: &Vector, d1: usize) -> (Vector, Vector) {
    (u.rows(0, d1).into_owned(), u.rows(d1, u.len() - d1).into_owned())
}

/// Leader and follower inputs of the policies without signalling.
///
/// `gains` is the joint schedule; `leader` is the leader-only schedule and
/// is only read by [`Policy::LeaderOnly`].
pub fn baseline_inputs(
    policy: &Policy,
    gains: &GainSchedule,
    leader: Option<&GainSchedule>,
    t: usize,
    x: &Vector,
    x_star: &Vector,
) -> Result<(Vector, Vector)> {
    match policy {
        Policy::ExComm => Ok(split(&(-&gains.k[t] * x + &gains.d[t] * x_star), gains.d1)),
        Policy::LeaderOnly => {
            let l = leader.ok_or_else(|| Error::PolicyMismatch("leader-only gains missing".into()))?;
            let v = -&l.k_l[t] * x + &l.d_l[t] * x_star;
            Ok((v, Vector::zeros(l.k_f[t].nrows())))
        }
        Policy::NoComm => Ok((-&gains.k_l[t] * x + &gains.d_l[t] * x_star, -&gains.k_f[t] * x)),
        Policy::ImCommFa(_) | Policy::ImCommUa(_) => Err(Error::PolicyMismatch(
            "implicit signalling needs a coordinator".into(),
        )),
    }
}

/// Shared state of one implicit coordination run.
///
/// The leader's error is kept in whitened form `xi = Sigma^{-1/2} e`, updated
/// through the orthogonal factor of each contraction, so it never inverts a
/// shrinking covariance.
#[derive(Debug, Clone)]
pub struct Coordinator<'a> {
    model: &'a SystemModel,
    gains: &'a GainSchedule,
    channel: &'a ChannelSetup,
    schedule: &'a PowerSchedule,
    b: Mat,
    t: usize,
    x_star: Vector,
    e: Vector,
    x_star_hat: Vector,
    root: Mat,
    xi: Vector,
    step: Option<ChannelStep>,
}

impl<'a> Coordinator<'a> {
    /// Start with `xhat_0 = 0`, `e_0 = x_*` and `Sigma_0` from the model.
    pub fn new(
        model: &'a SystemModel,
        gains: &'a GainSchedule,
        channel: &'a ChannelSetup,
        schedule: &'a PowerSchedule,
        x_star: &Vector,
    ) -> Result<Self> {
        if schedule.horizon() != model.n || gains.horizon() != model.n {
            return Err(Error::DimensionMismatch(format!(
                "schedule {} and gains {} must cover the horizon {}",
                schedule.horizon(),
                gains.horizon(),
                model.n
            )));
        }
        crate::model::expect_dims("target", x_star.len(), model.d0())?;
        let root = matcore::psd_sqrt(&model.sigma0)?;
        let xi = matcore::pd_inv_sqrt(&model.sigma0, crate::channel::SIGMA_FLOOR)? * x_star;
        Ok(Self {
            model,
            gains,
            channel,
            schedule,
            b: model.b(),
            t: 0,
            x_star: x_star.clone(),
            e: x_star.clone(),
            x_star_hat: Vector::zeros(model.d0()),
            root,
            xi,
            step: None,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn x_star(&self) -> &Vector {
        &self.x_star
    }

    /// The follower's current estimate of the target.
    pub fn estimate(&self) -> &Vector {
        &self.x_star_hat
    }

    /// The leader's view of the follower's error, `x_* - xhat_t`.
    pub fn error(&self) -> &Vector {
        &self.e
    }

    pub fn sigma(&self) -> Mat {
        matcore::symmetrize(&(&self.root * &self.root))
    }

    pub fn sigma_trace(&self) -> f64 {
        self.root.norm_squared()
    }

    fn channel_step(&mut self) -> Result<&ChannelStep> {
        if self.t >= self.model.n {
            return Err(Error::IndexOutOfRange {
                index: self.t,
                len: self.model.n,
            });
        }
        if self.step.is_none() {
            self.step = Some(self.channel.step(&self.schedule.lambda[self.t], self.t)?);
        }
        Ok(self.step.as_ref().expect("cached above"))
    }

    /// Signal the leader adds at the current step.
    pub fn signal(&mut self) -> Result<Vector> {
        let xi = self.xi.clone();
        Ok(&self.channel_step()?.signal * xi)
    }

    /// Leader input `v_t` (with the signal) and follower input `q_t`.
    pub fn compute_inputs(&mut self, x: &Vector) -> Result<(Vector, Vector)> {
        let s = self.signal()?;
        let t = self.t;
        let g = self.gains;
        let v = -&g.k_l[t] * x + &g.d_l[t] * &self.x_star_hat + s;
        let q = -&g.k_f[t] * x + &g.d_f[t] * &self.x_star_hat;
        Ok((v, q))
    }

    /// Decode the channel output of the transition `x -> x_next` and advance.
    pub fn observe_and_update(&mut self, x: &Vector, x_next: &Vector) -> Result<()> {
        let t = self.t;
        let abar = &self.model.a - &self.b * &self.gains.k[t];
        let y = x_next - abar * x - &self.b * (&self.gains.d[t] * &self.x_star_hat);
        let step = self.channel_step()?.clone();
        let gy = &step.gain * &y;
        let e_hat = &self.root * &gy;
        let (root, o) = matcore::contract_root(&self.root, &step.v_half);
        self.xi = o * (&step.v_inv_half * (&self.xi - gy));
        self.root = root;
        self.e -= &e_hat;
        self.x_star_hat += e_hat;
        self.t += 1;
        self.step = None;
        Ok(())
    }
}
