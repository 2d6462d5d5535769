//! Deterministic recursion for the expected cost of a power schedule.
//!
//! The state is `(Z_t, Sigma_t, L_t)` where `Z_t` is the tracking-error
//! second moment as seen by the cost and `L_t` couples `z_t` with the
//! estimation error. `Sigma_t` is carried by its symmetric root so that
//! strong signalling cannot make it lose definiteness through rounding.

use crate::channel::{projection_matrix, ChannelSetup, ChannelStep, UaChannel, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::gains::GainSchedule;
use crate::matcore::{self, Mat, Vector};
use crate::model::SystemModel;

use super::PowerSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct MdpState {
    pub z: Mat,
    /// `Sigma_t^{1/2}`.
    pub root: Mat,
    pub l: Mat,
}

impl MdpState {
    pub fn sigma(&self) -> Mat {
        matcore::symmetrize(&(&self.root * &self.root))
    }
}

/// States `0..=n`, stage costs `0..n` and the terminal cost of one schedule.
#[derive(Debug, Clone)]
pub struct MdpRollout {
    pub states: Vec<MdpState>,
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
}

impl MdpRollout {
    pub fn total(&self) -> f64 {
        self.stage_costs.iter().sum::<f64>() + self.terminal_cost
    }

    pub fn sigma_traces(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.root.norm_squared()).collect()
    }
}

/// Problem data shared by every evaluation of the recursion.
#[derive(Debug, Clone)]
pub struct Mdp<'a> {
    pub model: &'a SystemModel,
    pub gains: &'a GainSchedule,
    pub channel: &'a ChannelSetup,
    pub(crate) b: Mat,
    pub(crate) g: Mat,
    /// `[I; 0]`, embedding the leader signal into the joint input.
    pub(crate) embed: Mat,
}

impl<'a> Mdp<'a> {
    pub fn new(model: &'a SystemModel, gains: &'a GainSchedule, channel: &'a ChannelSetup) -> Result<Self> {
        if gains.horizon() != model.n {
            return Err(Error::DimensionMismatch(format!(
                "gain schedule covers {} steps, model horizon is {}",
                gains.horizon(),
                model.n
            )));
        }
        Ok(Self {
            model,
            gains,
            channel,
            b: model.b(),
            g: model.g(),
            embed: model.leader_embedding(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.model.n
    }

    pub fn closed_loop(&self, t: usize) -> Mat {
        &self.model.a - &self.b * &self.gains.k[t]
    }

    /// `Z_0 = X_0 + Sigma_0`, `L_0 = -I`.
    pub fn initial_state(&self) -> Result<MdpState> {
        let d0 = self.model.d0();
        Ok(MdpState {
            z: &self.model.x0 + &self.model.sigma0,
            root: matcore::psd_sqrt(&self.model.sigma0)?,
            l: -Mat::identity(d0, d0),
        })
    }

    /// `L_t` without any noise-correlation correction, `L_{t+1} = Abar L_t - B D_t`.
    pub fn l_sequence(&self) -> Vec<Mat> {
        let d0 = self.model.d0();
        let mut out = vec![-Mat::identity(d0, d0)];
        for t in 0..self.horizon() {
            let next = self.closed_loop(t) * &out[t] - &self.b * &self.gains.d[t];
            out.push(next);
        }
        out
    }

    /// Stage cost with the input-independent terms dropped.
    pub fn stage_cost(&self, state: &MdpState, step: &ChannelStep, t: usize) -> f64 {
        let (k, d) = (&self.gains.k[t], &self.gains.d[t]);
        let sigma = state.sigma();
        let kgk = k.transpose() * &self.g * k;
        let dg = d.transpose() * &self.g;
        let dkl = d + k * &state.l;
        let t_mat = &step.signal;
        (&self.model.f + kgk).component_mul(&state.z).sum()
            + (&self.model.g1 * t_mat * t_mat.transpose()).trace()
            + (&dg * d * &sigma).trace()
            + 2.0 * (&dg * k * &state.l * &sigma).trace()
            - 2.0 * (dkl.transpose() * &self.g * &self.embed * t_mat * &state.root).trace()
    }

    pub fn terminal_cost(&self, state: &MdpState) -> f64 {
        state.z.component_mul(&self.model.f_n).sum()
    }

    pub fn step(&self, state: &MdpState, step: &ChannelStep, lambda: &Vector, t: usize) -> Result<MdpState> {
        let abar = self.closed_loop(t);
        let bd = &self.b * &self.gains.d[t];
        let sig = &self.model.b1 * &step.signal;
        let sigma = state.sigma();
        let l_next = &abar * &state.l - &bd;
        let cross = &sig * &state.root * l_next.transpose() - &bd * &sigma * state.l.transpose() * abar.transpose();
        let z = &abar * &state.z * abar.transpose()
            + &sig * sig.transpose()
            + &cross
            + cross.transpose()
            + &self.model.w
            + &bd * &sigma * bd.transpose();
        let l = match self.channel {
            ChannelSetup::FullyActuated(_) => l_next,
            ChannelSetup::UnderActuated(ua) => match ua_correction(ua, lambda, self.channel.block_at(t), &state.root)? {
                Some(c) => l_next - c,
                None => l_next,
            },
        };
        let (root, _) = matcore::contract_root(&state.root, &step.v_half);
        Ok(MdpState {
            z: matcore::symmetrize(&z),
            root,
            l,
        })
    }

    /// Stage cost and successor for power `lambda` at step `t`.
    pub fn advance(&self, state: &MdpState, lambda: &Vector, t: usize) -> Result<(f64, MdpState)> {
        let step = self.channel.step(lambda, t)?;
        Ok((self.stage_cost(state, &step, t), self.step(state, &step, lambda, t)?))
    }

    pub fn rollout(&self, schedule: &PowerSchedule) -> Result<MdpRollout> {
        if schedule.horizon() != self.horizon() {
            return Err(Error::DimensionMismatch(format!(
                "schedule has {} steps, horizon is {}",
                schedule.horizon(),
                self.horizon()
            )));
        }
        let mut states = vec![self.initial_state()?];
        let mut stage_costs = Vec::with_capacity(self.horizon());
        for (t, lambda) in schedule.lambda.iter().enumerate() {
            let (c, next) = self.advance(&states[t], lambda, t)?;
            stage_costs.push(c);
            states.push(next);
        }
        let terminal_cost = self.terminal_cost(&states[self.horizon()]);
        Ok(MdpRollout {
            states,
            stage_costs,
            terminal_cost,
        })
    }

    /// Recursion cost of a schedule with the dropped terms left out.
    pub fn schedule_cost(&self, schedule: &PowerSchedule) -> Result<f64> {
        Ok(self.rollout(schedule)?.total())
    }

    /// The terms the recursion drops, recovered from the silent schedule.
    ///
    /// Without signalling both agents steer to the prior mean, so the exact
    /// cost has a closed form in the open-loop state covariance.
    pub fn dropped_constant(&self) -> Result<f64> {
        let m = self.model;
        let silent = PowerSchedule::zeros(self.horizon(), self.channel.lambda_dim());
        let recursion = self.schedule_cost(&silent)?;
        let mut p = m.x0.clone();
        let mut exact = 0.0;
        let target = m.sigma0.component_mul(&m.f).sum();
        for t in 0..self.horizon() {
            let k = &self.gains.k[t];
            let stage = &m.f + k.transpose() * &self.g * k;
            exact += stage.component_mul(&p).sum() + target;
            let abar = self.closed_loop(t);
            p = matcore::symmetrize(&(&abar * &p * abar.transpose() + &m.w));
        }
        exact += m.f_n.component_mul(&(p + &m.sigma0)).sum();
        Ok(exact - recursion)
    }

    /// Exact expected total cost of a schedule.
    pub fn expected_cost(&self, schedule: &PowerSchedule) -> Result<f64> {
        Ok(self.schedule_cost(schedule)? + self.dropped_constant()?)
    }
}

/// `Gamma0 [0; Wbar3^T Wbar1^{-1} Psi1 S^{1/2} P_k] Sigma^{-1/2}`, or `None` when
/// the noise blocks are uncorrelated.
fn ua_correction(ua: &UaChannel, lambda: &Vector, k: usize, root: &Mat) -> Result<Option<Mat>> {
    if ua.wbar3.amax() <= 1e-14 * ua.wbar.amax() {
        return Ok(None);
    }
    let d0 = ua.d0();
    let p = projection_matrix(k, ua.r, d0)?;
    let psi = Mat::from_diagonal(&ua.svd.psi1);
    let w1_inv = matcore::spd_solve(&ua.wbar1, &Mat::identity(ua.r, ua.r))
        .ok_or(Error::NotPd { min_eig: matcore::min_eig(&ua.wbar1) })?;
    let lower = ua.wbar3.transpose() * w1_inv * psi * ua.s_half(lambda) * p;
    let mut c = Mat::zeros(d0, d0);
    c.rows_mut(ua.r, d0 - ua.r).copy_from(&lower);
    let sigma = root * root;
    let inv_root = matcore::pd_inv_sqrt(&sigma, SIGMA_FLOOR)?;
    Ok(Some(&ua.svd.gamma0 * c * inv_root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gains::backward_riccati;
    use crate::model::{fully_actuated_preset, under_actuated_preset};
    use crate::power::heuristic_schedule;
    use approx::assert_relative_eq;

    #[test]
    fn l_sequence_does_not_depend_on_power() {
        let m = fully_actuated_preset();
        let g = backward_riccati(&m).unwrap();
        let c = ChannelSetup::new(&m).unwrap();
        let mdp = Mdp::new(&m, &g, &c).unwrap();
        let a = mdp.rollout(&heuristic_schedule(0.88, m.n, 4).unwrap()).unwrap();
        let b = mdp.rollout(&heuristic_schedule(0.5, m.n, 4).unwrap()).unwrap();
        let base = mdp.l_sequence();
        for t in 0..=m.n {
            assert_relative_eq!(a.states[t].l, b.states[t].l, epsilon = 1e-12);
            assert_relative_eq!(a.states[t].l, base[t], epsilon = 1e-12);
        }
    }

    #[test]
    fn silent_schedule_keeps_sigma() {
        let m = under_actuated_preset();
        let g = backward_riccati(&m).unwrap();
        let c = ChannelSetup::new(&m).unwrap();
        let mdp = Mdp::new(&m, &g, &c).unwrap();
        let r = mdp.rollout(&PowerSchedule::zeros(m.n, 2)).unwrap();
        for s in &r.states {
            assert_relative_eq!(s.sigma(), m.sigma0, epsilon = 1e-12);
        }
        assert!(r.total().is_finite());
    }

    #[test]
    fn terminal_cost_is_trace() {
        let m = fully_actuated_preset();
        let g = backward_riccati(&m).unwrap();
        let c = ChannelSetup::new(&m).unwrap();
        let mdp = Mdp::new(&m, &g, &c).unwrap();
        let s = mdp.initial_state().unwrap();
        assert_relative_eq!(mdp.terminal_cost(&s), 10.0 * 24.0, epsilon = 1e-12);
    }
}
