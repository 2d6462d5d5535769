//! Choosing the signalling power `Lambda_t`.
//!
//! The expected cost of the coordination scheme depends on the power schedule
//! only through a deterministic matrix recursion ([`mdp`]). That recursion is
//! minimized by a scalar backward solver when the leader is fully actuated
//! ([`scalar`]) and by a derivative-free search otherwise ([`search`]).

pub mod mdp;
pub mod pontryagin;
pub mod scalar;
pub mod search;

use crate::error::{Error, Result};
use crate::matcore::Vector;

pub use mdp::{Mdp, MdpRollout, MdpState};
pub use pontryagin::{costate_z, Costates, FaProblem, SigmaGradient};
pub use scalar::{scalar_backward_solve, scalar_constants, Boundary, ConstantsTable, ScalarOptions, ScalarSolution};
pub use search::{ua_optimize, SearchOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Heuristic,
    Scalar,
    FullMatrix,
}

/// Per-step diagonal signalling power.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSchedule {
    pub kind: ScheduleKind,
    pub lambda: Vec<Vector>,
    /// Scalar multipliers with `Lambda_t = a_t H^{-1}` (scalar schedules only).
    pub a: Vec<f64>,
    /// `b_t = prod_{i<t} 1 / (1 + a_i)` (scalar schedules only).
    pub b: Vec<f64>,
    pub theta: Option<f64>,
}

impl PowerSchedule {
    pub fn horizon(&self) -> usize {
        self.lambda.len()
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Self::full(vec![Vector::zeros(dim); n])
    }

    pub fn full(lambda: Vec<Vector>) -> Self {
        Self {
            kind: ScheduleKind::FullMatrix,
            lambda,
            a: Vec::new(),
            b: Vec::new(),
            theta: None,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::full(self.lambda.iter().map(|l| l * factor).collect())
    }

    /// Ratio `Tr Sigma_n / Tr Sigma_0` when it is known in closed form.
    pub fn terminal_ratio(&self) -> Option<f64> {
        self.b.last().copied()
    }
}

/// `Lambda_t = theta^t I`.
pub fn heuristic_schedule(theta: f64, n: usize, dim: usize) -> Result<PowerSchedule> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidTheta(theta));
    }
    Ok(PowerSchedule {
        kind: ScheduleKind::Heuristic,
        lambda: (0..n)
            .map(|t| Vector::from_element(dim, theta.powi(t as i32)))
            .collect(),
        a: Vec::new(),
        b: Vec::new(),
        theta: Some(theta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn heuristic_values() {
        let s = heuristic_schedule(1.0, 3, 4).unwrap();
        assert!(s.lambda.iter().all(|l| l == &Vector::from_element(4, 1.0)));
        let s = heuristic_schedule(0.88, 3, 4).unwrap();
        assert_relative_eq!(s.lambda[2][0], 0.7744, epsilon = 1e-15);
        let s = heuristic_schedule(0.5, 11, 2).unwrap();
        assert_relative_eq!(s.lambda[10][1], 9.765625e-4, epsilon = 1e-18);
        assert_eq!(heuristic_schedule(0.0, 3, 1), Err(Error::InvalidTheta(0.0)));
        assert_eq!(heuristic_schedule(1.5, 3, 1), Err(Error::InvalidTheta(1.5)));
    }
}
