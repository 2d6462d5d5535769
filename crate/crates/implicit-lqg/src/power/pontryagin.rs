//! Hamiltonian, costates and gradients of the fully actuated recursion.
//!
//! These are the first-order optimality conditions of the power design. They
//! are exposed for verification; production schedules come from the scalar
//! solver.

use crate::channel::FaChannel;
use crate::error::{Error, Result};
use crate::gains::GainSchedule;
use crate::matcore::{self, Mat, Vector};
use crate::model::SystemModel;

use super::mdp::Mdp;

/// `theta_{Z,t} = F + K_t^T G K_t + Abar_t^T theta_{Z,t+1} Abar_t`, `theta_{Z,n} = F_n`.
pub fn costate_z(gains: &GainSchedule, model: &SystemModel) -> Vec<Mat> {
    let n = gains.horizon();
    let (b, g) = (model.b(), model.g());
    let mut theta = vec![model.f_n.clone(); n + 1];
    for t in (0..n).rev() {
        let k = &gains.k[t];
        let abar = &model.a - &b * k;
        let next = &model.f + k.transpose() * &g * k + abar.transpose() * &theta[t + 1] * &abar;
        theta[t] = matcore::symmetrize(&next);
    }
    theta
}

/// Inputs of one Hamiltonian evaluation besides the state and power.
#[derive(Debug, Clone, Copy)]
pub struct Costates<'c> {
    pub theta_z: &'c Mat,
    pub theta_sigma: &'c Mat,
}

/// Fully actuated recursion with its fixed `L_t` sequence.
#[derive(Debug, Clone)]
pub struct FaProblem<'a> {
    pub mdp: Mdp<'a>,
    pub fa: &'a FaChannel,
    pub l: Vec<Mat>,
}

/// The Sylvester solutions that make up the nonlinear part of `theta_{Sigma,t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaGradient {
    pub theta_sigma: Mat,
    pub theta1: Mat,
    pub theta2: Mat,
    pub theta3: Mat,
    /// Largest absolute residual of the three Sylvester solves.
    pub residual: f64,
}

impl<'a> FaProblem<'a> {
    pub fn new(mdp: Mdp<'a>) -> Result<Self> {
        let fa = mdp
            .channel
            .fa()
            .ok_or_else(|| Error::InvalidArgument("fully actuated channel required".into()))?;
        let l = mdp.l_sequence();
        Ok(Self { mdp, fa, l })
    }

    fn parts(&self, t: usize) -> Parts {
        let m = self.mdp.model;
        let (k, d) = (&self.mdp.gains.k[t], &self.mdp.gains.d[t]);
        let g = &self.mdp.g;
        Parts {
            abar: self.mdp.closed_loop(t),
            bd: &self.mdp.b * d,
            kgk: &m.f + k.transpose() * g * k,
            dkl: d + k * &self.l[t],
            g_iq: g * &self.mdp.embed * &self.fa.q,
        }
    }

    /// Hamiltonian in expanded trace form.
    pub fn hamiltonian(&self, z: &Mat, sigma: &Mat, lambda: &Vector, co: Costates, t: usize) -> Result<f64> {
        let m = self.mdp.model;
        let p = self.parts(t);
        let (l, l_next) = (&self.l[t], &self.l[t + 1]);
        let (u, h) = (&self.fa.eig.u, &self.fa.eig.h);
        let x = matcore::psd_sqrt(sigma)?;
        let sqrt_l = Mat::from_diagonal(&lambda.map(f64::sqrt));
        let lam = Mat::from_diagonal(lambda);
        let contraction = Mat::from_diagonal(&lambda.zip_map(h, |a, b| 1.0 / (1.0 + a * b)));
        let g = &self.mdp.g;
        let d = &self.mdp.gains.d[t];
        let k = &self.mdp.gains.k[t];
        let q1 = &self.fa.q1;
        let q = &self.fa.q;
        let (tz, ts) = (co.theta_z, co.theta_sigma);
        Ok(p.kgk.component_mul(z).sum()
            + (&p.abar * z * p.abar.transpose() * tz).trace()
            + (&m.w * tz).trace()
            + 2.0 * (&sqrt_l * u.transpose() * &x * l_next.transpose() * tz * q1 * u).trace()
            - 2.0 * (&sqrt_l * u.transpose() * &x * p.dkl.transpose() * &p.g_iq * u).trace()
            + (&x * u * contraction * u.transpose() * &x * ts).trace()
            + (&lam * u.transpose() * (q1.transpose() * tz * q1 + q.transpose() * &m.g1 * q) * u).trace()
            - (&p.bd * sigma * (l_next.transpose() + l.transpose() * p.abar.transpose()) * tz).trace()
            + (d.transpose() * g * d * sigma).trace()
            + 2.0 * (d.transpose() * g * k * l * sigma).trace())
    }

    /// `l_t + Tr(f^Z theta_Z) + Tr(f^Sigma theta_Sigma)` through the recursion itself.
    pub fn hamiltonian_dynamics_form(
        &self,
        z: &Mat,
        sigma: &Mat,
        lambda: &Vector,
        co: Costates,
        t: usize,
    ) -> Result<f64> {
        let state = super::MdpState {
            z: z.clone(),
            root: matcore::psd_sqrt(sigma)?,
            l: self.l[t].clone(),
        };
        let step = self.fa.step(lambda)?;
        let stage = self.mdp.stage_cost(&state, &step, t);
        let next = self.mdp.step(&state, &step, lambda, t)?;
        Ok(stage + next.z.component_mul(co.theta_z).sum() + next.sigma().component_mul(co.theta_sigma).sum())
    }

    /// `dH / dLambda_t(j)` for every `j`.
    pub fn grad_lambda(&self, sigma: &Mat, lambda: &Vector, co: Costates, t: usize) -> Result<Vector> {
        if let Some((index, &value)) = lambda.iter().enumerate().find(|(_, &v)| v <= 1e-12) {
            return Err(Error::ZeroLambdaEntry { index, value });
        }
        let (m1, m2, m3) = self.coefficients(sigma, co, t)?;
        let h = &self.fa.eig.h;
        Ok(Vector::from_fn(lambda.len(), |j, _| {
            let (l, hj) = (lambda[j], h[j]);
            m1[(j, j)] / l.sqrt() - hj * m2[(j, j)] / (1.0 + l * hj).powi(2) + m3[(j, j)]
        }))
    }

    /// The coefficient matrices `(M1, M2, M3)` of the power gradient.
    pub fn coefficients(&self, sigma: &Mat, co: Costates, t: usize) -> Result<(Mat, Mat, Mat)> {
        let p = self.parts(t);
        let u = &self.fa.eig.u;
        let x = matcore::psd_sqrt(sigma)?;
        let q1 = &self.fa.q1;
        let q = &self.fa.q;
        let tz = co.theta_z;
        let m1 = u.transpose() * &x * (self.l[t + 1].transpose() * tz * q1 - p.dkl.transpose() * &p.g_iq) * u;
        let m2 = u.transpose() * &x * co.theta_sigma * &x * u;
        let m3 = u.transpose() * (q1.transpose() * tz * q1 + q.transpose() * &self.mdp.model.g1 * q) * u;
        Ok((m1, m2, m3))
    }

    /// `theta_{Sigma,t} = dH / dSigma_t`.
    pub fn theta_sigma_step(&self, sigma: &Mat, lambda: &Vector, co: Costates, t: usize) -> Result<SigmaGradient> {
        let p = self.parts(t);
        let g = &self.mdp.g;
        let d = &self.mdp.gains.d[t];
        let k = &self.mdp.gains.k[t];
        let (l, l_next) = (&self.l[t], &self.l[t + 1]);
        let tz = co.theta_z;
        let ts = co.theta_sigma;
        let x = matcore::psd_sqrt(sigma)?;
        let s_half = self.fa.s_half(lambda);
        let v = self.fa.v(lambda);
        let sym = |m: Mat| (&m + m.transpose()) * 0.5;

        let rhs1 = ts * &x * &v + &v * &x * ts;
        let rhs2 = sym(l_next.transpose() * tz * &self.fa.q1 * &s_half);
        let rhs3 = sym(p.dkl.transpose() * &p.g_iq * &s_half);
        let mut residual = 0.0_f64;
        let mut solve = |rhs: &Mat| -> Result<Mat> {
            let th = matcore::solve_sylvester_lyapunov(&x, rhs)?;
            residual = residual.max((&x * &th + &th * &x - rhs).amax());
            Ok(th)
        };
        let theta1 = solve(&rhs1)?;
        let theta2 = solve(&rhs2)?;
        let theta3 = solve(&rhs3)?;

        let dg = d.transpose() * g;
        let through = l_next + &p.abar * l;
        let linear = &dg * d + sym(&dg * k * l) * 2.0 - sym(p.bd.transpose() * tz * &through);
        let theta_sigma = linear + &theta1 + &theta2 * 2.0 - &theta3 * 2.0;
        Ok(SigmaGradient {
            theta_sigma: matcore::symmetrize(&theta_sigma),
            theta1,
            theta2,
            theta3,
            residual,
        })
    }
}

struct Parts {
    abar: Mat,
    bd: Mat,
    kgk: Mat,
    dkl: Mat,
    /// `G [I; 0] Q`.
    g_iq: Mat,
}
