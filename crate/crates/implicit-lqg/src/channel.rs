//! The plant viewed as a Gaussian channel from leader to follower.
//!
//! With both agents applying the tracking law on the common estimate, the
//! residual `y_t = x_{t+1} - (A - B K_t) x_t - B D_t xhat_t` equals
//! `B1 s_t + w_t`. The leader encodes the current estimation error `e_t`
//! linearly into `s_t` and the follower forms the MMSE estimate.

use crate::error::{Error, Result};
use crate::gains::GainSchedule;
use crate::matcore::{self, EigenPair, Mat, SvdFactors, Vector};
use crate::model::{expect_dims, SystemModel};

/// Covariances below this eigenvalue are too close to singular to whiten.
pub const SIGMA_FLOOR: f64 = 1e-14;

/// Channel data when `rank(B1) = d0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaChannel {
    /// `d1 x d0` projection with `B1 Q` invertible.
    pub q: Mat,
    /// `B1 Q`.
    pub q1: Mat,
    /// `(B1 Q)^T W^{-1} B1 Q = U diag(H) U^T`.
    pub eig: EigenPair,
    /// `min H`.
    pub psi: f64,
    pub w: Mat,
}

/// Channel data when `rank(B1) = r < d0`.
#[derive(Debug, Clone, PartialEq)]
pub struct UaChannel {
    pub svd: SvdFactors,
    /// `Gamma0^T W Gamma0`.
    pub wbar: Mat,
    /// Leading `r x r` block of `wbar`.
    pub wbar1: Mat,
    /// Trailing `(d0 - r) x (d0 - r)` block.
    pub wbar2: Mat,
    /// Off-diagonal `r x (d0 - r)` block.
    pub wbar3: Mat,
    /// `Psi1 Wbar1^{-1} Psi1 = U1 diag(Pi1) U1^T`.
    pub eig1: EigenPair,
    /// `min Pi1`.
    pub pi: f64,
    pub r: usize,
    pub tau: usize,
    /// Order in which message blocks are sent within a period.
    pub order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSetup {
    FullyActuated(FaChannel),
    UnderActuated(UaChannel),
}

/// Everything one channel use needs for a given power and projection.
///
/// With `xi = Sigma^{-1/2} e` the leader sends `s = signal * xi`, the
/// follower estimates `ehat = Sigma^{1/2} * gain * y`, and the error
/// covariance contracts to `Sigma^{1/2} V Sigma^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStep {
    pub signal: Mat,
    pub gain: Mat,
    pub v: Mat,
    pub v_half: Mat,
    pub v_inv_half: Mat,
}

/// The message and the follower's running estimate of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub e: Vector,
    pub sigma: Mat,
    pub x_star_hat: Vector,
}

impl MessageState {
    pub fn new(x_star: &Vector, sigma0: &Mat) -> Self {
        Self {
            e: x_star.clone(),
            sigma: sigma0.clone(),
            x_star_hat: Vector::zeros(x_star.len()),
        }
    }
}

/// `Q = I` when `B1` is square, `B1^T` otherwise.
pub fn choose_projection(b1: &Mat) -> Result<Mat> {
    let (d0, d1) = b1.shape();
    let q = if d0 == d1 {
        Mat::identity(d0, d0)
    } else {
        b1.transpose()
    };
    let r = matcore::rank(&(b1 * &q));
    if r < d0 {
        return Err(Error::RankDeficient { rank: r, required: d0 });
    }
    Ok(q)
}

pub fn fa_setup(b1: &Mat, w: &Mat) -> Result<FaChannel> {
    let q = choose_projection(b1)?;
    let q1 = b1 * &q;
    let w_inv_q1 = matcore::spd_solve(w, &q1).ok_or(Error::NotPd {
        min_eig: matcore::min_eig(w),
    })?;
    let info = matcore::symmetrize(&(q1.transpose() * w_inv_q1));
    let eig = matcore::sym_eig(&info)?;
    let psi = eig.min();
    Ok(FaChannel {
        q,
        q1,
        eig,
        psi,
        w: w.clone(),
    })
}

pub fn ua_setup(b1: &Mat, w: &Mat) -> Result<UaChannel> {
    let d0 = b1.nrows();
    let svd = matcore::svd_factor(b1)?;
    let r = svd.r;
    if r == d0 {
        return Err(Error::InvalidArgument(
            "leader is fully actuated; use the fully actuated channel".into(),
        ));
    }
    if d0 % r != 0 {
        return Err(Error::NonIntegerPeriod { d0, r });
    }
    let wbar = matcore::symmetrize(&(svd.gamma0.transpose() * w * &svd.gamma0));
    let wbar1 = wbar.view((0, 0), (r, r)).into_owned();
    let wbar2 = wbar.view((r, r), (d0 - r, d0 - r)).into_owned();
    let wbar3 = wbar.view((0, r), (r, d0 - r)).into_owned();
    let psi = Mat::from_diagonal(&svd.psi1);
    let w1_inv_psi = matcore::spd_solve(&wbar1, &psi).ok_or(Error::NotPd {
        min_eig: matcore::min_eig(&wbar1),
    })?;
    let eig1 = matcore::sym_eig(&matcore::symmetrize(&(&psi * w1_inv_psi)))?;
    let pi = eig1.min();
    let tau = d0 / r;
    Ok(UaChannel {
        svd,
        wbar,
        wbar1,
        wbar2,
        wbar3,
        eig1,
        pi,
        r,
        tau,
        order: (0..tau).collect(),
    })
}

/// `r x d0` selector of message block `k`.
pub fn projection_matrix(k: usize, r: usize, d0: usize) -> Result<Mat> {
    let tau = if r == 0 { 0 } else { d0 / r };
    if k >= tau {
        return Err(Error::IndexOutOfRange { index: k, len: tau });
    }
    let mut p = Mat::zeros(r, d0);
    p.view_mut((0, k * r), (r, r)).fill_with_identity();
    Ok(p)
}

fn check_lambda(lambda: &Vector, dim: usize) -> Result<()> {
    expect_dims("signalling power", lambda.len(), dim)?;
    for (index, &value) in lambda.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "signalling power entry {index} must be finite and nonnegative, got {value}"
            )));
        }
    }
    Ok(())
}

fn conj_diag(u: &Mat, d: impl Iterator<Item = f64>) -> Mat {
    let d = Vector::from_iterator(u.ncols(), d);
    matcore::symmetrize(&(u * Mat::from_diagonal(&d) * u.transpose()))
}

impl FaChannel {
    /// `S = U diag(lambda) U^T`.
    pub fn s(&self, lambda: &Vector) -> Mat {
        conj_diag(&self.eig.u, lambda.iter().copied())
    }

    pub fn s_half(&self, lambda: &Vector) -> Mat {
        conj_diag(&self.eig.u, lambda.iter().map(|x| x.sqrt()))
    }

    /// `U (I + Lambda H)^{-1} U^T`.
    pub fn v(&self, lambda: &Vector) -> Mat {
        conj_diag(&self.eig.u, self.contraction(lambda).into_iter().copied())
    }

    fn contraction(&self, lambda: &Vector) -> Vector {
        lambda.zip_map(&self.eig.h, |l, h| 1.0 / (1.0 + l * h))
    }

    pub fn step(&self, lambda: &Vector) -> Result<ChannelStep> {
        let d0 = self.q1.nrows();
        check_lambda(lambda, d0)?;
        let s_half = self.s_half(lambda);
        let s = self.s(lambda);
        let innov = matcore::symmetrize(&(&self.q1 * &s * self.q1.transpose() + &self.w));
        let gain_t = matcore::spd_solve(&innov, &(&self.q1 * &s_half))
            .ok_or(Error::SingularInnovation { step: 0 })?;
        let c = self.contraction(lambda);
        Ok(ChannelStep {
            signal: &self.q * &s_half,
            gain: gain_t.transpose(),
            v: conj_diag(&self.eig.u, c.iter().copied()),
            v_half: conj_diag(&self.eig.u, c.iter().map(|x| x.sqrt())),
            v_inv_half: conj_diag(&self.eig.u, c.iter().map(|x| 1.0 / x.sqrt())),
        })
    }
}

impl UaChannel {
    pub fn d0(&self) -> usize {
        self.svd.gamma0.nrows()
    }

    pub fn d1(&self) -> usize {
        self.svd.gamma1.nrows()
    }

    /// Replace the default block order `0, 1, ..., tau - 1`.
    pub fn with_order(mut self, order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; self.tau];
        if order.len() != self.tau {
            return Err(Error::DimensionMismatch(format!(
                "block order has {} entries, period is {}",
                order.len(),
                self.tau
            )));
        }
        for &k in &order {
            if k >= self.tau || seen[k] {
                return Err(Error::InvalidArgument(format!(
                    "block order {order:?} is not a permutation of 0..{}",
                    self.tau
                )));
            }
            seen[k] = true;
        }
        self.order = order;
        Ok(self)
    }

    pub fn block_at(&self, t: usize) -> usize {
        self.order[t % self.tau]
    }

    /// `S = U1 diag(lambda) U1^T`.
    pub fn s(&self, lambda: &Vector) -> Mat {
        conj_diag(&self.eig1.u, lambda.iter().copied())
    }

    pub fn s_half(&self, lambda: &Vector) -> Mat {
        conj_diag(&self.eig1.u, lambda.iter().map(|x| x.sqrt()))
    }

    /// `U_tau` with the block for `k` replaced by `U1 diag(c) U1^T`, identity elsewhere.
    fn block_conj(&self, k: usize, c: impl Iterator<Item = f64>) -> Mat {
        let d0 = self.d0();
        let mut m = Mat::identity(d0, d0);
        let block = conj_diag(&self.eig1.u, c);
        m.view_mut((k * self.r, k * self.r), (self.r, self.r))
            .copy_from(&block);
        m
    }

    fn contraction(&self, lambda: &Vector) -> Vector {
        lambda.zip_map(&self.eig1.h, |l, p| 1.0 / (1.0 + l * p))
    }

    /// `U_tau Vtilde^(k) U_tau^T`.
    pub fn v(&self, lambda: &Vector, k: usize) -> Mat {
        self.block_conj(k, self.contraction(lambda).into_iter().copied())
    }

    /// `Gamma1 [S^{1/2} P_k; 0]`, so that `s = signal * Sigma^{-1/2} e`.
    pub fn signal(&self, lambda: &Vector, k: usize) -> Result<Mat> {
        let p = projection_matrix(k, self.r, self.d0())?;
        let mut padded = Mat::zeros(self.d1(), self.d0());
        padded
            .rows_mut(0, self.r)
            .copy_from(&(self.s_half(lambda) * p));
        Ok(&self.svd.gamma1 * padded)
    }

    pub fn step(&self, lambda: &Vector, k: usize) -> Result<ChannelStep> {
        check_lambda(lambda, self.r)?;
        let p = projection_matrix(k, self.r, self.d0())?;
        let psi = Mat::from_diagonal(&self.svd.psi1);
        let s_half = self.s_half(lambda);
        let innov = matcore::symmetrize(&(&psi * self.s(lambda) * &psi + &self.wbar1));
        let g_t = matcore::spd_solve(&innov, &(&psi * &s_half))
            .ok_or(Error::SingularInnovation { step: 0 })?;
        // Decoder acting on y: keep the first r entries of Gamma0^T y.
        let top = self.svd.gamma0.columns(0, self.r).transpose();
        let gain = p.transpose() * g_t.transpose() * top;
        let c = self.contraction(lambda);
        Ok(ChannelStep {
            signal: self.signal(lambda, k)?,
            gain,
            v: self.block_conj(k, c.iter().copied()),
            v_half: self.block_conj(k, c.iter().map(|x| x.sqrt())),
            v_inv_half: self.block_conj(k, c.iter().map(|x| 1.0 / x.sqrt())),
        })
    }
}

impl ChannelSetup {
    /// Pick the channel from the rank of `B1`.
    pub fn new(model: &SystemModel) -> Result<Self> {
        if matcore::rank(&model.b1) == model.d0() {
            Ok(Self::FullyActuated(fa_setup(&model.b1, &model.w)?))
        } else {
            Ok(Self::UnderActuated(ua_setup(&model.b1, &model.w)?))
        }
    }

    pub fn is_fully_actuated(&self) -> bool {
        matches!(self, Self::FullyActuated(_))
    }

    /// Length of each power vector.
    pub fn lambda_dim(&self) -> usize {
        match self {
            Self::FullyActuated(c) => c.q1.nrows(),
            Self::UnderActuated(c) => c.r,
        }
    }

    /// Message block sent at step `t` (always 0 when fully actuated).
    pub fn block_at(&self, t: usize) -> usize {
        match self {
            Self::FullyActuated(_) => 0,
            Self::UnderActuated(c) => c.block_at(t),
        }
    }

    pub fn step(&self, lambda: &Vector, t: usize) -> Result<ChannelStep> {
        match self {
            Self::FullyActuated(c) => c.step(lambda),
            Self::UnderActuated(c) => c.step(lambda, c.block_at(t)),
        }
    }

    pub fn fa(&self) -> Option<&FaChannel> {
        match self {
            Self::FullyActuated(c) => Some(c),
            Self::UnderActuated(_) => None,
        }
    }

    pub fn ua(&self) -> Option<&UaChannel> {
        match self {
            Self::UnderActuated(c) => Some(c),
            Self::FullyActuated(_) => None,
        }
    }
}

fn whiten(msg: &MessageState) -> Result<Vector> {
    let lo = matcore::min_eig(&msg.sigma);
    if lo < SIGMA_FLOOR {
        return Err(Error::SigmaNearSingular { min_eig: lo });
    }
    Ok(matcore::pd_inv_sqrt(&msg.sigma, SIGMA_FLOOR)? * &msg.e)
}

fn sigma_root(sigma: &Mat) -> Result<Mat> {
    let lo = matcore::min_eig(sigma);
    if lo < SIGMA_FLOOR {
        return Err(Error::SigmaNearSingular { min_eig: lo });
    }
    matcore::psd_sqrt(sigma)
}

/// `s_t = Q S^{1/2} Sigma^{-1/2} e_t`.
pub fn encode_fa(msg: &MessageState, lambda: &Vector, setup: &FaChannel) -> Result<Vector> {
    let step = setup.step(lambda)?;
    Ok(step.signal * whiten(msg)?)
}

/// Channel residual `x_{t+1} - (A - B K_t) x_t - B D_t xhat_t`.
pub fn channel_output(
    x_next: &Vector,
    x: &Vector,
    gains: &GainSchedule,
    t: usize,
    x_star_hat: &Vector,
    model: &SystemModel,
) -> Vector {
    let b = model.b();
    x_next - gains.closed_loop(model, t) * x - b * (&gains.d[t] * x_star_hat)
}

/// MMSE estimate of `e_t` from the channel output.
pub fn decode_fa(y: &Vector, msg: &MessageState, lambda: &Vector, setup: &FaChannel) -> Result<Vector> {
    let step = setup.step(lambda)?;
    Ok(matcore::psd_sqrt(&msg.sigma)? * step.gain * y)
}

/// `Sigma_{t+1} = Sigma^{1/2} U (I + Lambda H)^{-1} U^T Sigma^{1/2}`.
pub fn cov_update_fa(sigma: &Mat, lambda: &Vector, setup: &FaChannel) -> Result<Mat> {
    check_lambda(lambda, setup.q1.nrows())?;
    let root = sigma_root(sigma)?;
    Ok(matcore::symmetrize(&(&root * setup.v(lambda) * &root)))
}

pub fn encode_ua(msg: &MessageState, lambda: &Vector, k: usize, setup: &UaChannel) -> Result<Vector> {
    check_lambda(lambda, setup.r)?;
    Ok(setup.signal(lambda, k)? * whiten(msg)?)
}

/// MMSE estimate of `e_t` from the full channel output `y_t`.
pub fn decode_ua(y: &Vector, msg: &MessageState, lambda: &Vector, k: usize, setup: &UaChannel) -> Result<Vector> {
    let step = setup.step(lambda, k)?;
    Ok(matcore::psd_sqrt(&msg.sigma)? * step.gain * y)
}

/// `Sigma_{t+1} = Sigma^{1/2} U_tau Vtilde^(k) U_tau^T Sigma^{1/2}`.
pub fn cov_update_ua(sigma: &Mat, lambda: &Vector, k: usize, setup: &UaChannel) -> Result<Mat> {
    check_lambda(lambda, setup.r)?;
    projection_matrix(k, setup.r, setup.d0())?;
    let root = sigma_root(sigma)?;
    Ok(matcore::symmetrize(&(&root * setup.v(lambda, k) * &root)))
}
