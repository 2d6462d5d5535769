//! Backward solver for schedules of the form `Lambda_t = a_t H^{-1}`.
//!
//! With this restriction `Sigma_t = b_t Sigma_0` and the recursion reduces to
//! the state `(Z_t, b_t)` with a scalar input, so each step of the optimality
//! conditions is a one-dimensional root search.

use crate::error::{Error, Result};
use crate::matcore::{self, Mat, Vector};

use super::mdp::Mdp;
use super::{PowerSchedule, ScheduleKind};

/// Per-step constants of the reduced recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsTable {
    pub q_a: Mat,
    pub q_b: Vec<Mat>,
    pub q_ab: Vec<Mat>,
    pub r_a: f64,
    pub r_b: Vec<f64>,
    pub r_ab: Vec<f64>,
    /// `1 / H(j)`, mapping `a_t` to the power vector.
    pub h_inv: Vector,
}

impl ConstantsTable {
    pub fn horizon(&self) -> usize {
        self.q_b.len()
    }
}

pub fn scalar_constants(mdp: &Mdp) -> Result<ConstantsTable> {
    let fa = mdp
        .channel
        .fa()
        .ok_or_else(|| Error::InvalidArgument("scalar schedules need a fully actuated leader".into()))?;
    let m = mdp.model;
    let u = &fa.eig.u;
    let h_inv = fa.eig.h.map(|h| 1.0 / h);
    let u_hinv = u * Mat::from_diagonal(&h_inv) * u.transpose();
    let u_hinv_half = u * Mat::from_diagonal(&h_inv.map(f64::sqrt)) * u.transpose();
    let s0_half = matcore::psd_sqrt(&m.sigma0)?;
    let l = mdp.l_sequence();
    let g_iq = &mdp.g * &mdp.embed * &fa.q;

    let q_a = matcore::symmetrize(&(&fa.q1 * &u_hinv * fa.q1.transpose()));
    let r_a = (fa.q.transpose() * &m.g1 * &fa.q * &u_hinv).trace();
    let mut out = ConstantsTable {
        q_a,
        q_b: Vec::new(),
        q_ab: Vec::new(),
        r_a,
        r_b: Vec::new(),
        r_ab: Vec::new(),
        h_inv,
    };
    for t in 0..mdp.horizon() {
        let (k, d) = (&mdp.gains.k[t], &mdp.gains.d[t]);
        let bd = &mdp.b * d;
        let abar = mdp.closed_loop(t);
        out.q_b
            .push(&bd * &m.sigma0 * l[t + 1].transpose() + &abar * &l[t] * &m.sigma0 * bd.transpose());
        let half = &fa.q1 * &u_hinv_half * &s0_half * l[t + 1].transpose();
        out.q_ab.push(&half + half.transpose());
        out.r_b
            .push((d.transpose() * &mdp.g * (d * &m.sigma0 + k * &l[t] * &m.sigma0 * 2.0)).trace());
        out.r_ab
            .push(((d + k * &l[t]).transpose() * &g_iq * &u_hinv_half * &s0_half).trace());
    }
    Ok(out)
}

/// How the terminal condition `b_n = epsilon` is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Terminal costate zero; the forward `b_n` generally misses `epsilon`.
    FreeCostate,
    /// Terminal costate chosen so that the backward pass lands on `b_0 = 1`.
    Multiplier,
    /// Terminal costate zero, `epsilon` bisected until `b_0` is within a factor 2 of 1.
    ShootEpsilon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarOptions {
    pub epsilon: f64,
    pub boundary: Boundary,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
}

impl Default for ScalarOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            boundary: Boundary::Multiplier,
            grid_lo: 1e-8,
            grid_hi: 1e4,
            grid_points: 200,
        }
    }
}

impl ScalarOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScalarSolution {
    /// Power schedule with `b` recomputed forward from `b_0 = 1`.
    pub schedule: PowerSchedule,
    /// `b_t` from the backward pass.
    pub b_backward: Vec<f64>,
    pub theta_b: Vec<f64>,
    /// Stationarity residual of each `a_t`.
    pub residuals: Vec<f64>,
    pub terminal_costate: f64,
    pub epsilon: f64,
}

impl ScalarSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

struct Pass {
    a: Vec<f64>,
    b: Vec<f64>,
    theta_b: Vec<f64>,
    residuals: Vec<f64>,
}

struct StepCoefficients {
    c1: f64,
    c2: f64,
    c3: f64,
    beta: f64,
    q_b: f64,
    r_b: f64,
}

impl StepCoefficients {
    /// `dH/da` at fixed `b_t = beta (1 + a)`.
    fn stationarity(&self, a: f64) -> f64 {
        self.c1 + (self.beta * (1.0 + a)).sqrt() / (2.0 * a.sqrt()) * self.c2 - self.beta * self.c3 / (1.0 + a)
    }

    /// The `a`-dependent part of the Hamiltonian, used to rank multiple roots.
    fn hamiltonian(&self, a: f64) -> f64 {
        let bt = self.beta * (1.0 + a);
        a * self.c1 + (a * bt).sqrt() * self.c2 + bt * (self.r_b + self.c3 / (1.0 + a) - self.q_b)
    }
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (l + (h - l) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

fn backward_pass(c: &ConstantsTable, theta_z: &[Mat], epsilon: f64, nu: f64, opts: &ScalarOptions) -> Result<Pass> {
    let n = c.horizon();
    let grid = log_grid(opts.grid_lo, opts.grid_hi, opts.grid_points);
    let mut pass = Pass {
        a: vec![0.0; n],
        b: vec![0.0; n + 1],
        theta_b: vec![0.0; n + 1],
        residuals: vec![0.0; n],
    };
    pass.b[n] = epsilon;
    pass.theta_b[n] = nu;
    for t in (0..n).rev() {
        let th = &theta_z[t + 1];
        let k = StepCoefficients {
            c1: c.r_a + th.component_mul(&c.q_a).sum(),
            c2: th.component_mul(&c.q_ab[t]).sum() - 2.0 * c.r_ab[t],
            c3: pass.theta_b[t + 1],
            beta: pass.b[t + 1],
            q_b: th.component_mul(&c.q_b[t]).sum(),
            r_b: c.r_b[t],
        };
        let f = |a: f64| k.stationarity(a);
        let values: Vec<f64> = grid.iter().map(|&a| f(a)).collect();
        let mut best: Option<(f64, f64)> = None;
        for i in 0..grid.len() - 1 {
            if values[i].signum() == values[i + 1].signum() {
                continue;
            }
            let root = bisect(f, grid[i], grid[i + 1]);
            let h = k.hamiltonian(root);
            if best.is_none_or(|(_, bh)| h < bh) {
                best = Some((root, h));
            }
        }
        let a = match best {
            Some((a, _)) => a,
            None => {
                return Err(Error::NoRootFound {
                    step: t,
                    lo: opts.grid_lo,
                    hi: opts.grid_hi,
                    at_lo: values[0],
                    at_hi: values[values.len() - 1],
                })
            }
        };
        let bt = k.beta * (1.0 + a);
        pass.a[t] = a;
        pass.residuals[t] = f(a);
        pass.b[t] = bt;
        pass.theta_b[t] = k.r_b + k.c3 / (1.0 + a) - k.q_b + a / (2.0 * (a * bt).sqrt()) * k.c2;
    }
    Ok(pass)
}

/// Solve the optimality conditions backward from `b_n = epsilon`.
pub fn scalar_backward_solve(c: &ConstantsTable, theta_z: &[Mat], opts: &ScalarOptions) -> Result<ScalarSolution> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", opts.epsilon)));
    }
    if theta_z.len() != c.horizon() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected {} costates, got {}",
            c.horizon() + 1,
            theta_z.len()
        )));
    }
    let (pass, nu, epsilon) = match opts.boundary {
        Boundary::FreeCostate => (backward_pass(c, theta_z, opts.epsilon, 0.0, opts)?, 0.0, opts.epsilon),
        Boundary::Multiplier => {
            let nu = shoot_multiplier(c, theta_z, opts)?;
            (backward_pass(c, theta_z, opts.epsilon, nu, opts)?, nu, opts.epsilon)
        }
        Boundary::ShootEpsilon => {
            let eps = shoot_epsilon(c, theta_z, opts)?;
            (backward_pass(c, theta_z, eps, 0.0, opts)?, 0.0, eps)
        }
    };
    Ok(finish(c, pass, nu, epsilon))
}

fn finish(c: &ConstantsTable, pass: Pass, nu: f64, epsilon: f64) -> ScalarSolution {
    let mut b = vec![1.0];
    for &a in &pass.a {
        b.push(b[b.len() - 1] / (1.0 + a));
    }
    let schedule = PowerSchedule {
        kind: ScheduleKind::Scalar,
        lambda: pass.a.iter().map(|&a| &c.h_inv * a).collect(),
        a: pass.a,
        b,
        theta: None,
    };
    ScalarSolution {
        schedule,
        b_backward: pass.b,
        theta_b: pass.theta_b,
        residuals: pass.residuals,
        terminal_costate: nu,
        epsilon,
    }
}

/// `b_0` of the backward pass, or `None` when a step has no root.
fn initial_b(c: &ConstantsTable, theta_z: &[Mat], eps: f64, nu: f64, opts: &ScalarOptions) -> Result<Option<f64>> {
    match backward_pass(c, theta_z, eps, nu, opts) {
        Ok(p) => Ok(Some(p.b[0])),
        Err(Error::NoRootFound { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Terminal costate for which the backward pass returns `b_0 = 1`.
///
/// `b_0` grows with the costate until some step loses its root, so a
/// missing root counts as overshooting.
fn shoot_multiplier(c: &ConstantsTable, theta_z: &[Mat], opts: &ScalarOptions) -> Result<f64> {
    let eps = opts.epsilon;
    let above = |nu: f64| -> Result<bool> { Ok(initial_b(c, theta_z, eps, nu, opts)?.is_none_or(|b| b > 1.0)) };
    let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
    if above(0.0)? {
        let mut step = 1.0;
        lo = -step;
        while above(lo)? {
            hi = lo;
            step *= 2.0;
            lo = -step;
            if step > 1e15 {
                return Err(no_bracket(c, theta_z, eps, opts));
            }
        }
    } else {
        let mut step = 1.0;
        hi = step;
        while !above(hi)? {
            lo = hi;
            step *= 2.0;
            hi = step;
            if step > 1e15 {
                return Err(no_bracket(c, theta_z, eps, opts));
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

/// Largest `epsilon` (by log bisection) whose backward pass keeps `b_0` in `[0.5, 2]`.
fn shoot_epsilon(c: &ConstantsTable, theta_z: &[Mat], opts: &ScalarOptions) -> Result<f64> {
    let b0 = |eps: f64| initial_b(c, theta_z, eps, 0.0, opts);
    let inside = |b: f64| (0.5..=2.0).contains(&b);
    let (mut lo, mut hi) = (opts.epsilon, opts.epsilon);
    match b0(opts.epsilon)? {
        Some(b) if inside(b) => return Ok(opts.epsilon),
        Some(b) if b < 0.5 => {
            while let Some(b) = b0(hi)? {
                if inside(b) {
                    return Ok(hi);
                }
                if b > 2.0 {
                    break;
                }
                lo = hi;
                hi *= 2.0;
                if hi > 1.0 {
                    return Err(no_bracket(c, theta_z, opts.epsilon, opts));
                }
            }
        }
        _ => {
            while b0(lo)?.is_none_or(|b| b > 2.0) {
                hi = lo;
                lo *= 0.5;
                if lo < 1e-300 {
                    return Err(no_bracket(c, theta_z, opts.epsilon, opts));
                }
            }
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        match b0(mid)? {
            Some(b) if inside(b) => return Ok(mid),
            Some(b) if b < 0.5 => lo = mid,
            _ => hi = mid,
        }
    }
    Err(no_bracket(c, theta_z, opts.epsilon, opts))
}

fn no_bracket(c: &ConstantsTable, theta_z: &[Mat], eps: f64, opts: &ScalarOptions) -> Error {
    match backward_pass(c, theta_z, eps, 0.0, opts) {
        Err(e) => e,
        Ok(_) => Error::NoRootFound {
            step: 0,
            lo: opts.grid_lo,
            hi: opts.grid_hi,
            at_lo: f64::NAN,
            at_hi: f64::NAN,
        },
    }
}
