//! Test-only oracles and random instances.
#![allow(dead_code)]

use implicit_lqg::channel::ChannelSetup;
use implicit_lqg::gains::GainSchedule;
use implicit_lqg::matcore::{self, Mat, Vector};
use implicit_lqg::model::SystemModel;
use implicit_lqg::power::PowerSchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| {
        let u: f64 = rng.random_range(-1.0..1.0);
        let v: f64 = rng.random_range(-1.0..1.0);
        u + v
    })
}

/// `M M^T / d + floor I`.
pub fn spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> Mat {
    let m = normal_mat(rng, d, d);
    matcore::symmetrize(&(&m * m.transpose() / d as f64 + Mat::identity(d, d) * floor))
}

fn base(rng: &mut ChaCha8Rng, d0: usize, b1: Mat, d2: usize, n: usize) -> SystemModel {
    let d1 = b1.ncols();
    SystemModel {
        a: normal_mat(rng, d0, d0) * 0.5 + Mat::identity(d0, d0),
        b1,
        b2: normal_mat(rng, d0, d2),
        w: spd(rng, d0, 0.05),
        f: spd(rng, d0, 0.1),
        f_n: spd(rng, d0, 1.0),
        g1: spd(rng, d1, 0.5),
        g2: spd(rng, d2, 0.5),
        sigma0: spd(rng, d0, 0.5),
        x0: spd(rng, d0, 0.1),
        n,
    }
}

/// A controllable model whose leader input matrix is square and invertible.
pub fn random_fa_model(rng: &mut ChaCha8Rng, d0: usize, n: usize) -> SystemModel {
    loop {
        let b1 = normal_mat(rng, d0, d0) + Mat::identity(d0, d0) * 2.0;
        let d2 = rng.random_range(1..=2);
        let m = base(rng, d0, b1, d2, n);
        if m.validate().is_ok() && matcore::rank(&m.b1) == d0 {
            return m;
        }
    }
}

/// A controllable model with `rank(B1) = r` and `d0 = r tau`.
pub fn random_ua_model(rng: &mut ChaCha8Rng, r: usize, tau: usize, n: usize) -> SystemModel {
    let d0 = r * tau;
    loop {
        let d1 = r + rng.random_range(0..=1);
        let b1 = normal_mat(rng, d0, r) * normal_mat(rng, r, d1);
        let m = base(rng, d0, b1, 2, n);
        if m.validate().is_ok() && matcore::rank(&m.b1) == r {
            return m;
        }
    }
}

/// Exact first and second moments of the closed loop under implicit signalling.
///
/// Propagates the joint covariance of `(x, x_*, xhat, xi)` with the whitened
/// message `xi`, independently of the cost recursion. The target is drawn
/// from `N(0, Sigma_0)` and `x_0` from `N(0, X_0)`.
pub struct ExactMoments {
    pub total: f64,
    pub stage: Vec<f64>,
    pub terminal: f64,
    /// `Cov(x_t - x_*)`.
    pub cov_z: Vec<Mat>,
    /// `Cov(x_* - xhat_t)`.
    pub cov_e: Vec<Mat>,
}

pub fn exact_moments(
    model: &SystemModel,
    gains: &GainSchedule,
    channel: &ChannelSetup,
    schedule: &PowerSchedule,
) -> ExactMoments {
    let d = model.d0();
    let b = model.b();
    let g = model.g();
    let embed = model.leader_embedding();
    let m = model.d1() + model.d2();
    let i = Mat::identity(d, d);
    let blk = |k: usize| -> Mat {
        let mut s = Mat::zeros(d, 4 * d);
        s.view_mut((0, k * d), (d, d)).copy_from(&i);
        s
    };
    let (sx, sstar, shat, sxi) = (blk(0), blk(1), blk(2), blk(3));
    let sz = &sx - &sstar;
    let se = &sstar - &shat;

    let s0_half = matcore::psd_sqrt(&model.sigma0).unwrap();
    let mut p = Mat::zeros(4 * d, 4 * d);
    p.view_mut((0, 0), (d, d)).copy_from(&model.x0);
    p.view_mut((d, d), (d, d)).copy_from(&model.sigma0);
    p.view_mut((3 * d, 3 * d), (d, d)).copy_from(&i);
    p.view_mut((3 * d, d), (d, d)).copy_from(&s0_half);
    p.view_mut((d, 3 * d), (d, d)).copy_from(&s0_half);
    let mut root = s0_half;

    let quad = |w: &Mat, lin: &Mat, p: &Mat| (lin.transpose() * w * lin).component_mul(p).sum();
    let mut out = ExactMoments {
        total: 0.0,
        stage: Vec::new(),
        terminal: 0.0,
        cov_z: Vec::new(),
        cov_e: Vec::new(),
    };
    for t in 0..model.n {
        out.cov_z.push(&sz * &p * sz.transpose());
        out.cov_e.push(&se * &p * se.transpose());
        let step = channel.step(&schedule.lambda[t], t).unwrap();
        let k = &gains.k[t];
        let dt = &gains.d[t];
        let u: Mat = -k * &sx + dt * &shat + &embed * &step.signal * &sxi;
        assert_eq!(u.nrows(), m);
        let stage = quad(&model.f, &sz, &p) + quad(&g, &u, &p);
        out.stage.push(stage);
        out.total += stage;

        let y_lin = &model.b1 * &step.signal * &sxi;
        let (next_root, o) = matcore::contract_root(&root, &step.v_half);
        let ov = o * &step.v_inv_half;
        let x_next = &model.a * &sx + &b * &u;
        let hat_next = &shat + &root * &step.gain * &y_lin;
        let xi_next = &ov * (&sxi - &step.gain * &y_lin);
        let mut tr = Mat::zeros(4 * d, 4 * d);
        tr.rows_mut(0, d).copy_from(&x_next);
        tr.rows_mut(d, d).copy_from(&sstar);
        tr.rows_mut(2 * d, d).copy_from(&hat_next);
        tr.rows_mut(3 * d, d).copy_from(&xi_next);
        let mut nw = Mat::zeros(4 * d, d);
        nw.rows_mut(0, d).copy_from(&i);
        nw.rows_mut(2 * d, d).copy_from(&(&root * &step.gain));
        nw.rows_mut(3 * d, d).copy_from(&(-&ov * &step.gain));
        p = matcore::symmetrize(&(&tr * &p * tr.transpose() + &nw * &model.w * nw.transpose()));
        root = next_root;
    }
    out.cov_z.push(&sz * &p * sz.transpose());
    out.cov_e.push(&se * &p * se.transpose());
    out.terminal = quad(&model.f_n, &sz, &p);
    out.total += out.terminal;
    out
}

/// Expected cost of `u_t = -K_t x_t + D_t x_*` with `x_0 ~ N(m0, X_0)` and a known target.
pub fn tracking_policy_cost(model: &SystemModel, gains: &GainSchedule, m0: &Vector, x_star: &Vector) -> f64 {
    let b = model.b();
    let g = model.g();
    let (mut mean, mut cov) = (m0.clone(), model.x0.clone());
    let mut total = 0.0;
    for t in 0..model.n {
        let k = &gains.k[t];
        let u_mean = -k * &mean + &gains.d[t] * x_star;
        let z = &mean - x_star;
        total += (z.transpose() * &model.f * &z)[(0, 0)] + (u_mean.transpose() * &g * &u_mean)[(0, 0)];
        total += (&model.f + k.transpose() * &g * k).component_mul(&cov).sum();
        let abar = &model.a - &b * k;
        mean = &model.a * &mean + &b * u_mean;
        cov = &abar * cov * abar.transpose() + &model.w;
    }
    let z = &mean - x_star;
    total + (z.transpose() * &model.f_n * &z)[(0, 0)] + model.f_n.component_mul(&cov).sum()
}

/// Minimum expected cost over all causal affine state-feedback policies.
///
/// With perfect state observation any causal policy is a causal function of
/// `(x_0, w_0, ..., w_{t-1})`, so the minimum splits into a least-squares
/// problem over the mean inputs and one over causal linear noise feedback.
pub fn brute_force_tracking(model: &SystemModel, m0: &Vector, x_star: &Vector) -> f64 {
    let (d, m, n) = (model.d0(), model.d1() + model.d2(), model.n);
    let b = model.b();
    let g = model.g();
    let fh = matcore::psd_sqrt(&model.f).unwrap();
    let fnh = matcore::psd_sqrt(&model.f_n).unwrap();
    let gh = matcore::psd_sqrt(&g).unwrap();
    // x_t = Phi_t x_0 + sum_s Gu[t][s] u_s + sum_s Gw[t][s] w_s
    let pow = |k: usize| (0..k).fold(Mat::identity(d, d), |acc, _| &model.a * acc);
    let nu = n * m;
    let state_u = |t: usize| -> Mat {
        let mut out = Mat::zeros(d, nu);
        for s in 0..t {
            out.view_mut((0, s * m), (d, m)).copy_from(&(pow(t - 1 - s) * &b));
        }
        out
    };
    let nxi = d + n * d;
    let state_xi = |t: usize| -> Mat {
        let mut out = Mat::zeros(d, nxi);
        out.view_mut((0, 0), (d, d)).copy_from(&pow(t));
        for s in 0..t {
            out.view_mut((0, d + s * d), (d, d)).copy_from(&pow(t - 1 - s));
        }
        out
    };
    let weight = |t: usize| if t == n { &fnh } else { &fh };

    // Mean part: minimize sum |Fh (Phi m0 + Gu c - x_*)|^2 + |Gh c_t|^2 over c.
    let rows = (n + 1) * d + n * m;
    let mut a_mat = Mat::zeros(rows, nu);
    let mut rhs = Vector::zeros(rows);
    for t in 0..=n {
        let w = weight(t);
        a_mat.rows_mut(t * d, d).copy_from(&(w * state_u(t)));
        rhs.rows_mut(t * d, d).copy_from(&(-w * (pow(t) * m0 - x_star)));
    }
    for t in 0..n {
        a_mat.view_mut(((n + 1) * d + t * m, t * m), (m, m)).copy_from(&gh);
    }
    let c = a_mat.clone().svd(true, true).solve(&rhs, 1e-14).unwrap();
    let mean_cost = (&a_mat * c - rhs).norm_squared();

    // Covariance part: u_t = M_t xi with M_t supported on x_0, w_0 .. w_{t-1}.
    let mut cov = Mat::zeros(nxi, nxi);
    cov.view_mut((0, 0), (d, d)).copy_from(&model.x0);
    for s in 0..n {
        cov.view_mut((d + s * d, d + s * d), (d, d)).copy_from(&model.w);
    }
    let ch = matcore::psd_sqrt(&cov).unwrap();
    let mut free = Vec::new();
    for t in 0..n {
        for row in 0..m {
            for col in 0..d + t * d {
                free.push((t, row, col));
            }
        }
    }
    let mut blocks: Vec<(Mat, Vec<Mat>)> = Vec::new();
    for t in 0..=n {
        let w = weight(t);
        let base = w * state_xi(t) * &ch;
        let su = w * state_u(t);
        let cols = free
            .iter()
            .map(|&(s, row, col)| {
                let mut e = Mat::zeros(nu, nxi);
                e[(s * m + row, col)] = 1.0;
                &su * e * &ch
            })
            .collect();
        blocks.push((base, cols));
    }
    for t in 0..n {
        let cols = free
            .iter()
            .map(|&(s, row, col)| {
                let mut e = Mat::zeros(m, nxi);
                if s == t {
                    e[(row, col)] = 1.0;
                }
                &gh * e * &ch
            })
            .collect();
        blocks.push((Mat::zeros(m, nxi), cols));
    }
    let len: usize = blocks.iter().map(|(b0, _)| b0.len()).sum();
    let mut design = Mat::zeros(len, free.len());
    let mut target = Vector::zeros(len);
    let mut at = 0;
    for (b0, cols) in &blocks {
        let k = b0.len();
        target.rows_mut(at, k).copy_from(&(-Vector::from_column_slice(b0.as_slice())));
        for (j, c) in cols.iter().enumerate() {
            design.view_mut((at, j), (k, 1)).copy_from(&Vector::from_column_slice(c.as_slice()));
        }
        at += k;
    }
    let sol = design.clone().svd(true, true).solve(&target, 1e-14).unwrap();
    let cov_cost = (&design * sol - target).norm_squared();
    mean_cost + cov_cost
}

/// Owned data for one Hamiltonian evaluation on a random fully actuated instance.
pub struct HamiltonianCase {
    pub model: SystemModel,
    pub gains: GainSchedule,
    pub channel: ChannelSetup,
    pub t: usize,
    pub z: Mat,
    pub sigma: Mat,
    pub lambda: Vector,
    pub theta_z: Mat,
    pub theta_sigma: Mat,
}

pub fn hamiltonian_case(rng: &mut ChaCha8Rng) -> HamiltonianCase {
    let d0 = rng.random_range(2..=5);
    let n = 4;
    let model = random_fa_model(rng, d0, n);
    let gains = implicit_lqg::gains::backward_riccati(&model).unwrap();
    let channel = ChannelSetup::new(&model).unwrap();
    HamiltonianCase {
        t: rng.random_range(0..n),
        z: spd(rng, d0, 0.2),
        sigma: spd(rng, d0, 0.5),
        lambda: Vector::from_fn(d0, |_, _| rng.random_range(0.2..3.0)),
        theta_z: spd(rng, d0, 0.2),
        theta_sigma: spd(rng, d0, 0.1) * 5.0,
        model,
        gains,
        channel,
    }
}

/// Central differences of `f` along each symmetric unit direction, as a symmetric gradient.
pub fn symmetric_gradient(sigma: &Mat, h: f64, f: impl Fn(&Mat) -> f64) -> Mat {
    let d = sigma.nrows();
    let mut grad = Mat::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut e = Mat::zeros(d, d);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            let slope = (f(&(sigma + &e * h)) - f(&(sigma - &e * h))) / (2.0 * h);
            if i == j {
                grad[(i, i)] = slope;
            } else {
                grad[(i, j)] = slope / 2.0;
                grad[(j, i)] = slope / 2.0;
            }
        }
    }
    grad
}
