//! Finite-horizon tracking LQR gains.

use crate::error::{Error, Result};
use crate::matcore::{self, Mat, Vector};
use crate::model::{self, SystemModel};

/// Per-step gains of the tracking law `u_t = -K_t x_t + D_t x_*`.
///
/// `phi` and `dbar` have `n + 1` entries, `k` and `d` have `n`. The leader
/// and follower blocks are the first `d1` and the remaining rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub phi: Vec<Mat>,
    pub k: Vec<Mat>,
    pub dbar: Vec<Mat>,
    pub d: Vec<Mat>,
    pub d1: usize,
    pub k_l: Vec<Mat>,
    pub k_f: Vec<Mat>,
    pub d_l: Vec<Mat>,
    pub d_f: Vec<Mat>,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.k.len()
    }

    /// `A - B K_t`.
    pub fn closed_loop(&self, model: &SystemModel, t: usize) -> Mat {
        &model.a - model.b() * &self.k[t]
    }
}

fn riccati(
    a: &Mat,
    b: &Mat,
    g: &Mat,
    f: &Mat,
    f_n: &Mat,
    n: usize,
    d1: usize,
) -> Result<GainSchedule> {
    let d0 = a.nrows();
    let m = b.ncols();
    let mut phi = vec![Mat::zeros(d0, d0); n + 1];
    let mut dbar = vec![Mat::zeros(d0, d0); n + 1];
    let mut k = vec![Mat::zeros(m, d0); n];
    let mut d = vec![Mat::zeros(m, d0); n];
    phi[n] = f_n.clone();
    dbar[n] = f_n.clone();
    for t in (0..n).rev() {
        let bt_phi = b.transpose() * &phi[t + 1];
        let inner = g + &bt_phi * b;
        if inner.nrows() > 0 && matcore::min_eig(&inner) < 1e-12 {
            return Err(Error::SingularInnovation { step: t });
        }
        let chol = matcore::symmetrize(&inner)
            .cholesky()
            .ok_or(Error::SingularInnovation { step: t })?;
        k[t] = chol.solve(&(&bt_phi * a));
        // The offset uses the next-step tracking matrix.
        d[t] = chol.solve(&(b.transpose() * &dbar[t + 1]));
        let next = f + a.transpose() * &phi[t + 1] * a - a.transpose() * bt_phi.transpose() * &k[t];
        phi[t] = matcore::symmetrize(&next);
        dbar[t] = (a - b * &k[t]).transpose() * &dbar[t + 1] + f;
    }
    split_gains(
        GainSchedule {
            phi,
            k,
            dbar,
            d,
            d1,
            k_l: Vec::new(),
            k_f: Vec::new(),
            d_l: Vec::new(),
            d_f: Vec::new(),
        },
        d1,
    )
}

/// Joint-input Riccati recursion with offsets for a target known to both agents.
pub fn backward_riccati(model: &SystemModel) -> Result<GainSchedule> {
    riccati(
        &model.a,
        &model.b(),
        &model.g(),
        &model.f,
        &model.f_n,
        model.n,
        model.d1(),
    )
}

/// Split `K_t` and `D_t` into leader rows `[0, d1)` and follower rows `[d1, ..)`.
pub fn split_gains(mut schedule: GainSchedule, d1: usize) -> Result<GainSchedule> {
    let rows = schedule.k.first().map_or(d1, |k| k.nrows());
    if d1 > rows {
        return Err(Error::DimensionMismatch(format!(
            "leader block of {d1} rows exceeds the {rows}-row gain"
        )));
    }
    let top = |m: &Mat| m.rows(0, d1).into_owned();
    let bottom = |m: &Mat| m.rows(d1, m.nrows() - d1).into_owned();
    schedule.k_l = schedule.k.iter().map(top).collect();
    schedule.k_f = schedule.k.iter().map(bottom).collect();
    schedule.d_l = schedule.d.iter().map(top).collect();
    schedule.d_f = schedule.d.iter().map(bottom).collect();
    schedule.d1 = d1;
    Ok(schedule)
}

/// Schedule for a leader acting alone on `(A, B1)`; follower rows are zero.
pub fn leader_only_gains(model: &SystemModel) -> Result<GainSchedule> {
    let rank = model::controllability_rank(&model.a, &model.b1);
    if rank < model.d0() {
        return Err(Error::NotControllable {
            rank,
            dim: model.d0(),
        });
    }
    let solo = riccati(
        &model.a,
        &model.b1,
        &model.g1,
        &model.f,
        &model.f_n,
        model.n,
        model.d1(),
    )?;
    let pad = |m: &Mat| {
        let mut out = Mat::zeros(model.d1() + model.d2(), m.ncols());
        out.rows_mut(0, model.d1()).copy_from(m);
        out
    };
    let schedule = GainSchedule {
        k: solo.k.iter().map(pad).collect(),
        d: solo.d.iter().map(pad).collect(),
        ..solo
    };
    split_gains(schedule, model.d1())
}

/// Joint input when the target is common knowledge.
pub fn excomm_inputs(schedule: &GainSchedule, t: usize, x: &Vector, x_star: &Vector) -> Vector {
    -&schedule.k[t] * x + &schedule.d[t] * x_star
}
