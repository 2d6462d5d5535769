//! Problem instances and the two reference presets.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matcore::{self, Mat, Vector};

/// Plant, noise, cost and prior data for one decentralized tracking problem.
///
/// The leader drives `b1` and knows the target, the follower drives `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub w: Mat,
    pub f: Mat,
    pub f_n: Mat,
    pub g1: Mat,
    pub g2: Mat,
    pub sigma0: Mat,
    pub x0: Mat,
    pub n: usize,
}

impl SystemModel {
    pub fn d0(&self) -> usize {
        self.a.nrows()
    }

    pub fn d1(&self) -> usize {
        self.b1.ncols()
    }

    pub fn d2(&self) -> usize {
        self.b2.ncols()
    }

    /// Joint input matrix `[B1 B2]`.
    pub fn b(&self) -> Mat {
        let mut b = Mat::zeros(self.d0(), self.d1() + self.d2());
        b.columns_mut(0, self.d1()).copy_from(&self.b1);
        b.columns_mut(self.d1(), self.d2()).copy_from(&self.b2);
        b
    }

    /// Joint input cost `diag(G1, G2)`.
    pub fn g(&self) -> Mat {
        let (d1, d2) = (self.d1(), self.d2());
        let mut g = Mat::zeros(d1 + d2, d1 + d2);
        g.view_mut((0, 0), (d1, d1)).copy_from(&self.g1);
        g.view_mut((d1, d1), (d2, d2)).copy_from(&self.g2);
        g
    }

    /// Embedding of the leader input into the joint input, `[I; 0]`.
    pub fn leader_embedding(&self) -> Mat {
        let mut e = Mat::zeros(self.d1() + self.d2(), self.d1());
        e.view_mut((0, 0), (self.d1(), self.d1()))
            .fill_with_identity();
        e
    }

    pub fn with_horizon(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    /// Check dimensions, definiteness and controllability of `(A, [B1 B2])`.
    pub fn validate(&self) -> std::result::Result<(), ValidationError> {
        let d0 = self.d0();
        let square = |name: &'static str, m: &Mat, dim: usize| {
            if m.shape() != (dim, dim) {
                Err(ValidationError::new(
                    name,
                    format!("expected {dim}x{dim}, got {}x{}", m.nrows(), m.ncols()),
                ))
            } else {
                Ok(())
            }
        };
        square("a", &self.a, d0)?;
        if self.b1.nrows() != d0 {
            return Err(ValidationError::new("b1", format!("expected {d0} rows")));
        }
        if self.b2.nrows() != d0 {
            return Err(ValidationError::new("b2", format!("expected {d0} rows")));
        }
        square("w", &self.w, d0)?;
        square("f", &self.f, d0)?;
        square("f_n", &self.f_n, d0)?;
        square("sigma0", &self.sigma0, d0)?;
        square("x0", &self.x0, d0)?;
        square("g1", &self.g1, self.d1())?;
        square("g2", &self.g2, self.d2())?;
        if self.n == 0 {
            return Err(ValidationError::new("n", "horizon must be at least 1".into()));
        }
        let pd = |name: &'static str, m: &Mat| -> std::result::Result<(), ValidationError> {
            matcore::check_symmetric(m).map_err(|e| ValidationError::new(name, e.to_string()))?;
            let lo = matcore::min_eig(m);
            if lo <= 0.0 {
                return Err(ValidationError::new(
                    name,
                    format!("must be positive definite, min eigenvalue {lo}"),
                ));
            }
            Ok(())
        };
        let psd = |name: &'static str, m: &Mat| -> std::result::Result<(), ValidationError> {
            matcore::sym_eig(m).map_err(|e| ValidationError::new(name, e.to_string()))?;
            Ok(())
        };
        pd("w", &self.w)?;
        pd("sigma0", &self.sigma0)?;
        psd("f", &self.f)?;
        psd("f_n", &self.f_n)?;
        psd("g1", &self.g1)?;
        psd("g2", &self.g2)?;
        psd("x0", &self.x0)?;
        let r = controllability_rank(&self.a, &self.b());
        if r < d0 {
            return Err(ValidationError::new(
                "b1",
                Error::NotControllable { rank: r, dim: d0 }.to_string(),
            ));
        }
        Ok(())
    }
}

/// A model field that failed validation and why.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field}: {reason}")]
pub struct ValidationError {
    pub field: &'static str,
    pub reason: String,
}

impl ValidationError {
    fn new(field: &'static str, reason: String) -> Self {
        Self { field, reason }
    }
}

/// Rank of `[B, AB, ..., A^{d-1}B]` with threshold `1e-8 * sigma_max`.
pub fn controllability_rank(a: &Mat, b: &Mat) -> usize {
    let d = a.nrows();
    let m = b.ncols();
    let mut c = Mat::zeros(d, d * m);
    let mut block = b.clone();
    for i in 0..d {
        c.columns_mut(i * m, m).copy_from(&block);
        block = a * block;
    }
    let s = c.singular_values();
    let top = s.max();
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > 1e-8 * top).count()
}

pub fn is_controllable(a: &Mat, b: &Mat) -> bool {
    controllability_rank(a, b) == a.nrows()
}

fn diag(v: &[f64]) -> Mat {
    Mat::from_diagonal(&Vector::from_row_slice(v))
}

/// Default horizon for both presets.
pub const DEFAULT_HORIZON: usize = 30;

/// Fully actuated leader: four states, four leader inputs, two follower inputs.
pub fn fully_actuated_preset() -> SystemModel {
    SystemModel {
        a: DMatrix::from_row_slice(
            4,
            4,
            &[
                1.5, 0.2, 0.0, 0.7, //
                0.0, 0.5, 0.5, 0.3, //
                0.2, 0.0, 1.9, 0.4, //
                0.3, 0.0, 0.3, 1.7,
            ],
        ),
        b1: DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 2.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 1.2, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.3,
            ],
        ),
        b2: DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 3.0]),
        w: Mat::identity(4, 4) * 0.1,
        f: diag(&[2.0, 1.0, 1.0, 2.0]),
        f_n: Mat::identity(4, 4) * 10.0,
        g1: diag(&[2.0, 2.0, 4.0, 6.0]),
        g2: diag(&[2.0, 2.0]),
        sigma0: Mat::identity(4, 4) * 5.0,
        x0: Mat::identity(4, 4),
        n: DEFAULT_HORIZON,
    }
}

/// Under-actuated leader: rank-two leader input on a four-state plant.
pub fn under_actuated_preset() -> SystemModel {
    SystemModel {
        a: DMatrix::from_row_slice(
            4,
            4,
            &[
                1.5, 0.2, 0.0, 0.0, //
                0.0, 2.2, 0.5, 0.3, //
                0.0, 0.2, 0.9, 0.4, //
                0.2, 0.0, 0.3, 0.7,
            ],
        ),
        b1: DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.2, 0.0, 0.0]),
        b2: DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.5]),
        w: Mat::identity(4, 4) * 0.1,
        f: diag(&[2.0, 1.0, 1.0, 2.0]),
        f_n: Mat::identity(4, 4) * 10.0,
        g1: diag(&[2.0, 2.0]),
        g2: diag(&[3.0, 3.0]),
        sigma0: Mat::identity(4, 4) * 5.0,
        x0: Mat::identity(4, 4),
        n: DEFAULT_HORIZON,
    }
}

/// Target used for the fully actuated comparison.
pub fn fully_actuated_target() -> Vector {
    Vector::from_row_slice(&[-1.0, 2.0, 2.0, -2.0])
}

/// Target used for the under-actuated comparison.
pub fn under_actuated_target() -> Vector {
    Vector::from_row_slice(&[2.0, -2.0, 3.0, 2.0])
}

pub const PRESET_NAMES: [&str; 2] = ["fully-actuated-vi-a", "under-actuated-vi-b"];

pub fn preset(name: &str) -> Option<SystemModel> {
    match name {
        "fully-actuated-vi-a" => Some(fully_actuated_preset()),
        "under-actuated-vi-b" => Some(under_actuated_preset()),
        _ => None,
    }
}

/// The comparison target that goes with a preset.
pub fn preset_target(name: &str) -> Option<Vector> {
    match name {
        "fully-actuated-vi-a" => Some(fully_actuated_target()),
        "under-actuated-vi-b" => Some(under_actuated_target()),
        _ => None,
    }
}

pub(crate) fn expect_dims(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected length {want}, got {got}"
        )));
    }
    Ok(())
}
