//! Dense linear-algebra primitives on `DMatrix<f64>`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry accepted before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Negative eigenvalues down to this (relative) level are treated as roundoff.
pub const PSD_TOL: f64 = 1e-6;
/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Orthonormal eigenvectors and descending nonnegative eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub u: Mat,
    pub h: Vector,
}

impl EigenPair {
    pub fn min(&self) -> f64 {
        self.h.min()
    }

    pub fn reconstruct(&self) -> Mat {
        &self.u * Mat::from_diagonal(&self.h) * self.u.transpose()
    }
}

/// `B1 = gamma0 * [diag(psi1) 0; 0 0] * gamma1^T` with full orthonormal bases.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub gamma0: Mat,
    pub psi1: Vector,
    pub gamma1: Mat,
    pub r: usize,
}

impl SvdFactors {
    /// The rectangular `d0 x d1` middle factor.
    pub fn psi_bar(&self) -> Mat {
        let mut m = Mat::zeros(self.gamma0.nrows(), self.gamma1.nrows());
        for i in 0..self.r {
            m[(i, i)] = self.psi1[i];
        }
        m
    }

    pub fn reconstruct(&self) -> Mat {
        &self.gamma0 * self.psi_bar() * self.gamma1.transpose()
    }
}

pub fn asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).amax()
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

fn scale(m: &Mat) -> f64 {
    m.amax().max(1.0)
}

pub fn check_symmetric(m: &Mat) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * scale(m) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

fn sorted_eigen(m: &Mat) -> (Mat, Vector) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut u = Mat::zeros(n, n);
    let mut h = Vector::zeros(n);
    for (col, &i) in idx.iter().enumerate() {
        u.set_column(col, &eig.eigenvectors.column(i));
        h[col] = eig.eigenvalues[i];
    }
    (u, h)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eig(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Eigendecomposition of a symmetric PSD matrix, eigenvalues sorted descending
/// and clamped at zero.
pub fn sym_eig(m: &Mat) -> Result<EigenPair> {
    check_symmetric(m)?;
    let (u, mut h) = sorted_eigen(m);
    let floor = -PSD_TOL * scale(m);
    if let Some(&lo) = h.iter().last() {
        if lo < floor {
            return Err(Error::NotPsd { min_eig: lo });
        }
    }
    h.iter_mut().for_each(|x| *x = x.max(0.0));
    Ok(EigenPair { u, h })
}

/// Symmetric PSD square root.
pub fn psd_sqrt(m: &Mat) -> Result<Mat> {
    let eig = sym_eig(m)?;
    let root = eig.h.map(f64::sqrt);
    Ok(symmetrize(
        &(&eig.u * Mat::from_diagonal(&root) * eig.u.transpose()),
    ))
}

/// Inverse of the symmetric PD square root.
pub fn pd_inv_sqrt(m: &Mat, floor: f64) -> Result<Mat> {
    check_symmetric(m)?;
    let (u, h) = sorted_eigen(m);
    let lo = h.min();
    if lo < floor {
        return Err(Error::NotPd { min_eig: lo });
    }
    let inv = h.map(|x| 1.0 / x.sqrt());
    Ok(symmetrize(&(&u * Mat::from_diagonal(&inv) * u.transpose())))
}

fn sorted_svd(m: &Mat) -> (Mat, Vector, Mat) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested u");
    let v = svd.v_t.expect("requested v_t").transpose();
    let k = svd.singular_values.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut us = Mat::zeros(u.nrows(), k);
    let mut vs = Mat::zeros(v.nrows(), k);
    let mut s = Vector::zeros(k);
    for (col, &i) in idx.iter().enumerate() {
        us.set_column(col, &u.column(i));
        vs.set_column(col, &v.column(i));
        s[col] = svd.singular_values[i];
    }
    (us, s, vs)
}

/// Numerical rank with threshold `RANK_TOL * sigma_max`.
pub fn rank(m: &Mat) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.singular_values();
    let top = s.max();
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > RANK_TOL * top).count()
}

/// Left inverse of a tall full-column-rank matrix.
pub fn pinv_full_rank(q: &Mat) -> Result<Mat> {
    let (rows, cols) = q.shape();
    if rows < cols {
        return Err(Error::RankDeficient {
            rank: rows,
            required: cols,
        });
    }
    let (u, s, v) = sorted_svd(q);
    let top = s.max();
    let r = s.iter().filter(|&&x| x > RANK_TOL * top).count();
    if top == 0.0 || r < cols {
        return Err(Error::RankDeficient {
            rank: r,
            required: cols,
        });
    }
    let inv = s.map(|x| 1.0 / x);
    Ok(v * Mat::from_diagonal(&inv) * u.transpose())
}

/// Extend orthonormal columns to a full orthonormal basis of R^n.
pub fn complete_basis(cols: &Mat, n: usize) -> Mat {
    let mut basis: Vec<Vector> = cols.column_iter().map(|c| c.into_owned()).collect();
    let mut candidate = 0;
    while basis.len() < n && candidate < n {
        let mut v = Vector::zeros(n);
        v[candidate] = 1.0;
        candidate += 1;
        // Two passes of Gram-Schmidt keep the completion orthogonal to roundoff.
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    }
    Mat::from_columns(&basis)
}

pub fn svd_factor(b1: &Mat) -> Result<SvdFactors> {
    let (d0, d1) = b1.shape();
    if b1.is_empty() || b1.amax() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let (u, s, v) = sorted_svd(b1);
    let top = s[0];
    let r = s.iter().filter(|&&x| x > RANK_TOL * top).count();
    let gamma0 = complete_basis(&u.columns(0, r).into_owned(), d0);
    let gamma1 = complete_basis(&v.columns(0, r).into_owned(), d1);
    Ok(SvdFactors {
        gamma0,
        psi1: s.rows(0, r).into_owned(),
        gamma1,
        r,
    })
}

/// Solve `A X + X A = rhs` for symmetric positive definite `A`.
pub fn solve_sylvester_lyapunov(a: &Mat, rhs: &Mat) -> Result<Mat> {
    check_symmetric(a)?;
    if rhs.shape() != a.shape() {
        return Err(Error::DimensionMismatch(format!(
            "Sylvester right-hand side is {:?}, expected {:?}",
            rhs.shape(),
            a.shape()
        )));
    }
    let (u, lam) = sorted_eigen(a);
    let lo = lam.min();
    if lo <= 1e-12 {
        return Err(Error::NotPd { min_eig: lo });
    }
    let r = u.transpose() * rhs * &u;
    let theta = Mat::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] / (lam[i] + lam[j]));
    Ok(&u * theta * u.transpose())
}

/// Symmetric root and orthogonal factor for a covariance contraction.
///
/// Given `root = S^{1/2}` and `v_half` with `v_half v_half^T = V`, returns
/// `R' = (root V root)^{1/2}` together with the orthogonal `O` such that
/// `R'^{-1} root = O v_half^{-1}`, without inverting `root`.
pub fn contract_root(root: &Mat, v_half: &Mat) -> (Mat, Mat) {
    let m = root * v_half;
    let (x, s, y) = jacobi_svd(&m);
    let next = symmetrize(&(&x * Mat::from_diagonal(&s) * x.transpose()));
    (next, x * y.transpose())
}

/// SVD of a square matrix by one-sided Jacobi rotations.
///
/// Used where singular values span many orders of magnitude: nalgebra's
/// bidiagonal SVD loses absolute accuracy in its closing 2x2 step when
/// the smaller singular value is tiny.
pub fn jacobi_svd(m: &Mat) -> (Mat, Vector, Mat) {
    let d = m.ncols();
    let mut u = m.clone();
    let mut v = Mat::identity(d, d);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut u, &mut v] {
                    for i in 0..mat.nrows() {
                        let (a, b) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * a - s * b;
                        mat[(i, q)] = s * a + c * b;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms = Vector::from_iterator(d, u.column_iter().map(|c| c.norm()));
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut x = Mat::zeros(m.nrows(), d);
    let mut y = Mat::zeros(d, d);
    let mut s = Vector::zeros(d);
    for (col, &i) in idx.iter().enumerate() {
        s[col] = norms[i];
        if norms[i] > 0.0 {
            x.set_column(col, &(u.column(i) / norms[i]));
        }
        y.set_column(col, &v.column(i));
    }
    // Re-orthonormalize so that vanishing columns still get a basis completion.
    let qr = x.clone().qr();
    let mut q = qr.q();
    for col in 0..d {
        if q.column(col).dot(&x.column(col)) < 0.0 {
            q.column_mut(col).neg_mut();
        }
    }
    (q, s, y)
}

/// Solve `M X = rhs` for symmetric positive definite `M`.
pub fn spd_solve(m: &Mat, rhs: &Mat) -> Option<Mat> {
    let chol = symmetrize(m).cholesky()?;
    if chol.l().diagonal().min() <= 1e-12 * scale(m).sqrt() {
        return None;
    }
    Some(chol.solve(rhs))
}
