//! Closed-form least-angle regression for unstructured low-rank matrix
//! regression, plus the truncated-SVD, singular-value-thresholding and
//! LS-TSVD baselines.
//!
//! The whole solution path is captured by two SVDs: one of the regressor
//! `Φ = U_Φ S_Φ V_Φᵀ` and one of the rotated data `U_Φᵀ Y = U S⁰ Vᵀ`. The
//! rank-r estimate shrinks the top r singular values by the (r+1)-th and
//! maps back through `V_Φ S_Φ⁻¹`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matrix::{svd, Matrix};

const FULL_RANK_TOL: f64 = 1e-10;

/// Precomputed factorizations from which the rank-r estimate is available
/// in closed form for every r.
#[derive(Debug, Clone)]
pub struct UnstructuredPath {
    /// Left singular vectors of Φ (p×m, orthonormal columns).
    pub u_phi: Matrix,
    /// Singular values of Φ, strictly positive.
    pub s_phi: DVector<f64>,
    /// Right singular vectors of Φ (m×m).
    pub v_phi: Matrix,
    /// Left singular vectors of `U_Φᵀ Y`.
    pub u_data: Matrix,
    /// Right singular vectors of `U_Φᵀ Y`.
    pub v_data: Matrix,
    /// Singular values of `U_Φᵀ Y`, descending.
    pub sigma0: DVector<f64>,
}

impl UnstructuredPath {
    /// Maximum representable rank, `min(m, n)`.
    pub fn max_rank(&self) -> usize {
        self.sigma0.len()
    }

    /// Shrunk coefficient `σ⁰_i − σ⁰_{r+1}` (0-based `i < r`), with the
    /// convention `σ⁰_{n̄+1} = 0` so `r = n̄` yields the least-squares fit.
    pub fn coefficient(&self, i: usize, r: usize) -> f64 {
        let threshold = if r < self.max_rank() {
            self.sigma0[r]
        } else {
            0.0
        };
        (self.sigma0[i] - threshold).max(0.0)
    }

    /// Number of strictly nonzero coefficients of the rank-r estimate.
    /// Smaller than `r` only when singular values tie at position r.
    pub fn effective_rank(&self, r: usize) -> usize {
        (0..r.min(self.max_rank()))
            .filter(|&i| self.coefficient(i, r) > 0.0)
            .count()
    }

    /// The rank-r LAR estimate `V_Φ S_Φ⁻¹ Σ_{i≤r} (σ⁰_i − σ⁰_{r+1}) û_i v̂_iᵀ`.
    pub fn lar_estimate(&self, r: usize) -> Result<Matrix> {
        if r == 0 || r > self.max_rank() {
            return Err(Error::InvalidArgument(format!(
                "rank {r} out of range 1..={}",
                self.max_rank()
            )));
        }
        let m = self.v_phi.nrows();
        let n = self.v_data.nrows();
        let mut shrunk = Matrix::zeros(m, n);
        for i in 0..r {
            let coeff = self.coefficient(i, r);
            if coeff > 0.0 {
                shrunk += self.u_data.column(i) * self.v_data.column(i).transpose() * coeff;
            }
        }
        let mut back = self.v_phi.clone();
        for j in 0..m {
            back.column_mut(j).scale_mut(1.0 / self.s_phi[j]);
        }
        Ok(back * shrunk)
    }
}

/// Builds the closed-form path from data `Y` and a full-column-rank
/// regressor `Φ`.
pub fn build_path(y: &Matrix, phi: &Matrix) -> Result<UnstructuredPath> {
    if y.nrows() != phi.nrows() {
        return Err(Error::Dimension(format!(
            "Y has {} rows but Phi has {}",
            y.nrows(),
            phi.nrows()
        )));
    }
    if phi.nrows() < phi.ncols() {
        return Err(Error::InvalidArgument(
            "regressor must have at least as many rows as columns".into(),
        ));
    }
    let f_phi = svd(phi)?;
    let s_max = f_phi.s[0];
    let s_min = f_phi.s[f_phi.s.len() - 1];
    if s_min <= FULL_RANK_TOL * s_max {
        return Err(Error::IllConditioned(format!(
            "regressor is rank deficient (sigma_min/sigma_max = {:.2e})",
            s_min / s_max
        )));
    }
    let rotated = f_phi.u.transpose() * y;
    let f_data = svd(&rotated)?;
    Ok(UnstructuredPath {
        u_phi: f_phi.u,
        s_phi: f_phi.s,
        v_phi: f_phi.v,
        u_data: f_data.u,
        v_data: f_data.v,
        sigma0: f_data.s,
    })
}

/// Best rank-r approximation in Frobenius norm: keep the leading r
/// singular triplets.
pub fn truncated_svd_approx(y: &Matrix, r: usize) -> Result<Matrix> {
    let max_rank = y.nrows().min(y.ncols());
    if r == 0 || r > max_rank {
        return Err(Error::InvalidArgument(format!(
            "rank {r} out of range 1..={max_rank}"
        )));
    }
    let f = svd(y)?;
    let mut out = Matrix::zeros(y.nrows(), y.ncols());
    for i in 0..r {
        out += f.u.column(i) * f.v.column(i).transpose() * f.s[i];
    }
    Ok(out)
}

/// Soft-thresholds the singular values of `Y` at level `lambda`, keeping
/// the singular vectors. Proximal operator of the nuclear norm.
pub fn svt_shrink(y: &Matrix, lambda: f64) -> Result<Matrix> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("negative threshold".into()));
    }
    let f = svd(y)?;
    let mut out = Matrix::zeros(y.nrows(), y.ncols());
    for i in 0..f.s.len() {
        let s = f.s[i] - lambda;
        if s > 0.0 {
            out += f.u.column(i) * f.v.column(i).transpose() * s;
        }
    }
    Ok(out)
}

/// Two-step baseline: minimum-norm least squares followed by rank-r
/// truncation.
pub fn ls_tsvd(y: &Matrix, phi: &Matrix, r: usize) -> Result<Matrix> {
    let path = build_path(y, phi)?; // reuses the full-rank check
    // Least squares: X_LS = V_Φ S_Φ⁻¹ U_Φᵀ Y.
    let mut back = path.v_phi.clone();
    for j in 0..back.ncols() {
        back.column_mut(j).scale_mut(1.0 / path.s_phi[j]);
    }
    let x_ls = back * (path.u_phi.transpose() * y);
    truncated_svd_approx(&x_ls, r)
}
