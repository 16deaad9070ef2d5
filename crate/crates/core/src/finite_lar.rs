//! Finite-dictionary least-angle regression with optional lasso
//! modification.
//!
//! This is the standard path algorithm: starting from zero coefficients,
//! covariates enter the active set one at a time and the fit moves along
//! the equiangular direction of the active covariates until the next one
//! reaches the same residual correlation. With the lasso modification, a
//! coefficient that crosses zero is removed from the active set before
//! continuing, which turns the path into the l1-regularization path.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Column dictionary with unit-norm covariates. Columns are normalized on
/// construction; the original scales are kept so coefficients can be mapped
/// back.
#[derive(Debug, Clone)]
pub struct Dictionary {
    columns: Matrix,
    scales: Vec<f64>,
}

impl Dictionary {
    /// Builds a dictionary from raw covariate columns, normalizing each to
    /// unit l2 norm.
    pub fn new(columns: Matrix) -> Result<Self> {
        if columns.ncols() == 0 {
            return Err(Error::InvalidArgument("empty dictionary".into()));
        }
        let mut cols = columns;
        let mut scales = Vec::with_capacity(cols.ncols());
        for j in 0..cols.ncols() {
            let norm = cols.column(j).norm();
            if norm <= 1e-14 {
                return Err(Error::InvalidArgument(format!(
                    "covariate {j} has zero norm"
                )));
            }
            cols.column_mut(j).scale_mut(1.0 / norm);
            scales.push(norm);
        }
        Ok(Self {
            columns: cols,
            scales,
        })
    }

    pub fn n_covariates(&self) -> usize {
        self.columns.ncols()
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Normalized covariate columns.
    pub fn columns(&self) -> &Matrix {
        &self.columns
    }

    /// Norm of the original (unnormalized) covariate `j`.
    pub fn scale(&self, j: usize) -> f64 {
        self.scales[j]
    }
}

/// One breakpoint of the LAR path, recorded after the step is taken.
#[derive(Debug, Clone)]
pub struct LarStep {
    /// Active indices, in entry order, at the time the step was taken.
    pub active: Vec<usize>,
    /// Coefficients for all covariates in the *normalized* dictionary
    /// coordinates; inactive entries are zero.
    pub coefficients: DVector<f64>,
    /// Step size along the equiangular direction.
    pub eta: f64,
    /// Equiangular weights for the active covariates (sign-adjusted).
    pub weights: Vec<f64>,
    /// Residual l2 norm after the step.
    pub residual_norm: f64,
    /// Maximal absolute residual correlation after the step. This is the
    /// lasso penalty value at which the next covariate enters.
    pub lambda: f64,
    /// Index dropped by the lasso modification at this step, if any.
    pub dropped: Option<usize>,
}

impl LarStep {
    /// Coefficients mapped back to the original (unnormalized) covariates.
    pub fn coefficients_unnormalized(&self, dict: &Dictionary) -> DVector<f64> {
        DVector::from_fn(self.coefficients.len(), |j, _| {
            self.coefficients[j] / dict.scale(j)
        })
    }
}

const GRAM_PINV_TOL: f64 = 1e-12;

/// Solves `G w = rhs` for a symmetric positive-definite `G`, falling back
/// to a pseudo-inverse when the Cholesky factorization fails.
fn solve_spd(g: &Matrix, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = g.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    let svd = g
        .clone()
        .try_svd(true, true, f64::EPSILON * 5.0, 0)
        .ok_or_else(|| Error::Numerical("SVD failed on Gram matrix".into()))?;
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if max_sv == 0.0 {
        return Err(Error::IllConditioned("zero Gram matrix".into()));
    }
    svd.solve(rhs, GRAM_PINV_TOL * max_sv)
        .map_err(|e| Error::IllConditioned(e.to_string()))
}

/// Runs least-angle regression on a finite dictionary.
///
/// Returns one [`LarStep`] per breakpoint. Without `lasso_mode` the active
/// set grows by exactly one covariate per step; with it, sign-crossing
/// coefficients are dropped and the path tracks lasso.
pub fn lar_path(
    dict: &Dictionary,
    y: &DVector<f64>,
    max_steps: usize,
    lasso_mode: bool,
) -> Result<Vec<LarStep>> {
    let n = dict.n_covariates();
    if y.len() != dict.dim() {
        return Err(Error::Dimension(format!(
            "response length {} vs dictionary dim {}",
            y.len(),
            dict.dim()
        )));
    }
    let x = dict.columns();

    let mut coeffs = DVector::<f64>::zeros(n);
    let mut active: Vec<usize> = Vec::new();
    let mut steps = Vec::new();

    // Initial most-correlated covariate; ties broken by lowest index.
    let c0 = x.transpose() * y;
    let first = argmax_abs(&c0);
    active.push(first);

    let mut prediction = DVector::<f64>::zeros(y.len());

    while steps.len() < max_steps {
        let residual = y - &prediction;
        let c = x.transpose() * &residual;
        let c_max = active.iter().map(|&k| c[k].abs()).fold(0.0, f64::max);
        if c_max <= 1e-12 {
            break;
        }

        // Sign-adjusted active columns and their Gram matrix.
        let signs: Vec<f64> = active.iter().map(|&k| c[k].signum()).collect();
        let k_act = active.len();
        let mut xa = Matrix::zeros(y.len(), k_act);
        for (j, (&k, &s)) in active.iter().zip(&signs).enumerate() {
            xa.set_column(j, &(x.column(k) * s));
        }
        let gram = xa.transpose() * &xa;
        let chi = solve_spd(&gram, &DVector::from_element(k_act, 1.0))?;
        let zeta = &xa * &chi;
        let a = x.transpose() * &zeta;

        // Entry step: smallest positive eta at which an inactive covariate
        // reaches the common correlation.
        let mut eta_enter = f64::INFINITY;
        let mut enter_idx = None;
        for k in 0..n {
            if active.contains(&k) {
                continue;
            }
            for (num, den) in [(c_max - c[k], 1.0 - a[k]), (c_max + c[k], 1.0 + a[k])] {
                if den.abs() < 1e-14 {
                    continue;
                }
                let eta = num / den;
                if eta > 1e-14 && eta < eta_enter - 1e-14 {
                    eta_enter = eta;
                    enter_idx = Some(k);
                }
            }
        }
        // With all covariates active, ride to the full least-squares fit.
        if enter_idx.is_none() {
            eta_enter = c_max;
        }

        // Lasso drop step: first active coefficient to cross zero.
        let mut eta_drop = f64::INFINITY;
        let mut drop_pos = None;
        if lasso_mode {
            for (j, (&k, &s)) in active.iter().zip(&signs).enumerate() {
                // Signed coordinate moves as s*coeffs[k] + eta*chi[j].
                let signed = s * coeffs[k];
                if chi[j] < -1e-14 && signed > 1e-14 {
                    let eta = -signed / chi[j];
                    if eta < eta_drop {
                        eta_drop = eta;
                        drop_pos = Some(j);
                    }
                }
            }
        }

        let dropping = eta_drop < eta_enter;
        let eta = if dropping { eta_drop } else { eta_enter };

        for (j, (&k, &s)) in active.iter().zip(&signs).enumerate() {
            coeffs[k] += eta * s * chi[j];
        }
        prediction += &zeta * eta;

        let residual = y - &prediction;
        let c_after = x.transpose() * &residual;
        let lambda = c_after.iter().map(|v| v.abs()).fold(0.0, f64::max);

        let mut dropped = None;
        if dropping {
            let j = drop_pos.unwrap();
            let k = active.remove(j);
            coeffs[k] = 0.0;
            dropped = Some(k);
        }

        steps.push(LarStep {
            active: active.clone(),
            coefficients: coeffs.clone(),
            eta,
            weights: chi.iter().cloned().collect(),
            residual_norm: residual.norm(),
            lambda,
            dropped,
        });

        if dropping {
            continue;
        }
        match enter_idx {
            Some(k) => active.push(k),
            None => break, // reached the least-squares fit
        }
    }

    Ok(steps)
}

fn argmax_abs(v: &DVector<f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_val {
            best_val = x.abs();
            best = i;
        }
    }
    best
}
