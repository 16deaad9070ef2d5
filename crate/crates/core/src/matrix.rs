//! Dense-matrix and Hankel-operator primitives shared by all solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real matrix. All solvers in this crate work at desk scale, so a
/// single dense representation is used throughout.
pub type Matrix = DMatrix<f64>;

/// Real scalar sequence `x_1..x_N`.
pub type Sequence = DVector<f64>;

/// Shape of a finite Hankel matrix built from a sequence of length
/// `m + n - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HankelSpec {
    pub m: usize,
    pub n: usize,
}

impl HankelSpec {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "Hankel shape must be nonzero, got {m}x{n}"
            )));
        }
        Ok(Self { m, n })
    }

    /// Length of the generating sequence.
    pub fn len(&self) -> usize {
        self.m + self.n - 1
    }

    /// Number of matrix entries on anti-diagonal `k` (0-based sequence index).
    pub fn antidiagonal_count(&self, k: usize) -> usize {
        let lo = (k + 1).saturating_sub(self.n).max(0);
        let hi = k.min(self.m - 1);
        hi + 1 - lo
    }
}

/// Full singular value decomposition with singular values in descending
/// order.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: DVector<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    /// `U diag(S) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.s.len();
        let mut scaled = self.u.columns(0, k).into_owned();
        for i in 0..k {
            scaled.column_mut(i).scale_mut(self.s[i]);
        }
        &scaled * self.v.columns(0, k).transpose()
    }
}

/// Maps a sequence to its `m x n` Hankel matrix: entry `(i, k)` is
/// `x_{i+k-1}` (1-based).
pub fn hankel_map(seq: &Sequence, spec: HankelSpec) -> Result<Matrix> {
    if seq.len() != spec.len() {
        return Err(Error::Dimension(format!(
            "sequence length {} does not match Hankel spec {}x{} (need {})",
            seq.len(),
            spec.m,
            spec.n,
            spec.len()
        )));
    }
    Ok(Matrix::from_fn(spec.m, spec.n, |i, k| seq[i + k]))
}

/// Adjoint-style projection of a matrix back onto sequences: entry `k` of
/// the result is the arithmetic mean of all entries on anti-diagonal
/// `i + j = k`. This is the orthogonal projection onto Hankel matrices in
/// the Frobenius metric, composed with `hankel_map`'s inverse on its range.
pub fn hankel_adjoint_average(m: &Matrix) -> Sequence {
    let (rows, cols) = m.shape();
    let mut sums = vec![0.0; rows + cols - 1];
    let mut counts = vec![0usize; rows + cols - 1];
    for j in 0..cols {
        for i in 0..rows {
            sums[i + j] += m[(i, j)];
            counts[i + j] += 1;
        }
    }
    Sequence::from_iterator(
        sums.len(),
        sums.iter().zip(&counts).map(|(s, c)| s / *c as f64),
    )
}

/// Anti-diagonal sums: the true adjoint `Hᵀ` of the Hankel map seen as a
/// linear operator from sequences to matrices.
pub fn hankel_adjoint_sum(m: &Matrix) -> Sequence {
    let (rows, cols) = m.shape();
    let mut sums = DVector::zeros(rows + cols - 1);
    for j in 0..cols {
        for i in 0..rows {
            sums[i + j] += m[(i, j)];
        }
    }
    sums
}

/// Full SVD with singular values sorted in descending order.
pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON * 5.0, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s = svd.singular_values;

    // nalgebra does not guarantee ordering; sort defensively.
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());

    let k = s.len();
    let mut u_sorted = Matrix::zeros(u.nrows(), k);
    let mut v_sorted = Matrix::zeros(v_t.ncols(), k);
    let mut s_sorted = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).transpose());
        s_sorted[dst] = s[src];
    }
    Ok(SvdFactors {
        u: u_sorted,
        s: s_sorted,
        v: v_sorted,
    })
}

/// Frobenius inner product `<A, B> = Σ a_ij b_ij = tr(Aᵀ B)`.
pub fn frob_inner(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "frob_inner shapes {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).sum())
}

/// Count of singular values above `tol_rel` times the largest one.
pub fn numerical_rank(m: &Matrix, tol_rel: f64) -> usize {
    let s = m.clone().singular_values();
    let max = s.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol_rel * max).count()
}

/// Default relative tolerance used to classify the rank of computed
/// estimates.
pub const DEFAULT_RANK_TOL: f64 = 1e-6;
