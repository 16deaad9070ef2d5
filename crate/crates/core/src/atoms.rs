//! Continuous dictionary of real-valued polynomial Hankel atoms.
//!
//! An atom is the Hankel matrix of the damped sinusoid
//! `ξ_k = |z|^{k-1} cos(ψ + (k-1)θ)`. It has rank 1 when the pole is real
//! (θ ∈ {0, π}) and rank 2 otherwise. The factorization `X = U_z R_ψ V_zᵀ`
//! reduces Frobenius inner products against an `m×n` matrix to 2×2 traces,
//! which is what makes grid searches over the dictionary cheap.

use std::f64::consts::PI;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::matrix::{hankel_map, HankelSpec, Matrix, Sequence};

/// Angle below which a pole is treated as real for rank accounting.
pub const REAL_ANGLE_TOL: f64 = 1e-6;

/// A point `(|z|, θ, ψ)` of the continuous dictionary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleAtom {
    /// Pole modulus, `|z| ≥ 0`.
    pub modulus: f64,
    /// Pole angle θ in `[0, π]`.
    pub angle: f64,
    /// Phase ψ in `(-π, π]`.
    pub phase: f64,
}

impl PoleAtom {
    pub fn new(modulus: f64, angle: f64, phase: f64) -> Self {
        Self {
            modulus,
            angle,
            phase: wrap_phase(phase),
        }
    }

    /// Real part of the pole `z = |z| e^{jθ}`.
    pub fn pole_re(&self) -> f64 {
        self.modulus * self.angle.cos()
    }

    /// Imaginary part of the pole.
    pub fn pole_im(&self) -> f64 {
        self.modulus * self.angle.sin()
    }

    /// Distance between the poles of two atoms in the complex plane.
    pub fn pole_distance(&self, other: &PoleAtom) -> f64 {
        let dr = self.pole_re() - other.pole_re();
        let di = self.pole_im() - other.pole_im();
        (dr * dr + di * di).sqrt()
    }

    /// Whether the pole counts as real for rank accounting.
    pub fn is_real(&self) -> bool {
        self.angle < REAL_ANGLE_TOL || PI - self.angle < REAL_ANGLE_TOL || self.modulus == 0.0
    }

    /// Rank consumed by this atom: 1 for real poles, 2 for complex pairs.
    pub fn rank_cost(&self) -> usize {
        if self.is_real() {
            1
        } else {
            2
        }
    }

    /// The atom with phase shifted by π, whose matrix is the negation of
    /// this one's.
    pub fn flipped(&self) -> Self {
        Self::new(self.modulus, self.angle, self.phase + PI)
    }
}

/// Maps an angle into `(-π, π]`.
pub fn wrap_phase(psi: f64) -> f64 {
    let mut p = psi % (2.0 * PI);
    if p <= -PI {
        p += 2.0 * PI;
    } else if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Rank-2 factorization `X_z^ψ = U_z R_ψ V_zᵀ` of an atom matrix.
#[derive(Debug, Clone)]
pub struct AtomFactors {
    /// `m×2`; first column `|z|^k cos(kθ)`, second `-|z|^k sin(kθ)`.
    pub u: Matrix,
    /// 2×2 rotation by ψ.
    pub r: Matrix2<f64>,
    /// `n×2`; first column `|z|^k cos(kθ)`, second `+|z|^k sin(kθ)`.
    pub v: Matrix,
}

impl AtomFactors {
    /// Dense atom matrix `U_z R_ψ V_zᵀ`.
    pub fn dense(&self) -> Matrix {
        &self.u * self.r * self.v.transpose()
    }
}

/// Powers `|z|^k (cos kθ, sin kθ)` for `k = 0..len-1`, by iterated complex
/// multiplication. Avoids `exp(k log|z|)` cancellation near `|z| = 1` at
/// the sequence lengths used here (~100).
fn pole_powers(modulus: f64, angle: f64, len: usize) -> Vec<(f64, f64)> {
    let (step_re, step_im) = (modulus * angle.cos(), modulus * angle.sin());
    let mut out = Vec::with_capacity(len);
    let (mut re, mut im) = (1.0, 0.0);
    for _ in 0..len {
        out.push((re, im));
        let next_re = re * step_re - im * step_im;
        let next_im = re * step_im + im * step_re;
        re = next_re;
        im = next_im;
    }
    out
}

/// The damped sinusoid `ξ_k = |z|^{k-1} cos(ψ + (k-1)θ)`, `k = 1..N`.
pub fn atom_sequence(a: &PoleAtom, n: usize) -> Sequence {
    let powers = pole_powers(a.modulus, a.angle, n);
    let (cp, sp) = (a.phase.cos(), a.phase.sin());
    // cos(ψ + kθ)|z|^k = cosψ Re(z^k) - sinψ Im(z^k)
    Sequence::from_iterator(n, powers.iter().map(|&(re, im)| cp * re - sp * im))
}

/// Hankel matrix of the atom sequence.
pub fn atom_matrix(a: &PoleAtom, spec: HankelSpec) -> Matrix {
    hankel_map(&atom_sequence(a, spec.len()), spec).expect("length matches by construction")
}

/// Builds the `U_z R_ψ V_zᵀ` factorization.
pub fn atom_factors(a: &PoleAtom, spec: HankelSpec) -> AtomFactors {
    let len = spec.m.max(spec.n);
    let powers = pole_powers(a.modulus, a.angle, len);
    let u = Matrix::from_fn(spec.m, 2, |k, j| {
        if j == 0 {
            powers[k].0
        } else {
            -powers[k].1
        }
    });
    let v = Matrix::from_fn(spec.n, 2, |k, j| {
        if j == 0 {
            powers[k].0
        } else {
            powers[k].1
        }
    });
    let (c, s) = (a.phase.cos(), a.phase.sin());
    let r = Matrix2::new(c, -s, s, c);
    AtomFactors { u, r, v }
}

/// Frobenius inner product `<Φ X_z^ψ, Γ>` via the factorization, given the
/// precomputed `W = Φᵀ Γ` (m×n).
pub fn atom_inner(a: &PoleAtom, spec: HankelSpec, w: &Matrix) -> Result<f64> {
    if w.shape() != (spec.m, spec.n) {
        return Err(Error::Dimension(format!(
            "W has shape {:?}, expected {}x{}",
            w.shape(),
            spec.m,
            spec.n
        )));
    }
    let f = atom_factors(a, spec);
    let m = f.u.transpose() * w * &f.v; // 2x2
    Ok(trace_with_rotation_t(&m, a.phase))
}

/// `tr(M R_ψᵀ)` for a 2×2 `M`.
fn trace_with_rotation_t(m: &Matrix, psi: f64) -> f64 {
    let (c, s) = (psi.cos(), psi.sin());
    c * (m[(0, 0)] + m[(1, 1)]) + s * (m[(1, 0)] - m[(0, 1)])
}

/// `‖Φ X_z^ψ‖_F` via the factorization, given `G = Φᵀ Φ` (m×m).
pub fn atom_opnorm(a: &PoleAtom, spec: HankelSpec, g: &Matrix) -> Result<f64> {
    if g.shape() != (spec.m, spec.m) {
        return Err(Error::Dimension(format!(
            "G has shape {:?}, expected {m}x{m}",
            g.shape(),
            m = spec.m
        )));
    }
    let f = atom_factors(a, spec);
    let a_mat = f.u.transpose() * g * &f.u;
    let b_mat = f.v.transpose() * &f.v;
    let rar = f.r.transpose()
        * Matrix2::new(a_mat[(0, 0)], a_mat[(0, 1)], a_mat[(1, 0)], a_mat[(1, 1)])
        * f.r;
    let norm_sq = rar[(0, 0)] * b_mat[(0, 0)]
        + rar[(0, 1)] * b_mat[(1, 0)]
        + rar[(1, 0)] * b_mat[(0, 1)]
        + rar[(1, 1)] * b_mat[(1, 1)];
    Ok(norm_sq.max(0.0).sqrt())
}

/// Linear combination `Σ σ_i ξ^i` of atom sequences and its Hankel matrix.
/// The matrix is Hankel by construction.
pub fn synthesize(
    atoms: &[PoleAtom],
    coeffs: &[f64],
    spec: HankelSpec,
) -> Result<(Sequence, Matrix)> {
    if atoms.len() != coeffs.len() {
        return Err(Error::Dimension(format!(
            "{} atoms vs {} coefficients",
            atoms.len(),
            coeffs.len()
        )));
    }
    let mut seq = Sequence::zeros(spec.len());
    for (a, &c) in atoms.iter().zip(coeffs) {
        seq += atom_sequence(a, spec.len()) * c;
    }
    let mat = hankel_map(&seq, spec)?;
    Ok((seq, mat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{frob_inner, numerical_rank};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn random_atom(rng: &mut impl Rng) -> PoleAtom {
        PoleAtom::new(
            rng.random_range(0.1..1.2),
            rng.random_range(0.0..PI),
            rng.random_range(-PI..PI),
        )
    }

    #[test]
    fn sequence_special_cases() {
        let ones = atom_sequence(&PoleAtom::new(1.0, 0.0, 0.0), 6);
        assert!((ones - Sequence::from_element(6, 1.0)).norm() < 1e-12);

        let zero = atom_sequence(&PoleAtom::new(0.7, 0.0, PI / 2.0), 6);
        assert!(zero.norm() < 1e-12);

        let alt = atom_sequence(&PoleAtom::new(0.5, PI, 0.0), 5);
        for k in 0..5 {
            assert_relative_eq!(alt[k], (-0.5f64).powi(k as i32), epsilon = 1e-12);
        }
    }

    #[test]
    fn matrix_special_cases_and_rank() {
        let spec = HankelSpec::new(2, 2).unwrap();
        let ones = atom_matrix(&PoleAtom::new(1.0, 0.0, 0.0), spec);
        assert!((ones - Matrix::from_element(2, 2, 1.0)).norm() < 1e-12);

        let spec4 = HankelSpec::new(4, 4).unwrap();
        let complex = atom_matrix(&PoleAtom::new(0.8, 1.1, 0.3), spec4);
        assert_eq!(numerical_rank(&complex, 1e-8), 2);
        let real = atom_matrix(&PoleAtom::new(0.8, 0.0, 0.3), spec4);
        assert_eq!(numerical_rank(&real, 1e-8), 1);
        let neg_real = atom_matrix(&PoleAtom::new(0.8, PI, 0.3), spec4);
        assert_eq!(numerical_rank(&neg_real, 1e-8), 1);
    }

    #[test]
    fn factorization_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = HankelSpec::new(5, 4).unwrap();
        for _ in 0..20 {
            let a = random_atom(&mut rng);
            let dense = atom_matrix(&a, spec);
            let f = atom_factors(&a, spec);
            assert!((f.dense() - &dense).norm() < 1e-12);
        }
        // Boundary angles included.
        for angle in [0.0, PI] {
            let a = PoleAtom::new(0.9, angle, 0.4);
            let f = atom_factors(&a, spec);
            assert!((f.dense() - atom_matrix(&a, spec)).norm() < 1e-12);
            // Second columns vanish at real poles.
            assert!(f.u.column(1).norm() < 1e-12);
            assert!(f.v.column(1).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_identity_at_zero_phase() {
        let f = atom_factors(&PoleAtom::new(0.5, 1.0, 0.0), HankelSpec::new(3, 3).unwrap());
        assert!((f.r - Matrix2::identity()).norm() < 1e-14);
        assert_relative_eq!(f.r.determinant(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn inner_product_trivial_cases() {
        let spec = HankelSpec::new(3, 4).unwrap();
        let gamma = Matrix::from_element(3, 4, 1.0);
        // Φ = I so W = Γ.
        let v = atom_inner(&PoleAtom::new(1.0, 0.0, 0.0), spec, &gamma).unwrap();
        assert_relative_eq!(v, 12.0, epsilon = 1e-12);

        let z = atom_inner(&PoleAtom::new(0.6, 0.0, PI / 2.0), spec, &gamma).unwrap();
        assert!(z.abs() < 1e-12);
    }

    #[test]
    fn inner_and_norm_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = HankelSpec::new(6, 4).unwrap();
        let phi = random_matrix(&mut rng, 8, 6);
        let g = phi.transpose() * &phi;
        for _ in 0..30 {
            let a = random_atom(&mut rng);
            let gamma = random_matrix(&mut rng, 8, 4);
            let w = phi.transpose() * &gamma;
            let dense = &phi * atom_matrix(&a, spec);
            let inner_fast = atom_inner(&a, spec, &w).unwrap();
            let inner_dense = frob_inner(&dense, &gamma).unwrap();
            assert_relative_eq!(inner_fast, inner_dense, epsilon = 1e-10, max_relative = 1e-10);
            let norm_fast = atom_opnorm(&a, spec, &g).unwrap();
            assert_relative_eq!(norm_fast, dense.norm(), epsilon = 1e-10, max_relative = 1e-10);
        }
        // Boundary angles.
        for angle in [0.0, PI] {
            let a = PoleAtom::new(0.7, angle, 0.2);
            let gamma = random_matrix(&mut rng, 8, 4);
            let w = phi.transpose() * &gamma;
            let dense = &phi * atom_matrix(&a, spec);
            assert_relative_eq!(
                atom_inner(&a, spec, &w).unwrap(),
                frob_inner(&dense, &gamma).unwrap(),
                epsilon = 1e-10,
                max_relative = 1e-10
            );
            assert_relative_eq!(
                atom_opnorm(&a, spec, &g).unwrap(),
                dense.norm(),
                epsilon = 1e-10,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn opnorm_hand_case_and_degenerate() {
        let spec = HankelSpec::new(2, 2).unwrap();
        let g = Matrix::identity(2, 2);
        let n = atom_opnorm(&PoleAtom::new(1.0, 0.0, 0.0), spec, &g).unwrap();
        assert_relative_eq!(n, 2.0, epsilon = 1e-12);
        let z = atom_opnorm(&PoleAtom::new(0.6, 0.0, PI / 2.0), spec, &g).unwrap();
        assert!(z < 1e-12);
    }

    #[test]
    fn phase_flip_negates_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = HankelSpec::new(4, 3).unwrap();
        for _ in 0..10 {
            let a = random_atom(&mut rng);
            let m1 = atom_matrix(&a, spec);
            let m2 = atom_matrix(&a.flipped(), spec);
            assert!((m1 + m2).norm() < 1e-12);
        }
    }

    #[test]
    fn synthesize_cases() {
        let spec = HankelSpec::new(3, 3).unwrap();
        let (seq, mat) = synthesize(&[], &[], spec).unwrap();
        assert!(seq.norm() == 0.0 && mat.norm() == 0.0);

        let a = PoleAtom::new(0.8, 0.7, 0.1);
        let (seq, _) = synthesize(&[a], &[1.0], spec).unwrap();
        assert!((seq - atom_sequence(&a, 5)).norm() < 1e-14);

        assert!(synthesize(&[a], &[], spec).is_err());
    }

    #[test]
    fn conjugate_pair_reconstructs_fourth_order_response() {
        // Impulse response of a 4th-order system with two complex pole
        // pairs; a least-squares fit on the two true atoms must be exact.
        let spec = HankelSpec::new(6, 5).unwrap();
        let n = spec.len();
        let poles = [(0.9, 0.5, -0.3), (0.7, 2.0, 1.1)];
        let mut target = Sequence::zeros(n);
        for &(modulus, angle, phase) in &poles {
            target += atom_sequence(&PoleAtom::new(modulus, angle, phase), n) * 1.7;
        }
        // LS fit of coefficients on the true atoms.
        let cols: Vec<Sequence> = poles
            .iter()
            .map(|&(m, a, p)| atom_sequence(&PoleAtom::new(m, a, p), n))
            .collect();
        let design = Matrix::from_columns(&cols);
        let sol = (design.transpose() * &design)
            .cholesky()
            .unwrap()
            .solve(&(design.transpose() * &target));
        let atoms: Vec<PoleAtom> = poles
            .iter()
            .map(|&(m, a, p)| PoleAtom::new(m, a, p))
            .collect();
        let (rec, _) = synthesize(&atoms, sol.as_slice(), spec).unwrap();
        assert!((rec - target).norm() < 1e-10);
    }

    #[test]
    fn lemma_decomposition_from_distinct_roots() {
        // Sequence built from r distinct roots: LS on the true atoms
        // reproduces it with tiny residual.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let spec = HankelSpec::new(8, 7).unwrap();
        let n = spec.len();
        let atoms: Vec<PoleAtom> = (0..3)
            .map(|i| {
                PoleAtom::new(
                    rng.random_range(0.4..0.95),
                    0.3 + 0.9 * i as f64,
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let coeffs = [1.0, -2.0, 0.5];
        let (target, mat) = synthesize(&atoms, &coeffs, spec).unwrap();
        assert!(numerical_rank(&mat, 1e-8) <= 6);
        let cols: Vec<Sequence> = atoms.iter().map(|a| atom_sequence(a, n)).collect();
        let design = Matrix::from_columns(&cols);
        let sol = (design.transpose() * &design)
            .cholesky()
            .unwrap()
            .solve(&(design.transpose() * &target));
        assert!((design * sol - target).norm() < 1e-8);
    }
}
