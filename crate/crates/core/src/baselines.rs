//! Comparison solvers: proximal nuclear-norm regularization (plain and
//! normalized), an operator-splitting solver for the Hankel-constrained
//! variant, a λ-grid rank search, and Cadzow's alternating projections.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matrix::{
    hankel_adjoint_average, hankel_adjoint_sum, hankel_map, numerical_rank, svd, HankelSpec,
    Matrix, Sequence,
};
use crate::unstructured::{svt_shrink, truncated_svd_approx};

#[derive(Debug, Clone)]
pub struct ProxOptions {
    /// Nuclear-norm weight, `λ ≥ 0`.
    pub lambda: f64,
    pub max_iters: usize,
    /// Relative-change stopping tolerance.
    pub tol: f64,
    /// Use Nesterov momentum with restart on objective increase.
    pub accelerated: bool,
}

impl ProxOptions {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            max_iters: 2000,
            tol: 1e-8,
            accelerated: true,
        }
    }
}

/// Solver output carrying a convergence flag instead of failing on slow
/// instances.
#[derive(Debug, Clone)]
pub struct ProxSolution {
    pub estimate: Matrix,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct HankelProxSolution {
    pub sequence: Sequence,
    pub converged: bool,
    pub iterations: usize,
}

/// Minimizes `½‖Y − ΦX‖_F² + λ‖X‖_*` (or `λ‖S_Φ V_Φᵀ X‖_*` when
/// `normalized`) by accelerated proximal gradient with singular-value
/// thresholding as the prox step.
pub fn nuclear_prox_solve(
    y: &Matrix,
    phi: &Matrix,
    opts: &ProxOptions,
    normalized: bool,
) -> Result<ProxSolution> {
    if opts.lambda < 0.0 {
        return Err(Error::InvalidArgument("negative lambda".into()));
    }
    if y.nrows() != phi.nrows() {
        return Err(Error::Dimension(format!(
            "Y has {} rows but Phi has {}",
            y.nrows(),
            phi.nrows()
        )));
    }
    let f_phi = svd(phi)?;
    let s_max = f_phi.s[0];
    let s_min = f_phi.s[f_phi.s.len() - 1];
    if s_min <= 1e-10 * s_max {
        return Err(Error::IllConditioned("rank-deficient regressor".into()));
    }

    // In the normalized variant, substitute T = S_Φ V_Φᵀ X so the data
    // operator becomes the orthonormal U_Φ and the penalty a plain nuclear
    // norm on T; map back at the end.
    let (a, target): (Matrix, &Matrix) = if normalized {
        (f_phi.u.clone(), y)
    } else {
        (phi.clone(), y)
    };
    let step = if normalized {
        1.0
    } else {
        1.0 / (s_max * s_max)
    };

    let n = y.ncols();
    let m = a.ncols();
    let mut x = Matrix::zeros(m, n);
    let mut momentum = x.clone();
    let mut t_prev: f64 = 1.0;
    let mut last_obj = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let grad = a.transpose() * (&a * &momentum - target);
        let x_next = svt_shrink(&(&momentum - grad * step), step * opts.lambda)?;

        let obj = {
            let fit = (target - &a * &x_next).norm_squared() * 0.5;
            let nuc: f64 = x_next.clone().singular_values().iter().sum();
            fit + opts.lambda * nuc
        };

        let change = (&x_next - &x).norm() / x_next.norm().max(1e-12);
        if opts.accelerated {
            if obj > last_obj {
                // Restart momentum when acceleration overshoots.
                momentum = x_next.clone();
                t_prev = 1.0;
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_prev * t_prev).sqrt());
                momentum = &x_next + (&x_next - &x) * ((t_prev - 1.0) / t_next);
                t_prev = t_next;
            }
        } else {
            momentum = x_next.clone();
        }
        last_obj = last_obj.min(obj);
        x = x_next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let estimate = if normalized {
        // X = V_Φ S_Φ⁻¹ T.
        let mut back = f_phi.v.clone();
        for j in 0..back.ncols() {
            back.column_mut(j).scale_mut(1.0 / f_phi.s[j]);
        }
        back * x
    } else {
        x
    };
    Ok(ProxSolution {
        estimate,
        converged,
        iterations,
    })
}

/// Minimizes `½‖Y − Φ H(x)‖_F² + λ‖H(x)‖_*` over sequences `x` by
/// alternating-direction splitting on the copy constraint `Z = H(x)`.
/// The returned sequence always yields an exactly Hankel estimate.
pub fn hankel_nuclear_solve(
    y: &Matrix,
    phi: &Matrix,
    spec: HankelSpec,
    opts: &ProxOptions,
) -> Result<HankelProxSolution> {
    if opts.lambda < 0.0 {
        return Err(Error::InvalidArgument("negative lambda".into()));
    }
    if phi.ncols() != spec.m || y.nrows() != phi.nrows() || y.ncols() != spec.n {
        return Err(Error::Dimension(
            "inconsistent shapes for Hankel nuclear solve".into(),
        ));
    }
    let len = spec.len();
    let weights = DVector::from_fn(len, |k, _| spec.antidiagonal_count(k) as f64);

    // Normal-equation pieces for the x-update. The fit term contributes
    // Aᵀ A with A: x ↦ vec(Φ H(x)); the split term contributes the
    // anti-diagonal multiplicities ρ·diag(w).
    let phi_t_phi = phi.transpose() * phi;
    let mut ata = Matrix::zeros(len, len);
    for k in 0..len {
        for l in 0..len {
            // <Φ H(e_k), Φ H(e_l)> = Σ over matching anti-diagonal cells of ΦᵀΦ.
            let mut v = 0.0;
            for j in 0..spec.n {
                let (ik, il) = (k as isize - j as isize, l as isize - j as isize);
                if (0..spec.m as isize).contains(&ik) && (0..spec.m as isize).contains(&il) {
                    v += phi_t_phi[(ik as usize, il as usize)];
                }
            }
            ata[(k, l)] = v;
        }
    }
    let aty = hankel_adjoint_sum(&(phi.transpose() * y));

    let mut rho = 1.0;
    let mut chol = factor(&ata, &weights, rho)?;
    let mut x = Sequence::zeros(len);
    let mut z = Matrix::zeros(spec.m, spec.n);
    let mut dual = Matrix::zeros(spec.m, spec.n);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        // x-update: least squares with the split target Z - U.
        let rhs = &aty + hankel_adjoint_sum(&(&z - &dual)) * rho;
        x = chol.solve(&rhs);
        let hx = hankel_map(&x, spec)?;

        // Z-update: singular-value thresholding.
        let z_prev = z.clone();
        z = svt_shrink(&(&hx + &dual), opts.lambda / rho)?;

        dual += &hx - &z;

        let primal = (&hx - &z).norm();
        let dual_res = rho * hankel_adjoint_sum(&(&z - &z_prev)).norm();
        let scale = hx.norm().max(z.norm()).max(1e-12);
        if primal / scale < opts.tol && dual_res / scale < opts.tol {
            converged = true;
            break;
        }

        // Residual balancing keeps the two residuals comparable.
        if iter % 10 == 9 {
            if primal > 10.0 * dual_res {
                rho *= 2.0;
                dual /= 2.0;
                chol = factor(&ata, &weights, rho)?;
            } else if dual_res > 10.0 * primal {
                rho /= 2.0;
                dual *= 2.0;
                chol = factor(&ata, &weights, rho)?;
            }
        }
    }

    Ok(HankelProxSolution {
        sequence: x,
        converged,
        iterations,
    })
}

fn factor(
    ata: &Matrix,
    weights: &DVector<f64>,
    rho: f64,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let mut sys = ata.clone();
    for k in 0..weights.len() {
        sys[(k, k)] += rho * weights[k];
    }
    sys.cholesky()
        .ok_or_else(|| Error::Numerical("splitting system not positive definite".into()))
}

/// λ-grid values with a target rank.
#[derive(Debug, Clone)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    pub target_rank: usize,
}

impl LambdaGrid {
    /// Logarithmically spaced grid over `[lo, hi]`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize, target_rank: usize) -> Result<Self> {
        if lo <= 0.0 || hi < lo || count == 0 {
            return Err(Error::InvalidArgument(format!(
                "bad lambda grid [{lo}, {hi}] x {count}"
            )));
        }
        let values = if count == 1 {
            vec![lo]
        } else {
            (0..count)
                .map(|i| {
                    let t = i as f64 / (count - 1) as f64;
                    lo * (hi / lo).powf(t)
                })
                .collect()
        };
        Ok(Self {
            values,
            target_rank,
        })
    }
}

/// A λ-grid solution achieving the target rank.
#[derive(Debug, Clone)]
pub struct RankSearchHit {
    pub lambda: f64,
    pub estimate: Matrix,
    pub rank: usize,
}

/// Evaluates `solver` on every grid value and returns the smallest-λ
/// solution with numerical rank exactly the target, or `None` when the
/// grid misses the rank (the caller widens the grid).
pub fn lambda_rank_search<F>(
    mut solver: F,
    grid: &LambdaGrid,
    rank_tol: f64,
) -> Result<Option<RankSearchHit>>
where
    F: FnMut(f64) -> Result<Matrix>,
{
    if grid.values.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let mut best: Option<RankSearchHit> = None;
    for &lambda in &grid.values {
        let estimate = solver(lambda)?;
        let rank = numerical_rank(&estimate, rank_tol);
        if rank == grid.target_rank
            && best.as_ref().is_none_or(|b| lambda < b.lambda)
        {
            best = Some(RankSearchHit {
                lambda,
                estimate,
                rank,
            });
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct CadzowResult {
    pub sequence: Sequence,
    pub converged: bool,
    pub iterations: usize,
}

/// Cadzow's algorithm: alternate rank-r truncation with projection onto
/// Hankel matrices, starting from `Y`.
pub fn cadzow(y: &Matrix, r: usize, max_iters: usize, tol: f64) -> Result<CadzowResult> {
    if r == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    let spec = HankelSpec::new(y.nrows(), y.ncols())?;
    let r_eff = r.min(y.nrows().min(y.ncols()));
    let mut seq = hankel_adjoint_average(y);
    let mut current = hankel_map(&seq, spec)?;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..max_iters {
        iterations = iter + 1;
        let truncated = truncated_svd_approx(&current, r_eff)?;
        seq = hankel_adjoint_average(&truncated);
        let next = hankel_map(&seq, spec)?;
        let change = (&next - &current).norm();
        current = next;
        if change < tol * current.norm().max(1e-12) {
            converged = true;
            break;
        }
        if r_eff == y.nrows().min(y.ncols()) {
            // Truncation is the identity; one projection suffices.
            converged = true;
            break;
        }
    }
    Ok(CadzowResult {
        sequence: seq,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{atom_sequence, PoleAtom};
    use crate::unstructured::build_path;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn prox_lambda_zero_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_matrix(&mut rng, 8, 5);
        let y = random_matrix(&mut rng, 8, 4);
        let mut opts = ProxOptions::new(0.0);
        opts.tol = 1e-12;
        opts.max_iters = 20000;
        let sol = nuclear_prox_solve(&y, &phi, &opts, false).unwrap();
        let ls = (phi.transpose() * &phi)
            .cholesky()
            .unwrap()
            .solve(&(phi.transpose() * &y));
        assert!((sol.estimate - ls).norm() < 1e-6);
    }

    #[test]
    fn prox_identity_matches_svt() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = random_matrix(&mut rng, 6, 5);
        let mut opts = ProxOptions::new(0.4);
        opts.tol = 1e-10;
        let sol = nuclear_prox_solve(&y, &Matrix::identity(6, 6), &opts, false).unwrap();
        let oracle = svt_shrink(&y, 0.4).unwrap();
        assert!((sol.estimate - oracle).norm() < 1e-6);
    }

    #[test]
    fn normalized_prox_matches_lar_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let phi = random_matrix(&mut rng, 10, 6);
            let y = random_matrix(&mut rng, 10, 5);
            let path = build_path(&y, &phi).unwrap();
            for r in 1..4 {
                let lambda = path.sigma0[r] * (1.0 + 1e-9);
                let mut opts = ProxOptions::new(lambda);
                opts.tol = 1e-12;
                let sol = nuclear_prox_solve(&y, &phi, &opts, true).unwrap();
                let lar = path.lar_estimate(r).unwrap();
                let rel = (&sol.estimate - &lar).norm() / lar.norm().max(1e-12);
                assert!(rel < 1e-4, "r = {r}, rel = {rel}");
            }
        }
    }

    #[test]
    fn prox_rank_nonincreasing_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = random_matrix(&mut rng, 6, 6);
        let mut last_rank = usize::MAX;
        for lambda in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let sol =
                nuclear_prox_solve(&y, &Matrix::identity(6, 6), &ProxOptions::new(lambda), false)
                    .unwrap();
            let rank = numerical_rank(&sol.estimate, 1e-6);
            assert!(rank <= last_rank);
            last_rank = rank;
        }
    }

    #[test]
    fn hankel_solve_lambda_zero_is_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random_matrix(&mut rng, 5, 4);
        let spec = HankelSpec::new(5, 4).unwrap();
        let mut opts = ProxOptions::new(0.0);
        opts.tol = 1e-10;
        opts.max_iters = 5000;
        let sol = hankel_nuclear_solve(&y, &Matrix::identity(5, 5), spec, &opts).unwrap();
        let oracle = hankel_adjoint_average(&y);
        assert!((sol.sequence - oracle).norm() < 1e-6);
    }

    #[test]
    fn hankel_solve_huge_lambda_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = random_matrix(&mut rng, 5, 4);
        let spec = HankelSpec::new(5, 4).unwrap();
        let mut opts = ProxOptions::new(1e4);
        opts.max_iters = 5000;
        let sol = hankel_nuclear_solve(&y, &Matrix::identity(5, 5), spec, &opts).unwrap();
        assert!(sol.sequence.norm() < 1e-6);
    }

    /// Slow projected-subgradient oracle for the Hankel nuclear objective.
    fn subgradient_oracle(
        y: &Matrix,
        phi: &Matrix,
        spec: HankelSpec,
        lambda: f64,
        iters: usize,
    ) -> f64 {
        let len = spec.len();
        let mut x = hankel_adjoint_average(&((phi.transpose() * y) / phi.norm_squared() * len as f64));
        x /= len as f64;
        let objective = |x: &Sequence| -> f64 {
            let hx = hankel_map(x, spec).unwrap();
            0.5 * (y - phi * &hx).norm_squared()
                + lambda * hx.singular_values().iter().sum::<f64>()
        };
        let mut best = objective(&x);
        let mut best_x = x.clone();
        for t in 0..iters {
            let hx = hankel_map(&x, spec).unwrap();
            let fit_grad = hankel_adjoint_sum(&(phi.transpose() * (phi * &hx - y)));
            let f = svd(&hx).unwrap();
            let sub = hankel_adjoint_sum(&(&f.u * f.v.transpose()));
            let g = fit_grad + sub * lambda;
            let step = 0.5 / ((t + 1) as f64).sqrt() / g.norm().max(1e-12);
            x -= g * step;
            let obj = objective(&x);
            if obj < best {
                best = obj;
                best_x = x.clone();
            }
        }
        objective(&best_x)
    }

    #[test]
    fn hankel_solve_matches_subgradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = HankelSpec::new(6, 4).unwrap();
        let y = random_matrix(&mut rng, 6, 4);
        let phi = Matrix::identity(6, 6);
        let lambda = 0.3;
        let mut opts = ProxOptions::new(lambda);
        opts.tol = 1e-10;
        opts.max_iters = 20000;
        let sol = hankel_nuclear_solve(&y, &phi, spec, &opts).unwrap();
        let hx = hankel_map(&sol.sequence, spec).unwrap();
        let obj_admm = 0.5 * (&y - &phi * &hx).norm_squared()
            + lambda * hx.singular_values().iter().sum::<f64>();
        let obj_oracle = subgradient_oracle(&y, &phi, spec, lambda, 60000);
        // ADMM should be at least as good as the slow oracle up to tolerance.
        assert!(
            obj_admm <= obj_oracle + 1e-5,
            "admm {obj_admm} vs oracle {obj_oracle}"
        );
    }

    #[test]
    fn lambda_grid_construction() {
        let grid = LambdaGrid::log_spaced(0.01, 0.1, 20, 3).unwrap();
        assert_eq!(grid.values.len(), 20);
        assert_relative_eq!(grid.values[0], 0.01, epsilon = 1e-12);
        assert_relative_eq!(grid.values[19], 0.1, epsilon = 1e-12);
        assert!(LambdaGrid::log_spaced(0.0, 0.1, 20, 3).is_err());
    }

    #[test]
    fn rank_search_sweeps_all_ranks_for_identity() {
        let y = Matrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 1.0, 0.5]));
        // For Φ = I the SVT rank is monotone in λ; a wide grid hits each
        // intermediate rank.
        for target in 1..=3usize {
            let grid = LambdaGrid::log_spaced(0.1, 10.0, 40, target).unwrap();
            let hit = lambda_rank_search(|l| svt_shrink(&y, l), &grid, 1e-6)
                .unwrap()
                .expect("target rank reachable");
            assert_eq!(hit.rank, target);
        }
    }

    #[test]
    fn rank_search_single_point_and_miss() {
        let y = Matrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0]));
        let grid = LambdaGrid {
            values: vec![3.0],
            target_rank: 1,
        };
        let hit = lambda_rank_search(|l| svt_shrink(&y, l), &grid, 1e-6)
            .unwrap()
            .unwrap();
        assert_relative_eq!(hit.lambda, 3.0);

        let miss = LambdaGrid {
            values: vec![100.0],
            target_rank: 1,
        };
        assert!(lambda_rank_search(|l| svt_shrink(&y, l), &miss, 1e-6)
            .unwrap()
            .is_none());
    }

    #[test]
    fn cadzow_fixed_point_on_exact_input() {
        let spec = HankelSpec::new(5, 4).unwrap();
        let seq = atom_sequence(&PoleAtom::new(0.8, 0.0, 0.0), spec.len());
        let y = hankel_map(&seq, spec).unwrap();
        let out = cadzow(&y, 1, 100, 1e-12).unwrap();
        assert!((out.sequence - seq).norm() < 1e-12);
        assert!(out.converged);
    }

    #[test]
    fn cadzow_converges_from_small_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = HankelSpec::new(6, 5).unwrap();
        let mut seq = atom_sequence(&PoleAtom::new(0.9, 0.0, 0.0), spec.len());
        seq += atom_sequence(&PoleAtom::new(0.4, std::f64::consts::PI, 0.0), spec.len()) * 0.5;
        let clean = hankel_map(&seq, spec).unwrap();
        let y = &clean + random_matrix(&mut rng, 6, 5) * 1e-6;
        let out = cadzow(&y, 2, 500, 1e-10).unwrap();
        assert!(out.converged);
        let rec = hankel_map(&out.sequence, spec).unwrap();
        let gap = (&rec - truncated_svd_approx(&rec, 2).unwrap()).norm();
        assert!(gap < 1e-8);
    }

    #[test]
    fn cadzow_full_rank_is_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let y = random_matrix(&mut rng, 4, 4);
        let out = cadzow(&y, 4, 50, 1e-10).unwrap();
        assert!((out.sequence - hankel_adjoint_average(&y)).norm() < 1e-12);
    }

    #[test]
    fn cadzow_truncation_gap_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = random_matrix(&mut rng, 6, 5);
        let spec = HankelSpec::new(6, 5).unwrap();
        let mut seq = hankel_adjoint_average(&y);
        let mut last_gap = f64::INFINITY;
        for _ in 0..20 {
            let current = hankel_map(&seq, spec).unwrap();
            let truncated = truncated_svd_approx(&current, 2).unwrap();
            let gap = (&current - &truncated).norm();
            assert!(gap <= last_gap + 1e-10);
            last_gap = gap;
            seq = hankel_adjoint_average(&truncated);
        }
    }
}
