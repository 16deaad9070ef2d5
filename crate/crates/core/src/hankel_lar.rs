//! Least-angle regression over the continuous dictionary of pole atoms,
//! with least-squares debiasing of the selected coefficients.
//!
//! The path mirrors the finite algorithm: start from the atom most
//! correlated with the data, move along the equiangular direction of the
//! active atoms, and at each breakpoint admit the atom whose normalized
//! residual correlation catches up first. The inner atom searches are
//! non-convex 3-variable problems in `(|z|, θ, ψ)`, solved by a coarse
//! grid sweep with a per-pole phase line search followed by simplex
//! refinement. Real atoms consume one unit of the rank budget, complex
//! ones two.

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix2};

use crate::atoms::{atom_factors, atom_inner, atom_matrix, atom_opnorm, PoleAtom};
use crate::error::{Error, Result};
use crate::matrix::{frob_inner, HankelSpec, Matrix};
use crate::simplex::{nelder_mead, SimplexOptions};

/// Modulus cap used when the stability constraint is off. Large enough for
/// mildly unstable poles at the sequence lengths considered here.
const UNSTABLE_MODULUS_CAP: f64 = 1.25;

/// Norms below this (relative to the data scale) flag a degenerate atom.
const DEGENERATE_NORM_TOL: f64 = 1e-10;

/// Candidate pool carried from the grid sweep into local refinement.
const REFINE_STARTS: usize = 3;

/// Where candidate atoms are searched.
#[derive(Debug, Clone)]
pub enum SearchSpace {
    /// The full continuous domain `θ ∈ [0, π]`, `|z| ∈ (0, cap]`.
    Continuous,
    /// A fixed finite list of atoms (used to cross-check the path against
    /// the finite-dictionary algorithm).
    FixedGrid(Vec<PoleAtom>),
}

#[derive(Debug, Clone)]
pub struct HankelSolverOptions {
    /// Target rank; real atoms count 1, complex atoms 2.
    pub rank_budget: usize,
    /// Minimal pairwise pole separation in the complex plane.
    pub epsilon: f64,
    /// Constrain `|z| ≤ 1`.
    pub stable: bool,
    /// Grid density over θ.
    pub n_theta: usize,
    /// Grid density over `|z|`.
    pub n_modulus: usize,
    /// Samples of the phase line search per pole.
    pub n_phase: usize,
    /// Convergence tolerance of the simplex refinement.
    pub refine_tol: f64,
    /// Iteration cap of the simplex refinement.
    pub max_refine_iters: usize,
    /// Continuous-search candidates whose image direction has a larger
    /// cosine with the span of the active images are rejected as
    /// duplicates of already-selected modes. On a continuum dictionary
    /// the ε-separation alone does not guarantee a distinct new mode:
    /// points just outside the exclusion balls tie with the active
    /// correlations arbitrarily fast, which would stall the path on
    /// near-copies of active atoms.
    pub collinearity_tol: f64,
    pub search_space: SearchSpace,
}

impl HankelSolverOptions {
    pub fn with_rank(rank_budget: usize) -> Self {
        Self {
            rank_budget,
            epsilon: 0.01,
            stable: true,
            n_theta: 64,
            n_modulus: 32,
            n_phase: 64,
            refine_tol: 1e-8,
            max_refine_iters: 400,
            collinearity_tol: 0.95,
            search_space: SearchSpace::Continuous,
        }
    }

    fn modulus_cap(&self) -> f64 {
        if self.stable {
            1.0
        } else {
            UNSTABLE_MODULUS_CAP
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if self.n_theta < 2 || self.n_modulus < 2 || self.n_phase < 2 {
            return Err(Error::InvalidArgument("grid densities must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.collinearity_tol) || self.collinearity_tol == 0.0 {
            return Err(Error::InvalidArgument(
                "collinearity tolerance must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Active atoms with nonnegative coefficients and cached Gram data.
#[derive(Debug, Clone)]
pub struct ActiveSet {
    pub atoms: Vec<PoleAtom>,
    pub coefficients: Vec<f64>,
    norms: Vec<f64>,
    images: Vec<Matrix>,
    gram: Matrix,
    epsilon: f64,
}

impl ActiveSet {
    pub fn new(epsilon: f64) -> Self {
        Self {
            atoms: Vec::new(),
            coefficients: Vec::new(),
            norms: Vec::new(),
            images: Vec::new(),
            gram: Matrix::zeros(0, 0),
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total rank consumed by the active atoms.
    pub fn consumed_rank(&self) -> usize {
        self.atoms.iter().map(|a| a.rank_cost()).sum()
    }

    /// Norm of `Φ X_a` for active atom `i`.
    pub fn image_norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    /// `Φ X_a` for active atom `i`.
    pub fn image(&self, i: usize) -> &Matrix {
        &self.images[i]
    }

    fn push(&mut self, atom: PoleAtom, image: Matrix, norm: f64) -> Result<()> {
        for existing in &self.atoms {
            if existing.pole_distance(&atom) < self.epsilon {
                return Err(Error::InvalidArgument(format!(
                    "atom pole within epsilon = {} of an active pole",
                    self.epsilon
                )));
            }
        }
        let k = self.atoms.len();
        let mut gram = Matrix::zeros(k + 1, k + 1);
        gram.view_mut((0, 0), (k, k)).copy_from(&self.gram);
        for j in 0..k {
            let v = frob_inner(&self.images[j], &image).expect("equal shapes");
            gram[(j, k)] = v;
            gram[(k, j)] = v;
        }
        gram[(k, k)] = norm * norm;
        self.gram = gram;
        self.atoms.push(atom);
        self.coefficients.push(0.0);
        self.norms.push(norm);
        self.images.push(image);
        Ok(())
    }
}

/// One recorded iteration of the path.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub iteration: usize,
    /// Step size taken along the equiangular direction.
    pub eta: f64,
    /// Atom admitted after the step, if the budget allowed it.
    pub added: Option<PoleAtom>,
    /// Residual Frobenius norm after the step.
    pub residual_norm: f64,
    /// Common normalized correlation of the active atoms before the step.
    pub common_correlation: f64,
    /// Spread of the active correlations around their mean before the step.
    pub correlation_spread: f64,
}

/// Result of running the path.
#[derive(Debug, Clone)]
pub struct HankelPath {
    pub active: ActiveSet,
    pub history: Vec<StepRecord>,
    /// Final prediction `Ŷ = Φ Σ σ' X`.
    pub prediction: Matrix,
    /// Rank consumed by the returned active set.
    pub achieved_rank: usize,
}

impl HankelPath {
    pub fn atoms(&self) -> &[PoleAtom] {
        &self.active.atoms
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.active.coefficients
    }
}

/// Normalized Frobenius correlation `<Φ X_a, Γ> / ‖Φ X_a‖` of an atom with
/// a matrix `Γ`, using the precomputed `W = Φᵀ Γ` and `G = Φᵀ Φ`.
pub fn correlation(a: &PoleAtom, spec: HankelSpec, w: &Matrix, g: &Matrix) -> Result<f64> {
    let norm = atom_opnorm(a, spec, g)?;
    if norm <= DEGENERATE_NORM_TOL {
        return Err(Error::InvalidArgument(
            "degenerate atom with zero image norm".into(),
        ));
    }
    Ok(atom_inner(a, spec, w)? / norm)
}

/// Per-pole 2×2 contractions from which inner products and norms follow
/// for any phase: with `A = U_zᵀ G U_z`, `B = V_zᵀ V_z`, `M_k = U_zᵀ W_k V_z`,
///
/// * `<Φ X, Γ_k> = cosψ (m11 + m22) + sinψ (m21 − m12)`
/// * `‖Φ X‖² = tr(R_ψᵀ A R_ψ B)`.
struct PoleEval {
    a: Matrix2<f64>,
    b: Matrix2<f64>,
    ms: Vec<Matrix2<f64>>,
}

impl PoleEval {
    fn new(modulus: f64, angle: f64, spec: HankelSpec, g: &Matrix, ws: &[&Matrix]) -> Self {
        let f = atom_factors(&PoleAtom::new(modulus, angle, 0.0), spec);
        let gu = g * &f.u;
        let a_dyn = f.u.transpose() * gu;
        let b_dyn = f.v.transpose() * &f.v;
        let to2 = |m: &Matrix| Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let ms = ws
            .iter()
            .map(|w| {
                let m_dyn = f.u.transpose() * *w * &f.v;
                to2(&m_dyn)
            })
            .collect();
        Self {
            a: to2(&a_dyn),
            b: to2(&b_dyn),
            ms,
        }
    }

    fn inner(&self, k: usize, psi: f64) -> f64 {
        let m = &self.ms[k];
        psi.cos() * (m[(0, 0)] + m[(1, 1)]) + psi.sin() * (m[(1, 0)] - m[(0, 1)])
    }

    fn norm(&self, psi: f64) -> f64 {
        let (c, s) = (psi.cos(), psi.sin());
        let r = Matrix2::new(c, -s, s, c);
        let rar = r.transpose() * self.a * r;
        let sq = rar[(0, 0)] * self.b[(0, 0)]
            + rar[(0, 1)] * self.b[(1, 0)]
            + rar[(1, 0)] * self.b[(0, 1)]
            + rar[(1, 1)] * self.b[(1, 1)];
        sq.max(0.0).sqrt()
    }
}

/// Grid of `(|z|, θ)` pole candidates.
fn pole_grid(opts: &HankelSolverOptions) -> Vec<(f64, f64)> {
    let cap = opts.modulus_cap();
    let mut out = Vec::with_capacity(opts.n_theta * opts.n_modulus);
    for i in 0..opts.n_theta {
        let theta = PI * i as f64 / (opts.n_theta - 1) as f64;
        for j in 1..=opts.n_modulus {
            let modulus = cap * j as f64 / opts.n_modulus as f64;
            out.push((modulus, theta));
        }
    }
    out
}

fn excluded(modulus: f64, angle: f64, exclusions: &[PoleAtom], epsilon: f64) -> bool {
    let probe = PoleAtom::new(modulus, angle, 0.0);
    exclusions
        .iter()
        .any(|e| e.pole_distance(&probe) < epsilon)
}

/// Dense phase samples over `(-π, π]` plus one parabolic refinement of the
/// best sample.
fn phase_line_search<F>(n_phase: usize, f: F) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let h = 2.0 * PI / n_phase as f64;
    let mut best = (0.0, f64::NEG_INFINITY);
    let mut values = Vec::with_capacity(n_phase);
    for i in 0..n_phase {
        let psi = -PI + h * (i as f64 + 1.0);
        let v = f(psi);
        values.push((psi, v));
        if v > best.1 {
            best = (psi, v);
        }
    }
    if !best.1.is_finite() {
        return best;
    }
    // Parabolic step using cyclic neighbors.
    let idx = values
        .iter()
        .position(|&(p, _)| p == best.0)
        .expect("best sample present");
    let prev = values[(idx + n_phase - 1) % n_phase].1;
    let next = values[(idx + 1) % n_phase].1;
    let denom = prev - 2.0 * best.1 + next;
    if denom.abs() > 1e-300 {
        let delta = 0.5 * h * (prev - next) / denom;
        if delta.abs() <= h {
            let psi = best.0 + delta;
            let v = f(psi);
            if v > best.1 {
                best = (psi, v);
            }
        }
    }
    best
}

/// Finds the atom maximizing the normalized correlation encoded by
/// `W = Φᵀ Γ`, staying `epsilon`-separated from `exclusions`. The returned
/// atom's phase is canonicalized so the correlation is positive.
pub fn optimize_atom(
    w: &Matrix,
    g: &Matrix,
    spec: HankelSpec,
    opts: &HankelSolverOptions,
    exclusions: &[PoleAtom],
) -> Result<PoleAtom> {
    opts.validate()?;
    match &opts.search_space {
        SearchSpace::FixedGrid(atoms) => {
            let mut best: Option<(PoleAtom, f64)> = None;
            for a in atoms {
                if excluded(a.modulus, a.angle, exclusions, opts.epsilon) {
                    continue;
                }
                let norm = atom_opnorm(a, spec, g)?;
                if norm <= DEGENERATE_NORM_TOL {
                    continue;
                }
                let c = atom_inner(a, spec, w)? / norm;
                let (atom, value) = if c >= 0.0 { (*a, c) } else { (a.flipped(), -c) };
                if best.as_ref().is_none_or(|(_, bv)| value > *bv) {
                    best = Some((atom, value));
                }
            }
            best.map(|(a, _)| a)
                .ok_or_else(|| Error::SearchFailure("all grid atoms degenerate or excluded".into()))
        }
        SearchSpace::Continuous => {
            let starts = continuous_sweep(w, g, spec, opts, exclusions, |eval, psi| {
                let norm = eval.norm(psi);
                if norm <= DEGENERATE_NORM_TOL {
                    f64::NEG_INFINITY
                } else {
                    eval.inner(0, psi).abs() / norm
                }
            });
            if starts.is_empty() {
                return Err(Error::SearchFailure(
                    "no admissible pole in the search domain".into(),
                ));
            }
            let objective = |x: &[f64]| -> f64 {
                match point_correlation(x, w, g, spec, opts, exclusions) {
                    Some(c) => -c.abs(),
                    None => f64::INFINITY,
                }
            };
            let mut best: Option<(Vec<f64>, f64)> = None;
            for start in starts.iter().take(REFINE_STARTS) {
                let x0 = [start.0, start.1, start.2];
                let (x, v) = nelder_mead(
                    &objective,
                    &x0,
                    &SimplexOptions {
                        initial_step: 0.02,
                        tol: opts.refine_tol,
                        max_iters: opts.max_refine_iters,
                    },
                );
                if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                    best = Some((x, v));
                }
            }
            let (mut x, v) = best.expect("at least one start");
            // Snap near-boundary angles to the exact boundary when that does
            // not hurt the objective; keeps real poles classified as real.
            for boundary in [0.0, PI] {
                if (x[1] - boundary).abs() < 1e-3 && x[1] != boundary {
                    let snapped = [x[0], boundary, x[2]];
                    let vs = objective(&snapped);
                    if vs <= v + 1e-9 * (1.0 + v.abs()) {
                        x = snapped.to_vec();
                        break;
                    }
                }
            }
            let c = point_correlation(&x, w, g, spec, opts, exclusions)
                .ok_or_else(|| Error::SearchFailure("refinement left the domain".into()))?;
            let atom = PoleAtom::new(x[0], x[1], x[2]);
            Ok(if c >= 0.0 { atom } else { atom.flipped() })
        }
    }
}

/// Signed normalized correlation at a raw parameter point, or `None`
/// outside the feasible domain.
fn point_correlation(
    x: &[f64],
    w: &Matrix,
    g: &Matrix,
    spec: HankelSpec,
    opts: &HankelSolverOptions,
    exclusions: &[PoleAtom],
) -> Option<f64> {
    let (modulus, angle, psi) = (x[0], x[1], x[2]);
    if !(1e-8..=opts.modulus_cap()).contains(&modulus) || !(0.0..=PI).contains(&angle) {
        return None;
    }
    if excluded(modulus, angle, exclusions, opts.epsilon) {
        return None;
    }
    let eval = PoleEval::new(modulus, angle, spec, g, &[w]);
    let norm = eval.norm(psi);
    if norm <= DEGENERATE_NORM_TOL {
        return None;
    }
    Some(eval.inner(0, psi) / norm)
}

/// Sweeps the `(|z|, θ)` grid, line-searching the phase at each pole, and
/// returns admissible candidates sorted by decreasing objective value.
fn continuous_sweep<F>(
    w: &Matrix,
    g: &Matrix,
    spec: HankelSpec,
    opts: &HankelSolverOptions,
    exclusions: &[PoleAtom],
    objective: F,
) -> Vec<(f64, f64, f64, f64)>
where
    F: Fn(&PoleEval, f64) -> f64,
{
    let mut candidates: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (modulus, theta) in pole_grid(opts) {
        if excluded(modulus, theta, exclusions, opts.epsilon) {
            continue;
        }
        let eval = PoleEval::new(modulus, theta, spec, g, &[w]);
        let (psi, value) = phase_line_search(opts.n_phase, |p| objective(&eval, p));
        if value.is_finite() {
            candidates.push((modulus, theta, psi, value));
        }
    }
    candidates.sort_by(|a, b| b.3.partial_cmp(&a.3).unwrap());
    candidates
}

/// Solves the equiangular system `G χ = d` (`d` the vector of image norms)
/// and assembles the direction `Z = Σ χ_i Φ X_i`, which satisfies
/// `<Φ X_i, Z> = ‖Φ X_i‖` for every active atom.
pub fn equiangular_direction(active: &ActiveSet) -> Result<(DVector<f64>, Matrix)> {
    if active.is_empty() {
        return Err(Error::InvalidArgument("empty active set".into()));
    }
    let k = active.len();
    let d = DVector::from_fn(k, |i, _| active.norms[i]);
    let mut gram = active.gram.clone();

    let svs = gram.clone().singular_values();
    let s_max = svs.iter().cloned().fold(0.0, f64::max);
    let s_min = svs.iter().cloned().fold(f64::INFINITY, f64::min);
    if s_max > 0.0 && s_min < s_max * 1e-12 {
        return Err(Error::IllConditioned(format!(
            "active Gram condition ~{:.1e}; atoms nearly collinear (epsilon too small?)",
            s_max / s_min.max(f64::MIN_POSITIVE)
        )));
    }
    if s_max > 0.0 && s_min < s_max * 1e-10 {
        // Ridge keeps nearby atoms solvable without changing well-posed cases.
        for i in 0..k {
            gram[(i, i)] += 1e-12 * s_max;
        }
    }
    let chi = gram
        .cholesky()
        .map(|c| c.solve(&d))
        .ok_or_else(|| Error::IllConditioned("active Gram not positive definite".into()))?;

    let mut z = Matrix::zeros(active.images[0].nrows(), active.images[0].ncols());
    for i in 0..k {
        z += &active.images[i] * chi[i];
    }
    Ok((chi, z))
}

/// Outcome of the next-covariate search.
enum NextAtom {
    Found(PoleAtom, f64),
    /// No admissible candidate with a positive step: the residual is
    /// effectively spanned by the active set.
    Terminated,
}

/// Step size at which a candidate's normalized residual correlation
/// catches up with the active set, from the linear equality constraint.
/// `c_hat`/`g_hat` are the candidate's normalized correlations with the
/// residual and with the equiangular direction; the flipped branch covers
/// the phase-π sign change.
fn step_branches(c_common: f64, c_hat: f64, g_hat: f64) -> Option<(f64, bool)> {
    let mut best: Option<(f64, bool)> = None;
    for (flip, num, den) in [
        (false, c_common - c_hat, 1.0 - g_hat),
        (true, c_common + c_hat, 1.0 + g_hat),
    ] {
        if den <= 1e-12 {
            continue;
        }
        let eta = num / den;
        if eta >= 0.0 && best.as_ref().is_none_or(|(b, _)| eta < *b) {
            best = Some((eta, flip));
        }
    }
    best
}

fn step_to_next_atom(
    w_mu: &Matrix,
    w_z: &Matrix,
    c_common: f64,
    g: &Matrix,
    spec: HankelSpec,
    opts: &HankelSolverOptions,
    active: &ActiveSet,
) -> Result<NextAtom> {
    // `W = Φᵀ(Φ X_a)` for the active atoms, so PoleEval inner products
    // against them give `<Φ X_cand, Φ X_a>` and, through the active Gram,
    // the cosine between a candidate image and the active image span.
    let active_ws: Vec<Matrix> = active
        .atoms
        .iter()
        .map(|a| g * atom_matrix(a, spec))
        .collect();
    let gram_chol = {
        let k = active.len();
        let mut gm = active.gram.clone();
        let trace_scale = (0..k).map(|i| gm[(i, i)]).fold(0.0_f64, f64::max);
        for i in 0..k {
            gm[(i, i)] += 1e-12 * trace_scale.max(1.0);
        }
        gm.cholesky()
    };
    let tol_sq = opts.collinearity_tol * opts.collinearity_tol;
    let span_aligned = |eval: &PoleEval, psi: f64, norm: f64| -> bool {
        let Some(chol) = gram_chol.as_ref() else {
            return false;
        };
        let c = DVector::from_fn(active.len(), |i, _| eval.inner(2 + i, psi));
        let proj = chol.solve(&c);
        c.dot(&proj) > tol_sq * norm * norm
    };
    let mut ws: Vec<&Matrix> = vec![w_mu, w_z];
    ws.extend(active_ws.iter());

    let eta_of_point = |modulus: f64, angle: f64, psi: f64| -> Option<(f64, bool)> {
        if !(1e-8..=opts.modulus_cap()).contains(&modulus) || !(0.0..=PI).contains(&angle) {
            return None;
        }
        if excluded(modulus, angle, &active.atoms, opts.epsilon) {
            return None;
        }
        let eval = PoleEval::new(modulus, angle, spec, g, &ws);
        let norm = eval.norm(psi);
        if norm <= DEGENERATE_NORM_TOL {
            return None;
        }
        if span_aligned(&eval, psi, norm) {
            return None;
        }
        let c_hat = eval.inner(0, psi) / norm;
        let g_hat = eval.inner(1, psi) / norm;
        step_branches(c_common, c_hat, g_hat)
    };

    match &opts.search_space {
        SearchSpace::FixedGrid(atoms) => {
            let mut best: Option<(PoleAtom, f64)> = None;
            for a in atoms {
                if excluded(a.modulus, a.angle, &active.atoms, opts.epsilon) {
                    continue;
                }
                let norm = atom_opnorm(a, spec, g)?;
                if norm <= DEGENERATE_NORM_TOL {
                    continue;
                }
                let c_hat = atom_inner(a, spec, w_mu)? / norm;
                let g_hat = atom_inner(a, spec, w_z)? / norm;
                if let Some((eta, flip)) = step_branches(c_common, c_hat, g_hat) {
                    let atom = if flip { a.flipped() } else { *a };
                    if best.as_ref().is_none_or(|(_, be)| eta < *be - 1e-14) {
                        best = Some((atom, eta));
                    }
                }
            }
            Ok(match best {
                Some((a, eta)) => NextAtom::Found(a, eta),
                None => NextAtom::Terminated,
            })
        }
        SearchSpace::Continuous => {
            // Grid sweep minimizing eta; the phase line search reuses the
            // maximization helper on -eta.
            let mut candidates: Vec<(f64, f64, f64, f64)> = Vec::new();
            for (modulus, theta) in pole_grid(opts) {
                if excluded(modulus, theta, &active.atoms, opts.epsilon) {
                    continue;
                }
                let eval = PoleEval::new(modulus, theta, spec, g, &ws);
                let (psi, neg_eta) = phase_line_search(opts.n_phase, |p| {
                    let norm = eval.norm(p);
                    if norm <= DEGENERATE_NORM_TOL {
                        return f64::NEG_INFINITY;
                    }
                    if span_aligned(&eval, p, norm) {
                        return f64::NEG_INFINITY;
                    }
                    let c_hat = eval.inner(0, p) / norm;
                    let g_hat = eval.inner(1, p) / norm;
                    match step_branches(c_common, c_hat, g_hat) {
                        Some((eta, _)) => -eta,
                        None => f64::NEG_INFINITY,
                    }
                });
                if neg_eta.is_finite() {
                    candidates.push((modulus, theta, psi, -neg_eta));
                }
            }
            if candidates.is_empty() {
                return Ok(NextAtom::Terminated);
            }
            candidates.sort_by(|a, b| a.3.partial_cmp(&b.3).unwrap());

            let objective = |x: &[f64]| -> f64 {
                match eta_of_point(x[0], x[1], x[2]) {
                    Some((eta, _)) => eta,
                    None => f64::INFINITY,
                }
            };
            let mut best: Option<(Vec<f64>, f64)> = None;
            for start in candidates.iter().take(REFINE_STARTS) {
                let (x, v) = nelder_mead(
                    &objective,
                    &[start.0, start.1, start.2],
                    &SimplexOptions {
                        initial_step: 0.02,
                        tol: opts.refine_tol,
                        max_iters: opts.max_refine_iters,
                    },
                );
                if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                    best = Some((x, v));
                }
            }
            let (mut x, v) = best.expect("nonempty candidates");
            for boundary in [0.0, PI] {
                if (x[1] - boundary).abs() < 1e-3 && x[1] != boundary {
                    let snapped = [x[0], boundary, x[2]];
                    if objective(&snapped) <= v + 1e-9 * (1.0 + v.abs()) {
                        x = snapped.to_vec();
                        break;
                    }
                }
            }
            match eta_of_point(x[0], x[1], x[2]) {
                Some((eta, flip)) => {
                    let atom = PoleAtom::new(x[0], x[1], x[2]);
                    let atom = if flip { atom.flipped() } else { atom };
                    Ok(NextAtom::Found(atom, eta))
                }
                None => Ok(NextAtom::Terminated),
            }
        }
    }
}

/// Runs the path until the rank budget is consumed or the residual is
/// spanned. The final recorded step moves the coefficients to the point
/// where the next atom would have entered, mirroring the closed-form
/// shrinkage of the unstructured case.
pub fn run_path(
    y: &Matrix,
    phi: &Matrix,
    spec: HankelSpec,
    opts: &HankelSolverOptions,
) -> Result<HankelPath> {
    opts.validate()?;
    if phi.ncols() != spec.m {
        return Err(Error::Dimension(format!(
            "Phi has {} columns but the Hankel matrices have {} rows",
            phi.ncols(),
            spec.m
        )));
    }
    if y.nrows() != phi.nrows() || y.ncols() != spec.n {
        return Err(Error::Dimension(format!(
            "Y shape {:?} inconsistent with Phi {:?} and spec {}x{}",
            y.shape(),
            phi.shape(),
            spec.m,
            spec.n
        )));
    }

    let mut active = ActiveSet::new(opts.epsilon);
    let mut history = Vec::new();
    let mut prediction = Matrix::zeros(y.nrows(), y.ncols());
    if opts.rank_budget == 0 {
        return Ok(HankelPath {
            achieved_rank: 0,
            active,
            history,
            prediction,
        });
    }

    let g = phi.transpose() * phi;
    let w_y = phi.transpose() * y;
    let y_scale = y.norm().max(1.0);

    let first = optimize_atom(&w_y, &g, spec, opts, &[])?;
    if first.rank_cost() > opts.rank_budget {
        // Budget parity mismatch on the very first atom: stop with the
        // zero estimate rather than overshoot the rank.
        return Ok(HankelPath {
            achieved_rank: 0,
            active,
            history,
            prediction,
        });
    }
    let image = phi * atom_matrix(&first, spec);
    let norm = image.norm();
    active.push(first, image, norm)?;

    for iteration in 0.. {
        let residual = y - &prediction;
        let w_mu = phi.transpose() * &residual;

        // Common correlation of the active atoms; they agree up to the
        // refinement tolerance, so the mean is used.
        let corrs: Vec<f64> = (0..active.len())
            .map(|i| {
                frob_inner(&residual, active.image(i)).expect("shapes agree")
                    / active.image_norm(i)
            })
            .collect();
        let c_common = corrs.iter().sum::<f64>() / corrs.len() as f64;
        let spread = corrs
            .iter()
            .map(|c| (c - c_common).abs())
            .fold(0.0, f64::max);
        if c_common <= 1e-10 * y_scale {
            break;
        }

        let (chi, z_dir) = equiangular_direction(&active)?;
        let w_z = phi.transpose() * &z_dir;

        let next = step_to_next_atom(&w_mu, &w_z, c_common, &g, spec, opts, &active)?;
        let (atom, eta) = match next {
            NextAtom::Found(a, eta) => (a, eta),
            NextAtom::Terminated => break,
        };

        for (coef, x) in active.coefficients.iter_mut().zip(chi.iter()) {
            *coef += eta * x;
        }
        prediction += &z_dir * eta;

        let over_budget = active.consumed_rank() + atom.rank_cost() > opts.rank_budget;
        history.push(StepRecord {
            iteration,
            eta,
            added: if over_budget { None } else { Some(atom) },
            residual_norm: (y - &prediction).norm(),
            common_correlation: c_common,
            correlation_spread: spread,
        });
        if over_budget {
            break;
        }
        let image = phi * atom_matrix(&atom, spec);
        let norm = image.norm();
        active.push(atom, image, norm)?;
    }

    Ok(HankelPath {
        achieved_rank: active.consumed_rank(),
        active,
        history,
        prediction,
    })
}

/// Refits the coefficients of the selected atoms by unconstrained least
/// squares, removing the shrinkage bias of the path.
pub fn debias(y: &Matrix, phi: &Matrix, atoms: &[PoleAtom], spec: HankelSpec) -> Result<Vec<f64>> {
    if atoms.is_empty() {
        return Err(Error::InvalidArgument("no atoms to debias".into()));
    }
    let k = atoms.len();
    let images: Vec<Matrix> = atoms.iter().map(|a| phi * atom_matrix(a, spec)).collect();
    let mut gram = Matrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for i in 0..k {
        rhs[i] = frob_inner(&images[i], y)?;
        for j in i..k {
            let v = frob_inner(&images[i], &images[j])?;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let sol = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => {
            let svd = gram
                .try_svd(true, true, f64::EPSILON * 5.0, 0)
                .ok_or_else(|| Error::Numerical("SVD failed in debias".into()))?;
            let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            svd.solve(&rhs, 1e-12 * s_max.max(f64::MIN_POSITIVE))
                .map_err(|e| Error::IllConditioned(e.to_string()))?
        }
    };
    Ok(sol.iter().cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::atom_sequence;
    use crate::matrix::hankel_map;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn small_opts(rank: usize) -> HankelSolverOptions {
        let mut o = HankelSolverOptions::with_rank(rank);
        o.n_theta = 32;
        o.n_modulus = 16;
        o.n_phase = 32;
        o
    }

    #[test]
    fn correlation_self_and_orthogonal() {
        let spec = HankelSpec::new(4, 3).unwrap();
        let a = PoleAtom::new(0.7, 0.9, 0.2);
        let g = Matrix::identity(4, 4);
        // Γ = X_a (Φ = I): correlation is the norm of the image.
        let x = atom_matrix(&a, spec);
        let c = correlation(&a, spec, &x, &g).unwrap();
        assert_relative_eq!(c, x.norm(), epsilon = 1e-10);

        // Γ orthogonal to the atom: correlation 0.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw = random_matrix(&mut rng, 4, 3);
        let ortho = &raw - &x * (frob_inner(&raw, &x).unwrap() / x.norm_squared());
        let c0 = correlation(&a, spec, &ortho, &g).unwrap();
        assert!(c0.abs() < 1e-10);

        // Degenerate atom rejected.
        let degenerate = PoleAtom::new(0.5, 0.0, std::f64::consts::FRAC_PI_2);
        assert!(correlation(&degenerate, spec, &x, &g).is_err());
    }

    #[test]
    fn optimize_recovers_single_atom() {
        let spec = HankelSpec::new(8, 6).unwrap();
        let truth = PoleAtom::new(0.5, 0.0, 0.0);
        let y = atom_matrix(&truth, spec);
        let g = Matrix::identity(8, 8);
        let found = optimize_atom(&y, &g, spec, &small_opts(1), &[]).unwrap();
        assert!((found.modulus - 0.5).abs() < 1e-3);
        assert!(found.angle < 1e-3);
    }

    #[test]
    fn optimize_handles_constant_phase_at_boundary() {
        // At θ = 0 the correlation is phase-independent up to sign; the
        // search must not fail there.
        let spec = HankelSpec::new(6, 5).unwrap();
        let y = atom_matrix(&PoleAtom::new(0.8, 0.0, 0.0), spec);
        let g = Matrix::identity(6, 6);
        let found = optimize_atom(&y, &g, spec, &small_opts(1), &[]).unwrap();
        let c = correlation(&found, spec, &y, &g).unwrap();
        assert!(c > 0.0);
    }

    #[test]
    fn equiangular_single_and_orthogonal_pairs() {
        let spec = HankelSpec::new(5, 4).unwrap();
        let phi = Matrix::identity(5, 5);
        let a = PoleAtom::new(0.6, 0.8, 0.1);
        let image = &phi * atom_matrix(&a, spec);
        let norm = image.norm();
        let mut active = ActiveSet::new(0.01);
        active.push(a, image.clone(), norm).unwrap();
        let (chi, z) = equiangular_direction(&active).unwrap();
        // One atom: Z = image / norm.
        assert!((&z - &image / norm).norm() < 1e-10);
        assert_relative_eq!(chi[0], 1.0 / norm, epsilon = 1e-10);

        // Duplicate atoms are rejected by the separation check.
        let mut dup = ActiveSet::new(0.01);
        dup.push(a, image.clone(), norm).unwrap();
        assert!(dup.push(a, image.clone(), norm).is_err());
    }

    #[test]
    fn equiangular_orthonormal_images_hand_case() {
        // Two synthetic "atoms" with orthogonal unit-norm images: χ = 1,
        // <A_k, Z> = 1.
        let mut active = ActiveSet::new(1e-6);
        let mut im1 = Matrix::zeros(2, 2);
        im1[(0, 0)] = 1.0;
        let mut im2 = Matrix::zeros(2, 2);
        im2[(1, 1)] = 1.0;
        active
            .push(PoleAtom::new(0.3, 0.0, 0.0), im1.clone(), 1.0)
            .unwrap();
        active
            .push(PoleAtom::new(0.9, 0.0, 0.0), im2.clone(), 1.0)
            .unwrap();
        let (chi, z) = equiangular_direction(&active).unwrap();
        assert_relative_eq!(chi[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(chi[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(frob_inner(&im1, &z).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(frob_inner(&im2, &z).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn path_on_noiseless_single_pole() {
        let spec = HankelSpec::new(8, 6).unwrap();
        let truth = PoleAtom::new(0.5, 0.0, 0.0);
        let seq = atom_sequence(&truth, spec.len()) * 2.0;
        let y = hankel_map(&seq, spec).unwrap();
        let phi = Matrix::identity(8, 8);
        let path = run_path(&y, &phi, spec, &small_opts(1)).unwrap();
        assert_eq!(path.atoms().len(), 1);
        let a = path.atoms()[0];
        assert!((a.modulus - 0.5).abs() < 1e-3, "modulus {}", a.modulus);
        assert!(a.angle < 1e-3);
        // Debiased fit is essentially exact.
        let coeffs = debias(&y, &phi, path.atoms(), spec).unwrap();
        let (_, mat) = crate::atoms::synthesize(path.atoms(), &coeffs, spec).unwrap();
        assert!((&y - mat).norm() / y.norm() < 1e-4);
    }

    #[test]
    fn zero_budget_gives_empty_path() {
        let spec = HankelSpec::new(4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = random_matrix(&mut rng, 4, 3);
        let path = run_path(&y, &Matrix::identity(4, 4), spec, &small_opts(0)).unwrap();
        assert!(path.atoms().is_empty());
        assert_eq!(path.achieved_rank, 0);
        assert!(path.prediction.norm() == 0.0);
    }

    #[test]
    fn zero_residual_terminates() {
        let spec = HankelSpec::new(4, 3).unwrap();
        let y = Matrix::zeros(4, 3);
        let path = run_path(&y, &Matrix::identity(4, 4), spec, &small_opts(2)).unwrap();
        // First optimize still returns an atom, but correlations vanish;
        // the loop exits without a step.
        assert!(path.history.is_empty());
    }

    #[test]
    fn path_invariants_on_noisy_two_pole_data() {
        let spec = HankelSpec::new(10, 8).unwrap();
        let n = spec.len();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut seq = atom_sequence(&PoleAtom::new(0.85, 0.8, 0.3), n) * 1.5;
        seq += atom_sequence(&PoleAtom::new(0.6, 2.2, -0.7), n);
        let noise = Matrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng)) * 0.01;
        let seq = seq + noise.column(0);
        let y = hankel_map(&seq, spec).unwrap();
        let phi = Matrix::identity(10, 10);
        let path = run_path(&y, &phi, spec, &small_opts(4)).unwrap();

        // Residual norm strictly decreasing, correlations agree.
        let mut last = y.norm();
        for step in &path.history {
            assert!(step.residual_norm < last + 1e-12);
            assert!(step.correlation_spread < 1e-6 * (1.0 + step.common_correlation));
            last = step.residual_norm;
        }

        // Prediction consistency: incremental Ŷ matches the synthesis
        // from the recorded coefficients.
        let (_, x_hat) =
            crate::atoms::synthesize(path.atoms(), path.coefficients(), spec).unwrap();
        assert!((&phi * x_hat - &path.prediction).norm() < 1e-8 * (1.0 + path.prediction.norm()));

        // Debiasing never increases the residual.
        let coeffs = debias(&y, &phi, path.atoms(), spec).unwrap();
        let (_, mat) = crate::atoms::synthesize(path.atoms(), &coeffs, spec).unwrap();
        let debiased = (&y - &phi * mat).norm();
        assert!(debiased <= (&y - &path.prediction).norm() + 1e-10);

        // Coefficients stay nonnegative along this path.
        for &c in path.coefficients() {
            assert!(c >= -1e-10);
        }
    }

    #[test]
    fn epsilon_separation_enforced() {
        let spec = HankelSpec::new(8, 6).unwrap();
        let n = spec.len();
        let seq = atom_sequence(&PoleAtom::new(0.7, 1.0, 0.2), n);
        let y = hankel_map(&seq, spec).unwrap();
        let phi = Matrix::identity(8, 8);
        let mut opts = small_opts(6);
        opts.epsilon = 0.05;
        let path = run_path(&y, &phi, spec, &opts).unwrap();
        for i in 0..path.atoms().len() {
            for j in 0..i {
                assert!(path.atoms()[i].pole_distance(&path.atoms()[j]) >= opts.epsilon - 1e-12);
            }
        }
    }

    #[test]
    fn debias_empty_and_single() {
        let spec = HankelSpec::new(4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let y = random_matrix(&mut rng, 4, 3);
        let phi = Matrix::identity(4, 4);
        assert!(debias(&y, &phi, &[], spec).is_err());

        let a = PoleAtom::new(0.8, 0.5, 0.1);
        let coeffs = debias(&y, &phi, &[a], spec).unwrap();
        let image = &phi * atom_matrix(&a, spec);
        let expected = frob_inner(&image, &y).unwrap() / image.norm_squared();
        assert_relative_eq!(coeffs[0], expected, epsilon = 1e-10);
    }

    #[test]
    fn debias_recovers_true_amplitudes() {
        let spec = HankelSpec::new(8, 6).unwrap();
        let atoms = [PoleAtom::new(0.8, 0.7, 0.4), PoleAtom::new(0.5, 2.0, -0.9)];
        let truth = [1.3, 0.7];
        let (_, y) = crate::atoms::synthesize(&atoms, &truth, spec).unwrap();
        let phi = Matrix::identity(8, 8);
        let coeffs = debias(&y, &phi, &atoms, spec).unwrap();
        assert_relative_eq!(coeffs[0], truth[0], epsilon = 1e-8);
        assert_relative_eq!(coeffs[1], truth[1], epsilon = 1e-8);
    }
}
