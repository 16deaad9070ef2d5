//! Synthetic data generators for the two benchmark problems: a low-rank
//! first-order vector autoregression and a sixth-order system realization
//! from a noisy impulse response.

use anyhow::{bail, ensure, Result};
use lowrank_lar::atoms::{wrap_phase, PoleAtom};
use lowrank_lar::matrix::hankel_map;
use lowrank_lar::{HankelSpec, Matrix, Sequence};
use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct VarConfig {
    /// State dimension (the transition matrix is n×n).
    pub n: usize,
    /// Number of observed transitions.
    pub p: usize,
    /// Rank of the transition matrix.
    pub rank: usize,
    /// Spectral radius of the transition matrix, in (0, 1).
    pub rho: f64,
    /// Standard deviation of the process noise.
    pub noise: f64,
}

impl VarConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.p >= self.n, "need at least as many samples as states");
        ensure!(
            self.rank >= 1 && self.rank < self.n,
            "rank must be in 1..n"
        );
        ensure!(
            self.rho > 0.0 && self.rho < 1.0,
            "spectral radius must be in (0, 1)"
        );
        ensure!(self.noise >= 0.0, "noise std must be nonnegative");
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VarData {
    /// Regressor: rows are states x_1..x_p.
    pub phi: Matrix,
    /// Response: rows are states x_2..x_{p+1}.
    pub y: Matrix,
    /// True transition matrix B; the regression target is X₀ = B.
    pub b: Matrix,
}

fn standard_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn spectral_radius(m: &Matrix) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|ev| ev.norm())
        .fold(0.0, f64::max)
}

/// Draws a rank-r transition matrix `B = b₀ B₁ B₂ᵀ` with prescribed
/// spectral radius, simulates `x_{k+1} = Bᵀ x_k + e_k`, and stacks the
/// states into the regression pair (Φ, Y).
pub fn gen_var(cfg: &VarConfig, rng: &mut impl Rng) -> Result<VarData> {
    cfg.validate()?;
    let b = loop {
        let b1 = standard_matrix(rng, cfg.n, cfg.rank);
        let b2 = standard_matrix(rng, cfg.n, cfg.rank);
        let raw = b1 * b2.transpose();
        let radius = spectral_radius(&raw);
        if radius > 1e-12 {
            break raw * (cfg.rho / radius);
        }
        // Essentially impossible for Gaussian draws; redraw if it happens.
    };

    let mut x = Sequence::from_fn(cfg.n, |_, _| StandardNormal.sample(rng));
    let mut phi = Matrix::zeros(cfg.p, cfg.n);
    let mut y = Matrix::zeros(cfg.p, cfg.n);
    for k in 0..cfg.p {
        phi.row_mut(k).tr_copy_from(&x);
        let noise = Sequence::from_fn(cfg.n, |_, _| {
            let e: f64 = StandardNormal.sample(rng);
            e * cfg.noise
        });
        x = b.transpose() * &x + noise;
        y.row_mut(k).tr_copy_from(&x);
    }
    Ok(VarData { phi, y, b })
}

/// Poles and residues of the benchmark sixth-order system; conjugate
/// pairs are implicit.
pub const REALIZATION_POLES: [Complex<f64>; 3] = [
    Complex::new(-0.6, 0.6),
    Complex::new(0.9, 0.2),
    Complex::new(0.2, 0.9),
];
pub const REALIZATION_RESIDUES: [Complex<f64>; 3] = [
    Complex::new(1.0, 0.0),
    Complex::new(1.0, -2.0),
    Complex::new(-1.0, -1.0),
];

#[derive(Debug, Clone)]
pub struct RealizationConfig {
    /// Hankel rows.
    pub m: usize,
    /// Hankel columns; the impulse response has length m + cols − 1.
    pub cols: usize,
    /// Standard deviation of the measurement noise on the impulse response.
    pub noise: f64,
    /// Poles and residues, conjugate pairs implicit.
    pub poles: Vec<Complex<f64>>,
    pub residues: Vec<Complex<f64>>,
}

impl RealizationConfig {
    /// The benchmark system with the given Hankel shape and noise level.
    pub fn benchmark(m: usize, cols: usize, noise: f64) -> Self {
        Self {
            m,
            cols,
            noise,
            poles: REALIZATION_POLES.to_vec(),
            residues: REALIZATION_RESIDUES.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.m >= 2 && self.cols >= 2, "Hankel shape too small");
        ensure!(self.noise >= 0.0, "noise std must be nonnegative");
        ensure!(
            self.poles.len() == self.residues.len() && !self.poles.is_empty(),
            "poles and residues must pair up"
        );
        if self.poles.iter().any(|q| q.norm() >= 1.0) {
            bail!("poles must be strictly inside the unit circle for energy normalization");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RealizationData {
    /// Noisy Hankel observation Y = H(ĝ).
    pub y: Matrix,
    /// True low-rank Hankel matrix X₀ = H(g).
    pub x0: Matrix,
    /// True impulse response g.
    pub g: Sequence,
    /// Noisy impulse response ĝ.
    pub g_noisy: Sequence,
    /// Scale d₀ normalizing the response energy to 1.
    pub d0: f64,
    /// One atom per conjugate pole pair: (|q_i|, arg q_i, arg d_i).
    pub true_atoms: Vec<PoleAtom>,
    /// Amplitude of each atom in g: 2 d₀ |d_i|.
    pub amplitudes: Vec<f64>,
}

/// Energy of the infinite impulse response `h_k = Σ (d_i q_i^{k−1} + c.c.)`
/// by summing the geometric series over all ordered pairs of terms:
/// `Σ_k h_k² = Σ_{a,b} c_a c_b / (1 − λ_a λ_b)`.
fn response_energy(poles: &[Complex<f64>], residues: &[Complex<f64>]) -> f64 {
    let mut terms: Vec<(Complex<f64>, Complex<f64>)> = Vec::new();
    for (q, d) in poles.iter().zip(residues) {
        terms.push((*d, *q));
        terms.push((d.conj(), q.conj()));
    }
    let mut sum = Complex::new(0.0, 0.0);
    for &(ca, la) in &terms {
        for &(cb, lb) in &terms {
            sum += ca * cb / (Complex::new(1.0, 0.0) - la * lb);
        }
    }
    sum.re
}

/// Generates the impulse response `g_k = d₀ Σ (d_i q_i^{k−1} + c.c.)`
/// normalized to unit energy, its noisy measurement, and the Hankel
/// regression pair.
pub fn gen_realization(cfg: &RealizationConfig, rng: &mut impl Rng) -> Result<RealizationData> {
    cfg.validate()?;
    let energy = response_energy(&cfg.poles, &cfg.residues);
    ensure!(energy > 0.0, "degenerate pole/residue configuration");
    let d0 = energy.sqrt().recip();

    let len = cfg.m + cfg.cols - 1;
    let mut g = Sequence::zeros(len);
    for (q, d) in cfg.poles.iter().zip(&cfg.residues) {
        let mut power = Complex::new(1.0, 0.0);
        for k in 0..len {
            g[k] += 2.0 * d0 * (d * power).re;
            power *= q;
        }
    }

    let g_noisy = Sequence::from_fn(len, |k, _| {
        let e: f64 = StandardNormal.sample(rng);
        g[k] + e * cfg.noise
    });

    let spec = HankelSpec::new(cfg.m, cfg.cols)?;
    let x0 = hankel_map(&g, spec)?;
    let y = hankel_map(&g_noisy, spec)?;

    let true_atoms = cfg
        .poles
        .iter()
        .zip(&cfg.residues)
        .map(|(q, d)| PoleAtom::new(q.norm(), q.arg(), wrap_phase(d.arg())))
        .collect();
    let amplitudes = cfg.residues.iter().map(|d| 2.0 * d0 * d.norm()).collect();

    Ok(RealizationData {
        y,
        x0,
        g,
        g_noisy,
        d0,
        true_atoms,
        amplitudes,
    })
}
