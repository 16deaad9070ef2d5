//! Deterministic Monte Carlo harness: per-trial RNG substreams, wall-clock
//! timing around solver calls only, and per-method aggregation.

use std::time::Instant;

use anyhow::{bail, Result};
use lowrank_lar::atoms::{synthesize, PoleAtom};
use lowrank_lar::baselines::{
    cadzow, hankel_nuclear_solve, nuclear_prox_solve, LambdaGrid, ProxOptions,
};
use lowrank_lar::hankel_lar::{debias, run_path, HankelSolverOptions};
use lowrank_lar::matrix::{hankel_map, numerical_rank, DEFAULT_RANK_TOL};
use lowrank_lar::unstructured::{build_path, ls_tsvd};
use lowrank_lar::{HankelSpec, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::generators::{gen_realization, gen_var, RealizationConfig, VarConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarMethod {
    Lar,
    LsTsvd,
    Nuclear,
}

impl VarMethod {
    pub fn label(&self) -> &'static str {
        match self {
            VarMethod::Lar => "lar",
            VarMethod::LsTsvd => "ls-tsvd",
            VarMethod::Nuclear => "nuclear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HankelMethod {
    Lar,
    LarLs,
    Nuclear,
    Cadzow,
}

impl HankelMethod {
    pub fn label(&self) -> &'static str {
        match self {
            HankelMethod::Lar => "lar",
            HankelMethod::LarLs => "lar-ls",
            HankelMethod::Nuclear => "nuclear",
            HankelMethod::Cadzow => "cadzow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub modulus: f64,
    pub angle: f64,
    pub phase: f64,
    pub coefficient: f64,
}

/// One method evaluation on one trial. `error` is the squared Frobenius
/// distance to the true matrix; absent when the method failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub method: String,
    pub error: Option<f64>,
    pub seconds: f64,
    pub rank: usize,
    /// Recovered atoms encoded `modulus:angle:phase:coefficient;...`
    /// (empty for unstructured methods) so records stay flat for CSV.
    pub atoms: String,
    pub note: String,
}

impl TrialRecord {
    pub fn decode_atoms(&self) -> Result<Vec<AtomRecord>> {
        if self.atoms.is_empty() {
            return Ok(Vec::new());
        }
        self.atoms
            .split(';')
            .map(|chunk| {
                let parts: Vec<f64> = chunk
                    .split(':')
                    .map(|t| t.parse::<f64>().map_err(Into::into))
                    .collect::<Result<_>>()?;
                if parts.len() != 4 {
                    bail!("bad atom encoding {chunk:?}");
                }
                Ok(AtomRecord {
                    modulus: parts[0],
                    angle: parts[1],
                    phase: parts[2],
                    coefficient: parts[3],
                })
            })
            .collect()
    }
}

pub fn encode_atoms(atoms: &[AtomRecord]) -> String {
    atoms
        .iter()
        .map(|a| {
            format!(
                "{:.17e}:{:.17e}:{:.17e}:{:.17e}",
                a.modulus, a.angle, a.phase, a.coefficient
            )
        })
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Debug, Clone)]
pub struct GridSettings {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Widen the grid by decades (keeping the point density) when no grid
    /// value achieves the target rank, at most this many times.
    pub max_widenings: usize,
    /// When no grid value achieves the target rank, bisect between the
    /// bracketing grid points before widening. Off by default: the
    /// reference protocol evaluates grid points only.
    pub bisect: bool,
    pub rank_tol: f64,
}

impl GridSettings {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        Self {
            lo,
            hi,
            count,
            max_widenings: 2,
            bisect: false,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// Runs the λ-grid rank search. When no grid value achieves the target
/// rank, first bisect between the bracketing grid points where the rank
/// crosses the target, then widen the interval by a decade on each side
/// (at most `max_widenings` times). Returns the estimate, the λ used,
/// and a note describing any refinement.
fn rank_search_with_widening<F>(
    mut solver: F,
    settings: &GridSettings,
    target_rank: usize,
) -> Result<Option<(Matrix, f64, String)>>
where
    F: FnMut(f64) -> lowrank_lar::error::Result<Matrix>,
{
    let (mut lo, mut hi, mut count) = (settings.lo, settings.hi, settings.count);
    for round in 0..=settings.max_widenings {
        let grid = LambdaGrid::log_spaced(lo, hi, count, target_rank)?;
        let mut evaluated: Vec<(f64, usize, Matrix)> = Vec::new();
        for &lambda in &grid.values {
            let est = solver(lambda)?;
            let rank = numerical_rank(&est, settings.rank_tol);
            if rank == target_rank {
                let note = if round == 0 {
                    String::new()
                } else {
                    format!("grid widened {round}x to [{lo:.3e}, {hi:.3e}]")
                };
                return Ok(Some((est, lambda, note)));
            }
            evaluated.push((lambda, rank, est));
        }
        // Rank is nonincreasing in λ (up to solver noise); bisect the
        // first interval where it crosses the target, when enabled.
        let bracket = if !settings.bisect {
            None
        } else {
            evaluated
                .windows(2)
                .find(|w| w[0].1 > target_rank && w[1].1 < target_rank)
                .map(|w| (w[0].0, w[1].0))
        };
        if let Some((mut a, mut b)) = bracket {
            for _ in 0..40 {
                let mid = (a * b).sqrt();
                let est = solver(mid)?;
                let rank = numerical_rank(&est, settings.rank_tol);
                if rank == target_rank {
                    return Ok(Some((est, mid, format!("bisection refined to {mid:.4e}"))));
                }
                if rank > target_rank {
                    a = mid;
                } else {
                    b = mid;
                }
                if (b / a).ln().abs() < 1e-12 {
                    break;
                }
            }
        }
        lo /= 10.0;
        hi *= 10.0;
        count += settings.count;
    }
    Ok(None)
}

fn sq_err(est: &Matrix, truth: &Matrix) -> f64 {
    (est - truth).norm_squared()
}

/// Per-trial master RNG: a fixed seed with one named stream per trial, so
/// any trial can be regenerated independently.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn run_var_experiment(
    cfg: &VarConfig,
    methods: &[VarMethod],
    trials: u64,
    seed: u64,
    grid: &GridSettings,
) -> Result<Vec<TrialRecord>> {
    if methods.is_empty() {
        bail!("no methods selected");
    }
    let mut records = Vec::new();
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial);
        let data = gen_var(cfg, &mut rng)?;
        for &method in methods {
            let start = Instant::now();
            let outcome: Result<(Matrix, String)> = match method {
                VarMethod::Lar => build_path(&data.y, &data.phi)
                    .and_then(|p| p.lar_estimate(cfg.rank))
                    .map(|e| (e, String::new()))
                    .map_err(Into::into),
                VarMethod::LsTsvd => ls_tsvd(&data.y, &data.phi, cfg.rank)
                    .map(|e| (e, String::new()))
                    .map_err(Into::into),
                VarMethod::Nuclear => {
                    let solve = |lambda: f64| {
                        let opts = ProxOptions::new(lambda);
                        nuclear_prox_solve(&data.y, &data.phi, &opts, false).map(|s| s.estimate)
                    };
                    match rank_search_with_widening(solve, grid, cfg.rank)? {
                        Some((est, lambda, note)) => {
                            let note = if note.is_empty() {
                                format!("lambda={lambda:.4e}")
                            } else {
                                format!("lambda={lambda:.4e}; {note}")
                            };
                            Ok((est, note))
                        }
                        None => Err(anyhow::anyhow!("no grid lambda achieved the target rank")),
                    }
                }
            };
            let seconds = start.elapsed().as_secs_f64();
            records.push(match outcome {
                Ok((est, note)) => TrialRecord {
                    trial,
                    method: method.label().to_string(),
                    error: Some(sq_err(&est, &data.b)),
                    seconds,
                    rank: numerical_rank(&est, grid.rank_tol),
                    atoms: String::new(),
                    note,
                },
                Err(e) => TrialRecord {
                    trial,
                    method: method.label().to_string(),
                    error: None,
                    seconds,
                    rank: 0,
                    atoms: String::new(),
                    note: format!("failed: {e}"),
                },
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct HankelRunSettings {
    pub rank: usize,
    pub epsilon: f64,
    pub stable: bool,
    pub grid: GridSettings,
    pub cadzow_iters: usize,
    pub cadzow_tol: f64,
}

impl HankelRunSettings {
    pub fn benchmark(rank: usize) -> Self {
        // The splitting solver leaves a slowly-decaying singular-value
        // tail, so rank classification uses a looser tolerance than the
        // crate default.
        let mut grid = GridSettings::new(0.1, 1.0, 20);
        grid.rank_tol = 1e-3;
        Self {
            rank,
            epsilon: 0.01,
            stable: true,
            grid,
            cadzow_iters: 500,
            cadzow_tol: 1e-10,
        }
    }

    pub fn solver_options(&self) -> HankelSolverOptions {
        let mut o = HankelSolverOptions::with_rank(self.rank);
        o.epsilon = self.epsilon;
        o.stable = self.stable;
        o
    }
}

pub fn run_realization_experiment(
    cfg: &RealizationConfig,
    methods: &[HankelMethod],
    trials: u64,
    seed: u64,
    settings: &HankelRunSettings,
) -> Result<Vec<TrialRecord>> {
    if methods.is_empty() {
        bail!("no methods selected");
    }
    let spec = HankelSpec::new(cfg.m, cfg.cols)?;
    let phi = Matrix::identity(cfg.m, cfg.m);
    let mut records = Vec::new();
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial);
        let data = gen_realization(cfg, &mut rng)?;

        // The two LAR variants share one path; compute it once per trial
        // and charge its time to both.
        let needs_path = methods
            .iter()
            .any(|m| matches!(m, HankelMethod::Lar | HankelMethod::LarLs));
        let path = if needs_path {
            let start = Instant::now();
            let p = run_path(&data.y, &phi, spec, &settings.solver_options());
            Some((p, start.elapsed().as_secs_f64()))
        } else {
            None
        };

        for &method in methods {
            let record = match method {
                HankelMethod::Lar => {
                    let (path, secs) = path.as_ref().expect("path computed");
                    match path {
                        Ok(p) => {
                            let atoms: Vec<AtomRecord> = p
                                .atoms()
                                .iter()
                                .zip(p.coefficients())
                                .map(|(a, &c)| AtomRecord {
                                    modulus: a.modulus,
                                    angle: a.angle,
                                    phase: a.phase,
                                    coefficient: c,
                                })
                                .collect();
                            TrialRecord {
                                trial,
                                method: method.label().to_string(),
                                error: Some(sq_err(&p.prediction, &data.x0)),
                                seconds: *secs,
                                rank: p.achieved_rank,
                                atoms: encode_atoms(&atoms),
                                note: String::new(),
                            }
                        }
                        Err(e) => failed(trial, method.label(), *secs, e),
                    }
                }
                HankelMethod::LarLs => {
                    let (path, secs) = path.as_ref().expect("path computed");
                    let start = Instant::now();
                    let outcome = path.as_ref().map_err(|e| anyhow::anyhow!("{e}")).and_then(
                        |p| -> Result<_> {
                            if p.atoms().is_empty() {
                                bail!("empty path, nothing to debias");
                            }
                            let support = p.atoms().to_vec();
                            let coeffs = debias(&data.y, &phi, &support, spec)?;
                            let (_, est) = synthesize(&support, &coeffs, spec)?;
                            Ok((est, support, coeffs))
                        },
                    );
                    let secs = secs + start.elapsed().as_secs_f64();
                    match outcome {
                        Ok((est, support, coeffs)) => {
                            let atoms: Vec<AtomRecord> = support
                                .iter()
                                .zip(&coeffs)
                                .map(|(a, &c)| AtomRecord {
                                    modulus: a.modulus,
                                    angle: a.angle,
                                    phase: a.phase,
                                    coefficient: c,
                                })
                                .collect();
                            let rank = support.iter().map(PoleAtom::rank_cost).sum();
                            TrialRecord {
                                trial,
                                method: method.label().to_string(),
                                error: Some(sq_err(&est, &data.x0)),
                                seconds: secs,
                                rank,
                                atoms: encode_atoms(&atoms),
                                note: String::new(),
                            }
                        }
                        Err(e) => failed2(trial, method.label(), secs, &e),
                    }
                }
                HankelMethod::Nuclear => {
                    let start = Instant::now();
                    let solve = |lambda: f64| {
                        let mut opts = ProxOptions::new(lambda);
                        opts.max_iters = 2000;
                        opts.tol = 1e-7;
                        hankel_nuclear_solve(&data.y, &phi, spec, &opts)
                            .and_then(|s| hankel_map(&s.sequence, spec))
                    };
                    let outcome = rank_search_with_widening(solve, &settings.grid, settings.rank);
                    let secs = start.elapsed().as_secs_f64();
                    match outcome {
                        Ok(Some((est, lambda, note))) => TrialRecord {
                            trial,
                            method: method.label().to_string(),
                            error: Some(sq_err(&est, &data.x0)),
                            seconds: secs,
                            rank: numerical_rank(&est, settings.grid.rank_tol),
                            atoms: String::new(),
                            note: if note.is_empty() {
                                format!("lambda={lambda:.4e}")
                            } else {
                                format!("lambda={lambda:.4e}; {note}")
                            },
                        },
                        Ok(None) => failed2(
                            trial,
                            method.label(),
                            secs,
                            &anyhow::anyhow!("no grid lambda achieved the target rank"),
                        ),
                        Err(e) => failed2(trial, method.label(), secs, &e),
                    }
                }
                HankelMethod::Cadzow => {
                    let start = Instant::now();
                    let outcome =
                        cadzow(&data.y, settings.rank, settings.cadzow_iters, settings.cadzow_tol);
                    let secs = start.elapsed().as_secs_f64();
                    match outcome {
                        Ok(out) => {
                            let est = hankel_map(&out.sequence, spec)?;
                            TrialRecord {
                                trial,
                                method: method.label().to_string(),
                                error: Some(sq_err(&est, &data.x0)),
                                seconds: secs,
                                rank: numerical_rank(&est, settings.grid.rank_tol),
                                atoms: String::new(),
                                note: if out.converged {
                                    String::new()
                                } else {
                                    "did not converge".to_string()
                                },
                            }
                        }
                        Err(e) => failed(trial, method.label(), secs, &e),
                    }
                }
            };
            records.push(record);
        }
    }
    Ok(records)
}

fn failed(trial: u64, method: &str, seconds: f64, e: &lowrank_lar::Error) -> TrialRecord {
    TrialRecord {
        trial,
        method: method.to_string(),
        error: None,
        seconds,
        rank: 0,
        atoms: String::new(),
        note: format!("failed: {e}"),
    }
}

fn failed2(trial: u64, method: &str, seconds: f64, e: &anyhow::Error) -> TrialRecord {
    TrialRecord {
        trial,
        method: method.to_string(),
        error: None,
        seconds,
        rank: 0,
        atoms: String::new(),
        note: format!("failed: {e}"),
    }
}

/// Per-pole sample statistics of recovered atoms matched (greedily, by
/// distance in the complex plane) against reference atoms.
#[derive(Debug, Clone, Serialize)]
pub struct PoleStats {
    pub matched: usize,
    pub modulus_mean: f64,
    pub modulus_std: f64,
    pub angle_mean: f64,
    pub angle_std: f64,
    pub phase_mean: f64,
    pub phase_std: f64,
}

pub fn pole_statistics(
    per_trial_atoms: &[Vec<AtomRecord>],
    reference: &[PoleAtom],
) -> Vec<PoleStats> {
    let mut samples: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); reference.len()];
    for atoms in per_trial_atoms {
        let mut used = vec![false; atoms.len()];
        for (slot, truth) in reference.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (i, a) in atoms.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let cand = PoleAtom::new(a.modulus, a.angle, a.phase);
                let d = cand.pole_distance(truth);
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            if let Some((i, _)) = best {
                used[i] = true;
                samples[slot].push((atoms[i].modulus, atoms[i].angle, atoms[i].phase));
            }
        }
    }
    samples
        .into_iter()
        .map(|s| {
            let n = s.len().max(1) as f64;
            let mean = |f: fn(&(f64, f64, f64)) -> f64, s: &[(f64, f64, f64)]| {
                s.iter().map(f).sum::<f64>() / n
            };
            let std = |f: fn(&(f64, f64, f64)) -> f64, s: &[(f64, f64, f64)], m: f64| {
                (s.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / n).sqrt()
            };
            let (mm, am, pm) = (
                mean(|x| x.0, &s),
                mean(|x| x.1, &s),
                mean(|x| x.2, &s),
            );
            PoleStats {
                matched: s.len(),
                modulus_mean: mm,
                modulus_std: std(|x| x.0, &s, mm),
                angle_mean: am,
                angle_std: std(|x| x.1, &s, am),
                phase_mean: pm,
                phase_std: std(|x| x.2, &s, pm),
            }
        })
        .collect()
}
