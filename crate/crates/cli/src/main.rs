use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lowrank_lar::baselines::{cadzow, hankel_nuclear_solve, nuclear_prox_solve, ProxOptions};
use lowrank_lar::hankel_lar::{debias, run_path};
use lowrank_lar::matrix::{hankel_map, numerical_rank, DEFAULT_RANK_TOL};
use lowrank_lar::unstructured::{build_path, ls_tsvd};
use lowrank_lar::{HankelSpec, Matrix};
use lowrank_lar_cli::generators::{RealizationConfig, VarConfig};
use lowrank_lar_cli::harness::{
    run_realization_experiment, run_var_experiment, GridSettings, HankelMethod, HankelRunSettings,
    TrialRecord, VarMethod,
};
use lowrank_lar_cli::io;
use lowrank_lar_cli::report;

#[derive(Parser)]
#[command(name = "lrmr", about = "Low-rank matrix regression via least-angle regression")]
struct Cli {
    /// Optional key=value file whose entries are injected as --key value
    /// flags before the other arguments.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a low-rank matrix X from Y ≈ ΦX.
    Unstructured(UnstructuredArgs),
    /// Estimate a low-rank Hankel matrix from a noisy sequence.
    Hankel(HankelArgs),
    /// Run a Monte Carlo benchmark.
    Experiment {
        #[command(subcommand)]
        which: ExperimentCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum UnstructuredMethod {
    Lar,
    Nuclear,
    Lstsvd,
}

#[derive(Args)]
struct UnstructuredArgs {
    /// Data matrix Y (delimited text, '#' comments).
    #[arg(long)]
    input: PathBuf,
    /// Regressor matrix Φ.
    #[arg(long)]
    phi: PathBuf,
    #[arg(long)]
    rank: usize,
    #[arg(long, value_enum, default_value = "lar")]
    method: UnstructuredMethod,
    /// λ grid for the nuclear method, as lo:hi:count.
    #[arg(long, default_value = "0.01:0.1:20")]
    lambda_grid: String,
    /// Relative tolerance classifying the rank of estimates.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
    /// Write the estimate here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HankelCliMethod {
    Lar,
    LarLs,
    Nuclear,
    Cadzow,
}

#[derive(Args)]
struct HankelArgs {
    /// Sequence file (delimited text, '#' comments).
    #[arg(long)]
    input: PathBuf,
    /// Number of Hankel rows; columns are inferred from the length.
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    rank: usize,
    #[arg(long, value_enum, default_value = "lar")]
    method: HankelCliMethod,
    /// Constrain pole moduli to the closed unit disk.
    #[arg(long)]
    stable: bool,
    /// Minimum separation between active poles in the complex plane.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// λ grid for the nuclear method, as lo:hi:count.
    #[arg(long, default_value = "0.1:1:20")]
    lambda_grid: String,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Low-rank vector autoregression benchmark (unstructured).
    Var(VarArgs),
    /// System realization benchmark (Hankel).
    Realization(RealizationArgs),
}

#[derive(Args)]
struct VarArgs {
    /// State dimension.
    #[arg(long, default_value_t = 40)]
    n: usize,
    /// Number of observed transitions.
    #[arg(long, default_value_t = 80)]
    p: usize,
    #[arg(long, default_value_t = 10)]
    rank: usize,
    /// Spectral radius of the transition matrix.
    #[arg(long, default_value_t = 0.95)]
    rho: f64,
    /// Process noise standard deviation.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 120)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for records.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "0.01:0.1:20")]
    lambda_grid: String,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
}

#[derive(Args)]
struct RealizationArgs {
    /// Hankel rows.
    #[arg(long, default_value_t = 80)]
    m: usize,
    /// Hankel columns.
    #[arg(long, default_value_t = 20)]
    cols: usize,
    /// Measurement noise standard deviation.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 120)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    rank: usize,
    /// Minimum pole separation.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// Allow unstable pole estimates (the benchmark system is stable).
    #[arg(long)]
    unstable: bool,
    #[arg(long, default_value = "0.1:1:20")]
    lambda_grid: String,
    /// Looser than the crate default because the splitting solver leaves
    /// a slowly-decaying singular-value tail.
    #[arg(long, default_value_t = 1e-3)]
    rank_tol: f64,
    /// Comma-separated subset of lar,lar-ls,nuclear,cadzow.
    #[arg(long, default_value = "lar,lar-ls,nuclear,cadzow")]
    methods: String,
    /// How many times the λ-grid may be widened by a decade per side when
    /// no grid value attains the target rank. 0 keeps the grid fixed and
    /// records such trials as failures.
    #[arg(long, default_value_t = 2)]
    max_widenings: usize,
    /// Bisect between bracketing grid points before widening when the
    /// target rank is missed (finer than the reference grid protocol).
    #[arg(long)]
    bisect: bool,
}

fn parse_grid(text: &str, rank_tol: f64) -> Result<GridSettings> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("lambda grid must be lo:hi:count, got {text:?}");
    }
    let lo: f64 = parts[0].parse().context("grid lo")?;
    let hi: f64 = parts[1].parse().context("grid hi")?;
    let count: usize = parts[2].parse().context("grid count")?;
    if lo <= 0.0 || hi < lo || count == 0 {
        bail!("bad lambda grid {text:?}");
    }
    let mut g = GridSettings::new(lo, hi, count);
    g.rank_tol = rank_tol;
    Ok(g)
}

/// Expands `--config file` by injecting each `key = value` line of the
/// file as `--key value` ahead of the explicit arguments, so explicit
/// flags win on conflict.
fn expand_config_args(args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config") else {
        return Ok(args);
    };
    let Some(path) = args.get(pos + 1) else {
        bail!("--config requires a file path");
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let mut injected = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{path}:{}: expected key=value", lineno + 1))?;
        injected.push(format!("--{}", key.trim()));
        let value = value.trim();
        if !value.is_empty() {
            injected.push(value.to_string());
        }
    }
    // Keep the binary name and subcommand words in place and inject the
    // config flags right before the first explicit flag.
    let first_flag = args
        .iter()
        .position(|a| a.starts_with("--"))
        .unwrap_or(args.len());
    let mut out = args[..first_flag].to_vec();
    out.extend(injected);
    out.extend(args[first_flag..].iter().cloned());
    Ok(out)
}

fn emit(output: Option<&PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_unstructured(args: &UnstructuredArgs) -> Result<()> {
    let y = io::read_matrix(&args.input)?;
    let phi = io::read_matrix(&args.phi)?;
    let (estimate, label) = match args.method {
        UnstructuredMethod::Lar => {
            let path = build_path(&y, &phi)?;
            (path.lar_estimate(args.rank)?, "lar")
        }
        UnstructuredMethod::Lstsvd => (ls_tsvd(&y, &phi, args.rank)?, "ls-tsvd"),
        UnstructuredMethod::Nuclear => {
            let grid = parse_grid(&args.lambda_grid, args.rank_tol)?;
            let solve = |lambda: f64| {
                nuclear_prox_solve(&y, &phi, &ProxOptions::new(lambda), false).map(|s| s.estimate)
            };
            let grid_obj = lowrank_lar::baselines::LambdaGrid::log_spaced(
                grid.lo, grid.hi, grid.count, args.rank,
            )?;
            match lowrank_lar::baselines::lambda_rank_search(solve, &grid_obj, args.rank_tol)? {
                Some(hit) => (hit.estimate, "nuclear"),
                None => bail!(
                    "no lambda in {} achieved rank {}; widen the grid",
                    args.lambda_grid,
                    args.rank
                ),
            }
        }
    };
    let residual = (&y - &phi * &estimate).norm();
    let mut text = format!(
        "# method: {label}\n# rank: {}\n# residual: {residual:.6e}\n",
        numerical_rank(&estimate, args.rank_tol)
    );
    text.push_str(&io::format_matrix(&estimate));
    emit(args.output.as_ref(), &text)
}

fn cmd_hankel(args: &HankelArgs) -> Result<()> {
    let seq = io::read_sequence(&args.input)?;
    if seq.len() < args.rows + 1 {
        bail!("sequence of length {} too short for {} rows", seq.len(), args.rows);
    }
    let cols = seq.len() + 1 - args.rows;
    let spec = HankelSpec::new(args.rows, cols)?;
    let y = hankel_map(&seq, spec)?;
    let phi = Matrix::identity(args.rows, args.rows);

    let mut header = String::new();
    let estimate: Matrix = match args.method {
        HankelCliMethod::Lar | HankelCliMethod::LarLs => {
            let mut opts = lowrank_lar::hankel_lar::HankelSolverOptions::with_rank(args.rank);
            opts.stable = args.stable;
            opts.epsilon = args.eps;
            let path = run_path(&y, &phi, spec, &opts)?;
            let coeffs: Vec<f64> = if matches!(args.method, HankelCliMethod::LarLs) {
                if path.atoms().is_empty() {
                    bail!("path selected no atoms; nothing to refit");
                }
                debias(&y, &phi, path.atoms(), spec)?
            } else {
                path.coefficients().to_vec()
            };
            for (a, c) in path.atoms().iter().zip(&coeffs) {
                header.push_str(&format!(
                    "# atom: modulus={:.6} angle={:.6} phase={:.6} coefficient={:.6e}\n",
                    a.modulus, a.angle, a.phase, c
                ));
            }
            lowrank_lar::atoms::synthesize(path.atoms(), &coeffs, spec)?.1
        }
        HankelCliMethod::Nuclear => {
            let grid = parse_grid(&args.lambda_grid, args.rank_tol)?;
            let grid_obj = lowrank_lar::baselines::LambdaGrid::log_spaced(
                grid.lo, grid.hi, grid.count, args.rank,
            )?;
            let solve = |lambda: f64| {
                hankel_nuclear_solve(&y, &phi, spec, &ProxOptions::new(lambda))
                    .and_then(|s| hankel_map(&s.sequence, spec))
            };
            match lowrank_lar::baselines::lambda_rank_search(solve, &grid_obj, args.rank_tol)? {
                Some(hit) => {
                    header.push_str(&format!("# lambda: {:.6e}\n", hit.lambda));
                    hit.estimate
                }
                None => bail!(
                    "no lambda in {} achieved rank {}; widen the grid",
                    args.lambda_grid,
                    args.rank
                ),
            }
        }
        HankelCliMethod::Cadzow => {
            let out = cadzow(&y, args.rank, 500, 1e-10)?;
            if !out.converged {
                header.push_str("# warning: not converged\n");
            }
            hankel_map(&out.sequence, spec)?
        }
    };

    let est_seq = lowrank_lar::matrix::hankel_adjoint_average(&estimate);
    let mut text = format!(
        "# rows: {} cols: {cols}\n# rank: {}\n{header}",
        args.rows,
        numerical_rank(&estimate, args.rank_tol)
    );
    text.push_str(&io::format_sequence(&est_seq));
    emit(args.output.as_ref(), &text)
}

fn write_outputs(out_dir: &PathBuf, records: &[TrialRecord]) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    report::write_records_csv(&out_dir.join("records.csv"), records)?;
    let summary = report::summarize(records)?;
    report::write_summary_json(&out_dir.join("summary.json"), &summary)?;
    print!("{}", report::render_summary(&summary));
    Ok(())
}

fn cmd_experiment_var(args: &VarArgs) -> Result<()> {
    let cfg = VarConfig {
        n: args.n,
        p: args.p,
        rank: args.rank,
        rho: args.rho,
        noise: args.noise,
    };
    let grid = parse_grid(&args.lambda_grid, args.rank_tol)?;
    let methods = [VarMethod::Lar, VarMethod::LsTsvd, VarMethod::Nuclear];
    let records = run_var_experiment(&cfg, &methods, args.trials, args.seed, &grid)?;
    write_outputs(&args.out, &records)
}

fn cmd_experiment_realization(args: &RealizationArgs) -> Result<()> {
    let cfg = RealizationConfig::benchmark(args.m, args.cols, args.noise);
    let methods: Vec<HankelMethod> = args
        .methods
        .split(',')
        .map(|name| match name.trim() {
            "lar" => Ok(HankelMethod::Lar),
            "lar-ls" => Ok(HankelMethod::LarLs),
            "nuclear" => Ok(HankelMethod::Nuclear),
            "cadzow" => Ok(HankelMethod::Cadzow),
            other => bail!("unknown method {other:?}"),
        })
        .collect::<Result<_>>()?;
    let mut grid = parse_grid(&args.lambda_grid, args.rank_tol)?;
    grid.max_widenings = args.max_widenings;
    grid.bisect = args.bisect;
    let mut settings = HankelRunSettings::benchmark(args.rank);
    settings.epsilon = args.eps;
    settings.stable = !args.unstable;
    settings.grid = grid;
    let records =
        run_realization_experiment(&cfg, &methods, args.trials, args.seed, &settings)?;
    write_outputs(&args.out, &records)
}

fn main() -> Result<()> {
    let args = expand_config_args(std::env::args().collect())?;
    let cli = Cli::parse_from(args);
    match &cli.command {
        Command::Unstructured(a) => cmd_unstructured(a),
        Command::Hankel(a) => cmd_hankel(a),
        Command::Experiment { which } => match which {
            ExperimentCommand::Var(a) => cmd_experiment_var(a),
            ExperimentCommand::Realization(a) => cmd_experiment_realization(a),
        },
    }
}
