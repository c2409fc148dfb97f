//! Command-line driver: solve MPS/QPS instances, verify the spectral
//! enclosures on random instances, benchmark a directory, or generate
//! reproducible test problems.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regsaddle::precond::HessianApproxMode;
use regsaddle::spectra::{
    check_lp_bound, check_pas_intervals, check_pk_spectrum, check_pne_intervals, AsInstance,
    NeInstance, SpectralReport,
};
use regsaddle::synth::{generate, write_mps, GenConfig};
use regsaddle::{
    build_pne_ldl, read_mps, solve, sparsify_hessian, standardize, Partition, PrecondKind,
    SolveStatus, SolverOptions, SparsificationPlan,
};
use std::error::Error;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "regsaddle",
    version,
    about = "Sparse preconditioned interior-point solver for LP/QP"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PrecondArg {
    PneChol,
    PneLdl,
    PasChol,
    PasLdl,
    Pk,
}

impl From<PrecondArg> for PrecondKind {
    fn from(a: PrecondArg) -> Self {
        match a {
            PrecondArg::PneChol => PrecondKind::PneChol,
            PrecondArg::PneLdl => PrecondKind::PneLdl,
            PrecondArg::PasChol => PrecondKind::PasChol,
            PrecondArg::PasLdl => PrecondKind::PasLdl,
            PrecondArg::Pk => PrecondKind::Pk,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TheoremArg {
    /// Normal-equations enclosure with dropped columns and rows
    Ne,
    /// Saddle-form enclosure for both Hessian approximation modes
    As,
    /// Factorization preconditioner: spectrum pinned at plus/minus one
    Pk,
    /// LP lower/upper bound after dropping near-inactive columns
    Lp,
}

#[derive(Args)]
struct SolveFlags {
    /// Preconditioner family
    #[arg(long, value_enum, default_value_t = PrecondArg::PneChol)]
    precond: PrecondArg,
    /// Convergence tolerance on scaled residuals and duality measure
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Column-density threshold for dropping dense columns
    #[arg(long, default_value_t = 0.15)]
    col_density: f64,
    /// Row-density threshold for sparsifying dense rows
    #[arg(long, default_value_t = 0.25)]
    row_density: f64,
    /// Cap on dropped columns and on sparsified rows
    #[arg(long, default_value_t = 30)]
    max_drop: usize,
    /// Partition threshold multiplier for the nonbasic/basic split
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// PCG iteration cap per system
    #[arg(long, default_value_t = 100)]
    max_pcg: usize,
    /// MINRES iteration cap per system
    #[arg(long, default_value_t = 200)]
    max_minres: usize,
    /// Interior-point iteration cap
    #[arg(long, default_value_t = 100)]
    max_ipm_iters: usize,
}

impl SolveFlags {
    fn to_options(&self) -> SolverOptions {
        SolverOptions {
            precond_kind: self.precond.into(),
            tol: self.tol,
            max_ipm_iters: self.max_ipm_iters,
            max_pcg: self.max_pcg,
            max_minres: self.max_minres,
            col_density: self.col_density,
            row_density: self.row_density,
            max_drop: self.max_drop,
            kappa: self.kappa,
            reg_floor: 1e-10,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one MPS/QPS instance and write a CSV report
    Solve {
        /// Input MPS/QPS file
        #[arg(long)]
        input: PathBuf,
        /// CSV destination; stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        flags: SolveFlags,
    },
    /// Verify spectral enclosures over a sweep of random seeds
    Spectra {
        /// Which enclosure family to check
        #[arg(long, value_enum, default_value_t = TheoremArg::Ne)]
        theorem: TheoremArg,
        /// Number of random seeds
        #[arg(long, default_value_t = 30)]
        seeds: u64,
        /// Dropped-column count
        #[arg(long, default_value_t = 1)]
        kc: usize,
        /// Sparsified-row count
        #[arg(long, default_value_t = 1)]
        kr: usize,
        /// Constraint rows of the random instances
        #[arg(long, default_value_t = 15)]
        m: usize,
        /// Variables of the random instances
        #[arg(long, default_value_t = 30)]
        n: usize,
        /// Dual regularization
        #[arg(long, default_value_t = 1e-2)]
        delta: f64,
        /// Primal regularization
        #[arg(long, default_value_t = 1e-2)]
        rho: f64,
    },
    /// Solve every MPS/QPS file in a directory into one CSV
    Bench {
        /// Directory holding the instances
        #[arg(long)]
        dir: PathBuf,
        /// CSV destination; stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        flags: SolveFlags,
    },
    /// Generate a reproducible random instance in MPS/QPS format
    Gen {
        /// Generator seed; the same seed reproduces the file exactly
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Constraint rows (must not exceed the variable count)
        #[arg(long, default_value_t = 10)]
        m: usize,
        /// Variables
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Nonzero fraction per column
        #[arg(long, default_value_t = 0.2)]
        density: f64,
        /// Columns filled to roughly 90% density
        #[arg(long, default_value_t = 0)]
        dense_cols: usize,
        /// Rows filled to roughly 90% density
        #[arg(long, default_value_t = 0)]
        dense_rows: usize,
        /// Emit a banded positive definite quadratic objective
        #[arg(long)]
        quadratic: bool,
        /// Entry-magnitude spread in decades (condition proxy)
        #[arg(long, default_value_t = 0.0)]
        spread: f64,
        /// Output path; stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode, Box<dyn Error>> {
    if let Ok(v) = std::env::var("REGSADDLE_THREADS") {
        if v != "1" {
            return Err(format!(
                "REGSADDLE_THREADS is reserved and currently must be 1, got '{v}'"
            )
            .into());
        }
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { input, output, flags } => run_solve(&input, output.as_deref(), &flags),
        Command::Spectra { theorem, seeds, kc, kr, m, n, delta, rho } => {
            run_spectra(theorem, seeds, kc, kr, m, n, delta, rho)
        }
        Command::Bench { dir, output, flags } => run_bench(&dir, output.as_deref(), &flags),
        Command::Gen { seed, m, n, density, dense_cols, dense_rows, quadratic, spread, output } => {
            run_gen(
                GenConfig {
                    m,
                    n,
                    density,
                    dense_cols,
                    dense_rows,
                    quadratic,
                    spread_decades: spread,
                    seed,
                },
                output.as_deref(),
            )
        }
    }
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> io::Result<()> {
    match output {
        Some(path) => fs::write(path, bytes),
        None => io::stdout().write_all(bytes),
    }
}

fn status_word(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::IterationLimit => "hit the iteration limit",
    }
}

fn run_solve(
    input: &Path,
    output: Option<&Path>,
    flags: &SolveFlags,
) -> Result<ExitCode, Box<dyn Error>> {
    let text = fs::read_to_string(input)
        .map_err(|e| format!("cannot read {}: {e}", input.display()))?;
    let problem = standardize(&read_mps(&text)?)?;
    let opts = flags.to_options();
    let start = Instant::now();
    let (state, trace, status) = solve(&problem, &opts)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut buf = Vec::new();
    regsaddle::write_report(&mut buf, &trace, &state, &problem, status, seconds)?;
    emit(output, &buf)?;
    eprintln!(
        "{}: {} after {} iterations, objective {:.6e}, {:.3}s",
        problem.name(),
        status_word(status),
        trace.len(),
        problem.objective(&state.x),
        seconds
    );
    Ok(match status {
        SolveStatus::Converged => ExitCode::SUCCESS,
        SolveStatus::IterationLimit => ExitCode::from(2),
    })
}

fn run_bench(
    dir: &Path,
    output: Option<&Path>,
    flags: &SolveFlags,
) -> Result<ExitCode, Box<dyn Error>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("cannot read directory {}: {e}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|s| s.to_str()),
                Some("mps" | "qps" | "MPS" | "QPS")
            )
        })
        .collect();
    files.sort();

    let opts = flags.to_options();
    let mut buf = Vec::new();
    regsaddle::mps::write_report_header(&mut buf)?;
    let mut any_error = false;
    let mut any_limit = false;
    for path in &files {
        let outcome = (|| -> Result<(), Box<dyn Error>> {
            let text = fs::read_to_string(path)?;
            let problem = standardize(&read_mps(&text)?)?;
            let start = Instant::now();
            let (state, trace, status) = solve(&problem, &opts)?;
            let seconds = start.elapsed().as_secs_f64();
            if status == SolveStatus::IterationLimit {
                any_limit = true;
            }
            regsaddle::mps::write_report_row(
                &mut buf,
                problem.name(),
                status,
                &trace,
                problem.objective(&state.x),
                seconds,
            )?;
            eprintln!(
                "{}: {} after {} iterations",
                path.display(),
                status_word(status),
                trace.len()
            );
            Ok(())
        })();
        if let Err(e) = outcome {
            any_error = true;
            eprintln!("{}: error: {e}", path.display());
        }
    }
    emit(output, &buf)?;
    Ok(if any_error {
        ExitCode::FAILURE
    } else if any_limit {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn run_gen(config: GenConfig, output: Option<&Path>) -> Result<ExitCode, Box<dyn Error>> {
    let inst = generate(&config)?;
    emit(output, write_mps(&inst.problem).as_bytes())?;
    eprintln!(
        "generated {} ({}x{}, nnz {}, optimal objective {})",
        inst.problem.name(),
        config.m,
        config.n,
        inst.problem.a().nnz(),
        inst.objective
    );
    Ok(ExitCode::SUCCESS)
}

/// Random positive diagonal for the spectra sweeps, decoupled from the
/// matrix seed.
fn positive_diagonal(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..len).map(|_| rng.gen_range(0.1..10.0)).collect()
}

#[allow(clippy::too_many_arguments)]
fn run_spectra(
    theorem: TheoremArg,
    seeds: u64,
    kc: usize,
    kr: usize,
    m: usize,
    n: usize,
    delta: f64,
    rho: f64,
) -> Result<ExitCode, Box<dyn Error>> {
    let mut reports: Vec<(String, SpectralReport)> = Vec::new();
    for seed in 0..seeds {
        match theorem {
            TheoremArg::Ne => {
                let inst = generate(&GenConfig {
                    m,
                    n,
                    density: 0.2,
                    dense_cols: kc,
                    dense_rows: kr,
                    seed,
                    ..Default::default()
                })?;
                let ghat = positive_diagonal(seed, n);
                let dense_cols: Vec<usize> = (0..kc).collect();
                let dense_rows: Vec<usize> = (0..kr).collect();
                let plan =
                    SparsificationPlan::new(m, n, &dense_cols, &dense_rows, Partition::default())?;
                let ne = NeInstance { a: inst.problem.a(), ghat: &ghat, delta };
                reports.push((format!("seed-{seed}"), check_pne_intervals(&ne, &plan)?));
            }
            TheoremArg::As => {
                let inst = generate(&GenConfig {
                    m,
                    n,
                    density: 0.2,
                    quadratic: true,
                    seed,
                    ..Default::default()
                })?;
                let theta_inv = positive_diagonal(seed, n);
                let h = Some(inst.problem.h());
                // drop the two highest-index columns to make the
                // approximation nontrivial
                let part = Partition {
                    basic: vec![],
                    nonbasic: vec![n - 2, n - 1],
                    undecided: (0..n - 2).collect(),
                };
                let plan = SparsificationPlan::new(m, n, &[], &[], part)?;
                for (mode, tag) in [
                    (HessianApproxMode::DiagAll, "diag"),
                    (HessianApproxMode::DiagOnDropFullOnKeep, "mixed"),
                ] {
                    let qhat = sparsify_hessian(h, &theta_inv, rho, &plan, mode)?;
                    let core = build_pne_ldl(inst.problem.a(), h, &theta_inv, rho, delta, &plan)?;
                    let as_inst = AsInstance {
                        a: inst.problem.a(),
                        h,
                        theta_inv: &theta_inv,
                        rho,
                        delta,
                    };
                    reports.push((
                        format!("seed-{seed}-{tag}"),
                        check_pas_intervals(&as_inst, &qhat, core)?,
                    ));
                }
            }
            TheoremArg::Pk => {
                let inst = generate(&GenConfig {
                    m,
                    n,
                    density: 0.2,
                    dense_cols: kc,
                    quadratic: true,
                    seed,
                    ..Default::default()
                })?;
                let theta_inv = positive_diagonal(seed, n);
                let h = Some(inst.problem.h());
                let dense_cols: Vec<usize> = (0..kc).collect();
                let plan = SparsificationPlan::new(m, n, &dense_cols, &[], Partition::default())?;
                let qhat = sparsify_hessian(
                    h,
                    &theta_inv,
                    rho,
                    &plan,
                    HessianApproxMode::DiagOnDropFullOnKeep,
                )?;
                let as_inst =
                    AsInstance { a: inst.problem.a(), h, theta_inv: &theta_inv, rho, delta };
                reports.push((format!("seed-{seed}"), check_pk_spectrum(&as_inst, &qhat, &plan)?));
            }
            TheoremArg::Lp => {
                let inst = generate(&GenConfig { m, n, density: 0.2, seed, ..Default::default() })?;
                let mut g = positive_diagonal(seed, n);
                let nonbasic: Vec<usize> = (0..kc.max(1)).collect();
                for &j in &nonbasic {
                    g[j] = 1e-8;
                }
                reports.push((
                    format!("seed-{seed}"),
                    check_lp_bound(inst.problem.a(), &g, delta, &nonbasic)?,
                ));
            }
        }
    }

    println!("{}", SpectralReport::csv_header());
    let mut failures = 0usize;
    for (label, report) in &reports {
        println!("{}", report.csv_row(label));
        if !report.pass {
            failures += 1;
            eprintln!("{label}: FAILED\n{}", report.to_text());
        }
    }
    if failures == 0 {
        eprintln!("all {} checks passed", reports.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{failures} of {} checks failed", reports.len());
        Ok(ExitCode::FAILURE)
    }
}
