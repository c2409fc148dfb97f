//! Regularized interior-point loop with a proximal layer: at every
//! iteration a predictor and a corrector system share one
//! preconditioner, solved either as normal equations (PCG, diagonal
//! Hessian only) or in saddle form (MINRES).

use crate::factor::{self, FactorError};
use crate::krylov::{self, adaptive_tol, KrylovStatus};
use crate::precond::{
    build_pas, build_pk, build_pne_chol, build_pne_ldl, density_plan, partition_variables,
    sparsify_hessian, HessianApproxMode, PrecondError, PrecondHandle, PrecondKind,
    SparsificationPlan,
};
use crate::qp::{
    barrier_diagonal, build_scaling, duality_measure, residuals, IterateState, ModelError,
    ProblemQP, SaddleOperator,
};
use crate::sparse::{normal_matrix, SparseError};
use thiserror::Error;

/// Fraction-to-boundary factor for accepted steps.
const TAU: f64 = 0.995;
/// A direction from a capped Krylov solve is still usable at this
/// relative residual.
const INEXACT_ACCEPT: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum IpmError {
    #[error("solver options invalid: {0}")]
    BadOptions(String),
    #[error("problem is ill-posed for this solver: {0}")]
    IllPosed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Precond(#[from] PrecondError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub precond_kind: PrecondKind,
    pub tol: f64,
    pub max_ipm_iters: usize,
    pub max_pcg: usize,
    pub max_minres: usize,
    pub col_density: f64,
    pub row_density: f64,
    pub max_drop: usize,
    pub kappa: f64,
    pub reg_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            precond_kind: PrecondKind::PneChol,
            tol: 1e-6,
            max_ipm_iters: 100,
            max_pcg: 100,
            max_minres: 200,
            col_density: 0.15,
            row_density: 0.25,
            max_drop: 30,
            kappa: 1.0,
            reg_floor: 1e-10,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<(), IpmError> {
        let positive = [
            ("tol", self.tol),
            ("kappa", self.kappa),
            ("reg_floor", self.reg_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(IpmError::BadOptions(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("col_density", self.col_density), ("row_density", self.row_density)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(IpmError::BadOptions(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("max_ipm_iters", self.max_ipm_iters),
            ("max_pcg", self.max_pcg),
            ("max_minres", self.max_minres),
        ] {
            if v == 0 {
                return Err(IpmError::BadOptions(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// One row of the per-iteration log. `mu` is the measure after the
/// step; the residual norms are the unregularized ones checked before
/// the step; `delta`/`rho` are the values the iteration's systems used.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub mu: f64,
    pub delta: f64,
    pub rho: f64,
    pub krylov_iters_predictor: usize,
    pub krylov_iters_corrector: usize,
    pub factor_nnz: usize,
    pub primal_norm: f64,
    pub dual_norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct IpmTrace {
    pub iterations: Vec<IterRecord>,
}

impl IpmTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn total_krylov(&self) -> usize {
        self.iterations
            .iter()
            .map(|r| r.krylov_iters_predictor + r.krylov_iters_corrector)
            .sum()
    }

    /// Mean Krylov iterations per IPM iteration (both solves).
    pub fn avg_krylov(&self) -> f64 {
        if self.iterations.is_empty() {
            return 0.0;
        }
        self.total_krylov() as f64 / self.iterations.len() as f64
    }

    /// Krylov iterations spent in the final IPM iteration.
    pub fn krylov_last(&self) -> usize {
        self.iterations
            .last()
            .map(|r| r.krylov_iters_predictor + r.krylov_iters_corrector)
            .unwrap_or(0)
    }

    pub fn max_factor_nnz(&self) -> usize {
        self.iterations.iter().map(|r| r.factor_nnz).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct Direction {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub dz: Vec<f64>,
}

/// `delta = rho = max(mu_new, reg_floor)`: the regularization tracks
/// the barrier, floored to stay positive definite.
pub fn update_regularization(mu_new: f64, reg_floor: f64) -> (f64, f64) {
    let r = mu_new.max(reg_floor);
    (r, r)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest primal/dual multiples of the direction keeping the
/// inequality variables at least `1 - tau` of their current values.
fn boundary_steps(
    state: &IterateState,
    problem: &ProblemQP,
    dir: &Direction,
    tau: f64,
) -> (f64, f64) {
    let mut ap: f64 = 1.0;
    let mut ad: f64 = 1.0;
    for &j in problem.ineq_set() {
        if dir.dx[j] < 0.0 {
            ap = ap.min(tau * state.x[j] / (-dir.dx[j]));
        }
        if dir.dz[j] < 0.0 {
            ad = ad.min(tau * state.z[j] / (-dir.dz[j]));
        }
    }
    (ap, ad)
}

/// Fraction-to-boundary ratio test at `tau = 0.995`.
pub fn step_lengths(state: &IterateState, problem: &ProblemQP, dir: &Direction) -> (f64, f64) {
    boundary_steps(state, problem, dir, TAU)
}

/// Proximal centers and the residual levels at which they were last
/// reset.
struct ProxCenters {
    zeta: Vec<f64>,
    lambda: Vec<f64>,
    primal_mark: f64,
    dual_mark: f64,
}

/// Newton right-hand side in saddle form. `t` is the complementarity
/// target, zero on free variables.
fn newton_rhs(
    problem: &ProblemQP,
    state: &IterateState,
    prox: &ProxCenters,
    t: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), IpmError> {
    let res = residuals(state, problem)?;
    let n = problem.ncols();
    let mut xi1 = vec![0.0; n];
    for j in 0..n {
        xi1[j] = res.dual[j] + state.rho * (state.x[j] - prox.zeta[j]);
    }
    for &j in problem.ineq_set() {
        xi1[j] -= t[j] / state.x[j];
    }
    let m = problem.nrows();
    let mut xi2 = vec![0.0; m];
    for i in 0..m {
        xi2[i] = -res.primal[i] - state.delta * (state.y[i] - prox.lambda[i]);
    }
    Ok((xi1, xi2))
}

enum Route {
    /// PCG on `A G A' + delta I`; `g` is the full diagonal of
    /// `(Q + rho I)^{-1}`, valid because the Hessian is diagonal here.
    NormalEq { g: Vec<f64> },
    /// MINRES on the saddle matrix.
    Saddle,
}

/// Everything one IPM iteration shares between its two solves.
struct IterationContext {
    theta_inv: Vec<f64>,
    precond: PrecondHandle,
    route: Route,
    delta: f64,
    rho: f64,
}

/// What the sparsification plan feeds on for a given kind: the
/// LDL-backed kinds drop only the nonbasic block, the factorization
/// kind has no use for row sparsification.
fn plan_for_kind(
    kind: PrecondKind,
    m: usize,
    n: usize,
    dense_cols: &[usize],
    dense_rows: &[usize],
    partition: crate::precond::Partition,
) -> Result<SparsificationPlan, PrecondError> {
    match kind {
        PrecondKind::PneChol | PrecondKind::PasChol => {
            SparsificationPlan::new(m, n, dense_cols, dense_rows, partition)
        }
        PrecondKind::PneLdl | PrecondKind::PasLdl => {
            SparsificationPlan::new(m, n, &[], &[], partition)
        }
        PrecondKind::Pk => SparsificationPlan::new(m, n, dense_cols, &[], partition),
    }
}

impl IterationContext {
    fn build(
        problem: &ProblemQP,
        state: &IterateState,
        opts: &SolverOptions,
        dense_cols: &[usize],
        dense_rows: &[usize],
    ) -> Result<Self, IpmError> {
        let (m, n) = (problem.nrows(), problem.ncols());
        let theta_inv = barrier_diagonal(state, problem);
        let scaling = build_scaling(state, problem)?;
        let mu_eff = state.mu.max(opts.reg_floor);
        let partition = partition_variables(scaling.g(), mu_eff, opts.kappa)?;

        // The normal-equations reduction needs a diagonal Hessian;
        // otherwise the requested kind is promoted to its saddle form.
        let kind = match (opts.precond_kind, problem.h_is_diagonal()) {
            (PrecondKind::PneChol, false) => PrecondKind::PasChol,
            (PrecondKind::PneLdl, false) => PrecondKind::PasLdl,
            (k, _) => k,
        };
        let plan = plan_for_kind(kind, m, n, dense_cols, dense_rows, partition)?;
        let h = Some(problem.h());

        let precond = match kind {
            PrecondKind::PneChol | PrecondKind::PasChol => {
                let qhat =
                    sparsify_hessian(h, &theta_inv, state.rho, &plan, HessianApproxMode::DiagAll)?;
                let ghat = qhat.inverse_diagonal(state.rho)?;
                let ne = build_pne_chol(problem.a(), &ghat, state.delta, &plan)?;
                if kind == PrecondKind::PneChol {
                    ne
                } else {
                    build_pas(&qhat, state.rho, ne)?
                }
            }
            PrecondKind::PneLdl | PrecondKind::PasLdl => {
                let ne = build_pne_ldl(
                    problem.a(),
                    h,
                    &theta_inv,
                    state.rho,
                    state.delta,
                    &plan,
                )?;
                if kind == PrecondKind::PneLdl {
                    ne
                } else {
                    let qhat = sparsify_hessian(
                        h,
                        &theta_inv,
                        state.rho,
                        &plan,
                        HessianApproxMode::DiagOnDropFullOnKeep,
                    )?;
                    build_pas(&qhat, state.rho, ne)?
                }
            }
            PrecondKind::Pk => {
                let qhat = sparsify_hessian(
                    h,
                    &theta_inv,
                    state.rho,
                    &plan,
                    HessianApproxMode::DiagOnDropFullOnKeep,
                )?;
                build_pk(problem.a(), &qhat, state.rho, state.delta, &plan)?
            }
        };

        let route = match kind {
            PrecondKind::PneChol | PrecondKind::PneLdl => {
                let g = (0..n)
                    .map(|j| 1.0 / (problem.h().get(j, j) + theta_inv[j] + state.rho))
                    .collect();
                Route::NormalEq { g }
            }
            _ => Route::Saddle,
        };
        Ok(Self { theta_inv, precond, route, delta: state.delta, rho: state.rho })
    }

    /// Solves the Newton system for `(dx, dy)` given the saddle
    /// right-hand side, returning the Krylov iteration count, the final
    /// true relative residual, and whether the run converged.
    fn solve_system(
        &self,
        problem: &ProblemQP,
        xi1: &[f64],
        xi2: &[f64],
        mu: f64,
        opts: &SolverOptions,
    ) -> Result<(Vec<f64>, Vec<f64>, usize, f64, KrylovStatus), IpmError> {
        let a = problem.a();
        match &self.route {
            Route::NormalEq { g } => {
                // M dy = xi2 + A G xi1, then dx = G (A' dy - xi1).
                let gx: Vec<f64> = xi1.iter().zip(g).map(|(v, gj)| v * gj).collect();
                let agx = a.spmv(&gx, false)?;
                let rhs: Vec<f64> = xi2.iter().zip(&agx).map(|(a, b)| a + b).collect();
                let tol = adaptive_tol(mu, norm2(&rhs), opts.tol);
                let delta = self.delta;
                let mut apply_m = |v: &[f64]| {
                    let atv = a.spmv(v, true).expect("dimension fixed");
                    let gatv: Vec<f64> = atv.iter().zip(g).map(|(x, gj)| x * gj).collect();
                    let mut out = a.spmv(&gatv, false).expect("dimension fixed");
                    for (o, vi) in out.iter_mut().zip(v) {
                        *o += delta * vi;
                    }
                    out
                };
                let mut apply_pinv = |r: &[f64]| {
                    self.precond.apply_inverse(r).expect("preconditioner dimension fixed")
                };
                let res = krylov::pcg(&mut apply_m, &mut apply_pinv, &rhs, tol, opts.max_pcg, None);
                let dy = res.solution;
                let aty = a.spmv(&dy, true)?;
                let dx: Vec<f64> =
                    (0..problem.ncols()).map(|j| g[j] * (aty[j] - xi1[j])).collect();
                Ok((dx, dy, res.iterations, res.final_relres, res.status))
            }
            Route::Saddle => {
                let op = SaddleOperator::new(
                    problem,
                    self.theta_inv.clone(),
                    self.delta,
                    self.rho,
                )?;
                let mut rhs = xi1.to_vec();
                rhs.extend_from_slice(xi2);
                let tol = adaptive_tol(mu, norm2(&rhs), opts.tol);
                let mut apply_k = |v: &[f64]| op.apply(v).expect("dimension fixed");
                let mut apply_pinv = |r: &[f64]| {
                    self.precond.apply_inverse(r).expect("preconditioner dimension fixed")
                };
                let res =
                    krylov::minres(&mut apply_k, &mut apply_pinv, &rhs, tol, opts.max_minres, None);
                let n = problem.ncols();
                let (dx, dy) = res.solution.split_at(n);
                Ok((dx.to_vec(), dy.to_vec(), res.iterations, res.final_relres, res.status))
            }
        }
    }
}

/// Recovers `dz` from the eliminated complementarity rows:
/// `dz = X^{-1} t - Theta^{-1} dx` on the inequality set, zero on free
/// variables.
fn recover_dz(
    problem: &ProblemQP,
    state: &IterateState,
    theta_inv: &[f64],
    t: &[f64],
    dx: &[f64],
) -> Vec<f64> {
    let mut dz = vec![0.0; problem.ncols()];
    for &j in problem.ineq_set() {
        dz[j] = t[j] / state.x[j] - theta_inv[j] * dx[j];
    }
    dz
}

/// Builds the context, escalating the regularization once if the
/// factorization breaks down; a second breakdown is terminal.
fn build_context_guarded(
    problem: &ProblemQP,
    state: &mut IterateState,
    opts: &SolverOptions,
    dense_cols: &[usize],
    dense_rows: &[usize],
) -> Result<IterationContext, IpmError> {
    match IterationContext::build(problem, state, opts, dense_cols, dense_rows) {
        Ok(ctx) => Ok(ctx),
        Err(IpmError::Precond(PrecondError::Factor(_))) => {
            state.delta *= 10.0;
            state.rho *= 10.0;
            IterationContext::build(problem, state, opts, dense_cols, dense_rows).map_err(|e| {
                IpmError::IllPosed(format!(
                    "factorization failed twice despite regularization escalation: {e}"
                ))
            })
        }
        Err(e) => Err(e),
    }
}

struct PhaseOutcome {
    dir: Direction,
    iters: usize,
    accepted: bool,
}

/// One Krylov solve for one phase of the predictor-corrector pair,
/// with a single regularization backtrack if the direction comes back
/// less than 3-digit accurate.
fn run_phase(
    problem: &ProblemQP,
    state: &mut IterateState,
    ctx: &mut IterationContext,
    prox: &ProxCenters,
    t: &[f64],
    opts: &SolverOptions,
    dense_cols: &[usize],
    dense_rows: &[usize],
) -> Result<PhaseOutcome, IpmError> {
    let (xi1, xi2) = newton_rhs(problem, state, prox, t)?;
    let (dx, dy, iters, relres, status) =
        ctx.solve_system(problem, &xi1, &xi2, state.mu, opts)?;
    let usable = status == KrylovStatus::Converged || relres <= INEXACT_ACCEPT;
    if usable {
        let dz = recover_dz(problem, state, &ctx.theta_inv, t, &dx);
        return Ok(PhaseOutcome { dir: Direction { dx, dy, dz }, iters, accepted: true });
    }
    // Backtrack: stiffen the regularization and retry the same system.
    state.delta *= 10.0;
    state.rho *= 10.0;
    *ctx = build_context_guarded(problem, state, opts, dense_cols, dense_rows)?;
    let (xi1, xi2) = newton_rhs(problem, state, prox, t)?;
    let (dx, dy, iters2, relres, status) =
        ctx.solve_system(problem, &xi1, &xi2, state.mu, opts)?;
    let usable = status == KrylovStatus::Converged || relres <= INEXACT_ACCEPT;
    let dz = recover_dz(problem, state, &ctx.theta_inv, t, &dx);
    Ok(PhaseOutcome {
        dir: Direction { dx, dy, dz },
        iters: iters + iters2,
        accepted: usable,
    })
}

/// Interior starting point: regularized least-squares values shifted
/// into the positive orthant.
fn starting_point(problem: &ProblemQP, opts: &SolverOptions) -> Result<IterateState, IpmError> {
    let a = problem.a();
    let n = problem.ncols();
    let ones = vec![1.0; n];
    let nm = normal_matrix(a, &ones, 1.0)?;
    let chol = factor::cholesky(&nm, &factor::analyze_order(&nm)?)?;

    let w = chol.solve(problem.b())?;
    let x_ls = a.spmv(&w, true)?;
    let ac = a.spmv(problem.c(), false)?;
    let y = chol.solve(&ac)?;
    let aty = a.spmv(&y, true)?;
    let hx = problem.h().spmv(&x_ls, false)?;
    let z_ls: Vec<f64> =
        (0..n).map(|j| problem.c()[j] + hx[j] - aty[j]).collect();

    let mut x = x_ls.clone();
    let mut z = vec![0.0; n];
    let ineq = problem.ineq_set();
    if !ineq.is_empty() {
        let min_x = ineq.iter().map(|&j| x_ls[j]).fold(f64::INFINITY, f64::min);
        let min_z = ineq.iter().map(|&j| z_ls[j]).fold(f64::INFINITY, f64::min);
        let shift_x = (-1.5 * min_x).max(0.0);
        let shift_z = (-1.5 * min_z).max(0.0);
        let xs: Vec<f64> = ineq.iter().map(|&j| x_ls[j] + shift_x).collect();
        let zs: Vec<f64> = ineq.iter().map(|&j| z_ls[j] + shift_z).collect();
        let dot: f64 = xs.iter().zip(&zs).map(|(a, b)| a * b).sum();
        let sx: f64 = xs.iter().sum();
        let sz: f64 = zs.iter().sum();
        let pad_x = if sz > 0.0 { 0.5 * dot / sz } else { 1.0 };
        let pad_z = if sx > 0.0 { 0.5 * dot / sx } else { 1.0 };
        // keep the point strictly interior even when the least-squares
        // values are degenerate
        let floor_x = 1e-2 * (1.0 + xs.iter().fold(0.0f64, |a, &b| a.max(b.abs())));
        let floor_z = 1e-2 * (1.0 + zs.iter().fold(0.0f64, |a, &b| a.max(b.abs())));
        for (k, &j) in ineq.iter().enumerate() {
            x[j] = (xs[k] + pad_x).max(floor_x);
            z[j] = (zs[k] + pad_z).max(floor_z);
        }
    }
    let mu = duality_measure(&x, &z, problem);
    let (delta, rho) = update_regularization(mu.max(1e-2), opts.reg_floor);
    IterateState::new(x, y, z, delta, rho, problem).map_err(IpmError::from)
}

/// One standalone Newton solve at the given state, building its own
/// preconditioner; prox centers sit at the current iterate. The
/// corrector variant computes its affine probe internally. Returns the
/// direction and the Krylov iterations of the returned solve.
pub fn newton_step(
    state: &IterateState,
    problem: &ProblemQP,
    opts: &SolverOptions,
    predictor: bool,
) -> Result<(Direction, usize), IpmError> {
    opts.validate()?;
    let (dense_cols, dense_rows) =
        density_plan(problem.a(), opts.col_density, opts.row_density, opts.max_drop)?;
    let ctx = IterationContext::build(problem, state, opts, &dense_cols, &dense_rows)?;
    let prox = ProxCenters {
        zeta: state.x.clone(),
        lambda: state.y.clone(),
        primal_mark: f64::INFINITY,
        dual_mark: f64::INFINITY,
    };

    let n = problem.ncols();
    let mut t_aff = vec![0.0; n];
    for &j in problem.ineq_set() {
        t_aff[j] = -state.x[j] * state.z[j];
    }
    let (xi1, xi2) = newton_rhs(problem, state, &prox, &t_aff)?;
    let (dx, dy, iters, _, _) = ctx.solve_system(problem, &xi1, &xi2, state.mu, opts)?;
    let dz = recover_dz(problem, state, &ctx.theta_inv, &t_aff, &dx);
    let aff = Direction { dx, dy, dz };
    if predictor {
        return Ok((aff, iters));
    }

    let (ap, ad) = boundary_steps(state, problem, &aff, 1.0);
    let mu_aff: f64 = problem
        .ineq_set()
        .iter()
        .map(|&j| (state.x[j] + ap * aff.dx[j]) * (state.z[j] + ad * aff.dz[j]))
        .sum::<f64>()
        / n as f64;
    let sigma = if state.mu > 0.0 {
        ((mu_aff / state.mu).powi(3)).clamp(0.01, 0.8)
    } else {
        0.01
    };
    let mut t = vec![0.0; n];
    for &j in problem.ineq_set() {
        t[j] = sigma * state.mu - state.x[j] * state.z[j] - aff.dx[j] * aff.dz[j];
    }
    let (xi1, xi2) = newton_rhs(problem, state, &prox, &t)?;
    let (dx, dy, iters, _, _) = ctx.solve_system(problem, &xi1, &xi2, state.mu, opts)?;
    let dz = recover_dz(problem, state, &ctx.theta_inv, &t, &dx);
    Ok((Direction { dx, dy, dz }, iters))
}

/// Duality measure at the trial point reached by scaling the current
/// direction with the given primal and dual steps.
fn trial_mu(
    state: &IterateState,
    problem: &ProblemQP,
    dir: &Direction,
    ap: f64,
    ad: f64,
) -> f64 {
    let n = problem.ncols();
    if n == 0 {
        return 0.0;
    }
    let dot: f64 = problem
        .ineq_set()
        .iter()
        .map(|&j| (state.x[j] + ap * dir.dx[j]) * (state.z[j] + ad * dir.dz[j]))
        .sum();
    dot / n as f64
}

/// Backs the boundary steps off geometrically until the duality measure
/// shrinks by at least one percent of the step fraction taken. The
/// corrector's second-order term can push `mu` up violently on badly
/// scaled data; every accepted step must stay productive. `None` means
/// even a vanishing fraction of this direction raises `mu`.
fn safeguarded_steps(
    state: &IterateState,
    problem: &ProblemQP,
    dir: &Direction,
    ap: f64,
    ad: f64,
) -> Option<(f64, f64)> {
    if problem.ineq_set().is_empty() {
        return Some((ap, ad));
    }
    let mut s = 1.0;
    for _ in 0..24 {
        let (sp, sd) = (s * ap, s * ad);
        if trial_mu(state, problem, dir, sp, sd) <= (1.0 - 0.01 * sp.min(sd)) * state.mu {
            return Some((sp, sd));
        }
        s *= 0.5;
    }
    None
}

/// Runs the interior-point loop to the requested accuracy. Converged
/// means scaled primal and dual residuals and the duality measure are
/// all at or below `opts.tol`.
pub fn solve(
    problem: &ProblemQP,
    opts: &SolverOptions,
) -> Result<(IterateState, IpmTrace, SolveStatus), IpmError> {
    opts.validate()?;
    let (dense_cols, dense_rows) =
        density_plan(problem.a(), opts.col_density, opts.row_density, opts.max_drop)?;
    let mut state = starting_point(problem, opts)?;
    let b_scale = 1.0 + norm2(problem.b());
    let c_scale = 1.0 + norm2(problem.c());

    let first = residuals(&state, problem)?;
    let mut prox = ProxCenters {
        zeta: state.x.clone(),
        lambda: state.y.clone(),
        primal_mark: norm2(&first.primal),
        dual_mark: norm2(&first.dual),
    };
    let mut trace = IpmTrace::default();
    let n = problem.ncols();

    for _ in 0..opts.max_ipm_iters {
        let res = residuals(&state, problem)?;
        let pnorm = norm2(&res.primal);
        let dnorm = norm2(&res.dual);
        if pnorm / b_scale <= opts.tol && dnorm / c_scale <= opts.tol && state.mu <= opts.tol {
            return Ok((state, trace, SolveStatus::Converged));
        }
        if pnorm <= 0.1 * prox.primal_mark && dnorm <= 0.1 * prox.dual_mark {
            prox.zeta.copy_from_slice(&state.x);
            prox.lambda.copy_from_slice(&state.y);
            prox.primal_mark = pnorm;
            prox.dual_mark = dnorm;
        }

        let mut ctx =
            build_context_guarded(problem, &mut state, opts, &dense_cols, &dense_rows)?;
        let (delta_used, rho_used) = (state.delta, state.rho);

        let mut t_aff = vec![0.0; n];
        for &j in problem.ineq_set() {
            t_aff[j] = -state.x[j] * state.z[j];
        }
        let predictor = run_phase(
            problem,
            &mut state,
            &mut ctx,
            &prox,
            &t_aff,
            opts,
            &dense_cols,
            &dense_rows,
        )?;
        if !predictor.accepted {
            trace.iterations.push(IterRecord {
                mu: state.mu,
                delta: delta_used,
                rho: rho_used,
                krylov_iters_predictor: predictor.iters,
                krylov_iters_corrector: 0,
                factor_nnz: ctx.precond.nnz_factors(),
                primal_norm: pnorm,
                dual_norm: dnorm,
            });
            return Ok((state, trace, SolveStatus::IterationLimit));
        }
        let aff = predictor.dir;

        let (ap_aff, ad_aff) = boundary_steps(&state, problem, &aff, 1.0);
        let mu_aff: f64 = problem
            .ineq_set()
            .iter()
            .map(|&j| (state.x[j] + ap_aff * aff.dx[j]) * (state.z[j] + ad_aff * aff.dz[j]))
            .sum::<f64>()
            / n as f64;
        let sigma = if state.mu > 0.0 {
            ((mu_aff / state.mu).powi(3)).clamp(0.01, 0.8)
        } else {
            0.01
        };
        let mut t = vec![0.0; n];
        for &j in problem.ineq_set() {
            t[j] = sigma * state.mu - state.x[j] * state.z[j] - aff.dx[j] * aff.dz[j];
        }
        let corrector = run_phase(
            problem,
            &mut state,
            &mut ctx,
            &prox,
            &t,
            opts,
            &dense_cols,
            &dense_rows,
        )?;
        let dir = corrector.dir;

        let (ap0, ad0) = step_lengths(&state, problem, &dir);
        let (dir, ap, ad) = match safeguarded_steps(&state, problem, &dir, ap0, ad0) {
            Some((ap, ad)) => (dir, ap, ad),
            None => {
                // corrector unusable: fall back to the affine direction
                // with equal steps, whose leading term always lowers mu
                let (bp, bd) = step_lengths(&state, problem, &aff);
                let alpha = bp.min(bd);
                let (ap, ad) = safeguarded_steps(&state, problem, &aff, alpha, alpha)
                    .unwrap_or((0.0, 0.0));
                (aff, ap, ad)
            }
        };
        for j in 0..n {
            state.x[j] += ap * dir.dx[j];
            state.z[j] += ad * dir.dz[j];
        }
        for (yi, dyi) in state.y.iter_mut().zip(&dir.dy) {
            *yi += ad * dyi;
        }
        state.mu = duality_measure(&state.x, &state.z, problem);
        let (delta, rho) = update_regularization(state.mu, opts.reg_floor);
        state.delta = delta;
        state.rho = rho;

        trace.iterations.push(IterRecord {
            mu: state.mu,
            delta: delta_used,
            rho: rho_used,
            krylov_iters_predictor: predictor.iters,
            krylov_iters_corrector: corrector.iters,
            factor_nnz: ctx.precond.nnz_factors(),
            primal_norm: pnorm,
            dual_norm: dnorm,
        });
        if !corrector.accepted {
            return Ok((state, trace, SolveStatus::IterationLimit));
        }
    }
    Ok((state, trace, SolveStatus::IterationLimit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{SparseMatrix, Symmetry};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn general(m: usize, n: usize, trip: &[(usize, usize, f64)]) -> SparseMatrix {
        SparseMatrix::from_triplets(m, n, trip, Symmetry::General).unwrap()
    }

    fn one_var_lp() -> ProblemQP {
        let a = general(1, 1, &[(0, 0, 1.0)]);
        ProblemQP::new(a, None, vec![1.0], vec![1.0], vec![0], vec![], "one-var").unwrap()
    }

    /// LP with a known optimum built backwards from a KKT point.
    fn synthetic_lp(seed: u64, m: usize, n: usize) -> (ProblemQP, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for j in 0..n {
            let i = rng.gen_range(0..m);
            trip.push((i, j, rng.gen_range(0.5..2.0)));
            if rng.gen_bool(0.4) {
                trip.push((rng.gen_range(0..m), j, rng.gen_range(-1.0..1.0)));
            }
        }
        for i in 0..m {
            trip.push((i, rng.gen_range(0..n), rng.gen_range(0.5..1.5)));
        }
        let a = general(m, n, &trip);
        let mut x_star = vec![0.0; n];
        let mut z_star = vec![0.0; n];
        for j in 0..n {
            if j % 2 == 0 {
                x_star[j] = rng.gen_range(0.5..2.0);
            } else {
                z_star[j] = rng.gen_range(0.5..2.0);
            }
        }
        let y_star: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.spmv(&x_star, false).unwrap();
        let aty = a.spmv(&y_star, true).unwrap();
        let c: Vec<f64> = (0..n).map(|j| aty[j] + z_star[j]).collect();
        let obj = c.iter().zip(&x_star).map(|(c, x)| c * x).sum();
        let p = ProblemQP::new(a, None, b, c, (0..n).collect(), vec![], "synthetic").unwrap();
        (p, obj)
    }

    #[test]
    fn options_validated() {
        let mut opts = SolverOptions::default();
        assert!(opts.validate().is_ok());
        opts.tol = 0.0;
        assert!(matches!(solve(&one_var_lp(), &opts), Err(IpmError::BadOptions(_))));
        opts.tol = 1e-6;
        opts.col_density = 1.5;
        assert!(opts.validate().is_err());
    }

    #[test]
    fn regularization_rule() {
        assert_eq!(update_regularization(1e-4, 1e-10), (1e-4, 1e-4));
        assert_eq!(update_regularization(1e-13, 1e-10), (1e-10, 1e-10));
        assert_eq!(update_regularization(1.0, 1e-10), (1.0, 1.0));
    }

    #[test]
    fn step_length_ratio_test() {
        let p = one_var_lp();
        let s = IterateState::new(vec![2.0], vec![0.0], vec![1.0], 1.0, 1.0, &p).unwrap();
        let zero = Direction { dx: vec![0.0], dy: vec![0.0], dz: vec![0.0] };
        assert_eq!(step_lengths(&s, &p, &zero), (1.0, 1.0));
        let hit = Direction { dx: vec![-2.0], dy: vec![0.0], dz: vec![0.5] };
        let (ap, ad) = step_lengths(&s, &p, &hit);
        assert_abs_diff_eq!(ap, 0.995, epsilon = 1e-15);
        assert_eq!(ad, 1.0);
        let up = Direction { dx: vec![1.0], dy: vec![0.0], dz: vec![3.0] };
        assert_eq!(step_lengths(&s, &p, &up), (1.0, 1.0));
    }

    #[test]
    fn one_variable_lp_converges() {
        let p = one_var_lp();
        let (state, trace, status) = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(status, SolveStatus::Converged);
        assert_abs_diff_eq!(state.x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(p.objective(&state.x), 1.0, epsilon = 1e-5);
        assert!(!trace.is_empty());
        let first = trace.iterations.first().unwrap().mu;
        let last = trace.iterations.last().unwrap().mu;
        assert!(last <= first);
    }

    #[test]
    fn symmetric_qp_splits_evenly() {
        let a = general(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let h = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (1, 1, 1.0)],
            Symmetry::SymmetricLower,
        )
        .unwrap();
        let p = ProblemQP::new(a, Some(h), vec![2.0], vec![0.0; 2], vec![0, 1], vec![], "qp")
            .unwrap();
        let (state, _, status) = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(status, SolveStatus::Converged);
        assert_abs_diff_eq!(state.x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(state.x[1], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(p.objective(&state.x), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn nondiagonal_hessian_promotes_to_saddle_route() {
        let a = general(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let h = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 2.0), (1, 0, 1.0), (1, 1, 2.0)],
            Symmetry::SymmetricLower,
        )
        .unwrap();
        let p = ProblemQP::new(a, Some(h), vec![2.0], vec![0.0; 2], vec![0, 1], vec![], "qp-nd")
            .unwrap();
        // Requesting the PCG-backed kind must still work: the solver
        // promotes it to the saddle form internally.
        let opts = SolverOptions { precond_kind: PrecondKind::PneLdl, ..Default::default() };
        let (state, _, status) = solve(&p, &opts).unwrap();
        assert_eq!(status, SolveStatus::Converged);
        assert_abs_diff_eq!(state.x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(state.x[1], 1.0, epsilon = 1e-4);
        // objective x'Hx/2 at (1,1) is 3
        assert_abs_diff_eq!(p.objective(&state.x), 3.0, epsilon = 1e-4);
    }

    #[test]
    fn all_kinds_agree_on_small_lp() {
        let (p, obj) = synthetic_lp(5, 4, 8);
        for kind in [
            PrecondKind::PneChol,
            PrecondKind::PneLdl,
            PrecondKind::PasChol,
            PrecondKind::PasLdl,
            PrecondKind::Pk,
        ] {
            let opts = SolverOptions { precond_kind: kind, ..Default::default() };
            let (state, _, status) = solve(&p, &opts).unwrap();
            assert_eq!(status, SolveStatus::Converged, "kind {}", kind.as_str());
            let got = p.objective(&state.x);
            assert!(
                (got - obj).abs() <= 1e-4 * (1.0 + obj.abs()),
                "kind {}: objective {got} vs {obj}",
                kind.as_str()
            );
        }
    }

    #[test]
    fn newton_step_zero_rhs_gives_zero_direction() {
        // Equality-constrained QP at its exact KKT point: all variables
        // free, prox centers at the iterate, so every residual is zero.
        let a = general(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let h = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (1, 1, 1.0)],
            Symmetry::SymmetricLower,
        )
        .unwrap();
        let p = ProblemQP::new(a, Some(h), vec![2.0], vec![0.0; 2], vec![], vec![0, 1], "eq")
            .unwrap();
        let state =
            IterateState::new(vec![1.0, 1.0], vec![1.0], vec![0.0, 0.0], 1.0, 1.0, &p).unwrap();
        let (dir, iters) =
            newton_step(&state, &p, &SolverOptions::default(), true).unwrap();
        assert_eq!(iters, 0);
        assert!(dir.dx.iter().all(|&v| v == 0.0));
        assert!(dir.dy.iter().all(|&v| v == 0.0));
        assert!(dir.dz.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn newton_direction_passes_residual_check() {
        let (p, _) = synthetic_lp(9, 3, 6);
        let n = p.ncols();
        let x = vec![1.0; n];
        let z = vec![0.5; n];
        let y = vec![0.1; p.nrows()];
        let state = IterateState::new(x, y, z, 0.05, 0.05, &p).unwrap();
        let opts = SolverOptions::default();
        let (dir, _) = newton_step(&state, &p, &opts, true).unwrap();

        // Recompute the reduced system residual: M dy = xi2 + A G xi1.
        let res = residuals(&state, &p).unwrap();
        let g: Vec<f64> = (0..n).map(|j| 1.0 / (state.z[j] / state.x[j] + state.rho)).collect();
        let xi1: Vec<f64> = (0..n).map(|j| res.dual[j] + state.z[j]).collect();
        let xi2: Vec<f64> = res.primal.iter().map(|v| -v).collect();
        let gx: Vec<f64> = xi1.iter().zip(&g).map(|(v, g)| v * g).collect();
        let agx = p.a().spmv(&gx, false).unwrap();
        let rhs: Vec<f64> = xi2.iter().zip(&agx).map(|(a, b)| a + b).collect();
        let m = normal_matrix(p.a(), &g, state.delta).unwrap();
        let mdy = m.spmv(&dir.dy, false).unwrap();
        let e = norm2(&mdy.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
        let tol = adaptive_tol(state.mu, norm2(&rhs), opts.tol);
        assert!(e <= tol * norm2(&rhs) * 1.0001, "residual {e} vs tol {tol}");
    }

    #[test]
    fn perfect_preconditioner_needs_two_pcg_iterations_at_most() {
        let (p, _) = synthetic_lp(13, 5, 10);
        // kappa tiny: nothing is ever classified nonbasic, and the
        // density thresholds at 1.0 drop nothing, so P = M exactly.
        let opts = SolverOptions {
            kappa: 1e-12,
            col_density: 1.0,
            row_density: 1.0,
            ..Default::default()
        };
        let (_, trace, status) = solve(&p, &opts).unwrap();
        assert_eq!(status, SolveStatus::Converged);
        for rec in &trace.iterations {
            assert!(rec.krylov_iters_predictor <= 2, "{:?}", rec);
            assert!(rec.krylov_iters_corrector <= 2, "{:?}", rec);
            assert!(rec.factor_nnz > 0);
        }
    }

    #[test]
    fn positivity_preserved_along_the_run() {
        let (p, _) = synthetic_lp(21, 4, 9);
        let (state, trace, status) = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(status, SolveStatus::Converged);
        for &j in p.ineq_set() {
            assert!(state.x[j] > 0.0);
            assert!(state.z[j] > 0.0);
        }
        for w in trace.iterations.windows(2) {
            assert!(w[1].mu.is_finite() && w[1].mu >= 0.0);
        }
    }

    #[test]
    fn trace_bookkeeping_is_consistent() {
        let (p, _) = synthetic_lp(33, 4, 8);
        let (_, trace, status) = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(status, SolveStatus::Converged);
        assert_eq!(
            trace.total_krylov(),
            trace
                .iterations
                .iter()
                .map(|r| r.krylov_iters_predictor + r.krylov_iters_corrector)
                .sum::<usize>()
        );
        assert!(trace.avg_krylov() > 0.0);
        assert_eq!(
            trace.krylov_last(),
            trace.iterations.last().map(|r| r.krylov_iters_predictor + r.krylov_iters_corrector)
                .unwrap()
        );
        let first = trace.iterations.first().unwrap().mu;
        let last = trace.iterations.last().unwrap().mu;
        assert!(last <= first);
    }
}
