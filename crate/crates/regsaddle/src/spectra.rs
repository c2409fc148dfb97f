//! Desk-scale spectral verification: dense eigendecompositions of the
//! preconditioned operators, checked against their guaranteed
//! enclosures.
//!
//! Everything here is an oracle. Matrices are densified, eigenvalues
//! come from a dense symmetric solver, and singular values from a dense
//! SVD; dimensions are capped accordingly.

use crate::precond::{
    build_pas, build_pk, build_pne_chol, HessianApprox, Partition, PrecondError, PrecondHandle,
    SparsificationPlan,
};
use crate::qp::{assemble_saddle_matrix, ModelError};
use crate::sparse::{normal_matrix, SparseError, SparseMatrix};
use nalgebra::DMatrix;
use thiserror::Error;

/// Absolute tolerance for counting an eigenvalue as one of the
/// guaranteed units.
pub const UNIT_TOL: f64 = 1e-7;
/// Relative slack applied to interval endpoints.
pub const ENDPOINT_RTOL: f64 = 1e-9;
const MAX_DENSE_DIM: usize = 500;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("dense verification capped at {MAX_DENSE_DIM} rows, got {0}")]
    TooLarge(usize),
    #[error("spectral check input invalid: {0}")]
    BadInput(String),
    #[error(transparent)]
    Precond(#[from] PrecondError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Outcome of one spectral check.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Eigenvalues of the preconditioned operator, ascending.
    pub eigenvalues: Vec<f64>,
    /// Guaranteed enclosures; one interval for the normal-equations
    /// checks, two for the saddle ones. The factorization check lists
    /// its two reference points as degenerate intervals.
    pub intervals: Vec<(f64, f64)>,
    /// Eigenvalues found at the reference value (1, or +-1 for the
    /// factorization kind) within `UNIT_TOL`.
    pub unit_count: usize,
    /// Lower bound on `unit_count` promised by the theory.
    pub guaranteed_unit_count: usize,
    pub pass: bool,
    /// Set when the upper saddle endpoint `1 + sqrt(beta_NE - 1)`
    /// needed clamping because `beta_NE` fell below 1.
    pub clamped: bool,
}

impl SpectralReport {
    /// Line-oriented rendering, one fact per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let lo = self.eigenvalues.first().copied().unwrap_or(f64::NAN);
        let hi = self.eigenvalues.last().copied().unwrap_or(f64::NAN);
        s.push_str(&format!(
            "eigenvalues: {} in [{lo:.6e}, {hi:.6e}]\n",
            self.eigenvalues.len()
        ));
        for (k, (a, b)) in self.intervals.iter().enumerate() {
            s.push_str(&format!("interval {}: [{a:.6e}, {b:.6e}]\n", k + 1));
        }
        s.push_str(&format!(
            "units: {} found, {} guaranteed\n",
            self.unit_count, self.guaranteed_unit_count
        ));
        s.push_str(&format!("clamped: {}\n", self.clamped));
        s.push_str(&format!("pass: {}\n", self.pass));
        s
    }

    pub fn csv_header() -> &'static str {
        "label,pass,clamped,unit_count,guaranteed_unit_count,lambda_min,lambda_max,lo1,hi1,lo2,hi2"
    }

    /// One CSV row under [`Self::csv_header`]; missing second interval
    /// leaves the trailing fields empty.
    pub fn csv_row(&self, label: &str) -> String {
        let lo = self.eigenvalues.first().copied().unwrap_or(f64::NAN);
        let hi = self.eigenvalues.last().copied().unwrap_or(f64::NAN);
        let mut fields = vec![
            label.to_string(),
            self.pass.to_string(),
            self.clamped.to_string(),
            self.unit_count.to_string(),
            self.guaranteed_unit_count.to_string(),
            format!("{lo}"),
            format!("{hi}"),
        ];
        for k in 0..2 {
            match self.intervals.get(k) {
                Some((a, b)) => {
                    fields.push(format!("{a}"));
                    fields.push(format!("{b}"));
                }
                None => {
                    fields.push(String::new());
                    fields.push(String::new());
                }
            }
        }
        fields.join(",")
    }
}

fn endpoint_slack(e: f64) -> f64 {
    ENDPOINT_RTOL * e.abs().max(1.0)
}

fn within(intervals: &[(f64, f64)], x: f64) -> bool {
    intervals
        .iter()
        .any(|&(lo, hi)| x >= lo - endpoint_slack(lo) && x <= hi + endpoint_slack(hi))
}

/// All eigenvalues of a dense symmetric matrix, ascending. The input
/// is symmetrized first so that accumulated round-off in one triangle
/// cannot leak into complex arithmetic.
pub fn dense_eigs(s: &DMatrix<f64>) -> Result<Vec<f64>, SpectraError> {
    if s.nrows() != s.ncols() {
        return Err(SpectraError::BadInput(format!(
            "matrix is {}x{}, expected square",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.nrows() > MAX_DENSE_DIM {
        return Err(SpectraError::TooLarge(s.nrows()));
    }
    let sym = (s + s.transpose()).scale(0.5);
    let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    Ok(ev)
}

/// `X^p` for symmetric positive definite `X`, through its
/// eigendecomposition.
fn spd_power(x: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>, SpectraError> {
    let sym = (x + x.transpose()).scale(0.5);
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(SpectraError::BadInput(
            "operator expected positive definite has a nonpositive eigenvalue".into(),
        ));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(p)));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Densifies the inverse action of a preconditioner by applying it to
/// the identity columns.
pub fn handle_inverse_dense(p: &PrecondHandle) -> Result<DMatrix<f64>, SpectraError> {
    let d = p.dim();
    if d > MAX_DENSE_DIM {
        return Err(SpectraError::TooLarge(d));
    }
    let mut out = DMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = p.apply_inverse(&e)?;
        for i in 0..d {
            out[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    Ok((&out + out.transpose()).scale(0.5))
}

/// Eigenvalues of `P^{-1} T` for symmetric `T` and SPD `P`, computed
/// through the symmetric similarity `P^{-1/2} T P^{-1/2}` with
/// `P^{-1}` given densely.
pub fn preconditioned_eigs(
    target: &DMatrix<f64>,
    pinv: &DMatrix<f64>,
) -> Result<Vec<f64>, SpectraError> {
    let s = spd_power(pinv, 0.5)?;
    dense_eigs(&(&s * target * &s))
}

/// Regularized normal-equations data for the dense checks.
pub struct NeInstance<'a> {
    pub a: &'a SparseMatrix,
    pub ghat: &'a [f64],
    pub delta: f64,
}

/// `B = P_r A Ghat^{1/2} P_c` densified with the plan's permutations.
fn b_matrix(inst: &NeInstance, plan: &SparsificationPlan) -> DMatrix<f64> {
    let (m, n) = (inst.a.nrows(), inst.a.ncols());
    let a = inst.a.to_dense();
    let fr = plan.perm_r().forward();
    let fc = plan.perm_c().forward();
    DMatrix::from_fn(m, n, |i, j| a[(fr[i], fc[j])] * inst.ghat[fc[j]].sqrt())
}

fn sigma_max(b: &DMatrix<f64>) -> f64 {
    if b.nrows() == 0 || b.ncols() == 0 {
        return 0.0;
    }
    b.clone().svd(false, false).singular_values.max()
}

fn lambda_min_gram(b: &DMatrix<f64>) -> Result<f64, SpectraError> {
    if b.nrows() == 0 {
        return Ok(0.0);
    }
    let ev = dense_eigs(&(b * b.transpose()))?;
    Ok(ev[0].max(0.0))
}

/// Checks the normal-equations enclosure: builds the preconditioner
/// from the plan, densifies `P^{-1} M`, and tests every eigenvalue
/// against the interval dictated by `(kc, kr)` plus the guaranteed
/// count of units.
pub fn check_pne_intervals(
    inst: &NeInstance,
    plan: &SparsificationPlan,
) -> Result<SpectralReport, SpectraError> {
    let m = inst.a.nrows();
    if m > 100 {
        return Err(SpectraError::TooLarge(m));
    }
    let p = build_pne_chol(inst.a, inst.ghat, inst.delta, plan)?;
    let mhat = normal_matrix(inst.a, inst.ghat, inst.delta)?.to_dense();
    let pinv = handle_inverse_dense(&p)?;
    let eigenvalues = preconditioned_eigs(&mhat, &pinv)?;

    let kc = plan.drop_count();
    let kr = plan.kr();
    let b = b_matrix(inst, plan);
    let b21 = b.view((kr, 0), (m - kr, kc)).into_owned();
    let b22 = b.view((kr, kc), (m - kr, inst.a.ncols() - kc)).into_owned();
    let tail_gap = || -> Result<f64, SpectraError> {
        let num = sigma_max(&b21).powi(2);
        let den = inst.delta + lambda_min_gram(&b22)?;
        Ok(num / den)
    };
    let interval = match (kc > 0, kr > 0) {
        (false, false) => (1.0, 1.0),
        (true, false) => (1.0, 1.0 + tail_gap()?),
        (false, true) => (inst.delta / (inst.delta + sigma_max(&b).powi(2)), 2.0),
        (true, true) => (
            inst.delta / (inst.delta + sigma_max(&b).powi(2)),
            2.0 + tail_gap()?,
        ),
    };

    let unit_count = eigenvalues.iter().filter(|&&l| (l - 1.0).abs() <= UNIT_TOL).count();
    let guaranteed_unit_count = m.saturating_sub(2 * kr + kc);
    let pass = eigenvalues.iter().all(|&l| within(&[interval], l))
        && unit_count >= guaranteed_unit_count;
    Ok(SpectralReport {
        eigenvalues,
        intervals: vec![interval],
        unit_count,
        guaranteed_unit_count,
        pass,
        clamped: false,
    })
}

/// Saddle-system data for the dense checks. `theta_inv` holds the
/// barrier diagonal, so the true Hessian block is
/// `Q = H + Diag(theta_inv)`.
pub struct AsInstance<'a> {
    pub a: &'a SparseMatrix,
    pub h: Option<&'a SparseMatrix>,
    pub theta_inv: &'a [f64],
    pub rho: f64,
    pub delta: f64,
}

impl AsInstance<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.a.nrows(), self.a.ncols())
    }

    fn saddle_dense(&self) -> Result<DMatrix<f64>, SpectraError> {
        Ok(assemble_saddle_matrix(self.a, self.h, self.theta_inv, self.rho, self.delta)?
            .to_dense())
    }

    /// Dense `F = Q + rho I`.
    fn f_dense(&self) -> DMatrix<f64> {
        let n = self.a.ncols();
        let mut f = match self.h {
            Some(h) => h.to_dense(),
            None => DMatrix::zeros(n, n),
        };
        for j in 0..n {
            f[(j, j)] += self.theta_inv[j] + self.rho;
        }
        f
    }
}

/// Eigenvalues of the similarity `Fhat^{-1/2} F Fhat^{-1/2}`; their
/// mean is exactly 1 because the approximation never touches block
/// diagonals, which makes this a cheap self-test of any `Qhat`.
pub fn f_similarity_eigs(
    inst: &AsInstance,
    qhat: &HessianApprox,
) -> Result<Vec<f64>, SpectraError> {
    let n = inst.a.ncols();
    if n > MAX_DENSE_DIM {
        return Err(SpectraError::TooLarge(n));
    }
    let mut fhat = qhat.qhat().to_dense();
    for j in 0..n {
        fhat[(j, j)] += inst.rho;
    }
    let fhat_inv = spd_power(&fhat, -1.0)?;
    preconditioned_eigs(&inst.f_dense(), &fhat_inv)
}

/// Checks the saddle enclosure: builds the block-diagonal
/// preconditioner around the supplied normal-equations handle,
/// computes the extremes `alpha_F, beta_F, alpha_NE, beta_NE`, and
/// tests the spectrum of `P_AS^{-1} K` against the two intervals.
pub fn check_pas_intervals(
    inst: &AsInstance,
    qhat: &HessianApprox,
    ne: PrecondHandle,
) -> Result<SpectralReport, SpectraError> {
    let (m, n) = inst.dims();
    if n + m > 200 {
        return Err(SpectraError::TooLarge(n + m));
    }
    if ne.dim() != m {
        return Err(SpectraError::BadInput(format!(
            "normal-equations handle acts on {} rows, instance has {m}",
            ne.dim()
        )));
    }
    let pas = build_pas(qhat, inst.rho, ne)?;
    let pas_pinv = handle_inverse_dense(&pas)?;
    let fhat_inv = pas_pinv.view((0, 0), (n, n)).into_owned();
    let ne_pinv = pas_pinv.view((n, n), (m, m)).into_owned();

    let f_eigs = preconditioned_eigs(&inst.f_dense(), &fhat_inv)?;
    let (alpha_f, beta_f) = (f_eigs[0], f_eigs[f_eigs.len() - 1]);

    // Approximate Schur complement built from Fhat, not from F.
    let a_dense = inst.a.to_dense();
    let mut mhat = &a_dense * &fhat_inv * a_dense.transpose();
    for i in 0..m {
        mhat[(i, i)] += inst.delta;
    }
    let ne_eigs = preconditioned_eigs(&mhat, &ne_pinv)?;
    let (alpha_ne, beta_ne) = (ne_eigs[0], ne_eigs[ne_eigs.len() - 1]);

    let clamped = beta_ne < 1.0 - 1e-12;
    let i_neg = (-beta_f - beta_ne.sqrt(), -alpha_f);
    let i_pos = (
        0.5 * (-beta_f + (beta_f * beta_f + 4.0 * alpha_ne).sqrt()),
        1.0 + (beta_ne - 1.0).max(0.0).sqrt(),
    );
    let eigenvalues = preconditioned_eigs(&inst.saddle_dense()?, &pas_pinv)?;
    let intervals = vec![i_neg, i_pos];
    let pass = eigenvalues.iter().all(|&l| within(&intervals, l));
    let unit_count = eigenvalues.iter().filter(|&&l| (l - 1.0).abs() <= UNIT_TOL).count();
    Ok(SpectralReport {
        eigenvalues,
        intervals,
        unit_count,
        guaranteed_unit_count: 0,
        pass,
        clamped,
    })
}

/// Checks the factorization preconditioner: densifies the two-sided
/// operator and counts eigenvalues at the two reference points. With
/// nothing dropped the whole spectrum must collapse onto them.
pub fn check_pk_spectrum(
    inst: &AsInstance,
    qhat: &HessianApprox,
    plan: &SparsificationPlan,
) -> Result<SpectralReport, SpectraError> {
    let (m, n) = inst.dims();
    if n + m > 200 {
        return Err(SpectraError::TooLarge(n + m));
    }
    let p = build_pk(inst.a, qhat, inst.rho, inst.delta, plan)?;
    let k = assemble_saddle_matrix(inst.a, inst.h, inst.theta_inv, inst.rho, inst.delta)?;
    let mut apply_k = |x: &[f64]| k.spmv(x, false).expect("dimensions fixed above");
    let dim = n + m;
    let mut t = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for j in 0..dim {
        e[j] = 1.0;
        let col = p.two_sided_apply(&mut apply_k, &e)?;
        for i in 0..dim {
            t[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    let eigenvalues = dense_eigs(&t)?;

    let dropped = plan.drop_count();
    let tol = if dropped == 0 { 1e-9 } else { UNIT_TOL };
    let unit_count = eigenvalues
        .iter()
        .filter(|&&l| (l - 1.0).abs().min((l + 1.0).abs()) <= tol)
        .count();
    // Perturbation rank: a zeroed column of A contributes 2, and the
    // Hessian entries discarded by the approximation contribute at
    // most their nonzero row count (the block diagonals always agree,
    // so only cross terms appear here).
    let q_dense = inst.f_dense();
    let mut qhat_dense = qhat.qhat().to_dense();
    for j in 0..n {
        qhat_dense[(j, j)] += inst.rho;
    }
    let discarded_rows = (0..n)
        .filter(|&i| (0..n).any(|j| (q_dense[(i, j)] - qhat_dense[(i, j)]).abs() > 0.0))
        .count();
    let guaranteed_unit_count = dim.saturating_sub(2 * dropped + discarded_rows);
    // Strays caused by dropping carry no enclosure; the interval test
    // only binds when nothing was dropped.
    let pass = unit_count >= guaranteed_unit_count && (dropped > 0 || unit_count == dim);
    Ok(SpectralReport {
        eigenvalues,
        intervals: vec![(-1.0, -1.0), (1.0, 1.0)],
        unit_count,
        guaranteed_unit_count,
        pass,
        clamped: false,
    })
}

/// Checks the asymptotic bound for diagonal-Hessian problems: dropping
/// exactly the nonbasic columns keeps the spectrum of `P^{-1} M`
/// inside `[1, 1 + max_[j in N](G_jj) sigma_max^2(A) / delta]`.
pub fn check_lp_bound(
    a: &SparseMatrix,
    g: &[f64],
    delta: f64,
    nonbasic: &[usize],
) -> Result<SpectralReport, SpectraError> {
    let m = a.nrows();
    if m > 100 {
        return Err(SpectraError::TooLarge(m));
    }
    let part = Partition {
        basic: (0..a.ncols()).filter(|j| !nonbasic.contains(j)).collect(),
        nonbasic: nonbasic.to_vec(),
        undecided: vec![],
    };
    let plan = SparsificationPlan::new(m, a.ncols(), &[], &[], part)?;
    let p = build_pne_chol(a, g, delta, &plan)?;
    let mmat = normal_matrix(a, g, delta)?.to_dense();
    let pinv = handle_inverse_dense(&p)?;
    let eigenvalues = preconditioned_eigs(&mmat, &pinv)?;

    let g_max = nonbasic.iter().map(|&j| g[j]).fold(0.0, f64::max);
    let hi = 1.0 + g_max * sigma_max(&a.to_dense()).powi(2) / delta;
    let interval = (1.0, hi);
    let unit_count = eigenvalues.iter().filter(|&&l| (l - 1.0).abs() <= UNIT_TOL).count();
    let guaranteed_unit_count = m.saturating_sub(nonbasic.len());
    let pass = eigenvalues.iter().all(|&l| within(&[interval], l))
        && unit_count >= guaranteed_unit_count;
    Ok(SpectralReport {
        eigenvalues,
        intervals: vec![interval],
        unit_count,
        guaranteed_unit_count,
        pass,
        clamped: false,
    })
}
