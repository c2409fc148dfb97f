//! Block preconditioners for the regularized normal equations and the
//! full saddle matrix.
//!
//! All of them start from a sparsification plan: a set of columns of
//! `A` to drop (dense columns plus variables judged inactive) and a set
//! of dense rows to sparsify. With `B = P_r A Ghat^{1/2} P_c` split
//! around the first `kc` columns and `kr` rows,
//!
//! ```text
//!     P_r Mhat P_r' = [ B11 B11' + B12 B12' + delta I          *               ]
//!                     [        *               B21 B21' + B22 B22' + delta I   ]
//! ```
//!
//! the normal-equations preconditioner keeps the leading block and
//! replaces the trailing one by `B22 B22' + delta I`, which factors
//! sparsely once the offending columns and rows are out of the picture.

use crate::factor::{self, CholFactor, FactorError, LdlFactor};
use crate::qp::assemble_saddle_matrix;
use crate::sparse::{normal_matrix, Permutation, SparseError, SparseMatrix, Symmetry};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrecondError {
    #[error("preconditioner input invalid: {0}")]
    BadInput(String),
    #[error("hessian approximation mode not supported here: {0}")]
    UnsupportedMode(String),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Variable classification by the scaling diagonal: `basic` entries
/// have large `g` (active at the optimum), `nonbasic` ones vanish like
/// the barrier parameter and are candidates for dropping.
#[derive(Debug, Clone, Default)]
pub struct Partition {
    pub basic: Vec<usize>,
    pub nonbasic: Vec<usize>,
    pub undecided: Vec<usize>,
}

/// Classifies variables: `g_j >= 1/(kappa mu)` is basic, `g_j <= kappa
/// mu` nonbasic, anything between stays undecided. When the two
/// thresholds overlap (large `mu`) basic wins, which keeps columns
/// rather than dropping them.
pub fn partition_variables(g: &[f64], mu: f64, kappa: f64) -> Result<Partition, PrecondError> {
    if !(mu > 0.0) || !(kappa > 0.0) {
        return Err(PrecondError::BadInput(format!(
            "partition thresholds need mu, kappa > 0, got mu={mu}, kappa={kappa}"
        )));
    }
    let lo = kappa * mu;
    let hi = 1.0 / (kappa * mu);
    let mut part = Partition::default();
    for (j, &gj) in g.iter().enumerate() {
        if gj >= hi {
            part.basic.push(j);
        } else if gj <= lo {
            part.nonbasic.push(j);
        } else {
            part.undecided.push(j);
        }
    }
    Ok(part)
}

/// Density screening on `A`: columns with at least `col_density * m`
/// stored entries and rows with at least `row_density * n`, densest
/// first, ties to the lower index, each list capped at `max_drop`.
pub fn density_plan(
    a: &SparseMatrix,
    col_density: f64,
    row_density: f64,
    max_drop: usize,
) -> Result<(Vec<usize>, Vec<usize>), PrecondError> {
    if !(0.0..=1.0).contains(&col_density) || !(0.0..=1.0).contains(&row_density) {
        return Err(PrecondError::BadInput(format!(
            "density thresholds must lie in [0, 1], got {col_density}, {row_density}"
        )));
    }
    let (per_col, per_row) = a.nnz_profile();
    let pick = |counts: &[usize], thr: f64| -> Vec<usize> {
        let mut hits: Vec<(usize, usize)> = counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c as f64 >= thr && c > 0)
            .map(|(i, &c)| (i, c))
            .collect();
        hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.into_iter().take(max_drop).map(|(i, _)| i).collect()
    };
    let cols = pick(&per_col, col_density * a.nrows() as f64);
    let rows = pick(&per_row, row_density * a.ncols() as f64);
    Ok((cols, rows))
}

/// Which columns get dropped and which rows get sparsified, with the
/// permutations that move them to the front.
#[derive(Debug, Clone)]
pub struct SparsificationPlan {
    ncols: usize,
    nrows: usize,
    /// Density-dropped columns followed by the remaining nonbasic ones.
    drop_cols: Vec<usize>,
    /// How many of `drop_cols` came from density screening.
    kc_density: usize,
    sparsify_rows: Vec<usize>,
    perm_c: Permutation,
    perm_r: Permutation,
    partition: Partition,
}

impl SparsificationPlan {
    pub fn new(
        nrows: usize,
        ncols: usize,
        dense_cols: &[usize],
        dense_rows: &[usize],
        partition: Partition,
    ) -> Result<Self, PrecondError> {
        let mut dropped = vec![false; ncols];
        let mut drop_cols = Vec::new();
        for &j in dense_cols {
            if j >= ncols {
                return Err(PrecondError::BadInput(format!("dense column {j} out of range")));
            }
            if !dropped[j] {
                dropped[j] = true;
                drop_cols.push(j);
            }
        }
        let kc_density = drop_cols.len();
        for &j in &partition.nonbasic {
            if j >= ncols {
                return Err(PrecondError::BadInput(format!("nonbasic column {j} out of range")));
            }
            if !dropped[j] {
                dropped[j] = true;
                drop_cols.push(j);
            }
        }
        let mut fwd_c = drop_cols.clone();
        fwd_c.extend((0..ncols).filter(|&j| !dropped[j]));
        let perm_c = Permutation::new(fwd_c)?;

        let mut sparsified = vec![false; nrows];
        let mut sparsify_rows = Vec::new();
        for &i in dense_rows {
            if i >= nrows {
                return Err(PrecondError::BadInput(format!("dense row {i} out of range")));
            }
            if !sparsified[i] {
                sparsified[i] = true;
                sparsify_rows.push(i);
            }
        }
        let mut fwd_r = sparsify_rows.clone();
        fwd_r.extend((0..nrows).filter(|&i| !sparsified[i]));
        let perm_r = Permutation::new(fwd_r)?;

        Ok(Self {
            ncols,
            nrows,
            drop_cols,
            kc_density,
            sparsify_rows,
            perm_c,
            perm_r,
            partition,
        })
    }

    /// Plan that drops and sparsifies nothing.
    pub fn trivial(nrows: usize, ncols: usize) -> Self {
        Self::new(nrows, ncols, &[], &[], Partition::default())
            .expect("empty plan is always valid")
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn drop_cols(&self) -> &[usize] {
        &self.drop_cols
    }

    /// Number of density-dropped columns (excludes nonbasic drops).
    pub fn kc_density(&self) -> usize {
        self.kc_density
    }

    /// Total dropped column count: the `kc` in the spectral bounds.
    pub fn drop_count(&self) -> usize {
        self.drop_cols.len()
    }

    pub fn sparsify_rows(&self) -> &[usize] {
        &self.sparsify_rows
    }

    pub fn kr(&self) -> usize {
        self.sparsify_rows.len()
    }

    pub fn perm_c(&self) -> &Permutation {
        &self.perm_c
    }

    pub fn perm_r(&self) -> &Permutation {
        &self.perm_r
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Columns that survive, ascending.
    pub fn kept_cols(&self) -> Vec<usize> {
        self.perm_c.forward()[self.drop_cols.len()..].to_vec()
    }

    /// Rows that are not sparsified, ascending.
    pub fn kept_rows(&self) -> Vec<usize> {
        self.perm_r.forward()[self.sparsify_rows.len()..].to_vec()
    }
}

/// How the Hessian block is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianApproxMode {
    /// `Diag(Q)` everywhere.
    DiagAll,
    /// `Diag` on the dropped block, the exact block on the kept one,
    /// coupling zeroed.
    DiagOnDropFullOnKeep,
    /// Supplied externally; builders accept it as-is.
    BlockDiagCustom,
}

/// Approximation `Qhat` of `Q = H + Theta^{-1}` (regularization not
/// included), block-diagonal with respect to the plan's column split.
#[derive(Debug, Clone)]
pub struct HessianApprox {
    qhat: SparseMatrix,
    mode: HessianApproxMode,
}

impl HessianApprox {
    /// Wraps an externally built approximation.
    pub fn custom(qhat: SparseMatrix) -> Result<Self, PrecondError> {
        if qhat.symmetry() != Symmetry::SymmetricLower {
            return Err(PrecondError::BadInput("qhat must be symmetric-lower".into()));
        }
        Ok(Self { qhat, mode: HessianApproxMode::BlockDiagCustom })
    }

    pub fn qhat(&self) -> &SparseMatrix {
        &self.qhat
    }

    pub fn mode(&self) -> HessianApproxMode {
        self.mode
    }

    /// True when every stored entry is diagonal.
    pub fn is_diagonal(&self) -> bool {
        (0..self.qhat.ncols()).all(|j| self.qhat.col(j).all(|(i, _)| i == j))
    }

    /// Diagonal of `(Qhat + rho I)^{-1}` when `Qhat` is diagonal.
    pub fn inverse_diagonal(&self, rho: f64) -> Result<Vec<f64>, PrecondError> {
        if !self.is_diagonal() {
            return Err(PrecondError::BadInput(
                "inverse_diagonal requires a diagonal approximation".into(),
            ));
        }
        Ok((0..self.qhat.ncols()).map(|j| 1.0 / (self.qhat.get(j, j) + rho)).collect())
    }
}

/// Builds `Qhat` from `Q = H + Diag(theta_inv)` according to `mode`.
pub fn sparsify_hessian(
    h: Option<&SparseMatrix>,
    theta_inv: &[f64],
    rho: f64,
    plan: &SparsificationPlan,
    mode: HessianApproxMode,
) -> Result<HessianApprox, PrecondError> {
    let n = plan.ncols();
    if theta_inv.len() != n {
        return Err(PrecondError::BadInput(format!(
            "theta_inv length {} vs {n} columns",
            theta_inv.len()
        )));
    }
    if !(rho > 0.0) {
        return Err(PrecondError::BadInput(format!("rho must be positive, got {rho}")));
    }
    if let Some(h) = h {
        if h.symmetry() != Symmetry::SymmetricLower || h.nrows() != n {
            return Err(PrecondError::BadInput(format!("H must be {n}x{n} symmetric-lower")));
        }
    }
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    match mode {
        HessianApproxMode::DiagAll => {
            let mut diag = theta_inv.to_vec();
            if let Some(h) = h {
                for j in 0..n {
                    diag[j] += h.get(j, j);
                }
            }
            for (j, d) in diag.into_iter().enumerate() {
                trip.push((j, j, d));
            }
        }
        HessianApproxMode::DiagOnDropFullOnKeep => {
            let mut is_dropped = vec![false; n];
            for &j in plan.drop_cols() {
                is_dropped[j] = true;
            }
            for (j, &t) in theta_inv.iter().enumerate() {
                trip.push((j, j, t));
            }
            if let Some(h) = h {
                for j in 0..n {
                    for (i, v) in h.col(j) {
                        if i == j {
                            trip.push((j, j, v));
                        } else if !is_dropped[i] && !is_dropped[j] {
                            trip.push((i, j, v));
                        }
                    }
                }
            }
        }
        HessianApproxMode::BlockDiagCustom => {
            return Err(PrecondError::UnsupportedMode(
                "block-diag-custom approximations are supplied, not derived".into(),
            ));
        }
    }
    let qhat = SparseMatrix::from_triplets(n, n, &trip, Symmetry::SymmetricLower)?;
    Ok(HessianApprox { qhat, mode })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondKind {
    PneChol,
    PneLdl,
    PasChol,
    PasLdl,
    Pk,
}

impl PrecondKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrecondKind::PneChol => "pne-chol",
            PrecondKind::PneLdl => "pne-ldl",
            PrecondKind::PasChol => "pas-chol",
            PrecondKind::PasLdl => "pas-ldl",
            PrecondKind::Pk => "pk",
        }
    }
}

#[derive(Debug)]
enum Inner {
    NeChol {
        /// Cholesky of the sparsified-row block (absent when kr = 0).
        row_block: Option<CholFactor>,
        /// Cholesky of `B22 B22' + delta I` (absent when kr = m).
        tail_block: Option<CholFactor>,
        perm_r: Permutation,
        kr: usize,
    },
    NeLdl {
        ldl: LdlFactor,
        kept: usize,
    },
    As {
        f_block: CholFactor,
        ne: Box<PrecondHandle>,
        n: usize,
    },
    K {
        ldl: LdlFactor,
    },
}

/// A built preconditioner: a positive definite operator with a uniform
/// `apply_inverse`. Normal-equations kinds act on vectors of length
/// `m`, the saddle kinds on length `n + m`.
#[derive(Debug)]
pub struct PrecondHandle {
    kind: PrecondKind,
    dim: usize,
    nnz_factors: usize,
    inner: Inner,
}

impl PrecondHandle {
    pub fn kind(&self) -> PrecondKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total stored entries across all triangular factors.
    pub fn nnz_factors(&self) -> usize {
        self.nnz_factors
    }

    /// Applies the inverse of the preconditioner.
    pub fn apply_inverse(&self, r: &[f64]) -> Result<Vec<f64>, PrecondError> {
        if r.len() != self.dim {
            return Err(PrecondError::BadInput(format!(
                "apply_inverse: vector length {} vs operator dimension {}",
                r.len(),
                self.dim
            )));
        }
        match &self.inner {
            Inner::NeChol { row_block, tail_block, perm_r, kr } => {
                let rp = perm_r.apply(r)?;
                let (head, tail) = rp.split_at(*kr);
                let mut out = Vec::with_capacity(r.len());
                match row_block {
                    Some(f) => out.extend(f.solve(head)?),
                    None => debug_assert!(head.is_empty()),
                }
                match tail_block {
                    Some(f) => out.extend(f.solve(tail)?),
                    None => debug_assert!(tail.is_empty()),
                }
                Ok(perm_r.apply_inverse(&out)?)
            }
            Inner::NeLdl { ldl, kept } => {
                let mut rhs = vec![0.0; kept + r.len()];
                rhs[*kept..].copy_from_slice(r);
                let w = ldl.solve(&rhs)?;
                Ok(w[*kept..].to_vec())
            }
            Inner::As { f_block, ne, n } => {
                let (v1, v2) = r.split_at(*n);
                let mut out = f_block.solve(v1)?;
                out.extend(ne.apply_inverse(v2)?);
                Ok(out)
            }
            Inner::K { ldl } => Ok(ldl.solve_abs(r)?),
        }
    }

    /// Diagnostic congruence for the factorization preconditioner:
    /// `|D|^{-1/2} L^{-1} P K P' L^{-T} |D|^{-1/2} v` with `K` applied
    /// through the callback. Only meaningful for kind `pk`.
    pub fn two_sided_apply(
        &self,
        apply_k: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        v: &[f64],
    ) -> Result<Vec<f64>, PrecondError> {
        let Inner::K { ldl } = &self.inner else {
            return Err(PrecondError::BadInput(
                "two_sided_apply is only available for the pk kind".into(),
            ));
        };
        let mut t = v.to_vec();
        ldl.d_abs_invsqrt(&mut t)?;
        let t = ldl.backward(&t)?;
        let kt = apply_k(&t);
        let mut out = ldl.forward(&kt)?;
        ldl.d_abs_invsqrt(&mut out)?;
        Ok(out)
    }

    /// Inertia of the factored matrix (negative, positive counts);
    /// available for the LDL-backed kinds.
    pub fn inertia(&self) -> Option<(usize, usize)> {
        match &self.inner {
            Inner::NeLdl { ldl, .. } | Inner::K { ldl } => Some(ldl.d().inertia()),
            _ => None,
        }
    }
}

/// Normal-equations preconditioner from Cholesky factors of the two
/// diagonal blocks. Needs a diagonal `Ghat` given by its entries.
pub fn build_pne_chol(
    a: &SparseMatrix,
    ghat: &[f64],
    delta: f64,
    plan: &SparsificationPlan,
) -> Result<PrecondHandle, PrecondError> {
    let (m, n) = (a.nrows(), a.ncols());
    if plan.nrows() != m || plan.ncols() != n {
        return Err(PrecondError::BadInput(format!(
            "plan shaped {}x{} against matrix {m}x{n}",
            plan.nrows(),
            plan.ncols()
        )));
    }
    if ghat.len() != n {
        return Err(PrecondError::BadInput(format!(
            "ghat length {} vs {n} columns",
            ghat.len()
        )));
    }
    if !(delta > 0.0) {
        return Err(PrecondError::BadInput(format!("delta must be positive, got {delta}")));
    }
    if ghat.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
        return Err(PrecondError::BadInput("ghat entries must be positive".into()));
    }
    let kr = plan.kr();
    let kept_rows = plan.kept_rows();
    let kept_cols = plan.kept_cols();
    let all_cols: Vec<usize> = (0..n).collect();

    let mut nnz_factors = 0usize;
    // Leading block keeps every column: B11 B11' + B12 B12' + delta I.
    let row_block = if kr > 0 {
        let a_rows = a.extract_submatrix(plan.sparsify_rows(), &all_cols)?;
        let m11 = normal_matrix(&a_rows, ghat, delta)?;
        let f = factor::cholesky(&m11, &factor::analyze_order(&m11)?)?;
        nnz_factors += f.nnz_l();
        Some(f)
    } else {
        None
    };
    // Trailing block drops the planned columns: B22 B22' + delta I.
    let tail_block = if kr < m {
        let a_tail = a.extract_submatrix(&kept_rows, &kept_cols)?;
        let g_tail: Vec<f64> = kept_cols.iter().map(|&j| ghat[j]).collect();
        let m22 = normal_matrix(&a_tail, &g_tail, delta)?;
        let f = factor::cholesky(&m22, &factor::analyze_order(&m22)?)?;
        nnz_factors += f.nnz_l();
        Some(f)
    } else {
        None
    };
    Ok(PrecondHandle {
        kind: PrecondKind::PneChol,
        dim: m,
        nnz_factors,
        inner: Inner::NeChol { row_block, tail_block, perm_r: plan.perm_r().clone(), kr },
    })
}

/// Pivot policy for the quasi-definite factorizations: 1x1 pivots with
/// an adaptive threshold; once the regularization falls below 1e-8 the
/// threshold is frozen and 2x2 pivots are allowed.
pub fn quasi_definite_pivot_policy(delta: f64, rho: f64) -> (f64, bool) {
    let floor = delta.min(rho);
    if floor <= 1e-8 {
        (1e-6, true)
    } else {
        (0.1 * floor.min(1e-4), false)
    }
}

/// Normal-equations preconditioner applied through an LDL^T
/// factorization of the quasi-definite companion
///
/// ```text
///     [ -(Q_BB + rho I)   A_B'    ]   solve   [w1]   [0]
///     [      A_B        delta I   ]           [w2] = [y]
/// ```
///
/// whose `w2` equals `(A_B (Q_BB + rho I)^{-1} A_B' + delta I)^{-1} y`
/// without ever forming that product.
pub fn build_pne_ldl(
    a: &SparseMatrix,
    h: Option<&SparseMatrix>,
    theta_inv: &[f64],
    rho: f64,
    delta: f64,
    plan: &SparsificationPlan,
) -> Result<PrecondHandle, PrecondError> {
    let (m, n) = (a.nrows(), a.ncols());
    if plan.nrows() != m || plan.ncols() != n {
        return Err(PrecondError::BadInput("plan does not match the matrix".into()));
    }
    if theta_inv.len() != n {
        return Err(PrecondError::BadInput("theta_inv length mismatch".into()));
    }
    if !(rho > 0.0) || !(delta > 0.0) {
        return Err(PrecondError::BadInput("regularization must be positive".into()));
    }
    let kept = plan.kept_cols();
    let a_b = a.extract_columns(&kept)?;
    let theta_b: Vec<f64> = kept.iter().map(|&j| theta_inv[j]).collect();
    let h_b = match h {
        Some(h) => {
            let mut pos = vec![usize::MAX; n];
            for (new, &old) in kept.iter().enumerate() {
                pos[old] = new;
            }
            let mut trip = Vec::new();
            for j in 0..n {
                for (i, v) in h.col(j) {
                    if pos[i] != usize::MAX && pos[j] != usize::MAX {
                        let (r, c) =
                            if pos[i] >= pos[j] { (pos[i], pos[j]) } else { (pos[j], pos[i]) };
                        trip.push((r, c, v));
                    }
                }
            }
            Some(SparseMatrix::from_triplets(
                kept.len(),
                kept.len(),
                &trip,
                Symmetry::SymmetricLower,
            )?)
        }
        None => None,
    };
    let t = assemble_saddle_matrix(&a_b, h_b.as_ref(), &theta_b, rho, delta)?;
    let (thr, allow_2x2) = quasi_definite_pivot_policy(delta, rho);
    let ldl = factor::ldlt(&t, thr, allow_2x2)?;
    let nnz_factors = ldl.nnz_l();
    Ok(PrecondHandle {
        kind: PrecondKind::PneLdl,
        dim: m,
        nnz_factors,
        inner: Inner::NeLdl { ldl, kept: kept.len() },
    })
}

/// Saddle preconditioner `blkdiag(Qhat + rho I, P_NE)`; the kind
/// follows the normal-equations handle that is plugged in.
pub fn build_pas(
    qhat: &HessianApprox,
    rho: f64,
    ne: PrecondHandle,
) -> Result<PrecondHandle, PrecondError> {
    let n = qhat.qhat().ncols();
    let m = ne.dim();
    let kind = match ne.kind() {
        PrecondKind::PneChol => PrecondKind::PasChol,
        PrecondKind::PneLdl => PrecondKind::PasLdl,
        other => {
            return Err(PrecondError::BadInput(format!(
                "pas wraps a normal-equations handle, got {}",
                other.as_str()
            )))
        }
    };
    if !(rho > 0.0) {
        return Err(PrecondError::BadInput(format!("rho must be positive, got {rho}")));
    }
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    for j in 0..n {
        for (i, v) in qhat.qhat().col(j) {
            trip.push((i, j, v));
        }
        trip.push((j, j, rho));
    }
    let f_mat = SparseMatrix::from_triplets(n, n, &trip, Symmetry::SymmetricLower)?;
    let f_block = factor::cholesky(&f_mat, &factor::analyze_order(&f_mat)?)?;
    let nnz_factors = f_block.nnz_l() + ne.nnz_factors();
    Ok(PrecondHandle {
        kind,
        dim: n + m,
        nnz_factors,
        inner: Inner::As { f_block, ne: Box::new(ne), n },
    })
}

/// Factorization preconditioner: LDL^T of the saddle matrix built from
/// `Qhat` and `A` with the dropped columns zeroed out, exposed as the
/// positive definite operator `L |D| L'`.
pub fn build_pk(
    a: &SparseMatrix,
    qhat: &HessianApprox,
    rho: f64,
    delta: f64,
    plan: &SparsificationPlan,
) -> Result<PrecondHandle, PrecondError> {
    let (m, n) = (a.nrows(), a.ncols());
    if plan.nrows() != m || plan.ncols() != n {
        return Err(PrecondError::BadInput("plan does not match the matrix".into()));
    }
    if !(rho > 0.0) || !(delta > 0.0) {
        return Err(PrecondError::BadInput("regularization must be positive".into()));
    }
    let mut keep = vec![true; n];
    for &j in plan.drop_cols() {
        keep[j] = false;
    }
    let mut trip = Vec::new();
    for j in 0..n {
        if keep[j] {
            for (i, v) in a.col(j) {
                trip.push((i, j, v));
            }
        }
    }
    let a_hat = SparseMatrix::from_triplets(m, n, &trip, Symmetry::General)?;
    let k_hat = assemble_saddle_matrix(&a_hat, Some(qhat.qhat()), &vec![0.0; n], rho, delta)?;
    let (thr, _) = quasi_definite_pivot_policy(delta, rho);
    // Eliminate the whole Hessian block before any constraint row, each
    // side in fill-reducing order. Interleaving the blocks would smear
    // a dropped column's perturbation across both pivot signs and cost
    // extra eigenvalue outliers.
    let base = factor::analyze_order(&k_hat)?;
    let mut fwd: Vec<usize> = base.forward().iter().copied().filter(|&v| v < n).collect();
    fwd.extend(base.forward().iter().copied().filter(|&v| v >= n));
    let order = Permutation::new(fwd)?;
    // 1x1 pivots only: the scaling |D|^{1/2} needs a diagonal D.
    let ldl = factor::ldlt_with_order(&k_hat, thr, false, &order)?;
    debug_assert_eq!(ldl.d().inertia(), (n, m));
    let nnz_factors = ldl.nnz_l();
    Ok(PrecondHandle {
        kind: PrecondKind::Pk,
        dim: n + m,
        nnz_factors,
        inner: Inner::K { ldl },
    })
}
