//! Problem data and iterate state for equality-constrained QPs
//!
//! ```text
//!     min  c'x + x'Hx/2    s.t.  Ax = b,  x_j >= 0 (j in I),
//!                                         x_j free  (j in F)
//! ```
//!
//! An interior-point iterate carries `(x, y, z)` with `z` the
//! multiplier of the nonnegativity constraints (`z_j = 0` on the free
//! set) plus the current regularization pair `(delta, rho)`.

use crate::sparse::{SparseError, SparseMatrix, Symmetry};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model inconsistency: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Immutable problem data in standard form.
#[derive(Debug, Clone)]
pub struct ProblemQP {
    a: SparseMatrix,
    h: SparseMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    ineq_set: Vec<usize>,
    free_set: Vec<usize>,
    name: String,
    /// Constant folded out of the objective during standardization;
    /// only reporting reads it.
    obj_constant: f64,
}

impl ProblemQP {
    /// `h = None` means a linear objective (an empty Hessian). The
    /// index sets must partition `0..n`.
    pub fn new(
        a: SparseMatrix,
        h: Option<SparseMatrix>,
        b: Vec<f64>,
        c: Vec<f64>,
        ineq_set: Vec<usize>,
        free_set: Vec<usize>,
        name: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let (m, n) = (a.nrows(), a.ncols());
        if a.symmetry() != Symmetry::General {
            return Err(ModelError::Inconsistent("constraint matrix must be general".into()));
        }
        let h = match h {
            Some(h) => {
                if h.symmetry() != Symmetry::SymmetricLower || h.nrows() != n {
                    return Err(ModelError::Inconsistent(format!(
                        "Hessian must be {n}x{n} symmetric-lower"
                    )));
                }
                h
            }
            None => SparseMatrix::from_triplets(n, n, &[], Symmetry::SymmetricLower)?,
        };
        if b.len() != m || c.len() != n {
            return Err(ModelError::Inconsistent(format!(
                "rhs/cost lengths ({}, {}) vs matrix {m}x{n}",
                b.len(),
                c.len()
            )));
        }
        let mut seen = vec![0u8; n];
        for &j in ineq_set.iter().chain(free_set.iter()) {
            if j >= n {
                return Err(ModelError::Inconsistent(format!("variable index {j} out of range")));
            }
            seen[j] += 1;
        }
        if seen.iter().any(|&s| s != 1) {
            return Err(ModelError::Inconsistent(
                "inequality and free sets must partition the variables".into(),
            ));
        }
        Ok(Self { a, h, b, c, ineq_set, free_set, name: name.into(), obj_constant: 0.0 })
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.obj_constant = constant;
        self
    }

    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn h(&self) -> &SparseMatrix {
        &self.h
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn ineq_set(&self) -> &[usize] {
        &self.ineq_set
    }

    pub fn free_set(&self) -> &[usize] {
        &self.free_set
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn obj_constant(&self) -> f64 {
        self.obj_constant
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }

    /// True when every stored Hessian entry sits on the diagonal; the
    /// solver may then reduce Newton systems to the normal equations.
    pub fn h_is_diagonal(&self) -> bool {
        for j in 0..self.h.ncols() {
            for (i, _) in self.h.col(j) {
                if i != j {
                    return false;
                }
            }
        }
        true
    }

    /// `c'x + x'Hx/2` plus the folded constant.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.h.spmv(x, false).expect("dimension checked at construction");
        let lin: f64 = self.c.iter().zip(x).map(|(c, x)| c * x).sum();
        let quad: f64 = hx.iter().zip(x).map(|(h, x)| h * x).sum();
        lin + 0.5 * quad + self.obj_constant
    }
}

/// Interior-point iterate. Positivity on the inequality set and
/// `z = 0` on the free set are enforced at construction; `mu` is
/// always `(x_I)' z_I / n` with `n` the total variable count.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub mu: f64,
    pub delta: f64,
    pub rho: f64,
}

impl IterateState {
    pub fn new(
        x: Vec<f64>,
        y: Vec<f64>,
        z: Vec<f64>,
        delta: f64,
        rho: f64,
        problem: &ProblemQP,
    ) -> Result<Self, ModelError> {
        let (m, n) = (problem.nrows(), problem.ncols());
        if x.len() != n || z.len() != n || y.len() != m {
            return Err(ModelError::Inconsistent("iterate dimensions do not match problem".into()));
        }
        if !(delta > 0.0) || !(rho > 0.0) {
            return Err(ModelError::Inconsistent(format!(
                "regularization must be positive, got delta={delta}, rho={rho}"
            )));
        }
        for &j in problem.ineq_set() {
            if !(x[j] > 0.0) || !(z[j] > 0.0) {
                return Err(ModelError::Inconsistent(format!(
                    "iterate not interior at variable {j}: x={}, z={}",
                    x[j], z[j]
                )));
            }
        }
        for &j in problem.free_set() {
            if z[j] != 0.0 {
                return Err(ModelError::Inconsistent(format!(
                    "free variable {j} carries a nonzero multiplier"
                )));
            }
        }
        let mu = duality_measure(&x, &z, problem);
        Ok(Self { x, y, z, mu, delta, rho })
    }
}

/// `(x_I)' z_I / n`; the divisor is the full variable count, not |I|.
pub fn duality_measure(x: &[f64], z: &[f64], problem: &ProblemQP) -> f64 {
    let n = problem.ncols();
    if n == 0 {
        return 0.0;
    }
    let dot: f64 = problem.ineq_set().iter().map(|&j| x[j] * z[j]).sum();
    dot / n as f64
}

/// The diagonal `G = (Q_diag + rho I)^{-1}`-style scaling the normal
/// equations use: `1/rho` on free variables, `1/(rho + z_j/x_j)` on the
/// inequality set.
#[derive(Debug, Clone)]
pub struct ScalingDiagonal {
    g: Vec<f64>,
}

impl ScalingDiagonal {
    pub fn g(&self) -> &[f64] {
        &self.g
    }
}

pub fn build_scaling(state: &IterateState, problem: &ProblemQP) -> Result<ScalingDiagonal, ModelError> {
    if !(state.rho > 0.0) {
        return Err(ModelError::Inconsistent(format!(
            "scaling requires rho > 0, got {}",
            state.rho
        )));
    }
    let n = problem.ncols();
    let mut g = vec![0.0; n];
    for &j in problem.free_set() {
        g[j] = 1.0 / state.rho;
    }
    for &j in problem.ineq_set() {
        if !(state.x[j] > 0.0) || !(state.z[j] > 0.0) {
            return Err(ModelError::Inconsistent(format!(
                "scaling requires interior x, z at variable {j}"
            )));
        }
        g[j] = 1.0 / (state.rho + state.z[j] / state.x[j]);
    }
    Ok(ScalingDiagonal { g })
}

/// Barrier contribution to the Hessian block: `z_j/x_j` on the
/// inequality set, zero on free variables.
pub fn barrier_diagonal(state: &IterateState, problem: &ProblemQP) -> Vec<f64> {
    let mut theta_inv = vec![0.0; problem.ncols()];
    for &j in problem.ineq_set() {
        theta_inv[j] = state.z[j] / state.x[j];
    }
    theta_inv
}

/// The regularized saddle operator
///
/// ```text
///     K = [ -(H + Theta^{-1} + rho I)   A'      ]
///         [            A                delta I ]
/// ```
///
/// applied matrix-free; `theta_inv` is zero on the free set.
#[derive(Debug)]
pub struct SaddleOperator<'a> {
    problem: &'a ProblemQP,
    theta_inv: Vec<f64>,
    delta: f64,
    rho: f64,
}

impl<'a> SaddleOperator<'a> {
    pub fn new(
        problem: &'a ProblemQP,
        theta_inv: Vec<f64>,
        delta: f64,
        rho: f64,
    ) -> Result<Self, ModelError> {
        if theta_inv.len() != problem.ncols() {
            return Err(ModelError::Inconsistent("theta_inv length mismatch".into()));
        }
        if !(delta > 0.0) || !(rho > 0.0) {
            return Err(ModelError::Inconsistent("regularization must be positive".into()));
        }
        for &j in problem.free_set() {
            if theta_inv[j] != 0.0 {
                return Err(ModelError::Inconsistent(format!(
                    "free variable {j} carries a barrier term"
                )));
            }
        }
        Ok(Self { problem, theta_inv, delta, rho })
    }

    pub fn dim(&self) -> usize {
        self.problem.ncols() + self.problem.nrows()
    }

    /// `K v` for `v = (v1, v2)` of length `n + m`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, ModelError> {
        let n = self.problem.ncols();
        let m = self.problem.nrows();
        if v.len() != n + m {
            return Err(ModelError::Inconsistent(format!(
                "saddle operator of dimension {} applied to vector of length {}",
                n + m,
                v.len()
            )));
        }
        let (v1, v2) = v.split_at(n);
        let hv = self.problem.h().spmv(v1, false)?;
        let atv2 = self.problem.a().spmv(v2, true)?;
        let av1 = self.problem.a().spmv(v1, false)?;
        let mut out = vec![0.0; n + m];
        for j in 0..n {
            out[j] = -(hv[j] + (self.theta_inv[j] + self.rho) * v1[j]) + atv2[j];
        }
        for i in 0..m {
            out[n + i] = av1[i] + self.delta * v2[i];
        }
        Ok(out)
    }
}

/// Explicit symmetric-lower assembly of the same saddle matrix, for
/// factorization-based preconditioners.
pub fn assemble_saddle_matrix(
    a: &SparseMatrix,
    h: Option<&SparseMatrix>,
    theta_inv: &[f64],
    rho: f64,
    delta: f64,
) -> Result<SparseMatrix, SparseError> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    if let Some(h) = h {
        for j in 0..n {
            for (i, v) in h.col(j) {
                trip.push((i, j, -v));
            }
        }
    }
    for j in 0..n {
        trip.push((j, j, -(theta_inv[j] + rho)));
    }
    for j in 0..n {
        for (i, v) in a.col(j) {
            trip.push((n + i, j, v));
        }
    }
    for i in 0..m {
        trip.push((n + i, n + i, delta));
    }
    SparseMatrix::from_triplets(n + m, n + m, &trip, Symmetry::SymmetricLower)
}

/// Residual triple of an iterate: `primal = Ax - b`,
/// `dual = c + Hx - A'y - z`, and the duality measure.
#[derive(Debug, Clone)]
pub struct Residuals {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub compl: f64,
}

pub fn residuals(state: &IterateState, problem: &ProblemQP) -> Result<Residuals, ModelError> {
    let ax = problem.a().spmv(&state.x, false)?;
    let primal: Vec<f64> = ax.iter().zip(problem.b()).map(|(a, b)| a - b).collect();
    let hx = problem.h().spmv(&state.x, false)?;
    let aty = problem.a().spmv(&state.y, true)?;
    let dual: Vec<f64> = (0..problem.ncols())
        .map(|j| problem.c()[j] + hx[j] - aty[j] - state.z[j])
        .collect();
    Ok(Residuals { primal, dual, compl: state.mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_var_problem() -> ProblemQP {
        let a = SparseMatrix::from_triplets(1, 1, &[(0, 0, 3.0)], Symmetry::General).unwrap();
        ProblemQP::new(a, None, vec![3.0], vec![1.0], vec![0], vec![], "one").unwrap()
    }

    #[test]
    fn partition_must_cover_all_variables() {
        let a = SparseMatrix::identity(2);
        let err = ProblemQP::new(a.clone(), None, vec![1.0; 2], vec![0.0; 2], vec![0], vec![], "p");
        assert!(err.is_err());
        let err = ProblemQP::new(a, None, vec![1.0; 2], vec![0.0; 2], vec![0, 1], vec![1], "p");
        assert!(err.is_err());
    }

    #[test]
    fn mu_divides_by_total_variable_count() {
        let a = SparseMatrix::identity(2);
        let p = ProblemQP::new(a, None, vec![1.0; 2], vec![0.0; 2], vec![0], vec![1], "p").unwrap();
        let s = IterateState::new(vec![2.0, -5.0], vec![0.0; 2], vec![3.0, 0.0], 1.0, 1.0, &p)
            .unwrap();
        // Only variable 0 counts in the product, divisor is n = 2.
        assert_abs_diff_eq!(s.mu, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn iterate_rejects_boundary_and_bad_multiplier() {
        let a = SparseMatrix::identity(2);
        let p = ProblemQP::new(a, None, vec![1.0; 2], vec![0.0; 2], vec![0], vec![1], "p").unwrap();
        assert!(IterateState::new(vec![0.0, 1.0], vec![0.0; 2], vec![1.0, 0.0], 1.0, 1.0, &p)
            .is_err());
        assert!(IterateState::new(vec![1.0, 1.0], vec![0.0; 2], vec![1.0, 0.5], 1.0, 1.0, &p)
            .is_err());
        assert!(IterateState::new(vec![1.0, 1.0], vec![0.0; 2], vec![1.0, 0.0], 0.0, 1.0, &p)
            .is_err());
    }

    #[test]
    fn scaling_values() {
        let a = SparseMatrix::identity(2);
        let p = ProblemQP::new(a, None, vec![1.0; 2], vec![0.0; 2], vec![0], vec![1], "p").unwrap();
        let s = IterateState::new(vec![4.0, 0.0], vec![0.0; 2], vec![1.0, 0.0], 0.5, 0.5, &p)
            .unwrap();
        let g = build_scaling(&s, &p).unwrap();
        assert_abs_diff_eq!(g.g()[0], 1.0 / (0.5 + 0.25), epsilon = 1e-15);
        assert_abs_diff_eq!(g.g()[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn saddle_apply_hand_example() {
        // n = m = 1, H = 2, theta_inv = 0, rho = 1, delta = 0.5, A = [3]:
        // K = [[-3, 3], [3, 0.5]], K (1, 1) = (0, 3.5).
        let a = SparseMatrix::from_triplets(1, 1, &[(0, 0, 3.0)], Symmetry::General).unwrap();
        let h = SparseMatrix::from_triplets(1, 1, &[(0, 0, 2.0)], Symmetry::SymmetricLower)
            .unwrap();
        let p = ProblemQP::new(a, Some(h), vec![3.0], vec![1.0], vec![0], vec![], "k").unwrap();
        let op = SaddleOperator::new(&p, vec![0.0], 0.5, 1.0).unwrap();
        let out = op.apply(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(out[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 3.5, epsilon = 1e-15);
    }

    #[test]
    fn saddle_operator_matches_assembled_matrix() {
        let a = SparseMatrix::from_triplets(
            2,
            3,
            &[(0, 0, 1.0), (0, 2, -1.0), (1, 1, 2.0), (1, 2, 0.5)],
            Symmetry::General,
        )
        .unwrap();
        let h = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (2, 0, 0.5), (2, 2, 2.0)],
            Symmetry::SymmetricLower,
        )
        .unwrap();
        let p = ProblemQP::new(a, Some(h), vec![1.0; 2], vec![0.0; 3], vec![0, 2], vec![1], "k")
            .unwrap();
        let theta_inv = vec![0.5, 0.0, 2.0];
        let op = SaddleOperator::new(&p, theta_inv.clone(), 0.25, 0.75).unwrap();
        let kmat = assemble_saddle_matrix(p.a(), Some(p.h()), &theta_inv, 0.75, 0.25).unwrap();
        let v = [1.0, -2.0, 0.5, 3.0, -1.0];
        let via_op = op.apply(&v).unwrap();
        let via_mat = kmat.spmv(&v, false).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(via_op[i], via_mat[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn residuals_vanish_at_feasible_kkt_point() {
        // A = [3], b = 3, c = 1: x = 1, y chosen so c - A'y - z = 0 with
        // z = 0.5: y = (c - z)/3 = 1/6.
        let p = one_var_problem();
        let s = IterateState::new(vec![1.0], vec![1.0 / 6.0], vec![0.5], 1.0, 1.0, &p).unwrap();
        let r = residuals(&s, &p).unwrap();
        assert_abs_diff_eq!(r.primal[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.dual[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.compl, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn h_diagonal_detection() {
        let a = SparseMatrix::identity(2);
        let h_diag = SparseMatrix::from_triplets(2, 2, &[(1, 1, 2.0)], Symmetry::SymmetricLower)
            .unwrap();
        let p = ProblemQP::new(
            a.clone(),
            Some(h_diag),
            vec![1.0; 2],
            vec![0.0; 2],
            vec![0, 1],
            vec![],
            "d",
        )
        .unwrap();
        assert!(p.h_is_diagonal());
        let h_full = SparseMatrix::from_triplets(2, 2, &[(1, 0, 1.0)], Symmetry::SymmetricLower)
            .unwrap();
        let p = ProblemQP::new(a, Some(h_full), vec![1.0; 2], vec![0.0; 2], vec![0, 1], vec![], "f")
            .unwrap();
        assert!(!p.h_is_diagonal());
    }
}
