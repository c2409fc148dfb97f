//! Sparse saddle-point toolkit: block preconditioners for regularized
//! normal equations and KKT systems, a matching spectral verification
//! harness, and a regularized interior-point solver built on top.
//!
//! The systems of interest have the form
//!
//! ```text
//!     K = [ -(Q + rho*I)   A^T      ]        M = A G A^T + delta*I
//!         [      A         delta*I  ]        G = (Q + rho*I)^{-1}
//! ```
//!
//! with `A` an m-by-n constraint matrix (m <= n), `Q` positive
//! semidefinite and `delta, rho > 0`. Preconditioners are obtained by
//! dropping dense (or nearly inactive) columns of `A`, sparsifying dense
//! rows, and replacing `Q` by a block-diagonal approximation; the
//! `spectra` module checks the resulting eigenvalue enclosures.

pub mod factor;
pub mod guide;
pub mod ipm;
pub mod krylov;
pub mod mps;
pub mod precond;
pub mod qp;
pub mod sparse;
pub mod spectra;
pub mod synth;

pub use factor::{analyze_order, cholesky, ldlt, CholFactor, FactorError, LdlFactor};
pub use ipm::{
    newton_step, solve, step_lengths, update_regularization, Direction, IpmError, IpmTrace,
    IterRecord, SolveStatus, SolverOptions,
};
pub use krylov::{adaptive_tol, minres, pcg, KrylovResult, KrylovStatus};
pub use mps::{read_mps, standardize, write_report, MpsError, RawInstance};
pub use precond::{
    build_pas, build_pk, build_pne_chol, build_pne_ldl, density_plan, partition_variables,
    quasi_definite_pivot_policy, sparsify_hessian, HessianApprox, HessianApproxMode, Partition,
    PrecondError, PrecondHandle, PrecondKind, SparsificationPlan,
};
pub use qp::{
    assemble_saddle_matrix, barrier_diagonal, build_scaling, duality_measure, residuals,
    IterateState, ModelError, ProblemQP, SaddleOperator,
};
pub use sparse::{normal_matrix, Permutation, SparseError, SparseMatrix, Symmetry};
pub use spectra::{
    check_lp_bound, check_pas_intervals, check_pk_spectrum, check_pne_intervals, dense_eigs,
    SpectraError, SpectralReport,
};
pub use synth::{generate, write_mps, GenConfig, SynthError, SynthInstance};
