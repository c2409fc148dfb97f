//! Reproducible random instances with a known optimum.
//!
//! Instances are built backwards from a strictly complementary KKT
//! point: pick `x* >= 0` and `z* >= 0` with disjoint supports and a
//! free `y*`, then set `b = A x*` and `c = A'y* + z* - H x*`. For
//! positive semidefinite `H` that point is a global optimum, so the
//! optimal value is known exactly without solving anything.

use crate::qp::ProblemQP;
use crate::sparse::{SparseMatrix, Symmetry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad generator shape: {0}")]
    BadShape(String),
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub m: usize,
    pub n: usize,
    /// Target fraction of nonzeros per regular column of `A`.
    pub density: f64,
    /// Columns filled to ~90%, placed at the lowest indices.
    pub dense_cols: usize,
    /// Rows filled to ~90%.
    pub dense_rows: usize,
    /// Emit a banded positive definite Hessian.
    pub quadratic: bool,
    /// Magnitude spread in decades; 0 keeps all entries near 1.
    pub spread_decades: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            m: 10,
            n: 20,
            density: 0.2,
            dense_cols: 0,
            dense_rows: 0,
            quadratic: false,
            spread_decades: 0.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.m == 0 || self.n == 0 {
            return Err(SynthError::BadShape("m and n must be positive".into()));
        }
        if self.m > self.n {
            return Err(SynthError::BadShape(format!(
                "m = {} exceeds n = {}; constraints must not outnumber variables",
                self.m, self.n
            )));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(SynthError::BadShape(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        if self.dense_cols > self.n {
            return Err(SynthError::BadShape("more dense columns than columns".into()));
        }
        if self.dense_rows > self.m {
            return Err(SynthError::BadShape("more dense rows than rows".into()));
        }
        if !(self.spread_decades >= 0.0) || !self.spread_decades.is_finite() {
            return Err(SynthError::BadShape("spread_decades must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// A generated problem together with the KKT point it was built from.
#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub problem: ProblemQP,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub z_star: Vec<f64>,
    pub objective: f64,
}

fn magnitude(rng: &mut ChaCha8Rng, spread_decades: f64) -> f64 {
    if spread_decades == 0.0 {
        1.0
    } else {
        10f64.powf(rng.gen_range(-0.5 * spread_decades..=0.5 * spread_decades))
    }
}

pub fn generate(config: &GenConfig) -> Result<SynthInstance, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (m, n) = (config.m, config.n);

    // every column gets an anchor entry so no column is empty; the
    // wrap-around also covers every row because m <= n
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    let heavy = ((0.9 * m as f64).ceil() as usize).max(1);
    let per_col = ((config.density * m as f64).ceil() as usize).clamp(1, m);
    for j in 0..n {
        if j < config.dense_cols {
            for i in 0..heavy {
                trip.push((i, j, rng.gen_range(0.5..2.0) * magnitude(&mut rng, config.spread_decades)));
            }
            continue;
        }
        trip.push((
            j % m,
            j,
            rng.gen_range(0.5..2.0) * magnitude(&mut rng, config.spread_decades),
        ));
        for _ in 1..per_col {
            trip.push((
                rng.gen_range(0..m),
                j,
                rng.gen_range(-1.0..1.0) * magnitude(&mut rng, config.spread_decades),
            ));
        }
    }
    let heavy_cols = ((0.9 * n as f64).ceil() as usize).max(1);
    for i in 0..config.dense_rows {
        for j in config.dense_cols..heavy_cols.max(config.dense_cols) {
            trip.push((
                i,
                j,
                rng.gen_range(-1.0..1.0) * magnitude(&mut rng, config.spread_decades),
            ));
        }
    }
    let a = SparseMatrix::from_triplets(m, n, &trip, Symmetry::General)
        .expect("generated indices are in range");

    let h = if config.quadratic {
        // strictly diagonally dominant band, hence positive definite
        let mut ht = Vec::with_capacity(2 * n);
        for j in 0..n {
            ht.push((j, j, rng.gen_range(1.0..2.0)));
            if j + 1 < n {
                ht.push((j + 1, j, rng.gen_range(-0.4..0.4)));
            }
        }
        Some(
            SparseMatrix::from_triplets(n, n, &ht, Symmetry::SymmetricLower)
                .expect("band indices are in range"),
        )
    } else {
        None
    };

    // strictly complementary optimum: each variable is positive in
    // exactly one of x*, z*
    let mut x_star = vec![0.0; n];
    let mut z_star = vec![0.0; n];
    for j in 0..n {
        if rng.gen_bool(0.5) {
            x_star[j] = rng.gen_range(0.5..2.0);
        } else {
            z_star[j] = rng.gen_range(0.5..2.0);
        }
    }
    let y_star: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let b = a.spmv(&x_star, false).expect("shape fixed");
    let aty = a.spmv(&y_star, true).expect("shape fixed");
    let hx = match &h {
        Some(h) => h.spmv(&x_star, false).expect("shape fixed"),
        None => vec![0.0; n],
    };
    let c: Vec<f64> = (0..n).map(|j| aty[j] + z_star[j] - hx[j]).collect();

    let name = format!("synth-{}", config.seed);
    let problem = ProblemQP::new(a, h, b, c, (0..n).collect(), vec![], name)
        .expect("generated data is well formed");
    let objective = problem.objective(&x_star);
    Ok(SynthInstance { problem, x_star, y_star, z_star, objective })
}

/// Renders a standard-form problem as MPS/QPS text. All rows are
/// equalities; free variables get FR bound records; a Hessian emits a
/// QUADOBJ section. Output is deterministic for a given problem.
pub fn write_mps(problem: &ProblemQP) -> String {
    let (m, n) = (problem.nrows(), problem.ncols());
    let mut out = String::new();
    out.push_str(&format!("NAME {}\n", problem.name()));
    out.push_str("ROWS\n N OBJ\n");
    for i in 0..m {
        out.push_str(&format!(" E R{i:06}\n"));
    }
    out.push_str("COLUMNS\n");
    for j in 0..n {
        // the objective entry doubles as the declaration, so emit it
        // even when zero
        out.push_str(&format!(" X{j:06} OBJ {}\n", problem.c()[j]));
        let col = problem.a().col(j);
        for (i, v) in col {
            out.push_str(&format!(" X{j:06} R{i:06} {v}\n"));
        }
    }
    out.push_str("RHS\n");
    for i in 0..m {
        out.push_str(&format!(" RHS R{i:06} {}\n", problem.b()[i]));
    }
    if !problem.free_set().is_empty() {
        out.push_str("BOUNDS\n");
        for &j in problem.free_set() {
            out.push_str(&format!(" FR BND X{j:06}\n"));
        }
    }
    if problem.h().nnz() > 0 {
        out.push_str("QUADOBJ\n");
        for j in 0..n {
            for (i, v) in problem.h().col(j) {
                out.push_str(&format!(" X{i:06} X{j:06} {v}\n"));
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}
