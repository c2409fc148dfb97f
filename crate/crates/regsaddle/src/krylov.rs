//! Matrix-free Krylov solvers: PCG for positive definite systems and
//! MINRES for symmetric indefinite ones, both with a positive definite
//! preconditioner supplied as a callback.
//!
//! Iterations track a residual recurrence; when the recurrence signals
//! convergence the true residual is recomputed once and must confirm it
//! (otherwise the solver restarts from the current iterate). Each
//! iteration spends exactly one operator apply and one preconditioner
//! apply; initialization and the final check add one more of each.

/// Outcome of a Krylov solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovStatus {
    Converged,
    MaxIter,
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct KrylovResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// True relative residual `|b - Ax| / |b|` at exit.
    pub final_relres: f64,
    pub status: KrylovStatus,
}

/// Per-iteration `(iteration, relative residual)` sink for logging.
pub type IterSink<'a> = Option<&'a mut dyn FnMut(usize, f64)>;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Adaptive Krylov tolerance for interior-point steps: tighter as the
/// barrier parameter shrinks, relative to the right-hand side norm,
/// never looser than 1e-3 and never tighter than the outer tolerance.
pub fn adaptive_tol(mu: f64, rhs_norm: f64, tol: f64) -> f64 {
    (1e-3f64).min((1e-1 * mu).max(tol)) / rhs_norm.max(1.0)
}

/// Preconditioned conjugate gradients on `A x = b` with `A` and the
/// preconditioner inverse given as callbacks. Breaks down when a
/// search direction has nonpositive curvature (`A` not positive
/// definite on the Krylov space).
pub fn pcg(
    apply_a: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    apply_pinv: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    mut sink: IterSink,
) -> KrylovResult {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return KrylovResult {
            solution: x,
            iterations: 0,
            final_relres: 0.0,
            status: KrylovStatus::Converged,
        };
    }
    let mut r = b.to_vec();
    let mut iterations = 0usize;
    loop {
        // (Re)start the recurrence from the current residual.
        let mut z = apply_pinv(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut candidate = false;
        while iterations < max_iter {
            let ap = apply_a(&p);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                let relres = norm(&r) / bnorm;
                return KrylovResult {
                    solution: x,
                    iterations,
                    final_relres: relres,
                    status: KrylovStatus::Breakdown,
                };
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            z = apply_pinv(&r);
            let rz_new = dot(&r, &z);
            let relres = norm(&r) / bnorm;
            if let Some(s) = sink.as_deref_mut() {
                s(iterations, relres);
            }
            if relres <= tol {
                candidate = true;
                break;
            }
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        // Recurrence-level convergence (or exhaustion): confirm against
        // the true residual before accepting.
        let ax = apply_a(&x);
        let rtrue: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let relres = norm(&rtrue) / bnorm;
        if relres <= tol {
            return KrylovResult {
                solution: x,
                iterations,
                final_relres: relres,
                status: KrylovStatus::Converged,
            };
        }
        if iterations >= max_iter || !candidate {
            return KrylovResult {
                solution: x,
                iterations,
                final_relres: relres,
                status: KrylovStatus::MaxIter,
            };
        }
        r = rtrue;
    }
}

/// Preconditioned MINRES on symmetric `A x = b`. The preconditioner
/// must be symmetric positive definite; the tracked quantity is the
/// preconditioned residual norm, which never increases. A vanishing
/// Lanczos vector either certifies the exact solution or reports
/// breakdown.
pub fn minres(
    apply_a: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    apply_pinv: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    mut sink: IterSink,
) -> KrylovResult {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return KrylovResult {
            solution: x,
            iterations: 0,
            final_relres: 0.0,
            status: KrylovStatus::Converged,
        };
    }
    let mut iterations = 0usize;
    let mut breakdown = false;
    'outer: loop {
        let ax = if iterations == 0 {
            vec![0.0; n]
        } else {
            apply_a(&x)
        };
        let mut r1: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let mut y = apply_pinv(&r1);
        let beta1_sq = dot(&r1, &y);
        if beta1_sq < 0.0 || !beta1_sq.is_finite() {
            breakdown = true;
            break 'outer;
        }
        let beta1 = beta1_sq.sqrt();
        if beta1 == 0.0 {
            break 'outer;
        }
        let mut r2 = r1.clone();
        let mut oldb = 0.0f64;
        let mut beta = beta1;
        let mut dbar = 0.0f64;
        let mut epsln = 0.0f64;
        let mut phibar = beta1;
        let mut cs = -1.0f64;
        let mut sn = 0.0f64;
        let mut w = vec![0.0f64; n];
        let mut w2 = vec![0.0f64; n];
        let mut candidate = false;
        while iterations < max_iter {
            let s = 1.0 / beta;
            let v: Vec<f64> = y.iter().map(|yi| yi * s).collect();
            let mut ynew = apply_a(&v);
            if iterations > 0 || oldb > 0.0 {
                // r1 still holds the Lanczos vector from two steps ago.
                if oldb > 0.0 {
                    let f = beta / oldb;
                    for i in 0..n {
                        ynew[i] -= f * r1[i];
                    }
                }
            }
            let alfa = dot(&v, &ynew);
            let f = alfa / beta;
            for i in 0..n {
                ynew[i] -= f * r2[i];
            }
            r1 = std::mem::replace(&mut r2, ynew);
            y = apply_pinv(&r2);
            oldb = beta;
            let beta_sq = dot(&r2, &y);
            if beta_sq < 0.0 || !beta_sq.is_finite() {
                breakdown = true;
                break 'outer;
            }
            beta = beta_sq.sqrt();
            iterations += 1;

            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = gbar.hypot(beta).max(f64::MIN_POSITIVE);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar *= sn;

            let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
            w = (0..n)
                .map(|i| (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma)
                .collect();
            for i in 0..n {
                x[i] += phi * w[i];
            }
            let relres_p = phibar / beta1;
            if let Some(snk) = sink.as_deref_mut() {
                snk(iterations, relres_p);
            }
            if relres_p <= tol {
                candidate = true;
                break;
            }
            if beta == 0.0 {
                // Invariant subspace reached: the iterate is exact up to
                // roundoff; confirm below.
                candidate = true;
                breakdown = true;
                break;
            }
        }
        // Confirm with the true residual; restart if the recurrence
        // drifted, unless the budget is spent.
        let ax = apply_a(&x);
        let rtrue: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let relres = norm(&rtrue) / bnorm;
        if relres <= tol {
            return KrylovResult {
                solution: x,
                iterations,
                final_relres: relres,
                status: KrylovStatus::Converged,
            };
        }
        if iterations >= max_iter {
            return KrylovResult {
                solution: x,
                iterations,
                final_relres: relres,
                status: KrylovStatus::MaxIter,
            };
        }
        if breakdown || !candidate {
            return KrylovResult {
                solution: x,
                iterations,
                final_relres: relres,
                status: KrylovStatus::Breakdown,
            };
        }
    }
    // Degenerate exits before the first iteration.
    let ax = apply_a(&x);
    let rtrue: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let relres = norm(&rtrue) / bnorm;
    KrylovResult {
        solution: x,
        iterations,
        final_relres: relres,
        status: if breakdown {
            KrylovStatus::Breakdown
        } else if relres <= tol {
            KrylovStatus::Converged
        } else {
            KrylovStatus::MaxIter
        },
    }
}
