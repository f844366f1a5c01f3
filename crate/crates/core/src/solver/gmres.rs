//! Full (non-restarted) GMRES with right preconditioning.
//!
//! Solves `A x = b` by iterating on `A P y = r₀`, `x = x₀ + P y`. The Arnoldi
//! basis uses modified Gram–Schmidt with one reorthogonalization pass and the
//! Hessenberg least-squares problem is reduced by Givens rotations. Since the
//! preconditioner acts on the right, the monitored residual is the true
//! residual `‖b − A x‖₂ / ‖b‖₂`.
//!
//! There are no periodic restarts. The only restart happens when the
//! least-squares estimate reaches the tolerance but the recomputed true
//! residual does not, which occurs near the attainable accuracy; the solver
//! then continues from the current iterate as long as that still reduces the
//! true residual.

use nalgebra::DMatrix;

use crate::error::{Error, NotConverged, Result};

use super::CscMatrix;

/// A square linear map on `R^n`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is fully overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xv = nalgebra::DVectorView::from_slice(x, x.len());
        let mut yv = nalgebra::DVectorViewMut::from_slice(y, self.nrows());
        yv.gemv(1.0, self, &xv, 0.0);
    }
}

impl LinearOperator for CscMatrix {
    fn dim(&self) -> usize {
        self.shape().0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y).expect("operator shape");
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator(pub usize);

impl LinearOperator for IdentityOperator {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Wraps a closure `(x, y) ↦ y = A x` as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    /// Target relative residual `‖b − A x‖₂ / ‖b‖₂`.
    pub tol: f64,
    /// Maximum Krylov dimension (no restarts).
    pub maxit: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { tol: 1e-6, maxit: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresReport {
    /// Arnoldi steps taken.
    pub iterations: usize,
    /// Relative residual before the first step and after each step (the
    /// least-squares estimate).
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// True relative residual of the returned iterate.
    pub final_relres: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn residual(a: &dyn LinearOperator, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; b.len()];
    a.apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    r
}

/// Runs GMRES on `A x = b` from `x0`, optionally with right preconditioner
/// `P`. Returns the iterate and its report, or [`Error::NotConverged`] carrying
/// the best iterate when `maxit` steps do not reach `tol`.
pub fn gmres(
    a: &dyn LinearOperator,
    precond: Option<&dyn LinearOperator>,
    b: &[f64],
    x0: &[f64],
    opts: &GmresOptions,
) -> Result<(Vec<f64>, GmresReport)> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: b.len() });
    }
    if x0.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: x0.len() });
    }
    if let Some(p) = precond {
        if p.dim() != n {
            return Err(Error::ShapeMismatch { expected: n, got: p.dim() });
        }
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("GMRES tolerance must be positive, got {}", opts.tol)));
    }

    let bnorm = norm(b);
    if bnorm == 0.0 {
        let report = GmresReport { iterations: 0, residual_history: vec![0.0], converged: true, final_relres: 0.0 };
        return Ok((vec![0.0; n], report));
    }

    let mut x = x0.to_vec();
    let r0 = residual(a, b, &x);
    let beta = norm(&r0);
    let mut history = vec![beta / bnorm];
    if beta / bnorm <= opts.tol {
        let report = GmresReport { iterations: 0, residual_history: history, converged: true, final_relres: beta / bnorm };
        return Ok((x, report));
    }

    let mut total = 0;
    let mut cycle_start = beta / bnorm;
    let mut r = r0;
    let mut beta = beta;
    loop {
        let cycle = arnoldi_cycle(a, precond, b, &x, r, beta, bnorm, opts.tol, opts.maxit - total, &mut history);
        total += cycle.steps;
        x = cycle.x;
        let true_rel = cycle.true_relres;
        if true_rel <= opts.tol {
            let report = GmresReport { iterations: total, residual_history: history, converged: true, final_relres: true_rel };
            return Ok((x, report));
        }
        // the Arnoldi estimate claimed convergence but the true residual did
        // not follow; restart from the current iterate while that still helps
        let progress = true_rel < 0.5 * cycle_start;
        if !cycle.estimate_converged || total >= opts.maxit || !progress {
            let report =
                GmresReport { iterations: total, residual_history: history, converged: false, final_relres: true_rel };
            return Err(Error::NotConverged(Box::new(NotConverged { solution: x, report })));
        }
        cycle_start = true_rel;
        r = residual(a, b, &x);
        beta = norm(&r);
    }
}

struct Cycle {
    x: Vec<f64>,
    steps: usize,
    true_relres: f64,
    estimate_converged: bool,
}

/// One Arnoldi cycle of at most `m` steps from `x0` with residual `r0`.
#[allow(clippy::too_many_arguments)]
fn arnoldi_cycle(
    a: &dyn LinearOperator,
    precond: Option<&dyn LinearOperator>,
    b: &[f64],
    x0: &[f64],
    r0: Vec<f64>,
    beta: f64,
    bnorm: f64,
    tol: f64,
    m: usize,
    history: &mut Vec<f64>,
) -> Cycle {
    let n = b.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    basis.push(r0.iter().map(|v| v / beta).collect());
    // column-major upper Hessenberg, rotated in place
    let mut hess: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut cs: Vec<f64> = Vec::with_capacity(m);
    let mut sn: Vec<f64> = Vec::with_capacity(m);
    let mut g = vec![0.0; m + 1];
    g[0] = beta;

    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];

    let form_solution = |hess: &[Vec<f64>], g: &[f64], basis: &[Vec<f64>], k: usize| -> Vec<f64> {
        // back substitution R y = g
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (j, yj) in y.iter().enumerate().skip(i + 1) {
                s -= hess[j][i] * yj;
            }
            y[i] = s / hess[i][i];
        }
        let mut u = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &basis[j], &mut u);
        }
        let mut xk = x0.to_vec();
        match precond {
            Some(p) => {
                let mut pu = vec![0.0; n];
                p.apply(&u, &mut pu);
                axpy(1.0, &pu, &mut xk);
            }
            None => axpy(1.0, &u, &mut xk),
        }
        xk
    };

    let mut last = Cycle { x: x0.to_vec(), steps: 0, true_relres: beta / bnorm, estimate_converged: false };
    for j in 0..m {
        match precond {
            Some(p) => {
                p.apply(&basis[j], &mut z);
                a.apply(&z, &mut w);
            }
            None => a.apply(&basis[j], &mut w),
        }
        let wnorm0 = norm(&w);
        let mut h = vec![0.0; j + 2];
        for _pass in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[i] += hij;
                axpy(-hij, v, &mut w);
            }
        }
        let hnext = norm(&w);
        h[j + 1] = hnext;
        let breakdown = hnext <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE);

        for i in 0..j {
            let t = cs[i] * h[i] + sn[i] * h[i + 1];
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
            h[i] = t;
        }
        let denom = h[j].hypot(h[j + 1]);
        let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[j] / denom, h[j + 1] / denom) };
        h[j] = c * h[j] + s * h[j + 1];
        h[j + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        g[j + 1] = -s * g[j];
        g[j] *= c;
        hess.push(h);

        let estimate = g[j + 1].abs() / bnorm;
        history.push(estimate);

        let estimate_converged = estimate <= tol;
        if estimate_converged || breakdown || j + 1 == m {
            let xk = form_solution(&hess, &g, &basis, j + 1);
            let true_relres = norm(&residual(a, b, &xk)) / bnorm;
            last = Cycle { x: xk, steps: j + 1, true_relres, estimate_converged: estimate_converged || breakdown };
            if true_relres <= tol || estimate_converged || breakdown {
                return last;
            }
        }
        basis.push(w.iter().map(|v| v / hnext).collect());
    }
    last
}
