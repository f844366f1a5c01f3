use nalgebra::{DMatrix, Dyn, LU};

use crate::error::{Error, Result};

/// Relative pivot size below which a bordered system is declared singular.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

/// The symmetric bordered matrix `[[K, Φ], [Φᵀ, 0]]` of a kernel
/// interpolation problem, with an LU factorization cached on first solve.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    n: usize,
    p: usize,
    matrix: DMatrix<f64>,
    lu: Option<LU<f64, Dyn, Dyn>>,
}

/// Kernel coefficients `a` and polynomial coefficients `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl SaddleSystem {
    pub fn new(matrix: DMatrix<f64>, n: usize, p: usize) -> Self {
        assert_eq!(matrix.shape(), (n + p, n + p), "bordered matrix has the wrong shape");
        Self { n, p, matrix, lu: None }
    }

    /// Number of kernel centers.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of polynomial constraints.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Max-row-sum norm of the bordered matrix.
    pub fn norm_inf(&self) -> f64 {
        self.matrix.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// LU with partial pivoting; fails when a pivot falls below
    /// `1e-14 · ‖M‖_∞`, which happens for non-unisolvent or repeated centers.
    pub fn factor(&mut self) -> Result<()> {
        if self.lu.is_some() {
            return Ok(());
        }
        let threshold = PIVOT_TOLERANCE * self.norm_inf();
        let lu = self.matrix.clone().lu();
        let u = lu.u();
        let pivot = u.diagonal().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        if !(pivot > threshold) {
            return Err(Error::SingularSystem { pivot, threshold });
        }
        self.lu = Some(lu);
        Ok(())
    }

    /// Solves for one right-hand side of length `n + p`.
    pub fn factor_solve(&mut self, rhs: &[f64]) -> Result<SaddleSolution> {
        let sol = self.solve_columns(&DMatrix::from_column_slice(rhs.len(), 1, rhs))?;
        let col = sol.column(0);
        Ok(SaddleSolution {
            a: col.rows(0, self.n).iter().copied().collect(),
            c: col.rows(self.n, self.p).iter().copied().collect(),
        })
    }

    /// Solves for every column of `rhs` with a single factorization.
    pub fn solve_columns(&mut self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.n + self.p {
            return Err(Error::ShapeMismatch { expected: self.n + self.p, got: rhs.nrows() });
        }
        self.factor()?;
        let lu = self.lu.as_ref().unwrap();
        lu.solve(rhs).ok_or(Error::SingularSystem { pivot: 0.0, threshold: 0.0 })
    }

    /// Interpolation with data `f` at the centers and zero moments.
    pub fn interpolate(&mut self, f: &[f64]) -> Result<SaddleSolution> {
        if f.len() != self.n {
            return Err(Error::ShapeMismatch { expected: self.n, got: f.len() });
        }
        let mut rhs = vec![0.0; self.n + self.p];
        rhs[..self.n].copy_from_slice(f);
        self.factor_solve(&rhs)
    }
}
