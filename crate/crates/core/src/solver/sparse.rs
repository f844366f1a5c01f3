use crate::error::{Error, Result};

/// Compressed sparse column matrix. Row indices are strictly increasing
/// within each column and no explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, colptr: vec![0; ncols + 1], rowind: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, colptr: (0..=n).collect(), rowind: (0..n).collect(), values: vec![1.0; n] }
    }

    /// Builds from per-column `(row, value)` lists in any order. Duplicate
    /// rows are summed and zeros dropped.
    pub fn from_columns(nrows: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let ncols = columns.len();
        let mut colptr = Vec::with_capacity(ncols + 1);
        let nnz: usize = columns.iter().map(Vec::len).sum();
        let mut rowind = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        colptr.push(0);
        for mut col in columns {
            col.sort_by_key(|&(r, _)| r);
            let mut k = 0;
            while k < col.len() {
                let (row, mut v) = col[k];
                if row >= nrows {
                    return Err(Error::ShapeMismatch { expected: nrows, got: row + 1 });
                }
                k += 1;
                while k < col.len() && col[k].0 == row {
                    v += col[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    rowind.push(row);
                    values.push(v);
                }
            }
            colptr.push(rowind.len());
        }
        Ok(Self { nrows, ncols, colptr, rowind, values })
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut columns = vec![Vec::new(); ncols];
        for &(r, c, v) in triplets {
            if c >= ncols {
                return Err(Error::ShapeMismatch { expected: ncols, got: c + 1 });
            }
            columns[c].push((r, v));
        }
        Self::from_columns(nrows, columns)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptrs(&self) -> &[usize] {
        &self.colptr
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.rowind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row indices and values of column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.colptr[j], self.colptr[j + 1]);
        (&self.rowind[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (rows, vals) = self.column(j);
        rows.binary_search(&i).map(|k| vals[k]).unwrap_or(0.0)
    }

    /// `y = M v`.
    pub fn spmv(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(v, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, v: &[f64], y: &mut [f64]) -> Result<()> {
        if v.len() != self.ncols {
            return Err(Error::ShapeMismatch { expected: self.ncols, got: v.len() });
        }
        if y.len() != self.nrows {
            return Err(Error::ShapeMismatch { expected: self.nrows, got: y.len() });
        }
        y.iter_mut().for_each(|t| *t = 0.0);
        for (j, &vj) in v.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            let (rows, vals) = self.column(j);
            for (&r, &a) in rows.iter().zip(vals) {
                y[r] += a * vj;
            }
        }
        Ok(())
    }

    /// `y = Mᵀ v`.
    pub fn spmv_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.nrows {
            return Err(Error::ShapeMismatch { expected: self.nrows, got: v.len() });
        }
        Ok((0..self.ncols)
            .map(|j| {
                let (rows, vals) = self.column(j);
                rows.iter().zip(vals).map(|(&r, &a)| a * v[r]).sum()
            })
            .collect())
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            let (rows, vals) = self.column(j);
            for (&r, &v) in rows.iter().zip(vals) {
                d[(r, j)] = v;
            }
        }
        d
    }
}
