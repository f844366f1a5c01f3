//! Restricted surface-spline kernels and the real spherical harmonics that
//! span their polynomial null space.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geom::{NodeSet, SpherePoint};
use crate::solver::SaddleSystem;

/// Below this value of `1 − x·α` the kernel returns its limit 0.
pub const DIAGONAL_CUTOFF: f64 = 1e-14;

/// Order `m ≥ 2` of the restricted surface spline
/// `k_m(x, α) = (−1)^m (1 − x·α)^{m−1} log(1 − x·α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    m: u32,
    sup_norm: f64,
}

impl KernelSpec {
    pub fn new(m: u32) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("kernel order must be >= 2, got {m}")));
        }
        Ok(Self { m, sup_norm: sup_norm_scan(m) })
    }

    /// The thin-plate spline on the sphere, `m = 2`.
    pub fn thin_plate() -> Self {
        Self::new(2).unwrap()
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Dimension `m²` of the spherical harmonics of degree `≤ m − 1`.
    pub fn poly_dim(&self) -> usize {
        (self.m * self.m) as usize
    }

    /// `‖k_m‖_∞` over `S² × S²`.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn harmonics(&self) -> HarmonicBasis {
        HarmonicBasis::new(self.m - 1)
    }

    /// Kernel as a function of `t = x·α`.
    #[inline]
    pub fn eval_dot(&self, t: f64) -> f64 {
        let s = 1.0 - t;
        if s < DIAGONAL_CUTOFF {
            return 0.0;
        }
        match self.m {
            2 => s * s.ln(),
            m => {
                let v = s.powi(m as i32 - 1) * s.ln();
                if m % 2 == 0 {
                    v
                } else {
                    -v
                }
            }
        }
    }

    #[inline]
    pub fn eval(&self, a: &SpherePoint, b: &SpherePoint) -> f64 {
        self.eval_dot(a.dot(b))
    }
}

/// Maximizes `|(1 − t)^{m−1} log(1 − t)|` over `t ∈ [−1, 1]` by a dense scan in
/// `s = 1 − t` followed by golden-section refinement around the best sample.
fn sup_norm_scan(m: u32) -> f64 {
    let g = |s: f64| if s <= 0.0 { 0.0 } else { (s.powi(m as i32 - 1) * s.ln()).abs() };
    let n = 4000;
    let step = 2.0 / n as f64;
    let (best_i, _) = (0..=n)
        .map(|i| (i, g(i as f64 * step)))
        .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
    let (mut lo, mut hi) = (((best_i as f64 - 1.0) * step).max(0.0), ((best_i as f64 + 1.0) * step).min(2.0));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if g(a) > g(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    g(0.5 * (lo + hi)).max(g(2.0))
}

/// A finite family of functions on the sphere spanning the polynomial space
/// of the interpolation problem.
pub trait PolynomialBasis: Sync {
    fn dim(&self) -> usize;
    /// Writes all basis values at `p` into `out` (length [`dim`](Self::dim)).
    fn eval_into(&self, p: &SpherePoint, out: &mut [f64]);

    fn eval(&self, p: &SpherePoint) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(p, &mut out);
        out
    }
}

/// Real spherical harmonics of degree `≤ L`, orthonormal in `L₂(S²)`.
///
/// Ordering is degree-major; within degree `ℓ` the orders run
/// `0, 1, −1, 2, −2, …, ℓ, −ℓ`. Order `μ > 0` is the cosine harmonic
/// `√2 N P_ℓ^μ(cos θ) cos(μφ)`, order `−μ` the sine harmonic. No
/// Condon–Shortley phase, so degree 1 is `√(3/4π) (z, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarmonicBasis {
    max_degree: u32,
}

impl HarmonicBasis {
    pub fn new(max_degree: u32) -> Self {
        Self { max_degree }
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// `(ℓ, μ)` of basis entry `j`.
    pub fn degree_order(j: usize) -> (u32, i32) {
        let l = (j as f64).sqrt().floor() as usize;
        let r = j - l * l;
        let mu = if r == 0 { 0 } else if r % 2 == 1 { r.div_ceil(2) as i32 } else { -((r / 2) as i32) };
        (l as u32, mu)
    }
}

impl PolynomialBasis for HarmonicBasis {
    fn dim(&self) -> usize {
        let n = self.max_degree as usize + 1;
        n * n
    }

    fn eval_into(&self, p: &SpherePoint, out: &mut [f64]) {
        let lmax = self.max_degree as usize;
        debug_assert_eq!(out.len(), (lmax + 1) * (lmax + 1));
        let z = p.z;
        // (x + iy)^μ = sin^μθ e^{iμφ}
        let mut re = 1.0;
        let mut im = 0.0;
        for mu in 0..=lmax {
            if mu > 0 {
                let (r, i) = (re * p.x - im * p.y, re * p.y + im * p.x);
                re = r;
                im = i;
            }
            // Q_ℓ^μ = P_ℓ^μ / sin^μθ, upward in ℓ from Q_μ^μ = (2μ−1)!!
            let mut q_prev = 0.0;
            let mut q = double_factorial_odd(mu);
            for l in mu..=lmax {
                if l > mu {
                    let next = if l == mu + 1 {
                        z * (2 * mu + 1) as f64 * q
                    } else {
                        (z * (2 * l - 1) as f64 * q - (l + mu - 1) as f64 * q_prev) / (l - mu) as f64
                    };
                    q_prev = q;
                    q = next;
                }
                let norm = ((2 * l + 1) as f64 / (4.0 * PI) * factorial_ratio(l - mu, l + mu)).sqrt();
                let base = l * l;
                if mu == 0 {
                    out[base] = norm * q;
                } else {
                    let s = std::f64::consts::SQRT_2 * norm * q;
                    out[base + 2 * mu - 1] = s * re;
                    out[base + 2 * mu] = s * im;
                }
            }
        }
    }
}

fn double_factorial_odd(mu: usize) -> f64 {
    (1..=mu).map(|k| (2 * k - 1) as f64).product()
}

/// `a! / b!` for `a ≤ b`.
fn factorial_ratio(a: usize, b: usize) -> f64 {
    1.0 / ((a + 1)..=b).map(|k| k as f64).product::<f64>()
}

/// `(−1)^m (1 − a·b)^{m−1} log(1 − a·b)`, zero on the diagonal.
pub fn eval_kernel(spec: &KernelSpec, a: &SpherePoint, b: &SpherePoint) -> f64 {
    spec.eval(a, b)
}

pub fn eval_harmonics(basis: &HarmonicBasis, p: &SpherePoint) -> Vec<f64> {
    basis.eval(p)
}

/// Kernel matrix `(k(x_i, ξ_j))` between evaluation points and centers.
pub fn kernel_matrix(spec: &KernelSpec, rows: &[SpherePoint], cols: &[SpherePoint]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| spec.eval(&rows[i], &cols[j]))
}

/// Matrix `(φ_j(x_i))` of basis samples.
pub fn poly_matrix(basis: &dyn PolynomialBasis, rows: &[SpherePoint]) -> DMatrix<f64> {
    let p = basis.dim();
    let mut out = DMatrix::zeros(rows.len(), p);
    let mut buf = vec![0.0; p];
    for (i, x) in rows.iter().enumerate() {
        basis.eval_into(x, &mut buf);
        for j in 0..p {
            out[(i, j)] = buf[j];
        }
    }
    out
}

/// Bordered collocation matrix `[[K, Φ], [Φᵀ, 0]]` for the nodes `subset` of
/// `set`, with the harmonic basis of degree `m − 1`.
pub fn assemble_saddle(spec: &KernelSpec, set: &NodeSet, subset: &[usize]) -> SaddleSystem {
    let pts: Vec<SpherePoint> = subset.iter().map(|&i| *set.point(i)).collect();
    assemble_saddle_points(spec, &spec.harmonics(), &pts)
}

/// Bordered collocation matrix for explicit centers and any polynomial basis.
pub fn assemble_saddle_points(spec: &KernelSpec, basis: &dyn PolynomialBasis, pts: &[SpherePoint]) -> SaddleSystem {
    let n = pts.len();
    let p = basis.dim();
    let mut mat = DMatrix::zeros(n + p, n + p);
    for j in 0..n {
        for i in 0..j {
            let v = spec.eval(&pts[i], &pts[j]);
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
        mat[(j, j)] = spec.eval(&pts[j], &pts[j]);
    }
    let mut buf = vec![0.0; p];
    for (i, x) in pts.iter().enumerate() {
        basis.eval_into(x, &mut buf);
        for (k, &v) in buf.iter().enumerate() {
            mat[(i, n + k)] = v;
            mat[(n + k, i)] = v;
        }
    }
    SaddleSystem::new(mat, n, p)
}

/// A function `Σ a_i k(·, ξ_i) + Σ c_j φ_j` in the kernel space, evaluable
/// anywhere on the sphere.
#[derive(Debug, Clone)]
pub struct KernelExpansion {
    pub spec: KernelSpec,
    pub centers: Vec<SpherePoint>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl KernelExpansion {
    pub fn new(spec: KernelSpec, centers: Vec<SpherePoint>, a: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if a.len() != centers.len() {
            return Err(Error::ShapeMismatch { expected: centers.len(), got: a.len() });
        }
        if c.len() != spec.poly_dim() {
            return Err(Error::ShapeMismatch { expected: spec.poly_dim(), got: c.len() });
        }
        Ok(Self { spec, centers, a, c })
    }

    pub fn eval(&self, x: &SpherePoint) -> f64 {
        let kernel: f64 = self.centers.iter().zip(&self.a).map(|(z, a)| a * self.spec.eval(x, z)).sum();
        let phi = self.spec.harmonics().eval(x);
        kernel + phi.iter().zip(&self.c).map(|(p, c)| p * c).sum::<f64>()
    }

    pub fn eval_many(&self, xs: &[SpherePoint]) -> Vec<f64> {
        use rayon::prelude::*;
        xs.par_iter().map(|x| self.eval(x)).collect()
    }
}

/// Default memory budget for materializing a dense `N × N` kernel matrix.
pub const DEFAULT_DENSE_BUDGET_BYTES: usize = 1 << 30;

/// The collocation matrix `K_Ξ` as a linear operator: stored densely when it
/// fits the memory budget, otherwise recomputed entry by entry on each
/// product.
#[derive(Debug, Clone)]
pub enum KernelMatrix {
    Dense(DMatrix<f64>),
    Implicit { spec: KernelSpec, points: Vec<[f64; 3]> },
}

impl KernelMatrix {
    pub fn new(spec: &KernelSpec, points: &[SpherePoint]) -> Self {
        Self::with_budget(spec, points, DEFAULT_DENSE_BUDGET_BYTES)
    }

    pub fn with_budget(spec: &KernelSpec, points: &[SpherePoint], budget_bytes: usize) -> Self {
        let n = points.len();
        if n.saturating_mul(n).saturating_mul(8) <= budget_bytes {
            let mut k = DMatrix::zeros(n, n);
            for j in 0..n {
                for i in 0..j {
                    let v = spec.eval(&points[i], &points[j]);
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
            KernelMatrix::Dense(k)
        } else {
            KernelMatrix::Implicit { spec: *spec, points: points.iter().map(SpherePoint::as_array).collect() }
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, KernelMatrix::Dense(_))
    }

    pub fn dim(&self) -> usize {
        match self {
            KernelMatrix::Dense(k) => k.nrows(),
            KernelMatrix::Implicit { points, .. } => points.len(),
        }
    }

    /// `y = K x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            KernelMatrix::Dense(k) => crate::solver::LinearOperator::apply(k, x, y),
            KernelMatrix::Implicit { spec, points } => implicit_apply(spec, points, x, y),
        }
    }
}

fn implicit_apply(spec: &KernelSpec, pts: &[[f64; 3]], x: &[f64], y: &mut [f64]) {
    use rayon::prelude::*;
    let n = pts.len();
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    if rayon::current_num_threads() == 1 {
        // symmetric sweep: each off-diagonal entry evaluated once
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let (pi, xi) = (pts[i], x[i]);
            let mut acc = 0.0;
            for j in (i + 1)..n {
                let k = spec.eval_dot(dot(&pi, &pts[j]));
                acc += k * x[j];
                y[j] += k * xi;
            }
            y[i] += acc;
        }
    } else {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let pi = pts[i];
            *yi = pts.iter().zip(x).map(|(pj, xj)| spec.eval_dot(dot(&pi, pj)) * xj).sum();
        });
    }
}

impl crate::solver::LinearOperator for KernelMatrix {
    fn dim(&self) -> usize {
        KernelMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        KernelMatrix::apply(self, x, y)
    }
}
