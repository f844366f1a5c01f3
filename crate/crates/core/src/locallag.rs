//! Local Lagrange functions built from small nearest-neighbor stencils, and
//! their use as a sparse right preconditioner for the full interpolation
//! system.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, NotConverged, Result};
use crate::geom::{geodesic_distance, NodeSet, SpherePoint};
use crate::kernel::{assemble_saddle_points, kernel_matrix, poly_matrix, KernelExpansion, KernelMatrix, KernelSpec, PolynomialBasis};
use crate::lagrange::LagrangeBasis;
use crate::neighbors::NeighborIndex;
use crate::solver::{gmres, CscMatrix, GmresOptions, GmresReport, LinearOperator};

/// Largest node count accepted by the preconditioned solver.
pub const DEFAULT_SOLVE_CAP: usize = 200_000;

/// The multiplier of the default count-mode rule.
pub const DEFAULT_MULTIPLIER: f64 = 7.0;

/// How the stencil `Υ(ξ)` of each center is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FootprintRule {
    /// `n = round(M ⌈(log₁₀ N)²⌉)` nearest neighbors.
    Count { multiplier: f64 },
    /// A fixed number of nearest neighbors.
    Fixed { n: usize },
    /// All nodes within `K h log(1/h)` of the center.
    Radius { k: f64 },
}

impl Default for FootprintRule {
    fn default() -> Self {
        FootprintRule::Count { multiplier: DEFAULT_MULTIPLIER }
    }
}

impl FootprintRule {
    /// Stencil size for count and fixed modes, clamped to `[m² + 1, N]`.
    /// `None` in radius mode.
    pub fn stencil_size(&self, n_nodes: usize, m: u32) -> Option<usize> {
        let floor = (m * m + 1) as usize;
        let raw = match *self {
            FootprintRule::Count { multiplier } => (multiplier * log10_sq_ceil(n_nodes)).round() as usize,
            FootprintRule::Fixed { n } => n,
            FootprintRule::Radius { .. } => return None,
        };
        Some(raw.max(floor).min(n_nodes))
    }

    /// Stencil radius `K h log(1/h)` in radius mode.
    pub fn radius(&self, h: f64) -> Option<f64> {
        match *self {
            FootprintRule::Radius { k } => Some(k * h * (1.0 / h).ln()),
            _ => None,
        }
    }
}

fn log10_sq_ceil(n: usize) -> f64 {
    let l = (n.max(1) as f64).log10();
    (l * l).ceil()
}

/// `min(N, max(m² + 1, 7 ⌈(log₁₀ N)²⌉))`.
pub fn default_footprint(n_nodes: usize, m: u32) -> usize {
    FootprintRule::default().stencil_size(n_nodes, m).unwrap()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Retry failed stencils once with twice as many neighbors.
    pub grow_on_failure: bool,
}

/// All local Lagrange functions of a node set. Column `ξ` of `a` holds the
/// kernel coefficients of `χ̌_ξ` on its stencil, column `ξ` of `c` its
/// polynomial coefficients.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub spec: KernelSpec,
    pub rule: FootprintRule,
    pub points: Vec<SpherePoint>,
    pub a: CscMatrix,
    pub c: DMatrix<f64>,
    pub stencil_sizes: Vec<usize>,
    /// Largest center-to-stencil distance per column.
    pub stencil_radii: Vec<f64>,
}

struct Column {
    entries: Vec<(usize, f64)>,
    c: Vec<f64>,
    radius: f64,
}

fn solve_stencil(spec: &KernelSpec, points: &[SpherePoint], center: usize, stencil: &[usize]) -> Result<Column> {
    let pts: Vec<SpherePoint> = stencil.iter().map(|&i| points[i]).collect();
    let mut system = assemble_saddle_points(spec, &spec.harmonics(), &pts);
    let pos = stencil.iter().position(|&i| i == center).expect("stencil contains its center");
    let mut f = vec![0.0; stencil.len()];
    f[pos] = 1.0;
    let sol = system.interpolate(&f)?;
    let radius = pts.iter().map(|p| geodesic_distance(&points[center], p)).fold(0.0, f64::max);
    Ok(Column { entries: stencil.iter().copied().zip(sol.a).collect(), c: sol.c, radius })
}

pub fn build_local_basis(set: &NodeSet, spec: &KernelSpec, rule: FootprintRule) -> Result<LocalBasis> {
    build_local_basis_with(set, spec, rule, &BuildOptions::default())
}

pub fn build_local_basis_with(
    set: &NodeSet,
    spec: &KernelSpec,
    rule: FootprintRule,
    opts: &BuildOptions,
) -> Result<LocalBasis> {
    let n = set.len();
    let p = spec.poly_dim();
    if n < p + 1 {
        return Err(Error::InvalidArgument(format!("need at least {} nodes for m = {}, got {n}", p + 1, spec.m())));
    }
    if let FootprintRule::Count { multiplier } = rule {
        if !(multiplier > 0.0) {
            return Err(Error::InvalidArgument(format!("footprint multiplier must be positive, got {multiplier}")));
        }
    }
    let points = set.points();
    let index = NeighborIndex::build(points);
    let radius = match rule {
        FootprintRule::Radius { k } => {
            if !(k > 0.0) {
                return Err(Error::InvalidArgument(format!("footprint radius factor must be positive, got {k}")));
            }
            rule.radius(set.stats_or_compute().h)
        }
        _ => None,
    };
    let size = rule.stencil_size(n, spec.m());

    let stencil = |center: usize, grow: bool| -> Vec<usize> {
        match (size, radius) {
            (Some(k), _) => index.knn(center, if grow { (2 * k).min(n) } else { k }),
            (None, Some(r)) => index.ball(&points[center], if grow { 2.0 * r } else { r }),
            (None, None) => unreachable!(),
        }
    };

    let results: Vec<Result<Column>> = (0..n)
        .into_par_iter()
        .map(|center| {
            let first = solve_stencil(spec, points, center, &stencil(center, false));
            match first {
                Err(_) if opts.grow_on_failure => solve_stencil(spec, points, center, &stencil(center, true)),
                other => other,
            }
        })
        .collect();

    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, r)| r.is_err()).map(|(i, _)| i).collect();
    if !failed.is_empty() {
        return Err(Error::StencilFailure { centers: failed });
    }

    let mut c = DMatrix::zeros(p, n);
    let mut columns = Vec::with_capacity(n);
    let mut stencil_sizes = Vec::with_capacity(n);
    let mut stencil_radii = Vec::with_capacity(n);
    for (j, col) in results.into_iter().map(Result::unwrap).enumerate() {
        c.column_mut(j).copy_from_slice(&col.c);
        stencil_sizes.push(col.entries.len());
        stencil_radii.push(col.radius);
        columns.push(col.entries);
    }
    Ok(LocalBasis {
        spec: *spec,
        rule,
        points: points.to_vec(),
        a: CscMatrix::from_columns(n, columns)?,
        c,
        stencil_sizes,
        stencil_radii,
    })
}

impl LocalBasis {
    /// Reassembles a basis from stored coefficients.
    pub fn from_parts(
        points: Vec<SpherePoint>,
        spec: KernelSpec,
        rule: FootprintRule,
        a: CscMatrix,
        c: DMatrix<f64>,
    ) -> Result<Self> {
        let n = points.len();
        if a.shape() != (n, n) {
            return Err(Error::ShapeMismatch { expected: n, got: a.shape().1 });
        }
        if c.shape() != (spec.poly_dim(), n) {
            return Err(Error::ShapeMismatch { expected: spec.poly_dim(), got: c.nrows() });
        }
        let mut stencil_sizes = Vec::with_capacity(n);
        let mut stencil_radii = Vec::with_capacity(n);
        for j in 0..n {
            let (rows, _) = a.column(j);
            stencil_sizes.push(rows.len());
            stencil_radii.push(rows.iter().map(|&i| geodesic_distance(&points[j], &points[i])).fold(0.0, f64::max));
        }
        Ok(Self { spec, rule, points, a, c, stencil_sizes, stencil_radii })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `χ̌_ξ(x)`.
    pub fn eval_function(&self, center: usize, x: &SpherePoint) -> f64 {
        let (rows, vals) = self.a.column(center);
        let kernel: f64 = rows.iter().zip(vals).map(|(&i, &v)| v * self.spec.eval(x, &self.points[i])).sum();
        let phi = self.spec.harmonics().eval(x);
        kernel + phi.iter().zip(self.c.column(center).iter()).map(|(p, c)| p * c).sum::<f64>()
    }

    /// `χ̌_ξ` as a kernel expansion over its stencil.
    pub fn function(&self, center: usize) -> KernelExpansion {
        let (rows, vals) = self.a.column(center);
        KernelExpansion {
            spec: self.spec,
            centers: rows.iter().map(|&i| self.points[i]).collect(),
            a: vals.to_vec(),
            c: self.c.column(center).iter().copied().collect(),
        }
    }

    /// `Σ_ξ w_ξ χ̌_ξ`, collapsed to a single expansion over all nodes.
    pub fn combination(&self, w: &[f64]) -> Result<KernelExpansion> {
        if w.len() != self.len() {
            return Err(Error::ShapeMismatch { expected: self.len(), got: w.len() });
        }
        let a = self.a.spmv(w)?;
        let c = (&self.c * nalgebra::DVector::from_column_slice(w)).iter().copied().collect();
        KernelExpansion::new(self.spec, self.points.clone(), a, c)
    }

    pub fn nnz(&self) -> usize {
        self.a.nnz()
    }

    /// Dense copy of the kernel coefficients, for comparisons with the full
    /// basis.
    pub fn a_dense(&self) -> DMatrix<f64> {
        self.a.to_dense()
    }
}

/// The quasi-interpolant `Q f = Σ_ξ f(ξ) χ̌_ξ`.
pub fn quasi_interpolate(basis: &LocalBasis, f: &[f64]) -> Result<KernelExpansion> {
    basis.combination(f)
}

/// The preconditioned operator `v ↦ K_Ξ (A v) + Φ (C v)` on `R^N`.
pub struct PreconditionedSystem<'a> {
    basis: &'a LocalBasis,
    k: KernelMatrix,
    phi: DMatrix<f64>,
}

impl<'a> PreconditionedSystem<'a> {
    pub fn new(basis: &'a LocalBasis) -> Result<Self> {
        Self::with_cap(basis, DEFAULT_SOLVE_CAP)
    }

    pub fn with_cap(basis: &'a LocalBasis, cap: usize) -> Result<Self> {
        if basis.len() > cap {
            return Err(Error::TooLarge { what: "preconditioned system", n: basis.len(), cap });
        }
        Ok(Self {
            basis,
            k: KernelMatrix::new(&basis.spec, &basis.points),
            phi: poly_matrix(&basis.spec.harmonics(), &basis.points),
        })
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.k
    }

    /// `K a + Φ c`.
    pub fn collocate(&self, a: &[f64], c: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; a.len()];
        self.k.apply(a, &mut y);
        let pc = &self.phi * nalgebra::DVector::from_column_slice(c);
        y.iter_mut().zip(pc.iter()).for_each(|(yi, v)| *yi += v);
        y
    }

    pub fn solve(&self, f: &[f64], opts: &SolveOptions) -> Result<PreconditionedSolution> {
        let n = self.basis.len();
        if f.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: f.len() });
        }
        let x0 = match &opts.x0 {
            InitialGuess::Data => f.to_vec(),
            InitialGuess::Zero => vec![0.0; n],
            InitialGuess::Given(v) => v.clone(),
        };
        let gopts = GmresOptions { tol: opts.tol, maxit: opts.maxit };
        let (coeffs, report) = gmres(self, None, f, &x0, &gopts)?;
        let a = self.basis.a.spmv(&coeffs)?;
        let c: Vec<f64> = (&self.basis.c * nalgebra::DVector::from_column_slice(&coeffs)).iter().copied().collect();
        let fit = self.collocate(&a, &c);
        let fnorm = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = fit.iter().zip(f).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        let residual_inf = if fnorm > 0.0 { err / fnorm } else { err };
        Ok(PreconditionedSolution { a, c, coeffs, report, residual_inf })
    }

    /// The dense preconditioned matrix `K A + Φ C`, column by column through
    /// the sparse stencils.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.basis.len();
        let pc = &self.phi * &self.basis.c;
        let mut out = pc;
        let pts = &self.basis.points;
        let spec = &self.basis.spec;
        out.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(j, col)| {
            let (rows, vals) = self.basis.a.column(j);
            for (&z, &v) in rows.iter().zip(vals) {
                for i in 0..n {
                    col[i] += v * spec.eval(&pts[i], &pts[z]);
                }
            }
        });
        out
    }
}

impl LinearOperator for PreconditionedSystem<'_> {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn apply(&self, v: &[f64], y: &mut [f64]) {
        let t = self.basis.a.spmv(v).expect("operator shape");
        self.k.apply(&t, y);
        let cv = &self.basis.c * nalgebra::DVectorView::from_slice(v, v.len());
        let pc = &self.phi * cv;
        y.iter_mut().zip(pc.iter()).for_each(|(yi, w)| *yi += w);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// Start from the data values, which is nearly exact since the
    /// preconditioned matrix is close to the identity.
    Data,
    Zero,
    Given(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub maxit: usize,
    pub x0: InitialGuess,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-6, maxit: 200, x0: InitialGuess::Data }
    }
}

#[derive(Debug, Clone)]
pub struct PreconditionedSolution {
    /// Kernel coefficients in the standard basis.
    pub a: Vec<f64>,
    /// Polynomial coefficients.
    pub c: Vec<f64>,
    /// Coefficients with respect to the local Lagrange basis.
    pub coeffs: Vec<f64>,
    pub report: GmresReport,
    /// `‖K a + Φ c − f‖_∞ / ‖f‖_∞`.
    pub residual_inf: f64,
}

impl PreconditionedSolution {
    pub fn expansion(&self, basis: &LocalBasis) -> KernelExpansion {
        KernelExpansion { spec: basis.spec, centers: basis.points.clone(), a: self.a.clone(), c: self.c.clone() }
    }
}

/// Solves the full interpolation problem with the local basis as right
/// preconditioner.
pub fn interpolate_preconditioned(
    basis: &LocalBasis,
    f: &[f64],
    opts: &SolveOptions,
) -> Result<PreconditionedSolution> {
    PreconditionedSystem::new(basis)?.solve(f, opts)
}

/// Maps a non-converged run's iterate back to standard coefficients.
pub fn recover_iterate(basis: &LocalBasis, nc: &NotConverged) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = basis.a.spmv(&nc.solution)?;
    let c = (&basis.c * nalgebra::DVector::from_column_slice(&nc.solution)).iter().copied().collect();
    Ok((a, c))
}

/// `max_x |χ̌_ξ(x) − χ_ξ(x)|` over `probes`, for every center.
pub fn column_discrepancy(local: &LocalBasis, full: &LagrangeBasis, probes: &[SpherePoint]) -> Result<Vec<f64>> {
    let n = local.len();
    if full.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: full.len() });
    }
    let da = local.a_dense() - &full.a;
    let dc = &local.c - &full.c;
    let harm = local.spec.harmonics();
    let block = 2048;
    let mut worst = vec![0.0f64; n];
    for chunk in probes.chunks(block) {
        let kp = kernel_matrix(&local.spec, chunk, &local.points);
        let pp = poly_matrix(&harm, chunk);
        let diff = kp * &da + pp * &dc;
        for (j, w) in worst.iter_mut().enumerate() {
            *w = w.max(diff.column(j).amax());
        }
    }
    Ok(worst)
}
