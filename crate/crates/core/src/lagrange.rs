//! Full Lagrange functions, the native-space semi-inner product on
//! coefficient vectors, and truncated Lagrange functions realigned onto the
//! moment conditions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geom::{NodeSet, SpherePoint};
use crate::kernel::{assemble_saddle_points, poly_matrix, KernelExpansion, KernelSpec, PolynomialBasis};
use crate::solver::{sym_eig_minmax, SaddleSystem};

/// Largest node count accepted by dense full-system solves.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

/// Tolerance on `max_j |Σ a_i φ_j(ξ_i)|`, relative to `max(1, ‖a‖₁)`.
pub const MOMENT_TOLERANCE: f64 = 1e-8;

/// Smallest admissible eigenvalue of a stencil Gram matrix.
pub const GRAM_UNISOLVENCE_FLOOR: f64 = 1e-13;

/// The factored interpolation system on all of Ξ.
#[derive(Debug, Clone)]
pub struct FullSystem {
    spec: KernelSpec,
    points: Vec<SpherePoint>,
    system: SaddleSystem,
}

impl FullSystem {
    pub fn new(set: &NodeSet, spec: &KernelSpec) -> Result<Self> {
        Self::with_cap(set, spec, DEFAULT_DENSE_CAP)
    }

    pub fn with_cap(set: &NodeSet, spec: &KernelSpec, cap: usize) -> Result<Self> {
        if set.len() > cap {
            return Err(Error::TooLarge { what: "dense interpolation system", n: set.len(), cap });
        }
        let points = set.points().to_vec();
        let mut system = assemble_saddle_points(spec, &spec.harmonics(), &points);
        system.factor()?;
        Ok(Self { spec: *spec, points, system })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The interpolant of `f` from the kernel space.
    pub fn interpolate(&mut self, f: &[f64]) -> Result<KernelExpansion> {
        let sol = self.system.interpolate(f)?;
        KernelExpansion::new(self.spec, self.points.clone(), sol.a, sol.c)
    }

    /// The Lagrange function `χ_ξ` for node `center`.
    pub fn cardinal(&mut self, center: usize) -> Result<KernelExpansion> {
        let mut f = vec![0.0; self.len()];
        f[center] = 1.0;
        self.interpolate(&f)
    }
}

/// All Lagrange functions of a node set: column `ξ` of `a` holds
/// `(A_{ξ,ζ})_ζ`, column `ξ` of `c` the polynomial coefficients of `χ_ξ`.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    pub spec: KernelSpec,
    pub points: Vec<SpherePoint>,
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// Solves the full saddle system once and back-substitutes all `N` cardinal
/// right-hand sides.
pub fn full_lagrange(set: &NodeSet, spec: &KernelSpec) -> Result<LagrangeBasis> {
    full_lagrange_capped(set, spec, DEFAULT_DENSE_CAP)
}

pub fn full_lagrange_capped(set: &NodeSet, spec: &KernelSpec, cap: usize) -> Result<LagrangeBasis> {
    let mut full = FullSystem::with_cap(set, spec, cap)?;
    let n = set.len();
    let p = spec.poly_dim();
    let mut rhs = DMatrix::zeros(n + p, n);
    for i in 0..n {
        rhs[(i, i)] = 1.0;
    }
    let sol = full.system.solve_columns(&rhs)?;
    Ok(LagrangeBasis {
        spec: *spec,
        points: full.points,
        a: sol.rows(0, n).into_owned(),
        c: sol.rows(n, p).into_owned(),
    })
}

impl LagrangeBasis {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn function(&self, center: usize) -> KernelExpansion {
        KernelExpansion {
            spec: self.spec,
            centers: self.points.clone(),
            a: self.a.column(center).iter().copied().collect(),
            c: self.c.column(center).iter().copied().collect(),
        }
    }

    pub fn eval(&self, center: usize, x: &SpherePoint) -> f64 {
        let col = self.a.column(center);
        let kernel: f64 = self.points.iter().zip(col.iter()).map(|(z, a)| a * self.spec.eval(x, z)).sum();
        let phi = self.spec.harmonics().eval(x);
        kernel + phi.iter().zip(self.c.column(center).iter()).map(|(p, c)| p * c).sum::<f64>()
    }

    /// `max |A − Aᵀ| / max |A|`.
    pub fn symmetry_defect(&self) -> f64 {
        let amax = self.a.amax();
        (&self.a - self.a.transpose()).amax() / amax
    }
}

/// `max_j |Σ_i a_i φ_j(ξ_i)|`.
pub fn moment_residual(points: &[SpherePoint], basis: &dyn PolynomialBasis, a: &[f64]) -> f64 {
    let mut acc = vec![0.0; basis.dim()];
    let mut buf = vec![0.0; basis.dim()];
    for (x, &ai) in points.iter().zip(a) {
        basis.eval_into(x, &mut buf);
        acc.iter_mut().zip(&buf).for_each(|(s, v)| *s += ai * v);
    }
    acc.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn check_moments(points: &[SpherePoint], spec: &KernelSpec, a: &[f64]) -> Result<()> {
    let residual = moment_residual(points, &spec.harmonics(), a);
    let scale = a.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if residual > MOMENT_TOLERANCE * scale {
        return Err(Error::ConstraintViolation { residual });
    }
    Ok(())
}

/// Native-space semi-inner product `a₁ᵀ K_Ξ a₂` of two kernel-space
/// functions given by coefficient vectors satisfying the moment conditions.
pub fn native_inner(set: &NodeSet, spec: &KernelSpec, a1: &[f64], a2: &[f64]) -> Result<f64> {
    let n = set.len();
    for a in [a1, a2] {
        if a.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: a.len() });
        }
    }
    check_moments(set.points(), spec, a1)?;
    check_moments(set.points(), spec, a2)?;
    let pts = set.points();
    let mut total = 0.0;
    for i in 0..n {
        if a1[i] == 0.0 {
            continue;
        }
        let row: f64 = (0..n).map(|j| spec.eval(&pts[i], &pts[j]) * a2[j]).sum();
        total += a1[i] * row;
    }
    Ok(total)
}

/// Gram matrix `G_{k,j} = Σ_ζ φ_k(ζ) φ_j(ζ)` of basis samples.
pub fn gram_discrete(points: &[SpherePoint], basis: &dyn PolynomialBasis) -> DMatrix<f64> {
    let phi = poly_matrix(basis, points);
    phi.transpose() * phi
}

/// Gram matrix for a subset of a node set.
pub fn gram_discrete_indices(set: &NodeSet, indices: &[usize], basis: &dyn PolynomialBasis) -> DMatrix<f64> {
    let pts: Vec<SpherePoint> = indices.iter().map(|&i| *set.point(i)).collect();
    gram_discrete(&pts, basis)
}

/// Smallest eigenvalue `ϑ` of `P⊥ K P⊥` on the complement of the range of `Φ`,
/// where `P` projects onto that range. The range itself is shifted to
/// `‖K‖_F` so that it cannot produce the minimum.
pub fn constrained_min_eigenvalue(k: &DMatrix<f64>, phi: &DMatrix<f64>) -> f64 {
    let n = k.nrows();
    let gram = phi.transpose() * phi;
    let gram_inv = gram.try_inverse().expect("Φ must have full column rank");
    let proj = phi * gram_inv * phi.transpose();
    let perp = DMatrix::<f64>::identity(n, n) - &proj;
    let shift = k.norm().max(1.0);
    let mut m = &perp * k * &perp + proj * shift;
    m = (&m + m.transpose()) * 0.5;
    sym_eig_minmax(&m).0
}

/// A Lagrange function with its kernel expansion truncated to a subset and
/// realigned onto the moment conditions.
#[derive(Debug, Clone)]
pub struct TruncatedFunction {
    pub center: usize,
    pub support: Vec<usize>,
    /// Realigned kernel coefficients on `support`.
    pub a_tilde: Vec<f64>,
    /// Polynomial part, inherited unchanged from the full Lagrange function.
    pub c: Vec<f64>,
    /// Realignment weights: `Ã − A|_Υ = Σ_j τ_j φ_j|_Υ`.
    pub tau: Vec<f64>,
}

impl TruncatedFunction {
    pub fn to_expansion(&self, basis: &LagrangeBasis) -> KernelExpansion {
        KernelExpansion {
            spec: basis.spec,
            centers: self.support.iter().map(|&i| basis.points[i]).collect(),
            a: self.a_tilde.clone(),
            c: self.c.clone(),
        }
    }
}

/// Truncates `χ_center` to the centers `support` and replaces the retained
/// coefficients by their orthogonal projection onto the moment-condition
/// subspace of `ℓ₂(support)`.
pub fn truncate_project(basis: &LagrangeBasis, center: usize, support: &[usize]) -> Result<TruncatedFunction> {
    let n = basis.len();
    if support.iter().any(|&i| i >= n) {
        return Err(Error::InvalidArgument("support index out of range".into()));
    }
    if !support.contains(&center) {
        return Err(Error::InvalidArgument(format!("support must contain the center {center}")));
    }
    let harm = basis.spec.harmonics();
    let pts: Vec<SpherePoint> = support.iter().map(|&i| basis.points[i]).collect();
    let phi = poly_matrix(&harm, &pts);
    let gram = phi.transpose() * &phi;
    let (lambda_min, _) = sym_eig_minmax(&gram);
    if lambda_min <= GRAM_UNISOLVENCE_FLOOR {
        return Err(Error::NonUnisolventNeighborhood { center, lambda_min });
    }

    let mut inside = vec![false; n];
    support.iter().for_each(|&i| inside[i] = true);
    let col = basis.a.column(center);
    let outside: Vec<usize> = (0..n).filter(|&i| !inside[i]).collect();
    let p = harm.dim();
    let mut sigma = DVector::zeros(p);
    let mut buf = vec![0.0; p];
    for &i in &outside {
        harm.eval_into(&basis.points[i], &mut buf);
        for j in 0..p {
            sigma[j] += col[i] * buf[j];
        }
    }
    let tau = gram.cholesky().ok_or(Error::NonUnisolventNeighborhood { center, lambda_min })?.solve(&sigma);
    let a_kept = DVector::from_iterator(support.len(), support.iter().map(|&i| col[i]));
    let a_tilde = a_kept + &phi * &tau;
    Ok(TruncatedFunction {
        center,
        support: support.to_vec(),
        a_tilde: a_tilde.iter().copied().collect(),
        c: basis.c.column(center).iter().copied().collect(),
        tau: tau.iter().copied().collect(),
    })
}
