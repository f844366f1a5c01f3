//! Gram matrices of degree-≤1 harmonics on spherical caps: the closed form
//! on a continuous cap, its smallest eigenvalue, and the comparison with
//! Gram matrices of point samples inside the cap.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4};

use crate::error::{Error, Result};
use crate::geom::{cap_fibonacci_points, geodesic_distance, SpherePoint};
use crate::kernel::HarmonicBasis;
use crate::lagrange::gram_discrete;
use crate::neighbors::NeighborIndex;
use crate::solver::sym_eig_minmax;

/// Largest `h_C / r` at which a comparison is treated as conclusive.
pub const DEFAULT_CONCLUSIVE_RATIO: f64 = 0.1;

/// `∫_{S_r} φ_i φ_j dμ` for the real harmonics of degree ≤ 1 on the cap of
/// radius `r` about the north pole, ordered `(0,0), (1,0), (1,1), (1,−1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapGramAnalytic {
    pub r: f64,
    pub g: Matrix4<f64>,
}

pub fn cap_gram_analytic(r: f64) -> Result<CapGramAnalytic> {
    if !(r > 0.0 && r <= PI) {
        return Err(Error::OutOfRange { what: "cap radius", value: r });
    }
    Ok(CapGramAnalytic { r, g: gram_from_cos(r.cos()) })
}

/// The analytic Gram matrix as a function of `cos r`.
pub fn gram_from_cos(c: f64) -> Matrix4<f64> {
    let u = 1.0 - c;
    let g00 = 0.5 * u;
    let g01 = 3f64.sqrt() / 4.0 * u * (1.0 + c);
    let g11 = 0.5 * u * (1.0 + c + c * c);
    let gpp = 0.25 * u * u * (2.0 + c);
    #[rustfmt::skip]
    let g = Matrix4::new(
        g00, g01, 0.0, 0.0,
        g01, g11, 0.0, 0.0,
        0.0, 0.0, gpp, 0.0,
        0.0, 0.0, 0.0, gpp,
    );
    g
}

impl CapGramAnalytic {
    /// `μ(S_r)`.
    pub fn area(&self) -> f64 {
        4.0 * PI * (0.5 * self.r).sin().powi(2)
    }

    /// `G / μ(S_r)`.
    pub fn normalized(&self) -> Matrix4<f64> {
        self.g / self.area()
    }

    /// `λ_min(G / μ(S_r))`. The 2×2 block is handled in closed form with a
    /// cancellation-free smaller root `det / (tr/2 + √(tr²/4 − det))`.
    pub fn lambda_min_normalized(&self) -> f64 {
        let c = self.r.cos();
        let u = 2.0 * (0.5 * self.r).sin().powi(2);
        // divide the common factor (1 − c) out of every entry, then by 2π
        let a = 0.5;
        let d = 0.5 * (1.0 + c + c * c);
        // a d − b² with b = (√3/4)(1 + c) is exactly (1 − c)² / 16
        let det = u * u / 16.0;
        let half_tr = 0.5 * (a + d);
        let disc = (half_tr * half_tr - det).max(0.0).sqrt();
        let small = det / (half_tr + disc);
        let side = 0.25 * u * (2.0 + c);
        small.min(side) / (2.0 * PI)
    }

    /// `r⁴ / (256π)`, the leading term of the smallest normalized eigenvalue.
    pub fn asymptotic(&self) -> f64 {
        self.r.powi(4) / (256.0 * PI)
    }

    pub fn asymptotic_ratio(&self) -> f64 {
        self.lambda_min_normalized() / self.asymptotic()
    }

    /// `μ(S_r) ‖G_{S_r}⁻¹‖₂`.
    pub fn bound(&self) -> f64 {
        1.0 / self.lambda_min_normalized()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapGramReport {
    pub r: f64,
    pub n_points: usize,
    pub lambda_min_discrete: f64,
    /// `‖G_C⁻¹‖₂`.
    pub norm_inv_discrete: f64,
    /// `μ(S_r) ‖G_{S_r}⁻¹‖₂`.
    pub bound: f64,
    /// Mesh norm of the sample points relative to the cap.
    pub h_c: f64,
    pub h_c_over_r: f64,
    pub holds: bool,
    /// `h_C / r` small enough for the comparison to be meaningful.
    pub conclusive: bool,
}

/// Compares the Gram matrix of samples in the cap `B(center, r)` with the
/// analytic cap Gram matrix.
pub fn cap_gram_compare(points: &[SpherePoint], center: &SpherePoint, r: f64) -> Result<CapGramReport> {
    let analytic = cap_gram_analytic(r)?;
    if points.is_empty() {
        return Err(Error::InvalidArgument("no sample points".into()));
    }
    if let Some(p) = points.iter().find(|p| geodesic_distance(p, center) > r * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange { what: "sample distance from cap center", value: geodesic_distance(p, center) });
    }
    let g: DMatrix<f64> = gram_discrete(points, &HarmonicBasis::new(1));
    let (lambda_min, lambda_max) = sym_eig_minmax(&g);
    if lambda_min <= 1e-13 * lambda_max.max(1.0) {
        return Err(Error::SingularSystem { pivot: lambda_min, threshold: 1e-13 * lambda_max.max(1.0) });
    }
    let h_c = cap_mesh_norm(points, center, r, (20 * points.len()).clamp(2000, 200_000));
    let norm_inv = 1.0 / lambda_min;
    let bound = analytic.bound();
    let ratio = h_c / r;
    Ok(CapGramReport {
        r,
        n_points: points.len(),
        lambda_min_discrete: lambda_min,
        norm_inv_discrete: norm_inv,
        bound,
        h_c,
        h_c_over_r: ratio,
        holds: norm_inv <= bound * (1.0 + 1e-9),
        conclusive: ratio <= DEFAULT_CONCLUSIVE_RATIO,
    })
}

/// Largest distance from a probe in the cap to the nearest sample point.
pub fn cap_mesh_norm(points: &[SpherePoint], center: &SpherePoint, r: f64, n_probe: usize) -> f64 {
    let index = NeighborIndex::build(points);
    cap_fibonacci_points(center, r, n_probe)
        .iter()
        .map(|x| geodesic_distance(x, &points[index.knn_point(x, 1)[0]]))
        .fold(0.0, f64::max)
}
