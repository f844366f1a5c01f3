//! Gauss–Legendre rules and a product rule on spherical caps.

use std::f64::consts::PI;

use crate::geom::{Frame, SpherePoint};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`,
/// found by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Product rule on the cap of radius `r` about `center`: Gauss–Legendre in
/// `cos θ ∈ [cos r, 1]` times the trapezoid rule in longitude.
pub fn cap_rule(center: &SpherePoint, r: f64, n_theta: usize, n_phi: usize) -> Vec<(SpherePoint, f64)> {
    let (x, w) = gauss_legendre(n_theta);
    let frame = Frame::centered_at(center);
    let c0 = r.cos();
    let half = 0.5 * (1.0 - c0);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for (xi, wi) in x.iter().zip(&w) {
        let z = c0 + half * (xi + 1.0);
        let s = (1.0 - z * z).max(0.0).sqrt();
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            let local = SpherePoint { x: s * phi.cos(), y: s * phi.sin(), z };
            out.push((frame.to_global(&local), wi * half * dphi));
        }
    }
    out
}
