#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spherelag::SpherePoint;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on the sphere: uniform height and longitude (Archimedes).
pub fn random_point(rng: &mut impl Rng) -> SpherePoint {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    SpherePoint::normalized(s * phi.cos(), s * phi.sin(), z).unwrap()
}

pub fn random_points(n: usize, seed: u64) -> Vec<SpherePoint> {
    let mut r = rng(seed);
    (0..n).map(|_| random_point(&mut r)).collect()
}

/// Plain arccos distance, the textbook definition.
pub fn naive_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    (a.x * b.x + a.y * b.y + a.z * b.z).clamp(-1.0, 1.0).acos()
}

/// Indices sorted by (distance, index) using a full scan.
pub fn brute_knn(points: &[SpherePoint], p: &SpherePoint, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> =
        points.iter().enumerate().map(|(i, q)| (spherelag::geom::chordal_distance(p, q), i)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|x| x.1).collect()
}

/// Cyclic Jacobi eigenvalue iteration, run to full convergence.
pub fn jacobi_eigenvalues(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}
