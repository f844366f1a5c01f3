mod common;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use spherelag::diagnostics::{bin_envelope, fit_decay, DecayKind};
use spherelag::error::Error;
use spherelag::geom::{cap_fibonacci_points, gen_fibonacci, geodesic_distance, mesh_stats, NodeSet};
use spherelag::kernel::{assemble_saddle_points, kernel_matrix, poly_matrix, KernelSpec, PolynomialBasis};
use spherelag::lagrange::{
    constrained_min_eigenvalue, full_lagrange, full_lagrange_capped, gram_discrete, gram_discrete_indices,
    moment_residual, native_inner, truncate_project, FullSystem,
};
use spherelag::neighbors::NeighborIndex;
use spherelag::SpherePoint;

/// Monomials of degree ≤ 2 with z² dropped (it is 1 − x² − y² on the sphere).
struct Monomials {
    degree: u32,
}

impl PolynomialBasis for Monomials {
    fn dim(&self) -> usize {
        if self.degree == 1 {
            4
        } else {
            9
        }
    }

    fn eval_into(&self, p: &SpherePoint, out: &mut [f64]) {
        let (x, y, z) = (p.x, p.y, p.z);
        out[..4].copy_from_slice(&[1.0, x, y, z]);
        if self.degree == 2 {
            out[4..].copy_from_slice(&[x * x, x * y, x * z, y * y, y * z]);
        }
    }
}

#[test]
fn cardinality_and_constraints() {
    let set = gen_fibonacci(150).unwrap();
    for m in [2, 3] {
        let spec = KernelSpec::new(m).unwrap();
        let basis = full_lagrange(&set, &spec).unwrap();
        assert_eq!(basis.len(), 150);
        for xi in (0..150).step_by(13) {
            for (i, p) in set.points().iter().enumerate() {
                let expected = if i == xi { 1.0 } else { 0.0 };
                assert!((basis.eval(xi, p) - expected).abs() < 1e-8);
            }
            let col: Vec<f64> = basis.a.column(xi).iter().copied().collect();
            assert!(moment_residual(set.points(), &spec.harmonics(), &col) < 1e-10);
        }
    }
}

#[test]
fn minimal_set_is_solvable() {
    // m² points in general position: the kernel block still matters
    let pts = common::random_points(4, 21);
    let set = NodeSet::new(pts.clone()).unwrap();
    let spec = KernelSpec::thin_plate();
    let basis = full_lagrange(&set, &spec).unwrap();
    let m = assemble_saddle_points(&spec, &spec.harmonics(), &pts).matrix().clone();
    let rhs = DMatrix::from_fn(8, 4, |i, j| if i == j { 1.0 } else { 0.0 });
    let direct = m.lu().solve(&rhs).unwrap();
    assert!((direct.rows(0, 4) - &basis.a).amax() < 1e-10);
    assert!((direct.rows(4, 4) - &basis.c).amax() < 1e-10);
    for xi in 0..4 {
        assert!((basis.eval(xi, &pts[xi]) - 1.0).abs() < 1e-8);
    }
}

#[test]
fn dense_cap_is_enforced() {
    let set = gen_fibonacci(50).unwrap();
    assert!(matches!(full_lagrange_capped(&set, &KernelSpec::thin_plate(), 49), Err(Error::TooLarge { .. })));
    assert!(matches!(FullSystem::with_cap(&set, &KernelSpec::thin_plate(), 10), Err(Error::TooLarge { .. })));
}

#[test]
fn full_system_matches_basis() {
    let set = gen_fibonacci(100).unwrap();
    let spec = KernelSpec::thin_plate();
    let basis = full_lagrange(&set, &spec).unwrap();
    let mut full = FullSystem::new(&set, &spec).unwrap();
    let chi = full.cardinal(42).unwrap();
    let col = basis.function(42);
    assert!(chi.a.iter().zip(&col.a).all(|(x, y)| (x - y).abs() < 1e-9 * basis.a.amax()));
    for p in common::random_points(50, 2) {
        assert!((chi.eval(&p) - basis.eval(42, &p)).abs() < 1e-10);
    }
}

#[test]
fn coefficients_are_native_inner_products() {
    let set = gen_fibonacci(400).unwrap();
    let spec = KernelSpec::thin_plate();
    let basis = full_lagrange(&set, &spec).unwrap();
    let amax = basis.a.amax();
    for (xi, eta) in [(0, 0), (0, 1), (17, 230), (399, 5), (200, 201)] {
        let a1: Vec<f64> = basis.a.column(xi).iter().copied().collect();
        let a2: Vec<f64> = basis.a.column(eta).iter().copied().collect();
        let inner = native_inner(&set, &spec, &a1, &a2).unwrap();
        assert!((inner - basis.a[(eta, xi)]).abs() <= 1e-6 * amax, "({xi}, {eta})");
    }
    assert!(basis.symmetry_defect() < 1e-6);
}

#[test]
fn native_inner_examples_and_errors() {
    let set = gen_fibonacci(60).unwrap();
    let spec = KernelSpec::thin_plate();
    let basis = full_lagrange(&set, &spec).unwrap();
    let a: Vec<f64> = basis.a.column(3).iter().copied().collect();
    assert_eq!(native_inner(&set, &spec, &[0.0; 60], &a).unwrap(), 0.0);
    assert!(native_inner(&set, &spec, &a, &a).unwrap() > 0.0);
    let mut bad = a.clone();
    bad[0] += 1.0;
    assert!(matches!(native_inner(&set, &spec, &bad, &a), Err(Error::ConstraintViolation { .. })));
    assert!(matches!(native_inner(&set, &spec, &a[..59], &a), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn gram_examples() {
    let harm = KernelSpec::thin_plate().harmonics();
    let p = SpherePoint::normalized(0.3, 0.1, -0.8).unwrap();
    let g = gram_discrete(&[p], &harm);
    assert!((g.trace() - 1.0 / PI).abs() < 1e-15);
    let ev = common::jacobi_eigenvalues(&g);
    assert!(ev[..3].iter().all(|v| v.abs() < 1e-15));

    let g2 = gram_discrete(&[p, p.neg()], &harm);
    for j in 1..4 {
        assert!(g2[(0, j)].abs() < 1e-16 && g2[(j, 0)].abs() < 1e-16);
    }

    let cap = cap_fibonacci_points(&SpherePoint::north_pole(), 0.4, 100);
    let g3 = gram_discrete(&cap, &harm);
    let mut naive = DMatrix::<f64>::zeros(4, 4);
    for x in &cap {
        let v = harm.eval(x);
        for k in 0..4 {
            for j in 0..4 {
                naive[(k, j)] += v[k] * v[j];
            }
        }
    }
    assert!((g3 - &naive).amax() < 1e-13 * naive.amax());

    let set = NodeSet::new(cap.clone()).unwrap();
    let idx = [3, 10, 50, 99];
    let sub: Vec<SpherePoint> = idx.iter().map(|&i| cap[i]).collect();
    assert_eq!(gram_discrete_indices(&set, &idx, &harm), gram_discrete(&sub, &harm));
}

#[test]
fn truncation_without_loss_is_identity() {
    let set = gen_fibonacci(120).unwrap();
    let basis = full_lagrange(&set, &KernelSpec::thin_plate()).unwrap();
    let all: Vec<usize> = (0..120).collect();
    let t = truncate_project(&basis, 9, &all).unwrap();
    assert!(t.tau.iter().all(|v| v.abs() < 1e-12));
    assert!(t.a_tilde.iter().zip(basis.a.column(9).iter()).all(|(a, b)| a == b));
    assert_eq!(t.c, basis.c.column(9).iter().copied().collect::<Vec<_>>());
}

#[test]
fn truncation_errors() {
    let set = gen_fibonacci(120).unwrap();
    let basis = full_lagrange(&set, &KernelSpec::thin_plate()).unwrap();
    assert!(matches!(truncate_project(&basis, 9, &[1, 2, 3, 4, 5]), Err(Error::InvalidArgument(_))));
    assert!(matches!(truncate_project(&basis, 9, &[9, 10]), Err(Error::NonUnisolventNeighborhood { .. })));
    assert!(truncate_project(&basis, 9, &[9, 500]).is_err());
}

#[test]
fn truncation_error_decreases_with_support_radius() {
    let set = gen_fibonacci(900).unwrap();
    let spec = KernelSpec::thin_plate();
    let basis = full_lagrange(&set, &spec).unwrap();
    let h = mesh_stats(&set, 200_000).h;
    let index = NeighborIndex::build(set.points());
    let probes = spherelag::geom::fibonacci_points(5000);
    let xi = set.nearest_to(&SpherePoint::north_pole());
    let chi = basis.function(xi);
    let exact = chi.eval_many(&probes);
    let mut last = f64::INFINITY;
    for k in [1.0, 1.5, 2.0, 3.0, 4.0] {
        let support = index.ball(set.point(xi), k * h * (1.0 / h).ln());
        let t = truncate_project(&basis, xi, &support).unwrap();
        // constraints hold on the support
        let pts: Vec<SpherePoint> = support.iter().map(|&i| *set.point(i)).collect();
        assert!(moment_residual(&pts, &spec.harmonics(), &t.a_tilde) < 1e-10);
        // the correction lies in span{φ_j|_Υ}
        let phi = poly_matrix(&spec.harmonics(), &pts);
        let kept = DVector::from_iterator(support.len(), support.iter().map(|&i| basis.a[(i, xi)]));
        let delta = DVector::from_column_slice(&t.a_tilde) - kept;
        assert!((delta - &phi * DVector::from_column_slice(&t.tau)).amax() < 1e-12);
        let err = t.to_expansion(&basis).eval_many(&probes).iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < last, "K = {k}: {err} after {last}");
        last = err;
    }
    assert!(last < 1e-4);
}

#[test]
fn coefficients_decay_exponentially() {
    for n in [900, 2500] {
        let set = gen_fibonacci(n).unwrap();
        let spec = KernelSpec::thin_plate();
        let stats = mesh_stats(&set, 100 * n);
        let xi = set.nearest_to(&SpherePoint::north_pole());
        let chi = FullSystem::new(&set, &spec).unwrap().cardinal(xi).unwrap();
        let samples: Vec<(f64, f64)> = set
            .points()
            .iter()
            .zip(&chi.a)
            .map(|(p, a)| (geodesic_distance(p, set.point(xi)) / stats.h, a.abs()))
            .collect();
        let fit = fit_decay(&bin_envelope(&samples, 0.25), DecayKind::Coefficient, stats.q, 2).unwrap();
        assert!(fit.nu >= 0.5, "N = {n}: slope −{}", fit.nu);
    }
}

#[test]
fn interpolant_does_not_depend_on_the_polynomial_basis() {
    let set = gen_fibonacci(200).unwrap();
    let probes = common::random_points(300, 22);
    for m in [2u32, 3] {
        let spec = KernelSpec::new(m).unwrap();
        let f: Vec<f64> = set.points().iter().map(|p| (2.0 * p.x).sin() + p.y * p.z).collect();
        let harmonic = FullSystem::new(&set, &spec).unwrap().interpolate(&f).unwrap();
        let mono = Monomials { degree: m - 1 };
        let mut sys = assemble_saddle_points(&spec, &mono, set.points());
        let sol = sys.interpolate(&f).unwrap();
        for x in &probes {
            let k: f64 = set.points().iter().zip(&sol.a).map(|(z, a)| a * spec.eval(x, z)).sum();
            let p: f64 = mono.eval(x).iter().zip(&sol.c).map(|(v, c)| v * c).sum();
            assert!((k + p - harmonic.eval(x)).abs() < 1e-9, "m = {m}");
        }
    }
}

/// λ_min of `Zᵀ K Z` for an orthonormal basis `Z` of `ker Φᵀ`.
fn theta_oracle(k: &DMatrix<f64>, phi: &DMatrix<f64>) -> f64 {
    let n = k.nrows();
    let p = phi.ncols();
    let svd = phi.transpose().svd(false, true);
    let vt = svd.v_t.unwrap();
    // rows p.. of a full Vᵀ span the null space; complete it by projection
    let mut z = DMatrix::<f64>::zeros(n, n - p);
    let range = vt.rows(0, p).transpose();
    let mut col = 0;
    for e in 0..n {
        if col == n - p {
            break;
        }
        let mut v = DVector::<f64>::zeros(n);
        v[e] = 1.0;
        v -= &range * (range.transpose() * &v);
        for c in 0..col {
            let zc = z.column(c).clone_owned();
            v -= &zc * zc.dot(&v);
        }
        if v.norm() > 1e-8 {
            z.set_column(col, &v.normalize());
            col += 1;
        }
    }
    common::jacobi_eigenvalues(&(z.transpose() * k * &z))[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coefficient_norm_bound(seed in 0u64..10_000, n in 12usize..40) {
        let spec = KernelSpec::thin_plate();
        let pts = common::random_points(n, seed);
        let k = kernel_matrix(&spec, &pts, &pts);
        let phi = poly_matrix(&spec.harmonics(), &pts);
        let theta = constrained_min_eigenvalue(&k, &phi);
        prop_assert!((theta - theta_oracle(&k, &phi)).abs() < 1e-8 * theta.abs().max(1e-3));
        prop_assert!(theta > 0.0);
        let y: Vec<f64> = common::random_points(n, seed + 7).iter().map(|p| p.x + p.y * p.y).collect();
        let sol = assemble_saddle_points(&spec, &spec.harmonics(), &pts).interpolate(&y).unwrap();
        let a_norm = sol.a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(a_norm <= y_norm / theta * (1.0 + 1e-8));
    }

    #[test]
    fn truncation_satisfies_constraints(seed in 0u64..10_000, k in 10usize..60) {
        let set = gen_fibonacci(150).unwrap();
        let basis = full_lagrange(&set, &KernelSpec::thin_plate()).unwrap();
        let xi = (seed as usize) % 150;
        let support = NeighborIndex::build(set.points()).knn(xi, k);
        let t = truncate_project(&basis, xi, &support).unwrap();
        let pts: Vec<SpherePoint> = support.iter().map(|&i| *set.point(i)).collect();
        prop_assert!(moment_residual(&pts, &basis.spec.harmonics(), &t.a_tilde) < 1e-10);
        // ℓ₂-minimality: any other constraint-satisfying correction is longer
        let phi = poly_matrix(&basis.spec.harmonics(), &pts);
        let q = phi.clone().qr().q();
        let mut rng = common::rng(seed);
        let w = DVector::from_fn(pts.len(), |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let null_dir = &w - &q * (q.transpose() * &w);
        let kept = DVector::from_iterator(pts.len(), support.iter().map(|&i| basis.a[(i, xi)]));
        let corr = DVector::from_column_slice(&t.a_tilde) - &kept;
        let other = &corr + null_dir * 1e-3;
        prop_assert!(other.norm() >= corr.norm() - 1e-14);
    }
}
