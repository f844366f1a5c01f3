//! Decay-rate fits for Lagrange functions and their coefficients, and
//! convergence studies for interpolation and quasi-interpolation.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{geodesic_distance, probe_points, Frame, MeshStats, NodeSet, SpherePoint};
use crate::kernel::KernelSpec;
use crate::lagrange::FullSystem;
use crate::locallag::{
    build_local_basis, quasi_interpolate, FootprintRule, InitialGuess, PreconditionedSystem, SolveOptions,
};

/// Values below this are treated as round-off.
pub const DEFAULT_PLATEAU_FLOOR: f64 = 1e-10;
/// Lower end of the fit window in units of `h`.
pub const DEFAULT_T_MIN: f64 = 2.0;
pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayKind {
    Function,
    Coefficient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub t_min: f64,
    pub floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { t_min: DEFAULT_T_MIN, floor: DEFAULT_PLATEAU_FLOOR }
    }
}

/// A fitted envelope `|v| ≈ C exp(−ν t)`, `t = d / h`. Coefficient values
/// are multiplied by `q^{2m−2}` before fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub nu: f64,
    pub c: f64,
    pub window: (f64, f64),
    pub r2: f64,
    pub kind: DecayKind,
    /// Exponent of the `q` prefactor the fitted values were divided by:
    /// 0 for function values, `2 − 2m` for coefficients.
    pub q_power: i32,
    pub n_used: usize,
    /// Fraction of all samples at or below the plateau floor.
    pub plateau_fraction: f64,
}

pub fn fit_decay(samples: &[(f64, f64)], kind: DecayKind, q: f64, m: u32) -> Result<DecayFit> {
    fit_decay_with(samples, kind, q, m, &FitOptions::default())
}

/// Least-squares line through `(t, log v)` for `t ∈ [t_min, t_plateau]`,
/// where `t_plateau` is the smallest `t` whose value is at or below the
/// floor.
pub fn fit_decay_with(samples: &[(f64, f64)], kind: DecayKind, q: f64, m: u32, opts: &FitOptions) -> Result<DecayFit> {
    let q_power = match kind {
        DecayKind::Function => 0,
        DecayKind::Coefficient => 2 - 2 * m as i32,
    };
    let scale = q.powi(-q_power);
    let below = samples.iter().filter(|s| s.1.abs() <= opts.floor).count();
    let t_plateau = samples
        .iter()
        .filter(|s| s.1.abs() <= opts.floor && s.0 >= opts.t_min)
        .map(|s| s.0)
        .fold(f64::INFINITY, f64::min);
    let used: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.0 >= opts.t_min && s.0 <= t_plateau && s.1.abs() > opts.floor)
        .map(|s| (s.0, (s.1.abs() * scale).ln()))
        .collect();
    if used.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples { got: used.len(), need: MIN_FIT_SAMPLES });
    }
    let n = used.len() as f64;
    let mt = used.iter().map(|u| u.0).sum::<f64>() / n;
    let my = used.iter().map(|u| u.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|u| (u.0 - mt).powi(2)).sum();
    let sxy: f64 = used.iter().map(|u| (u.0 - mt) * (u.1 - my)).sum();
    let syy: f64 = used.iter().map(|u| (u.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientSamples { got: 1, need: MIN_FIT_SAMPLES });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    let t_hi = used.iter().map(|u| u.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayFit {
        nu: -slope,
        c: intercept.exp(),
        window: (opts.t_min, t_hi),
        r2,
        kind,
        q_power,
        n_used: used.len(),
        plateau_fraction: if samples.is_empty() { 0.0 } else { below as f64 / samples.len() as f64 },
    })
}

/// Maximum of `|v|` within consecutive bins of width `width` in `t`, placed
/// at the bin's largest `t`. Isolated near-zero values from sign changes do
/// not survive, so the result follows the decay envelope.
pub fn bin_envelope(samples: &[(f64, f64)], width: f64) -> Vec<(f64, f64)> {
    let mut bins: std::collections::BTreeMap<i64, (f64, f64)> = Default::default();
    for &(t, v) in samples {
        let e = bins.entry((t / width).floor() as i64).or_insert((t, 0.0));
        e.0 = e.0.max(t);
        e.1 = e.1.max(v.abs());
    }
    bins.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayOptions {
    pub n_lon: usize,
    pub n_lat: usize,
    /// Bin width in `t` for the coefficient envelope.
    pub coefficient_bin: f64,
    pub fit: FitOptions,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self { n_lon: 400, n_lat: 200, coefficient_bin: 0.25, fit: FitOptions::default() }
    }
}

#[derive(Debug)]
pub struct DecayStudy {
    pub center: usize,
    pub stats: MeshStats,
    /// `(θ / h, max |χ_ξ|)` over each colatitude band about the center.
    pub function_samples: Vec<(f64, f64)>,
    /// `(d(ξ, ζ) / h, |A_{ξ,ζ}|)` for every `ζ ≠ ξ`.
    pub coefficient_samples: Vec<(f64, f64)>,
    pub function_fit: Result<DecayFit>,
    pub coefficient_fit: Result<DecayFit>,
}

/// Computes `χ_center` from the full system and fits the decay of its band
/// maxima and of its coefficients.
pub fn decay_study(set: &NodeSet, spec: &KernelSpec, center: usize, opts: &DecayOptions) -> Result<DecayStudy> {
    if center >= set.len() {
        return Err(Error::InvalidArgument(format!("center index {center} out of range for {} nodes", set.len())));
    }
    if opts.n_lon == 0 || opts.n_lat == 0 {
        return Err(Error::InvalidArgument("probe grid must be non-empty".into()));
    }
    let stats = set.stats_or_compute();
    let chi = FullSystem::new(set, spec)?.cardinal(center)?;
    let xi = *set.point(center);
    let frame = Frame::centered_at(&xi);

    let function_samples: Vec<(f64, f64)> = (0..opts.n_lat)
        .into_par_iter()
        .map(|i| {
            let theta = (i as f64 + 0.5) * PI / opts.n_lat as f64;
            let (st, ct) = theta.sin_cos();
            let peak = (0..opts.n_lon)
                .map(|k| {
                    let phi = (k as f64 + 0.5) * 2.0 * PI / opts.n_lon as f64;
                    let local = SpherePoint { x: st * phi.cos(), y: st * phi.sin(), z: ct };
                    chi.eval(&frame.to_global(&local)).abs()
                })
                .fold(0.0, f64::max);
            (theta / stats.h, peak)
        })
        .collect();

    let coefficient_samples: Vec<(f64, f64)> = (0..set.len())
        .filter(|&j| j != center)
        .map(|j| (geodesic_distance(&xi, set.point(j)) / stats.h, chi.a[j].abs()))
        .collect();

    let m = spec.m();
    let function_fit = fit_decay_with(&function_samples, DecayKind::Function, stats.q, m, &opts.fit);
    let envelope = bin_envelope(&coefficient_samples, opts.coefficient_bin);
    let coefficient_fit = fit_decay_with(&envelope, DecayKind::Coefficient, stats.q, m, &opts.fit).map(|mut f| {
        let below = coefficient_samples.iter().filter(|s| s.1 <= opts.fit.floor).count();
        f.plateau_fraction = below as f64 / coefficient_samples.len().max(1) as f64;
        f
    });
    Ok(DecayStudy { center, stats, function_samples, coefficient_samples, function_fit, coefficient_fit })
}

/// One row of the decay-constant table.
#[derive(Debug)]
pub struct Table1Row {
    pub n: usize,
    pub h: f64,
    pub rho: f64,
    pub function_fit: Result<DecayFit>,
    pub coefficient_fit: Result<DecayFit>,
}

/// Decay study about the node nearest the north pole for each set.
pub fn table1(sets: &[NodeSet], spec: &KernelSpec, opts: &DecayOptions) -> Result<Vec<Table1Row>> {
    sets.iter()
        .map(|set| {
            let center = set.nearest_to(&SpherePoint::north_pole());
            let study = decay_study(set, spec, center, opts)?;
            Ok(Table1Row {
                n: set.len(),
                h: study.stats.h,
                rho: study.stats.rho,
                function_fit: study.function_fit,
                coefficient_fit: study.coefficient_fit,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceOptions {
    pub n_probe: usize,
    pub rule: FootprintRule,
    /// Relative residual for the iterative interpolation solves.
    pub solve_tol: f64,
    pub maxit: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self { n_probe: 20_000, rule: FootprintRule::default(), solve_tol: 1e-10, maxit: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub interp_error: f64,
    pub quasi_error: f64,
    /// Observed order relative to the previous row.
    pub interp_order: Option<f64>,
    pub quasi_order: Option<f64>,
    pub gmres_iterations: usize,
}

/// L∞ errors of the interpolant and quasi-interpolant of `f` on a fixed probe
/// set, for each node set in turn.
pub fn convergence_study<F>(
    sets: &[NodeSet],
    spec: &KernelSpec,
    f: F,
    opts: &ConvergenceOptions,
) -> Result<Vec<ConvergenceRow>>
where
    F: Fn(&SpherePoint) -> f64 + Sync,
{
    if sets.len() < 3 {
        return Err(Error::InvalidArgument(format!("a convergence study needs at least 3 node sets, got {}", sets.len())));
    }
    let probes = probe_points(opts.n_probe);
    let exact: Vec<f64> = probes.par_iter().map(&f).collect();
    let max_err = |vals: Vec<f64>| vals.iter().zip(&exact).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(sets.len());
    for set in sets {
        let stats = set.stats_or_compute();
        let data: Vec<f64> = set.points().iter().map(&f).collect();
        let basis = build_local_basis(set, spec, opts.rule)?;
        let quasi = quasi_interpolate(&basis, &data)?;
        let sys = PreconditionedSystem::new(&basis)?;
        let sol = sys.solve(&data, &SolveOptions { tol: opts.solve_tol, maxit: opts.maxit, x0: InitialGuess::Data })?;
        let interp = sol.expansion(&basis);
        let interp_error = max_err(interp.eval_many(&probes));
        let quasi_error = max_err(quasi.eval_many(&probes));
        let order = |prev: f64, cur: f64, hp: f64| {
            if prev > 0.0 && cur > 0.0 && hp != stats.h {
                Some((prev / cur).ln() / (hp / stats.h).ln())
            } else {
                None
            }
        };
        let (interp_order, quasi_order) = match rows.last() {
            Some(p) => (order(p.interp_error, interp_error, p.h), order(p.quasi_error, quasi_error, p.h)),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            n: set.len(),
            h: stats.h,
            interp_error,
            quasi_error,
            interp_order,
            quasi_order,
            gmres_iterations: sol.report.iterations,
        });
    }
    Ok(rows)
}
