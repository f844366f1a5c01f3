//! Points on the unit sphere, node-set generators, node files and mesh statistics.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::neighbors::NeighborIndex;

/// Largest icosahedral refinement level generated unless a caller raises the cap.
pub const DEFAULT_MAX_ICOSAHEDRAL_LEVEL: u32 = 9;

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653; // π(3 − √5)

/// A unit vector in R³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SpherePoint {
    /// Projects `(x, y, z)` onto the sphere. Returns `None` for the zero vector
    /// or non-finite input.
    pub fn normalized(x: f64, y: f64, z: f64) -> Option<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        Some(Self { x: x / norm, y: y / norm, z: z / norm })
    }

    pub fn from_array(v: [f64; 3]) -> Option<Self> {
        Self::normalized(v[0], v[1], v[2])
    }

    /// Longitude in `[-π, π]` and latitude in `[-π/2, π/2]`, radians.
    pub fn from_lon_lat(lon: f64, lat: f64) -> Self {
        let (sl, cl) = lat.sin_cos();
        let (so, co) = lon.sin_cos();
        Self { x: cl * co, y: cl * so, z: sl }
    }

    pub fn lon_lat(&self) -> (f64, f64) {
        (self.y.atan2(self.x), self.z.clamp(-1.0, 1.0).asin())
    }

    pub fn north_pole() -> Self {
        Self { x: 0.0, y: 0.0, z: 1.0 }
    }

    #[inline]
    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(&self, other: &SpherePoint) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(&self, other: &SpherePoint) -> [f64; 3] {
        [
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        ]
    }

    #[inline]
    pub fn neg(&self) -> Self {
        Self { x: -self.x, y: -self.y, z: -self.z }
    }
}

/// Great-circle distance in `[0, π]`, computed as `atan2(‖a×b‖, a·b)`.
#[inline]
pub fn geodesic_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    let c = a.cross(b);
    let s = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    s.atan2(a.dot(b))
}

/// Euclidean distance in R³ between two sphere points, `2 sin(d/2)`.
#[inline]
pub fn chordal_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Chordal length corresponding to a geodesic radius.
#[inline]
pub fn geodesic_to_chordal(r: f64) -> f64 {
    2.0 * (0.5 * r.clamp(0.0, PI)).sin()
}

/// Area of the spherical cap `B(α, r)`: `2π(1 − cos r)`.
pub fn cap_area(r: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&r) {
        return Err(Error::OutOfRange { what: "cap radius", value: r });
    }
    Ok(2.0 * PI * (1.0 - r.cos()))
}

/// Orthonormal frame whose third axis is a given point; maps that point to
/// the north pole.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    e1: [f64; 3],
    e2: [f64; 3],
    e3: [f64; 3],
}

impl Frame {
    pub fn centered_at(c: &SpherePoint) -> Self {
        let e3 = c.as_array();
        // pick the coordinate axis least aligned with c
        let helper = if c.x.abs() <= c.y.abs() && c.x.abs() <= c.z.abs() {
            SpherePoint { x: 1.0, y: 0.0, z: 0.0 }
        } else if c.y.abs() <= c.z.abs() {
            SpherePoint { x: 0.0, y: 1.0, z: 0.0 }
        } else {
            SpherePoint { x: 0.0, y: 0.0, z: 1.0 }
        };
        let e1 = SpherePoint::from_array(helper.cross(c)).expect("helper axis is not parallel");
        let e2 = c.cross(&e1);
        Self { e1: e1.as_array(), e2, e3 }
    }

    /// Coordinates of `p` in this frame.
    pub fn to_local(&self, p: &SpherePoint) -> SpherePoint {
        let v = p.as_array();
        let d = |e: &[f64; 3]| e[0] * v[0] + e[1] * v[1] + e[2] * v[2];
        SpherePoint { x: d(&self.e1), y: d(&self.e2), z: d(&self.e3) }
    }

    /// Inverse of [`Frame::to_local`].
    pub fn to_global(&self, p: &SpherePoint) -> SpherePoint {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.e1[k] * p.x + self.e2[k] * p.y + self.e3[k] * p.z;
        }
        SpherePoint { x: out[0], y: out[1], z: out[2] }
    }
}

/// Geodesic mesh measures of a node set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    /// Mesh norm (fill distance), estimated from below by probing.
    pub h: f64,
    /// Separation radius, half the minimal pairwise distance.
    pub q: f64,
    /// Mesh ratio `h / q`.
    pub rho: f64,
    pub n_probe: usize,
}

/// An ordered set of distinct centers on the sphere. The position of a point
/// in the list is its identity.
#[derive(Debug, Clone)]
pub struct NodeSet {
    points: Vec<SpherePoint>,
    stats: Option<MeshStats>,
}

impl NodeSet {
    /// Builds a node set, rejecting coincident points.
    pub fn new(points: Vec<SpherePoint>) -> Result<Self> {
        if let Some((i, j)) = find_duplicate(&points) {
            return Err(Error::DuplicatePoint { first: i, second: j });
        }
        Ok(Self { points, stats: None })
    }

    fn trusted(points: Vec<SpherePoint>) -> Self {
        Self { points, stats: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &SpherePoint {
        &self.points[i]
    }

    pub fn stats(&self) -> Option<&MeshStats> {
        self.stats.as_ref()
    }

    /// Computes mesh statistics with the default probe count and caches them.
    pub fn with_stats(mut self) -> Self {
        let stats = mesh_stats(&self, default_probe_count(self.len()));
        self.stats = Some(stats);
        self
    }

    /// Returns cached statistics, computing them with the default probe count
    /// when absent.
    pub fn stats_or_compute(&self) -> MeshStats {
        self.stats.unwrap_or_else(|| mesh_stats(self, default_probe_count(self.len())))
    }

    /// Index of the node closest to `p`.
    pub fn nearest_to(&self, p: &SpherePoint) -> usize {
        self.points
            .iter()
            .enumerate()
            .map(|(i, q)| (i, q.dot(p)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0
    }
}

/// Returns the first pair of (near-)coincident points, ordered by index.
fn find_duplicate(points: &[SpherePoint]) -> Option<(usize, usize)> {
    if points.len() < 2 {
        return None;
    }
    let index = NeighborIndex::build(points);
    let mut found: Option<(usize, usize)> = None;
    for i in 0..points.len() {
        for j in index.knn_point(&points[i], 2) {
            if j != i && geodesic_distance(&points[i], &points[j]) < 1e-14 {
                let pair = (i.min(j), i.max(j));
                if found.is_none_or(|f| pair < f) {
                    found = Some(pair);
                }
            }
        }
    }
    found
}

/// The `10·4^level + 2` vertices of the geodesic icosahedral grid.
pub fn gen_icosahedral(level: u32) -> Result<NodeSet> {
    gen_icosahedral_capped(level, DEFAULT_MAX_ICOSAHEDRAL_LEVEL)
}

/// Icosahedral grid by recursive bisection of the icosahedron's edges, with
/// each new midpoint projected to the sphere. The 12 base vertices come first,
/// then each level's midpoints in face-traversal order.
pub fn gen_icosahedral_capped(level: u32, max_level: u32) -> Result<NodeSet> {
    if level > max_level {
        return Err(Error::TooLarge {
            what: "icosahedral level",
            n: level as usize,
            cap: max_level as usize,
        });
    }
    let (mut points, mut faces) = icosahedron();
    let expected = 10 * 4usize.pow(level) + 2;
    points.reserve(expected - points.len());
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3 / 2);
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, points: &mut Vec<SpherePoint>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (pa, pb) = (points[a], points[b]);
                points.push(SpherePoint::normalized(pa.x + pb.x, pa.y + pb.y, pa.z + pb.z).unwrap());
                points.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut points);
            let bc = midpoint(b, c, &mut points);
            let ca = midpoint(c, a, &mut points);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    debug_assert_eq!(points.len(), expected);
    Ok(NodeSet::trusted(points))
}

/// Vertices and faces of the regular icosahedron.
fn icosahedron() -> (Vec<SpherePoint>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let base = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let points: Vec<SpherePoint> = base.iter().map(|v| SpherePoint::from_array(*v).unwrap()).collect();
    let faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (points, faces)
}

/// Largest subdivision frequency accepted by [`gen_icosahedral_frequency`].
pub const MAX_ICOSAHEDRAL_FREQUENCY: u32 = 512;

/// The `10·k² + 2` points of the frequency-`k` geodesic icosahedral grid:
/// each face is split into `k²` triangles on a flat barycentric lattice and
/// the lattice points are projected to the sphere. Frequencies 48 and 96
/// give the 23042- and 92162-point sets that bisection cannot produce.
/// Ordering: the 12 base vertices, then new points in face-traversal order.
pub fn gen_icosahedral_frequency(k: u32) -> Result<NodeSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("icosahedral frequency must be at least 1".into()));
    }
    if k > MAX_ICOSAHEDRAL_FREQUENCY {
        return Err(Error::TooLarge {
            what: "icosahedral frequency",
            n: k as usize,
            cap: MAX_ICOSAHEDRAL_FREQUENCY as usize,
        });
    }
    let (mut points, faces) = icosahedron();
    let base: Vec<[f64; 3]> = points.iter().map(SpherePoint::as_array).collect();
    let k = k as usize;
    // a lattice point is identified exactly by its nonzero integer weights
    // on the base vertices, so points on shared edges are found once
    let mut seen: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    for &[a, b, c] in &faces {
        for i in 0..=k {
            for j in 0..=(k - i) {
                let w = [(a, k - i - j), (b, i), (c, j)];
                let mut key: Vec<(usize, usize)> = w.iter().copied().filter(|x| x.1 > 0).collect();
                if key.len() == 1 {
                    continue;
                }
                key.sort_unstable();
                seen.entry(key).or_insert_with(|| {
                    let v = w.iter().fold([0.0; 3], |acc, &(vi, wi)| {
                        let f = wi as f64;
                        [acc[0] + f * base[vi][0], acc[1] + f * base[vi][1], acc[2] + f * base[vi][2]]
                    });
                    points.push(SpherePoint::from_array(v).unwrap());
                    points.len() - 1
                });
            }
        }
    }
    debug_assert_eq!(points.len(), 10 * k * k + 2);
    Ok(NodeSet::trusted(points))
}

/// Spherical Fibonacci lattice with `n` points.
pub fn gen_fibonacci(n: usize) -> Result<NodeSet> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Fibonacci set needs n >= 2, got {n}")));
    }
    Ok(NodeSet::trusted(fibonacci_points(n)))
}

/// Fibonacci lattice points: equal-area latitude rings, golden-angle longitudes.
pub fn fibonacci_points(n: usize) -> Vec<SpherePoint> {
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let (s, c) = (GOLDEN_ANGLE * i as f64).sin_cos();
            SpherePoint { x: r * c, y: r * s, z }
        })
        .collect()
}

/// Fibonacci-style points filling the cap `B(center, r)` with equal area each.
pub fn cap_fibonacci_points(center: &SpherePoint, r: f64, n: usize) -> Vec<SpherePoint> {
    let frame = Frame::centered_at(center);
    let span = 1.0 - r.cos();
    (0..n)
        .map(|i| {
            let z = 1.0 - span * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let (s, c) = (GOLDEN_ANGLE * i as f64).sin_cos();
            frame.to_global(&SpherePoint { x: rho * c, y: rho * s, z })
        })
        .collect()
}

/// First `n` terms of a nested low-discrepancy sequence on the sphere
/// (additive recurrence with the plastic-number constants, mapped equal-area).
/// Prefixes are nested, so any maximum over them is monotone in `n`.
pub fn probe_points(n: usize) -> Vec<SpherePoint> {
    const G: f64 = 1.324_717_957_244_746;
    let (a1, a2) = (1.0 / G, 1.0 / (G * G));
    (0..n)
        .map(|i| {
            let k = i as f64 + 0.5;
            let u = (0.5 + a1 * k).fract();
            let v = (0.5 + a2 * k).fract();
            let z = 1.0 - 2.0 * u;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let (s, c) = (2.0 * PI * v).sin_cos();
            SpherePoint { x: r * c, y: r * s, z }
        })
        .collect()
}

/// Regular longitude–latitude grid (`n_lat` rows from north to south, cell
/// centers, `n_lon` columns), row-major.
pub fn lonlat_grid(n_lat: usize, n_lon: usize) -> Vec<SpherePoint> {
    let mut out = Vec::with_capacity(n_lat * n_lon);
    for i in 0..n_lat {
        let lat = PI / 2.0 - PI * (i as f64 + 0.5) / n_lat as f64;
        for j in 0..n_lon {
            let lon = -PI + 2.0 * PI * (j as f64 + 0.5) / n_lon as f64;
            out.push(SpherePoint::from_lon_lat(lon, lat));
        }
    }
    out
}

pub fn default_probe_count(n: usize) -> usize {
    (100 * n).max(100_000)
}

/// Separation radius exactly (nearest-neighbor search) and mesh norm from
/// below: for each probe the distance to its nearest node, together with the
/// distance from the circumcenter of its three nearest nodes to the node set.
pub fn mesh_stats(set: &NodeSet, probe_n: usize) -> MeshStats {
    let points = set.points();
    let index = NeighborIndex::build(points);
    let q = 0.5 * min_pairwise_distance(points, &index);
    let probes = probe_points(probe_n);
    let nearest_dist = |p: &SpherePoint| {
        let j = index.knn_point(p, 1)[0];
        geodesic_distance(p, &points[j])
    };
    let h = probes
        .iter()
        .map(|p| {
            let mut best = nearest_dist(p);
            if points.len() >= 3 {
                let tri = index.knn_point(p, 3);
                if let Some(c) = circumcenter(&points[tri[0]], &points[tri[1]], &points[tri[2]]) {
                    best = best.max(nearest_dist(&c));
                }
            }
            best
        })
        .fold(0.0, f64::max);
    MeshStats { h, q, rho: h / q, n_probe: probe_n }
}

fn min_pairwise_distance(points: &[SpherePoint], index: &NeighborIndex) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    (0..points.len())
        .map(|i| {
            let nn = index.knn(i, 2)[1];
            geodesic_distance(&points[i], &points[nn])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Point on the sphere equidistant from `a`, `b`, `c`, on the same side as the
/// triangle.
fn circumcenter(a: &SpherePoint, b: &SpherePoint, c: &SpherePoint) -> Option<SpherePoint> {
    let u = [b.x - a.x, b.y - a.y, b.z - a.z];
    let v = [c.x - a.x, c.y - a.y, c.z - a.z];
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let p = SpherePoint::from_array(n)?;
    Some(if p.dot(a) < 0.0 { p.neg() } else { p })
}

/// Result of reading a node file.
#[derive(Debug, Clone)]
pub struct LoadedNodes {
    pub nodes: NodeSet,
    /// Rows whose vector was not of unit length and had to be normalized.
    pub normalized_rows: usize,
}

/// Reads a node file: one `x y z` row per point, `#` comment lines and blank
/// lines ignored.
pub fn load_nodes(path: impl AsRef<Path>) -> Result<LoadedNodes> {
    parse_nodes(&fs::read_to_string(path)?)
}

pub fn parse_nodes(text: &str) -> Result<LoadedNodes> {
    let mut points = Vec::new();
    let mut lines = Vec::new();
    let mut normalized_rows = 0;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 coordinates, found {}", fields.len()),
            });
        }
        let mut v = [0.0; 3];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("bad number {f:?}: {e}"),
            })?;
        }
        let mut p = SpherePoint::from_array(v).ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "zero or non-finite vector".into(),
        })?;
        let norm2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if (norm2 - 1.0).abs() > 1e-12 {
            normalized_rows += 1;
        } else {
            // keep unit rows verbatim so that save/load round trips exactly
            p = SpherePoint { x: v[0], y: v[1], z: v[2] };
        }
        points.push(p);
        lines.push(line_no);
    }
    if let Some((i, j)) = find_duplicate(&points) {
        return Err(Error::DuplicatePoint { first: lines[i], second: lines[j] });
    }
    Ok(LoadedNodes { nodes: NodeSet::trusted(points), normalized_rows })
}

pub fn format_nodes(set: &NodeSet, header: &[String]) -> String {
    let mut out = String::with_capacity(set.len() * 64);
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for p in set.points() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

/// Writes coordinates with shortest round-trip formatting.
pub fn save_nodes(set: &NodeSet, path: impl AsRef<Path>, header: &[String]) -> Result<()> {
    fs::write(path, format_nodes(set, header))?;
    Ok(())
}
