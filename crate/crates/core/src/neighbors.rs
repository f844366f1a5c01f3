//! k-nearest-neighbor and cap queries over a node set.
//!
//! The index is a kd-tree over the R³ embedding. Chordal distance
//! `2 sin(d/2)` is monotone in geodesic distance `d`, so nearest neighbors and
//! caps in the chordal metric are the geodesic ones.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::{geodesic_distance, geodesic_to_chordal, SpherePoint};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over a set of sphere points. Query results are indices into
/// the indexed slice.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<[f64; 3]>,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    idx: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

impl NeighborIndex {
    /// Median-split construction; deterministic for a given input order.
    pub fn build(points: &[SpherePoint]) -> Self {
        let coords: Vec<[f64; 3]> = points.iter().map(SpherePoint::as_array).collect();
        let mut perm: Vec<usize> = (0..coords.len()).collect();
        let mut nodes = Vec::with_capacity(2 * coords.len() / LEAF_SIZE + 1);
        if !coords.is_empty() {
            build_node(&coords, &mut perm, 0, coords.len(), &mut nodes);
        }
        Self { points: coords, perm, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest nodes to node `center`, ascending by distance with ties
    /// broken by index. The center itself comes first. `k` is clamped to N.
    pub fn knn(&self, center: usize, k: usize) -> Vec<usize> {
        let p = self.points[center];
        self.knn_coords(&p, k)
    }

    /// The `k` nearest nodes to an arbitrary point.
    pub fn knn_point(&self, p: &SpherePoint, k: usize) -> Vec<usize> {
        self.knn_coords(&p.as_array(), k)
    }

    fn knn_coords(&self, p: &[f64; 3], k: usize) -> Vec<usize> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_visit(0, p, k, &mut heap);
        let mut out = heap.into_vec();
        out.sort_unstable();
        out.into_iter().map(|c| c.idx).collect()
    }

    fn knn_visit(&self, node: usize, p: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.perm[start..end] {
                    let cand = Candidate { dist2: dist2(p, &self.points[idx]), idx };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = p[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_visit(near, p, k, heap);
                // equal distances must still be visited for the index tie-break
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.knn_visit(far, p, k, heap);
                }
            }
        }
    }

    /// All nodes within geodesic distance `r` of `center`, ascending by
    /// distance then index.
    pub fn ball(&self, center: &SpherePoint, r: f64) -> Vec<usize> {
        if self.is_empty() {
            return Vec::new();
        }
        let chord = geodesic_to_chordal(r);
        let bound2 = chord * chord * (1.0 + 1e-12) + 1e-300;
        let p = center.as_array();
        let mut found = Vec::new();
        self.ball_visit(0, &p, bound2, &mut found);
        let mut hits: Vec<(f64, usize)> = found
            .into_iter()
            .filter_map(|idx| {
                let q = &self.points[idx];
                let d = geodesic_distance(center, &SpherePoint { x: q[0], y: q[1], z: q[2] });
                (d <= r).then_some((d, idx))
            })
            .collect();
        hits.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.into_iter().map(|(_, i)| i).collect()
    }

    fn ball_visit(&self, node: usize, p: &[f64; 3], bound2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(self.perm[start..end].iter().copied().filter(|&i| dist2(p, &self.points[i]) <= bound2));
            }
            Node::Split { dim, value, left, right } => {
                let diff = p[dim] - value;
                if diff <= 0.0 || diff * diff <= bound2 {
                    self.ball_visit(left, p, bound2, out);
                }
                if diff >= 0.0 || diff * diff <= bound2 {
                    self.ball_visit(right, p, bound2, out);
                }
            }
        }
    }
}

fn build_node(coords: &[[f64; 3]], perm: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut perm[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice.iter() {
        for d in 0..3 {
            lo[d] = lo[d].min(coords[i][d]);
            hi[d] = hi[d].max(coords[i][d]);
        }
    }
    let dim = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| coords[a][dim].total_cmp(&coords[b][dim]).then(a.cmp(&b)));
    let value = coords[slice[mid]][dim];
    // placeholder, patched once children exist
    nodes.push(Node::Leaf { start, end });
    let left = build_node(coords, perm, start, start + mid, nodes);
    let right = build_node(coords, perm, start + mid, end, nodes);
    nodes[id] = Node::Split { dim, value, left, right };
    id
}
