//! Exact nearest-neighbour search over a static point set.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// 3-d tree with median splits on the axis of largest spread.
///
/// Queries are exact: among points at equal distance the smallest index wins,
/// so results do not depend on the tree layout.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut tree = KdTree { points: points.to_vec(), order: (0..points.len()).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            tree.split(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn split(&mut self, start: usize, end: usize) -> usize {
        let index = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return index;
        }
        let (mut lo, mut hi) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let spread = hi - lo;
        if spread.amax() == 0.0 {
            return index;
        }
        let axis = spread.imax();
        let pts = &self.points;
        self.order[start..end].sort_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let mid = start + (end - start) / 2;
        let value = self.points[self.order[mid]][axis];
        let left = self.split(start, mid);
        let right = self.split(mid, end);
        self.nodes[index] = Node::Split { axis, value, left, right };
        index
    }

    /// Nearest point to `q` with squared distance at most `max_dist2`, as
    /// `(index, squared distance)`.
    pub fn nearest(&self, q: &Vector3<f64>, max_dist2: f64) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        self.search(0, q, max_dist2, &mut best);
        best
    }

    fn search(&self, node: usize, q: &Vector3<f64>, max_dist2: f64, best: &mut Option<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 > max_dist2 {
                        continue;
                    }
                    let better = match *best {
                        None => true,
                        Some((j, b)) => d2 < b || (d2 == b && i < j),
                    };
                    if better {
                        *best = Some((i, d2));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, max_dist2, best);
                let bound = best.map_or(max_dist2, |(_, b)| b);
                // `<=` keeps equal-distance candidates with a smaller index reachable
                if diff * diff <= bound {
                    self.search(far, q, max_dist2, best);
                }
            }
        }
    }
}

/// Reference search over every point, same tie-break.
pub fn nearest_brute_force(points: &[Vector3<f64>], q: &Vector3<f64>, max_dist2: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - q).norm_squared();
        if d2 <= max_dist2 && best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best
}
