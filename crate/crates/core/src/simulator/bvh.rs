//! Axis-aligned bounding-volume hierarchy over triangles.
//!
//! Nodes split at the median centroid along the longest axis of the centroid
//! bounds. Boxes are padded so that the slab test is conservative: any
//! triangle the exact intersection routine reports is always reached by the
//! traversal, which therefore returns exactly what a brute-force loop returns.

use nalgebra::Vector3;

use super::TriangleMesh;

/// Smallest accepted hit distance along a ray.
pub const T_MIN: f64 = 1e-9;
const LEAF_SIZE: usize = 4;

/// Nearest intersection: distance along the (unit) ray direction and face index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: usize,
}

impl Hit {
    /// Strict ordering by distance, then by face index.
    fn better_than(&self, other: &Option<Hit>) -> bool {
        match other {
            None => true,
            Some(o) => self.t < o.t || (self.t == o.t && self.face < o.face),
        }
    }
}

/// Möller–Trumbore ray/triangle intersection, inclusive of edges and vertices.
pub fn intersect_triangle(origin: &Vector3<f64>, dir: &Vector3<f64>, tri: [&Vector3<f64>; 3]) -> Option<f64> {
    let [v0, v1, v2] = tri;
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > T_MIN).then_some(t)
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vector3<f64>,
    max: Vector3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self { min: Vector3::repeat(f64::INFINITY), max: Vector3::repeat(f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn padded(mut self, pad: f64) -> Self {
        self.min.add_scalar_mut(-pad);
        self.max.add_scalar_mut(pad);
        self
    }

    /// Entry distance of the ray into the box, if it enters before `limit`.
    fn entry(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, limit: f64) -> Option<f64> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, limit);
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let (mut near, mut far) = ((self.min[a] - origin[a]) * inv, (self.max[a] - origin[a]) * inv);
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let n = mesh.faces.len();
        let mut extent = Aabb::empty();
        mesh.vertices.iter().for_each(|v| extent.grow(v));
        let scale = if n == 0 { 1.0 } else { (extent.max - extent.min).amax().max(extent.max.amax().abs()).max(extent.min.amax().abs()) };
        let pad = 1e-9 * scale.max(1.0);
        let boxes: Vec<Aabb> = mesh
            .faces
            .iter()
            .map(|f| {
                let mut b = Aabb::empty();
                f.iter().for_each(|&i| b.grow(&mesh.vertices[i]));
                b.padded(pad)
            })
            .collect();
        let centroids: Vec<Vector3<f64>> = boxes.iter().map(|b| (b.min + b.max) * 0.5).collect();
        let mut bvh = Bvh { nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1), order: (0..n).collect() };
        if n > 0 {
            bvh.split(&boxes, &centroids, 0, n);
        }
        bvh
    }

    fn split(&mut self, boxes: &[Aabb], centroids: &[Vector3<f64>], start: usize, end: usize) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &f in &self.order[start..end] {
            bounds.grow(&boxes[f].min);
            bounds.grow(&boxes[f].max);
            cbounds.grow(&centroids[f]);
        }
        let index = self.nodes.len();
        let count = end - start;
        let spread = cbounds.max - cbounds.min;
        if count <= LEAF_SIZE || spread.amax() == 0.0 {
            self.nodes.push(Node::Leaf { bounds, start, count });
            return index;
        }
        let axis = spread.imax();
        // deterministic median split: sort by centroid then face index
        self.order[start..end].sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let mid = start + count / 2;
        self.nodes.push(Node::Leaf { bounds, start, count });
        let left = self.split(boxes, centroids, start, mid);
        let right = self.split(boxes, centroids, mid, end);
        self.nodes[index] = Node::Inner { bounds, left, right };
        index
    }

    /// Nearest hit along the ray, ties broken by the smaller face index.
    pub fn intersect(&self, mesh: &TriangleMesh, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            let limit = best.map_or(f64::INFINITY, |h| h.t);
            if node.bounds().entry(origin, dir, limit).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for &face in &self.order[start..start + count] {
                        if let Some(t) = intersect_triangle(origin, dir, mesh.triangle(face)) {
                            let hit = Hit { t, face };
                            if hit.better_than(&best) {
                                best = Some(hit);
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        best
    }
}

/// Reference intersection testing every face.
pub fn intersect_brute_force(mesh: &TriangleMesh, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
    let mut best = None;
    for face in 0..mesh.faces.len() {
        if let Some(t) = intersect_triangle(origin, dir, mesh.triangle(face)) {
            let hit = Hit { t, face };
            if hit.better_than(&best) {
                best = Some(hit);
            }
        }
    }
    best
}
