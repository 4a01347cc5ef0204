//! Bounding-volume hierarchy over triangles.

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Squared distance from `p` to the box (0 inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let e = (self.min[k] - p[k]).max(p[k] - self.max[k]).max(0.0);
            d += e * e;
        }
        d
    }

    /// Slab test; returns the entry parameter if the ray hits within `[0, t_max]`.
    fn ray_entry(&self, origin: &Vec3, dir: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            if dir[k] == 0.0 {
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            let a = (self.min[k] - origin[k]) * inv_dir[k];
            let b = (self.max[k] - origin[k]) * inv_dir[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
    /// Barycentric coordinates of `b` and `c`.
    pub u: f64,
    pub v: f64,
}

/// Barycentric slack so that rays through shared edges and vertices are never lost.
const BARY_SLACK: f64 = 1e-12;

/// Möller–Trumbore. Returns `(t, u, v)` for hits with `t > eps`; edges count as hits.
pub fn ray_triangle_intersection(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3, eps: f64) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < eps * e1.norm() * e2.norm() * dir.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv;
    if !(-BARY_SLACK..=1.0 + BARY_SLACK).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < -BARY_SLACK || u + v > 1.0 + BARY_SLACK {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    (t > eps).then_some((t, u, v))
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Median-split AABB tree. Owns a copy of the triangles in leaf order.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    tris: Vec<[Vec3; 3]>,
    ids: Vec<usize>,
}

impl Bvh {
    pub fn new(triangles: &[[Vec3; 3]]) -> Self {
        let mut ids: Vec<usize> = (0..triangles.len()).collect();
        let centroids: Vec<Vec3> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        if !triangles.is_empty() {
            build(&mut nodes, triangles, &centroids, &mut ids, 0, triangles.len());
        }
        let tris = ids.iter().map(|&i| triangles[i]).collect();
        Bvh { nodes, tris, ids }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map_or(Aabb::empty(), |n| *n.bounds())
    }

    /// Nearest surface point to `p`: `(point, squared distance, face id)`.
    pub fn closest_point(&self, p: &Vec3) -> Option<(Vec3, f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (Vec3::zeros(), f64::INFINITY, usize::MAX);
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds().distance_squared(p)));
        while let Some((idx, d)) = stack.pop() {
            if d >= best.1 {
                continue;
            }
            match &self.nodes[idx] {
                Node::Leaf { start, end, .. } => {
                    for i in *start..*end {
                        let [a, b, c] = &self.tris[i];
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d2 = (q - p).norm_squared();
                        if d2 < best.1 {
                            best = (q, d2, self.ids[i]);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().distance_squared(p);
                    let dr = self.nodes[*right].bounds().distance_squared(p);
                    // Push the farther child first so the nearer is visited next.
                    if dl < dr {
                        stack.push((*right, dr));
                        stack.push((*left, dl));
                    } else {
                        stack.push((*left, dl));
                        stack.push((*right, dr));
                    }
                }
            }
        }
        Some(best)
    }

    /// Every intersection with `t ∈ (eps, t_max]`, unsorted.
    pub fn intersect_all(&self, origin: &Vec3, dir: &Vec3, t_max: f64, eps: f64, out: &mut Vec<RayHit>) {
        out.clear();
        if self.nodes.is_empty() {
            return;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if node.bounds().ray_entry(origin, dir, &inv, t_max).is_none() {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for i in *start..*end {
                        let [a, b, c] = &self.tris[i];
                        if let Some((t, u, v)) = ray_triangle_intersection(origin, dir, a, b, c, eps) {
                            if t <= t_max {
                                out.push(RayHit {
                                    t,
                                    face: self.ids[i],
                                    u,
                                    v,
                                });
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
    }
}

fn build(nodes: &mut Vec<Node>, tris: &[[Vec3; 3]], centroids: &[Vec3], ids: &mut [usize], start: usize, end: usize) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &i in &ids[start..end] {
        for v in &tris[i] {
            bounds.grow(v);
        }
        cbounds.grow(&centroids[i]);
    }
    let idx = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return idx;
    }
    let ext = cbounds.max - cbounds.min;
    let axis = ext.imax();
    let mid = (start + end) / 2;
    ids[start..end].select_nth_unstable_by(mid - start, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]));
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build(nodes, tris, centroids, ids, start, mid);
    let right = build(nodes, tris, centroids, ids, mid, end);
    nodes[idx] = Node::Inner { bounds, left, right };
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn closest_point_regions() {
        let a = Vec3::zeros();
        let b = Vec3::new(10.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 10.0, 0.0);
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 3.0), &a, &b, &c), a);
        assert_eq!(
            closest_point_on_triangle(&Vec3::new(2.0, 2.0, 5.0), &a, &b, &c),
            Vec3::new(2.0, 2.0, 0.0)
        );
        assert_eq!(
            closest_point_on_triangle(&Vec3::new(5.0, -4.0, 0.0), &a, &b, &c),
            Vec3::new(5.0, 0.0, 0.0)
        );
        let q = closest_point_on_triangle(&Vec3::new(10.0, 10.0, 0.0), &a, &b, &c);
        assert!((q - Vec3::new(5.0, 5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ray_hits_triangle() {
        let a = Vec3::zeros();
        let b = Vec3::new(10.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 10.0, 0.0);
        let hit = ray_triangle_intersection(&Vec3::new(1.0, 1.0, -5.0), &Vec3::z(), &a, &b, &c, 1e-9).unwrap();
        assert!((hit.0 - 5.0).abs() < 1e-12);
        assert!(ray_triangle_intersection(&Vec3::new(1.0, 1.0, 5.0), &Vec3::z(), &a, &b, &c, 1e-9).is_none());
        assert!(ray_triangle_intersection(&Vec3::new(9.0, 9.0, -5.0), &Vec3::z(), &a, &b, &c, 1e-9).is_none());
    }

    #[test]
    fn bvh_matches_brute_force() {
        let m = icosphere(60.0, 3);
        let tris: Vec<[Vec3; 3]> = (0..m.faces().len()).map(|f| m.triangle(f)).collect();
        let bvh = Bvh::new(&tris);
        let mut rng = stream_rng(1, 0);
        for _ in 0..300 {
            let p = Vec3::new(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
            );
            let (_, d2, _) = bvh.closest_point(&p).unwrap();
            let brute = tris
                .iter()
                .map(|[a, b, c]| (closest_point_on_triangle(&p, a, b, c) - p).norm_squared())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(d2, brute);
        }
        let mut hits = Vec::new();
        bvh.intersect_all(&Vec3::new(0.1, 0.2, -200.0), &Vec3::z(), f64::INFINITY, 1e-9, &mut hits);
        assert_eq!(hits.len(), 2);
    }
}
