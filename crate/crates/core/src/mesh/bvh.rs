use super::TriangleMesh;
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub dir: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: usize,
    /// Weights of the face's three vertices.
    pub bary: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode {
    pub lo: Vec3,
    pub hi: Vec3,
    /// Leaf: first index into the triangle order; inner: right child.
    pub start: u32,
    /// Triangle count (0 for inner nodes, whose left child is the next node).
    pub count: u32,
}

/// Bounding volume hierarchy over a mesh's faces (median split on the
/// longest centroid axis).
#[derive(Debug, Clone)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    /// Permutation of face indices; leaves reference contiguous ranges.
    pub order: Vec<u32>,
}

const LEAF_SIZE: usize = 4;
// Hits need strictly positive t; self-intersection is left to the caller's bias.
const T_MIN: f64 = 0.0;

fn face_bounds(mesh: &TriangleMesh, f: usize) -> (Vec3, Vec3) {
    let [a, b, c] = [0, 1, 2].map(|k| mesh.vertex(f, k));
    (a.min(b).min(c), a.max(b).max(c))
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let mut order: Vec<u32> = (0..mesh.faces.len() as u32).collect();
        let centroids: Vec<Vec3> = (0..mesh.faces.len()).map(|f| mesh.point(f, [1.0 / 3.0; 3])).collect();
        let mut nodes = Vec::with_capacity(2 * mesh.faces.len() / LEAF_SIZE + 1);
        if !order.is_empty() {
            Self::build_rec(mesh, &centroids, &mut order, 0, &mut nodes);
        }
        Bvh { nodes, order }
    }

    fn build_rec(mesh: &TriangleMesh, centroids: &[Vec3], order: &mut [u32], offset: usize, nodes: &mut Vec<BvhNode>) -> usize {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        let mut clo = lo;
        let mut chi = hi;
        for &f in order.iter() {
            let (a, b) = face_bounds(mesh, f as usize);
            lo = lo.min(a);
            hi = hi.max(b);
            clo = clo.min(centroids[f as usize]);
            chi = chi.max(centroids[f as usize]);
        }
        let idx = nodes.len();
        nodes.push(BvhNode {
            lo,
            hi,
            start: offset as u32,
            count: order.len() as u32,
        });
        let ext = chi - clo;
        if order.len() <= LEAF_SIZE || ext.max_component() <= 0.0 {
            return idx;
        }
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]).then(a.cmp(&b))
        });
        let (left, right) = order.split_at_mut(mid);
        Self::build_rec(mesh, centroids, left, offset, nodes);
        let r = Self::build_rec(mesh, centroids, right, offset + mid, nodes);
        nodes[idx].start = r as u32;
        nodes[idx].count = 0;
        idx
    }

    /// Nearest hit with `0 < t < t_max`.
    pub fn intersect(&self, mesh: &TriangleMesh, ray: &Ray, t_max: f64) -> Option<Hit> {
        self.traverse(mesh, ray, t_max, false)
    }

    /// Whether anything is hit before `t_max`.
    pub fn occluded(&self, mesh: &TriangleMesh, ray: &Ray, t_max: f64) -> bool {
        self.traverse(mesh, ray, t_max, true).is_some()
    }

    fn traverse(&self, mesh: &TriangleMesh, ray: &Ray, t_max: f64, any: bool) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<Hit> = None;
        let mut t_best = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !slab(node, ray, inv, t_best) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    if let Some(h) = intersect_triangle(mesh, f as usize, ray) {
                        // Ties resolved toward the lower face index, as in the brute-force scan.
                        if h.t < t_best || (h.t == t_best && best.is_some_and(|b| h.face < b.face)) {
                            t_best = h.t;
                            best = Some(h);
                            if any {
                                return best;
                            }
                        }
                    }
                }
            } else {
                let left = stack[sp] + 1;
                stack[sp] = node.start;
                stack[sp + 1] = left;
                sp += 2;
            }
        }
        best
    }
}

fn slab(n: &BvhNode, ray: &Ray, inv: Vec3, t_max: f64) -> bool {
    let mut t0: f64 = 0.0;
    let mut t1 = t_max;
    for a in 0..3 {
        let (o, i) = (ray.origin[a], inv[a]);
        let mut ta = (n.lo[a] - o) * i;
        let mut tb = (n.hi[a] - o) * i;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        // NaN (0·∞ on a slab boundary) keeps the box.
        if ta > t0 {
            t0 = ta;
        }
        if tb < t1 {
            t1 = tb;
        }
        if t0 > t1 * (1.0 + 4.0 * f64::EPSILON) {
            return false;
        }
    }
    true
}

/// Möller-Trumbore ray/triangle test.
pub fn intersect_triangle(mesh: &TriangleMesh, f: usize, ray: &Ray) -> Option<Hit> {
    let [a, b, c] = [0, 1, 2].map(|k| mesh.vertex(f, k));
    let e1 = b - a;
    let e2 = c - a;
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > T_MIN).then_some(Hit {
        t,
        face: f,
        bary: [1.0 - u - v, u, v],
    })
}

/// Reference all-triangle scan.
pub fn intersect_brute(mesh: &TriangleMesh, ray: &Ray, t_max: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for f in 0..mesh.faces.len() {
        if let Some(h) = intersect_triangle(mesh, f, ray) {
            if h.t < t_max && best.is_none_or(|b| h.t < b.t) {
                best = Some(h);
            }
        }
    }
    best
}
