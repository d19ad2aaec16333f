//! Triangle meshes: OBJ loading, procedural spheres, BVH ray queries and the
//! Laplace-Beltrami eigenbasis used as an intrinsic positional encoding.

mod bvh;
mod lbo;
mod obj;

pub use bvh::{intersect_brute as bvh_brute, intersect_triangle, Bvh, BvhNode, Hit, Ray};
pub use lbo::{lbo_basis, lbo_encode, BlockSpec, LboBasis, DEFAULT_VERTEX_BUDGET};
pub use obj::{parse_obj, write_obj};

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub positions: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Unit per-vertex normals.
    pub normals: Vec<Vec3>,
}

impl TriangleMesh {
    /// Validates indices; computes area-weighted normals when none are given.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[u32; 3]>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        for (i, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&k| k as usize >= positions.len()) {
                return Err(Error::Mesh(format!("face {i} references vertex {bad} of {}", positions.len())));
            }
        }
        let mut mesh = TriangleMesh {
            positions,
            faces,
            normals: Vec::new(),
        };
        let degenerate = (0..mesh.faces.len()).filter(|&i| mesh.face_area(i) <= 0.0).count();
        if degenerate > 0 {
            log::warn!("{degenerate} degenerate faces");
        }
        mesh.normals = match normals {
            Some(n) if n.len() == mesh.positions.len() => n
                .into_iter()
                .map(|v| v.try_normalized().ok_or_else(|| Error::Mesh("zero-length vertex normal".into())))
                .collect::<Result<_>>()?,
            Some(n) => {
                return Err(Error::Mesh(format!("{} normals for {} vertices", n.len(), mesh.positions.len())));
            }
            None => mesh.area_weighted_normals(),
        };
        Ok(mesh)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse_obj(&text, &path.display().to_string())
    }

    fn area_weighted_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::default(); self.positions.len()];
        for f in &self.faces {
            // Cross product length is twice the area: area weighting for free.
            let [a, b, c] = f.map(|k| self.positions[k as usize]);
            let n = (b - a).cross(c - a);
            for &k in f {
                acc[k as usize] = acc[k as usize] + n;
            }
        }
        acc.into_iter().map(|n| n.try_normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0))).collect()
    }

    pub fn vertex(&self, face: usize, k: usize) -> Vec3 {
        self.positions[self.faces[face][k] as usize]
    }

    pub fn face_area(&self, i: usize) -> f64 {
        let [a, b, c] = [0, 1, 2].map(|k| self.vertex(i, k));
        0.5 * (b - a).cross(c - a).length()
    }

    pub fn face_normal(&self, i: usize) -> Vec3 {
        let [a, b, c] = [0, 1, 2].map(|k| self.vertex(i, k));
        (b - a).cross(c - a).try_normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|i| self.face_area(i)).sum()
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for &p in &self.positions {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).length()
    }

    pub fn point(&self, face: usize, bary: [f64; 3]) -> Vec3 {
        let [a, b, c] = [0, 1, 2].map(|k| self.vertex(face, k));
        a * bary[0] + b * bary[1] + c * bary[2]
    }

    /// Barycentric interpolation of the vertex normals, renormalized.
    pub fn interpolated_normal(&self, face: usize, bary: [f64; 3]) -> Vec3 {
        let f = self.faces[face];
        let n = self.normals[f[0] as usize] * bary[0] + self.normals[f[1] as usize] * bary[1] + self.normals[f[2] as usize] * bary[2];
        n.try_normalized().unwrap_or_else(|| self.face_normal(face))
    }

    /// Undirected edge → incident face count.
    fn edge_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut m = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    pub fn is_manifold(&self) -> bool {
        self.edge_counts().values().all(|&c| c <= 2)
    }

    /// Every edge shared by exactly two faces.
    pub fn is_closed(&self) -> bool {
        self.edge_counts().values().all(|&c| c == 2)
    }

    pub fn unit_cube() -> Self {
        let positions = (0..8)
            .map(|i| Vec3::new((i & 1) as f64 - 0.5, ((i >> 1) & 1) as f64 - 0.5, ((i >> 2) & 1) as f64 - 0.5))
            .collect();
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let faces = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        TriangleMesh::new(positions, faces, None).expect("valid cube")
    }

    /// Subdivided icosahedron projected onto a sphere; `10·4^level + 2`
    /// vertices, with exact radial normals.
    pub fn icosphere(level: u32, radius: f64) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut pos: Vec<Vec3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
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
        for _ in 0..level {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            let mut midpoint = |a: u32, b: u32, pos: &mut Vec<Vec3>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    pos.push(((pos[a as usize] + pos[b as usize]) * 0.5).normalized());
                    (pos.len() - 1) as u32
                })
            };
            for [a, b, c] in faces {
                let ab = midpoint(a, b, &mut pos);
                let bc = midpoint(b, c, &mut pos);
                let ca = midpoint(c, a, &mut pos);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let normals = pos.clone();
        let positions = pos.into_iter().map(|p| p * radius).collect();
        TriangleMesh::new(positions, faces, Some(normals)).expect("valid icosphere")
    }

    /// Axis-aligned square in the plane `z = height`, facing +z.
    pub fn quad(half: f64, height: f64) -> Self {
        let positions = vec![
            Vec3::new(-half, -half, height),
            Vec3::new(half, -half, height),
            Vec3::new(half, half, height),
            Vec3::new(-half, half, height),
        ];
        TriangleMesh::new(positions, vec![[0, 1, 2], [0, 2, 3]], None).expect("valid quad")
    }

    /// Concatenation of two meshes.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let off = self.positions.len() as u32;
        TriangleMesh {
            positions: self.positions.iter().chain(&other.positions).copied().collect(),
            faces: self.faces.iter().copied().chain(other.faces.iter().map(|f| f.map(|k| k + off))).collect(),
            normals: self.normals.iter().chain(&other.normals).copied().collect(),
        }
    }
}
