use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Largest vertex count handled by the dense eigensolver.
pub const DEFAULT_VERTEX_BUDGET: usize = 3000;

/// Eigenfunctions of the cotangent Laplace-Beltrami operator.
#[derive(Debug, Clone, PartialEq)]
pub struct LboBasis {
    pub k: usize,
    /// Ascending, nonnegative.
    pub eigenvalues: Vec<f64>,
    /// `n_vertices × k`, row-major; mass-orthonormal columns.
    pub values: Vec<f64>,
    /// Lumped vertex masses.
    pub mass: Vec<f64>,
}

impl LboBasis {
    pub fn vertex_values(&self, v: usize) -> &[f64] {
        &self.values[v * self.k..(v + 1) * self.k]
    }

    pub fn eigenfunction(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.k).copied().collect()
    }
}

/// Half-open eigenfunction index ranges concatenated into the encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec(pub Vec<(usize, usize)>);

impl BlockSpec {
    /// First 64 eigenfunctions, then blocks of 16 up to `k`.
    pub fn default_for(k: usize) -> BlockSpec {
        let mut blocks = vec![(0, k.min(64))];
        let mut s = 64;
        while s < k {
            blocks.push((s, (s + 16).min(k)));
            s += 16;
        }
        BlockSpec(blocks)
    }

    pub fn dim(&self) -> usize {
        self.0.iter().map(|(a, b)| b - a).sum()
    }
}

fn cot(a: crate::math::Vec3, b: crate::math::Vec3) -> f64 {
    a.dot(b) / a.cross(b).length().max(1e-300)
}

/// Sparse-in-spirit assembly of cotangent stiffness `L` and lumped mass.
pub fn cotangent_laplacian(mesh: &TriangleMesh) -> (DMatrix<f64>, Vec<f64>) {
    let n = mesh.positions.len();
    let mut l = DMatrix::zeros(n, n);
    let mut mass = vec![0.0; n];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let area = mesh.face_area(fi);
        for k in 0..3 {
            let (i, j, o) = (f[k] as usize, f[(k + 1) % 3] as usize, f[(k + 2) % 3] as usize);
            let p = &mesh.positions;
            let w = 0.5 * cot(p[i] - p[o], p[j] - p[o]);
            l[(i, j)] -= w;
            l[(j, i)] -= w;
            l[(i, i)] += w;
            l[(j, j)] += w;
            mass[f[k] as usize] += area / 3.0;
        }
    }
    (l, mass)
}

/// First `k` generalized eigenpairs `L φ = λ M φ`. Each eigenfunction's sign
/// is fixed so that its largest-magnitude entry is positive.
pub fn lbo_basis(mesh: &TriangleMesh, k: usize, vertex_budget: usize) -> Result<LboBasis> {
    let n = mesh.positions.len();
    if n > vertex_budget {
        return Err(Error::Budget {
            vertices: n,
            budget: vertex_budget,
        });
    }
    if !mesh.is_manifold() {
        return Err(Error::Mesh("non-manifold mesh: an edge has more than two faces".into()));
    }
    if !mesh.is_closed() {
        log::warn!("mesh is not closed; boundary uses natural conditions");
    }
    if k == 0 || k > n {
        return Err(Error::Config(format!("requested {k} eigenfunctions of a {n}-vertex mesh")));
    }
    let (l, mass) = cotangent_laplacian(mesh);
    if mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Mesh("vertex with zero area".into()));
    }
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |i, j| l[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let eig = SymmetricEigen::new(a);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = vec![0.0; n * k];
    let mut eigenvalues = Vec::with_capacity(k);
    for (c, &e) in idx.iter().take(k).enumerate() {
        let col: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, e)] * inv_sqrt[i]).collect();
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        let sign = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            values[i * k + c] = sign * col[i];
        }
        // Round-off can leave the kernel slightly negative.
        eigenvalues.push(eig.eigenvalues[e].max(0.0));
    }
    for w in 1..eigenvalues.len() {
        if eigenvalues[w] < eigenvalues[w - 1] {
            eigenvalues[w] = eigenvalues[w - 1];
        }
    }
    Ok(LboBasis {
        k,
        eigenvalues,
        values,
        mass,
    })
}

/// Barycentric interpolation of the selected eigenfunctions at a surface point.
pub fn lbo_encode(basis: &LboBasis, mesh: &TriangleMesh, face: usize, bary: [f64; 3], blocks: &BlockSpec) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(blocks.dim());
    let f = mesh.faces.get(face).ok_or_else(|| Error::Mesh(format!("face {face} out of range")))?;
    for &(a, b) in &blocks.0 {
        if a > b || b > basis.k {
            return Err(Error::Config(format!("block {a}..{b} outside basis of {}", basis.k)));
        }
        for e in a..b {
            let mut v = 0.0;
            for c in 0..3 {
                v += bary[c] * basis.values[f[c] as usize * basis.k + e];
            }
            out.push(v);
        }
    }
    Ok(out)
}
