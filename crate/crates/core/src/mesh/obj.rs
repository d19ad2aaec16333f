use std::fmt::Write as _;

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::math::Vec3;

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        msg: msg.into(),
    }
}

fn floats<const N: usize>(it: &mut std::str::SplitWhitespace<'_>, path: &str, line: usize) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    for o in &mut out {
        let tok = it.next().ok_or_else(|| parse_err(path, line, format!("expected {N} numbers")))?;
        *o = tok.parse().map_err(|_| parse_err(path, line, format!("bad number '{tok}'")))?;
    }
    Ok(out)
}

// 1-based (or negative, relative) OBJ index to 0-based.
fn resolve(tok: &str, count: usize, path: &str, line: usize) -> Result<usize> {
    let i: i64 = tok.parse().map_err(|_| parse_err(path, line, format!("bad index '{tok}'")))?;
    let r = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || r < 0 || r as usize >= count {
        return Err(parse_err(path, line, format!("index {i} out of range (have {count})")));
    }
    Ok(r as usize)
}

/// Parses `v`, `vn` and `f` records; polygons are fan-triangulated. Vertex
/// normals are used when every position receives one, otherwise recomputed.
pub fn parse_obj(text: &str, path: &str) -> Result<TriangleMesh> {
    let mut positions = Vec::new();
    let mut file_normals = Vec::new();
    let mut assigned: Vec<Option<Vec3>> = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut it = content.split_whitespace();
        match it.next() {
            Some("v") => {
                let [x, y, z] = floats::<3>(&mut it, path, line)?;
                positions.push(Vec3::new(x, y, z));
                assigned.push(None);
            }
            Some("vn") => {
                let [x, y, z] = floats::<3>(&mut it, path, line)?;
                file_normals.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let v = resolve(parts.next().unwrap_or(""), positions.len(), path, line)?;
                    if let Some(n) = parts.nth(1).filter(|s| !s.is_empty()) {
                        let n = resolve(n, file_normals.len(), path, line)?;
                        assigned[v] = Some(file_normals[n]);
                    }
                    idx.push(v as u32);
                }
                if idx.len() < 3 {
                    return Err(parse_err(path, line, "face with fewer than 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(parse_err(path, text.lines().count(), "no faces"));
    }
    let normals = assigned.iter().all(Option::is_some).then(|| assigned.into_iter().flatten().collect());
    TriangleMesh::new(positions, faces, normals)
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for p in &mesh.positions {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for n in &mesh.normals {
        let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
    }
    for f in &mesh.faces {
        let [a, b, c] = f.map(|k| k + 1);
        let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: &str = "# unit cube\n\
        v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n\
        f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 2 3 7 6\nf 3 4 8 7\nf 4 1 5 8\n";

    #[test]
    fn cube_with_quads() {
        let m = parse_obj(CUBE, "cube.obj").unwrap();
        assert_eq!(m.positions.len(), 8);
        assert_eq!(m.faces.len(), 12);
        assert!(m.is_closed());
        // Corner normals point along the diagonal away from the center.
        let c = Vec3::new(0.5, 0.5, 0.5);
        for (p, n) in m.positions.iter().zip(&m.normals) {
            assert!(n.dot(*p - c) > 0.0);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
        match parse_obj(bad, "bad.obj") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("out of range"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_obj("v 0 x 0\n", "x.obj"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn round_trip_keeps_normals_and_faces() {
        let s = TriangleMesh::icosphere(1, 1.5);
        let back = parse_obj(&write_obj(&s), "s.obj").unwrap();
        assert_eq!(back.faces, s.faces);
        for (a, b) in back.positions.iter().zip(&s.positions) {
            assert_eq!(a, b);
        }
        for (a, b) in back.normals.iter().zip(&s.normals) {
            assert!((*a - *b).length() < 1e-15);
        }
    }

    #[test]
    fn negative_and_slashed_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 2\nf -3/1/1 -2/1/1 -1/1/1\n";
        let m = parse_obj(text, "t.obj").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert!(m.normals.iter().all(|n| *n == Vec3::new(0.0, 0.0, 1.0)));
    }
}
