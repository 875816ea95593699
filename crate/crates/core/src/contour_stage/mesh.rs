//! Triangle mesh container and STL / OBJ loading.
//!
//! Loaded triangles are welded (positions closer than `1e-6 × bbox diagonal`
//! share one vertex) and degenerate triangles are dropped.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Cursor, Read};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use thiserror::Error;

/// Minimum triangle area kept by validation, in model units squared.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;
/// Weld tolerance relative to the bounding-box diagonal.
pub const WELD_TOLERANCE_REL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed mesh file: {0}")]
    Parse(String),
    #[error("empty mesh: no valid triangles after validation")]
    EmptyMesh,
    #[error("mesh has {0} vertices, at least 4 are required")]
    TooFewVertices(usize),
    #[error("triangle {triangle} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        count: usize,
    },
    #[error("triangle {0} has area below {MIN_TRIANGLE_AREA}")]
    DegenerateTriangle(usize),
    #[error("{0} normals supplied for {1} triangles")]
    NormalCount(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    normals: Option<Vec<Vector3<f64>>>,
}

impl TriangleMesh {
    /// Builds a mesh, rejecting anything that violates the invariants.
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        normals: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        if vertices.len() < 4 {
            return Err(MeshError::TooFewVertices(vertices.len()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        index: i,
                        count: vertices.len(),
                    });
                }
            }
            if triangle_area(&vertices, tri) <= MIN_TRIANGLE_AREA {
                return Err(MeshError::DegenerateTriangle(t));
            }
        }
        if let Some(n) = &normals {
            if n.len() != triangles.len() {
                return Err(MeshError::NormalCount(n.len(), triangles.len()));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            normals,
        })
    }

    /// Welds a triangle soup and drops degenerate triangles. Returns the mesh
    /// and the number of dropped triangles.
    pub fn from_triangle_soup(soup: &[[Vector3<f64>; 3]]) -> Result<(Self, usize), MeshError> {
        if soup.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let (lo, hi) = soup.iter().flatten().fold(
            (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let diag = (hi - lo).norm();
        if !diag.is_finite() {
            return Err(MeshError::Parse("non-finite vertex coordinate".into()));
        }
        let mut welder = Welder::new((diag * WELD_TOLERANCE_REL).max(f64::MIN_POSITIVE));
        let mut triangles = Vec::with_capacity(soup.len());
        let mut dropped = 0;
        for tri in soup {
            let idx = [welder.insert(tri[0]), welder.insert(tri[1]), welder.insert(tri[2])];
            if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
                dropped += 1;
                continue;
            }
            if triangle_area(&welder.vertices, &idx) <= MIN_TRIANGLE_AREA {
                dropped += 1;
                continue;
            }
            triangles.push(idx);
        }
        if triangles.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        // Vertices referenced only by dropped triangles are removed.
        let mut remap = vec![usize::MAX; welder.vertices.len()];
        let mut vertices = Vec::new();
        for tri in &mut triangles {
            for i in tri.iter_mut() {
                if remap[*i] == usize::MAX {
                    remap[*i] = vertices.len();
                    vertices.push(welder.vertices[*i]);
                }
                *i = remap[*i];
            }
        }
        Ok((Self::new(vertices, triangles, None)?, dropped))
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    /// Unit normal of triangle `t`: the supplied normal when present,
    /// otherwise derived from the winding order.
    pub fn face_normal(&self, t: usize) -> Vector3<f64> {
        if let Some(n) = &self.normals {
            return n[t];
        }
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        self.vertices.iter().fold(
            (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        )
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Returns a copy with every vertex multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
            triangles: self.triangles.clone(),
            normals: self.normals.clone(),
        }
    }
}

fn triangle_area(vertices: &[Vector3<f64>], tri: &[usize; 3]) -> f64 {
    let (a, b, c) = (vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Spatial hash that merges points within `tol` of an existing vertex.
struct Welder {
    tol: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
    vertices: Vec<Vector3<f64>>,
}

impl Welder {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            cells: HashMap::new(),
            vertices: Vec::new(),
        }
    }

    fn cell(&self, p: &Vector3<f64>) -> [i64; 3] {
        [
            (p.x / self.tol).floor() as i64,
            (p.y / self.tol).floor() as i64,
            (p.z / self.tol).floor() as i64,
        ]
    }

    fn insert(&mut self, p: Vector3<f64>) -> usize {
        let c = self.cell(&p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &i in list {
                        let d = (self.vertices[i] - p).norm();
                        if d <= self.tol && best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                            best = Some((d, i));
                        }
                    }
                }
            }
        }
        if let Some((_, i)) = best {
            return i;
        }
        let i = self.vertices.len();
        self.vertices.push(p);
        self.cells.entry(c).or_default().push(i);
        i
    }
}

/// Result of [`load_mesh`]: the validated mesh plus how many degenerate
/// triangles were discarded on the way.
#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    pub dropped_triangles: usize,
}

/// Loads an STL (binary or ASCII) or OBJ file, chosen by extension.
pub fn load_mesh(path: &Path) -> Result<LoadedMesh, MeshError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let io_err = |source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    };
    let soup = match ext.as_str() {
        "stl" => {
            let mut bytes = Vec::new();
            File::open(path)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(io_err)?;
            stl_soup(&bytes)?
        }
        "obj" => {
            let file = File::open(path).map_err(io_err)?;
            obj_soup(&mut BufReader::new(file))?
        }
        other => {
            return Err(MeshError::UnsupportedFormat(if other.is_empty() {
                path.display().to_string()
            } else {
                format!(".{other}")
            }))
        }
    };
    let (mesh, dropped_triangles) = TriangleMesh::from_triangle_soup(&soup)?;
    Ok(LoadedMesh {
        mesh,
        dropped_triangles,
    })
}

/// Parses STL bytes (ASCII or binary) into a triangle soup.
pub fn stl_soup(bytes: &[u8]) -> Result<Vec<[Vector3<f64>; 3]>, MeshError> {
    let mut cursor = Cursor::new(bytes);
    let indexed = stl_io::read_stl(&mut cursor).map_err(|e| MeshError::Parse(e.to_string()))?;
    let to_v = |i: usize| {
        let v = indexed.vertices[i].0;
        Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64)
    };
    Ok(indexed
        .faces
        .iter()
        .map(|f| [to_v(f.vertices[0]), to_v(f.vertices[1]), to_v(f.vertices[2])])
        .collect())
}

/// Parses OBJ text (positions and faces only; polygons are fan-triangulated).
pub fn obj_soup<R: std::io::BufRead>(reader: &mut R) -> Result<Vec<[Vector3<f64>; 3]>, MeshError> {
    let opts = tobj::LoadOptions {
        triangulate: true,
        ignore_points: true,
        ignore_lines: true,
        ..Default::default()
    };
    let (models, _) = tobj::load_obj_buf(reader, &opts, |_| Err(tobj::LoadError::OpenFileFailed))
        .map_err(|e| MeshError::Parse(e.to_string()))?;
    let mut soup = Vec::new();
    for model in models {
        let m = model.mesh;
        let pos = |i: u32| {
            let i = i as usize * 3;
            Vector3::new(m.positions[i] as f64, m.positions[i + 1] as f64, m.positions[i + 2] as f64)
        };
        for tri in m.indices.chunks_exact(3) {
            soup.push([pos(tri[0]), pos(tri[1]), pos(tri[2])]);
        }
    }
    Ok(soup)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_soup() -> Vec<[Vector3<f64>; 3]> {
        let p = |x, y, z| Vector3::new(x, y, z);
        vec![
            [p(0., 0., 0.), p(1., 0., 0.), p(1., 1., 0.)],
            [p(0., 0., 0.), p(1., 1., 0.), p(0., 1., 0.)],
        ]
    }

    #[test]
    fn welds_within_tolerance() {
        let mut soup = quad_soup();
        soup[1][0].x += 1e-9;
        let (mesh, dropped) = TriangleMesh::from_triangle_soup(&soup).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(mesh.vertices().len(), 4);
    }

    #[test]
    fn drops_degenerate_and_reports_count() {
        let mut soup = quad_soup();
        let p = Vector3::new(3.0, 3.0, 3.0);
        soup.push([p, p, Vector3::new(4.0, 3.0, 3.0)]);
        let (mesh, dropped) = TriangleMesh::from_triangle_soup(&soup).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(mesh.triangles().len(), 2);
    }

    #[test]
    fn only_degenerate_is_empty() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        let q = Vector3::new(2.0, 2.0, 3.0);
        let soup = vec![[p, p, q], [q, q, q]];
        assert!(matches!(TriangleMesh::from_triangle_soup(&soup), Err(MeshError::EmptyMesh)));
    }

    #[test]
    fn new_rejects_bad_index() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()];
        let err = TriangleMesh::new(v, vec![[0, 1, 7]], None).unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 7, .. }));
    }

    #[test]
    fn unknown_extension_is_unsupported() {
        let err = load_mesh(Path::new("part.step")).unwrap_err();
        assert!(matches!(err, MeshError::UnsupportedFormat(_)));
    }

    #[test]
    fn obj_faces_are_triangulated() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nf 1 2 3 4\nf 1 2 5\n";
        let soup = obj_soup(&mut text.as_bytes()).unwrap();
        assert_eq!(soup.len(), 3);
    }
}
