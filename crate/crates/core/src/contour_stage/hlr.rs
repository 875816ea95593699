//! Hidden-line contour extraction from a triangle mesh.
//!
//! Candidate edges are silhouette edges (front/back facing neighbours),
//! boundary edges and sharp edges. Each candidate is sampled along its length
//! and every sample is tested against an item buffer (closest triangle id and
//! depth per pixel) rendered from the same view. The covering triangle's plane
//! is evaluated at the exact sample position, so faces adjacent to the edge
//! never self-occlude it.

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mesh::TriangleMesh;
use super::viewpoint::Viewpoint;

/// A 2D polyline in view-plane coordinates (model units, y up).
pub type Polyline = Vec<[f64; 2]>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlrConfig {
    pub depth_resolution: usize,
    pub samples_per_edge: usize,
    /// Depth bias as a fraction of the scene diagonal.
    pub depth_bias: f64,
    /// Dihedral angle (degrees) above which an edge counts as sharp.
    pub sharp_angle_deg: f64,
}

impl Default for HlrConfig {
    fn default() -> Self {
        Self {
            depth_resolution: 1024,
            samples_per_edge: 64,
            depth_bias: 1e-4,
            sharp_angle_deg: 30.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ContourError {
    #[error("mesh has no silhouette, boundary or sharp edges from view {0}")]
    NoCandidateEdges(String),
    #[error("no polyline with at least two points")]
    NoPolylines,
    #[error("contour has zero extent")]
    ZeroExtent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    Silhouette,
    Boundary,
    Sharp,
}

/// A candidate edge with its adjacent triangles.
#[derive(Debug, Clone)]
pub struct CandidateEdge {
    pub vertices: [usize; 2],
    pub triangles: Vec<usize>,
    pub class: EdgeClass,
}

/// Classifies every mesh edge for the given view and returns the candidates
/// in vertex-index order.
pub fn candidate_edges(mesh: &TriangleMesh, view: &Viewpoint, sharp_angle_deg: f64) -> Vec<CandidateEdge> {
    let mut adjacency: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            adjacency.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let d = view.dir();
    let normals: Vec<Vector3<f64>> = (0..mesh.triangles().len()).map(|t| mesh.face_normal(t)).collect();
    let front: Vec<bool> = normals.iter().map(|n| n.dot(&d) > 0.0).collect();
    let cos_sharp = sharp_angle_deg.to_radians().cos();

    let mut out = Vec::new();
    for ((a, b), tris) in adjacency {
        let class = if tris.len() == 1 {
            Some(EdgeClass::Boundary)
        } else {
            let mut class = None;
            'pairs: for i in 0..tris.len() {
                for j in i + 1..tris.len() {
                    let (ti, tj) = (tris[i], tris[j]);
                    if front[ti] != front[tj] {
                        class = Some(EdgeClass::Silhouette);
                        break 'pairs;
                    }
                    if normals[ti].dot(&normals[tj]) < cos_sharp {
                        class = Some(EdgeClass::Sharp);
                    }
                }
            }
            class
        };
        if let Some(class) = class {
            out.push(CandidateEdge {
                vertices: [a, b],
                triangles: tris,
                class,
            });
        }
    }
    out
}

/// Closest-surface buffer in screen space.
struct ItemBuffer {
    res: usize,
    origin: [f64; 2],
    scale: f64,
    depth: Vec<f64>,
    item: Vec<u32>,
    /// depth(x, y) = a·x + b·y + c per triangle, in view-plane units.
    planes: Vec<Option<[f64; 3]>>,
}

const EMPTY: u32 = u32::MAX;

impl ItemBuffer {
    fn render(projected: &[[f64; 3]], mesh: &TriangleMesh, res: usize) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in projected {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let pad = 0.02 * extent;
        let scale = (res - 1) as f64 / (extent + 2.0 * pad);
        let origin = [
            0.5 * (lo[0] + hi[0]) - 0.5 * (res - 1) as f64 / scale,
            0.5 * (lo[1] + hi[1]) - 0.5 * (res - 1) as f64 / scale,
        ];
        let mut buf = Self {
            res,
            origin,
            scale,
            depth: vec![f64::NEG_INFINITY; res * res],
            item: vec![EMPTY; res * res],
            planes: Vec::with_capacity(mesh.triangles().len()),
        };
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let [p0, p1, p2] = [projected[tri[0]], projected[tri[1]], projected[tri[2]]];
            let plane = depth_plane(p0, p1, p2);
            buf.planes.push(plane);
            if let Some(plane) = plane {
                buf.fill_triangle(t as u32, [p0, p1, p2], plane);
            }
        }
        buf
    }

    fn to_pixel(&self, x: f64, y: f64) -> [f64; 2] {
        [(x - self.origin[0]) * self.scale, (y - self.origin[1]) * self.scale]
    }

    fn fill_triangle(&mut self, id: u32, pts: [[f64; 3]; 3], plane: [f64; 3]) {
        let s: Vec<[f64; 2]> = pts.iter().map(|p| self.to_pixel(p[0], p[1])).collect();
        let min_x = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let max_x = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil().min((self.res - 1) as f64) as usize;
        let min_y = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let max_y = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil().min((self.res - 1) as f64) as usize;
        let area = edge_fn(s[0], s[1], s[2]);
        if area.abs() < 1e-18 {
            return;
        }
        for py in min_y..=max_y {
            for px in min_x..=max_x {
                let p = [px as f64, py as f64];
                let w0 = edge_fn(s[1], s[2], p) / area;
                let w1 = edge_fn(s[2], s[0], p) / area;
                let w2 = edge_fn(s[0], s[1], p) / area;
                if w0 < -1e-9 || w1 < -1e-9 || w2 < -1e-9 {
                    continue;
                }
                let x = self.origin[0] + p[0] / self.scale;
                let y = self.origin[1] + p[1] / self.scale;
                let z = plane[0] * x + plane[1] * y + plane[2];
                let idx = py * self.res + px;
                if z > self.depth[idx] {
                    self.depth[idx] = z;
                    self.item[idx] = id;
                }
            }
        }
    }

    /// Visibility of a sample at view-plane `(x, y)` with depth `z`.
    fn visible(&self, x: f64, y: f64, z: f64, adjacent: &[usize], bias: f64) -> bool {
        let [px, py] = self.to_pixel(x, y);
        let (px, py) = (px.round(), py.round());
        if px < 0.0 || py < 0.0 || px >= self.res as f64 || py >= self.res as f64 {
            return true;
        }
        let id = self.item[py as usize * self.res + px as usize];
        if id == EMPTY || adjacent.contains(&(id as usize)) {
            return true;
        }
        let Some(plane) = self.planes[id as usize] else {
            return true;
        };
        plane[0] * x + plane[1] * y + plane[2] <= z + bias
    }
}

fn edge_fn(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Plane `z = a x + b y + c` through three projected points; `None` for
/// triangles seen edge-on.
fn depth_plane(p0: [f64; 3], p1: [f64; 3], p2: [f64; 3]) -> Option<[f64; 3]> {
    let u = Vector3::new(p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]);
    let v = Vector3::new(p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]);
    let n = u.cross(&v);
    let scale = u.norm() * v.norm();
    if n.z.abs() <= 1e-12 * scale {
        return None;
    }
    let a = -n.x / n.z;
    let b = -n.y / n.z;
    Some([a, b, p0[2] - a * p0[0] - b * p0[1]])
}

/// Visible contour polylines of `mesh` seen from `view`, in view-plane
/// coordinates. Visible runs sharing endpoints are chained together.
pub fn extract_contours(mesh: &TriangleMesh, view: &Viewpoint, cfg: &HlrConfig) -> Result<Vec<Polyline>, ContourError> {
    let candidates = candidate_edges(mesh, view, cfg.sharp_angle_deg);
    if candidates.is_empty() {
        return Err(ContourError::NoCandidateEdges(view.label()));
    }
    let projected: Vec<[f64; 3]> = mesh.vertices().iter().map(|v| view.project(v)).collect();
    let buffer = ItemBuffer::render(&projected, mesh, cfg.depth_resolution);
    let diag = mesh.diagonal();
    let bias = cfg.depth_bias * diag;
    let min_len = 1e-9 * diag;
    let m = cfg.samples_per_edge.max(2);

    let mut runs: Vec<Polyline> = Vec::new();
    for edge in &candidates {
        let (a, b) = (projected[edge.vertices[0]], projected[edge.vertices[1]]);
        if ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt() <= min_len {
            continue;
        }
        let mut run_start: Option<[f64; 2]> = None;
        let mut last_visible = [0.0; 2];
        for i in 0..m {
            let t = i as f64 / (m - 1) as f64;
            let p = [
                (1.0 - t) * a[0] + t * b[0],
                (1.0 - t) * a[1] + t * b[1],
                (1.0 - t) * a[2] + t * b[2],
            ];
            if buffer.visible(p[0], p[1], p[2], &edge.triangles, bias) {
                if run_start.is_none() {
                    run_start = Some([p[0], p[1]]);
                }
                last_visible = [p[0], p[1]];
            } else if let Some(start) = run_start.take() {
                if start != last_visible {
                    runs.push(vec![start, last_visible]);
                }
            }
        }
        if let Some(start) = run_start {
            if start != last_visible {
                runs.push(vec![start, last_visible]);
            }
        }
    }
    Ok(chain_polylines(runs))
}

fn key(p: [f64; 2]) -> (u64, u64) {
    // +0.0 folds -0.0 onto the same bit pattern.
    ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits())
}

/// Joins polylines whose endpoints coincide exactly, but only through
/// junctions where exactly two polyline ends meet.
pub fn chain_polylines(lines: Vec<Polyline>) -> Vec<Polyline> {
    let mut ends: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
    for (i, l) in lines.iter().enumerate() {
        ends.entry(key(l[0])).or_default().push(i);
        ends.entry(key(*l.last().unwrap())).or_default().push(i);
    }
    let mut used = vec![false; lines.len()];
    let mut out = Vec::new();
    let partner = |point: [f64; 2], current: usize, used: &[bool]| -> Option<usize> {
        let list = &ends[&key(point)];
        if list.len() != 2 {
            return None;
        }
        let other = if list[0] == current { list[1] } else { list[0] };
        (other != current && !used[other]).then_some(other)
    };
    for start in 0..lines.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut chain = lines[start].clone();
        // Extend forward, then backward.
        for _ in 0..2 {
            let mut current = start;
            loop {
                let tail = *chain.last().unwrap();
                if chain.len() > 2 && key(tail) == key(chain[0]) {
                    break;
                }
                let Some(next) = partner(tail, current, &used) else {
                    break;
                };
                used[next] = true;
                let mut seg = lines[next].clone();
                if key(seg[0]) != key(tail) {
                    seg.reverse();
                }
                chain.extend_from_slice(&seg[1..]);
                current = next;
            }
            chain.reverse();
        }
        out.push(chain);
    }
    out
}
