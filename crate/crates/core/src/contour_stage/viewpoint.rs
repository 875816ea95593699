//! The 26 canonical viewing directions: face centres, edge midpoints and
//! corners of a cube surrounding the part.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    Face,
    Edge,
    Corner,
}

impl ViewKind {
    fn from_nonzero(count: usize) -> Self {
        match count {
            1 => ViewKind::Face,
            2 => ViewKind::Edge,
            _ => ViewKind::Corner,
        }
    }
}

/// An orthographic viewing direction. The camera sits at `+direction` and
/// looks toward the origin; `up` fixes the image orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    /// Un-normalized member of `{-1,0,1}³`.
    pub grid: [i8; 3],
    pub direction: [f64; 3],
    pub up: [f64; 3],
    pub kind: ViewKind,
}

impl Viewpoint {
    /// Builds the viewpoint for a cube lattice direction. Returns `None` for
    /// the zero vector or components outside `{-1,0,1}`.
    pub fn from_grid(grid: [i8; 3]) -> Option<Self> {
        if grid.iter().any(|c| !(-1..=1).contains(c)) || grid == [0, 0, 0] {
            return None;
        }
        let d = Vector3::new(grid[0] as f64, grid[1] as f64, grid[2] as f64).normalize();
        let nonzero = grid.iter().filter(|&&c| c != 0).count();
        let kind = ViewKind::from_nonzero(nonzero);
        // Up vectors are chosen so that symmetric views of a symmetric part
        // produce the same image: edge views keep the cube edge vertical and
        // corner views keep the projected z axis pointing the same way.
        let up = match kind {
            ViewKind::Face if grid[2] != 0 => Vector3::y(),
            ViewKind::Face => Vector3::z(),
            ViewKind::Edge => {
                let axis = grid.iter().position(|&c| c == 0).unwrap();
                let mut u = Vector3::zeros();
                u[axis] = 1.0;
                u
            }
            ViewKind::Corner => {
                let z = Vector3::z() * (grid[2] as f64).signum();
                (z - d * z.dot(&d)).normalize()
            }
        };
        Some(Self {
            grid,
            direction: d.into(),
            up: up.into(),
            kind,
        })
    }

    pub fn dir(&self) -> Vector3<f64> {
        Vector3::from(self.direction)
    }

    pub fn up_vec(&self) -> Vector3<f64> {
        Vector3::from(self.up)
    }

    /// Screen-space right axis (camera looks along `-direction`).
    pub fn right_vec(&self) -> Vector3<f64> {
        (-self.dir()).cross(&self.up_vec())
    }

    /// Projects a model point to `(screen x, screen y, depth)`; larger depth
    /// is closer to the camera.
    pub fn project(&self, p: &Vector3<f64>) -> [f64; 3] {
        [p.dot(&self.right_vec()), p.dot(&self.up_vec()), p.dot(&self.dir())]
    }

    /// Position in the canonical ordering (Face, Edge, Corner; each
    /// lexicographic by grid triple).
    pub fn canonical_index(&self) -> usize {
        canonical_grids()
            .iter()
            .position(|g| *g == self.grid)
            .expect("viewpoint grid is canonical")
    }

    /// Short stable name such as `edge_+1+1+0`.
    pub fn label(&self) -> String {
        let kind = match self.kind {
            ViewKind::Face => "face",
            ViewKind::Edge => "edge",
            ViewKind::Corner => "corner",
        };
        let g: String = self.grid.iter().map(|c| format!("{c:+}")).collect();
        format!("{kind}_{g}")
    }
}

fn canonical_grids() -> Vec<[i8; 3]> {
    let mut grids: Vec<[i8; 3]> = Vec::with_capacity(26);
    for x in -1..=1i8 {
        for y in -1..=1i8 {
            for z in -1..=1i8 {
                if (x, y, z) != (0, 0, 0) {
                    grids.push([x, y, z]);
                }
            }
        }
    }
    grids.sort_by_key(|g| (g.iter().filter(|&&c| c != 0).count(), *g));
    grids
}

/// All 26 canonical viewpoints in canonical order.
pub fn canonical_viewpoints() -> Vec<Viewpoint> {
    canonical_grids()
        .into_iter()
        .map(|g| Viewpoint::from_grid(g).expect("canonical grid"))
        .collect()
}
