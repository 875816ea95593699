//! Stage one: multi-view contour images of a mesh, deduplicated and ranked.

pub mod hash;
pub mod hlr;
pub mod image;
pub mod mesh;
pub mod select;
pub mod viewpoint;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use hash::{dedup, dedup_indices, perceptual_hash, PerceptualHash, DEFAULT_DEDUP_THRESHOLD};
pub use hlr::{extract_contours, ContourError, HlrConfig, Polyline};
pub use image::{render_contour_image, ContourImage, ImageError, CANVAS, DEFAULT_MARGIN};
pub use mesh::{load_mesh, LoadedMesh, MeshError, TriangleMesh};
pub use select::{complexity_score, select_views};
pub use viewpoint::{canonical_viewpoints, ViewKind, Viewpoint};

/// Manifest entry describing one rendered view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub label: String,
    pub direction: [f64; 3],
    pub kind: ViewKind,
    pub score: f64,
    pub hash: PerceptualHash,
}

impl ViewRecord {
    pub fn describe(image: &ContourImage) -> Self {
        let view = image.source_viewpoint().copied();
        Self {
            label: view.map_or_else(|| "external".to_string(), |v| v.label()),
            direction: view.map_or([0.0; 3], |v| v.direction),
            kind: view.map_or(ViewKind::Face, |v| v.kind),
            score: complexity_score(image),
            hash: perceptual_hash(image),
        }
    }
}

/// Renders all 26 canonical views in canonical order. Views are processed
/// in parallel; the first failing view (in canonical order) is reported.
pub fn render_all_views(mesh: &TriangleMesh, hlr: &HlrConfig, margin: usize) -> Result<Vec<ContourImage>, (Viewpoint, ContourError)> {
    canonical_viewpoints()
        .into_par_iter()
        .map(|view| {
            extract_contours(mesh, &view, hlr)
                .and_then(|lines| render_contour_image(&lines, margin, Some(view)))
                .map_err(|e| (view, e))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}
