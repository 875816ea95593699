//! Converts triangle meshes of mechanical parts into freehand-style vector
//! sketches made of cubic Bézier strokes.

pub mod contour_stage;
pub mod grid;
pub mod stroke_model;
pub mod edge_init;
pub mod losses;
pub mod guidance_optimizer;
pub mod evaluation;
pub mod pipeline;
