//! Bézier strokes and sketches, the differentiable rasterizer and SVG export.

pub mod raster;
pub mod stroke;
pub mod svg;

pub use raster::{rasterize, rasterize_backward, Composite, GradientSet, RasterError, RasterParams};
pub use stroke::{bezier_point, flatten, unflatten, Point, Sketch, Stroke, StrokeError, DEFAULT_WIDTH};
pub use svg::{parse_svg_paths, to_svg};
