use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour_stage::CANVAS;

pub type Point = [f64; 2];

/// Coordinates are allowed to leave the unit square by this much so the
/// optimizer can push strokes past the canvas border.
pub const COORD_MIN: f64 = -0.25;
pub const COORD_MAX: f64 = 1.25;
pub const MAX_WIDTH: f64 = 8.0;
pub const DEFAULT_WIDTH: f64 = 1.5;
pub const MAX_STROKES: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum StrokeError {
    #[error("control point coordinate {0} outside [{COORD_MIN}, {COORD_MAX}]")]
    Coordinate(f64),
    #[error("stroke width {0} outside (0, {MAX_WIDTH}]")]
    Width(f64),
    #[error("curve parameter {0} outside [0, 1]")]
    Parameter(f64),
    #[error("sketch must have 1..={MAX_STROKES} strokes, got {0}")]
    StrokeCount(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// One cubic Bézier stroke. Control points are in normalized canvas
/// coordinates (origin top-left, y down); width is in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    points: [Point; 4],
    width: f64,
}

fn check_coord(c: f64) -> Result<(), StrokeError> {
    if (COORD_MIN..=COORD_MAX).contains(&c) {
        Ok(())
    } else {
        Err(StrokeError::Coordinate(c))
    }
}

impl Stroke {
    pub fn new(points: [Point; 4], width: f64) -> Result<Self, StrokeError> {
        for c in points.iter().flatten() {
            check_coord(*c)?;
        }
        if !(width > 0.0 && width <= MAX_WIDTH) {
            return Err(StrokeError::Width(width));
        }
        Ok(Self { points, width })
    }

    pub fn points(&self) -> &[Point; 4] {
        &self.points
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Control points as `(x1, y1, …, x4, y4)`.
    pub fn to_vector(&self) -> [f64; 8] {
        let p = &self.points;
        [p[0][0], p[0][1], p[1][0], p[1][1], p[2][0], p[2][1], p[3][0], p[3][1]]
    }

    pub fn from_vector(v: &[f64; 8], width: f64) -> Result<Self, StrokeError> {
        Self::new([[v[0], v[1]], [v[2], v[3]], [v[4], v[5]], [v[6], v[7]]], width)
    }

    /// Replaces the control points, clamping every coordinate into the
    /// allowed range. Non-finite values are rejected.
    pub fn with_clamped_vector(&self, v: &[f64; 8]) -> Result<Self, StrokeError> {
        if let Some(bad) = v.iter().find(|c| !c.is_finite()) {
            return Err(StrokeError::Coordinate(*bad));
        }
        let c: Vec<f64> = v.iter().map(|x| x.clamp(COORD_MIN, COORD_MAX)).collect();
        Ok(Self {
            points: [[c[0], c[1]], [c[2], c[3]], [c[4], c[5]], [c[6], c[7]]],
            width: self.width,
        })
    }
}

/// Cubic Bernstein basis at `t`.
#[inline]
pub fn bernstein(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t]
}

pub fn bezier_point(stroke: &Stroke, t: f64) -> Result<Point, StrokeError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(StrokeError::Parameter(t));
    }
    let b = bernstein(t);
    let p = stroke.points();
    Ok([
        b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0] + b[3] * p[3][0],
        b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1] + b[3] * p[3][1],
    ])
}

/// An ordered set of strokes on the 224 px canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SketchRepr", into = "SketchRepr")]
pub struct Sketch {
    strokes: Vec<Stroke>,
}

#[derive(Serialize, Deserialize)]
struct SketchRepr {
    canvas: usize,
    strokes: Vec<Stroke>,
}

impl TryFrom<SketchRepr> for Sketch {
    type Error = StrokeError;
    fn try_from(r: SketchRepr) -> Result<Self, StrokeError> {
        if r.canvas != CANVAS {
            return Err(StrokeError::Shape(format!("canvas {} (expected {CANVAS})", r.canvas)));
        }
        for s in &r.strokes {
            Stroke::new(s.points, s.width)?;
        }
        Sketch::new(r.strokes)
    }
}

impl From<Sketch> for SketchRepr {
    fn from(s: Sketch) -> Self {
        SketchRepr {
            canvas: CANVAS,
            strokes: s.strokes,
        }
    }
}

impl Sketch {
    pub fn new(strokes: Vec<Stroke>) -> Result<Self, StrokeError> {
        if strokes.is_empty() || strokes.len() > MAX_STROKES {
            return Err(StrokeError::StrokeCount(strokes.len()));
        }
        Ok(Self { strokes })
    }

    pub fn strokes(&self) -> &[Stroke] {
        &self.strokes
    }

    pub fn len(&self) -> usize {
        self.strokes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strokes.is_empty()
    }

    pub fn canvas(&self) -> usize {
        CANVAS
    }

    pub fn widths(&self) -> Vec<f64> {
        self.strokes.iter().map(|s| s.width).collect()
    }
}

pub fn flatten(sketch: &Sketch) -> Vec<[f64; 8]> {
    sketch.strokes.iter().map(Stroke::to_vector).collect()
}

/// Rebuilds a sketch from concatenated 8-vectors, taking widths from
/// `widths` (one per stroke).
pub fn unflatten(data: &[f64], widths: &[f64]) -> Result<Sketch, StrokeError> {
    if !data.len().is_multiple_of(8) {
        return Err(StrokeError::Shape(format!("{} values is not a multiple of 8", data.len())));
    }
    if data.len() / 8 != widths.len() {
        return Err(StrokeError::Shape(format!(
            "{} strokes of data but {} widths",
            data.len() / 8,
            widths.len()
        )));
    }
    let strokes = data
        .chunks_exact(8)
        .zip(widths)
        .map(|(c, &w)| Stroke::from_vector(c.try_into().expect("chunk of 8"), w))
        .collect::<Result<Vec<_>, _>>()?;
    Sketch::new(strokes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stroke(p: [Point; 4]) -> Stroke {
        Stroke::new(p, DEFAULT_WIDTH).unwrap()
    }

    #[test]
    fn endpoints_interpolate() {
        let s = stroke([[0.1, 0.2], [0.3, 0.9], [0.7, 0.1], [0.8, 0.6]]);
        assert_eq!(bezier_point(&s, 0.0).unwrap(), [0.1, 0.2]);
        assert_eq!(bezier_point(&s, 1.0).unwrap(), [0.8, 0.6]);
        assert!(bezier_point(&s, 1.5).is_err());
    }

    #[test]
    fn doubled_points_midpoint() {
        let s = stroke([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(bezier_point(&s, 0.5).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn invariants_enforced() {
        assert_eq!(Stroke::new([[0.0; 2]; 4], 0.0).unwrap_err(), StrokeError::Width(0.0));
        assert_eq!(Stroke::new([[0.0; 2]; 4], 8.5).unwrap_err(), StrokeError::Width(8.5));
        assert!(Stroke::new([[1.3, 0.0], [0.0; 2], [0.0; 2], [0.0; 2]], 1.0).is_err());
        assert!(Sketch::new(vec![]).is_err());
        assert!(Sketch::new(vec![stroke([[0.0; 2]; 4]); 65]).is_err());
    }

    #[test]
    fn flatten_shapes() {
        let sk = Sketch::new(vec![stroke([[0.5; 2]; 4]); 5]).unwrap();
        let flat = flatten(&sk);
        assert_eq!(flat.len(), 5);
        assert!(matches!(unflatten(&[0.0; 7], &[1.0]), Err(StrokeError::Shape(_))));
        assert!(matches!(unflatten(&[0.0; 16], &[1.0]), Err(StrokeError::Shape(_))));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let sk = Sketch::new(vec![stroke([[0.1, 0.2], [1.0 / 3.0, 0.9], [0.7, -0.1], [0.8, 1.2]])]).unwrap();
        let text = serde_json::to_string(&sk).unwrap();
        assert_eq!(serde_json::from_str::<Sketch>(&text).unwrap(), sk);
        assert!(serde_json::from_str::<Sketch>(&text.replace("224", "100")).is_err());
    }

    fn arb_point() -> impl Strategy<Value = Point> {
        [COORD_MIN..=COORD_MAX, COORD_MIN..=COORD_MAX]
    }

    proptest! {
        #[test]
        fn collinear_even_points_trace_a_line(a in arb_point(), b in arb_point(), t in 0.0..=1.0f64) {
            let lerp = |u: f64| [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
            let s = stroke([a, lerp(1.0 / 3.0), lerp(2.0 / 3.0), b]);
            let p = bezier_point(&s, t).unwrap();
            let q = lerp(t);
            prop_assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
        }

        #[test]
        fn curve_stays_in_control_hull(pts in [arb_point(), arb_point(), arb_point(), arb_point()], t in 0.0..=1.0f64) {
            let p = bezier_point(&stroke(pts), t).unwrap();
            // In 2D a point is in the hull of four points iff it lies in one
            // of the four triangles they span.
            let cross = |a: Point, b: Point, c: Point| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            let in_triangle = |a: Point, b: Point, c: Point| {
                let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
                let eps = 1e-12;
                (d1 >= -eps && d2 >= -eps && d3 >= -eps) || (d1 <= eps && d2 <= eps && d3 <= eps)
            };
            let [a, b, c, d] = pts;
            prop_assert!(in_triangle(a, b, c) || in_triangle(a, b, d) || in_triangle(a, c, d) || in_triangle(b, c, d));
        }

        #[test]
        fn flatten_roundtrip(raw in prop::collection::vec(prop::array::uniform8(COORD_MIN..=COORD_MAX), 1..=12),
                             width in 0.1..=8.0f64) {
            let strokes: Vec<Stroke> = raw.iter().map(|v| Stroke::from_vector(v, width).unwrap()).collect();
            let sk = Sketch::new(strokes).unwrap();
            let flat: Vec<f64> = flatten(&sk).concat();
            prop_assert_eq!(unflatten(&flat, &sk.widths()).unwrap(), sk);
        }
    }
}
