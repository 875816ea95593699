//! Sketch-vs-contour metrics and the stroke-count complexity classes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour_stage::{ContourImage, CANVAS};
use crate::stroke_model::{rasterize, RasterParams, Sketch};

pub const REPORT_SCHEMA: &str = "v1";
pub const BINARIZE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComplexityClass {
    Simple,
    Moderate,
    Complex,
    OutOfRange,
}

/// Half-open buckets: [16, 24) simple, [24, 32) moderate, [32, 40) complex.
pub fn complexity_class(n: usize) -> ComplexityClass {
    match n {
        16..=23 => ComplexityClass::Simple,
        24..=31 => ComplexityClass::Moderate,
        32..=39 => ComplexityClass::Complex,
        _ => ComplexityClass::OutOfRange,
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("report {path}: {message}")]
    Io { path: String, message: String },
    #[error("unsupported report schema {0}")]
    Schema(String),
}

/// Intersection over union of two masks; two empty masks count as equal.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Squared distance transform of a 1D sampled function (lower envelope of
/// parabolas).
fn dt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let mut first = None;
    for q in 0..n {
        if f[q].is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(start) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = start;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in start + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from every pixel to the nearest `true` pixel
/// (infinite when the mask is empty).
pub fn distance_transform(mask: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { f64::INFINITY }).collect();
    let mut col = vec![0.0; height];
    let mut out_col = vec![0.0; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = grid[y * width + x];
        }
        dt_1d(&col, &mut out_col);
        for y in 0..height {
            grid[y * width + x] = out_col[y];
        }
    }
    let mut out_row = vec![0.0; width];
    for y in 0..height {
        dt_1d(&grid[y * width..(y + 1) * width], &mut out_row);
        grid[y * width..(y + 1) * width].copy_from_slice(&out_row);
    }
    grid.iter().map(|d| d.sqrt()).collect()
}

/// Symmetric Chamfer distance in pixels: the mean of the two directed mean
/// nearest-neighbour distances. `None` when either mask is empty.
pub fn chamfer(a: &[bool], b: &[bool], width: usize, height: usize) -> Option<f64> {
    let directed = |from: &[bool], to: &[bool]| -> Option<f64> {
        let dt = distance_transform(to, width, height);
        let (sum, count) = from
            .iter()
            .zip(&dt)
            .filter(|(&m, _)| m)
            .fold((0.0, 0usize), |(s, c), (_, d)| (s + d, c + 1));
        (count > 0 && sum.is_finite()).then(|| sum / count as f64)
    };
    Some((directed(a, b)? + directed(b, a)?) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchMetrics {
    pub label: String,
    pub iou: f64,
    /// `None` when the sketch leaves no ink after binarization.
    pub chamfer: Option<f64>,
    /// Fraction of contour ink pixels also inked by the sketch.
    pub ink_coverage: f64,
    pub stroke_count: usize,
    pub complexity: ComplexityClass,
}

pub fn sketch_vs_contour_metrics(label: &str, sketch: &Sketch, contour: &ContourImage, params: &RasterParams) -> SketchMetrics {
    let mask = rasterize(sketch, params).threshold(BINARIZE_THRESHOLD);
    let target = contour.pixels();
    let contour_ink = target.iter().filter(|&&p| p).count();
    let covered = mask.iter().zip(target).filter(|(&a, &b)| a && b).count();
    SketchMetrics {
        label: label.to_string(),
        iou: iou(&mask, target),
        chamfer: chamfer(&mask, target, CANVAS, CANVAS),
        ink_coverage: covered as f64 / contour_ink.max(1) as f64,
        stroke_count: sketch.len(),
        complexity: complexity_class(sketch.len()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub rows: Vec<SketchMetrics>,
    pub mean_iou: f64,
    /// Mean over rows that have a Chamfer distance.
    pub mean_chamfer: Option<f64>,
    pub mean_ink_coverage: f64,
}

impl MetricsReport {
    pub fn new(rows: Vec<SketchMetrics>) -> Self {
        let n = rows.len().max(1) as f64;
        let chamfers: Vec<f64> = rows.iter().filter_map(|r| r.chamfer).collect();
        Self {
            schema: REPORT_SCHEMA.to_string(),
            mean_iou: rows.iter().map(|r| r.iou).sum::<f64>() / n,
            mean_chamfer: (!chamfers.is_empty()).then(|| chamfers.iter().sum::<f64>() / chamfers.len() as f64),
            mean_ink_coverage: rows.iter().map(|r| r.ink_coverage).sum::<f64>() / n,
            rows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.to_json()).map_err(|e| io_error(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let report: Self = serde_json::from_str(&text).map_err(|e| io_error(path, e))?;
        if report.schema != REPORT_SCHEMA {
            return Err(EvalError::Schema(report.schema));
        }
        Ok(report)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let err = |e: csv::Error| io_error(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["label", "iou", "chamfer", "ink_coverage", "stroke_count", "complexity"])
            .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.iou.to_string(),
                r.chamfer.map_or_else(String::new, |c| c.to_string()),
                r.ink_coverage.to_string(),
                r.stroke_count.to_string(),
                format!("{:?}", r.complexity),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| io_error(path, e))
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stroke_model::{Stroke, DEFAULT_WIDTH};
    use proptest::prelude::*;

    fn brute_force_distance(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
        (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                mask.iter()
                    .enumerate()
                    .filter(|(_, &m)| m)
                    .map(|(j, _)| ((x - (j % w) as f64).powi(2) + (y - (j / w) as f64).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn classes() {
        assert_eq!(complexity_class(20), ComplexityClass::Simple);
        assert_eq!(complexity_class(24), ComplexityClass::Moderate);
        assert_eq!(complexity_class(35), ComplexityClass::Complex);
        assert_eq!(complexity_class(40), ComplexityClass::OutOfRange);
        assert_eq!(complexity_class(15), ComplexityClass::OutOfRange);
        let order = |c| match c {
            ComplexityClass::Simple => 0,
            ComplexityClass::Moderate => 1,
            ComplexityClass::Complex => 2,
            ComplexityClass::OutOfRange => panic!("inside range"),
        };
        for n in 16..39 {
            assert!(order(complexity_class(n)) <= order(complexity_class(n + 1)));
        }
    }

    #[test]
    fn single_pixels_five_apart() {
        let (w, h) = (16, 16);
        let mut a = vec![false; w * h];
        let mut b = vec![false; w * h];
        a[2 * w + 3] = true;
        b[6 * w + 6] = true;
        assert_eq!(chamfer(&a, &b, w, h), Some(5.0));
        assert_eq!(iou(&a, &b), 0.0);
        assert_eq!(chamfer(&a, &vec![false; w * h], w, h), None);
    }

    #[test]
    fn off_canvas_sketch_scores_zero() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
        let contour = crate::contour_stage::render_contour_image(&[pts], 22, None).unwrap();
        let corner = Stroke::new([[-0.25, -0.25], [-0.24, -0.25], [-0.25, -0.24], [-0.24, -0.24]], DEFAULT_WIDTH).unwrap();
        let m = sketch_vs_contour_metrics("corner", &Sketch::new(vec![corner]).unwrap(), &contour, &RasterParams::default());
        assert_eq!(m.iou, 0.0);
        assert_eq!(m.chamfer, None);
        assert_eq!(m.ink_coverage, 0.0);
    }

    #[test]
    fn exact_reproduction_scores_perfectly() {
        let s = Stroke::new([[0.2, 0.3], [0.4, 0.1], [0.6, 0.9], [0.8, 0.5]], 3.0).unwrap();
        let sketch = Sketch::new(vec![s]).unwrap();
        let params = RasterParams::default();
        let mask = rasterize(&sketch, &params).threshold(BINARIZE_THRESHOLD);
        let contour = ContourImage::from_mask(mask, None).unwrap();
        let m = sketch_vs_contour_metrics("self", &sketch, &contour, &params);
        assert_eq!(m.iou, 1.0);
        assert_eq!(m.chamfer, Some(0.0));
        assert_eq!(m.ink_coverage, 1.0);
    }

    #[test]
    fn report_roundtrip() {
        let row = SketchMetrics {
            label: "v".into(),
            iou: 0.25,
            chamfer: Some(1.0 / 3.0),
            ink_coverage: 0.5,
            stroke_count: 20,
            complexity: ComplexityClass::Simple,
        };
        let report = MetricsReport::new(vec![row.clone(), SketchMetrics { chamfer: None, ..row }]);
        assert_eq!(report.mean_chamfer, Some(1.0 / 3.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        report.write_json(&path).unwrap();
        assert_eq!(MetricsReport::read_json(&path).unwrap(), report);
        report.write_csv(&dir.path().join("m.csv")).unwrap();
    }

    fn mask(w: usize, h: usize) -> impl Strategy<Value = Vec<bool>> {
        prop::collection::vec(prop::bool::weighted(0.08), w * h)
    }

    proptest! {
        #[test]
        fn transform_matches_brute_force(m in mask(13, 9)) {
            let fast = distance_transform(&m, 13, 9);
            let slow = brute_force_distance(&m, 13, 9);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a == b) || (a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn metrics_are_symmetric(a in mask(12, 12), b in mask(12, 12)) {
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            prop_assert_eq!(chamfer(&a, &b, 12, 12), chamfer(&b, &a, 12, 12));
            if let Some(c) = chamfer(&a, &b, 12, 12) {
                prop_assert!(c >= 0.0);
                prop_assert_eq!(c == 0.0, a == b);
            }
            prop_assert!((0.0..=1.0).contains(&iou(&a, &b)));
        }
    }
}
