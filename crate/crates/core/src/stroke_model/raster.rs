//! Soft rasterizer for Bézier strokes with an analytic backward pass.
//!
//! Each stroke is sampled at `S` parameter values and treated as the polyline
//! through those samples. A pixel's squared distance to the stroke is a
//! softmax-weighted average of its squared distances to the polyline's
//! segments (temperature `tau²`), with each segment's end clamp rounded off
//! so the field is twice differentiable. Coverage is `exp(-D / 2σ²)` with
//! `σ = tau + width/2`, and strokes are composited with `1 - ∏(1 - c)` or a
//! plain maximum.
//!
//! Coverage is treated as exactly zero where every segment is farther than
//! `√72·σ` (coverage below `e^-36`), and segments out of that reach of a
//! pixel are left out of its soft minimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stroke::{bernstein, Sketch};
use crate::contour_stage::CANVAS;
use crate::grid::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composite {
    SoftOver,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterParams {
    /// Softness in pixels.
    pub tau: f64,
    pub samples_per_curve: usize,
    pub composite: Composite,
}

impl Default for RasterParams {
    fn default() -> Self {
        Self {
            tau: 1.0,
            samples_per_curve: 32,
            composite: Composite::SoftOver,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("invalid raster parameters: {0}")]
    Params(String),
    #[error("adjoint must be {CANVAS}x{CANVAS}, got {0}x{1}")]
    AdjointShape(usize, usize),
    #[error("adjoint contains a non-finite value")]
    NonFiniteAdjoint,
}

impl RasterParams {
    pub fn validate(&self) -> Result<(), RasterError> {
        if !(0.25..=8.0).contains(&self.tau) {
            return Err(RasterError::Params(format!("tau {} outside [0.25, 8]", self.tau)));
        }
        if !(8..=256).contains(&self.samples_per_curve) {
            return Err(RasterError::Params(format!(
                "samples_per_curve {} outside [8, 256]",
                self.samples_per_curve
            )));
        }
        Ok(())
    }
}

/// Gradient of a scalar with respect to every stroke's
/// `(x1, y1, …, x4, y4)`, in normalized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub strokes: Vec<[f64; 8]>,
}

impl GradientSet {
    pub fn zeros(n: usize) -> Self {
        Self {
            strokes: vec![[0.0; 8]; n],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.strokes.iter().flatten().all(|g| g.is_finite())
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.strokes.iter_mut().zip(&other.strokes) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Width of the blend that rounds off each segment's end clamp, as a
/// fraction of the segment length. Makes the distance field C² instead of C¹
/// across the lines through the segment ends.
pub const END_SOFTNESS: f64 = 0.25;

/// exp(-x) is exactly zero in f64 beyond this.
const EXP_UNDERFLOW: f64 = 746.0;

/// Per-stroke data shared by the forward and backward passes.
struct Prepared {
    /// Sample positions in pixels.
    samples: Vec<[f64; 2]>,
    /// Per segment, its bounding box grown by the reach: `[x0, y0, x1, y1]`.
    boxes: Vec<[f64; 4]>,
    /// `1 / (2σ²)`.
    falloff: f64,
    /// Squared distance beyond which coverage is zero.
    reach2: f64,
    /// Inclusive pixel window, `None` when it misses the canvas.
    window: Option<(usize, usize, usize, usize)>,
}

impl Prepared {
    #[inline]
    fn covers_row(&self, y: usize) -> bool {
        self.window.is_some_and(|(_, y0, _, y1)| y >= y0 && y <= y1)
    }

    #[inline]
    fn covers(&self, x: usize, y: usize) -> bool {
        self.window.is_some_and(|(x0, y0, x1, y1)| x >= x0 && x <= x1 && y >= y0 && y <= y1)
    }

    /// Segments whose grown box meets the row through pixel centres `py`.
    fn row_candidates(&self, py: f64, out: &mut Vec<usize>) {
        out.clear();
        out.extend((0..self.boxes.len()).filter(|&j| py >= self.boxes[j][1] && py <= self.boxes[j][3]));
    }
}

fn basis_table(samples: usize) -> Vec<[f64; 4]> {
    (0..samples).map(|k| bernstein(k as f64 / (samples - 1) as f64)).collect()
}

fn prepare(sketch: &Sketch, params: &RasterParams, basis: &[[f64; 4]]) -> Vec<Prepared> {
    let scale = CANVAS as f64;
    sketch
        .strokes()
        .iter()
        .map(|stroke| {
            let p = stroke.points();
            let samples: Vec<[f64; 2]> = basis
                .iter()
                .map(|b| {
                    let x = b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0] + b[3] * p[3][0];
                    let y = b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1] + b[3] * p[3][1];
                    [x * scale, y * scale]
                })
                .collect();
            let sigma = params.tau + stroke.width() / 2.0;
            let reach = sigma * 72f64.sqrt();
            // The rounded end clamp lets a segment reach up to END_SOFTNESS·len
            // further than its hard distance.
            let boxes: Vec<[f64; 4]> = samples
                .windows(2)
                .map(|s| {
                    let len = ((s[1][0] - s[0][0]).powi(2) + (s[1][1] - s[0][1]).powi(2)).sqrt();
                    let grow = reach + END_SOFTNESS * len;
                    [
                        s[0][0].min(s[1][0]) - grow,
                        s[0][1].min(s[1][1]) - grow,
                        s[0][0].max(s[1][0]) + grow,
                        s[0][1].max(s[1][1]) + grow,
                    ]
                })
                .collect();
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for b in &boxes {
                for k in 0..2 {
                    lo[k] = lo[k].min(b[k]);
                    hi[k] = hi[k].max(b[k + 2]);
                }
            }
            // Pixel i has its centre at i + 0.5.
            let first = |v: f64| (v - 0.5).ceil().max(0.0);
            let last = |v: f64| (v - 0.5).floor().min((CANVAS - 1) as f64);
            let (x0, x1, y0, y1) = (first(lo[0]), last(hi[0]), first(lo[1]), last(hi[1]));
            let window = (x0 <= x1 && y0 <= y1).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize));
            Prepared {
                samples,
                boxes,
                falloff: 1.0 / (2.0 * sigma * sigma),
                reach2: reach * reach,
                window,
            }
        })
        .collect()
}

/// Squared distance from `p` to segment `ab` with the end clamp rounded:
/// with `t` the projection parameter and `L² = |b - a|²`,
/// `d = perp² + L²·(G(-t) + G(t - 1))`, where `G` is `x²` for `x ≥ κ`
/// shifted to join `0` through a cubic on `[0, κ]`. Equals the exact
/// squared distance while the projection falls inside the segment.
///
/// Returns `d` and the partials `∂d/∂P`, `∂d/∂L²` with `P = (p-a)·(b-a)`.
#[inline]
fn segment_sqdist(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> (f64, f64, f64) {
    let k = END_SOFTNESS;
    let (ux, uy) = (b[0] - a[0], b[1] - a[1]);
    let (qx, qy) = (p[0] - a[0], p[1] - a[1]);
    let q2 = qx * qx + qy * qy;
    let l2 = ux * ux + uy * uy;
    if l2 == 0.0 {
        return (q2, 0.0, 0.0);
    }
    let dot = qx * ux + qy * uy;
    let t = dot / l2;
    if t <= -k {
        (q2 + k * dot + k * k * l2 / 3.0, k, k * k / 3.0)
    } else if t < 0.0 {
        let x = -t;
        (q2 - dot * t + l2 * x * x * x / (3.0 * k), -2.0 * t - t * t / k, t * t + 2.0 * t * t * t / (3.0 * k))
    } else if t <= 1.0 {
        (q2 - dot * t, -2.0 * t, t * t)
    } else if t < 1.0 + k {
        let x = t - 1.0;
        (
            q2 - dot * t + l2 * x * x * x / (3.0 * k),
            -2.0 * t + x * x / k,
            t * t + x * x * x / (3.0 * k) - t * x * x / k,
        )
    } else {
        let pb2 = q2 - 2.0 * dot + l2;
        (pb2 - k * (dot - l2) + k * k * l2 / 3.0, -(2.0 + k), 1.0 + k + k * k / 3.0)
    }
}

/// `∂d/∂a` and `∂d/∂b` from the partials returned by [`segment_sqdist`].
#[inline]
fn segment_grad(a: [f64; 2], b: [f64; 2], p: [f64; 2], d_dot: f64, d_l2: f64) -> ([f64; 2], [f64; 2]) {
    let (ux, uy) = (b[0] - a[0], b[1] - a[1]);
    let (qx, qy) = (p[0] - a[0], p[1] - a[1]);
    if ux == 0.0 && uy == 0.0 {
        return ([-qx, -qy], [-qx, -qy]);
    }
    let ga = [
        -2.0 * qx - d_dot * (ux + qx) - 2.0 * d_l2 * ux,
        -2.0 * qy - d_dot * (uy + qy) - 2.0 * d_l2 * uy,
    ];
    let gb = [d_dot * qx + 2.0 * d_l2 * ux, d_dot * qy + 2.0 * d_l2 * uy];
    (ga, gb)
}

/// Soft distance state of one pixel against one stroke, over the segments
/// that can reach it.
#[derive(Default)]
struct SoftDist {
    seg: Vec<usize>,
    d: Vec<f64>,
    w: Vec<f64>,
    d_dot: Vec<f64>,
    d_l2: Vec<f64>,
}

impl SoftDist {
    /// Softmax-weighted mean of the segment distances, or `None` when the
    /// stroke is out of reach of `p`.
    fn eval(&mut self, stroke: &Prepared, candidates: &[usize], p: [f64; 2], temperature: f64) -> Option<f64> {
        self.seg.clear();
        self.d.clear();
        self.d_dot.clear();
        self.d_l2.clear();
        let mut dmin = f64::INFINITY;
        for &j in candidates {
            let bx = &stroke.boxes[j];
            if p[0] < bx[0] || p[0] > bx[2] {
                continue;
            }
            let (d, d_dot, d_l2) = segment_sqdist(stroke.samples[j], stroke.samples[j + 1], p);
            dmin = dmin.min(d);
            self.seg.push(j);
            self.d.push(d);
            self.d_dot.push(d_dot);
            self.d_l2.push(d_l2);
        }
        if dmin > stroke.reach2 {
            return None;
        }
        self.w.clear();
        let mut z = 0.0;
        for &d in &self.d {
            let e = (d - dmin) / temperature;
            let w = if e > EXP_UNDERFLOW { 0.0 } else { (-e).exp() };
            z += w;
            self.w.push(w);
        }
        let mut soft = 0.0;
        for (w, d) in self.w.iter_mut().zip(&self.d) {
            *w /= z;
            soft += *w * d;
        }
        Some(soft)
    }
}

/// Renders the sketch to a 224×224 ink image with values in `[0, 1]`.
pub fn rasterize(sketch: &Sketch, params: &RasterParams) -> Raster {
    let basis = basis_table(params.samples_per_curve);
    let strokes = prepare(sketch, params, &basis);
    let temperature = params.tau * params.tau;
    let mut out = Raster::zeros(CANVAS, CANVAS);
    out.data.par_chunks_mut(CANVAS).enumerate().for_each(|(y, row)| {
        let active: Vec<&Prepared> = strokes.iter().filter(|s| s.covers_row(y)).collect();
        if active.is_empty() {
            return;
        }
        let py = y as f64 + 0.5;
        let candidates: Vec<Vec<usize>> = active
            .iter()
            .map(|s| {
                let mut c = Vec::new();
                s.row_candidates(py, &mut c);
                c
            })
            .collect();
        let mut soft = SoftDist::default();
        for (x, value) in row.iter_mut().enumerate() {
            let p = [x as f64 + 0.5, py];
            let mut keep = 1.0;
            let mut peak: f64 = 0.0;
            for (s, cand) in active.iter().zip(&candidates) {
                if !s.covers(x, y) {
                    continue;
                }
                if let Some(d) = soft.eval(s, cand, p, temperature) {
                    let c = (-d * s.falloff).exp();
                    keep *= 1.0 - c;
                    peak = peak.max(c);
                }
            }
            *value = match params.composite {
                Composite::SoftOver => 1.0 - keep,
                Composite::Max => peak,
            };
        }
    });
    out
}

/// Gradient of `⟨adjoint, rasterize(sketch)⟩` with respect to all control
/// points.
pub fn rasterize_backward(sketch: &Sketch, params: &RasterParams, adjoint: &Raster) -> Result<GradientSet, RasterError> {
    if adjoint.width != CANVAS || adjoint.height != CANVAS {
        return Err(RasterError::AdjointShape(adjoint.width, adjoint.height));
    }
    if adjoint.data.iter().any(|v| !v.is_finite()) {
        return Err(RasterError::NonFiniteAdjoint);
    }
    let basis = basis_table(params.samples_per_curve);
    let strokes = prepare(sketch, params, &basis);
    let temperature = params.tau * params.tau;
    let n = strokes.len();
    let m = basis.len();

    // Per-row adjoints of the sample positions (pixels), summed afterwards in
    // row order so the result does not depend on scheduling.
    let rows: Vec<Option<Vec<[f64; 2]>>> = (0..CANVAS)
        .into_par_iter()
        .map(|y| {
            let active: Vec<usize> = (0..n).filter(|&i| strokes[i].covers_row(y)).collect();
            if active.is_empty() {
                return None;
            }
            let py = y as f64 + 0.5;
            let candidates: Vec<Vec<usize>> = active
                .iter()
                .map(|&i| {
                    let mut c = Vec::new();
                    strokes[i].row_candidates(py, &mut c);
                    c
                })
                .collect();
            let mut grad_q = vec![[0.0; 2]; n * m];
            let mut dist: Vec<SoftDist> = active.iter().map(|_| SoftDist::default()).collect();
            let mut soft = vec![0.0; active.len()];
            let mut cov = vec![0.0; active.len()];
            let mut here: Vec<usize> = Vec::with_capacity(active.len());
            let mut suffix = vec![0.0; active.len() + 1];
            let mut dcov = vec![0.0; active.len()];
            for x in 0..CANVAS {
                let g = adjoint.get(x, y);
                if g == 0.0 {
                    continue;
                }
                let p = [x as f64 + 0.5, py];
                here.clear();
                for (slot, &i) in active.iter().enumerate() {
                    if !strokes[i].covers(x, y) {
                        continue;
                    }
                    if let Some(d) = dist[slot].eval(&strokes[i], &candidates[slot], p, temperature) {
                        soft[slot] = d;
                        cov[slot] = (-d * strokes[i].falloff).exp();
                        here.push(slot);
                    }
                }
                if here.is_empty() {
                    continue;
                }
                // d ink / d c for each stroke reaching the pixel.
                dcov[..here.len()].fill(0.0);
                match params.composite {
                    Composite::SoftOver => {
                        suffix[here.len()] = 1.0;
                        for j in (0..here.len()).rev() {
                            suffix[j] = suffix[j + 1] * (1.0 - cov[here[j]]);
                        }
                        let mut prefix = 1.0;
                        for j in 0..here.len() {
                            dcov[j] = prefix * suffix[j + 1];
                            prefix *= 1.0 - cov[here[j]];
                        }
                    }
                    Composite::Max => {
                        let mut best = 0;
                        for j in 1..here.len() {
                            if cov[here[j]] > cov[here[best]] {
                                best = j;
                            }
                        }
                        dcov[best] = 1.0;
                    }
                }
                for (j, &slot) in here.iter().enumerate() {
                    if dcov[j] == 0.0 {
                        continue;
                    }
                    let stroke = &strokes[active[slot]];
                    let g_soft = -g * dcov[j] * cov[slot] * stroke.falloff;
                    let base = active[slot] * m;
                    let sd = &dist[slot];
                    for c in 0..sd.seg.len() {
                        if sd.w[c] == 0.0 {
                            continue;
                        }
                        let g_d = g_soft * sd.w[c] * (1.0 - (sd.d[c] - soft[slot]) / temperature);
                        let k = sd.seg[c];
                        let (ga, gb) = segment_grad(stroke.samples[k], stroke.samples[k + 1], p, sd.d_dot[c], sd.d_l2[c]);
                        grad_q[base + k][0] += g_d * ga[0];
                        grad_q[base + k][1] += g_d * ga[1];
                        grad_q[base + k + 1][0] += g_d * gb[0];
                        grad_q[base + k + 1][1] += g_d * gb[1];
                    }
                }
            }
            Some(grad_q)
        })
        .collect();

    let mut grad_q = vec![[0.0; 2]; n * m];
    for row in rows.iter().flatten() {
        for (acc, v) in grad_q.iter_mut().zip(row) {
            acc[0] += v[0];
            acc[1] += v[1];
        }
    }
    let scale = CANVAS as f64;
    let mut out = GradientSet::zeros(n);
    for (s, grad) in out.strokes.iter_mut().enumerate() {
        for (k, b) in basis.iter().enumerate() {
            let q = grad_q[s * m + k];
            for (c, bc) in b.iter().enumerate() {
                grad[2 * c] += scale * bc * q[0];
                grad[2 * c + 1] += scale * bc * q[1];
            }
        }
    }
    Ok(out)
}
