//! Gradient-based stroke optimization against a contour, with a snapshot
//! trace of intermediate sketches.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour_stage::{ContourImage, ImageError};
use crate::edge_init::{init_strokes, place_seed_points, saliency_map, segment_features, EdgeInitError, SeedPlan};
use crate::losses::{EmbeddingBackend, GuidanceTrace, LossError, LossWeights, PerceptualTarget, GUIDANCE_SNAPSHOTS};
use crate::stroke_model::{flatten, rasterize, rasterize_backward, RasterError, RasterParams, Sketch, Stroke, StrokeError, DEFAULT_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub steps: usize,
    /// Step size in normalized canvas coordinates.
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub snapshot_count: usize,
    pub rng_seed: u64,
    pub stroke_width: f64,
    pub raster: RasterParams,
    pub weights: LossWeights,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            snapshot_count: GUIDANCE_SNAPSHOTS,
            rng_seed: 0,
            stroke_width: DEFAULT_WIDTH,
            raster: RasterParams::default(),
            weights: LossWeights::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: String| Err(OptimizeError::Config(m));
        if self.snapshot_count == 0 || self.steps < self.snapshot_count {
            return bad(format!("steps {} must be >= snapshot count {} >= 1", self.steps, self.snapshot_count));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return bad("Adam moments need beta in [0, 1) and epsilon > 0".into());
        }
        self.raster.validate()?;
        self.weights.validate()?;
        Ok(())
    }

    /// Steps at which snapshots are taken: `ceil(steps · k / K)`, k = 1..=K.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        (1..=self.snapshot_count)
            .map(|k| (self.steps * k).div_ceil(self.snapshot_count))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("initialization: {0}")]
    Init(#[from] EdgeInitError),
    #[error("loss: {0}")]
    Loss(#[from] LossError),
    #[error("rasterizer: {0}")]
    Raster(#[from] RasterError),
    #[error("stroke update: {0}")]
    Stroke(#[from] StrokeError),
    #[error("non-finite loss {value} at step {step}")]
    NonFinite { step: usize, value: f64 },
    #[error("trace bundle {path}: {message}")]
    Bundle { path: String, message: String },
}

/// Loss components recorded at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    pub geometric: f64,
    pub semantic: f64,
    pub percept: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    /// Lowest-loss sketch over all evaluated steps.
    pub sketch: Sketch,
    pub best_step: usize,
    pub initial: Sketch,
    pub seeds: SeedPlan,
    pub trace: GuidanceTrace,
    /// One entry per evaluated step, `0..=steps`.
    pub history: Vec<StepLoss>,
}

impl OptimizationResult {
    pub fn best_loss(&self) -> f64 {
        self.history[self.best_step].percept
    }
}

/// Seeds strokes on the contour's feature edges and optimizes them.
pub fn optimize_sketch(
    contour: &ContourImage,
    n: usize,
    cfg: &OptimizerConfig,
    backend: &dyn EmbeddingBackend,
) -> Result<OptimizationResult, OptimizeError> {
    cfg.validate()?;
    let (seeds, initial) = seed_sketch(contour, n, cfg)?;
    let (sketch, best_step, trace, history) = optimize_from(contour, &initial, cfg, backend)?;
    Ok(OptimizationResult {
        sketch,
        best_step,
        initial,
        seeds,
        trace,
        history,
    })
}

/// Edge-constrained seeds and the initial strokes grown from them.
pub fn seed_sketch(contour: &ContourImage, n: usize, cfg: &OptimizerConfig) -> Result<(SeedPlan, Sketch), EdgeInitError> {
    let segments = segment_features(contour)?;
    let seeds = place_seed_points(&segments, &saliency_map(contour)?, n)?;
    let points: Vec<[f64; 2]> = seeds.seeds.iter().map(|s| s.normalized()).collect();
    let initial = init_strokes(&points, cfg.rng_seed, cfg.stroke_width)?;
    Ok((seeds, initial))
}

/// Adam on all control points (widths fixed), clamped to the stroke
/// coordinate range after every update. Step `t` evaluates the current
/// sketch and then updates it, for `t` in `0..steps`; the final sketch is
/// evaluated as step `steps`.
pub fn optimize_from(
    contour: &ContourImage,
    initial: &Sketch,
    cfg: &OptimizerConfig,
    backend: &dyn EmbeddingBackend,
) -> Result<(Sketch, usize, GuidanceTrace, Vec<StepLoss>), OptimizeError> {
    cfg.validate()?;
    let target = PerceptualTarget::new(backend, contour, cfg.weights)?;
    let snapshot_steps = cfg.snapshot_steps();
    let widths = initial.widths();
    let mut params: Vec<[f64; 8]> = flatten(initial);
    let mut m = vec![[0.0; 8]; params.len()];
    let mut v = vec![[0.0; 8]; params.len()];
    let mut sketch = initial.clone();
    let mut best = (f64::INFINITY, 0, initial.clone());
    let mut history = Vec::with_capacity(cfg.steps + 1);
    let mut snapshots = Vec::with_capacity(snapshot_steps.len());

    for step in 0..=cfg.steps {
        let raster = rasterize(&sketch, &cfg.raster);
        let (value, adjoint) = target.evaluate_with_grad(&raster)?;
        if !value.total.is_finite() {
            return Err(OptimizeError::NonFinite { step, value: value.total });
        }
        history.push(StepLoss {
            step,
            geometric: value.geometric,
            semantic: value.semantic,
            percept: value.total,
        });
        if value.total < best.0 {
            best = (value.total, step, sketch.clone());
        }
        if snapshot_steps.contains(&step) {
            snapshots.push(sketch.clone());
        }
        if step == cfg.steps {
            break;
        }

        let grad = rasterize_backward(&sketch, &cfg.raster, &adjoint)?;
        if !grad.is_finite() {
            return Err(OptimizeError::NonFinite { step, value: f64::NAN });
        }
        let t = (step + 1) as i32;
        let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
        for (s, g) in grad.strokes.iter().enumerate() {
            for c in 0..8 {
                m[s][c] = cfg.beta1 * m[s][c] + (1.0 - cfg.beta1) * g[c];
                v[s][c] = cfg.beta2 * v[s][c] + (1.0 - cfg.beta2) * g[c] * g[c];
                let m_hat = m[s][c] / c1;
                let v_hat = v[s][c] / c2;
                params[s][c] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        let strokes = params
            .iter_mut()
            .zip(&widths)
            .map(|(p, &w)| {
                let stroke = Stroke::from_vector(&[0.5; 8], w)?.with_clamped_vector(p)?;
                *p = stroke.to_vector();
                Ok(stroke)
            })
            .collect::<Result<Vec<_>, StrokeError>>()?;
        sketch = Sketch::new(strokes)?;
    }
    let trace = GuidanceTrace::new(snapshots, snapshot_steps)?;
    Ok((best.2, best.1, trace, history))
}

/// Writes the loss history as CSV with columns
/// `step,L_geometric,L_semantic,L_percept`.
pub fn write_loss_csv(history: &[StepLoss], path: &Path) -> Result<(), OptimizeError> {
    let err = |e: csv::Error| OptimizeError::Bundle {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["step", "L_geometric", "L_semantic", "L_percept"]).map_err(err)?;
    for h in history {
        w.serialize((h.step, h.geometric, h.semantic, h.percept)).map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

pub const BUNDLE_SCHEMA: &str = "v1";
const BUNDLE_JSON: &str = "trace.json";
const BUNDLE_PNG: &str = "contour.png";

#[derive(Serialize, Deserialize)]
struct BundleRecord {
    schema: String,
    contour: String,
    step_indices: Vec<usize>,
    snapshots: Vec<Sketch>,
}

fn bundle_error(path: &Path, e: impl std::fmt::Display) -> OptimizeError {
    OptimizeError::Bundle {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes the contour and the trace as a `trace.json` + `contour.png`
/// bundle in `dir`, returning the written paths.
pub fn distill_targets(contour: &ContourImage, trace: &GuidanceTrace, dir: &Path) -> Result<Vec<PathBuf>, OptimizeError> {
    fs::create_dir_all(dir).map_err(|e| bundle_error(dir, e))?;
    let png = dir.join(BUNDLE_PNG);
    contour.save_png(&png).map_err(|e| bundle_error(&png, e))?;
    let record = BundleRecord {
        schema: BUNDLE_SCHEMA.to_string(),
        contour: BUNDLE_PNG.to_string(),
        step_indices: trace.step_indices().to_vec(),
        snapshots: trace.snapshots().to_vec(),
    };
    let json = dir.join(BUNDLE_JSON);
    let text = serde_json::to_string_pretty(&record).map_err(|e| bundle_error(&json, e))?;
    fs::write(&json, text).map_err(|e| bundle_error(&json, e))?;
    Ok(vec![png, json])
}

pub fn read_trace_bundle(dir: &Path) -> Result<(ContourImage, GuidanceTrace), OptimizeError> {
    let json = dir.join(BUNDLE_JSON);
    let text = fs::read_to_string(&json).map_err(|e| bundle_error(&json, e))?;
    let record: BundleRecord = serde_json::from_str(&text).map_err(|e| bundle_error(&json, e))?;
    if record.schema != BUNDLE_SCHEMA {
        return Err(bundle_error(&json, format!("unsupported schema {}", record.schema)));
    }
    let png = dir.join(&record.contour);
    let contour = ContourImage::load_png(&png).map_err(|e: ImageError| bundle_error(&png, e))?;
    Ok((contour, GuidanceTrace::new(record.snapshots, record.step_indices)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour_stage::render_contour_image;
    use crate::losses::{jv_guidance_loss, PyramidBackend};

    fn ellipse() -> ContourImage {
        let pts: Vec<[f64; 2]> = (0..=96)
            .map(|i| {
                let a = i as f64 / 96.0 * std::f64::consts::TAU;
                [a.cos(), 0.5 * a.sin()]
            })
            .collect();
        render_contour_image(&[pts], 22, None).unwrap()
    }

    fn short_config() -> OptimizerConfig {
        OptimizerConfig {
            steps: 24,
            rng_seed: 9,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn snapshot_schedule() {
        let cfg = OptimizerConfig {
            steps: 500,
            ..OptimizerConfig::default()
        };
        assert_eq!(cfg.snapshot_steps(), vec![63, 125, 188, 250, 313, 375, 438, 500]);
        let cfg = OptimizerConfig {
            steps: 4,
            ..OptimizerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn short_run_is_deterministic_and_consistent() {
        let backend = PyramidBackend::default();
        let c = ellipse();
        let a = optimize_sketch(&c, 6, &short_config(), &backend).unwrap();
        let b = optimize_sketch(&c, 6, &short_config(), &backend).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.len(), GUIDANCE_SNAPSHOTS);
        assert_eq!(a.history.len(), 25);
        assert!(a.best_loss() <= a.history[0].percept);
        for (snap, &step) in a.trace.snapshots().iter().zip(a.trace.step_indices()) {
            let raster = rasterize(snap, &short_config().raster);
            let value = PerceptualTarget::new(&backend, &c, LossWeights::default())
                .unwrap()
                .evaluate(&raster)
                .unwrap();
            assert_eq!(value.total, a.history[step].percept);
        }
        assert!(a.sketch.strokes().iter().all(|s| Stroke::new(*s.points(), s.width()).is_ok()));
    }

    #[test]
    fn circle_loss_trend_is_non_increasing() {
        let pts: Vec<[f64; 2]> = (0..=256)
            .map(|i| {
                let a = i as f64 / 256.0 * std::f64::consts::TAU;
                [a.cos(), a.sin()]
            })
            .collect();
        let contour = render_contour_image(&[pts], 22, None).unwrap();
        let cfg = OptimizerConfig {
            steps: 500,
            rng_seed: 0,
            ..OptimizerConfig::default()
        };
        let result = optimize_sketch(&contour, 16, &cfg, &PyramidBackend::default()).unwrap();
        let losses: Vec<f64> = result.history.iter().map(|h| h.percept).collect();
        let means: Vec<f64> = losses.windows(100).map(|w| w.iter().sum::<f64>() / 100.0).collect();
        let worst = means.windows(2).map(|m| m[1] - m[0]).fold(f64::NEG_INFINITY, f64::max);
        // Once converged the average sits on a plateau with rounding-level wobble.
        assert!(worst < 1e-6, "moving average rose by {worst:e}");
    }

    #[test]
    fn bundle_roundtrip() {
        let backend = PyramidBackend::default();
        let c = ellipse();
        let r = optimize_sketch(&c, 4, &short_config(), &backend).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = distill_targets(&c, &r.trace, dir.path()).unwrap();
        assert_eq!(written.len(), 2);
        let (contour, trace) = read_trace_bundle(dir.path()).unwrap();
        assert_eq!(contour.pixels(), c.pixels());
        assert_eq!(trace, r.trace);
        assert_eq!(trace.snapshots().len(), 8);
        assert_eq!(jv_guidance_loss(&trace, &r.trace).unwrap().total, 0.0);
    }

    #[test]
    fn loss_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let rows = [StepLoss {
            step: 0,
            geometric: 1.5,
            semantic: 0.25,
            percept: 1.525,
        }];
        write_loss_csv(&rows, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "step,L_geometric,L_semantic,L_percept\n0,1.5,0.25,1.525\n");
    }
}
