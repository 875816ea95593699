//! Semantic, geometric and perceptual losses between a contour and a
//! rasterized sketch.

use serde::{Deserialize, Serialize};

use super::embedding::{Embedding, EmbeddingBackend, EmbeddingGrad};
use super::{LossError, LossWeights};
use crate::contour_stage::ContourImage;
use crate::grid::Raster;

const UNIT_TOLERANCE: f64 = 1e-4;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

/// `1 - cos` between two unit embeddings. An all-zero embedding (blank
/// image) is orthogonal to everything and yields 1.
pub fn semantic_loss(e_c: &[f64], e_s: &[f64]) -> Result<f64, LossError> {
    if e_c.len() != e_s.len() {
        return Err(LossError::Shape(format!("embedding lengths {} and {}", e_c.len(), e_s.len())));
    }
    if is_zero(e_c) || is_zero(e_s) {
        return Ok(1.0);
    }
    for v in [e_c, e_s] {
        let n = norm(v);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(LossError::NotUnit(n));
        }
    }
    Ok(1.0 - e_c.iter().zip(e_s).map(|(a, b)| a * b).sum::<f64>())
}

/// Sum over layers of the squared L2 distance between feature maps.
pub fn geometric_loss(feats_c: &[Raster], feats_s: &[Raster]) -> Result<f64, LossError> {
    if feats_c.len() != feats_s.len() {
        return Err(LossError::Shape(format!("{} layers vs {}", feats_c.len(), feats_s.len())));
    }
    let mut total = 0.0;
    for (i, (a, b)) in feats_c.iter().zip(feats_s).enumerate() {
        if !a.same_shape(b) {
            return Err(LossError::Shape(format!(
                "layer {i}: {}x{} vs {}x{}",
                a.width, a.height, b.width, b.height
            )));
        }
        total += a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptualValue {
    pub geometric: f64,
    pub semantic: f64,
    /// `geometric + beta_s · semantic`.
    pub total: f64,
}

/// A contour whose embedding is computed once and reused across many sketch
/// evaluations.
pub struct PerceptualTarget<'a> {
    backend: &'a dyn EmbeddingBackend,
    target: Embedding,
    weights: LossWeights,
}

impl<'a> PerceptualTarget<'a> {
    pub fn new(backend: &'a dyn EmbeddingBackend, contour: &ContourImage, weights: LossWeights) -> Result<Self, LossError> {
        weights.validate()?;
        Ok(Self {
            backend,
            target: backend.embed(&contour.to_raster())?,
            weights,
        })
    }

    pub fn evaluate(&self, sketch_raster: &Raster) -> Result<PerceptualValue, LossError> {
        let e = self.backend.embed(sketch_raster)?;
        self.value(&e)
    }

    fn value(&self, e: &Embedding) -> Result<PerceptualValue, LossError> {
        let geometric = geometric_loss(&self.target.layers, &e.layers)?;
        let semantic = semantic_loss(&self.target.global, &e.global)?;
        Ok(PerceptualValue {
            geometric,
            semantic,
            total: geometric + self.weights.beta_s * semantic,
        })
    }

    /// Loss value and its gradient with respect to the sketch raster.
    pub fn evaluate_with_grad(&self, sketch_raster: &Raster) -> Result<(PerceptualValue, Raster), LossError> {
        let e = self.backend.embed(sketch_raster)?;
        let value = self.value(&e)?;
        let layers = self
            .target
            .layers
            .iter()
            .zip(&e.layers)
            .map(|(c, s)| {
                let data = c.data.iter().zip(&s.data).map(|(a, b)| 2.0 * (b - a)).collect();
                Raster::from_vec(s.width, s.height, data)
            })
            .collect();
        let global = if is_zero(&self.target.global) || is_zero(&e.global) {
            vec![0.0; e.global.len()]
        } else {
            self.target.global.iter().map(|c| -self.weights.beta_s * c).collect()
        };
        let grad = self.backend.backward(sketch_raster, &EmbeddingGrad { global, layers })?;
        Ok((value, grad))
    }
}

/// One-off perceptual loss; see [`PerceptualTarget`] for repeated use.
pub fn perceptual_loss(
    contour: &ContourImage,
    sketch_raster: &Raster,
    backend: &dyn EmbeddingBackend,
    weights: LossWeights,
) -> Result<PerceptualValue, LossError> {
    PerceptualTarget::new(backend, contour, weights)?.evaluate(sketch_raster)
}
