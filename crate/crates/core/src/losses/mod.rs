//! Perceptual, assignment and Hausdorff losses and their weighted totals.

pub mod assignment;
pub mod embedding;
pub mod hausdorff;
pub mod perceptual;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stroke_model::{flatten, GradientSet, Sketch};

pub use assignment::{l1_cost_matrix, solve_assignment};
pub use embedding::{Embedding, EmbeddingBackend, EmbeddingGrad, ExternalBackend, PyramidBackend};
pub use hausdorff::{hausdorff, hausdorff_subgradient, one_sided, HausdorffValue};
pub use perceptual::{geometric_loss, perceptual_loss, semantic_loss, PerceptualTarget, PerceptualValue};

/// Snapshots captured per optimization run.
pub const GUIDANCE_SNAPSHOTS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("embedding is not unit length (norm {0})")]
    NotUnit(f64),
    #[error("Hausdorff distance of an empty set")]
    EmptySet,
    #[error("non-finite loss input {0}")]
    NonFinite(f64),
    #[error("invalid loss weights: {0}")]
    Weights(String),
    #[error("embedding backend: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Weight of the semantic term in the perceptual loss.
    pub beta_s: f64,
    /// Weight of the Hausdorff term in the guidance loss.
    pub beta_h: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { beta_s: 0.1, beta_h: 0.8 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.beta_s >= 0.0 && self.beta_h >= 0.0 {
            Ok(())
        } else {
            Err(LossError::Weights(format!("beta_s {} and beta_h {} must be >= 0", self.beta_s, self.beta_h)))
        }
    }
}

/// Intermediate sketches of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceTrace {
    snapshots: Vec<Sketch>,
    step_indices: Vec<usize>,
}

impl GuidanceTrace {
    /// Requires at least one snapshot, equal stroke counts and strictly
    /// increasing step indices.
    pub fn new(snapshots: Vec<Sketch>, step_indices: Vec<usize>) -> Result<Self, LossError> {
        if snapshots.is_empty() || snapshots.len() != step_indices.len() {
            return Err(LossError::Shape(format!(
                "{} snapshots with {} step indices",
                snapshots.len(),
                step_indices.len()
            )));
        }
        if snapshots.iter().any(|s| s.len() != snapshots[0].len()) {
            return Err(LossError::Shape("snapshots differ in stroke count".into()));
        }
        if step_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LossError::Shape("step indices must increase strictly".into()));
        }
        Ok(Self { snapshots, step_indices })
    }

    pub fn snapshots(&self) -> &[Sketch] {
        &self.snapshots
    }

    pub fn step_indices(&self) -> &[usize] {
        &self.step_indices
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn stroke_vectors(&self) -> Vec<Vec<[f64; 8]>> {
        self.snapshots.iter().map(flatten).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JvValue {
    pub total: f64,
    pub per_snapshot: Vec<f64>,
    /// `assignments[k][i]` is the P stroke matched to G stroke `i`.
    pub assignments: Vec<Vec<usize>>,
}

fn check_sets(g: &[Vec<[f64; 8]>], p: &[Vec<[f64; 8]>]) -> Result<(), LossError> {
    if g.len() != p.len() {
        return Err(LossError::Shape(format!("{} vs {} snapshots", g.len(), p.len())));
    }
    for (k, (a, b)) in g.iter().zip(p).enumerate() {
        if a.len() != b.len() {
            return Err(LossError::Shape(format!("snapshot {k}: {} vs {} strokes", a.len(), b.len())));
        }
    }
    Ok(())
}

/// Sum over snapshots of the optimal L1 assignment cost between stroke
/// vector sets.
pub fn jv_guidance_loss_sets(g: &[Vec<[f64; 8]>], p: &[Vec<[f64; 8]>]) -> Result<JvValue, LossError> {
    check_sets(g, p)?;
    let mut value = JvValue {
        total: 0.0,
        per_snapshot: Vec::with_capacity(g.len()),
        assignments: Vec::with_capacity(g.len()),
    };
    for (gk, pk) in g.iter().zip(p) {
        let (cost, assignment) = solve_assignment(&l1_cost_matrix(gk, pk));
        value.total += cost;
        value.per_snapshot.push(cost);
        value.assignments.push(assignment);
    }
    Ok(value)
}

pub fn jv_guidance_loss(trace_g: &GuidanceTrace, trace_p: &GuidanceTrace) -> Result<JvValue, LossError> {
    jv_guidance_loss_sets(&trace_g.stroke_vectors(), &trace_p.stroke_vectors())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceValue {
    pub jv: f64,
    pub hausdorff_sum: f64,
    /// `jv + beta_h · hausdorff_sum`.
    pub total: f64,
}

/// Guidance loss and its subgradient with respect to every P stroke vector
/// (G is treated as constant).
pub fn guidance_loss_sets(
    g: &[Vec<[f64; 8]>],
    p: &[Vec<[f64; 8]>],
    weights: LossWeights,
) -> Result<(GuidanceValue, Vec<GradientSet>), LossError> {
    weights.validate()?;
    let jv = jv_guidance_loss_sets(g, p)?;
    let mut hausdorff_sum = 0.0;
    let mut grads = Vec::with_capacity(g.len());
    for (k, (gk, pk)) in g.iter().zip(p).enumerate() {
        let mut grad = GradientSet::zeros(pk.len());
        for (i, &j) in jv.assignments[k].iter().enumerate() {
            for c in 0..8 {
                let diff = pk[j][c] - gk[i][c];
                // Subgradient of |x| is taken as 0 at 0.
                grad.strokes[j][c] += if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        let h = hausdorff(gk, pk)?;
        hausdorff_sum += h.distance;
        let sub = hausdorff_subgradient(gk, pk, &h);
        for c in 0..8 {
            grad.strokes[h.p_index][c] += weights.beta_h * sub[c];
        }
        grads.push(grad);
    }
    let value = GuidanceValue {
        jv: jv.total,
        hausdorff_sum,
        total: jv.total + weights.beta_h * hausdorff_sum,
    };
    Ok((value, grads))
}

pub fn guidance_loss(trace_g: &GuidanceTrace, trace_p: &GuidanceTrace, weights: LossWeights) -> Result<GuidanceValue, LossError> {
    Ok(guidance_loss_sets(&trace_g.stroke_vectors(), &trace_p.stroke_vectors(), weights)?.0)
}

/// Combines the two weighted components from their parts.
pub fn guidance_from_parts(jv: f64, hausdorff_sum: f64, weights: LossWeights) -> f64 {
    jv + weights.beta_h * hausdorff_sum
}

pub fn perceptual_from_parts(geometric: f64, semantic: f64, weights: LossWeights) -> f64 {
    geometric + weights.beta_s * semantic
}

pub fn total_loss(percept: f64, guidance: f64) -> Result<f64, LossError> {
    for v in [percept, guidance] {
        if !v.is_finite() {
            return Err(LossError::NonFinite(v));
        }
    }
    Ok(percept + guidance)
}

pub fn default_backend() -> PyramidBackend {
    PyramidBackend::default()
}
