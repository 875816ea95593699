//! Bidirectional Hausdorff distance between sets of stroke vectors.

use serde::{Deserialize, Serialize};

use super::LossError;

fn euclid(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The distance and the `(g, p)` index pair realizing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HausdorffValue {
    pub distance: f64,
    pub g_index: usize,
    pub p_index: usize,
}

/// `max_{a ∈ from} min_{b ∈ to} ‖a − b‖` with the realizing `(a, b)`
/// indices; ties go to the lowest index.
pub fn one_sided(from: &[[f64; 8]], to: &[[f64; 8]]) -> Result<(f64, usize, usize), LossError> {
    if from.is_empty() || to.is_empty() {
        return Err(LossError::EmptySet);
    }
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for (i, a) in from.iter().enumerate() {
        let mut near = (f64::INFINITY, 0);
        for (j, b) in to.iter().enumerate() {
            let d = euclid(a, b);
            if d < near.0 {
                near = (d, j);
            }
        }
        if near.0 > best.0 {
            best = (near.0, i, near.1);
        }
    }
    Ok(best)
}

pub fn hausdorff(g: &[[f64; 8]], p: &[[f64; 8]]) -> Result<HausdorffValue, LossError> {
    let (forward, gi, pi) = one_sided(g, p)?;
    let (reverse, pj, gj) = one_sided(p, g)?;
    Ok(if forward >= reverse {
        HausdorffValue {
            distance: forward,
            g_index: gi,
            p_index: pi,
        }
    } else {
        HausdorffValue {
            distance: reverse,
            g_index: gj,
            p_index: pj,
        }
    })
}

/// Subgradient of the distance with respect to `p[value.p_index]`.
pub fn hausdorff_subgradient(g: &[[f64; 8]], p: &[[f64; 8]], value: &HausdorffValue) -> [f64; 8] {
    let (a, b) = (&g[value.g_index], &p[value.p_index]);
    if value.distance == 0.0 {
        return [0.0; 8];
    }
    std::array::from_fn(|k| (b[k] - a[k]) / value.distance)
}
