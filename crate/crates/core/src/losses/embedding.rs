//! Image embedding backends used by the perceptual loss.

use std::io::{Cursor, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde::Deserialize;

use super::LossError;
use crate::contour_stage::CANVAS;
use crate::grid::{avg_pool, avg_pool_adjoint, convolve_separable, gaussian_kernel, Raster};

/// Output of a backend: a unit-norm (or all-zero) global vector and the
/// feature maps compared by the geometric loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub global: Vec<f64>,
    pub layers: Vec<Raster>,
}

/// Adjoints with respect to an [`Embedding`]'s parts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrad {
    pub global: Vec<f64>,
    pub layers: Vec<Raster>,
}

pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> String;

    fn embed(&self, image: &Raster) -> Result<Embedding, LossError>;

    /// Pulls embedding adjoints back to the input image.
    fn backward(&self, image: &Raster, grad: &EmbeddingGrad) -> Result<Raster, LossError>;
}

/// Blur pyramid: 4×, 8× and 16× mean pooling, each followed by a Gaussian
/// blur of one cell. The 56² and 28² maps are the geometric layers; the 14²
/// map, flattened and L2-normalized, is the global embedding.
#[derive(Debug, Clone)]
pub struct PyramidBackend {
    kernel: Vec<f64>,
}

pub const GEOMETRIC_FACTORS: [usize; 2] = [4, 8];
pub const GLOBAL_FACTOR: usize = 16;

impl Default for PyramidBackend {
    fn default() -> Self {
        Self {
            kernel: gaussian_kernel(1.0, 3.0),
        }
    }
}

impl PyramidBackend {
    fn level(&self, image: &Raster, factor: usize) -> Raster {
        convolve_separable(&avg_pool(image, factor), &self.kernel)
    }

    fn level_adjoint(&self, grad: &Raster, factor: usize) -> Raster {
        avg_pool_adjoint(&convolve_separable(grad, &self.kernel), factor)
    }
}

fn check_canvas(image: &Raster) -> Result<(), LossError> {
    if image.width != CANVAS || image.height != CANVAS {
        return Err(LossError::Shape(format!(
            "embedding input must be {CANVAS}x{CANVAS}, got {}x{}",
            image.width, image.height
        )));
    }
    Ok(())
}

impl EmbeddingBackend for PyramidBackend {
    fn name(&self) -> String {
        "pyramid".to_string()
    }

    fn embed(&self, image: &Raster) -> Result<Embedding, LossError> {
        check_canvas(image)?;
        let layers = GEOMETRIC_FACTORS.iter().map(|&f| self.level(image, f)).collect();
        let coarse = self.level(image, GLOBAL_FACTOR);
        let norm = coarse.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        let global = if norm > 0.0 {
            coarse.data.iter().map(|v| v / norm).collect()
        } else {
            vec![0.0; coarse.data.len()]
        };
        Ok(Embedding { global, layers })
    }

    fn backward(&self, image: &Raster, grad: &EmbeddingGrad) -> Result<Raster, LossError> {
        check_canvas(image)?;
        if grad.layers.len() != GEOMETRIC_FACTORS.len() {
            return Err(LossError::Shape(format!("expected {} layer adjoints", GEOMETRIC_FACTORS.len())));
        }
        let mut out = Raster::zeros(CANVAS, CANVAS);
        for (g, &f) in grad.layers.iter().zip(&GEOMETRIC_FACTORS) {
            let back = self.level_adjoint(g, f);
            out.data.iter_mut().zip(&back.data).for_each(|(o, b)| *o += b);
        }
        let coarse = self.level(image, GLOBAL_FACTOR);
        let norm = coarse.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && grad.global.iter().any(|&g| g != 0.0) {
            // d(v/|v|) = (I - y yᵀ) / |v|
            let y: Vec<f64> = coarse.data.iter().map(|v| v / norm).collect();
            let proj: f64 = y.iter().zip(&grad.global).map(|(a, b)| a * b).sum();
            let dv: Vec<f64> = grad.global.iter().zip(&y).map(|(g, yi)| (g - yi * proj) / norm).collect();
            let dv = Raster::from_vec(coarse.width, coarse.height, dv);
            let back = self.level_adjoint(&dv, GLOBAL_FACTOR);
            out.data.iter_mut().zip(&back.data).for_each(|(o, b)| *o += b);
        }
        Ok(out)
    }
}

/// Delegates embedding to an external program: the image is written to its
/// stdin as an 8-bit grayscale PNG (ink black) and the program prints
/// `{"global": [...], "layers": [[...], ...]}`. It provides no gradients.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub program: PathBuf,
}

#[derive(Deserialize)]
struct ExternalResponse {
    global: Vec<f64>,
    #[serde(default)]
    layers: Vec<Vec<f64>>,
}

impl EmbeddingBackend for ExternalBackend {
    fn name(&self) -> String {
        format!("external:{}", self.program.display())
    }

    fn embed(&self, image: &Raster) -> Result<Embedding, LossError> {
        check_canvas(image)?;
        let mut png = Vec::new();
        image
            .to_gray_image()
            .write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
            .map_err(|e| LossError::Backend(e.to_string()))?;
        let backend_err = |e: std::io::Error| LossError::Backend(format!("{}: {e}", self.program.display()));
        let mut child = Command::new(&self.program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(backend_err)?;
        child.stdin.take().expect("piped stdin").write_all(&png).map_err(backend_err)?;
        let output = child.wait_with_output().map_err(backend_err)?;
        if !output.status.success() {
            return Err(LossError::Backend(format!("{} exited with {}", self.program.display(), output.status)));
        }
        let resp: ExternalResponse =
            serde_json::from_slice(&output.stdout).map_err(|e| LossError::Backend(format!("bad response: {e}")))?;
        let norm = resp.global.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && (norm - 1.0).abs() > 1e-4 {
            return Err(LossError::Backend(format!("global embedding has norm {norm}")));
        }
        let layers = resp.layers.into_iter().map(|l| Raster::from_vec(l.len(), 1, l)).collect();
        Ok(Embedding {
            global: resp.global,
            layers,
        })
    }

    fn backward(&self, _image: &Raster, _grad: &EmbeddingGrad) -> Result<Raster, LossError> {
        Err(LossError::Backend(format!("{} provides no gradients", self.name())))
    }
}
