//! Dense row-major float images and the small set of image operators the
//! pipeline shares (connected-component labelling, separable Gaussian blur,
//! average pooling).

use serde::{Deserialize, Serialize};

/// A row-major grid of `f64` samples. Used for rasterizer output, adjoints,
/// saliency maps and embedding feature maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Wraps an existing buffer; panics when the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "raster buffer size mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &Raster) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Binarizes at `threshold` (value >= threshold is ink).
    pub fn threshold(&self, threshold: f64) -> Vec<bool> {
        self.data.iter().map(|&v| v >= threshold).collect()
    }

    /// 8-bit grayscale PNG; ink (1.0) is rendered black on white.
    pub fn to_gray_image(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize).clamp(0.0, 1.0);
            image::Luma([((1.0 - v) * 255.0).round() as u8])
        })
    }
}

/// Labels 8-connected components of `mask`. Returns per-pixel labels
/// (0 = background, components numbered from 1 in raster-scan order of
/// their first pixel) and the component count.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> (Vec<u32>, usize) {
    let mut labels = vec![0u32; width * height];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (x, y) = ((idx % width) as isize, (idx / width) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let n = ny as usize * width + nx as usize;
                    if mask[n] && labels[n] == 0 {
                        labels[n] = count;
                        stack.push(n);
                    }
                }
            }
        }
    }
    (labels, count as usize)
}

/// Normalized 1D Gaussian kernel truncated at `ceil(radius_sigmas * sigma)`.
pub fn gaussian_kernel(sigma: f64, radius_sigmas: f64) -> Vec<f64> {
    let radius = (radius_sigmas * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution with zero padding. With a symmetric kernel the
/// operator is self-adjoint, so the same call serves as its own transpose.
pub fn convolve_separable(src: &Raster, kernel: &[f64]) -> Raster {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (src.width as isize, src.height as isize);
    let mut tmp = Raster::zeros(src.width, src.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sx = x + k as isize - r;
                if sx >= 0 && sx < w {
                    acc += kv * src.data[(y * w + sx) as usize];
                }
            }
            tmp.data[(y * w + x) as usize] = acc;
        }
    }
    let mut out = Raster::zeros(src.width, src.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sy = y + k as isize - r;
                if sy >= 0 && sy < h {
                    acc += kv * tmp.data[(sy * w + x) as usize];
                }
            }
            out.data[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Non-overlapping `factor`×`factor` mean pooling. Dimensions must divide.
pub fn avg_pool(src: &Raster, factor: usize) -> Raster {
    assert!(src.width.is_multiple_of(factor) && src.height.is_multiple_of(factor));
    let (ow, oh) = (src.width / factor, src.height / factor);
    let mut out = Raster::zeros(ow, oh);
    let inv = 1.0 / (factor * factor) as f64;
    for y in 0..src.height {
        for x in 0..src.width {
            out.data[(y / factor) * ow + x / factor] += src.data[y * src.width + x] * inv;
        }
    }
    out
}

/// Transpose of [`avg_pool`].
pub fn avg_pool_adjoint(grad: &Raster, factor: usize) -> Raster {
    let (w, h) = (grad.width * factor, grad.height * factor);
    let inv = 1.0 / (factor * factor) as f64;
    let mut out = Raster::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            out.data[y * w + x] = grad.data[(y / factor) * grad.width + x / factor] * inv;
        }
    }
    out
}
