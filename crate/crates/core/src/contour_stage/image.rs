//! Binary contour images: rendering from polylines and 1-bit PNG I/O.

use std::io::BufWriter;
use std::path::Path;

use thiserror::Error;

use super::hlr::{ContourError, Polyline};
use super::viewpoint::Viewpoint;
use crate::grid::Raster;

/// Side length of every contour image and sketch canvas, in pixels.
pub const CANVAS: usize = 224;
pub const DEFAULT_MARGIN: usize = 22;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image I/O on {path}: {message}")]
    Io { path: String, message: String },
    #[error("contour image must be {CANVAS}x{CANVAS}, got {0}x{1}")]
    Size(usize, usize),
    #[error("contour image has no ink")]
    Blank,
}

/// A 224×224 binary contour raster (`true` = ink).
#[derive(Debug, Clone, PartialEq)]
pub struct ContourImage {
    pixels: Vec<bool>,
    source_viewpoint: Option<Viewpoint>,
}

impl ContourImage {
    /// Wraps a row-major mask. Fails on wrong size or a blank mask.
    pub fn from_mask(pixels: Vec<bool>, source_viewpoint: Option<Viewpoint>) -> Result<Self, ImageError> {
        if pixels.len() != CANVAS * CANVAS {
            return Err(ImageError::Size(pixels.len(), 1));
        }
        if !pixels.iter().any(|&p| p) {
            return Err(ImageError::Blank);
        }
        Ok(Self {
            pixels,
            source_viewpoint,
        })
    }

    pub fn width(&self) -> usize {
        CANVAS
    }

    pub fn height(&self) -> usize {
        CANVAS
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn source_viewpoint(&self) -> Option<&Viewpoint> {
        self.source_viewpoint.as_ref()
    }

    #[inline]
    pub fn ink(&self, x: usize, y: usize) -> bool {
        self.pixels[y * CANVAS + x]
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Inclusive ink bounding box `(min_x, min_y, max_x, max_y)`.
    pub fn ink_bbox(&self) -> (usize, usize, usize, usize) {
        let mut bb = (usize::MAX, usize::MAX, 0, 0);
        for (i, _) in self.pixels.iter().enumerate().filter(|(_, &p)| p) {
            let (x, y) = (i % CANVAS, i / CANVAS);
            bb = (bb.0.min(x), bb.1.min(y), bb.2.max(x), bb.3.max(y));
        }
        bb
    }

    /// Ink as 1.0, background as 0.0.
    pub fn to_raster(&self) -> Raster {
        Raster::from_vec(CANVAS, CANVAS, self.pixels.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect())
    }

    /// Rotates the image a quarter turn clockwise.
    pub fn rotated_90(&self) -> Self {
        let mut out = vec![false; CANVAS * CANVAS];
        for y in 0..CANVAS {
            for x in 0..CANVAS {
                out[x * CANVAS + (CANVAS - 1 - y)] = self.ink(x, y);
            }
        }
        Self {
            pixels: out,
            source_viewpoint: self.source_viewpoint,
        }
    }

    /// Shifts ink by `(dx, dy)` pixels; ink leaving the canvas is lost.
    pub fn translated(&self, dx: isize, dy: isize) -> Result<Self, ImageError> {
        let mut out = vec![false; CANVAS * CANVAS];
        for y in 0..CANVAS as isize {
            for x in 0..CANVAS as isize {
                let (sx, sy) = (x - dx, y - dy);
                if sx >= 0 && sy >= 0 && sx < CANVAS as isize && sy < CANVAS as isize {
                    out[(y * CANVAS as isize + x) as usize] = self.ink(sx as usize, sy as usize);
                }
            }
        }
        Self::from_mask(out, self.source_viewpoint)
    }

    /// Encodes as a 1-bit grayscale PNG, ink black on white.
    pub fn to_png_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut bytes, CANVAS as u32, CANVAS as u32);
            encoder.set_color(png::ColorType::Grayscale);
            encoder.set_depth(png::BitDepth::One);
            let mut writer = encoder.write_header().expect("in-memory PNG header");
            let stride = CANVAS.div_ceil(8);
            let mut packed = vec![0u8; stride * CANVAS];
            for y in 0..CANVAS {
                for x in 0..CANVAS {
                    if !self.ink(x, y) {
                        packed[y * stride + x / 8] |= 0x80 >> (x % 8);
                    }
                }
            }
            writer.write_image_data(&packed).expect("in-memory PNG data");
        }
        bytes
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let file = std::fs::File::create(path).map_err(|e| io_error(path, e))?;
        use std::io::Write;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_png_bytes()).map_err(|e| io_error(path, e))
    }

    /// Loads any PNG the `image` crate understands; dark pixels (luma < 128)
    /// are ink.
    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let img = image::open(path).map_err(|e| io_error(path, e))?.to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w != CANVAS || h != CANVAS {
            return Err(ImageError::Size(w, h));
        }
        Self::from_mask(img.pixels().map(|p| p.0[0] < 128).collect(), None)
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> ImageError {
    ImageError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Distance from `p` to segment `ab`.
fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (ux, uy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = ux * ux + uy * uy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ux + (p[1] - a[1]) * uy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (a[0] + t * ux - p[0], a[1] + t * uy - p[1]);
    (dx * dx + dy * dy).sqrt()
}

/// Fits polylines (view-plane units, y up) into the canvas: the larger side
/// of their bounding box spans `CANVAS - 2·margin` pixels, centred. Pixel
/// `i` has its centre at coordinate `i`. Segments are drawn 1 px wide with
/// box-filter coverage `1 - d` and thresholded at 0.5.
pub fn render_contour_image(
    polylines: &[Polyline],
    margin: usize,
    source_viewpoint: Option<Viewpoint>,
) -> Result<ContourImage, ContourError> {
    let lines: Vec<&Polyline> = polylines.iter().filter(|l| l.len() >= 2).collect();
    if lines.is_empty() {
        return Err(ContourError::NoPolylines);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in lines.iter().flat_map(|l| l.iter()) {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let magnitude = lo.iter().chain(hi.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    if extent <= 1e-12 * magnitude.max(1e-300) || extent == 0.0 {
        return Err(ContourError::ZeroExtent);
    }
    let span = (CANVAS - 2 * margin) as f64;
    let scale = span / extent;
    let centre = [(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5];
    let mid = (CANVAS / 2) as f64;
    let to_px = |p: &[f64; 2]| [mid + (p[0] - centre[0]) * scale, mid - (p[1] - centre[1]) * scale];

    let mut coverage = vec![0.0f64; CANVAS * CANVAS];
    for line in lines {
        let pts: Vec<[f64; 2]> = line.iter().map(to_px).collect();
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let x0 = (a[0].min(b[0]) - 1.0).floor().max(0.0) as usize;
            let x1 = (a[0].max(b[0]) + 1.0).ceil().min((CANVAS - 1) as f64) as usize;
            let y0 = (a[1].min(b[1]) - 1.0).floor().max(0.0) as usize;
            let y1 = (a[1].max(b[1]) + 1.0).ceil().min((CANVAS - 1) as f64) as usize;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let c = (1.0 - segment_distance([x as f64, y as f64], a, b)).clamp(0.0, 1.0);
                    let cell = &mut coverage[y * CANVAS + x];
                    *cell = cell.max(c);
                }
            }
        }
    }
    let mask: Vec<bool> = coverage.iter().map(|&c| c >= 0.5 - 1e-9).collect();
    ContourImage::from_mask(mask, source_viewpoint).map_err(|_| ContourError::ZeroExtent)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: f64) -> Vec<Polyline> {
        vec![vec![[0.0, 0.0], [side, 0.0], [side, side], [0.0, side], [0.0, 0.0]]]
    }

    #[test]
    fn square_is_centred_with_margin() {
        let img = render_contour_image(&square(1.0), DEFAULT_MARGIN, None).unwrap();
        assert_eq!(img.ink_bbox(), (22, 22, 202, 202));
        assert_eq!(img.ink_count(), 4 * 180);
    }

    #[test]
    fn scale_normalization_is_exact() {
        let a = render_contour_image(&square(1.0), DEFAULT_MARGIN, None).unwrap();
        let b = render_contour_image(&square(1000.0), DEFAULT_MARGIN, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_point_is_zero_extent() {
        let err = render_contour_image(&[vec![[3.0, 3.0], [3.0, 3.0]]], DEFAULT_MARGIN, None).unwrap_err();
        assert_eq!(err, ContourError::ZeroExtent);
        assert_eq!(render_contour_image(&[vec![[1.0, 1.0]]], 22, None).unwrap_err(), ContourError::NoPolylines);
    }

    #[test]
    fn png_roundtrip() {
        let img = render_contour_image(&square(1.0), DEFAULT_MARGIN, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        img.save_png(&path).unwrap();
        assert_eq!(ContourImage::load_png(&path).unwrap(), img);
    }
}
