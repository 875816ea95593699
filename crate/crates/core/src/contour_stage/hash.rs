//! Difference hash for near-duplicate contour detection.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::image::ContourImage;

pub const DEFAULT_DEDUP_THRESHOLD: u32 = 6;

const COLS: usize = 9;
const ROWS: usize = 8;

/// 64-bit perceptual hash; bit `row * 8 + col` is set when cell `col` of
/// the 9×8 density grid is brighter than cell `col + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PerceptualHash(pub u64);

impl PerceptualHash {
    pub fn hamming(self, other: Self) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl From<PerceptualHash> for String {
    fn from(h: PerceptualHash) -> String {
        h.to_hex()
    }
}

impl TryFrom<String> for PerceptualHash {
    type Error = std::num::ParseIntError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        u64::from_str_radix(&s, 16).map(PerceptualHash)
    }
}

/// Length of the overlap of `[a0, a1)` and `[b0, b1)`.
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Ink density of a 9×8 grid of equal-area cells (area-weighted box average).
pub fn density_grid(image: &ContourImage) -> [[f64; COLS]; ROWS] {
    let (w, h) = (image.width(), image.height());
    let (cw, ch) = (w as f64 / COLS as f64, h as f64 / ROWS as f64);
    // Column and row weights into each cell.
    let col_w: Vec<[f64; COLS]> = (0..w)
        .map(|x| std::array::from_fn(|c| overlap(x as f64, x as f64 + 1.0, c as f64 * cw, (c + 1) as f64 * cw)))
        .collect();
    let row_w: Vec<[f64; ROWS]> = (0..h)
        .map(|y| std::array::from_fn(|r| overlap(y as f64, y as f64 + 1.0, r as f64 * ch, (r + 1) as f64 * ch)))
        .collect();
    let mut grid = [[0.0; COLS]; ROWS];
    for y in 0..h {
        for x in 0..w {
            if !image.ink(x, y) {
                continue;
            }
            for r in 0..ROWS {
                if row_w[y][r] == 0.0 {
                    continue;
                }
                for c in 0..COLS {
                    grid[r][c] += row_w[y][r] * col_w[x][c];
                }
            }
        }
    }
    let area = cw * ch;
    for row in grid.iter_mut() {
        row.iter_mut().for_each(|v| *v /= area);
    }
    grid
}

pub fn perceptual_hash(image: &ContourImage) -> PerceptualHash {
    let grid = density_grid(image);
    let mut bits = 0u64;
    for (r, row) in grid.iter().enumerate() {
        for c in 0..COLS - 1 {
            if row[c] > row[c + 1] {
                bits |= 1 << (r * 8 + c);
            }
        }
    }
    PerceptualHash(bits)
}

/// Indices kept by a greedy first-kept scan: an item is dropped when its
/// hash is within `threshold` bits of an already kept one.
pub fn dedup_indices(hashes: &[PerceptualHash], threshold: u32) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, h) in hashes.iter().enumerate() {
        if kept.iter().all(|&k| hashes[k].hamming(*h) > threshold) {
            kept.push(i);
        }
    }
    kept
}

pub fn dedup(images: Vec<ContourImage>, threshold: u32) -> Vec<ContourImage> {
    let hashes: Vec<PerceptualHash> = images.iter().map(perceptual_hash).collect();
    let keep = dedup_indices(&hashes, threshold);
    let mut keep = keep.into_iter().peekable();
    images
        .into_iter()
        .enumerate()
        .filter_map(|(i, img)| {
            if keep.peek() == Some(&i) {
                keep.next();
                Some(img)
            } else {
                None
            }
        })
        .collect()
}
