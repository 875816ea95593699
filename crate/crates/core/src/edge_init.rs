//! Edge-constrained stroke initialization.
//!
//! Contour components are traced into ordered feature segments. Each segment
//! receives four seeds at fixed arc-length fractions; the seed budget is then
//! trimmed evenly across segments or topped up greedily from a saliency map.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour_stage::{ContourImage, CANVAS};
use crate::grid::{convolve_separable, gaussian_kernel, label_components, Raster};
use crate::stroke_model::{Sketch, Stroke, StrokeError};

pub const MIN_SEGMENT_PIXELS: usize = 4;
pub const SEEDS_PER_SEGMENT: usize = 4;
pub const SALIENCY_SIGMA: f64 = 3.0;
pub const SUPPRESSION_RADIUS: f64 = 8.0;
pub const INIT_RADIUS: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum EdgeInitError {
    #[error("contour image has no ink")]
    Blank,
    #[error("contour has no feature segment of at least {MIN_SEGMENT_PIXELS} pixels")]
    NoSegments,
    #[error("requested {0} seeds; at least one is required")]
    ZeroSeeds(usize),
    #[error("saliency map exhausted after {placed} of {requested} extra seeds")]
    SaliencyExhausted { placed: usize, requested: usize },
    #[error(transparent)]
    Stroke(#[from] StrokeError),
    #[error("writing overlay {path}: {message}")]
    Io { path: String, message: String },
}

/// An ordered chain of contour pixels `(x, y)` belonging to one connected
/// feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSegment {
    pub pixels: Vec<[usize; 2]>,
    pub closed: bool,
    /// Arc length in pixels, including the closing step of a loop.
    pub length: f64,
}

impl FeatureSegment {
    fn new(pixels: Vec<[usize; 2]>, closed: bool) -> Self {
        let mut length: f64 = pixels.windows(2).map(|w| step_length(w[0], w[1])).sum();
        if closed {
            length += step_length(pixels[pixels.len() - 1], pixels[0]);
        }
        Self { pixels, closed, length }
    }

    /// Arc-length position of every pixel from the start.
    pub fn arc_positions(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.pixels.len());
        out.push(0.0);
        for w in self.pixels.windows(2) {
            acc += step_length(w[0], w[1]);
            out.push(acc);
        }
        out
    }

    /// The pixel whose arc position is nearest `fraction · length`; ties go
    /// to the earlier pixel.
    pub fn pixel_at_fraction(&self, fraction: f64) -> [usize; 2] {
        let target = fraction * self.length;
        let arc = self.arc_positions();
        let mut best = 0;
        for (i, a) in arc.iter().enumerate() {
            if (a - target).abs() < (arc[best] - target).abs() {
                best = i;
            }
        }
        self.pixels[best]
    }

    /// Seed fractions in the order they are kept: the last entry is the first
    /// to be discarded.
    fn fractions(&self) -> [f64; SEEDS_PER_SEGMENT] {
        if self.closed {
            [0.0, 0.5, 0.25, 0.75]
        } else {
            [0.0, 1.0, 1.0 / 3.0, 2.0 / 3.0]
        }
    }
}

fn step_length(a: [usize; 2], b: [usize; 2]) -> f64 {
    if a[0] != b[0] && a[1] != b[1] {
        std::f64::consts::SQRT_2
    } else {
        1.0
    }
}

/// Neighbour offsets: 4-neighbours (E, S, W, N) before diagonals.
const NEIGHBOURS: [(isize, isize); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

fn neighbours(p: [usize; 2]) -> impl Iterator<Item = [usize; 2]> {
    NEIGHBOURS.iter().filter_map(move |&(dx, dy)| {
        let (x, y) = (p[0] as isize + dx, p[1] as isize + dy);
        (x >= 0 && y >= 0 && x < CANVAS as isize && y < CANVAS as isize).then_some([x as usize, y as usize])
    })
}

fn adjacent(a: [usize; 2], b: [usize; 2]) -> bool {
    a != b && a[0].abs_diff(b[0]) <= 1 && a[1].abs_diff(b[1]) <= 1
}

/// Walks a component from `start`, always moving to the unvisited neighbour
/// that turns least; ties prefer 4-neighbours in E, S, W, N order.
fn trace(start: [usize; 2], member: &dyn Fn([usize; 2]) -> bool, visited: &mut [bool]) -> Vec<[usize; 2]> {
    let mut path = vec![start];
    visited[start[1] * CANVAS + start[0]] = true;
    let mut heading: Option<(f64, f64)> = None;
    let mut current = start;
    loop {
        let mut best: Option<([usize; 2], f64)> = None;
        for next in neighbours(current) {
            if !member(next) || visited[next[1] * CANVAS + next[0]] {
                continue;
            }
            let (dx, dy) = (next[0] as f64 - current[0] as f64, next[1] as f64 - current[1] as f64);
            let turn = heading.map_or(0.0, |(hx, hy)| {
                let cos = (hx * dx + hy * dy) / ((hx * hx + hy * hy).sqrt() * (dx * dx + dy * dy).sqrt());
                1.0 - cos
            });
            if best.is_none_or(|(_, t)| turn < t - 1e-12) {
                best = Some((next, turn));
            }
        }
        let Some((next, _)) = best else { break };
        heading = Some((next[0] as f64 - current[0] as f64, next[1] as f64 - current[1] as f64));
        visited[next[1] * CANVAS + next[0]] = true;
        path.push(next);
        current = next;
    }
    path
}

/// Splits the contour into 8-connected components and traces each into an
/// ordered segment, longest first. Components shorter than
/// [`MIN_SEGMENT_PIXELS`] are ignored.
pub fn segment_features(image: &ContourImage) -> Result<Vec<FeatureSegment>, EdgeInitError> {
    if image.ink_count() == 0 {
        return Err(EdgeInitError::Blank);
    }
    let (labels, count) = label_components(image.pixels(), CANVAS, CANVAS);
    let mut members: Vec<Vec<[usize; 2]>> = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            members[l as usize - 1].push([i % CANVAS, i / CANVAS]);
        }
    }
    let mut visited = vec![false; CANVAS * CANVAS];
    let mut segments = Vec::new();
    for (label, pixels) in members.iter().enumerate() {
        let label = label as u32 + 1;
        let member = |p: [usize; 2]| labels[p[1] * CANVAS + p[0]] == label;
        let degree = |p: [usize; 2]| neighbours(p).filter(|&q| member(q)).count();
        // Pixels are in raster order, so the first match is the minimal (y, x).
        let endpoint = pixels.iter().copied().find(|&p| degree(p) == 1);
        let start = endpoint.unwrap_or(pixels[0]);
        let path = trace(start, &member, &mut visited);
        if path.len() < MIN_SEGMENT_PIXELS {
            continue;
        }
        let closed = endpoint.is_none() && adjacent(path[0], path[path.len() - 1]);
        segments.push(FeatureSegment::new(path, closed));
    }
    if segments.is_empty() {
        return Err(EdgeInitError::NoSegments);
    }
    // Stable: equal lengths keep component order.
    segments.sort_by(|a, b| b.length.total_cmp(&a.length));
    Ok(segments)
}

/// Gaussian-blurred ink density, normalized to a maximum of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap(pub Raster);

pub fn saliency_map(image: &ContourImage) -> Result<SaliencyMap, EdgeInitError> {
    if image.ink_count() == 0 {
        return Err(EdgeInitError::Blank);
    }
    let mut blurred = convolve_separable(&image.to_raster(), &gaussian_kernel(SALIENCY_SIGMA, 4.0));
    let peak = blurred.max();
    blurred.data.iter_mut().for_each(|v| *v /= peak);
    Ok(SaliencyMap(blurred))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSource {
    Edge { segment: usize, fraction: f64 },
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    /// Pixel coordinates `(x, y)`.
    pub pixel: [usize; 2],
    pub source: SeedSource,
}

impl Seed {
    /// Pixel centre in normalized canvas coordinates.
    pub fn normalized(&self) -> [f64; 2] {
        [
            (self.pixel[0] as f64 + 0.5) / CANVAS as f64,
            (self.pixel[1] as f64 + 0.5) / CANVAS as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPlan {
    /// Edge seeds grouped by segment, then greedy extras in pick order.
    pub seeds: Vec<Seed>,
    /// Segments left without any seed because `n` was below the segment
    /// count.
    pub dropped_segments: Vec<usize>,
}

impl SeedPlan {
    pub fn per_segment(&self, segment: usize) -> usize {
        self.seeds
            .iter()
            .filter(|s| matches!(s.source, SeedSource::Edge { segment: k, .. } if k == segment))
            .count()
    }
}

/// Places exactly `n` seeds: four per segment, trimmed one at a time from
/// the most loaded segment (shorter first on ties), or extended with
/// saliency maxima separated by [`SUPPRESSION_RADIUS`].
pub fn place_seed_points(segments: &[FeatureSegment], saliency: &SaliencyMap, n: usize) -> Result<SeedPlan, EdgeInitError> {
    if n == 0 {
        return Err(EdgeInitError::ZeroSeeds(n));
    }
    if segments.is_empty() {
        return Err(EdgeInitError::NoSegments);
    }
    let f = segments.len();
    let mut counts = vec![SEEDS_PER_SEGMENT; f];
    let mut total = SEEDS_PER_SEGMENT * f;
    while total > n.max(f) {
        let pick = (0..f)
            .filter(|&i| counts[i] >= 2)
            .max_by(|&a, &b| {
                counts[a]
                    .cmp(&counts[b])
                    .then(segments[b].length.total_cmp(&segments[a].length))
                    .then(a.cmp(&b))
            })
            .expect("some segment holds two seeds while total exceeds the segment count");
        counts[pick] -= 1;
        total -= 1;
    }
    let mut dropped_segments = Vec::new();
    if n < f {
        // Segments are sorted longest first; the shortest lose coverage.
        for i in (n..f).rev() {
            counts[i] = 0;
            dropped_segments.push(i);
        }
        dropped_segments.reverse();
    }

    let mut seeds = Vec::with_capacity(n);
    for (i, seg) in segments.iter().enumerate() {
        let mut kept: Vec<f64> = seg.fractions()[..counts[i]].to_vec();
        kept.sort_by(f64::total_cmp);
        for fraction in kept {
            seeds.push(Seed {
                pixel: seg.pixel_at_fraction(fraction),
                source: SeedSource::Edge { segment: i, fraction },
            });
        }
    }

    let extra = n.saturating_sub(SEEDS_PER_SEGMENT * f);
    let mut map = saliency.0.clone();
    for placed in 0..extra {
        let (mut best, mut value) = (0, f64::NEG_INFINITY);
        for (i, &v) in map.data.iter().enumerate() {
            if v > value {
                best = i;
                value = v;
            }
        }
        if value <= 0.0 {
            return Err(EdgeInitError::SaliencyExhausted { placed, requested: extra });
        }
        let (bx, by) = (best % CANVAS, best / CANVAS);
        suppress_disk(&mut map, bx, by, SUPPRESSION_RADIUS);
        seeds.push(Seed {
            pixel: [bx, by],
            source: SeedSource::Greedy,
        });
    }
    Ok(SeedPlan { seeds, dropped_segments })
}

fn suppress_disk(map: &mut Raster, cx: usize, cy: usize, radius: f64) {
    let r = radius.ceil() as isize;
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (cx as isize + dx, cy as isize + dy);
            if x < 0 || y < 0 || x >= map.width as isize || y >= map.height as isize {
                continue;
            }
            if ((dx * dx + dy * dy) as f64) < radius * radius {
                map.set(x as usize, y as usize, 0.0);
            }
        }
    }
}

/// One stroke per seed (normalized coordinates): `p1` is the seed and
/// `p2..p4` are uniform in the disk of radius [`INIT_RADIUS`] around it.
pub fn init_strokes(seeds: &[[f64; 2]], rng_seed: u64, width: f64) -> Result<Sketch, EdgeInitError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let strokes = seeds
        .iter()
        .map(|&p1| {
            let mut pts = [p1; 4];
            for p in pts.iter_mut().skip(1) {
                let r = INIT_RADIUS * rng.random::<f64>().sqrt();
                let a = std::f64::consts::TAU * rng.random::<f64>();
                *p = [p1[0] + r * a.cos(), p1[1] + r * a.sin()];
            }
            Stroke::new(pts, width)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sketch::new(strokes)?)
}

/// Contour in grey with each seed marked by a red 3×3 square.
pub fn seed_overlay(image: &ContourImage, seeds: &[Seed]) -> RgbImage {
    let mut out = RgbImage::from_fn(CANVAS as u32, CANVAS as u32, |x, y| {
        if image.ink(x as usize, y as usize) {
            Rgb([96, 96, 96])
        } else {
            Rgb([255, 255, 255])
        }
    });
    for s in seeds {
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (x, y) = (s.pixel[0] as isize + dx, s.pixel[1] as isize + dy);
                if x >= 0 && y >= 0 && x < CANVAS as isize && y < CANVAS as isize {
                    out.put_pixel(x as u32, y as u32, Rgb([220, 0, 0]));
                }
            }
        }
    }
    out
}

pub fn save_seed_overlay(image: &ContourImage, seeds: &[Seed], path: &Path) -> Result<(), EdgeInitError> {
    seed_overlay(image, seeds).save(path).map_err(|e| EdgeInitError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour_stage::render_contour_image;

    fn circle(cx: f64, cy: f64, r: f64) -> Vec<[f64; 2]> {
        (0..=256)
            .map(|i| {
                let a = i as f64 / 256.0 * std::f64::consts::TAU;
                [cx + r * a.cos(), cy + r * a.sin()]
            })
            .collect()
    }

    fn square() -> Vec<[f64; 2]> {
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]
    }

    fn image(lines: &[Vec<[f64; 2]>]) -> ContourImage {
        render_contour_image(lines, 22, None).unwrap()
    }

    #[test]
    fn square_is_one_closed_segment() {
        let segs = segment_features(&image(&[square()])).unwrap();
        assert_eq!(segs.len(), 1);
        assert!(segs[0].closed);
        assert!((segs[0].length - 720.0).abs() < 8.0, "{}", segs[0].length);
    }

    #[test]
    fn two_circles_are_two_closed_segments() {
        let img = image(&[circle(0.0, 0.0, 1.0), circle(3.0, 0.0, 1.0)]);
        let segs = segment_features(&img).unwrap();
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s.closed));
    }

    #[test]
    fn open_line_is_open() {
        let segs = segment_features(&image(&[vec![[0.0, 0.0], [1.0, 0.3]]])).unwrap();
        assert_eq!(segs.len(), 1);
        assert!(!segs[0].closed);
        let seg = &segs[0];
        for w in seg.pixels.windows(2) {
            assert!(adjacent(w[0], w[1]));
        }
    }

    #[test]
    fn saliency_properties() {
        let img = image(&[circle(0.0, 0.0, 0.1), circle(1.0, 0.0, 0.1)]);
        let sal = saliency_map(&img).unwrap();
        assert!((sal.0.max() - 1.0).abs() < 1e-12);
        let left = (0..CANVAS / 2).flat_map(|x| (0..CANVAS).map(move |y| (x, y))).map(|(x, y)| sal.0.get(x, y));
        let right = (CANVAS / 2..CANVAS).flat_map(|x| (0..CANVAS).map(move |y| (x, y))).map(|(x, y)| sal.0.get(x, y));
        let (l, r) = (left.fold(0.0f64, f64::max), right.fold(0.0f64, f64::max));
        assert!((l - r).abs() < 1e-9, "{l} vs {r}");
        // Far corner is more than 5 sigma from any ink.
        assert!(sal.0.get(0, 0) < 1e-3);
    }

    #[test]
    fn one_segment_six_seeds_adds_spaced_extras() {
        let img = image(&[circle(0.0, 0.0, 1.0)]);
        let segs = segment_features(&img).unwrap();
        let plan = place_seed_points(&segs, &saliency_map(&img).unwrap(), 6).unwrap();
        assert_eq!(plan.seeds.len(), 6);
        assert_eq!(plan.per_segment(0), 4);
        let greedy: Vec<_> = plan.seeds.iter().filter(|s| s.source == SeedSource::Greedy).collect();
        assert_eq!(greedy.len(), 2);
        let (a, b) = (greedy[0].pixel, greedy[1].pixel);
        let d = ((a[0] as f64 - b[0] as f64).powi(2) + (a[1] as f64 - b[1] as f64).powi(2)).sqrt();
        assert!(d >= 8.0);
    }

    #[test]
    fn fewer_seeds_than_segments_drops_smallest() {
        let img = image(&[circle(0.0, 0.0, 1.0), circle(3.0, 0.0, 0.5), circle(6.0, 0.0, 0.25)]);
        let segs = segment_features(&img).unwrap();
        assert_eq!(segs.len(), 3);
        let plan = place_seed_points(&segs, &saliency_map(&img).unwrap(), 2).unwrap();
        assert_eq!(plan.seeds.len(), 2);
        assert_eq!(plan.dropped_segments, vec![2]);
        assert_eq!((plan.per_segment(0), plan.per_segment(1)), (1, 1));
    }

    #[test]
    fn init_strokes_stay_within_radius() {
        let seeds = [[0.5, 0.5], [0.1, 0.9], [0.0, 0.0]];
        let sk = init_strokes(&seeds, 42, 1.5).unwrap();
        assert_eq!(sk.len(), 3);
        for (stroke, seed) in sk.strokes().iter().zip(&seeds) {
            assert_eq!(stroke.points()[0], *seed);
            for p in &stroke.points()[1..] {
                assert!(((p[0] - seed[0]).powi(2) + (p[1] - seed[1]).powi(2)).sqrt() <= INIT_RADIUS + 1e-15);
            }
        }
        assert_eq!(init_strokes(&seeds, 42, 1.5).unwrap(), sk);
        assert_ne!(init_strokes(&seeds, 43, 1.5).unwrap(), sk);
    }

    #[test]
    fn blank_and_zero_requests_fail() {
        let img = image(&[square()]);
        let segs = segment_features(&img).unwrap();
        let sal = saliency_map(&img).unwrap();
        assert_eq!(place_seed_points(&segs, &sal, 0).unwrap_err(), EdgeInitError::ZeroSeeds(0));
        assert_eq!(place_seed_points(&[], &sal, 3).unwrap_err(), EdgeInitError::NoSegments);
    }
}
