//! View ranking by a deterministic image-complexity heuristic.

use super::image::ContourImage;
use crate::grid::label_components;

/// `(ink fraction) · (1 + components) · (1 + entropy)`, where entropy is the
/// Shannon entropy (nats) of the ink distribution over an 8×8 grid.
pub fn complexity_score(image: &ContourImage) -> f64 {
    let (w, h) = (image.width(), image.height());
    let ink = image.ink_count();
    if ink == 0 {
        return 0.0;
    }
    let (_, components) = label_components(image.pixels(), w, h);
    let mut hist = [0usize; 64];
    for y in 0..h {
        for x in 0..w {
            if image.ink(x, y) {
                hist[(y * 8 / h) * 8 + x * 8 / w] += 1;
            }
        }
    }
    let total = ink as f64;
    let entropy: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    (ink as f64 / (w * h) as f64) * (1.0 + components as f64) * (1.0 + entropy)
}

/// Top-`n` images by descending score. Ties keep canonical viewpoint order,
/// falling back to input order for images without a viewpoint.
pub fn select_views(images: &[ContourImage], n: usize) -> Vec<ContourImage> {
    let scored: Vec<(f64, usize, usize)> = images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let order = img.source_viewpoint().map_or(usize::MAX, |v| v.canonical_index());
            (complexity_score(img), order, i)
        })
        .collect();
    let mut ranked = scored;
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    ranked.into_iter().take(n).map(|(_, _, i)| images[i].clone()).collect()
}
