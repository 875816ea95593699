//! SVG 1.1 export of sketches.

use std::fmt::Write;

use super::stroke::{Point, Sketch};
use crate::contour_stage::CANVAS;

/// One `<path>` per stroke in stroke order, coordinates in pixels with three
/// decimals, black stroke on a white background.
pub fn to_svg(sketch: &Sketch) -> String {
    let size = CANVAS;
    let scale = CANVAS as f64;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">"
    );
    let _ = writeln!(out, "<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>");
    for stroke in sketch.strokes() {
        let p: Vec<String> = stroke
            .points()
            .iter()
            .map(|q| format!("{:.3} {:.3}", q[0] * scale, q[1] * scale))
            .collect();
        let _ = writeln!(
            out,
            "<path d=\"M {} C {}, {}, {}\" stroke=\"black\" stroke-width=\"{}\" fill=\"none\" stroke-linecap=\"round\"/>",
            p[0], p[1], p[2], p[3], stroke.width()
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Control points (pixels) of every path written by [`to_svg`], in order.
pub fn parse_svg_paths(svg: &str) -> Vec<[Point; 4]> {
    svg.split("d=\"")
        .skip(1)
        .filter_map(|rest| {
            let d = &rest[..rest.find('"')?];
            let nums: Vec<f64> = d
                .split(|c: char| c.is_whitespace() || c == ',' || c == 'M' || c == 'C')
                .filter(|t| !t.is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()
                .ok()?;
            (nums.len() == 8).then(|| [[nums[0], nums[1]], [nums[2], nums[3]], [nums[4], nums[5]], [nums[6], nums[7]]])
        })
        .collect()
}
