//! SVG drawing of a layout: time runs right, addresses run up, one
//! rectangle per tensor.

use std::fmt::Write;

use crate::format::PlanDoc;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const MARGIN: f64 = 40.0;
const ACTIVATION: &str = "#d62728";
const OTHER: &str = "#1f77b4";

/// Renders every tensor of `doc` that has both an offset and a span.
pub fn render_svg(doc: &PlanDoc) -> String {
    let steps = doc.tensors.values().map(|t| t.end + 1).max().unwrap_or(1).max(1) as f64;
    let capacity = doc.capacity.max(1) as f64;
    let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(
        out,
        r##"<rect class="frame" x="{MARGIN}" y="{MARGIN}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{MARGIN}" y="{}" font-size="12">timestep</text><text x="4" y="{}" font-size="12">offset</text>"#,
        HEIGHT - 12.0,
        MARGIN - 8.0
    )
    .unwrap();
    for (id, t) in &doc.tensors {
        let Some(&offset) = doc.layout.get(id) else { continue };
        let x = MARGIN + w * t.start as f64 / steps;
        let width = w * (t.end - t.start + 1) as f64 / steps;
        let height = h * t.size_bytes as f64 / capacity;
        let y = MARGIN + h - h * (offset + t.size_bytes) as f64 / capacity;
        let color = if t.activation { ACTIVATION } else { OTHER };
        writeln!(
            out,
            r##"<rect class="tensor" x="{x:.2}" y="{y:.2}" width="{width:.2}" height="{height:.2}" fill="{color}" fill-opacity="0.7" stroke="#222" stroke-width="0.5"><title>tensor {id}: {} bytes at {offset}, steps {}-{}</title></rect>"##,
            t.size_bytes, t.start, t.end
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}
