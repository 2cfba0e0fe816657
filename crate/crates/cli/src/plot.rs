//! Scatter-plot emission as self-contained SVG.
//!
//! One square panel per cloud, all panels sharing the same coordinate range
//! (the padded union bounding box) so positions are comparable across
//! panels. Point color is a pure function of the point's tag, so the same
//! tag renders as the same fill in every panel — the visual thread that
//! lets a reader follow points from source through latent to target.

use ddib_core::cloud::PointCloud;
use ddib_core::{Error, Result};

const PANEL: f64 = 320.0;
const MARGIN: f64 = 24.0;
const TITLE_H: f64 = 20.0;
const POINT_R: f64 = 2.0;

/// Renders the named clouds side by side. All clouds must be 2-dimensional.
pub fn scatter_svg(panels: &[(String, PointCloud)]) -> Result<String> {
    if panels.is_empty() {
        return Err(Error::Parameter("nothing to plot".into()));
    }
    for (name, cloud) in panels {
        if cloud.dim() != 2 {
            return Err(Error::Shape(format!(
                "{name} has dimension {}, scatter plots need 2",
                cloud.dim()
            )));
        }
    }
    let (x0, y0, side) = shared_range(panels)?;

    let width = MARGIN + panels.len() as f64 * (PANEL + MARGIN);
    let height = MARGIN + TITLE_H + PANEL + MARGIN;
    let mut svg = String::with_capacity(panels.iter().map(|(_, c)| c.n()).sum::<usize>() * 64);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));

    let scale = PANEL / side;
    for (k, (name, cloud)) in panels.iter().enumerate() {
        let left = MARGIN + k as f64 * (PANEL + MARGIN);
        let top = MARGIN + TITLE_H;
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"14\" \
             text-anchor=\"middle\">{}</text>\n",
            left + PANEL / 2.0,
            MARGIN + 12.0,
            escape(name)
        ));
        svg.push_str(&format!(
            "<rect x=\"{left:.2}\" y=\"{top:.2}\" width=\"{PANEL}\" height=\"{PANEL}\" \
             fill=\"none\" stroke=\"#999\"/>\n"
        ));
        for (tag, p) in cloud.iter() {
            // SVG y grows downward; data y grows upward.
            let cx = left + (p[0] - x0) * scale;
            let cy = top + PANEL - (p[1] - y0) * scale;
            svg.push_str(&format!(
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{POINT_R}\" fill=\"{}\"/>\n",
                tag_color(tag)
            ));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// The square `(x0, y0, side)` covering every cloud, padded 5% per side.
fn shared_range(panels: &[(String, PointCloud)]) -> Result<(f64, f64, f64)> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (_, cloud) in panels {
        let (l, h) = cloud.bounding_box()?;
        for a in 0..2 {
            lo[a] = lo[a].min(l[a]);
            hi[a] = hi[a].max(h[a]);
        }
    }
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9) * 1.1;
    let cx = (lo[0] + hi[0]) / 2.0;
    let cy = (lo[1] + hi[1]) / 2.0;
    Ok((cx - side / 2.0, cy - side / 2.0, side))
}

/// Deterministic tag color: successive tags land ~137.5 degrees apart on the
/// hue wheel, so any number of tags stays distinguishable.
fn tag_color(tag: u64) -> String {
    let hue = (tag as f64 * 137.50776405003785) % 360.0;
    format!("hsl({hue:.3}, 70%, 45%)")
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}
