//! Direct SVG rendering of ellipse boundaries, no plotting dependency.

use std::fmt::Write as _;

use reachpac_core::ellipsoid::Ellipsoid;

pub struct Outline<'a> {
    pub set: &'a Ellipsoid,
    pub label: &'a str,
    pub color: &'a str,
    pub dashed: bool,
    pub opacity: f64,
}

/// Renders boundary outlines of 2-D sets into a standalone SVG.
pub fn render_overlay(outlines: &[Outline<'_>], title: &str) -> String {
    const SEGMENTS: usize = 256;
    const SIZE: f64 = 640.0;
    const MARGIN: f64 = 60.0;

    let curves: Vec<Vec<(f64, f64)>> = outlines
        .iter()
        .map(|o| o.set.boundary_points_2d(SEGMENTS).expect("2-D set"))
        .collect();

    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for pts in &curves {
        for &(x, y) in pts {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1e-12);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let to_px = |x: f64, y: f64| {
        (
            MARGIN + (x - min_x) * scale,
            // flip y so the plot reads mathematically
            SIZE - MARGIN - (y - min_y) * scale,
        )
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>",
        SIZE / 2.0
    );
    for (i, (outline, pts)) in outlines.iter().zip(&curves).enumerate() {
        let mut path = String::new();
        for (j, &(x, y)) in pts.iter().enumerate() {
            let (px, py) = to_px(x, y);
            let cmd = if j == 0 { 'M' } else { 'L' };
            let _ = write!(path, "{cmd}{px:.2} {py:.2} ");
        }
        path.push('Z');
        let dash = if outline.dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        let _ = writeln!(
            svg,
            "  <path d=\"{path}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\" stroke-opacity=\"{}\"{dash}/>",
            outline.color, outline.opacity
        );
        let y_legend = 48.0 + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            "  <line x1=\"{m}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{}\" stroke-width=\"2\" stroke-opacity=\"{}\"{dash}/>",
            MARGIN + 28.0,
            outline.color,
            outline.opacity,
            m = MARGIN,
            y = y_legend,
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            MARGIN + 34.0,
            y_legend + 4.0,
            outline.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_contains_all_outlines() {
        let a = Ellipsoid::new(2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let b = a.with_level(0.5).unwrap();
        let svg = render_overlay(
            &[
                Outline {
                    set: &a,
                    label: "initial",
                    color: "#002676",
                    dashed: false,
                    opacity: 1.0,
                },
                Outline {
                    set: &b,
                    label: "adjusted",
                    color: "#ff0080",
                    dashed: true,
                    opacity: 0.6,
                },
            ],
            "comparison",
        );
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("initial") && svg.contains("adjusted"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
