//! SVG plot and CSV sidecar of the certified boundaries in the plane.

use std::fmt::Write as _;

use crate::results::ResultsFile;
use crate::CliError;

pub const CANVAS: f64 = 800.0;
pub const RAYS: usize = 512;
const PAD: f64 = 0.1;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Boundary polylines of each certified member, tagged with its case index.
pub struct Plot {
    pub original_box: ([f64; 2], [f64; 2]),
    pub curves: Vec<Curve>,
}

pub struct Curve {
    pub case_index: usize,
    pub name: String,
    pub points: Vec<[f64; 2]>,
}

impl Plot {
    pub fn from_results(results: &ResultsFile) -> Result<Self, CliError> {
        if results.dim != 2 {
            return Err(CliError::Usage(format!("render needs a planar system, results have dimension {}", results.dim)));
        }
        let members = results.members()?;
        if members.is_empty() {
            return Err(CliError::Usage("results contain no certified cases to render".into()));
        }
        let mut curves = Vec::new();
        for (case, est) in members {
            let points = est
                .boundary_polyline(RAYS)
                .map_err(|e| CliError::Results(e.to_string()))?
                .into_iter()
                .map(|p| [p[0], p[1]])
                .collect();
            curves.push(Curve { case_index: case.index, name: case.name(), points });
        }
        let ob = &results.original_box;
        if ob.lower.len() != 2 || ob.upper.len() != 2 {
            return Err(CliError::Results("original_box must be planar".into()));
        }
        Ok(Self { original_box: ([ob.lower[0], ob.lower[1]], [ob.upper[0], ob.upper[1]]), curves })
    }

    /// Square frame holding the original box and every curve, padded.
    fn frame(&self) -> ([f64; 2], f64) {
        let (mut lo, mut hi) = self.original_box;
        for p in self.curves.iter().flat_map(|c| &c.points) {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]) * (1.0 + 2.0 * PAD);
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        ([center[0] - 0.5 * span, center[1] - 0.5 * span], span)
    }

    pub fn svg(&self) -> String {
        let (origin, span) = self.frame();
        let px = |p: [f64; 2]| {
            ((p[0] - origin[0]) / span * CANVAS, CANVAS - (p[1] - origin[1]) / span * CANVAS)
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{c}" height="{c}" viewBox="0 0 {c} {c}">"#,
            c = CANVAS
        );
        let _ = writeln!(s, r#"  <rect width="100%" height="100%" fill="white"/>"#);

        let (ox, oy) = px([0.0, 0.0]);
        let _ = writeln!(
            s,
            r##"  <g stroke="#bbbbbb" stroke-width="1"><line x1="0" y1="{oy:.3}" x2="{CANVAS}" y2="{oy:.3}"/><line x1="{ox:.3}" y1="0" x2="{ox:.3}" y2="{CANVAS}"/></g>"##
        );

        let (lo, hi) = self.original_box;
        let (x0, y0) = px([lo[0], hi[1]]);
        let (x1, y1) = px([hi[0], lo[1]]);
        let _ = writeln!(
            s,
            r##"  <rect x="{x0:.3}" y="{y0:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#444444" stroke-width="1.5" stroke-dasharray="6 4"/>"##,
            x1 - x0,
            y1 - y0
        );

        for (i, curve) in self.curves.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = curve
                .points
                .iter()
                .map(|p| {
                    let (x, y) = px(*p);
                    format!("{x:.3},{y:.3}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"  <polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
            let _ = writeln!(
                s,
                r#"  <text x="16" y="{:.0}" font-family="sans-serif" font-size="14" fill="{color}">{}</text>"#,
                24.0 + 20.0 * i as f64,
                escape(&curve.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("case_index,point_index,x1,x2\n");
        for curve in &self.curves {
            for (j, p) in curve.points.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{}", curve.case_index, j, p[0], p[1]);
            }
        }
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot() -> Plot {
        Plot {
            original_box: ([-1.0, -0.5], [1.0, 0.5]),
            curves: vec![Curve {
                case_index: 0,
                name: "a <b>".into(),
                points: vec![[2.0, 0.0], [0.0, 1.0], [-2.0, 0.0], [0.0, -1.0]],
            }],
        }
    }

    #[test]
    fn frame_covers_box_and_curves_with_padding() {
        let (origin, span) = plot().frame();
        assert!((span - 4.0 * 1.2).abs() < 1e-12);
        assert!(origin[0] < -2.0 && origin[0] + span > 2.0);
        assert!(origin[1] < -1.0 && origin[1] + span > 1.0);
    }

    #[test]
    fn svg_escapes_labels_and_has_one_polygon_per_curve() {
        let svg = plot().svg();
        assert!(svg.contains("a &lt;b&gt;"));
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn csv_rows() {
        let csv = plot().csv();
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().nth(1), Some("0,0,2,0"));
    }
}
