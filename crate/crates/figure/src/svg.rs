use std::fmt::Write as _;

use crate::geometry::{clip_edge_endpoint, Point, Shape};
use crate::spec::{EdgeKind, EdgeSpec, FigureSpec, NodeSpec};
use crate::text::estimate_text_width;

/// Bumped whenever the byte output for an unchanged spec would change.
pub const RENDERER_VERSION: u32 = 1;

const STROKE: &str = "#333333";
const FILL: &str = "#ffffff";
const STROKE_WIDTH: f64 = 1.5;
/// Angular half-spread of a self-loop's two anchors around the node top.
const SELF_LOOP_SPREAD_DEG: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub enum RenderWarning {
    /// Estimated label width exceeds the node's horizontal extent. Sizes in
    /// the spec are authoritative, so the label is drawn anyway.
    LabelOverflow {
        node: String,
        line: usize,
        label_width: f64,
        node_width: f64,
    },
}

/// Fixed three-decimal, locale-independent number formatting.
fn num(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn pt(p: Point) -> String {
    format!("{},{}", num(p.x), num(p.y))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
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

pub fn render(spec: &FigureSpec) -> String {
    render_with_warnings(spec).0
}

pub fn render_with_warnings(spec: &FigureSpec) -> (String, Vec<RenderWarning>) {
    let mut warnings = Vec::new();
    let mut out = String::new();
    let (w, h) = (spec.canvas.width, spec.canvas.height);
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0.000 0.000 {} {}\" font-family=\"{}\" font-size=\"{}\">",
        num(w),
        num(h),
        num(w),
        num(h),
        escape(&spec.font.family),
        num(spec.font.size)
    );
    let _ = writeln!(
        out,
        "<!-- figurespec renderer {RENDERER_VERSION}, spec_version {} -->",
        spec.spec_version
    );

    if !spec.edges.is_empty() {
        out.push_str("<defs>\n");
        let _ = writeln!(
            out,
            "<marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" markerWidth=\"8\" markerHeight=\"8\" orient=\"auto\"><path d=\"M0,0 L10,5 L0,10 z\" fill=\"{STROKE}\"/></marker>"
        );
        out.push_str("</defs>\n");
        let _ = writeln!(
            out,
            "<g class=\"edges\" fill=\"none\" stroke=\"{STROKE}\" stroke-width=\"{}\">",
            num(STROKE_WIDTH)
        );
        let mut labels = Vec::new();
        for edge in &spec.edges {
            let (d, label_at) = edge_path(spec, edge);
            let _ = writeln!(
                out,
                "<path class=\"edge {}\" d=\"{}\" marker-end=\"url(#arrow)\"/>",
                edge.kind.as_str(),
                d
            );
            if let Some(label) = &edge.label {
                labels.push((label_at, label));
            }
        }
        out.push_str("</g>\n");
        if !labels.is_empty() {
            let _ = writeln!(out, "<g class=\"edge-labels\" fill=\"{STROKE}\">");
            for (at, label) in labels {
                let _ = writeln!(
                    out,
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
                    num(at.x),
                    num(at.y),
                    escape(label)
                );
            }
            out.push_str("</g>\n");
        }
    }

    out.push_str("<g class=\"nodes\">\n");
    for node in &spec.nodes {
        render_node(&mut out, spec, node, &mut warnings);
    }
    out.push_str("</g>\n</svg>\n");
    (out, warnings)
}

fn render_node(out: &mut String, spec: &FigureSpec, node: &NodeSpec, warnings: &mut Vec<RenderWarning>) {
    let c = node.center;
    let _ = writeln!(out, "<g class=\"node\" data-id=\"{}\">", escape(&node.id));
    let style = format!(
        "fill=\"{FILL}\" stroke=\"{STROKE}\" stroke-width=\"{}\"",
        num(STROKE_WIDTH)
    );
    match node.shape {
        Shape::Rect {
            half_width,
            half_height,
        } => {
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" {style}/>",
                num(c.x - half_width),
                num(c.y - half_height),
                num(2.0 * half_width),
                num(2.0 * half_height)
            );
        }
        Shape::Circle { radius } => {
            let _ = writeln!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" {style}/>",
                num(c.x),
                num(c.y),
                num(radius)
            );
        }
        Shape::Ellipse { rx, ry } => {
            let _ = writeln!(
                out,
                "<ellipse cx=\"{}\" cy=\"{}\" rx=\"{}\" ry=\"{}\" {style}/>",
                num(c.x),
                num(c.y),
                num(rx),
                num(ry)
            );
        }
        Shape::Diamond {
            half_width,
            half_height,
        } => {
            let pts = [
                Point::new(c.x, c.y - half_height),
                Point::new(c.x + half_width, c.y),
                Point::new(c.x, c.y + half_height),
                Point::new(c.x - half_width, c.y),
            ];
            let joined: Vec<String> = pts.iter().map(|p| pt(*p)).collect();
            let _ = writeln!(out, "<polygon points=\"{}\" {style}/>", joined.join(" "));
        }
    }

    let font = &spec.font;
    let n = node.label_lines.len();
    let lh = font.line_height();
    let node_width = 2.0 * node.shape.half_extents().0;
    let _ = writeln!(out, "<g class=\"label\" fill=\"{STROKE}\">");
    for (i, line) in node.label_lines.iter().enumerate() {
        let width = estimate_text_width(line, font);
        if width > node_width {
            warnings.push(RenderWarning::LabelOverflow {
                node: node.id.clone(),
                line: i,
                label_width: width,
                node_width,
            });
        }
        // baseline sits ~0.35em below the visual center of each line
        let y = c.y - (n as f64 - 1.0) * lh / 2.0 + i as f64 * lh + font.size * 0.35;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            num(c.x - width / 2.0),
            num(y),
            escape(line)
        );
    }
    out.push_str("</g>\n</g>\n");
}

/// Path data for an edge plus the anchor point for its label.
fn edge_path(spec: &FigureSpec, edge: &EdgeSpec) -> (String, Point) {
    // validation guarantees both endpoints exist and distinct nodes have
    // distinct centers
    let src = spec.node(&edge.src).expect("validated edge source");
    let dst = spec.node(&edge.dst).expect("validated edge target");
    match edge.kind {
        EdgeKind::Straight => {
            let s = clip(src, dst.center);
            let e = clip(dst, src.center);
            let mid = s.add(e).scale(0.5);
            (format!("M{} L{}", pt(s), pt(e)), mid.add(Point::new(0.0, -4.0)))
        }
        EdgeKind::Curved => {
            let chord = dst.center.sub(src.center);
            let len = chord.norm();
            let normal = Point::new(-chord.y / len, chord.x / len);
            let mid = src.center.add(dst.center).scale(0.5);
            let ctrl = mid.add(normal.scale(edge.curvature));
            let s = clip(src, ctrl);
            let e = clip(dst, ctrl);
            let at = s.scale(0.25).add(ctrl.scale(0.5)).add(e.scale(0.25));
            (
                format!("M{} Q{} {}", pt(s), pt(ctrl), pt(e)),
                at.add(Point::new(0.0, -4.0)),
            )
        }
        EdgeKind::SelfLoop => self_loop(src, spec.self_loop_radius),
    }
}

fn clip(node: &NodeSpec, toward: Point) -> Point {
    clip_edge_endpoint(&node.shape, node.center, toward).unwrap_or(node.center)
}

fn self_loop(node: &NodeSpec, radius: f64) -> (String, Point) {
    let c = node.center;
    let spread = SELF_LOOP_SPREAD_DEG.to_radians();
    let up = -std::f64::consts::FRAC_PI_2;
    let dir = |a: f64| c.add(Point::new(a.cos(), a.sin()));
    let s = clip(node, dir(up - spread));
    let e = clip(node, dir(up + spread));
    let half_chord = e.sub(s).norm() / 2.0;
    let r = radius.max(half_chord);
    // large-arc, clockwise on screen: leaves at the left anchor, bulges
    // upward, re-enters at the right anchor
    let rise = (r * r - half_chord * half_chord).max(0.0).sqrt();
    let chord_mid = s.add(e).scale(0.5);
    let top = Point::new(chord_mid.x, chord_mid.y - rise - r);
    (
        format!("M{} A{},{} 0 1,1 {}", pt(s), num(r), num(r), pt(e)),
        top.add(Point::new(0.0, -4.0)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::validate_spec;
    use serde_json::json;

    fn single_rect() -> FigureSpec {
        validate_spec(&json!({
            "spec_version": 1,
            "canvas": {"width": 120, "height": 80},
            "nodes": [{"id": "a", "shape": "rect", "center": [60, 40], "size": {"half_width": 40, "half_height": 20}, "label": "Hello"}]
        }))
        .unwrap()
    }

    #[test]
    fn single_rect_has_one_shape_and_one_label_group() {
        let svg = render(&single_rect());
        let shapes = ["<rect", "<circle", "<ellipse", "<polygon", "<path"]
            .iter()
            .map(|t| svg.matches(t).count())
            .sum::<usize>();
        assert_eq!(shapes, 1);
        assert_eq!(svg.matches("<g class=\"label\"").count(), 1);
        assert!(svg.contains(">Hello</text>"));
    }

    #[test]
    fn render_is_repeatable() {
        let spec = single_rect();
        assert_eq!(render(&spec), render(&spec));
    }

    #[test]
    fn numbers_use_three_decimals() {
        assert_eq!(num(1.0 / 3.0), "0.333");
        assert_eq!(num(-0.0001), "0.000");
        assert_eq!(num(1e12), "1000000000000.000");
    }

    #[test]
    fn labels_are_escaped() {
        let spec = validate_spec(&json!({
            "spec_version": 1,
            "canvas": {"width": 120, "height": 80},
            "nodes": [{"id": "a&b", "shape": "circle", "center": [60, 40], "size": {"radius": 30}, "label": "x < y & z"}]
        }))
        .unwrap();
        let svg = render(&spec);
        assert!(svg.contains("x &lt; y &amp; z"));
        assert!(svg.contains("data-id=\"a&amp;b\""));
    }

    #[test]
    fn self_loop_starts_and_ends_on_boundary() {
        let spec = validate_spec(&json!({
            "spec_version": 1,
            "canvas": {"width": 200, "height": 200},
            "nodes": [{"id": "a", "shape": "circle", "center": [100, 100], "size": {"radius": 20}}],
            "edges": [{"src": "a", "dst": "a"}]
        }))
        .unwrap();
        let (d, _) = edge_path(&spec, &spec.edges[0]);
        assert!(d.contains(" A"));
        let coords: Vec<f64> = d
            .split(|c: char| c == ' ' || c == ',' || c.is_ascii_alphabetic())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().unwrap())
            .collect();
        let s = Point::new(coords[0], coords[1]);
        let e = Point::new(coords[coords.len() - 2], coords[coords.len() - 1]);
        for p in [s, e] {
            let dist = p.sub(Point::new(100.0, 100.0)).norm();
            assert!((dist - 20.0).abs() < 2e-3, "{dist}");
            assert!(p.y < 100.0, "anchor should be on the upper half");
        }
    }

    #[test]
    fn curved_edge_is_quadratic_through_offset_control() {
        let spec = validate_spec(&json!({
            "spec_version": 1,
            "canvas": {"width": 300, "height": 200},
            "nodes": [
                {"id": "a", "shape": "circle", "center": [50, 100], "size": {"radius": 10}},
                {"id": "b", "shape": "circle", "center": [250, 100], "size": {"radius": 10}}
            ],
            "edges": [{"src": "a", "dst": "b", "kind": "curved", "curvature": -40}]
        }))
        .unwrap();
        let (d, _) = edge_path(&spec, &spec.edges[0]);
        // chord along +x, left normal is +y, so curvature -40 puts the
        // control point 40px above the midpoint
        assert!(d.contains("Q150.000,60.000"), "{d}");
    }

    #[test]
    fn overflowing_label_warns() {
        let spec = validate_spec(&json!({
            "spec_version": 1,
            "canvas": {"width": 120, "height": 80},
            "nodes": [{"id": "a", "shape": "rect", "center": [60, 40], "size": {"half_width": 10, "half_height": 10}, "label": "a long label"}]
        }))
        .unwrap();
        let (_, warnings) = render_with_warnings(&spec);
        assert_eq!(warnings.len(), 1);
    }
}
