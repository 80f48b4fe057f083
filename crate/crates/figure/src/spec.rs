use std::collections::BTreeSet;
use std::fmt;

use serde_json::{json, Map, Value};

use crate::geometry::{Point, Shape};
use crate::text::FontConfig;

/// Highest document version this renderer understands.
pub const SPEC_VERSION: u32 = 1;

const DEFAULT_CURVATURE: f64 = 30.0;
const DEFAULT_SELF_LOOP_RADIUS: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Canvas {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub shape: Shape,
    pub center: Point,
    pub label_lines: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Straight,
    Curved,
    SelfLoop,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Straight => "straight",
            EdgeKind::Curved => "curved",
            EdgeKind::SelfLoop => "self_loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
    pub label: Option<String>,
    /// Signed offset of the quadratic control point from the chord midpoint,
    /// in pixels along the left-hand normal. Zero for non-curved edges.
    pub curvature: f64,
}

/// A validated, normalized figure document.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub spec_version: u32,
    pub canvas: Canvas,
    pub font: FontConfig,
    pub self_loop_radius: f64,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
}

impl FigureSpec {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Canonical JSON form: defaults filled in, keys sorted.
    ///
    /// Feeding this back through [`validate_spec`] yields an equal spec.
    pub fn to_canonical_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| {
                let size = match n.shape {
                    Shape::Rect {
                        half_width,
                        half_height,
                    }
                    | Shape::Diamond {
                        half_width,
                        half_height,
                    } => json!({"half_width": half_width, "half_height": half_height}),
                    Shape::Circle { radius } => json!({ "radius": radius }),
                    Shape::Ellipse { rx, ry } => json!({"rx": rx, "ry": ry}),
                };
                json!({
                    "id": n.id,
                    "shape": n.shape.name(),
                    "center": [n.center.x, n.center.y],
                    "size": size,
                    "label": n.label_lines,
                })
            })
            .collect();
        let edges: Vec<Value> = self
            .edges
            .iter()
            .map(|e| {
                let mut m = Map::new();
                m.insert("src".into(), json!(e.src));
                m.insert("dst".into(), json!(e.dst));
                m.insert("kind".into(), json!(e.kind.as_str()));
                if let Some(label) = &e.label {
                    m.insert("label".into(), json!(label));
                }
                if e.kind == EdgeKind::Curved {
                    m.insert("curvature".into(), json!(e.curvature));
                }
                Value::Object(m)
            })
            .collect();
        json!({
            "spec_version": self.spec_version,
            "canvas": {"width": self.canvas.width, "height": self.canvas.height},
            "font": serde_json::to_value(&self.font).expect("font config serializes"),
            "self_loop_radius": self.self_loop_radius,
            "nodes": nodes,
            "edges": edges,
        })
    }
}

/// One problem found in a figure document.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationError {
    NotJson(String),
    MissingField { path: String },
    BadType { path: String, expected: &'static str },
    UnsupportedVersion(i64),
    BadCanvas(String),
    BadFont(String),
    UnknownShape { node: String, shape: String },
    NonPositiveSize { node: String, field: &'static str },
    DuplicateNodeId(String),
    DanglingEdge { edge: usize, id: String },
    BadEdgeKind { edge: usize, kind: String },
    SelfLoopMismatch { edge: usize },
    CoincidentEndpoints { edge: usize },
}

impl ValidationError {
    pub fn code(&self) -> &'static str {
        match self {
            ValidationError::NotJson(_) => "NotJson",
            ValidationError::MissingField { .. } => "MissingField",
            ValidationError::BadType { .. } => "BadType",
            ValidationError::UnsupportedVersion(_) => "UnsupportedVersion",
            ValidationError::BadCanvas(_) => "BadCanvas",
            ValidationError::BadFont(_) => "BadFont",
            ValidationError::UnknownShape { .. } => "UnknownShape",
            ValidationError::NonPositiveSize { .. } => "NonPositiveSize",
            ValidationError::DuplicateNodeId(_) => "DuplicateNodeId",
            ValidationError::DanglingEdge { .. } => "DanglingEdge",
            ValidationError::BadEdgeKind { .. } => "BadEdgeKind",
            ValidationError::SelfLoopMismatch { .. } => "SelfLoopMismatch",
            ValidationError::CoincidentEndpoints { .. } => "CoincidentEndpoints",
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationError::NotJson(e) => write!(f, "document is not valid JSON: {e}"),
            ValidationError::MissingField { path } => write!(f, "missing required field `{path}`"),
            ValidationError::BadType { path, expected } => {
                write!(f, "`{path}` must be {expected}")
            }
            ValidationError::UnsupportedVersion(v) => {
                write!(f, "spec_version {v} is not supported (max {SPEC_VERSION})")
            }
            ValidationError::BadCanvas(why) => write!(f, "bad canvas: {why}"),
            ValidationError::BadFont(why) => write!(f, "bad font config: {why}"),
            ValidationError::UnknownShape { node, shape } => {
                write!(f, "node `{node}` has unknown shape `{shape}`")
            }
            ValidationError::NonPositiveSize { node, field } => {
                write!(f, "node `{node}` size `{field}` must be > 0")
            }
            ValidationError::DuplicateNodeId(id) => write!(f, "duplicate node id `{id}`"),
            ValidationError::DanglingEdge { edge, id } => {
                write!(f, "edge {edge} references missing node `{id}`")
            }
            ValidationError::BadEdgeKind { edge, kind } => {
                write!(f, "edge {edge} has unknown kind `{kind}`")
            }
            ValidationError::SelfLoopMismatch { edge } => {
                write!(f, "edge {edge}: kind self_loop is required exactly when src == dst")
            }
            ValidationError::CoincidentEndpoints { edge } => {
                write!(f, "edge {edge} joins two nodes with the same center")
            }
        }
    }
}

pub fn validate_str(document: &str) -> Result<FigureSpec, Vec<ValidationError>> {
    let value: Value = serde_json::from_str(document)
        .map_err(|e| vec![ValidationError::NotJson(e.to_string())])?;
    validate_spec(&value)
}

/// Check a raw document, collecting every violation rather than stopping at
/// the first one.
pub fn validate_spec(document: &Value) -> Result<FigureSpec, Vec<ValidationError>> {
    let mut errs = Vec::new();
    let Some(root) = document.as_object() else {
        return Err(vec![ValidationError::BadType {
            path: "$".into(),
            expected: "an object",
        }]);
    };

    let spec_version = match root.get("spec_version") {
        None => {
            errs.push(ValidationError::MissingField {
                path: "spec_version".into(),
            });
            SPEC_VERSION
        }
        Some(v) => match v.as_i64() {
            Some(n) if (1..=SPEC_VERSION as i64).contains(&n) => n as u32,
            Some(n) => {
                errs.push(ValidationError::UnsupportedVersion(n));
                SPEC_VERSION
            }
            None => {
                errs.push(ValidationError::BadType {
                    path: "spec_version".into(),
                    expected: "an integer",
                });
                SPEC_VERSION
            }
        },
    };

    let canvas = parse_canvas(root.get("canvas"), &mut errs);
    let font = parse_font(root.get("font"), &mut errs);

    let self_loop_radius = match root.get("self_loop_radius") {
        None => DEFAULT_SELF_LOOP_RADIUS,
        Some(v) => match v.as_f64() {
            Some(r) if r > 0.0 && r.is_finite() => r,
            _ => {
                errs.push(ValidationError::BadType {
                    path: "self_loop_radius".into(),
                    expected: "a positive number",
                });
                DEFAULT_SELF_LOOP_RADIUS
            }
        },
    };

    let mut nodes = Vec::new();
    match root.get("nodes") {
        None => errs.push(ValidationError::MissingField {
            path: "nodes".into(),
        }),
        Some(Value::Array(items)) => {
            let mut seen = BTreeSet::new();
            for (i, item) in items.iter().enumerate() {
                if let Some(node) = parse_node(i, item, &mut errs) {
                    if !seen.insert(node.id.clone()) {
                        errs.push(ValidationError::DuplicateNodeId(node.id.clone()));
                        continue;
                    }
                    nodes.push(node);
                }
            }
        }
        Some(_) => errs.push(ValidationError::BadType {
            path: "nodes".into(),
            expected: "an array",
        }),
    }

    let mut edges = Vec::new();
    match root.get("edges") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                if let Some(edge) = parse_edge(i, item, &nodes, &mut errs) {
                    edges.push(edge);
                }
            }
        }
        Some(_) => errs.push(ValidationError::BadType {
            path: "edges".into(),
            expected: "an array",
        }),
    }

    if errs.is_empty() {
        Ok(FigureSpec {
            spec_version,
            canvas,
            font,
            self_loop_radius,
            nodes,
            edges,
        })
    } else {
        Err(errs)
    }
}

fn positive(v: Option<&Value>) -> Option<f64> {
    v.and_then(Value::as_f64).filter(|x| *x > 0.0 && x.is_finite())
}

fn parse_canvas(v: Option<&Value>, errs: &mut Vec<ValidationError>) -> Canvas {
    let fallback = Canvas {
        width: 1.0,
        height: 1.0,
    };
    let Some(v) = v else {
        errs.push(ValidationError::MissingField {
            path: "canvas".into(),
        });
        return fallback;
    };
    let Some(obj) = v.as_object() else {
        errs.push(ValidationError::BadCanvas("canvas must be an object".into()));
        return fallback;
    };
    let width = positive(obj.get("width"));
    let height = positive(obj.get("height"));
    if width.is_none() {
        errs.push(ValidationError::BadCanvas("width must be a number > 0".into()));
    }
    if height.is_none() {
        errs.push(ValidationError::BadCanvas("height must be a number > 0".into()));
    }
    Canvas {
        width: width.unwrap_or(1.0),
        height: height.unwrap_or(1.0),
    }
}

fn parse_font(v: Option<&Value>, errs: &mut Vec<ValidationError>) -> FontConfig {
    let Some(v) = v else {
        return FontConfig::default();
    };
    match serde_json::from_value::<FontConfig>(v.clone()) {
        Ok(font) => {
            let ok = font.size > 0.0
                && font.narrow_advance > 0.0
                && font.wide_advance > 0.0
                && font.size.is_finite()
                && font.narrow_advance.is_finite()
                && font.wide_advance.is_finite();
            if !ok {
                errs.push(ValidationError::BadFont(
                    "size and advances must be finite and > 0".into(),
                ));
            }
            if font.wide_ranges.iter().any(|(lo, hi)| lo > hi) {
                errs.push(ValidationError::BadFont("wide range with lo > hi".into()));
            }
            font
        }
        Err(e) => {
            errs.push(ValidationError::BadFont(e.to_string()));
            FontConfig::default()
        }
    }
}

fn parse_point(v: &Value) -> Option<Point> {
    match v {
        Value::Array(xs) if xs.len() == 2 => {
            let x = xs[0].as_f64()?;
            let y = xs[1].as_f64()?;
            Some(Point::new(x, y))
        }
        Value::Object(m) => {
            let x = m.get("x")?.as_f64()?;
            let y = m.get("y")?.as_f64()?;
            Some(Point::new(x, y))
        }
        _ => None,
    }
    .filter(|p| p.x.is_finite() && p.y.is_finite())
}

fn parse_node(i: usize, v: &Value, errs: &mut Vec<ValidationError>) -> Option<NodeSpec> {
    let path = format!("nodes[{i}]");
    let Some(obj) = v.as_object() else {
        errs.push(ValidationError::BadType {
            path,
            expected: "an object",
        });
        return None;
    };
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => {
            errs.push(ValidationError::BadType {
                path: format!("{path}.id"),
                expected: "a non-empty string",
            });
            return None;
        }
        None => {
            errs.push(ValidationError::MissingField {
                path: format!("{path}.id"),
            });
            return None;
        }
    };
    let center = match obj.get("center") {
        None => {
            errs.push(ValidationError::MissingField {
                path: format!("{path}.center"),
            });
            Point::new(0.0, 0.0)
        }
        Some(c) => parse_point(c).unwrap_or_else(|| {
            errs.push(ValidationError::BadType {
                path: format!("{path}.center"),
                expected: "[x, y] or {\"x\", \"y\"} with finite numbers",
            });
            Point::new(0.0, 0.0)
        }),
    };

    let empty = Map::new();
    let size = match obj.get("size") {
        Some(Value::Object(m)) => m,
        Some(_) => {
            errs.push(ValidationError::BadType {
                path: format!("{path}.size"),
                expected: "an object",
            });
            &empty
        }
        None => &empty,
    };
    let mut dim = |field: &'static str| -> f64 {
        match size.get(field) {
            None => {
                errs.push(ValidationError::MissingField {
                    path: format!("{path}.size.{field}"),
                });
                1.0
            }
            Some(v) => match v.as_f64() {
                Some(x) if x > 0.0 && x.is_finite() => x,
                Some(_) => {
                    errs.push(ValidationError::NonPositiveSize {
                        node: id.clone(),
                        field,
                    });
                    1.0
                }
                None => {
                    errs.push(ValidationError::BadType {
                        path: format!("{path}.size.{field}"),
                        expected: "a number",
                    });
                    1.0
                }
            },
        }
    };

    let shape = match obj.get("shape").and_then(Value::as_str) {
        Some("rect") => Some(Shape::Rect {
            half_width: dim("half_width"),
            half_height: dim("half_height"),
        }),
        Some("diamond") => Some(Shape::Diamond {
            half_width: dim("half_width"),
            half_height: dim("half_height"),
        }),
        Some("circle") => Some(Shape::Circle {
            radius: dim("radius"),
        }),
        Some("ellipse") => Some(Shape::Ellipse {
            rx: dim("rx"),
            ry: dim("ry"),
        }),
        Some(other) => {
            errs.push(ValidationError::UnknownShape {
                node: id.clone(),
                shape: other.to_string(),
            });
            None
        }
        None => {
            errs.push(ValidationError::MissingField {
                path: format!("{path}.shape"),
            });
            None
        }
    };

    let label_lines = match obj.get("label") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::String(s)) => s.split('\n').map(str::to_string).collect(),
        Some(Value::Array(xs)) if xs.iter().all(Value::is_string) => xs
            .iter()
            .map(|x| x.as_str().unwrap_or_default().to_string())
            .collect(),
        Some(_) => {
            errs.push(ValidationError::BadType {
                path: format!("{path}.label"),
                expected: "a string or an array of strings",
            });
            Vec::new()
        }
    };

    // a node with a bad shape still registers its id for edge checks
    Some(NodeSpec {
        id,
        shape: shape.unwrap_or(Shape::Circle { radius: 1.0 }),
        center,
        label_lines,
    })
}

fn parse_edge(
    i: usize,
    v: &Value,
    nodes: &[NodeSpec],
    errs: &mut Vec<ValidationError>,
) -> Option<EdgeSpec> {
    let path = format!("edges[{i}]");
    let Some(obj) = v.as_object() else {
        errs.push(ValidationError::BadType {
            path,
            expected: "an object",
        });
        return None;
    };
    let mut endpoint = |field: &str| -> Option<String> {
        match obj.get(field) {
            Some(Value::String(s)) => {
                if !nodes.iter().any(|n| &n.id == s) {
                    errs.push(ValidationError::DanglingEdge {
                        edge: i,
                        id: s.clone(),
                    });
                }
                Some(s.clone())
            }
            Some(_) => {
                errs.push(ValidationError::BadType {
                    path: format!("{path}.{field}"),
                    expected: "a node id string",
                });
                None
            }
            None => {
                errs.push(ValidationError::MissingField {
                    path: format!("{path}.{field}"),
                });
                None
            }
        }
    };
    let src = endpoint("src");
    let dst = endpoint("dst");
    let (src, dst) = (src?, dst?);

    let kind = match obj.get("kind") {
        None => {
            if src == dst {
                EdgeKind::SelfLoop
            } else {
                EdgeKind::Straight
            }
        }
        Some(Value::String(k)) => match k.as_str() {
            "straight" => EdgeKind::Straight,
            "curved" => EdgeKind::Curved,
            "self_loop" => EdgeKind::SelfLoop,
            other => {
                errs.push(ValidationError::BadEdgeKind {
                    edge: i,
                    kind: other.to_string(),
                });
                return None;
            }
        },
        Some(_) => {
            errs.push(ValidationError::BadType {
                path: format!("{path}.kind"),
                expected: "a string",
            });
            return None;
        }
    };
    if (kind == EdgeKind::SelfLoop) != (src == dst) {
        errs.push(ValidationError::SelfLoopMismatch { edge: i });
    }
    if src != dst {
        let a = nodes.iter().find(|n| n.id == src);
        let b = nodes.iter().find(|n| n.id == dst);
        if let (Some(a), Some(b)) = (a, b) {
            if a.center == b.center {
                errs.push(ValidationError::CoincidentEndpoints { edge: i });
            }
        }
    }

    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            errs.push(ValidationError::BadType {
                path: format!("{path}.label"),
                expected: "a string",
            });
            None
        }
    };
    let curvature = match (kind, obj.get("curvature")) {
        (EdgeKind::Curved, None) => DEFAULT_CURVATURE,
        (EdgeKind::Curved, Some(v)) => match v.as_f64().filter(|c| c.is_finite()) {
            Some(c) => c,
            None => {
                errs.push(ValidationError::BadType {
                    path: format!("{path}.curvature"),
                    expected: "a finite number",
                });
                DEFAULT_CURVATURE
            }
        },
        _ => 0.0,
    };

    Some(EdgeSpec {
        src,
        dst,
        kind,
        label,
        curvature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(v: Value) -> Vec<&'static str> {
        validate_spec(&v)
            .unwrap_err()
            .iter()
            .map(ValidationError::code)
            .collect()
    }

    fn two_nodes() -> Value {
        json!({
            "spec_version": 1,
            "canvas": {"width": 300, "height": 200},
            "nodes": [
                {"id": "a", "shape": "rect", "center": [60, 100], "size": {"half_width": 40, "half_height": 20}, "label": "A"},
                {"id": "b", "shape": "ellipse", "center": {"x": 220, "y": 100}, "size": {"rx": 40, "ry": 25}, "label": ["B", "two"]}
            ],
            "edges": [{"src": "a", "dst": "b", "label": "uses"}]
        })
    }

    #[test]
    fn valid_document_is_normalized() {
        let spec = validate_spec(&two_nodes()).unwrap();
        assert_eq!(spec.nodes.len(), 2);
        assert_eq!(spec.edges[0].kind, EdgeKind::Straight);
        assert_eq!(spec.font, FontConfig::default());
        assert_eq!(spec.nodes[1].label_lines, vec!["B", "two"]);
        // canonical form round-trips
        let again = validate_spec(&spec.to_canonical_json()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn dangling_edge_reported() {
        let mut doc = two_nodes();
        doc["edges"] = json!([{"src": "a", "dst": "z"}]);
        let errs = validate_spec(&doc).unwrap_err();
        assert_eq!(
            errs,
            vec![ValidationError::DanglingEdge {
                edge: 0,
                id: "z".into()
            }]
        );
    }

    #[test]
    fn unknown_shape_reported() {
        let mut doc = two_nodes();
        doc["nodes"][0]["shape"] = json!("hexagon");
        assert_eq!(codes(doc), vec!["UnknownShape"]);
    }

    #[test]
    fn all_errors_are_collected() {
        let doc = json!({
            "spec_version": 1,
            "canvas": {"width": 0, "height": -5},
            "nodes": [
                {"id": "a", "shape": "rect", "center": [0, 0], "size": {"half_width": 0, "half_height": 3}},
                {"id": "a", "shape": "circle", "center": [5, 5], "size": {"radius": 2}},
                {"id": "c", "shape": "star", "center": [9, 9], "size": {}}
            ],
            "edges": [{"src": "a", "dst": "q"}, {"src": "c", "dst": "c", "kind": "straight"}]
        });
        let got = codes(doc);
        for want in [
            "BadCanvas",
            "NonPositiveSize",
            "DuplicateNodeId",
            "UnknownShape",
            "DanglingEdge",
            "SelfLoopMismatch",
        ] {
            assert!(got.contains(&want), "missing {want} in {got:?}");
        }
    }

    #[test]
    fn missing_version_rejected() {
        let mut doc = two_nodes();
        doc.as_object_mut().unwrap().remove("spec_version");
        assert_eq!(codes(doc), vec!["MissingField"]);
    }

    #[test]
    fn self_loop_defaults_when_src_equals_dst() {
        let mut doc = two_nodes();
        doc["edges"] = json!([{"src": "a", "dst": "a"}]);
        let spec = validate_spec(&doc).unwrap();
        assert_eq!(spec.edges[0].kind, EdgeKind::SelfLoop);
    }

    #[test]
    fn curved_edge_gets_default_curvature() {
        let mut doc = two_nodes();
        doc["edges"] = json!([{"src": "a", "dst": "b", "kind": "curved"}]);
        let spec = validate_spec(&doc).unwrap();
        assert_eq!(spec.edges[0].curvature, DEFAULT_CURVATURE);
    }

    #[test]
    fn coincident_centers_rejected() {
        let mut doc = two_nodes();
        doc["nodes"][1]["center"] = json!([60, 100]);
        assert_eq!(codes(doc), vec!["CoincidentEndpoints"]);
    }
}
