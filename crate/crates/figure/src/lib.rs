//! Declarative figure documents rendered to deterministic SVG.
//!
//! A [`FigureSpec`] lists nodes with explicit positions and the edges between
//! them. [`validate_spec`] collects every problem in a raw JSON document and,
//! when there are none, returns a normalized spec. [`render`] turns a
//! validated spec into an SVG 1.1 document whose bytes depend only on the
//! spec, its `spec_version`, and the font configuration.
//!
//! ```
//! let doc = r#"{
//!   "spec_version": 1,
//!   "canvas": {"width": 200, "height": 100},
//!   "nodes": [
//!     {"id": "a", "shape": "rect", "center": [50, 50], "size": {"half_width": 30, "half_height": 15}, "label": ["A"]},
//!     {"id": "b", "shape": "circle", "center": [150, 50], "size": {"radius": 20}, "label": ["B"]}
//!   ],
//!   "edges": [{"src": "a", "dst": "b"}]
//! }"#;
//! let spec = aris_figure::validate_str(doc).unwrap();
//! let svg = aris_figure::render(&spec);
//! assert!(svg.starts_with("<?xml"));
//! ```

mod geometry;
mod spec;
mod svg;
mod text;

pub use geometry::{boundary_residual, clip_edge_endpoint, ClipError, Point, Shape};
pub use spec::{
    validate_spec, validate_str, Canvas, EdgeKind, EdgeSpec, FigureSpec, NodeSpec, ValidationError,
    SPEC_VERSION,
};
pub use svg::{render, render_with_warnings, RenderWarning, RENDERER_VERSION};
pub use text::{estimate_text_width, is_wide, FontConfig};
