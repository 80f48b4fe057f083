use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Node outline with its shape-appropriate extents.
///
/// Rectangles and diamonds carry half-extents along each axis, circles a
/// radius, and ellipses their two semi-axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Rect { half_width: f64, half_height: f64 },
    Circle { radius: f64 },
    Ellipse { rx: f64, ry: f64 },
    Diamond { half_width: f64, half_height: f64 },
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Rect { .. } => "rect",
            Shape::Circle { .. } => "circle",
            Shape::Ellipse { .. } => "ellipse",
            Shape::Diamond { .. } => "diamond",
        }
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        match *self {
            Shape::Rect {
                half_width,
                half_height,
            }
            | Shape::Diamond {
                half_width,
                half_height,
            } => (half_width, half_height),
            Shape::Circle { radius } => (radius, radius),
            Shape::Ellipse { rx, ry } => (rx, ry),
        }
    }

    /// Scale factor `s` such that the offset `d * s` lands on the boundary.
    ///
    /// Every supported outline is star-shaped around its center, so the ray
    /// from the center meets the boundary exactly once.
    fn boundary_scale(&self, d: Point) -> f64 {
        match *self {
            Shape::Rect {
                half_width,
                half_height,
            } => 1.0 / (d.x.abs() / half_width).max(d.y.abs() / half_height),
            Shape::Circle { radius } => radius / d.norm(),
            Shape::Ellipse { rx, ry } => {
                let (u, v) = (d.x / rx, d.y / ry);
                1.0 / u.hypot(v)
            }
            Shape::Diamond {
                half_width,
                half_height,
            } => 1.0 / (d.x.abs() / half_width + d.y.abs() / half_height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ClipError {
    #[error("clip direction is degenerate: target coincides with the node center")]
    DegenerateDirection,
}

/// Point where the ray from `center` toward `toward` leaves the outline.
///
/// When `toward` lies outside the shape the result sits strictly between the
/// two points; when it lies inside, the boundary point beyond it is returned.
pub fn clip_edge_endpoint(shape: &Shape, center: Point, toward: Point) -> Result<Point, ClipError> {
    let d = toward.sub(center);
    if !(d.x.is_finite() && d.y.is_finite()) || (d.x == 0.0 && d.y == 0.0) {
        return Err(ClipError::DegenerateDirection);
    }
    let s = shape.boundary_scale(d);
    Ok(center.add(d.scale(s)))
}

/// Signed implicit boundary function: zero on the outline, negative inside.
///
/// Each shape is normalized so the value is dimensionless and comparable
/// across sizes.
pub fn boundary_residual(shape: &Shape, center: Point, p: Point) -> f64 {
    let d = p.sub(center);
    match *shape {
        Shape::Rect {
            half_width,
            half_height,
        } => (d.x.abs() / half_width).max(d.y.abs() / half_height) - 1.0,
        Shape::Circle { radius } => d.norm() / radius - 1.0,
        Shape::Ellipse { rx, ry } => (d.x / rx).powi(2) + (d.y / ry).powi(2) - 1.0,
        Shape::Diamond {
            half_width,
            half_height,
        } => d.x.abs() / half_width + d.y.abs() / half_height - 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Point, b: Point) -> bool {
        (a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12
    }

    #[test]
    fn circle_axis_exit() {
        let p = clip_edge_endpoint(
            &Shape::Circle { radius: 2.0 },
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
        )
        .unwrap();
        assert!(close(p, Point::new(2.0, 0.0)));
    }

    #[test]
    fn rect_hits_top_edge_first_on_diagonal() {
        let p = clip_edge_endpoint(
            &Shape::Rect {
                half_width: 3.0,
                half_height: 1.0,
            },
            Point::new(0.0, 0.0),
            Point::new(10.0, 10.0),
        )
        .unwrap();
        assert!(close(p, Point::new(1.0, 1.0)));
    }

    #[test]
    fn ellipse_minor_axis_exit() {
        let p = clip_edge_endpoint(
            &Shape::Ellipse { rx: 4.0, ry: 1.0 },
            Point::new(0.0, 0.0),
            Point::new(0.0, 9.0),
        )
        .unwrap();
        assert!(close(p, Point::new(0.0, 1.0)));
    }

    #[test]
    fn diamond_against_bisection() {
        let shape = Shape::Diamond {
            half_width: 2.0,
            half_height: 2.0,
        };
        let c = Point::new(0.0, 0.0);
        let toward = Point::new(5.0, 3.0);
        let p = clip_edge_endpoint(&shape, c, toward).unwrap();
        // bisection on t in [0, 1] for |x|/2 + |y|/2 - 1 = 0
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let q = Point::new(5.0 * mid, 3.0 * mid);
            if q.x.abs() / 2.0 + q.y.abs() / 2.0 - 1.0 < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = Point::new(5.0 * lo, 3.0 * lo);
        assert!((p.x - oracle.x).abs() < 1e-12 && (p.y - oracle.y).abs() < 1e-12);
        // t = 1 / (5/2 + 3/2) = 0.25
        assert!(close(p, Point::new(1.25, 0.75)));
    }

    #[test]
    fn degenerate_direction_is_an_error() {
        let err = clip_edge_endpoint(
            &Shape::Circle { radius: 1.0 },
            Point::new(3.0, 4.0),
            Point::new(3.0, 4.0),
        )
        .unwrap_err();
        assert_eq!(err, ClipError::DegenerateDirection);
    }

    #[test]
    fn target_inside_shape_still_lands_on_boundary() {
        let shape = Shape::Circle { radius: 10.0 };
        let c = Point::new(0.0, 0.0);
        let p = clip_edge_endpoint(&shape, c, Point::new(1.0, 0.0)).unwrap();
        assert!(close(p, Point::new(10.0, 0.0)));
    }
}
