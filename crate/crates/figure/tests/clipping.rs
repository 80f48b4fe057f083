//! Clipped endpoints against an independent bisection on the implicit
//! boundary equation of each shape.

use aris_figure::{boundary_residual, clip_edge_endpoint, Point, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: usize = 1000;
const TOL: f64 = 1e-9;

fn inside(shape: &Shape, c: Point, p: Point) -> bool {
    let (dx, dy) = (p.x - c.x, p.y - c.y);
    match *shape {
        Shape::Rect { half_width, half_height } => dx.abs() < half_width && dy.abs() < half_height,
        Shape::Circle { radius } => dx * dx + dy * dy < radius * radius,
        Shape::Ellipse { rx, ry } => (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) < 1.0,
        Shape::Diamond { half_width, half_height } => {
            dx.abs() / half_width + dy.abs() / half_height < 1.0
        }
    }
}

fn bisect(shape: &Shape, c: Point, toward: Point) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let q = Point::new(c.x + (toward.x - c.x) * mid, c.y + (toward.y - c.y) * mid);
        if inside(shape, c, q) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn random_shape(rng: &mut ChaCha8Rng, kind: usize) -> Shape {
    let a = rng.gen_range(0.5..120.0);
    let b = rng.gen_range(0.5..120.0);
    match kind {
        0 => Shape::Rect { half_width: a, half_height: b },
        1 => Shape::Circle { radius: a },
        2 => Shape::Ellipse { rx: a, ry: b },
        _ => Shape::Diamond { half_width: a, half_height: b },
    }
}

fn run_kind(kind: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..CASES {
        let shape = random_shape(&mut rng, kind);
        let (hw, hh) = shape.half_extents();
        let c = Point::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        // strictly outside the bounding circle of the outline
        let reach = hw.hypot(hh) * rng.gen_range(1.01..20.0);
        let toward = Point::new(c.x + reach * angle.cos(), c.y + reach * angle.sin());

        let p = clip_edge_endpoint(&shape, c, toward).unwrap();
        let residual = boundary_residual(&shape, c, p).abs();
        assert!(residual <= TOL, "{} case {case}: residual {residual}", shape.name());

        let d = Point::new(toward.x - c.x, toward.y - c.y);
        let t = if d.x.abs() > d.y.abs() { (p.x - c.x) / d.x } else { (p.y - c.y) / d.y };
        assert!(t > 0.0 && t < 1.0, "{} case {case}: t = {t}", shape.name());

        let oracle = bisect(&shape, c, toward);
        assert!((t - oracle).abs() <= TOL, "{} case {case}: t {t} vs bisection {oracle}", shape.name());
    }
}

#[test]
fn rect_clipping_matches_bisection() {
    run_kind(0, 11);
}

#[test]
fn circle_clipping_matches_bisection() {
    run_kind(1, 12);
}

#[test]
fn ellipse_clipping_matches_bisection() {
    run_kind(2, 13);
}

#[test]
fn diamond_clipping_matches_bisection() {
    run_kind(3, 14);
}
