use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;

/// Minimum clearance between a shape and the unit-square border.
pub const SHAPE_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle { radius: f64 },
    /// Axis-aligned rectangle.
    Rect { half_width: f64, half_height: f64 },
    /// Segment of length `2 * half_length` at `angle`, swept by a disc of `radius`.
    Capsule { half_length: f64, radius: f64, angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub center: Point2,
    pub color: [f64; 3],
}

impl Shape {
    pub fn circle(center: Point2, radius: f64, color: [f64; 3]) -> Self {
        Self {
            kind: ShapeKind::Circle { radius },
            center,
            color,
        }
    }

    pub fn rect(center: Point2, half_width: f64, half_height: f64, color: [f64; 3]) -> Self {
        Self {
            kind: ShapeKind::Rect {
                half_width,
                half_height,
            },
            center,
            color,
        }
    }

    pub fn capsule(center: Point2, half_length: f64, radius: f64, angle: f64, color: [f64; 3]) -> Self {
        Self {
            kind: ShapeKind::Capsule {
                half_length,
                radius,
                angle,
            },
            center,
            color,
        }
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        match self.kind {
            ShapeKind::Circle { radius } => (radius, radius),
            ShapeKind::Rect {
                half_width,
                half_height,
            } => (half_width, half_height),
            ShapeKind::Capsule {
                half_length,
                radius,
                angle,
            } => (
                half_length * angle.cos().abs() + radius,
                half_length * angle.sin().abs() + radius,
            ),
        }
    }

    pub fn area(&self) -> f64 {
        match self.kind {
            ShapeKind::Circle { radius } => PI * radius * radius,
            ShapeKind::Rect {
                half_width,
                half_height,
            } => 4.0 * half_width * half_height,
            ShapeKind::Capsule {
                half_length,
                radius,
                ..
            } => 4.0 * half_length * radius + PI * radius * radius,
        }
    }

    /// True when the shape keeps `margin` clearance from every border.
    pub fn fits(&self, margin: f64) -> bool {
        let (hx, hy) = self.half_extents();
        let c = self.center;
        c.x - hx >= margin - 1e-12
            && c.x + hx <= 1.0 - margin + 1e-12
            && c.y - hy >= margin - 1e-12
            && c.y + hy <= 1.0 - margin + 1e-12
    }

    /// Random shape that fits inside the unit square with [`SHAPE_MARGIN`].
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let kind = match rng.random_range(0..3u8) {
            0 => ShapeKind::Circle {
                radius: rng.random_range(0.12..0.30),
            },
            1 => ShapeKind::Rect {
                half_width: rng.random_range(0.08..0.28),
                half_height: rng.random_range(0.08..0.28),
            },
            _ => ShapeKind::Capsule {
                half_length: rng.random_range(0.06..0.20),
                radius: rng.random_range(0.06..0.14),
                angle: rng.random_range(0.0..PI),
            },
        };
        let color = random_color(rng);
        let mut shape = Shape {
            kind,
            center: Point2::default(),
            color,
        };
        let (hx, hy) = shape.half_extents();
        let lo_x = SHAPE_MARGIN + hx;
        let lo_y = SHAPE_MARGIN + hy;
        shape.center = Point2::new(
            rng.random_range(lo_x..=1.0 - lo_x),
            rng.random_range(lo_y..=1.0 - lo_y),
        );
        shape
    }
}

/// Saturated, bright color; always at least 0.2 away from mid-gray in some channel.
fn random_color<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let h = rng.random_range(0.0..1.0);
    let s = rng.random_range(0.7..1.0);
    let v = rng.random_range(0.7..1.0);
    super::image::hsv_to_rgb([h, s, v])
}

/// Exact signed distance from `p` to the boundary of `shape`; negative inside.
pub fn analytic_sdf(shape: &Shape, p: Point2) -> f64 {
    let d = p - shape.center;
    match shape.kind {
        ShapeKind::Circle { radius } => d.norm() - radius,
        ShapeKind::Rect {
            half_width,
            half_height,
        } => {
            let qx = d.x.abs() - half_width;
            let qy = d.y.abs() - half_height;
            let outside = qx.max(0.0).hypot(qy.max(0.0));
            outside + qx.max(qy).min(0.0)
        }
        ShapeKind::Capsule {
            half_length,
            radius,
            angle,
        } => {
            let axis = Point2::new(angle.cos(), angle.sin());
            let t = d.dot(axis).clamp(-half_length, half_length);
            (d - axis * t).norm() - radius
        }
    }
}

/// Points on the exact boundary of `shape`, at most `spacing` apart along
/// the curve, with outward unit normals. Rectangle corners are skipped.
pub fn boundary_samples(shape: &Shape, spacing: f64) -> (Vec<Point2>, Vec<Point2>) {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let c = shape.center;
    let mut push_arc = |center: Point2, radius: f64, from: f64, sweep: f64| {
        let n = ((sweep * radius / spacing).ceil() as usize).max(1);
        for k in 0..n {
            let a = from + sweep * (k as f64 + 0.5) / n as f64;
            let u = Point2::new(a.cos(), a.sin());
            points.push(center + u * radius);
            normals.push(u);
        }
    };
    let mut segments = Vec::new();
    match shape.kind {
        ShapeKind::Circle { radius } => push_arc(c, radius, 0.0, 2.0 * PI),
        ShapeKind::Capsule {
            half_length,
            radius,
            angle,
        } => {
            let axis = Point2::new(angle.cos(), angle.sin());
            push_arc(c + axis * half_length, radius, angle - PI / 2.0, PI);
            push_arc(c - axis * half_length, radius, angle + PI / 2.0, PI);
            let side = Point2::new(-axis.y, axis.x);
            for s in [side, side * -1.0] {
                segments.push((c + s * radius, axis, half_length, s));
            }
        }
        ShapeKind::Rect {
            half_width,
            half_height,
        } => {
            for (normal, offset, half_span) in [
                (Point2::new(1.0, 0.0), half_width, half_height),
                (Point2::new(-1.0, 0.0), half_width, half_height),
                (Point2::new(0.0, 1.0), half_height, half_width),
                (Point2::new(0.0, -1.0), half_height, half_width),
            ] {
                segments.push((c + normal * offset, Point2::new(-normal.y, normal.x), half_span, normal));
            }
        }
    }
    for (mid, along, half_span, normal) in segments {
        let n = ((2.0 * half_span / spacing).ceil() as usize).max(1);
        for k in 0..n {
            let t = -half_span + 2.0 * half_span * (k as f64 + 0.5) / n as f64;
            points.push(mid + along * t);
            normals.push(normal);
        }
    }
    (points, normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const RED: [f64; 3] = [1.0, 0.0, 0.0];

    #[test]
    fn circle_values() {
        let c = Shape::circle(Point2::new(0.5, 0.5), 0.2, RED);
        assert!((analytic_sdf(&c, Point2::new(0.5, 0.5)) + 0.2).abs() < 1e-15);
        assert!((analytic_sdf(&c, Point2::new(0.9, 0.5)) - 0.2).abs() < 1e-15);
    }

    /// Brute-force distance to a densely sampled boundary, signed by containment.
    fn dense_boundary_sdf(boundary: &[Point2], inside: bool, p: Point2) -> f64 {
        let d = boundary
            .iter()
            .map(|b| b.dist(p))
            .fold(f64::INFINITY, f64::min);
        if inside {
            -d
        } else {
            d
        }
    }

    #[test]
    fn rect_matches_dense_boundary_oracle() {
        let (cx, cy, hw, hh) = (0.45, 0.55, 0.2, 0.12);
        let r = Shape::rect(Point2::new(cx, cy), hw, hh, RED);
        let n = 2000;
        let mut boundary = Vec::new();
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let x = cx - hw + 2.0 * hw * t;
            let y = cy - hh + 2.0 * hh * t;
            boundary.push(Point2::new(x, cy - hh));
            boundary.push(Point2::new(x, cy + hh));
            boundary.push(Point2::new(cx - hw, y));
            boundary.push(Point2::new(cx + hw, y));
        }
        for i in 0..25 {
            for j in 0..25 {
                let p = Point2::new((i as f64 + 0.5) / 25.0, (j as f64 + 0.5) / 25.0);
                let inside = (p.x - cx).abs() < hw && (p.y - cy).abs() < hh;
                let oracle = dense_boundary_sdf(&boundary, inside, p);
                assert!((analytic_sdf(&r, p) - oracle).abs() < 2e-3, "at {p:?}");
            }
        }
    }

    #[test]
    fn capsule_matches_dense_boundary_oracle() {
        let c = Point2::new(0.5, 0.45);
        let (l, rad, ang) = (0.15, 0.08, 0.6);
        let cap = Shape::capsule(c, l, rad, ang, RED);
        let axis = Point2::new(ang.cos(), ang.sin());
        let normal = Point2::new(-ang.sin(), ang.cos());
        let mut boundary = Vec::new();
        let n = 3000;
        for i in 0..=n {
            let t = -l + 2.0 * l * i as f64 / n as f64;
            boundary.push(c + axis * t + normal * rad);
            boundary.push(c + axis * t - normal * rad);
            let phi = 2.0 * PI * i as f64 / n as f64;
            let ring = Point2::new(phi.cos(), phi.sin()) * rad;
            // only the outer half-discs are boundary, but including the full
            // end circles does not change the minimum outside the body
            for end in [c + axis * l, c - axis * l] {
                let q = end + ring;
                if (q - c).dot(axis).abs() >= l - 1e-12 {
                    boundary.push(q);
                }
            }
        }
        for i in 0..20 {
            for j in 0..20 {
                let p = Point2::new((i as f64 + 0.5) / 20.0, (j as f64 + 0.5) / 20.0);
                let d = p - c;
                let t = d.dot(axis).clamp(-l, l);
                let inside = (d - axis * t).norm() < rad;
                let oracle = dense_boundary_sdf(&boundary, inside, p);
                assert!((analytic_sdf(&cap, p) - oracle).abs() < 2e-3, "at {p:?}");
            }
        }
    }

    #[test]
    fn boundary_samples_lie_on_the_zero_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let shape = Shape::random(&mut rng);
            let (points, normals) = boundary_samples(&shape, 0.01);
            assert_eq!(points.len(), normals.len());
            for (p, n) in points.iter().zip(&normals) {
                assert!(analytic_sdf(&shape, *p).abs() < 1e-12);
                assert!((n.norm() - 1.0).abs() < 1e-12);
                // the sdf grows along the outward normal at unit rate
                let h = 1e-5;
                let slope = (analytic_sdf(&shape, *p + *n * h) - analytic_sdf(&shape, *p - *n * h)) / (2.0 * h);
                assert!((slope - 1.0).abs() < 1e-6, "{shape:?} at {p:?}");
            }
            let perimeter: f64 = match shape.kind {
                ShapeKind::Circle { radius } => 2.0 * PI * radius,
                ShapeKind::Rect {
                    half_width,
                    half_height,
                } => 4.0 * (half_width + half_height),
                ShapeKind::Capsule {
                    half_length, radius, ..
                } => 4.0 * half_length + 2.0 * PI * radius,
            };
            let n = points.len() as f64;
            assert!(n >= perimeter / 0.01 && n <= perimeter / 0.01 + 6.0, "{n} samples for perimeter {perimeter}");
        }
    }

    #[test]
    fn random_shapes_fit_with_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let s = Shape::random(&mut rng);
            assert!(s.fits(SHAPE_MARGIN), "{s:?}");
            assert!(s.color.iter().all(|c| (0.0..=1.0).contains(c)));
            assert!(s.color.iter().any(|c| (c - 0.5).abs() >= 0.2));
        }
    }
}
