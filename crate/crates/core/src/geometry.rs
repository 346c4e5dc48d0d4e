use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Point or vector in the unit-square frame. `x` runs along image columns,
/// `y` along image rows.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn dist2(self, other: Point2) -> f64 {
        let d = self - other;
        d.x * d.x + d.y * d.y
    }

    /// Rotate by `angle` radians about `center`.
    pub fn rotate_about(self, center: Point2, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        let d = self - center;
        Point2::new(center.x + c * d.x - s * d.y, center.y + s * d.x + c * d.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}
