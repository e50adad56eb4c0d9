use std::ops::{Add, Mul, Neg, Sub};

/// A point (or vector) in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    #[inline]
    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    #[inline]
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        Point2::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }

    #[inline]
    pub fn midpoint(self, other: Point2) -> Point2 {
        self.lerp(other, 0.5)
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

/// Twice the signed area of the triangle `(a, b, c)`; positive when
/// counterclockwise.
#[inline]
pub fn orient2d(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

#[inline]
pub fn triangle_area(t: &[Point2; 3]) -> f64 {
    0.5 * orient2d(t[0], t[1], t[2])
}

/// Barycentric coordinates of `p` with respect to triangle `t`.
#[inline]
pub fn barycentric(t: &[Point2; 3], p: Point2) -> [f64; 3] {
    let d = orient2d(t[0], t[1], t[2]);
    let l1 = orient2d(t[0], p, t[2]) / d;
    let l2 = orient2d(t[0], t[1], p) / d;
    [1.0 - l1 - l2, l1, l2]
}

/// Gradients of the three barycentric coordinates of `t` (constant in `t`).
#[inline]
pub fn barycentric_gradients(t: &[Point2; 3]) -> [Point2; 3] {
    let d = orient2d(t[0], t[1], t[2]);
    // grad lambda_i = rot90(edge opposite i) / (2|T|)
    let g = |a: Point2, b: Point2| {
        let e = b - a;
        Point2::new(-e.y / d, e.x / d)
    };
    [g(t[1], t[2]), g(t[2], t[0]), g(t[0], t[1])]
}

#[inline]
pub fn centroid(t: &[Point2; 3]) -> Point2 {
    Point2::new(
        (t[0].x + t[1].x + t[2].x) / 3.0,
        (t[0].y + t[1].y + t[2].y) / 3.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barycentric_of_vertices_and_centroid() {
        let t = [Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(0.0, 1.0)];
        assert_eq!(barycentric(&t, t[1]), [0.0, 1.0, 0.0]);
        let c = barycentric(&t, centroid(&t));
        for l in c {
            assert!((l - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_sum_to_zero_and_match_barycentrics() {
        let t = [Point2::new(0.3, -0.1), Point2::new(1.2, 0.4), Point2::new(-0.2, 0.9)];
        let g = barycentric_gradients(&t);
        let s = g[0] + g[1] + g[2];
        assert!(s.norm() < 1e-14);
        let p = Point2::new(0.31, 0.25);
        let q = p + Point2::new(1e-3, 2e-3);
        let (lp, lq) = (barycentric(&t, p), barycentric(&t, q));
        for i in 0..3 {
            let fd = lq[i] - lp[i];
            let an = g[i].dot(q - p);
            assert!((fd - an).abs() < 1e-14);
        }
    }
}
