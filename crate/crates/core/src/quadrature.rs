//! Quadrature rules on the reference triangle `{(0,0), (1,0), (0,1)}`.
//!
//! Weights are normalized to sum to one, so that on a physical triangle
//! `∫_T f ≈ |T| Σ_k w_k f(F_T(q_k))`.

use crate::error::{FdlmError, Result};
use crate::mesh::AffineMap;
use crate::point::{triangle_area, Point2};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

// 12-point degree-6 rule (Dunavant). Orbits in barycentric coordinates.
const D6_A: (f64, f64) = (0.116_786_275_726_379_366_025_3, 0.501_426_509_658_179_157_416_7);
const D6_B: (f64, f64) = (0.050_844_906_370_206_816_920_94, 0.873_821_971_016_995_543_319_3);
const D6_C: (f64, f64, f64) = (
    0.082_851_075_618_373_575_193_55,
    0.053_145_049_844_816_947_353_25,
    0.310_352_451_033_784_405_416_6,
);

impl QuadratureRule {
    /// Rule of the requested exactness degree.
    ///
    /// * 0, 1: centroid rule
    /// * 2: the three edge midpoints, weights 1/3
    /// * 6: 12-point Dunavant rule
    pub fn for_degree(degree: usize) -> Result<Self> {
        match degree {
            0 | 1 => Ok(QuadratureRule {
                points: vec![Point2::new(1.0 / 3.0, 1.0 / 3.0)],
                weights: vec![1.0],
                exactness_degree: 1,
            }),
            2 => Ok(QuadratureRule {
                points: vec![
                    Point2::new(0.5, 0.0),
                    Point2::new(0.5, 0.5),
                    Point2::new(0.0, 0.5),
                ],
                weights: vec![1.0 / 3.0; 3],
                exactness_degree: 2,
            }),
            6 => Ok(dunavant6()),
            d => Err(FdlmError::invalid(format!(
                "no quadrature rule for degree {d} (supported: 0, 1, 2, 6)"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nodes mapped onto the physical triangle `t` paired with their
    /// *physical* weights (`|t| w_k`).
    pub fn on_triangle<'a>(&'a self, t: &[Point2; 3]) -> impl Iterator<Item = (Point2, f64)> + 'a {
        let area = triangle_area(t).abs();
        let (a, e1, e2) = (t[0], t[1] - t[0], t[2] - t[0]);
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(q, w)| (a + e1 * q.x + e2 * q.y, area * w))
    }

    /// `|T| Σ w_k f(q_k)` on the physical triangle `t`.
    pub fn integrate<F: FnMut(Point2) -> f64>(&self, t: &[Point2; 3], mut f: F) -> f64 {
        self.on_triangle(t).map(|(x, w)| w * f(x)).sum()
    }

    /// Same as [`integrate`](Self::integrate), with the triangle given by its
    /// reference-to-physical map.
    pub fn integrate_mapped<F: FnMut(Point2) -> f64>(&self, map: &AffineMap, mut f: F) -> f64 {
        let area = 0.5 * map.det.abs();
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(q, w)| area * w * f(map.apply(*q)))
            .sum()
    }
}

fn dunavant6() -> QuadratureRule {
    let mut points = Vec::with_capacity(12);
    let mut weights = Vec::with_capacity(12);
    for (w, a) in [D6_A, D6_B] {
        let b = 0.5 * (1.0 - a);
        for bc in [[a, b, b], [b, a, b], [b, b, a]] {
            points.push(Point2::new(bc[1], bc[2]));
            weights.push(w);
        }
    }
    let (w, a, b) = D6_C;
    let c = 1.0 - a - b;
    for bc in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        points.push(Point2::new(bc[1], bc[2]));
        weights.push(w);
    }
    QuadratureRule {
        points,
        weights,
        exactness_degree: 6,
    }
}

/// How the reference value `∫_T f` is obtained in
/// [`quad_error_functional`].
pub enum IntegralOracle<'a> {
    /// A higher-order rule on the whole triangle.
    Rule(&'a QuadratureRule),
    /// A rule applied on each sub-triangle of a subdivision of `T`
    /// (e.g. one that resolves the kinks of a piecewise polynomial).
    Composite {
        pieces: &'a [[Point2; 3]],
        rule: &'a QuadratureRule,
    },
}

/// Quadrature error functional `E_T(f) = ∫_T f − |T| Σ_k w_k f(q_k)`.
pub fn quad_error_functional<F: Fn(Point2) -> f64>(
    f: F,
    t: &[Point2; 3],
    rule: &QuadratureRule,
    oracle: IntegralOracle<'_>,
) -> f64 {
    let exact = match oracle {
        IntegralOracle::Rule(r) => r.integrate(t, &f),
        IntegralOracle::Composite { pieces, rule } => {
            pieces.iter().map(|p| rule.integrate(p, &f)).sum()
        }
    };
    exact - rule.integrate(t, &f)
}
