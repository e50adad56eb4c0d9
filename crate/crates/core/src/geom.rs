//! Intersection of mapped solid elements with the fluid mesh, and the
//! composite quadrature scheme built from it.

use std::sync::Arc;

use crate::error::{FdlmError, Result};
use crate::mesh::{AffineMap, Triangulation};
use crate::point::{barycentric, centroid, orient2d, triangle_area, Point2};
use crate::quadrature::QuadratureRule;

/// Convex polygon with counterclockwise vertices. Fewer than three vertices
/// means the intersection was empty or degenerate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point2>,
}

impl ConvexPolygon {
    pub fn from_triangle(t: &[Point2; 3]) -> Self {
        ConvexPolygon {
            vertices: t.to_vec(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Shoelace area (zero for degenerate polygons).
    pub fn area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let n = self.vertices.len();
        let mut twice = 0.0;
        for i in 0..n {
            twice += self.vertices[i].cross(self.vertices[(i + 1) % n]);
        }
        0.5 * twice
    }

    fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max((*a - *b).norm());
            }
        }
        d
    }
}

fn check_triangle(t: &[Point2; 3], what: &str) -> Result<()> {
    let scale = (t[1] - t[0]).norm().max((t[2] - t[0]).norm());
    let twice = orient2d(t[0], t[1], t[2]);
    if !(twice.abs() > 1e-14 * scale * scale) {
        return Err(FdlmError::invalid(format!("degenerate {what} triangle")));
    }
    Ok(())
}

fn ccw(t: &[Point2; 3]) -> [Point2; 3] {
    if orient2d(t[0], t[1], t[2]) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        *t
    }
}

/// Intersection of two triangles by successive half-plane clipping of
/// `subject` against the three edges of `clip`.
pub fn clip_triangle(subject: &[Point2; 3], clip: &[Point2; 3]) -> Result<ConvexPolygon> {
    check_triangle(subject, "subject")?;
    check_triangle(clip, "clip")?;
    Ok(clip_polygon(&ConvexPolygon::from_triangle(&ccw(subject)), &ccw(clip)))
}

/// Clips a convex polygon against a counterclockwise triangle.
pub(crate) fn clip_polygon(subject: &ConvexPolygon, clip: &[Point2; 3]) -> ConvexPolygon {
    let scale = subject.diameter().max(
        (clip[1] - clip[0])
            .norm()
            .max((clip[2] - clip[1]).norm())
            .max((clip[0] - clip[2]).norm()),
    );
    let tol = 1e-12 * scale;
    let mut poly = subject.vertices.clone();
    let mut next = Vec::with_capacity(8);
    for k in 0..3 {
        if poly.len() < 3 {
            return ConvexPolygon::default();
        }
        let (a, b) = (clip[k], clip[(k + 1) % 3]);
        let len = (b - a).norm();
        let dist = |p: Point2| {
            let d = orient2d(a, b, p) / len;
            if d.abs() <= tol {
                0.0
            } else {
                d
            }
        };
        next.clear();
        let n = poly.len();
        for i in 0..n {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            let (dp, dq) = (dist(p), dist(q));
            if dp >= 0.0 {
                next.push(p);
            }
            if (dp > 0.0 && dq < 0.0) || (dp < 0.0 && dq > 0.0) {
                next.push(p.lerp(q, dp / (dp - dq)));
            }
        }
        std::mem::swap(&mut poly, &mut next);
    }
    cleanup(poly, tol)
}

/// Drops repeated and collinear vertices.
fn cleanup(mut v: Vec<Point2>, tol: f64) -> ConvexPolygon {
    let mut changed = true;
    while changed && v.len() >= 3 {
        changed = false;
        let n = v.len();
        for i in 0..n {
            let (prev, cur, nxt) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
            let base = (nxt - prev).norm();
            let off = if base > 0.0 {
                orient2d(prev, cur, nxt).abs() / base
            } else {
                0.0
            };
            if (cur - prev).norm() <= tol || off <= tol {
                v.remove(i);
                changed = true;
                break;
            }
        }
    }
    if v.len() < 3 {
        v.clear();
    }
    ConvexPolygon { vertices: v }
}

/// Fan triangulation from vertex 0.
pub fn fan_triangulate(p: &ConvexPolygon) -> Vec<[Point2; 3]> {
    if p.is_empty() {
        return Vec::new();
    }
    let v = &p.vertices;
    (1..v.len() - 1).map(|i| [v[0], v[i], v[i + 1]]).collect()
}

/// Piece of a solid element lying in a single fluid element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Subcell {
    /// Counterclockwise triangle in solid reference (s) coordinates.
    pub s_triangle: [Point2; 3],
    /// Owning triangle of the fluid mesh.
    pub fluid_triangle: usize,
}

/// Composite quadrature over one solid element: the rule applied on each
/// subcell integrates `v_h ∘ X̄` (piecewise polynomial on the element)
/// exactly up to the rule's degree.
#[derive(Clone, Debug)]
pub struct CompositeQuadScheme {
    pub subcells: Vec<Subcell>,
    pub rule: Arc<QuadratureRule>,
}

impl CompositeQuadScheme {
    pub fn total_area(&self) -> f64 {
        self.subcells.iter().map(|c| triangle_area(&c.s_triangle)).sum()
    }

    /// `Σ_subcells |c| Σ_k w_k f(q_k, owner)`.
    pub fn integrate<F: FnMut(Point2, usize) -> f64>(&self, mut f: F) -> f64 {
        let mut sum = 0.0;
        for c in &self.subcells {
            for (s, w) in self.rule.on_triangle(&c.s_triangle) {
                sum += w * f(s, c.fluid_triangle);
            }
        }
        sum
    }
}

/// Relative area under which a clipped piece is dropped.
const SLIVER: f64 = 1e-14;

/// Splits `solid_tri` (s-coordinates) into subcells, each mapped by `map`
/// into a single triangle of `fluid`.
pub fn build_composite_scheme(
    solid_tri: &[Point2; 3],
    map: &AffineMap,
    fluid: &Triangulation,
    rule: Arc<QuadratureRule>,
) -> Result<CompositeQuadScheme> {
    check_triangle(solid_tri, "solid")?;
    let solid_tri = ccw(solid_tri);
    let mapped = ccw(&solid_tri.map(|s| map.apply(s)));
    let tol = 1e-12 * fluid.h();
    if let Some(p) = mapped.iter().find(|p| !fluid.domain.contains(**p, tol)) {
        return Err(FdlmError::DomainViolation(format!(
            "mapped solid element leaves the fluid domain at ({}, {})",
            p.x, p.y
        )));
    }

    // the whole element in one fluid triangle: nothing to subdivide
    if let Some(f) = fluid.locate_point(centroid(&mapped)) {
        let ft = fluid.triangle_points(f);
        if mapped
            .iter()
            .all(|p| barycentric(&ft, *p).iter().all(|&l| l >= -1e-13))
        {
            return Ok(CompositeQuadScheme {
                subcells: vec![Subcell {
                    s_triangle: solid_tri,
                    fluid_triangle: f,
                }],
                rule,
            });
        }
    }

    let lo = Point2::new(
        mapped.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
        mapped.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
    );
    let hi = Point2::new(
        mapped.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
        mapped.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
    );
    let ((i0, i1), (j0, j1)) = fluid
        .cell_range(lo, hi)
        .ok_or_else(|| FdlmError::DomainViolation("mapped solid element outside fluid grid".into()))?;

    let inv = map.inverse();
    let subject = ConvexPolygon::from_triangle(&mapped);
    let min_area = SLIVER * triangle_area(&mapped);
    let mut candidates: Vec<usize> = Vec::with_capacity(2 * (i1 - i0 + 1) * (j1 - j0 + 1));
    for j in j0..=j1 {
        for i in i0..=i1 {
            candidates.extend(fluid.cell_triangles(i, j));
        }
    }
    candidates.sort_unstable();

    let mut subcells = Vec::new();
    for f in candidates {
        let piece = clip_polygon(&subject, &fluid.triangle_points(f));
        if piece.area() < min_area {
            continue;
        }
        for tri in fan_triangulate(&piece) {
            if triangle_area(&tri) < min_area {
                continue;
            }
            subcells.push(Subcell {
                s_triangle: ccw(&tri.map(|x| inv.apply(x))),
                fluid_triangle: f,
            });
        }
    }
    Ok(CompositeQuadScheme { subcells, rule })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{midpoint_refine, uniform_mesh, Orientation, Rect};

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn unit() -> [Point2; 3] {
        [p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)]
    }

    #[test]
    fn self_clip_is_identity() {
        let t = [p(0.1, 0.2), p(1.5, 0.3), p(0.7, 1.9)];
        let c = clip_triangle(&t, &t).unwrap();
        assert_eq!(c.vertices.len(), 3);
        assert!((c.area() - triangle_area(&t)).abs() < 1e-15);
    }

    #[test]
    fn disjoint_is_empty() {
        let t = [p(3.0, 3.0), p(4.0, 3.0), p(3.0, 4.0)];
        let c = clip_triangle(&unit(), &t).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.area(), 0.0);
    }

    #[test]
    fn touching_edge_is_empty() {
        let t = [p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
        assert!(clip_triangle(&unit(), &t).unwrap().is_empty());
    }

    #[test]
    fn degenerate_input_rejected() {
        let flat = [p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0)];
        assert!(clip_triangle(&flat, &unit()).is_err());
        assert!(clip_triangle(&unit(), &flat).is_err());
    }

    #[test]
    fn clockwise_input_is_accepted() {
        let cw = [p(0.0, 0.0), p(0.0, 1.0), p(1.0, 0.0)];
        let c = clip_triangle(&cw, &unit()).unwrap();
        assert!((c.area() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fan_cases() {
        let t = unit();
        assert_eq!(fan_triangulate(&ConvexPolygon::from_triangle(&t)), vec![t]);
        let sq = ConvexPolygon {
            vertices: vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)],
        };
        let fan = fan_triangulate(&sq);
        assert_eq!(fan.len(), 2);
        let a: f64 = fan.iter().map(triangle_area).sum();
        assert!((a - 1.0).abs() < 1e-15);
        assert!(fan_triangulate(&ConvexPolygon { vertices: vec![p(0.0, 0.0), p(1.0, 0.0)] }).is_empty());
    }

    #[test]
    fn single_fluid_element_gives_single_subcell() {
        let fluid = uniform_mesh(Rect::square(-2.0, 2.0), 4, Orientation::Right).unwrap();
        let solid = [p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)];
        // maps onto a small triangle well inside fluid triangle near (0.6, 0.2)
        let map = AffineMap::new([[0.1, 0.0], [0.0, 0.1]], p(0.55, 0.1)).unwrap();
        let sch = build_composite_scheme(&solid, &map, &fluid, Arc::new(QuadratureRule::for_degree(2).unwrap()))
            .unwrap();
        assert_eq!(sch.subcells.len(), 1);
        assert_eq!(sch.subcells[0].s_triangle, solid);
    }

    #[test]
    fn identity_on_matching_grids() {
        let fluid = uniform_mesh(Rect::square(-2.0, 2.0), 8, Orientation::Right).unwrap();
        let rule = Arc::new(QuadratureRule::for_degree(2).unwrap());
        for t in 0..fluid.n_triangles() {
            let tri = fluid.triangle_points(t);
            let sch = build_composite_scheme(&tri, &AffineMap::identity(), &fluid, rule.clone()).unwrap();
            assert_eq!(sch.subcells.len(), 1);
            assert_eq!(sch.subcells[0].fluid_triangle, t);
            assert_eq!(sch.subcells[0].s_triangle, tri);
        }
    }

    #[test]
    fn leaving_the_domain_is_an_error() {
        let fluid = uniform_mesh(Rect::square(-2.0, 2.0), 4, Orientation::Right).unwrap();
        let map = AffineMap::new([[2.0, 0.0], [0.0, 2.0]], p(1.5, 0.0)).unwrap();
        let err = build_composite_scheme(&unit(), &map, &fluid, Arc::new(QuadratureRule::for_degree(2).unwrap()));
        assert!(matches!(err, Err(FdlmError::DomainViolation(_))));
    }

    #[test]
    fn scheme_conserves_area_and_ownership() {
        let fluid = midpoint_refine(&uniform_mesh(Rect::square(-2.0, 2.0), 16, Orientation::Right).unwrap());
        let solid = uniform_mesh(Rect::square(0.0, 1.0), 8, Orientation::Left).unwrap();
        let map = AffineMap::new([[2.0, 0.0], [0.0, 2.0]], p(-0.62, -0.62)).unwrap();
        let rule = Arc::new(QuadratureRule::for_degree(2).unwrap());
        for t in 0..solid.n_triangles() {
            let tri = solid.triangle_points(t);
            let sch = build_composite_scheme(&tri, &map, &fluid, rule.clone()).unwrap();
            assert!(sch.subcells.len() > 1);
            let rel = (sch.total_area() - triangle_area(&tri)).abs() / triangle_area(&tri);
            assert!(rel < 1e-10, "element {t}: {rel}");
            for c in &sch.subcells {
                let m = map.apply(centroid(&c.s_triangle));
                let lam = barycentric(&fluid.triangle_points(c.fluid_triangle), m);
                assert!(lam.iter().all(|&l| l >= -1e-10));
            }
            // linear integrand: composite equals single-rule result
            let f = |s: Point2| 1.0 + 2.0 * s.x - 0.5 * s.y;
            let one = rule.integrate(&tri, f);
            let comp = sch.integrate(|s, _| f(s));
            assert!((one - comp).abs() < 1e-12);
        }
    }
}
