//! Structured triangulations of axis-aligned rectangles.
//!
//! Vertices are numbered row-major (`j * (n + 1) + i`). Triangles of a
//! [`uniform_mesh`] are numbered cell-major, two per cell in a fixed order;
//! [`midpoint_refine`] stores the four children of parent `t` at
//! `4t..4t+4`. Every mesh keeps a cell → triangle table so that point
//! location is a constant-time lookup.

use std::io::Write;

use crate::error::{FdlmError, Result};
use crate::point::{barycentric, orient2d, triangle_area, Point2};

/// Axis-aligned rectangle `[min.x, max.x] × [min.y, max.y]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn new(min: Point2, max: Point2) -> Self {
        Rect { min, max }
    }

    /// `[lo, hi]²`
    pub fn square(lo: f64, hi: f64) -> Self {
        Rect::new(Point2::new(lo, lo), Point2::new(hi, hi))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        p.x >= self.min.x - tol
            && p.x <= self.max.x + tol
            && p.y >= self.min.y - tol
            && p.y <= self.max.y + tol
    }
}

/// Direction of the diagonal splitting each grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// Diagonal from the lower-left to the upper-right corner.
    Right,
    /// Diagonal from the lower-right to the upper-left corner.
    Left,
}

/// Affine map `x = matrix · s + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: [[f64; 2]; 2],
    pub offset: Point2,
    pub det: f64,
}

impl AffineMap {
    pub fn new(matrix: [[f64; 2]; 2], offset: Point2) -> Result<Self> {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(FdlmError::invalid("affine map with zero determinant"));
        }
        Ok(AffineMap {
            matrix,
            offset,
            det,
        })
    }

    pub fn identity() -> Self {
        AffineMap {
            matrix: [[1.0, 0.0], [0.0, 1.0]],
            offset: Point2::ZERO,
            det: 1.0,
        }
    }

    /// Map sending the reference triangle `{(0,0),(1,0),(0,1)}` onto `t`
    /// vertex by vertex.
    pub fn from_triangle(t: &[Point2; 3]) -> Result<Self> {
        let e1 = t[1] - t[0];
        let e2 = t[2] - t[0];
        AffineMap::new([[e1.x, e2.x], [e1.y, e2.y]], t[0])
    }

    /// The unique affine map sending triangle `from` onto triangle `to`
    /// vertex by vertex.
    pub fn between_triangles(from: &[Point2; 3], to: &[Point2; 3]) -> Result<Self> {
        let f = AffineMap::from_triangle(from)?;
        let t = AffineMap::from_triangle(to)?;
        Ok(t.compose(&f.inverse()))
    }

    #[inline]
    pub fn apply(&self, s: Point2) -> Point2 {
        let m = &self.matrix;
        Point2::new(
            m[0][0] * s.x + m[0][1] * s.y + self.offset.x,
            m[1][0] * s.x + m[1][1] * s.y + self.offset.y,
        )
    }

    /// Applies only the linear part.
    #[inline]
    pub fn apply_linear(&self, v: Point2) -> Point2 {
        let m = &self.matrix;
        Point2::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y)
    }

    /// Applies the transposed linear part; pulls an x-gradient back to the
    /// s-frame (`∇_s (v ∘ F) = Fᵀ (∇_x v)`).
    #[inline]
    pub fn apply_transpose(&self, g: Point2) -> Point2 {
        let m = &self.matrix;
        Point2::new(m[0][0] * g.x + m[1][0] * g.y, m[0][1] * g.x + m[1][1] * g.y)
    }

    pub fn inverse(&self) -> AffineMap {
        let m = &self.matrix;
        let inv_det = 1.0 / self.det;
        let matrix = [
            [m[1][1] * inv_det, -m[0][1] * inv_det],
            [-m[1][0] * inv_det, m[0][0] * inv_det],
        ];
        let o = self.offset;
        let offset = Point2::new(
            -(matrix[0][0] * o.x + matrix[0][1] * o.y),
            -(matrix[1][0] * o.x + matrix[1][1] * o.y),
        );
        AffineMap {
            matrix,
            offset,
            det: inv_det,
        }
    }

    /// `self ∘ inner`
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        let a = &self.matrix;
        let b = &inner.matrix;
        let mut matrix = [[0.0; 2]; 2];
        for (i, row) in matrix.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        AffineMap {
            matrix,
            offset: self.apply(inner.offset),
            det: self.det * inner.det,
        }
    }
}

/// Structured triangulation of a rectangle.
#[derive(Clone, Debug)]
pub struct Triangulation {
    pub vertices: Vec<Point2>,
    pub triangles: Vec<[usize; 3]>,
    pub n_cells_per_side: usize,
    pub domain: Rect,
    pub orientation: Orientation,
    pub boundary_vertex_flags: Vec<bool>,
    /// Triangles of grid cell `j * n + i`.
    cell_triangles: Vec<[usize; 2]>,
    /// Number of midpoint refinements applied to the original uniform mesh.
    refinements: usize,
}

/// Builds an `n × n` structured mesh of `domain`.
pub fn uniform_mesh(domain: Rect, n: usize, orientation: Orientation) -> Result<Triangulation> {
    if n == 0 {
        return Err(FdlmError::invalid("uniform_mesh needs n >= 1"));
    }
    if !(domain.width() > 0.0 && domain.height() > 0.0) {
        return Err(FdlmError::invalid("degenerate rectangle"));
    }
    let vertices = grid_vertices(&domain, n);
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    let mut cell_triangles = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            let t = triangles.len();
            match orientation {
                Orientation::Right => {
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                }
                Orientation::Left => {
                    triangles.push([v00, v10, v01]);
                    triangles.push([v10, v11, v01]);
                }
            }
            cell_triangles.push([t, t + 1]);
        }
    }
    Ok(Triangulation {
        boundary_vertex_flags: boundary_flags(n),
        vertices,
        triangles,
        n_cells_per_side: n,
        domain,
        orientation,
        cell_triangles,
        refinements: 0,
    })
}

/// Splits every triangle into four through its edge midpoints.
///
/// On a structured mesh the children coincide geometrically with the
/// `2n × 2n` mesh of the same orientation; vertices are renumbered on the
/// finer grid while child `c` of parent `t` gets index `4t + c` (three
/// corner children in vertex order, then the middle one).
pub fn midpoint_refine(mesh: &Triangulation) -> Triangulation {
    let n = mesh.n_cells_per_side;
    let m = 2 * n;
    let vertices = grid_vertices(&mesh.domain, m);
    let grid = |v: usize| (2 * (v % (n + 1)), 2 * (v / (n + 1)));
    let vid = |(i, j): (usize, usize)| j * (m + 1) + i;
    let mid = |a: (usize, usize), b: (usize, usize)| ((a.0 + b.0) / 2, (a.1 + b.1) / 2);

    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let [a, b, c] = tri.map(grid);
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        triangles.push([vid(a), vid(ab), vid(ca)]);
        triangles.push([vid(ab), vid(b), vid(bc)]);
        triangles.push([vid(ca), vid(bc), vid(c)]);
        triangles.push([vid(ab), vid(bc), vid(ca)]);
    }

    let mut cell_triangles = vec![[usize::MAX; 2]; m * m];
    let (hx, hy) = (mesh.domain.width() / m as f64, mesh.domain.height() / m as f64);
    for (t, tri) in triangles.iter().enumerate() {
        let c = crate::point::centroid(&tri.map(|v| vertices[v]));
        let i = (((c.x - mesh.domain.min.x) / hx).floor() as usize).min(m - 1);
        let j = (((c.y - mesh.domain.min.y) / hy).floor() as usize).min(m - 1);
        let slot = &mut cell_triangles[j * m + i];
        if slot[0] == usize::MAX {
            slot[0] = t;
        } else {
            slot[1] = t;
        }
    }
    for slot in &mut cell_triangles {
        if slot[0] > slot[1] {
            slot.swap(0, 1);
        }
    }

    Triangulation {
        boundary_vertex_flags: boundary_flags(m),
        vertices,
        triangles,
        n_cells_per_side: m,
        domain: mesh.domain,
        orientation: mesh.orientation,
        cell_triangles,
        refinements: mesh.refinements + 1,
    }
}

fn grid_vertices(domain: &Rect, n: usize) -> Vec<Point2> {
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        let y = grid_coord(domain.min.y, domain.max.y, j, n);
        for i in 0..=n {
            v.push(Point2::new(grid_coord(domain.min.x, domain.max.x, i, n), y));
        }
    }
    v
}

#[inline]
fn grid_coord(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / (n as f64)
    }
}

fn boundary_flags(n: usize) -> Vec<bool> {
    let mut flags = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            flags.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    flags
}

impl Triangulation {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Grid spacing `(width / n, height / n)`.
    pub fn spacing(&self) -> (f64, f64) {
        let n = self.n_cells_per_side as f64;
        (self.domain.width() / n, self.domain.height() / n)
    }

    /// Meshsize: the structured grid spacing (the larger one for
    /// non-square domains).
    pub fn h(&self) -> f64 {
        let (hx, hy) = self.spacing();
        hx.max(hy)
    }

    pub fn refinements(&self) -> usize {
        self.refinements
    }

    /// Index of the parent triangle `levels_up` refinements ago.
    pub fn ancestor(&self, t: usize, levels_up: usize) -> usize {
        t >> (2 * levels_up)
    }

    #[inline]
    pub fn triangle_points(&self, t: usize) -> [Point2; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        triangle_area(&self.triangle_points(t))
    }

    pub fn element_map(&self, t: usize) -> Result<AffineMap> {
        if t >= self.triangles.len() {
            return Err(FdlmError::invalid(format!(
                "triangle index {t} out of range ({} triangles)",
                self.triangles.len()
            )));
        }
        AffineMap::from_triangle(&self.triangle_points(t))
    }

    /// The two triangles of grid cell `(i, j)`.
    pub fn cell_triangles(&self, i: usize, j: usize) -> [usize; 2] {
        self.cell_triangles[j * self.n_cells_per_side + i]
    }

    /// Inclusive range of grid cells whose closure may touch `[lo, hi]`.
    pub fn cell_range(&self, lo: Point2, hi: Point2) -> Option<((usize, usize), (usize, usize))> {
        let n = self.n_cells_per_side;
        let (hx, hy) = self.spacing();
        let eps = 1e-10;
        let fx0 = (lo.x - self.domain.min.x) / hx;
        let fx1 = (hi.x - self.domain.min.x) / hx;
        let fy0 = (lo.y - self.domain.min.y) / hy;
        let fy1 = (hi.y - self.domain.min.y) / hy;
        let nf = n as f64;
        if fx1 < -eps || fy1 < -eps || fx0 > nf + eps || fy0 > nf + eps {
            return None;
        }
        let clamp = |f: f64| (f.floor().max(0.0) as usize).min(n - 1);
        Some((
            (clamp(fx0 - eps), clamp(fx1 + eps)),
            (clamp(fy0 - eps), clamp(fy1 + eps)),
        ))
    }

    /// Finds the triangle containing `p`.
    ///
    /// Points on shared edges or vertices resolve to the smallest containing
    /// triangle index. Returns `None` outside the rectangle.
    pub fn locate_point(&self, p: Point2) -> Option<usize> {
        let tol = 1e-12 * self.h();
        if !self.domain.contains(p, tol) {
            return None;
        }
        let ((i0, i1), (j0, j1)) = self.cell_range(p, p)?;
        let mut best: Option<usize> = None;
        for j in j0..=j1 {
            for i in i0..=i1 {
                for t in self.cell_triangles(i, j) {
                    if best.is_some_and(|b| b <= t) {
                        continue;
                    }
                    let lam = barycentric(&self.triangle_points(t), p);
                    if lam.iter().all(|&l| l >= -1e-12) {
                        best = Some(t);
                    }
                }
            }
        }
        best
    }

    /// Checks the structural invariants (positive areas, area sum).
    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for t in 0..self.n_triangles() {
            let p = self.triangle_points(t);
            if orient2d(p[0], p[1], p[2]) <= 0.0 {
                return Err(FdlmError::invalid(format!("triangle {t} is not counterclockwise")));
            }
            total += triangle_area(&p);
        }
        let expect = self.domain.area();
        if ((total - expect) / expect).abs() > 1e-12 {
            return Err(FdlmError::invalid("triangle areas do not sum to the domain area"));
        }
        Ok(())
    }

    /// Writes the plain-text mesh dump (`vertices N triangles M`, then
    /// coordinates, then connectivity).
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vertices {} triangles {}", self.n_vertices(), self.n_triangles())?;
        for v in &self.vertices {
            writeln!(w, "{:.16e} {:.16e}", v.x, v.y)?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::centroid;
    use std::collections::HashMap;

    fn omega() -> Rect {
        Rect::square(-2.0, 2.0)
    }

    #[test]
    fn minimal_mesh() {
        let m = uniform_mesh(Rect::square(0.0, 1.0), 1, Orientation::Right).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
    }

    #[test]
    fn fluid_mesh_counts_and_spacing() {
        let m = uniform_mesh(omega(), 16, Orientation::Right).unwrap();
        assert_eq!(m.n_vertices(), 289);
        assert_eq!(m.n_triangles(), 512);
        assert_eq!(m.h(), 0.25);
        let s = uniform_mesh(Rect::square(0.0, 1.0), 8, Orientation::Left).unwrap();
        assert_eq!(s.h(), 0.125);
        assert_eq!(s.h() / m.h(), 0.5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(uniform_mesh(omega(), 0, Orientation::Right).is_err());
        let flat = Rect::new(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0));
        assert!(uniform_mesh(flat, 4, Orientation::Left).is_err());
    }

    #[test]
    fn area_sum_all_sizes_and_orientations() {
        for o in [Orientation::Right, Orientation::Left] {
            for n in 1..=64 {
                let m = uniform_mesh(omega(), n, o).unwrap();
                m.validate().unwrap();
                assert_eq!(m.n_vertices(), (n + 1) * (n + 1));
                assert_eq!(m.n_triangles(), 2 * n * n);
            }
        }
    }

    #[test]
    fn interior_edges_shared_by_two_triangles() {
        for o in [Orientation::Right, Orientation::Left] {
            let m = uniform_mesh(omega(), 5, o).unwrap();
            let r = midpoint_refine(&m);
            for mesh in [&m, &r] {
                let mut count: HashMap<(usize, usize), usize> = HashMap::new();
                for t in &mesh.triangles {
                    for k in 0..3 {
                        let (a, b) = (t[k], t[(k + 1) % 3]);
                        *count.entry((a.min(b), a.max(b))).or_default() += 1;
                    }
                }
                for ((a, b), c) in count {
                    let boundary = mesh.boundary_vertex_flags[a]
                        && mesh.boundary_vertex_flags[b]
                        && {
                            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                            pa.x == pb.x && (pa.x == -2.0 || pa.x == 2.0)
                                || pa.y == pb.y && (pa.y == -2.0 || pa.y == 2.0)
                        };
                    assert_eq!(c, if boundary { 1 } else { 2 });
                }
            }
        }
    }

    #[test]
    fn refine_counts() {
        let m = uniform_mesh(Rect::square(0.0, 1.0), 1, Orientation::Right).unwrap();
        let r = midpoint_refine(&m);
        assert_eq!(r.n_triangles(), 8);
        assert_eq!(midpoint_refine(&r).n_triangles(), 32);
        let f = uniform_mesh(omega(), 16, Orientation::Right).unwrap();
        let fr = midpoint_refine(&f);
        assert_eq!(fr.n_triangles(), 2048);
        assert_eq!(fr.h(), 0.125);
        fr.validate().unwrap();
    }

    #[test]
    fn refined_children_are_inside_parent() {
        for o in [Orientation::Right, Orientation::Left] {
            let m = uniform_mesh(omega(), 3, o).unwrap();
            let r = midpoint_refine(&midpoint_refine(&m));
            for t in 0..r.n_triangles() {
                let parent = r.ancestor(t, 2);
                let pp = m.triangle_points(parent);
                let lam = barycentric(&pp, centroid(&r.triangle_points(t)));
                assert!(lam.iter().all(|&l| l > 0.0));
                assert!((r.area(t) * 16.0 - m.area(parent)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn element_map_examples() {
        let m = uniform_mesh(Rect::square(0.0, 1.0), 1, Orientation::Left).unwrap();
        // triangle 0 is (0,0),(1,0),(0,1): the reference triangle itself
        let f = m.element_map(0).unwrap();
        assert_eq!(f, AffineMap::identity());
        let h = 0.3;
        let t = [Point2::new(0.0, 0.0), Point2::new(h, 0.0), Point2::new(0.0, h)];
        let f = AffineMap::from_triangle(&t).unwrap();
        assert_eq!(f.matrix, [[h, 0.0], [0.0, h]]);
        assert!((f.det - h * h).abs() < 1e-16);
        let fluid = uniform_mesh(omega(), 16, Orientation::Right).unwrap();
        for t in 0..fluid.n_triangles() {
            let f = fluid.element_map(t).unwrap();
            assert!((f.det.abs() - 0.0625).abs() < 1e-15);
            assert!((f.det - 2.0 * fluid.area(t)).abs() < 1e-15);
        }
        assert!(fluid.element_map(512).is_err());
    }

    #[test]
    fn affine_inverse_roundtrip() {
        let f = AffineMap::new([[2.0, 0.3], [-0.7, 1.1]], Point2::new(-0.62, 4.0)).unwrap();
        let id = f.compose(&f.inverse());
        let e = AffineMap::identity();
        for i in 0..2 {
            for j in 0..2 {
                assert!((id.matrix[i][j] - e.matrix[i][j]).abs() < 1e-13);
            }
        }
        assert!(id.offset.norm() < 1e-13);
        assert!(AffineMap::new([[1.0, 2.0], [2.0, 4.0]], Point2::ZERO).is_err());
    }

    #[test]
    fn locate_examples() {
        let m = uniform_mesh(omega(), 16, Orientation::Right).unwrap();
        assert_eq!(m.locate_point(centroid(&m.triangle_points(0))), Some(0));
        assert_eq!(m.locate_point(Point2::new(5.0, 5.0)), None);
        // triangles 4 and 5 share the diagonal of cell 2
        let (a, b) = (m.triangle_points(4), m.triangle_points(5));
        let shared: Vec<Point2> = a.iter().filter(|p| b.contains(p)).copied().collect();
        assert_eq!(shared.len(), 2);
        let mid = shared[0].midpoint(shared[1]);
        let containing: Vec<usize> = (0..m.n_triangles())
            .filter(|&t| barycentric(&m.triangle_points(t), mid).iter().all(|&l| l >= -1e-14))
            .collect();
        assert_eq!(containing, vec![4, 5]);
        assert_eq!(m.locate_point(mid), Some(4));
    }

    #[test]
    fn locate_centroids_exhaustive() {
        for o in [Orientation::Right, Orientation::Left] {
            for n in 1..=32 {
                let m = uniform_mesh(omega(), n, o).unwrap();
                for t in 0..m.n_triangles() {
                    assert_eq!(m.locate_point(centroid(&m.triangle_points(t))), Some(t));
                }
            }
            let r = midpoint_refine(&uniform_mesh(omega(), 7, o).unwrap());
            for t in 0..r.n_triangles() {
                assert_eq!(r.locate_point(centroid(&r.triangle_points(t))), Some(t));
            }
        }
    }

    #[test]
    fn locate_vertex_takes_smallest_index() {
        let m = uniform_mesh(omega(), 4, Orientation::Left).unwrap();
        for (v, p) in m.vertices.iter().enumerate() {
            let want = m.triangles.iter().position(|t| t.contains(&v));
            assert_eq!(m.locate_point(*p), want);
        }
    }

    #[test]
    fn refine_preserves_area() {
        let m = uniform_mesh(Rect::square(0.0, 1.0), 3, Orientation::Left).unwrap();
        let r = midpoint_refine(&m);
        let total: f64 = (0..r.n_triangles()).map(|t| r.area(t)).sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn dump_format() {
        let m = uniform_mesh(Rect::square(0.0, 1.0), 1, Orientation::Right).unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "vertices 4 triangles 2");
        assert_eq!(lines.len(), 1 + 4 + 2);
        assert_eq!(lines[5], "0 1 3");
    }
}
