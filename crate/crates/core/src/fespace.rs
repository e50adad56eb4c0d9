//! Continuous piecewise-linear finite element spaces.
//!
//! The fluid velocity lives on the midpoint-refined fluid mesh and the
//! pressure on the coarse one (P1-iso-P2/P1); the solid displacement and the
//! multiplier share a vector P1 space on the solid mesh. Vector dofs are
//! interleaved: dof `2v + c` is component `c` at vertex `v`.

use std::sync::Arc;

use crate::error::{FdlmError, Result};
use crate::mesh::{AffineMap, Triangulation};
use crate::point::{barycentric, barycentric_gradients, Point2};

#[derive(Clone, Debug)]
pub struct FiniteElementSpace {
    pub mesh: Arc<Triangulation>,
    pub value_dim: usize,
    /// Dofs constrained to zero (only set for the velocity space).
    pub dirichlet_mask: Vec<bool>,
}

impl FiniteElementSpace {
    pub fn new(mesh: Arc<Triangulation>, value_dim: usize, homogeneous_dirichlet: bool) -> Result<Self> {
        if value_dim != 1 && value_dim != 2 {
            return Err(FdlmError::invalid(format!("value_dim must be 1 or 2, got {value_dim}")));
        }
        let dirichlet_mask = mesh
            .boundary_vertex_flags
            .iter()
            .flat_map(|&b| std::iter::repeat(b && homogeneous_dirichlet).take(value_dim))
            .collect();
        Ok(FiniteElementSpace {
            mesh,
            value_dim,
            dirichlet_mask,
        })
    }

    /// Scalar P1 (pressure).
    pub fn scalar(mesh: Arc<Triangulation>) -> Self {
        Self::new(mesh, 1, false).expect("valid value_dim")
    }

    /// Vector P1 without boundary constraints (solid, multiplier).
    pub fn vector(mesh: Arc<Triangulation>) -> Self {
        Self::new(mesh, 2, false).expect("valid value_dim")
    }

    /// Vector P1 vanishing on the boundary (velocity in `H¹₀`).
    pub fn vector_h10(mesh: Arc<Triangulation>) -> Self {
        Self::new(mesh, 2, true).expect("valid value_dim")
    }

    pub fn n_dofs(&self) -> usize {
        self.value_dim * self.mesh.n_vertices()
    }

    #[inline]
    pub fn dof(&self, vertex: usize, component: usize) -> usize {
        self.value_dim * vertex + component
    }

    pub fn dof_coords(&self, dof: usize) -> Point2 {
        self.mesh.vertices[dof / self.value_dim]
    }

    pub fn n_dirichlet(&self) -> usize {
        self.dirichlet_mask.iter().filter(|&&b| b).count()
    }
}

/// Coefficient vector on a [`FiniteElementSpace`].
#[derive(Clone, Debug)]
pub struct FEFunction {
    pub space: Arc<FiniteElementSpace>,
    pub coefficients: Vec<f64>,
}

impl FEFunction {
    pub fn new(space: Arc<FiniteElementSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.n_dofs() {
            return Err(FdlmError::DimensionMismatch {
                expected: space.n_dofs(),
                got: coefficients.len(),
                context: "FEFunction coefficients",
            });
        }
        Ok(FEFunction {
            space,
            coefficients,
        })
    }

    pub fn zeros(space: Arc<FiniteElementSpace>) -> Self {
        let n = space.n_dofs();
        FEFunction {
            space,
            coefficients: vec![0.0; n],
        }
    }

    fn check_triangle(&self, t: usize) -> Result<()> {
        if t >= self.space.mesh.n_triangles() {
            return Err(FdlmError::invalid(format!("triangle index {t} out of range")));
        }
        Ok(())
    }

    /// Value at `x` in triangle `t`; scalar spaces fill only entry 0.
    pub fn eval(&self, t: usize, x: Point2) -> Result<[f64; 2]> {
        self.check_triangle(t)?;
        let lam = barycentric(&self.space.mesh.triangle_points(t), x);
        if lam.iter().any(|&l| l < -1e-10) {
            return Err(FdlmError::invalid(format!(
                "point ({}, {}) is not in triangle {t}",
                x.x, x.y
            )));
        }
        Ok(self.combine(t, &lam))
    }

    /// Value from barycentric weights in triangle `t`, without checks.
    #[inline]
    pub fn combine(&self, t: usize, lam: &[f64; 3]) -> [f64; 2] {
        let tri = self.space.mesh.triangles[t];
        let d = self.space.value_dim;
        let mut out = [0.0; 2];
        for (k, &v) in tri.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate().take(d) {
                *o += lam[k] * self.coefficients[d * v + c];
            }
        }
        out
    }

    pub fn eval_scalar(&self, t: usize, x: Point2) -> Result<f64> {
        Ok(self.eval(t, x)?[0])
    }

    /// Locates `x` and evaluates; `None` outside the mesh.
    pub fn eval_at(&self, x: Point2) -> Option<[f64; 2]> {
        let t = self.space.mesh.locate_point(x)?;
        let lam = barycentric(&self.space.mesh.triangle_points(t), x);
        Some(self.combine(t, &lam))
    }

    /// Gradient of each component on triangle `t` (row `c` is `∇f_c`).
    pub fn eval_grad(&self, t: usize) -> Result<[Point2; 2]> {
        self.check_triangle(t)?;
        let g = barycentric_gradients(&self.space.mesh.triangle_points(t));
        let tri = self.space.mesh.triangles[t];
        let d = self.space.value_dim;
        let mut out = [Point2::ZERO; 2];
        for (k, &v) in tri.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate().take(d) {
                *o = *o + g[k] * self.coefficients[d * v + c];
            }
        }
        Ok(out)
    }

    /// Nodal interpolant of a vector field (scalar spaces use entry 0).
    pub fn interpolate<G: Fn(Point2) -> [f64; 2]>(space: Arc<FiniteElementSpace>, g: G) -> Self {
        let d = space.value_dim;
        let mut coefficients = Vec::with_capacity(space.n_dofs());
        for p in &space.mesh.vertices {
            let v = g(*p);
            coefficients.extend_from_slice(&v[..d]);
        }
        FEFunction {
            space,
            coefficients,
        }
    }

    pub fn interpolate_scalar<G: Fn(Point2) -> f64>(space: Arc<FiniteElementSpace>, g: G) -> Self {
        Self::interpolate(space, |p| [g(p), 0.0])
    }
}

/// Evaluates the velocity `v` at `X̄(s)` for a solid point `s`.
pub fn composed_velocity_eval(v: &FEFunction, map: &AffineMap, s: Point2) -> Result<[f64; 2]> {
    let x = map.apply(s);
    v.eval_at(x).ok_or_else(|| {
        FdlmError::DomainViolation(format!("X̄(s) = ({}, {}) is outside the fluid mesh", x.x, x.y))
    })
}
