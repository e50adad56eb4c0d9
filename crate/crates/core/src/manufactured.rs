//! Manufactured solution of the benchmark problem and the error norms used
//! in the convergence studies.
//!
//! Fluid domain `Ω = [-2, 2]²`, solid reference domain `B = [0, 1]²`,
//! `X̄(s) = (-0.62 + 2 s₁, -0.62 + 2 s₂)` and
//!
//! * `u = curl ψ`, `ψ(x, y) = (4 − x²)² (4 − y²)²`
//! * `p = 150 sin x`
//! * `X = curl_s ψ(s)`
//! * `λ = (e^{s₁}, e^{s₂})`
//!
//! with the 2D curl `curl ψ = (∂ψ/∂y, −∂ψ/∂x)`. All derivatives are
//! closed forms.

use std::sync::Arc;

use crate::assembly::{p1_mass_triplets, p1_stiffness_triplets, Coupling};
use crate::error::{FdlmError, Result};
use crate::fespace::{FEFunction, FiniteElementSpace};
use crate::mesh::AffineMap;
use crate::par;
use crate::point::{barycentric, Point2};
use crate::quadrature::QuadratureRule;
use crate::solver::{DiscreteSolution, SpdSolver};
use crate::sparse::SparseMatrix;

/// Scalar stream function with closed-form derivatives up to order three.
pub trait Potential: Sync {
    fn value(&self, p: Point2) -> f64;
    fn gradient(&self, p: Point2) -> Point2;
    /// `[[ψ_xx, ψ_xy], [ψ_xy, ψ_yy]]`
    fn hessian(&self, p: Point2) -> [[f64; 2]; 2];
    /// `∇(Δψ)`
    fn laplacian_gradient(&self, p: Point2) -> Point2;
}

/// `ψ = (a − x²)² (a − y²)²`, vanishing with its gradient on `|x| = √a`
/// and `|y| = √a`.
#[derive(Clone, Copy, Debug)]
pub struct QuarticBubble {
    pub a: f64,
}

impl QuarticBubble {
    /// `(a − t²)²` and its first three derivatives.
    fn factor(&self, t: f64) -> [f64; 4] {
        let w = self.a - t * t;
        [w * w, -4.0 * t * w, -4.0 * self.a + 12.0 * t * t, 24.0 * t]
    }
}

impl Potential for QuarticBubble {
    fn value(&self, p: Point2) -> f64 {
        self.factor(p.x)[0] * self.factor(p.y)[0]
    }

    fn gradient(&self, p: Point2) -> Point2 {
        let (fx, fy) = (self.factor(p.x), self.factor(p.y));
        Point2::new(fx[1] * fy[0], fx[0] * fy[1])
    }

    fn hessian(&self, p: Point2) -> [[f64; 2]; 2] {
        let (fx, fy) = (self.factor(p.x), self.factor(p.y));
        let xy = fx[1] * fy[1];
        [[fx[2] * fy[0], xy], [xy, fx[0] * fy[2]]]
    }

    fn laplacian_gradient(&self, p: Point2) -> Point2 {
        let (fx, fy) = (self.factor(p.x), self.factor(p.y));
        Point2::new(fx[3] * fy[0] + fx[1] * fy[2], fx[2] * fy[1] + fx[0] * fy[3])
    }
}

/// Divergence-free field `curl ψ = (∂ψ/∂y, −∂ψ/∂x)`.
#[derive(Clone, Copy, Debug)]
pub struct CurlField<P> {
    pub potential: P,
}

pub fn curl_of_potential<P: Potential>(potential: P) -> CurlField<P> {
    CurlField { potential }
}

impl<P: Potential> CurlField<P> {
    pub fn value(&self, p: Point2) -> [f64; 2] {
        let g = self.potential.gradient(p);
        [g.y, -g.x]
    }

    /// Row `i` is `∇(curl ψ)_i`.
    pub fn gradient(&self, p: Point2) -> [Point2; 2] {
        let h = self.potential.hessian(p);
        [Point2::new(h[0][1], h[1][1]), Point2::new(-h[0][0], -h[0][1])]
    }

    pub fn divergence(&self, p: Point2) -> f64 {
        let g = self.gradient(p);
        g[0].x + g[1].y
    }

    pub fn laplacian(&self, p: Point2) -> [f64; 2] {
        let g = self.potential.laplacian_gradient(p);
        [g.y, -g.x]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Benchmark,
    Zero,
}

/// Exact fields `(u, p, X, λ)` together with the map `X̄`.
#[derive(Clone, Debug)]
pub struct ManufacturedSolution {
    kind: Kind,
    velocity: CurlField<QuarticBubble>,
    displacement: CurlField<QuarticBubble>,
    pub xbar: AffineMap,
}

/// `X̄(s) = (-0.62 + 2 s₁, -0.62 + 2 s₂)`
pub fn benchmark_xbar() -> AffineMap {
    AffineMap::new([[2.0, 0.0], [0.0, 2.0]], Point2::new(-0.62, -0.62)).expect("invertible")
}

impl ManufacturedSolution {
    pub fn benchmark() -> Self {
        ManufacturedSolution {
            kind: Kind::Benchmark,
            velocity: curl_of_potential(QuarticBubble { a: 4.0 }),
            displacement: curl_of_potential(QuarticBubble { a: 4.0 }),
            xbar: benchmark_xbar(),
        }
    }

    /// All fields identically zero (same `X̄`).
    pub fn zero() -> Self {
        ManufacturedSolution {
            kind: Kind::Zero,
            ..Self::benchmark()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.kind == Kind::Zero
    }

    fn on(&self) -> f64 {
        match self.kind {
            Kind::Benchmark => 1.0,
            Kind::Zero => 0.0,
        }
    }

    pub fn u(&self, x: Point2) -> [f64; 2] {
        let v = self.velocity.value(x);
        [self.on() * v[0], self.on() * v[1]]
    }

    pub fn grad_u(&self, x: Point2) -> [Point2; 2] {
        let g = self.velocity.gradient(x);
        [g[0] * self.on(), g[1] * self.on()]
    }

    pub fn laplacian_u(&self, x: Point2) -> [f64; 2] {
        let l = self.velocity.laplacian(x);
        [self.on() * l[0], self.on() * l[1]]
    }

    pub fn p(&self, x: Point2) -> f64 {
        self.on() * 150.0 * x.x.sin()
    }

    pub fn grad_p(&self, x: Point2) -> Point2 {
        Point2::new(self.on() * 150.0 * x.x.cos(), 0.0)
    }

    pub fn x_solid(&self, s: Point2) -> [f64; 2] {
        let v = self.displacement.value(s);
        [self.on() * v[0], self.on() * v[1]]
    }

    pub fn grad_x(&self, s: Point2) -> [Point2; 2] {
        let g = self.displacement.gradient(s);
        [g[0] * self.on(), g[1] * self.on()]
    }

    pub fn lambda(&self, s: Point2) -> [f64; 2] {
        [self.on() * s.x.exp(), self.on() * s.y.exp()]
    }

    pub fn grad_lambda(&self, s: Point2) -> [Point2; 2] {
        [
            Point2::new(self.on() * s.x.exp(), 0.0),
            Point2::new(0.0, self.on() * s.y.exp()),
        ]
    }

    /// `d(s) = u(X̄(s)) − X(s)`
    pub fn d(&self, s: Point2) -> [f64; 2] {
        self.d_with(&self.xbar, s)
    }

    /// `d` evaluated with an element-local affine piece of `X̄`.
    pub fn d_with(&self, map: &AffineMap, s: Point2) -> [f64; 2] {
        let u = self.u(map.apply(s));
        let x = self.x_solid(s);
        [u[0] - x[0], u[1] - x[1]]
    }

    /// `∇_s d = (∇X̄)ᵀ (∇_x u)(X̄(s)) − ∇_s X`, row per component.
    pub fn grad_d_with(&self, map: &AffineMap, s: Point2) -> [Point2; 2] {
        let gu = self.grad_u(map.apply(s));
        let gx = self.grad_x(s);
        [
            map.apply_transpose(gu[0]) - gx[0],
            map.apply_transpose(gu[1]) - gx[1],
        ]
    }
}

/// Errors of a discrete solution against the manufactured one.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    /// `‖u − u_h‖_{1,Ω}`
    pub err_u_h1: f64,
    /// `‖p − p_h‖_{0,Ω}`
    pub err_p_l2: f64,
    /// `‖X − X_h‖_{1,B}`
    pub err_x_h1: f64,
    /// `‖λ − λ_h‖` in `H¹(B)` (h1 coupling) or in `(H¹(B))'` (l2 coupling)
    pub err_lambda: f64,
    /// The same quantities divided by the norm of the exact field.
    pub rel_u_h1: f64,
    pub rel_p_l2: f64,
    pub rel_x_h1: f64,
    pub rel_lambda: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        f64::NAN
    }
}

/// `(∫ |e|², ∫ |∇e|²)` for `e = exact − f_h`, degree-6 quadrature per element.
fn squared_norms<V, G>(f: &FEFunction, with_grad: bool, value: V, grad: G) -> (f64, f64, f64, f64)
where
    V: Fn(Point2) -> [f64; 2] + Sync,
    G: Fn(Point2) -> [Point2; 2] + Sync,
{
    let rule = QuadratureRule::for_degree(6).expect("degree 6 available");
    let mesh = &f.space.mesh;
    let d = f.space.value_dim;
    let parts = par::map_chunks(mesh.n_triangles(), par::CHUNK, |range| {
        let mut acc = [0.0; 4];
        for t in range {
            let pts = mesh.triangle_points(t);
            let gh = if with_grad {
                f.eval_grad(t).expect("valid triangle")
            } else {
                [Point2::ZERO; 2]
            };
            for (x, w) in rule.on_triangle(&pts) {
                let vh = f.combine(t, &barycentric(&pts, x));
                let ve = value(x);
                let ge = if with_grad { grad(x) } else { [Point2::ZERO; 2] };
                for c in 0..d {
                    acc[0] += w * (ve[c] - vh[c]).powi(2);
                    acc[2] += w * ve[c] * ve[c];
                    if with_grad {
                        let e = ge[c] - gh[c];
                        acc[1] += w * e.dot(e);
                        acc[3] += w * ge[c].dot(ge[c]);
                    }
                }
            }
        }
        acc
    });
    let mut s = [0.0; 4];
    for p in parts {
        for k in 0..4 {
            s[k] += p[k];
        }
    }
    (s[0], s[1], s[2], s[3])
}

/// Error norms of `sol` (per-element degree-6 quadrature).
pub fn error_norms(sol: &DiscreteSolution, exact: &ManufacturedSolution, coupling: Coupling) -> Result<ErrorNorms> {
    let (eu0, eu1, nu0, nu1) = squared_norms(&sol.u, true, |x| exact.u(x), |x| exact.grad_u(x));
    let (ep, _, np, _) = squared_norms(&sol.p, false, |x| [exact.p(x), 0.0], |_| [Point2::ZERO; 2]);
    let (ex0, ex1, nx0, nx1) = squared_norms(&sol.x, true, |s| exact.x_solid(s), |s| exact.grad_x(s));
    let (err_lambda, norm_lambda) = match coupling {
        Coupling::H1 => {
            let (e0, e1, n0, n1) =
                squared_norms(&sol.lambda, true, |s| exact.lambda(s), |s| exact.grad_lambda(s));
            ((e0 + e1).sqrt(), (n0 + n1).sqrt())
        }
        Coupling::L2 => {
            let lam = &sol.lambda;
            let space = &lam.space;
            let err = dual_norm(space, |t, s| {
                let e = exact.lambda(s);
                let h = lam.combine(t, &barycentric(&space.mesh.triangle_points(t), s));
                [e[0] - h[0], e[1] - h[1]]
            })?;
            let norm = dual_norm(space, |_, s| exact.lambda(s))?;
            (err, norm)
        }
    };
    let err_u_h1 = (eu0 + eu1).sqrt();
    let err_p_l2 = ep.sqrt();
    let err_x_h1 = (ex0 + ex1).sqrt();
    Ok(ErrorNorms {
        err_u_h1,
        err_p_l2,
        err_x_h1,
        err_lambda,
        rel_u_h1: ratio(err_u_h1, (nu0 + nu1).sqrt()),
        rel_p_l2: ratio(err_p_l2, np.sqrt()),
        rel_x_h1: ratio(err_x_h1, (nx0 + nx1).sqrt()),
        rel_lambda: ratio(err_lambda, norm_lambda),
    })
}

/// `K + M` for scalar P1 on the mesh of `space`.
fn neumann_operator(space: &FiniteElementSpace) -> Result<SparseMatrix> {
    let mesh = &space.mesh;
    let mut t = p1_mass_triplets(mesh);
    t.extend(p1_stiffness_triplets(mesh));
    SparseMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), &t)
}

/// Discrete `(H¹(B))'` norm of the vector functional `e`.
///
/// Solves `(∇Ψ, ∇φ) + (Ψ, φ) = (e, φ)` for every P1 test function (a
/// homogeneous Neumann problem for `−ΔΨ + Ψ = e`) and returns `‖Ψ‖_{1,B}`.
/// `e` is evaluated element by element as `e(t, s)`, so discontinuous data
/// such as `λ − λ_h` is handled exactly per element.
pub fn dual_norm<F>(space: &FiniteElementSpace, e: F) -> Result<f64>
where
    F: Fn(usize, Point2) -> [f64; 2] + Sync,
{
    let op = neumann_operator(space)?;
    dual_norm_with(&op, space, e)
}

fn dual_norm_with<F>(op: &SparseMatrix, space: &FiniteElementSpace, e: F) -> Result<f64>
where
    F: Fn(usize, Point2) -> [f64; 2] + Sync,
{
    let mesh = &space.mesh;
    let n = mesh.n_vertices();
    let rule = QuadratureRule::for_degree(6)?;
    let parts = par::map_chunks(mesh.n_triangles(), par::CHUNK, |range| {
        let mut local = Vec::with_capacity(range.len() * 3);
        for t in range {
            let pts = mesh.triangle_points(t);
            let mut acc = [[0.0; 2]; 3];
            for (s, w) in rule.on_triangle(&pts) {
                let lam = barycentric(&pts, s);
                let v = e(t, s);
                for k in 0..3 {
                    acc[k][0] += w * v[0] * lam[k];
                    acc[k][1] += w * v[1] * lam[k];
                }
            }
            for k in 0..3 {
                local.push((mesh.triangles[t][k], acc[k]));
            }
        }
        local
    });
    let mut rhs = vec![vec![0.0; n]; 2];
    for (v, a) in parts.into_iter().flatten() {
        rhs[0][v] += a[0];
        rhs[1][v] += a[1];
    }
    if rhs.iter().all(|r| r.iter().all(|&x| x == 0.0)) {
        return Ok(0.0);
    }
    let solver = SpdSolver::new(op)?;
    let mut sq = 0.0;
    for b in &rhs {
        let psi = solver.solve(b)?;
        // Ψᵀ (K + M) Ψ = Ψᵀ b
        sq += psi.iter().zip(b).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(sq.max(0.0).sqrt())
}

/// For each space of a refinement sequence, `h · ‖μ_h‖_{0,B} / ‖μ_h‖_{(H¹)'}`
/// with `μ_h` produced by `generator`. Bounded ratios are the testable form
/// of the inverse inequality `‖μ_h‖_{0} ≤ C h⁻¹ ‖μ_h‖_{(H¹)'}`.
pub fn inverse_inequality_check<G>(spaces: &[Arc<FiniteElementSpace>], generator: G) -> Result<Vec<f64>>
where
    G: Fn(&FiniteElementSpace) -> Vec<f64>,
{
    if spaces.len() < 3 {
        return Err(FdlmError::invalid("inverse_inequality_check needs at least 3 levels"));
    }
    let mut ratios = Vec::with_capacity(spaces.len());
    for space in spaces {
        let coeffs = generator(space);
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(FdlmError::invalid("inverse_inequality_check needs a nonzero function"));
        }
        let mu = FEFunction::new(space.clone(), coeffs)?;
        let mesh = &space.mesh;
        let mass = SparseMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), &p1_mass_triplets(mesh))?;
        let mut l2 = 0.0;
        for c in 0..space.value_dim {
            let comp: Vec<f64> = (0..mesh.n_vertices()).map(|v| mu.coefficients[space.dof(v, c)]).collect();
            l2 += mass.bilinear(&comp, &comp)?;
        }
        let dual = dual_norm(space, |t, s| mu.combine(t, &barycentric(&mesh.triangle_points(t), s)))?;
        ratios.push(mesh.h() * l2.sqrt() / dual);
    }
    Ok(ratios)
}
