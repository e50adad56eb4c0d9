//! Assembly of the blocks of the saddle-point system
//!
//! ```text
//! [ A_f   0     C_fᵀ  -Bᵀ ] [u]   [f]
//! [ 0     A_s  -C_sᵀ   0  ] [X] = [g]
//! [ C_f  -C_s   0      0  ] [λ]   [d]
//! [-B     0     0      0  ] [p]   [0]
//! ```
//!
//! and of its right-hand side. `C_f` couples multiplier basis functions on
//! the solid mesh with velocity basis functions composed with `X̄`; it is
//! assembled either exactly through a composite quadrature on the
//! intersection of the two meshes or approximately with one rule per solid
//! element. Scalar P1 blocks are assembled once and expanded to the two
//! velocity/displacement components.

use std::sync::Arc;

use crate::error::{FdlmError, Result};
use crate::fespace::FiniteElementSpace;
use crate::geom::{build_composite_scheme, clip_triangle, fan_triangulate, CompositeQuadScheme};
use crate::manufactured::ManufacturedSolution;
use crate::mesh::{AffineMap, Rect, Triangulation};
use crate::par;
use crate::point::{barycentric, barycentric_gradients, centroid, triangle_area, Point2};
use crate::quadrature::QuadratureRule;
use crate::sparse::{matrix_1norm_diff, SparseMatrix, Triplet};

/// Realization of the constraint form `c(μ, Y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coupling {
    /// `(μ, Y)_B` (the `L²` pairing standing in for the `(H¹)'` duality)
    L2,
    /// `(μ, Y)_B + (∇μ, ∇Y)_B`
    H1,
}

impl Coupling {
    pub fn name(self) -> &'static str {
        match self {
            Coupling::L2 => "l2",
            Coupling::H1 => "h1",
        }
    }
}

/// How the coupling terms involving `v_h ∘ X̄` are integrated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AssemblyMode {
    /// Composite quadrature on the mesh intersection.
    Exact,
    /// One quadrature rule per solid element.
    Approx,
}

impl AssemblyMode {
    pub fn name(self) -> &'static str {
        match self {
            AssemblyMode::Exact => "exact",
            AssemblyMode::Approx => "approx",
        }
    }
}

/// Coefficients of `a_f(u, v) = α (u, v) + ν (∇u, ∇v)` and
/// `a_s(X, Y) = β (X, Y) + κ (∇X, ∇Y)`; `γ` scales the kinematic
/// constraint and is fixed to one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormParams {
    pub alpha: f64,
    pub nu: f64,
    pub beta: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl FormParams {
    pub fn new(alpha: f64, nu: f64, beta: f64, kappa: f64) -> Result<Self> {
        let p = FormParams {
            alpha,
            nu,
            beta,
            kappa,
            gamma: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// `α = β = 0`, `ν = κ = 1`: the benchmark problem.
    pub fn benchmark() -> Self {
        FormParams {
            alpha: 0.0,
            nu: 1.0,
            beta: 0.0,
            kappa: 1.0,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.nu > 0.0 && self.beta >= 0.0 && self.kappa > 0.0) {
            return Err(FdlmError::invalid(format!("invalid form parameters {self:?}")));
        }
        if self.gamma != 1.0 {
            return Err(FdlmError::invalid("gamma is fixed to 1"));
        }
        Ok(())
    }
}

/// Piecewise-affine `X̄`, one affine map (s → x) per solid element.
#[derive(Clone, Debug)]
pub struct Deformation {
    maps: Vec<AffineMap>,
}

impl Deformation {
    /// Restriction of a global affine map to every element.
    pub fn affine(solid: &Triangulation, map: AffineMap) -> Self {
        Deformation {
            maps: vec![map; solid.n_triangles()],
        }
    }

    /// Continuous piecewise-affine map given by the image of every vertex.
    pub fn from_nodal(solid: &Triangulation, positions: &[Point2]) -> Result<Self> {
        if positions.len() != solid.n_vertices() {
            return Err(FdlmError::DimensionMismatch {
                expected: solid.n_vertices(),
                got: positions.len(),
                context: "nodal positions of X̄",
            });
        }
        let maps = (0..solid.n_triangles())
            .map(|t| {
                let from = solid.triangle_points(t);
                let to = solid.triangles[t].map(|v| positions[v]);
                AffineMap::between_triangles(&from, &to)
            })
            .collect::<Result<_>>()?;
        Ok(Deformation { maps })
    }

    #[inline]
    pub fn map(&self, t: usize) -> &AffineMap {
        &self.maps[t]
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

fn rule(degree: usize) -> QuadratureRule {
    QuadratureRule::for_degree(degree).expect("supported degree")
}

fn collect(parts: Vec<Vec<Triplet>>) -> Vec<Triplet> {
    let n = parts.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p);
    }
    out
}

/// Scalar P1 mass matrix entries `(vertex, vertex, ∫ φ_i φ_j)`, one batch
/// per element in element order.
pub fn p1_mass_triplets(mesh: &Triangulation) -> Vec<Triplet> {
    let r = rule(2);
    collect(par::map_chunks(mesh.n_triangles(), par::CHUNK, |range| {
        let mut out = Vec::with_capacity(9 * range.len());
        for t in range {
            let pts = mesh.triangle_points(t);
            let mut m = [[0.0; 3]; 3];
            for (x, w) in r.on_triangle(&pts) {
                let l = barycentric(&pts, x);
                for a in 0..3 {
                    for b in 0..3 {
                        m[a][b] += w * l[a] * l[b];
                    }
                }
            }
            push_local(&mut out, &mesh.triangles[t], &m);
        }
        out
    }))
}

/// Scalar P1 stiffness matrix entries `∫ ∇φ_i · ∇φ_j`.
pub fn p1_stiffness_triplets(mesh: &Triangulation) -> Vec<Triplet> {
    collect(par::map_chunks(mesh.n_triangles(), par::CHUNK, |range| {
        let mut out = Vec::with_capacity(9 * range.len());
        for t in range {
            let pts = mesh.triangle_points(t);
            let area = triangle_area(&pts);
            let g = barycentric_gradients(&pts);
            let mut k = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    k[a][b] = area * g[a].dot(g[b]);
                }
            }
            push_local(&mut out, &mesh.triangles[t], &k);
        }
        out
    }))
}

fn push_local(out: &mut Vec<Triplet>, verts: &[usize; 3], m: &[[f64; 3]; 3]) {
    for a in 0..3 {
        for b in 0..3 {
            out.push((verts[a], verts[b], m[a][b]));
        }
    }
}

/// Expands scalar vertex entries to the interleaved two-component layout.
fn kron2(scalar: &[Triplet]) -> Vec<Triplet> {
    let mut out = Vec::with_capacity(2 * scalar.len());
    for &(i, j, v) in scalar {
        out.push((2 * i, 2 * j, v));
        out.push((2 * i + 1, 2 * j + 1, v));
    }
    out
}

fn combine_scaled(a: f64, mass: Vec<Triplet>, b: f64, stiff: Vec<Triplet>) -> Vec<Triplet> {
    let mut out = Vec::with_capacity(mass.len() + stiff.len());
    if a != 0.0 {
        out.extend(mass.into_iter().map(|(i, j, v)| (i, j, a * v)));
    }
    if b != 0.0 {
        out.extend(stiff.into_iter().map(|(i, j, v)| (i, j, b * v)));
    }
    out
}

fn require_vector(space: &FiniteElementSpace, what: &str) -> Result<()> {
    if space.value_dim != 2 {
        return Err(FdlmError::invalid(format!("{what} must be a vector space")));
    }
    Ok(())
}

/// Fluid block `A_f`: `α` times the vector mass matrix plus `ν` times the
/// vector stiffness matrix (boundary conditions are applied later).
pub fn assemble_af(velocity: &FiniteElementSpace, params: &FormParams) -> Result<SparseMatrix> {
    params.validate()?;
    require_vector(velocity, "velocity space")?;
    let mesh = &velocity.mesh;
    let scalar = combine_scaled(params.alpha, p1_mass_triplets(mesh), params.nu, p1_stiffness_triplets(mesh));
    SparseMatrix::from_triplets(velocity.n_dofs(), velocity.n_dofs(), &kron2(&scalar))
}

/// Solid block `A_s = β M + κ K` on the solid mesh. Singular for `β = 0`
/// (rigid translations), which the coupled system tolerates.
pub fn assemble_as(solid: &FiniteElementSpace, params: &FormParams) -> Result<SparseMatrix> {
    params.validate()?;
    require_vector(solid, "solid space")?;
    let mesh = &solid.mesh;
    let scalar = combine_scaled(params.beta, p1_mass_triplets(mesh), params.kappa, p1_stiffness_triplets(mesh));
    SparseMatrix::from_triplets(solid.n_dofs(), solid.n_dofs(), &kron2(&scalar))
}

/// Divergence matrix with entries `∫_Ω div(φ_j) ψ_i`, rows pressure dofs,
/// columns velocity dofs. The velocity mesh must be the midpoint refinement
/// of the pressure mesh.
pub fn assemble_b(velocity: &FiniteElementSpace, pressure: &FiniteElementSpace) -> Result<SparseMatrix> {
    require_vector(velocity, "velocity space")?;
    let (vm, qm) = (&velocity.mesh, &pressure.mesh);
    if pressure.value_dim != 1
        || vm.refinements() != qm.refinements() + 1
        || vm.n_cells_per_side != 2 * qm.n_cells_per_side
        || vm.domain != qm.domain
        || vm.n_triangles() != 4 * qm.n_triangles()
    {
        return Err(FdlmError::invalid(
            "velocity mesh is not the midpoint refinement of the pressure mesh",
        ));
    }
    let triplets = collect(par::map_chunks(vm.n_triangles(), par::CHUNK, |range| {
        let mut out = Vec::with_capacity(18 * range.len());
        for t in range {
            let pts = vm.triangle_points(t);
            let area = triangle_area(&pts);
            let g = barycentric_gradients(&pts);
            let parent = vm.ancestor(t, 1);
            // ψ_i linear on the child: one-point rule at the centroid is exact
            let psi = barycentric(&qm.triangle_points(parent), centroid(&pts));
            for (i, &q) in qm.triangles[parent].iter().enumerate() {
                for (k, &v) in vm.triangles[t].iter().enumerate() {
                    out.push((q, 2 * v, area * psi[i] * g[k].x));
                    out.push((q, 2 * v + 1, area * psi[i] * g[k].y));
                }
            }
        }
        out
    }));
    SparseMatrix::from_triplets(pressure.n_dofs(), velocity.n_dofs(), &triplets)
}

fn require_same_mesh(a: &FiniteElementSpace, b: &FiniteElementSpace) -> Result<()> {
    if !(Arc::ptr_eq(&a.mesh, &b.mesh)
        || (a.mesh.vertices == b.mesh.vertices && a.mesh.triangles == b.mesh.triangles))
    {
        return Err(FdlmError::invalid("multiplier and solid spaces must share the mesh"));
    }
    Ok(())
}

/// Solid coupling block `C_s` with entries `c(φ_i, φ_j)`.
pub fn assemble_cs(
    multiplier: &FiniteElementSpace,
    solid: &FiniteElementSpace,
    coupling: Coupling,
) -> Result<SparseMatrix> {
    require_vector(solid, "solid space")?;
    require_vector(multiplier, "multiplier space")?;
    require_same_mesh(multiplier, solid)?;
    let mesh = &solid.mesh;
    let scalar = match coupling {
        Coupling::L2 => p1_mass_triplets(mesh),
        Coupling::H1 => combine_scaled(1.0, p1_mass_triplets(mesh), 1.0, p1_stiffness_triplets(mesh)),
    };
    SparseMatrix::from_triplets(multiplier.n_dofs(), solid.n_dofs(), &kron2(&scalar))
}

/// `∫ ψ_i` for every pressure basis function.
pub fn pressure_mean_weights(pressure: &FiniteElementSpace) -> Vec<f64> {
    let mesh = &pressure.mesh;
    let mut m = vec![0.0; pressure.n_dofs()];
    for t in 0..mesh.n_triangles() {
        let a = mesh.area(t) / 3.0;
        for &v in &mesh.triangles[t] {
            m[v] += a;
        }
    }
    m
}

/// Composite schemes (degree-2 rule) for every solid element.
pub fn build_coupling_schemes(
    solid: &Triangulation,
    fluid: &Triangulation,
    xbar: &Deformation,
) -> Result<Vec<CompositeQuadScheme>> {
    if xbar.len() != solid.n_triangles() {
        return Err(FdlmError::DimensionMismatch {
            expected: solid.n_triangles(),
            got: xbar.len(),
            context: "per-element maps of X̄",
        });
    }
    let r = Arc::new(rule(2));
    let chunks = par::try_map_chunks(solid.n_triangles(), 64, |range| {
        range
            .map(|t| build_composite_scheme(&solid.triangle_points(t), xbar.map(t), fluid, r.clone()))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Accumulator for one solid element's `3 × (touched fluid vertices)` block.
struct LocalCoupling {
    cols: Vec<usize>,
    vals: Vec<[f64; 3]>,
}

impl LocalCoupling {
    fn new() -> Self {
        LocalCoupling {
            cols: Vec::with_capacity(32),
            vals: Vec::with_capacity(32),
        }
    }

    #[inline]
    fn add(&mut self, a: usize, col: usize, v: f64) {
        let k = match self.cols.iter().position(|&c| c == col) {
            Some(k) => k,
            None => {
                self.cols.push(col);
                self.vals.push([0.0; 3]);
                self.cols.len() - 1
            }
        };
        self.vals[k][a] += v;
    }

    fn flush(self, rows: &[usize; 3], out: &mut Vec<Triplet>) {
        for (col, vals) in self.cols.into_iter().zip(self.vals) {
            for a in 0..3 {
                out.push((rows[a], col, vals[a]));
            }
        }
    }
}

fn check_coupling_spaces(
    multiplier: &FiniteElementSpace,
    velocity: &FiniteElementSpace,
    xbar: &Deformation,
) -> Result<()> {
    require_vector(multiplier, "multiplier space")?;
    require_vector(velocity, "velocity space")?;
    if xbar.len() != multiplier.mesh.n_triangles() {
        return Err(FdlmError::DimensionMismatch {
            expected: multiplier.mesh.n_triangles(),
            got: xbar.len(),
            context: "per-element maps of X̄",
        });
    }
    Ok(())
}

/// Exact coupling matrix `C_f` (rows multiplier dofs, columns velocity
/// dofs) using the mesh intersection.
pub fn assemble_cf_exact(
    multiplier: &FiniteElementSpace,
    velocity: &FiniteElementSpace,
    xbar: &Deformation,
    coupling: Coupling,
) -> Result<SparseMatrix> {
    check_coupling_spaces(multiplier, velocity, xbar)?;
    let schemes = build_coupling_schemes(&multiplier.mesh, &velocity.mesh, xbar)?;
    assemble_cf_exact_with(multiplier, velocity, xbar, coupling, &schemes)
}

/// [`assemble_cf_exact`] with precomputed composite schemes.
pub fn assemble_cf_exact_with(
    multiplier: &FiniteElementSpace,
    velocity: &FiniteElementSpace,
    xbar: &Deformation,
    coupling: Coupling,
    schemes: &[CompositeQuadScheme],
) -> Result<SparseMatrix> {
    check_coupling_spaces(multiplier, velocity, xbar)?;
    let (sm, vm) = (&multiplier.mesh, &velocity.mesh);
    let scalar = collect(par::map_chunks(sm.n_triangles(), 128, |range| {
        let mut out = Vec::new();
        for t in range {
            let map = xbar.map(t);
            let spts = sm.triangle_points(t);
            let gs = barycentric_gradients(&spts);
            let mut local = LocalCoupling::new();
            let scheme = &schemes[t];
            for cell in &scheme.subcells {
                let f = cell.fluid_triangle;
                let fpts = vm.triangle_points(f);
                let fverts = vm.triangles[f];
                for (s, w) in scheme.rule.on_triangle(&cell.s_triangle) {
                    let ls = barycentric(&spts, s);
                    let lf = barycentric(&fpts, map.apply(s));
                    for (b, &col) in fverts.iter().enumerate() {
                        for a in 0..3 {
                            local.add(a, col, w * ls[a] * lf[b]);
                        }
                    }
                }
                if coupling == Coupling::H1 {
                    let area = triangle_area(&cell.s_triangle);
                    let gf = barycentric_gradients(&fpts);
                    for (b, &col) in fverts.iter().enumerate() {
                        let pulled = map.apply_transpose(gf[b]);
                        for a in 0..3 {
                            local.add(a, col, area * gs[a].dot(pulled));
                        }
                    }
                }
            }
            local.flush(&sm.triangles[t], &mut out);
        }
        out
    }));
    SparseMatrix::from_triplets(multiplier.n_dofs(), velocity.n_dofs(), &kron2(&scalar))
}

/// Quadrature error `‖(C_f − C_{f,h})ᵀ‖₁`: the largest sum over velocity
/// dofs of absolute differences in one multiplier row.
pub fn coupling_error_1norm(exact: &SparseMatrix, approx: &SparseMatrix) -> Result<f64> {
    matrix_1norm_diff(&exact.transpose(), &approx.transpose())
}

fn locate_mapped(fluid: &Triangulation, x: Point2) -> Result<usize> {
    fluid.locate_point(x).ok_or_else(|| {
        FdlmError::DomainViolation(format!("X̄ maps a quadrature node to ({}, {}), outside Ω", x.x, x.y))
    })
}

/// Approximate coupling matrix `C_{f,h}`: on each solid element the mass
/// term uses the degree-2 rule and the gradient term (h1) the centroid
/// rule, with `v_h` evaluated in whichever fluid element contains `X̄(q_k)`.
pub fn assemble_cf_approx(
    multiplier: &FiniteElementSpace,
    velocity: &FiniteElementSpace,
    xbar: &Deformation,
    coupling: Coupling,
) -> Result<SparseMatrix> {
    check_coupling_spaces(multiplier, velocity, xbar)?;
    let (sm, vm) = (&multiplier.mesh, &velocity.mesh);
    let mass_rule = rule(2);
    let grad_rule = rule(0);
    let parts = par::try_map_chunks(sm.n_triangles(), 256, |range| {
        let mut out = Vec::new();
        for t in range {
            let map = xbar.map(t);
            let spts = sm.triangle_points(t);
            let mut local = LocalCoupling::new();
            for (s, w) in mass_rule.on_triangle(&spts) {
                let x = map.apply(s);
                let f = locate_mapped(vm, x)?;
                let ls = barycentric(&spts, s);
                let lf = barycentric(&vm.triangle_points(f), x);
                for (b, &col) in vm.triangles[f].iter().enumerate() {
                    for a in 0..3 {
                        local.add(a, col, w * ls[a] * lf[b]);
                    }
                }
            }
            if coupling == Coupling::H1 {
                let gs = barycentric_gradients(&spts);
                for (s, w) in grad_rule.on_triangle(&spts) {
                    let f = locate_mapped(vm, map.apply(s))?;
                    let gf = barycentric_gradients(&vm.triangle_points(f));
                    for (b, &col) in vm.triangles[f].iter().enumerate() {
                        let pulled = map.apply_transpose(gf[b]);
                        for a in 0..3 {
                            local.add(a, col, w * gs[a].dot(pulled));
                        }
                    }
                }
            }
            local.flush(&sm.triangles[t], &mut out);
        }
        Ok(out)
    })?;
    SparseMatrix::from_triplets(multiplier.n_dofs(), velocity.n_dofs(), &kron2(&collect(parts)))
}

/// Right-hand side vectors `(f, g, d)` of the discrete system.
#[derive(Clone, Debug, PartialEq)]
pub struct RhsVectors {
    /// Velocity rows.
    pub f: Vec<f64>,
    /// Solid displacement rows.
    pub g: Vec<f64>,
    /// Multiplier rows.
    pub d: Vec<f64>,
}

/// Fluid velocity, pressure and solid (= multiplier) spaces of one level.
#[derive(Clone, Debug)]
pub struct Spaces {
    pub velocity: Arc<FiniteElementSpace>,
    pub pressure: Arc<FiniteElementSpace>,
    pub solid: Arc<FiniteElementSpace>,
}

impl Spaces {
    /// P1-iso-P2/P1 on `fluid_coarse` plus vector P1 on `solid`.
    pub fn new(fluid_coarse: Triangulation, solid: Triangulation) -> Self {
        let fine = crate::mesh::midpoint_refine(&fluid_coarse);
        Spaces {
            velocity: Arc::new(FiniteElementSpace::vector_h10(Arc::new(fine))),
            pressure: Arc::new(FiniteElementSpace::scalar(Arc::new(fluid_coarse))),
            solid: Arc::new(FiniteElementSpace::vector(Arc::new(solid))),
        }
    }
}

#[inline]
fn add2(acc: &mut [f64; 2], v: [f64; 2], w: f64) {
    acc[0] += w * v[0];
    acc[1] += w * v[1];
}

/// Right-hand side obtained by inserting the exact solution into the
/// left-hand side of the continuous problem:
///
/// * `f(v_h) = a_f(u, v_h) − (div v_h, p) + c(λ, v_h ∘ X̄)`
/// * `g(Y_h) = a_s(X, Y_h) − c(λ, Y_h)`
/// * `d(μ_h) = c(μ_h, u ∘ X̄ − X)`
///
/// Volume terms use the degree-6 rule. The term `c(λ, v_h ∘ X̄)` uses the
/// degree-6 rule on the composite subcells (`Exact`) or the same single
/// rules as [`assemble_cf_approx`] (`Approx`). Dirichlet rows of `f` are
/// left as computed; the system builder zeroes them.
#[allow(clippy::too_many_arguments)]
pub fn assemble_rhs(
    spaces: &Spaces,
    exact: &ManufacturedSolution,
    xbar: &Deformation,
    params: &FormParams,
    coupling: Coupling,
    mode: AssemblyMode,
    schemes: Option<&[CompositeQuadScheme]>,
) -> Result<RhsVectors> {
    params.validate()?;
    let (vs, ss) = (&spaces.velocity, &spaces.solid);
    let (vm, sm) = (&vs.mesh, &ss.mesh);
    check_coupling_spaces(ss, vs, xbar)?;
    let r6 = rule(6);
    let h1 = coupling == Coupling::H1;

    // fluid volume terms
    let parts = par::map_chunks(vm.n_triangles(), par::CHUNK, |range| {
        let mut out: Vec<(usize, [f64; 2])> = Vec::with_capacity(3 * range.len());
        for t in range {
            let pts = vm.triangle_points(t);
            let g = barycentric_gradients(&pts);
            let mut acc = [[0.0; 2]; 3];
            for (x, w) in r6.on_triangle(&pts) {
                let l = barycentric(&pts, x);
                let u = exact.u(x);
                let gu = exact.grad_u(x);
                let p = exact.p(x);
                for k in 0..3 {
                    for c in 0..2 {
                        let dphi = if c == 0 { g[k].x } else { g[k].y };
                        acc[k][c] += w
                            * (params.alpha * u[c] * l[k] + params.nu * gu[c].dot(g[k]) - p * dphi);
                    }
                }
            }
            for k in 0..3 {
                out.push((vm.triangles[t][k], acc[k]));
            }
        }
        out
    });
    let mut f = vec![0.0; vs.n_dofs()];
    for (v, a) in parts.into_iter().flatten() {
        f[2 * v] += a[0];
        f[2 * v + 1] += a[1];
    }

    // c(λ, v_h ∘ X̄)
    let owned;
    let schemes = match (mode, schemes) {
        (AssemblyMode::Exact, Some(s)) => Some(s),
        (AssemblyMode::Exact, None) => {
            owned = build_coupling_schemes(sm, vm, xbar)?;
            Some(owned.as_slice())
        }
        (AssemblyMode::Approx, _) => None,
    };
    let mass_rule = rule(2);
    let grad_rule = rule(0);
    let parts = par::try_map_chunks(sm.n_triangles(), 128, |range| {
        let mut out: Vec<(usize, [f64; 2])> = Vec::new();
        for t in range {
            let map = xbar.map(t);
            match schemes {
                Some(schemes) => {
                    for cell in &schemes[t].subcells {
                        let fpts = vm.triangle_points(cell.fluid_triangle);
                        let fverts = vm.triangles[cell.fluid_triangle];
                        let gf = barycentric_gradients(&fpts);
                        let mut acc = [[0.0; 2]; 3];
                        for (s, w) in r6.on_triangle(&cell.s_triangle) {
                            let lam = exact.lambda(s);
                            let lf = barycentric(&fpts, map.apply(s));
                            let gl = if h1 { exact.grad_lambda(s) } else { [Point2::ZERO; 2] };
                            for b in 0..3 {
                                add2(&mut acc[b], lam, w * lf[b]);
                                if h1 {
                                    let pulled = map.apply_transpose(gf[b]);
                                    acc[b][0] += w * gl[0].dot(pulled);
                                    acc[b][1] += w * gl[1].dot(pulled);
                                }
                            }
                        }
                        out.extend(fverts.iter().copied().zip(acc));
                    }
                }
                None => {
                    let spts = sm.triangle_points(t);
                    for (s, w) in mass_rule.on_triangle(&spts) {
                        let x = map.apply(s);
                        let fi = locate_mapped(vm, x)?;
                        let lf = barycentric(&vm.triangle_points(fi), x);
                        let lam = exact.lambda(s);
                        for (b, &v) in vm.triangles[fi].iter().enumerate() {
                            out.push((v, [w * lf[b] * lam[0], w * lf[b] * lam[1]]));
                        }
                    }
                    if h1 {
                        for (s, w) in grad_rule.on_triangle(&spts) {
                            let fi = locate_mapped(vm, map.apply(s))?;
                            let gf = barycentric_gradients(&vm.triangle_points(fi));
                            let gl = exact.grad_lambda(s);
                            for (b, &v) in vm.triangles[fi].iter().enumerate() {
                                let pulled = map.apply_transpose(gf[b]);
                                out.push((v, [w * gl[0].dot(pulled), w * gl[1].dot(pulled)]));
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    })?;
    for (v, a) in parts.into_iter().flatten() {
        f[2 * v] += a[0];
        f[2 * v + 1] += a[1];
    }

    // solid terms
    let parts = par::map_chunks(sm.n_triangles(), par::CHUNK, |range| {
        let mut out: Vec<(usize, [f64; 2], [f64; 2])> = Vec::with_capacity(3 * range.len());
        for t in range {
            let map = xbar.map(t);
            let pts = sm.triangle_points(t);
            let g = barycentric_gradients(&pts);
            let mut gacc = [[0.0; 2]; 3];
            let mut dacc = [[0.0; 2]; 3];
            for (s, w) in r6.on_triangle(&pts) {
                let l = barycentric(&pts, s);
                let x = exact.x_solid(s);
                let gx = exact.grad_x(s);
                let lam = exact.lambda(s);
                let gl = exact.grad_lambda(s);
                let d = exact.d_with(map, s);
                let gd = if h1 { exact.grad_d_with(map, s) } else { [Point2::ZERO; 2] };
                for k in 0..3 {
                    for c in 0..2 {
                        let mut cl = lam[c] * l[k];
                        let mut cd = d[c] * l[k];
                        if h1 {
                            cl += gl[c].dot(g[k]);
                            cd += gd[c].dot(g[k]);
                        }
                        gacc[k][c] += w * (params.beta * x[c] * l[k] + params.kappa * gx[c].dot(g[k]) - cl);
                        dacc[k][c] += w * cd;
                    }
                }
            }
            for k in 0..3 {
                out.push((sm.triangles[t][k], gacc[k], dacc[k]));
            }
        }
        out
    });
    let mut g = vec![0.0; ss.n_dofs()];
    let mut d = vec![0.0; ss.n_dofs()];
    for (v, ga, da) in parts.into_iter().flatten() {
        g[2 * v] += ga[0];
        g[2 * v + 1] += ga[1];
        d[2 * v] += da[0];
        d[2 * v + 1] += da[1];
    }
    Ok(RhsVectors { f, g, d })
}

/// Cross-check for the l2 coupling: `(f, φ_j)` with the strong-form force
/// `f = α u − ν Δu + ∇p + χ_{Ω_s} λ(X̄⁻¹ x) / |det ∇X̄|`, where `X̄` is the
/// global affine map of `exact` and `Ω_s = X̄(solid_domain)`. The
/// indicator term is integrated on the intersection of each fluid element
/// with `Ω_s`.
pub fn strong_form_rhs_l2(
    velocity: &FiniteElementSpace,
    solid_domain: Rect,
    exact: &ManufacturedSolution,
    params: &FormParams,
) -> Result<Vec<f64>> {
    let vm = &velocity.mesh;
    let r6 = rule(6);
    let xbar = exact.xbar;
    let inv = xbar.inverse();
    let jac = xbar.det.abs();
    let (a, b) = (solid_domain.min, solid_domain.max);
    let corners = [a, Point2::new(b.x, a.y), b, Point2::new(a.x, b.y)].map(|s| xbar.apply(s));
    let halves = [[corners[0], corners[1], corners[2]], [corners[0], corners[2], corners[3]]];
    let parts = par::try_map_chunks(vm.n_triangles(), par::CHUNK, |range| {
        let mut out: Vec<(usize, [f64; 2])> = Vec::with_capacity(3 * range.len());
        for t in range {
            let pts = vm.triangle_points(t);
            let mut acc = [[0.0; 2]; 3];
            for (x, w) in r6.on_triangle(&pts) {
                let l = barycentric(&pts, x);
                let u = exact.u(x);
                let lap = exact.laplacian_u(x);
                let gp = exact.grad_p(x);
                let force = [
                    params.alpha * u[0] - params.nu * lap[0] + gp.x,
                    params.alpha * u[1] - params.nu * lap[1] + gp.y,
                ];
                for k in 0..3 {
                    add2(&mut acc[k], force, w * l[k]);
                }
            }
            for half in &halves {
                let piece = clip_triangle(&pts, half)?;
                for sub in fan_triangulate(&piece) {
                    for (x, w) in r6.on_triangle(&sub) {
                        let l = barycentric(&pts, x);
                        let lam = exact.lambda(inv.apply(x));
                        for k in 0..3 {
                            add2(&mut acc[k], lam, w * l[k] / jac);
                        }
                    }
                }
            }
            out.extend(vm.triangles[t].iter().copied().zip(acc));
        }
        Ok(out)
    })?;
    let mut f = vec![0.0; velocity.n_dofs()];
    for (v, a) in parts.into_iter().flatten() {
        f[2 * v] += a[0];
        f[2 * v + 1] += a[1];
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::FEFunction;
    use crate::manufactured::benchmark_xbar;
    use crate::mesh::{uniform_mesh, Orientation};

    fn spaces(nf: usize, ns: usize) -> Spaces {
        Spaces::new(
            uniform_mesh(Rect::square(-2.0, 2.0), nf, Orientation::Right).unwrap(),
            uniform_mesh(Rect::square(0.0, 1.0), ns, Orientation::Left).unwrap(),
        )
    }

    fn params(alpha: f64, nu: f64) -> FormParams {
        FormParams::new(alpha, nu, 0.0, 1.0).unwrap()
    }

    #[test]
    fn form_params_validation() {
        assert!(FormParams::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(FormParams::new(-1.0, 1.0, 0.0, 1.0).is_err());
        let mut p = FormParams::benchmark();
        p.gamma = 2.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn stiffness_kills_constants_and_mass_integrates_one() {
        let sp = spaces(4, 4);
        let af = assemble_af(&sp.velocity, &params(0.0, 1.0)).unwrap();
        let ones = vec![1.0; sp.velocity.n_dofs()];
        let r = af.mul_vec(&ones).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-13));
        let m = assemble_af(&sp.velocity, &params(1.0, 1e-300)).unwrap();
        // one component at a time: 1ᵀ M 1 = |Ω| per component
        let e: Vec<f64> = (0..sp.velocity.n_dofs()).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        assert!((m.bilinear(&e, &e).unwrap() - 16.0).abs() < 1e-12);
        assert!(af.max_asymmetry() < 1e-14);
    }

    #[test]
    fn solid_blocks() {
        let sp = spaces(4, 5);
        let p = FormParams::benchmark();
        let a = assemble_as(&sp.solid, &p).unwrap();
        let ones = vec![1.0; sp.solid.n_dofs()];
        assert!(a.mul_vec(&ones).unwrap().iter().all(|x| x.abs() < 1e-13));
        let m = assemble_as(&sp.solid, &FormParams::new(0.0, 1.0, 1.0, 1e-300).unwrap()).unwrap();
        let e: Vec<f64> = (0..sp.solid.n_dofs()).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        assert!((m.bilinear(&e, &e).unwrap() - 1.0).abs() < 1e-13);

        let cs = assemble_cs(&sp.solid, &sp.solid, Coupling::L2).unwrap();
        assert!((cs.bilinear(&ones, &ones).unwrap() - 2.0).abs() < 1e-13);
        assert!(cs.max_asymmetry() < 1e-14);
        let ch = assemble_cs(&sp.solid, &sp.solid, Coupling::H1).unwrap();
        let c = vec![0.7; sp.solid.n_dofs()];
        let (x, y) = (ch.mul_vec(&c).unwrap(), cs.mul_vec(&c).unwrap());
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn divergence_matrix() {
        let sp = spaces(4, 4);
        let b = assemble_b(&sp.velocity, &sp.pressure).unwrap();
        assert_eq!((b.n_rows(), b.n_cols()), (25, 2 * 81));
        let c = FEFunction::interpolate(sp.velocity.clone(), |_| [1.0, 0.0]);
        assert!(b.mul_vec(&c.coefficients).unwrap().iter().all(|x| x.abs() < 1e-13));
        let r = FEFunction::interpolate(sp.velocity.clone(), |p| [p.x, p.y]);
        let s: f64 = b.mul_vec(&r.coefficients).unwrap().iter().sum();
        assert!((s - 32.0).abs() < 1e-12);
        let z = vec![0.0; sp.velocity.n_dofs()];
        assert!(b.mul_vec(&z).unwrap().iter().all(|&x| x == 0.0));
        // parentage is checked
        let other = FiniteElementSpace::scalar(Arc::new(uniform_mesh(Rect::square(-2.0, 2.0), 8, Orientation::Right).unwrap()));
        assert!(assemble_b(&sp.velocity, &other).is_err());
    }

    #[test]
    fn coupling_with_constant_velocity_matches_solid_mass() {
        let sp = spaces(8, 4);
        let xbar = Deformation::affine(&sp.solid.mesh, benchmark_xbar());
        let cs = assemble_cs(&sp.solid, &sp.solid, Coupling::L2).unwrap();
        let c = FEFunction::interpolate(sp.velocity.clone(), |_| [0.3, -1.2]);
        let cc = FEFunction::interpolate(sp.solid.clone(), |_| [0.3, -1.2]);
        let want = cs.mul_vec(&cc.coefficients).unwrap();
        for cf in [
            assemble_cf_exact(&sp.solid, &sp.velocity, &xbar, Coupling::L2).unwrap(),
            assemble_cf_approx(&sp.solid, &sp.velocity, &xbar, Coupling::L2).unwrap(),
        ] {
            let got = cf.mul_vec(&c.coefficients).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn approx_with_zero_velocity_is_zero() {
        let sp = spaces(8, 4);
        let xbar = Deformation::affine(&sp.solid.mesh, benchmark_xbar());
        let cf = assemble_cf_approx(&sp.solid, &sp.velocity, &xbar, Coupling::H1).unwrap();
        let z = vec![0.0; sp.velocity.n_dofs()];
        assert!(cf.mul_vec(&z).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn leaving_omega_is_a_domain_violation() {
        let sp = spaces(4, 2);
        let bad = AffineMap::new([[3.0, 0.0], [0.0, 3.0]], Point2::new(0.0, 0.0)).unwrap();
        let xbar = Deformation::affine(&sp.solid.mesh, bad);
        assert!(matches!(
            assemble_cf_approx(&sp.solid, &sp.velocity, &xbar, Coupling::L2),
            Err(FdlmError::DomainViolation(_))
        ));
        assert!(matches!(
            assemble_cf_exact(&sp.solid, &sp.velocity, &xbar, Coupling::L2),
            Err(FdlmError::DomainViolation(_))
        ));
    }

    #[test]
    fn nodal_deformation_matches_affine() {
        let solid = uniform_mesh(Rect::square(0.0, 1.0), 3, Orientation::Left).unwrap();
        let m = benchmark_xbar();
        let pos: Vec<Point2> = solid.vertices.iter().map(|&s| m.apply(s)).collect();
        let d = Deformation::from_nodal(&solid, &pos).unwrap();
        for t in 0..solid.n_triangles() {
            let a = d.map(t);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a.matrix[i][j] - m.matrix[i][j]).abs() < 1e-13);
                }
            }
            assert!((a.offset - m.offset).norm() < 1e-13);
        }
        assert!(Deformation::from_nodal(&solid, &pos[1..]).is_err());
    }

    #[test]
    fn zero_solution_gives_zero_rhs() {
        let sp = spaces(4, 4);
        let z = ManufacturedSolution::zero();
        let xbar = Deformation::affine(&sp.solid.mesh, z.xbar);
        for coupling in [Coupling::L2, Coupling::H1] {
            for mode in [AssemblyMode::Exact, AssemblyMode::Approx] {
                let r = assemble_rhs(&sp, &z, &xbar, &FormParams::benchmark(), coupling, mode, None).unwrap();
                assert!(r.f.iter().chain(&r.g).chain(&r.d).all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn refined_mesh_coupling_is_consistent_across_modes_for_linear_fields() {
        // v_h ∘ X̄ globally linear when v is the interpolant of a linear field
        let sp = spaces(4, 6);
        let xbar = Deformation::affine(&sp.solid.mesh, benchmark_xbar());
        let v = FEFunction::interpolate(sp.velocity.clone(), |p| [1.0 + p.x - 0.5 * p.y, 2.0 * p.y]);
        for coupling in [Coupling::L2, Coupling::H1] {
            let ex = assemble_cf_exact(&sp.solid, &sp.velocity, &xbar, coupling).unwrap();
            let ap = assemble_cf_approx(&sp.solid, &sp.velocity, &xbar, coupling).unwrap();
            let (a, b) = (ex.mul_vec(&v.coefficients).unwrap(), ap.mul_vec(&v.coefficients).unwrap());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "{coupling:?}: {x} vs {y}");
            }
        }
    }
}
