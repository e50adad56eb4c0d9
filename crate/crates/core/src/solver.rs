//! Global block system and its direct solution.

use std::io::Write;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::Solve;
use faer::perm::PermRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, IntranodeLbltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::SparseColMat;
use faer::{Conj, MatMut, Par, Side};

use crate::assembly::{RhsVectors, Spaces};
use crate::error::{FdlmError, Result};
use crate::fespace::FEFunction;
use crate::sparse::{SparseMatrix, Triplet};

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SpdSolver {
    llt: Llt<usize, f64>,
    n: usize,
}

impl SpdSolver {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.n_rows() != a.n_cols() {
            return Err(FdlmError::DimensionMismatch {
                expected: a.n_rows(),
                got: a.n_cols(),
                context: "square matrix for Cholesky",
            });
        }
        let llt = a
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| FdlmError::Singular(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(SpdSolver { llt, n: a.n_rows() })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, b.len(), "right-hand side")?;
        let mut x = b.to_vec();
        self.llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        finite(x)
    }
}

fn check_len(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected != got {
        return Err(FdlmError::DimensionMismatch { expected, got, context });
    }
    Ok(())
}

fn finite(x: Vec<f64>) -> Result<Vec<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(FdlmError::Singular("solution contains non-finite values".into()))
    }
}

/// Operator blocks of one discretization level.
#[derive(Clone, Debug)]
pub struct Blocks {
    pub af: SparseMatrix,
    pub as_: SparseMatrix,
    /// `∫ div(φ_j) ψ_i`
    pub b: SparseMatrix,
    /// exact or approximate fluid coupling
    pub cf: SparseMatrix,
    pub cs: SparseMatrix,
    /// `m_i = ∫ ψ_i`
    pub m: Vec<f64>,
}

/// First global index of each field; the last unknown is the multiplier of
/// the pressure mean constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DofOffsets {
    pub u: usize,
    pub x: usize,
    pub lambda: usize,
    pub p: usize,
    pub r: usize,
    pub total: usize,
}

/// Assembled global system, ordered `[u, X, λ, p, r]`.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub spaces: Spaces,
    pub blocks: Blocks,
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub offsets: DofOffsets,
}

fn check_shape(m: &SparseMatrix, rows: usize, cols: usize, context: &'static str) -> Result<()> {
    check_len(rows, m.n_rows(), context)?;
    check_len(cols, m.n_cols(), context)
}

/// Builds
///
/// ```text
/// [ A_f   0     C_fᵀ  -Bᵀ   0 ]
/// [ 0     A_s  -C_sᵀ   0    0 ]
/// [ C_f  -C_s   0      0    0 ]
/// [-B     0     0      0    m ]
/// [ 0     0     0      mᵀ   0 ]
/// ```
///
/// Homogeneous Dirichlet velocity dofs (from the velocity space mask) are
/// eliminated symmetrically: their rows and columns are dropped, the
/// diagonal set to one and the right-hand side to zero.
pub fn build_system(spaces: &Spaces, blocks: Blocks, rhs: &RhsVectors) -> Result<BlockSystem> {
    let nu = spaces.velocity.n_dofs();
    let nx = spaces.solid.n_dofs();
    let nq = spaces.pressure.n_dofs();
    check_shape(&blocks.af, nu, nu, "A_f")?;
    check_shape(&blocks.as_, nx, nx, "A_s")?;
    check_shape(&blocks.b, nq, nu, "B")?;
    check_shape(&blocks.cf, nx, nu, "C_f")?;
    check_shape(&blocks.cs, nx, nx, "C_s")?;
    check_len(nq, blocks.m.len(), "pressure mean weights")?;
    check_len(nu, rhs.f.len(), "fluid right-hand side")?;
    check_len(nx, rhs.g.len(), "solid right-hand side")?;
    check_len(nx, rhs.d.len(), "constraint right-hand side")?;

    let o = DofOffsets {
        u: 0,
        x: nu,
        lambda: nu + nx,
        p: nu + 2 * nx,
        r: nu + 2 * nx + nq,
        total: nu + 2 * nx + nq + 1,
    };
    let mask = &spaces.velocity.dirichlet_mask;
    let fixed = |i: usize| i < nu && mask[i];

    let nnz = blocks.af.nnz() + blocks.as_.nnz() + 2 * (blocks.b.nnz() + blocks.cf.nnz() + blocks.cs.nnz()) + 2 * nq;
    let mut t: Vec<Triplet> = Vec::with_capacity(nnz + nu);
    let mut push = |r: usize, c: usize, v: f64| {
        if !fixed(r) && !fixed(c) {
            t.push((r, c, v));
        }
    };
    for (r, c, v) in blocks.af.triplets() {
        push(o.u + r, o.u + c, v);
    }
    for (r, c, v) in blocks.as_.triplets() {
        push(o.x + r, o.x + c, v);
    }
    for (r, c, v) in blocks.cf.triplets() {
        push(o.lambda + r, o.u + c, v);
        push(o.u + c, o.lambda + r, v);
    }
    for (r, c, v) in blocks.cs.triplets() {
        push(o.lambda + r, o.x + c, -v);
        push(o.x + c, o.lambda + r, -v);
    }
    for (r, c, v) in blocks.b.triplets() {
        push(o.p + r, o.u + c, -v);
        push(o.u + c, o.p + r, -v);
    }
    for (i, &w) in blocks.m.iter().enumerate() {
        push(o.p + i, o.r, w);
        push(o.r, o.p + i, w);
    }
    for i in (0..nu).filter(|&i| mask[i]) {
        t.push((i, i, 1.0));
    }
    let matrix = SparseMatrix::from_triplets(o.total, o.total, &t)?;

    let mut b = vec![0.0; o.total];
    for (i, &v) in rhs.f.iter().enumerate() {
        b[o.u + i] = if mask[i] { 0.0 } else { v };
    }
    b[o.x..o.x + nx].copy_from_slice(&rhs.g);
    b[o.lambda..o.lambda + nx].copy_from_slice(&rhs.d);

    Ok(BlockSystem {
        spaces: spaces.clone(),
        blocks,
        matrix,
        rhs: b,
        offsets: o,
    })
}

/// Discrete fields together with solve diagnostics.
#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub u: FEFunction,
    pub p: FEFunction,
    pub x: FEFunction,
    pub lambda: FEFunction,
    /// `‖b − A x‖₂`
    pub residual_norm: f64,
    /// `‖b − A x‖₂ / ‖b‖₂` (the absolute residual when `b = 0`)
    pub relative_residual: f64,
    /// value of the mean-constraint multiplier
    pub mean_multiplier: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let ax = a.mul_vec(x)?;
    Ok(b.iter().zip(ax).map(|(b, ax)| b - ax).collect())
}

/// Symmetric indefinite `L B Lᵀ` factorization: AMD ordering, supernodal,
/// Bunch–Kaufman pivoting inside each supernode.
struct Lblt {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    subdiag: Vec<f64>,
    perm_fwd: Vec<usize>,
    perm_inv: Vec<usize>,
}

impl Lblt {
    fn new(a: &SparseColMat<usize, f64>) -> Result<Self> {
        let n = a.nrows();
        let params = CholeskySymbolicParams {
            supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
            ..Default::default()
        };
        let symbolic = factorize_symbolic_cholesky(a.symbolic(), Side::Lower, SymmetricOrdering::Amd, params)
            .map_err(|e| FdlmError::Singular(format!("symbolic factorization failed: {e:?}")))?;
        let mut f = Lblt {
            values: vec![0.0; symbolic.len_val()],
            subdiag: vec![0.0; n],
            perm_fwd: vec![0; n],
            perm_inv: vec![0; n],
            symbolic,
        };
        let par = Par::Seq;
        let mut buf = MemBuffer::new(f.symbolic.factorize_numeric_intranode_lblt_scratch::<f64>(par, Default::default()));
        f.symbolic.factorize_numeric_intranode_lblt(
            &mut f.values,
            &mut f.subdiag,
            &mut f.perm_fwd,
            &mut f.perm_inv,
            a.as_ref(),
            Side::Lower,
            par,
            MemStack::new(&mut buf),
            Default::default(),
        );
        Ok(f)
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let par = Par::Seq;
        let perm = PermRef::new_checked(&self.perm_fwd, &self.perm_inv, n);
        let lblt = IntranodeLbltRef::new(&self.symbolic, &self.values, &self.subdiag, perm);
        let mut buf = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, par));
        let mut x = b.to_vec();
        lblt.solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(&mut x, n, 1),
            par,
            MemStack::new(&mut buf),
        );
        finite(x)
    }
}

/// Solves `a x = b` with `factor` and up to three steps of iterative
/// refinement; returns `x` and `‖b − a x‖₂`.
fn refine<F>(a: &SparseMatrix, b: &[f64], factor: F) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let scale = norm2(b).max(f64::MIN_POSITIVE);
    let mut x = factor(b)?;
    let mut r = residual(a, &x, b)?;
    for _ in 0..3 {
        if norm2(&r) <= 1e-14 * scale {
            break;
        }
        let dx = factor(&r)?;
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        r = residual(a, &x, b)?;
    }
    let res = norm2(&r);
    if !res.is_finite() {
        return Err(FdlmError::Singular("non-finite residual".into()));
    }
    Ok((x, res))
}

/// Direct solve of the block system. The symmetric indefinite
/// factorization is tried first; if its refined relative residual exceeds
/// `1e-10` the system is refactored with sparse LU and partial pivoting.
pub fn solve(system: &BlockSystem) -> Result<DiscreteSolution> {
    let n = system.offsets.total;
    let a = &system.matrix;
    let b = &system.rhs;
    let bnorm = norm2(b);
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let faer_a = a.to_faer()?;

    let symmetric = Lblt::new(&faer_a).and_then(|f| refine(a, b, |r| f.solve(r)));
    let (x, res) = match symmetric {
        Ok((x, res)) if res <= 1e-10 * scale => (x, res),
        _ => {
            let lu: Lu<usize, f64> = faer_a
                .sp_lu()
                .map_err(|e| FdlmError::Singular(format!("LU factorization failed: {e:?}")))?;
            drop(faer_a);
            refine(a, b, |r| {
                let mut x = r.to_vec();
                lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
                finite(x)
            })?
        }
    };
    let o = system.offsets;
    let sp = &system.spaces;
    Ok(DiscreteSolution {
        u: FEFunction::new(sp.velocity.clone(), x[o.u..o.x].to_vec())?,
        x: FEFunction::new(sp.solid.clone(), x[o.x..o.lambda].to_vec())?,
        lambda: FEFunction::new(sp.solid.clone(), x[o.lambda..o.p].to_vec())?,
        p: FEFunction::new(sp.pressure.clone(), x[o.p..o.r].to_vec())?,
        residual_norm: res,
        relative_residual: res / scale,
        mean_multiplier: x[o.r],
    })
}

impl DiscreteSolution {
    /// `‖B u_h‖_∞`
    pub fn divergence_residual(&self, b: &SparseMatrix) -> Result<f64> {
        Ok(b.mul_vec(&self.u.coefficients)?.iter().fold(0.0, |m, v| m.max(v.abs())))
    }

    /// `∫_Ω p_h` given the pressure mean weights.
    pub fn pressure_mean(&self, m: &[f64]) -> Result<f64> {
        check_len(self.p.coefficients.len(), m.len(), "pressure mean weights")?;
        Ok(m.iter().zip(&self.p.coefficients).map(|(a, b)| a * b).sum())
    }

    /// CSV with header `field,dof_index,value`, fields `u`, `p`, `X`,
    /// `lambda` in that order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "field,dof_index,value")?;
        for (name, f) in [("u", &self.u), ("p", &self.p), ("X", &self.x), ("lambda", &self.lambda)] {
            for (i, v) in f.coefficients.iter().enumerate() {
                writeln!(w, "{name},{i},{v:.16e}")?;
            }
        }
        Ok(())
    }
}
