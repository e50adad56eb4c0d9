//! Convergence studies on the benchmark problem and their CSV output.

use std::fmt;
use std::io::Write;

use crate::assembly::{
    assemble_af, assemble_as, assemble_b, assemble_cf_approx, assemble_cf_exact_with, assemble_cs,
    assemble_rhs, build_coupling_schemes, coupling_error_1norm, pressure_mean_weights, AssemblyMode, Coupling, Deformation,
    FormParams, Spaces,
};
use crate::error::{FdlmError, Result};
use crate::geom::CompositeQuadScheme;
use crate::manufactured::{error_norms, ErrorNorms, ManufacturedSolution};
use crate::mesh::{uniform_mesh, Orientation, Rect};
use crate::solver::{build_system, solve, BlockSystem, Blocks, DiscreteSolution};
use crate::sparse::SparseMatrix;

pub const FLUID_DOMAIN: Rect = Rect {
    min: crate::point::Point2 { x: -2.0, y: -2.0 },
    max: crate::point::Point2 { x: 2.0, y: 2.0 },
};

pub const SOLID_DOMAIN: Rect = Rect {
    min: crate::point::Point2 { x: 0.0, y: 0.0 },
    max: crate::point::Point2 { x: 1.0, y: 1.0 },
};

pub const CONVERGENCE_HEADER: &str = "level,h_omega,h_solid,err_u_h1,err_p_l2,err_x_h1,err_lambda,cf_diff_1norm,rate_u,rate_p,rate_x,rate_lambda,rate_cf";
pub const QUAD_ERROR_HEADER: &str = "level,h_solid,h_omega,cf_diff_1norm,rate";

/// Mesh schedule of the two benchmark studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestId {
    /// `n_Ω = 16·2ᵏ`, `n_B = 8·2ᵏ`: fixed ratio `h_B / h_Ω = 1/2`.
    One,
    /// `n_Ω = 8·2ᵏ`, `n_B = round((n_Ω / 2)^{3/2})`: `h_B ≈ (h_Ω / 2)^{3/2}`.
    Two,
}

impl TestId {
    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            1 => Ok(TestId::One),
            2 => Ok(TestId::Two),
            _ => Err(FdlmError::invalid(format!("unknown test {n}"))),
        }
    }

    /// `(n_Ω, n_B)` at refinement `level`; `n_Ω` counts pressure-mesh cells.
    pub fn mesh_sizes(self, level: usize) -> (usize, usize) {
        match self {
            TestId::One => (16 << level, 8 << level),
            TestId::Two => {
                let nf = 8usize << level;
                (nf, ((nf as f64) / 2.0).powf(1.5).round() as usize)
            }
        }
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestId::One => "1",
            TestId::Two => "2",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub test: TestId,
    pub coupling: Coupling,
    pub mode: AssemblyMode,
    pub levels: usize,
    pub params: FormParams,
}

impl ExperimentPlan {
    pub fn new(test: TestId, coupling: Coupling, mode: AssemblyMode, levels: usize) -> Self {
        ExperimentPlan {
            test,
            coupling,
            mode,
            levels,
            params: FormParams::benchmark(),
        }
    }

    pub fn schedule(&self) -> Vec<(usize, usize)> {
        (0..self.levels).map(|k| self.test.mesh_sizes(k)).collect()
    }
}

/// Meshes, spaces, `X̄` and composite schemes of one level.
pub struct LevelSetup {
    pub n_fluid: usize,
    pub n_solid: usize,
    pub spaces: Spaces,
    pub xbar: Deformation,
    pub schemes: Vec<CompositeQuadScheme>,
}

impl LevelSetup {
    /// Benchmark geometry: `Ω = [−2, 2]²` with `n_fluid` pressure cells per
    /// side, `B = [0, 1]²` with `n_solid` cells, and the benchmark `X̄`.
    pub fn new(n_fluid: usize, n_solid: usize, exact: &ManufacturedSolution) -> Result<Self> {
        let fluid = uniform_mesh(FLUID_DOMAIN, n_fluid, Orientation::Right)?;
        let solid = uniform_mesh(SOLID_DOMAIN, n_solid, Orientation::Left)?;
        let spaces = Spaces::new(fluid, solid);
        let xbar = Deformation::affine(&spaces.solid.mesh, exact.xbar);
        let schemes = build_coupling_schemes(&spaces.solid.mesh, &spaces.velocity.mesh, &xbar)?;
        Ok(LevelSetup {
            n_fluid,
            n_solid,
            spaces,
            xbar,
            schemes,
        })
    }

    pub fn h_omega(&self) -> f64 {
        self.spaces.pressure.mesh.h()
    }

    pub fn h_solid(&self) -> f64 {
        self.spaces.solid.mesh.h()
    }

    pub fn cf_exact(&self, coupling: Coupling) -> Result<SparseMatrix> {
        let sp = &self.spaces;
        assemble_cf_exact_with(&sp.solid, &sp.velocity, &self.xbar, coupling, &self.schemes)
    }

    pub fn cf_approx(&self, coupling: Coupling) -> Result<SparseMatrix> {
        let sp = &self.spaces;
        assemble_cf_approx(&sp.solid, &sp.velocity, &self.xbar, coupling)
    }

    /// Assembles the full system with the given coupling matrix.
    pub fn system(
        &self,
        cf: SparseMatrix,
        exact: &ManufacturedSolution,
        params: &FormParams,
        coupling: Coupling,
        mode: AssemblyMode,
    ) -> Result<BlockSystem> {
        let sp = &self.spaces;
        let blocks = Blocks {
            af: assemble_af(&sp.velocity, params)?,
            as_: assemble_as(&sp.solid, params)?,
            b: assemble_b(&sp.velocity, &sp.pressure)?,
            cf,
            cs: assemble_cs(&sp.solid, &sp.solid, coupling)?,
            m: pressure_mean_weights(&sp.pressure),
        };
        let rhs = assemble_rhs(sp, exact, &self.xbar, params, coupling, mode, Some(&self.schemes))?;
        build_system(sp, blocks, &rhs)
    }
}

/// Everything produced by one solve.
pub struct LevelOutcome {
    pub system: BlockSystem,
    pub solution: DiscreteSolution,
    pub errors: ErrorNorms,
    pub cf_diff_1norm: f64,
}

/// Assembles both coupling matrices, solves with the one selected by
/// `mode` and evaluates the errors.
pub fn solve_level(
    setup: &LevelSetup,
    exact: &ManufacturedSolution,
    params: &FormParams,
    coupling: Coupling,
    mode: AssemblyMode,
) -> Result<LevelOutcome> {
    let exact_cf = setup.cf_exact(coupling)?;
    let approx_cf = setup.cf_approx(coupling)?;
    let cf_diff_1norm = coupling_error_1norm(&exact_cf, &approx_cf)?;
    let cf = match mode {
        AssemblyMode::Exact => exact_cf,
        AssemblyMode::Approx => approx_cf,
    };
    let system = setup.system(cf, exact, params, coupling, mode)?;
    let solution = solve(&system)?;
    let errors = error_norms(&solution, exact, coupling)?;
    Ok(LevelOutcome {
        system,
        solution,
        errors,
        cf_diff_1norm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub h_omega: f64,
    pub h_solid: f64,
    pub errors: ErrorNorms,
    pub cf_diff_1norm: f64,
    /// Rates of `u`, `p`, `X`, `λ` and `C_f − C_{f,h}`; NaN where undefined.
    pub rates: [f64; 5],
    pub n_unknowns: usize,
    pub relative_residual: f64,
    /// `‖B u_h‖_∞`
    pub divergence: f64,
    /// `∫_Ω p_h`
    pub pressure_mean: f64,
}

impl ConvergenceRecord {
    fn series(&self) -> [f64; 5] {
        [
            self.errors.err_u_h1,
            self.errors.err_p_l2,
            self.errors.err_x_h1,
            self.errors.err_lambda,
            self.cf_diff_1norm,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadErrorRecord {
    pub level: usize,
    pub h_solid: f64,
    pub h_omega: f64,
    pub cf_diff_1norm: f64,
    pub rate: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(FdlmError::invalid("least-squares slope needs two or more paired samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(FdlmError::invalid("least-squares slope with identical abscissae"));
    }
    Ok(sxy / sxx)
}

/// Observed rates for an error sequence. Test 1: `log₂(e_{k−1} / e_k)`.
/// Test 2: slope of `log e` against `log h_B` over levels `0..=k`.
/// Level 0, and any rate involving a non-positive or non-finite error, is NaN.
pub fn compute_rates(test: TestId, errors: &[f64], h_solid: &[f64]) -> Result<Vec<f64>> {
    if errors.len() < 2 || errors.len() != h_solid.len() {
        return Err(FdlmError::invalid("rates need two or more levels with matching h_B"));
    }
    let ok = |e: f64| e.is_finite() && e > 0.0;
    let mut rates = vec![f64::NAN; errors.len()];
    for k in 1..errors.len() {
        rates[k] = match test {
            TestId::One => {
                if ok(errors[k - 1]) && ok(errors[k]) {
                    (errors[k - 1] / errors[k]).log2()
                } else {
                    f64::NAN
                }
            }
            TestId::Two => {
                if errors[..=k].iter().all(|&e| ok(e)) {
                    let lx: Vec<f64> = h_solid[..=k].iter().map(|h| h.ln()).collect();
                    let ly: Vec<f64> = errors[..=k].iter().map(|e| e.ln()).collect();
                    least_squares_slope(&lx, &ly)?
                } else {
                    f64::NAN
                }
            }
        };
    }
    Ok(rates)
}

fn fill_rates(test: TestId, records: &mut [ConvergenceRecord]) -> Result<()> {
    let h: Vec<f64> = records.iter().map(|r| r.h_solid).collect();
    for q in 0..5 {
        let e: Vec<f64> = records.iter().map(|r| r.series()[q]).collect();
        for (r, rate) in records.iter_mut().zip(compute_rates(test, &e, &h)?) {
            r.rates[q] = rate;
        }
    }
    Ok(())
}

/// Runs the plan level by level; errors carry the failing level.
pub fn run_convergence(plan: &ExperimentPlan) -> Result<Vec<ConvergenceRecord>> {
    run_convergence_with(plan, |_| {})
}

/// [`run_convergence`] with a callback after every level.
pub fn run_convergence_with<F: FnMut(&ConvergenceRecord)>(
    plan: &ExperimentPlan,
    mut progress: F,
) -> Result<Vec<ConvergenceRecord>> {
    if plan.levels < 2 {
        return Err(FdlmError::invalid("a convergence study needs at least 2 levels"));
    }
    let exact = ManufacturedSolution::benchmark();
    let mut records = Vec::with_capacity(plan.levels);
    for (level, (nf, ns)) in plan.schedule().into_iter().enumerate() {
        let rec = (|| {
            let setup = LevelSetup::new(nf, ns, &exact)?;
            let out = solve_level(&setup, &exact, &plan.params, plan.coupling, plan.mode)?;
            Ok::<_, FdlmError>(ConvergenceRecord {
                level,
                h_omega: setup.h_omega(),
                h_solid: setup.h_solid(),
                errors: out.errors,
                cf_diff_1norm: out.cf_diff_1norm,
                rates: [f64::NAN; 5],
                n_unknowns: out.system.offsets.total,
                relative_residual: out.solution.relative_residual,
                divergence: out.solution.divergence_residual(&out.system.blocks.b)?,
                pressure_mean: out.solution.pressure_mean(&out.system.blocks.m)?,
            })
        })()
        .map_err(|e| e.at_level(level))?;
        progress(&rec);
        records.push(rec);
    }
    fill_rates(plan.test, &mut records)?;
    Ok(records)
}

/// `‖C_f − C_{f,h}‖₁` over the schedule of `test`.
pub fn run_quad_error(test: TestId, coupling: Coupling, levels: usize) -> Result<Vec<QuadErrorRecord>> {
    if levels < 2 {
        return Err(FdlmError::invalid("a quadrature-error study needs at least 2 levels"));
    }
    let exact = ManufacturedSolution::benchmark();
    let mut records = Vec::with_capacity(levels);
    for level in 0..levels {
        let (nf, ns) = test.mesh_sizes(level);
        let rec = (|| {
            let setup = LevelSetup::new(nf, ns, &exact)?;
            let diff = coupling_error_1norm(&setup.cf_exact(coupling)?, &setup.cf_approx(coupling)?)?;
            Ok::<_, FdlmError>(QuadErrorRecord {
                level,
                h_solid: setup.h_solid(),
                h_omega: setup.h_omega(),
                cf_diff_1norm: diff,
                rate: f64::NAN,
            })
        })()
        .map_err(|e| e.at_level(level))?;
        records.push(rec);
    }
    let e: Vec<f64> = records.iter().map(|r| r.cf_diff_1norm).collect();
    let h: Vec<f64> = records.iter().map(|r| r.h_solid).collect();
    for (r, rate) in records.iter_mut().zip(compute_rates(test, &e, &h)?) {
        r.rate = rate;
    }
    Ok(records)
}

/// `{:.16e}` (17 significant digits), with `nan` for undefined values.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_convergence_csv<W: Write>(records: &[ConvergenceRecord], mut w: W) -> Result<()> {
    writeln!(w, "{CONVERGENCE_HEADER}")?;
    for r in records {
        let mut fields = vec![r.level.to_string(), fmt_float(r.h_omega), fmt_float(r.h_solid)];
        fields.extend(r.series().iter().chain(&r.rates).map(|&v| fmt_float(v)));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn write_quad_error_csv<W: Write>(records: &[QuadErrorRecord], mut w: W) -> Result<()> {
    writeln!(w, "{QUAD_ERROR_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.level,
            fmt_float(r.h_solid),
            fmt_float(r.h_omega),
            fmt_float(r.cf_diff_1norm),
            fmt_float(r.rate)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let one: Vec<_> = (0..4).map(|k| TestId::One.mesh_sizes(k)).collect();
        assert_eq!(one, [(16, 8), (32, 16), (64, 32), (128, 64)]);
        let two: Vec<_> = (0..7).map(|k| TestId::Two.mesh_sizes(k).1).collect();
        assert_eq!(two, [8, 23, 64, 181, 512, 1448, 4096]);
        assert_eq!(TestId::Two.mesh_sizes(3).0, 64);
        assert!(TestId::from_number(3).is_err());
        let plan = ExperimentPlan::new(TestId::One, Coupling::L2, AssemblyMode::Exact, 3);
        assert_eq!(plan.schedule().len(), 3);
    }

    #[test]
    fn rates_examples() {
        let h = [1.0, 0.5, 0.25];
        let r = compute_rates(TestId::One, &[1.0, 0.5, 0.25], &h).unwrap();
        assert!(r[0].is_nan());
        assert_eq!(&r[1..], &[1.0, 1.0]);
        let r = compute_rates(TestId::One, &[1.0, 1.0, 1.0], &h).unwrap();
        assert_eq!(&r[1..], &[0.0, 0.0]);
        let r = compute_rates(TestId::One, &[1.0, 0.0, 1.0], &h).unwrap();
        assert!(r[1].is_nan() && r[2].is_nan());
        assert!(compute_rates(TestId::One, &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn synthetic_power_law_slope() {
        let h: Vec<f64> = [8.0f64, 23.0, 64.0, 181.0].iter().map(|n| 1.0 / n).collect();
        let e: Vec<f64> = h.iter().map(|h| h.powf(1.5)).collect();
        let r = compute_rates(TestId::Two, &e, &h).unwrap();
        for v in &r[1..] {
            assert!((v - 1.5).abs() < 1e-12);
        }
        assert!(least_squares_slope(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn nan_is_written_as_nan() {
        assert_eq!(fmt_float(f64::NAN), "nan");
        assert_eq!(fmt_float(0.5), "5.0000000000000000e-1");
        let rec = QuadErrorRecord {
            level: 0,
            h_solid: 0.125,
            h_omega: 0.25,
            cf_diff_1norm: 1e-3,
            rate: f64::NAN,
        };
        let mut buf = Vec::new();
        write_quad_error_csv(&[rec], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), QUAD_ERROR_HEADER);
        assert!(s.lines().nth(1).unwrap().ends_with(",nan"));
    }

    #[test]
    fn short_studies_are_rejected() {
        let plan = ExperimentPlan::new(TestId::One, Coupling::L2, AssemblyMode::Exact, 1);
        assert!(run_convergence(&plan).is_err());
        assert!(run_quad_error(TestId::One, Coupling::L2, 1).is_err());
    }
}
