use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fdlm::assembly::{AssemblyMode, Coupling, FormParams};
use fdlm::experiments::{
    fmt_float, run_convergence_with, run_quad_error, solve_level, write_convergence_csv, write_quad_error_csv,
    ExperimentPlan, LevelSetup, TestId,
};
use fdlm::manufactured::ManufacturedSolution;
use fdlm::{par, FdlmError, Result};

#[derive(Parser)]
#[command(name = "fdlm", version, about = "Fictitious-domain FSI benchmark driver")]
struct Cli {
    /// Worker threads (overrides FDLM_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    L2,
    H1,
}

impl From<CouplingArg> for Coupling {
    fn from(c: CouplingArg) -> Self {
        match c {
            CouplingArg::L2 => Coupling::L2,
            CouplingArg::H1 => Coupling::H1,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AssemblyArg {
    Exact,
    Approx,
}

impl From<AssemblyArg> for AssemblyMode {
    fn from(a: AssemblyArg) -> Self {
        match a {
            AssemblyArg::Exact => AssemblyMode::Exact,
            AssemblyArg::Approx => AssemblyMode::Approx,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one mesh pair and dump the solution
    Solve {
        #[arg(long, default_value_t = 16)]
        n_fluid: usize,
        #[arg(long, default_value_t = 8)]
        n_solid: usize,
        #[arg(long, value_enum, default_value = "l2")]
        coupling: CouplingArg,
        #[arg(long, value_enum, default_value = "exact")]
        assembly: AssemblyArg,
        /// Solution CSV (field,dof_index,value)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Global matrix in coordinate text format
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
        /// Fluid velocity and solid meshes
        #[arg(long)]
        dump_mesh: Option<PathBuf>,
    },
    /// Difference between exact and approximate coupling matrices
    Quaderr {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        test: u32,
        #[arg(long, value_enum, default_value = "l2")]
        coupling: CouplingArg,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence study
    Run {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        test: u32,
        #[arg(long, value_enum, default_value = "l2")]
        coupling: CouplingArg,
        #[arg(long, value_enum, default_value = "exact")]
        assembly: AssemblyArg,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> Result<()> {
    par::init_threads(cli.threads);
    match cli.command {
        Command::Solve {
            n_fluid,
            n_solid,
            coupling,
            assembly,
            out,
            dump_matrix,
            dump_mesh,
        } => {
            let exact = ManufacturedSolution::benchmark();
            let setup = LevelSetup::new(n_fluid, n_solid, &exact)?;
            let o = solve_level(&setup, &exact, &FormParams::benchmark(), coupling.into(), assembly.into())?;
            let e = o.errors;
            eprintln!("unknowns          {}", o.system.offsets.total);
            eprintln!("relative residual {}", fmt_float(o.solution.relative_residual));
            println!("err_u_h1,{}", fmt_float(e.err_u_h1));
            println!("err_p_l2,{}", fmt_float(e.err_p_l2));
            println!("err_x_h1,{}", fmt_float(e.err_x_h1));
            println!("err_lambda,{}", fmt_float(e.err_lambda));
            println!("cf_diff_1norm,{}", fmt_float(o.cf_diff_1norm));
            if let Some(p) = out {
                let mut w = create(&p)?;
                o.solution.write_csv(&mut w)?;
                w.flush()?;
            }
            if let Some(p) = dump_matrix {
                let mut w = create(&p)?;
                o.system.matrix.write_coordinate(&mut w)?;
                w.flush()?;
            }
            if let Some(p) = dump_mesh {
                let mut w = create(&p)?;
                setup.spaces.velocity.mesh.write_dump(&mut w)?;
                setup.spaces.solid.mesh.write_dump(&mut w)?;
                w.flush()?;
            }
        }
        Command::Quaderr {
            test,
            coupling,
            levels,
            out,
        } => {
            let records = run_quad_error(TestId::from_number(test)?, coupling.into(), levels)?;
            let mut w = output(&out)?;
            write_quad_error_csv(&records, &mut w)?;
            w.flush()?;
        }
        Command::Run {
            test,
            coupling,
            assembly,
            levels,
            out,
        } => {
            let plan = ExperimentPlan::new(TestId::from_number(test)?, coupling.into(), assembly.into(), levels);
            let records = run_convergence_with(&plan, |r| {
                eprintln!(
                    "level {} h_omega {:.4e} h_solid {:.4e} unknowns {} residual {:.2e}",
                    r.level, r.h_omega, r.h_solid, r.n_unknowns, r.relative_residual
                )
            })?;
            let mut w = output(&out)?;
            write_convergence_csv(&records, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                FdlmError::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
