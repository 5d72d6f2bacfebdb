use std::path::PathBuf;

use clap::Args;
use wcl_core::ot::value_of;
use wcl_core::{build_cost_matrix, sinkhorn};

use super::{Normalize, Report, SolverArgs};
use crate::error::CliResult;
use crate::io::{format_coupling, read_cloud, write_text};

/// Transport cost between two point-cloud files.
#[derive(Debug, Args)]
pub struct ComputeArgs {
    pub cloud_a: PathBuf,
    pub cloud_b: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the coupling as CSV, one row per point of the first cloud.
    #[arg(long)]
    pub dump_coupling: Option<PathBuf>,
}

pub fn run(args: &ComputeArgs) -> CliResult<Report> {
    let solver = args.solver.resolve(Normalize::Max);
    // Both files are taken to be in one shared frame.
    let a = read_cloud(&args.cloud_a, "shared")?;
    let b = read_cloud(&args.cloud_b, "shared")?;
    let cost = build_cost_matrix(&a, &b)?;
    let solution = sinkhorn(&cost, &solver.config())?;
    if let Some(path) = &args.dump_coupling {
        write_text(path, &format_coupling(&solution.coupling))?;
    }

    let mut report = Report::default();
    report.put("points_a", a.len());
    report.put("points_b", b.len());
    solver.record(&mut report);
    report.put("value", value_of(&solution, solver.value.to_core()));
    report.put("primal_cost", solution.primal_cost);
    report.put("regularized_value", solution.regularized_value);
    report.put("marginal_residual", solution.marginal_residual);
    report.put("iterations_run", solution.iterations_run);
    report.put("cost_scale", solution.cost_scale);
    report.put("effective_epsilon", solution.effective_epsilon);
    Ok(report)
}
