use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nalgebra::Vector3;
use wcl_core::refine::{generate_scene, refine, RefineConfig, SceneGeometry, SyntheticScene};
use wcl_core::{GridSampler, RigidTransform, WclConfig};

use super::{Normalize, Report, SolverArgs};
use crate::error::CliResult;
use crate::io::{format_trace, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneArg {
    Plane,
    TwoPlanes,
    RandomBoxes,
}

impl SceneArg {
    pub fn geometry(self) -> SceneGeometry {
        match self {
            SceneArg::Plane => SceneGeometry::Plane,
            SceneArg::TwoPlanes => SceneGeometry::TwoPlanes,
            SceneArg::RandomBoxes => SceneGeometry::RandomBoxes,
        }
    }
}

/// Recovers a perturbed pose on a synthetic scene by descending the loss.
#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long, value_enum, default_value_t = SceneArg::Plane)]
    pub scene: SceneArg,
    /// Translation error of the starting pose along x, in meters.
    #[arg(long, default_value_t = 0.3)]
    pub perturb: f64,
    /// Rotation error of the starting pose about y, in degrees.
    #[arg(long, default_value_t = 0.0)]
    pub rotate_deg: f64,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// Scene layout and noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of depth noise, in meters.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.02)]
    pub step_size: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub threshold: f64,
    /// Also descend on the depth values.
    #[arg(long)]
    pub optimize_depth: bool,
    /// Take every step at full size, without halving.
    #[arg(long)]
    pub no_backtracking: bool,
    #[arg(long, default_value_t = 16)]
    pub nc: usize,
    #[arg(long, default_value_t = 4)]
    pub nr: usize,
    /// Write the loss trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

pub fn run(args: &RefineArgs) -> CliResult<Report> {
    let solver = args.solver.resolve(Normalize::None);
    let scene = SyntheticScene::new(args.scene.geometry(), args.width, args.height)
        .with_noise(args.noise);
    let (depth_a, depth_b, truth) = generate_scene(&scene, args.seed)?;
    let init = RigidTransform::from_axis_angle(
        Vector3::new(0.0, args.rotate_deg.to_radians(), 0.0),
        Vector3::new(args.perturb, 0.0, 0.0),
    );
    let cfg = RefineConfig {
        step_size: args.step_size,
        max_steps: args.steps,
        convergence_threshold: args.threshold,
        optimize_depth: args.optimize_depth,
        backtracking: !args.no_backtracking,
        sampler: GridSampler::new(args.nc, args.nr),
        wcl: WclConfig {
            sinkhorn: solver.config(),
            value_kind: solver.value.to_core(),
            ..WclConfig::default()
        },
        reference_pose: Some(truth),
        ..RefineConfig::default()
    };
    let outcome = refine(&depth_a, &depth_b, &scene.intrinsics, &init, &cfg)?;
    if let Some(path) = &args.trace {
        write_text(path, &format_trace(&outcome.trace))?;
    }

    let first = outcome.trace[0];
    let last = *outcome.trace.last().expect("trace starts with the initial row");
    let mut report = Report::default();
    report.put("scene", args.scene.to_possible_value().expect("no skipped variants").get_name());
    report.put("width", args.width);
    report.put("height", args.height);
    solver.record(&mut report);
    report.put("steps_run", last.step);
    report.put("converged", outcome.converged);
    report.put("initial_loss", first.loss);
    report.put("final_loss", last.loss);
    report.put("initial_pose_error", first.pose_error);
    report.put("final_pose_error", last.pose_error);
    report.put("final_rotation_error_deg", outcome.pose.rotation_angle().to_degrees());
    Ok(report)
}
