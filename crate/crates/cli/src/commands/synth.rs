use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nalgebra::Vector3;
use wcl_core::refine::{generate_scene, SyntheticScene};
use wcl_core::RigidTransform;

use super::refine::SceneArg;
use super::Report;
use crate::error::{CliError, CliResult};
use crate::io::{format_depth_rows, format_intrinsics, format_pgm, format_pose, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DepthFormat {
    Csv,
    Pgm,
}

/// Renders a synthetic depth pair with its intrinsics and true pose.
#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SceneArg::Plane)]
    pub scene: SceneArg,
    #[arg(long, default_value_t = 416)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Translation of the second camera pose, `x,y,z` in meters.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.0])]
    pub translation: Vec<f64>,
    /// Rotation of the second camera pose as an axis-angle vector in degrees.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.0])]
    pub rotation_deg: Vec<f64>,
    #[arg(long, value_enum, default_value_t = DepthFormat::Csv)]
    pub format: DepthFormat,
    /// Meters per gray level when writing PGM.
    #[arg(long, default_value_t = 1e-3)]
    pub pgm_scale: f64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

type Render = Box<dyn Fn(&wcl_core::DepthImage) -> String>;

fn vec3(v: &[f64]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

pub fn run(args: &SynthArgs) -> CliResult<Report> {
    for (name, v) in [("--translation", &args.translation), ("--rotation-deg", &args.rotation_deg)] {
        if v.len() != 3 {
            return Err(CliError::Input(format!("{name} takes x,y,z, got {} values", v.len())));
        }
    }
    let pose = RigidTransform::from_axis_angle(
        vec3(&args.rotation_deg).map(f64::to_radians),
        vec3(&args.translation),
    );
    let scene = SyntheticScene::new(args.scene.geometry(), args.width, args.height)
        .with_pose(pose)
        .with_noise(args.noise);
    let (depth_a, depth_b, truth) = generate_scene(&scene, args.seed)?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let (ext, render): (&str, Render) = match args.format {
        DepthFormat::Csv => ("csv", Box::new(format_depth_rows)),
        DepthFormat::Pgm => {
            let scale = args.pgm_scale;
            ("pgm", Box::new(move |d| format_pgm(d, scale)))
        }
    };
    let path_a = args.out.join(format!("depth_a.{ext}"));
    let path_b = args.out.join(format!("depth_b.{ext}"));
    let path_k = args.out.join("intrinsics.txt");
    let path_t = args.out.join("pose.txt");
    write_text(&path_a, &render(&depth_a))?;
    write_text(&path_b, &render(&depth_b))?;
    write_text(&path_k, &format_intrinsics(&scene.intrinsics))?;
    write_text(&path_t, &format_pose(&truth))?;

    let mut report = Report::default();
    report.put("depth_a", path_a.display());
    report.put("depth_b", path_b.display());
    report.put("intrinsics", path_k.display());
    report.put("pose", path_t.display());
    Ok(report)
}
