use std::path::{Path, PathBuf};

use clap::Args;
use wcl_core::{draw_offsets, plug_objective, wcl_total, GridSampler, WclConfig};

use super::{parse_manifest_value, Normalize, Report, Solver, SolverArgs, Value};
use crate::error::CliResult;
use crate::io::{read_depth, read_intrinsics, read_pose};
use crate::manifest::RunManifest;

/// Consistency loss between two depth maps related by a pose.
#[derive(Debug, Args)]
pub struct WclArgs {
    pub depth_a: PathBuf,
    pub depth_b: PathBuf,
    /// Key-value file with fx, fy, cx, cy.
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Key-value file with the rotation and translation taking frame A to B.
    #[arg(long)]
    pub pose: PathBuf,
    /// Column stride of the sampling grid.
    #[arg(long, default_value_t = 16)]
    pub nc: usize,
    /// Row stride of the sampling grid.
    #[arg(long, default_value_t = 4)]
    pub nr: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_w: f64,
    /// Base objective the weighted loss is added to.
    #[arg(long, default_value_t = 0.0)]
    pub l_origin: f64,
    /// Draw the grid offsets from this seed; without it both offsets are 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Meters per gray level for PGM depth maps.
    #[arg(long, default_value_t = 1e-3)]
    pub pgm_scale: f64,
    #[arg(long, default_value = "wcl-manifest.txt")]
    pub manifest: PathBuf,
    #[arg(long)]
    pub no_manifest: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Resolved inputs and settings of one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct WclRun {
    pub depth_a: PathBuf,
    pub depth_b: PathBuf,
    pub intrinsics: PathBuf,
    pub pose: PathBuf,
    pub solver: Solver,
    pub nc: usize,
    pub nr: usize,
    pub lambda_w: f64,
    pub l_origin: f64,
    pub seed: Option<u64>,
    pub pgm_scale: f64,
}

impl WclRun {
    pub fn from_args(args: &WclArgs) -> Self {
        Self {
            depth_a: args.depth_a.clone(),
            depth_b: args.depth_b.clone(),
            intrinsics: args.intrinsics.clone(),
            pose: args.pose.clone(),
            solver: args.solver.resolve(Normalize::None),
            nc: args.nc,
            nr: args.nr,
            lambda_w: args.lambda_w,
            l_origin: args.l_origin,
            seed: args.seed,
            pgm_scale: args.pgm_scale,
        }
    }

    fn sampler(&self) -> CliResult<GridSampler> {
        let base = GridSampler::new(self.nc, self.nr);
        let sampler = match self.seed {
            Some(seed) => draw_offsets(&base.with_seed(seed))?,
            None => base,
        };
        sampler.validate()?;
        Ok(sampler)
    }

    pub fn execute(&self) -> CliResult<Report> {
        let depth_a = read_depth(&self.depth_a, self.pgm_scale)?;
        let depth_b = read_depth(&self.depth_b, self.pgm_scale)?;
        let k = read_intrinsics(&self.intrinsics)?;
        let pose = read_pose(&self.pose)?;
        let sampler = self.sampler()?;
        let cfg = WclConfig {
            sinkhorn: self.solver.config(),
            lambda_w: self.lambda_w,
            value_kind: self.solver.value.to_core(),
            ..WclConfig::default()
        };
        cfg.validate()?;
        let result = wcl_total(&depth_a, &depth_b, &k, &pose, &sampler, &cfg)?;

        let mut report = Report::default();
        report.put("width", depth_a.width());
        report.put("height", depth_a.height());
        report.put("nc", sampler.stride_cols);
        report.put("nr", sampler.stride_rows);
        report.put("offset_cols", sampler.offset_cols);
        report.put("offset_rows", sampler.offset_rows);
        report.put("lattice_size", sampler.lattice_size(depth_a.width(), depth_a.height()));
        report.put("points_a", result.points_a);
        report.put("points_b", result.points_b);
        self.solver.record(&mut report);
        report.put("lambda_w", self.lambda_w);
        report.put("term_a", result.term_a);
        report.put("term_b", result.term_b);
        report.put("loss", result.loss);
        report.put("weighted_loss", self.lambda_w * result.loss);
        report.put("objective", plug_objective(self.l_origin, &result, &cfg));
        Ok(report)
    }

    pub fn to_manifest(&self) -> CliResult<RunManifest> {
        let mut m = RunManifest::new("wcl");
        m.set_input("depth_a", &self.depth_a)?;
        m.set_input("depth_b", &self.depth_b)?;
        m.set_input("intrinsics", &self.intrinsics)?;
        m.set_input("pose", &self.pose)?;
        let mut settings = Report::default();
        self.solver.record(&mut settings);
        for (k, v) in settings.entries() {
            m.set(k, v);
        }
        let sampler = self.sampler()?;
        m.set("nc", self.nc);
        m.set("nr", self.nr);
        m.set("offset_cols", sampler.offset_cols);
        m.set("offset_rows", sampler.offset_rows);
        m.set("seed", self.seed.map_or("none".to_string(), |s| s.to_string()));
        m.set("lambda_w", self.lambda_w);
        m.set("l_origin", self.l_origin);
        m.set("pgm_scale", self.pgm_scale);
        Ok(m)
    }

    /// Rebuilds the run, refusing inputs whose contents changed.
    pub fn from_manifest(m: &RunManifest) -> CliResult<Self> {
        let num = |key: &str| -> CliResult<f64> { parse_manifest_value(key, m.require(key)?) };
        let count = |key: &str| -> CliResult<usize> { parse_manifest_value(key, m.require(key)?) };
        let seed = match m.require("seed")? {
            "none" => None,
            raw => Some(parse_manifest_value("seed", raw)?),
        };
        let run = Self {
            depth_a: m.verify_input("depth_a")?.to_path_buf(),
            depth_b: m.verify_input("depth_b")?.to_path_buf(),
            intrinsics: m.verify_input("intrinsics")?.to_path_buf(),
            pose: m.verify_input("pose")?.to_path_buf(),
            solver: Solver {
                epsilon: num("epsilon")?,
                iterations: count("iterations")?,
                tolerance: num("tolerance")?,
                normalize: Normalize::from_name(m.require("normalize")?)?,
                stabilized: parse_manifest_value("stabilized", m.require("stabilized")?)?,
                value: Value::from_name(m.require("value_kind")?)?,
            },
            nc: count("nc")?,
            nr: count("nr")?,
            lambda_w: num("lambda_w")?,
            l_origin: num("l_origin")?,
            seed,
            pgm_scale: num("pgm_scale")?,
        };
        let sampler = run.sampler()?;
        if (sampler.offset_cols, sampler.offset_rows) != (count("offset_cols")?, count("offset_rows")?) {
            return Err(crate::error::CliError::Input(
                "manifest grid offsets do not follow from its seed".into(),
            ));
        }
        Ok(run)
    }
}

pub fn run(args: &WclArgs) -> CliResult<Report> {
    let run = WclRun::from_args(args);
    let report = run.execute()?;
    if !args.no_manifest {
        run.to_manifest()?.write(&args.manifest)?;
    }
    Ok(report)
}

/// Re-runs the evaluation recorded in a manifest.
#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

pub fn replay(args: &ReplayArgs) -> CliResult<Report> {
    replay_path(&args.manifest)
}

fn replay_path(path: &Path) -> CliResult<Report> {
    let m = RunManifest::read(path)?;
    if m.require("command")? != "wcl" {
        return Err(crate::error::CliError::Input(format!(
            "{}: only wcl runs can be replayed",
            path.display()
        )));
    }
    WclRun::from_manifest(&m)?.execute()
}
