use std::time::Instant;

use clap::Args;
use wcl_core::ot::cost_from_points;
use wcl_core::{sinkhorn, SinkhornConfig};

use super::{instance_rng, random_points, Normalize, Report};
use crate::error::CliResult;

/// Times the solver on random clouds of increasing size.
#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [64, 256, 1024, 4096])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = Normalize::Max)]
    pub normalize: Normalize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Timed runs per size; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

pub fn run(args: &BenchArgs) -> CliResult<Report> {
    let cfg = SinkhornConfig {
        epsilon: args.epsilon,
        max_iterations: args.iterations,
        cost_normalization: args.normalize.to_core(),
        ..SinkhornConfig::default()
    };
    cfg.validate()?;
    let mut report = Report::default();
    report.put("threads", rayon::current_num_threads());
    report.put("iterations", args.iterations);
    for &n in &args.sizes {
        let mut rng = instance_rng(args.seed, n as u64);
        let cost = cost_from_points(&random_points(&mut rng, n), &random_points(&mut rng, n))?;
        let mut best = f64::INFINITY;
        for _ in 0..args.repeats.max(1) {
            let start = Instant::now();
            let solution = sinkhorn(&cost, &cfg)?;
            best = best.min(start.elapsed().as_secs_f64());
            std::hint::black_box(solution);
        }
        report.put(&format!("seconds@{n}"), best);
        report.put(&format!("points2_per_sec@{n}"), (n * n) as f64 / best);
    }
    Ok(report)
}
