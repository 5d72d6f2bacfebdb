use clap::Args;
use rayon::prelude::*;
use wcl_core::ot::cost_from_points;
use wcl_core::{exact_ot_oracle, sinkhorn, SinkhornConfig};

use super::{instance_rng, random_points, Normalize, Report};
use crate::error::CliResult;

/// Compares converged Sinkhorn costs with the exact optimum on random square
/// instances.
#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Points per cloud.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Relative regularization strengths to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3])]
    pub epsilon: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = Normalize::Max)]
    pub normalize: Normalize,
}

pub fn run(args: &ValidateArgs) -> CliResult<Report> {
    let configs: Vec<SinkhornConfig> = args
        .epsilon
        .iter()
        .map(|&epsilon| SinkhornConfig {
            epsilon,
            max_iterations: args.iterations,
            marginal_tolerance: args.tolerance,
            cost_normalization: args.normalize.to_core(),
            ..SinkhornConfig::default()
        })
        .collect();
    for cfg in &configs {
        cfg.validate()?;
    }

    // errors[trial][k]: relative error at the k-th epsilon.
    let errors = (0..args.trials)
        .into_par_iter()
        .map(|trial| -> CliResult<Vec<f64>> {
            let mut rng = instance_rng(args.seed, trial as u64);
            let x = random_points(&mut rng, args.n);
            let y = random_points(&mut rng, args.n);
            let cost = cost_from_points(&x, &y)?;
            let (exact, _) = exact_ot_oracle(&cost)?;
            configs
                .iter()
                .map(|cfg| {
                    let approx = sinkhorn(&cost, cfg)?.primal_cost;
                    Ok((approx - exact).abs() / exact)
                })
                .collect()
        })
        .collect::<CliResult<Vec<Vec<f64>>>>()?;

    let mut report = Report::default();
    report.put("n", args.n);
    report.put("trials", args.trials);
    report.put("normalize", args.normalize.name());
    let mut monotone = 0;
    for row in &errors {
        if row.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    for (k, eps) in args.epsilon.iter().enumerate() {
        let column = errors.iter().map(|row| row[k]);
        let max = column.clone().fold(0.0, f64::max);
        let mean = column.sum::<f64>() / args.trials.max(1) as f64;
        report.put(&format!("max_relative_error@{eps}"), max);
        report.put(&format!("mean_relative_error@{eps}"), mean);
    }
    report.put("monotone_trials", monotone);
    Ok(report)
}
