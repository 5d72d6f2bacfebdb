pub mod bench;
pub mod compute;
pub mod refine;
pub mod synth;
pub mod validate;
pub mod wcl;

use std::fmt::Display;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::Vector3;
use wcl_core::{CostNormalization, SinkhornConfig, ValueKind};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Normalize {
    None,
    Max,
    Median,
}

impl Normalize {
    pub fn to_core(self) -> CostNormalization {
        match self {
            Normalize::None => CostNormalization::None,
            Normalize::Max => CostNormalization::DivideByMax,
            Normalize::Median => CostNormalization::DivideByMedian,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Normalize::None => "none",
            Normalize::Max => "max",
            Normalize::Median => "median",
        }
    }

    pub fn from_name(s: &str) -> CliResult<Self> {
        Self::from_str(s, false).map_err(|_| CliError::Input(format!("unknown normalization {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Value {
    Primal,
    Regularized,
}

impl Value {
    pub fn to_core(self) -> ValueKind {
        match self {
            Value::Primal => ValueKind::PrimalCost,
            Value::Regularized => ValueKind::RegularizedValue,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Value::Primal => "primal",
            Value::Regularized => "regularized",
        }
    }

    pub fn from_name(s: &str) -> CliResult<Self> {
        Self::from_str(s, false).map_err(|_| CliError::Input(format!("unknown value kind {s:?}")))
    }
}

/// Sinkhorn settings shared by the commands that run the solver.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Regularization strength, relative to the normalized cost.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 30)]
    pub iterations: usize,
    /// Stop early once the marginal residual reaches this value (0 = never).
    #[arg(long, default_value_t = 0.0)]
    pub tolerance: f64,
    /// Cost normalization [default: none for wcl and refine, max otherwise]
    #[arg(long, value_enum)]
    pub normalize: Option<Normalize>,
    /// Log-domain iteration (the default).
    #[arg(long, overrides_with = "no_stabilized")]
    pub stabilized: bool,
    /// Plain scaling iteration.
    #[arg(long, overrides_with = "stabilized")]
    pub no_stabilized: bool,
    #[arg(long, value_enum, default_value_t = Value::Primal)]
    pub value: Value,
}

/// Fully resolved solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solver {
    pub epsilon: f64,
    pub iterations: usize,
    pub tolerance: f64,
    pub normalize: Normalize,
    pub stabilized: bool,
    pub value: Value,
}

impl SolverArgs {
    pub fn resolve(&self, default_normalize: Normalize) -> Solver {
        Solver {
            epsilon: self.epsilon,
            iterations: self.iterations,
            tolerance: self.tolerance,
            normalize: self.normalize.unwrap_or(default_normalize),
            stabilized: !self.no_stabilized,
            value: self.value,
        }
    }
}

impl Solver {
    pub fn config(&self) -> SinkhornConfig {
        SinkhornConfig {
            epsilon: self.epsilon,
            max_iterations: self.iterations,
            marginal_tolerance: self.tolerance,
            stabilized: self.stabilized,
            cost_normalization: self.normalize.to_core(),
        }
    }

    pub fn record(&self, report: &mut Report) {
        report.put("epsilon", self.epsilon);
        report.put("iterations", self.iterations);
        report.put("tolerance", self.tolerance);
        report.put("normalize", self.normalize.name());
        report.put("stabilized", self.stabilized);
        report.put("value_kind", self.value.name());
    }
}

/// Ordered `key = value` lines printed on stdout.
#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn put(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.lines
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn parse_manifest_value<T: std::str::FromStr>(key: &str, raw: &str) -> CliResult<T> {
    raw.parse()
        .map_err(|_| CliError::Input(format!("manifest value for {key:?} is malformed: {raw:?}")))
}

/// Points uniform in the unit cube.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
        .collect()
}

pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index))
}
