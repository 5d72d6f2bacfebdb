use nalgebra::Vector6;

use crate::error::{invalid, Error, Result};
use crate::geometry::{DepthImage, GridSampler, Intrinsics, RigidTransform};
use crate::ot::{CostNormalization, SinkhornConfig};
use crate::wcl::{wcl_gradient, WclConfig};

/// Consecutive loss increases tolerated without backtracking.
const DIVERGENCE_STREAK: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub step_size: f64,
    pub max_steps: usize,
    /// Stop once an accepted step lowers the objective by less than this and
    /// the gradient infinity-norm is at most ten times this.
    pub convergence_threshold: f64,
    pub optimize_pose: bool,
    pub optimize_depth: bool,
    /// Weight of `Σ (D - D_init)²` when depth is optimized.
    pub depth_prior_weight: f64,
    /// Halve the step until the objective does not increase.
    pub backtracking: bool,
    pub max_halvings: usize,
    pub sampler: GridSampler,
    pub wcl: WclConfig,
    /// Ground truth used only for the `pose_error` column of the trace.
    pub reference_pose: Option<RigidTransform>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            step_size: 0.02,
            max_steps: 500,
            convergence_threshold: 1e-10,
            optimize_pose: true,
            optimize_depth: false,
            depth_prior_weight: 1e-3,
            backtracking: true,
            max_halvings: 40,
            sampler: GridSampler::default(),
            wcl: WclConfig {
                sinkhorn: SinkhornConfig {
                    cost_normalization: CostNormalization::None,
                    ..SinkhornConfig::default()
                },
                ..WclConfig::default()
            },
            reference_pose: None,
        }
    }
}

impl RefineConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid("step_size must be positive"));
        }
        if !(self.depth_prior_weight >= 0.0) {
            return Err(invalid("depth_prior_weight must be nonnegative"));
        }
        if !self.optimize_pose && !self.optimize_depth {
            return Err(invalid("nothing to optimize"));
        }
        self.wcl.validate()
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// Objective: the loss plus the depth prior when depth is optimized.
    pub loss: f64,
    pub grad_norm: f64,
    /// Translation error to the reference pose in meters, NaN without one.
    pub pose_error: f64,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub pose: RigidTransform,
    pub depth_a: DepthImage,
    pub depth_b: DepthImage,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

struct State {
    pose: RigidTransform,
    depth_a: DepthImage,
    depth_b: DepthImage,
}

struct Evaluation {
    objective: f64,
    pose_grad: Vector6<f64>,
    depth_a_grad: Vec<f64>,
    depth_b_grad: Vec<f64>,
}

impl Evaluation {
    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.pose_grad
            .iter()
            .copied()
            .chain(self.depth_a_grad.iter().copied())
            .chain(self.depth_b_grad.iter().copied())
    }

    fn norm(&self) -> f64 {
        self.flat().map(|g| g * g).sum::<f64>().sqrt()
    }

    fn inf_norm(&self) -> f64 {
        self.flat().fold(0.0, |m, g| m.max(g.abs()))
    }
}

struct Problem<'a> {
    k: &'a Intrinsics,
    init_a: &'a DepthImage,
    init_b: &'a DepthImage,
    cfg: &'a RefineConfig,
}

impl Problem<'_> {
    fn evaluate(&self, s: &State) -> Result<Evaluation> {
        let cfg = self.cfg;
        let finite = |x: &f64| x.is_finite();
        if !(s.pose.rotation().iter().all(finite) && s.pose.translation().iter().all(finite)) {
            // A runaway step; reported as an infinite objective.
            return Ok(Evaluation {
                objective: f64::INFINITY,
                pose_grad: Vector6::zeros(),
                depth_a_grad: Vec::new(),
                depth_b_grad: Vec::new(),
            });
        }
        let result = wcl_gradient(&s.depth_a, &s.depth_b, self.k, &s.pose, &cfg.sampler, &cfg.wcl)?;
        let grads = result.grads.expect("wcl_gradient fills gradients");
        let mut objective = result.loss;
        let pose_grad = if cfg.optimize_pose {
            grads.pose
        } else {
            Vector6::zeros()
        };
        let (mut depth_a_grad, mut depth_b_grad) = (Vec::new(), Vec::new());
        if cfg.optimize_depth {
            let w = cfg.depth_prior_weight;
            let mut prior = |d: &DepthImage, init: &DepthImage, g: Vec<f64>| {
                g.into_iter()
                    .zip(d.values().iter().zip(init.values()))
                    .map(|(g, (x, x0))| {
                        objective += w * (x - x0) * (x - x0);
                        g + 2.0 * w * (x - x0)
                    })
                    .collect::<Vec<f64>>()
            };
            depth_a_grad = prior(&s.depth_a, self.init_a, grads.depth_a);
            depth_b_grad = prior(&s.depth_b, self.init_b, grads.depth_b);
        }
        Ok(Evaluation {
            objective,
            pose_grad,
            depth_a_grad,
            depth_b_grad,
        })
    }

    fn step(&self, s: &State, e: &Evaluation, alpha: f64) -> Result<State> {
        let pose = if self.cfg.optimize_pose {
            s.pose.retract(&(-alpha * e.pose_grad))
        } else {
            s.pose.clone()
        };
        let descend = |d: &DepthImage, g: &[f64]| -> Result<DepthImage> {
            if g.is_empty() {
                return Ok(d.clone());
            }
            let values = d
                .values()
                .iter()
                .zip(g)
                .map(|(x, g)| if *x > 0.0 { x - alpha * g } else { *x })
                .collect();
            DepthImage::new(d.width(), d.height(), values)
        };
        Ok(State {
            pose,
            depth_a: descend(&s.depth_a, &e.depth_a_grad)?,
            depth_b: descend(&s.depth_b, &e.depth_b_grad)?,
        })
    }

    fn row(&self, step: usize, s: &State, e: &Evaluation) -> TraceRow {
        TraceRow {
            step,
            loss: e.objective,
            grad_norm: e.norm(),
            pose_error: self
                .cfg
                .reference_pose
                .as_ref()
                .map_or(f64::NAN, |r| (s.pose.translation() - r.translation()).norm()),
        }
    }
}

/// Gradient descent on the pose twist (and optionally the depth maps),
/// starting from `t_init`.
pub fn refine(
    depth_a: &DepthImage,
    depth_b: &DepthImage,
    k: &Intrinsics,
    t_init: &RigidTransform,
    cfg: &RefineConfig,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    let problem = Problem {
        k,
        init_a: depth_a,
        init_b: depth_b,
        cfg,
    };
    let mut state = State {
        pose: t_init.clone(),
        depth_a: depth_a.clone(),
        depth_b: depth_b.clone(),
    };
    let mut eval = problem.evaluate(&state)?;
    let mut trace = vec![problem.row(0, &state, &eval)];
    if !eval.objective.is_finite() {
        return Err(Error::Divergence { trace });
    }
    let mut converged = false;
    let mut increases = 0;

    'outer: for step in 1..=cfg.max_steps {
        let mut alpha = cfg.step_size;
        let mut halvings = 0;
        let (next, next_eval) = loop {
            let candidate = problem.step(&state, &eval, alpha)?;
            let candidate_eval = problem.evaluate(&candidate)?;
            let ok = candidate_eval.objective <= eval.objective;
            if ok || !cfg.backtracking {
                break (candidate, candidate_eval);
            }
            halvings += 1;
            if halvings > cfg.max_halvings {
                // No descent left at working precision.
                converged = eval.inf_norm() <= 10.0 * cfg.convergence_threshold;
                break 'outer;
            }
            alpha *= 0.5;
        };

        let decrease = eval.objective - next_eval.objective;
        state = next;
        eval = next_eval;
        trace.push(problem.row(step, &state, &eval));

        if !eval.objective.is_finite() {
            return Err(Error::Divergence { trace });
        }
        if decrease < 0.0 {
            increases += 1;
            if increases >= DIVERGENCE_STREAK {
                return Err(Error::Divergence { trace });
            }
        } else {
            increases = 0;
        }
        if decrease.abs() < cfg.convergence_threshold
            && eval.inf_norm() <= 10.0 * cfg.convergence_threshold
        {
            converged = true;
            break;
        }
    }

    Ok(RefineOutcome {
        pose: state.pose,
        depth_a: state.depth_a,
        depth_b: state.depth_b,
        trace,
        converged,
    })
}
