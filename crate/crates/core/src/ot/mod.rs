//! Entropy-regularized optimal transport between uniformly weighted point
//! sets.

mod exact;
mod gradient;
mod matrix;
mod sinkhorn;

pub use exact::{exact_ot_assignment, exact_ot_bruteforce, exact_ot_oracle, solve_assignment};
pub use gradient::{sinkhorn_gradient, value_of, CostGradient, GradientMode, ValueKind};
pub use matrix::{
    build_cost_matrix, cost_from_points, entropy, marginal_residual, CostMatrix, CouplingMatrix,
};
pub use sinkhorn::{sinkhorn, CostNormalization, SinkhornConfig, SinkhornSolution};
