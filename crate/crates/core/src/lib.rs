//! Wasserstein consistency loss (WCL) between point clouds lifted from depth
//! maps.
//!
//! The crate is organised bottom-up:
//!
//! - [`ot`]: cost matrices, the Sinkhorn solver in plain and log-sum-exp form,
//!   reverse-mode gradients through the iteration, and an exact assignment
//!   oracle used for validation.
//! - [`geometry`]: pinhole back-projection, strided grid sampling and rigid
//!   transforms.
//! - [`wcl`]: the two-term loss between a pair of depth/pose observations and
//!   its gradients with respect to points, depth values and pose.
//! - [`refine`]: synthetic scenes and a gradient-descent pose refiner driven
//!   by the loss.

pub mod error;
pub mod geometry;
pub mod ot;
pub mod refine;
pub mod wcl;

pub use error::{Error, Result};
pub use geometry::{
    back_project, back_project_with_pixels, draw_offsets, DepthImage, GridSampler, Intrinsics,
    Pixel, PointCloud, RigidTransform,
};
pub use ot::{
    build_cost_matrix, entropy, exact_ot_oracle, marginal_residual, sinkhorn, CostMatrix,
    CostNormalization, CouplingMatrix, SinkhornConfig, SinkhornSolution,
};
pub use wcl::{
    plug_objective, wcl_gradient, wcl_pair, wcl_total, GradientMode, PairSolver, ValueKind,
    WclConfig, WclGradients, WclResult,
};
