//! Desk-scale pose (and depth) recovery by gradient descent on the loss,
//! plus the synthetic scenes it runs on.

mod optimize;
mod scene;

pub use optimize::{refine, RefineConfig, RefineOutcome, TraceRow};
pub use scene::{generate_scene, SceneGeometry, SyntheticScene};
