//! Pinhole camera geometry: depth back-projection, grid sampling and rigid
//! transforms between camera frames.

mod camera;
mod cloud;
mod transform;

pub use camera::{
    back_project, back_project_with_pixels, draw_offsets, DepthImage, GridSampler, Intrinsics,
    Pixel,
};
pub use cloud::PointCloud;
pub use transform::{compose, invert, skew, transform_cloud, RigidTransform};
