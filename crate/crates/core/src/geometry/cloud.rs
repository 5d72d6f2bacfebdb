use nalgebra::Vector3;

use crate::error::{invalid, Result};

/// Ordered 3D points expressed in the camera frame `frame`, lifted from the
/// image labelled `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    frame: String,
    source: String,
    points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(
        frame: impl Into<String>,
        source: impl Into<String>,
        points: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        if let Some(k) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(invalid(format!("point {k} has a non-finite coordinate")));
        }
        Ok(Self {
            frame: frame.into(),
            source: source.into(),
            points,
        })
    }

    pub fn frame(&self) -> &str {
        &self.frame
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Vector3<f64>> {
        self.points
    }
}
