use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};

use super::cloud::PointCloud;
use crate::error::{invalid, Result};

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// `p ↦ R p + t`, optionally tagged with the frames it maps between.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    frames: Option<(String, String)>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let drift = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(drift <= ORTHONORMAL_TOLERANCE) {
            return Err(invalid(format!("rotation is not orthonormal (|RᵀR - I| = {drift:e})")));
        }
        if rotation.determinant() <= 0.0 {
            return Err(invalid("rotation has negative determinant"));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(invalid("translation is not finite"));
        }
        Ok(Self {
            rotation,
            translation,
            frames: None,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            frames: None,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            translation,
            ..Self::identity()
        }
    }

    /// Rotation by `|axis_angle|` radians about its direction, then `translation`.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation3::new(axis_angle).into_inner(),
            translation,
            frames: None,
        }
    }

    /// Tags the transform as mapping frame `from` into frame `to`.
    pub fn between(mut self, from: impl Into<String>, to: impl Into<String>) -> Self {
        self.frames = Some((from.into(), to.into()));
        self
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn frames(&self) -> Option<(&str, &str)> {
        self.frames.as_ref().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Left perturbation by a local twist `[ω; ρ]`:
    /// `p ↦ exp([ω]×) (R p + t) + ρ`.
    pub fn retract(&self, twist: &Vector6<f64>) -> Self {
        let omega = Vector3::new(twist[0], twist[1], twist[2]);
        let rho = Vector3::new(twist[3], twist[4], twist[5]);
        let delta = Rotation3::new(omega).into_inner();
        Self {
            rotation: delta * self.rotation,
            translation: delta * self.translation + rho,
            frames: self.frames.clone(),
        }
    }
}

/// Transform applying `first`, then `second`.
pub fn compose(first: &RigidTransform, second: &RigidTransform) -> RigidTransform {
    let frames = match (&first.frames, &second.frames) {
        (Some((a, b)), Some((c, d))) if b == c => Some((a.clone(), d.clone())),
        (Some(f), None) | (None, Some(f)) => Some(f.clone()),
        _ => None,
    };
    RigidTransform {
        rotation: second.rotation * first.rotation,
        translation: second.rotation * first.translation + second.translation,
        frames,
    }
}

/// `(Rᵀ, -Rᵀ t)`
pub fn invert(t: &RigidTransform) -> RigidTransform {
    let rt = t.rotation.transpose();
    RigidTransform {
        rotation: rt,
        translation: -(rt * t.translation),
        frames: t.frames.as_ref().map(|(a, b)| (b.clone(), a.clone())),
    }
}

/// Maps every point of `q` into `target_frame`.
pub fn transform_cloud(q: &PointCloud, t: &RigidTransform, target_frame: &str) -> Result<PointCloud> {
    if let Some((from, to)) = t.frames() {
        if from != q.frame() || to != target_frame {
            return Err(invalid(format!(
                "transform maps {from:?} -> {to:?}, asked to map {:?} -> {target_frame:?}",
                q.frame()
            )));
        }
    }
    let points = q.points().iter().map(|p| t.apply(p)).collect();
    PointCloud::new(target_frame, q.source(), points)
}

/// `[v]×`, so that `skew(a) * b = a × b`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
