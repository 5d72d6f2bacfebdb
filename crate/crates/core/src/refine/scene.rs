use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{DepthImage, Intrinsics, RigidTransform};

/// Analytic surfaces, expressed in frame A (the first camera).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneGeometry {
    /// A single plane, slightly tilted, crossing the optical axis at 5 m.
    Plane,
    /// A ground plane 1.5 m below the camera and a wall at 12 m.
    TwoPlanes,
    /// A handful of seeded axis-aligned boxes in front of a wall at 10 m.
    RandomBoxes,
}

pub const PLANE_NORMAL: [f64; 3] = [0.0, -0.25, 1.0];
pub const PLANE_AXIS_DEPTH: f64 = 5.0;
const MAX_TRANSLATION: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub geometry: SceneGeometry,
    pub intrinsics: Intrinsics,
    /// Maps frame A into the frame of the second camera.
    pub true_pose: RigidTransform,
    pub width: usize,
    pub height: usize,
    pub noise_std: f64,
}

impl SyntheticScene {
    /// Noise-free scene with a 90° horizontal field of view, observed twice
    /// from the same pose.
    pub fn new(geometry: SceneGeometry, width: usize, height: usize) -> Self {
        let f = 0.5 * width as f64;
        Self {
            geometry,
            intrinsics: Intrinsics {
                fx: f,
                fy: f,
                cx: 0.5 * (width as f64 - 1.0),
                cy: 0.5 * (height as f64 - 1.0),
            },
            true_pose: RigidTransform::identity(),
            width,
            height,
            noise_std: 0.0,
        }
    }

    pub fn with_pose(self, true_pose: RigidTransform) -> Self {
        Self { true_pose, ..self }
    }

    pub fn with_noise(self, noise_std: f64) -> Self {
        Self { noise_std, ..self }
    }
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    /// `normal · x = offset`
    Plane { normal: Vector3<f64>, offset: f64 },
    Aabb { min: Vector3<f64>, max: Vector3<f64> },
}

impl Surface {
    /// Smallest positive ray parameter `s` with `origin + s·dir` on the surface.
    fn hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Surface::Plane { normal, offset } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let s = (offset - normal.dot(origin)) / denom;
                (s > 0.0).then_some(s)
            }
            Surface::Aabb { min, max } => {
                let mut near = f64::NEG_INFINITY;
                let mut far = f64::INFINITY;
                for a in 0..3 {
                    if dir[a].abs() < 1e-15 {
                        if origin[a] < min[a] || origin[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (min[a] - origin[a]) / dir[a];
                    let t2 = (max[a] - origin[a]) / dir[a];
                    near = near.max(t1.min(t2));
                    far = far.min(t1.max(t2));
                }
                if near > far || far <= 0.0 {
                    None
                } else if near > 0.0 {
                    Some(near)
                } else {
                    Some(far)
                }
            }
        }
    }
}

fn surfaces(geometry: SceneGeometry, rng: &mut ChaCha8Rng) -> Vec<Surface> {
    let plane = |normal: Vector3<f64>, point: Vector3<f64>| {
        let normal = normal.normalize();
        Surface::Plane {
            offset: normal.dot(&point),
            normal,
        }
    };
    match geometry {
        SceneGeometry::Plane => vec![plane(
            Vector3::from(PLANE_NORMAL),
            Vector3::new(0.0, 0.0, PLANE_AXIS_DEPTH),
        )],
        SceneGeometry::TwoPlanes => vec![
            plane(Vector3::y(), Vector3::new(0.0, 1.5, 0.0)),
            plane(Vector3::z(), Vector3::new(0.0, 0.0, 12.0)),
        ],
        SceneGeometry::RandomBoxes => {
            let mut out = vec![plane(Vector3::z(), Vector3::new(0.0, 0.0, 10.0))];
            let count = rng.random_range(3..=5);
            for _ in 0..count {
                let center = Vector3::new(
                    rng.random_range(-2.5..2.5),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(4.0..7.0),
                );
                let half = Vector3::new(
                    rng.random_range(0.3..0.8),
                    rng.random_range(0.3..0.8),
                    rng.random_range(0.3..0.8),
                );
                out.push(Surface::Aabb {
                    min: center - half,
                    max: center + half,
                });
            }
            out
        }
    }
}

/// Z-buffer render of the surfaces from a camera whose frame is reached
/// from frame A by `pose`.
fn render(
    scene: &SyntheticScene,
    surfaces: &[Surface],
    pose: &RigidTransform,
    noise: &mut Option<(Normal<f64>, ChaCha8Rng)>,
) -> Result<DepthImage> {
    let r_t = pose.rotation().transpose();
    let origin = -(r_t * pose.translation());
    let mut values = Vec::with_capacity(scene.width * scene.height);
    for v in 0..scene.height {
        for u in 0..scene.width {
            // Direction has unit z in the rendering camera, so the ray
            // parameter is the depth.
            let dir = r_t * scene.intrinsics.ray(u as f64, v as f64);
            let depth = surfaces
                .iter()
                .filter_map(|s| s.hit(&origin, &dir))
                .fold(f64::INFINITY, f64::min);
            if !depth.is_finite() {
                return Err(Error::InvalidScene(format!(
                    "pixel ({u}, {v}) sees no surface"
                )));
            }
            let depth = match noise {
                Some((dist, rng)) => (depth + dist.sample(rng)).max(1e-3),
                None => depth,
            };
            values.push(depth);
        }
    }
    DepthImage::new(scene.width, scene.height, values)
}

/// Renders the scene from frame A (identity) and from `true_pose`.
/// Deterministic per seed.
pub fn generate_scene(
    scene: &SyntheticScene,
    seed: u64,
) -> Result<(DepthImage, DepthImage, RigidTransform)> {
    if scene.width == 0 || scene.height == 0 {
        return Err(Error::InvalidScene("image size must be nonzero".into()));
    }
    if scene.true_pose.translation().norm() > MAX_TRANSLATION {
        return Err(Error::InvalidScene(format!(
            "true pose translation exceeds {MAX_TRANSLATION} m"
        )));
    }
    if !(scene.noise_std >= 0.0) {
        return Err(Error::InvalidScene("noise_std must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let surfaces = surfaces(scene.geometry, &mut rng);
    let mut noise = if scene.noise_std > 0.0 {
        let dist = Normal::new(0.0, scene.noise_std)
            .map_err(|e| Error::InvalidScene(e.to_string()))?;
        Some((dist, ChaCha8Rng::seed_from_u64(seed.wrapping_add(1))))
    } else {
        None
    };
    let depth_a = render(scene, &surfaces, &RigidTransform::identity(), &mut noise)?;
    let depth_b = render(scene, &surfaces, &scene.true_pose, &mut noise)?;
    Ok((depth_a, depth_b, scene.true_pose.clone()))
}
