//! The two-term consistency loss between observations `A` and `B`:
//!
//! ```text
//! loss = W(Q_A^A, Q_A^B) + W(Q_B^B, Q_B^A)
//! ```
//!
//! where `Q_X^X` is the cloud lifted from image `X` in its own frame and
//! `Q_X^Y` is the cloud of image `Y` moved into frame `X`. `W` is the
//! Sinkhorn value (or the exact transport cost) of the squared-distance cost.

use nalgebra::{Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{
    back_project_with_pixels, invert, transform_cloud, DepthImage, GridSampler, Intrinsics, Pixel,
    PointCloud, RigidTransform,
};
use crate::ot::{
    build_cost_matrix, exact_ot_oracle, sinkhorn, sinkhorn_gradient, SinkhornConfig,
};
pub use crate::ot::{GradientMode, ValueKind};

/// How each cloud pair is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairSolver {
    #[default]
    Sinkhorn,
    /// Unregularized assignment; square pairs only, value only.
    ExactOracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WclConfig {
    pub sinkhorn: SinkhornConfig,
    /// Weight of the loss inside [`plug_objective`].
    pub lambda_w: f64,
    pub value_kind: ValueKind,
    pub gradient_mode: GradientMode,
    pub solver: PairSolver,
    /// Let gradients reach the native cloud of each term (`Q_A^A` in the
    /// first, `Q_B^B` in the second).
    pub grad_native: bool,
    /// Let gradients reach the transformed cloud of each term, and through
    /// it the pose and the other image's depth.
    pub grad_transformed: bool,
}

impl Default for WclConfig {
    fn default() -> Self {
        Self {
            sinkhorn: SinkhornConfig::default(),
            lambda_w: 0.5,
            value_kind: ValueKind::PrimalCost,
            gradient_mode: GradientMode::Unrolled,
            solver: PairSolver::Sinkhorn,
            grad_native: true,
            grad_transformed: true,
        }
    }
}

impl WclConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_w >= 0.0 && self.lambda_w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda_w must be nonnegative, got {}",
                self.lambda_w
            )));
        }
        self.sinkhorn.validate()
    }
}

/// Gradients of the loss. Depth gradients are full `height × width` arrays,
/// zero away from sampled pixels. The pose gradient is with respect to the
/// twist `[ω; ρ]` of [`RigidTransform::retract`] applied to `t_ab`.
#[derive(Debug, Clone, PartialEq)]
pub struct WclGradients {
    pub cloud_a: Vec<Vector3<f64>>,
    pub cloud_b: Vec<Vector3<f64>>,
    pub depth_a: Vec<f64>,
    pub depth_b: Vec<f64>,
    pub pose: Vector6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WclResult {
    pub loss: f64,
    /// `W(Q_A^A, Q_A^B)`
    pub term_a: f64,
    /// `W(Q_B^B, Q_B^A)`
    pub term_b: f64,
    pub grads: Option<WclGradients>,
    pub points_a: usize,
    pub points_b: usize,
}

/// Value and point gradients of one term.
#[derive(Debug, Clone)]
pub struct PairGradient {
    pub value: f64,
    pub grad_x: Vec<Vector3<f64>>,
    pub grad_y: Vec<Vector3<f64>>,
}

/// Transport value between two clouds in the same frame.
pub fn wcl_pair(qx: &PointCloud, qy: &PointCloud, cfg: &WclConfig) -> Result<f64> {
    cfg.validate()?;
    let cost = build_cost_matrix(qx, qy)?;
    match cfg.solver {
        PairSolver::ExactOracle => Ok(exact_ot_oracle(&cost)?.0),
        PairSolver::Sinkhorn => {
            let solution = sinkhorn(&cost, &cfg.sinkhorn)?;
            Ok(crate::ot::value_of(&solution, cfg.value_kind))
        }
    }
}

/// Value of one term with gradients for both clouds.
pub fn wcl_pair_gradient(qx: &PointCloud, qy: &PointCloud, cfg: &WclConfig) -> Result<PairGradient> {
    cfg.validate()?;
    if cfg.solver == PairSolver::ExactOracle {
        return Err(Error::UnsupportedInstance(
            "the exact oracle is not differentiable; use the Sinkhorn solver".into(),
        ));
    }
    let cost = build_cost_matrix(qx, qy)?;
    let grad = sinkhorn_gradient(&cost, &cfg.sinkhorn, cfg.value_kind, cfg.gradient_mode)?;
    let (grad_x, grad_y) = grad.point_gradients(qx.points(), qy.points());
    Ok(PairGradient {
        value: grad.value,
        grad_x,
        grad_y,
    })
}

struct Observation {
    cloud: PointCloud,
    pixels: Vec<Pixel>,
}

struct Clouds {
    a: Observation,
    b: Observation,
    /// `Q_A^B`: cloud B moved into frame A.
    b_in_a: PointCloud,
    /// `Q_B^A`: cloud A moved into frame B.
    a_in_b: PointCloud,
}

fn lift(
    depth_a: &DepthImage,
    depth_b: &DepthImage,
    k: &Intrinsics,
    t_ab: &RigidTransform,
    sampler: &GridSampler,
) -> Result<Clouds> {
    let (cloud_a, pixels_a) = back_project_with_pixels(depth_a, k, sampler, "A")?;
    let (cloud_b, pixels_b) = back_project_with_pixels(depth_b, k, sampler, "B")?;
    let t_ba = invert(t_ab);
    Ok(Clouds {
        b_in_a: transform_cloud(&cloud_b, &t_ba, "A")?,
        a_in_b: transform_cloud(&cloud_a, t_ab, "B")?,
        a: Observation {
            cloud: cloud_a,
            pixels: pixels_a,
        },
        b: Observation {
            cloud: cloud_b,
            pixels: pixels_b,
        },
    })
}

/// Loss between two depth observations related by `t_ab` (frame A into
/// frame B). `lambda_w` is not applied here.
pub fn wcl_total(
    depth_a: &DepthImage,
    depth_b: &DepthImage,
    k: &Intrinsics,
    t_ab: &RigidTransform,
    sampler: &GridSampler,
    cfg: &WclConfig,
) -> Result<WclResult> {
    let clouds = lift(depth_a, depth_b, k, t_ab, sampler)?;
    let term_a = wcl_pair(&clouds.a.cloud, &clouds.b_in_a, cfg)?;
    let term_b = wcl_pair(&clouds.b.cloud, &clouds.a_in_b, cfg)?;
    Ok(WclResult {
        loss: term_a + term_b,
        term_a,
        term_b,
        grads: None,
        points_a: clouds.a.cloud.len(),
        points_b: clouds.b.cloud.len(),
    })
}

/// [`wcl_total`] with gradients for both clouds, both depth maps and the
/// pose.
pub fn wcl_gradient(
    depth_a: &DepthImage,
    depth_b: &DepthImage,
    k: &Intrinsics,
    t_ab: &RigidTransform,
    sampler: &GridSampler,
    cfg: &WclConfig,
) -> Result<WclResult> {
    let clouds = lift(depth_a, depth_b, k, t_ab, sampler)?;
    let first = wcl_pair_gradient(&clouds.a.cloud, &clouds.b_in_a, cfg)?;
    let second = wcl_pair_gradient(&clouds.b.cloud, &clouds.a_in_b, cfg)?;

    let r_ab = t_ab.rotation();
    let mut cloud_a = vec![Vector3::zeros(); clouds.a.cloud.len()];
    let mut cloud_b = vec![Vector3::zeros(); clouds.b.cloud.len()];
    let mut omega = Vector3::zeros();
    let mut rho = Vector3::zeros();

    if cfg.grad_native {
        for (g, d) in cloud_a.iter_mut().zip(&first.grad_x) {
            *g += d;
        }
        for (g, d) in cloud_b.iter_mut().zip(&second.grad_x) {
            *g += d;
        }
    }
    if cfg.grad_transformed {
        // Q_B^A = R_ab Q_A^A + t_ab, perturbed on the left by the twist.
        for ((g, y), d) in cloud_a
            .iter_mut()
            .zip(clouds.a_in_b.points())
            .zip(&second.grad_y)
        {
            *g += r_ab.transpose() * d;
            rho += d;
            omega += y.cross(d);
        }
        // Q_A^B = t_ba(Q_B^B) with t_ba = t_ab⁻¹, so the twist enters inverted.
        for ((g, q), d) in cloud_b
            .iter_mut()
            .zip(clouds.b.cloud.points())
            .zip(&first.grad_y)
        {
            let pulled = r_ab * d;
            *g += pulled;
            rho -= pulled;
            omega -= q.cross(&pulled);
        }
    }

    let depth_grad = |depth: &DepthImage, obs: &Observation, grads: &[Vector3<f64>]| {
        let mut out = vec![0.0; depth.width() * depth.height()];
        for (px, g) in obs.pixels.iter().zip(grads) {
            out[px.v * depth.width() + px.u] += k.ray(px.u as f64, px.v as f64).dot(g);
        }
        out
    };
    let grads = WclGradients {
        depth_a: depth_grad(depth_a, &clouds.a, &cloud_a),
        depth_b: depth_grad(depth_b, &clouds.b, &cloud_b),
        cloud_a,
        cloud_b,
        pose: Vector6::new(omega.x, omega.y, omega.z, rho.x, rho.y, rho.z),
    };
    Ok(WclResult {
        loss: first.value + second.value,
        term_a: first.value,
        term_b: second.value,
        grads: Some(grads),
        points_a: clouds.a.cloud.len(),
        points_b: clouds.b.cloud.len(),
    })
}

/// `l_origin + λ_w · loss`
pub fn plug_objective(l_origin: f64, wcl: &WclResult, cfg: &WclConfig) -> f64 {
    if cfg.lambda_w == 0.0 || wcl.loss == 0.0 {
        return l_origin;
    }
    l_origin + cfg.lambda_w * wcl.loss
}
