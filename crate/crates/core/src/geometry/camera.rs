use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cloud::PointCloud;
use crate::error::{invalid, Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(invalid(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(invalid("principal point must be finite"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K⁻¹ (u, v, 1)ᵀ`
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Pixel coordinates of a camera-frame point with `z > 0`.
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Row-major `height × width` depth in meters. Nonpositive entries mark
/// invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("depth image must have nonzero size"));
        }
        if values.len() != width * height {
            return Err(invalid(format!(
                "depth image has {} values, expected {width}x{height}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|d| !d.is_finite()) {
            return Err(invalid(format!(
                "depth at row {} column {} is not finite",
                k / width,
                k % width
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let values = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Depth at column `u`, row `v`.
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v) > 0.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.width, self.height, self.values.iter().map(|&d| f(d)).collect())
    }
}

/// Image position: `u` is the column, `v` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub u: usize,
    pub v: usize,
}

/// Strided lattice over the image: columns `offset_cols + k·stride_cols`,
/// rows `offset_rows + l·stride_rows`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSampler {
    pub stride_cols: usize,
    pub stride_rows: usize,
    pub offset_cols: usize,
    pub offset_rows: usize,
    pub rng_seed: Option<u64>,
}

impl Default for GridSampler {
    fn default() -> Self {
        Self::new(16, 4)
    }
}

impl GridSampler {
    pub fn new(stride_cols: usize, stride_rows: usize) -> Self {
        Self {
            stride_cols,
            stride_rows,
            offset_cols: 0,
            offset_rows: 0,
            rng_seed: None,
        }
    }

    /// Every pixel.
    pub fn full() -> Self {
        Self::new(1, 1)
    }

    pub fn with_offsets(self, offset_cols: usize, offset_rows: usize) -> Self {
        Self {
            offset_cols,
            offset_rows,
            ..self
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self {
            rng_seed: Some(seed),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride_cols == 0 || self.stride_rows == 0 {
            return Err(invalid("grid strides must be positive"));
        }
        if self.offset_cols >= self.stride_cols || self.offset_rows >= self.stride_rows {
            return Err(invalid(format!(
                "grid offsets ({}, {}) must be below strides ({}, {})",
                self.offset_cols, self.offset_rows, self.stride_cols, self.stride_rows
            )));
        }
        Ok(())
    }

    /// Lattice pixels inside a `width × height` image, row-major.
    pub fn pixels(&self, width: usize, height: usize) -> impl Iterator<Item = Pixel> + '_ {
        (self.offset_rows..height)
            .step_by(self.stride_rows)
            .flat_map(move |v| {
                (self.offset_cols..width)
                    .step_by(self.stride_cols)
                    .map(move |u| Pixel { u, v })
            })
    }

    /// Number of lattice pixels before invalid depths are dropped.
    pub fn lattice_size(&self, width: usize, height: usize) -> usize {
        width.saturating_sub(self.offset_cols).div_ceil(self.stride_cols)
            * height.saturating_sub(self.offset_rows).div_ceil(self.stride_rows)
    }
}

/// Redraws both offsets uniformly below their strides from `rng_seed`.
pub fn draw_offsets(sampler: &GridSampler) -> Result<GridSampler> {
    let seed = sampler
        .rng_seed
        .ok_or_else(|| invalid("drawing grid offsets requires an rng seed"))?;
    if sampler.stride_cols == 0 || sampler.stride_rows == 0 {
        return Err(invalid("grid strides must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset_cols = rng.random_range(0..sampler.stride_cols);
    let offset_rows = rng.random_range(0..sampler.stride_rows);
    Ok(sampler.with_offsets(offset_cols, offset_rows))
}

/// Lifts the sampled valid pixels to `D[u,v] · K⁻¹ (u, v, 1)` in frame
/// `frame`.
pub fn back_project(
    depth: &DepthImage,
    k: &Intrinsics,
    sampler: &GridSampler,
    frame: &str,
) -> Result<PointCloud> {
    back_project_with_pixels(depth, k, sampler, frame).map(|(cloud, _)| cloud)
}

/// Like [`back_project`], also returning the pixel behind each point.
pub fn back_project_with_pixels(
    depth: &DepthImage,
    k: &Intrinsics,
    sampler: &GridSampler,
    frame: &str,
) -> Result<(PointCloud, Vec<Pixel>)> {
    sampler.validate()?;
    let pixels: Vec<Pixel> = sampler
        .pixels(depth.width(), depth.height())
        .filter(|p| depth.is_valid(p.u, p.v))
        .collect();
    if pixels.is_empty() {
        return Err(Error::EmptySelection);
    }
    let points = pixels
        .iter()
        .map(|p| k.ray(p.u as f64, p.v as f64) * depth.get(p.u, p.v))
        .collect();
    Ok((PointCloud::new(frame, frame, points)?, pixels))
}
