//! Pinhole projection and software depth rasterization.
//!
//! Conventions: camera frame is OpenCV-style (x right, y down, z forward),
//! depths are along camera z in millimetres, and pixel (i, j) is sampled at
//! its centre (i + 0.5, j + 0.5). A depth value of 0 means "no surface".

mod io;
mod zbuffer;

pub use io::{
    read_depth_png, read_raw_f32, write_depth_png, write_raw_f32, DEFAULT_DEPTH_SCALE,
};
pub use zbuffer::{rasterize_depth, rasterize_depth_scene};

use crate::geometry::SurfaceSamples;
use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

/// Depth below which a point counts as behind the camera, mm.
pub const MIN_DEPTH: f64 = 1e-9;

/// Near clipping plane of the rasterizer, mm.
pub const NEAR_PLANE: f64 = 0.1;

/// Errors from camera, pose, and depth-map handling.
#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid camera intrinsics: {0}")]
    BadIntrinsics(&'static str),
    #[error("rotation is not orthonormal with det +1: max deviation {max_deviation}")]
    InvalidRotation { max_deviation: f64 },
    #[error("depth map is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("visibility eps must be > 0, got {0}")]
    BadEps(f64),
    #[error("depth value at ({x}, {y}) is {value}, expected finite and >= 0")]
    BadDepthValue { x: u32, y: u32, value: f64 },
    #[error("depth scale must be positive and finite, got {0}")]
    BadDepthScale(f64),
    #[error("file too short: expected {expected} bytes after header, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("not a 16-bit grayscale PNG")]
    NotGray16Png,
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Pinhole camera intrinsics plus image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    /// Validates `fx, fy > 0`, finite centre, and a non-empty image.
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, RasterError> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(RasterError::BadIntrinsics("focal lengths must be positive"));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(RasterError::BadIntrinsics("principal point must be finite"));
        }
        if width == 0 || height == 0 {
            return Err(RasterError::BadIntrinsics("image size must be at least 1x1"));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Builds intrinsics from a row-major 3x3 K matrix (BOP `cam_K` layout).
    pub fn from_k(k: &[f64; 9], width: u32, height: u32) -> Result<Self, RasterError> {
        CameraIntrinsics::new(k[0], k[4], k[2], k[5], width, height)
    }

    /// The 3x3 K matrix.
    pub fn k_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Rigid model-to-camera transform: rotation plus translation in mm.
///
/// Construction validates orthonormality, and compositions preserve it, so a
/// `Pose` value is always a proper rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    /// Validates that `rotation` is orthonormal with determinant +1 within
    /// 1e-6 (max absolute deviation of RᵀR from I).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, RasterError> {
        let gram = rotation.transpose() * rotation;
        let mut max_deviation = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                max_deviation = max_deviation.max((gram[(i, j)] - target).abs());
            }
        }
        if rotation.determinant() < 0.0 {
            max_deviation = max_deviation.max(2.0);
        }
        if max_deviation > 1e-6 || !translation.iter().all(|c| c.is_finite()) {
            return Err(RasterError::InvalidRotation { max_deviation });
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pure translation, identity rotation.
    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about `axis` by `angle` radians, no translation.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let rotation =
            nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Pose {
            rotation: rotation.into_inner(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ rhs`: applies `rhs` first, then `self`.
    pub fn compose(&self, rhs: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// A projected point: continuous pixel coordinates plus camera depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
    /// Depth along camera z, mm.
    pub z: f64,
}

/// Projects model-frame points through `pose` and `K`.
///
/// Points with camera depth `z <= MIN_DEPTH` are behind (or on) the camera
/// plane and come back as `None` rather than an error.
pub fn project(
    k: &CameraIntrinsics,
    pose: &Pose,
    points: &[Point3<f64>],
) -> Vec<Option<PixelPoint>> {
    points
        .iter()
        .map(|p| {
            let cam = pose.transform_point(p);
            if cam.z <= MIN_DEPTH {
                return None;
            }
            Some(PixelPoint {
                u: k.fx * cam.x / cam.z + k.cx,
                v: k.fy * cam.y / cam.z + k.cy,
                z: cam.z,
            })
        })
        .collect()
}

/// Per-pixel depth image; 0 marks pixels with no surface.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    pub(crate) values: Vec<f64>,
}

impl DepthMap {
    /// An all-background (zero) map.
    pub fn new(width: u32, height: u32) -> Self {
        DepthMap {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    /// Wraps row-major values, validating that each is finite and `>= 0`.
    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self, RasterError> {
        assert_eq!(
            values.len(),
            width as usize * height as usize,
            "value count must be width*height"
        );
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(RasterError::BadDepthValue {
                    x: (i % width as usize) as u32,
                    y: (i / width as usize) as u32,
                    value: v,
                });
            }
        }
        Ok(DepthMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: f64) {
        debug_assert!(value.is_finite() && value >= 0.0);
        self.values[y as usize * self.width as usize + x as usize] = value;
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of pixels with a surface (value > 0).
    pub fn coverage(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Default visibility tolerance: `max(0.5 mm, 0.002 × diameter)`, sized to
/// absorb rasterization quantization at typical object scales.
pub fn default_visibility_eps(diameter: f64) -> f64 {
    (0.002 * diameter).max(0.5)
}

/// Marks each surface sample visible or hidden against a rendered depth map.
///
/// A sample is visible iff (a) it is in front of the camera and projects
/// inside the image, (b) its depth is within `eps` of the rendered depth at
/// its pixel (`z <= depth + eps`; an uncovered pixel reads 0 and thus hides
/// any sample farther than `eps`), and (c) its normal faces the camera.
/// Occlusion by other objects is handled by rasterizing all meshes into the
/// one depth map passed here.
pub fn visible_mask(
    samples: &SurfaceSamples,
    pose: &Pose,
    k: &CameraIntrinsics,
    depth: &DepthMap,
    eps: f64,
) -> Result<Vec<bool>, RasterError> {
    if !(eps > 0.0) {
        return Err(RasterError::BadEps(eps));
    }
    if depth.width() != k.width || depth.height() != k.height {
        return Err(RasterError::DimensionMismatch {
            want_w: k.width,
            want_h: k.height,
            got_w: depth.width(),
            got_h: depth.height(),
        });
    }
    let mut mask = Vec::with_capacity(samples.len());
    for (point, normal) in samples.points.iter().zip(&samples.normals) {
        let cam = pose.transform_point(point);
        if cam.z <= MIN_DEPTH {
            mask.push(false);
            continue;
        }
        let u = k.fx * cam.x / cam.z + k.cx;
        let v = k.fy * cam.y / cam.z + k.cy;
        if !(u >= 0.0 && u < k.width as f64 && v >= 0.0 && v < k.height as f64) {
            mask.push(false);
            continue;
        }
        let facing = pose.rotate_vector(normal).dot(&cam.coords) < 0.0;
        let unoccluded = cam.z <= depth.get(u as u32, v as u32) + eps;
        mask.push(facing && unoccluded);
    }
    Ok(mask)
}
