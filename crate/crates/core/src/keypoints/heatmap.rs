//! Gaussian keypoint heatmaps and their 16-bit PNG / raw f32 serialization.

use super::KeypointSet;
use crate::raster::{self, CameraIntrinsics, Pose, RasterError, MIN_DEPTH};
use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use std::path::Path;

/// How overlapping Gaussian lobes are merged into one pixel value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    /// Keep the maximum contribution (the default; peaks stay exact).
    Max,
    /// Sum contributions and clamp to 1.
    SumClamp,
}

/// A single-channel keypoint heatmap with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: u32,
    height: u32,
    values: Vec<f64>,
    sigma: f64,
}

impl Heatmap {
    /// An all-zero heatmap. Panics on zero dimensions or non-positive sigma.
    pub fn zeros(width: u32, height: u32, sigma: f64) -> Self {
        assert!(width >= 1 && height >= 1, "heatmap dimensions must be positive");
        assert!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive and finite");
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
            sigma,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Gaussian standard deviation used when rendering, in heatmap pixels.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        assert!(x < self.width && y < self.height, "heatmap index out of range");
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &v| a.max(v))
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Writes a 16-bit grayscale PNG; each value is stored as
    /// `round(v * 65535)`, so the quantization error is at most `0.5/65535`.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let pixels: Vec<u16> = self
            .values
            .iter()
            .map(|&v| (v * 65535.0).round() as u16)
            .collect();
        let img = ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(self.width, self.height, pixels)
            .expect("buffer length matches dimensions");
        DynamicImage::ImageLuma16(img).save_with_format(path.as_ref(), ImageFormat::Png)?;
        Ok(())
    }

    /// Reads a 16-bit grayscale PNG written by [`Heatmap::write_png`], mapping
    /// stored integers back to `value / 65535`. The file does not carry sigma,
    /// so the caller supplies it.
    pub fn read_png(path: impl AsRef<Path>, sigma: f64) -> Result<Self, RasterError> {
        let img = image::open(path)?;
        let DynamicImage::ImageLuma16(img) = img else {
            return Err(RasterError::NotGray16Png);
        };
        let (width, height) = (img.width(), img.height());
        let values = img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect();
        Ok(Self { width, height, values, sigma })
    }

    /// Writes the exact f64 values as little-endian f32 with a dimension
    /// header (lossy only through the f64 to f32 narrowing).
    pub fn write_raw(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        raster::write_raw_f32(path, self.width, self.height, &self.values)
    }

    pub fn read_raw(path: impl AsRef<Path>, sigma: f64) -> Result<Self, RasterError> {
        let (width, height, values) = raster::read_raw_f32(path)?;
        assert!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive and finite");
        Ok(Self { width, height, values, sigma })
    }
}

/// Renders keypoints as Gaussian lobes with [`CombineMode::Max`].
pub fn render_heatmap(
    keypoints: &KeypointSet,
    pose: &Pose,
    k: &CameraIntrinsics,
    width: u32,
    height: u32,
    sigma: f64,
) -> Heatmap {
    render_heatmap_mode(keypoints, pose, k, width, height, sigma, CombineMode::Max)
}

/// Renders a keypoint set into a `width x height` heatmap.
///
/// Each keypoint is transformed by `pose`, projected with the camera
/// intrinsics, and skipped when it falls behind the camera or outside the
/// camera image. Surviving projections are rescaled from the camera image to
/// heatmap coordinates and splatted as `w * exp(-d^2 / (2 sigma^2))`,
/// truncated at `d^2 > (3 sigma)^2`. `sigma` is measured in heatmap pixels.
///
/// Panics on zero dimensions or non-positive sigma.
pub fn render_heatmap_mode(
    keypoints: &KeypointSet,
    pose: &Pose,
    k: &CameraIntrinsics,
    width: u32,
    height: u32,
    sigma: f64,
    mode: CombineMode,
) -> Heatmap {
    let mut map = Heatmap::zeros(width, height, sigma);
    let sx = width as f64 / k.width as f64;
    let sy = height as f64 / k.height as f64;
    let radius = 3.0 * sigma;
    let r2_max = radius * radius;

    for (point, &weight) in keypoints.points.iter().zip(&keypoints.weights) {
        let cam = pose.transform_point(point);
        if cam.z <= MIN_DEPTH {
            continue;
        }
        let u = k.fx * cam.x / cam.z + k.cx;
        let v = k.fy * cam.y / cam.z + k.cy;
        if !(u >= 0.0 && u < k.width as f64 && v >= 0.0 && v < k.height as f64) {
            continue;
        }
        let (qx, qy) = (u * sx, v * sy);

        // Pixel centers sit at integer + 0.5.
        let x0 = ((qx - radius - 0.5).ceil().max(0.0)) as u32;
        let x1 = ((qx + radius - 0.5).floor().min(width as f64 - 1.0)) as i64;
        let y0 = ((qy - radius - 0.5).ceil().max(0.0)) as u32;
        let y1 = ((qy + radius - 0.5).floor().min(height as f64 - 1.0)) as i64;
        if x1 < x0 as i64 || y1 < y0 as i64 {
            continue;
        }
        for y in y0..=y1 as u32 {
            let dy = (y as f64 + 0.5) - qy;
            for x in x0..=x1 as u32 {
                let dx = (x as f64 + 0.5) - qx;
                let d2 = dx * dx + dy * dy;
                if d2 > r2_max {
                    continue;
                }
                let g = weight * (-d2 / (2.0 * sigma * sigma)).exp();
                let slot = &mut map.values[y as usize * width as usize + x as usize];
                *slot = match mode {
                    CombineMode::Max => slot.max(g),
                    CombineMode::SumClamp => (*slot + g).min(1.0),
                };
            }
        }
    }
    map
}
