//! Depth-map serialization: 16-bit grayscale PNG and raw little-endian f32.

use super::{DepthMap, RasterError};
use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Default PNG depth scale, mm per stored unit (`stored = depth / scale`).
pub const DEFAULT_DEPTH_SCALE: f64 = 0.1;

/// Writes a depth map as 16-bit grayscale PNG; stored values are
/// `round(depth / scale)`, saturating at 65535.
pub fn write_depth_png(
    path: impl AsRef<Path>,
    depth: &DepthMap,
    scale: f64,
) -> Result<(), RasterError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(RasterError::BadDepthScale(scale));
    }
    let pixels: Vec<u16> = depth
        .values()
        .iter()
        .map(|&v| (v / scale).round().clamp(0.0, 65535.0) as u16)
        .collect();
    let buffer = ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(depth.width(), depth.height(), pixels)
        .expect("pixel count matches dimensions");
    DynamicImage::ImageLuma16(buffer).save_with_format(path.as_ref(), ImageFormat::Png)?;
    Ok(())
}

/// Reads a 16-bit grayscale PNG as a depth map (`depth = stored * scale`).
pub fn read_depth_png(path: impl AsRef<Path>, scale: f64) -> Result<DepthMap, RasterError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(RasterError::BadDepthScale(scale));
    }
    let image = image::open(path.as_ref())?;
    let DynamicImage::ImageLuma16(buffer) = image else {
        return Err(RasterError::NotGray16Png);
    };
    let (width, height) = buffer.dimensions();
    let values: Vec<f64> = buffer.into_raw().iter().map(|&v| v as f64 * scale).collect();
    DepthMap::from_values(width, height, values)
}

/// Writes the raw float format: two little-endian u32 dims, then row-major
/// little-endian f32 values.
pub fn write_raw_f32(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
    values: &[f64],
) -> Result<(), RasterError> {
    assert_eq!(values.len(), width as usize * height as usize);
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    w.write_all(&width.to_le_bytes())?;
    w.write_all(&height.to_le_bytes())?;
    for &v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the raw float format written by [`write_raw_f32`].
pub fn read_raw_f32(path: impl AsRef<Path>) -> Result<(u32, u32, Vec<f64>), RasterError> {
    let file = File::open(path.as_ref())?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 8];
    r.read_exact(&mut header).map_err(|_| RasterError::Truncated {
        expected: 8,
        found: 0,
    })?;
    let width = u32::from_le_bytes(header[..4].try_into().unwrap());
    let height = u32::from_le_bytes(header[4..].try_into().unwrap());
    let count = width as usize * height as usize;
    let mut data = vec![0u8; count * 4];
    r.read_exact(&mut data).map_err(|_| RasterError::Truncated {
        expected: count * 4,
        found: 0,
    })?;
    let values: Vec<f64> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((width, height, values))
}
