//! Shared input loading: cameras, poses, and partial config files.

use crate::error::CliError;
use bopkit::{pose_from_row_major, CameraIntrinsics, Pose, SceneCameraEntry};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use std::path::Path;

/// Reads and parses a JSON file, classifying failures as input errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("cannot parse {}: {e}", path.display())))
}

/// Loads a camera file (`cam_K` row-major, `depth_scale`, `width`, `height`).
///
/// The image size is required here: unlike per-image dataset entries there is
/// no surrounding dataset to default from.
pub fn load_camera(path: &Path) -> Result<(CameraIntrinsics, f64), CliError> {
    let entry: SceneCameraEntry = read_json(path)?;
    let (Some(width), Some(height)) = (entry.width, entry.height) else {
        return Err(CliError::Input(format!(
            "{}: camera file needs explicit width and height",
            path.display()
        )));
    };
    let k = entry
        .intrinsics(width, height)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((k, entry.depth_scale))
}

#[derive(Deserialize)]
struct PoseFile {
    #[serde(rename = "cam_R_m2c")]
    cam_r_m2c: Vec<f64>,
    cam_t_m2c: Vec<f64>,
}

/// Loads a model-to-camera pose file (`cam_R_m2c` row-major, `cam_t_m2c`).
pub fn load_pose(path: &Path) -> Result<Pose, CliError> {
    let raw: PoseFile = read_json(path)?;
    pose_from_row_major(&raw.cam_r_m2c, &raw.cam_t_m2c)
        .map_err(|reason| CliError::Input(format!("{}: {reason}", path.display())))
}

/// Loads the optional `--config` file for a command, or the type's default
/// when no path is given. Unknown keys are rejected so typos surface.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        Some(p) => read_json(p),
        None => Ok(T::default()),
    }
}

/// Parses an image size argument of the form `WxH`, e.g. `64x64`.
pub fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH (e.g. 64x64), got {s:?}"))?;
    let parse = |part: &str, name: &str| {
        part.parse::<u32>()
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| format!("{name} must be a positive integer, got {part:?}"))
    };
    Ok((parse(w, "width")?, parse(h, "height")?))
}

/// Validates a float from flags or config against its documented range.
pub fn require(cond: bool, what: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Usage(what.to_string()))
    }
}
