//! `bopkit heatmap`: Gaussian keypoint heatmap rendering to a 16-bit PNG.

use crate::error::CliError;
use crate::inputs::{load_camera, load_config, load_pose, parse_size, require};
use crate::manifest::ManifestBuilder;
use bopkit::keypoints::{render_heatmap, KeypointSet};
use clap::Args;
use serde::Deserialize;
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Keypoint JSON produced by `bopkit keypoints`.
    pub keypoints: PathBuf,
    /// Camera file (`cam_K`, `width`, `height`).
    #[arg(long)]
    pub camera: PathBuf,
    /// Model-to-camera pose file.
    #[arg(long)]
    pub pose: PathBuf,
    /// Output PNG path (16-bit grayscale).
    #[arg(long)]
    pub out: PathBuf,
    /// Heatmap size as WxH [default: 64x64].
    #[arg(long, value_parser = parse_size)]
    pub size: Option<(u32, u32)>,
    /// Gaussian width in heatmap pixels [default: 2].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// JSON file with defaults for size/sigma.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    width: Option<u32>,
    height: Option<u32>,
    sigma: Option<f64>,
}

pub fn run(args: &HeatmapArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("heatmap");
    let file: FileConfig = load_config(args.config.as_deref())?;
    let (width, height) = args.size.unwrap_or((
        file.width.unwrap_or(64),
        file.height.unwrap_or(64),
    ));
    let sigma = args.sigma.or(file.sigma).unwrap_or(2.0);
    require(width >= 1 && height >= 1, "--size dimensions must be at least 1")?;
    require(
        sigma.is_finite() && sigma > 0.0,
        "--sigma must be positive and finite",
    )?;

    let keypoints = KeypointSet::read_json(&args.keypoints)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.keypoints.display())))?;
    let (camera, _) = load_camera(&args.camera)?;
    let pose = load_pose(&args.pose)?;
    manifest
        .input(&args.keypoints)?
        .input(&args.camera)?
        .input(&args.pose)?;

    let map = render_heatmap(&keypoints, &pose, &camera, width, height, sigma);
    // Heatmap PNG writing already goes through a full in-memory encode; route
    // it through a temp file for the same atomicity as the other outputs.
    let tmp = args.out.with_extension("png.tmp");
    map.write_png(&tmp)
        .map_err(|e| CliError::Other(format!("cannot write {}: {e}", args.out.display())))?;
    std::fs::rename(&tmp, &args.out)
        .map_err(|e| CliError::Other(format!("cannot write {}: {e}", args.out.display())))?;

    manifest
        .config(json!({
            "keypoints": args.keypoints.display().to_string(),
            "camera": args.camera.display().to_string(),
            "pose": args.pose.display().to_string(),
            "width": width,
            "height": height,
            "sigma": sigma,
        }))
        .output(args.out.display().to_string())
        .write_next_to(&args.out)?;
    println!(
        "wrote {width}x{height} heatmap ({} keypoints) to {}",
        keypoints.len(),
        args.out.display()
    );
    Ok(())
}
