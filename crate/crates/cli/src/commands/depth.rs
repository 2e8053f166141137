//! `bopkit depth`: z-buffer depth rendering of a mesh to a 16-bit PNG.

use crate::error::CliError;
use crate::inputs::{load_camera, load_config, load_pose, require};
use crate::manifest::ManifestBuilder;
use bopkit::raster::write_depth_png;
use bopkit::{load_mesh, rasterize_depth};
use clap::Args;
use serde::Deserialize;
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct DepthArgs {
    /// Object mesh (PLY).
    pub model: PathBuf,
    /// Camera file (`cam_K`, `width`, `height`, optional `depth_scale`).
    #[arg(long)]
    pub camera: PathBuf,
    /// Model-to-camera pose file.
    #[arg(long)]
    pub pose: PathBuf,
    /// Output PNG path (16-bit grayscale depth).
    #[arg(long)]
    pub out: PathBuf,
    /// Millimetres per stored depth unit [default: the camera file's
    /// depth_scale].
    #[arg(long)]
    pub depth_scale: Option<f64>,
    /// JSON file with a depth_scale default.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    depth_scale: Option<f64>,
}

pub fn run(args: &DepthArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("depth");
    let file: FileConfig = load_config(args.config.as_deref())?;

    let mesh = load_mesh(&args.model)
        .map_err(|e| CliError::Input(format!("cannot load {}: {e}", args.model.display())))?;
    let (camera, camera_scale) = load_camera(&args.camera)?;
    let pose = load_pose(&args.pose)?;
    manifest
        .input(&args.model)?
        .input(&args.camera)?
        .input(&args.pose)?;

    let depth_scale = args.depth_scale.or(file.depth_scale).unwrap_or(camera_scale);
    require(
        depth_scale.is_finite() && depth_scale > 0.0,
        "--depth-scale must be positive and finite",
    )?;

    let depth = rasterize_depth(&mesh, &pose, &camera);
    let tmp = args.out.with_extension("png.tmp");
    write_depth_png(&tmp, &depth, depth_scale)
        .map_err(|e| CliError::Other(format!("cannot write {}: {e}", args.out.display())))?;
    std::fs::rename(&tmp, &args.out)
        .map_err(|e| CliError::Other(format!("cannot write {}: {e}", args.out.display())))?;

    manifest
        .config(json!({
            "model": args.model.display().to_string(),
            "camera": args.camera.display().to_string(),
            "pose": args.pose.display().to_string(),
            "depth_scale": depth_scale,
        }))
        .output(args.out.display().to_string())
        .write_next_to(&args.out)?;
    println!(
        "wrote {}x{} depth image ({} covered pixels) to {}",
        depth.width(),
        depth.height(),
        depth.coverage(),
        args.out.display()
    );
    Ok(())
}
