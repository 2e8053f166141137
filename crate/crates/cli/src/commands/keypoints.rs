//! `bopkit keypoints`: surface-saliency keypoint extraction from a mesh.

use crate::error::CliError;
use crate::inputs::{load_camera, load_config, load_pose, require};
use crate::manifest::{write_file_atomic, ManifestBuilder};
use bopkit::keypoints::NeighborhoodConfig;
use bopkit::{
    load_mesh, mesh_diameter, rasterize_depth, sample_surface, saliency_field, select_keypoints,
    visible_mask,
};
use clap::Args;
use serde::Deserialize;
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct KeypointsArgs {
    /// Object mesh (PLY).
    pub model: PathBuf,
    /// Output path for the keypoint JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of area-uniform surface samples [default: 10000].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed for surface sampling [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Nearest-neighbor count for the saliency covariance [default: 16].
    #[arg(long)]
    pub k: Option<usize>,
    /// Density counting radius in mm [default: 2x mean sample spacing].
    #[arg(long)]
    pub density_radius: Option<f64>,
    /// Saliency threshold relative to the strongest sample [default: 0.6].
    #[arg(long)]
    pub tau_rel: Option<f64>,
    /// Non-maximum-suppression radius in mm [default: the density radius].
    #[arg(long)]
    pub nms_radius: Option<f64>,
    /// Maximum number of keypoints [default: 64].
    #[arg(long)]
    pub max_kp: Option<usize>,
    /// Camera file; with --pose, keypoints come from visible samples only.
    #[arg(long, requires = "pose")]
    pub camera: Option<PathBuf>,
    /// Model-to-camera pose file for the visibility test.
    #[arg(long, requires = "camera")]
    pub pose: Option<PathBuf>,
    /// Visibility depth tolerance in mm [default: max(0.5, 0.002x diameter)].
    #[arg(long)]
    pub eps: Option<f64>,
    /// JSON file with defaults for any of the above numeric options.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    samples: Option<usize>,
    seed: Option<u64>,
    k: Option<usize>,
    density_radius: Option<f64>,
    tau_rel: Option<f64>,
    nms_radius: Option<f64>,
    max_kp: Option<usize>,
    eps: Option<f64>,
}

pub fn run(args: &KeypointsArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("keypoints");
    let file: FileConfig = load_config(args.config.as_deref())?;
    let samples_n = args.samples.or(file.samples).unwrap_or(10_000);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let k = args.k.or(file.k).unwrap_or(NeighborhoodConfig::DEFAULT_K);
    let tau_rel = args.tau_rel.or(file.tau_rel).unwrap_or(0.6);
    let max_kp = args.max_kp.or(file.max_kp).unwrap_or(64);

    require(samples_n >= 1, "--samples must be at least 1")?;
    require(k >= 4, "--k must be at least 4")?;
    require(
        tau_rel.is_finite() && tau_rel >= 0.0,
        "--tau-rel must be finite and >= 0",
    )?;
    require(max_kp >= 1, "--max-kp must be at least 1")?;

    let mesh = load_mesh(&args.model)
        .map_err(|e| CliError::Input(format!("cannot load {}: {e}", args.model.display())))?;
    manifest.input(&args.model)?;
    let surface = sample_surface(&mesh, samples_n, seed)
        .map_err(|e| CliError::Pipeline(format!("{}: {e}", args.model.display())))?;

    let density_radius = args
        .density_radius
        .or(file.density_radius)
        .unwrap_or(2.0 * surface.mean_spacing);
    let nms_radius = args.nms_radius.or(file.nms_radius).unwrap_or(density_radius);
    require(
        density_radius.is_finite() && density_radius > 0.0,
        "--density-radius must be positive and finite",
    )?;
    require(
        nms_radius.is_finite() && nms_radius >= 0.0,
        "--nms-radius must be finite and >= 0",
    )?;

    let mut resolved_eps = None;
    let visible = match (&args.camera, &args.pose) {
        (Some(camera_path), Some(pose_path)) => {
            let (camera, _) = load_camera(camera_path)?;
            let pose = load_pose(pose_path)?;
            manifest.input(camera_path)?.input(pose_path)?;
            let diameter = mesh_diameter(&mesh)
                .map_err(|e| CliError::Pipeline(format!("{}: {e}", args.model.display())))?;
            let eps = args
                .eps
                .or(file.eps)
                .unwrap_or_else(|| (0.002 * diameter).max(0.5));
            require(eps.is_finite() && eps > 0.0, "--eps must be positive and finite")?;
            resolved_eps = Some(eps);
            let depth = rasterize_depth(&mesh, &pose, &camera);
            visible_mask(&surface, &pose, &camera, &depth, eps)
                .map_err(|e| CliError::Pipeline(e.to_string()))?
        }
        _ => vec![true; surface.points.len()],
    };

    let neighborhood = NeighborhoodConfig::new(k, density_radius)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let field = saliency_field(&surface, &visible, &neighborhood)
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    let max_saliency = field.iter().map(|s| s.saliency).fold(0.0, f64::max);
    let keypoints = select_keypoints(&field, tau_rel * max_saliency, nms_radius, max_kp);

    let mut text = keypoints
        .to_json()
        .map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    write_file_atomic(&args.out, text.as_bytes())?;

    manifest
        .seed(seed)
        .config(json!({
            "model": args.model.display().to_string(),
            "samples": samples_n,
            "seed": seed,
            "k": k,
            "density_radius": density_radius,
            "tau_rel": tau_rel,
            "nms_radius": nms_radius,
            "max_kp": max_kp,
            "camera": args.camera.as_ref().map(|p| p.display().to_string()),
            "pose": args.pose.as_ref().map(|p| p.display().to_string()),
            "eps": resolved_eps,
        }))
        .output(args.out.display().to_string())
        .write_next_to(&args.out)?;
    println!(
        "wrote {} keypoints to {}",
        keypoints.len(),
        args.out.display()
    );
    Ok(())
}
