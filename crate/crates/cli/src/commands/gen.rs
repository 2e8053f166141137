//! `bopkit gen`: sample and render a synthetic BOP-layout dataset.

use crate::error::CliError;
use crate::inputs::load_config;
use crate::manifest::ManifestBuilder;
use bopkit::{
    read_models_info, CameraIntrinsics, GenConfig, LayoutMode, SceneGenError, SymmetrySpec,
    TriMesh,
};
use clap::{Args, ValueEnum};
use nalgebra::Vector3;
use serde::Deserialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Multiple instances of a single object per scene.
    Miso,
    /// Single instances of multiple distinct objects per scene.
    Simo,
}

impl From<ModeArg> for LayoutMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Miso => LayoutMode::MiSo,
            ModeArg::Simo => LayoutMode::SiMo,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Placement strategy.
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Directory of `obj_*.ply` meshes (optionally with a models_info.json
    /// carrying symmetry annotations).
    #[arg(long)]
    pub models: PathBuf,
    /// Output dataset root; replaced atomically when it holds a previous run.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of scenes [default: 10].
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Cameras (images) per scene [default: 5].
    #[arg(long)]
    pub cams: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Distractor instances per scene; requires an `obj_000000.ply` mesh
    /// [default: 0].
    #[arg(long)]
    pub distractors: Option<usize>,
    /// JSON file overriding sampling ranges, intrinsics, and the above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scenes: Option<usize>,
    cams: Option<usize>,
    seed: Option<u64>,
    distractors: Option<usize>,
    camera: Option<CameraConfig>,
    depth_scale: Option<f64>,
    placement_min: Option<[f64; 3]>,
    placement_max: Option<[f64; 3]>,
    camera_distance: Option<[f64; 2]>,
    metallic_range: Option<[f64; 2]>,
    specular_range: Option<[f64; 2]>,
    roughness_range: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraConfig {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

fn map_gen_error(e: SceneGenError) -> CliError {
    match &e {
        SceneGenError::NoObjects
        | SceneGenError::MissingMesh { .. }
        | SceneGenError::PlacementFailed { .. }
        | SceneGenError::CameraRejected { .. } => CliError::Pipeline(e.to_string()),
        SceneGenError::BadConfig(_) => CliError::Usage(e.to_string()),
        SceneGenError::Geometry(_) | SceneGenError::Ply(_) => CliError::Input(e.to_string()),
        SceneGenError::Io { .. } | SceneGenError::Raster(_) | SceneGenError::Bop(_) => {
            CliError::Other(e.to_string())
        }
    }
}

/// Loads every `obj_<id>.ply` in the directory, keyed by parsed id.
fn load_models(dir: &Path) -> Result<BTreeMap<u32, TriMesh>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Input(format!(
            "models directory {} not found",
            dir.display()
        )));
    }
    let mut objects = BTreeMap::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(id) = name
            .strip_prefix("obj_")
            .and_then(|rest| rest.strip_suffix(".ply"))
            .and_then(|digits| digits.parse::<u32>().ok())
        else {
            continue;
        };
        let mesh = bopkit::load_mesh(&path)
            .map_err(|e| CliError::Input(format!("cannot load {}: {e}", path.display())))?;
        objects.insert(id, mesh);
    }
    if !objects.keys().any(|&id| id != 0) {
        return Err(CliError::Pipeline(format!(
            "no obj_*.ply meshes with id > 0 in {}",
            dir.display()
        )));
    }
    Ok(objects)
}

/// Symmetry annotations from an optional models_info.json next to the meshes.
fn load_symmetries(dir: &Path) -> Result<BTreeMap<u32, SymmetrySpec>, CliError> {
    let path = dir.join("models_info.json");
    if !path.is_file() {
        return Ok(BTreeMap::new());
    }
    let infos = read_models_info(&path).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(infos
        .into_iter()
        .map(|(id, info)| (id, info.symmetries))
        .collect())
}

/// Whether an existing output directory may be replaced: empty directories
/// and previous runs (marked by their manifest) are fair game.
fn replaceable(out: &Path) -> std::io::Result<bool> {
    if out.join("manifest.json").is_file() {
        return Ok(true);
    }
    Ok(std::fs::read_dir(out)?.next().is_none())
}

pub fn run(args: &GenArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("gen");
    let file: FileConfig = load_config(args.config.as_deref())?;
    let mut cfg = GenConfig::new(args.mode.into());
    cfg.scene_count = args.scenes.or(file.scenes).unwrap_or(cfg.scene_count);
    cfg.cameras_per_scene = args.cams.or(file.cams).unwrap_or(cfg.cameras_per_scene);
    cfg.seed = args.seed.or(file.seed).unwrap_or(cfg.seed);
    cfg.distractor_count = args
        .distractors
        .or(file.distractors)
        .unwrap_or(cfg.distractor_count);
    if let Some(c) = &file.camera {
        cfg.camera = CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)
            .map_err(|e| CliError::Usage(format!("camera config: {e}")))?;
    }
    cfg.depth_scale = file.depth_scale.unwrap_or(cfg.depth_scale);
    if let Some(v) = file.placement_min {
        cfg.placement_min = Vector3::from(v);
    }
    if let Some(v) = file.placement_max {
        cfg.placement_max = Vector3::from(v);
    }
    if let Some([lo, hi]) = file.camera_distance {
        cfg.camera_distance = (lo, hi);
    }
    if let Some([lo, hi]) = file.metallic_range {
        cfg.metallic_range = (lo, hi);
    }
    if let Some([lo, hi]) = file.specular_range {
        cfg.specular_range = (lo, hi);
    }
    if let Some([lo, hi]) = file.roughness_range {
        cfg.roughness_range = (lo, hi);
    }
    cfg.validate().map_err(map_gen_error)?;

    let objects = load_models(&args.models)?;
    let symmetries = load_symmetries(&args.models)?;
    manifest.input(&args.models)?;

    // Build the whole tree in a staging directory, then swap it in, so the
    // output path never holds a partial dataset.
    let staging = args.out.with_file_name(format!(
        "{}.partial",
        args.out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string())
    ));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)
            .map_err(|e| CliError::Other(format!("cannot clear {}: {e}", staging.display())))?;
    }
    let summary = match bopkit::generate_dataset(&objects, &symmetries, &cfg, &staging) {
        Ok(summary) => summary,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(map_gen_error(e));
        }
    };

    let mode_name = match args.mode {
        ModeArg::Miso => "miso",
        ModeArg::Simo => "simo",
    };
    manifest
        .seed(cfg.seed)
        .config(json!({
            "mode": mode_name,
            "models": args.models.display().to_string(),
            "scenes": cfg.scene_count,
            "cams": cfg.cameras_per_scene,
            "seed": cfg.seed,
            "distractors": cfg.distractor_count,
            "camera": {
                "fx": cfg.camera.fx, "fy": cfg.camera.fy,
                "cx": cfg.camera.cx, "cy": cfg.camera.cy,
                "width": cfg.camera.width, "height": cfg.camera.height,
            },
            "depth_scale": cfg.depth_scale,
            "placement_min": [cfg.placement_min.x, cfg.placement_min.y, cfg.placement_min.z],
            "placement_max": [cfg.placement_max.x, cfg.placement_max.y, cfg.placement_max.z],
            "camera_distance": [cfg.camera_distance.0, cfg.camera_distance.1],
            "metallic_range": [cfg.metallic_range.0, cfg.metallic_range.1],
            "specular_range": [cfg.specular_range.0, cfg.specular_range.1],
            "roughness_range": [cfg.roughness_range.0, cfg.roughness_range.1],
        }))
        .output("models");
    for scene in 0..cfg.scene_count {
        manifest.output(format!("scene_{scene:06}"));
    }
    manifest.write_into_dir(&staging)?;

    if args.out.exists() {
        let ok = args.out.is_dir()
            && replaceable(&args.out).map_err(|e| {
                CliError::Other(format!("cannot inspect {}: {e}", args.out.display()))
            })?;
        if !ok {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(CliError::Other(format!(
                "refusing to overwrite {}: not an empty directory or a previous run",
                args.out.display()
            )));
        }
        std::fs::remove_dir_all(&args.out)
            .map_err(|e| CliError::Other(format!("cannot clear {}: {e}", args.out.display())))?;
    }
    std::fs::rename(&staging, &args.out).map_err(|e| {
        CliError::Other(format!("cannot move outputs to {}: {e}", args.out.display()))
    })?;

    println!(
        "generated {} scenes, {} images, {} ground-truth instances at {}",
        summary.scenes,
        summary.images,
        summary.gt_instances,
        args.out.display()
    );
    Ok(())
}
