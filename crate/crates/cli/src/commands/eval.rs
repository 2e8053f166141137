//! `bopkit eval`: score pose estimates against a dataset's ground truth.

use crate::error::CliError;
use crate::inputs::{load_config, require};
use crate::manifest::ManifestBuilder;
use bopkit::bopio::{write_summary_csv, write_summary_json};
use bopkit::{evaluate_dataset, read_models_info, read_results_csv, BopError, CategoryMap, EvalConfig};
use clap::Args;
use serde::Deserialize;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset root: `models/` plus `scene_*` directories.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Pose estimates CSV (`scene_id,im_id,obj_id,score,R,t,time`).
    #[arg(long)]
    pub results: PathBuf,
    /// Object-to-category map JSON.
    #[arg(long)]
    pub categories: PathBuf,
    /// Output directory for `summary.json` and `summary.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Threshold grid [default: bop19; the only supported grid].
    #[arg(long)]
    pub grid: Option<String>,
    /// Continuous-symmetry discretization step in degrees [default: 1].
    #[arg(long)]
    pub sym_step_deg: Option<f64>,
    /// Depth tolerance for the visible-surface test in mm [default: 15].
    #[arg(long)]
    pub vsd_delta: Option<f64>,
    /// Score visibility against ground-truth renders even when the dataset
    /// has depth images.
    #[arg(long)]
    pub no_depth_files: bool,
    /// JSON file with defaults for the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    grid: Option<String>,
    sym_step_deg: Option<f64>,
    vsd_delta: Option<f64>,
    use_depth_files: Option<bool>,
    default_width: Option<u32>,
    default_height: Option<u32>,
}

/// Reference failures surface as pipeline errors; unreadable or malformed
/// dataset files as input errors; I/O during scoring as other.
fn map_bop_error(e: BopError) -> CliError {
    match &e {
        BopError::UnknownObject { .. }
        | BopError::UnknownScene { .. }
        | BopError::UnknownImage { .. }
        | BopError::MissingCamera { .. }
        | BopError::MissingModel { .. }
        | BopError::MissingCategory { .. } => CliError::Pipeline(e.to_string()),
        BopError::Io { .. } => CliError::Other(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("eval");
    let file: FileConfig = load_config(args.config.as_deref())?;
    let defaults = EvalConfig::default();
    let grid = args
        .grid
        .clone()
        .or(file.grid)
        .unwrap_or_else(|| "bop19".to_string());
    require(grid == "bop19", "--grid only supports \"bop19\"")?;
    let config = EvalConfig {
        sym_step_degrees: args
            .sym_step_deg
            .or(file.sym_step_deg)
            .unwrap_or(defaults.sym_step_degrees),
        vsd_delta: args.vsd_delta.or(file.vsd_delta).unwrap_or(defaults.vsd_delta),
        default_width: file.default_width.unwrap_or(defaults.default_width),
        default_height: file.default_height.unwrap_or(defaults.default_height),
        use_depth_test_files: if args.no_depth_files {
            false
        } else {
            file.use_depth_files.unwrap_or(defaults.use_depth_test_files)
        },
    };
    require(
        config.sym_step_degrees.is_finite() && config.sym_step_degrees > 0.0,
        "--sym-step-deg must be positive and finite",
    )?;
    require(
        config.vsd_delta.is_finite() && config.vsd_delta > 0.0,
        "--vsd-delta must be positive and finite",
    )?;

    if !args.dataset.is_dir() {
        return Err(CliError::Input(format!(
            "dataset root {} is not a directory",
            args.dataset.display()
        )));
    }
    let results = read_results_csv(&args.results).map_err(|e| CliError::Input(e.to_string()))?;
    let categories = CategoryMap::read_json(&args.categories)
        .map_err(|e| CliError::Input(e.to_string()))?;
    manifest
        .input(&args.dataset)?
        .input(&args.results)?
        .input(&args.categories)?;

    // Name the offending row before the dataset-wide evaluation runs.
    let infos = read_models_info(args.dataset.join("models/models_info.json"))
        .map_err(|e| CliError::Input(e.to_string()))?;
    for (row, record) in results.iter().enumerate() {
        if !infos.contains_key(&record.obj_id) {
            return Err(CliError::Pipeline(format!(
                "results row {} references object {}, which is not listed in models_info",
                row + 1,
                record.obj_id
            )));
        }
    }

    let evaluation = evaluate_dataset(&args.dataset, &results, &categories, &config)
        .map_err(map_bop_error)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Other(format!("cannot create {}: {e}", args.out.display())))?;
    let atomic = |name: &str, write: &dyn Fn(&Path) -> Result<(), BopError>| {
        let tmp = args.out.join(format!("{name}.tmp"));
        let path = args.out.join(name);
        write(&tmp).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::rename(&tmp, &path)
            .map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
    };
    atomic("summary.json", &|p| write_summary_json(p, &evaluation))?;
    atomic("summary.csv", &|p| write_summary_csv(p, &evaluation))?;

    manifest
        .config(json!({
            "dataset": args.dataset.display().to_string(),
            "results": args.results.display().to_string(),
            "categories": args.categories.display().to_string(),
            "grid": grid,
            "sym_step_deg": config.sym_step_degrees,
            "vsd_delta": config.vsd_delta,
            "default_width": config.default_width,
            "default_height": config.default_height,
            "use_depth_files": config.use_depth_test_files,
        }))
        .output("summary.json")
        .output("summary.csv")
        .write_into_dir(&args.out)?;
    println!(
        "evaluated {} estimates against {} ground-truth instances: AR {:.4}",
        results.len(),
        evaluation.overall.total,
        evaluation.overall.ar
    );
    Ok(())
}
