//! Whole-dataset evaluation: match pose estimates to ground-truth instances
//! and aggregate the full metric suite overall, per category and per object.

use super::{
    read_models_info, read_scene_camera, read_scene_gt, BopError, Category, CategoryMap,
    ModelInfo, ResultRecord, SceneCameraEntry, SceneGtEntry,
};
use crate::geometry::{load_mesh, TriMesh};
use crate::metrics::{
    add_adi, aggregate_reports, expand_symmetries, mspd, mssd, re_te, vsd_multi, vsd_tau_grid,
    MetricSummary, PoseErrorReport,
};
use crate::raster::{rasterize_depth, read_depth_png, DepthMap, Pose};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

/// Evaluation knobs; the defaults match the standard protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Discretization step for continuous symmetries, degrees.
    pub sym_step_degrees: f64,
    /// Visibility tolerance for the depth-based error, mm.
    pub vsd_delta: f64,
    /// Image size assumed when a camera entry does not carry one.
    pub default_width: u32,
    pub default_height: u32,
    /// Use `depth/<im_id>.png` as the observed depth when present; without it
    /// (or when disabled) the ground-truth render stands in, which treats the
    /// whole object as visible.
    pub use_depth_test_files: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sym_step_degrees: 1.0,
            vsd_delta: 15.0,
            default_width: 640,
            default_height: 480,
            use_depth_test_files: true,
        }
    }
}

/// Evaluation output: one report per ground-truth instance (scene order,
/// then image order, then ground-truth entry order) plus aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetEvaluation {
    pub overall: MetricSummary,
    pub per_category: BTreeMap<Category, MetricSummary>,
    pub per_object: BTreeMap<u32, MetricSummary>,
    #[serde(skip)]
    pub reports: Vec<PoseErrorReport>,
}

struct SceneData {
    dir: PathBuf,
    gt: BTreeMap<u64, Vec<SceneGtEntry>>,
    cameras: BTreeMap<u64, SceneCameraEntry>,
}

struct ObjectData {
    mesh: TriMesh,
    syms: Vec<Pose>,
    symmetric: bool,
    diameter: f64,
    taus: [f64; 10],
}

fn load_scenes(root: &Path) -> Result<BTreeMap<u64, SceneData>, BopError> {
    let entries = std::fs::read_dir(root).map_err(|source| BopError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut scenes = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|source| BopError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        if !entry.path().is_dir() {
            continue;
        }
        let name = entry.file_name();
        let Some(scene_id) = name
            .to_str()
            .and_then(|n| n.strip_prefix("scene_"))
            .and_then(|suffix| suffix.parse::<u64>().ok())
        else {
            continue;
        };
        let dir = entry.path();
        let gt = read_scene_gt(dir.join("scene_gt.json"))?;
        let cameras = read_scene_camera(dir.join("scene_camera.json"))?;
        scenes.insert(scene_id, SceneData { dir, gt, cameras });
    }
    Ok(scenes)
}

fn load_objects(
    models_dir: &Path,
    infos: &BTreeMap<u32, ModelInfo>,
    needed: &BTreeSet<u32>,
    sym_step_degrees: f64,
) -> Result<BTreeMap<u32, ObjectData>, BopError> {
    let mut objects = BTreeMap::new();
    for &obj_id in needed {
        let info = infos
            .get(&obj_id)
            .ok_or(BopError::UnknownObject { obj_id })?;
        let path = models_dir.join(format!("obj_{obj_id:06}.ply"));
        if !path.is_file() {
            return Err(BopError::MissingModel { obj_id, path });
        }
        let mesh = load_mesh(&path)?;
        objects.insert(
            obj_id,
            ObjectData {
                mesh,
                syms: expand_symmetries(&info.symmetries, sym_step_degrees),
                symmetric: info.symmetries.is_symmetric(),
                diameter: info.diameter,
                taus: vsd_tau_grid(info.diameter),
            },
        );
    }
    Ok(objects)
}

/// Estimates grouped by `(scene_id, im_id, obj_id)`, each tagged with its
/// original row index for deterministic tie-breaking.
type GroupedEstimates = BTreeMap<(u64, u64, u32), Vec<(usize, ResultRecord)>>;

fn evaluate_image(
    scene: &SceneData,
    scene_id: u64,
    im_id: u64,
    objects: &BTreeMap<u32, ObjectData>,
    grouped: &GroupedEstimates,
    config: &EvalConfig,
) -> Result<Vec<PoseErrorReport>, BopError> {
    let gt_list = &scene.gt[&im_id];
    let camera = scene
        .cameras
        .get(&im_id)
        .ok_or(BopError::MissingCamera { scene_id, im_id })?;
    let k = camera.intrinsics(config.default_width, config.default_height)?;

    let depth_test: Option<DepthMap> = if config.use_depth_test_files {
        let path = scene.dir.join("depth").join(format!("{im_id:06}.png"));
        if path.is_file() {
            Some(read_depth_png(&path, camera.depth_scale)?)
        } else {
            None
        }
    } else {
        None
    };

    // Greedy matching per object: estimates in score order (ties keep file
    // order) each claim the unmatched instance with the smallest MSSD.
    let mut matches: Vec<Option<&ResultRecord>> = vec![None; gt_list.len()];
    let obj_ids: BTreeSet<u32> = gt_list.iter().map(|e| e.obj_id).collect();
    for &obj_id in &obj_ids {
        let Some(candidates) = grouped.get(&(scene_id, im_id, obj_id)) else {
            continue;
        };
        let mut order: Vec<&(usize, ResultRecord)> = candidates.iter().collect();
        order.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
        let object = &objects[&obj_id];
        let slots: Vec<usize> = (0..gt_list.len())
            .filter(|&i| gt_list[i].obj_id == obj_id)
            .collect();
        let mut taken = vec![false; slots.len()];
        for (_, est) in order {
            let mut best: Option<(usize, f64)> = None;
            for (slot, &gi) in slots.iter().enumerate() {
                if taken[slot] {
                    continue;
                }
                let d = mssd(
                    &object.mesh.vertices,
                    &est.pose,
                    &gt_list[gi].pose,
                    &object.syms,
                );
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((slot, d));
                }
            }
            let Some((slot, _)) = best else {
                break; // every instance of this object is already matched
            };
            taken[slot] = true;
            matches[slots[slot]] = Some(est);
        }
    }

    let mut reports = Vec::with_capacity(gt_list.len());
    for (entry, matched) in gt_list.iter().zip(&matches) {
        let object = &objects[&entry.obj_id];
        let Some(est) = matched else {
            reports.push(PoseErrorReport::miss(
                entry.obj_id,
                object.symmetric,
                object.taus.len(),
            ));
            continue;
        };
        let vertices = &object.mesh.vertices;
        let mssd_err = mssd(vertices, &est.pose, &entry.pose, &object.syms);
        let mspd_err = mspd(vertices, &est.pose, &entry.pose, &object.syms, &k)?;
        let (add, adi) = add_adi(vertices, &est.pose, &entry.pose);
        let (re, te) = re_te(&est.pose, &entry.pose, &object.syms);
        let gt_render = rasterize_depth(&object.mesh, &entry.pose, &k);
        let est_render = rasterize_depth(&object.mesh, &est.pose, &k);
        let observed = depth_test.as_ref().unwrap_or(&gt_render);
        let vsd_err = vsd_multi(
            &est_render,
            &gt_render,
            observed,
            &object.taus,
            config.vsd_delta,
        )?;
        reports.push(PoseErrorReport::new(
            entry.obj_id,
            object.symmetric,
            vsd_err,
            mssd_err,
            mspd_err,
            add,
            adi,
            re,
            te,
            object.diameter,
            k.width,
        ));
    }
    Ok(reports)
}

/// Evaluates pose estimates against a dataset rooted at `root`.
///
/// The root holds `models/models_info.json`, `models/obj_<id>.ply` files and
/// `scene_<id>/` directories with `scene_gt.json`, `scene_camera.json` and
/// optional `depth/` images. Every ground-truth instance yields a report;
/// instances no estimate was matched to count as worst-case misses, and extra
/// estimates are ignored. Images are processed in parallel; the output is
/// deterministic and independent of the order of `results` rows (score ties
/// fall back to row order).
pub fn evaluate_dataset(
    root: impl AsRef<Path>,
    results: &[ResultRecord],
    categories: &CategoryMap,
    config: &EvalConfig,
) -> Result<DatasetEvaluation, BopError> {
    let root = root.as_ref();
    let models_dir = root.join("models");
    let infos = read_models_info(models_dir.join("models_info.json"))?;
    let scenes = load_scenes(root)?;

    let mut grouped = GroupedEstimates::new();
    for (row, record) in results.iter().enumerate() {
        if !infos.contains_key(&record.obj_id) {
            return Err(BopError::UnknownObject {
                obj_id: record.obj_id,
            });
        }
        let scene = scenes
            .get(&record.scene_id)
            .ok_or(BopError::UnknownScene {
                scene_id: record.scene_id,
            })?;
        if !scene.gt.contains_key(&record.im_id) {
            return Err(BopError::UnknownImage {
                scene_id: record.scene_id,
                im_id: record.im_id,
            });
        }
        grouped
            .entry((record.scene_id, record.im_id, record.obj_id))
            .or_default()
            .push((row, record.clone()));
    }

    let mut needed: BTreeSet<u32> = results.iter().map(|r| r.obj_id).collect();
    for scene in scenes.values() {
        for entries in scene.gt.values() {
            needed.extend(entries.iter().map(|e| e.obj_id));
        }
    }
    let objects = load_objects(&models_dir, &infos, &needed, config.sym_step_degrees)?;

    let tasks: Vec<(u64, u64)> = scenes
        .iter()
        .flat_map(|(&scene_id, scene)| scene.gt.keys().map(move |&im_id| (scene_id, im_id)))
        .collect();
    let per_image: Vec<Vec<PoseErrorReport>> = tasks
        .par_iter()
        .map(|&(scene_id, im_id)| {
            evaluate_image(&scenes[&scene_id], scene_id, im_id, &objects, &grouped, config)
        })
        .collect::<Result<_, _>>()?;
    let reports: Vec<PoseErrorReport> = per_image.into_iter().flatten().collect();

    let mut by_category: BTreeMap<Category, Vec<PoseErrorReport>> = BTreeMap::new();
    let mut by_object: BTreeMap<u32, Vec<PoseErrorReport>> = BTreeMap::new();
    for report in &reports {
        let category = categories
            .get(report.obj_id)
            .ok_or(BopError::MissingCategory {
                obj_id: report.obj_id,
            })?;
        by_category.entry(category).or_default().push(report.clone());
        by_object.entry(report.obj_id).or_default().push(report.clone());
    }

    Ok(DatasetEvaluation {
        overall: aggregate_reports(&reports),
        per_category: by_category
            .into_iter()
            .map(|(c, r)| (c, aggregate_reports(&r)))
            .collect(),
        per_object: by_object
            .into_iter()
            .map(|(o, r)| (o, aggregate_reports(&r)))
            .collect(),
        reports,
    })
}

/// Writes the aggregate summaries as pretty JSON.
pub fn write_summary_json(
    path: impl AsRef<Path>,
    evaluation: &DatasetEvaluation,
) -> Result<(), BopError> {
    let path = path.as_ref();
    super::write_text(path, &super::to_json_pretty(path, evaluation)?)
}

/// Writes a compact recall table: one row overall plus one per category.
pub fn write_summary_csv(
    path: impl AsRef<Path>,
    evaluation: &DatasetEvaluation,
) -> Result<(), BopError> {
    let mut text = String::from("group,AR,AD(0.1),MSPD,MSSD,reS(10),teS(10),VSD");
    let mut push_row = |label: &str, s: &MetricSummary| {
        text.push_str(&format!(
            "\n{label},{},{},{},{},{},{},{}",
            s.ar, s.recall_ad, s.recall_mspd, s.recall_mssd, s.recall_re, s.recall_te, s.recall_vsd
        ));
    };
    push_row("overall", &evaluation.overall);
    for (category, summary) in &evaluation.per_category {
        push_row(category.name(), summary);
    }
    super::write_text(path.as_ref(), &text)
}
