//! BOP-layout dataset I/O: per-scene ground truth and cameras, model info
//! with symmetry annotations, object categories, the results CSV, and
//! whole-dataset evaluation against the metric suite.
//!
//! File formats follow the BOP convention: `scene_gt.json` maps stringified
//! image ids to pose lists (`cam_R_m2c` row-major, `cam_t_m2c` in mm),
//! `scene_camera.json` carries `cam_K` and `depth_scale` per image,
//! `models_info.json` carries diameters, extents and symmetries, and results
//! arrive as `scene_id,im_id,obj_id,score,R,t,time` CSV rows. Rotations read
//! from files are accepted as-is when orthonormal within 1e-6 and projected
//! to the nearest rotation when within 1e-4 (files carry limited precision);
//! anything worse is rejected.

mod eval;
mod results;

pub use eval::{
    evaluate_dataset, write_summary_csv, write_summary_json, DatasetEvaluation, EvalConfig,
};
pub use results::{read_results_csv, write_results_csv, ResultRecord, RESULTS_HEADER};

use crate::geometry::PlyError;
use crate::metrics::{ContinuousSymmetry, MetricsError, SymmetrySpec};
use crate::raster::{CameraIntrinsics, Pose, RasterError};
use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Errors from dataset reading, writing, and evaluation.
#[derive(Debug, Error)]
pub enum BopError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{file}: image key {key:?} is not an unsigned integer")]
    BadImageKey { file: &'static str, key: String },
    #[error("scene_gt image {image} entry {index}: {reason}")]
    BadGtEntry {
        image: String,
        index: usize,
        reason: String,
    },
    #[error("scene_camera image {image}: {reason}")]
    BadCameraEntry { image: String, reason: String },
    #[error("models_info object {obj_id}: {reason}")]
    BadModelInfo { obj_id: String, reason: String },
    #[error("categories: object key {key:?} is not an unsigned integer")]
    BadCategoryKey { key: String },
    #[error("results csv: header {found:?} does not match {expected:?}")]
    BadCsvHeader { found: String, expected: String },
    #[error("results csv line {line}: expected {expected} columns, found {found}")]
    WrongColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("results csv line {line}: {reason}")]
    BadCsvValue { line: usize, reason: String },
    #[error("object {obj_id} is not listed in models_info")]
    UnknownObject { obj_id: u32 },
    #[error("estimate references scene {scene_id}, which is not in the dataset")]
    UnknownScene { scene_id: u64 },
    #[error("estimate references image {im_id}, which is not in scene {scene_id}")]
    UnknownImage { scene_id: u64, im_id: u64 },
    #[error("scene {scene_id} image {im_id} has no scene_camera entry")]
    MissingCamera { scene_id: u64, im_id: u64 },
    #[error("model file for object {obj_id} is missing: {path}")]
    MissingModel { obj_id: u32, path: PathBuf },
    #[error("object {obj_id} has no category assigned")]
    MissingCategory { obj_id: u32 },
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub(crate) fn read_text(path: &Path) -> Result<String, BopError> {
    std::fs::read_to_string(path).map_err(|source| BopError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), BopError> {
    let mut out = String::with_capacity(text.len() + 1);
    out.push_str(text);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| BopError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, BopError> {
    serde_json::from_str(text).map_err(|source| BopError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn to_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<String, BopError> {
    serde_json::to_string_pretty(value).map_err(|source| BopError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Projects `m` onto the nearest rotation matrix (polar factor via SVD).
fn nearest_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut flipped = u;
        for i in 0..3 {
            flipped[(i, 2)] = -flipped[(i, 2)];
        }
        r = flipped * v_t;
    }
    Some(r)
}

/// Builds a pose from row-major rotation values and a translation.
///
/// Exactly orthonormal input (within the `Pose` tolerance of 1e-6) is taken
/// bit-for-bit, so files written by this crate read back unchanged; rotations
/// off by at most 1e-4 (limited file precision) are projected to the nearest
/// rotation; anything worse is rejected with the measured deviation.
pub fn pose_from_row_major(r: &[f64], t: &[f64]) -> Result<Pose, String> {
    if r.len() != 9 {
        return Err(format!("rotation has {} numbers, expected 9", r.len()));
    }
    if t.len() != 3 {
        return Err(format!("translation has {} numbers, expected 3", t.len()));
    }
    if let Some(bad) = r.iter().chain(t).find(|v| !v.is_finite()) {
        return Err(format!("non-finite value {bad}"));
    }
    let m = Matrix3::new(r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]);
    let translation = Vector3::new(t[0], t[1], t[2]);
    if let Ok(pose) = Pose::new(m, translation) {
        return Ok(pose);
    }
    let gram = m.transpose() * m;
    let mut deviation = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            deviation = deviation.max((gram[(i, j)] - target).abs());
        }
    }
    if deviation > 1e-4 || m.determinant() <= 0.0 {
        return Err(format!(
            "rotation deviates from orthonormal by {deviation:.3e} (limit 1e-4)"
        ));
    }
    let projected = nearest_rotation(&m).ok_or("rotation SVD did not converge")?;
    Pose::new(projected, translation).map_err(|e| e.to_string())
}

/// Flattens a pose to row-major rotation values and a translation triple.
pub fn pose_to_row_major(pose: &Pose) -> ([f64; 9], [f64; 3]) {
    let r = pose.rotation();
    let t = pose.translation();
    (
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ],
        [t[0], t[1], t[2]],
    )
}

/// One ground-truth instance: object id plus model-to-camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGtEntry {
    /// Positive object identifier.
    pub obj_id: u32,
    pub pose: Pose,
}

#[derive(Serialize, Deserialize)]
struct RawGtEntry {
    obj_id: u32,
    #[serde(rename = "cam_R_m2c")]
    cam_r_m2c: Vec<f64>,
    cam_t_m2c: Vec<f64>,
}

/// Reads `scene_gt.json`: image id to ground-truth instances.
pub fn read_scene_gt(path: impl AsRef<Path>) -> Result<BTreeMap<u64, Vec<SceneGtEntry>>, BopError> {
    let path = path.as_ref();
    let raw: BTreeMap<String, Vec<RawGtEntry>> = parse_json(path, &read_text(path)?)?;
    let mut out = BTreeMap::new();
    for (key, entries) in raw {
        let image: u64 = key.parse().map_err(|_| BopError::BadImageKey {
            file: "scene_gt",
            key: key.clone(),
        })?;
        let mut list = Vec::with_capacity(entries.len());
        for (index, entry) in entries.iter().enumerate() {
            let fail = |reason: String| BopError::BadGtEntry {
                image: key.clone(),
                index,
                reason,
            };
            if entry.obj_id == 0 {
                return Err(fail("obj_id must be positive".into()));
            }
            let pose = pose_from_row_major(&entry.cam_r_m2c, &entry.cam_t_m2c).map_err(fail)?;
            list.push(SceneGtEntry {
                obj_id: entry.obj_id,
                pose,
            });
        }
        out.insert(image, list);
    }
    Ok(out)
}

/// Writes `scene_gt.json` with sorted keys and shortest-round-trip numbers.
pub fn write_scene_gt(
    path: impl AsRef<Path>,
    scene_gt: &BTreeMap<u64, Vec<SceneGtEntry>>,
) -> Result<(), BopError> {
    let path = path.as_ref();
    let mut raw: BTreeMap<String, Vec<RawGtEntry>> = BTreeMap::new();
    for (image, entries) in scene_gt {
        let list = entries
            .iter()
            .map(|e| {
                let (r, t) = pose_to_row_major(&e.pose);
                RawGtEntry {
                    obj_id: e.obj_id,
                    cam_r_m2c: r.to_vec(),
                    cam_t_m2c: t.to_vec(),
                }
            })
            .collect();
        raw.insert(image.to_string(), list);
    }
    write_text(path, &to_json_pretty(path, &raw)?)
}

/// Per-image camera record: row-major `cam_K`, the depth PNG scale, and
/// (an extension to the base layout) the image size when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCameraEntry {
    #[serde(rename = "cam_K")]
    pub cam_k: [f64; 9],
    /// Millimetres per stored depth unit.
    pub depth_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

impl SceneCameraEntry {
    /// Intrinsics for this image, falling back to the given size when the
    /// file does not carry one.
    pub fn intrinsics(&self, default_width: u32, default_height: u32) -> Result<CameraIntrinsics, RasterError> {
        CameraIntrinsics::from_k(
            &self.cam_k,
            self.width.unwrap_or(default_width),
            self.height.unwrap_or(default_height),
        )
    }
}

/// Reads `scene_camera.json`: image id to camera record.
pub fn read_scene_camera(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<u64, SceneCameraEntry>, BopError> {
    let path = path.as_ref();
    let raw: BTreeMap<String, SceneCameraEntry> = parse_json(path, &read_text(path)?)?;
    let mut out = BTreeMap::new();
    for (key, entry) in raw {
        let image: u64 = key.parse().map_err(|_| BopError::BadImageKey {
            file: "scene_camera",
            key: key.clone(),
        })?;
        let fail = |reason: &str| BopError::BadCameraEntry {
            image: key.clone(),
            reason: reason.into(),
        };
        if !entry.cam_k.iter().all(|v| v.is_finite()) {
            return Err(fail("cam_K has a non-finite entry"));
        }
        if !(entry.depth_scale > 0.0 && entry.depth_scale.is_finite()) {
            return Err(fail("depth_scale must be positive and finite"));
        }
        out.insert(image, entry);
    }
    Ok(out)
}

/// Writes `scene_camera.json` with sorted keys.
pub fn write_scene_camera(
    path: impl AsRef<Path>,
    cameras: &BTreeMap<u64, SceneCameraEntry>,
) -> Result<(), BopError> {
    let path = path.as_ref();
    let raw: BTreeMap<String, &SceneCameraEntry> = cameras
        .iter()
        .map(|(image, entry)| (image.to_string(), entry))
        .collect();
    write_text(path, &to_json_pretty(path, &raw)?)
}

/// Geometry summary and symmetry annotation of one object model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInfo {
    /// Largest inter-vertex distance, mm. Positive and at least as large as
    /// every axis extent (within `1e-6 * diameter`).
    pub diameter: f64,
    /// Minimum corner of the axis-aligned bounding box, mm.
    pub min: Vector3<f64>,
    /// Bounding-box extents, mm.
    pub size: Vector3<f64>,
    pub symmetries: SymmetrySpec,
}

#[derive(Serialize, Deserialize)]
struct RawContinuousSym {
    axis: [f64; 3],
    offset: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct RawModelInfo {
    diameter: f64,
    min_x: f64,
    min_y: f64,
    min_z: f64,
    size_x: f64,
    size_y: f64,
    size_z: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    symmetries_discrete: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    symmetries_continuous: Vec<RawContinuousSym>,
}

fn model_info_from_raw(raw: &RawModelInfo) -> Result<ModelInfo, String> {
    let values = [
        raw.diameter,
        raw.min_x,
        raw.min_y,
        raw.min_z,
        raw.size_x,
        raw.size_y,
        raw.size_z,
    ];
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite geometry value".into());
    }
    if raw.diameter <= 0.0 {
        return Err(format!("diameter is {}, expected > 0", raw.diameter));
    }
    let max_extent = raw.size_x.max(raw.size_y).max(raw.size_z);
    if max_extent < 0.0 {
        return Err("extents must be nonnegative".into());
    }
    if raw.diameter < max_extent - 1e-6 * raw.diameter {
        return Err(format!(
            "diameter {} is smaller than the largest extent {max_extent}",
            raw.diameter
        ));
    }

    let mut discrete = Vec::with_capacity(raw.symmetries_discrete.len());
    for (i, m) in raw.symmetries_discrete.iter().enumerate() {
        if m.len() != 16 {
            return Err(format!(
                "symmetries_discrete[{i}] has {} numbers, expected 16",
                m.len()
            ));
        }
        for (j, &v) in m[12..16].iter().enumerate() {
            let target = if j == 3 { 1.0 } else { 0.0 };
            if (v - target).abs() > 1e-6 {
                return Err(format!(
                    "symmetries_discrete[{i}] bottom row is not [0,0,0,1]"
                ));
            }
        }
        let r = [m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]];
        let t = [m[3], m[7], m[11]];
        let pose = pose_from_row_major(&r, &t)
            .map_err(|reason| format!("symmetries_discrete[{i}]: {reason}"))?;
        discrete.push(pose);
    }

    let mut continuous = Vec::with_capacity(raw.symmetries_continuous.len());
    for (i, c) in raw.symmetries_continuous.iter().enumerate() {
        let axis = Vector3::new(c.axis[0], c.axis[1], c.axis[2]);
        let offset = Vector3::new(c.offset[0], c.offset[1], c.offset[2]);
        if !axis.iter().chain(offset.iter()).all(|v| v.is_finite()) {
            return Err(format!("symmetries_continuous[{i}] has a non-finite value"));
        }
        let norm = axis.norm();
        if (norm - 1.0).abs() > 1e-4 {
            return Err(format!(
                "symmetries_continuous[{i}] axis has length {norm}, expected 1"
            ));
        }
        let sym = ContinuousSymmetry::new(axis / norm, offset)
            .map_err(|e| format!("symmetries_continuous[{i}]: {e}"))?;
        continuous.push(sym);
    }

    let symmetries =
        SymmetrySpec::new(discrete, continuous).map_err(|e| format!("symmetries: {e}"))?;
    Ok(ModelInfo {
        diameter: raw.diameter,
        min: Vector3::new(raw.min_x, raw.min_y, raw.min_z),
        size: Vector3::new(raw.size_x, raw.size_y, raw.size_z),
        symmetries,
    })
}

fn model_info_to_raw(info: &ModelInfo) -> RawModelInfo {
    let identity = Pose::identity();
    let symmetries_discrete = info
        .symmetries
        .discrete
        .iter()
        .filter(|p| **p != identity)
        .map(|p| {
            let (r, t) = pose_to_row_major(p);
            vec![
                r[0], r[1], r[2], t[0], r[3], r[4], r[5], t[1], r[6], r[7], r[8], t[2], 0.0, 0.0,
                0.0, 1.0,
            ]
        })
        .collect();
    let symmetries_continuous = info
        .symmetries
        .continuous
        .iter()
        .map(|c| RawContinuousSym {
            axis: [c.axis[0], c.axis[1], c.axis[2]],
            offset: [c.offset[0], c.offset[1], c.offset[2]],
        })
        .collect();
    RawModelInfo {
        diameter: info.diameter,
        min_x: info.min[0],
        min_y: info.min[1],
        min_z: info.min[2],
        size_x: info.size[0],
        size_y: info.size[1],
        size_z: info.size[2],
        symmetries_discrete,
        symmetries_continuous,
    }
}

/// Reads `models_info.json`: object id to model info.
pub fn read_models_info(path: impl AsRef<Path>) -> Result<BTreeMap<u32, ModelInfo>, BopError> {
    let path = path.as_ref();
    let raw: BTreeMap<String, RawModelInfo> = parse_json(path, &read_text(path)?)?;
    let mut out = BTreeMap::new();
    for (key, entry) in raw {
        let obj_id: u32 = key.parse().map_err(|_| BopError::BadModelInfo {
            obj_id: key.clone(),
            reason: "object key is not an unsigned integer".into(),
        })?;
        if obj_id == 0 {
            return Err(BopError::BadModelInfo {
                obj_id: key,
                reason: "obj_id must be positive".into(),
            });
        }
        let info = model_info_from_raw(&entry).map_err(|reason| BopError::BadModelInfo {
            obj_id: key.clone(),
            reason,
        })?;
        out.insert(obj_id, info);
    }
    Ok(out)
}

/// Writes `models_info.json` with sorted keys; the identity symmetry is kept
/// implicit, matching the BOP convention.
pub fn write_models_info(
    path: impl AsRef<Path>,
    infos: &BTreeMap<u32, ModelInfo>,
) -> Result<(), BopError> {
    let path = path.as_ref();
    let raw: BTreeMap<String, RawModelInfo> = infos
        .iter()
        .map(|(obj_id, info)| (obj_id.to_string(), model_info_to_raw(info)))
        .collect();
    write_text(path, &to_json_pretty(path, &raw)?)
}

/// The three object groupings used for reporting.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Category {
    Can,
    Household,
    Industry,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Can => "Can",
            Category::Household => "Household",
            Category::Industry => "Industry",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Object-to-category assignment; each evaluated object needs exactly one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CategoryMap {
    map: BTreeMap<u32, Category>,
}

impl CategoryMap {
    pub fn new(map: BTreeMap<u32, Category>) -> Self {
        Self { map }
    }

    pub fn get(&self, obj_id: u32) -> Option<Category> {
        self.map.get(&obj_id).copied()
    }

    pub fn insert(&mut self, obj_id: u32, category: Category) {
        self.map.insert(obj_id, category);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, Category)> + '_ {
        self.map.iter().map(|(&k, &v)| (k, v))
    }

    /// Reads `categories.json`: `{"<obj_id>": "Can" | "Household" | "Industry"}`.
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self, BopError> {
        let path = path.as_ref();
        let raw: BTreeMap<String, Category> = parse_json(path, &read_text(path)?)?;
        let mut map = BTreeMap::new();
        for (key, category) in raw {
            let obj_id: u32 = key
                .parse()
                .map_err(|_| BopError::BadCategoryKey { key: key.clone() })?;
            map.insert(obj_id, category);
        }
        Ok(Self { map })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), BopError> {
        let path = path.as_ref();
        let raw: BTreeMap<String, Category> = self
            .map
            .iter()
            .map(|(obj_id, &category)| (obj_id.to_string(), category))
            .collect();
        write_text(path, &to_json_pretty(path, &raw)?)
    }
}
