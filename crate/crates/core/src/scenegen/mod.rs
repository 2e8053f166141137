//! Randomized scene layouts with BOP-format output.
//!
//! Two placement strategies: `MiSo` scenes hold 1–10 instances of one object;
//! `SiMo` scenes hold single instances of distinct objects. Poses are sampled
//! with uniform random rotations and rejection-sampled positions until
//! bounding spheres are disjoint; each scene also records a lighting
//! scenario, a background type, and per-instance material parameters —
//! metadata only, since this crate renders depth, not appearance. Cameras sit
//! on the upper hemisphere around the scene centroid, look at it with a
//! regularized up-vector, and are resampled until every instance center is in
//! view. Everything is reproducible from `(seed, scene_index)`.

mod emit;

pub use emit::{
    emit_bop_scene, generate_dataset, DatasetSummary, InstanceRecord, SceneMetadata,
};

use crate::geometry::{GeometryError, PlyError, TriMesh};
use crate::raster::{project, CameraIntrinsics, Pose, RasterError, DEFAULT_DEPTH_SCALE};
use nalgebra::{Matrix3, Point3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

/// Errors from layout sampling and scene emission.
#[derive(Debug, Error)]
pub enum SceneGenError {
    #[error("no objects to place (need at least one id > 0)")]
    NoObjects,
    #[error("no mesh provided for object {obj_id}")]
    MissingMesh { obj_id: u32 },
    #[error("could not place a disjoint layout within {attempts} attempts per instance")]
    PlacementFailed { attempts: usize },
    #[error("no camera kept every instance in view within {attempts} attempts")]
    CameraRejected { attempts: usize },
    #[error("invalid config: {0}")]
    BadConfig(&'static str),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Bop(#[from] crate::bopio::BopError),
}

/// Largest number of ground-truth instances in a scene.
pub const MAX_INSTANCES: usize = 10;
/// Position rejection-sampling budget per instance before the layout retries
/// with one instance fewer.
pub const PLACEMENT_ATTEMPTS: usize = 10_000;
/// Sampling budget per camera pose for the all-instances-in-view constraint.
pub const CAMERA_ATTEMPTS: usize = 1_000;

/// Placement strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayoutMode {
    /// Multiple instances (1–10) of a single object.
    MiSo,
    /// Single instances of multiple distinct objects.
    SiMo,
}

/// Recorded lighting scenario. Metadata only: depth output is unaffected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lighting {
    AmbientAndPoint,
    PointOnly,
    AmbientOnly,
    AmbientAndSpot,
    MultiSpot,
}

impl Lighting {
    pub const ALL: [Lighting; 5] = [
        Lighting::AmbientAndPoint,
        Lighting::PointOnly,
        Lighting::AmbientOnly,
        Lighting::AmbientAndSpot,
        Lighting::MultiSpot,
    ];
}

/// Recorded background type. Metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Background {
    Black,
    FloorTexture,
    #[serde(rename = "HDRI")]
    Hdri,
}

impl Background {
    pub const ALL: [Background; 3] =
        [Background::Black, Background::FloorTexture, Background::Hdri];
}

/// Sampled BSDF triple, each component in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub metallic: f64,
    pub specular: f64,
    pub roughness: f64,
}

/// One placed instance with its world pose and bounding sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneInstance {
    /// Object id; 0 marks a distractor, which is rendered for occlusion but
    /// excluded from ground truth.
    pub obj_id: u32,
    /// World-from-model transform.
    pub pose: Pose,
    pub material: MaterialParams,
    /// Bounding-sphere center in world coordinates.
    pub sphere_center: Point3<f64>,
    pub sphere_radius: f64,
}

impl SceneInstance {
    /// Whether the instance belongs in the ground truth.
    pub fn is_ground_truth(&self) -> bool {
        self.obj_id != 0
    }
}

/// A sampled scene: placed instances, cameras, and recorded metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneLayout {
    pub scene_index: u64,
    pub mode: LayoutMode,
    /// Ground-truth instances first, then any distractors.
    pub instances: Vec<SceneInstance>,
    /// World-from-camera transforms (the translation is the camera center).
    pub cameras: Vec<Pose>,
    pub lighting: Lighting,
    pub background: Background,
}

impl SceneLayout {
    /// Instances that belong in the ground truth (obj_id > 0), in order.
    pub fn gt_instances(&self) -> impl Iterator<Item = &SceneInstance> {
        self.instances.iter().filter(|i| i.is_ground_truth())
    }

    /// Mean of the instance bounding-sphere centers.
    pub fn centroid(&self) -> Point3<f64> {
        assert!(!self.instances.is_empty(), "centroid of an empty layout");
        let sum = self
            .instances
            .iter()
            .fold(Vector3::zeros(), |acc, i| acc + i.sphere_center.coords);
        Point3::from(sum / self.instances.len() as f64)
    }
}

/// Generator configuration. [`GenConfig::new`] fills in the documented
/// defaults; all lengths are millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub mode: LayoutMode,
    pub scene_count: usize,
    pub cameras_per_scene: usize,
    pub seed: u64,
    /// Placement box for instance positions (world frame).
    pub placement_min: Vector3<f64>,
    pub placement_max: Vector3<f64>,
    /// Camera distance range from the scene centroid, `(low, high)`.
    pub camera_distance: (f64, f64),
    /// Intrinsics used for the in-view constraint and all emitted images.
    pub camera: CameraIntrinsics,
    /// Millimetres per stored depth unit in emitted PNGs.
    pub depth_scale: f64,
    /// Extra obj-id-0 instances per scene for occlusion (need a mesh under
    /// id 0).
    pub distractor_count: usize,
    pub metallic_range: (f64, f64),
    pub specular_range: (f64, f64),
    pub roughness_range: (f64, f64),
}

impl GenConfig {
    /// Defaults: 10 scenes x 5 cameras, seed 0, a ±150 mm placement box,
    /// cameras 600–1400 mm out on a 640x480 f=600 px camera, depth scale
    /// 0.1 mm, no distractors, and material ranges metallic [0.6, 1.0],
    /// specular [0.2, 0.8], roughness [0.05, 0.6].
    pub fn new(mode: LayoutMode) -> Self {
        Self {
            mode,
            scene_count: 10,
            cameras_per_scene: 5,
            seed: 0,
            placement_min: Vector3::new(-150.0, -150.0, -150.0),
            placement_max: Vector3::new(150.0, 150.0, 150.0),
            camera_distance: (600.0, 1400.0),
            camera: CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480)
                .expect("default intrinsics are valid"),
            depth_scale: DEFAULT_DEPTH_SCALE,
            distractor_count: 0,
            metallic_range: (0.6, 1.0),
            specular_range: (0.2, 0.8),
            roughness_range: (0.05, 0.6),
        }
    }

    pub fn validate(&self) -> Result<(), SceneGenError> {
        if self.scene_count < 1 {
            return Err(SceneGenError::BadConfig("scene_count must be >= 1"));
        }
        if self.cameras_per_scene < 1 {
            return Err(SceneGenError::BadConfig("cameras_per_scene must be >= 1"));
        }
        for i in 0..3 {
            if !(self.placement_min[i].is_finite()
                && self.placement_max[i].is_finite()
                && self.placement_min[i] < self.placement_max[i])
            {
                return Err(SceneGenError::BadConfig(
                    "placement box must have min < max on every axis",
                ));
            }
        }
        let (lo, hi) = self.camera_distance;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(SceneGenError::BadConfig(
                "camera distance range must satisfy 0 < low <= high",
            ));
        }
        for (lo, hi) in [
            self.metallic_range,
            self.specular_range,
            self.roughness_range,
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(SceneGenError::BadConfig(
                    "material ranges must satisfy 0 <= low <= high <= 1",
                ));
            }
        }
        if !(self.depth_scale.is_finite() && self.depth_scale > 0.0) {
            return Err(SceneGenError::BadConfig("depth_scale must be positive"));
        }
        Ok(())
    }

    /// Total depth images this config produces.
    pub fn image_count(&self) -> usize {
        self.scene_count * self.cameras_per_scene
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent per-scene seed; `stream` separates layout (0) from camera (1)
/// sampling so adding cameras never disturbs placement.
fn scene_rng(seed: u64, scene_index: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(scene_index.wrapping_add(1))));
    rng.set_stream(stream);
    rng
}

/// Bounding sphere: box center, radius to the farthest vertex.
fn bounding_sphere(mesh: &TriMesh) -> (Point3<f64>, f64) {
    let (lo, hi) = mesh.bounding_box();
    let center = Point3::from((lo.coords + hi.coords) / 2.0);
    let radius = mesh
        .vertices
        .iter()
        .map(|v| (v - center).norm())
        .fold(0.0, f64::max);
    (center, radius)
}

/// Uniform random rotation via uniform unit-quaternion sampling.
fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let u3: f64 = rng.gen();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (s2, c2) = (std::f64::consts::TAU * u2).sin_cos();
    let (s3, c3) = (std::f64::consts::TAU * u3).sin_cos();
    let q = Quaternion::new(b * c3, a * s2, a * c2, b * s3);
    UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner()
}

fn sample_material(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> MaterialParams {
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    };
    MaterialParams {
        metallic: draw(rng, cfg.metallic_range),
        specular: draw(rng, cfg.specular_range),
        roughness: draw(rng, cfg.roughness_range),
    }
}

/// Places every id in `ids` with a disjoint bounding sphere, or gives up.
fn try_place(
    ids: &[u32],
    spheres: &BTreeMap<u32, (Point3<f64>, f64)>,
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<SceneInstance>> {
    let mut placed: Vec<SceneInstance> = Vec::with_capacity(ids.len());
    for &obj_id in ids {
        let (model_center, radius) = spheres[&obj_id];
        let mut success = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let rotation = random_rotation(rng);
            let translation = Vector3::new(
                rng.gen_range(cfg.placement_min.x..cfg.placement_max.x),
                rng.gen_range(cfg.placement_min.y..cfg.placement_max.y),
                rng.gen_range(cfg.placement_min.z..cfg.placement_max.z),
            );
            let pose = Pose::new(rotation, translation)
                .expect("unit-quaternion rotation is orthonormal");
            let center = pose.transform_point(&model_center);
            let disjoint = placed
                .iter()
                .all(|p| (p.sphere_center - center).norm() > p.sphere_radius + radius);
            if disjoint {
                let material = sample_material(cfg, rng);
                placed.push(SceneInstance {
                    obj_id,
                    pose,
                    material,
                    sphere_center: center,
                    sphere_radius: radius,
                });
                success = true;
                break;
            }
        }
        if !success {
            return None;
        }
    }
    Some(placed)
}

/// Samples a scene layout (without cameras) for `scene_index`.
///
/// `objects` maps object ids to meshes; id 0, if present, is the distractor
/// mesh. The instance count is uniform in 1..=10 (SiMo additionally capped at
/// the number of distinct objects); positions are rejection-sampled in the
/// placement box until bounding spheres are disjoint, retrying with one
/// instance fewer whenever an instance exhausts its attempt budget. The
/// result is fully determined by `(cfg.seed, scene_index)`.
pub fn sample_layout(
    objects: &BTreeMap<u32, TriMesh>,
    cfg: &GenConfig,
    scene_index: u64,
) -> Result<SceneLayout, SceneGenError> {
    cfg.validate()?;
    let gt_ids: Vec<u32> = objects.keys().copied().filter(|&id| id != 0).collect();
    if gt_ids.is_empty() {
        return Err(SceneGenError::NoObjects);
    }
    if cfg.distractor_count > 0 && !objects.contains_key(&0) {
        return Err(SceneGenError::MissingMesh { obj_id: 0 });
    }
    let spheres: BTreeMap<u32, (Point3<f64>, f64)> = objects
        .iter()
        .map(|(&id, mesh)| (id, bounding_sphere(mesh)))
        .collect();

    let mut rng = scene_rng(cfg.seed, scene_index, 0);
    let drawn = rng.gen_range(1..=MAX_INSTANCES);
    let chosen: Vec<u32> = match cfg.mode {
        LayoutMode::MiSo => {
            let obj = gt_ids[rng.gen_range(0..gt_ids.len())];
            vec![obj; drawn]
        }
        LayoutMode::SiMo => {
            // Partial Fisher-Yates: the first `count` entries end up a
            // uniform sample without replacement.
            let count = drawn.min(gt_ids.len());
            let mut pool = gt_ids.clone();
            for i in 0..count {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(count);
            pool
        }
    };
    let lighting = Lighting::ALL[rng.gen_range(0..Lighting::ALL.len())];
    let background = Background::ALL[rng.gen_range(0..Background::ALL.len())];

    let mut count = chosen.len();
    let instances = loop {
        let mut ids = chosen[..count].to_vec();
        ids.extend(std::iter::repeat_n(0, cfg.distractor_count));
        match try_place(&ids, &spheres, cfg, &mut rng) {
            Some(placed) => break placed,
            None if count > 1 => count -= 1,
            None => {
                return Err(SceneGenError::PlacementFailed {
                    attempts: PLACEMENT_ATTEMPTS,
                })
            }
        }
    };

    Ok(SceneLayout {
        scene_index,
        mode: cfg.mode,
        instances,
        cameras: Vec::new(),
        lighting,
        background,
    })
}

/// Rotation of a camera at `eye` looking at `target`: z forward, y down.
///
/// The image x-axis is kept horizontal against world +z; within 1 degree of a
/// vertical view direction the reference switches to world +x.
fn look_at_rotation(eye: &Point3<f64>, target: &Point3<f64>) -> Matrix3<f64> {
    let forward = (target - eye).normalize();
    let near_vertical = forward.z.abs() > 1.0_f64.to_radians().cos();
    let up_ref = if near_vertical {
        Vector3::x()
    } else {
        Vector3::z()
    };
    let x = forward.cross(&up_ref).normalize();
    let y = forward.cross(&x);
    Matrix3::from_columns(&[x, y, forward])
}

/// Samples `count` world-from-camera poses for a layout.
///
/// Centers lie on the upper hemisphere (world +z) around the layout centroid
/// at a distance uniform in the configured range; each camera looks at the
/// centroid and is resampled until every instance center projects inside the
/// image. Deterministic given `(cfg.seed, layout.scene_index)`, on a stream
/// independent of the layout sampling.
pub fn sample_cameras(
    layout: &SceneLayout,
    cfg: &GenConfig,
    count: usize,
) -> Result<Vec<Pose>, SceneGenError> {
    cfg.validate()?;
    if count < 1 {
        return Err(SceneGenError::BadConfig("camera count must be >= 1"));
    }
    let target = layout.centroid();
    let centers: Vec<Point3<f64>> = layout.instances.iter().map(|i| i.sphere_center).collect();
    let (lo, hi) = cfg.camera_distance;
    let mut rng = scene_rng(cfg.seed, layout.scene_index, 1);
    let mut cameras = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..CAMERA_ATTEMPTS {
            // Uniform direction on the upper hemisphere (z >= 0).
            let z: f64 = rng.gen();
            let phi = std::f64::consts::TAU * rng.gen::<f64>();
            let s = (1.0 - z * z).max(0.0).sqrt();
            let direction = Vector3::new(s * phi.cos(), s * phi.sin(), z);
            let distance = if lo == hi { lo } else { rng.gen_range(lo..hi) };
            let eye = target + distance * direction;
            let rotation = look_at_rotation(&eye, &target);
            let pose = Pose::new(rotation, eye.coords).expect("look-at basis is orthonormal");
            let world_to_cam = pose.inverse();
            let in_view = project(&cfg.camera, &world_to_cam, &centers)
                .iter()
                .all(|p| {
                    p.as_ref().is_some_and(|px| {
                        px.u >= 0.0
                            && px.u < cfg.camera.width as f64
                            && px.v >= 0.0
                            && px.v < cfg.camera.height as f64
                    })
                });
            if in_view {
                accepted = Some(pose);
                break;
            }
        }
        match accepted {
            Some(pose) => cameras.push(pose),
            None => {
                return Err(SceneGenError::CameraRejected {
                    attempts: CAMERA_ATTEMPTS,
                })
            }
        }
    }
    Ok(cameras)
}
