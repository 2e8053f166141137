//! Writes sampled layouts to disk in the BOP directory layout.
//!
//! A scene directory holds `scene_gt.json` and `scene_camera.json` keyed by
//! image id, one 16-bit depth PNG per image under `depth/`, one 8-bit
//! visibility mask per ground-truth instance per image under `mask_visib/`,
//! and a `metadata.json` recording the sampled lighting, background,
//! materials, and per-image visibility fractions. [`generate_dataset`]
//! produces a whole dataset — `models/` with PLY meshes and
//! `models_info.json`, plus `scene_{:06}` directories — sampling scenes in
//! parallel.

use super::{
    sample_cameras, sample_layout, Background, GenConfig, LayoutMode, Lighting, MaterialParams,
    SceneGenError, SceneLayout,
};
use crate::bopio::{
    to_json_pretty, write_models_info, write_scene_camera, write_scene_gt, write_text, ModelInfo,
    SceneCameraEntry, SceneGtEntry,
};
use crate::geometry::{mesh_diameter, save_mesh, PlyFormat, TriMesh};
use crate::metrics::SymmetrySpec;
use crate::raster::{rasterize_depth_scene, write_depth_png, Pose, RasterError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// One instance as recorded in a scene's `metadata.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub obj_id: u32,
    /// Distractors occlude but carry no ground-truth annotation.
    pub distractor: bool,
    pub material: MaterialParams,
    /// Visible fraction of this instance's unoccluded silhouette, indexed by
    /// image id; 0.0 when the instance projects outside the image entirely.
    pub visib_fract: Vec<f64>,
}

/// Contents of a scene's `metadata.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub scene_index: u64,
    pub mode: LayoutMode,
    pub lighting: Lighting,
    pub background: Background,
    pub image_count: usize,
    pub instances: Vec<InstanceRecord>,
}

/// Totals from [`generate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub scenes: usize,
    pub images: usize,
    /// Ground-truth entries summed over all images.
    pub gt_instances: usize,
}

fn create_dir(path: &Path) -> Result<(), SceneGenError> {
    fs::create_dir_all(path).map_err(|source| SceneGenError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// 8-bit mask PNG: 255 where `mask` is set, 0 elsewhere, row-major.
fn write_mask_png(
    path: &Path,
    mask: &[bool],
    width: u32,
    height: u32,
) -> Result<(), SceneGenError> {
    debug_assert_eq!(mask.len(), (width * height) as usize);
    let img = image::GrayImage::from_fn(width, height, |x, y| {
        let on = mask[y as usize * width as usize + x as usize];
        image::Luma([if on { 255u8 } else { 0 }])
    });
    img.save(path).map_err(RasterError::Image)?;
    Ok(())
}

/// Renders and writes one scene directory for `layout`.
///
/// `layout.cameras` must be non-empty and every placed instance needs a mesh
/// in `objects`. Image ids are camera indices. Ground-truth poses are written
/// in the camera frame; mask files are named `{im_id:06}_{gt_index:06}.png`
/// where the index follows the `scene_gt.json` entry order. A pixel counts as
/// visible when the instance rendered alone covers it at a depth no farther
/// than the full scene's.
pub fn emit_bop_scene(
    layout: &SceneLayout,
    objects: &BTreeMap<u32, TriMesh>,
    cfg: &GenConfig,
    scene_dir: impl AsRef<Path>,
) -> Result<SceneMetadata, SceneGenError> {
    cfg.validate()?;
    let scene_dir = scene_dir.as_ref();
    if layout.instances.is_empty() {
        return Err(SceneGenError::BadConfig("layout has no instances"));
    }
    if layout.cameras.is_empty() {
        return Err(SceneGenError::BadConfig("layout has no cameras"));
    }
    for inst in &layout.instances {
        if !objects.contains_key(&inst.obj_id) {
            return Err(SceneGenError::MissingMesh {
                obj_id: inst.obj_id,
            });
        }
    }
    let depth_dir = scene_dir.join("depth");
    let mask_dir = scene_dir.join("mask_visib");
    for dir in [scene_dir, &depth_dir, &mask_dir] {
        create_dir(dir)?;
    }

    let k = &cfg.camera;
    let mut scene_gt: BTreeMap<u64, Vec<SceneGtEntry>> = BTreeMap::new();
    let mut scene_camera: BTreeMap<u64, SceneCameraEntry> = BTreeMap::new();
    let mut visib: Vec<Vec<f64>> = vec![Vec::with_capacity(layout.cameras.len()); layout.instances.len()];

    for (im, cam) in layout.cameras.iter().enumerate() {
        let im_id = im as u64;
        let world_to_cam = cam.inverse();
        let poses: Vec<Pose> = layout
            .instances
            .iter()
            .map(|inst| world_to_cam.compose(&inst.pose))
            .collect();
        let items: Vec<(&TriMesh, &Pose)> = layout
            .instances
            .iter()
            .zip(&poses)
            .map(|(inst, pose)| (&objects[&inst.obj_id], pose))
            .collect();
        let scene_depth = rasterize_depth_scene(&items, k);
        write_depth_png(
            depth_dir.join(format!("{im_id:06}.png")),
            &scene_depth,
            cfg.depth_scale,
        )?;

        let mut gt_entries = Vec::new();
        for (j, inst) in layout.instances.iter().enumerate() {
            let alone = rasterize_depth_scene(&items[j..j + 1], k);
            let mut covered_pixels = 0usize;
            let mut visible_pixels = 0usize;
            let mask: Vec<bool> = alone
                .values()
                .iter()
                .zip(scene_depth.values())
                .map(|(&a, &s)| {
                    let covered = a > 0.0;
                    let visible = covered && a <= s;
                    covered_pixels += covered as usize;
                    visible_pixels += visible as usize;
                    visible
                })
                .collect();
            let fraction = if covered_pixels == 0 {
                0.0
            } else {
                visible_pixels as f64 / covered_pixels as f64
            };
            visib[j].push(fraction);
            if inst.is_ground_truth() {
                let gt_index = gt_entries.len();
                write_mask_png(
                    &mask_dir.join(format!("{im_id:06}_{gt_index:06}.png")),
                    &mask,
                    k.width,
                    k.height,
                )?;
                gt_entries.push(SceneGtEntry {
                    obj_id: inst.obj_id,
                    pose: poses[j],
                });
            }
        }
        scene_gt.insert(im_id, gt_entries);
        scene_camera.insert(
            im_id,
            SceneCameraEntry {
                cam_k: [k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0],
                depth_scale: cfg.depth_scale,
                width: Some(k.width),
                height: Some(k.height),
            },
        );
    }

    write_scene_gt(scene_dir.join("scene_gt.json"), &scene_gt)?;
    write_scene_camera(scene_dir.join("scene_camera.json"), &scene_camera)?;

    let metadata = SceneMetadata {
        scene_index: layout.scene_index,
        mode: layout.mode,
        lighting: layout.lighting,
        background: layout.background,
        image_count: layout.cameras.len(),
        instances: layout
            .instances
            .iter()
            .zip(visib)
            .map(|(inst, visib_fract)| InstanceRecord {
                obj_id: inst.obj_id,
                distractor: !inst.is_ground_truth(),
                material: inst.material,
                visib_fract,
            })
            .collect(),
    };
    let meta_path = scene_dir.join("metadata.json");
    write_text(&meta_path, &to_json_pretty(&meta_path, &metadata)?)?;
    Ok(metadata)
}

/// Samples and writes a complete dataset under `out_dir`.
///
/// Writes every mesh to `models/obj_{:06}.ply` and a `models_info.json`
/// covering the ground-truth objects (id 0, the distractor mesh, is rendered
/// but not annotated), with symmetry annotations taken from `symmetries`
/// where present. Scenes land in `scene_{:06}` directories, sampled and
/// rendered in parallel; the result is byte-for-byte reproducible from
/// `cfg.seed`.
pub fn generate_dataset(
    objects: &BTreeMap<u32, TriMesh>,
    symmetries: &BTreeMap<u32, SymmetrySpec>,
    cfg: &GenConfig,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetSummary, SceneGenError> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    if !objects.keys().any(|&id| id != 0) {
        return Err(SceneGenError::NoObjects);
    }

    let models_dir = out_dir.join("models");
    create_dir(&models_dir)?;
    let mut infos = BTreeMap::new();
    for (&obj_id, mesh) in objects {
        save_mesh(
            models_dir.join(format!("obj_{obj_id:06}.ply")),
            mesh,
            PlyFormat::BinaryLittleEndian,
        )?;
        if obj_id == 0 {
            continue;
        }
        let (lo, hi) = mesh.bounding_box();
        infos.insert(
            obj_id,
            ModelInfo {
                diameter: mesh_diameter(mesh)?,
                min: lo.coords,
                size: hi - lo,
                symmetries: symmetries
                    .get(&obj_id)
                    .cloned()
                    .unwrap_or_else(SymmetrySpec::none),
            },
        );
    }
    write_models_info(models_dir.join("models_info.json"), &infos)?;

    let metas: Vec<SceneMetadata> = (0..cfg.scene_count as u64)
        .into_par_iter()
        .map(|scene_index| {
            let mut layout = sample_layout(objects, cfg, scene_index)?;
            layout.cameras = sample_cameras(&layout, cfg, cfg.cameras_per_scene)?;
            emit_bop_scene(
                &layout,
                objects,
                cfg,
                out_dir.join(format!("scene_{scene_index:06}")),
            )
        })
        .collect::<Result<_, _>>()?;

    let images = metas.iter().map(|m| m.image_count).sum();
    let gt_instances = metas
        .iter()
        .map(|m| m.image_count * m.instances.iter().filter(|i| !i.distractor).count())
        .sum();
    Ok(DatasetSummary {
        scenes: metas.len(),
        images,
        gt_instances,
    })
}

#[cfg(test)]
mod tests {
    use super::super::look_at_rotation;
    use super::*;
    use crate::bopio::{
        evaluate_dataset, read_models_info, read_scene_camera, read_scene_gt, Category,
        CategoryMap, EvalConfig, ResultRecord,
    };
    use crate::raster::{read_depth_png, CameraIntrinsics};
    use nalgebra::{Point3, Vector3};
    use tempfile::TempDir;

    /// Axis-aligned box mesh centered at the origin.
    fn box_mesh(sx: f64, sy: f64, sz: f64) -> TriMesh {
        let h = Vector3::new(sx / 2.0, sy / 2.0, sz / 2.0);
        let vertices = (0..8)
            .map(|i| {
                Point3::new(
                    if i & 1 == 0 { -h.x } else { h.x },
                    if i & 2 == 0 { -h.y } else { h.y },
                    if i & 4 == 0 { -h.z } else { h.z },
                )
            })
            .collect();
        let triangles = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        TriMesh {
            vertices,
            triangles,
            vertex_normals: None,
        }
    }

    fn small_camera_config(mode: LayoutMode) -> GenConfig {
        let mut cfg = GenConfig::new(mode);
        cfg.camera = CameraIntrinsics::new(150.0, 150.0, 80.0, 60.0, 160, 120).unwrap();
        cfg
    }

    /// A camera at `eye` looking at `target` as a world-from-camera pose.
    fn camera_at(eye: Point3<f64>, target: Point3<f64>) -> Pose {
        Pose::new(look_at_rotation(&eye, &target), eye.coords).unwrap()
    }

    fn manual_instance(obj_id: u32, mesh: &TriMesh, pose: Pose) -> super::super::SceneInstance {
        let (lo, hi) = mesh.bounding_box();
        let center = Point3::from((lo.coords + hi.coords) / 2.0);
        let radius = mesh
            .vertices
            .iter()
            .map(|v| (v - center).norm())
            .fold(0.0, f64::max);
        super::super::SceneInstance {
            obj_id,
            pose,
            material: MaterialParams {
                metallic: 0.8,
                specular: 0.5,
                roughness: 0.3,
            },
            sphere_center: pose.transform_point(&center),
            sphere_radius: radius,
        }
    }

    #[test]
    fn emitted_scene_has_the_expected_files() {
        let dir = TempDir::new().unwrap();
        let mut objects = BTreeMap::new();
        objects.insert(1u32, box_mesh(60.0, 40.0, 20.0));
        objects.insert(2u32, box_mesh(30.0, 30.0, 30.0));
        let cfg = small_camera_config(LayoutMode::SiMo);

        let layout = SceneLayout {
            scene_index: 0,
            mode: LayoutMode::SiMo,
            instances: vec![
                manual_instance(
                    1,
                    &objects[&1],
                    Pose::from_translation(Vector3::new(-60.0, 0.0, 0.0)),
                ),
                manual_instance(
                    2,
                    &objects[&2],
                    Pose::from_translation(Vector3::new(60.0, 0.0, 0.0)),
                ),
            ],
            cameras: vec![
                camera_at(Point3::new(0.0, 0.0, 600.0), Point3::new(0.0, 0.0, 0.0)),
                camera_at(Point3::new(100.0, 300.0, 500.0), Point3::new(0.0, 0.0, 0.0)),
            ],
            lighting: Lighting::AmbientOnly,
            background: Background::Black,
        };

        let meta = emit_bop_scene(&layout, &objects, &cfg, dir.path()).unwrap();
        assert_eq!(meta.image_count, 2);
        assert_eq!(meta.instances.len(), 2);
        assert!(meta.instances.iter().all(|i| !i.distractor));

        let gt = read_scene_gt(dir.path().join("scene_gt.json")).unwrap();
        assert_eq!(gt.len(), 2);
        assert_eq!(gt[&0].len(), 2);
        assert_eq!(gt[&0][0].obj_id, 1);
        assert_eq!(gt[&0][1].obj_id, 2);
        let cams = read_scene_camera(dir.path().join("scene_camera.json")).unwrap();
        assert_eq!(cams.len(), 2);
        assert_eq!(cams[&0].width, Some(160));

        for im in 0..2 {
            let depth =
                read_depth_png(dir.path().join(format!("depth/{im:06}.png")), cfg.depth_scale)
                    .unwrap();
            assert_eq!(depth.width(), 160);
            assert!(depth.coverage() > 0, "image {im} rendered nothing");
            for inst in 0..2 {
                let mask_path = dir
                    .path()
                    .join(format!("mask_visib/{im:06}_{inst:06}.png"));
                let mask = image::open(&mask_path).unwrap().into_luma8();
                assert_eq!((mask.width(), mask.height()), (160, 120));
                let on = mask.pixels().filter(|p| p.0[0] == 255).count();
                let off = mask.pixels().filter(|p| p.0[0] == 0).count();
                assert_eq!(on + off, 160 * 120, "mask must be binary");
                assert!(on > 0, "instance {inst} invisible in image {im}");
            }
        }
        // Both boxes are fully visible from both viewpoints.
        for inst in &meta.instances {
            assert_eq!(inst.visib_fract, vec![1.0, 1.0]);
        }

        // The ground-truth poses reproduce the world layout: the camera-frame
        // pose of instance 0 maps the model origin to world (-60, 0, 0).
        let cam0 = &layout.cameras[0];
        let recovered = cam0.compose(&gt[&0][0].pose);
        assert!((recovered.translation() - Vector3::new(-60.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn occluded_instance_reports_zero_visibility() {
        let dir = TempDir::new().unwrap();
        let mut objects = BTreeMap::new();
        objects.insert(1u32, box_mesh(200.0, 200.0, 20.0));
        objects.insert(2u32, box_mesh(20.0, 20.0, 20.0));
        let cfg = small_camera_config(LayoutMode::SiMo);

        // Camera on +z looking at the origin; the large plate sits at z = 100
        // fully between the camera and the small box at the origin.
        let layout = SceneLayout {
            scene_index: 0,
            mode: LayoutMode::SiMo,
            instances: vec![
                manual_instance(
                    1,
                    &objects[&1],
                    Pose::from_translation(Vector3::new(0.0, 0.0, 100.0)),
                ),
                manual_instance(2, &objects[&2], Pose::identity()),
            ],
            cameras: vec![camera_at(
                Point3::new(0.0, 0.0, 700.0),
                Point3::new(0.0, 0.0, 0.0),
            )],
            lighting: Lighting::PointOnly,
            background: Background::FloorTexture,
        };

        let meta = emit_bop_scene(&layout, &objects, &cfg, dir.path()).unwrap();
        assert_eq!(meta.instances[0].visib_fract, vec![1.0]);
        assert_eq!(meta.instances[1].visib_fract, vec![0.0]);

        // The hidden instance still has a ground-truth entry and a mask file,
        // but the mask is empty.
        let gt = read_scene_gt(dir.path().join("scene_gt.json")).unwrap();
        assert_eq!(gt[&0].len(), 2);
        let mask = image::open(dir.path().join("mask_visib/000000_000001.png"))
            .unwrap()
            .into_luma8();
        assert!(mask.pixels().all(|p| p.0[0] == 0));
    }

    #[test]
    fn distractors_occlude_but_are_not_annotated() {
        let dir = TempDir::new().unwrap();
        let mut objects = BTreeMap::new();
        objects.insert(0u32, box_mesh(200.0, 200.0, 20.0));
        objects.insert(1u32, box_mesh(20.0, 20.0, 20.0));
        let cfg = small_camera_config(LayoutMode::MiSo);

        let layout = SceneLayout {
            scene_index: 3,
            mode: LayoutMode::MiSo,
            instances: vec![
                manual_instance(1, &objects[&1], Pose::identity()),
                manual_instance(
                    0,
                    &objects[&0],
                    Pose::from_translation(Vector3::new(0.0, 0.0, 100.0)),
                ),
            ],
            cameras: vec![camera_at(
                Point3::new(0.0, 0.0, 700.0),
                Point3::new(0.0, 0.0, 0.0),
            )],
            lighting: Lighting::MultiSpot,
            background: Background::Hdri,
        };

        let meta = emit_bop_scene(&layout, &objects, &cfg, dir.path()).unwrap();
        assert!(meta.instances[1].distractor);
        // The distractor hides the annotated box completely.
        assert_eq!(meta.instances[0].visib_fract, vec![0.0]);

        let gt = read_scene_gt(dir.path().join("scene_gt.json")).unwrap();
        assert_eq!(gt[&0].len(), 1);
        assert_eq!(gt[&0][0].obj_id, 1);
        // Exactly one mask: the ground-truth instance.
        assert!(dir.path().join("mask_visib/000000_000000.png").exists());
        assert!(!dir.path().join("mask_visib/000000_000001.png").exists());
        // The depth image shows the distractor's surface, not the hidden box:
        // plate front face at z = 100 + 10 -> 590 mm from the camera.
        let depth =
            read_depth_png(dir.path().join("depth/000000.png"), cfg.depth_scale).unwrap();
        let center = depth.get(80, 60);
        assert!((center - 590.0).abs() < 0.5, "depth at center {center}");
    }

    #[test]
    fn metadata_round_trips_through_json() {
        let dir = TempDir::new().unwrap();
        let mut objects = BTreeMap::new();
        objects.insert(1u32, box_mesh(30.0, 30.0, 30.0));
        let cfg = small_camera_config(LayoutMode::MiSo);
        let mut layout = sample_layout(&objects, &cfg, 5).unwrap();
        layout.cameras = sample_cameras(&layout, &cfg, 2).unwrap();
        let meta = emit_bop_scene(&layout, &objects, &cfg, dir.path()).unwrap();

        let text = std::fs::read_to_string(dir.path().join("metadata.json")).unwrap();
        let parsed: SceneMetadata = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, meta);
        // Background serializes under its conventional all-caps name.
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let bg = value["background"].as_str().unwrap();
        assert!(["Black", "FloorTexture", "HDRI"].contains(&bg));
    }

    #[test]
    fn generated_dataset_is_reproducible_and_self_consistent() {
        let dir_a = TempDir::new().unwrap();
        let dir_b = TempDir::new().unwrap();
        let mut objects = BTreeMap::new();
        objects.insert(1u32, box_mesh(50.0, 30.0, 20.0));
        objects.insert(2u32, box_mesh(25.0, 25.0, 25.0));
        objects.insert(3u32, box_mesh(40.0, 40.0, 10.0));
        let symmetries = BTreeMap::new();
        let mut cfg = small_camera_config(LayoutMode::SiMo);
        cfg.scene_count = 2;
        cfg.cameras_per_scene = 2;
        cfg.seed = 99;

        let summary = generate_dataset(&objects, &symmetries, &cfg, dir_a.path()).unwrap();
        assert_eq!(summary.scenes, 2);
        assert_eq!(summary.images, 4);
        assert!(summary.gt_instances >= summary.images);

        let infos = read_models_info(dir_a.path().join("models/models_info.json")).unwrap();
        assert_eq!(infos.len(), 3);
        assert!((infos[&2].diameter - (3.0f64).sqrt() * 25.0).abs() < 1e-9);
        for id in 1..=3u32 {
            assert!(dir_a.path().join(format!("models/obj_{id:06}.ply")).exists());
        }

        // Same seed, fresh directory: byte-identical annotation files.
        generate_dataset(&objects, &symmetries, &cfg, dir_b.path()).unwrap();
        for scene in 0..2 {
            for file in ["scene_gt.json", "scene_camera.json", "metadata.json"] {
                let rel = format!("scene_{scene:06}/{file}");
                let a = std::fs::read(dir_a.path().join(&rel)).unwrap();
                let b = std::fs::read(dir_b.path().join(&rel)).unwrap();
                assert_eq!(a, b, "{rel} differs between identical runs");
            }
        }

        // Feeding the ground truth back as estimates scores perfectly.
        let categories =
            CategoryMap::new((1..=3).map(|id| (id, Category::Household)).collect());
        let mut results = Vec::new();
        for scene in 0..2u64 {
            let gt = read_scene_gt(
                dir_a
                    .path()
                    .join(format!("scene_{scene:06}/scene_gt.json")),
            )
            .unwrap();
            for (&im_id, entries) in &gt {
                for entry in entries {
                    results.push(ResultRecord {
                        scene_id: scene,
                        im_id,
                        obj_id: entry.obj_id,
                        score: 1.0,
                        pose: entry.pose,
                        time: -1.0,
                    });
                }
            }
        }
        let evaluation =
            evaluate_dataset(dir_a.path(), &results, &categories, &EvalConfig::default())
                .unwrap();
        assert_eq!(evaluation.overall.total, results.len());
        assert_eq!(evaluation.overall.ar, 1.0);
        assert_eq!(evaluation.overall.recall_vsd, 1.0);
    }

    #[test]
    fn emit_rejects_missing_meshes_and_empty_layouts() {
        let dir = TempDir::new().unwrap();
        let mut objects = BTreeMap::new();
        objects.insert(1u32, box_mesh(30.0, 30.0, 30.0));
        let cfg = small_camera_config(LayoutMode::MiSo);

        let mut layout = sample_layout(&objects, &cfg, 0).unwrap();
        layout.cameras = sample_cameras(&layout, &cfg, 1).unwrap();
        let mut missing = layout.clone();
        for inst in &mut missing.instances {
            inst.obj_id = 9;
        }
        assert!(matches!(
            emit_bop_scene(&missing, &objects, &cfg, dir.path()).unwrap_err(),
            SceneGenError::MissingMesh { obj_id: 9 }
        ));

        let mut no_cameras = layout.clone();
        no_cameras.cameras.clear();
        assert!(matches!(
            emit_bop_scene(&no_cameras, &objects, &cfg, dir.path()).unwrap_err(),
            SceneGenError::BadConfig(_)
        ));
    }
}
