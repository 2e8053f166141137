//! Geometry tooling for 6D object-pose datasets.
//!
//! The crate covers the full loop from model to score:
//!
//! * [`geometry`] — triangle meshes, PLY I/O, area-uniform surface sampling,
//!   object diameters.
//! * [`raster`] — pinhole projection, a software z-buffer depth renderer, and
//!   depth-based visibility tests for surface samples.
//! * [`keypoints`] — covariance-eigenvalue saliency over visible surface
//!   samples, keypoint selection, and Gaussian heatmap rendering.
//! * [`metrics`] — symmetry-aware pose-error metrics (VSD, MSSD, MSPD,
//!   ADD/ADI, rotation/translation errors) and threshold-grid recalls.
//! * [`bopio`] — BOP-layout dataset files: scene ground truth, per-image
//!   cameras, model info, results CSV, and end-to-end dataset evaluation.
//! * [`scenegen`] — randomized multi-instance scene layouts with rendered
//!   depth and visibility masks, emitted in the same BOP layout.
//!
//! All linear algebra is `f64` via [`nalgebra`]; distances are millimetres
//! and angles are radians unless a name says otherwise.

// Negated float comparisons like `!(x > 0.0)` are deliberate throughout:
// they treat NaN as out of range, which `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bopio;
pub mod geometry;
pub mod grid;
pub mod keypoints;
pub mod metrics;
pub mod raster;
pub mod scenegen;

pub use nalgebra;

pub use bopio::{
    evaluate_dataset, pose_from_row_major, pose_to_row_major, read_models_info, read_results_csv,
    read_scene_camera, read_scene_gt, write_models_info, write_results_csv, write_scene_camera,
    write_scene_gt, BopError, Category, CategoryMap, DatasetEvaluation, EvalConfig, ModelInfo,
    ResultRecord, SceneCameraEntry, SceneGtEntry,
};
pub use geometry::{
    compute_vertex_normals, load_mesh, mesh_diameter, sample_surface, save_mesh, GeometryError,
    PlyError, PlyFormat, SurfaceSamples, TriMesh,
};
pub use keypoints::{
    covariance, eigen3_sym, local_density, render_heatmap, saliency_field, select_keypoints,
    CombineMode, Heatmap, KeypointError, KeypointSet, NeighborhoodConfig, SaliencySample,
};
pub use metrics::{
    add_adi, aggregate_reports, expand_symmetries, mspd, mssd, re_te, recall_and_ar, vsd,
    vsd_multi, vsd_tau_grid, ContinuousSymmetry, MetricSummary, MetricsError, PoseErrorReport,
    RecallFlags, SymmetrySpec,
};
pub use raster::{
    project, rasterize_depth, visible_mask, CameraIntrinsics, DepthMap, PixelPoint, Pose,
    RasterError,
};
pub use scenegen::{
    emit_bop_scene, generate_dataset, sample_cameras, sample_layout, Background, GenConfig,
    LayoutMode, Lighting, MaterialParams, SceneGenError, SceneInstance, SceneLayout,
};
