//! Symmetry-aware pose-error metrics and threshold-grid recall aggregation.
//!
//! The error functions compare an estimated pose against a ground-truth pose
//! over an explicit list of symmetry transforms (see [`expand_symmetries`]):
//! maximum surface distance ([`mssd`], mm), maximum projection distance
//! ([`mspd`], pixels), average distance ([`add_adi`], mm), angular and
//! translational error ([`re_te`], degrees / mm), and visible surface
//! discrepancy ([`vsd`], unitless in `[0, 1]`). [`recall_and_ar`] folds
//! per-instance [`PoseErrorReport`]s into recall rates over the standard
//! threshold grids and their average AR.

mod vsd;

pub use vsd::{vsd, vsd_multi};

use crate::grid::SpatialGrid;
use crate::raster::{project, CameraIntrinsics, Pose};
use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from metric evaluation.
#[derive(Debug, Error)]
pub enum MetricsError {
    /// Continuous symmetry axes must be unit vectors.
    #[error("symmetry axis has length {length}, expected 1 within 1e-9")]
    NonUnitAxis { length: f64 },
    /// Projection metrics require the ground truth fully in front of the camera.
    #[error("ground-truth pose places vertex {vertex} behind the camera")]
    GtVertexBehindCamera { vertex: usize },
    /// The three depth maps must agree in size.
    #[error("depth maps differ in size: {a_w}x{a_h} vs {b_w}x{b_h}")]
    DepthSizeMismatch { a_w: u32, a_h: u32, b_w: u32, b_h: u32 },
}

/// A continuous rotational symmetry: every rotation about `axis` (anchored at
/// `offset`) maps the object onto itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousSymmetry {
    /// Unit rotation axis (length 1 within 1e-9).
    pub axis: Vector3<f64>,
    /// A point on the axis, mm.
    pub offset: Vector3<f64>,
}

impl ContinuousSymmetry {
    /// Validates that `axis` has unit length within 1e-9.
    pub fn new(axis: Vector3<f64>, offset: Vector3<f64>) -> Result<Self, MetricsError> {
        let length = axis.norm();
        if !((length - 1.0).abs() <= 1e-9) {
            return Err(MetricsError::NonUnitAxis { length });
        }
        Ok(Self { axis, offset })
    }
}

/// An object's symmetry annotation: a finite transform set plus optional
/// continuous rotation axes.
///
/// `discrete` always contains the identity exactly once (the constructors
/// maintain this), so every symmetry set yields at least one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySpec {
    pub discrete: Vec<Pose>,
    pub continuous: Vec<ContinuousSymmetry>,
}

impl SymmetrySpec {
    /// The trivial spec: identity only.
    pub fn none() -> Self {
        Self {
            discrete: vec![Pose::identity()],
            continuous: Vec::new(),
        }
    }

    /// Builds a spec from extra discrete transforms (identity is implied and
    /// near-identity entries are dropped) and continuous axes.
    pub fn new(
        extra_discrete: Vec<Pose>,
        continuous: Vec<ContinuousSymmetry>,
    ) -> Result<Self, MetricsError> {
        for c in &continuous {
            let length = c.axis.norm();
            if !((length - 1.0).abs() <= 1e-9) {
                return Err(MetricsError::NonUnitAxis { length });
            }
        }
        let mut discrete = vec![Pose::identity()];
        for pose in extra_discrete {
            if !poses_close(&pose, &Pose::identity(), 1e-6) {
                discrete.push(pose);
            }
        }
        Ok(Self { discrete, continuous })
    }

    /// Whether the object has any symmetry beyond the identity.
    pub fn is_symmetric(&self) -> bool {
        self.discrete.len() > 1 || !self.continuous.is_empty()
    }
}

/// Rotation angle of `r` in radians, in `[0, pi]`.
fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    (((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
}

fn poses_close(a: &Pose, b: &Pose, tol: f64) -> bool {
    rotation_angle(&(a.rotation().transpose() * b.rotation())) <= tol
        && (a.translation() - b.translation()).norm() <= tol
}

/// Expands a symmetry spec into an explicit transform list.
///
/// Each continuous axis is discretized at `step_degrees` (rotations `k * step`
/// for `k = 0..round(360/step)`, anchored at the axis offset) and composed
/// with every discrete transform (discrete applied first). The result is
/// deduplicated within a rotation-angle and translation tolerance of 1e-6 and
/// always contains the identity.
///
/// Panics when `step_degrees` is not positive and finite.
pub fn expand_symmetries(spec: &SymmetrySpec, step_degrees: f64) -> Vec<Pose> {
    assert!(
        step_degrees > 0.0 && step_degrees.is_finite(),
        "step_degrees must be positive and finite"
    );
    let mut continuous = Vec::new();
    for c in &spec.continuous {
        assert!(
            (c.axis.norm() - 1.0).abs() <= 1e-9,
            "symmetry axis must be unit length"
        );
        let steps = (360.0 / step_degrees).round().max(1.0) as usize;
        for k in 0..steps {
            let angle = (k as f64 * step_degrees).to_radians();
            let rotation = nalgebra::Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(c.axis),
                angle,
            )
            .into_inner();
            let translation = c.offset - rotation * c.offset;
            continuous.push(
                Pose::new(rotation, translation).expect("axis-angle rotation is orthonormal"),
            );
        }
    }

    let mut combined = Vec::new();
    if continuous.is_empty() {
        combined.extend(spec.discrete.iter().copied());
    } else {
        for tc in &continuous {
            for td in &spec.discrete {
                combined.push(tc.compose(td));
            }
        }
    }

    let mut unique: Vec<Pose> = Vec::new();
    for pose in combined {
        if !unique.iter().any(|q| poses_close(&pose, q, 1e-6)) {
            unique.push(pose);
        }
    }
    unique
}

/// Maximum symmetry-aware surface distance, mm:
/// `min over S of max over x of |est(x) - gt(S(x))|`.
///
/// Panics when `vertices` or `syms` is empty (`syms` must contain at least
/// the identity).
pub fn mssd(vertices: &[Point3<f64>], est: &Pose, gt: &Pose, syms: &[Pose]) -> f64 {
    assert!(!vertices.is_empty(), "mssd needs at least one vertex");
    assert!(!syms.is_empty(), "mssd needs at least the identity symmetry");
    let est_pts: Vec<Point3<f64>> = vertices.iter().map(|v| est.transform_point(v)).collect();
    let mut best = f64::INFINITY;
    for s in syms {
        let gs = gt.compose(s);
        let mut worst = 0.0f64;
        for (v, e) in vertices.iter().zip(&est_pts) {
            let d = (e - gs.transform_point(v)).norm();
            if d > worst {
                worst = d;
                if worst >= best {
                    break;
                }
            }
        }
        if worst < best {
            best = worst;
        }
    }
    best
}

/// Maximum symmetry-aware projection distance, pixels:
/// `min over S of max over x of |project(est, x) - project(gt∘S, x)|` in 2D.
///
/// An estimated vertex behind the camera makes the result infinite; a
/// ground-truth vertex behind the camera (under any symmetry) is an error.
/// Panics when `vertices` or `syms` is empty.
pub fn mspd(
    vertices: &[Point3<f64>],
    est: &Pose,
    gt: &Pose,
    syms: &[Pose],
    k: &CameraIntrinsics,
) -> Result<f64, MetricsError> {
    assert!(!vertices.is_empty(), "mspd needs at least one vertex");
    assert!(!syms.is_empty(), "mspd needs at least the identity symmetry");
    let est_proj = project(k, est, vertices);
    let est_behind = est_proj.iter().any(Option::is_none);
    let mut best = f64::INFINITY;
    for s in syms {
        let gs = gt.compose(s);
        let gt_proj = project(k, &gs, vertices);
        if let Some(vertex) = gt_proj.iter().position(Option::is_none) {
            return Err(MetricsError::GtVertexBehindCamera { vertex });
        }
        if est_behind {
            continue; // this candidate distance is infinite
        }
        let mut worst = 0.0f64;
        for (e, g) in est_proj.iter().zip(&gt_proj) {
            let (e, g) = (e.as_ref().unwrap(), g.as_ref().unwrap());
            let d = ((e.u - g.u).powi(2) + (e.v - g.v).powi(2)).sqrt();
            if d > worst {
                worst = d;
                if worst >= best {
                    break;
                }
            }
        }
        if worst < best {
            best = worst;
        }
    }
    Ok(best)
}

/// Average distance between the two transformed vertex sets, mm.
///
/// Returns `(add, adi)`: `add` pairs vertices by index; `adi` matches each
/// estimated point to its nearest ground-truth point, so `adi <= add` always.
/// Panics when `vertices` is empty.
pub fn add_adi(vertices: &[Point3<f64>], est: &Pose, gt: &Pose) -> (f64, f64) {
    assert!(!vertices.is_empty(), "add_adi needs at least one vertex");
    let est_pts: Vec<Point3<f64>> = vertices.iter().map(|v| est.transform_point(v)).collect();
    let gt_pts: Vec<Point3<f64>> = vertices.iter().map(|v| gt.transform_point(v)).collect();
    let n = vertices.len() as f64;

    let mut add_sum = 0.0;
    for (e, g) in est_pts.iter().zip(&gt_pts) {
        add_sum += (e - g).norm();
    }

    let grid = SpatialGrid::build(&gt_pts, cloud_cell_size(&gt_pts));
    let mut adi_sum = 0.0;
    for e in &est_pts {
        adi_sum += grid.nearest_distance(e);
    }
    (add_sum / n, adi_sum / n)
}

/// A grid cell size on the order of the cloud's expected point spacing.
fn cloud_cell_size(points: &[Point3<f64>]) -> f64 {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let cell = (hi - lo).norm() / (points.len() as f64).cbrt();
    if cell > 0.0 {
        cell
    } else {
        1.0
    }
}

/// Symmetry-aware rotation and translation error.
///
/// For each symmetry `S` the candidate pair is
/// `re = acos((trace(est_R^T gt_R S_R) - 1) / 2)` in degrees and
/// `te = |est_t - (gt_R S_t + gt_t)|` in mm; the pair with the smallest `re`
/// wins, ties broken by smaller `te`. Panics when `syms` is empty.
pub fn re_te(est: &Pose, gt: &Pose, syms: &[Pose]) -> (f64, f64) {
    assert!(!syms.is_empty(), "re_te needs at least the identity symmetry");
    let mut best = (f64::INFINITY, f64::INFINITY);
    for s in syms {
        let gs = gt.compose(s);
        // Bitwise-equal rotations score exactly zero; the trace formula would
        // otherwise round R^T R slightly away from the identity.
        let re = if est.rotation() == gs.rotation() {
            0.0
        } else {
            rotation_angle(&(est.rotation().transpose() * gs.rotation())).to_degrees()
        };
        let te = (est.translation() - gs.translation()).norm();
        if re.total_cmp(&best.0).then(te.total_cmp(&best.1)).is_lt() {
            best = (re, te);
        }
    }
    best
}

/// Threshold fractions 0.05, 0.10, ..., 0.50 shared by the recall grids.
pub fn threshold_fractions() -> [f64; 10] {
    std::array::from_fn(|i| (i as f64 + 1.0) / 20.0)
}

/// The tau grid for [`vsd_multi`] at a given object diameter:
/// `{0.05 d, ..., 0.50 d}`.
pub fn vsd_tau_grid(diameter: f64) -> [f64; 10] {
    threshold_fractions().map(|f| f * diameter)
}

/// Per-instance correctness counts over the recall threshold grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecallFlags {
    /// Correct cells in the (theta x tau) grid; out of `10 * |taus|`.
    pub vsd_correct: u32,
    /// Correct thetas, out of 10.
    pub mssd_correct: u32,
    /// Correct thetas, out of 10.
    pub mspd_correct: u32,
    /// Average distance below 0.1 x diameter.
    pub ad_correct: bool,
    /// Rotation error below 10 degrees.
    pub re_correct: bool,
    /// Translation error below 10 mm.
    pub te_correct: bool,
}

/// All error values for one ground-truth instance, plus its recall flags.
///
/// Invariants: every `vsd_error` lies in `[0, 1]`; `mssd`, `mspd`, `add`,
/// `adi` and `te` are nonnegative; `re` is in `[0, 180]` degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport {
    pub obj_id: u32,
    /// False when no estimate was matched to this ground-truth instance; the
    /// error fields then hold worst-case values.
    pub matched: bool,
    /// Whether the object is annotated symmetric (selects `adi` over `add`
    /// for the average-distance recall).
    pub symmetric: bool,
    /// One error per tau in the grid the report was evaluated against.
    pub vsd_error: Vec<f64>,
    pub mssd: f64,
    pub mspd: f64,
    pub add: f64,
    pub adi: f64,
    /// Degrees.
    pub re: f64,
    /// Millimetres.
    pub te: f64,
    pub flags: RecallFlags,
}

impl PoseErrorReport {
    /// Builds a report from raw errors, computing the recall flags for the
    /// given object diameter and image width.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        obj_id: u32,
        symmetric: bool,
        vsd_error: Vec<f64>,
        mssd: f64,
        mspd: f64,
        add: f64,
        adi: f64,
        re: f64,
        te: f64,
        diameter: f64,
        image_width: u32,
    ) -> Self {
        let mut report = Self {
            obj_id,
            matched: true,
            symmetric,
            vsd_error,
            mssd,
            mspd,
            add,
            adi,
            re,
            te,
            flags: RecallFlags::default(),
        };
        report.flags = report.flags_for(diameter, image_width);
        report
    }

    /// A worst-case report for a ground-truth instance with no matching
    /// estimate: every VSD error is 1, the distance errors are infinite, and
    /// no threshold is met.
    pub fn miss(obj_id: u32, symmetric: bool, tau_count: usize) -> Self {
        Self {
            obj_id,
            matched: false,
            symmetric,
            vsd_error: vec![1.0; tau_count],
            mssd: f64::INFINITY,
            mspd: f64::INFINITY,
            add: f64::INFINITY,
            adi: f64::INFINITY,
            re: 180.0,
            te: f64::INFINITY,
            flags: RecallFlags::default(),
        }
    }

    /// The average-distance error selected by the symmetry annotation.
    pub fn ad_error(&self) -> f64 {
        if self.symmetric {
            self.adi
        } else {
            self.add
        }
    }

    /// Correctness against the threshold grids (strict `<` everywhere):
    /// VSD over theta in {0.05..0.50} crossed with the report's tau grid,
    /// MSSD over theta x diameter, MSPD over {5..50} x (image_width / 640),
    /// AD at 0.1 x diameter, re at 10 degrees, te at 10 mm.
    pub fn flags_for(&self, diameter: f64, image_width: u32) -> RecallFlags {
        let thetas = threshold_fractions();
        let mut vsd_correct = 0u32;
        for &err in &self.vsd_error {
            vsd_correct += thetas.iter().filter(|&&th| err < th).count() as u32;
        }
        let mssd_correct = thetas.iter().filter(|&&th| self.mssd < th * diameter).count() as u32;
        let ratio = image_width as f64 / 640.0;
        let mspd_correct = (1..=10)
            .filter(|&i| self.mspd < (5 * i) as f64 * ratio)
            .count() as u32;
        RecallFlags {
            vsd_correct,
            mssd_correct,
            mspd_correct,
            ad_correct: self.ad_error() < 0.1 * diameter,
            re_correct: self.re < 10.0,
            te_correct: self.te < 10.0,
        }
    }
}

/// Recall rates, their average, and raw error means for a set of reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Ground-truth instances covered (matched or missed).
    pub total: usize,
    /// Instances with a matched estimate.
    pub matched: usize,
    /// Average of the VSD, MSSD and MSPD recalls.
    pub ar: f64,
    pub recall_vsd: f64,
    pub recall_mssd: f64,
    pub recall_mspd: f64,
    pub recall_ad: f64,
    pub recall_re: f64,
    pub recall_te: f64,
    /// Raw error means over matched instances only; `None` when nothing matched.
    pub mean_vsd: Option<f64>,
    pub mean_mssd: Option<f64>,
    pub mean_mspd: Option<f64>,
    pub mean_add: Option<f64>,
    pub mean_adi: Option<f64>,
    pub mean_re: Option<f64>,
    pub mean_te: Option<f64>,
}

impl MetricSummary {
    /// The summary of an empty result set: zero recalls, absent means.
    pub fn empty() -> Self {
        Self {
            total: 0,
            matched: 0,
            ar: 0.0,
            recall_vsd: 0.0,
            recall_mssd: 0.0,
            recall_mspd: 0.0,
            recall_ad: 0.0,
            recall_re: 0.0,
            recall_te: 0.0,
            mean_vsd: None,
            mean_mssd: None,
            mean_mspd: None,
            mean_add: None,
            mean_adi: None,
            mean_re: None,
            mean_te: None,
        }
    }
}

/// Aggregates reports into grid recalls and their average.
///
/// Correctness flags are recomputed from the raw errors with the given
/// diameter and image width. Each recall is a single exact integer ratio, and
/// AR is computed as one combined integer ratio
/// `(vsd_cells + L*(mssd_cells + mspd_cells)) / (30*L*n)` rather than a mean
/// of three rounded ratios, so e.g. component recalls (0.3, 0.6, 0.9) give AR
/// = 0.6 exactly. Raw means cover matched reports only, in report order.
///
/// Panics when `reports` is empty, the reports disagree on the tau-grid
/// length, `diameter` is not positive, or `image_width` is zero.
pub fn recall_and_ar(
    reports: &[PoseErrorReport],
    diameter: f64,
    image_width: u32,
) -> MetricSummary {
    assert!(!reports.is_empty(), "recall_and_ar needs at least one report");
    assert!(
        diameter > 0.0 && diameter.is_finite(),
        "diameter must be positive"
    );
    assert!(image_width >= 1, "image width must be at least 1");
    summarize_with(reports, |r| r.flags_for(diameter, image_width))
}

/// Aggregates reports using their **stored** flags, each already computed
/// against its own object's diameter and image width, so sets that mix
/// objects stay exact. An empty slice yields [`MetricSummary::empty`].
///
/// Because the per-grid correct counts are integers, a partition of the
/// reports aggregates to exactly the instance-weighted combination of the
/// parts. Panics when reports disagree on the tau-grid length.
pub fn aggregate_reports(reports: &[PoseErrorReport]) -> MetricSummary {
    if reports.is_empty() {
        return MetricSummary::empty();
    }
    summarize_with(reports, |r| r.flags)
}

fn summarize_with<F: Fn(&PoseErrorReport) -> RecallFlags>(
    reports: &[PoseErrorReport],
    flags_of: F,
) -> MetricSummary {
    let tau_count = reports[0].vsd_error.len();
    assert!(tau_count > 0, "reports must carry at least one vsd error");
    assert!(
        reports.iter().all(|r| r.vsd_error.len() == tau_count),
        "reports must share one tau grid"
    );

    let n = reports.len() as u64;
    let l = tau_count as u64;
    let mut c_vsd = 0u64;
    let mut c_mssd = 0u64;
    let mut c_mspd = 0u64;
    let mut c_ad = 0u64;
    let mut c_re = 0u64;
    let mut c_te = 0u64;
    let mut matched = 0usize;
    let mut sums = [0.0f64; 7]; // vsd, mssd, mspd, add, adi, re, te

    for report in reports {
        let flags = flags_of(report);
        c_vsd += flags.vsd_correct as u64;
        c_mssd += flags.mssd_correct as u64;
        c_mspd += flags.mspd_correct as u64;
        c_ad += flags.ad_correct as u64;
        c_re += flags.re_correct as u64;
        c_te += flags.te_correct as u64;
        if report.matched {
            matched += 1;
            sums[0] += report.vsd_error.iter().sum::<f64>();
            sums[1] += report.mssd;
            sums[2] += report.mspd;
            sums[3] += report.add;
            sums[4] += report.adi;
            sums[5] += report.re;
            sums[6] += report.te;
        }
    }

    let m = matched as f64;
    let mean = |value: f64| if matched > 0 { Some(value / m) } else { None };
    MetricSummary {
        total: reports.len(),
        matched,
        ar: (c_vsd + l * (c_mssd + c_mspd)) as f64 / (30 * l * n) as f64,
        recall_vsd: c_vsd as f64 / (10 * l * n) as f64,
        recall_mssd: c_mssd as f64 / (10 * n) as f64,
        recall_mspd: c_mspd as f64 / (10 * n) as f64,
        recall_ad: c_ad as f64 / n as f64,
        recall_re: c_re as f64 / n as f64,
        recall_te: c_te as f64 / n as f64,
        mean_vsd: mean(sums[0] / tau_count as f64),
        mean_mssd: mean(sums[1]),
        mean_mspd: mean(sums[2]),
        mean_add: mean(sums[3]),
        mean_adi: mean(sums[4]),
        mean_re: mean(sums[5]),
        mean_te: mean(sums[6]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        nalgebra::Rotation3::from_euler_angles(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        )
        .into_inner()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        Pose::new(
            random_rotation(rng),
            Vector3::new(
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
                rng.gen_range(600.0..1000.0),
            ),
        )
        .unwrap()
    }

    fn random_vertices(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-30.0..30.0),
                    rng.gen_range(-30.0..30.0),
                    rng.gen_range(-30.0..30.0),
                )
            })
            .collect()
    }

    fn test_camera() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn expansion_of_identity_spec_is_identity() {
        let syms = expand_symmetries(&SymmetrySpec::none(), 1.0);
        assert_eq!(syms.len(), 1);
        assert_eq!(syms[0], Pose::identity());
    }

    #[test]
    fn expansion_discretizes_continuous_axis() {
        let spec = SymmetrySpec::new(
            vec![],
            vec![ContinuousSymmetry::new(Vector3::z(), Vector3::zeros()).unwrap()],
        )
        .unwrap();
        let syms = expand_symmetries(&spec, 90.0);
        assert_eq!(syms.len(), 4);
        assert_eq!(syms[0], Pose::identity());
        // The four rotations map +x to +x, +y, -x, -y.
        let x = Point3::new(1.0, 0.0, 0.0);
        let mut images: Vec<Point3<f64>> = syms.iter().map(|s| s.transform_point(&x)).collect();
        images.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        for (img, want) in images.iter().zip([
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, -1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
        ]) {
            assert!((img - want).norm() < 1e-12);
        }

        let syms = expand_symmetries(&spec, 1.0);
        assert_eq!(syms.len(), 360);
    }

    #[test]
    fn expansion_deduplicates_coinciding_transforms() {
        // A discrete half-turn about z plus the same axis discretized at 180
        // degrees: the four compositions collapse to two transforms.
        let spec = SymmetrySpec::new(
            vec![Pose::from_axis_angle(&Vector3::z(), std::f64::consts::PI)],
            vec![ContinuousSymmetry::new(Vector3::z(), Vector3::zeros()).unwrap()],
        )
        .unwrap();
        let syms = expand_symmetries(&spec, 180.0);
        assert_eq!(syms.len(), 2);
    }

    #[test]
    fn expansion_anchors_rotation_at_offset() {
        let offset = Vector3::new(10.0, -4.0, 2.0);
        let spec = SymmetrySpec::new(
            vec![],
            vec![ContinuousSymmetry::new(Vector3::z(), offset).unwrap()],
        )
        .unwrap();
        for s in expand_symmetries(&spec, 45.0) {
            let fixed = s.transform_point(&Point3::from(offset));
            assert!((fixed.coords - offset).norm() < 1e-12);
        }
    }

    #[test]
    fn symmetry_spec_validation() {
        assert!(matches!(
            ContinuousSymmetry::new(Vector3::new(0.0, 0.0, 2.0), Vector3::zeros()),
            Err(MetricsError::NonUnitAxis { .. })
        ));
        // Identity passed explicitly is not duplicated.
        let spec = SymmetrySpec::new(vec![Pose::identity()], vec![]).unwrap();
        assert_eq!(spec.discrete.len(), 1);
        assert!(!spec.is_symmetric());
        let spec = SymmetrySpec::new(
            vec![Pose::from_axis_angle(&Vector3::z(), std::f64::consts::PI)],
            vec![],
        )
        .unwrap();
        assert!(spec.is_symmetric());
    }

    #[test]
    fn all_metrics_vanish_when_estimate_equals_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let vertices = random_vertices(&mut rng, 24);
            let pose = random_pose(&mut rng);
            let syms = vec![
                Pose::identity(),
                Pose::from_axis_angle(&Vector3::y(), rng.gen_range(0.1..3.0)),
            ];
            assert_eq!(mssd(&vertices, &pose, &pose, &syms), 0.0);
            assert_eq!(
                mspd(&vertices, &pose, &pose, &syms, &test_camera()).unwrap(),
                0.0
            );
            assert_eq!(add_adi(&vertices, &pose, &pose), (0.0, 0.0));
            assert_eq!(re_te(&pose, &pose, &syms), (0.0, 0.0));
        }
    }

    #[test]
    fn mssd_of_pure_translation_is_the_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for delta in [1.0, 5.0, 20.0] {
            let vertices = random_vertices(&mut rng, 30);
            let gt = random_pose(&mut rng);
            let est = Pose::new(
                *gt.rotation(),
                gt.translation() + Vector3::new(0.0, 0.0, delta),
            )
            .unwrap();
            let err = mssd(&vertices, &est, &gt, &[Pose::identity()]);
            assert!((err - delta).abs() <= 1e-9 * delta, "{err} vs {delta}");
            let (add, adi) = add_adi(&vertices, &est, &gt);
            assert!((add - delta).abs() <= 1e-9 * delta);
            assert!(adi <= add + 1e-15);
        }
    }

    #[test]
    fn symmetry_absorbs_equivalent_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let vertices = random_vertices(&mut rng, 20);
        let gt = random_pose(&mut rng);
        let half_turn = Pose::from_axis_angle(&Vector3::z(), std::f64::consts::PI);
        let est = gt.compose(&half_turn);
        let syms = [Pose::identity(), half_turn];
        assert_eq!(mssd(&vertices, &est, &gt, &syms), 0.0);
        assert_eq!(
            mspd(&vertices, &est, &gt, &syms, &test_camera()).unwrap(),
            0.0
        );
        let (re, te) = re_te(&est, &gt, &syms);
        assert_eq!((re, te), (0.0, 0.0));
        // Without the symmetry the same pair scores a 180-degree error.
        let (re, _) = re_te(&est, &gt, &[Pose::identity()]);
        assert!((re - 180.0).abs() < 1e-9);
    }

    #[test]
    fn growing_the_symmetry_set_never_hurts() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            let vertices = random_vertices(&mut rng, 15);
            let est = random_pose(&mut rng);
            let gt = random_pose(&mut rng);
            let base = vec![Pose::identity()];
            let mut bigger = base.clone();
            for _ in 0..3 {
                bigger.push(Pose::from_axis_angle(
                    &Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ),
                    rng.gen_range(0.1..3.0),
                ));
            }
            let k = test_camera();
            assert!(mssd(&vertices, &est, &gt, &bigger) <= mssd(&vertices, &est, &gt, &base));
            assert!(
                mspd(&vertices, &est, &gt, &bigger, &k).unwrap()
                    <= mspd(&vertices, &est, &gt, &base, &k).unwrap()
            );
            assert!(re_te(&est, &gt, &bigger).0 <= re_te(&est, &gt, &base).0);
        }
    }

    #[test]
    fn mspd_of_lateral_shift_matches_pinhole_arithmetic() {
        // Fronto-parallel square at depth z, shifted by delta in x: every
        // vertex moves fx * delta / z pixels.
        let vertices = vec![
            Point3::new(-20.0, -20.0, 0.0),
            Point3::new(20.0, -20.0, 0.0),
            Point3::new(20.0, 20.0, 0.0),
            Point3::new(-20.0, 20.0, 0.0),
        ];
        let k = test_camera();
        let z = 800.0;
        let delta = 6.0;
        let gt = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, z)).unwrap();
        let est = Pose::new(Matrix3::identity(), Vector3::new(delta, 0.0, z)).unwrap();
        let err = mspd(&vertices, &est, &gt, &[Pose::identity()], &k).unwrap();
        let want = k.fx * delta / z;
        assert!((err - want).abs() < 1e-6, "{err} vs {want}");
    }

    #[test]
    fn mspd_flags_ground_truth_behind_camera() {
        let vertices = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, -5.0)];
        let k = test_camera();
        let gt = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 2.0)).unwrap();
        let est = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 700.0)).unwrap();
        let err = mspd(&vertices, &est, &gt, &[Pose::identity()], &k).unwrap_err();
        assert!(matches!(err, MetricsError::GtVertexBehindCamera { vertex: 1 }));
        // The reverse direction is not an error: the candidate is infinite.
        let err = mspd(&vertices, &gt, &est, &[Pose::identity()], &k).unwrap();
        assert!(err.is_infinite());
    }

    #[test]
    fn add_adi_match_quadratic_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let vertices = random_vertices(&mut rng, 10);
            let est = random_pose(&mut rng);
            let gt = random_pose(&mut rng);
            let (add, adi) = add_adi(&vertices, &est, &gt);

            let est_pts: Vec<Point3<f64>> =
                vertices.iter().map(|v| est.transform_point(v)).collect();
            let gt_pts: Vec<Point3<f64>> =
                vertices.iter().map(|v| gt.transform_point(v)).collect();
            let mut add_sum = 0.0;
            let mut adi_sum = 0.0;
            for (e, g) in est_pts.iter().zip(&gt_pts) {
                add_sum += (e - g).norm();
            }
            for e in &est_pts {
                adi_sum += gt_pts
                    .iter()
                    .map(|g| (e - g).norm())
                    .fold(f64::INFINITY, f64::min);
            }
            let n = vertices.len() as f64;
            assert_eq!(add, add_sum / n);
            assert_eq!(adi, adi_sum / n);
            assert!(adi <= add);
        }
    }

    #[test]
    fn rotation_error_recovers_constructed_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..20 {
            let gt = random_pose(&mut rng);
            let axis = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let est = Pose::new(
                gt.rotation() * Pose::from_axis_angle(&axis, 10f64.to_radians()).rotation(),
                *gt.translation(),
            )
            .unwrap();
            let (re, te) = re_te(&est, &gt, &[Pose::identity()]);
            assert!((re - 10.0).abs() < 1e-6, "re {re}");
            assert_eq!(te, 0.0);
        }
    }

    #[test]
    fn translation_error_uses_symmetry_offsets() {
        // A symmetry with a translation component shifts the ground-truth
        // translation candidate.
        let gt = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 500.0)).unwrap();
        let sym_shift = Pose::new(Matrix3::identity(), Vector3::new(4.0, 0.0, 0.0)).unwrap();
        let est = Pose::new(Matrix3::identity(), Vector3::new(4.0, 0.0, 500.0)).unwrap();
        let (re, te) = re_te(&est, &gt, &[Pose::identity(), sym_shift]);
        assert_eq!((re, te), (0.0, 0.0));
        let (_, te) = re_te(&est, &gt, &[Pose::identity()]);
        assert!((te - 4.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_invariant_under_shared_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let vertices = random_vertices(&mut rng, 18);
            let est = random_pose(&mut rng);
            let gt = random_pose(&mut rng);
            let syms = vec![
                Pose::identity(),
                Pose::from_axis_angle(&Vector3::x(), rng.gen_range(0.1..3.0)),
            ];
            let g = random_pose(&mut rng);
            let (est2, gt2) = (g.compose(&est), g.compose(&gt));

            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
            assert!(rel(
                mssd(&vertices, &est2, &gt2, &syms),
                mssd(&vertices, &est, &gt, &syms)
            ));
            let (add_a, adi_a) = add_adi(&vertices, &est, &gt);
            let (add_b, adi_b) = add_adi(&vertices, &est2, &gt2);
            assert!(rel(add_b, add_a) && rel(adi_b, adi_a));
            let (re_a, te_a) = re_te(&est, &gt, &syms);
            let (re_b, te_b) = re_te(&est2, &gt2, &syms);
            assert!(rel(re_b, re_a) && rel(te_b, te_a));
        }
    }

    fn uniform_report(vsd: f64, mssd: f64, mspd: f64, ad: f64, re: f64, te: f64) -> PoseErrorReport {
        PoseErrorReport::new(1, false, vec![vsd; 10], mssd, mspd, ad, ad, re, te, 100.0, 640)
    }

    #[test]
    fn perfect_reports_give_full_recall() {
        let reports = vec![uniform_report(0.0, 0.0, 0.0, 0.0, 0.0, 0.0); 3];
        let summary = recall_and_ar(&reports, 100.0, 640);
        assert_eq!(summary.ar, 1.0);
        assert_eq!(summary.recall_vsd, 1.0);
        assert_eq!(summary.recall_mssd, 1.0);
        assert_eq!(summary.recall_mspd, 1.0);
        assert_eq!(summary.recall_ad, 1.0);
        assert_eq!(summary.recall_re, 1.0);
        assert_eq!(summary.recall_te, 1.0);
        assert_eq!(summary.mean_mssd, Some(0.0));
        assert_eq!(summary.matched, 3);
    }

    #[test]
    fn ar_of_component_recalls_is_their_exact_mean() {
        // vsd 0.37 passes thetas {0.40, 0.45, 0.50}  -> recall 0.3
        // mssd 22 mm passes {25..50} of d=100        -> recall 0.6
        // mspd 7 px passes {10..50} at width 640     -> recall 0.9
        let reports = vec![uniform_report(0.37, 22.0, 7.0, 100.0, 90.0, 100.0)];
        let summary = recall_and_ar(&reports, 100.0, 640);
        assert_eq!(summary.recall_vsd, 0.3);
        assert_eq!(summary.recall_mssd, 0.6);
        assert_eq!(summary.recall_mspd, 0.9);
        assert_eq!(summary.ar, 0.6);
    }

    #[test]
    fn mssd_recall_counts_grid_cells() {
        let reports = vec![uniform_report(1.0, 7.0, 1000.0, 100.0, 90.0, 100.0)];
        let summary = recall_and_ar(&reports, 100.0, 640);
        // 7 mm fails only theta = 0.05 (5 mm) of d = 100.
        assert_eq!(summary.recall_mssd, 0.9);
        assert_eq!(summary.recall_vsd, 0.0);
        assert_eq!(summary.recall_mspd, 0.0);
    }

    #[test]
    fn thresholds_are_strict() {
        let reports = vec![uniform_report(0.05, 5.0, 5.0, 10.0, 10.0, 10.0)];
        let summary = recall_and_ar(&reports, 100.0, 640);
        // Exactly on a threshold never counts: vsd 0.05 fails theta 0.05,
        // mssd 5.0 fails 0.05*100, mspd 5.0 fails 5*1, ad 10 = 0.1*100 fails,
        // re 10 fails, te 10 fails.
        assert_eq!(summary.recall_vsd, 0.9);
        assert_eq!(summary.recall_mssd, 0.9);
        assert_eq!(summary.recall_mspd, 0.9);
        assert_eq!(summary.recall_ad, 0.0);
        assert_eq!(summary.recall_re, 0.0);
        assert_eq!(summary.recall_te, 0.0);
    }

    #[test]
    fn misses_count_against_every_recall() {
        let mut reports = vec![uniform_report(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)];
        reports.push(PoseErrorReport::miss(1, false, 10));
        let summary = recall_and_ar(&reports, 100.0, 640);
        assert_eq!(summary.total, 2);
        assert_eq!(summary.matched, 1);
        assert_eq!(summary.ar, 0.5);
        assert_eq!(summary.recall_ad, 0.5);
        // Means ignore the miss.
        assert_eq!(summary.mean_mssd, Some(0.0));
    }

    #[test]
    fn empty_summary_reports_absent_means() {
        let summary = MetricSummary::empty();
        assert_eq!(summary.ar, 0.0);
        assert_eq!(summary.mean_vsd, None);
        assert_eq!(summary.total, 0);
    }

    #[test]
    fn symmetric_flag_selects_adi_for_ad_recall() {
        let asymmetric = PoseErrorReport::new(
            1, false, vec![1.0; 10], 100.0, 100.0, 50.0, 5.0, 90.0, 100.0, 100.0, 640,
        );
        let symmetric = PoseErrorReport::new(
            1, true, vec![1.0; 10], 100.0, 100.0, 50.0, 5.0, 90.0, 100.0, 100.0, 640,
        );
        assert!(!asymmetric.flags.ad_correct); // add = 50 >= 10
        assert!(symmetric.flags.ad_correct); // adi = 5 < 10
    }

    #[test]
    fn stored_flag_aggregation_partitions_exactly() {
        assert_eq!(aggregate_reports(&[]), MetricSummary::empty());
        // Reports built against different diameters keep their own
        // thresholds; combined recalls are the instance-weighted means.
        let a = PoseErrorReport::new(
            1, false, vec![0.2; 10], 3.0, 12.0, 1.0, 1.0, 4.0, 2.0, 50.0, 640,
        );
        let b = PoseErrorReport::new(
            2, true, vec![0.07; 10], 30.0, 3.0, 20.0, 8.0, 12.0, 30.0, 400.0, 640,
        );
        let all = vec![a.clone(), a, b];
        let s_all = aggregate_reports(&all);
        let s_a = aggregate_reports(&all[..2]);
        let s_b = aggregate_reports(&all[2..]);
        for (combined, part_a, part_b) in [
            (s_all.ar, s_a.ar, s_b.ar),
            (s_all.recall_vsd, s_a.recall_vsd, s_b.recall_vsd),
            (s_all.recall_mssd, s_a.recall_mssd, s_b.recall_mssd),
            (s_all.recall_ad, s_a.recall_ad, s_b.recall_ad),
            (s_all.recall_te, s_a.recall_te, s_b.recall_te),
        ] {
            let weighted = (2.0 * part_a + part_b) / 3.0;
            assert!((combined - weighted).abs() < 1e-12);
        }
    }
}
