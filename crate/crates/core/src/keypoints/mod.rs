//! Surface keypoint detection: local covariance saliency, density weighting,
//! non-maximum suppression, and Gaussian heatmap rendering.
//!
//! The pipeline runs on surface sample sets (see [`crate::geometry::sample_surface`]):
//! a per-point score `S = density * lambda1 / (lambda1 + lambda2 + lambda3)` is
//! computed from the eigenvalues of the neighborhood covariance taken about the
//! point itself, so flat regions score near `density / 2`, curved and edge-like
//! regions score higher, and isolated points are damped by the density factor.

mod eigen;
mod heatmap;

pub use eigen::eigen3_sym;
pub use heatmap::{render_heatmap, render_heatmap_mode, CombineMode, Heatmap};

use crate::geometry::SurfaceSamples;
use crate::grid::SpatialGrid;
use nalgebra::{Matrix3, Point3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Errors from keypoint detection and keypoint-set serialization.
#[derive(Debug, Error)]
pub enum KeypointError {
    /// Covariance of an empty neighborhood is undefined.
    #[error("cannot compute covariance of an empty neighborhood")]
    NoNeighbors,
    /// The eigensolver only accepts symmetric input.
    #[error("matrix deviates from symmetry by {deviation:.3e} (limit 1e-9)")]
    AsymmetricInput { deviation: f64 },
    /// A neighborhood configuration parameter is out of range.
    #[error("invalid neighborhood configuration: {0}")]
    BadConfig(&'static str),
    /// The visibility mask must align with the sample set.
    #[error("visibility mask has {mask} entries but there are {samples} samples")]
    MaskLengthMismatch { mask: usize, samples: usize },
    /// Too few visible samples to form the requested neighborhoods.
    #[error("only {visible} visible samples, need at least {needed}")]
    TooFewVisible { visible: usize, needed: usize },
    /// A keypoint file failed validation on load.
    #[error("invalid keypoint data: {0}")]
    InvalidData(String),
    #[error("malformed keypoint JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Neighborhood sizes used by the saliency field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodConfig {
    /// Number of nearest neighbors for the covariance (the point itself is
    /// excluded). At least 4 so the covariance has full-rank support.
    pub k: usize,
    /// Radius of the density counting ball, in the same units as the points.
    pub density_radius: f64,
}

impl NeighborhoodConfig {
    /// Default neighbor count.
    pub const DEFAULT_K: usize = 16;

    /// Validates `k >= 4` and `density_radius > 0`.
    pub fn new(k: usize, density_radius: f64) -> Result<Self, KeypointError> {
        if k < 4 {
            return Err(KeypointError::BadConfig("k must be at least 4"));
        }
        if !(density_radius > 0.0) || !density_radius.is_finite() {
            return Err(KeypointError::BadConfig(
                "density_radius must be positive and finite",
            ));
        }
        Ok(Self { k, density_radius })
    }

    /// Configuration adapted to a sample set: the density radius defaults to
    /// twice the mean sample spacing.
    pub fn for_samples(samples: &SurfaceSamples, k: usize) -> Result<Self, KeypointError> {
        Self::new(k, 2.0 * samples.mean_spacing)
    }
}

/// Saliency of one visible sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaliencySample {
    /// Index into the original sample set.
    pub index: usize,
    /// Sample position.
    pub position: Point3<f64>,
    /// Relative local density in `(0, 1]`.
    pub density: f64,
    /// Covariance eigenvalues, descending; `eigenvalues[2] >= -1e-9`.
    pub eigenvalues: [f64; 3],
    /// Saliency score `density * l1 / (l1 + l2 + l3)`, zero when the
    /// eigenvalue sum is not positive.
    pub saliency: f64,
}

/// Second-moment matrix of `neighbors` about `p` (not about their centroid):
/// `C = (1/n) * sum (x_i - p)(x_i - p)^T`. Errors when `neighbors` is empty.
pub fn covariance(
    p: &Point3<f64>,
    neighbors: &[Point3<f64>],
) -> Result<Matrix3<f64>, KeypointError> {
    if neighbors.is_empty() {
        return Err(KeypointError::NoNeighbors);
    }
    let mut sum = Matrix3::zeros();
    for x in neighbors {
        let d = x - p;
        sum += d * d.transpose();
    }
    Ok(sum / neighbors.len() as f64)
}

/// Relative local density: for each point, the number of points within
/// `radius` (inclusive of the point itself) divided by the maximum such count.
/// Every value is in `(0, 1]` and at least one value is exactly 1.
///
/// Panics when `points` is empty or `radius` is not positive.
pub fn local_density(points: &[Point3<f64>], radius: f64) -> Vec<f64> {
    assert!(!points.is_empty(), "local_density needs at least one point");
    assert!(
        radius > 0.0 && radius.is_finite(),
        "density radius must be positive and finite"
    );
    let grid = SpatialGrid::build(points, radius);
    let counts: Vec<usize> = (0..points.len())
        .into_par_iter()
        .map(|i| grid.count_within(i, radius))
        .collect();
    let max = *counts.iter().max().expect("nonempty") as f64;
    counts.into_iter().map(|c| c as f64 / max).collect()
}

/// Computes the saliency field over the visible subset of a sample set.
///
/// `visible` flags which samples participate (e.g. from
/// [`crate::raster::visible_mask`]); hidden samples are excluded both as
/// centers and as neighbors. The result is ordered by ascending sample index.
pub fn saliency_field(
    samples: &SurfaceSamples,
    visible: &[bool],
    config: &NeighborhoodConfig,
) -> Result<Vec<SaliencySample>, KeypointError> {
    if visible.len() != samples.points.len() {
        return Err(KeypointError::MaskLengthMismatch {
            mask: visible.len(),
            samples: samples.points.len(),
        });
    }
    let indices: Vec<usize> = (0..samples.points.len()).filter(|&i| visible[i]).collect();
    if indices.len() < config.k + 1 {
        return Err(KeypointError::TooFewVisible {
            visible: indices.len(),
            needed: config.k + 1,
        });
    }
    let points: Vec<Point3<f64>> = indices.iter().map(|&i| samples.points[i]).collect();
    let grid = SpatialGrid::build(&points, config.density_radius);

    let counts: Vec<usize> = (0..points.len())
        .into_par_iter()
        .map(|i| grid.count_within(i, config.density_radius))
        .collect();
    let max_count = *counts.iter().max().expect("nonempty") as f64;

    let field: Result<Vec<SaliencySample>, KeypointError> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let p = points[i];
            let neighbor_ids = grid.k_nearest(&p, config.k, Some(i));
            let neighbors: Vec<Point3<f64>> =
                neighbor_ids.iter().map(|&j| points[j]).collect();
            let cov = covariance(&p, &neighbors)?;
            let eigenvalues = eigen3_sym(&cov)?;
            let density = counts[i] as f64 / max_count;
            let sum: f64 = eigenvalues.iter().sum();
            let saliency = if sum > 0.0 {
                density * eigenvalues[0] / sum
            } else {
                0.0
            };
            Ok(SaliencySample {
                index: indices[i],
                position: p,
                density,
                eigenvalues,
                saliency,
            })
        })
        .collect();
    field
}

/// A selected set of keypoints with normalized weights.
///
/// Weights are each keypoint's saliency divided by the maximum selected
/// saliency, so they lie in `(0, 1]` and the first (strongest) is exactly 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeypointSet {
    pub points: Vec<Point3<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KeypointSetJson {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Serializes to JSON: `{"points": [[x,y,z], ...], "weights": [...]}`.
    pub fn to_json(&self) -> Result<String, KeypointError> {
        let raw = KeypointSetJson {
            points: self.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            weights: self.weights.clone(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    /// Parses and validates JSON produced by [`KeypointSet::to_json`].
    pub fn from_json(text: &str) -> Result<Self, KeypointError> {
        let raw: KeypointSetJson = serde_json::from_str(text)?;
        if raw.points.len() != raw.weights.len() {
            return Err(KeypointError::InvalidData(format!(
                "{} points but {} weights",
                raw.points.len(),
                raw.weights.len()
            )));
        }
        for (i, p) in raw.points.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(KeypointError::InvalidData(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
        }
        for (i, &w) in raw.weights.iter().enumerate() {
            if !(w > 0.0 && w <= 1.0) {
                return Err(KeypointError::InvalidData(format!(
                    "weight {i} is {w}, expected a value in (0, 1]"
                )));
            }
        }
        Ok(Self {
            points: raw.points.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
            weights: raw.weights,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<(), KeypointError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_json()?.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, KeypointError> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}

/// Selects keypoints from a saliency field by thresholding and greedy
/// non-maximum suppression.
///
/// Candidates with `saliency > tau` are visited in order of descending
/// saliency (ties broken by ascending sample index); a candidate is kept when
/// it lies at distance `>= nms_radius` from every already-kept point, until
/// `max_count` points are kept.
///
/// Panics when `tau` is negative/non-finite, `nms_radius` is negative, or
/// `max_count` is zero.
pub fn select_keypoints(
    field: &[SaliencySample],
    tau: f64,
    nms_radius: f64,
    max_count: usize,
) -> KeypointSet {
    assert!(tau >= 0.0 && tau.is_finite(), "tau must be finite and >= 0");
    assert!(nms_radius >= 0.0, "nms_radius must be >= 0");
    assert!(max_count >= 1, "max_count must be at least 1");

    let mut candidates: Vec<&SaliencySample> =
        field.iter().filter(|s| s.saliency > tau).collect();
    candidates.sort_unstable_by(|a, b| {
        b.saliency
            .total_cmp(&a.saliency)
            .then(a.index.cmp(&b.index))
    });

    let mut kept: Vec<&SaliencySample> = Vec::new();
    for cand in candidates {
        if kept.len() == max_count {
            break;
        }
        let clear = kept
            .iter()
            .all(|k| (k.position - cand.position).norm() >= nms_radius);
        if clear {
            kept.push(cand);
        }
    }

    if kept.is_empty() {
        return KeypointSet::default();
    }
    let top = kept[0].saliency;
    KeypointSet {
        points: kept.iter().map(|k| k.position).collect(),
        weights: kept.iter().map(|k| k.saliency / top).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples_from_points(points: Vec<Point3<f64>>, mean_spacing: f64) -> SurfaceSamples {
        let n = points.len();
        SurfaceSamples {
            normals: vec![nalgebra::Vector3::z(); n],
            source_triangle: vec![0; n],
            points,
            mean_spacing,
        }
    }

    #[test]
    fn covariance_of_axis_pair_is_rank_one() {
        let p = Point3::origin();
        let cov = covariance(
            &p,
            &[Point3::new(1.0, 0.0, 0.0), Point3::new(-1.0, 0.0, 0.0)],
        )
        .unwrap();
        assert_eq!(cov, Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn covariance_of_planar_cross_is_rank_two() {
        let p = Point3::origin();
        let cov = covariance(
            &p,
            &[
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(-1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, -1.0, 0.0),
            ],
        )
        .unwrap();
        assert_eq!(
            cov,
            Matrix3::from_diagonal(&nalgebra::Vector3::new(0.5, 0.5, 0.0))
        );
    }

    #[test]
    fn covariance_of_coincident_points_is_zero() {
        let p = Point3::new(2.0, -1.0, 3.0);
        let cov = covariance(&p, &[p, p, p]).unwrap();
        assert_eq!(cov, Matrix3::zeros());
        assert!(matches!(
            covariance(&p, &[]),
            Err(KeypointError::NoNeighbors)
        ));
    }

    #[test]
    fn covariance_is_bitwise_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Point3::new(0.3, -0.7, 1.1);
        let neighbors: Vec<Point3<f64>> = (0..16)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let cov = covariance(&p, &neighbors).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(cov[(i, j)].to_bits(), cov[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn local_density_of_uniform_cluster_is_one() {
        let points = vec![Point3::origin(); 7];
        let d = local_density(&points, 0.5);
        assert!(d.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn local_density_contrasts_cluster_sizes() {
        // A cluster of 10 and a far cluster of 5: densities 1.0 and 0.5.
        let mut points = Vec::new();
        for i in 0..10 {
            points.push(Point3::new(i as f64 * 1e-3, 0.0, 0.0));
        }
        for i in 0..5 {
            points.push(Point3::new(100.0 + i as f64 * 1e-3, 0.0, 0.0));
        }
        let d = local_density(&points, 1.0);
        for v in &d[..10] {
            assert_eq!(*v, 1.0);
        }
        for v in &d[10..] {
            assert_eq!(*v, 0.5);
        }
    }

    #[test]
    fn saliency_rejects_bad_inputs() {
        let samples = samples_from_points(vec![Point3::origin(); 30], 0.1);
        let cfg = NeighborhoodConfig::new(16, 0.2).unwrap();
        let err = saliency_field(&samples, &[true; 29], &cfg).unwrap_err();
        assert!(matches!(err, KeypointError::MaskLengthMismatch { .. }));
        let mut mask = vec![false; 30];
        mask[..10].fill(true);
        let err = saliency_field(&samples, &mask, &cfg).unwrap_err();
        assert!(matches!(
            err,
            KeypointError::TooFewVisible { visible: 10, needed: 17 }
        ));
        assert!(NeighborhoodConfig::new(3, 0.2).is_err());
        assert!(NeighborhoodConfig::new(16, 0.0).is_err());
    }

    #[test]
    fn flat_grid_scores_near_half() {
        // A dense regular grid in the z=0 plane: interior points see an
        // isotropic planar neighborhood, so saliency/density is close to 0.5.
        let mut points = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                points.push(Point3::new(i as f64, j as f64, 0.0));
            }
        }
        let samples = samples_from_points(points, 1.0);
        let cfg = NeighborhoodConfig::new(16, 2.0).unwrap();
        let field = saliency_field(&samples, &vec![true; 1600], &cfg).unwrap();
        for s in &field {
            let (x, y) = (s.position.x, s.position.y);
            if (5.0..=34.0).contains(&x) && (5.0..=34.0).contains(&y) {
                let ratio = s.saliency / s.density;
                assert!((ratio - 0.5).abs() < 0.05, "interior ratio {ratio}");
                assert!(s.eigenvalues[2].abs() < 1e-12);
            }
            assert!(s.eigenvalues[2] >= -1e-9);
            assert!(s.saliency >= 0.0);
        }
    }

    #[test]
    fn straight_line_scores_near_one() {
        let points: Vec<Point3<f64>> =
            (0..200).map(|i| Point3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let samples = samples_from_points(points, 0.1);
        let cfg = NeighborhoodConfig::new(8, 0.25).unwrap();
        let field = saliency_field(&samples, &[true; 200], &cfg).unwrap();
        for s in &field {
            let ratio = s.saliency / s.density;
            assert!(ratio > 0.95 && ratio <= 1.0 + 1e-12, "line ratio {ratio}");
        }
    }

    #[test]
    fn selection_orders_by_saliency_and_respects_radius() {
        let mk = |index, x: f64, s: f64| SaliencySample {
            index,
            position: Point3::new(x, 0.0, 0.0),
            density: 1.0,
            eigenvalues: [s, 0.0, 0.0],
            saliency: s,
        };
        let field = vec![
            mk(0, 0.0, 0.8),
            mk(1, 0.5, 0.9), // winner; suppresses index 0 (distance 0.5 < 1.0)
            mk(2, 2.0, 0.7),
            mk(3, 2.4, 0.7), // tie with 2 -> lower index wins, 3 suppressed
            mk(4, 5.0, 0.2), // below tau
        ];
        let kps = select_keypoints(&field, 0.3, 1.0, 8);
        assert_eq!(kps.points.len(), 2);
        assert_eq!(kps.points[0], Point3::new(0.5, 0.0, 0.0));
        assert_eq!(kps.points[1], Point3::new(2.0, 0.0, 0.0));
        assert_eq!(kps.weights[0], 1.0);
        assert!((kps.weights[1] - 0.7 / 0.9).abs() < 1e-15);

        // max_count truncates after suppression.
        let kps = select_keypoints(&field, 0.0, 0.1, 2);
        assert_eq!(kps.len(), 2);
        assert_eq!(kps.points[0], Point3::new(0.5, 0.0, 0.0));

        // An empty selection yields an empty set.
        let kps = select_keypoints(&field, 2.0, 1.0, 8);
        assert!(kps.is_empty());
    }

    #[test]
    fn keypoint_json_round_trip() {
        let set = KeypointSet {
            points: vec![Point3::new(1.25, -3.5, 0.125), Point3::new(0.1, 0.2, 0.3)],
            weights: vec![1.0, 0.4375],
        };
        let text = set.to_json().unwrap();
        let back = KeypointSet::from_json(&text).unwrap();
        assert_eq!(set, back);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kps.json");
        set.write_json(&path).unwrap();
        assert_eq!(KeypointSet::read_json(&path).unwrap(), set);
    }

    #[test]
    fn keypoint_json_validation() {
        assert!(matches!(
            KeypointSet::from_json(r#"{"points": [[0,0,0]], "weights": [1.0, 0.5]}"#),
            Err(KeypointError::InvalidData(_))
        ));
        assert!(matches!(
            KeypointSet::from_json(r#"{"points": [[0,0,0]], "weights": [1.5]}"#),
            Err(KeypointError::InvalidData(_))
        ));
        assert!(matches!(
            KeypointSet::from_json(r#"{"points": [[0,0,0]], "weights": [0.0]}"#),
            Err(KeypointError::InvalidData(_))
        ));
        assert!(matches!(
            KeypointSet::from_json("not json"),
            Err(KeypointError::Json(_))
        ));
    }
}
