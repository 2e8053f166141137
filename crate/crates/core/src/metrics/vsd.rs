//! Visible surface discrepancy over rendered depth maps.

use super::MetricsError;
use crate::raster::DepthMap;

/// Visible surface discrepancy in `[0, 1]`.
///
/// Visibility of each render against the test depth uses the signed
/// convention: a rendered pixel is visible when `d_render > 0` and either the
/// test depth is absent there (`d_test = 0`) or the render is not behind the
/// test surface by more than `delta` (`d_render - d_test <= delta`). The
/// estimate additionally inherits visibility wherever the ground truth is
/// visible and the estimate rendered at all, so misalignments that push the
/// estimate behind the scene surface still count as mismatched visible area.
///
/// Over the union `U` of the two visibility masks and intersection `I`,
/// `error = (|U \ I| + |{p in I : |d_est - d_gt| > tau}|) / |U|`; an empty
/// union scores 1. Panics when `tau` or `delta` is not positive and finite;
/// mismatched map sizes are an error.
pub fn vsd(
    depth_est: &DepthMap,
    depth_gt: &DepthMap,
    depth_test: &DepthMap,
    tau: f64,
    delta: f64,
) -> Result<f64, MetricsError> {
    Ok(vsd_multi(depth_est, depth_gt, depth_test, &[tau], delta)?[0])
}

/// [`vsd`] evaluated at several taus in one pass: the visibility masks are
/// computed once and only the depth-difference test varies per tau. The
/// result aligns with `taus` and equals calling [`vsd`] per tau exactly.
pub fn vsd_multi(
    depth_est: &DepthMap,
    depth_gt: &DepthMap,
    depth_test: &DepthMap,
    taus: &[f64],
    delta: f64,
) -> Result<Vec<f64>, MetricsError> {
    assert!(!taus.is_empty(), "vsd needs at least one tau");
    assert!(
        taus.iter().all(|t| *t > 0.0 && t.is_finite()),
        "every tau must be positive and finite"
    );
    assert!(
        delta > 0.0 && delta.is_finite(),
        "delta must be positive and finite"
    );
    for other in [depth_gt, depth_test] {
        if other.width() != depth_est.width() || other.height() != depth_est.height() {
            return Err(MetricsError::DepthSizeMismatch {
                a_w: depth_est.width(),
                a_h: depth_est.height(),
                b_w: other.width(),
                b_h: other.height(),
            });
        }
    }

    let mut union = 0u64;
    let mut inter = 0u64;
    let mut misses = vec![0u64; taus.len()];
    for ((&de, &dg), &dt) in depth_est
        .values()
        .iter()
        .zip(depth_gt.values())
        .zip(depth_test.values())
    {
        let visib_gt = dg > 0.0 && (dt == 0.0 || dg - dt <= delta);
        let visib_est =
            (de > 0.0 && (dt == 0.0 || de - dt <= delta)) || (visib_gt && de > 0.0);
        if visib_gt || visib_est {
            union += 1;
        }
        if visib_gt && visib_est {
            inter += 1;
            let diff = (de - dg).abs();
            for (miss, &tau) in misses.iter_mut().zip(taus) {
                if diff > tau {
                    *miss += 1;
                }
            }
        }
    }

    if union == 0 {
        return Ok(vec![1.0; taus.len()]);
    }
    Ok(misses
        .iter()
        .map(|&miss| ((union - inter) + miss) as f64 / union as f64)
        .collect())
}
