//! Software z-buffer triangle rasterization.
//!
//! Triangles are near-clipped in camera space, projected, and scan-converted
//! with pixel-centre sampling and the top-left fill rule, interpolating 1/z
//! perspective-correctly. Rows are rasterized in parallel; every row visits
//! triangles in one fixed order, so output is bit-deterministic regardless of
//! thread count.

use super::{CameraIntrinsics, DepthMap, Pose, NEAR_PLANE};
use crate::geometry::TriMesh;
use nalgebra::Vector3;
use rayon::prelude::*;

/// A projected triangle prepared for scan conversion.
struct ScreenTri {
    /// Screen positions (u, v) per corner.
    p: [(f64, f64); 3],
    /// 1/z per corner.
    iz: [f64; 3],
    /// Twice the signed screen area, positive by construction.
    area2: f64,
    /// Whether each edge (opposite the same-index corner) is top or left.
    top_left: [bool; 3],
    min_x: u32,
    max_x: u32,
    min_y: u32,
    max_y: u32,
}

fn edge(a: (f64, f64), b: (f64, f64), px: f64, py: f64) -> f64 {
    (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0)
}

/// Top edges run rightward, left edges upward (y grows downward on screen).
fn is_top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// Clips a camera-space triangle against `z >= NEAR_PLANE`; returns at most
/// four vertices (Sutherland-Hodgman with one plane).
fn clip_near(tri: &[Vector3<f64>; 3]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let cur = tri[i];
        let next = tri[(i + 1) % 3];
        let cur_in = cur.z >= NEAR_PLANE;
        let next_in = next.z >= NEAR_PLANE;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            let t = (NEAR_PLANE - cur.z) / (next.z - cur.z);
            out.push(cur + (next - cur) * t);
        }
    }
    out
}

fn setup_triangle(corners: &[Vector3<f64>; 3], k: &CameraIntrinsics) -> Option<ScreenTri> {
    let mut p = [(0.0, 0.0); 3];
    let mut iz = [0.0; 3];
    for (i, c) in corners.iter().enumerate() {
        p[i] = (k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy);
        iz[i] = 1.0 / c.z;
    }
    let mut area2 = edge(p[0], p[1], p[2].0, p[2].1);
    if area2 == 0.0 || !area2.is_finite() {
        return None;
    }
    if area2 < 0.0 {
        p.swap(1, 2);
        iz.swap(1, 2);
        area2 = -area2;
    }

    let min_u = p[0].0.min(p[1].0).min(p[2].0);
    let max_u = p[0].0.max(p[1].0).max(p[2].0);
    let min_v = p[0].1.min(p[1].1).min(p[2].1);
    let max_v = p[0].1.max(p[1].1).max(p[2].1);
    // Pixel x is sampled at x + 0.5, so x covers [min_u - 0.5, max_u - 0.5].
    let min_x = (min_u - 0.5).ceil().max(0.0) as i64;
    let max_x = ((max_u - 0.5).floor() as i64).min(k.width as i64 - 1);
    let min_y = (min_v - 0.5).ceil().max(0.0) as i64;
    let max_y = ((max_v - 0.5).floor() as i64).min(k.height as i64 - 1);
    if min_x > max_x || min_y > max_y {
        return None;
    }

    Some(ScreenTri {
        p,
        iz,
        area2,
        top_left: [
            is_top_left(p[1], p[2]),
            is_top_left(p[2], p[0]),
            is_top_left(p[0], p[1]),
        ],
        min_x: min_x as u32,
        max_x: max_x as u32,
        min_y: min_y as u32,
        max_y: max_y as u32,
    })
}

/// Renders the nearest-surface depth of several posed meshes into one map.
///
/// Triangle order is the instance order crossed with each mesh's triangle
/// order; rows are processed independently, so ties at equal depth resolve
/// identically on every run.
pub fn rasterize_depth_scene(
    items: &[(&TriMesh, &Pose)],
    k: &CameraIntrinsics,
) -> DepthMap {
    let mut tris: Vec<ScreenTri> = Vec::new();
    for (mesh, pose) in items {
        let cam_vertices: Vec<Vector3<f64>> = mesh
            .vertices
            .iter()
            .map(|v| pose.transform_point(v).coords)
            .collect();
        for tri in &mesh.triangles {
            let corners = [
                cam_vertices[tri[0] as usize],
                cam_vertices[tri[1] as usize],
                cam_vertices[tri[2] as usize],
            ];
            if corners.iter().all(|c| c.z >= NEAR_PLANE) {
                if let Some(t) = setup_triangle(&corners, k) {
                    tris.push(t);
                }
            } else if corners.iter().any(|c| c.z >= NEAR_PLANE) {
                let poly = clip_near(&corners);
                for i in 1..poly.len().saturating_sub(1) {
                    if let Some(t) = setup_triangle(&[poly[0], poly[i], poly[i + 1]], k) {
                        tris.push(t);
                    }
                }
            }
        }
    }

    let width = k.width as usize;
    let mut depth = DepthMap::new(k.width, k.height);
    depth
        .values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            let py = y as f64 + 0.5;
            for tri in &tris {
                if (y as u32) < tri.min_y || (y as u32) > tri.max_y {
                    continue;
                }
                let [a, b, c] = tri.p;
                let (iz0, diz1, diz2) = (
                    tri.iz[0],
                    tri.iz[1] - tri.iz[0],
                    tri.iz[2] - tri.iz[0],
                );
                for x in tri.min_x..=tri.max_x {
                    let px = x as f64 + 0.5;
                    let w0 = edge(b, c, px, py);
                    let w1 = edge(c, a, px, py);
                    let w2 = edge(a, b, px, py);
                    let inside = (w0 > 0.0 || (w0 == 0.0 && tri.top_left[0]))
                        && (w1 > 0.0 || (w1 == 0.0 && tri.top_left[1]))
                        && (w2 > 0.0 || (w2 == 0.0 && tri.top_left[2]));
                    if !inside {
                        continue;
                    }
                    let iz = iz0 + (w1 / tri.area2) * diz1 + (w2 / tri.area2) * diz2;
                    if !(iz > 0.0) {
                        continue;
                    }
                    let z = 1.0 / iz;
                    let slot = &mut row[x as usize];
                    if *slot == 0.0 || z < *slot {
                        *slot = z;
                    }
                }
            }
        });
    depth
}

/// Renders one mesh under one pose (see [`rasterize_depth_scene`]).
pub fn rasterize_depth(mesh: &TriMesh, pose: &Pose, k: &CameraIntrinsics) -> DepthMap {
    rasterize_depth_scene(&[(mesh, pose)], k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::MIN_DEPTH;
    use nalgebra::Point3;

    fn quad_mesh(corners: [[f64; 3]; 4]) -> TriMesh {
        TriMesh::new(
            corners.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect(),
            vec![[0, 1, 2], [0, 2, 3]],
            None,
        )
        .unwrap()
    }

    /// A quad spanning the full view at constant depth.
    fn full_view_quad(z: f64) -> TriMesh {
        quad_mesh([
            [-10000.0, -10000.0, z],
            [10000.0, -10000.0, z],
            [10000.0, 10000.0, z],
            [-10000.0, 10000.0, z],
        ])
    }

    fn small_k() -> CameraIntrinsics {
        CameraIntrinsics::new(1000.0, 1000.0, 16.0, 16.0, 32, 32).unwrap()
    }

    #[test]
    fn constant_depth_plane_reads_exactly() {
        let k = super::super::tests::test_k();
        let depth = rasterize_depth(&full_view_quad(100.0), &Pose::identity(), &k);
        assert_eq!(depth.coverage(), 640 * 480);
        assert!(depth.values().iter().all(|&v| v == 100.0));
    }

    #[test]
    fn z_buffer_keeps_nearest_surface() {
        let k = super::super::tests::test_k();
        let far = full_view_quad(100.0);
        let near = quad_mesh([
            [-5.0, -5.0, 50.0],
            [5.0, -5.0, 50.0],
            [5.0, 5.0, 50.0],
            [-5.0, 5.0, 50.0],
        ]);
        let id = Pose::identity();
        let depth = rasterize_depth_scene(&[(&far, &id), (&near, &id)], &k);
        // Near quad covers +-5mm at z=50 -> +-50px around the centre.
        assert_eq!(depth.get(320, 240), 50.0);
        assert_eq!(depth.get(10, 10), 100.0);
        // Order must not matter for the nearest-depth result.
        let depth_rev = rasterize_depth_scene(&[(&near, &id), (&far, &id)], &k);
        assert_eq!(depth.values(), depth_rev.values());
    }

    #[test]
    fn unit_square_covers_the_projected_footprint() {
        // Square [0,1]^2 at z=500 with fx=fy=1000, cx=cy=16 projects to
        // u = 2x + 16 in [16,18], v likewise: exactly pixels {16,17}^2.
        let k = small_k();
        let square = quad_mesh([
            [0.0, 0.0, 500.0],
            [1.0, 0.0, 500.0],
            [1.0, 1.0, 500.0],
            [0.0, 1.0, 500.0],
        ]);
        let depth = rasterize_depth(&square, &Pose::identity(), &k);
        let mut covered = Vec::new();
        for y in 0..32 {
            for x in 0..32 {
                if depth.get(x, y) > 0.0 {
                    covered.push((x, y));
                    assert_eq!(depth.get(x, y), 500.0);
                }
            }
        }
        assert_eq!(covered, vec![(16, 16), (17, 16), (16, 17), (17, 17)]);
    }

    #[test]
    fn adjacent_triangles_tile_without_seams_or_double_cover() {
        // The shared diagonal of a quad must be owned by exactly one triangle
        // per pixel; with distinct depths per triangle no pixel may remain
        // uncovered inside the quad, nor read a mixed value.
        let k = small_k();
        let quad = TriMesh::new(
            vec![
                Point3::new(-8.0, -8.0, 1000.0),
                Point3::new(8.0, -8.0, 1000.0),
                Point3::new(8.0, 8.0, 1000.0),
                Point3::new(-8.0, 8.0, 1000.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
        )
        .unwrap();
        let depth = rasterize_depth(&quad, &Pose::identity(), &k);
        // Quad spans u in [8, 24): pixels 8..=23.
        for y in 8..24 {
            for x in 8..24 {
                assert_eq!(depth.get(x, y), 1000.0, "hole at ({x},{y})");
            }
        }
        assert_eq!(depth.coverage(), 16 * 16);
    }

    #[test]
    fn near_plane_clipping_keeps_front_part() {
        // A triangle straddling the camera plane: only the front part
        // rasterizes, and no non-finite values appear.
        let k = super::super::tests::test_k();
        let mesh = TriMesh::new(
            vec![
                Point3::new(0.0, -50.0, -100.0),
                Point3::new(30.0, 50.0, 200.0),
                Point3::new(-30.0, 50.0, 200.0),
            ],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        let depth = rasterize_depth(&mesh, &Pose::identity(), &k);
        assert!(depth.coverage() > 0);
        for &v in depth.values() {
            assert!(v.is_finite() && v >= 0.0);
            assert!(v == 0.0 || v >= NEAR_PLANE - 1e-12);
        }
    }

    #[test]
    fn fully_behind_camera_renders_nothing() {
        let k = super::super::tests::test_k();
        let depth = rasterize_depth(&full_view_quad(-200.0), &Pose::identity(), &k);
        assert_eq!(depth.coverage(), 0);
        let _ = MIN_DEPTH;
    }

    #[test]
    fn perspective_interpolation_recovers_planar_depth() {
        // A tilted plane z = 600 + x/2 (model frame = camera frame). The
        // rasterized depth at each covered pixel must satisfy the plane
        // equation under the pinhole model to high accuracy.
        let k = super::super::tests::test_k();
        let mesh = quad_mesh([
            [-300.0, -300.0, 450.0],
            [300.0, -300.0, 750.0],
            [300.0, 300.0, 750.0],
            [-300.0, 300.0, 450.0],
        ]);
        let depth = rasterize_depth(&mesh, &Pose::identity(), &k);
        assert!(depth.coverage() > 1000);
        for y in (0..480).step_by(37) {
            for x in (0..640).step_by(41) {
                let z = depth.get(x, y);
                if z == 0.0 {
                    continue;
                }
                // Ray through the pixel: X = (u-cx) z / fx; plane z = 600 + X/2.
                let xm = (x as f64 + 0.5 - k.cx) * z / k.fx;
                let expected = 600.0 + xm / 2.0;
                assert!(
                    (z - expected).abs() <= 1e-9 * expected,
                    "pixel ({x},{y}): z={z}, plane says {expected}"
                );
            }
        }
    }

    #[test]
    fn row_parallel_output_is_stable_across_runs() {
        let k = super::super::tests::test_k();
        let mesh = crate::geometry::compute_vertex_normals(&full_view_quad(64.0));
        let a = rasterize_depth(&mesh, &Pose::identity(), &k);
        let b = rasterize_depth(&mesh, &Pose::identity(), &k);
        assert_eq!(a.values(), b.values());
    }

    fn double_res(k: &CameraIntrinsics) -> CameraIntrinsics {
        CameraIntrinsics::new(
            k.fx * 2.0,
            k.fy * 2.0,
            k.cx * 2.0,
            k.cy * 2.0,
            k.width * 2,
            k.height * 2,
        )
        .unwrap()
    }

    fn min_pool(fine: &DepthMap, x: u32, y: u32) -> f64 {
        let mut pooled = f64::INFINITY;
        for (sx, sy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let v = fine.get(2 * x + sx, 2 * y + sy);
            if v > 0.0 {
                pooled = pooled.min(v);
            }
        }
        pooled
    }

    #[test]
    fn min_pool_of_double_resolution_matches_on_single_surface() {
        // One constant-depth surface: the min-pooled 2Wx2H render equals the
        // WxH render exactly wherever both have coverage. (Multi-surface
        // scenes can only be compared one-sidedly, below: the sample rays of
        // the two grids differ near footprint boundaries.)
        let k = small_k();
        let quad = quad_mesh([
            [-6.1, -6.3, 800.0],
            [5.9, -6.3, 800.0],
            [5.9, 6.2, 800.0],
            [-6.1, 6.2, 800.0],
        ]);
        let id = Pose::identity();
        let coarse = rasterize_depth(&quad, &id, &k);
        let fine = rasterize_depth(&quad, &id, &double_res(&k));
        let mut compared = 0;
        for y in 0..k.height {
            for x in 0..k.width {
                let c = coarse.get(x, y);
                let pooled = min_pool(&fine, x, y);
                if c > 0.0 && pooled.is_finite() {
                    assert_eq!(pooled, c, "pixel ({x},{y})");
                    compared += 1;
                }
            }
        }
        assert!(compared > 100);
    }

    #[test]
    fn min_pool_of_double_resolution_never_exceeds_coarse_depth() {
        // Overlapping constant-depth surfaces: finer sampling may catch a
        // nearer surface the coarse centre missed, but never a farther one.
        let k = small_k();
        let far = quad_mesh([
            [-6.0, -6.0, 800.0],
            [6.0, -6.0, 800.0],
            [6.0, 6.0, 800.0],
            [-6.0, 6.0, 800.0],
        ]);
        let near = quad_mesh([
            [-1.5, -2.5, 300.0],
            [2.0, -2.5, 300.0],
            [2.0, 1.0, 300.0],
            [-1.5, 1.0, 300.0],
        ]);
        let id = Pose::identity();
        let coarse = rasterize_depth_scene(&[(&far, &id), (&near, &id)], &k);
        let fine = rasterize_depth_scene(&[(&far, &id), (&near, &id)], &double_res(&k));
        for y in 0..k.height {
            for x in 0..k.width {
                let c = coarse.get(x, y);
                let pooled = min_pool(&fine, x, y);
                if c > 0.0 && pooled.is_finite() {
                    assert!(
                        pooled <= c * (1.0 + 1e-6),
                        "pixel ({x},{y}): pooled {pooled} > coarse {c}"
                    );
                }
            }
        }
    }
}
