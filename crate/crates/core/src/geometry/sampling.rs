//! Area-uniform random sampling of a mesh surface.

use super::{GeometryError, TriMesh};
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Points drawn uniformly by area from a mesh surface.
#[derive(Debug, Clone)]
pub struct SurfaceSamples {
    /// Sample positions in model coordinates, mm.
    pub points: Vec<Point3<f64>>,
    /// Unit normal of the triangle each sample came from.
    pub normals: Vec<Vector3<f64>>,
    /// Index of the source triangle per sample.
    pub source_triangle: Vec<u32>,
    /// `sqrt(surface_area / count)`: the expected nearest-sample scale, mm.
    pub mean_spacing: f64,
}

impl SurfaceSamples {
    /// Number of samples.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when no samples are present (never for [`sample_surface`] output).
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws `count` points uniformly by area from the surface of `mesh`.
///
/// Triangles are picked with probability proportional to their area (so
/// degenerate triangles are never picked) and points are placed by folded
/// barycentric coordinates, which is uniform within each triangle. The draw
/// sequence depends only on `seed`, so equal inputs give bit-equal outputs.
///
/// Errors: [`GeometryError::ZeroCount`] when `count` is zero and
/// [`GeometryError::EmptySurface`] when no triangle has positive area.
pub fn sample_surface(
    mesh: &TriMesh,
    count: usize,
    seed: u64,
) -> Result<SurfaceSamples, GeometryError> {
    if count == 0 {
        return Err(GeometryError::ZeroCount);
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len() + 1);
    cumulative.push(0.0f64);
    let mut total = 0.0f64;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(GeometryError::EmptySurface);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    let mut source_triangle = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.gen::<f64>() * total;
        // Index of the last cumulative entry <= target; degenerate triangles
        // occupy an empty interval and are skipped by the partition point.
        let t = cumulative
            .partition_point(|&c| c <= target)
            .saturating_sub(1)
            .min(mesh.triangles.len() - 1);
        let (mut r0, mut r1) = (rng.gen::<f64>(), rng.gen::<f64>());
        if r0 + r1 > 1.0 {
            r0 = 1.0 - r0;
            r1 = 1.0 - r1;
        }
        let [a, b, c] = mesh.triangle_points(t);
        points.push(a + (b - a) * r0 + (c - a) * r1);
        normals.push(mesh.triangle_normal(t).expect("picked triangle has area"));
        source_triangle.push(t as u32);
    }

    Ok(SurfaceSamples {
        points,
        normals,
        source_triangle,
        mean_spacing: (total / count as f64).sqrt(),
    })
}
