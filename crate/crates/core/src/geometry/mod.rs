//! Triangle meshes and surface operations.
//!
//! A [`TriMesh`] stores vertices in model coordinates (millimetres) with
//! triangle indices and optional per-vertex unit normals. Helpers cover PLY
//! round-trips ([`load_mesh`] / [`save_mesh`]), the object diameter used by
//! distance-threshold metrics ([`mesh_diameter`]), area-uniform surface
//! sampling ([`sample_surface`]), and area-weighted vertex normals
//! ([`compute_vertex_normals`]).

mod hull;
mod ply;
mod sampling;

pub use hull::convex_hull_vertices;
pub use ply::{load_mesh, save_mesh, PlyError, PlyFormat};
pub use sampling::{sample_surface, SurfaceSamples};

use nalgebra::{Point3, Vector3};
use thiserror::Error;

/// Errors from mesh construction and surface operations.
#[derive(Debug, Error)]
pub enum GeometryError {
    /// A triangle references a vertex index outside the vertex list.
    #[error("triangle {triangle} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        vertex_count: usize,
    },
    /// A vertex coordinate or normal component is NaN or infinite.
    #[error("vertex {vertex} has a non-finite {what}")]
    NonFinite { vertex: usize, what: &'static str },
    /// Normals were supplied but their count does not match the vertex count.
    #[error("normal count {normals} does not match vertex count {vertices}")]
    NormalCountMismatch { normals: usize, vertices: usize },
    /// A supplied normal is not unit length.
    #[error("normal {vertex} has length {length}, expected 1 within 1e-6")]
    NonUnitNormal { vertex: usize, length: f64 },
    /// The operation needs at least two vertices.
    #[error("operation needs at least 2 vertices, mesh has {0}")]
    TooFewVertices(usize),
    /// Every triangle of the mesh is degenerate (zero area).
    #[error("mesh has no triangle with positive area")]
    EmptySurface,
    /// A sample or keypoint count of zero was requested.
    #[error("requested count must be at least 1")]
    ZeroCount,
}

/// An indexed triangle mesh in model coordinates (millimetres).
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    /// Vertex positions, mm.
    pub vertices: Vec<Point3<f64>>,
    /// Counter-clockwise vertex indices per triangle.
    pub triangles: Vec<[u32; 3]>,
    /// Optional per-vertex unit normals, same length as `vertices`.
    pub vertex_normals: Option<Vec<Vector3<f64>>>,
}

impl TriMesh {
    /// Builds a mesh and checks its structural invariants: indices in range,
    /// finite coordinates, and (if present) one unit normal per vertex.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        vertex_normals: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self, GeometryError> {
        let mesh = TriMesh {
            vertices,
            triangles,
            vertex_normals,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Re-checks the invariants enforced by [`TriMesh::new`].
    pub fn validate(&self) -> Result<(), GeometryError> {
        for (vi, v) in self.vertices.iter().enumerate() {
            if !v.coords.iter().all(|c| c.is_finite()) {
                return Err(GeometryError::NonFinite {
                    vertex: vi,
                    what: "coordinate",
                });
            }
        }
        for (ti, tri) in self.triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= self.vertices.len() {
                    return Err(GeometryError::IndexOutOfRange {
                        triangle: ti,
                        index,
                        vertex_count: self.vertices.len(),
                    });
                }
            }
        }
        if let Some(normals) = &self.vertex_normals {
            if normals.len() != self.vertices.len() {
                return Err(GeometryError::NormalCountMismatch {
                    normals: normals.len(),
                    vertices: self.vertices.len(),
                });
            }
            for (vi, n) in normals.iter().enumerate() {
                if !n.iter().all(|c| c.is_finite()) {
                    return Err(GeometryError::NonFinite {
                        vertex: vi,
                        what: "normal",
                    });
                }
                let length = n.norm();
                if (length - 1.0).abs() > 1e-6 {
                    return Err(GeometryError::NonUnitNormal { vertex: vi, length });
                }
            }
        }
        Ok(())
    }

    /// Corner positions of triangle `t`.
    pub fn triangle_points(&self, t: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Area of triangle `t` in mm^2 (zero for degenerate triangles).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unit normal of triangle `t`, or `None` when the triangle is degenerate.
    pub fn triangle_normal(&self, t: usize) -> Option<Vector3<f64>> {
        let [a, b, c] = self.triangle_points(t);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            Some(n / len)
        } else {
            None
        }
    }

    /// Total surface area in mm^2.
    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Axis-aligned bounding box as `(min, max)`.
    ///
    /// Panics if the mesh has no vertices.
    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        assert!(!self.vertices.is_empty(), "bounding_box of an empty mesh");
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            for i in 0..3 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        (lo, hi)
    }

    /// A sphere containing every vertex: box centre plus max vertex distance.
    ///
    /// Not minimal, but cheap and deterministic; used for collision tests in
    /// scene layout.
    pub fn bounding_sphere(&self) -> (Point3<f64>, f64) {
        let (lo, hi) = self.bounding_box();
        let centre = Point3::from((lo.coords + hi.coords) * 0.5);
        let radius = self
            .vertices
            .iter()
            .map(|v| (v - centre).norm())
            .fold(0.0, f64::max);
        (centre, radius)
    }
}

/// Largest pairwise vertex distance (the object diameter), in mm.
///
/// Exact for meshes up to 2048 vertices; larger meshes are first reduced to
/// their convex hull vertices, which preserves the maximum exactly.
///
/// Errors with [`GeometryError::TooFewVertices`] when the mesh has fewer than
/// two vertices.
pub fn mesh_diameter(mesh: &TriMesh) -> Result<f64, GeometryError> {
    if mesh.vertices.len() < 2 {
        return Err(GeometryError::TooFewVertices(mesh.vertices.len()));
    }
    let candidates: Vec<usize> = if mesh.vertices.len() <= 2048 {
        (0..mesh.vertices.len()).collect()
    } else {
        convex_hull_vertices(&mesh.vertices)
    };
    let mut best = 0.0f64;
    for (i, &a) in candidates.iter().enumerate() {
        let pa = mesh.vertices[a];
        for &b in &candidates[i + 1..] {
            let d2 = (mesh.vertices[b] - pa).norm_squared();
            if d2 > best {
                best = d2;
            }
        }
    }
    Ok(best.sqrt())
}

/// Returns a copy of the mesh with area-weighted per-vertex unit normals.
///
/// Each vertex normal is the sum of incident triangle cross products (which
/// weights by triangle area) renormalized to unit length. Vertices with no
/// non-degenerate incident triangle get an arbitrary unit normal (+z) so the
/// output always satisfies the mesh invariants.
pub fn compute_vertex_normals(mesh: &TriMesh) -> TriMesh {
    let mut sums = vec![Vector3::zeros(); mesh.vertices.len()];
    for tri in &mesh.triangles {
        let [a, b, c] = *tri;
        let pa = mesh.vertices[a as usize];
        let pb = mesh.vertices[b as usize];
        let pc = mesh.vertices[c as usize];
        let cross = (pb - pa).cross(&(pc - pa));
        sums[a as usize] += cross;
        sums[b as usize] += cross;
        sums[c as usize] += cross;
    }
    let normals = sums
        .into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vector3::z()
            }
        })
        .collect();
    TriMesh {
        vertices: mesh.vertices.clone(),
        triangles: mesh.triangles.clone(),
        vertex_normals: Some(normals),
    }
}
