//! Convex hull vertex extraction (quickhull).
//!
//! The diameter of a point set is attained between two hull vertices, so the
//! exhaustive pair search only needs the hull. Degenerate inputs fall back to
//! lower-dimensional hulls: coplanar clouds to a 2D monotone chain, collinear
//! clouds to their two extremes, coincident clouds to a single index.

use nalgebra::{Point3, Vector3};
use std::collections::HashMap;

#[derive(Debug)]
struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
    conflicts: Vec<usize>,
    alive: bool,
}

impl Face {
    fn dist(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

/// Indices of the vertices on the convex hull of `points`, sorted ascending.
///
/// For full-dimensional inputs this is quickhull with conflict lists; the
/// result is exact up to a relative tolerance of ~1e-10, which can only add
/// near-hull points, never drop true extreme points by more than that slack.
pub fn convex_hull_vertices(points: &[Point3<f64>]) -> Vec<usize> {
    if points.len() <= 2 {
        return (0..points.len()).collect();
    }
    let scale = points
        .iter()
        .flat_map(|p| p.coords.iter().map(|c| c.abs()).collect::<Vec<_>>())
        .fold(1.0f64, f64::max);
    let eps = scale * 1e-10;

    // --- Initial extent: the farthest pair among the six axis extremes.
    let mut extremes = [0usize; 6];
    for axis in 0..3 {
        let (mut lo, mut hi) = (0usize, 0usize);
        for (i, p) in points.iter().enumerate() {
            if p[axis] < points[lo][axis] {
                lo = i;
            }
            if p[axis] > points[hi][axis] {
                hi = i;
            }
        }
        extremes[axis * 2] = lo;
        extremes[axis * 2 + 1] = hi;
    }
    let (mut a, mut b, mut best) = (extremes[0], extremes[1], -1.0f64);
    for (i, &e0) in extremes.iter().enumerate() {
        for &e1 in &extremes[i + 1..] {
            let d = (points[e0] - points[e1]).norm_squared();
            if d > best {
                best = d;
                a = e0;
                b = e1;
            }
        }
    }
    if best.sqrt() <= eps {
        return vec![a.min(b)];
    }

    // --- Farthest point from the line a-b; if none, the cloud is collinear.
    let dir = (points[b] - points[a]).normalize();
    let line_dist = |p: &Point3<f64>| {
        let d = p - points[a];
        (d - dir * d.dot(&dir)).norm()
    };
    let c = (0..points.len())
        .max_by(|&i, &j| line_dist(&points[i]).total_cmp(&line_dist(&points[j])))
        .unwrap();
    if line_dist(&points[c]) <= eps {
        let t = |i: usize| (points[i] - points[a]).dot(&dir);
        let lo = (0..points.len()).min_by(|&i, &j| t(i).total_cmp(&t(j))).unwrap();
        let hi = (0..points.len()).max_by(|&i, &j| t(i).total_cmp(&t(j))).unwrap();
        let mut out = vec![lo, hi];
        out.sort_unstable();
        out.dedup();
        return out;
    }

    // --- Farthest point from the plane a-b-c; if none, the cloud is coplanar.
    let plane_normal = (points[b] - points[a])
        .cross(&(points[c] - points[a]))
        .normalize();
    let plane_dist = |p: &Point3<f64>| (p - points[a]).dot(&plane_normal);
    let d = (0..points.len())
        .max_by(|&i, &j| {
            plane_dist(&points[i])
                .abs()
                .total_cmp(&plane_dist(&points[j]).abs())
        })
        .unwrap();
    if plane_dist(&points[d]).abs() <= eps {
        return planar_hull(points, &dir, &plane_normal);
    }

    // --- Full-dimensional: quickhull from the tetrahedron a, b, c, d.
    let centroid = Point3::from(
        (points[a].coords + points[b].coords + points[c].coords + points[d].coords) / 4.0,
    );
    let mut faces: Vec<Face> = Vec::new();
    for [p, q, r] in [[a, b, c], [a, b, d], [a, c, d], [b, c, d]] {
        faces.push(make_face(points, p, q, r, &centroid));
    }

    // Assign every remaining point to the first face it lies outside of.
    for (i, point) in points.iter().enumerate() {
        if i == a || i == b || i == c || i == d {
            continue;
        }
        for face in faces.iter_mut() {
            if face.dist(point) > eps {
                face.conflicts.push(i);
                break;
            }
        }
    }

    while let Some(seed) = faces
        .iter()
        .position(|f| f.alive && !f.conflicts.is_empty())
    {
        let apex = *faces[seed]
            .conflicts
            .iter()
            .max_by(|&&i, &&j| {
                faces[seed]
                    .dist(&points[i])
                    .total_cmp(&faces[seed].dist(&points[j]))
                    .then(j.cmp(&i))
            })
            .unwrap();
        let apex_point = points[apex];

        // Directed edge -> face index over the live surface.
        let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
        for (fi, face) in faces.iter().enumerate() {
            if face.alive {
                let [p, q, r] = face.v;
                edge_face.insert((p, q), fi);
                edge_face.insert((q, r), fi);
                edge_face.insert((r, p), fi);
            }
        }

        // Flood-fill the faces visible from the apex, starting at the seed.
        let mut visible = vec![false; faces.len()];
        visible[seed] = true;
        let mut queue = vec![seed];
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        while let Some(fi) = queue.pop() {
            let [p, q, r] = faces[fi].v;
            for (u, v) in [(p, q), (q, r), (r, p)] {
                let ni = edge_face[&(v, u)];
                if visible[ni] {
                    continue;
                }
                if faces[ni].dist(&apex_point) > eps {
                    visible[ni] = true;
                    queue.push(ni);
                } else {
                    // Neighbour keeps the surface: (u, v) is on the horizon.
                    horizon.push((u, v));
                }
            }
        }

        let mut orphans: Vec<usize> = Vec::new();
        for (fi, face) in faces.iter_mut().enumerate() {
            if visible[fi] {
                face.alive = false;
                orphans.append(&mut face.conflicts);
            }
        }

        let first_new = faces.len();
        for &(u, v) in &horizon {
            faces.push(make_face(points, u, v, apex, &centroid));
        }
        for orphan in orphans {
            if orphan == apex {
                continue;
            }
            for face in &mut faces[first_new..] {
                if face.dist(&points[orphan]) > eps {
                    face.conflicts.push(orphan);
                    break;
                }
            }
        }
    }

    let mut out: Vec<usize> = faces
        .iter()
        .filter(|f| f.alive)
        .flat_map(|f| f.v)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn make_face(
    points: &[Point3<f64>],
    p: usize,
    q: usize,
    r: usize,
    interior: &Point3<f64>,
) -> Face {
    let n = (points[q] - points[p]).cross(&(points[r] - points[p]));
    let len = n.norm();
    let mut normal = if len > 0.0 {
        n / len
    } else {
        Vector3::z() // degenerate sliver; harmless, it classifies nothing
    };
    let mut v = [p, q, r];
    if normal.dot(&(interior - points[p])) > 0.0 {
        normal = -normal;
        v.swap(1, 2);
    }
    let offset = normal.dot(&points[p].coords);
    Face {
        v,
        normal,
        offset,
        conflicts: Vec::new(),
        alive: true,
    }
}

/// Monotone-chain hull of a coplanar cloud, expressed in 3D indices.
fn planar_hull(points: &[Point3<f64>], u_axis: &Vector3<f64>, normal: &Vector3<f64>) -> Vec<usize> {
    let v_axis = normal.cross(u_axis);
    let flat: Vec<(f64, f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.coords.dot(u_axis), p.coords.dot(&v_axis), i))
        .collect();
    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_unstable_by(|&i, &j| {
        flat[i]
            .0
            .total_cmp(&flat[j].0)
            .then(flat[i].1.total_cmp(&flat[j].1))
    });
    let cross = |o: usize, a: usize, b: usize| {
        (flat[a].0 - flat[o].0) * (flat[b].1 - flat[o].1)
            - (flat[a].1 - flat[o].1) * (flat[b].0 - flat[o].0)
    };
    let mut chain: Vec<usize> = Vec::new();
    for pass in 0..2 {
        let start = chain.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in iter {
            while chain.len() >= start + 2
                && cross(chain[chain.len() - 2], chain[chain.len() - 1], i) <= 0.0
            {
                chain.pop();
            }
            chain.push(i);
        }
        chain.pop(); // the endpoint re-appears as the next pass's start
    }
    let mut out: Vec<usize> = chain.into_iter().map(|i| flat[i].2).collect();
    out.sort_unstable();
    out.dedup();
    out
}
