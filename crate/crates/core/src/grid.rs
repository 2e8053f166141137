//! Uniform spatial hashing for exact neighbour queries on point sets.
//!
//! [`SpatialGrid`] buckets points into cubic cells and answers k-nearest,
//! radius-count, and nearest-point queries by expanding over cell shells.
//! Results are exact: a shell at Chebyshev cell distance `m` cannot contain a
//! point closer than `(m - 1) * cell`, so expansion stops only once the
//! current answer provably cannot improve. Ties in distance are broken by the
//! smaller point index, which keeps every query deterministic.

use nalgebra::Point3;
use std::collections::BinaryHeap;

/// Maximum cells per axis; tiny cell sizes degrade to denser buckets rather
/// than unbounded memory.
const MAX_CELLS_PER_AXIS: usize = 128;

/// A point with its distance used inside the k-NN max-heap.
#[derive(PartialEq)]
struct HeapEntry {
    dist2: f64,
    index: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Larger distance is "greater"; on equal distance the larger index
        // is "greater" so it gets evicted first.
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Uniform-cell index over a borrowed point set.
pub struct SpatialGrid<'a> {
    points: &'a [Point3<f64>],
    cell: f64,
    origin: Point3<f64>,
    dims: [usize; 3],
    /// CSR cell layout: `order[starts[c]..starts[c + 1]]` are the point
    /// indices in cell `c`, ascending.
    starts: Vec<u32>,
    order: Vec<u32>,
}

impl<'a> SpatialGrid<'a> {
    /// Builds a grid with the requested cell edge length (clamped so no axis
    /// exceeds [`MAX_CELLS_PER_AXIS`] cells).
    ///
    /// Panics if `points` is empty or `cell` is not positive and finite.
    pub fn build(points: &'a [Point3<f64>], cell: f64) -> Self {
        assert!(!points.is_empty(), "SpatialGrid over an empty point set");
        assert!(
            cell.is_finite() && cell > 0.0,
            "cell size must be positive and finite"
        );
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let mut cell = cell;
        for i in 0..3 {
            let extent = hi[i] - lo[i];
            if extent / cell > (MAX_CELLS_PER_AXIS - 1) as f64 {
                cell = extent / (MAX_CELLS_PER_AXIS - 1) as f64;
            }
        }
        let mut dims = [0usize; 3];
        for i in 0..3 {
            dims[i] = ((hi[i] - lo[i]) / cell).floor() as usize + 1;
        }

        let n_cells = dims[0] * dims[1] * dims[2];
        let cell_of = |p: &Point3<f64>| -> usize {
            let mut idx = [0usize; 3];
            for i in 0..3 {
                idx[i] = (((p[i] - lo[i]) / cell).floor() as usize).min(dims[i] - 1);
            }
            (idx[2] * dims[1] + idx[1]) * dims[0] + idx[0]
        };

        let mut counts = vec![0u32; n_cells + 1];
        for p in points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut cursor = counts;
        let mut order = vec![0u32; points.len()];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p);
            order[cursor[c] as usize] = i as u32;
            cursor[c] += 1;
        }

        SpatialGrid {
            points,
            cell,
            origin: lo,
            dims,
            starts,
            order,
        }
    }

    fn cell_index_of(&self, p: &Point3<f64>) -> [i64; 3] {
        let mut idx = [0i64; 3];
        for i in 0..3 {
            idx[i] = (((p[i] - self.origin[i]) / self.cell).floor() as i64)
                .clamp(0, self.dims[i] as i64 - 1);
        }
        idx
    }

    fn for_cell(&self, idx: [i64; 3], mut visit: impl FnMut(usize)) {
        for (&i, &d) in idx.iter().zip(&self.dims) {
            if i < 0 || i as usize >= d {
                return;
            }
        }
        let c = (idx[2] as usize * self.dims[1] + idx[1] as usize) * self.dims[0] + idx[0] as usize;
        for &p in &self.order[self.starts[c] as usize..self.starts[c + 1] as usize] {
            visit(p as usize);
        }
    }

    /// Visits every cell whose Chebyshev distance from `centre` is exactly
    /// `ring` (the full block for `ring == 0`).
    fn for_ring(&self, centre: [i64; 3], ring: i64, mut visit: impl FnMut(usize)) {
        if ring == 0 {
            self.for_cell(centre, visit);
            return;
        }
        for dz in -ring..=ring {
            for dy in -ring..=ring {
                let on_shell_zy = dz.abs() == ring || dy.abs() == ring;
                let mut dx = -ring;
                while dx <= ring {
                    if on_shell_zy || dx.abs() == ring {
                        self.for_cell(
                            [centre[0] + dx, centre[1] + dy, centre[2] + dz],
                            &mut visit,
                        );
                        dx += 1;
                    } else {
                        dx = ring; // jump across the hollow interior
                    }
                }
            }
        }
    }

    fn max_ring(&self) -> i64 {
        *self.dims.iter().max().unwrap() as i64
    }

    /// Indices of the `k` nearest points to `query`, ascending by
    /// `(distance, index)`. `exclude` removes one point (typically the query
    /// itself) from consideration. Returns fewer than `k` when the set is
    /// smaller.
    pub fn k_nearest(&self, query: &Point3<f64>, k: usize, exclude: Option<usize>) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let centre = self.cell_index_of(query);
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        for ring in 0..=self.max_ring() {
            if heap.len() == k {
                let worst = heap.peek().unwrap().dist2.sqrt();
                if ((ring - 1) as f64) * self.cell > worst {
                    break;
                }
            }
            self.for_ring(centre, ring, |i| {
                if Some(i) == exclude {
                    return;
                }
                let dist2 = (self.points[i] - query).norm_squared();
                heap.push(HeapEntry { dist2, index: i });
                if heap.len() > k {
                    heap.pop();
                }
            });
        }
        let mut out: Vec<HeapEntry> = heap.into_vec();
        out.sort_unstable();
        out.into_iter().map(|e| e.index).collect()
    }

    /// Number of points within `radius` of point `centre_index`, including
    /// the point itself.
    pub fn count_within(&self, centre_index: usize, radius: f64) -> usize {
        let query = self.points[centre_index];
        let centre = self.cell_index_of(&query);
        let r2 = radius * radius;
        let max_ring = ((radius / self.cell).ceil() as i64 + 1).min(self.max_ring());
        let mut count = 0usize;
        for ring in 0..=max_ring {
            self.for_ring(centre, ring, |i| {
                if (self.points[i] - query).norm_squared() <= r2 {
                    count += 1;
                }
            });
        }
        count
    }

    /// Distance from `query` to the closest indexed point.
    pub fn nearest_distance(&self, query: &Point3<f64>) -> f64 {
        let nearest = self.k_nearest(query, 1, None);
        (self.points[nearest[0]] - query).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-40.0..40.0),
                    rng.gen_range(-40.0..40.0),
                    rng.gen_range(-40.0..40.0),
                )
            })
            .collect()
    }

    fn brute_k_nearest(
        points: &[Point3<f64>],
        query: &Point3<f64>,
        k: usize,
        exclude: Option<usize>,
    ) -> Vec<usize> {
        let mut all: Vec<usize> = (0..points.len()).filter(|&i| Some(i) != exclude).collect();
        all.sort_by(|&a, &b| {
            (points[a] - query)
                .norm_squared()
                .total_cmp(&(points[b] - query).norm_squared())
                .then(a.cmp(&b))
        });
        all.truncate(k);
        all
    }

    #[test]
    fn k_nearest_matches_brute_force() {
        for seed in 0..4 {
            let points = random_cloud(300, seed);
            let grid = SpatialGrid::build(&points, 5.0);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            for _ in 0..50 {
                let q = Point3::new(
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                );
                let k = rng.gen_range(1..20);
                assert_eq!(
                    grid.k_nearest(&q, k, None),
                    brute_k_nearest(&points, &q, k, None)
                );
            }
        }
    }

    #[test]
    fn k_nearest_excludes_the_query_point() {
        let points = random_cloud(200, 9);
        let grid = SpatialGrid::build(&points, 8.0);
        for i in (0..200).step_by(17) {
            let got = grid.k_nearest(&points[i], 8, Some(i));
            assert_eq!(got, brute_k_nearest(&points, &points[i], 8, Some(i)));
            assert!(!got.contains(&i));
        }
    }

    #[test]
    fn k_nearest_ties_prefer_smaller_index() {
        // Four points at identical distance 1 from the origin.
        let points = vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, -1.0, 0.0),
        ];
        let grid = SpatialGrid::build(&points, 0.5);
        assert_eq!(grid.k_nearest(&Point3::origin(), 2, None), vec![0, 1]);
    }

    #[test]
    fn count_within_matches_brute_force() {
        let points = random_cloud(400, 21);
        let grid = SpatialGrid::build(&points, 3.0);
        for i in (0..400).step_by(13) {
            for radius in [0.5, 4.0, 11.0, 100.0] {
                let brute = points
                    .iter()
                    .filter(|p| (*p - points[i]).norm_squared() <= radius * radius)
                    .count();
                assert_eq!(grid.count_within(i, radius), brute, "point {i} r {radius}");
            }
        }
    }

    #[test]
    fn nearest_distance_matches_brute_force() {
        let points = random_cloud(150, 33);
        let grid = SpatialGrid::build(&points, 2.0);
        let queries = random_cloud(40, 34);
        for q in &queries {
            let brute = points
                .iter()
                .map(|p| (p - q).norm())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(grid.nearest_distance(q), brute);
        }
    }

    #[test]
    fn k_larger_than_set_returns_everything() {
        let points = random_cloud(5, 40);
        let grid = SpatialGrid::build(&points, 1.0);
        let got = grid.k_nearest(&Point3::origin(), 50, None);
        assert_eq!(got.len(), 5);
    }

    #[test]
    fn handles_coincident_points_and_tiny_cells() {
        let mut points = vec![Point3::new(1.0, 1.0, 1.0); 30];
        points.push(Point3::new(2.0, 1.0, 1.0));
        let grid = SpatialGrid::build(&points, 1e-9);
        assert_eq!(grid.count_within(0, 0.0), 30);
        let nn = grid.k_nearest(&points[30], 3, Some(30));
        assert_eq!(nn, vec![0, 1, 2]);
    }
}
