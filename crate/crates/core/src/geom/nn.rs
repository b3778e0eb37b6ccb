//! Nearest-neighbour queries between point sets.
//!
//! Both search paths compare squared distances computed by the same
//! expression and break ties by the lower target index, so they return
//! bit-identical results.

use crate::par::{self, Parallelism};

use super::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NnMethod {
    #[default]
    BruteForce,
    /// Uniform grid over the target set.
    Grid,
}

#[inline]
fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn better(d2: f64, idx: usize, best_d2: f64, best_idx: usize) -> bool {
    d2 < best_d2 || (d2 == best_d2 && idx < best_idx)
}

/// Nearest target point for every query point. `target` must be non-empty.
pub fn nearest(
    query: &[Vec3],
    target: &[Vec3],
    method: NnMethod,
    mode: Parallelism,
) -> Vec<Neighbor> {
    assert!(!target.is_empty(), "nearest-neighbour target set is empty");
    match method {
        NnMethod::BruteForce => par::map_slice(query, mode, |q| brute_one(q, target)),
        NnMethod::Grid => {
            let grid = Grid::build(target);
            par::map_slice(query, mode, |q| grid.nearest(q, target))
        }
    }
}

fn brute_one(q: &Vec3, target: &[Vec3]) -> Neighbor {
    let mut best_d2 = f64::INFINITY;
    let mut best_idx = 0;
    for (i, t) in target.iter().enumerate() {
        let d2 = dist2(q, t);
        if d2 < best_d2 {
            best_d2 = d2;
            best_idx = i;
        }
    }
    Neighbor {
        index: best_idx,
        distance: best_d2.sqrt(),
    }
}

struct Grid {
    origin: Vec3,
    cell: f64,
    dims: [i64; 3],
    // CSR layout: points of cell c are order[start[c]..start[c + 1]]
    start: Vec<usize>,
    order: Vec<usize>,
}

impl Grid {
    fn build(points: &[Vec3]) -> Self {
        let (lo, hi) = points
            .iter()
            .fold((points[0], points[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        let extent = hi - lo;
        let n = points.len() as f64;
        let max_extent = extent.max();
        let mut cell = if max_extent > 0.0 {
            // about two points per cell for volumetric data; flat data gets
            // the per-axis spacing from the largest extent instead
            let vol = extent
                .iter()
                .map(|e| e.max(max_extent * 1e-3))
                .product::<f64>();
            (2.0 * vol / n).cbrt()
        } else {
            1.0
        };
        cell = cell.max(max_extent / 1000.0);
        if !(cell > 0.0 && cell.is_finite()) {
            cell = 1.0;
        }
        let dims: [i64; 3] = std::array::from_fn(|a| (extent[a] / cell).floor() as i64 + 1);
        let cell_count = (dims[0] * dims[1] * dims[2]) as usize;
        let mut counts = vec![0usize; cell_count + 1];
        let grid = Grid {
            origin: lo,
            cell,
            dims,
            start: Vec::new(),
            order: Vec::new(),
        };
        let keys: Vec<usize> = points.iter().map(|p| grid.flat(grid.coords(p))).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for c in 0..cell_count {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        Grid {
            start: counts,
            order,
            ..grid
        }
    }

    fn coords(&self, p: &Vec3) -> [i64; 3] {
        std::array::from_fn(|a| {
            (((p[a] - self.origin[a]) / self.cell).floor() as i64).clamp(0, self.dims[a] - 1)
        })
    }

    fn raw_coords(&self, p: &Vec3) -> [i64; 3] {
        std::array::from_fn(|a| {
            let c = ((p[a] - self.origin[a]) / self.cell).floor();
            c.clamp(-(1 << 20) as f64, (1 << 20) as f64) as i64
        })
    }

    fn flat(&self, c: [i64; 3]) -> usize {
        ((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize
    }

    fn nearest(&self, q: &Vec3, target: &[Vec3]) -> Neighbor {
        let center = self.raw_coords(q);
        let mut best_d2 = f64::INFINITY;
        let mut best_idx = usize::MAX;
        // Chebyshev distance from the query cell to the farthest grid cell.
        let max_ring = (0..3)
            .map(|a| (center[a]).abs().max((self.dims[a] - 1 - center[a]).abs()))
            .max()
            .unwrap_or(0);
        for ring in 0..=max_ring {
            // Everything beyond this ring is at least (ring - 1) cells away;
            // half a cell of slack absorbs rounding in the cell assignment.
            let bound = (ring as f64 - 1.5).max(0.0) * self.cell;
            if best_idx != usize::MAX && ring > 0 && best_d2 < bound * bound {
                break;
            }
            self.visit_ring(center, ring, |cell| {
                for &i in &self.order[self.start[cell]..self.start[cell + 1]] {
                    let d2 = dist2(q, &target[i]);
                    if better(d2, i, best_d2, best_idx) {
                        best_d2 = d2;
                        best_idx = i;
                    }
                }
            });
        }
        Neighbor {
            index: best_idx,
            distance: best_d2.sqrt(),
        }
    }

    fn visit_ring(&self, c: [i64; 3], ring: i64, mut f: impl FnMut(usize)) {
        let lo: [i64; 3] = std::array::from_fn(|a| (c[a] - ring).max(0));
        let hi: [i64; 3] = std::array::from_fn(|a| (c[a] + ring).min(self.dims[a] - 1));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let cheb = (x - c[0]).abs().max((y - c[1]).abs()).max((z - c[2]).abs());
                    if cheb == ring {
                        f(self.flat([x, y, z]));
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                ) * scale
            })
            .collect()
    }

    #[test]
    fn grid_and_parallel_paths_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..40 {
            let n = 1 + trial * 12;
            let target = random_points(&mut rng, n, 1.0 + trial as f64);
            let mut query = random_points(&mut rng, 300, 1.5 + trial as f64);
            // exact duplicates exercise the tie rule
            query.extend(target.iter().take(5).copied());
            let brute = nearest(
                &query,
                &target,
                NnMethod::BruteForce,
                Parallelism::Sequential,
            );
            let grid = nearest(&query, &target, NnMethod::Grid, Parallelism::Sequential);
            let par = nearest(&query, &target, NnMethod::BruteForce, Parallelism::Parallel);
            assert_eq!(brute, grid, "trial {trial}");
            assert_eq!(brute, par, "trial {trial}");
        }
    }

    #[test]
    fn ties_break_by_lower_index() {
        let target = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        ];
        let q = [Vec3::zeros()];
        for method in [NnMethod::BruteForce, NnMethod::Grid] {
            let r = nearest(&q, &target, method, Parallelism::Sequential);
            assert_eq!(r[0].index, 0);
        }
    }

    #[test]
    fn grid_handles_flat_and_degenerate_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let flat: Vec<Vec3> = (0..200)
            .map(|_| Vec3::new(rng.random(), rng.random(), 0.0))
            .collect();
        let single = vec![Vec3::new(2.0, 2.0, 2.0); 3];
        let query = random_points(&mut rng, 100, 3.0);
        for target in [&flat, &single] {
            assert_eq!(
                nearest(
                    &query,
                    target,
                    NnMethod::BruteForce,
                    Parallelism::Sequential
                ),
                nearest(&query, target, NnMethod::Grid, Parallelism::Sequential)
            );
        }
    }
}
