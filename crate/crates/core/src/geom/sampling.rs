use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{PointCloud, Vec3};

/// Farthest point sampling. The start index is drawn from `seed`; each
/// further pick maximizes the distance to the chosen set, ties going to the
/// lower index. Returns indices in pick order.
pub fn fps_indices(points: &[Vec3], n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > points.len() {
        return Err(Error::invalid(format!(
            "cannot sample {n} points from a cloud of {}",
            points.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let mut chosen = Vec::with_capacity(n);
    chosen.push(first);
    let mut min_d2: Vec<f64> = points
        .iter()
        .map(|p| (p - points[first]).norm_squared())
        .collect();
    min_d2[first] = f64::NEG_INFINITY;
    while chosen.len() < n {
        let mut best = 0;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, &d2) in min_d2.iter().enumerate() {
            if d2 > best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        chosen.push(best);
        let b = points[best];
        for (d2, p) in min_d2.iter_mut().zip(points) {
            *d2 = d2.min((p - b).norm_squared());
        }
        // already-picked points must never win again, even among duplicates
        min_d2[best] = f64::NEG_INFINITY;
    }
    Ok(chosen)
}

pub fn fps_downsample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    cloud.validate()?;
    let idx = fps_indices(&cloud.points, n, seed)?;
    Ok(PointCloud {
        points: idx.iter().map(|&i| cloud.points[i]).collect(),
        source_vertex: cloud
            .source_vertex
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect()),
    })
}
