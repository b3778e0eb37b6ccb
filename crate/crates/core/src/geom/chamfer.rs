use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::par::Parallelism;

use super::nn::{nearest, NnMethod};
use super::PointCloud;

/// Symmetric Chamfer distance with un-squared Euclidean terms:
/// mean over `a` of the distance to the nearest point of `b`, plus the same
/// from `b` to `a`.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    chamfer_distance_with(a, b, Parallelism::default())
}

pub fn chamfer_distance_with(a: &PointCloud, b: &PointCloud, mode: Parallelism) -> Result<f64> {
    check_non_empty(a, "first")?;
    check_non_empty(b, "second")?;
    let ab = mean_nearest(a, b, mode);
    let ba = mean_nearest(b, a, mode);
    Ok(ab + ba)
}

fn mean_nearest(from: &PointCloud, to: &PointCloud, mode: Parallelism) -> f64 {
    let nn = nearest(&from.points, &to.points, NnMethod::BruteForce, mode);
    nn.iter().map(|n| n.distance).sum::<f64>() / from.len() as f64
}

fn check_non_empty(c: &PointCloud, which: &str) -> Result<()> {
    if c.is_empty() {
        return Err(Error::invalid(format!("{which} point cloud is empty")));
    }
    c.validate()
}

/// Capacity-weighted Chamfer distance.
///
/// The ground-truth → generated term is the plain mean nearest distance.
/// The generated → ground-truth term divides each point's nearest distance by
/// the capacity of the vertex that bred it and averages over the `k`
/// vertices instead of the points, so every vertex carries the same total
/// weight regardless of its capacity.
pub fn weighted_chamfer_distance(
    generated: &PointCloud,
    ground_truth: &PointCloud,
    capacities: &BTreeMap<u32, u32>,
    k: usize,
) -> Result<f64> {
    check_non_empty(generated, "generated")?;
    check_non_empty(ground_truth, "ground-truth")?;
    if k == 0 {
        return Err(Error::invalid("vertex count must be at least 1"));
    }
    let labels = generated
        .source_vertex
        .as_ref()
        .ok_or_else(|| Error::invalid("generated cloud has no source-vertex labels"))?;
    let weights = labels
        .iter()
        .map(|id| match capacities.get(id) {
            Some(&c) if c >= 1 => Ok(1.0 / c as f64),
            Some(_) => Err(Error::invalid(format!("vertex {id} has zero capacity"))),
            None => Err(Error::invalid(format!("no capacity for vertex {id}"))),
        })
        .collect::<Result<Vec<f64>>>()?;

    let mode = Parallelism::default();
    let coverage = mean_nearest(ground_truth, generated, mode);
    let nn = nearest(
        &generated.points,
        &ground_truth.points,
        NnMethod::BruteForce,
        mode,
    );
    let weighted: f64 = nn.iter().zip(&weights).map(|(n, w)| n.distance * w).sum();
    Ok(coverage + weighted / k as f64)
}
