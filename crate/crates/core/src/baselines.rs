//! Non-learned generators: even sampling along edges and isotropic Gaussian
//! blobs around vertices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::frame::{compute_frames, FrameSet};
use crate::geom::{PointCloud, Vec3};
use crate::graph::{total_capacity, MsgGraph};

/// Default spread of [`graph_gaussian`] in units of the scale factor.
pub const DEFAULT_KAPPA: f64 = 0.5;

/// Anything that turns a structure graph into a labelled point cloud.
pub trait Generator: Send + Sync {
    fn generate(&self, g: &MsgGraph, seed: u64) -> Result<PointCloud>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Baseline {
    Interpolation,
    Gaussian { kappa: f64 },
}

impl Generator for Baseline {
    fn generate(&self, g: &MsgGraph, seed: u64) -> Result<PointCloud> {
        match *self {
            Baseline::Interpolation => graph_interpolation(g, seed),
            Baseline::Gaussian { kappa } => graph_gaussian(g, &compute_frames(g)?, kappa, seed),
        }
    }
}

/// Splits `total` into integer shares proportional to `weights` by largest
/// remainder; equal remainders favour the earlier entry. All-zero weights
/// split evenly.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    if weights.is_empty() {
        return Vec::new();
    }
    let sum: f64 = weights.iter().sum();
    let w: Vec<f64> = if sum > 0.0 {
        weights.to_vec()
    } else {
        vec![1.0; weights.len()]
    };
    let sum: f64 = w.iter().sum();
    let quota: Vec<f64> = w.iter().map(|x| x / sum * total as f64).collect();
    let mut shares: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
    let left = total - shares.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quota[a] - quota[a].floor(), quota[b] - quota[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(left) {
        shares[i] += 1;
    }
    shares
}

/// Places `Σ C_i` points evenly along the edges, allotted by edge length.
/// Isolated vertices contribute `C_i` copies of their location. A point on
/// edge `(a, b)` is attributed to the nearer endpoint. `seed` is unused.
pub fn graph_interpolation(g: &MsgGraph, _seed: u64) -> Result<PointCloud> {
    g.check()?;
    let adj = g.adjacency();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, v) in g.vertices.iter().enumerate() {
        if adj[i].is_empty() {
            points.extend(std::iter::repeat_n(v.location, v.capacity as usize));
            labels.extend(std::iter::repeat_n(v.id, v.capacity as usize));
        }
    }
    let on_edges = total_capacity(g) as usize - points.len();
    let ends: Vec<(&crate::graph::MsgVertex, &crate::graph::MsgVertex)> = g
        .edges
        .iter()
        .map(|&(a, b)| (g.vertex(a).expect("checked"), g.vertex(b).expect("checked")))
        .collect();
    let lengths: Vec<f64> = ends
        .iter()
        .map(|(a, b)| (b.location - a.location).norm())
        .collect();
    for ((a, b), m) in ends.iter().zip(largest_remainder(&lengths, on_edges)) {
        for k in 0..m {
            let t = (k as f64 + 0.5) / m as f64;
            points.push(a.location.lerp(&b.location, t));
            labels.push(if t <= 0.5 { a.id } else { b.id });
        }
    }
    PointCloud::with_labels(points, labels)
}

/// Vertex `i` emits `C_i` points from an isotropic normal centred on `L_i`
/// with standard deviation `kappa · SF_i`.
///
/// Unit draws are taken in the vertex's canonical frame and mapped out with
/// `R_iᵀ`. The distribution is unchanged (it is isotropic), but the result
/// transforms exactly with the graph for a fixed seed.
pub fn graph_gaussian(
    g: &MsgGraph,
    frames: &FrameSet,
    kappa: f64,
    seed: u64,
) -> Result<PointCloud> {
    g.check()?;
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::invalid(format!(
            "kappa must be a non-negative number, got {kappa}"
        )));
    }
    if frames.ids.len() != g.len()
        || frames
            .ids
            .iter()
            .zip(&g.vertices)
            .any(|(&id, v)| id != v.id)
    {
        return Err(Error::invalid("frames do not belong to this graph"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = total_capacity(g) as usize;
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (v, f) in g.vertices.iter().zip(&frames.frames) {
        let back = f.rotation.transpose() * (kappa * f.scale_factor);
        for _ in 0..v.capacity {
            let e = Vec3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            points.push(v.location + back * e);
            labels.push(v.id);
        }
    }
    PointCloud::with_labels(points, labels)
}
