//! MSG extraction: mixed-precision random k-means followed by
//! distance-threshold edge construction.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::nn::{nearest, NnMethod};
use crate::geom::{PointCloud, Vec3};
use crate::graph::{MsgGraph, MsgVertex};
use crate::par::Parallelism;

const KMEANS_MAX_ITERS: usize = 100;
/// Independent k-means++ / Lloyd runs per call; the lowest-SSE run wins.
pub const KMEANS_RESTARTS: usize = 4;

/// How the kept centroid set is formed from the coarse and fine runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// Random subset of the fine centroids only; the coarse run does not
    /// contribute to the result.
    #[default]
    AsWritten,
    /// The random fine subset plus every coarse centroid.
    Union,
}

impl std::str::FromStr for MixMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_written" | "as-written" => Ok(MixMode::AsWritten),
            "union" => Ok(MixMode::Union),
            other => Err(Error::invalid(format!("unknown mix mode {other:?}"))),
        }
    }
}

/// Inclusive integer interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KRange {
    pub lo: usize,
    pub hi: usize,
}

impl KRange {
    pub const fn new(lo: usize, hi: usize) -> Self {
        KRange { lo, hi }
    }

    pub const fn fixed(k: usize) -> Self {
        KRange { lo: k, hi: k }
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.lo < 1 || self.lo > self.hi {
            return Err(Error::invalid(format!(
                "{name} range [{}, {}] is invalid",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(self.lo..=self.hi)
    }
}

impl std::str::FromStr for KRange {
    type Err = Error;

    /// Accepts `"k"` or `"lo,hi"` / `"lo..hi"` (inclusive).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("bad range {s:?}, expected `k` or `lo,hi`"));
        let parts: Vec<&str> = s
            .split([',', ':'])
            .flat_map(|p| p.split(".."))
            .filter(|p| !p.is_empty())
            .collect();
        let nums = parts
            .iter()
            .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let r = match nums.as_slice() {
            [k] => KRange::fixed(*k),
            [lo, hi] => KRange::new(*lo, *hi),
            _ => return Err(bad()),
        };
        r.check("k")?;
        Ok(r)
    }
}

/// Unset fields take their defaults when deserialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractParams {
    pub coarse_k: KRange,
    pub fine_k: KRange,
    pub pick: KRange,
    /// Edge threshold as a multiple of the mean nearest-vertex distance.
    pub edge_tau: f64,
    pub mix_mode: MixMode,
    /// Add minimum-spanning edges between connected components.
    pub connect_components: bool,
    pub seed: u64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            coarse_k: KRange::new(4, 16),
            fine_k: KRange::new(64, 128),
            pick: KRange::new(12, 32),
            edge_tau: 1.8,
            mix_mode: MixMode::AsWritten,
            connect_components: false,
            seed: 0,
        }
    }
}

impl ExtractParams {
    pub fn with_seed(seed: u64) -> Self {
        ExtractParams {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.coarse_k.check("coarse k")?;
        self.fine_k.check("fine k")?;
        self.pick.check("pick")?;
        if !(self.edge_tau.is_finite() && self.edge_tau > 0.0) {
            return Err(Error::invalid(format!(
                "edge_tau must be positive, got {}",
                self.edge_tau
            )));
        }
        Ok(())
    }

    /// Smallest cloud the extractor accepts.
    pub fn min_points(&self) -> usize {
        self.fine_k.hi.max(self.coarse_k.hi)
    }
}

/// Centroids plus a per-point centroid index.
#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<Vec3>,
    pub assignment: Vec<usize>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }

    /// Sum of squared distances of points to their centroid.
    pub fn sse(&self, points: &[Vec3]) -> f64 {
        points
            .iter()
            .zip(&self.assignment)
            .map(|(p, &a)| (p - self.centroids[a]).norm_squared())
            .sum()
    }
}

/// Lloyd's k-means with k-means++ seeding, best of [`KMEANS_RESTARTS`] runs
/// drawn from one seeded stream.
pub fn kmeans(cloud: &PointCloud, k: usize, seed: u64) -> Result<Clustering> {
    cloud.validate()?;
    kmeans_points(&cloud.points, k, seed, Parallelism::default())
}

pub fn kmeans_points(
    points: &[Vec3],
    k: usize,
    seed: u64,
    mode: Parallelism,
) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} available points",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Clustering)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let c = lloyd(points, k, &mut rng, mode);
        let sse = c.sse(points);
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, c));
        }
    }
    Ok(best.expect("at least one run").1)
}

fn lloyd(points: &[Vec3], k: usize, rng: &mut ChaCha8Rng, mode: Parallelism) -> Clustering {
    let mut centroids = kmeans_pp(points, k, rng);
    let mut assignment: Vec<usize> = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let next = assign(points, &centroids, mode);
        let changed = next != assignment;
        assignment = next;
        reseed_empty(points, &centroids, &mut assignment);
        centroids = means(points, &assignment, k);
        if !changed {
            break;
        }
    }
    Clustering {
        centroids,
        assignment,
    }
}

fn kmeans_pp(points: &[Vec3], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let n = points.len();
    let first = rng.random_range(0..n);
    let mut chosen = vec![false; n];
    chosen[first] = true;
    let mut centroids = vec![points[first]];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| (p - points[first]).norm_squared())
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = points[pick];
        centroids.push(c);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min((p - c).norm_squared());
        }
    }
    centroids
}

fn assign(points: &[Vec3], centroids: &[Vec3], mode: Parallelism) -> Vec<usize> {
    nearest(points, centroids, NnMethod::BruteForce, mode)
        .into_iter()
        .map(|n| n.index)
        .collect()
}

/// Gives each empty cluster the point farthest from its current centroid,
/// taken from a cluster that can spare it.
fn reseed_empty(points: &[Vec3], centroids: &[Vec3], assignment: &mut [usize]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, &a) in assignment.iter().enumerate() {
            if sizes[a] < 2 {
                continue;
            }
            let d = (points[i] - centroids[a]).norm_squared();
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            sizes[assignment[i]] -= 1;
            assignment[i] = empty;
            sizes[empty] = 1;
        }
    }
}

fn means(points: &[Vec3], assignment: &[usize], k: usize) -> Vec<Vec3> {
    let mut sums = vec![Vec3::zeros(); k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        sums[a] += p;
        counts[a] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| if c > 0 { s / c as f64 } else { s })
        .collect()
}

/// What a mixed-precision run drew, for inspection and tests.
#[derive(Clone, Debug)]
pub struct MixTrace {
    pub n_coarse: usize,
    pub n_fine: usize,
    pub n_pick: usize,
    pub coarse: Clustering,
    pub fine: Clustering,
    /// Indices into the fine centroids that were kept, ascending.
    pub picked: Vec<usize>,
}

/// Mixed-precision random k-means: coarse and fine k-means runs with random
/// cluster counts, a random subset of the fine centroids (plus the coarse
/// ones in [`MixMode::Union`]) is kept, and every point is reassigned to its
/// nearest kept centroid. Centroids left without points are dropped.
pub fn mixed_precision_random_kmeans(cloud: &PointCloud, p: &ExtractParams) -> Result<Clustering> {
    mixed_precision_random_kmeans_traced(cloud, p).map(|(c, _)| c)
}

pub fn mixed_precision_random_kmeans_traced(
    cloud: &PointCloud,
    p: &ExtractParams,
) -> Result<(Clustering, MixTrace)> {
    p.validate()?;
    cloud.validate()?;
    if cloud.len() < p.min_points() {
        return Err(Error::invalid(format!(
            "cloud has {} points, extraction needs at least {}",
            cloud.len(),
            p.min_points()
        )));
    }
    let mode = Parallelism::default();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n_coarse = p.coarse_k.draw(&mut rng);
    let n_fine = p.fine_k.draw(&mut rng);
    let coarse = kmeans_points(&cloud.points, n_coarse, rng.next_u64(), mode)?;
    let fine = kmeans_points(&cloud.points, n_fine, rng.next_u64(), mode)?;
    let n_pick = p.pick.draw(&mut rng).min(n_fine);
    let mut picked = index::sample(&mut rng, n_fine, n_pick).into_vec();
    picked.sort_unstable();

    let mut kept: Vec<Vec3> = picked.iter().map(|&i| fine.centroids[i]).collect();
    if p.mix_mode == MixMode::Union {
        kept.extend_from_slice(&coarse.centroids);
    }
    let raw = assign(&cloud.points, &kept, mode);
    let clustering = drop_empty(kept, raw);
    Ok((
        clustering,
        MixTrace {
            n_coarse,
            n_fine,
            n_pick,
            coarse,
            fine,
            picked,
        },
    ))
}

fn drop_empty(centroids: Vec<Vec3>, assignment: Vec<usize>) -> Clustering {
    let mut used = vec![false; centroids.len()];
    for &a in &assignment {
        used[a] = true;
    }
    let mut remap = vec![usize::MAX; centroids.len()];
    let mut kept = Vec::new();
    for (i, c) in centroids.into_iter().enumerate() {
        if used[i] {
            remap[i] = kept.len();
            kept.push(c);
        }
    }
    Clustering {
        centroids: kept,
        assignment: assignment.into_iter().map(|a| remap[a]).collect(),
    }
}

/// One vertex per non-empty cluster (location = member mean, capacity =
/// member count, ids in cluster order). Vertices `i`, `j` are joined when
/// `|L_i - L_j| < edge_tau · d̄`, with `d̄` the mean distance from each vertex
/// to its nearest other vertex.
pub fn clusters_to_graph(cloud: &PointCloud, c: &Clustering, edge_tau: f64) -> Result<MsgGraph> {
    clusters_to_graph_with(cloud, c, edge_tau, false)
}

pub fn clusters_to_graph_with(
    cloud: &PointCloud,
    c: &Clustering,
    edge_tau: f64,
    connect: bool,
) -> Result<MsgGraph> {
    if c.assignment.len() != cloud.len() {
        return Err(Error::invalid(format!(
            "clustering covers {} points, cloud has {}",
            c.assignment.len(),
            cloud.len()
        )));
    }
    if let Some(&bad) = c.assignment.iter().find(|&&a| a >= c.centroids.len()) {
        return Err(Error::invalid(format!(
            "assignment refers to missing centroid {bad}"
        )));
    }
    if !(edge_tau.is_finite() && edge_tau > 0.0) {
        return Err(Error::invalid("edge_tau must be positive"));
    }
    let k = c.centroids.len();
    let mut sums = vec![Vec3::zeros(); k];
    let mut counts = vec![0u32; k];
    for (p, &a) in cloud.points.iter().zip(&c.assignment) {
        sums[a] += p;
        counts[a] += 1;
    }
    let locs: Vec<(Vec3, u32)> = sums
        .into_iter()
        .zip(counts)
        .filter(|&(_, n)| n > 0)
        .map(|(s, n)| (s / n as f64, n))
        .collect();
    let vertices: Vec<MsgVertex> = locs
        .iter()
        .enumerate()
        .map(|(i, &(l, n))| MsgVertex::new(i as u32, l, n))
        .collect();

    let m = vertices.len();
    let dist = |i: usize, j: usize| (vertices[i].location - vertices[j].location).norm();
    let mut edges = Vec::new();
    if m > 1 {
        let mean_nn = (0..m)
            .map(|i| {
                (0..m)
                    .filter(|&j| j != i)
                    .map(|j| dist(i, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / m as f64;
        let threshold = edge_tau * mean_nn;
        for i in 0..m {
            for j in i + 1..m {
                if dist(i, j) < threshold {
                    edges.push((i as u32, j as u32));
                }
            }
        }
        if connect {
            connect_components(m, &dist, &mut edges);
        }
    }
    MsgGraph::new(vertices, edges)
}

/// Kruskal over all vertex pairs, seeded with the existing edges.
fn connect_components(m: usize, dist: &dyn Fn(usize, usize) -> f64, edges: &mut Vec<(u32, u32)>) {
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges.iter() {
        let (ra, rb) = (find(&mut parent, a as usize), find(&mut parent, b as usize));
        parent[ra] = rb;
    }
    let mut pairs: Vec<(f64, usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| (dist(i, j), i, j))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, i, j) in pairs {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            edges.push((i as u32, j as u32));
        }
    }
}

/// Full extraction pipeline; capacities always sum to `|cloud|`.
pub fn extract_msg(cloud: &PointCloud, p: &ExtractParams) -> Result<MsgGraph> {
    let clustering = mixed_precision_random_kmeans(cloud, p)?;
    clusters_to_graph_with(cloud, &clustering, p.edge_tau, p.connect_components)
}

/// Plain k-means MSG with a fixed vertex budget, as used for evaluation sets.
pub fn kmeans_msg(cloud: &PointCloud, k: usize, seed: u64, edge_tau: f64) -> Result<MsgGraph> {
    let clustering = kmeans(cloud, k, seed)?;
    clusters_to_graph(cloud, &clustering, edge_tau)
}
