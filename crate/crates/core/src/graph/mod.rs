//! The multiscale structure graph: vertices with a location and a capacity,
//! joined by undirected edges.

mod edit;
mod io;

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::geom::{SimilarityTransform, Vec3};

pub use edit::{apply_edit, apply_edits, GraphEdit};
pub use io::{
    graph_from_json, graph_from_value, graph_from_value_unvalidated, graph_to_json, graph_to_value,
    load_graph, save_graph, FORMAT_VERSION,
};

#[derive(Clone, Debug, PartialEq)]
pub struct MsgVertex {
    pub id: u32,
    pub location: Vec3,
    /// Number of points this vertex stands for.
    pub capacity: u32,
}

impl MsgVertex {
    pub fn new(id: u32, location: Vec3, capacity: u32) -> Self {
        MsgVertex {
            id,
            location,
            capacity,
        }
    }
}

/// Vertices are kept sorted by id and edges as `(smaller, larger)` pairs in
/// sorted order. The fields are public so that malformed graphs can be
/// represented and reported by [`validate`]; constructors always normalize.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MsgGraph {
    pub vertices: Vec<MsgVertex>,
    pub edges: Vec<(u32, u32)>,
}

impl MsgGraph {
    /// Builds a graph, normalizing vertex and edge order. Fails with every
    /// invariant violation when the result is not a valid MSG.
    pub fn new(
        mut vertices: Vec<MsgVertex>,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        vertices.sort_by_key(|v| v.id);
        let mut edges: Vec<(u32, u32)> = edges
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        let g = MsgGraph { vertices, edges };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        let violations = validate(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidGraph(violations))
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.vertices.binary_search_by_key(&id, |v| v.id).ok()
    }

    pub fn vertex(&self, id: u32) -> Option<&MsgVertex> {
        self.index_of(id).map(|i| &self.vertices[i])
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Smallest id never used by this graph.
    pub fn next_vertex_id(&self) -> u32 {
        self.vertices.last().map_or(0, |v| v.id + 1)
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.vertices.iter().map(|v| v.capacity).collect()
    }

    pub fn capacity_map(&self) -> BTreeMap<u32, u32> {
        self.vertices.iter().map(|v| (v.id, v.capacity)).collect()
    }

    /// Index-based adjacency lists; neighbours ordered by id.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(a, b) in &self.edges {
            if let (Some(i), Some(j)) = (self.index_of(a), self.index_of(b)) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Mean edge length over the whole graph, `None` without edges.
    pub fn mean_edge_length(&self) -> Option<f64> {
        if self.edges.is_empty() {
            return None;
        }
        let total: f64 = self
            .edges
            .iter()
            .map(|&(a, b)| {
                (self.vertex(b).unwrap().location - self.vertex(a).unwrap().location).norm()
            })
            .sum();
        Some(total / self.edges.len() as f64)
    }

    /// Applies `t` to every vertex location; topology and capacities unchanged.
    pub fn transformed(&self, t: &SimilarityTransform) -> MsgGraph {
        MsgGraph {
            vertices: self
                .vertices
                .iter()
                .map(|v| MsgVertex {
                    location: t.apply_point(&v.location),
                    ..v.clone()
                })
                .collect(),
            edges: self.edges.clone(),
        }
    }
}

/// Lists every invariant violation; empty means the graph is valid.
pub fn validate(g: &MsgGraph) -> Vec<String> {
    let mut out = Vec::new();
    if g.vertices.is_empty() {
        out.push("graph has no vertices".to_string());
    }
    let mut seen: HashMap<u32, usize> = HashMap::new();
    for v in &g.vertices {
        *seen.entry(v.id).or_default() += 1;
        if v.capacity < 1 {
            out.push(format!("capacity must be ≥ 1 (vertex {})", v.id));
        }
        if !v.location.iter().all(|c| c.is_finite()) {
            out.push(format!("location of vertex {} is not finite", v.id));
        }
    }
    let mut dup_ids: Vec<u32> = seen
        .iter()
        .filter(|(_, &n)| n > 1)
        .map(|(&id, _)| id)
        .collect();
    dup_ids.sort_unstable();
    for id in dup_ids {
        out.push(format!("duplicate vertex id {id}"));
    }
    let mut edge_seen = std::collections::HashSet::new();
    for &(a, b) in &g.edges {
        if a == b {
            out.push(format!("self-loop at {a}"));
            continue;
        }
        for end in [a, b] {
            if !seen.contains_key(&end) {
                out.push(format!("edge ({a},{b}) references unknown vertex {end}"));
            }
        }
        if !edge_seen.insert((a.min(b), a.max(b))) {
            out.push(format!("duplicate edge ({a},{b})"));
        }
    }
    let total: u64 = g.vertices.iter().map(|v| v.capacity as u64).sum();
    if !g.vertices.is_empty() && total < 1 {
        out.push("total capacity must be ≥ 1".to_string());
    }
    out
}

/// Vertices within `radius` hops of `v`, `v` included, sorted by id.
pub fn neighbors_within(g: &MsgGraph, v: u32, radius: usize) -> Result<Vec<u32>> {
    let start = g
        .index_of(v)
        .ok_or_else(|| Error::invalid(format!("unknown vertex {v}")))?;
    let adj = g.adjacency();
    let mut idx = bfs_within(&adj, start, radius);
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| g.vertices[i].id).collect())
}

/// Breadth-first search over index adjacency; returns reached indices.
pub(crate) fn bfs_within(adj: &[Vec<usize>], start: usize, radius: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut reached = vec![start];
    while let Some(u) = queue.pop_front() {
        if dist[u] == radius {
            continue;
        }
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                reached.push(w);
                queue.push_back(w);
            }
        }
    }
    reached
}

pub fn total_capacity(g: &MsgGraph) -> u64 {
    g.vertices.iter().map(|v| v.capacity as u64).sum()
}

/// `k` uniform points in the unit cube, each joined to its `neighbours`
/// nearest others, with capacities drawn from `caps`. Every vertex ends up
/// with degree ≥ `neighbours`, so for `neighbours ≥ 2` frames are fully
/// determined with probability one.
pub fn random_knn_graph<R: rand::Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    neighbours: usize,
    caps: std::ops::RangeInclusive<u32>,
) -> MsgGraph {
    let locs: Vec<Vec3> = (0..k)
        .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
        .collect();
    let vertices = locs
        .iter()
        .enumerate()
        .map(|(i, &l)| MsgVertex::new(i as u32, l, rng.random_range(caps.clone())))
        .collect();
    let mut edges = std::collections::BTreeSet::new();
    for (i, a) in locs.iter().enumerate() {
        let mut order: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        order.sort_by(|&x, &y| (locs[x] - a).norm().total_cmp(&(locs[y] - a).norm()));
        for &j in order.iter().take(neighbours) {
            edges.insert((i.min(j) as u32, i.max(j) as u32));
        }
    }
    MsgGraph::new(vertices, edges).expect("well-formed by construction")
}
