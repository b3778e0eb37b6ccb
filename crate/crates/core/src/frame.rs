//! Per-vertex canonical frames: rotation, scale factor and relative
//! capacity ratio.
//!
//! The rotation maps the longest incident edge onto +x and the longest
//! non-collinear one into the upper half of the xy-plane. Expressing
//! neighbour offsets in that frame, divided by the scale factor, yields
//! quantities that do not change under rotation, uniform scaling or
//! translation of the whole graph.

use nalgebra::{Matrix3, Rotation3, Unit};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::graph::{bfs_within, MsgGraph};

/// Minimum norm of the unit cross product for two edges to count as
/// non-collinear.
pub const COLLINEAR_TOL: f64 = 1e-6;

/// Default hop radius of the capacity-ratio neighbourhood (self included).
pub const DEFAULT_RCR_RADIUS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexFrame {
    pub rotation: Matrix3<f64>,
    pub scale_factor: f64,
    /// Relative capacity ratio.
    pub rcr: f64,
}

/// Frames in the graph's vertex order.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    pub ids: Vec<u32>,
    pub frames: Vec<VertexFrame>,
}

impl FrameSet {
    pub fn get(&self, id: u32) -> Option<&VertexFrame> {
        self.ids.binary_search(&id).ok().map(|i| &self.frames[i])
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// The longest incident edge vector and the longest one not collinear with
/// it. Equal lengths go to the smaller neighbour id.
pub fn principal_edges(g: &MsgGraph, v: u32) -> Result<(Option<Vec3>, Option<Vec3>)> {
    let i = g
        .index_of(v)
        .ok_or_else(|| Error::invalid(format!("unknown vertex {v}")))?;
    let adj = g.adjacency();
    Ok(principal_edges_at(g, &adj, i))
}

fn principal_edges_at(g: &MsgGraph, adj: &[Vec<usize>], i: usize) -> (Option<Vec3>, Option<Vec3>) {
    let origin = g.vertices[i].location;
    // adjacency lists are id-ordered, so a stable sort keeps the id tie-break
    let mut edges: Vec<Vec3> = adj[i]
        .iter()
        .map(|&j| g.vertices[j].location - origin)
        .collect();
    edges.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let Some(&e1) = edges.first() else {
        return (None, None);
    };
    let u = e1.normalize();
    let e2 = edges[1..]
        .iter()
        .find(|e| {
            let n = e.norm();
            n > 0.0 && u.cross(&(*e / n)).norm() > COLLINEAR_TOL
        })
        .copied();
    (Some(e1), e2)
}

/// Rotation taking `e1` to +x and `e2` into the xy-plane with positive y.
/// With only `e1`, the smallest rotation taking it to +x; with neither, the
/// identity.
pub fn vertex_rotation(e1: Option<Vec3>, e2: Option<Vec3>) -> Result<Matrix3<f64>> {
    let Some(e1) = e1 else {
        return Ok(Matrix3::identity());
    };
    let len = e1.norm();
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::invalid("principal edge has zero length"));
    }
    let u = e1 / len;
    if let Some(e2) = e2 {
        let perp = e2 - e2.dot(&u) * u;
        let pn = perp.norm();
        if pn > 0.0 && pn.is_finite() {
            let y = perp / pn;
            let z = u.cross(&y);
            return Ok(Matrix3::from_rows(&[
                u.transpose(),
                y.transpose(),
                z.transpose(),
            ]));
        }
    }
    Ok(minimal_rotation_to_x(&u))
}

fn minimal_rotation_to_x(u: &Vec3) -> Matrix3<f64> {
    let x = Vec3::x();
    let axis = x.cross(u);
    if (u + x).norm() <= 1e-9 {
        // antipodal: half turn about z
        return Rotation3::from_axis_angle(&Vec3::z_axis(), std::f64::consts::PI).into_inner();
    }
    if axis.norm() <= 1e-15 {
        return Matrix3::identity();
    }
    // rotate u onto x: angle between them, about the axis u × x
    let angle = axis.norm().atan2(u.dot(&x));
    Rotation3::from_axis_angle(&Unit::new_normalize(u.cross(&x)), angle).into_inner()
}

/// Mean incident edge length; isolated vertices take the graph-wide mean.
/// A graph without edges falls back to 1.0.
pub fn vertex_scale_factor(g: &MsgGraph, v: u32) -> Result<f64> {
    let i = g
        .index_of(v)
        .ok_or_else(|| Error::invalid(format!("unknown vertex {v}")))?;
    Ok(scale_factor_at(g, &g.adjacency(), i, g.mean_edge_length()))
}

fn scale_factor_at(g: &MsgGraph, adj: &[Vec<usize>], i: usize, global: Option<f64>) -> f64 {
    let origin = g.vertices[i].location;
    let incident = &adj[i];
    let sf = if incident.is_empty() {
        global.unwrap_or_else(|| {
            log::warn!("graph has no edges; using scale factor 1.0");
            1.0
        })
    } else {
        incident
            .iter()
            .map(|&j| (g.vertices[j].location - origin).norm())
            .sum::<f64>()
            / incident.len() as f64
    };
    if sf > 0.0 {
        sf
    } else {
        // coincident vertices; any positive unit keeps the frame usable
        1.0
    }
}

/// `C_v` over the mean capacity of the vertices within `radius` hops
/// (including `v`).
pub fn relative_capacity_ratio(g: &MsgGraph, v: u32, radius: usize) -> Result<f64> {
    let i = g
        .index_of(v)
        .ok_or_else(|| Error::invalid(format!("unknown vertex {v}")))?;
    Ok(rcr_at(g, &g.adjacency(), i, radius))
}

fn rcr_at(g: &MsgGraph, adj: &[Vec<usize>], i: usize, radius: usize) -> f64 {
    let hood = bfs_within(adj, i, radius);
    let mean = hood
        .iter()
        .map(|&j| g.vertices[j].capacity as f64)
        .sum::<f64>()
        / hood.len() as f64;
    g.vertices[i].capacity as f64 / mean
}

pub fn compute_frames(g: &MsgGraph) -> Result<FrameSet> {
    compute_frames_with(g, DEFAULT_RCR_RADIUS)
}

pub fn compute_frames_with(g: &MsgGraph, rcr_radius: usize) -> Result<FrameSet> {
    g.check()?;
    let adj = g.adjacency();
    let global = g.mean_edge_length();
    let frames = (0..g.len())
        .map(|i| {
            let (e1, e2) = principal_edges_at(g, &adj, i);
            Ok(VertexFrame {
                rotation: vertex_rotation(e1, e2)?,
                scale_factor: scale_factor_at(g, &adj, i, global),
                rcr: rcr_at(g, &adj, i, rcr_radius),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSet {
        ids: g.vertices.iter().map(|v| v.id).collect(),
        frames,
    })
}
