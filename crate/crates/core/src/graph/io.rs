use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

use super::{validate, MsgGraph, MsgVertex};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    format_version: u64,
    vertices: Vec<VertexDoc>,
    edges: Vec<[u32; 2]>,
}

#[derive(Serialize, Deserialize)]
struct VertexDoc {
    id: u32,
    location: [f64; 3],
    capacity: u32,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u64>,
}

pub fn graph_to_json(g: &MsgGraph) -> String {
    serde_json::to_string(&to_doc(g)).expect("graph serialization cannot fail")
}

/// Serializable form of the graph, shared with the HTTP service.
pub fn graph_to_value(g: &MsgGraph) -> serde_json::Value {
    serde_json::to_value(to_doc(g)).expect("graph serialization cannot fail")
}

fn to_doc(g: &MsgGraph) -> GraphDoc {
    let mut vertices: Vec<VertexDoc> = g
        .vertices
        .iter()
        .map(|v| VertexDoc {
            id: v.id,
            location: [v.location.x, v.location.y, v.location.z],
            capacity: v.capacity,
        })
        .collect();
    vertices.sort_by_key(|v| v.id);
    let mut edges: Vec<[u32; 2]> = g.edges.iter().map(|&(a, b)| [a.min(b), a.max(b)]).collect();
    edges.sort_unstable();
    GraphDoc {
        format_version: FORMAT_VERSION,
        vertices,
        edges,
    }
}

/// Parses and validates an MSG document.
pub fn graph_from_json(text: &str) -> Result<MsgGraph> {
    graph_from_value(serde_json::from_str(text)?)
}

pub fn graph_from_value(value: serde_json::Value) -> Result<MsgGraph> {
    let mut g = graph_from_value_unvalidated(value)?;
    let violations = validate(&g);
    if !violations.is_empty() {
        return Err(Error::Parse(violations.join("; ")));
    }
    g.vertices.sort_by_key(|v| v.id);
    g.edges.sort_unstable();
    Ok(g)
}

/// Checks the version and schema only; the caller runs [`validate`].
/// Vertices and edges keep their document order.
pub fn graph_from_value_unvalidated(value: serde_json::Value) -> Result<MsgGraph> {
    let probe: VersionProbe = serde_json::from_value(value.clone())?;
    match probe.format_version {
        None => return Err(Error::Parse("missing field `format_version`".into())),
        Some(FORMAT_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                found,
                expected: FORMAT_VERSION,
            })
        }
    }
    let doc: GraphDoc = serde_json::from_value(value)?;
    Ok(MsgGraph {
        vertices: doc
            .vertices
            .into_iter()
            .map(|v| MsgVertex::new(v.id, Vec3::from(v.location), v.capacity))
            .collect(),
        edges: doc
            .edges
            .into_iter()
            .map(|[a, b]| (a.min(b), a.max(b)))
            .collect(),
    })
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<MsgGraph> {
    graph_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_graph(g: &MsgGraph, path: impl AsRef<Path>) -> Result<()> {
    g.check()?;
    std::fs::write(path, graph_to_json(g))?;
    Ok(())
}
