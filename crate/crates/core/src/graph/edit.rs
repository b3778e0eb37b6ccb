use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

use super::{MsgGraph, MsgVertex};

/// One structural edit. Serialized with a `kind` tag, e.g.
/// `{"kind":"set_capacity","id":3,"capacity":20}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphEdit {
    AddVertex {
        id: u32,
        location: [f64; 3],
        capacity: u32,
    },
    RemoveVertex {
        id: u32,
    },
    MoveVertex {
        id: u32,
        location: [f64; 3],
    },
    SetCapacity {
        id: u32,
        capacity: u32,
    },
    AddEdge {
        a: u32,
        b: u32,
    },
    RemoveEdge {
        a: u32,
        b: u32,
    },
}

/// Returns the edited graph; `g` itself is never modified. Ids of surviving
/// vertices are unchanged and removing a vertex drops its incident edges.
pub fn apply_edit(g: &MsgGraph, edit: &GraphEdit) -> Result<MsgGraph> {
    let mut out = g.clone();
    let require = |id: u32| {
        g.index_of(id)
            .ok_or_else(|| Error::invalid(format!("unknown vertex {id}")))
    };
    match *edit {
        GraphEdit::AddVertex {
            id,
            location,
            capacity,
        } => {
            if g.index_of(id).is_some() {
                return Err(Error::invalid(format!("vertex {id} already exists")));
            }
            check_capacity(capacity)?;
            check_location(location)?;
            let pos = out.vertices.partition_point(|v| v.id < id);
            out.vertices
                .insert(pos, MsgVertex::new(id, Vec3::from(location), capacity));
        }
        GraphEdit::RemoveVertex { id } => {
            let i = require(id)?;
            if g.vertices.len() == 1 {
                return Err(Error::invalid("cannot remove the last vertex"));
            }
            out.vertices.remove(i);
            out.edges.retain(|&(a, b)| a != id && b != id);
        }
        GraphEdit::MoveVertex { id, location } => {
            let i = require(id)?;
            check_location(location)?;
            out.vertices[i].location = Vec3::from(location);
        }
        GraphEdit::SetCapacity { id, capacity } => {
            let i = require(id)?;
            check_capacity(capacity)?;
            out.vertices[i].capacity = capacity;
        }
        GraphEdit::AddEdge { a, b } => {
            require(a)?;
            require(b)?;
            if a == b {
                return Err(Error::invalid(format!("self-loop at {a}")));
            }
            let e = (a.min(b), a.max(b));
            match out.edges.binary_search(&e) {
                Ok(_) => {
                    return Err(Error::invalid(format!(
                        "edge ({},{}) already exists",
                        e.0, e.1
                    )))
                }
                Err(pos) => out.edges.insert(pos, e),
            }
        }
        GraphEdit::RemoveEdge { a, b } => {
            let e = (a.min(b), a.max(b));
            match out.edges.binary_search(&e) {
                Ok(pos) => {
                    out.edges.remove(pos);
                }
                Err(_) => return Err(Error::invalid(format!("no edge ({},{})", e.0, e.1))),
            }
        }
    }
    Ok(out)
}

pub fn apply_edits<'a>(
    g: &MsgGraph,
    edits: impl IntoIterator<Item = &'a GraphEdit>,
) -> Result<MsgGraph> {
    edits
        .into_iter()
        .try_fold(g.clone(), |acc, e| apply_edit(&acc, e))
}

fn check_capacity(c: u32) -> Result<()> {
    if c < 1 {
        return Err(Error::invalid("capacity must be ≥ 1"));
    }
    Ok(())
}

fn check_location(l: [f64; 3]) -> Result<()> {
    if !l.iter().all(|c| c.is_finite()) {
        return Err(Error::invalid("location must be finite"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::validate;

    fn triangle() -> MsgGraph {
        MsgGraph::new(
            (0..3)
                .map(|i| MsgVertex::new(i, Vec3::new(i as f64, (i * i) as f64, 0.0), 2 + i))
                .collect(),
            [(0, 1), (1, 2), (0, 2)],
        )
        .unwrap()
    }

    #[test]
    fn add_then_remove_is_identity() {
        let g = triangle();
        let id = g.next_vertex_id();
        let added = apply_edit(
            &g,
            &GraphEdit::AddVertex {
                id,
                location: [1.0, 1.0, 1.0],
                capacity: 40,
            },
        )
        .unwrap();
        assert_eq!(added.len(), 4);
        let back = apply_edit(&added, &GraphEdit::RemoveVertex { id }).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn remove_vertex_drops_incident_edges() {
        let g = triangle();
        let before = g.clone();
        let out = apply_edit(&g, &GraphEdit::RemoveVertex { id: 1 }).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.edges, vec![(0, 2)]);
        assert_eq!(g, before);
        assert!(validate(&out).is_empty());
    }

    #[test]
    fn guards() {
        let g = triangle();
        assert!(apply_edit(&g, &GraphEdit::SetCapacity { id: 0, capacity: 0 }).is_err());
        assert!(apply_edit(&g, &GraphEdit::SetCapacity { id: 9, capacity: 3 }).is_err());
        assert!(apply_edit(&g, &GraphEdit::AddEdge { a: 0, b: 0 }).is_err());
        assert!(apply_edit(&g, &GraphEdit::AddEdge { a: 0, b: 1 }).is_err());
        assert!(apply_edit(&g, &GraphEdit::AddEdge { a: 0, b: 5 }).is_err());
        assert!(apply_edit(&g, &GraphEdit::RemoveEdge { a: 0, b: 5 }).is_err());
        assert!(apply_edit(
            &g,
            &GraphEdit::AddVertex {
                id: 1,
                location: [0.0; 3],
                capacity: 1
            }
        )
        .is_err());
        assert!(apply_edit(
            &g,
            &GraphEdit::MoveVertex {
                id: 1,
                location: [f64::NAN, 0.0, 0.0]
            }
        )
        .is_err());
    }

    #[test]
    fn other_edits() {
        let g = triangle();
        let moved = apply_edit(
            &g,
            &GraphEdit::MoveVertex {
                id: 2,
                location: [9.0, 9.0, 9.0],
            },
        )
        .unwrap();
        assert_eq!(moved.vertex(2).unwrap().location, Vec3::new(9.0, 9.0, 9.0));
        let cut = apply_edit(&g, &GraphEdit::RemoveEdge { a: 2, b: 0 }).unwrap();
        assert_eq!(cut.edges, vec![(0, 1), (1, 2)]);
        let rejoined = apply_edit(&cut, &GraphEdit::AddEdge { a: 2, b: 0 }).unwrap();
        assert_eq!(rejoined, g);
        let cap = apply_edit(
            &g,
            &GraphEdit::SetCapacity {
                id: 0,
                capacity: 17,
            },
        )
        .unwrap();
        assert_eq!(cap.vertex(0).unwrap().capacity, 17);
    }

    #[test]
    fn edit_json_shape() {
        let e: GraphEdit =
            serde_json::from_str(r#"{"kind":"set_capacity","id":3,"capacity":20}"#).unwrap();
        assert_eq!(
            e,
            GraphEdit::SetCapacity {
                id: 3,
                capacity: 20
            }
        );
        let list: Vec<GraphEdit> = serde_json::from_str(
            r#"[{"kind":"remove_vertex","id":1},{"kind":"add_edge","a":0,"b":2}]"#,
        )
        .unwrap();
        assert_eq!(list.len(), 2);
    }
}
