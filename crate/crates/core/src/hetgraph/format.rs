//! Line-oriented graph text format.
//!
//! ```text
//! graphfmt 1
//! # comment
//! v <id> <type>
//! e <id1> <id2> <weight>
//! ```
//!
//! The writer emits the canonical form: header, `v` lines sorted by id, then
//! `e` lines sorted by `(id1, id2)` with `id1 < id2`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EntityId, EntityType, GraphBuilder, HeteroGraph};
use crate::error::{Error, Result};

const HEADER: &str = "graphfmt 1";

pub fn parse_graph(text: &str) -> Result<HeteroGraph> {
    let mut builder = GraphBuilder::default();
    let mut saw_header = false;
    let mut pending_edges = Vec::new();
    let mut entity_line: HashMap<EntityId, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !saw_header {
            if fields != ["graphfmt", "1"] {
                return Err(Error::at_line(
                    line_no,
                    Error::Malformed(format!("expected header `{HEADER}`")),
                ));
            }
            saw_header = true;
            continue;
        }
        match fields.as_slice() {
            ["v", id, ty] => {
                let id = EntityId::new(*id).map_err(|e| Error::at_line(line_no, e))?;
                let ty = EntityType::new(*ty).map_err(|e| Error::at_line(line_no, e))?;
                builder
                    .add_entity(id.clone(), ty)
                    .map_err(|e| Error::at_line(line_no, e))?;
                entity_line.insert(id, line_no);
            }
            ["e", a, b, w] => {
                let a = EntityId::new(*a).map_err(|e| Error::at_line(line_no, e))?;
                let b = EntityId::new(*b).map_err(|e| Error::at_line(line_no, e))?;
                let w: f64 = w.parse().map_err(|_| {
                    Error::at_line(line_no, Error::Malformed(format!("bad weight {w:?}")))
                })?;
                builder
                    .add_edge(a.clone(), b.clone(), w)
                    .map_err(|e| Error::at_line(line_no, e))?;
                pending_edges.push((line_no, a, b));
            }
            _ => {
                return Err(Error::at_line(
                    line_no,
                    Error::Malformed(format!("unrecognized line {line:?}")),
                ))
            }
        }
    }
    if !saw_header {
        return Err(Error::at_line(
            1,
            Error::Malformed(format!("missing header `{HEADER}`")),
        ));
    }
    for (line_no, a, b) in &pending_edges {
        for end in [a, b] {
            if !builder.contains_entity(end.as_str()) {
                return Err(Error::at_line(
                    *line_no,
                    Error::UnknownEntity(end.to_string()),
                ));
            }
        }
    }
    builder.build()
}

/// Canonical text form of a graph.
pub fn graph_to_string(g: &HeteroGraph) -> String {
    let mut out = String::with_capacity(32 * (g.len() + g.edge_count()) + 16);
    out.push_str(HEADER);
    out.push('\n');
    for (id, ty) in g.ids().iter().zip(g.types()) {
        let _ = writeln!(out, "v {id} {ty}");
    }
    // Index order equals id order, so edges() is already lexicographic.
    for e in g.edges() {
        let _ = writeln!(out, "e {} {} {}", g.id(e.a), g.id(e.b), e.weight);
    }
    out
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<HeteroGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_graph(&text)
}

pub fn write_graph(g: &HeteroGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, graph_to_string(g)).map_err(|e| Error::io(path, e))
}

impl HeteroGraph {
    /// Canonical text serialization; see [`parse_graph`].
    pub fn to_text(&self) -> String {
        graph_to_string(self)
    }
}
