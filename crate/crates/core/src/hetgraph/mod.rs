//! Heterogeneous dependency graphs.
//!
//! A [`HeteroGraph`] is an undirected, weighted graph whose vertices are typed
//! system entities (processes, files, sockets, ...). Entities are always kept
//! in lexicographic order of their [`EntityId`], so the dense index of an
//! entity, the rows of every matrix derived from the graph, and the on-disk
//! text form are all canonical.

mod adjacency;
mod format;

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adjacency::{align_union_entities, dynamic_factor, AdjacencyView};
pub use format::{parse_graph, read_graph, write_graph};

macro_rules! token_type {
    ($(#[$meta:meta])* $name:ident, $err:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Result<Self> {
                let value = value.into();
                if value.is_empty() || value.chars().any(char::is_whitespace) {
                    return Err(Error::$err(value));
                }
                Ok(Self(value))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;

            fn try_from(value: String) -> Result<Self> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(value: $name) -> String {
                value.0
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

token_type!(
    /// Opaque entity token. Non-empty, no whitespace, compared bytewise.
    EntityId,
    InvalidEntityId
);

token_type!(
    /// Entity type label such as `process` or `file`. Case-sensitive.
    EntityType,
    InvalidEntityType
);

/// An undirected edge between two dense indices, `a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Typed, undirected, weighted dependency graph with canonical entity order.
///
/// Immutable once built; use [`GraphBuilder`] to construct one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeteroGraph {
    ids: Vec<EntityId>,
    types: Vec<EntityType>,
    index: HashMap<EntityId, usize>,
    // Sorted by neighbour index.
    adj: Vec<Vec<(usize, f64)>>,
    edge_count: usize,
}

impl HeteroGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builder() -> GraphBuilder {
        GraphBuilder::default()
    }

    /// Number of entities.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn ids(&self) -> &[EntityId] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &EntityId {
        &self.ids[i]
    }

    pub fn entity_type(&self, i: usize) -> &EntityType {
        &self.types[i]
    }

    pub fn types(&self) -> &[EntityType] {
        &self.types
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Type of the entity with the given id, if present.
    pub fn type_of(&self, id: &str) -> Option<&EntityType> {
        self.index_of(id).map(|i| &self.types[i])
    }

    /// Distinct entity types, sorted.
    pub fn entity_types(&self) -> BTreeSet<&EntityType> {
        self.types.iter().collect()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let row = &self.adj[i];
        row.binary_search_by_key(&j, |&(k, _)| k)
            .ok()
            .map(|pos| row[pos].1)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weight(i, j).is_some()
    }

    /// Edges in canonical order: by first endpoint, then second, `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.adj.iter().enumerate().flat_map(|(a, row)| {
            row.iter()
                .filter(move |&&(b, _)| b > a)
                .map(move |&(b, weight)| Edge { a, b, weight })
        })
    }

    /// Unordered id pairs of all edges, smaller id first.
    pub fn edge_id_pairs(&self) -> BTreeSet<(&EntityId, &EntityId)> {
        self.edges()
            .map(|e| (&self.ids[e.a], &self.ids[e.b]))
            .collect()
    }

    /// Subgraph on `keep` with every edge whose endpoints are both kept.
    pub fn induced_subgraph<'a, I>(&self, keep: I) -> Result<HeteroGraph>
    where
        I: IntoIterator<Item = &'a EntityId>,
    {
        let mut mask = vec![false; self.len()];
        for id in keep {
            let i = self
                .index_of(id.as_str())
                .ok_or_else(|| Error::UnknownEntity(id.to_string()))?;
            mask[i] = true;
        }
        let mut builder = GraphBuilder::default();
        for i in (0..self.len()).filter(|&i| mask[i]) {
            builder.add_entity(self.ids[i].clone(), self.types[i].clone())?;
        }
        for e in self.edges().filter(|e| mask[e.a] && mask[e.b]) {
            builder.add_edge(self.ids[e.a].clone(), self.ids[e.b].clone(), e.weight)?;
        }
        builder.build()
    }

    /// Same entities and edges with every weight set to 1.
    pub fn binarized(&self) -> HeteroGraph {
        let mut g = self.clone();
        for row in &mut g.adj {
            for entry in row.iter_mut() {
                entry.1 = 1.0;
            }
        }
        g
    }

    /// Dense weighted adjacency over this graph's own index space.
    pub fn adjacency(&self) -> AdjacencyView {
        AdjacencyView::of_graph(self, &self.ids)
    }

    /// Dense adjacency over an arbitrary id list; ids absent from the graph
    /// get zero rows and columns.
    pub fn adjacency_over(&self, ids: &[EntityId]) -> AdjacencyView {
        AdjacencyView::of_graph(self, ids)
    }

    /// Builds a graph from parts that are already canonical: `ids` sorted
    /// and unique, edges with valid, distinct endpoints.
    pub(crate) fn from_sorted_parts(
        ids: Vec<EntityId>,
        types: Vec<EntityType>,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> HeteroGraph {
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let n = ids.len();
        let mut adj = vec![Vec::new(); n];
        for (a, b, w) in edges {
            debug_assert!(a != b && a < n && b < n);
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        let mut edge_count = 0;
        for row in &mut adj {
            row.sort_by_key(|&(k, _)| k);
            edge_count += row.len();
        }
        let index = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        HeteroGraph {
            ids,
            types,
            index,
            adj,
            edge_count: edge_count / 2,
        }
    }
}

/// Accumulates entities and edges by id and produces a canonical graph.
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    entities: BTreeMap<EntityId, EntityType>,
    edges: BTreeMap<(EntityId, EntityId), f64>,
}

impl GraphBuilder {
    /// Adds a new entity; an id that is already present is an error.
    pub fn add_entity(&mut self, id: EntityId, ty: EntityType) -> Result<()> {
        if self.entities.contains_key(&id) {
            return Err(Error::DuplicateEntity(id.to_string()));
        }
        self.entities.insert(id, ty);
        Ok(())
    }

    /// Adds an entity unless it already exists with the same type.
    pub fn ensure_entity(&mut self, id: EntityId, ty: EntityType) -> Result<()> {
        match self.entities.get(&id) {
            Some(existing) if *existing != ty => Err(Error::TypeConflict {
                id: id.to_string(),
                first: existing.to_string(),
                second: ty.to_string(),
            }),
            Some(_) => Ok(()),
            None => {
                self.entities.insert(id, ty);
                Ok(())
            }
        }
    }

    pub fn contains_entity(&self, id: &str) -> bool {
        self.entities.contains_key(id)
    }

    /// Adds an edge; a repeated pair (in either orientation) is an error.
    pub fn add_edge(&mut self, a: EntityId, b: EntityId, weight: f64) -> Result<()> {
        let key = Self::edge_key(a, b, weight)?;
        if self.edges.contains_key(&key) {
            return Err(Error::DuplicateEdge(key.0.to_string(), key.1.to_string()));
        }
        self.edges.insert(key, weight);
        Ok(())
    }

    /// Adds `weight` to the edge, creating it if needed.
    pub fn accumulate_edge(&mut self, a: EntityId, b: EntityId, weight: f64) -> Result<()> {
        let key = Self::edge_key(a, b, weight)?;
        *self.edges.entry(key).or_insert(0.0) += weight;
        Ok(())
    }

    /// Sets the edge weight to the max of the existing and given weight.
    pub fn max_edge(&mut self, a: EntityId, b: EntityId, weight: f64) -> Result<()> {
        let key = Self::edge_key(a, b, weight)?;
        let slot = self.edges.entry(key).or_insert(weight);
        *slot = slot.max(weight);
        Ok(())
    }

    fn edge_key(a: EntityId, b: EntityId, weight: f64) -> Result<(EntityId, EntityId)> {
        if a == b {
            return Err(Error::SelfLoop(a.to_string()));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidWeight(weight));
        }
        Ok(if a < b { (a, b) } else { (b, a) })
    }

    pub fn build(self) -> Result<HeteroGraph> {
        let mut index = HashMap::with_capacity(self.entities.len());
        let mut ids = Vec::with_capacity(self.entities.len());
        let mut types = Vec::with_capacity(self.entities.len());
        for (i, (id, ty)) in self.entities.into_iter().enumerate() {
            index.insert(id.clone(), i);
            ids.push(id);
            types.push(ty);
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for ((a, b), w) in self.edges {
            let ia = *index
                .get(&a)
                .ok_or_else(|| Error::UnknownEntity(a.to_string()))?;
            let ib = *index
                .get(&b)
                .ok_or_else(|| Error::UnknownEntity(b.to_string()))?;
            edges.push((ia, ib, w));
        }
        Ok(HeteroGraph::from_sorted_parts(ids, types, edges))
    }
}

/// Checks that every id shared by `a` and `b` has the same type in both.
pub(crate) fn check_type_consistency(a: &HeteroGraph, b: &HeteroGraph) -> Result<()> {
    for (i, id) in a.ids().iter().enumerate() {
        if let Some(tb) = b.type_of(id.as_str()) {
            let ta = a.entity_type(i);
            if ta != tb {
                return Err(Error::TypeConflict {
                    id: id.to_string(),
                    first: ta.to_string(),
                    second: tb.to_string(),
                });
            }
        }
    }
    Ok(())
}
