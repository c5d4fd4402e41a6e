//! Dependency-graph construction from heterogeneous categorical events.
//!
//! Every event names one entity per attribute type. All entities of an event
//! are considered to interact, so each unordered pair among them gains one
//! unit of edge weight (clique expansion). Edge weights are co-occurrence
//! counts.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{EntityId, EntityType, GraphBuilder, HeteroGraph};

/// One record of the event stream: `{"ts": <ms>, "attrs": {"<type>": "<id>"}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(rename = "attrs")]
    pub attributes: BTreeMap<EntityType, EntityId>,
}

/// Parses a JSON-lines event stream. Blank lines are skipped; the record
/// index in errors counts non-blank lines from 0.
pub fn parse_events<R: BufRead>(reader: R) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line).map_err(|e| Error::Record {
            index: events.len(),
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Mergeable co-occurrence counter. Merging is associative and commutative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Accumulator {
    entities: BTreeMap<EntityId, EntityType>,
    weights: HashMap<(EntityId, EntityId), u64>,
    skipped: usize,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one event; `index` is only used to label errors.
    pub fn push(&mut self, index: usize, event: &Event) -> Result<()> {
        if event.attributes.len() < 2 {
            self.skipped += 1;
            return Ok(());
        }
        let members: Vec<(&EntityType, &EntityId)> = event.attributes.iter().collect();
        for &(ty, id) in &members {
            self.insert_entity(id, ty).map_err(|e| Error::Record {
                index,
                message: e.to_string(),
            })?;
        }
        for (k, &(_, a)) in members.iter().enumerate() {
            for &(_, b) in &members[k + 1..] {
                // Same id under two types was rejected above, so a != b.
                let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                *self.weights.entry(key).or_insert(0) += 1;
            }
        }
        Ok(())
    }

    fn insert_entity(&mut self, id: &EntityId, ty: &EntityType) -> Result<()> {
        match self.entities.get(id) {
            Some(prev) if prev != ty => Err(Error::TypeConflict {
                id: id.to_string(),
                first: prev.to_string(),
                second: ty.to_string(),
            }),
            Some(_) => Ok(()),
            None => {
                self.entities.insert(id.clone(), ty.clone());
                Ok(())
            }
        }
    }

    pub fn merge(mut self, other: Accumulator) -> Result<Accumulator> {
        for (id, ty) in &other.entities {
            self.insert_entity(id, ty)?;
        }
        for (key, w) in other.weights {
            *self.weights.entry(key).or_insert(0) += w;
        }
        self.skipped += other.skipped;
        Ok(self)
    }

    /// Number of events skipped for having fewer than two attributes.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn to_graph(&self) -> Result<HeteroGraph> {
        let mut b = GraphBuilder::default();
        for (id, ty) in &self.entities {
            b.add_entity(id.clone(), ty.clone())?;
        }
        for ((x, y), w) in &self.weights {
            b.add_edge(x.clone(), y.clone(), *w as f64)?;
        }
        b.build()
    }
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub graph: HeteroGraph,
    /// Events skipped for having fewer than two attributes.
    pub skipped: usize,
}

pub fn accumulate(events: &[Event]) -> Result<Ingested> {
    let mut acc = Accumulator::new();
    for (i, e) in events.iter().enumerate() {
        acc.push(i, e)?;
    }
    if acc.skipped() > 0 {
        log::warn!("skipped {} events with fewer than two attributes", acc.skipped());
    }
    Ok(Ingested {
        graph: acc.to_graph()?,
        skipped: acc.skipped(),
    })
}

/// Cumulative daily-style snapshots: graph `k` (1-based) holds every event
/// with `ts < start + k * window`, where `start` is the earliest timestamp.
/// Windows are half-open, so an event exactly on a boundary belongs to the
/// later window.
pub fn snapshot_series(events: &[Event], window_ms: i64) -> Result<Vec<HeteroGraph>> {
    if window_ms <= 0 {
        return Err(Error::InvalidArgument(format!(
            "snapshot window must be positive, got {window_ms}"
        )));
    }
    let Some(start) = events.iter().map(|e| e.timestamp).min() else {
        return Ok(vec![HeteroGraph::empty()]);
    };
    let end = events.iter().map(|e| e.timestamp).max().unwrap_or(start);
    let count = ((end - start) / window_ms + 1) as usize;

    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| events[i].timestamp);

    let mut acc = Accumulator::new();
    let mut cursor = 0;
    let mut out = Vec::with_capacity(count);
    for k in 1..=count {
        let boundary = start + k as i64 * window_ms;
        while cursor < order.len() && events[order[cursor]].timestamp < boundary {
            let i = order[cursor];
            acc.push(i, &events[i])?;
            cursor += 1;
        }
        out.push(acc.to_graph()?);
    }
    Ok(out)
}
