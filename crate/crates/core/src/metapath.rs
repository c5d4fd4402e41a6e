//! Meta-paths over entity types, their projection graphs, and the hop
//! distance matrices that feed the entity embedding.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{EntityType, HeteroGraph};

/// A sequence of entity types. A meta-path and its reversal denote the same
/// relation; the stored orientation is the lexicographically smaller one.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MetaPath {
    types: Vec<EntityType>,
}

impl MetaPath {
    pub fn new(mut types: Vec<EntityType>) -> Result<Self> {
        if types.len() < 2 {
            return Err(Error::InvalidArgument(
                "a meta-path needs at least two types".into(),
            ));
        }
        let reversed: Vec<EntityType> = types.iter().rev().cloned().collect();
        if reversed < types {
            types = reversed;
        }
        Ok(Self { types })
    }

    pub fn types(&self) -> &[EntityType] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn is_palindrome(&self) -> bool {
        self.types.iter().eq(self.types.iter().rev())
    }

    pub fn reversed_types(&self) -> Vec<EntityType> {
        self.types.iter().rev().cloned().collect()
    }
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.types.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// All meta-paths of length `2..=max_len` whose consecutive type pairs are
/// each realized by at least one edge, in lexicographic order.
pub fn enumerate_metapaths(g: &HeteroGraph, max_len: usize) -> Result<Vec<MetaPath>> {
    if max_len < 2 {
        return Err(Error::InvalidArgument(format!(
            "max meta-path length must be at least 2, got {max_len}"
        )));
    }
    let types: Vec<&EntityType> = g.entity_types().into_iter().collect();
    let pos = |t: &EntityType| types.binary_search(&t).expect("type from graph");
    let k = types.len();
    let mut linked = vec![vec![false; k]; k];
    for e in g.edges() {
        let (a, b) = (pos(g.entity_type(e.a)), pos(g.entity_type(e.b)));
        linked[a][b] = true;
        linked[b][a] = true;
    }

    let mut found: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut stack: Vec<Vec<usize>> = (0..k).map(|t| vec![t]).collect();
    while let Some(seq) = stack.pop() {
        if seq.len() >= 2 {
            let rev: Vec<usize> = seq.iter().rev().copied().collect();
            found.insert(rev.min(seq.clone()));
        }
        if seq.len() < max_len {
            let last = *seq.last().expect("non-empty");
            for next in (0..k).filter(|&t| linked[last][t]) {
                let mut longer = seq.clone();
                longer.push(next);
                stack.push(longer);
            }
        }
    }
    // Type indices follow sorted type order, so index order is label order.
    Ok(found
        .into_iter()
        .map(|seq| MetaPath {
            types: seq.into_iter().map(|t| types[t].clone()).collect(),
        })
        .collect())
}

/// Projection of `g` onto the relation described by `p`.
///
/// The result keeps all of `g`'s entities (same indices). Edge `(u, v)`
/// carries the number of walks from `u` to `v` whose type sequence matches
/// `p` read in either direction; entities that cannot be endpoints of `p`
/// are isolated.
pub fn project(g: &HeteroGraph, p: &MetaPath) -> HeteroGraph {
    let n = g.len();
    let forward = walk_counts(g, p.types());
    let backward = if p.is_palindrome() {
        None
    } else {
        Some(walk_counts(g, &p.reversed_types()))
    };
    let mut edges = Vec::new();
    for (u, row) in forward.iter().enumerate() {
        for &(v, c) in row {
            if v <= u {
                continue;
            }
            edges.push((u, v, c));
        }
    }
    if let Some(back) = backward {
        // Walks matching the reversed sequence from u to v are forward
        // walks from v to u; add them to the undirected pair.
        let mut merged: std::collections::BTreeMap<(usize, usize), f64> =
            edges.into_iter().map(|(a, b, c)| ((a, b), c)).collect();
        for (u, row) in back.iter().enumerate() {
            for &(v, c) in row {
                if v <= u {
                    continue;
                }
                *merged.entry((u, v)).or_insert(0.0) += c;
            }
        }
        edges = merged.into_iter().map(|((a, b), c)| (a, b, c)).collect();
    }
    debug_assert!(edges.iter().all(|e| e.0 < n && e.1 < n));
    HeteroGraph::from_sorted_parts(g.ids().to_vec(), g.types().to_vec(), edges)
}

/// For each start vertex of type `seq[0]`, sparse counts of walks following
/// `seq` that end at a vertex other than the start.
fn walk_counts(g: &HeteroGraph, seq: &[EntityType]) -> Vec<Vec<(usize, f64)>> {
    let n = g.len();
    let mut counts = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut frontier: Vec<usize> = Vec::new();
    let mut touched: Vec<usize> = Vec::new();
    let mut out = vec![Vec::new(); n];

    for start in (0..n).filter(|&u| g.entity_type(u) == &seq[0]) {
        frontier.clear();
        frontier.push(start);
        counts[start] = 1.0;
        for ty in &seq[1..] {
            touched.clear();
            for &x in &frontier {
                let cx = counts[x];
                for &(y, _) in g.neighbors(x) {
                    if g.entity_type(y) != ty {
                        continue;
                    }
                    if next[y] == 0.0 {
                        touched.push(y);
                    }
                    next[y] += cx;
                }
            }
            for &x in &frontier {
                counts[x] = 0.0;
            }
            std::mem::swap(&mut counts, &mut next);
            frontier.clear();
            frontier.extend_from_slice(&touched);
        }
        frontier.sort_unstable();
        for &v in &frontier {
            if v != start {
                out[start].push((v, counts[v]));
            }
            counts[v] = 0.0;
        }
    }
    out
}

/// Value used for unreachable pairs in a distance matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistanceCap {
    /// One more than the longest finite shortest path.
    #[default]
    Auto,
    Fixed(f64),
}

/// Symmetric, finite, non-negative pairwise matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    matrix: DMatrix<f64>,
    provenance: Option<MetaPath>,
}

impl SimilarityMatrix {
    /// Validates and wraps a matrix.
    pub fn new(matrix: DMatrix<f64>, provenance: Option<MetaPath>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::Dimension(format!(
                "similarity matrix must be square, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        for i in 0..n {
            if matrix[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = matrix[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite("similarity matrix"));
                }
                if v < 0.0 || v != matrix[(j, i)] {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i},{j}) is not symmetric and non-negative"
                    )));
                }
            }
        }
        Ok(Self { matrix, provenance })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn provenance(&self) -> Option<&MetaPath> {
        self.provenance.as_ref()
    }

    pub(crate) fn from_trusted(matrix: DMatrix<f64>, provenance: Option<MetaPath>) -> Self {
        Self { matrix, provenance }
    }

    /// Comma-separated dump, one row per line, for debugging.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n()).map(|j| self.matrix[(i, j)].to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Unweighted shortest-path hop counts between all entity pairs of `gp`.
pub fn path_distance_matrix(gp: &HeteroGraph, cap: DistanceCap) -> Result<SimilarityMatrix> {
    if let DistanceCap::Fixed(c) = cap {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "distance cap must be positive, got {c}"
            )));
        }
    }
    let n = gp.len();
    let rows: Vec<Vec<u32>> = (0..n).into_par_iter().map(|s| bfs_hops(gp, s)).collect();
    let longest = rows
        .iter()
        .flat_map(|r| r.iter().copied())
        .filter(|&d| d != u32::MAX)
        .max()
        .unwrap_or(0);
    let cap = match cap {
        DistanceCap::Auto => f64::from(longest) + 1.0,
        DistanceCap::Fixed(c) => c,
    };
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            m[(i, j)] = if d == u32::MAX { cap } else { f64::from(d) };
        }
    }
    Ok(SimilarityMatrix::from_trusted(m, None))
}

fn bfs_hops(g: &HeteroGraph, source: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; g.len()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(x) = queue.pop_front() {
        let d = dist[x] + 1;
        for &(y, _) in g.neighbors(x) {
            if dist[y] == u32::MAX {
                dist[y] = d;
                queue.push_back(y);
            }
        }
    }
    dist
}

/// Weighted sum of similarity matrices.
pub fn blend(mats: &[SimilarityMatrix], weights: &[f64]) -> Result<SimilarityMatrix> {
    if mats.is_empty() || mats.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} matrices with {} weights",
            mats.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "blend weights must be non-negative, got {w}"
        )));
    }
    let n = mats[0].n();
    if mats.iter().any(|m| m.n() != n) {
        return Err(Error::Dimension("similarity matrices differ in size".into()));
    }
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (m, &w) in mats.iter().zip(weights) {
        if w != 0.0 {
            out.zip_apply(&m.matrix, |o, v| *o += w * v);
        }
    }
    Ok(SimilarityMatrix::from_trusted(out, None))
}

/// Enumerates meta-paths of `g` and returns each with its distance matrix.
pub fn metapath_distances(
    g: &HeteroGraph,
    max_len: usize,
    cap: DistanceCap,
) -> Result<Vec<SimilarityMatrix>> {
    enumerate_metapaths(g, max_len)?
        .into_iter()
        .map(|p| {
            let gp = project(g, &p);
            let d = path_distance_matrix(&gp, cap)?;
            Ok(SimilarityMatrix::from_trusted(d.matrix, Some(p)))
        })
        .collect()
}
