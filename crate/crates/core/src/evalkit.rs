//! Scoring against a ground truth, and the comparison baselines.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::hetgraph::{check_type_consistency, EntityId, HeteroGraph};
use crate::numerics::zscores;
use crate::transfer::{dependency_stage, TransferConfig};

/// Precision, recall and F1 of entities and edges.
///
/// Edges are compared as unordered id pairs; weights are ignored. When
/// estimate and truth are both empty for a kind, its metrics are 1. When
/// only one is empty, the undefined ratio is reported as 0 and named in
/// `undefined`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub entity_precision: f64,
    pub entity_recall: f64,
    pub entity_f1: f64,
    pub edge_precision: f64,
    pub edge_recall: f64,
    pub edge_f1: f64,
    pub combined_f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

struct Prf {
    precision: f64,
    recall: f64,
    f1: f64,
}

fn prf<T: Ord + Hash>(estimate: &BTreeSet<T>, truth: &BTreeSet<T>, kind: &str, undefined: &mut Vec<String>) -> Prf {
    if estimate.is_empty() && truth.is_empty() {
        return Prf { precision: 1.0, recall: 1.0, f1: 1.0 };
    }
    let hit = estimate.intersection(truth).count() as f64;
    let ratio = |den: usize, name: &str, undefined: &mut Vec<String>| {
        if den == 0 {
            undefined.push(format!("{kind}_{name}"));
            0.0
        } else {
            hit / den as f64
        }
    };
    let precision = ratio(estimate.len(), "precision", undefined);
    let recall = ratio(truth.len(), "recall", undefined);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf { precision, recall, f1 }
}

pub fn score(estimate: &HeteroGraph, truth: &HeteroGraph) -> EvalResult {
    let mut undefined = Vec::new();
    let ent = prf(
        &estimate.ids().iter().collect(),
        &truth.ids().iter().collect(),
        "entity",
        &mut undefined,
    );
    let edge = prf(&estimate.edge_id_pairs(), &truth.edge_id_pairs(), "edge", &mut undefined);
    EvalResult {
        entity_precision: ent.precision,
        entity_recall: ent.recall,
        entity_f1: ent.f1,
        edge_precision: edge.precision,
        edge_recall: edge.recall,
        edge_f1: edge.f1,
        combined_f1: (ent.f1 + edge.f1) / 2.0,
        undefined,
    }
}

/// No transfer: the observed target as is.
pub fn baseline_nt(gt_hat: &HeteroGraph) -> HeteroGraph {
    gt_hat.clone()
}

/// Direct transfer: union of entities and edges, keeping the larger weight.
pub fn baseline_dt(gs: &HeteroGraph, gt_hat: &HeteroGraph) -> Result<HeteroGraph> {
    check_type_consistency(gs, gt_hat)?;
    let mut builder = HeteroGraph::builder();
    for g in [gs, gt_hat] {
        for (id, ty) in g.ids().iter().zip(g.types()) {
            builder.ensure_entity(id.clone(), ty.clone())?;
        }
    }
    for g in [gs, gt_hat] {
        for e in g.edges() {
            builder.max_edge(g.id(e.a).clone(), g.id(e.b).clone(), e.weight)?;
        }
    }
    builder.build()
}

/// Random walk with restart to a uniform distribution over `seeds`.
///
/// Transitions follow edge weights; walkers at isolated vertices jump back
/// to the seeds. Iterates until the L1 change drops below `tol` or
/// `max_iters` is reached.
pub fn random_walk_with_restart(
    g: &HeteroGraph,
    seeds: &[usize],
    restart: f64,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    if seeds.is_empty() {
        return Err(Error::NoOverlap);
    }
    if !(0.0..=1.0).contains(&restart) {
        return Err(Error::InvalidArgument(format!("restart probability must lie in [0,1], got {restart}")));
    }
    let n = g.len();
    let mut e = vec![0.0; n];
    for &s in seeds {
        e[s] = 1.0 / seeds.len() as f64;
    }
    let strength: Vec<f64> = (0..n).map(|i| g.neighbors(i).iter().map(|&(_, w)| w).sum()).collect();
    let mut r = e.clone();
    let mut next = vec![0.0; n];
    for _ in 0..max_iters {
        let mut dangling = 0.0;
        next.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            if r[j] == 0.0 {
                continue;
            }
            if strength[j] == 0.0 {
                dangling += r[j];
                continue;
            }
            for &(i, w) in g.neighbors(j) {
                next[i] += r[j] * w / strength[j];
            }
        }
        let mut delta = 0.0;
        for i in 0..n {
            let v = (1.0 - restart) * (next[i] + dangling * e[i]) + restart * e[i];
            delta += (v - r[i]).abs();
            r[i] = v;
        }
        if delta < tol {
            break;
        }
    }
    Ok(r)
}

pub const RWR_RESTART: f64 = 0.15;
pub const RWR_TOL: f64 = 1e-9;
pub const RWR_MAX_ITERS: usize = 100;

/// Source-only entities whose standardized walk score reaches `z`.
pub fn rw_select(
    gs: &HeteroGraph,
    gt_hat: &HeteroGraph,
    restart: f64,
    z: f64,
) -> Result<BTreeMap<EntityId, f64>> {
    let seeds: Vec<usize> = (0..gs.len()).filter(|&i| gt_hat.contains(gs.id(i).as_str())).collect();
    let r = random_walk_with_restart(gs, &seeds, restart, RWR_TOL, RWR_MAX_ITERS)?;
    let candidates: Vec<usize> = (0..gs.len()).filter(|&i| !gt_hat.contains(gs.id(i).as_str())).collect();
    let scores: Vec<f64> = candidates.iter().map(|&i| r[i]).collect();
    let Some(zs) = zscores(&scores) else {
        return Ok(BTreeMap::new());
    };
    Ok(candidates
        .iter()
        .zip(zs)
        .filter(|(_, s)| *s >= z)
        .map(|(&i, s)| (gs.id(i).clone(), s))
        .collect())
}

/// Random-walk entity selection followed by the same dependency stage as
/// the full pipeline.
pub fn baseline_rw_dcm(gs: &HeteroGraph, gt_hat: &HeteroGraph, config: &TransferConfig) -> Result<HeteroGraph> {
    config.validate()?;
    check_type_consistency(gs, gt_hat).stage("input")?;
    let selected = rw_select(gs, gt_hat, RWR_RESTART, config.z_entity).stage("random-walk selection")?;
    Ok(dependency_stage(gs, gt_hat, &selected, config.mu_mode, config)?.graph)
}
