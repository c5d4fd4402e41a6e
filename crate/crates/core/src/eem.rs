//! Entity estimation: embed source entities from blended meta-path
//! distances, learn the blend weights, and pick the source entities most
//! related to those already observed in the target.

use std::collections::BTreeMap;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{EntityId, HeteroGraph};
use crate::metapath::{blend, metapath_distances, DistanceCap, MetaPath, SimilarityMatrix};
use crate::numerics::{ols_nonneg_gram, sym_eig_topk, zscores};

/// Row-per-entity vector representation.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    matrix: DMatrix<f64>,
}

impl Embedding {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(Self { matrix })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Squared Euclidean distances between rows.
    pub fn squared_distances(&self) -> DMatrix<f64> {
        let gram = &self.matrix * self.matrix.transpose();
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    out[(i, j)] = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0);
                }
            }
        }
        out
    }

    /// Pairwise relevance `u uᵀ`.
    pub fn relevance(&self) -> RelevanceMatrix {
        let r = &self.matrix * self.matrix.transpose();
        RelevanceMatrix((&r + r.transpose()) * 0.5)
    }
}

/// Inner-product relevance between entities; symmetric by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceMatrix(DMatrix<f64>);

impl RelevanceMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Classical multidimensional scaling of a squared-distance matrix.
pub fn mds_embed(sg: &SimilarityMatrix, d1: usize) -> Result<Embedding> {
    let n = sg.n();
    if d1 == 0 || d1 > n {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension {d1} out of range 1..={n}"
        )));
    }
    let s = sg.matrix();
    let row_means: Vec<f64> = (0..n).map(|i| s.row(i).mean()).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (s[(i, j)] - row_means[i] - row_means[j] + grand));
    let (values, vectors) = sym_eig_topk(&b, d1)?;
    let mut u = vectors;
    for (c, &l) in values.iter().enumerate() {
        let scale = l.max(0.0).sqrt();
        u.column_mut(c).scale_mut(scale);
    }
    Embedding::new(u)
}

/// Normal equations of the weight regression, which depend only on the
/// meta-path matrices and can be reused across sweeps.
struct WeightDesign<'a> {
    mats: &'a [SimilarityMatrix],
    gram: DMatrix<f64>,
}

impl<'a> WeightDesign<'a> {
    fn new(mats: &'a [SimilarityMatrix]) -> Result<Self> {
        let p = mats.len();
        if p == 0 {
            return Err(Error::InvalidArgument("no meta-path matrices".into()));
        }
        let n = mats[0].n();
        if mats.iter().any(|m| m.n() != n) {
            return Err(Error::Dimension("meta-path matrices differ in size".into()));
        }
        let pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| (a..p).map(move |b| (a, b))).collect();
        let entries: Vec<f64> = pairs
            .par_iter()
            .map(|&(a, b)| upper_dot(mats[a].matrix(), mats[b].matrix()))
            .collect();
        let mut gram = DMatrix::zeros(p, p);
        for (&(a, b), v) in pairs.iter().zip(entries) {
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
        Ok(Self { mats, gram })
    }

    fn fit(&self, c1: &DMatrix<f64>, ridge: f64) -> Result<DVector<f64>> {
        let rhs = DVector::from_iterator(
            self.mats.len(),
            self.mats.iter().map(|m| upper_dot(m.matrix(), c1)),
        );
        ols_nonneg_gram(&self.gram, &rhs, ridge)
    }
}

/// Sum of elementwise products over the strict upper triangle.
fn upper_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for j in 1..n {
        let (ca, cb) = (a.column(j), b.column(j));
        for i in 0..j {
            acc += ca[i] * cb[i];
        }
    }
    acc
}

/// Non-negative meta-path weights whose blend best matches the embedding's
/// squared row distances (least squares over entity pairs).
pub fn fit_weights(
    embedding: &Embedding,
    mats: &[SimilarityMatrix],
    ridge: f64,
) -> Result<DVector<f64>> {
    let design = WeightDesign::new(mats)?;
    if embedding.n() != mats[0].n() {
        return Err(Error::Dimension(format!(
            "embedding has {} rows, matrices are {}",
            embedding.n(),
            mats[0].n()
        )));
    }
    design.fit(&embedding.squared_distances(), ridge)
}

/// Settings for [`run_eem`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EemConfig {
    pub d1: usize,
    pub lambda: f64,
    pub ridge: f64,
    /// Exponent of the fit residual; 1 or 2.
    pub theta: u32,
    pub tol: f64,
    pub max_iters: usize,
    pub max_path_len: usize,
    pub distance_cap: DistanceCap,
}

impl Default for EemConfig {
    fn default() -> Self {
        Self {
            d1: 16,
            lambda: 0.1,
            ridge: 1e-6,
            theta: 2,
            tol: 1e-6,
            max_iters: 50,
            max_path_len: 3,
            distance_cap: DistanceCap::Auto,
        }
    }
}

/// Alternation objective: fit residual between squared embedding distances
/// and the weighted blend, plus squared-norm penalties on `u` and `w`.
pub fn eem_objective(
    embedding: &Embedding,
    mats: &[SimilarityMatrix],
    weights: &[f64],
    lambda: f64,
    theta: u32,
) -> Result<f64> {
    let sg = blend(mats, weights)?;
    Ok(objective_with(&embedding.squared_distances(), &sg, embedding, weights, lambda, theta))
}

fn objective_with(
    c1: &DMatrix<f64>,
    sg: &SimilarityMatrix,
    embedding: &Embedding,
    weights: &[f64],
    lambda: f64,
    theta: u32,
) -> f64 {
    let s = sg.matrix();
    let mut fit = 0.0;
    for j in 1..c1.ncols() {
        for i in 0..j {
            let d = c1[(i, j)] - s[(i, j)];
            fit += if theta == 1 { d.abs() } else { d * d };
        }
    }
    let w2: f64 = weights.iter().map(|w| w * w).sum();
    2.0 * fit + lambda * embedding.matrix().norm_squared() + lambda * w2
}

/// Result of the alternation.
#[derive(Clone, Debug)]
pub struct EemState {
    pub metapaths: Vec<MetaPath>,
    pub weights: Vec<f64>,
    pub embedding: Embedding,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// Runs the alternation on the meta-path distance matrices of `gs`.
pub fn run_eem(gs: &HeteroGraph, config: &EemConfig) -> Result<EemState> {
    if gs.is_empty() {
        return Err(Error::InvalidArgument("source graph has no entities".into()));
    }
    let mats = metapath_distances(gs, config.max_path_len, config.distance_cap)?;
    run_eem_on(&mats, config)
}

/// Runs the alternation on precomputed meta-path distance matrices.
///
/// Weights are kept on the simplex (normalized to sum 1): the embedding step
/// is scale-equivariant, so unnormalized weights drift geometrically without
/// changing the embedding's shape. Both half-steps are accepted only if they
/// do not increase the objective; the weight step backtracks toward the
/// previous weights before giving up.
pub fn run_eem_on(mats: &[SimilarityMatrix], config: &EemConfig) -> Result<EemState> {
    if mats.is_empty() {
        return Err(Error::NoMetaPaths(config.max_path_len));
    }
    if !(config.theta == 1 || config.theta == 2) {
        return Err(Error::InvalidArgument(format!("theta must be 1 or 2, got {}", config.theta)));
    }
    let n = mats[0].n();
    let d1 = config.d1.min(n);
    let design = WeightDesign::new(mats)?;
    let p = mats.len();
    let uniform = vec![1.0 / p as f64; p];

    let normalize = |raw: DVector<f64>, fallback: &[f64]| -> Vec<f64> {
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.iter().map(|w| w / total).collect()
        } else {
            fallback.to_vec()
        }
    };
    let eval = |u: &Embedding, c1: &DMatrix<f64>, w: &[f64]| -> Result<f64> {
        let sg = blend(mats, w)?;
        let f = objective_with(c1, &sg, u, w, config.lambda, config.theta);
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFinite("entity objective"))
        }
    };

    let mut u = mds_embed(&blend(mats, &uniform)?, d1)?;
    let mut c1 = u.squared_distances();
    let mut w = normalize(design.fit(&c1, config.ridge)?, &uniform);
    let mut f = eval(&u, &c1, &w)?;
    let mut trace = vec![f];
    let mut converged = false;

    while trace.len() < config.max_iters.max(1) {
        let cand = mds_embed(&blend(mats, &w)?, d1)?;
        let cand_c1 = cand.squared_distances();
        let fu = eval(&cand, &cand_c1, &w)?;
        if fu <= f {
            u = cand;
            c1 = cand_c1;
            f = fu;
        }

        let proposal = normalize(design.fit(&c1, config.ridge)?, &w);
        let mut alpha = 1.0;
        while alpha >= 1.0 / f64::from(1 << 20) {
            let mixed: Vec<f64> = w
                .iter()
                .zip(&proposal)
                .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
                .collect();
            let fw = eval(&u, &c1, &mixed)?;
            if fw <= f {
                w = mixed;
                f = fw;
                break;
            }
            alpha /= 2.0;
        }

        let prev = *trace.last().expect("non-empty trace");
        trace.push(f);
        let rel = if prev > 0.0 { (prev - f) / prev } else { 0.0 };
        debug!("entity sweep {}: objective {f:.6e}, rel change {rel:.3e}", trace.len());
        if rel < config.tol {
            converged = true;
            break;
        }
    }

    Ok(EemState {
        metapaths: mats.iter().filter_map(|m| m.provenance().cloned()).collect(),
        weights: w,
        embedding: u,
        objective_trace: trace,
        converged,
    })
}

/// Source-only entities whose relevance to some shared entity stands out.
///
/// For every entity present in both graphs, its relevance row is
/// standardized; a source-only entity is selected when its largest score
/// over those rows reaches `z`. Returns the selected ids with that score.
pub fn select_entities(
    embedding: &Embedding,
    gs: &HeteroGraph,
    gt_hat: &HeteroGraph,
    z: f64,
) -> Result<BTreeMap<EntityId, f64>> {
    if embedding.n() != gs.len() {
        return Err(Error::Dimension(format!(
            "embedding has {} rows for {} source entities",
            embedding.n(),
            gs.len()
        )));
    }
    let shared: Vec<usize> = (0..gs.len()).filter(|&i| gt_hat.contains(gs.id(i).as_str())).collect();
    if shared.is_empty() {
        return Err(Error::NoOverlap);
    }
    let candidates: Vec<usize> = (0..gs.len()).filter(|&i| !gt_hat.contains(gs.id(i).as_str())).collect();
    let scores = max_row_zscores(embedding.relevance().matrix(), &shared, &candidates);
    Ok(candidates
        .iter()
        .zip(scores)
        .filter_map(|(&j, s)| s.filter(|&s| s >= z).map(|s| (gs.id(j).clone(), s)))
        .collect())
}

/// For each candidate column, the maximum standardized score over the given
/// rows; `None` if no row has spread.
pub(crate) fn max_row_zscores(
    r: &DMatrix<f64>,
    rows: &[usize],
    candidates: &[usize],
) -> Vec<Option<f64>> {
    let mut best: Vec<Option<f64>> = vec![None; candidates.len()];
    let mut row = Vec::with_capacity(r.ncols());
    for &i in rows {
        row.clear();
        // R is symmetric, so column i is row i and is contiguous.
        row.extend(r.column(i).iter().copied());
        let Some(zs) = zscores(&row) else { continue };
        for (slot, &j) in best.iter_mut().zip(candidates) {
            let v = zs[j];
            *slot = Some(slot.map_or(v, |b| b.max(v)));
        }
    }
    best
}

/// The enlarged target: observed target entities plus the selected source
/// entities (as isolated vertices), with only the observed target edges.
pub fn build_gt_tilde<'a, I>(gt_hat: &HeteroGraph, gs: &HeteroGraph, selected: I) -> Result<HeteroGraph>
where
    I: IntoIterator<Item = &'a EntityId>,
{
    let mut builder = HeteroGraph::builder();
    for (id, ty) in gt_hat.ids().iter().zip(gt_hat.types()) {
        builder.add_entity(id.clone(), ty.clone())?;
    }
    for id in selected {
        let ty = gs
            .type_of(id.as_str())
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))?;
        builder.ensure_entity(id.clone(), ty.clone())?;
    }
    for e in gt_hat.edges() {
        builder.add_edge(gt_hat.id(e.a).clone(), gt_hat.id(e.b).clone(), e.weight)?;
    }
    builder.build()
}
