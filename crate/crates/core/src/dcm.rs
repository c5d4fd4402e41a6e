//! Dependency construction: a low-rank target embedding that stays close to
//! the observed target edges while keeping the target's discrepancy from the
//! source at the level measured on the observed part.

use log::debug;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eem::Embedding;
use crate::error::{Error, Result};
use crate::hetgraph::{AdjacencyView, EntityId, HeteroGraph};
use crate::numerics::{sym_eig_topk, zscores};

const DIVERGENCE_LIMIT: f64 = 1e12;
const INIT_PERTURBATION: f64 = 1e-3;

/// Binary adjacency as an upper-triangle edge list.
#[derive(Clone, Debug)]
struct SparseBinary {
    edges: Vec<(usize, usize)>,
}

impl SparseBinary {
    fn of(view: &AdjacencyView) -> Self {
        let m = view.matrix();
        let n = view.n();
        let mut edges = Vec::new();
        for j in 0..n {
            for i in 0..j {
                if m[(i, j)] != 0.0 {
                    edges.push((i, j));
                }
            }
        }
        Self { edges }
    }

    /// `‖u uᵀ − A‖²_F` given `G = uᵀu`.
    fn residual_sq(&self, u: &DMatrix<f64>, gram: &DMatrix<f64>) -> f64 {
        let cross: f64 = self.edges.iter().map(|&(i, j)| u.row(i).dot(&u.row(j))).sum();
        (gram.norm_squared() - 4.0 * cross + 2.0 * self.edges.len() as f64).max(0.0)
    }

    /// `(u uᵀ − A) u` given `u G` with `G = uᵀu`.
    fn residual_times_u(&self, u: &DMatrix<f64>, ug: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = ug.clone();
        for &(i, j) in &self.edges {
            for c in 0..u.ncols() {
                out[(i, c)] -= u[(j, c)];
                out[(j, c)] -= u[(i, c)];
            }
        }
        out
    }
}

/// A dependency-construction instance over the entities of the enlarged
/// target graph.
#[derive(Clone, Debug)]
pub struct DcmProblem {
    a_tilde_t: AdjacencyView,
    a_tilde_s: AdjacencyView,
    c3: f64,
    mu: f64,
    lambda: f64,
    d2: usize,
    sparse_t: SparseBinary,
    sparse_s: SparseBinary,
}

impl DcmProblem {
    /// Both views must share the same ids and be binary; `c3` and `mu` lie
    /// in `[0, 1]`.
    pub fn new(
        a_tilde_t: AdjacencyView,
        a_tilde_s: AdjacencyView,
        c3: f64,
        mu: f64,
        lambda: f64,
        d2: usize,
    ) -> Result<Self> {
        if a_tilde_t.ids() != a_tilde_s.ids() {
            return Err(Error::IndexMismatch);
        }
        if a_tilde_t.n() < 2 {
            return Err(Error::InvalidArgument(format!(
                "dependency construction needs at least 2 entities, got {}",
                a_tilde_t.n()
            )));
        }
        if !a_tilde_t.is_binary() || !a_tilde_s.is_binary() {
            return Err(Error::InvalidArgument("adjacency views must be binary".into()));
        }
        for (name, v) in [("c3", c3), ("mu", mu)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        if d2 == 0 {
            return Err(Error::InvalidArgument("d2 must be positive".into()));
        }
        let sparse_t = SparseBinary::of(&a_tilde_t);
        let sparse_s = SparseBinary::of(&a_tilde_s);
        Ok(Self {
            a_tilde_t,
            a_tilde_s,
            c3,
            mu,
            lambda,
            d2,
            sparse_t,
            sparse_s,
        })
    }

    pub fn n(&self) -> usize {
        self.a_tilde_t.n()
    }

    pub fn ids(&self) -> &[EntityId] {
        self.a_tilde_t.ids()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn c3(&self) -> f64 {
        self.c3
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Requested embedding dimension; the solver uses `min(d2, n)`.
    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn a_tilde_t(&self) -> &AdjacencyView {
        &self.a_tilde_t
    }

    pub fn a_tilde_s(&self) -> &AdjacencyView {
        &self.a_tilde_s
    }

    fn pair_norm(&self) -> f64 {
        let n = self.n() as f64;
        n * (n - 1.0)
    }

    fn check_dims(&self, u: &DMatrix<f64>) -> Result<()> {
        if u.nrows() != self.n() {
            return Err(Error::Dimension(format!(
                "embedding has {} rows for {} entities",
                u.nrows(),
                self.n()
            )));
        }
        Ok(())
    }
}

/// `μ‖uuᵀ − Ã_T‖² + (1−μ)(g(u) − C₃)² + λ‖u‖²` with
/// `g(u) = ‖uuᵀ − Ã_S‖² / (n(n−1))`.
pub fn dcm_objective(u: &DMatrix<f64>, prob: &DcmProblem) -> Result<f64> {
    prob.check_dims(u)?;
    let gram = u.tr_mul(u);
    let f = objective_with_gram(u, &gram, prob);
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::NonFinite("dependency objective"))
    }
}

fn objective_with_gram(u: &DMatrix<f64>, gram: &DMatrix<f64>, prob: &DcmProblem) -> f64 {
    let mut f = prob.lambda * u.norm_squared();
    if prob.mu > 0.0 {
        f += prob.mu * prob.sparse_t.residual_sq(u, gram);
    }
    if prob.mu < 1.0 {
        let g = prob.sparse_s.residual_sq(u, gram) / prob.pair_norm();
        f += (1.0 - prob.mu) * (g - prob.c3) * (g - prob.c3);
    }
    f
}

/// Gradient of [`dcm_objective`] with respect to `u`.
pub fn dcm_gradient(u: &DMatrix<f64>, prob: &DcmProblem) -> Result<DMatrix<f64>> {
    prob.check_dims(u)?;
    let gram = u.tr_mul(u);
    let ug = u * &gram;
    let mut grad = u * (2.0 * prob.lambda);
    if prob.mu > 0.0 {
        grad += prob.sparse_t.residual_times_u(u, &ug) * (4.0 * prob.mu);
    }
    if prob.mu < 1.0 {
        let g = prob.sparse_s.residual_sq(u, &gram) / prob.pair_norm();
        let coef = (1.0 - prob.mu) * 2.0 * (g - prob.c3) * 4.0 / prob.pair_norm();
        if coef != 0.0 {
            grad += prob.sparse_s.residual_times_u(u, &ug) * coef;
        }
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dependency gradient"));
    }
    Ok(grad)
}

/// Step-size and stopping settings for [`solve_dcm`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcmConfig {
    /// Initial step size, restored at every iteration before backtracking.
    pub eta0: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for DcmConfig {
    fn default() -> Self {
        Self {
            eta0: 0.01,
            tol: 1e-6,
            max_iters: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DcmSolution {
    pub ids: Vec<EntityId>,
    pub u_t: Embedding,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl DcmSolution {
    /// `iteration,objective` rows for convergence plots.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,objective\n");
        for (i, f) in self.objective_trace.iter().enumerate() {
            out.push_str(&format!("{i},{f}\n"));
        }
        out
    }
}

/// Spectral start: leading eigenpairs of `μÃ_T + (1−μ)Ã_S`, plus a small
/// seeded perturbation so that the descent never starts at a saddle.
fn initial_embedding(prob: &DcmProblem, d2: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mixed = prob.a_tilde_t.matrix() * prob.mu + prob.a_tilde_s.matrix() * (1.0 - prob.mu);
    let (values, mut u) = sym_eig_topk(&mixed, d2)?;
    for (c, &l) in values.iter().enumerate() {
        u.column_mut(c).scale_mut(l.max(0.0).sqrt());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in u.iter_mut() {
        *v += rng.gen_range(-INIT_PERTURBATION..=INIT_PERTURBATION);
    }
    Ok(u)
}

/// Gradient descent with backtracking: each step starts at `eta0` and halves
/// until the objective does not increase.
pub fn solve_dcm(prob: &DcmProblem, seed: u64, config: &DcmConfig) -> Result<DcmSolution> {
    if !(config.eta0 > 0.0 && config.tol > 0.0) {
        return Err(Error::InvalidArgument("step size and tolerance must be positive".into()));
    }
    let d2 = prob.d2.min(prob.n());
    let mut u = initial_embedding(prob, d2, seed)?;
    let mut f = dcm_objective(&u, prob)?;
    if f > DIVERGENCE_LIMIT {
        return Err(Error::Diverged(f));
    }
    let mut trace = vec![f];
    let mut converged = false;

    for iter in 1..=config.max_iters {
        let grad = dcm_gradient(&u, prob)?;
        let mut eta = config.eta0;
        let mut step = None;
        // 60 halvings take eta far below the resolution of any gradient.
        for _ in 0..60 {
            let cand = &u - &grad * eta;
            let gram = cand.tr_mul(&cand);
            let fc = objective_with_gram(&cand, &gram, prob);
            if !fc.is_finite() || fc > DIVERGENCE_LIMIT {
                return Err(Error::Diverged(fc));
            }
            if fc <= f {
                step = Some((cand, fc));
                break;
            }
            eta /= 2.0;
        }
        let Some((cand, fc)) = step else {
            converged = true;
            break;
        };
        let rel = if f > 0.0 { (f - fc) / f } else { 0.0 };
        u = cand;
        f = fc;
        trace.push(f);
        if iter % 50 == 0 {
            debug!("dependency step {iter}: objective {f:.6e}, eta {eta:.3e}");
        }
        if rel < config.tol {
            converged = true;
            break;
        }
    }

    Ok(DcmSolution {
        ids: prob.ids().to_vec(),
        iterations: trace.len() - 1,
        u_t: Embedding::new(u)?,
        objective_trace: trace,
        converged,
    })
}

/// Thresholds the reconstructed scores `X = u uᵀ` into new edges.
///
/// Each row of `X` is standardized; pair `(i, j)` becomes an edge when the
/// larger of its two row scores reaches `z`. Edges of `g_tilde_t` are always
/// kept with their weights; added edges carry the raw score, floored at
/// machine epsilon.
pub fn finalize_edges(sol: &DcmSolution, g_tilde_t: &HeteroGraph, z: f64) -> Result<HeteroGraph> {
    if sol.ids.as_slice() != g_tilde_t.ids() {
        return Err(Error::IndexMismatch);
    }
    let u = sol.u_t.matrix();
    let x = u * u.transpose();
    let n = x.nrows();
    let zs: Vec<Option<Vec<f64>>> = (0..n)
        .map(|i| zscores(x.column(i).as_slice()))
        .collect();
    let score = |i: usize, j: usize| zs[i].as_ref().map_or(f64::NEG_INFINITY, |r| r[j]);

    let mut edges: Vec<(usize, usize, f64)> = g_tilde_t.edges().map(|e| (e.a, e.b, e.weight)).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if g_tilde_t.has_edge(i, j) {
                continue;
            }
            if score(i, j).max(score(j, i)) >= z {
                edges.push((i, j, x[(i, j)].max(f64::EPSILON)));
            }
        }
    }
    edges.sort_by_key(|e| (e.0, e.1));
    Ok(HeteroGraph::from_sorted_parts(
        g_tilde_t.ids().to_vec(),
        g_tilde_t.types().to_vec(),
        edges,
    ))
}
