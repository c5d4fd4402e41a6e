//! End-to-end transfer: entity estimation, the enlarged target, and
//! dependency construction.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::dcm::{finalize_edges, solve_dcm, DcmConfig, DcmProblem, DcmSolution};
use crate::eem::{build_gt_tilde, run_eem, select_entities, EemConfig, EemState};
use crate::error::{Error, Result, StageExt};
use crate::hetgraph::{check_type_consistency, dynamic_factor, EntityId, HeteroGraph};
use crate::metapath::DistanceCap;

pub const REPORT_SCHEMA: &str = "report_v1";

/// How the smoothness/consistency trade-off `μ` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MuMode {
    /// Share of transferred entities in the enlarged target.
    #[default]
    Auto,
    Fixed(f64),
}

impl FromStr for MuMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MuMode::Auto);
        }
        s.parse::<f64>()
            .map(MuMode::Fixed)
            .map_err(|_| Error::InvalidArgument(format!("mu must be `auto` or a number, got {s:?}")))
    }
}

impl fmt::Display for MuMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MuMode::Auto => f.write_str("auto"),
            MuMode::Fixed(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Exponent of the entity fit residual; 1 or 2.
    pub theta: u32,
    /// Regularization weight shared by both stages unless overridden.
    pub lambda: f64,
    pub lambda_eem: Option<f64>,
    pub lambda_dcm: Option<f64>,
    pub ridge: f64,
    pub d1: usize,
    pub d2: usize,
    pub z_entity: f64,
    pub z_edge: f64,
    pub max_path_len: usize,
    pub distance_cap: DistanceCap,
    pub mu_mode: MuMode,
    pub eem_tol: f64,
    pub dcm_tol: f64,
    pub eem_max_iters: usize,
    pub dcm_max_iters: usize,
    pub eta0: f64,
    pub seed: u64,
    /// Adds wall-clock stage timings to the report, which makes it
    /// non-reproducible byte for byte.
    pub record_timings: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            theta: 2,
            lambda: 0.1,
            lambda_eem: None,
            lambda_dcm: None,
            ridge: 1e-6,
            d1: 16,
            d2: 16,
            z_entity: 1.96,
            z_edge: 1.96,
            max_path_len: 3,
            distance_cap: DistanceCap::Auto,
            mu_mode: MuMode::Auto,
            eem_tol: 1e-6,
            dcm_tol: 1e-6,
            eem_max_iters: 50,
            dcm_max_iters: 500,
            eta0: 0.01,
            seed: 0,
            record_timings: false,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.theta == 1 || self.theta == 2) {
            return bad(format!("theta must be 1 or 2, got {}", self.theta));
        }
        for (name, v) in [
            ("lambda", Some(self.lambda)),
            ("lambda_eem", self.lambda_eem),
            ("lambda_dcm", self.lambda_dcm),
            ("ridge", Some(self.ridge)),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return bad(format!("{name} must be >= 0, got {v}"));
                }
            }
        }
        for (name, v) in [
            ("z_entity", self.z_entity),
            ("z_edge", self.z_edge),
            ("eem_tol", self.eem_tol),
            ("dcm_tol", self.dcm_tol),
            ("eta0", self.eta0),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        for (name, v) in [
            ("d1", self.d1),
            ("d2", self.d2),
            ("eem_max_iters", self.eem_max_iters),
            ("dcm_max_iters", self.dcm_max_iters),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.max_path_len < 2 {
            return bad(format!("max_path_len must be >= 2, got {}", self.max_path_len));
        }
        if let DistanceCap::Fixed(c) = self.distance_cap {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("distance_cap must be positive, got {c}"));
            }
        }
        if let MuMode::Fixed(m) = self.mu_mode {
            if !(0.0..=1.0).contains(&m) {
                return bad(format!("mu must lie in [0,1], got {m}"));
            }
        }
        Ok(())
    }

    pub fn eem_config(&self) -> EemConfig {
        EemConfig {
            d1: self.d1,
            lambda: self.lambda_eem.unwrap_or(self.lambda),
            ridge: self.ridge,
            theta: self.theta,
            tol: self.eem_tol,
            max_iters: self.eem_max_iters,
            max_path_len: self.max_path_len,
            distance_cap: self.distance_cap,
        }
    }

    pub fn dcm_config(&self) -> DcmConfig {
        DcmConfig {
            eta0: self.eta0,
            tol: self.dcm_tol,
            max_iters: self.dcm_max_iters,
        }
    }

    pub fn dcm_lambda(&self) -> f64 {
        self.lambda_dcm.unwrap_or(self.lambda)
    }

    /// Sets one field from its textual `key = value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))
        }
        match key {
            "theta" => self.theta = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "lambda_eem" => self.lambda_eem = Some(num(key, value)?),
            "lambda_dcm" => self.lambda_dcm = Some(num(key, value)?),
            "ridge" => self.ridge = num(key, value)?,
            "d1" => self.d1 = num(key, value)?,
            "d2" => self.d2 = num(key, value)?,
            "z_entity" => self.z_entity = num(key, value)?,
            "z_edge" => self.z_edge = num(key, value)?,
            "max_path_len" => self.max_path_len = num(key, value)?,
            "distance_cap" => {
                self.distance_cap = if value.eq_ignore_ascii_case("auto") {
                    DistanceCap::Auto
                } else {
                    DistanceCap::Fixed(num(key, value)?)
                }
            }
            "mu" => self.mu_mode = value.parse()?,
            "eem_tol" => self.eem_tol = num(key, value)?,
            "dcm_tol" => self.dcm_tol = num(key, value)?,
            "eem_max_iters" => self.eem_max_iters = num(key, value)?,
            "dcm_max_iters" => self.dcm_max_iters = num(key, value)?,
            "eta0" => self.eta0 = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "record_timings" => self.record_timings = num(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` document (blank lines and `#` comments
    /// allowed) on top of `self`.
    pub fn merge_kv(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::at_line(idx + 1, Error::Malformed(format!("expected key = value, got {line:?}")))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::at_line(idx + 1, e))?;
        }
        Ok(())
    }
}

/// `(|G̃_T| − |Ĝ_T|) / |G̃_T|` over entity counts.
pub fn auto_mu(g_tilde_t: &HeteroGraph, gt_hat: &HeteroGraph) -> Result<f64> {
    if g_tilde_t.is_empty() {
        return Err(Error::InvalidArgument("enlarged target has no entities".into()));
    }
    if let Some(missing) = gt_hat.ids().iter().find(|id| !g_tilde_t.contains(id.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "observed target entity {missing} is missing from the enlarged target"
        )));
    }
    Ok((g_tilde_t.len() - gt_hat.len()) as f64 / g_tilde_t.len() as f64)
}

/// Output of the entity stage; reusable across dependency runs with
/// different `μ`.
#[derive(Clone, Debug)]
pub struct EntityStage {
    pub eem: EemState,
    pub selected: BTreeMap<EntityId, f64>,
}

pub fn entity_stage(gs: &HeteroGraph, gt_hat: &HeteroGraph, config: &TransferConfig) -> Result<EntityStage> {
    config.validate()?;
    check_type_consistency(gs, gt_hat).stage("input")?;
    let eem = run_eem(gs, &config.eem_config()).stage("entity estimation")?;
    let selected =
        select_entities(&eem.embedding, gs, gt_hat, config.z_entity).stage("entity selection")?;
    info!(
        "selected {} of {} source-only entities",
        selected.len(),
        gs.ids().iter().filter(|id| !gt_hat.contains(id.as_str())).count()
    );
    Ok(EntityStage { eem, selected })
}

/// Output of the dependency stage.
#[derive(Clone, Debug)]
pub struct DependencyStage {
    pub graph: HeteroGraph,
    pub g_tilde_t: HeteroGraph,
    pub mu: f64,
    pub c3: f64,
    /// `None` when the enlarged target has fewer than two entities.
    pub solution: Option<DcmSolution>,
}

/// Discrepancy between the source and the observed target on the observed
/// target's entities.
pub fn observed_dynamic_factor(gs: &HeteroGraph, gt_hat: &HeteroGraph) -> Result<f64> {
    if gt_hat.len() < 2 {
        return Ok(0.0);
    }
    let a_s = gs.adjacency_over(gt_hat.ids()).binarize();
    let a_t = gt_hat.adjacency().binarize();
    dynamic_factor(&a_s, &a_t)
}

/// Builds the enlarged target from `selected` and fills in dependencies.
pub fn dependency_stage(
    gs: &HeteroGraph,
    gt_hat: &HeteroGraph,
    selected: &BTreeMap<EntityId, f64>,
    mu_mode: MuMode,
    config: &TransferConfig,
) -> Result<DependencyStage> {
    config.validate()?;
    let g_tilde_t = build_gt_tilde(gt_hat, gs, selected.keys()).stage("enlarged target")?;
    let mu = match mu_mode {
        MuMode::Auto => auto_mu(&g_tilde_t, gt_hat).stage("mu")?,
        MuMode::Fixed(m) => m,
    };
    let c3 = observed_dynamic_factor(gs, gt_hat).stage("consistency level")?;
    if g_tilde_t.len() < 2 {
        warn!("enlarged target has {} entities; skipping dependency construction", g_tilde_t.len());
        return Ok(DependencyStage {
            graph: g_tilde_t.clone(),
            g_tilde_t,
            mu,
            c3,
            solution: None,
        });
    }
    let prob = DcmProblem::new(
        g_tilde_t.adjacency().binarize(),
        gs.adjacency_over(g_tilde_t.ids()).binarize(),
        c3,
        mu,
        config.dcm_lambda(),
        config.d2,
    )
    .stage("dependency construction")?;
    let solution = solve_dcm(&prob, config.seed, &config.dcm_config()).stage("dependency construction")?;
    let graph = finalize_edges(&solution, &g_tilde_t, config.z_edge).stage("edge thresholding")?;
    info!(
        "mu {mu:.4}: {} edges after construction ({} observed)",
        graph.edge_count(),
        gt_hat.edge_count()
    );
    Ok(DependencyStage {
        graph,
        g_tilde_t,
        mu,
        c3,
        solution: Some(solution),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaPathWeight {
    pub path: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedEntity {
    pub id: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    /// `(iteration, objective)` pairs.
    pub trace: Vec<(usize, f64)>,
    pub converged: bool,
}

impl TraceReport {
    fn of(trace: &[f64], converged: bool) -> Self {
        Self {
            trace: trace.iter().copied().enumerate().collect(),
            converged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphCounts {
    pub source_entities: usize,
    pub observed_entities: usize,
    pub observed_edges: usize,
    pub enlarged_entities: usize,
    pub output_entities: usize,
    pub output_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub schema: String,
    pub config: TransferConfig,
    pub metapaths: Vec<MetaPathWeight>,
    pub selected: Vec<SelectedEntity>,
    pub mu_used: f64,
    pub consistency_level: f64,
    pub eem: TraceReport,
    pub dcm: Option<TraceReport>,
    pub counts: GraphCounts,
    /// Seconds per stage; present only when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl TransferReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Runs the full pipeline and returns the estimated target graph.
pub fn acret_transfer(
    gs: &HeteroGraph,
    gt_hat: &HeteroGraph,
    config: &TransferConfig,
) -> Result<(HeteroGraph, TransferReport)> {
    let t0 = Instant::now();
    let entities = entity_stage(gs, gt_hat, config)?;
    let t1 = Instant::now();
    let deps = dependency_stage(gs, gt_hat, &entities.selected, config.mu_mode, config)?;
    let t2 = Instant::now();

    let timings = config.record_timings.then(|| {
        BTreeMap::from([
            ("entity".to_string(), (t1 - t0).as_secs_f64()),
            ("dependency".to_string(), (t2 - t1).as_secs_f64()),
        ])
    });
    let report = TransferReport {
        schema: REPORT_SCHEMA.to_string(),
        config: config.clone(),
        metapaths: entities
            .eem
            .metapaths
            .iter()
            .zip(&entities.eem.weights)
            .map(|(p, &w)| MetaPathWeight { path: p.to_string(), weight: w })
            .collect(),
        selected: entities
            .selected
            .iter()
            .map(|(id, &score)| SelectedEntity { id: id.to_string(), score })
            .collect(),
        mu_used: deps.mu,
        consistency_level: deps.c3,
        eem: TraceReport::of(&entities.eem.objective_trace, entities.eem.converged),
        dcm: deps
            .solution
            .as_ref()
            .map(|s| TraceReport::of(&s.objective_trace, s.converged)),
        counts: GraphCounts {
            source_entities: gs.len(),
            observed_entities: gt_hat.len(),
            observed_edges: gt_hat.edge_count(),
            enlarged_entities: deps.g_tilde_t.len(),
            output_entities: deps.graph.len(),
            output_edges: deps.graph.edge_count(),
        },
        timings,
    };
    Ok((deps.graph, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::test_support::*;

    #[test]
    fn auto_mu_arithmetic() {
        let g = random_graph(100, 2, 0.05, 1);
        let hat = g.induced_subgraph(g.ids()[..77].iter()).unwrap();
        assert!((auto_mu(&g, &hat).unwrap() - 0.23).abs() < 1e-12);
        assert_eq!(auto_mu(&hat, &hat).unwrap(), 0.0);
        assert!(auto_mu(&HeteroGraph::empty(), &HeteroGraph::empty()).is_err());
        assert!(auto_mu(&hat, &g).is_err());
    }

    #[test]
    fn config_defaults_validate() {
        let c = TransferConfig::default();
        c.validate().unwrap();
        assert_eq!(c.eem_config(), EemConfig::default());
        assert_eq!(c.dcm_config(), DcmConfig::default());
    }

    #[test]
    fn config_rejects_bad_values() {
        for (k, v) in [
            ("theta", "3"),
            ("z_entity", "0"),
            ("eem_tol", "-1"),
            ("mu", "1.5"),
            ("lambda", "-0.1"),
            ("max_path_len", "1"),
            ("d2", "0"),
        ] {
            let mut c = TransferConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k}={v}");
        }
        let mut c = TransferConfig::default();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("d1", "x").is_err());
        assert!(c.set("mu", "sometimes").is_err());
    }

    #[test]
    fn kv_merge() {
        let mut c = TransferConfig::default();
        c.merge_kv("# comment\n\nlambda = 0.5\nmu=0.3\ndistance_cap = 7\nlambda_dcm = 0.01\n")
            .unwrap();
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.mu_mode, MuMode::Fixed(0.3));
        assert_eq!(c.distance_cap, DistanceCap::Fixed(7.0));
        assert_eq!(c.eem_config().lambda, 0.5);
        assert_eq!(c.dcm_lambda(), 0.01);
        let err = c.merge_kv("d1 = 4\nbroken line\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2"));
    }

    #[test]
    fn self_transfer_keeps_everything() {
        let g = random_graph(40, 3, 0.1, 2);
        let (out, report) = acret_transfer(&g, &g, &TransferConfig::default()).unwrap();
        assert_eq!(out.ids(), g.ids());
        assert!(g.edge_id_pairs().is_subset(&out.edge_id_pairs()));
        assert!(report.selected.is_empty());
        assert_eq!(report.mu_used, 0.0);
        assert_eq!(report.consistency_level, 0.0);
    }

    #[test]
    fn empty_selection_smooths_observed_target() {
        let gs = random_graph(50, 3, 0.1, 3);
        let hat = gs.induced_subgraph(gs.ids()[..20].iter()).unwrap();
        let config = TransferConfig { z_entity: 1e9, ..TransferConfig::default() };
        let (out, report) = acret_transfer(&gs, &hat, &config).unwrap();
        assert!(report.selected.is_empty());
        assert_eq!(report.mu_used, 0.0);
        assert_eq!(out.ids(), hat.ids());
        assert!(hat.edge_id_pairs().is_subset(&out.edge_id_pairs()));
    }

    #[test]
    fn no_overlap_is_labeled() {
        let gs = random_graph(20, 2, 0.2, 4);
        let other = graph(&[("elsewhere", "T0")], &[]);
        let err = acret_transfer(&gs, &other, &TransferConfig::default()).unwrap_err();
        assert!(err.to_string().contains("no overlap between domains"), "{err}");
        assert!(err.to_string().starts_with("entity selection"), "{err}");
    }

    #[test]
    fn type_conflict_is_rejected() {
        let gs = graph(&[("a", "T"), ("b", "T")], &[("a", "b")]);
        let hat = graph(&[("a", "U")], &[]);
        let err = acret_transfer(&gs, &hat, &TransferConfig::default()).unwrap_err();
        assert!(err.to_string().starts_with("input"), "{err}");
    }

    #[test]
    fn stage_contract_and_determinism() {
        let gs = random_graph(60, 3, 0.08, 5);
        let hat = gs.induced_subgraph(gs.ids()[10..40].iter()).unwrap();
        let config = TransferConfig { seed: 17, ..TransferConfig::default() };
        let (a, ra) = acret_transfer(&gs, &hat, &config).unwrap();
        let (b, rb) = acret_transfer(&gs, &hat, &config).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(ra.to_json().unwrap(), rb.to_json().unwrap());
        let mut want: Vec<&str> = hat.ids().iter().map(|i| i.as_str()).collect();
        want.extend(ra.selected.iter().map(|s| s.id.as_str()));
        want.sort_unstable();
        assert_eq!(a.ids().iter().map(|i| i.as_str()).collect::<Vec<_>>(), want);
        assert!(hat.edge_id_pairs().is_subset(&a.edge_id_pairs()));
        assert!((0.0..1.0).contains(&ra.mu_used));
        assert_eq!(ra.mu_used == 0.0, ra.selected.is_empty());
        let json: serde_json::Value = serde_json::from_str(&ra.to_json().unwrap()).unwrap();
        assert_eq!(json["schema"], "report_v1");
        assert!(json.get("timings").is_none());
    }

    #[test]
    fn timings_are_opt_in() {
        let g = random_graph(20, 2, 0.2, 6);
        let config = TransferConfig { record_timings: true, ..TransferConfig::default() };
        let (_, report) = acret_transfer(&g, &g, &config).unwrap();
        assert_eq!(report.timings.unwrap().len(), 2);
    }
}
