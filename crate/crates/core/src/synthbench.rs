//! Controlled synthetic instances: a random source graph, a perturbed
//! ground-truth target, and a partially observed target.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{dynamic_factor, write_graph, EntityId, EntityType, HeteroGraph};

/// Expected degree of the default source graph.
const DEFAULT_MEAN_DEGREE: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_source: usize,
    pub n_target: usize,
    /// Requested pair-normalized discrepancy between the trimmed source and
    /// the true target, in `[0, 1)`.
    pub dynamic_factor: f64,
    /// Fraction of true-target entities (and of their edges) observed, in
    /// `(0, 1]`.
    pub maturity: f64,
    pub n_types: usize,
    /// Edge probability of the source graph; defaults to a mean degree of 8.
    pub edge_prob: Option<f64>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_source: 1200,
            n_target: 600,
            dynamic_factor: 0.2,
            maturity: 0.5,
            n_types: 3,
            edge_prob: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_target == 0 || self.n_target > self.n_source {
            return bad(format!(
                "need 0 < n_target <= n_source, got {} and {}",
                self.n_target, self.n_source
            ));
        }
        if !(0.0..1.0).contains(&self.dynamic_factor) {
            return bad(format!("dynamic factor must lie in [0,1), got {}", self.dynamic_factor));
        }
        if !(self.maturity > 0.0 && self.maturity <= 1.0) {
            return bad(format!("maturity must lie in (0,1], got {}", self.maturity));
        }
        if self.n_types == 0 {
            return bad("n_types must be positive".into());
        }
        let p = self.effective_edge_prob();
        if !(0.0..=1.0).contains(&p) {
            return bad(format!("edge probability must lie in [0,1], got {p}"));
        }
        Ok(())
    }

    pub fn effective_edge_prob(&self) -> f64 {
        self.edge_prob.unwrap_or_else(|| {
            if self.n_source > 1 {
                (DEFAULT_MEAN_DEGREE / (self.n_source - 1) as f64).min(1.0)
            } else {
                0.0
            }
        })
    }
}

/// Requested and measured properties of a generated instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub spec: SynthSpec,
    pub edge_prob: f64,
    pub edge_flips: usize,
    pub measured_dynamic_factor: f64,
    pub measured_entity_maturity: f64,
    pub measured_edge_maturity: f64,
    pub source_entities: usize,
    pub source_edges: usize,
    pub truth_entities: usize,
    pub truth_edges: usize,
    pub partial_entities: usize,
    pub partial_edges: usize,
}

#[derive(Clone, Debug)]
pub struct SynthInstance {
    pub source: HeteroGraph,
    pub truth: HeteroGraph,
    pub partial: HeteroGraph,
    pub meta: SynthMeta,
}

fn entity_ids(n: usize) -> Vec<EntityId> {
    let width = n.saturating_sub(1).to_string().len().max(4);
    (0..n)
        .map(|i| EntityId::new(format!("v{i:0width$}")).expect("generated id is valid"))
        .collect()
}

/// Maps a linear index over the strict upper triangle of an `n × n`
/// matrix (row-major) to its pair.
fn pair_of(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
        i += 1;
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_source;
    let p = spec.effective_edge_prob();

    let ids = entity_ids(n);
    let types: Vec<EntityType> = (0..n)
        .map(|_| EntityType::new(format!("t{}", rng.gen_range(0..spec.n_types))).expect("valid type"))
        .collect();
    let mut source_edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p {
                source_edges.push((i, j, 1.0));
            }
        }
    }
    let source = HeteroGraph::from_sorted_parts(ids.clone(), types.clone(), source_edges);

    // Truth: drop entities, then toggle pairs.
    let mut keep: Vec<usize> = {
        let mut dropped = vec![false; n];
        for i in sample(&mut rng, n, n - spec.n_target) {
            dropped[i] = true;
        }
        (0..n).filter(|&i| !dropped[i]).collect()
    };
    keep.sort_unstable();
    let trimmed = source.induced_subgraph(keep.iter().map(|&i| &ids[i]))?;
    let nt = trimmed.len();
    let pairs = nt * nt.saturating_sub(1) / 2;
    let flips = (spec.dynamic_factor * pairs as f64).round() as usize;
    if flips > pairs || (spec.dynamic_factor > 0.0 && pairs == 0) {
        return Err(Error::Unrealizable {
            requested: spec.dynamic_factor,
            reason: format!("{nt} target entities have only {pairs} pairs"),
        });
    }
    let mut toggled: Vec<(usize, usize)> = sample(&mut rng, pairs, flips)
        .into_iter()
        .map(|k| pair_of(k, nt))
        .collect();
    toggled.sort_unstable();
    let mut truth_edges: Vec<(usize, usize, f64)> = Vec::new();
    {
        let mut existing: Vec<(usize, usize)> = trimmed.edges().map(|e| (e.a, e.b)).collect();
        existing.sort_unstable();
        // Symmetric difference of the two sorted pair lists.
        let (mut x, mut y) = (0, 0);
        while x < existing.len() || y < toggled.len() {
            match (existing.get(x), toggled.get(y)) {
                (Some(a), Some(b)) if a == b => {
                    x += 1;
                    y += 1;
                }
                (Some(a), Some(b)) if a < b => {
                    truth_edges.push((a.0, a.1, 1.0));
                    x += 1;
                }
                (Some(_), Some(b)) | (None, Some(b)) => {
                    truth_edges.push((b.0, b.1, 1.0));
                    y += 1;
                }
                (Some(a), None) => {
                    truth_edges.push((a.0, a.1, 1.0));
                    x += 1;
                }
                (None, None) => unreachable!(),
            }
        }
    }
    let truth = HeteroGraph::from_sorted_parts(
        trimmed.ids().to_vec(),
        trimmed.types().to_vec(),
        truth_edges,
    );

    // Partial: observed entities, then a fraction of their edges.
    let m_entities = ((spec.maturity * nt as f64).round() as usize).clamp(1, nt);
    let mut observed: Vec<usize> = sample(&mut rng, nt, m_entities).into_vec();
    observed.sort_unstable();
    let induced = truth.induced_subgraph(observed.iter().map(|&i| truth.id(i)))?;
    let all_edges: Vec<(usize, usize, f64)> = induced.edges().map(|e| (e.a, e.b, e.weight)).collect();
    let m_edges = (spec.maturity * all_edges.len() as f64).round() as usize;
    let mut kept: Vec<usize> = sample(&mut rng, all_edges.len(), m_edges).into_vec();
    kept.sort_unstable();
    let partial = HeteroGraph::from_sorted_parts(
        induced.ids().to_vec(),
        induced.types().to_vec(),
        kept.into_iter().map(|k| all_edges[k]).collect::<Vec<_>>(),
    );

    let measured_dynamic_factor = if nt >= 2 {
        dynamic_factor(&trimmed.adjacency().binarize(), &truth.adjacency().binarize())?
    } else {
        0.0
    };
    let meta = SynthMeta {
        spec: spec.clone(),
        edge_prob: p,
        edge_flips: flips,
        measured_dynamic_factor,
        measured_entity_maturity: partial.len() as f64 / nt as f64,
        measured_edge_maturity: if induced.edge_count() == 0 {
            1.0
        } else {
            partial.edge_count() as f64 / induced.edge_count() as f64
        },
        source_entities: source.len(),
        source_edges: source.edge_count(),
        truth_entities: truth.len(),
        truth_edges: truth.edge_count(),
        partial_entities: partial.len(),
        partial_edges: partial.edge_count(),
    };
    Ok(SynthInstance { source, truth, partial, meta })
}

pub const SOURCE_FILE: &str = "source.graph";
pub const TRUTH_FILE: &str = "target_truth.graph";
pub const PARTIAL_FILE: &str = "target_partial.graph";
pub const META_FILE: &str = "meta.json";

/// Writes the three graphs and `meta.json` into `dir`, creating it.
pub fn write_instance(instance: &SynthInstance, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_graph(&instance.source, dir.join(SOURCE_FILE))?;
    write_graph(&instance.truth, dir.join(TRUTH_FILE))?;
    write_graph(&instance.partial, dir.join(PARTIAL_FILE))?;
    let meta = serde_json::to_string_pretty(&instance.meta)? + "\n";
    let path = dir.join(META_FILE);
    fs::write(&path, meta).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn spec(ns: usize, nt: usize, f: f64, m: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            n_source: ns,
            n_target: nt,
            dynamic_factor: f,
            maturity: m,
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn pair_decoding_is_row_major() {
        let n = 6;
        let mut expected = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                expected.push((i, j));
            }
        }
        let got: Vec<_> = (0..expected.len()).map(|k| pair_of(k, n)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn no_perturbation_is_trimmed_source() {
        let inst = generate(&spec(80, 50, 0.0, 1.0, 3)).unwrap();
        let trimmed = inst.source.induced_subgraph(inst.truth.ids().iter()).unwrap();
        assert_eq!(inst.truth, trimmed);
        assert_eq!(inst.partial, inst.truth);
        assert_eq!(inst.meta.measured_dynamic_factor, 0.0);
    }

    #[test]
    fn measured_factor_is_within_one_flip() {
        for (f, seed) in [(0.1, 1), (0.2, 2), (0.37, 3), (0.5, 4)] {
            let inst = generate(&spec(120, 70, f, 0.5, seed)).unwrap();
            let trimmed = inst.source.induced_subgraph(inst.truth.ids().iter()).unwrap();
            let measured = dynamic_factor(
                &trimmed.adjacency().binarize(),
                &inst.truth.adjacency().binarize(),
            )
            .unwrap();
            let quantum = 2.0 / (70.0 * 69.0);
            assert!((measured - f).abs() <= quantum, "{f}: {measured}");
            assert_eq!(measured, inst.meta.measured_dynamic_factor);
        }
    }

    #[test]
    fn benchmark_scale_instance() {
        let inst = generate(&SynthSpec { seed: 1, ..SynthSpec::default() }).unwrap();
        assert_eq!(inst.source.len(), 1200);
        assert_eq!(inst.truth.len(), 600);
        assert_eq!(inst.partial.len(), 300);
        let mean_degree = 2.0 * inst.source.edge_count() as f64 / 1200.0;
        assert!((mean_degree - 8.0).abs() < 0.5, "{mean_degree}");
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&spec(10, 20, 0.1, 0.5, 0)).is_err());
        assert!(generate(&spec(10, 0, 0.1, 0.5, 0)).is_err());
        assert!(generate(&spec(10, 5, 1.0, 0.5, 0)).is_err());
        assert!(generate(&spec(10, 5, 0.1, 0.0, 0)).is_err());
        assert!(matches!(
            generate(&spec(10, 1, 0.5, 1.0, 0)),
            Err(Error::Unrealizable { .. })
        ));
    }

    #[test]
    fn distinct_seeds_differ() {
        let a = generate(&spec(60, 40, 0.1, 0.5, 1)).unwrap();
        let b = generate(&spec(60, 40, 0.1, 0.5, 2)).unwrap();
        assert_ne!(a.source.edge_id_pairs(), b.source.edge_id_pairs());
    }

    #[test]
    fn writes_instance_files() {
        let dir = tempfile::tempdir().unwrap();
        let inst = generate(&spec(30, 20, 0.1, 0.5, 7)).unwrap();
        write_instance(&inst, dir.path().join("out")).unwrap();
        for f in [SOURCE_FILE, TRUTH_FILE, PARTIAL_FILE, META_FILE] {
            assert!(dir.path().join("out").join(f).is_file(), "{f}");
        }
        let meta: SynthMeta =
            serde_json::from_str(&fs::read_to_string(dir.path().join("out").join(META_FILE)).unwrap())
                .unwrap();
        assert_eq!(meta, inst.meta);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn containment_and_maturity(seed in 0u64..10_000, nt in 2usize..60, m in 0.05f64..=1.0, f in 0.0f64..0.5) {
            let inst = generate(&spec(60, nt, f, m, seed)).unwrap();
            let ids = |g: &HeteroGraph| g.ids().iter().cloned().collect::<BTreeSet<_>>();
            prop_assert!(ids(&inst.partial).is_subset(&ids(&inst.truth)));
            prop_assert!(ids(&inst.truth).is_subset(&ids(&inst.source)));
            prop_assert!(inst.partial.edge_id_pairs().is_subset(&inst.truth.edge_id_pairs()));
            let want = m * inst.truth.len() as f64;
            prop_assert!((inst.partial.len() as f64 - want).abs() <= 1.0);
            let again = generate(&spec(60, nt, f, m, seed)).unwrap();
            prop_assert_eq!(again.source.to_text(), inst.source.to_text());
            prop_assert_eq!(again.partial.to_text(), inst.partial.to_text());
        }
    }
}
