use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{EntityId, EntityType, HeteroGraph};
use crate::error::{Error, Result};

/// Dense symmetric adjacency matrix over an explicit, ordered id list.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyView {
    ids: Vec<EntityId>,
    matrix: DMatrix<f64>,
    binary: bool,
}

impl AdjacencyView {
    pub(crate) fn of_graph(g: &HeteroGraph, ids: &[EntityId]) -> Self {
        let n = ids.len();
        let local: Vec<Option<usize>> = ids.iter().map(|id| g.index_of(id.as_str())).collect();
        // graph index -> view index
        let mut to_view = vec![None; g.len()];
        for (v, gi) in local.iter().enumerate() {
            if let Some(gi) = gi {
                to_view[*gi] = Some(v);
            }
        }
        let mut matrix = DMatrix::zeros(n, n);
        for e in g.edges() {
            if let (Some(i), Some(j)) = (to_view[e.a], to_view[e.b]) {
                matrix[(i, j)] = e.weight;
                matrix[(j, i)] = e.weight;
            }
        }
        Self {
            ids: ids.to_vec(),
            matrix,
            binary: false,
        }
    }

    /// Wraps a raw matrix. It must be square, symmetric, non-negative, with a
    /// zero diagonal, and match `ids` in size.
    pub fn from_matrix(ids: Vec<EntityId>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = ids.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Dimension(format!(
                "{}x{} matrix for {n} ids",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        for i in 0..n {
            if matrix[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = matrix[(i, j)];
                if !v.is_finite() || v < 0.0 || v != matrix[(j, i)] {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i},{j}) is not symmetric and non-negative"
                    )));
                }
            }
        }
        let binary = matrix.iter().all(|&v| v == 0.0 || v == 1.0);
        Ok(Self {
            ids,
            matrix,
            binary,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[EntityId] {
        &self.ids
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    /// Clamps every positive weight to 1.
    pub fn binarize(mut self) -> Self {
        self.matrix.apply(|v| *v = if *v > 0.0 { 1.0 } else { 0.0 });
        self.binary = true;
        self
    }
}

/// Aligns two graphs on the sorted union of their entity ids.
pub fn align_union_entities(
    a: &HeteroGraph,
    b: &HeteroGraph,
) -> Result<(AdjacencyView, AdjacencyView)> {
    let mut union: BTreeMap<&EntityId, &EntityType> = BTreeMap::new();
    for g in [a, b] {
        for (id, ty) in g.ids().iter().zip(g.types()) {
            if let Some(prev) = union.insert(id, ty) {
                if prev != ty {
                    return Err(Error::TypeConflict {
                        id: id.to_string(),
                        first: prev.to_string(),
                        second: ty.to_string(),
                    });
                }
            }
        }
    }
    let ids: Vec<EntityId> = union.into_keys().cloned().collect();
    Ok((a.adjacency_over(&ids), b.adjacency_over(&ids)))
}

/// Structural discrepancy `||A - B||_F^2 / (n (n - 1))` between two aligned
/// adjacency views. On binary views this is the fraction of ordered entity
/// pairs whose edge status differs.
pub fn dynamic_factor(a: &AdjacencyView, b: &AdjacencyView) -> Result<f64> {
    if a.ids != b.ids {
        return Err(Error::IndexMismatch);
    }
    let n = a.n();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "dynamic factor needs at least 2 entities, got {n}"
        )));
    }
    let sq: f64 = a
        .matrix
        .iter()
        .zip(b.matrix.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sq / (n * (n - 1)) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::test_support::*;
    use proptest::prelude::*;
    use rand::seq::index::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn union_alignment_of_two_paths() {
        let a = graph(&[("x", "T"), ("y", "T")], &[("x", "y")]);
        let b = graph(&[("y", "T"), ("z", "T")], &[("y", "z")]);
        let (va, vb) = align_union_entities(&a, &b).unwrap();
        let ids: Vec<_> = va.ids().iter().map(|i| i.as_str()).collect();
        assert_eq!(ids, ["x", "y", "z"]);
        assert_eq!(va.ids(), vb.ids());
        assert_eq!(va.matrix().iter().filter(|&&v| v != 0.0).count(), 2);
        assert_eq!(va.matrix()[(0, 1)], 1.0);
        assert_eq!(vb.matrix()[(1, 2)], 1.0);
    }

    #[test]
    fn union_alignment_of_identical_graphs() {
        let g = random_graph(15, 2, 0.3, 1);
        let (va, vb) = align_union_entities(&g, &g).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn union_alignment_type_conflict() {
        let a = graph(&[("x", "T")], &[]);
        let b = graph(&[("x", "U")], &[]);
        assert!(matches!(align_union_entities(&a, &b), Err(Error::TypeConflict { .. })));
    }

    #[test]
    fn union_alignment_matches_membership_oracle() {
        let a = random_graph(20, 2, 0.3, 7);
        let b_full = random_graph(30, 2, 0.2, 8);
        // Re-type b's entities to agree with a where ids overlap.
        let mut builder = HeteroGraph::builder();
        for (i, id) in b_full.ids().iter().enumerate().skip(10) {
            let t = a.type_of(id.as_str()).cloned().unwrap_or_else(|| b_full.entity_type(i).clone());
            builder.add_entity(id.clone(), t).unwrap();
        }
        for e in b_full.edges().filter(|e| e.a >= 10 && e.b >= 10) {
            builder
                .add_edge(b_full.id(e.a).clone(), b_full.id(e.b).clone(), e.weight)
                .unwrap();
        }
        let b = builder.build().unwrap();
        let (va, vb) = align_union_entities(&a, &b).unwrap();
        for (i, x) in va.ids().iter().enumerate() {
            for (j, y) in va.ids().iter().enumerate() {
                let wa = a
                    .index_of(x.as_str())
                    .zip(a.index_of(y.as_str()))
                    .and_then(|(p, q)| a.weight(p, q))
                    .unwrap_or(0.0);
                let wb = b
                    .index_of(x.as_str())
                    .zip(b.index_of(y.as_str()))
                    .and_then(|(p, q)| b.weight(p, q))
                    .unwrap_or(0.0);
                assert_eq!(va.matrix()[(i, j)], wa);
                assert_eq!(vb.matrix()[(i, j)], wb);
            }
        }
    }

    #[test]
    fn dynamic_factor_of_identical_is_zero() {
        let g = random_graph(12, 2, 0.4, 2);
        let v = g.adjacency().binarize();
        assert_eq!(dynamic_factor(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn dynamic_factor_triangle_vs_empty_is_one() {
        let full = graph(
            &[("a", "T"), ("b", "T"), ("c", "T")],
            &[("a", "b"), ("b", "c"), ("a", "c")],
        );
        let empty = graph(&[("a", "T"), ("b", "T"), ("c", "T")], &[]);
        let (x, y) = align_union_entities(&full, &empty).unwrap();
        assert_eq!(dynamic_factor(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn dynamic_factor_errors() {
        let a = graph(&[("a", "T"), ("b", "T")], &[]);
        let b = graph(&[("a", "T"), ("c", "T")], &[]);
        assert!(matches!(
            dynamic_factor(&a.adjacency(), &b.adjacency()),
            Err(Error::IndexMismatch)
        ));
        let one = graph(&[("a", "T")], &[]);
        assert!(dynamic_factor(&one.adjacency(), &one.adjacency()).is_err());
    }

    fn flip(view: &AdjacencyView, k: usize, seed: u64) -> AdjacencyView {
        let n = view.n();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = view.matrix().clone();
        for idx in sample(&mut rng, pairs.len(), k) {
            let (i, j) = pairs[idx];
            let v = 1.0 - m[(i, j)];
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        AdjacencyView::from_matrix(view.ids().to_vec(), m).unwrap()
    }

    proptest! {
        #[test]
        fn dynamic_factor_flip_count_formula(seed in 0u64..1000, n in 2usize..25, frac in 0.0f64..1.0) {
            let g = random_graph(n, 2, 0.3, seed);
            let a = g.adjacency().binarize();
            let k = ((n * (n - 1) / 2) as f64 * frac).floor() as usize;
            let b = flip(&a, k, seed + 1);
            let f = dynamic_factor(&a, &b).unwrap();
            prop_assert_eq!(f, 2.0 * k as f64 / (n * (n - 1)) as f64);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert_eq!(f, dynamic_factor(&b, &a).unwrap());
        }
    }
}
