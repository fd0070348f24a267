//! N×N edge targets over node slots, with the loss mask.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::KnowledgeGraph;
use crate::error::{Error, Result};

/// Per-cell edge targets over `n` node slots. `None` entries are `<no_edge>`.
///
/// The mask never includes the diagonal or a cell touching an inactive slot,
/// and always includes every real edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyTargets {
    n: usize,
    entries: Vec<Option<String>>,
    mask: Vec<bool>,
    active: Vec<bool>,
}

impl AdjacencyTargets {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> Option<&str> {
        self.entries[i * self.n + j].as_deref()
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    pub fn is_active(&self, slot: usize) -> bool {
        self.active[slot]
    }

    pub fn active_slots(&self) -> &[bool] {
        &self.active
    }

    /// Mask-true cells in row-major order.
    pub fn masked_cells(&self) -> Vec<(usize, usize)> {
        (0..self.n * self.n)
            .filter(|&k| self.mask[k])
            .map(|k| (k / self.n, k % self.n))
            .collect()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn real_edge_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    /// Mask-true `<no_edge>` cells.
    pub fn masked_no_edge_count(&self) -> usize {
        self.masked_count() - self.real_edge_count()
    }
}

/// Fills the adjacency targets for `g`, placing graph node `k` in slot
/// `node_order[k]`. Slots nobody maps to are `<no_node>` and stay out of the mask.
pub fn build_adjacency(g: &KnowledgeGraph, n_max: usize, node_order: &[usize]) -> Result<AdjacencyTargets> {
    let count = g.nodes().len();
    if count > n_max {
        return Err(Error::Capacity {
            what: "nodes",
            got: count,
            max: n_max,
        });
    }
    if node_order.len() != count {
        return Err(Error::invalid(alloc::format!(
            "node_order has {} entries for {} nodes",
            node_order.len(),
            count
        )));
    }
    let mut active = vec![false; n_max];
    for &slot in node_order {
        if slot >= n_max {
            return Err(Error::invalid(alloc::format!("slot {slot} out of range for {n_max} slots")));
        }
        if active[slot] {
            return Err(Error::invalid(alloc::format!("slot {slot} assigned twice")));
        }
        active[slot] = true;
    }
    let mut entries = vec![None; n_max * n_max];
    for e in g.edges() {
        entries[node_order[e.src] * n_max + node_order[e.dst]] = Some(e.label.clone());
    }
    let mut mask = vec![false; n_max * n_max];
    for i in 0..n_max {
        for j in 0..n_max {
            mask[i * n_max + j] = i != j && active[i] && active[j];
        }
    }
    Ok(AdjacencyTargets {
        n: n_max,
        entries,
        mask,
        active,
    })
}

/// Keeps every real edge in the mask and a uniform sample of at most
/// `k_noedge` of the currently masked `<no_edge>` cells.
pub fn sparsify_adjacency<R: Rng + ?Sized>(a: &AdjacencyTargets, k_noedge: usize, rng: &mut R) -> AdjacencyTargets {
    let candidates: Vec<usize> = (0..a.n * a.n)
        .filter(|&k| a.mask[k] && a.entries[k].is_none())
        .collect();
    let mut out = a.clone();
    if k_noedge >= candidates.len() {
        return out;
    }
    for &k in &candidates {
        out.mask[k] = false;
    }
    for pick in rand::seq::index::sample(rng, candidates.len(), k_noedge).into_iter() {
        out.mask[candidates[pick]] = true;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, KnowledgeGraph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> KnowledgeGraph {
        KnowledgeGraph::new(
            (0..n).map(|i| alloc::format!("n{i}")).collect(),
            edges
                .iter()
                .map(|&(s, d)| Edge { src: s, label: "rel".into(), dst: d })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_nodes_one_edge() {
        let a = build_adjacency(&graph(2, &[(0, 1)]), 2, &[0, 1]).unwrap();
        assert_eq!(a.entry(0, 1), Some("rel"));
        assert_eq!(a.entry(1, 0), None);
        assert!(!a.is_masked(0, 0) && !a.is_masked(1, 1));
        assert!(a.is_masked(0, 1) && a.is_masked(1, 0));
    }

    #[test]
    fn no_edges_all_no_edge() {
        let a = build_adjacency(&graph(3, &[]), 4, &[0, 1, 2]).unwrap();
        assert!(a.masked_cells().iter().all(|&(i, j)| a.entry(i, j).is_none()));
        assert_eq!(a.masked_count(), 6);
    }

    #[test]
    fn inactive_slots_excluded() {
        let a = build_adjacency(&graph(3, &[(0, 2)]), 8, &[0, 1, 2]).unwrap();
        assert_eq!(a.masked_count(), 3 * 2);
        assert!(a.masked_cells().iter().all(|&(i, j)| i < 3 && j < 3 && i != j));
    }

    #[test]
    fn node_order_is_respected() {
        let a = build_adjacency(&graph(2, &[(0, 1)]), 4, &[3, 1]).unwrap();
        assert_eq!(a.entry(3, 1), Some("rel"));
        assert!(a.is_active(3) && a.is_active(1) && !a.is_active(0));
    }

    #[test]
    fn bad_node_order() {
        assert!(build_adjacency(&graph(2, &[]), 2, &[0, 2]).is_err());
        assert!(build_adjacency(&graph(2, &[]), 2, &[1, 1]).is_err());
        assert!(build_adjacency(&graph(2, &[]), 2, &[0]).is_err());
        assert!(matches!(build_adjacency(&graph(3, &[]), 2, &[0, 1, 2]), Err(Error::Capacity { .. })));
    }

    #[test]
    fn sparsify_counts() {
        // 5 active nodes = 20 masked cells; 3 real edges leaves 17 no_edge cells
        let a = build_adjacency(&graph(5, &[(0, 1), (1, 2), (3, 4)]), 8, &[0, 1, 2, 3, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sparsify_adjacency(&a, 5, &mut rng);
        assert_eq!(s.masked_count(), 3 + 5);
        let s0 = sparsify_adjacency(&a, 0, &mut rng);
        assert_eq!(s0.masked_count(), 3);
        assert!(s0.masked_cells().iter().all(|&(i, j)| s0.entry(i, j).is_some()));
        let all = sparsify_adjacency(&a, 17, &mut rng);
        assert_eq!(all, a);
    }

    #[test]
    fn sparsify_deterministic_per_seed() {
        let a = build_adjacency(&graph(6, &[(0, 1)]), 8, &[0, 1, 2, 3, 4, 5]).unwrap();
        let s1 = sparsify_adjacency(&a, 4, &mut ChaCha8Rng::seed_from_u64(9));
        let s2 = sparsify_adjacency(&a, 4, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(s1, s2);
    }

    proptest::proptest! {
        #[test]
        fn mask_invariants(n in 2usize..=8, seed in 0u64..1000, k in 0usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let edges: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && rng.gen_bool(0.2))
                .collect();
            let g = graph(n, &edges);
            let mut order: Vec<usize> = (0..8).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            order.truncate(n);
            let a = build_adjacency(&g, 8, &order).unwrap();
            for (i, j) in a.masked_cells() {
                proptest::prop_assert!(i != j && a.is_active(i) && a.is_active(j));
            }
            let s = sparsify_adjacency(&a, k, &mut rng);
            let real = |x: &AdjacencyTargets| -> Vec<(usize, usize)> {
                x.masked_cells().into_iter().filter(|&(i, j)| x.entry(i, j).is_some()).collect()
            };
            proptest::prop_assert_eq!(real(&s), real(&a));
            proptest::prop_assert_eq!(real(&a).len(), edges.len());
            proptest::prop_assert_eq!(s.masked_count(), edges.len() + k.min(a.masked_no_edge_count()));
        }
    }
}
