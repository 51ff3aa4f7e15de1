//! Structural diversity and Watts-Strogatz properties against simple oracles.

use causal_motifs::graph::Graph;
use causal_motifs::motifs::{census, MissingPolicy, MotifCatalog, MotifKind, Retention};
use causal_motifs::simlab::{structural_diversity, watts_strogatz, WsConfig};
use proptest::prelude::*;

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = x;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

/// Components of the subgraph induced by `subset`, by union-find over all
/// graph edges with both endpoints in the subset.
fn components_union_find(g: &Graph, subset: &[usize]) -> usize {
    let mut parent: Vec<usize> = (0..subset.len()).collect();
    let pos = |v: usize| subset.iter().position(|&s| s == v);
    for (u, v) in g.edges() {
        if let (Some(a), Some(b)) = (pos(u), pos(v)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    (0..subset.len()).filter(|&i| find(&mut parent, i) == i).count()
}

fn graph_from_bits(n: usize, bits: &[bool]) -> Graph {
    let mut edges = Vec::new();
    let mut k = 0;
    for u in 0..n {
        for v in u + 1..n {
            if bits[k] {
                edges.push((u, v));
            }
            k += 1;
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn structural_diversity_matches_union_find(
        n in 2usize..16,
        bits in proptest::collection::vec(any::<bool>(), 120),
        mask in proptest::collection::vec(any::<bool>(), 16),
        ego_pick in 0usize..16,
    ) {
        let g = graph_from_bits(n, &bits);
        let ego = ego_pick % n;
        let nbrs: Vec<u32> = g.neighbors(ego).to_vec();
        let subset: Vec<u32> = nbrs.iter().zip(&mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
        let want = components_union_find(&g, &subset.iter().map(|&v| v as usize).collect::<Vec<_>>());
        prop_assert_eq!(structural_diversity(&g, ego, &subset).unwrap(), want);
        let all = components_union_find(&g, &nbrs.iter().map(|&v| v as usize).collect::<Vec<_>>());
        prop_assert_eq!(structural_diversity(&g, ego, &nbrs).unwrap(), all);
    }
}

#[test]
fn structural_diversity_rejects_non_neighbors() {
    let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
    assert!(structural_diversity(&g, 0, &[2]).is_err());
}

#[test]
fn watts_strogatz_keeps_edge_count_and_simplicity() {
    for (beta, seed) in [(0.0, 1), (0.5, 2), (1.0, 3)] {
        let g = watts_strogatz(&WsConfig { n: 2000, k: 10, beta, seed }).unwrap();
        assert_eq!(g.n_edges(), 2000 * 10 / 2);
        for (u, v) in g.edges() {
            assert_ne!(u, v);
        }
        if beta == 0.0 {
            assert!((0..2000).all(|i| g.degree(i) == 10));
        }
    }
}

#[test]
fn closed_triad_undefined_fraction_matches_direct_scan() {
    let g = watts_strogatz(&WsConfig { n: 5000, k: 10, beta: 0.5, seed: 9 }).unwrap();
    let catalog = MotifCatalog::full();
    let counts = census(&g, &catalog);
    let retention = Retention::decide(&counts, &catalog, MissingPolicy::DropNodes).unwrap();
    let active: Vec<usize> = (0..g.n_nodes()).filter(|&i| g.degree(i) > 0).collect();
    let without_triangle = active
        .iter()
        .filter(|&&i| {
            let nb = g.neighbors(i);
            !nb.iter().enumerate().any(|(a, &u)| nb[a + 1..].iter().any(|&v| g.has_edge(u as usize, v as usize)))
        })
        .count();
    let want = without_triangle as f64 / active.len() as f64;
    let got = retention
        .undefined_fraction
        .iter()
        .find(|(k, _)| *k == MotifKind::ClosedTriad)
        .unwrap()
        .1;
    assert_eq!(got, want);
    // At k = 10, β = 0.5 a sizeable share of egos has no closed triad.
    assert!(want > 0.05 && want < 0.2, "{want}");
    assert_eq!(retention.nodes.len() + retention.dropped_nodes.len(), g.n_nodes());
}
