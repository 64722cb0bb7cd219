use std::collections::{BTreeSet, VecDeque};

use kgraph_core::graph::RELATION_SEPARATOR;
use kgraph_core::stats::{betweenness_centrality, modularity};
use kgraph_core::{
    build_from_triples, compose, connected_components, giant_component, merge_nodes, prune_small_components,
    serialize_path, shortest_path, KnowledgeGraph, MergeGroup, NodeId, Triple,
};
use proptest::prelude::*;

fn triples_strategy(labels: usize, max_len: usize) -> impl Strategy<Value = Vec<Triple>> {
    prop::collection::vec((0..labels, 0..3usize, 0..labels), 0..max_len).prop_map(|raw| {
        raw.into_iter()
            .map(|(a, r, b)| Triple::new(&format!("n{a}"), ["is", "has", "makes"][r], &format!("n{b}")))
            .collect()
    })
}

fn graph_strategy(labels: usize, max_len: usize) -> impl Strategy<Value = KnowledgeGraph> {
    triples_strategy(labels, max_len).prop_map(|t| build_from_triples(&t).graph)
}

fn ids(g: &KnowledgeGraph) -> Vec<NodeId> {
    g.node_ids().collect()
}

/// Dense adjacency matrix in node-id order.
fn matrix(g: &KnowledgeGraph) -> Vec<Vec<bool>> {
    let ids = ids(g);
    ids.iter().map(|&a| ids.iter().map(|&b| g.has_edge(a, b)).collect()).collect()
}

fn bfs_distances(adj: &[Vec<bool>], s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(v) = q.pop_front() {
        for w in 0..adj.len() {
            if adj[v][w] && dist[w].is_none() {
                dist[w] = Some(dist[v].unwrap() + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

/// Every shortest s-t path, by depth-first extension along distance layers.
fn all_shortest_paths(adj: &[Vec<bool>], s: usize, t: usize) -> Vec<Vec<usize>> {
    let dist = bfs_distances(adj, s);
    let Some(target) = dist[t] else { return Vec::new() };
    let mut out = Vec::new();
    let mut stack = vec![vec![s]];
    while let Some(path) = stack.pop() {
        let v = *path.last().unwrap();
        if v == t {
            out.push(path);
            continue;
        }
        if path.len() > target {
            continue;
        }
        for w in 0..adj.len() {
            if adj[v][w] && dist[w] == Some(path.len()) {
                let mut next = path.clone();
                next.push(w);
                stack.push(next);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn build_keeps_invariants(triples in triples_strategy(12, 60)) {
        let out = build_from_triples(&triples);
        let g = &out.graph;
        prop_assert_eq!(g.check_invariants(), Ok(()));
        let degree_sum: usize = g.node_ids().map(|n| g.degree(n)).sum();
        prop_assert_eq!(degree_sum, 2 * g.edge_count());
        prop_assert_eq!(g.total_multiplicity() as usize, triples.len() - out.rejected.len());
        prop_assert_eq!(g.triple_count() as usize, triples.len() - out.rejected.len());
        let self_loops = triples.iter().filter(|t| t.subject == t.object).count();
        prop_assert_eq!(out.rejected.len(), self_loops);
        for e in g.edges() {
            let parts: Vec<&str> = e.relation.split(RELATION_SEPARATOR).collect();
            let distinct: BTreeSet<&str> = parts.iter().copied().collect();
            prop_assert_eq!(parts.len(), distinct.len());
            prop_assert!(e.multiplicity as usize >= parts.len());
        }
    }

    #[test]
    fn compose_is_a_label_union(a in graph_strategy(10, 30), b in graph_strategy(14, 30)) {
        let c = compose(&a, &b);
        prop_assert_eq!(c.check_invariants(), Ok(()));
        let labels = |g: &KnowledgeGraph| g.nodes().map(|n| n.label.clone()).collect::<BTreeSet<_>>();
        let union: BTreeSet<String> = labels(&a).union(&labels(&b)).cloned().collect();
        prop_assert_eq!(labels(&c), union);
        prop_assert_eq!(c.total_multiplicity(), a.total_multiplicity() + b.total_multiplicity());
        prop_assert!(compose(&a, &KnowledgeGraph::new()).same_structure(&a));
        prop_assert!(compose(&KnowledgeGraph::new(), &a).same_structure(&a));
    }

    #[test]
    fn merge_preserves_degree_sum_identity(g in graph_strategy(12, 40), picks in prop::collection::vec(0..12usize, 0..12)) {
        prop_assume!(g.node_count() >= 2);
        let ids = ids(&g);
        // split the picked nodes into two disjoint groups
        let chosen: Vec<NodeId> =
            picks.iter().map(|i| ids[i % ids.len()]).collect::<BTreeSet<_>>().into_iter().collect();
        let left: Vec<NodeId> = chosen.iter().step_by(2).copied().collect();
        let right: Vec<NodeId> = chosen.iter().skip(1).step_by(2).copied().collect();
        let groups: Vec<MergeGroup> = [left, right]
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|members| MergeGroup::new(members, &g).unwrap())
            .collect();
        let merged = merge_nodes(&g, &groups).unwrap();
        prop_assert_eq!(merged.check_invariants(), Ok(()));
        let removed: usize = groups.iter().map(|gr| gr.members.len() - 1).sum();
        prop_assert_eq!(merged.node_count(), g.node_count() - removed);
        let degree_sum: usize = merged.node_ids().map(|n| merged.degree(n)).sum();
        prop_assert_eq!(degree_sum, 2 * merged.edge_count());
        prop_assert!(merged.total_multiplicity() <= g.total_multiplicity());
    }

    #[test]
    fn pruning_and_giant_component(g in graph_strategy(30, 25), threshold in 1usize..6) {
        let pruned = prune_small_components(&g, threshold);
        prop_assert!(connected_components(&pruned).iter().all(|c| c.len() >= threshold));
        let kept: usize = connected_components(&g).iter().filter(|c| c.len() >= threshold).map(BTreeSet::len).sum();
        prop_assert_eq!(pruned.node_count(), kept);
        if !g.is_empty() {
            let giant = giant_component(&g).unwrap();
            let largest = connected_components(&g).iter().map(BTreeSet::len).max().unwrap();
            prop_assert_eq!(giant.node_count(), largest);
            prop_assert_eq!(connected_components(&giant).len(), 1);
        }
    }

    #[test]
    fn shortest_paths_match_bfs(g in graph_strategy(14, 30)) {
        let ids = ids(&g);
        let adj = matrix(&g);
        for s in 0..ids.len() {
            let dist = bfs_distances(&adj, s);
            for t in 0..ids.len() {
                match (shortest_path(&g, ids[s], ids[t]), dist[t]) {
                    (Ok(p), Some(d)) => {
                        prop_assert_eq!(p.len(), d);
                        prop_assert!(p.is_valid_in(&g));
                        let text = serialize_path(&p);
                        prop_assert_eq!(text.split(" --> ").count(), 2 * d + 1);
                    }
                    (Err(_), None) => {}
                    (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
                }
            }
        }
    }

    #[test]
    fn betweenness_matches_path_enumeration(g in graph_strategy(9, 18)) {
        let ids = ids(&g);
        let n = ids.len();
        let adj = matrix(&g);
        let mut oracle = vec![0.0f64; n];
        for s in 0..n {
            for t in (s + 1)..n {
                let paths = all_shortest_paths(&adj, s, t);
                if paths.is_empty() {
                    continue;
                }
                for v in (0..n).filter(|&v| v != s && v != t) {
                    let through = paths.iter().filter(|p| p.contains(&v)).count();
                    oracle[v] += through as f64 / paths.len() as f64;
                }
            }
        }
        let scale = if n > 2 { 2.0 / ((n - 1) * (n - 2)) as f64 } else { 0.0 };
        let got = betweenness_centrality::<f64>(&g);
        for (i, id) in ids.iter().enumerate() {
            prop_assert!((got[id] - oracle[i] * scale).abs() < 1e-9);
        }
    }

    #[test]
    fn modularity_matches_matrix_formula(g in graph_strategy(12, 30), colors in prop::collection::vec(0..3usize, 12)) {
        prop_assume!(g.edge_count() > 0);
        let ids = ids(&g);
        let adj = matrix(&g);
        let mut parts = vec![BTreeSet::new(); 3];
        for (i, id) in ids.iter().enumerate() {
            parts[colors[i]].insert(*id);
        }
        let parts: Vec<BTreeSet<NodeId>> = parts.into_iter().filter(|p| !p.is_empty()).collect();
        let color = |i: usize| colors[i];
        let deg: Vec<f64> = (0..ids.len()).map(|i| adj[i].iter().filter(|x| **x).count() as f64).collect();
        let two_m: f64 = deg.iter().sum();
        let mut q = 0.0;
        for i in 0..ids.len() {
            for j in 0..ids.len() {
                if color(i) == color(j) {
                    q += f64::from(u8::from(adj[i][j])) - deg[i] * deg[j] / two_m;
                }
            }
        }
        q /= two_m;
        let got = modularity::<f64>(&g, &parts).unwrap();
        prop_assert!((got - q).abs() < 1e-12);
    }
}
