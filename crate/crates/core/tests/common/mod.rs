//! Brute-force reference implementations used to check the metric code.
//! Nothing here calls into the crate's metric routines.

#![allow(dead_code, clippy::needless_range_loop)]

use cfgrank_core::{BasicBlock, Cfg};
use rand::seq::SliceRandom;
use rand::Rng;

const INF: usize = usize::MAX / 4;

/// Undirected 0/1 adjacency matrix built straight from the edge list.
pub fn adjacency_matrix(g: &Cfg) -> Vec<Vec<bool>> {
    let n = g.node_count();
    let mut m = vec![vec![false; n]; n];
    for &(s, t) in g.edges() {
        if s != t {
            m[s.index()][t.index()] = true;
            m[t.index()][s.index()] = true;
        }
    }
    m
}

/// All-pairs hop distances by Floyd-Warshall.
pub fn floyd_warshall(g: &Cfg) -> Vec<Vec<usize>> {
    let adj = adjacency_matrix(g);
    let n = adj.len();
    let mut d = vec![vec![INF; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if adj[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub fn closeness_oracle(g: &Cfg) -> Vec<f64> {
    let n = g.node_count();
    if n == 1 {
        return vec![0.0];
    }
    let d = floyd_warshall(g);
    (0..n)
        .map(|u| (n - 1) as f64 / (0..n).filter(|&v| v != u).map(|v| d[u][v]).sum::<usize>() as f64)
        .collect()
}

/// Betweenness by enumerating every walk of increasing length between
/// each pair until some walk connects them; walks of minimal length are
/// exactly the shortest paths.
pub fn betweenness_oracle(g: &Cfg) -> Vec<f64> {
    let adj = adjacency_matrix(g);
    let n = adj.len();
    let mut score = vec![0.0; n];
    if n < 3 {
        return score;
    }
    for s in 0..n {
        for t in s + 1..n {
            let mut len = 1;
            let paths = loop {
                let mut found = Vec::new();
                let mut walk = vec![s];
                extend_walks(&adj, &mut walk, t, len, &mut found);
                if !found.is_empty() {
                    break found;
                }
                len += 1;
                assert!(len < n, "graph must be connected");
            };
            let total = paths.len() as f64;
            for v in 0..n {
                if v == s || v == t {
                    continue;
                }
                let through = paths.iter().filter(|p| p.contains(&v)).count() as f64;
                score[v] += through / total;
            }
        }
    }
    let pairs = ((n - 1) * (n - 2)) as f64 / 2.0;
    score.iter().map(|s| s / pairs).collect()
}

fn extend_walks(
    adj: &[Vec<bool>],
    walk: &mut Vec<usize>,
    target: usize,
    remaining: usize,
    found: &mut Vec<Vec<usize>>,
) {
    let last = *walk.last().unwrap();
    if remaining == 0 {
        if last == target {
            found.push(walk.clone());
        }
        return;
    }
    for next in 0..adj.len() {
        if adj[last][next] {
            walk.push(next);
            extend_walks(adj, walk, target, remaining - 1, found);
            walk.pop();
        }
    }
}

/// Degree by scanning the edge list: distinct undirected neighbours, plus
/// one for a self-loop, over `n - 1`, capped at 1.
pub fn degree_oracle(g: &Cfg) -> Vec<f64> {
    let n = g.node_count();
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|u| {
            let mut neighbours: Vec<usize> = g
                .edges()
                .iter()
                .filter_map(|&(s, t)| {
                    let (s, t) = (s.index(), t.index());
                    if s == u && t != u {
                        Some(t)
                    } else if t == u && s != u {
                        Some(s)
                    } else {
                        None
                    }
                })
                .collect();
            neighbours.sort_unstable();
            neighbours.dedup();
            let looped = g.edges().iter().any(|&(s, t)| s == t && s.index() == u);
            ((neighbours.len() + usize::from(looped)) as f64 / (n - 1) as f64).min(1.0)
        })
        .collect()
}

/// All unordered-pair distances as a plain list.
pub fn pair_distances(g: &Cfg) -> Vec<f64> {
    let d = floyd_warshall(g);
    let n = d.len();
    let mut out = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            out.push(d[u][v] as f64);
        }
    }
    out
}

/// `[min, max, mean, median, population std]` by direct sorting.
pub fn summary_oracle(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [0.0; 5];
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    [v[0], v[n - 1], mean, median, var.sqrt()]
}

pub fn graph_from_edges(id: &str, n: usize, edges: &[(u64, u64)]) -> Cfg {
    Cfg::build(
        id,
        (0..n as u64)
            .map(|a| BasicBlock::new(a * 4, 4, 1))
            .collect(),
        &edges
            .iter()
            .map(|&(s, t)| (s * 4, t * 4))
            .collect::<Vec<_>>(),
    )
    .unwrap()
}

/// Random weakly connected digraph: a random spanning tree with random
/// edge directions, plus extra edges, occasional self-loops and repeats.
pub fn random_connected(rng: &mut impl Rng, n: usize) -> Cfg {
    let mut order: Vec<u64> = (0..n as u64).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 1..n {
        let parent = order[rng.gen_range(0..i)];
        let child = order[i];
        edges.push(if rng.gen_bool(0.5) {
            (parent, child)
        } else {
            (child, parent)
        });
    }
    let extra = rng.gen_range(0..=n * 2);
    for _ in 0..extra {
        edges.push((rng.gen_range(0..n as u64), rng.gen_range(0..n as u64)));
    }
    if n > 1 && rng.gen_bool(0.3) {
        let dup = edges[rng.gen_range(0..edges.len())];
        edges.push(dup);
    }
    graph_from_edges("rand", n, &edges)
}

/// Random digraph with no connectivity guarantee.
pub fn random_digraph(rng: &mut impl Rng, n: usize, edge_count: usize) -> Cfg {
    let edges: Vec<(u64, u64)> = (0..edge_count)
        .map(|_| (rng.gen_range(0..n as u64), rng.gen_range(0..n as u64)))
        .collect();
    graph_from_edges("rand", n, &edges)
}

/// Same graph with node addresses permuted; returns the graph and the
/// map from old BlockId index to new BlockId index.
pub fn relabel(g: &Cfg, rng: &mut impl Rng) -> (Cfg, Vec<usize>) {
    let n = g.node_count();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let edges: Vec<(u64, u64)> = g
        .edges()
        .iter()
        .map(|&(s, t)| (perm[s.index()] as u64, perm[t.index()] as u64))
        .collect();
    (graph_from_edges(g.sample_id(), n, &edges), perm)
}
