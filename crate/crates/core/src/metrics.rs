//! Exact graph properties: closeness, betweenness and degree centrality,
//! shortest-path statistics, and density.
//!
//! Centralities and path statistics are defined on the undirected view of
//! a connected graph (self-loops ignored, antiparallel edges merged).
//! Callers pass the largest weak component; a disconnected input is an
//! error rather than a silently rescaled value. Per-source BFS passes run
//! through [`Execution`] in fixed-size chunks that are reduced in index
//! order, so sequential and parallel runs agree bit for bit.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::graph::{BlockId, Cfg};

const SOURCE_CHUNK: usize = 32;
const UNREACHED: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("graph is not connected ({components} weak components)")]
    Disconnected { components: usize },
}

/// One score per node, indexed by [`BlockId`].
#[derive(Clone, Debug, PartialEq)]
pub struct CentralityScores {
    values: Vec<f64>,
}

impl CentralityScores {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, id: BlockId) -> f64 {
        self.values[id.0]
    }

    pub fn summary(&self) -> Summary {
        Summary::of(&self.values)
    }
}

/// Min, max, mean, median and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

/// Shortest-path statistics over all unordered node pairs, in hops.
pub type PathStats = Summary;

impl Summary {
    /// Summary of a list of values; all zeros for an empty list.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Self {
            min: sorted[0],
            max: sorted[n - 1],
            mean,
            median,
            std: var.sqrt(),
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.min, self.max, self.mean, self.median, self.std]
    }
}

fn connected_adjacency(g: &Cfg) -> Result<Vec<Vec<usize>>, MetricsError> {
    if g.is_weakly_connected() {
        Ok(g.undirected_adjacency())
    } else {
        Err(MetricsError::Disconnected {
            components: g.weak_components().component_count(),
        })
    }
}

fn bfs(adj: &[Vec<usize>], source: usize, dist: &mut [u32], queue: &mut VecDeque<usize>) {
    dist.fill(UNREACHED);
    dist[source] = 0;
    queue.clear();
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == UNREACHED {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
}

/// Runs `visit` for each chunk of sources, producing one partial result
/// per chunk in chunk order.
fn per_source_chunks<T, F>(n: usize, exec: Execution, visit: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunks = n.div_ceil(SOURCE_CHUNK);
    exec.map_range(chunks, |c| {
        visit(c * SOURCE_CHUNK..((c + 1) * SOURCE_CHUNK).min(n))
    })
}

pub fn closeness(g: &Cfg) -> Result<CentralityScores, MetricsError> {
    closeness_with(g, Execution::default())
}

/// `(n - 1) / sum of hop distances` per node; 0 for a single node.
pub fn closeness_with(g: &Cfg, exec: Execution) -> Result<CentralityScores, MetricsError> {
    let adj = connected_adjacency(g)?;
    let n = adj.len();
    if n == 1 {
        return Ok(CentralityScores { values: vec![0.0] });
    }
    let values = per_source_chunks(n, exec, |sources| {
        let mut dist = vec![UNREACHED; n];
        let mut queue = VecDeque::with_capacity(n);
        sources
            .map(|s| {
                bfs(&adj, s, &mut dist, &mut queue);
                let total: u64 = dist.iter().map(|&d| u64::from(d)).sum();
                (n - 1) as f64 / total as f64
            })
            .collect::<Vec<_>>()
    })
    .concat();
    Ok(CentralityScores { values })
}

pub fn betweenness(g: &Cfg) -> Result<CentralityScores, MetricsError> {
    betweenness_with(g, Execution::default())
}

/// Brandes accumulation over unweighted shortest paths, endpoints
/// excluded, normalized by the `(n-1)(n-2)/2` unordered pairs that can
/// route through a node.
pub fn betweenness_with(g: &Cfg, exec: Execution) -> Result<CentralityScores, MetricsError> {
    let adj = connected_adjacency(g)?;
    let n = adj.len();
    if n < 3 {
        return Ok(CentralityScores {
            values: vec![0.0; n],
        });
    }
    let partials = per_source_chunks(n, exec, |sources| {
        let mut acc = vec![0.0f64; n];
        let mut dist = vec![UNREACHED; n];
        let mut sigma = vec![0.0f64; n];
        let mut delta = vec![0.0f64; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::with_capacity(n);
        for s in sources {
            dist.fill(UNREACHED);
            sigma.fill(0.0);
            delta.fill(0.0);
            order.clear();
            dist[s] = 0;
            sigma[s] = 1.0;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &w in &adj[v] {
                    if dist[w] == UNREACHED {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                    }
                }
            }
            // predecessors of w are its neighbours one hop closer to s
            for &w in order.iter().rev() {
                let coeff = (1.0 + delta[w]) / sigma[w];
                for &v in &adj[w] {
                    if dist[v] != UNREACHED && dist[v] + 1 == dist[w] {
                        delta[v] += sigma[v] * coeff;
                    }
                }
                if w != s {
                    acc[w] += delta[w];
                }
            }
        }
        acc
    });
    let mut values = vec![0.0f64; n];
    for partial in &partials {
        for (v, p) in values.iter_mut().zip(partial) {
            *v += p;
        }
    }
    // each unordered pair was counted from both ends
    let scale = 1.0 / ((n - 1) as f64 * (n - 2) as f64);
    for v in &mut values {
        *v *= scale;
    }
    Ok(CentralityScores { values })
}

/// Undirected degree over `n - 1`. A self-loop adds one to the degree;
/// the result is capped at 1 so a node adjacent to every other node keeps
/// score 1 when it also loops.
pub fn degree_centrality(g: &Cfg) -> CentralityScores {
    let n = g.node_count();
    if n == 1 {
        return CentralityScores { values: vec![0.0] };
    }
    let adj = g.undirected_adjacency();
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    for &(s, t) in g.edges() {
        if s == t {
            degree[s.0] += 1;
        }
    }
    let values = degree
        .into_iter()
        .map(|d| (d as f64 / (n - 1) as f64).min(1.0))
        .collect();
    CentralityScores { values }
}

pub fn shortest_path_stats(g: &Cfg) -> Result<PathStats, MetricsError> {
    shortest_path_stats_with(g, Execution::default())
}

/// Statistics of the hop distance over all unordered pairs `u != v`.
///
/// Distances are small integers, so they are tallied into a histogram and
/// the statistics computed from it exactly.
pub fn shortest_path_stats_with(g: &Cfg, exec: Execution) -> Result<PathStats, MetricsError> {
    let adj = connected_adjacency(g)?;
    let n = adj.len();
    if n == 1 {
        return Ok(PathStats::default());
    }
    let partials = per_source_chunks(n, exec, |sources| {
        let mut hist: Vec<u64> = Vec::new();
        let mut dist = vec![UNREACHED; n];
        let mut queue = VecDeque::with_capacity(n);
        for s in sources {
            bfs(&adj, s, &mut dist, &mut queue);
            for &d in &dist[s + 1..] {
                let d = d as usize;
                if hist.len() <= d {
                    hist.resize(d + 1, 0);
                }
                hist[d] += 1;
            }
        }
        hist
    });
    let mut hist: Vec<u64> = Vec::new();
    for partial in partials {
        if hist.len() < partial.len() {
            hist.resize(partial.len(), 0);
        }
        for (h, p) in hist.iter_mut().zip(partial) {
            *h += p;
        }
    }
    Ok(histogram_summary(&hist))
}

fn histogram_summary(hist: &[u64]) -> Summary {
    let total: u64 = hist.iter().sum();
    let occupied = || hist.iter().enumerate().filter(|(_, &c)| c > 0);
    let min = occupied().next().map_or(0, |(d, _)| d) as f64;
    let max = occupied().next_back().map_or(0, |(d, _)| d) as f64;
    let mean = occupied().map(|(d, &c)| d as f64 * c as f64).sum::<f64>() / total as f64;
    let var = occupied()
        .map(|(d, &c)| c as f64 * (d as f64 - mean).powi(2))
        .sum::<f64>()
        / total as f64;
    let nth = |rank: u64| {
        let mut seen = 0;
        for (d, &c) in hist.iter().enumerate() {
            seen += c;
            if seen > rank {
                return d as f64;
            }
        }
        unreachable!("rank below total")
    };
    let median = if total % 2 == 1 {
        nth(total / 2)
    } else {
        (nth(total / 2 - 1) + nth(total / 2)) / 2.0
    };
    Summary {
        min,
        max,
        mean,
        median,
        std: var.sqrt(),
    }
}

/// `|E| / (n (n - 1))` over directed edges including self-loops, capped
/// at 1; 0 when `n < 2`.
pub fn density(g: &Cfg) -> f64 {
    let n = g.node_count();
    if n < 2 {
        return 0.0;
    }
    (g.edge_count() as f64 / (n as f64 * (n - 1) as f64)).min(1.0)
}
