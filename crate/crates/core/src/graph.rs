//! Canonical control-flow graph representation.
//!
//! A [`Cfg`] stores basic blocks in ascending address order, so a
//! [`BlockId`] is simply the block's position in that order. Edges are
//! directed, deduplicated, and kept sorted. Self-loops are retained.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

/// Dense index of a block inside one [`Cfg`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub usize);

impl BlockId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}", self.0)
    }
}

/// Disassembly metadata carried by a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub address: u64,
    pub size: u64,
    pub instr_count: u64,
}

impl BasicBlock {
    pub fn new(address: u64, size: u64, instr_count: u64) -> Self {
        Self {
            address,
            size,
            instr_count,
        }
    }

    /// A block with no size information, as produced by edge-list input.
    pub fn bare(address: u64) -> Self {
        Self::new(address, 0, 0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph has no blocks")]
    EmptyBlocks,
    #[error("edge endpoint {address:#x} does not match any block address")]
    DanglingEdge { address: u64 },
    #[error("duplicate block address {address:#x}")]
    DuplicateAddress { address: u64 },
    #[error("unknown node {0}")]
    UnknownNode(BlockId),
}

/// Directed control-flow graph of basic blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    sample_id: String,
    blocks: Vec<BasicBlock>,
    edges: Vec<(BlockId, BlockId)>,
}

impl Cfg {
    /// Builds a graph from blocks and address-level edges.
    ///
    /// Blocks may arrive in any order; ids are assigned by ascending
    /// address. Parallel edges collapse to one.
    pub fn build(
        sample_id: impl Into<String>,
        mut blocks: Vec<BasicBlock>,
        raw_edges: &[(u64, u64)],
    ) -> Result<Self, GraphError> {
        if blocks.is_empty() {
            return Err(GraphError::EmptyBlocks);
        }
        blocks.sort_by_key(|b| b.address);
        if let Some(w) = blocks.windows(2).find(|w| w[0].address == w[1].address) {
            return Err(GraphError::DuplicateAddress {
                address: w[0].address,
            });
        }
        let lookup = |address: u64| {
            blocks
                .binary_search_by_key(&address, |b| b.address)
                .map(BlockId)
                .map_err(|_| GraphError::DanglingEdge { address })
        };
        let mut edges = raw_edges
            .iter()
            .map(|&(src, dst)| Ok((lookup(src)?, lookup(dst)?)))
            .collect::<Result<Vec<_>, GraphError>>()?;
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            sample_id: sample_id.into(),
            blocks,
            edges,
        })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn blocks(&self) -> &[BasicBlock] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> Option<&BasicBlock> {
        self.blocks.get(id.0)
    }

    /// Sorted, deduplicated directed edges.
    pub fn edges(&self) -> &[(BlockId, BlockId)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = BlockId> + '_ {
        (0..self.blocks.len()).map(BlockId)
    }

    /// Edges expressed as `(source address, target address)` pairs.
    pub fn address_edges(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.edges
            .iter()
            .map(|&(s, t)| (self.blocks[s.0].address, self.blocks[t.0].address))
    }

    /// Undirected neighbour lists with self-loops dropped and each
    /// neighbour listed once, in ascending order.
    pub fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.blocks.len()];
        for &(s, t) in &self.edges {
            if s != t {
                adj[s.0].push(t.0);
                adj[t.0].push(s.0);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Whether the undirected view forms a single component.
    pub fn is_weakly_connected(&self) -> bool {
        let adj = self.undirected_adjacency();
        let mut seen = vec![false; adj.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == adj.len()
    }

    /// Weakly connected components, numbered in order of their smallest
    /// member.
    pub fn weak_components(&self) -> ComponentLabeling {
        let adj = self.undirected_adjacency();
        let n = adj.len();
        let mut component_of = vec![usize::MAX; n];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..n {
            if component_of[start] != usize::MAX {
                continue;
            }
            let label = sizes.len();
            component_of[start] = label;
            queue.push_back(start);
            let mut size = 0;
            while let Some(u) = queue.pop_front() {
                size += 1;
                for &v in &adj[u] {
                    if component_of[v] == usize::MAX {
                        component_of[v] = label;
                        queue.push_back(v);
                    }
                }
            }
            sizes.push(size);
        }
        // first maximum wins, i.e. the lowest component index
        let largest = sizes
            .iter()
            .enumerate()
            .fold(0, |best, (i, &s)| if s > sizes[best] { i } else { best });
        let largest_component = component_of
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == largest)
            .map(|(i, _)| BlockId(i))
            .collect();
        ComponentLabeling {
            component_of,
            sizes,
            largest_index: largest,
            largest_component,
        }
    }

    /// Subgraph on `nodes` with every edge between them. Ids are
    /// re-densified in the original relative order.
    pub fn induced_subgraph(&self, nodes: &BTreeSet<BlockId>) -> Result<Cfg, GraphError> {
        if let Some(&bad) = nodes.iter().find(|id| id.0 >= self.blocks.len()) {
            return Err(GraphError::UnknownNode(bad));
        }
        if nodes.is_empty() {
            return Err(GraphError::EmptyBlocks);
        }
        let mut remap = vec![usize::MAX; self.blocks.len()];
        let mut blocks = Vec::with_capacity(nodes.len());
        for (new, old) in nodes.iter().enumerate() {
            remap[old.0] = new;
            blocks.push(self.blocks[old.0]);
        }
        let edges = self
            .edges
            .iter()
            .filter(|(s, t)| remap[s.0] != usize::MAX && remap[t.0] != usize::MAX)
            .map(|&(s, t)| (BlockId(remap[s.0]), BlockId(remap[t.0])))
            .collect();
        Ok(Cfg {
            sample_id: self.sample_id.clone(),
            blocks,
            edges,
        })
    }

    /// The induced subgraph of the largest weak component.
    pub fn largest_component(&self) -> Cfg {
        let labeling = self.weak_components();
        if labeling.component_count() == 1 {
            return self.clone();
        }
        let nodes: BTreeSet<BlockId> = labeling.largest_component.iter().copied().collect();
        self.induced_subgraph(&nodes)
            .expect("component members are valid, non-empty node ids")
    }
}

/// Weak-component partition of a [`Cfg`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentLabeling {
    component_of: Vec<usize>,
    sizes: Vec<usize>,
    largest_index: usize,
    largest_component: Vec<BlockId>,
}

impl ComponentLabeling {
    pub fn component_of(&self, id: BlockId) -> usize {
        self.component_of[id.0]
    }

    /// Label per node, indexed by `BlockId`.
    pub fn labels(&self) -> &[usize] {
        &self.component_of
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn largest_index(&self) -> usize {
        self.largest_index
    }

    /// Members of the largest component in ascending id order.
    pub fn largest_component(&self) -> &[BlockId] {
        &self.largest_component
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blocks(addrs: &[u64]) -> Vec<BasicBlock> {
        addrs.iter().map(|&a| BasicBlock::new(a, 4, 1)).collect()
    }

    fn numbered(n: usize, edges: &[(u64, u64)]) -> Cfg {
        let addrs: Vec<u64> = (0..n as u64).collect();
        Cfg::build("t", blocks(&addrs), edges).unwrap()
    }

    #[test]
    fn two_blocks_one_edge() {
        let g = Cfg::build("s", blocks(&[0, 4]), &[(0, 4)]).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges(), &[(BlockId(0), BlockId(1))]);
    }

    #[test]
    fn minimal_graph() {
        let g = Cfg::build("s", blocks(&[0]), &[]).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn dangling_edge_names_address() {
        let err = Cfg::build("s", blocks(&[0, 4]), &[(0, 8)]).unwrap_err();
        assert_eq!(err, GraphError::DanglingEdge { address: 8 });
    }

    #[test]
    fn empty_and_duplicate_blocks_rejected() {
        assert_eq!(
            Cfg::build("s", vec![], &[]).unwrap_err(),
            GraphError::EmptyBlocks
        );
        assert_eq!(
            Cfg::build("s", blocks(&[4, 0, 4]), &[]).unwrap_err(),
            GraphError::DuplicateAddress { address: 4 }
        );
    }

    #[test]
    fn ids_follow_address_order_and_duplicates_collapse() {
        let g = Cfg::build("s", blocks(&[30, 10, 20]), &[(30, 10), (30, 10), (20, 20)]).unwrap();
        assert_eq!(
            g.blocks().iter().map(|b| b.address).collect::<Vec<_>>(),
            vec![10, 20, 30]
        );
        assert_eq!(
            g.edges(),
            &[(BlockId(1), BlockId(1)), (BlockId(2), BlockId(0))]
        );
        assert!(g.undirected_adjacency()[1].is_empty());
    }

    #[test]
    fn components_with_isolated_node() {
        let g = numbered(3, &[(0, 1)]);
        let c = g.weak_components();
        assert_eq!(c.component_count(), 2);
        assert_eq!(c.largest_component(), &[BlockId(0), BlockId(1)]);
        assert_eq!(numbered(1, &[]).weak_components().component_count(), 1);
    }

    #[test]
    fn largest_component_tie_goes_to_lowest_index() {
        let g = numbered(4, &[(2, 3), (0, 1)]);
        let c = g.weak_components();
        assert_eq!(c.largest_index(), 0);
        assert_eq!(c.largest_component(), &[BlockId(0), BlockId(1)]);
    }

    fn union_find_count(n: usize, edges: &[(usize, usize)]) -> (usize, Vec<usize>) {
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            r
        }
        let mut parent: Vec<usize> = (0..n).collect();
        for &(a, b) in edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        let roots: Vec<usize> = (0..n).map(|x| find(&mut parent, x)).collect();
        let mut distinct = roots.clone();
        distinct.sort_unstable();
        distinct.dedup();
        (distinct.len(), roots)
    }

    #[test]
    fn components_match_union_find_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = 10;
            let m = rng.gen_range(0..12);
            let edges: Vec<(usize, usize)> = (0..m)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .collect();
            let raw: Vec<(u64, u64)> = edges.iter().map(|&(a, b)| (a as u64, b as u64)).collect();
            let g = numbered(n, &raw);
            let c = g.weak_components();
            let (count, roots) = union_find_count(n, &edges);
            assert_eq!(c.component_count(), count);
            assert_eq!(c.sizes().iter().sum::<usize>(), n);
            for u in 0..n {
                for v in 0..n {
                    assert_eq!(
                        c.labels()[u] == c.labels()[v],
                        roots[u] == roots[v],
                        "nodes {u},{v}"
                    );
                }
            }
        }
    }

    #[test]
    fn induced_subgraph_of_path() {
        let g = numbered(3, &[(0, 1), (1, 2)]);
        let sub = g
            .induced_subgraph(&[BlockId(0), BlockId(1)].into_iter().collect())
            .unwrap();
        assert_eq!(sub.node_count(), 2);
        assert_eq!(sub.edges(), &[(BlockId(0), BlockId(1))]);
        let all = g.induced_subgraph(&g.node_ids().collect()).unwrap();
        assert_eq!(all, g);
        assert_eq!(
            g.induced_subgraph(&[BlockId(5)].into_iter().collect())
                .unwrap_err(),
            GraphError::UnknownNode(BlockId(5))
        );
    }

    #[test]
    fn induced_subgraph_matches_edge_filter_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = 8u64;
            let raw: Vec<(u64, u64)> = (0..rng.gen_range(0..20))
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .collect();
            let g = numbered(n as usize, &raw);
            let keep: BTreeSet<u64> = (0..n).filter(|_| rng.gen_bool(0.6)).collect();
            if keep.is_empty() {
                continue;
            }
            let ids = keep.iter().map(|&a| BlockId(a as usize)).collect();
            let sub = g.induced_subgraph(&ids).unwrap();
            let mut expected: Vec<(u64, u64)> = raw
                .iter()
                .copied()
                .filter(|(s, t)| keep.contains(s) && keep.contains(t))
                .collect();
            expected.sort_unstable();
            expected.dedup();
            assert_eq!(sub.address_edges().collect::<Vec<_>>(), expected);
            assert_eq!(sub.node_count(), keep.len());
        }
    }
}
