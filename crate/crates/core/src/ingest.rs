//! Readers and writers for on-disk graph descriptions.
//!
//! Three formats are supported:
//!
//! * **cfg-json**: a block-level export with one record per function,
//!   each listing its basic blocks with `jump`/`fail` successors and
//!   `calls` targets. Parsed by [`parse_cfg_json`] and flattened into a
//!   whole-program graph by [`document_to_cfg`].
//! * **edge list**: one `u v` pair per line, `n:` for an isolated node,
//!   `#` comments. Parsed by [`parse_edge_list`].
//! * **canonical graph**: the deterministic JSON form written by
//!   [`write_canonical`] and read back by [`parse_canonical`]. Nodes are
//!   keyed by address so the bytes never depend on ingestion order.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BasicBlock, Cfg, GraphError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate block address {address:#x}")]
    DuplicateAddress { address: u64 },
    #[error("function `{function}` entry {entry:#x} is not one of its blocks")]
    EntryNotInFunction { function: String, entry: u64 },
    #[error("block {address:#x} has identical jump and fail targets")]
    JumpEqualsFail { address: u64 },
    #[error("block {address:#x} branches to {target:#x}, which is not a block")]
    DanglingTarget { address: u64, target: u64 },
    #[error("line {line}: malformed edge-list entry `{content}`")]
    MalformedLine { line: usize, content: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A parsed cfg-json document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfgDocument {
    pub sample_id: String,
    pub functions: Vec<FunctionRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub name: String,
    pub entry: u64,
    pub blocks: Vec<BlockRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub addr: u64,
    #[serde(default)]
    pub size: u64,
    #[serde(default)]
    pub ninstr: u64,
    #[serde(default)]
    pub jump: Option<u64>,
    #[serde(default)]
    pub fail: Option<u64>,
    #[serde(default)]
    pub calls: Vec<u64>,
}

impl CfgDocument {
    pub fn block_count(&self) -> usize {
        self.functions.iter().map(|f| f.blocks.len()).sum()
    }

    fn blocks(&self) -> impl Iterator<Item = &BlockRecord> {
        self.functions.iter().flat_map(|f| f.blocks.iter())
    }

    /// Checks the structural invariants serde cannot express.
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.functions.is_empty() {
            return Err(IngestError::Schema {
                path: "functions".into(),
                message: "at least one function is required".into(),
            });
        }
        let mut seen = HashSet::with_capacity(self.block_count());
        for block in self.blocks() {
            if !seen.insert(block.addr) {
                return Err(IngestError::DuplicateAddress {
                    address: block.addr,
                });
            }
        }
        for func in &self.functions {
            if !func.blocks.iter().any(|b| b.addr == func.entry) {
                return Err(IngestError::EntryNotInFunction {
                    function: func.name.clone(),
                    entry: func.entry,
                });
            }
        }
        for block in self.blocks() {
            if block.jump.is_some() && block.jump == block.fail {
                return Err(IngestError::JumpEqualsFail {
                    address: block.addr,
                });
            }
            for target in block.jump.iter().chain(block.fail.iter()) {
                if !seen.contains(target) {
                    return Err(IngestError::DanglingTarget {
                        address: block.addr,
                        target: *target,
                    });
                }
            }
        }
        Ok(())
    }
}

fn json_error(bytes: &[u8], err: serde_json::Error) -> IngestError {
    IngestError::Syntax {
        offset: byte_offset(bytes, err.line(), err.column()),
        message: err.to_string(),
    }
}

// serde_json reports 1-based line and column.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let line_start = if line <= 1 {
        0
    } else {
        bytes
            .iter()
            .enumerate()
            .filter(|&(_, &b)| b == b'\n')
            .nth(line - 2)
            .map_or(bytes.len(), |(i, _)| i + 1)
    };
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

fn from_json<'de, T: Deserialize<'de>>(bytes: &'de [u8]) -> Result<T, IngestError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => IngestError::Schema {
                path,
                message: inner.to_string(),
            },
            _ => json_error(bytes, inner),
        }
    })?;
    de.end().map_err(|e| json_error(bytes, e))?;
    Ok(value)
}

/// Parses and validates a cfg-json document. Unknown fields are ignored.
pub fn parse_cfg_json(bytes: &[u8]) -> Result<CfgDocument, IngestError> {
    let doc: CfgDocument = from_json(bytes)?;
    doc.validate()?;
    Ok(doc)
}

/// Result of flattening a document into one graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conversion {
    pub cfg: Cfg,
    /// Call targets with no matching block (imports, indirect calls).
    pub unresolved_calls: usize,
}

/// Builds the whole-program graph of a validated document.
///
/// Every block becomes a node. `jump` and `fail` successors become
/// edges; with `include_call_edges`, so do calls whose target is a block.
pub fn document_to_cfg(doc: &CfgDocument, include_call_edges: bool) -> Conversion {
    let blocks: Vec<BasicBlock> = doc
        .blocks()
        .map(|b| BasicBlock::new(b.addr, b.size, b.ninstr))
        .collect();
    let known: HashSet<u64> = blocks.iter().map(|b| b.address).collect();
    let mut edges = Vec::new();
    let mut unresolved_calls = 0;
    for b in doc.blocks() {
        edges.extend(b.jump.map(|t| (b.addr, t)));
        edges.extend(b.fail.map(|t| (b.addr, t)));
        if include_call_edges {
            for &callee in &b.calls {
                if known.contains(&callee) {
                    edges.push((b.addr, callee));
                } else {
                    unresolved_calls += 1;
                }
            }
        }
    }
    if unresolved_calls > 0 {
        log::warn!(
            "{}: dropped {unresolved_calls} call edge(s) to unknown addresses",
            doc.sample_id
        );
    }
    let cfg = Cfg::build(doc.sample_id.clone(), blocks, &edges)
        .expect("validated document yields a valid graph");
    Conversion {
        cfg,
        unresolved_calls,
    }
}

/// Parses the edge-list interchange format into a graph named `sample_id`.
pub fn parse_edge_list(bytes: &[u8], sample_id: &str) -> Result<Cfg, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::Syntax {
        offset: e.valid_up_to(),
        message: "input is not valid UTF-8".into(),
    })?;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = || IngestError::MalformedLine {
            line: i + 1,
            content: line.to_string(),
        };
        let label = |s: &str| -> Result<u64, IngestError> {
            if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed());
            }
            s.parse().map_err(|_| malformed())
        };
        if let Some(node) = line.strip_suffix(':') {
            nodes.push(label(node)?);
        } else {
            let (u, v) = line.split_once(' ').ok_or_else(malformed)?;
            let (u, v) = (label(u)?, label(v)?);
            nodes.extend([u, v]);
            edges.push((u, v));
        }
    }
    nodes.sort_unstable();
    nodes.dedup();
    let blocks = nodes.into_iter().map(BasicBlock::bare).collect();
    Ok(Cfg::build(sample_id, blocks, &edges)?)
}

#[derive(Serialize, Deserialize)]
struct CanonicalNode {
    addr: u64,
    size: u64,
    ninstr: u64,
}

#[derive(Serialize, Deserialize)]
struct CanonicalGraph {
    sample_id: String,
    nodes: Vec<CanonicalNode>,
    edges: Vec<[u64; 2]>,
}

/// Deterministic serialization: nodes by ascending address, edges sorted
/// lexicographically by address pair, newline-terminated compact JSON.
pub fn write_canonical(g: &Cfg) -> Vec<u8> {
    let mut edges: Vec<[u64; 2]> = g.address_edges().map(|(s, t)| [s, t]).collect();
    edges.sort_unstable();
    let doc = CanonicalGraph {
        sample_id: g.sample_id().to_string(),
        nodes: g
            .blocks()
            .iter()
            .map(|b| CanonicalNode {
                addr: b.address,
                size: b.size,
                ninstr: b.instr_count,
            })
            .collect(),
        edges,
    };
    let mut out = serde_json::to_vec(&doc).expect("canonical graph is always serializable");
    out.push(b'\n');
    out
}

pub fn parse_canonical(bytes: &[u8]) -> Result<Cfg, IngestError> {
    let doc: CanonicalGraph = from_json(bytes)?;
    let blocks = doc
        .nodes
        .iter()
        .map(|n| BasicBlock::new(n.addr, n.size, n.ninstr))
        .collect();
    let edges: Vec<(u64, u64)> = doc.edges.iter().map(|&[s, t]| (s, t)).collect();
    Ok(Cfg::build(doc.sample_id, blocks, &edges)?)
}
