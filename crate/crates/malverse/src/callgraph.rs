//! Call graph construction and analysis-anchor detection.
//!
//! Nodes are the program's functions plus every external API referenced by
//! a call; edges follow the `call` instructions in program order, one edge
//! per call site. The anchors pick where path exploration starts and stops:
//! the entry is the first function in source order that makes at least one
//! call, and the exits are all of its `ret` sites. When several functions
//! qualify as entry the first wins; the rest are reported as runners-up so
//! a caller can surface them.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{Coord, Instruction, Program};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub caller: String,
    pub callee: String,
    pub site: Coord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    index: HashMap<String, usize>,
}

impl CallGraph {
    pub fn node(&self, name: &str) -> Option<&Node> {
        self.index.get(name).map(|&i| &self.nodes[i])
    }

    pub fn is_external(&self, name: &str) -> bool {
        self.node(name).map(|n| n.external).unwrap_or(false)
    }

    pub fn edges_from<'a, 'b: 'a>(&'b self, caller: &'a str) -> impl Iterator<Item = &'b Edge> + 'a {
        self.edges.iter().filter(move |e| e.caller == caller)
    }

    /// External APIs a function calls directly, deduplicated, in first-call order.
    pub fn direct_external_refs<'a>(&'a self, function: &str) -> Vec<&'a str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for e in self.edges_from(function) {
            if self.is_external(&e.callee) && seen.insert(e.callee.as_str()) {
                out.push(e.callee.as_str());
            }
        }
        out
    }

    /// External APIs reachable from a function through internal calls,
    /// deduplicated, in breadth-first discovery order.
    pub fn transitive_external_refs<'a>(&'a self, function: &str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut seen_ext = BTreeSet::new();
        let mut visited = BTreeSet::new();
        let mut queue = VecDeque::new();
        queue.push_back(function);
        visited.insert(function);
        while let Some(f) = queue.pop_front() {
            for e in self.edges_from(f) {
                if self.is_external(&e.callee) {
                    if seen_ext.insert(e.callee.as_str()) {
                        out.push(e.callee.as_str());
                    }
                } else if visited.insert(e.callee.as_str()) {
                    queue.push_back(e.callee.as_str());
                }
            }
        }
        out
    }

    /// Line-based edge list: `caller -> callee` with an ` [external]`
    /// suffix on edges into external APIs.
    pub fn export_edges(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&e.caller);
            out.push_str(" -> ");
            out.push_str(&e.callee);
            if self.is_external(&e.callee) {
                out.push_str(" [external]");
            }
            out.push('\n');
        }
        out
    }
}

/// Build the graph. Call on a program whose diagnostics are empty.
pub fn build_callgraph(p: &Program) -> CallGraph {
    let mut nodes: Vec<Node> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for f in &p.functions {
        index.insert(f.name.clone(), nodes.len());
        nodes.push(Node { name: f.name.clone(), external: false });
    }
    let mut edges = Vec::new();
    for f in &p.functions {
        for b in &f.blocks {
            for (i, instr) in b.instrs.iter().enumerate() {
                if let Instruction::Call { callee, .. } = instr {
                    if !index.contains_key(callee) {
                        index.insert(callee.clone(), nodes.len());
                        nodes.push(Node { name: callee.clone(), external: true });
                    }
                    edges.push(Edge {
                        caller: f.name.clone(),
                        callee: callee.clone(),
                        site: Coord::new(&f.name, &b.label, i),
                    });
                }
            }
        }
    }
    CallGraph { nodes, edges, index }
}

/// A `ret` site in the entry function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitPoint {
    pub block: String,
    pub index: usize,
}

/// Where exploration starts and which sites count as reaching the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisAnchors {
    pub entry: String,
    pub exits: Vec<ExitPoint>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AnchorError {
    #[error("no entry: no function makes a call")]
    NoEntry,
    #[error("no exit: function `{0}` has no ret instruction")]
    NoExit(String),
}

/// Every function that would qualify as entry, in source order. The first
/// element is the one `detect_anchors` picks; the rest are runners-up.
pub fn entry_candidates<'a>(cg: &CallGraph, p: &'a Program) -> Vec<&'a str> {
    p.functions
        .iter()
        .filter(|f| cg.edges_from(&f.name).next().is_some())
        .map(|f| f.name.as_str())
        .collect()
}

/// All `ret` sites of one function.
pub fn ret_sites(p: &Program, function: &str) -> Vec<ExitPoint> {
    let Some(f) = p.function(function) else { return vec![] };
    let mut out = Vec::new();
    for b in &f.blocks {
        for (i, instr) in b.instrs.iter().enumerate() {
            if matches!(instr, Instruction::Ret { .. }) {
                out.push(ExitPoint { block: b.label.clone(), index: i });
            }
        }
    }
    out
}

pub fn detect_anchors(cg: &CallGraph, p: &Program) -> Result<AnalysisAnchors, AnchorError> {
    let candidates = entry_candidates(cg, p);
    let entry = candidates.first().copied().ok_or(AnchorError::NoEntry)?;
    let exits = ret_sites(p, entry);
    if exits.is_empty() {
        return Err(AnchorError::NoExit(entry.to_string()));
    }
    Ok(AnalysisAnchors { entry: entry.to_string(), exits })
}
