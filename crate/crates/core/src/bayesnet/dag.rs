use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed acyclic graph over named nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    nodes: Vec<String>,
    arcs: BTreeSet<(usize, usize)>,
}

impl Dag {
    pub fn new(nodes: Vec<String>) -> Self {
        Self {
            nodes,
            arcs: BTreeSet::new(),
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.arcs.iter().copied()
    }

    pub fn named_arcs(&self) -> Vec<(String, String)> {
        self.arcs
            .iter()
            .map(|&(a, b)| (self.nodes[a].clone(), self.nodes[b].clone()))
            .collect()
    }

    pub fn n_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.arcs.contains(&(from, to))
    }

    /// Adds `from -> to`; rejects self-loops and arcs that close a cycle.
    pub fn add_arc(&mut self, from: usize, to: usize) -> Result<()> {
        if from == to {
            return Err(Error::Cycle(format!("self-loop on `{}`", self.nodes[from])));
        }
        if from >= self.nodes.len() || to >= self.nodes.len() {
            return Err(Error::domain("arc endpoint out of range"));
        }
        if let Some(path) = self.path(to, from) {
            let mut names: Vec<&str> = path.iter().map(|&v| self.nodes[v].as_str()).collect();
            names.push(&self.nodes[to]);
            return Err(Error::Cycle(names.join(" -> ")));
        }
        self.arcs.insert((from, to));
        Ok(())
    }

    pub fn add_named_arc(&mut self, from: &str, to: &str) -> Result<()> {
        let f = self.node_index(from).ok_or_else(|| Error::Lookup {
            kind: "node",
            id: from.to_string(),
        })?;
        let t = self.node_index(to).ok_or_else(|| Error::Lookup {
            kind: "node",
            id: to.to_string(),
        })?;
        self.add_arc(f, t)
    }

    /// Directed path from `from` to `to`, if any.
    fn path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut prev: BTreeMap<usize, usize> = BTreeMap::new();
        let mut stack = vec![from];
        let mut seen = BTreeSet::from([from]);
        while let Some(v) = stack.pop() {
            if v == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[&cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for c in self.children(v) {
                if seen.insert(c) {
                    prev.insert(c, v);
                    stack.push(c);
                }
            }
        }
        None
    }

    /// Parents in ascending index order.
    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.arcs.iter().filter(|a| a.1 == v).map(|a| a.0).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.arcs
            .range((v, 0)..=(v, usize::MAX))
            .map(|a| a.1)
            .collect()
    }

    /// Kahn order, lowest index first among ready nodes.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for &(_, b) in &self.arcs {
            indeg[b] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    /// Text exchange format: `node <name>` lines then `<parent> -> <child>` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            writeln!(s, "node {n}").unwrap();
        }
        for &(a, b) in &self.arcs {
            writeln!(s, "{} -> {}", self.nodes[a], self.nodes[b]).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut dag = Dag::new(Vec::new());
        let mut arcs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix("node ") {
                dag.nodes.push(name.trim().to_string());
            } else if let Some((a, b)) = line.split_once("->") {
                arcs.push((a.trim().to_string(), b.trim().to_string()));
            } else {
                return Err(Error::Row {
                    line: i as u64 + 1,
                    message: format!("unrecognized DAG line `{line}`"),
                });
            }
        }
        for (a, b) in arcs {
            dag.add_named_arc(&a, &b)?;
        }
        Ok(dag)
    }
}

/// Mark of an adjacency in a partially directed graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeMark {
    Undirected,
    /// Lower index -> higher index.
    Forward,
    /// Higher index -> lower index.
    Backward,
}

/// Partially directed graph, as produced by constraint-based learning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pdag {
    nodes: Vec<String>,
    /// Keyed by `(i, j)` with `i < j`.
    edges: BTreeMap<(usize, usize), EdgeMark>,
}

impl Pdag {
    pub fn new(nodes: Vec<String>) -> Self {
        Self {
            nodes,
            edges: BTreeMap::new(),
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn key(a: usize, b: usize) -> (usize, usize) {
        (a.min(b), a.max(b))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.edges.contains_key(&Self::key(a, b))
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) {
        self.edges.insert(Self::key(a, b), EdgeMark::Undirected);
    }

    pub fn remove(&mut self, a: usize, b: usize) {
        self.edges.remove(&Self::key(a, b));
    }

    pub fn orient(&mut self, from: usize, to: usize) {
        let mark = if from < to {
            EdgeMark::Forward
        } else {
            EdgeMark::Backward
        };
        self.edges.insert(Self::key(from, to), mark);
    }

    pub fn is_undirected(&self, a: usize, b: usize) -> bool {
        self.edges.get(&Self::key(a, b)) == Some(&EdgeMark::Undirected)
    }

    /// True when the edge exists and points `from -> to`.
    pub fn is_directed(&self, from: usize, to: usize) -> bool {
        match self.edges.get(&Self::key(from, to)) {
            Some(EdgeMark::Forward) => from < to,
            Some(EdgeMark::Backward) => from > to,
            _ => false,
        }
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&u| u != v && self.adjacent(u, v))
            .collect()
    }

    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), EdgeMark)> + '_ {
        self.edges.iter().map(|(&k, &m)| (k, m))
    }

    pub fn directed_arcs(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter_map(|(&(i, j), m)| match m {
                EdgeMark::Forward => Some((i, j)),
                EdgeMark::Backward => Some((j, i)),
                EdgeMark::Undirected => None,
            })
            .collect()
    }

    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter(|(_, m)| **m == EdgeMark::Undirected)
            .map(|(&k, _)| k)
            .collect()
    }

    pub fn skeleton(&self) -> Vec<(usize, usize)> {
        self.edges.keys().copied().collect()
    }
}
