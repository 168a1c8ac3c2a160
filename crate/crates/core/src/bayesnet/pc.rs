//! PC-stable structure learning with G² tests.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::citest::ci_test_mi;
use super::dag::Pdag;
use crate::discretize::DiscreteDataset;
use crate::error::{Error, Result};

/// Forbidden and required arcs plus manual orientations for consensus edges,
/// all by node name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArcConstraints {
    pub forbidden: BTreeSet<(String, String)>,
    pub required: BTreeSet<(String, String)>,
    /// `(from, to)` orientation for an undirected edge between the two nodes.
    pub orientations: Vec<(String, String)>,
}

impl ArcConstraints {
    /// Forbids every arc out of `outcome` into the other nodes.
    pub fn outcome_sink(nodes: &[String], outcome: &str) -> Self {
        Self {
            forbidden: nodes
                .iter()
                .filter(|n| n.as_str() != outcome)
                .map(|n| (outcome.to_string(), n.clone()))
                .collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((a, b)) = self.forbidden.intersection(&self.required).next() {
            return Err(Error::config(format!(
                "arc {a} -> {b} is both forbidden and required"
            )));
        }
        Ok(())
    }

    pub fn forbids(&self, from: &str, to: &str) -> bool {
        self.forbidden.contains(&(from.to_string(), to.to_string()))
    }

    pub fn requires(&self, from: &str, to: &str) -> bool {
        self.required.contains(&(from.to_string(), to.to_string()))
    }

    /// Manual orientation for the edge between `a` and `b`, if any.
    pub fn orientation(&self, a: &str, b: &str) -> Option<(String, String)> {
        self.orientations
            .iter()
            .find(|(x, y)| (x == a && y == b) || (x == b && y == a))
            .cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcResult {
    pub graph: Pdag,
    /// Separating sets of removed edges, keyed by `(i, j)` with `i < j`.
    pub sepsets: BTreeMap<(usize, usize), Vec<usize>>,
    pub tests_run: usize,
}

fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(
        items: &[usize],
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut cur, &mut out);
    out
}

struct Orienter<'a> {
    g: Pdag,
    names: &'a [String],
    constraints: &'a ArcConstraints,
}

impl Orienter<'_> {
    fn allowed(&self, from: usize, to: usize) -> bool {
        !self.constraints.forbids(&self.names[from], &self.names[to])
    }

    /// Orients an undirected edge if the direction is allowed.
    fn try_orient(&mut self, from: usize, to: usize) -> bool {
        if self.g.is_undirected(from, to) && self.allowed(from, to) {
            self.g.orient(from, to);
            true
        } else {
            false
        }
    }

    fn meek(&mut self) {
        let n = self.g.n_nodes();
        loop {
            let mut changed = false;
            for (a, b) in self.g.undirected_edges() {
                for (from, to) in [(a, b), (b, a)] {
                    if !self.g.is_undirected(from, to) {
                        continue;
                    }
                    // R1: c -> from, from - to, c and to nonadjacent
                    let r1 = (0..n)
                        .any(|c| c != to && self.g.is_directed(c, from) && !self.g.adjacent(c, to));
                    // R2: from -> c -> to
                    let r2 =
                        (0..n).any(|c| self.g.is_directed(from, c) && self.g.is_directed(c, to));
                    // R3: from - c -> to, from - d -> to, c and d nonadjacent
                    let r3 = {
                        let cs: Vec<usize> = (0..n)
                            .filter(|&c| self.g.is_undirected(from, c) && self.g.is_directed(c, to))
                            .collect();
                        cs.iter()
                            .enumerate()
                            .any(|(i, &c)| cs[i + 1..].iter().any(|&d| !self.g.adjacent(c, d)))
                    };
                    if (r1 || r2 || r3) && self.try_orient(from, to) {
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
}

/// Learns a partially directed graph over all variables of `ds`.
///
/// Skeleton search is level-wise with adjacency sets frozen at the start of
/// each level, so the result does not depend on edge visiting order.
pub fn pc_stable(
    ds: &DiscreteDataset,
    alpha: f64,
    constraints: &ArcConstraints,
) -> Result<PcResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha must lie in (0, 1)"));
    }
    constraints.validate()?;
    let names: Vec<String> = ds.variables.iter().map(|v| v.name.clone()).collect();
    let m = names.len();
    let required = |a: usize, b: usize| {
        constraints.requires(&names[a], &names[b]) || constraints.requires(&names[b], &names[a])
    };
    let both_forbidden = |a: usize, b: usize| {
        constraints.forbids(&names[a], &names[b]) && constraints.forbids(&names[b], &names[a])
    };

    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
    for a in 0..m {
        for b in a + 1..m {
            if required(a, b) || !both_forbidden(a, b) {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }

    let mut sepsets = BTreeMap::new();
    let mut tests_run = 0;
    let mut level = 0;
    loop {
        let frozen = adj.clone();
        let mut testable = false;
        for x in 0..m {
            for &y in &frozen[x] {
                if !adj[x].contains(&y) || required(x, y) {
                    continue;
                }
                let others: Vec<usize> = frozen[x].iter().copied().filter(|&v| v != y).collect();
                if others.len() < level {
                    continue;
                }
                testable = true;
                for s in subsets(&others, level) {
                    tests_run += 1;
                    if ci_test_mi(ds, x, y, &s, alpha).independent {
                        adj[x].remove(&y);
                        adj[y].remove(&x);
                        sepsets.insert((x.min(y), x.max(y)), s);
                        break;
                    }
                }
            }
        }
        if !testable {
            break;
        }
        level += 1;
    }

    let mut g = Pdag::new(names.clone());
    for a in 0..m {
        for &b in adj[a].iter().filter(|&&b| b > a) {
            g.add_undirected(a, b);
        }
    }
    let mut o = Orienter {
        g,
        names: &names,
        constraints,
    };

    // constraint-implied directions first
    for (a, b) in o.g.skeleton() {
        if constraints.requires(&names[a], &names[b]) {
            o.g.orient(a, b);
        } else if constraints.requires(&names[b], &names[a]) || (!o.allowed(a, b) && o.allowed(b, a)) {
            o.g.orient(b, a);
        } else if !o.allowed(b, a) && o.allowed(a, b) {
            o.g.orient(a, b);
        }
    }

    // v-structures x -> z <- y for nonadjacent x, y with z outside sepset(x, y)
    for z in 0..m {
        let nb = o.g.neighbors(z);
        for (i, &x) in nb.iter().enumerate() {
            for &y in &nb[i + 1..] {
                if o.g.adjacent(x, y) {
                    continue;
                }
                let sep = sepsets.get(&(x.min(y), x.max(y)));
                if sep.is_some_and(|s| s.contains(&z)) {
                    continue;
                }
                let ok = |o: &Orienter, a: usize| {
                    o.g.is_directed(a, z) || (o.g.is_undirected(a, z) && o.allowed(a, z))
                };
                if ok(&o, x) && ok(&o, y) {
                    o.try_orient(x, z);
                    o.try_orient(y, z);
                }
            }
        }
    }
    o.meek();

    Ok(PcResult {
        graph: o.g,
        sepsets,
        tests_run,
    })
}
