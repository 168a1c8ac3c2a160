use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dag::{Dag, EdgeMark, Pdag};
use super::pc::ArcConstraints;
use crate::error::{Error, Result};

/// Per-edge support counted over fold graphs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSupport {
    /// Folds with `lo -> hi`.
    pub forward: usize,
    /// Folds with `hi -> lo`.
    pub backward: usize,
    pub undirected: usize,
}

impl EdgeSupport {
    pub fn total(&self) -> usize {
        self.forward + self.backward + self.undirected
    }
}

pub fn edge_support(graphs: &[Pdag]) -> BTreeMap<(usize, usize), EdgeSupport> {
    let mut support: BTreeMap<(usize, usize), EdgeSupport> = BTreeMap::new();
    for g in graphs {
        for (k, mark) in g.edges() {
            let s = support.entry(k).or_default();
            match mark {
                EdgeMark::Forward => s.forward += 1,
                EdgeMark::Backward => s.backward += 1,
                EdgeMark::Undirected => s.undirected += 1,
            }
        }
    }
    support
}

/// Keeps arcs appearing in more than `threshold` of the fold graphs.
///
/// An arc whose direction alone clears the threshold is kept as is. An edge
/// whose combined support clears it without a dominant direction is oriented
/// by the constraints: a single forbidden direction decides it, otherwise a
/// manual orientation must be supplied.
pub fn consensus_structure(
    graphs: &[Pdag],
    threshold: usize,
    constraints: &ArcConstraints,
) -> Result<Dag> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::config("consensus structure needs at least one fold graph"))?;
    let nodes = first.nodes().to_vec();
    if graphs.iter().any(|g| g.nodes() != nodes.as_slice()) {
        return Err(Error::config("fold graphs disagree on node set"));
    }
    let mut dag = Dag::new(nodes.clone());
    for ((lo, hi), s) in edge_support(graphs) {
        let (from, to) = if s.forward > threshold {
            (lo, hi)
        } else if s.backward > threshold {
            (hi, lo)
        } else if s.total() > threshold {
            let (a, b) = (&nodes[lo], &nodes[hi]);
            match (constraints.forbids(a, b), constraints.forbids(b, a)) {
                (true, false) => (hi, lo),
                (false, true) => (lo, hi),
                _ => {
                    let (f, t) = constraints
                        .orientation(a, b)
                        .ok_or_else(|| Error::UnresolvedEdge(a.clone(), b.clone()))?;
                    if f == *a {
                        (lo, hi)
                    } else {
                        debug_assert_eq!(t, *a);
                        (hi, lo)
                    }
                }
            }
        } else {
            continue;
        };
        if constraints.forbids(&nodes[from], &nodes[to]) {
            return Err(Error::Constraint(format!(
                "consensus arc {} -> {} is forbidden",
                nodes[from], nodes[to]
            )));
        }
        dag.add_arc(from, to)?;
    }
    Ok(dag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["a", "b", "c"].iter().map(|s| s.to_string()).collect()
    }

    fn graph(arcs: &[(usize, usize)], undirected: &[(usize, usize)]) -> Pdag {
        let mut g = Pdag::new(names());
        for &(a, b) in arcs {
            g.orient(a, b);
        }
        for &(a, b) in undirected {
            g.add_undirected(a, b);
        }
        g
    }

    fn folds(with: usize, arc: (usize, usize)) -> Vec<Pdag> {
        (0..10)
            .map(|i| {
                if i < with {
                    graph(&[arc], &[])
                } else {
                    graph(&[], &[])
                }
            })
            .collect()
    }

    #[test]
    fn threshold_is_strict() {
        let c = ArcConstraints::default();
        let kept = consensus_structure(&folds(7, (0, 1)), 6, &c).unwrap();
        assert!(kept.has_arc(0, 1));
        let dropped = consensus_structure(&folds(6, (0, 1)), 6, &c).unwrap();
        assert_eq!(dropped.n_arcs(), 0);
    }

    #[test]
    fn unanimous_graphs_pass_through() {
        let g = graph(&[(0, 2), (1, 2)], &[]);
        let d = consensus_structure(&vec![g; 10], 6, &ArcConstraints::default()).unwrap();
        assert_eq!(
            d.named_arcs(),
            vec![("a".into(), "c".into()), ("b".into(), "c".into())]
        );
    }

    #[test]
    fn undirected_edges_need_orientation() {
        let gs = vec![graph(&[], &[(0, 1)]); 10];
        match consensus_structure(&gs, 6, &ArcConstraints::default()) {
            Err(Error::UnresolvedEdge(a, b)) => assert_eq!((a.as_str(), b.as_str()), ("a", "b")),
            other => panic!("{other:?}"),
        }
        let c = ArcConstraints {
            orientations: vec![("b".into(), "a".into())],
            ..Default::default()
        };
        assert!(consensus_structure(&gs, 6, &c).unwrap().has_arc(1, 0));
        let sink = ArcConstraints::outcome_sink(&names(), "a");
        assert!(consensus_structure(&gs, 6, &sink).unwrap().has_arc(1, 0));
    }

    #[test]
    fn mixed_directions_pool_support() {
        // 4 forward, 3 backward: neither direction clears 6 alone, total does
        let mut gs: Vec<Pdag> = (0..4).map(|_| graph(&[(0, 1)], &[])).collect();
        gs.extend((0..3).map(|_| graph(&[(1, 0)], &[])));
        let c = ArcConstraints {
            orientations: vec![("a".into(), "b".into())],
            ..Default::default()
        };
        assert!(consensus_structure(&gs, 6, &c).unwrap().has_arc(0, 1));
    }

    #[test]
    fn cycles_are_reported() {
        let gs = vec![graph(&[], &[(0, 1), (1, 2), (0, 2)]); 10];
        let c = ArcConstraints {
            orientations: vec![
                ("a".into(), "b".into()),
                ("b".into(), "c".into()),
                ("c".into(), "a".into()),
            ],
            ..Default::default()
        };
        assert!(matches!(
            consensus_structure(&gs, 6, &c),
            Err(Error::Cycle(_))
        ));
    }

    #[test]
    fn adding_a_superset_fold_keeps_arcs() {
        let mut gs = folds(7, (0, 1));
        gs.extend(folds(3, (1, 2)));
        let c = ArcConstraints::default();
        let before = consensus_structure(&gs, 6, &c).unwrap();
        let arcs: Vec<(usize, usize)> = before.arcs().collect();
        gs.push(graph(&arcs, &[(0, 2)]));
        let after = consensus_structure(&gs, 6, &c).unwrap();
        assert!(arcs.iter().all(|&(a, b)| after.has_arc(a, b)));
    }
}
