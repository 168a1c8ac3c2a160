use serde::{Deserialize, Serialize};

use super::dag::Dag;
use crate::discretize::DiscreteDataset;
use crate::error::{Error, Result};

/// Conditional table for one node.
///
/// `cpt[config * levels + state]`, where `config` enumerates parent states
/// row-major over `parents` with the last parent varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCpt {
    pub node: String,
    pub parents: Vec<String>,
    pub levels: usize,
    pub parent_levels: Vec<usize>,
    pub cpt: Vec<f64>,
}

impl NodeCpt {
    pub fn n_configs(&self) -> usize {
        self.parent_levels.iter().product()
    }

    pub fn column(&self, config: usize) -> &[f64] {
        &self.cpt[config * self.levels..(config + 1) * self.levels]
    }
}

/// Parent configuration index, last parent fastest.
pub fn config_index(states: impl IntoIterator<Item = usize>, levels: &[usize]) -> usize {
    states
        .into_iter()
        .zip(levels)
        .fold(0, |acc, (s, &r)| acc * r + s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBn {
    #[serde(skip)]
    dag: Option<Dag>,
    pub iss: f64,
    /// One entry per DAG node, in DAG node order.
    pub nodes: Vec<NodeCpt>,
}

impl FittedBn {
    pub fn dag(&self) -> &Dag {
        self.dag.as_ref().expect("dag is rebuilt on load")
    }

    pub fn node_names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.node.clone()).collect()
    }

    pub fn levels(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.levels).collect()
    }

    /// Parent indices per node, matching the order in `NodeCpt::parents`.
    pub(crate) fn parent_indices(&self) -> Vec<Vec<usize>> {
        let dag = self.dag();
        (0..self.nodes.len()).map(|v| dag.parents(v)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut bn: FittedBn = serde_json::from_str(s)?;
        let names = bn.node_names();
        let mut dag = Dag::new(names);
        for n in &bn.nodes {
            for p in &n.parents {
                dag.add_named_arc(p, &n.node)?;
            }
        }
        for (v, n) in bn.nodes.iter().enumerate() {
            let expect: Vec<&str> = dag
                .parents(v)
                .iter()
                .map(|&p| dag.nodes()[p].as_str())
                .collect();
            if expect != n.parents.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::config(format!(
                    "parents of `{}` must be listed in node order",
                    n.node
                )));
            }
            if n.cpt.len() != n.n_configs() * n.levels {
                return Err(Error::DimensionMismatch {
                    expected: n.n_configs() * n.levels,
                    got: n.cpt.len(),
                });
            }
        }
        bn.dag = Some(dag);
        Ok(bn)
    }
}

fn dataset_columns(dag: &Dag, ds: &DiscreteDataset) -> Result<Vec<usize>> {
    dag.nodes()
        .iter()
        .map(|n| {
            ds.index_of(n).ok_or_else(|| Error::Lookup {
                kind: "variable",
                id: n.clone(),
            })
        })
        .collect()
}

/// Counts `n_ijk` for `node` as a flat `config * r + state` table.
fn family_counts(
    dag: &Dag,
    ds: &DiscreteDataset,
    cols: &[usize],
    node: usize,
) -> (Vec<usize>, Vec<u64>) {
    let parents = dag.parents(node);
    let plevels: Vec<usize> = parents
        .iter()
        .map(|&p| ds.variables[cols[p]].levels)
        .collect();
    let r = ds.variables[cols[node]].levels;
    let q: usize = plevels.iter().product();
    let mut counts = vec![0u64; q * r];
    let child = &ds.columns[cols[node]];
    for row in 0..ds.n_rows() {
        let j = config_index(
            parents.iter().map(|&p| ds.columns[cols[p]][row] as usize),
            &plevels,
        );
        counts[j * r + child[row] as usize] += 1;
    }
    (plevels, counts)
}

/// Posterior-mean CPTs under a uniform BDe prior with imaginary sample size `iss`.
pub fn fit_cpts(dag: &Dag, ds: &DiscreteDataset, iss: f64) -> Result<FittedBn> {
    if !(iss > 0.0 && iss.is_finite()) {
        return Err(Error::config("imaginary sample size must be positive"));
    }
    let cols = dataset_columns(dag, ds)?;
    let mut nodes = Vec::with_capacity(cols.len());
    for v in 0..cols.len() {
        let (plevels, counts) = family_counts(dag, ds, &cols, v);
        let r = ds.variables[cols[v]].levels;
        let q: usize = plevels.iter().product();
        let mut cpt = vec![0.0; q * r];
        for j in 0..q {
            let nij: u64 = counts[j * r..(j + 1) * r].iter().sum();
            let denom = nij as f64 + iss / q as f64;
            for k in 0..r {
                cpt[j * r + k] = (counts[j * r + k] as f64 + iss / (r * q) as f64) / denom;
            }
        }
        nodes.push(NodeCpt {
            node: dag.nodes()[v].clone(),
            parents: dag
                .parents(v)
                .iter()
                .map(|&p| dag.nodes()[p].clone())
                .collect(),
            levels: r,
            parent_levels: plevels,
            cpt,
        });
    }
    Ok(FittedBn {
        dag: Some(dag.clone()),
        iss,
        nodes,
    })
}

/// Maximized log-likelihood of `ds` under `dag`; unobserved cells contribute nothing.
pub fn mle_log_likelihood(dag: &Dag, ds: &DiscreteDataset) -> Result<f64> {
    let cols = dataset_columns(dag, ds)?;
    let mut ll = 0.0;
    for v in 0..cols.len() {
        let (plevels, counts) = family_counts(dag, ds, &cols, v);
        let r = ds.variables[cols[v]].levels;
        let q: usize = plevels.iter().product();
        for j in 0..q {
            let cell = &counts[j * r..(j + 1) * r];
            let nij: u64 = cell.iter().sum();
            for &n in cell.iter().filter(|&&n| n > 0) {
                ll += n as f64 * (n as f64 / nij as f64).ln();
            }
        }
    }
    Ok(ll)
}

/// Free parameters: Σ (r − 1)·q over nodes.
pub fn parameter_count(dag: &Dag, ds: &DiscreteDataset) -> Result<usize> {
    let cols = dataset_columns(dag, ds)?;
    Ok((0..cols.len())
        .map(|v| {
            let q: usize = dag
                .parents(v)
                .iter()
                .map(|&p| ds.variables[cols[p]].levels)
                .product();
            (ds.variables[cols[v]].levels - 1) * q
        })
        .sum())
}

/// BIC in the "larger is better" convention: LL − (d/2)·ln N.
pub fn bic_score(dag: &Dag, ds: &DiscreteDataset) -> Result<f64> {
    let ll = mle_log_likelihood(dag, ds)?;
    let d = parameter_count(dag, ds)?;
    Ok(ll - 0.5 * d as f64 * (ds.n_rows() as f64).ln())
}
