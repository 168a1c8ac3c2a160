//! Discrete Bayesian networks: structure learning, CPT fitting, inference and scoring.

mod citest;
mod consensus;
mod dag;
mod fit;
mod inference;
mod pc;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use citest::{ci_test_mi, CiResult};
pub use consensus::{consensus_structure, edge_support, EdgeSupport};
pub use dag::{Dag, EdgeMark, Pdag};
pub use fit::{
    bic_score, config_index, fit_cpts, mle_log_likelihood, parameter_count, FittedBn, NodeCpt,
};
pub use inference::{exact_posterior, likelihood_weighting, Evidence, MAX_EXACT_STATES};
pub use pc::{pc_stable, ArcConstraints, PcResult};

use crate::discretize::DiscreteDataset;
use crate::error::{Error, Result};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatShape {
    /// Outcome is the sole parent of every predictor.
    #[default]
    NaiveBayes,
    /// Every predictor is a parent of the outcome.
    Converging,
}

/// Structure with no predictor–predictor arcs. Nodes are the predictors
/// followed by the outcome.
pub fn flat_structure(predictors: &[String], outcome: &str, shape: FlatShape) -> Result<Dag> {
    if predictors.is_empty() {
        return Err(Error::config("flat structure needs at least one predictor"));
    }
    let mut nodes = predictors.to_vec();
    nodes.push(outcome.to_string());
    let y = predictors.len();
    let mut dag = Dag::new(nodes);
    for x in 0..y {
        match shape {
            FlatShape::NaiveBayes => dag.add_arc(y, x)?,
            FlatShape::Converging => dag.add_arc(x, y)?,
        }
    }
    Ok(dag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BnParams {
    pub alpha: f64,
    pub iss: f64,
    pub n_samples: usize,
    /// Arcs are kept when they appear in strictly more than this fraction of
    /// the fold graphs; 0.6 with ten folds means seven or more.
    pub consensus_fraction: f64,
    pub flat_shape: FlatShape,
}

impl Default for BnParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            iss: 1.0,
            n_samples: 500,
            consensus_fraction: 0.6,
            flat_shape: FlatShape::NaiveBayes,
        }
    }
}

impl BnParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha must lie in (0, 1)"));
        }
        if !(self.iss > 0.0 && self.iss.is_finite()) {
            return Err(Error::config("iss must be positive"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("n_samples must be positive"));
        }
        if !(self.consensus_fraction >= 0.0 && self.consensus_fraction < 1.0) {
            return Err(Error::config("consensus_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Fold count an arc must strictly exceed among `n_folds` graphs.
    pub fn consensus_threshold(&self, n_folds: usize) -> usize {
        (self.consensus_fraction * n_folds as f64 + 1e-9).floor() as usize
    }
}

/// Runs PC-stable on each training subset in parallel.
pub fn learn_fold_structures(
    ds: &DiscreteDataset,
    train_rows: &[Vec<usize>],
    alpha: f64,
    constraints: &ArcConstraints,
) -> Result<Vec<Pdag>> {
    train_rows
        .par_iter()
        .map(|rows| pc_stable(&ds.subset(rows), alpha, constraints).map(|r| r.graph))
        .collect()
}

/// P(outcome = 1 | all other nodes) for every row of `ds`, by likelihood weighting.
///
/// Each distinct evidence pattern gets its own generator seeded from `seed`
/// and the pattern, so rows sharing evidence share an estimate and results do
/// not depend on row order.
pub fn predict_outcome(
    bn: &FittedBn,
    ds: &DiscreteDataset,
    outcome: &str,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let names = bn.node_names();
    let target = names
        .iter()
        .position(|n| n == outcome)
        .ok_or_else(|| Error::Lookup {
            kind: "node",
            id: outcome.to_string(),
        })?;
    if bn.nodes[target].levels != 2 {
        return Err(Error::config("outcome node must be binary"));
    }
    let mut cols = Vec::new();
    for (v, n) in names.iter().enumerate().filter(|&(v, _)| v != target) {
        let c = ds.index_of(n).ok_or_else(|| Error::Lookup {
            kind: "variable",
            id: n.clone(),
        })?;
        if ds.variables[c].levels != bn.nodes[v].levels {
            return Err(Error::DimensionMismatch {
                expected: bn.nodes[v].levels,
                got: ds.variables[c].levels,
            });
        }
        cols.push((v, c));
    }
    let patterns: Vec<Vec<(usize, u16)>> = (0..ds.n_rows())
        .map(|r| cols.iter().map(|&(v, c)| (v, ds.columns[c][r])).collect())
        .collect();
    let mut unique: Vec<&Vec<(usize, u16)>> = patterns.iter().collect();
    unique.sort();
    unique.dedup();
    let estimates: Vec<f64> = unique
        .par_iter()
        .map(|ev| {
            let label: String = ev.iter().map(|&(_, s)| format!("{s},")).collect();
            likelihood_weighting(bn, ev, target, n_samples, derive_seed(seed, &label)).map(|p| p[1])
        })
        .collect::<Result<_>>()?;
    let lookup: HashMap<&Vec<(usize, u16)>, f64> = unique.into_iter().zip(estimates).collect();
    Ok(patterns.iter().map(|p| lookup[p]).collect())
}
