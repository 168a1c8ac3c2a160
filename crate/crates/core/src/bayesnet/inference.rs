use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fit::{config_index, FittedBn};
use crate::error::{Error, Result};

/// Enumeration refuses joint spaces larger than this.
pub const MAX_EXACT_STATES: u128 = 1_000_000;

/// Evidence as `(node index, state)` pairs.
pub type Evidence = [(usize, u16)];

fn evidence_vector(
    bn: &FittedBn,
    evidence: &Evidence,
    target: usize,
) -> Result<Vec<Option<usize>>> {
    let n = bn.nodes.len();
    if target >= n {
        return Err(Error::domain("target node out of range"));
    }
    let mut ev = vec![None; n];
    for &(v, s) in evidence {
        if v >= n || s as usize >= bn.nodes[v].levels {
            return Err(Error::domain(format!("evidence ({v}, {s}) out of range")));
        }
        if v == target {
            return Err(Error::domain("target must not be observed"));
        }
        ev[v] = Some(s as usize);
    }
    Ok(ev)
}

fn draw(rng: &mut ChaCha8Rng, column: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in column.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    column.len() - 1
}

/// Likelihood-weighted estimate of the distribution of `target` given `evidence`.
pub fn likelihood_weighting(
    bn: &FittedBn,
    evidence: &Evidence,
    target: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_samples == 0 {
        return Err(Error::config("n_samples must be positive"));
    }
    let ev = evidence_vector(bn, evidence, target)?;
    let order = bn.dag().topological_order();
    let parents = bn.parent_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = vec![0usize; bn.nodes.len()];
    let mut acc = vec![0.0; bn.nodes[target].levels];
    for _ in 0..n_samples {
        let mut w = 1.0;
        for &v in &order {
            let node = &bn.nodes[v];
            let j = config_index(parents[v].iter().map(|&p| state[p]), &node.parent_levels);
            let col = node.column(j);
            match ev[v] {
                Some(s) => {
                    state[v] = s;
                    w *= col[s];
                }
                None => state[v] = draw(&mut rng, col),
            }
        }
        acc[state[target]] += w;
    }
    let total: f64 = acc.iter().sum();
    Ok(acc.into_iter().map(|a| a / total).collect())
}

/// Exact posterior of `target` by enumerating the unobserved nodes.
pub fn exact_posterior(bn: &FittedBn, evidence: &Evidence, target: usize) -> Result<Vec<f64>> {
    let ev = evidence_vector(bn, evidence, target)?;
    let free: Vec<usize> = (0..bn.nodes.len()).filter(|&v| ev[v].is_none()).collect();
    let space: u128 = free.iter().map(|&v| bn.nodes[v].levels as u128).product();
    if space > MAX_EXACT_STATES {
        return Err(Error::StateSpaceTooLarge(space));
    }
    let parents = bn.parent_indices();
    let mut state: Vec<usize> = ev.iter().map(|s| s.unwrap_or(0)).collect();
    let mut acc = vec![0.0; bn.nodes[target].levels];
    for _ in 0..space {
        let mut p = 1.0;
        for (v, node) in bn.nodes.iter().enumerate() {
            let j = config_index(parents[v].iter().map(|&q| state[q]), &node.parent_levels);
            p *= node.column(j)[state[v]];
        }
        acc[state[target]] += p;
        // odometer over free nodes, last fastest
        for &v in free.iter().rev() {
            state[v] += 1;
            if state[v] < bn.nodes[v].levels {
                break;
            }
            state[v] = 0;
        }
    }
    let total: f64 = acc.iter().sum();
    Ok(acc.into_iter().map(|a| a / total).collect())
}
