use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::discretize::DiscreteDataset;

/// Outcome of a G² (mutual information) conditional independence test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub independent: bool,
    /// G² = 2 N MI(x; y | z).
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    /// Conditioning strata with no observations; each removes its share of
    /// degrees of freedom.
    pub empty_strata: usize,
}

/// Tests `x ⊥ y | z` on all rows of `ds`.
pub fn ci_test_mi(ds: &DiscreteDataset, x: usize, y: usize, z: &[usize], alpha: f64) -> CiResult {
    let rx = ds.variables[x].levels;
    let ry = ds.variables[y].levels;
    let rz: Vec<usize> = z.iter().map(|&v| ds.variables[v].levels).collect();
    let strata: usize = rz.iter().product();
    let n = ds.n_rows();

    let mut counts = vec![0u64; strata * rx * ry];
    let (cx, cy) = (&ds.columns[x], &ds.columns[y]);
    for r in 0..n {
        let mut s = 0usize;
        for (k, &v) in z.iter().enumerate() {
            s = s * rz[k] + ds.columns[v][r] as usize;
        }
        counts[(s * rx + cx[r] as usize) * ry + cy[r] as usize] += 1;
    }

    let mut g2 = 0.0;
    let mut empty = 0usize;
    let mut xm = vec![0u64; rx];
    let mut ym = vec![0u64; ry];
    for s in 0..strata {
        let block = &counts[s * rx * ry..(s + 1) * rx * ry];
        xm.iter_mut().for_each(|c| *c = 0);
        ym.iter_mut().for_each(|c| *c = 0);
        let mut nz = 0u64;
        for a in 0..rx {
            for b in 0..ry {
                let c = block[a * ry + b];
                xm[a] += c;
                ym[b] += c;
                nz += c;
            }
        }
        if nz == 0 {
            empty += 1;
            continue;
        }
        for a in 0..rx {
            for b in 0..ry {
                let c = block[a * ry + b];
                if c > 0 {
                    let c = c as f64;
                    g2 += c * (c * nz as f64 / (xm[a] as f64 * ym[b] as f64)).ln();
                }
            }
        }
    }
    g2 = (2.0 * g2).max(0.0);
    let df = ((rx - 1) * (ry - 1) * (strata - empty)).max(1) as f64;
    let p_value = if g2 == 0.0 {
        1.0
    } else {
        ChiSquared::new(df).map(|d| d.sf(g2)).unwrap_or(f64::NAN)
    };
    CiResult {
        independent: p_value >= alpha,
        statistic: g2,
        df,
        p_value,
        empty_strata: empty,
    }
}
