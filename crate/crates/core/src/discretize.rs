//! Mutual-information preserving discretization.
//!
//! Every continuous variable starts with `initial_levels` equal-width bins.
//! Variables still above their target take turns (round-robin in declared
//! order) merging the pair of adjacent levels whose coalescence loses the
//! least total pairwise mutual information. Already-discrete variables such
//! as the outcome keep their levels but take part in the MI totals.
//!
//! Bins are half-open `[lo, hi)`: a value equal to a cut goes to the upper
//! bin, and values outside the training range clamp to the extreme bins.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::format_sig;

/// `k - 1` equally spaced cuts on `[min, max]`.
pub fn equal_interval_bins(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::config("at least two bins are required"));
    }
    let (lo, hi) = min_max(values);
    if !(hi > lo) {
        return Err(Error::DegenerateVariable("<unnamed>".into()));
    }
    let width = (hi - lo) / k as f64;
    Ok((1..k).map(|i| lo + width * i as f64).collect())
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Level of `value` under `cuts`: the number of cuts at or below it.
pub fn bin_index(cuts: &[f64], value: f64) -> u16 {
    cuts.partition_point(|&c| c <= value) as u16
}

/// Cut points of one discretized variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableBins {
    pub variable: String,
    pub cuts: Vec<f64>,
    pub levels: usize,
    /// Training range; used for interval labels.
    pub min: f64,
    pub max: f64,
}

impl VariableBins {
    pub fn apply(&self, value: f64) -> u16 {
        bin_index(&self.cuts, value)
    }

    /// Interval label of a level, e.g. `[0.001,0.208917)`; the top level is closed.
    pub fn label(&self, level: usize) -> String {
        let lo = if level == 0 {
            self.min
        } else {
            self.cuts[level - 1]
        };
        let (hi, close) = if level + 1 >= self.levels {
            (self.max, ']')
        } else {
            (self.cuts[level], ')')
        };
        format!("[{},{}{close}", format_sig(lo), format_sig(hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationConfig {
    pub initial_levels: usize,
    pub variables: Vec<VariableBins>,
}

impl DiscretizationConfig {
    pub fn levels(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.levels).collect()
    }

    pub fn variable(&self, name: &str) -> Option<&VariableBins> {
        self.variables.iter().find(|v| v.variable == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        for v in &cfg.variables {
            if v.levels != v.cuts.len() + 1 || v.cuts.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::config(format!("invalid cuts for `{}`", v.variable)));
            }
        }
        Ok(cfg)
    }

    /// Discretizes continuous columns (one per configured variable, in order)
    /// and appends the already-discrete columns unchanged.
    pub fn apply(
        &self,
        continuous: &[&[f64]],
        discrete: &[DiscreteColumn],
    ) -> Result<DiscreteDataset> {
        if continuous.len() != self.variables.len() {
            return Err(Error::DimensionMismatch {
                expected: self.variables.len(),
                got: continuous.len(),
            });
        }
        let mut variables = Vec::new();
        let mut columns = Vec::new();
        for (bins, values) in self.variables.iter().zip(continuous) {
            variables.push(DiscreteVariable {
                name: bins.variable.clone(),
                levels: bins.levels,
                labels: (0..bins.levels).map(|l| bins.label(l)).collect(),
            });
            columns.push(values.iter().map(|&v| bins.apply(v)).collect());
        }
        for d in discrete {
            variables.push(d.variable.clone());
            columns.push(d.codes.clone());
        }
        DiscreteDataset::new(variables, columns, Some(self.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteVariable {
    pub name: String,
    pub levels: usize,
    pub labels: Vec<String>,
}

/// An already-discrete column (typically the outcome).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteColumn {
    pub variable: DiscreteVariable,
    pub codes: Vec<u16>,
}

impl DiscreteColumn {
    pub fn binary(name: &str, values: &[u8]) -> Self {
        Self {
            variable: DiscreteVariable {
                name: name.to_string(),
                levels: 2,
                labels: vec!["0".into(), "1".into()],
            },
            codes: values.iter().map(|&v| v as u16).collect(),
        }
    }
}

/// Column-major matrix of level indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDataset {
    pub variables: Vec<DiscreteVariable>,
    pub columns: Vec<Vec<u16>>,
    pub config: Option<DiscretizationConfig>,
}

impl DiscreteDataset {
    pub fn new(
        variables: Vec<DiscreteVariable>,
        columns: Vec<Vec<u16>>,
        config: Option<DiscretizationConfig>,
    ) -> Result<Self> {
        if variables.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: variables.len(),
                got: columns.len(),
            });
        }
        let n = columns.first().map_or(0, Vec::len);
        for (v, c) in variables.iter().zip(&columns) {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.len(),
                });
            }
            if let Some(&bad) = c.iter().find(|&&x| x as usize >= v.levels) {
                return Err(Error::domain(format!(
                    "level {bad} out of range for `{}` ({} levels)",
                    v.name, v.levels
                )));
            }
        }
        Ok(Self {
            variables,
            columns,
            config,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn levels(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.levels).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Rows selected by index, preserving variable metadata.
    pub fn subset(&self, rows: &[usize]) -> DiscreteDataset {
        DiscreteDataset {
            variables: self.variables.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            config: self.config.clone(),
        }
    }
}

fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Plug-in mutual information (nats) between two level columns.
pub fn mutual_information(a: &[u16], b: &[u16]) -> f64 {
    assert_eq!(a.len(), b.len(), "columns must have equal length");
    if a.is_empty() {
        return 0.0;
    }
    let la = *a.iter().max().unwrap() as usize + 1;
    let lb = *b.iter().max().unwrap() as usize + 1;
    let mut joint = vec![0u64; la * lb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x as usize * lb + y as usize] += 1;
    }
    table_mi(&joint, la, lb, a.len() as u64)
}

fn table_mi(joint: &[u64], la: usize, lb: usize, n: u64) -> f64 {
    let mut ra = vec![0u64; la];
    let mut rb = vec![0u64; lb];
    let mut sj = 0.0;
    for x in 0..la {
        for y in 0..lb {
            let c = joint[x * lb + y];
            ra[x] += c;
            rb[y] += c;
            sj += xlnx(c as f64);
        }
    }
    let n = n as f64;
    let sa: f64 = ra.iter().map(|&c| xlnx(c as f64)).sum();
    let sb: f64 = rb.iter().map(|&c| xlnx(c as f64)).sum();
    ((sj - sa - sb) / n + n.ln()).max(0.0)
}

/// Sum of mutual information over all unordered pairs of columns.
pub fn total_pairwise_mi(columns: &[&[u16]]) -> f64 {
    let mut total = 0.0;
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            total += mutual_information(columns[i], columns[j]);
        }
    }
    total
}

/// One applied coalescence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub variable: usize,
    /// Levels `level` and `level + 1` were merged.
    pub level: usize,
    pub removed_cut: f64,
    pub loss: f64,
    pub total_mi_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalesceResult {
    pub config: DiscretizationConfig,
    pub dataset: DiscreteDataset,
    pub initial_total_mi: f64,
    pub trace: Vec<MergeStep>,
}

/// A continuous input column.
#[derive(Debug, Clone, Copy)]
pub struct ContinuousColumn<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Merges level `a` into `a + 1`'s slot: codes above `a` shift down by one.
pub fn merge_codes(codes: &mut [u16], a: usize) {
    for c in codes.iter_mut() {
        if *c as usize > a {
            *c -= 1;
        }
    }
}

/// Incrementally maintained pairwise contingency tables.
struct PairTables {
    n: u64,
    levels: Vec<usize>,
    /// For i < j, `tables[i][j]` is row-major `levels[i] x levels[j]`.
    tables: Vec<Vec<Vec<u64>>>,
    marginals: Vec<Vec<u64>>,
    /// Whether the pair (i, j) counts towards the total.
    included: Vec<Vec<bool>>,
}

impl PairTables {
    fn new(codes: &[Vec<u16>], levels: &[usize], included: Vec<Vec<bool>>) -> Self {
        let m = codes.len();
        let n = codes.first().map_or(0, Vec::len);
        let mut tables = vec![vec![Vec::new(); m]; m];
        for i in 0..m {
            for j in i + 1..m {
                let mut t = vec![0u64; levels[i] * levels[j]];
                for r in 0..n {
                    t[codes[i][r] as usize * levels[j] + codes[j][r] as usize] += 1;
                }
                tables[i][j] = t;
            }
        }
        let marginals = (0..m)
            .map(|i| {
                let mut c = vec![0u64; levels[i]];
                for &x in &codes[i] {
                    c[x as usize] += 1;
                }
                c
            })
            .collect();
        Self {
            n: n as u64,
            levels: levels.to_vec(),
            tables,
            marginals,
            included,
        }
    }

    fn cell(&self, v: usize, x: usize, u: usize, y: usize) -> u64 {
        if v < u {
            self.tables[v][u][x * self.levels[u] + y]
        } else {
            self.tables[u][v][y * self.levels[v] + x]
        }
    }

    fn total(&self) -> f64 {
        let m = self.levels.len();
        let mut t = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                if self.included[i][j] {
                    t += table_mi(&self.tables[i][j], self.levels[i], self.levels[j], self.n);
                }
            }
        }
        t
    }

    /// Sum of MI over included pairs involving `v`.
    fn variable_total(&self, v: usize) -> f64 {
        (0..self.levels.len())
            .filter(|&u| u != v && self.included[v.min(u)][v.max(u)])
            .map(|u| {
                let (i, j) = (v.min(u), v.max(u));
                table_mi(&self.tables[i][j], self.levels[i], self.levels[j], self.n)
            })
            .sum()
    }

    /// MI lost by merging levels `a` and `a + 1` of `v`.
    fn merge_loss(&self, v: usize, a: usize) -> f64 {
        let n = self.n as f64;
        if n == 0.0 {
            return 0.0;
        }
        let na = self.marginals[v][a] as f64;
        let nb = self.marginals[v][a + 1] as f64;
        let marg = xlnx(na + nb) - xlnx(na) - xlnx(nb);
        let mut loss = 0.0;
        for u in 0..self.levels.len() {
            if u == v || !self.included[v.min(u)][v.max(u)] {
                continue;
            }
            let mut joint = 0.0;
            for y in 0..self.levels[u] {
                let ca = self.cell(v, a, u, y) as f64;
                let cb = self.cell(v, a + 1, u, y) as f64;
                joint += xlnx(ca + cb) - xlnx(ca) - xlnx(cb);
            }
            loss += marg - joint;
        }
        loss / n
    }

    fn merge(&mut self, v: usize, a: usize) {
        let m = self.levels.len();
        for u in 0..m {
            if u == v {
                continue;
            }
            let (i, j) = (v.min(u), v.max(u));
            let (li, lj) = (self.levels[i], self.levels[j]);
            let t = &self.tables[i][j];
            let mut merged = Vec::with_capacity(t.len() - if v == i { lj } else { li });
            if v == i {
                for x in 0..li {
                    if x == a + 1 {
                        continue;
                    }
                    for y in 0..lj {
                        let mut c = t[x * lj + y];
                        if x == a {
                            c += t[(a + 1) * lj + y];
                        }
                        merged.push(c);
                    }
                }
            } else {
                for x in 0..li {
                    for y in 0..lj {
                        if y == a + 1 {
                            continue;
                        }
                        let mut c = t[x * lj + y];
                        if y == a {
                            c += t[x * lj + a + 1];
                        }
                        merged.push(c);
                    }
                }
            }
            self.tables[i][j] = merged;
        }
        let b = self.marginals[v].remove(a + 1);
        self.marginals[v][a] += b;
        self.levels[v] -= 1;
    }

    /// Lowest-loss adjacent merge of `v`; ties go to the lowest index.
    fn best_merge(&self, v: usize) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for a in 0..self.levels[v] - 1 {
            let l = self.merge_loss(v, a);
            if l < best.1 {
                best = (a, l);
            }
        }
        best
    }
}

struct Coalescer {
    names: Vec<String>,
    n_continuous: usize,
    cuts: Vec<Vec<f64>>,
    ranges: Vec<(f64, f64)>,
    codes: Vec<Vec<u16>>,
    fixed: Vec<DiscreteVariable>,
    tables: PairTables,
    initial_levels: usize,
    trace: Vec<MergeStep>,
}

impl Coalescer {
    fn new(
        continuous: &[ContinuousColumn<'_>],
        fixed: &[DiscreteColumn],
        initial_levels: usize,
        include_fixed: bool,
    ) -> Result<Self> {
        let mut names = Vec::new();
        let mut cuts = Vec::new();
        let mut ranges = Vec::new();
        let mut codes = Vec::new();
        let mut levels = Vec::new();
        let n = continuous
            .first()
            .map(|c| c.values.len())
            .or(fixed.first().map(|f| f.codes.len()))
            .unwrap_or(0);
        for c in continuous {
            if c.values.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.values.len(),
                });
            }
            let cut = equal_interval_bins(c.values, initial_levels).map_err(|e| match e {
                Error::DegenerateVariable(_) => Error::DegenerateVariable(c.name.to_string()),
                e => e,
            })?;
            codes.push(
                c.values
                    .iter()
                    .map(|&v| bin_index(&cut, v))
                    .collect::<Vec<u16>>(),
            );
            ranges.push(min_max(c.values));
            cuts.push(cut);
            names.push(c.name.to_string());
            levels.push(initial_levels);
        }
        for f in fixed {
            if f.codes.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: f.codes.len(),
                });
            }
            names.push(f.variable.name.clone());
            codes.push(f.codes.clone());
            levels.push(f.variable.levels);
        }
        let m = names.len();
        let nc = continuous.len();
        let included = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| include_fixed || (i < nc && j < nc))
                    .collect()
            })
            .collect();
        let tables = PairTables::new(&codes, &levels, included);
        Ok(Self {
            names,
            n_continuous: nc,
            cuts,
            ranges,
            codes,
            fixed: fixed.iter().map(|f| f.variable.clone()).collect(),
            tables,
            initial_levels,
            trace: Vec::new(),
        })
    }

    fn merge_once(&mut self, v: usize) {
        let (a, loss) = self.tables.best_merge(v);
        self.tables.merge(v, a);
        merge_codes(&mut self.codes[v], a);
        let removed_cut = self.cuts[v].remove(a);
        self.trace.push(MergeStep {
            variable: v,
            level: a,
            removed_cut,
            loss,
            total_mi_after: self.tables.total(),
        });
    }

    fn finish(self, initial_total_mi: f64) -> Result<CoalesceResult> {
        let variables: Vec<VariableBins> = (0..self.n_continuous)
            .map(|v| VariableBins {
                variable: self.names[v].clone(),
                levels: self.cuts[v].len() + 1,
                cuts: self.cuts[v].clone(),
                min: self.ranges[v].0,
                max: self.ranges[v].1,
            })
            .collect();
        let config = DiscretizationConfig {
            initial_levels: self.initial_levels,
            variables,
        };
        let mut dvars: Vec<DiscreteVariable> = config
            .variables
            .iter()
            .map(|b| DiscreteVariable {
                name: b.variable.clone(),
                levels: b.levels,
                labels: (0..b.levels).map(|l| b.label(l)).collect(),
            })
            .collect();
        dvars.extend(self.fixed);
        let dataset = DiscreteDataset::new(dvars, self.codes, Some(config.clone()))?;
        Ok(CoalesceResult {
            config,
            dataset,
            initial_total_mi,
            trace: self.trace,
        })
    }
}

/// Coalesces each continuous variable down to its target level count.
///
/// `fixed` columns (e.g. the outcome) are not merged; they count towards the
/// pairwise MI totals only when `include_fixed` is set.
pub fn hartemink_coalesce(
    continuous: &[ContinuousColumn<'_>],
    fixed: &[DiscreteColumn],
    targets: &[usize],
    initial_levels: usize,
    include_fixed: bool,
) -> Result<CoalesceResult> {
    if targets.len() != continuous.len() {
        return Err(Error::config(
            "one target per continuous variable is required",
        ));
    }
    if let Some(&t) = targets.iter().find(|&&t| t < 2 || t > initial_levels) {
        return Err(Error::config(format!(
            "target {t} is infeasible with {initial_levels} initial levels"
        )));
    }
    let mut c = Coalescer::new(continuous, fixed, initial_levels, include_fixed)?;
    let initial = c.tables.total();
    loop {
        let mut merged = false;
        for (v, &target) in targets.iter().enumerate() {
            if c.tables.levels[v] > target {
                c.merge_once(v);
                merged = true;
            }
        }
        if !merged {
            break;
        }
    }
    c.finish(initial)
}

/// One row of the MI-versus-levels curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiCurveRow {
    pub levels: usize,
    pub total_mi: f64,
    /// Per variable (continuous then fixed): MI summed over pairs involving it.
    pub per_variable: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiCurve {
    pub variables: Vec<String>,
    pub rows: Vec<MiCurveRow>,
}

impl MiCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["levels".to_string(), "total_mi".to_string()];
        header.extend(self.variables.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.levels.to_string(), r.total_mi.to_string()];
            rec.extend(r.per_variable.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Coalesces all continuous variables in lockstep from `from` levels down to
/// `to`, recording the MI after each common level count.
pub fn mi_curve(
    continuous: &[ContinuousColumn<'_>],
    fixed: &[DiscreteColumn],
    from: usize,
    to: usize,
    include_fixed: bool,
) -> Result<MiCurve> {
    if to < 2 || to > from {
        return Err(Error::config("mi curve needs 2 <= to <= from"));
    }
    let mut c = Coalescer::new(continuous, fixed, from, include_fixed)?;
    let m = c.names.len();
    let snapshot = |c: &Coalescer, levels| MiCurveRow {
        levels,
        total_mi: c.tables.total(),
        per_variable: (0..m).map(|v| c.tables.variable_total(v)).collect(),
    };
    let mut rows = vec![snapshot(&c, from)];
    for k in (to..from).rev() {
        for v in 0..c.n_continuous {
            if c.tables.levels[v] > k {
                c.merge_once(v);
            }
        }
        rows.push(snapshot(&c, k));
    }
    Ok(MiCurve {
        variables: c.names.clone(),
        rows,
    })
}

/// Share of empty cells in the level cross-product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigValidation {
    /// Over all variables including the outcome.
    pub fraction_unobserved: f64,
    /// Over the non-outcome variables only.
    pub fraction_unobserved_predictors: f64,
    pub total_cells: f64,
    pub pass: bool,
}

/// Maximum share of unobserved level combinations a configuration may have.
pub const MAX_UNOBSERVED_FRACTION: f64 = 0.10;

fn unobserved_fraction(ds: &DiscreteDataset, vars: &[usize]) -> (f64, f64) {
    let total: f64 = vars
        .iter()
        .map(|&v| ds.variables[v].levels as f64)
        .product();
    if vars.is_empty() {
        return (0.0, 1.0);
    }
    let mut seen: HashSet<Vec<u16>> = HashSet::new();
    for r in 0..ds.n_rows() {
        seen.insert(vars.iter().map(|&v| ds.columns[v][r]).collect());
    }
    (1.0 - seen.len() as f64 / total, total)
}

/// Checks the unobserved-combination constraint. `outcome` names the
/// variable left out of the predictor-only count.
pub fn validate_config(ds: &DiscreteDataset, outcome: Option<&str>) -> ConfigValidation {
    let all: Vec<usize> = (0..ds.n_vars()).collect();
    let outcome_idx = outcome.and_then(|o| ds.index_of(o));
    let preds: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&v| Some(v) != outcome_idx)
        .collect();
    let (fraction, total) = unobserved_fraction(ds, &all);
    let (fraction_p, _) = unobserved_fraction(ds, &preds);
    ConfigValidation {
        fraction_unobserved: fraction,
        fraction_unobserved_predictors: fraction_p,
        total_cells: total,
        pass: fraction <= MAX_UNOBSERVED_FRACTION,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_interval_examples() {
        let cuts = equal_interval_bins(&[0.0, 0.3, 1.0], 4).unwrap();
        assert_eq!(cuts, vec![0.25, 0.5, 0.75]);
        assert_eq!(equal_interval_bins(&[2.0, 4.0], 2).unwrap(), vec![3.0]);
        let cuts = equal_interval_bins(&[0.001, 0.5, 0.999], 120).unwrap();
        assert_eq!(cuts.len(), 119);
        assert!(cuts[0] > 0.001 && cuts[118] < 0.999);
        assert!(matches!(
            equal_interval_bins(&[1.0, 1.0], 3),
            Err(Error::DegenerateVariable(_))
        ));
    }

    #[test]
    fn binning_boundary_convention() {
        let cuts = [0.25, 0.5, 0.75];
        assert_eq!(bin_index(&cuts, 0.25), 1);
        assert_eq!(bin_index(&cuts, 0.2499), 0);
        assert_eq!(bin_index(&cuts, -10.0), 0);
        assert_eq!(bin_index(&cuts, 10.0), 3);
        assert_eq!(bin_index(&cuts, 0.75), 3);
    }

    #[test]
    fn mutual_information_examples() {
        let a: Vec<u16> = (0..100).map(|i| (i % 2) as u16).collect();
        assert_relative_eq!(mutual_information(&a, &a), 2f64.ln(), epsilon = 1e-12);
        // product table: every combination of 2 x 3 levels equally often
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for i in 0..2 {
            for j in 0..3 {
                for _ in 0..5 {
                    x.push(i);
                    y.push(j);
                }
            }
        }
        assert!(mutual_information(&x, &y).abs() < 1e-12);
        assert_relative_eq!(total_pairwise_mi(&[&x, &y]), mutual_information(&x, &y));
    }

    #[test]
    fn shuffled_copy_has_near_zero_mi() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b: Vec<u16> = (0..20_000).map(|_| rng.random_range(0..4)).collect();
        let mut a = b.clone();
        use rand::seq::SliceRandom;
        a.shuffle(&mut rng);
        // plug-in bias is about (ra-1)(rb-1)/(2n) = 2.25e-4
        let mi = mutual_information(&a, &b);
        assert!(mi < 1.5e-3, "{mi}");
        assert!(mutual_information(&b, &b) > 1.3);
    }

    #[test]
    fn additivity_of_pairwise_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<u16> = (0..500).map(|_| rng.random_range(0..3)).collect();
        let y: Vec<u16> = x
            .iter()
            .map(|&v| if rng.random::<f64>() < 0.8 { v } else { 0 })
            .collect();
        let z: Vec<u16> = (0..500).map(|_| rng.random_range(0..2)).collect();
        let base = total_pairwise_mi(&[&x, &y]);
        let with = total_pairwise_mi(&[&x, &y, &z]);
        assert_relative_eq!(
            with - base,
            mutual_information(&x, &z) + mutual_information(&y, &z),
            epsilon = 1e-12
        );
    }

    proptest! {
        #[test]
        fn mi_is_symmetric_and_nonnegative(pairs in prop::collection::vec((0u16..4, 0u16..5), 1..200)) {
            let a: Vec<u16> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<u16> = pairs.iter().map(|p| p.1).collect();
            let ab = mutual_information(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - mutual_information(&b, &a)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_clusters_keep_the_gap_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut values = Vec::new();
        let mut label = Vec::new();
        for _ in 0..400 {
            let c = rng.random_range(0..2u8);
            let base = if c == 0 { 0.0 } else { 3.0 };
            values.push(base + rng.random::<f64>());
            label.push(c);
        }
        let fixed = [DiscreteColumn::binary("cluster", &label)];
        let col = [ContinuousColumn {
            name: "x",
            values: &values,
        }];
        let res = hartemink_coalesce(&col, &fixed, &[2], 120, true).unwrap();
        let cut = res.config.variables[0].cuts[0];

        // oracle: every initial cut placement, scored by MI with the label
        let initial = equal_interval_bins(&values, 120).unwrap();
        let codes = |c: f64| -> Vec<u16> { values.iter().map(|&v| u16::from(v >= c)).collect() };
        let best = initial
            .iter()
            .map(|&c| mutual_information(&codes(c), &fixed[0].codes))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(
            mutual_information(&codes(cut), &fixed[0].codes),
            best,
            epsilon = 1e-12
        );
        let top0 = values
            .iter()
            .zip(&label)
            .filter(|p| *p.1 == 0)
            .map(|p| *p.0)
            .fold(f64::MIN, f64::max);
        let bottom1 = values
            .iter()
            .zip(&label)
            .filter(|p| *p.1 == 1)
            .map(|p| *p.0)
            .fold(f64::MAX, f64::min);
        assert!(
            cut > top0 && cut <= bottom1,
            "cut {cut} not in gap ({top0}, {bottom1}]"
        );
    }

    #[test]
    fn target_equal_to_initial_is_identity() {
        let values: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let col = [ContinuousColumn {
            name: "x",
            values: &values,
        }];
        let res = hartemink_coalesce(&col, &[], &[10], 10, true).unwrap();
        assert!(res.trace.is_empty());
        assert_eq!(
            res.config.variables[0].cuts,
            equal_interval_bins(&values, 10).unwrap()
        );
        assert!(hartemink_coalesce(&col, &[], &[1], 10, true).is_err());
        assert!(hartemink_coalesce(&col, &[], &[11], 10, true).is_err());
    }

    #[test]
    fn empty_bins_merge_first_at_zero_loss() {
        // values occupy only the two extreme bins of ten
        let values: Vec<f64> = (0..40)
            .map(|i| if i % 2 == 0 { 0.0 } else { 10.0 })
            .collect();
        let label: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let col = [ContinuousColumn {
            name: "x",
            values: &values,
        }];
        let fixed = [DiscreteColumn::binary("y", &label)];
        let res = hartemink_coalesce(&col, &fixed, &[2], 10, true).unwrap();
        assert_eq!(res.trace.len(), 8);
        assert!(res.trace.iter().all(|s| s.loss == 0.0));
        assert_relative_eq!(
            res.trace.last().unwrap().total_mi_after,
            2f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn mi_curve_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..600).map(|_| rng.random::<f64>()).collect();
        let z: Vec<f64> = x
            .iter()
            .map(|v| v * v + 0.1 * rng.random::<f64>())
            .collect();
        let y: Vec<u8> = x
            .iter()
            .map(|&v| u8::from(v + 0.3 * rng.random::<f64>() > 0.6))
            .collect();
        let cols = [
            ContinuousColumn {
                name: "x",
                values: &x,
            },
            ContinuousColumn {
                name: "z",
                values: &z,
            },
        ];
        let curve = mi_curve(&cols, &[DiscreteColumn::binary("y", &y)], 40, 2, true).unwrap();
        assert_eq!(curve.rows.len(), 39);
        assert_eq!(curve.rows.first().unwrap().levels, 40);
        assert_eq!(curve.rows.last().unwrap().levels, 2);
        for w in curve.rows.windows(2) {
            assert!(w[1].total_mi <= w[0].total_mi + 1e-12);
        }
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("levels,total_mi,x,z,y\n"));
    }

    #[test]
    fn validation_counts_unobserved_cells() {
        let vars = |levels: &[usize]| -> Vec<DiscreteVariable> {
            levels
                .iter()
                .enumerate()
                .map(|(i, &l)| DiscreteVariable {
                    name: format!("v{i}"),
                    levels: l,
                    labels: vec![],
                })
                .collect()
        };
        let ds = DiscreteDataset::new(vars(&[3, 4, 2, 2, 2]), vec![vec![0]; 5], None).unwrap();
        let v = validate_config(&ds, Some("v4"));
        assert_relative_eq!(v.fraction_unobserved, 95.0 / 96.0);
        assert!(!v.pass);
        let mut cols = vec![Vec::new(), Vec::new()];
        for a in 0..2u16 {
            for b in 0..3u16 {
                cols[0].push(a);
                cols[1].push(b);
            }
        }
        let ds = DiscreteDataset::new(vars(&[2, 3]), cols, None).unwrap();
        let v = validate_config(&ds, None);
        assert_eq!(v.fraction_unobserved, 0.0);
        assert!(v.pass);
    }

    #[test]
    fn config_json_round_trip_and_apply() {
        let values: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let y: Vec<u8> = values.iter().map(|&v| u8::from(v > 0.5)).collect();
        let col = [ContinuousColumn {
            name: "fv",
            values: &values,
        }];
        let fixed = [DiscreteColumn::binary("outcome", &y)];
        let res = hartemink_coalesce(&col, &fixed, &[4], 20, true).unwrap();
        let json = res.config.to_json().unwrap();
        let back = DiscretizationConfig::from_json(&json).unwrap();
        assert_eq!(back, res.config);
        let ds = back.apply(&[&values], &fixed).unwrap();
        assert_eq!(ds.columns, res.dataset.columns);
        assert_eq!(ds.levels(), vec![4, 2]);
        // fresh data outside the training range clamps
        let ds = back
            .apply(
                &[&[-5.0, 5.0]],
                &[DiscreteColumn::binary("outcome", &[0, 1])],
            )
            .unwrap();
        assert_eq!(ds.columns[0], vec![0, 3]);
        let label = res.config.variables[0].label(0);
        assert!(label.starts_with("[0,"), "{label}");
    }
}
