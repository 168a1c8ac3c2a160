//! Question-blocked cross-validation, AUC, model evaluation, logistic
//! regression diagnostics and the summary table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bayesnet::{
    bic_score, consensus_structure, fit_cpts, flat_structure, learn_fold_structures,
    predict_outcome, ArcConstraints, BnParams, Dag, FlatShape,
};
use crate::discretize::DiscreteDataset;
use crate::error::{Error, Result};
use crate::features::{Predictor, TierDataset};
use crate::logreg::{
    cv_select_lambda, dummy_encode, fit_warm, irls_fit, CdOptions, ColumnMeta, CvCriterion,
    DesignMatrix, LogisticModel, PathSettings, Penalty,
};
use crate::util::{derive_seed, mean, sample_sd};

/// Name of the outcome node in discrete datasets.
pub const OUTCOME: &str = "outcome";

/// Question → fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, question_id: &str) -> Option<usize> {
        self.assignment.get(question_id).copied()
    }

    /// Fold index for each row, by the row's question.
    pub fn row_folds<S: AsRef<str>>(&self, question_ids: &[S]) -> Result<Vec<usize>> {
        question_ids
            .iter()
            .map(|q| {
                self.fold_of(q.as_ref()).ok_or_else(|| Error::Lookup {
                    kind: "question",
                    id: q.as_ref().to_string(),
                })
            })
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Split of row indices into (train, test) for each fold.
pub fn fold_rows(row_folds: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..row_folds.len()).partition(|&i| row_folds[i] == f);
            (train, test)
        })
        .collect()
}

/// Shuffles questions within each outcome class and deals them round-robin,
/// the dealing pointer carrying over from one class to the next.
pub fn make_folds(questions: &[(String, u8)], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || k > questions.len() {
        return Err(Error::config(format!(
            "k = {k} folds for {} questions",
            questions.len()
        )));
    }
    let mut sorted: Vec<&(String, u8)> = questions.iter().collect();
    sorted.sort();
    sorted.dedup_by(|a, b| a.0 == b.0);
    if sorted.len() != questions.len() {
        return Err(Error::domain("duplicate question ids"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut next = 0;
    for class in [0u8, 1] {
        let mut ids: Vec<&String> = sorted
            .iter()
            .filter(|q| q.1 == class)
            .map(|q| &q.0)
            .collect();
        ids.shuffle(&mut rng);
        for id in ids {
            assignment.insert(id.clone(), next % k);
            next += 1;
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        assignment,
    })
}

/// Questions of a tier dataset with their outcomes, one entry per question.
pub fn tier_questions(td: &TierDataset) -> Vec<(String, u8)> {
    let map: BTreeMap<&str, u8> = td
        .rows
        .iter()
        .map(|r| (r.question_id.as_str(), r.outcome))
        .collect();
    map.into_iter().map(|(q, o)| (q.to_string(), o)).collect()
}

/// Mann–Whitney AUC with ties counted as one half, from exact integer counts.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("NaN score"));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the Mann–Whitney numerator: 2·concordant + ties
    let mut twice: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        twice += 2 * gp * neg_below + gp * gn;
        neg_below += gn;
        i = j;
    }
    Ok(twice as f64 / (2 * pos * neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    BaselineAggregate,
    BnStructured,
    BnFlat,
    LogregDiscrete,
    LogregContinuous,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::BaselineAggregate,
        ModelFamily::BnStructured,
        ModelFamily::BnFlat,
        ModelFamily::LogregDiscrete,
        ModelFamily::LogregContinuous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::BaselineAggregate => "baseline_aggregate",
            ModelFamily::BnStructured => "bn_structured",
            ModelFamily::BnFlat => "bn_flat",
            ModelFamily::LogregDiscrete => "logreg_discrete",
            ModelFamily::LogregContinuous => "logreg_continuous",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogregParams {
    /// Penalty for the dummy-coded model; defaults to ridge on tier 1, lasso otherwise.
    pub discrete_penalty: Option<Penalty>,
    /// Penalty for the continuous model; defaults to none on tier 1, lasso otherwise.
    pub continuous_penalty: Option<Penalty>,
    pub path: PathSettings,
    pub cd: CdOptions,
    pub criterion: CvCriterion,
}

impl Default for LogregParams {
    fn default() -> Self {
        Self {
            discrete_penalty: None,
            continuous_penalty: None,
            path: PathSettings::default(),
            cd: CdOptions::default(),
            criterion: CvCriterion::Deviance,
        }
    }
}

impl LogregParams {
    pub fn penalty(&self, family: ModelFamily, tier: u8) -> Penalty {
        match family {
            ModelFamily::LogregDiscrete => {
                self.discrete_penalty
                    .unwrap_or(if tier == 1 { Penalty::L2 } else { Penalty::L1 })
            }
            _ => self.continuous_penalty.unwrap_or(if tier == 1 {
                Penalty::None
            } else {
                Penalty::L1
            }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalContext {
    pub bn: BnParams,
    /// User constraints; arcs out of the outcome are always forbidden on top.
    pub constraints: ArcConstraints,
    pub logreg: LogregParams,
    pub seed: u64,
}

/// Everything a family might train on; rows of `discrete` align with `tier`.
#[derive(Debug, Clone, Copy)]
pub struct EvalData<'a> {
    pub tier: &'a TierDataset,
    pub discrete: Option<&'a DiscreteDataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tier: u8,
    pub config: String,
    pub family: ModelFamily,
    /// `None` marks folds whose test rows hold a single outcome class.
    pub per_fold: Vec<Option<f64>>,
    pub mean: f64,
    /// Sample standard deviation across the scored folds.
    pub sd: f64,
    pub bic: Option<f64>,
    pub lambda: Option<f64>,
    pub penalty: Option<Penalty>,
    /// Arcs of the structure used, for network families.
    pub arcs: Option<Vec<(String, String)>>,
    pub seconds: f64,
}

impl EvalReport {
    pub fn scored_folds(&self) -> Vec<f64> {
        self.per_fold.iter().flatten().copied().collect()
    }

    pub fn excluded_folds(&self) -> Vec<usize> {
        (0..self.per_fold.len())
            .filter(|&f| self.per_fold[f].is_none())
            .collect()
    }

    /// Recomputes mean and sd from the stored per-fold values.
    pub fn summarize(&mut self) {
        let s = self.scored_folds();
        self.mean = if s.is_empty() { f64::NAN } else { mean(&s) };
        self.sd = if s.len() < 2 { f64::NAN } else { sample_sd(&s) };
    }
}

fn discrete_required<'a>(data: &EvalData<'a>, family: ModelFamily) -> Result<&'a DiscreteDataset> {
    data.discrete
        .ok_or_else(|| Error::config(format!("{} needs a discretized dataset", family.name())))
}

fn continuous_design(td: &TierDataset) -> Result<DesignMatrix> {
    let preds = td.predictors();
    let cols: Vec<Vec<f64>> = preds.iter().map(|&p| td.column(p)).collect();
    DesignMatrix::from_columns(
        preds
            .iter()
            .map(|p| ColumnMeta::continuous(p.name()))
            .collect(),
        &cols,
    )
}

fn predictor_names(td: &TierDataset) -> Vec<String> {
    td.predictors()
        .iter()
        .map(|p| p.name().to_string())
        .collect()
}

/// Structure-learning constraints with outcome→predictor arcs forbidden.
pub fn structure_constraints(user: &ArcConstraints, nodes: &[String]) -> ArcConstraints {
    let mut c = user.clone();
    c.forbidden
        .extend(ArcConstraints::outcome_sink(nodes, OUTCOME).forbidden);
    c
}

/// Learns one structure per training split and keeps the consensus arcs.
pub fn learn_consensus_structure(
    ds: &DiscreteDataset,
    splits: &[(Vec<usize>, Vec<usize>)],
    ctx: &EvalContext,
) -> Result<Dag> {
    let nodes: Vec<String> = ds.variables.iter().map(|v| v.name.clone()).collect();
    let constraints = structure_constraints(&ctx.constraints, &nodes);
    let train: Vec<Vec<usize>> = splits.iter().map(|s| s.0.clone()).collect();
    let graphs = learn_fold_structures(ds, &train, ctx.bn.alpha, &constraints)?;
    consensus_structure(
        &graphs,
        ctx.bn.consensus_threshold(graphs.len()),
        &constraints,
    )
}

fn score_folds<F>(
    splits: &[(Vec<usize>, Vec<usize>)],
    labels: &[u8],
    score: F,
) -> Result<Vec<Option<f64>>>
where
    F: Fn(usize, &[usize], &[usize]) -> Result<Vec<f64>> + Sync,
{
    splits
        .par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let y: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
            if !(y.contains(&0) && y.contains(&1)) {
                return Ok(None);
            }
            let s = score(f, train, test)?;
            Ok(Some(auc(&s, &y)?))
        })
        .collect()
}

/// `lambdas` is the CV path up to and including the selected λ; empty means IRLS.
fn fit_logreg(
    x: &DesignMatrix,
    y: &[u8],
    penalty: Penalty,
    lambdas: &[f64],
    cd: &CdOptions,
) -> Result<LogisticModel> {
    if penalty == Penalty::None || lambdas.is_empty() {
        irls_fit(x, y)
    } else {
        fit_warm(x, y, penalty, lambdas, cd)
    }
}

/// Cross-validated AUC of one model family under a shared fold plan.
pub fn evaluate_model(
    family: ModelFamily,
    data: EvalData,
    plan: &FoldPlan,
    ctx: &EvalContext,
    config: &str,
) -> Result<EvalReport> {
    let start = Instant::now();
    let td = data.tier;
    let labels = td.outcomes();
    let row_folds = plan.row_folds(&td.question_ids())?;
    let splits = fold_rows(&row_folds, plan.k);
    let mut report = EvalReport {
        tier: td.tier,
        config: config.to_string(),
        family,
        per_fold: Vec::new(),
        mean: f64::NAN,
        sd: f64::NAN,
        bic: None,
        lambda: None,
        penalty: None,
        arcs: None,
        seconds: 0.0,
    };

    match family {
        ModelFamily::BaselineAggregate => {
            let p = td.consensus();
            report.per_fold = score_folds(&splits, &labels, |_, _, test| {
                Ok(test.iter().map(|&i| p[i]).collect())
            })?;
        }
        ModelFamily::BnStructured | ModelFamily::BnFlat => {
            let ds = discrete_required(&data, family)?;
            if ds.n_rows() != td.len() {
                return Err(Error::DimensionMismatch {
                    expected: td.len(),
                    got: ds.n_rows(),
                });
            }
            let dag = if family == ModelFamily::BnStructured {
                learn_consensus_structure(ds, &splits, ctx)?
            } else {
                flat_structure(&predictor_names(td), OUTCOME, ctx.bn.flat_shape)?
            };
            report.per_fold = score_folds(&splits, &labels, |f, train, test| {
                let bn = fit_cpts(&dag, &ds.subset(train), ctx.bn.iss)?;
                let seed = derive_seed(ctx.seed, &format!("{}/fold{f}", family.name()));
                predict_outcome(&bn, &ds.subset(test), OUTCOME, ctx.bn.n_samples, seed)
            })?;
            report.bic = Some(bic_score(&dag, ds)?);
            report.arcs = Some(dag.named_arcs());
        }
        ModelFamily::LogregDiscrete | ModelFamily::LogregContinuous => {
            let x = logreg_design(family, &data)?;
            let penalty = ctx.logreg.penalty(family, td.tier);
            let lambdas = if penalty == Penalty::None {
                Vec::new()
            } else {
                let lp = &ctx.logreg;
                let mut cv = cv_select_lambda(
                    &x,
                    &labels,
                    &row_folds,
                    plan.k,
                    penalty,
                    &lp.path,
                    &lp.cd,
                    lp.criterion,
                )?;
                cv.lambdas.truncate(cv.best_index + 1);
                cv.lambdas
            };
            let lambda = lambdas.last().copied();
            report.per_fold = score_folds(&splits, &labels, |_, train, test| {
                let y: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
                let m = fit_logreg(&x.subset(train), &y, penalty, &lambdas, &ctx.logreg.cd)?;
                m.predict(&x.subset(test))
            })?;
            report.penalty = Some(penalty);
            report.lambda = lambda;
        }
    }
    report.summarize();
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// BIC of the flat structure of the given shape on the full dataset.
pub fn flat_bic(td: &TierDataset, ds: &DiscreteDataset, shape: FlatShape) -> Result<f64> {
    bic_score(&flat_structure(&predictor_names(td), OUTCOME, shape)?, ds)
}

fn logreg_design(family: ModelFamily, data: &EvalData) -> Result<DesignMatrix> {
    match family {
        ModelFamily::LogregDiscrete => {
            let ds = discrete_required(data, family)?;
            let names = predictor_names(data.tier);
            dummy_encode(ds, &names.iter().map(String::as_str).collect::<Vec<_>>())
        }
        ModelFamily::LogregContinuous => continuous_design(data.tier),
        other => Err(Error::config(format!(
            "{} is not a logistic regression family",
            other.name()
        ))),
    }
}

/// Fits a logistic family on all rows at the λ chosen by cross-validation
/// under `plan` (IRLS when the family is unpenalized).
pub fn fit_full_logreg(
    family: ModelFamily,
    data: EvalData,
    plan: &FoldPlan,
    params: &LogregParams,
) -> Result<LogisticModel> {
    let td = data.tier;
    let x = logreg_design(family, &data)?;
    let labels = td.outcomes();
    let penalty = params.penalty(family, td.tier);
    if penalty == Penalty::None {
        return irls_fit(&x, &labels);
    }
    let row_folds = plan.row_folds(&td.question_ids())?;
    let cv = cv_select_lambda(
        &x,
        &labels,
        &row_folds,
        plan.k,
        penalty,
        &params.path,
        &params.cd,
        params.criterion,
    )?;
    fit_warm(
        &x,
        &labels,
        penalty,
        &cv.lambdas[..=cv.best_index],
        &params.cd,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxTidwellTerm {
    pub predictor: String,
    /// Added to the predictor before forming x·ln x.
    pub shift: f64,
    pub z: f64,
    pub p: f64,
}

fn two_sided_p(z: f64) -> f64 {
    let n = Normal::standard();
    2.0 * n.sf(z.abs())
}

/// Adds x·ln x for every column and reports each interaction's Wald test.
pub fn box_tidwell(x: &DesignMatrix, labels: &[u8]) -> Result<Vec<BoxTidwellTerm>> {
    let mut extra_meta = Vec::new();
    let mut extra = Vec::new();
    let mut shifts = Vec::new();
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let shift = if min <= 0.0 { 1.0 - min } else { 0.0 };
        let shifted: Vec<f64> = col.iter().map(|v| v + shift).collect();
        if shifted.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::domain(format!(
                "`{}` is not positive after shifting",
                x.columns[j].name
            )));
        }
        extra.push(shifted.iter().map(|v| v * v.ln()).collect());
        extra_meta.push(ColumnMeta::continuous(&format!("{}:ln", x.columns[j].name)));
        shifts.push(shift);
    }
    let augmented = x.with_extra_columns(extra_meta, &extra)?;
    let model = irls_fit(&augmented, labels)?;
    let p = x.n_cols();
    (0..p)
        .map(|j| {
            let z = model.wald_z(p + j).ok_or(Error::Collinearity)?;
            Ok(BoxTidwellTerm {
                predictor: x.columns[j].name.clone(),
                shift: shifts[j],
                z,
                p: two_sided_p(z),
            })
        })
        .collect()
}

/// Variance inflation factor per column, by OLS of each column on the rest.
pub fn vif(x: &DesignMatrix) -> Result<Vec<f64>> {
    let p = x.n_cols();
    if p < 2 {
        return Err(Error::config("VIF needs at least two columns"));
    }
    let n = x.n_rows();
    (0..p)
        .map(|j| {
            let y = DVector::from_vec(x.column(j));
            let others: Vec<usize> = (0..p).filter(|&c| c != j).collect();
            let a = DMatrix::from_fn(
                n,
                p,
                |i, c| if c == 0 { 1.0 } else { x.get(i, others[c - 1]) },
            );
            let ata = a.transpose() * &a;
            let aty = a.transpose() * &y;
            let ybar = y.mean();
            let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
            if sst == 0.0 {
                return Ok(f64::INFINITY);
            }
            let Some(chol) = ata.cholesky() else {
                return Ok(f64::INFINITY);
            };
            let beta = chol.solve(&aty);
            let sse: f64 = (&y - &a * beta).iter().map(|r| r * r).sum();
            let r2 = 1.0 - sse / sst;
            Ok(if r2 >= 1.0 - 1e-12 {
                f64::INFINITY
            } else {
                1.0 / (1.0 - r2)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub leverage: Vec<f64>,
    pub std_residuals: Vec<f64>,
    pub cooks: Vec<f64>,
    pub cooks_threshold: f64,
    pub cooks_fraction_over: f64,
    pub resid_fraction_over_3: f64,
}

/// Leverage, standardized Pearson residuals and Cook's distances of an
/// unpenalized fit.
pub fn influence(model: &LogisticModel, x: &DesignMatrix, labels: &[u8]) -> Result<Influence> {
    let n = x.n_rows();
    let p = x.n_cols() + 1;
    let probs = model.predict(x)?;
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xi = vec![1.0; p];
    for i in 0..n {
        xi[1..].copy_from_slice(x.row(i));
        let w = probs[i] * (1.0 - probs[i]);
        for r in 0..p {
            for c in 0..p {
                xtwx[(r, c)] += w * xi[r] * xi[c];
            }
        }
    }
    let inv = xtwx.cholesky().ok_or(Error::Collinearity)?.inverse();
    let mut leverage = Vec::with_capacity(n);
    let mut std_residuals = Vec::with_capacity(n);
    let mut cooks = Vec::with_capacity(n);
    for i in 0..n {
        xi[1..].copy_from_slice(x.row(i));
        let v = DVector::from_column_slice(&xi);
        let w = probs[i] * (1.0 - probs[i]);
        let h = (w * (v.transpose() * &inv * &v)[(0, 0)]).clamp(0.0, 1.0 - 1e-12);
        let pearson = (f64::from(labels[i]) - probs[i]) / w.sqrt();
        let r = pearson / (1.0 - h).sqrt();
        leverage.push(h);
        std_residuals.push(r);
        cooks.push(r * r * h / (p as f64 * (1.0 - h)));
    }
    let threshold = 4.0 / n as f64;
    let frac = |c: usize| c as f64 / n as f64;
    Ok(Influence {
        cooks_fraction_over: frac(cooks.iter().filter(|&&d| d > threshold).count()),
        resid_fraction_over_3: frac(std_residuals.iter().filter(|r| r.abs() > 3.0).count()),
        leverage,
        std_residuals,
        cooks,
        cooks_threshold: threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeCheck {
    pub n: usize,
    pub events: usize,
    pub parameters: usize,
    /// Minority-class count per parameter; at least 10 passes.
    pub events_per_parameter: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub box_tidwell: Vec<BoxTidwellTerm>,
    pub vif: Vec<(String, f64)>,
    pub cooks_fraction_over_4n: f64,
    pub resid_fraction_over_3: f64,
    pub sample_size_check: SampleSizeCheck,
    pub model: LogisticModel,
}

/// Assumption checks on the unpenalized continuous model over all rows.
pub fn diagnostics(td: &TierDataset) -> Result<DiagnosticsReport> {
    let x = continuous_design(td)?;
    let y = td.outcomes();
    let model = irls_fit(&x, &y)?;
    let infl = influence(&model, &x, &y)?;
    let vifs = if x.n_cols() >= 2 {
        vif(&x)?
    } else {
        vec![1.0; x.n_cols()]
    };
    let ones = y.iter().filter(|&&v| v == 1).count();
    let events = ones.min(y.len() - ones);
    let parameters = x.n_cols() + 1;
    let epp = events as f64 / parameters as f64;
    Ok(DiagnosticsReport {
        box_tidwell: box_tidwell(&x, &y)?,
        vif: x.column_names().into_iter().zip(vifs).collect(),
        cooks_fraction_over_4n: infl.cooks_fraction_over,
        resid_fraction_over_3: infl.resid_fraction_over_3,
        sample_size_check: SampleSizeCheck {
            n: y.len(),
            events,
            parameters,
            events_per_parameter: epp,
            pass: epp >= 10.0,
        },
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub per_fold: Vec<Option<f64>>,
    pub mean: f64,
    pub sd: f64,
}

/// One configuration's line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config: String,
    pub tier: u8,
    /// Level counts keyed by predictor name.
    pub levels: BTreeMap<String, usize>,
    pub families: BTreeMap<ModelFamily, FamilySummary>,
    /// BIC keyed by structure: `structured`, `flat`, and optionally `flat_converging`.
    pub bic: BTreeMap<String, f64>,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsReport>,
}

impl ReportRow {
    pub fn new(config: &str, tier: u8, levels: BTreeMap<String, usize>) -> Self {
        Self {
            config: config.to_string(),
            tier,
            levels,
            families: BTreeMap::new(),
            bic: BTreeMap::new(),
            diagnostics: None,
        }
    }

    pub fn add(&mut self, r: &EvalReport) {
        self.families.insert(
            r.family,
            FamilySummary {
                per_fold: r.per_fold.clone(),
                mean: r.mean,
                sd: r.sd,
            },
        );
        if let Some(b) = r.bic {
            let key = if r.family == ModelFamily::BnStructured {
                "structured"
            } else {
                "flat"
            };
            self.bic.insert(key.to_string(), b);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

fn level_string(levels: &BTreeMap<String, usize>) -> String {
    let order = Predictor::ALL.map(|p| p.name());
    let mut known: Vec<String> = order
        .iter()
        .filter_map(|n| levels.get(*n).map(|l| l.to_string()))
        .collect();
    known.extend(
        levels
            .iter()
            .filter(|(k, _)| !order.contains(&k.as_str()))
            .map(|(_, l)| l.to_string()),
    );
    known.join(",")
}

impl ReportTable {
    pub const COLUMNS: [&'static str; 9] = [
        "Config",
        "Levels",
        "Baseline",
        "BN structured",
        "BN flat",
        "BIC structured",
        "BIC flat",
        "LogReg discrete",
        "LogReg continuous",
    ];

    /// Aligned text, one line per configuration; absent cells are blank.
    pub fn to_text(&self) -> String {
        let cell = |row: &ReportRow, f: ModelFamily| {
            row.families
                .get(&f)
                .map(|s| format!("{:.3} ({:.3})", s.mean, s.sd))
                .unwrap_or_default()
        };
        let bic = |row: &ReportRow, k: &str| {
            row.bic
                .get(k)
                .map(|b| format!("{b:.0}"))
                .unwrap_or_default()
        };
        let mut table: Vec<Vec<String>> =
            vec![Self::COLUMNS.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            table.push(vec![
                r.config.clone(),
                level_string(&r.levels),
                cell(r, ModelFamily::BaselineAggregate),
                cell(r, ModelFamily::BnStructured),
                cell(r, ModelFamily::BnFlat),
                bic(r, "structured"),
                bic(r, "flat"),
                cell(r, ModelFamily::LogregDiscrete),
                cell(r, ModelFamily::LogregContinuous),
            ]);
        }
        let widths: Vec<usize> = (0..Self::COLUMNS.len())
            .map(|c| {
                table
                    .iter()
                    .map(|row| row[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut s = String::new();
        for row in &table {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(v, &w)| format!("{v:<w$}"))
                .collect();
            writeln!(s, "{}", line.join("  ").trim_end()).unwrap();
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Questions appearing on both sides of any split; empty when segregation holds.
pub fn leaked_questions<S: AsRef<str>>(
    question_ids: &[S],
    splits: &[(Vec<usize>, Vec<usize>)],
) -> BTreeSet<String> {
    let mut leaked = BTreeSet::new();
    for (train, test) in splits {
        let tr: BTreeSet<&str> = train.iter().map(|&i| question_ids[i].as_ref()).collect();
        for &i in test {
            if tr.contains(question_ids[i].as_ref()) {
                leaked.insert(question_ids[i].as_ref().to_string());
            }
        }
    }
    leaked
}
