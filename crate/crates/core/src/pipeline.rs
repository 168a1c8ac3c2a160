//! One configuration end to end: discretize a tier dataset, share a fold
//! plan across model families, and collect the summary row.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bayesnet::FlatShape;
use crate::discretize::{
    hartemink_coalesce, validate_config, CoalesceResult, ConfigValidation, ContinuousColumn,
    DiscreteColumn, DiscreteDataset, DiscretizationConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_model, flat_bic, make_folds, tier_questions, EvalContext, EvalData, EvalReport,
    FoldPlan, ModelFamily, ReportRow, OUTCOME,
};
use crate::features::{build_feature_table, tier_predictors, FeatureParams, TierDataset};
use crate::ingest::{generate_synthetic, SynthConfig};
use crate::util::{derive_seed, sha256_hex};

pub const DEFAULT_INITIAL_LEVELS: usize = 120;

/// A named discretization: tier plus target level count per tier predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub tier: u8,
    pub targets: &'static [usize],
}

/// The published configuration rows.
pub const TABLE1_PRESETS: [Preset; 9] = [
    Preset {
        name: "1.0",
        tier: 1,
        targets: &[80],
    },
    Preset {
        name: "2.0",
        tier: 2,
        targets: &[4, 10],
    },
    Preset {
        name: "2.1",
        tier: 2,
        targets: &[5, 8],
    },
    Preset {
        name: "2.2",
        tier: 2,
        targets: &[5, 7],
    },
    Preset {
        name: "2.3",
        tier: 2,
        targets: &[4, 6],
    },
    Preset {
        name: "3.0",
        tier: 3,
        targets: &[3, 6, 3],
    },
    Preset {
        name: "3.1",
        tier: 3,
        targets: &[3, 5, 3],
    },
    Preset {
        name: "3.2",
        tier: 3,
        targets: &[3, 5, 2],
    },
    Preset {
        name: "4.0",
        tier: 4,
        targets: &[3, 4, 2, 2],
    },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    TABLE1_PRESETS.iter().find(|p| p.name == name)
}

/// Orientations for undirected consensus edges among the tier predictors:
/// timing and skill come before the forecast, and the forecast fixes its
/// distance from the crowd. Acyclic by construction.
pub const PREDICTOR_ORIENTATIONS: [(&str, &str); 6] = [
    ("days_prior", "msbs"),
    ("days_prior", "abs_diff_agg"),
    ("days_prior", "forecast_value"),
    ("msbs", "abs_diff_agg"),
    ("msbs", "forecast_value"),
    ("forecast_value", "abs_diff_agg"),
];

pub fn default_orientations() -> Vec<(String, String)> {
    PREDICTOR_ORIENTATIONS
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub tier: u8,
    /// Target levels per tier predictor, in tier order.
    pub targets: Vec<usize>,
    pub initial_levels: usize,
    /// Count the outcome in the MI totals that drive coalescing.
    pub include_outcome_in_mi: bool,
    /// Abort when the unobserved-cell constraint fails.
    pub enforce_validation: bool,
    pub k: usize,
    pub seed: u64,
    pub families: Vec<ModelFamily>,
    pub eval: EvalContext,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "2.3".into(),
            tier: 2,
            targets: vec![4, 6],
            initial_levels: DEFAULT_INITIAL_LEVELS,
            include_outcome_in_mi: true,
            enforce_validation: true,
            k: 10,
            seed: 1,
            families: ModelFamily::ALL.to_vec(),
            eval: EvalContext::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_preset(p: &Preset) -> Self {
        Self {
            name: p.name.to_string(),
            tier: p.tier,
            targets: p.targets.to_vec(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let preds = tier_predictors(self.tier)?;
        if self.targets.len() != preds.len() {
            return Err(Error::config(format!(
                "tier {} has {} predictors but {} targets were given",
                self.tier,
                preds.len(),
                self.targets.len()
            )));
        }
        if let Some(t) = self
            .targets
            .iter()
            .find(|&&t| t < 2 || t > self.initial_levels)
        {
            return Err(Error::config(format!(
                "target {t} outside 2..={}",
                self.initial_levels
            )));
        }
        if self.k < 2 {
            return Err(Error::config("k must be at least 2"));
        }
        if self.families.is_empty() {
            return Err(Error::config("no model families selected"));
        }
        self.eval.bn.validate()
    }

    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }
}

/// Builds a tier dataset from a seeded synthetic tournament.
pub fn synthetic_tier(
    synth: &SynthConfig,
    seed: u64,
    tier: u8,
    features: &FeatureParams,
) -> Result<TierDataset> {
    let (t, _) = generate_synthetic(synth, seed)?;
    let table = build_feature_table(&t, features)?;
    TierDataset::from_table(&table, tier)
}

/// Coalesces the tier predictors to their targets; the outcome rides along.
pub fn discretize_tier(
    td: &TierDataset,
    targets: &[usize],
    initial_levels: usize,
    include_outcome: bool,
) -> Result<CoalesceResult> {
    let preds = td.predictors();
    let cols: Vec<Vec<f64>> = preds.iter().map(|&p| td.column(p)).collect();
    let continuous: Vec<ContinuousColumn> = preds
        .iter()
        .zip(&cols)
        .map(|(p, c)| ContinuousColumn {
            name: p.name(),
            values: c,
        })
        .collect();
    let fixed = [DiscreteColumn::binary(OUTCOME, &td.outcomes())];
    hartemink_coalesce(
        &continuous,
        &fixed,
        targets,
        initial_levels,
        include_outcome,
    )
}

/// Re-applies stored cut points to a tier dataset; the outcome rides along.
pub fn apply_discretization(
    td: &TierDataset,
    config: &DiscretizationConfig,
) -> Result<DiscreteDataset> {
    let cols: Vec<Vec<f64>> = td.predictors().iter().map(|&p| td.column(p)).collect();
    for (v, p) in config.variables.iter().zip(td.predictors()) {
        if v.variable != p.name() {
            return Err(Error::config(format!(
                "discretization is for `{}`, tier has `{}`",
                v.variable,
                p.name()
            )));
        }
    }
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    config.apply(&refs, &[DiscreteColumn::binary(OUTCOME, &td.outcomes())])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigOutcome {
    pub plan: FoldPlan,
    pub discretization: CoalesceResult,
    pub validation: ConfigValidation,
    pub reports: Vec<EvalReport>,
    /// BIC of the flat shape not used by the flat family.
    pub alternate_flat_bic: f64,
    pub row: ReportRow,
}

impl ConfigOutcome {
    pub fn report(&self, family: ModelFamily) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.family == family)
    }
}

/// Runs every selected family under one fold plan.
pub fn run_config(td: &TierDataset, cfg: &ExperimentConfig) -> Result<ConfigOutcome> {
    cfg.validate()?;
    if td.tier != cfg.tier {
        return Err(Error::config(format!(
            "dataset is tier {} but config wants tier {}",
            td.tier, cfg.tier
        )));
    }
    let plan = make_folds(&tier_questions(td), cfg.k, derive_seed(cfg.seed, "folds"))?;
    let disc = discretize_tier(
        td,
        &cfg.targets,
        cfg.initial_levels,
        cfg.include_outcome_in_mi,
    )?;
    let validation = validate_config(&disc.dataset, Some(OUTCOME));
    if cfg.enforce_validation && !validation.pass {
        return Err(Error::Constraint(format!(
            "unobserved level combinations {:.4} exceed {}",
            validation.fraction_unobserved,
            crate::discretize::MAX_UNOBSERVED_FRACTION
        )));
    }
    let mut ctx = cfg.eval.clone();
    ctx.seed = derive_seed(cfg.seed, "evaluate");
    let data = EvalData {
        tier: td,
        discrete: Some(&disc.dataset),
    };
    let reports = cfg
        .families
        .iter()
        .map(|&f| evaluate_model(f, data, &plan, &ctx, &cfg.name))
        .collect::<Result<Vec<_>>>()?;
    let other_shape = match ctx.bn.flat_shape {
        FlatShape::NaiveBayes => FlatShape::Converging,
        FlatShape::Converging => FlatShape::NaiveBayes,
    };
    let alternate_flat_bic = flat_bic(td, &disc.dataset, other_shape)?;

    let levels: BTreeMap<String, usize> = td
        .predictors()
        .iter()
        .zip(&cfg.targets)
        .map(|(p, &l)| (p.name().to_string(), l))
        .collect();
    let mut row = ReportRow::new(&cfg.name, cfg.tier, levels);
    for r in &reports {
        row.add(r);
    }
    let key = match other_shape {
        FlatShape::Converging => "flat_converging",
        FlatShape::NaiveBayes => "flat_naive_bayes",
    };
    row.bic.insert(key.to_string(), alternate_flat_bic);
    Ok(ConfigOutcome {
        plan,
        discretization: disc,
        validation,
        reports,
        alternate_flat_bic,
        row,
    })
}
