//! Run configuration: TOML sections on top of an optional named preset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crowdcast::bayesnet::{ArcConstraints, BnParams};
use crowdcast::eval::{EvalContext, LogregParams, ModelFamily};
use crowdcast::features::{tier_predictors, FeatureParams};
use crowdcast::ingest::{CsvSchema, SynthConfig};
use crowdcast::pipeline::{
    default_orientations, ExperimentConfig, DEFAULT_INITIAL_LEVELS, TABLE1_PRESETS,
};
use crowdcast::util::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const SYNTH_SMOKE: &str = include_str!("../presets/synth_smoke.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    pub schema: CsvSchema,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            schema: CsvSchema::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizeConfig {
    /// Target level count per tier predictor.
    pub levels: BTreeMap<String, usize>,
    pub initial_levels: usize,
    pub include_outcome_in_mi: bool,
    pub enforce_validation: bool,
    /// Lowest level count written by `mi-curve`.
    pub mi_curve_min_levels: usize,
}

impl Default for DiscretizeConfig {
    fn default() -> Self {
        Self {
            levels: BTreeMap::new(),
            initial_levels: DEFAULT_INITIAL_LEVELS,
            include_outcome_in_mi: true,
            enforce_validation: true,
            mi_curve_min_levels: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub families: Vec<ModelFamily>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            families: ModelFamily::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub tier: u8,
    pub seed: u64,
    /// Output directory; `--out` wins. Not part of the config hash.
    pub out: Option<PathBuf>,
    pub input: Option<InputConfig>,
    pub synth: Option<SynthConfig>,
    pub features: FeatureParams,
    pub discretize: DiscretizeConfig,
    pub bn: BnParams,
    pub constraints: ArcConstraints,
    pub logreg: LogregParams,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            tier: 2,
            seed: 1,
            out: None,
            input: None,
            synth: None,
            features: FeatureParams::default(),
            discretize: DiscretizeConfig::default(),
            bn: BnParams::default(),
            constraints: ArcConstraints::default(),
            logreg: LogregParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Names accepted by `--preset`.
pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = TABLE1_PRESETS.iter().map(|p| table1_name(p.name)).collect();
    names.push("synth_smoke".into());
    names
}

fn table1_name(row: &str) -> String {
    format!("table1_row_{}", row.replace('.', "_"))
}

fn preset_value(name: &str) -> Result<toml::Table, CliError> {
    if name == "synth_smoke" {
        return SYNTH_SMOKE
            .parse()
            .map_err(|e| CliError::Config(format!("bundled preset synth_smoke: {e}")));
    }
    let p = TABLE1_PRESETS
        .iter()
        .find(|p| table1_name(p.name) == name)
        .ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset `{name}`; available: {}",
                preset_names().join(", ")
            ))
        })?;
    let preds = tier_predictors(p.tier).map_err(CliError::from)?;
    let levels: BTreeMap<String, usize> = preds
        .iter()
        .zip(p.targets)
        .map(|(v, &l)| (v.name().to_string(), l))
        .collect();
    let cfg = RunConfig {
        name: table1_name(p.name),
        tier: p.tier,
        discretize: DiscretizeConfig {
            levels,
            ..Default::default()
        },
        constraints: ArcConstraints {
            orientations: default_orientations()
                .into_iter()
                .filter(|(a, b)| {
                    [a, b]
                        .iter()
                        .all(|v| preds.iter().any(|p| p.name() == v.as_str()))
                })
                .collect(),
            ..Default::default()
        },
        ..Default::default()
    };
    toml::Table::try_from(&cfg).map_err(|e| CliError::Config(e.to_string()))
}

/// Later tables win key by key; nested tables merge recursively.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Preset first, then the file on top; relative input paths resolve
    /// against the file's directory.
    pub fn load(preset: Option<&str>, file: Option<&Path>) -> Result<Self, CliError> {
        let mut table = match preset {
            Some(p) => preset_value(p)?,
            None => toml::Table::new(),
        };
        let mut base_dir = None;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let over: toml::Table = text
                .parse()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut table, over);
            base_dir = path.parent().map(Path::to_path_buf);
        }
        if preset.is_none() && file.is_none() {
            return Err(CliError::Config("give --config and/or --preset".into()));
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        if let (Some(input), Some(dir)) = (cfg.input.as_mut(), base_dir) {
            if input.path.is_relative() && !dir.as_os_str().is_empty() {
                input.path = dir.join(&input.path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.input, &self.synth) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give exactly one of [input] and [synth], not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "an [input] path or a [synth] section is required".into(),
                ))
            }
            (Some(i), None) if i.path.as_os_str().is_empty() => {
                return Err(CliError::Config("[input] needs a path".into()))
            }
            (None, Some(s)) => s.validate()?,
            _ => {}
        }
        let preds = tier_predictors(self.tier)?;
        for name in self.discretize.levels.keys() {
            if !preds.iter().any(|p| p.name() == name) {
                return Err(CliError::Config(format!(
                    "`{name}` is not a tier {} predictor",
                    self.tier
                )));
            }
        }
        for (a, b) in self
            .constraints
            .forbidden
            .iter()
            .chain(&self.constraints.required)
            .chain(&self.constraints.orientations)
        {
            for v in [a, b] {
                if v != "outcome" && !preds.iter().any(|p| p.name() == v) {
                    return Err(CliError::Config(format!(
                        "constraint names `{v}`, which is not in tier {}",
                        self.tier
                    )));
                }
            }
        }
        self.features.aggregate.validate()?;
        self.experiment()?.validate()?;
        Ok(())
    }

    /// Target levels in tier order.
    pub fn targets(&self) -> Result<Vec<usize>, CliError> {
        tier_predictors(self.tier)?
            .iter()
            .map(|p| {
                self.discretize
                    .levels
                    .get(p.name())
                    .copied()
                    .ok_or_else(|| {
                        CliError::Config(format!(
                            "[discretize] levels has no entry for `{}`",
                            p.name()
                        ))
                    })
            })
            .collect()
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        Ok(ExperimentConfig {
            name: self.name.clone(),
            tier: self.tier,
            targets: self.targets()?,
            initial_levels: self.discretize.initial_levels,
            include_outcome_in_mi: self.discretize.include_outcome_in_mi,
            enforce_validation: self.discretize.enforce_validation,
            k: self.eval.k,
            seed: self.seed,
            families: self.eval.families.clone(),
            eval: EvalContext {
                bn: self.bn.clone(),
                constraints: self.constraints.clone(),
                logreg: self.logreg.clone(),
                seed: self.seed,
            },
        })
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        sha256_hex(
            serde_json::to_string(&c)
                .expect("config serializes")
                .as_bytes(),
        )
    }
}
