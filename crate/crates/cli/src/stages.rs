//! Pipeline stages. Each reads its predecessors' artifacts from the output
//! directory and writes its own; JSON artifacts carry an envelope with the
//! schema version, the full config hash, the hash of the config sections the
//! stage depends on, and the seed.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use crowdcast::bayesnet::{fit_cpts, flat_structure, FittedBn};
use crowdcast::discretize::{
    mi_curve, validate_config, ConfigValidation, ContinuousColumn, DiscreteColumn,
    DiscretizationConfig, MergeStep, MiCurve, MAX_UNOBSERVED_FRACTION,
};
use crowdcast::eval::{
    diagnostics, fit_full_logreg, fold_rows, learn_consensus_structure, make_folds, tier_questions,
    DiagnosticsReport, EvalData, EvalReport, FoldPlan, ModelFamily, ReportRow, ReportTable,
    OUTCOME,
};
use crowdcast::features::{build_feature_table, Provenance, TierDataset};
use crowdcast::ingest::{
    generate_synthetic, parse_forecasts, CsvSchema, IngestSummary, Tournament,
};
use crowdcast::logreg::LogisticModel;
use crowdcast::pipeline::{apply_discretization, discretize_tier, run_config};
use crowdcast::util::{derive_seed, sha256_hex};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const INGEST_JSON: &str = "ingest.json";
pub const TOURNAMENT_CSV: &str = "tournament.csv";
pub const FEATURES_JSON: &str = "features.json";
pub const FEATURES_CSV: &str = "features.csv";
pub const MI_CURVE_JSON: &str = "mi_curve.json";
pub const MI_CURVE_CSV: &str = "mi_curve.csv";
pub const DISCRETIZATION_JSON: &str = "discretization.json";
pub const MODELS_JSON: &str = "models.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const DIAGNOSTICS_JSON: &str = "diagnostics.json";

/// Config sections each stage depends on, cumulative along the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Ingest,
    Features,
    Discretize,
    Models,
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    stage: String,
    config_hash: String,
    scope_hash: String,
    seed: u64,
    data: T,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    written: Vec<PathBuf>,
}

impl Ctx {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&out)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self {
            cfg,
            out,
            written: Vec::new(),
        })
    }

    /// Removes every artifact written by this invocation.
    pub fn rollback(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn scope_hash(&self, scope: Scope) -> String {
        let c = &self.cfg;
        let mut v = serde_json::json!({
            "seed": c.seed,
            "input": c.input,
            "synth": c.synth,
        });
        if scope != Scope::Ingest {
            v["tier"] = c.tier.into();
            v["features"] = serde_json::to_value(&c.features).expect("serializable");
        }
        if matches!(scope, Scope::Discretize | Scope::Models) {
            v["discretize"] = serde_json::to_value(&c.discretize).expect("serializable");
        }
        if scope == Scope::Models {
            v["bn"] = serde_json::to_value(&c.bn).expect("serializable");
            v["constraints"] = serde_json::to_value(&c.constraints).expect("serializable");
            v["logreg"] = serde_json::to_value(&c.logreg).expect("serializable");
            v["eval"] = serde_json::to_value(&c.eval).expect("serializable");
        }
        sha256_hex(v.to_string().as_bytes())
    }

    /// Writes through a temporary file so a failed write leaves nothing behind.
    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        let res = (|| {
            let mut w = BufWriter::new(File::create(&tmp)?);
            f(&mut w)?;
            w.flush()?;
            drop(w);
            fs::rename(&tmp, &path)?;
            Ok(())
        })();
        if res.is_err() {
            let _ = fs::remove_file(&tmp);
        } else {
            self.written.push(path);
        }
        res
    }

    fn write_json<T: Serialize>(
        &mut self,
        name: &str,
        stage: &str,
        scope: Scope,
        data: &T,
    ) -> Result<(), CliError> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            stage: stage.to_string(),
            config_hash: self.cfg.hash(),
            scope_hash: self.scope_hash(scope),
            seed: self.cfg.seed,
            data,
        };
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, &env)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    fn read_json<T: DeserializeOwned>(
        &self,
        name: &str,
        stage: &str,
        scope: Scope,
    ) -> Result<T, CliError> {
        let path = self.require(name, stage)?;
        let env: Envelope<T> = serde_json::from_reader(BufReader::new(File::open(&path)?))
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if env.schema_version != SCHEMA_VERSION {
            return Err(CliError::Data(format!(
                "{name} has schema version {} but this build reads {SCHEMA_VERSION}",
                env.schema_version
            )));
        }
        let expected = self.scope_hash(scope);
        if env.scope_hash != expected {
            return Err(CliError::Stale {
                artifact: name.to_string(),
                stage: stage.to_string(),
                found: short(&env.scope_hash),
                expected: short(&expected),
            });
        }
        Ok(env.data)
    }

    fn require(&self, name: &str, stage: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::Dependency {
                artifact: name.to_string(),
                dir: self.out.display().to_string(),
                stage: stage.to_string(),
            })
        }
    }
}

fn short(hash: &str) -> String {
    hash.chars().take(12).collect()
}

// ---------------------------------------------------------------------------
// artifacts

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestArtifact {
    pub source: String,
    pub summary: IngestSummary,
    pub tournament_hash: String,
    pub questions: usize,
    pub forecasters: usize,
    pub forecasts: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeaturesArtifact {
    pub tier: u8,
    pub table_rows: usize,
    pub tier_rows: usize,
    pub msbs_scale: (f64, f64),
    pub sole_forecaster_scores: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiscretizationArtifact {
    pub config: DiscretizationConfig,
    pub validation: ConfigValidation,
    pub initial_total_mi: f64,
    pub trace: Vec<MergeStep>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelsArtifact {
    pub plan: FoldPlan,
    pub bn_structured: Option<FittedBn>,
    pub bn_flat: Option<FittedBn>,
    pub logreg_discrete: Option<LogisticModel>,
    pub logreg_continuous: Option<LogisticModel>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub row: ReportRow,
    pub reports: Vec<EvalReport>,
    pub validation: ConfigValidation,
}

// ---------------------------------------------------------------------------
// stages

fn write_tournament(
    ctx: &mut Ctx,
    t: &Tournament,
    summary: IngestSummary,
    source: &str,
) -> Result<(), CliError> {
    ctx.write_with(TOURNAMENT_CSV, |w| Ok(t.write_csv(w)?))?;
    let art = IngestArtifact {
        source: source.to_string(),
        summary,
        tournament_hash: t.content_hash(),
        questions: t.questions().len(),
        forecasters: t.forecasters().len(),
        forecasts: t.forecasts().len(),
    };
    println!(
        "{source}: {} questions, {} forecasters, {} forecasts kept of {} rows",
        art.questions, art.forecasters, art.forecasts, art.summary.rows_read
    );
    for (reason, n) in &art.summary.drops_by_reason {
        println!("  dropped {n} ({reason})");
    }
    ctx.write_json(INGEST_JSON, "ingest", Scope::Ingest, &art)
}

pub fn ingest(ctx: &mut Ctx) -> Result<(), CliError> {
    let input = ctx.cfg.input.clone().ok_or_else(|| {
        CliError::Config("`ingest` needs an [input] section; use `synth` for synthetic data".into())
    })?;
    let file = File::open(&input.path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", input.path.display())))?;
    let (t, summary) = parse_forecasts(BufReader::new(file), &input.schema)?;
    write_tournament(ctx, &t, summary, "ingest")
}

pub fn synth(ctx: &mut Ctx) -> Result<(), CliError> {
    let synth = ctx
        .cfg
        .synth
        .clone()
        .ok_or_else(|| CliError::Config("`synth` needs a [synth] section".into()))?;
    let (t, summary) = generate_synthetic(&synth, derive_seed(ctx.cfg.seed, "synth"))?;
    write_tournament(ctx, &t, summary, "synth")
}

fn ingest_stage(cfg: &RunConfig) -> &'static str {
    if cfg.synth.is_some() {
        "synth"
    } else {
        "ingest"
    }
}

pub fn features(ctx: &mut Ctx) -> Result<(), CliError> {
    let stage = ingest_stage(&ctx.cfg);
    let ing: IngestArtifact = ctx.read_json(INGEST_JSON, stage, Scope::Ingest)?;
    let path = ctx.require(TOURNAMENT_CSV, stage)?;
    let (t, _) = parse_forecasts(BufReader::new(File::open(path)?), &CsvSchema::default())?;
    if t.content_hash() != ing.tournament_hash {
        return Err(CliError::Data(format!(
            "{TOURNAMENT_CSV} does not match {INGEST_JSON}; rerun `crowdcast {stage}`"
        )));
    }
    let table = build_feature_table(&t, &ctx.cfg.features)?;
    let td = TierDataset::from_table(&table, ctx.cfg.tier)?;
    ctx.write_with(FEATURES_CSV, |w| Ok(td.write_csv(w)?))?;
    let art = FeaturesArtifact {
        tier: td.tier,
        table_rows: table.rows.len(),
        tier_rows: td.len(),
        msbs_scale: table.msbs_scale,
        sole_forecaster_scores: table.sole_forecaster_scores,
        provenance: td.provenance.clone(),
    };
    println!(
        "features: {} rows, {} in tier {}",
        art.table_rows, art.tier_rows, art.tier
    );
    ctx.write_json(FEATURES_JSON, "features", Scope::Features, &art)
}

fn load_tier(ctx: &Ctx) -> Result<TierDataset, CliError> {
    let art: FeaturesArtifact = ctx.read_json(FEATURES_JSON, "features", Scope::Features)?;
    let path = ctx.require(FEATURES_CSV, "features")?;
    let td = TierDataset::read_csv(BufReader::new(File::open(path)?))?;
    if td.tier != art.tier || td.len() != art.tier_rows {
        return Err(CliError::Data(format!(
            "{FEATURES_CSV} does not match {FEATURES_JSON}; rerun `crowdcast features`"
        )));
    }
    Ok(td)
}

pub fn mi_curve_stage(ctx: &mut Ctx) -> Result<(), CliError> {
    let td = load_tier(ctx)?;
    let preds = td.predictors();
    let cols: Vec<Vec<f64>> = preds.iter().map(|&p| td.column(p)).collect();
    let cont: Vec<ContinuousColumn> = preds
        .iter()
        .zip(&cols)
        .map(|(p, c)| ContinuousColumn {
            name: p.name(),
            values: c,
        })
        .collect();
    let fixed = [DiscreteColumn::binary(OUTCOME, &td.outcomes())];
    let d = ctx.cfg.discretize.clone();
    let curve: MiCurve = mi_curve(
        &cont,
        &fixed,
        d.initial_levels,
        d.mi_curve_min_levels,
        d.include_outcome_in_mi,
    )?;
    ctx.write_with(MI_CURVE_CSV, |w| Ok(curve.write_csv(w)?))?;
    println!(
        "mi-curve: {} level counts from {} down to {}",
        curve.rows.len(),
        d.initial_levels,
        d.mi_curve_min_levels
    );
    ctx.write_json(MI_CURVE_JSON, "mi-curve", Scope::Discretize, &curve)
}

pub fn discretize(ctx: &mut Ctx) -> Result<(), CliError> {
    let td = load_tier(ctx)?;
    let d = &ctx.cfg.discretize;
    let res = discretize_tier(
        &td,
        &ctx.cfg.targets()?,
        d.initial_levels,
        d.include_outcome_in_mi,
    )?;
    let validation = validate_config(&res.dataset, Some(OUTCOME));
    let levels: Vec<String> = res
        .config
        .variables
        .iter()
        .map(|v| format!("{}={}", v.variable, v.levels))
        .collect();
    println!(
        "discretize: {}; unobserved combinations {:.2}% (limit {:.0}%)",
        levels.join(" "),
        100.0 * validation.fraction_unobserved,
        100.0 * MAX_UNOBSERVED_FRACTION
    );
    if d.enforce_validation && !validation.pass {
        return Err(CliError::Constraint(format!(
            "unobserved level combinations {:.4} exceed {MAX_UNOBSERVED_FRACTION}",
            validation.fraction_unobserved
        )));
    }
    let art = DiscretizationArtifact {
        config: res.config,
        validation,
        initial_total_mi: res.initial_total_mi,
        trace: res.trace,
    };
    ctx.write_json(DISCRETIZATION_JSON, "discretize", Scope::Discretize, &art)
}

fn fold_plan(ctx: &Ctx, td: &TierDataset) -> Result<FoldPlan, CliError> {
    Ok(make_folds(
        &tier_questions(td),
        ctx.cfg.eval.k,
        derive_seed(ctx.cfg.seed, "folds"),
    )?)
}

pub fn train(ctx: &mut Ctx) -> Result<(), CliError> {
    let td = load_tier(ctx)?;
    let disc: DiscretizationArtifact =
        ctx.read_json(DISCRETIZATION_JSON, "discretize", Scope::Discretize)?;
    let ds = apply_discretization(&td, &disc.config)?;
    let exp = ctx.cfg.experiment()?;
    let plan = fold_plan(ctx, &td)?;
    let families = &ctx.cfg.eval.families;
    let has = |f| families.contains(&f);
    let data = EvalData {
        tier: &td,
        discrete: Some(&ds),
    };

    let bn_structured = if has(ModelFamily::BnStructured) {
        let splits = fold_rows(&plan.row_folds(&td.question_ids())?, plan.k);
        let dag = learn_consensus_structure(&ds, &splits, &exp.eval)?;
        println!(
            "train: consensus structure {}",
            dag.to_text().trim().replace('\n', "; ")
        );
        Some(fit_cpts(&dag, &ds, exp.eval.bn.iss)?)
    } else {
        None
    };
    let bn_flat = if has(ModelFamily::BnFlat) {
        let names: Vec<String> = td
            .predictors()
            .iter()
            .map(|p| p.name().to_string())
            .collect();
        let dag = flat_structure(&names, OUTCOME, exp.eval.bn.flat_shape)?;
        Some(fit_cpts(&dag, &ds, exp.eval.bn.iss)?)
    } else {
        None
    };
    let logreg = |f: ModelFamily| -> Result<Option<LogisticModel>, CliError> {
        if !has(f) {
            return Ok(None);
        }
        let m = fit_full_logreg(f, data, &plan, &exp.eval.logreg)?;
        println!(
            "train: {} penalty {:?} λ {:.4e}, {} non-zero coefficients",
            f.name(),
            m.penalty,
            m.lambda,
            m.coefficients.iter().filter(|b| **b != 0.0).count()
        );
        Ok(Some(m))
    };
    let logreg_discrete = logreg(ModelFamily::LogregDiscrete)?;
    let logreg_continuous = logreg(ModelFamily::LogregContinuous)?;
    let art = ModelsArtifact {
        plan,
        bn_structured,
        bn_flat,
        logreg_discrete,
        logreg_continuous,
    };
    ctx.write_json(MODELS_JSON, "train", Scope::Models, &art)
}

pub fn evaluate(ctx: &mut Ctx) -> Result<(), CliError> {
    let models: ModelsArtifact = ctx.read_json(MODELS_JSON, "train", Scope::Models)?;
    let _: DiscretizationArtifact =
        ctx.read_json(DISCRETIZATION_JSON, "discretize", Scope::Discretize)?;
    let td = load_tier(ctx)?;
    let out = run_config(&td, &ctx.cfg.experiment()?)?;
    if out.plan != models.plan {
        return Err(CliError::Data(format!(
            "fold plan differs from {MODELS_JSON}; rerun `crowdcast train`"
        )));
    }
    for r in &out.reports {
        println!(
            "evaluate: {:<18} AUC {:.4} (sd {:.4}) over {} folds",
            r.family.name(),
            r.mean,
            r.sd,
            r.scored_folds().len()
        );
    }
    let art = ReportArtifact {
        row: out.row,
        reports: out.reports,
        validation: out.validation,
    };
    ctx.write_json(REPORT_JSON, "evaluate", Scope::Models, &art)
}

pub fn diagnose(ctx: &mut Ctx) -> Result<(), CliError> {
    let td = load_tier(ctx)?;
    let d = diagnostics(&td)?;
    println!(
        "diagnose: Cook's > 4/n {:.2}%, |std resid| > 3 {:.2}%, events per parameter {:.1}",
        100.0 * d.cooks_fraction_over_4n,
        100.0 * d.resid_fraction_over_3,
        d.sample_size_check.events_per_parameter
    );
    ctx.write_json(DIAGNOSTICS_JSON, "diagnose", Scope::Features, &d)
}

pub fn report(ctx: &mut Ctx) -> Result<(), CliError> {
    let rep: ReportArtifact = ctx.read_json(REPORT_JSON, "evaluate", Scope::Models)?;
    let mut text = ReportTable {
        rows: vec![rep.row],
    }
    .to_text();
    if ctx.path(DIAGNOSTICS_JSON).is_file() {
        let d: DiagnosticsReport = ctx.read_json(DIAGNOSTICS_JSON, "diagnose", Scope::Features)?;
        text.push('\n');
        text.push_str(&diagnostics_text(&d));
    }
    print!("{text}");
    ctx.write_with(REPORT_TXT, |w| Ok(w.write_all(text.as_bytes())?))
}

fn diagnostics_text(d: &DiagnosticsReport) -> String {
    let mut s = String::from("Coefficients (unpenalized, all rows)\n");
    s.push_str(&d.model.coefficient_table());
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s.push_str("Box-Tidwell\n");
    for t in &d.box_tidwell {
        let _ = writeln!(
            s,
            "  {:<24} shift {:<8.4} z {:>9.3} p {:.3e}",
            t.predictor, t.shift, t.z, t.p
        );
    }
    s.push_str("VIF\n");
    for (n, v) in &d.vif {
        let _ = writeln!(s, "  {n:<24} {v:.3}");
    }
    let _ = writeln!(
        s,
        "Cook's distance > 4/n: {:.2}%\n|standardized residual| > 3: {:.2}%\nevents per parameter: {:.1} ({})",
        100.0 * d.cooks_fraction_over_4n,
        100.0 * d.resid_fraction_over_3,
        d.sample_size_check.events_per_parameter,
        if d.sample_size_check.pass { "adequate" } else { "below 10" }
    );
    s
}

/// Every stage in order, starting from ingest or synth.
pub fn run_all(ctx: &mut Ctx) -> Result<(), CliError> {
    if ctx.cfg.synth.is_some() {
        synth(ctx)?;
    } else {
        ingest(ctx)?;
    }
    features(ctx)?;
    mi_curve_stage(ctx)?;
    discretize(ctx)?;
    train(ctx)?;
    evaluate(ctx)?;
    diagnose(ctx)?;
    report(ctx)
}
