//! Acceptance suite. Prints one PASS / FAIL / NOT RUN line per criterion and
//! a summary; with `ACCEPTANCE_STRICT` set, any FAIL makes the exit status
//! non-zero. Criteria 1-7 need the tournament CSV named by `GJP_DATA`
//! (default column names) and report NOT RUN without it.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::time::Instant;

use crowdcast::aggregate::recalibrate;
use crowdcast::bayesnet::{
    exact_posterior, fit_cpts, likelihood_weighting, pc_stable, ArcConstraints, Dag, FittedBn,
};
use crowdcast::discretize::{
    bin_index, equal_interval_bins, hartemink_coalesce, merge_codes, total_pairwise_mi,
    ContinuousColumn, DiscreteColumn, DiscreteDataset, DiscreteVariable,
};
use crowdcast::eval::{
    auc, diagnostics, fit_full_logreg, make_folds, tier_questions, EvalData, LogregParams,
    ModelFamily,
};
use crowdcast::features::{build_feature_table, FeatureParams, FeatureTable, TierDataset};
use crowdcast::ingest::{parse_forecasts, CsvSchema, SynthConfig, Tournament};
use crowdcast::logreg::{
    coord_descent_fit, fit_path, irls_fit, kkt_violation, lambda_path, CdOptions, DesignMatrix,
    PathSettings, Penalty,
};
use crowdcast::pipeline::{
    default_orientations, preset, run_config, synthetic_tier, ExperimentConfig, TABLE1_PRESETS,
};
use crowdcast::util::{derive_seed, logistic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    NotRun,
}

struct Outcome {
    status: Status,
    detail: String,
}

impl Outcome {
    fn gate(pass: bool, detail: String) -> Self {
        let status = if pass { Status::Pass } else { Status::Fail };
        Self { status, detail }
    }

    fn not_run(detail: &str) -> Self {
        Self {
            status: Status::NotRun,
            detail: detail.to_string(),
        }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self {
            status: Status::Fail,
            detail: format!("error: {e}"),
        }
    }
}

type Criterion<'a> = (u8, &'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let gjp = GjpData::load();
    let criteria: Vec<Criterion> = vec![
        (
            1,
            "GJP ingestion counts and runtime",
            Box::new(|| gjp.run(c1_counts)),
        ),
        (2, "GJP baseline AUC", Box::new(|| gjp.run(c2_baseline))),
        (
            3,
            "GJP config 2.3 AUCs and ordering",
            Box::new(|| gjp.run(c3_config_23)),
        ),
        (
            4,
            "GJP tier-4 outcome parents",
            Box::new(|| gjp.run(c4_parents)),
        ),
        (
            5,
            "GJP tier-4 lasso coefficients",
            Box::new(|| gjp.run(c5_lasso)),
        ),
        (
            6,
            "GJP structured BIC above flat BIC",
            Box::new(|| gjp.run(c6_bic)),
        ),
        (
            7,
            "GJP tier-4 diagnostics",
            Box::new(|| gjp.run(c7_diagnostics)),
        ),
        (8, "AUC equals pairwise oracle", Box::new(c8_auc_oracle)),
        (
            9,
            "likelihood weighting vs exact enumeration",
            Box::new(c9_likelihood_weighting),
        ),
        (
            10,
            "coordinate descent vs IRLS and KKT",
            Box::new(c10_coordinate_descent),
        ),
        (
            11,
            "coalescing MI monotone and merge-optimal",
            Box::new(c11_coalescing),
        ),
        (12, "recalibration properties", Box::new(c12_recalibration)),
        (13, "PC-stable collider and chain", Box::new(c13_pc_stable)),
        (14, "synthetic end-to-end sanity", Box::new(c14_end_to_end)),
    ];
    let mut failed = Vec::new();
    let mut not_run = 0;
    for (id, name, check) in &criteria {
        let start = Instant::now();
        let out = check();
        let tag = match out.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed.push(id.to_string());
                "FAIL"
            }
            Status::NotRun => {
                not_run += 1;
                "NOT RUN"
            }
        };
        println!(
            "criterion {id:>2} {tag:<7} {name}: {} ({:.1}s)",
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    let passed = criteria.len() - failed.len() - not_run;
    println!(
        "acceptance: {passed} passed, {} failed{}, {not_run} not run",
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" (criteria {})", failed.join(", "))
        }
    );
    if !failed.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// tournament data

struct Gjp {
    tournament: Tournament,
    table: FeatureTable,
    seconds: f64,
}

enum GjpData {
    Missing,
    Broken(String),
    Loaded(Box<Gjp>),
}

impl GjpData {
    fn load() -> Self {
        let Some(path) = std::env::var_os("GJP_DATA") else {
            return GjpData::Missing;
        };
        let start = Instant::now();
        let loaded = File::open(&path)
            .map_err(|e| e.to_string())
            .and_then(|f| {
                parse_forecasts(BufReader::new(f), &CsvSchema::default()).map_err(|e| e.to_string())
            })
            .and_then(|(tournament, _)| {
                let table = build_feature_table(&tournament, &FeatureParams::default())
                    .map_err(|e| e.to_string())?;
                Ok(Gjp {
                    tournament,
                    table,
                    seconds: start.elapsed().as_secs_f64(),
                })
            });
        match loaded {
            Ok(g) => GjpData::Loaded(Box::new(g)),
            Err(e) => GjpData::Broken(e),
        }
    }

    fn run(&self, f: fn(&Gjp) -> Outcome) -> Outcome {
        match self {
            GjpData::Missing => Outcome::not_run("dataset unavailable (set GJP_DATA)"),
            GjpData::Broken(e) => Outcome::error(e),
            GjpData::Loaded(g) => f(g),
        }
    }
}

fn gjp_config(name: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_preset(preset(name).expect("known preset"));
    cfg.eval.constraints.orientations = default_orientations();
    cfg
}

fn tier(g: &Gjp, t: u8) -> Result<TierDataset, String> {
    TierDataset::from_table(&g.table, t).map_err(|e| e.to_string())
}

fn c1_counts(g: &Gjp) -> Outcome {
    let td = match tier(g, 4) {
        Ok(td) => td,
        Err(e) => return Outcome::error(e),
    };
    let (nq, nf, n4) = (
        g.tournament.questions().len(),
        g.tournament.forecasts().len(),
        td.len(),
    );
    let rel = (n4 as f64 - 619_873.0) / 619_873.0;
    Outcome::gate(
        nq == 303 && nf == 694_442 && rel.abs() <= 0.005 && g.seconds < 600.0,
        format!(
            "questions {nq} (want 303), forecasts {nf} (want 694442), tier-4 rows {n4} ({:+.3}% vs 619873, tol 0.5%), ingest+features {:.0}s (limit 600s)",
            100.0 * rel,
            g.seconds
        ),
    )
}

fn c2_baseline(g: &Gjp) -> Outcome {
    let td = match tier(g, 2) {
        Ok(td) => td,
        Err(e) => return Outcome::error(e),
    };
    let mut cfg = gjp_config("2.3");
    cfg.families = vec![ModelFamily::BaselineAggregate];
    match run_config(&td, &cfg) {
        Ok(out) => {
            let m = out
                .report(ModelFamily::BaselineAggregate)
                .expect("selected")
                .mean;
            Outcome::gate(
                (m - 0.985).abs() <= 0.010,
                format!("mean AUC {m:.4} (target 0.985 ± 0.010)"),
            )
        }
        Err(e) => Outcome::error(e),
    }
}

fn c3_config_23(g: &Gjp) -> Outcome {
    let td = match tier(g, 2) {
        Ok(td) => td,
        Err(e) => return Outcome::error(e),
    };
    let out = match run_config(&td, &gjp_config("2.3")) {
        Ok(o) => o,
        Err(e) => return Outcome::error(e),
    };
    let m = |f| out.report(f).expect("all families run").mean;
    let (base, bs, bf, ld, lc) = (
        m(ModelFamily::BaselineAggregate),
        m(ModelFamily::BnStructured),
        m(ModelFamily::BnFlat),
        m(ModelFamily::LogregDiscrete),
        m(ModelFamily::LogregContinuous),
    );
    let within = (bs - 0.940).abs() <= 0.020
        && (bf - 0.940).abs() <= 0.020
        && (ld - 0.839).abs() <= 0.030
        && (lc - 0.834).abs() <= 0.030;
    let ordered = bs.min(bf) > ld.max(lc) && base > bs.max(bf);
    Outcome::gate(
        within && ordered,
        format!(
            "bn_structured {bs:.4}, bn_flat {bf:.4} (0.940 ± 0.020); logreg_discrete {ld:.4} (0.839 ± 0.030); logreg_continuous {lc:.4} (0.834 ± 0.030); baseline {base:.4}; ordering {}",
            if ordered { "holds" } else { "violated" }
        ),
    )
}

fn c4_parents(g: &Gjp) -> Outcome {
    let td = match tier(g, 4) {
        Ok(td) => td,
        Err(e) => return Outcome::error(e),
    };
    let mut cfg = gjp_config("4.0");
    cfg.families = vec![ModelFamily::BnStructured];
    let out = match run_config(&td, &cfg) {
        Ok(o) => o,
        Err(e) => return Outcome::error(e),
    };
    let arcs = out
        .report(ModelFamily::BnStructured)
        .and_then(|r| r.arcs.clone())
        .unwrap_or_default();
    let parents: Vec<&str> = arcs
        .iter()
        .filter(|(_, t)| t == "outcome")
        .map(|(f, _)| f.as_str())
        .collect();
    let allowed = ["abs_diff_agg", "forecast_value", "days_prior"];
    Outcome::gate(
        parents.iter().all(|p| allowed.contains(p)),
        format!("outcome parents {parents:?} (allowed {allowed:?}, msbs excluded)"),
    )
}

fn c5_lasso(g: &Gjp) -> Outcome {
    let td = match tier(g, 4) {
        Ok(td) => td,
        Err(e) => return Outcome::error(e),
    };
    let cfg = gjp_config("4.0");
    let model = match make_folds(&tier_questions(&td), cfg.k, derive_seed(cfg.seed, "folds"))
        .and_then(|plan| {
            fit_full_logreg(
                ModelFamily::LogregContinuous,
                EvalData {
                    tier: &td,
                    discrete: None,
                },
                &plan,
                &LogregParams::default(),
            )
        }) {
        Ok(m) => m,
        Err(e) => return Outcome::error(e),
    };
    let coef = |name: &str| {
        model
            .columns
            .iter()
            .position(|c| c.name == name)
            .map_or(f64::NAN, |j| model.coefficients[j])
    };
    let (adg, fv, dp, ms) = (
        coef("abs_diff_agg"),
        coef("forecast_value"),
        coef("days_prior"),
        coef("msbs"),
    );
    Outcome::gate(
        adg == 0.0 && ms == 0.0 && (2.0..=3.2).contains(&fv) && dp < 0.0 && dp.abs() < 0.01,
        format!(
            "λ {:.3e}: abs_diff_agg {adg}, msbs {ms} (want exactly 0); forecast_value {fv:.4} (want [2.0, 3.2]); days_prior {dp:.5} (want negative, |β| < 0.01)",
            model.lambda
        ),
    )
}

fn c6_bic(g: &Gjp) -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for p in &TABLE1_PRESETS {
        let td = match tier(g, p.tier) {
            Ok(td) => td,
            Err(e) => return Outcome::error(e),
        };
        let mut cfg = gjp_config(p.name);
        cfg.families = vec![ModelFamily::BnStructured, ModelFamily::BnFlat];
        match run_config(&td, &cfg) {
            Ok(out) => {
                let s = out.row.bic.get("structured").copied().unwrap_or(f64::NAN);
                let f = out.row.bic.get("flat").copied().unwrap_or(f64::NAN);
                pass &= s > f;
                lines.push(format!("{} {:.0} vs {:.0}", p.name, s, f));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("{} error: {e}", p.name));
            }
        }
    }
    Outcome::gate(pass, format!("structured vs flat: {}", lines.join("; ")))
}

fn c7_diagnostics(g: &Gjp) -> Outcome {
    let td = match tier(g, 4) {
        Ok(td) => td,
        Err(e) => return Outcome::error(e),
    };
    let d = match diagnostics(&td) {
        Ok(d) => d,
        Err(e) => return Outcome::error(e),
    };
    let bt_ok = d
        .box_tidwell
        .iter()
        .all(|t| t.z.abs() > 10.0 && t.p < 0.001);
    let vif_ok = d.vif.iter().all(|(_, v)| *v < 5.0);
    let cooks_ok = (0.04..=0.08).contains(&d.cooks_fraction_over_4n);
    let resid_ok = (0.005..=0.02).contains(&d.resid_fraction_over_3);
    let mut detail = String::from("Box-Tidwell |z|");
    for t in &d.box_tidwell {
        let _ = write!(detail, " {}={:.1}", t.predictor, t.z.abs());
    }
    detail.push_str("; VIF");
    for (n, v) in &d.vif {
        let _ = write!(detail, " {n}={v:.2}");
    }
    let _ = write!(
        detail,
        "; Cook's > 4/n {:.2}% (want [4, 8]); |resid| > 3 {:.2}% (want [0.5, 2])",
        100.0 * d.cooks_fraction_over_4n,
        100.0 * d.resid_fraction_over_3
    );
    Outcome::gate(bt_ok && vif_ok && cooks_ok && resid_ok, detail)
}

// ---------------------------------------------------------------------------
// desk-scale properties

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut twice, mut pos, mut neg) = (0u128, 0u128, 0u128);
    for (i, (&si, &yi)) in scores.iter().zip(labels).enumerate() {
        if yi == 1 {
            pos += 1;
        } else {
            neg += 1;
        }
        for (&sj, &yj) in scores[..i].iter().zip(labels) {
            if yi == yj {
                continue;
            }
            let (p, n) = if yi == 1 { (si, sj) } else { (sj, si) };
            twice += if p > n {
                2
            } else if p == n {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pos * neg) as f64
}

fn c8_auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut exact = 0;
    let mut tied_instances = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=2000);
        let grid = rng.random_range(2..=50) as f64;
        let mut labels: Vec<u8> = (0..n)
            .map(|_| u8::from(rng.random::<f64>() < 0.4))
            .collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = labels
            .iter()
            .map(|&y| {
                let s = rng.random::<f64>() + 0.3 * f64::from(y);
                // coarse grid on half the instances, so ties are common
                if grid > 25.0 {
                    s
                } else {
                    (s * grid).round() / grid
                }
            })
            .collect();
        if grid <= 25.0 {
            tied_instances += 1;
        }
        if auc(&scores, &labels).ok() == Some(pairwise_auc(&scores, &labels)) {
            exact += 1;
        }
    }
    Outcome::gate(
        exact == 200,
        format!("{exact}/200 instances bit-identical to the O(n²) oracle ({tied_instances} with heavy ties, n ≤ 2000)"),
    )
}

fn discrete_dataset(cols: Vec<Vec<u16>>, levels: &[usize], names: &[&str]) -> DiscreteDataset {
    let vars = levels
        .iter()
        .zip(names)
        .map(|(&l, n)| DiscreteVariable {
            name: n.to_string(),
            levels: l,
            labels: vec![],
        })
        .collect();
    DiscreteDataset::new(vars, cols, None).expect("consistent toy data")
}

/// Random 4-node network: each forward arc present with probability 1/2,
/// CPTs fitted to data forward-sampled from uniformly drawn tables.
fn random_network(rng: &mut ChaCha8Rng) -> FittedBn {
    let names = ["a", "b", "c", "d"];
    let levels: Vec<usize> = (0..4).map(|_| rng.random_range(2..=3)).collect();
    let mut dag = Dag::new(names.iter().map(|s| s.to_string()).collect());
    for j in 0..4 {
        for i in 0..j {
            if rng.random::<f64>() < 0.5 {
                dag.add_arc(i, j).expect("forward arcs are acyclic");
            }
        }
    }
    let tables: Vec<Vec<Vec<f64>>> = (0..4)
        .map(|v| {
            let configs: usize = dag.parents(v).iter().map(|&p| levels[p]).product();
            (0..configs)
                .map(|_| {
                    // uniform on the simplex
                    let w: Vec<f64> = (0..levels[v])
                        .map(|_| -(1.0 - rng.random::<f64>()).ln())
                        .collect();
                    let z: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / z).collect()
                })
                .collect()
        })
        .collect();
    let n = 400;
    let mut cols: Vec<Vec<u16>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
    for r in 0..n {
        for v in 0..4 {
            let mut config = 0;
            for p in dag.parents(v) {
                config = config * levels[p] + cols[p][r] as usize;
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut s = levels[v] - 1;
            for (k, &p) in tables[v][config].iter().enumerate() {
                acc += p;
                if u < acc {
                    s = k;
                    break;
                }
            }
            cols[v].push(s as u16);
        }
    }
    fit_cpts(&dag, &discrete_dataset(cols, &levels, &names), 1.0).expect("valid network")
}

fn c9_likelihood_weighting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst_large, mut worst_small) = (0.0f64, 0.0f64);
    let mut small_ok = 0;
    for net in 0..50u64 {
        let bn = random_network(&mut rng);
        let target = rng.random_range(0..4);
        let mut evidence: Vec<(usize, u16)> = Vec::new();
        for v in (0..4).filter(|&v| v != target) {
            if rng.random::<f64>() < 0.5 {
                evidence.push((v, rng.random_range(0..bn.nodes[v].levels) as u16));
            }
        }
        let exact = exact_posterior(&bn, &evidence, target).expect("tiny network");
        let large = likelihood_weighting(&bn, &evidence, target, 50_000, net).expect("valid query");
        let small = likelihood_weighting(&bn, &evidence, target, 500, net).expect("valid query");
        let mut d_small: f64 = 0.0;
        for k in 0..exact.len() {
            worst_large = worst_large.max((large[k] - exact[k]).abs());
            d_small = d_small.max((small[k] - exact[k]).abs());
        }
        worst_small = worst_small.max(d_small);
        small_ok += usize::from(d_small < 0.07);
    }
    Outcome::gate(
        worst_large < 0.01 && worst_small < 0.07,
        format!("50 networks: max |Δ| {worst_large:.4} at 50000 samples (< 0.01); {worst_small:.4} at 500 samples (< 0.07, {small_ok}/50 within)"),
    )
}

fn synthetic_logistic(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (DesignMatrix, Vec<u8>) {
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b0 = rng.random_range(-0.5..0.5);
    let mut cols = vec![Vec::with_capacity(n); p];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut eta = b0;
        for j in 0..p {
            let x = rng.random_range(-2.0..2.0) * (1.0 + j as f64 * 0.5);
            eta += beta[j] * x;
            cols[j].push(x);
        }
        y.push(u8::from(rng.random::<f64>() < logistic(eta)));
    }
    let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    (
        DesignMatrix::continuous(&refs, &cols).expect("consistent columns"),
        y,
    )
}

fn c10_coordinate_descent() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let opts = CdOptions::default();
    let (mut worst_diff, mut worst_kkt, mut points) = (0.0f64, 0.0f64, 0);
    for _ in 0..20 {
        let n = rng.random_range(400..=1200);
        let p = rng.random_range(2..=6);
        let (x, y) = synthetic_logistic(&mut rng, n, p);
        let run = || -> crowdcast::Result<(f64, f64, usize)> {
            let a = irls_fit(&x, &y)?;
            let b = coord_descent_fit(&x, &y, Penalty::L1, 0.0, &opts)?;
            let mut diff = (a.intercept - b.intercept).abs();
            for (ca, cb) in a.coefficients.iter().zip(&b.coefficients) {
                diff = diff.max((ca - cb).abs());
            }
            let path = lambda_path(&x, &y, Penalty::L1, &PathSettings::default(), &opts)?;
            let mut kkt: f64 = 0.0;
            let models = fit_path(&x, &y, Penalty::L1, &path, &opts)?;
            for m in &models {
                kkt = kkt.max(kkt_violation(&x, &y, m, &opts)?);
            }
            Ok((diff, kkt, models.len()))
        };
        match run() {
            Ok((d, k, m)) => {
                worst_diff = worst_diff.max(d);
                worst_kkt = worst_kkt.max(k);
                points += m;
            }
            Err(e) => return Outcome::error(e),
        }
    }
    Outcome::gate(
        worst_diff < 1e-5 && worst_kkt < 1e-5,
        format!("20 problems: max |β_CD - β_IRLS| {worst_diff:.2e} (< 1e-5); max KKT violation {worst_kkt:.2e} over {points} path points (< 1e-5)"),
    )
}

fn replay_merges(
    columns: &[Vec<f64>],
    outcome: &[u16],
    initial: usize,
    targets: &[usize],
    seed: u64,
) -> Result<usize, String> {
    let cont: Vec<ContinuousColumn> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| ContinuousColumn {
            name: ["u", "v", "w"][i],
            values: c,
        })
        .collect();
    let y: Vec<u8> = outcome.iter().map(|&o| o as u8).collect();
    let fixed = [DiscreteColumn::binary("y", &y)];
    let res =
        hartemink_coalesce(&cont, &fixed, targets, initial, true).map_err(|e| e.to_string())?;
    let mut codes: Vec<Vec<u16>> = columns
        .iter()
        .map(|c| {
            let cuts = equal_interval_bins(c, initial).expect("non-degenerate");
            c.iter().map(|&v| bin_index(&cuts, v)).collect()
        })
        .collect();
    codes.push(outcome.to_vec());
    let total = |codes: &[Vec<u16>]| {
        total_pairwise_mi(&codes.iter().map(Vec::as_slice).collect::<Vec<_>>())
    };
    let mut levels = vec![initial; columns.len()];
    let mut prev = total(&codes);
    for (s, step) in res.trace.iter().enumerate() {
        let v = step.variable;
        let mut best = f64::NEG_INFINITY;
        let mut chosen = f64::NAN;
        for a in 0..levels[v] - 1 {
            let mut trial = codes.clone();
            merge_codes(&mut trial[v], a);
            let after = total(&trial);
            best = best.max(after);
            if a == step.level {
                chosen = after;
            }
        }
        if chosen < best - 1e-12 {
            return Err(format!(
                "seed {seed} step {s}: merge keeps {chosen} but {best} was available"
            ));
        }
        if step.total_mi_after > prev + 1e-12 {
            return Err(format!(
                "seed {seed} step {s}: total MI rose from {prev} to {}",
                step.total_mi_after
            ));
        }
        if (step.total_mi_after - chosen).abs() > 1e-9 {
            return Err(format!(
                "seed {seed} step {s}: reported {} vs replayed {chosen}",
                step.total_mi_after
            ));
        }
        merge_codes(&mut codes[v], step.level);
        levels[v] -= 1;
        prev = step.total_mi_after;
    }
    Ok(res.trace.len())
}

fn c11_coalescing() -> Outcome {
    let mut merges = 0;
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(11, &seed.to_string()));
        let n = rng.random_range(60..=400);
        let initial = rng.random_range(4..=8);
        let p = rng.random_range(1..=3);
        let mut columns = vec![Vec::with_capacity(n); p];
        let mut outcome = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = rng.random_range(-1.0..1.0);
            for c in columns.iter_mut() {
                c.push(z + rng.random_range(-1.0..1.0));
            }
            outcome.push(u16::from(rng.random::<f64>() < logistic(2.0 * z)));
        }
        let targets: Vec<usize> = (0..p).map(|_| rng.random_range(2..=initial)).collect();
        match replay_merges(&columns, &outcome, initial, &targets, seed) {
            Ok(m) => merges += m,
            Err(e) => return Outcome::gate(false, e),
        }
    }
    Outcome::gate(
        true,
        format!("40 toy datasets (≤ 8 initial levels), {merges} merges: total MI non-increasing, each merge loss-minimal among adjacent pairs"),
    )
}

fn c12_recalibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let fixed = [0.2, 0.5, 1.0, 1.5, 3.0]
        .iter()
        .all(|&a| (recalibrate(0.5, a) - 0.5).abs() < 1e-15);
    let mut sym_worst: f64 = 0.0;
    let mut extremizing_ok = true;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let p: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        let a: f64 = rng.random_range(0.1..4.0);
        sym_worst = sym_worst.max((recalibrate(1.0 - p, a) - (1.0 - recalibrate(p, a))).abs());
        let q = recalibrate(p, 1.5);
        if p != 0.5 && !((p > 0.5 && q > p) || (p < 0.5 && q < p)) {
            extremizing_ok = false;
        }
        pairs.push((p, q));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = pairs
        .windows(2)
        .all(|w| w[0].0 == w[1].0 || w[1].1 > w[0].1);
    Outcome::gate(
        fixed && sym_worst < 1e-12 && extremizing_ok && monotone,
        format!(
            "10^4 draws: fixed point 0.5 {}; max symmetry error {sym_worst:.1e}; a=1.5 pushes away from 0.5 {}; increasing {}",
            ok(fixed),
            ok(extremizing_ok),
            ok(monotone)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "violated"
    }
}

fn bern(rng: &mut ChaCha8Rng, p: f64) -> u16 {
    u16::from(rng.random::<f64>() < p)
}

fn c13_pc_stable() -> Outcome {
    let n = 10_000;
    let names = ["x", "z", "y"];
    let (mut collider_ok, mut chain_ok) = (0, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(13, &seed.to_string()));
        let (mut x, mut z, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let a = bern(&mut rng, 0.5);
            let b = bern(&mut rng, 0.5);
            x.push(a);
            y.push(b);
            z.push(bern(&mut rng, [0.1, 0.6, 0.6, 0.95][(a * 2 + b) as usize]));
        }
        let ds = discrete_dataset(vec![x, z, y], &[2, 2, 2], &names);
        if let Ok(r) = pc_stable(&ds, 0.05, &ArcConstraints::default()) {
            let g = r.graph;
            if g.skeleton() == vec![(0, 1), (1, 2)] && g.is_directed(0, 1) && g.is_directed(2, 1) {
                collider_ok += 1;
            }
        }

        let (mut x, mut z, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let a = bern(&mut rng, 0.5);
            let c = bern(&mut rng, if a == 1 { 0.8 } else { 0.25 });
            x.push(a);
            z.push(c);
            y.push(bern(&mut rng, if c == 1 { 0.75 } else { 0.2 }));
        }
        let ds = discrete_dataset(vec![x, z, y], &[2, 2, 2], &names);
        if let Ok(r) = pc_stable(&ds, 0.05, &ArcConstraints::default()) {
            let g = r.graph;
            let collider = g.is_directed(0, 1) && g.is_directed(2, 1);
            if g.skeleton() == vec![(0, 1), (1, 2)] && !collider {
                chain_ok += 1;
            }
        }
    }
    Outcome::gate(
        collider_ok >= 18 && chain_ok >= 18,
        format!("n=10^4, 20 seeds: collider x→z←y recovered {collider_ok}/20; chain x→z→y without spurious x−y edge or collider {chain_ok}/20 (need ≥ 18 each)"),
    )
}

fn c14_end_to_end() -> Outcome {
    let families = ModelFamily::ALL;
    let mut detail = String::new();
    let mut pass = true;
    for (label, signal) in [("informative", 2.0), ("noise", 0.0)] {
        let mut per_family: Vec<Vec<f64>> = vec![Vec::new(); families.len()];
        for seed in 0..20u64 {
            let synth = SynthConfig {
                n_questions: 60,
                signal,
                ..Default::default()
            };
            let run = || -> crowdcast::Result<Vec<f64>> {
                let td = synthetic_tier(&synth, seed, 2, &FeatureParams::default())?;
                let mut cfg = ExperimentConfig::from_preset(preset("2.3").expect("known preset"));
                cfg.seed = seed;
                cfg.enforce_validation = false;
                cfg.eval.constraints.orientations =
                    vec![("abs_diff_agg".into(), "forecast_value".into())];
                let out = run_config(&td, &cfg)?;
                Ok(families
                    .iter()
                    .map(|&f| out.report(f).expect("all families run").mean)
                    .collect())
            };
            match run() {
                Ok(means) => {
                    for (acc, m) in per_family.iter_mut().zip(means) {
                        acc.push(m);
                    }
                }
                Err(e) => return Outcome::error(format!("{label} seed {seed}: {e}")),
            }
        }
        let _ = write!(detail, "{label}:");
        for (f, aucs) in families.iter().zip(&per_family) {
            let lo = aucs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = aucs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
            let in_band = if signal > 0.0 {
                aucs.iter().filter(|&&a| a >= 0.65).count()
            } else {
                aucs.iter().filter(|&&a| (0.40..=0.60).contains(&a)).count()
            };
            // informative runs are gated seed by seed, noise runs on the 20-seed mean
            pass &= if signal > 0.0 {
                in_band == aucs.len()
            } else {
                (0.40..=0.60).contains(&mean)
            };
            let _ = write!(
                detail,
                " {} mean {mean:.3} [{lo:.3}, {hi:.3}] {in_band}/20 seeds in band;",
                f.name()
            );
        }
        detail.push(' ');
    }
    detail.push_str("gate: every informative seed ≥ 0.65, noise 20-seed mean within [0.40, 0.60]");
    Outcome::gate(pass, detail)
}
