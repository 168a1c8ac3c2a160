use criterion::{black_box, criterion_group, criterion_main, Criterion};
use crowdcast::bayesnet::{
    fit_cpts, flat_structure, pc_stable, predict_outcome, ArcConstraints, FlatShape,
};
use crowdcast::eval::auc;
use crowdcast::features::{build_feature_table, FeatureParams};
use crowdcast::ingest::{generate_synthetic, SynthConfig};
use crowdcast::logreg::{dummy_encode, fit_path, lambda_path, CdOptions, PathSettings, Penalty};
use crowdcast::pipeline::{discretize_tier, synthetic_tier};
use crowdcast::TierDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synth() -> SynthConfig {
    SynthConfig {
        n_questions: 60,
        ..Default::default()
    }
}

fn tier(t: u8) -> TierDataset {
    synthetic_tier(&synth(), 7, t, &FeatureParams::default()).unwrap()
}

fn bench_auc(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let scores: Vec<f64> = (0..n)
        .map(|_| (rng.random::<f64>() * 1000.0).round() / 1000.0)
        .collect();
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    c.bench_function("auc_100k_tied", |b| {
        b.iter(|| auc(black_box(&scores), &labels).unwrap())
    });
}

fn bench_features(c: &mut Criterion) {
    let (t, _) = generate_synthetic(&synth(), 7).unwrap();
    c.bench_function("feature_table_60q", |b| {
        b.iter(|| build_feature_table(black_box(&t), &FeatureParams::default()).unwrap())
    });
}

fn bench_discretize(c: &mut Criterion) {
    let td = tier(2);
    c.bench_function("coalesce_tier2_120_levels", |b| {
        b.iter(|| discretize_tier(black_box(&td), &[3, 6], 120, true).unwrap())
    });
}

fn bench_pc(c: &mut Criterion) {
    let td = tier(4);
    let ds = discretize_tier(&td, &[3, 3, 3, 3], 60, true)
        .unwrap()
        .dataset;
    let constraints = ArcConstraints::default();
    c.bench_function("pc_stable_tier4", |b| {
        b.iter(|| pc_stable(black_box(&ds), 0.05, &constraints).unwrap())
    });
}

fn bench_lasso_path(c: &mut Criterion) {
    let td = tier(2);
    let ds = discretize_tier(&td, &[3, 6], 60, true).unwrap().dataset;
    let x = dummy_encode(&ds, &["abs_diff_agg", "forecast_value"]).unwrap();
    let y = td.outcomes();
    let opts = CdOptions::default();
    let lambdas = lambda_path(&x, &y, Penalty::L1, &PathSettings::default(), &opts).unwrap();
    c.bench_function("lasso_path_tier2", |b| {
        b.iter(|| fit_path(black_box(&x), &y, Penalty::L1, &lambdas, &opts).unwrap())
    });
}

fn bench_likelihood_weighting(c: &mut Criterion) {
    let td = tier(4);
    let ds = discretize_tier(&td, &[3, 3, 3, 3], 60, true)
        .unwrap()
        .dataset;
    let preds: Vec<String> = ["abs_diff_agg", "forecast_value", "days_prior", "msbs"]
        .map(String::from)
        .to_vec();
    let dag = flat_structure(&preds, "outcome", FlatShape::NaiveBayes).unwrap();
    let bn = fit_cpts(&dag, &ds, 1.0).unwrap();
    c.bench_function("lw_predict_tier4_500", |b| {
        b.iter(|| predict_outcome(&bn, black_box(&ds), "outcome", 500, 3).unwrap())
    });
}

criterion_group!(
    benches,
    bench_auc,
    bench_features,
    bench_discretize,
    bench_pc,
    bench_lasso_path,
    bench_likelihood_weighting
);
criterion_main!(benches);
