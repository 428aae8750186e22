use std::io::BufReader;
use std::time::Instant;

use blockprop::explain::ablate::{ablate_groups, AblationMode};
use blockprop::features::domains::DomainLookup;
use blockprop::features::toxicity::ToxicityMode;
use blockprop::features::{build_matrix, FeatureManifest, UserFilter};
use blockprop::graph::centralities;
use blockprop::ingest::parse_replay;
use blockprop::labeling::{label_dataset, TargetDefinition, Targets, LEAKAGE_EXCLUDED};
use blockprop::learner::regress::{evaluate_regression, RegressionParams};
use blockprop::learner::{cross_validate, BoostParams, CvParams};
use blockprop::synth::{generate, ScenarioConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn calibrate_classification() {
    let t0 = Instant::now();
    let config = ScenarioConfig::classification(42);
    let corpus = generate(&config).unwrap();
    eprintln!(
        "gen {:?} lines={}",
        t0.elapsed(),
        corpus.ndjson.lines().count()
    );
    let outcome = parse_replay(
        BufReader::new(corpus.ndjson.as_bytes()),
        Some(config.window()),
    )
    .unwrap();
    eprintln!("parse {:?} events={}", t0.elapsed(), outcome.log.len());

    let mut lookup = DomainLookup::empty();
    lookup.add_ratings_text(&corpus.ratings_tsv).unwrap();
    lookup.add_quality_text(&corpus.quality_tsv).unwrap();
    let cents = centralities(&outcome.log);
    eprintln!("centralities {:?}", t0.elapsed());

    let manifest = FeatureManifest::default();
    let matrix = build_matrix(
        &outcome.log,
        &UserFilter::default(),
        &lookup,
        &cents,
        &manifest,
        &ToxicityMode::Sidecar,
    )
    .unwrap();
    eprintln!(
        "matrix {:?} rows={} cols={}",
        t0.elapsed(),
        matrix.users.len(),
        matrix.names.len()
    );
    let targets = Targets::from_log(&outcome.log, &matrix.users);

    let boost = BoostParams::default();
    let cv = CvParams::default();
    for def in [TargetDefinition::Raw, TargetDefinition::Norm] {
        let ds = label_dataset(&matrix, &targets, def, 0.9).unwrap();
        let t1 = Instant::now();
        let out = cross_validate(&ds.features, &ds.labels, &boost, &cv).unwrap();
        eprintln!(
            "q0.9 {:?} auc={:.4} std={:.4} pos={} took {:?}",
            def,
            out.mean_auc,
            out.std_auc,
            ds.positives(),
            t1.elapsed()
        );
    }

    let light_boost = BoostParams {
        n_estimators: 300,
        ..BoostParams::default()
    };
    let light_cv = CvParams {
        runs: 5,
        folds: 5,
        ..CvParams::default()
    };
    for q in [0.5, 0.9, 0.99] {
        let ds = label_dataset(&matrix, &targets, TargetDefinition::Raw, q).unwrap();
        let out = cross_validate(&ds.features, &ds.labels, &light_boost, &light_cv).unwrap();
        eprintln!("grad q{q} auc={:.4} pos={}", out.mean_auc, ds.positives());
    }

    let ds = label_dataset(&matrix, &targets, TargetDefinition::Raw, 0.9).unwrap();
    for mode in AblationMode::ALL {
        let t1 = Instant::now();
        let rep = ablate_groups(&ds, &manifest, &light_boost, &light_cv, mode).unwrap();
        eprintln!(
            "{:?} baseline={:.4} took {:?}",
            mode,
            rep.baseline_mean_auc,
            t1.elapsed()
        );
        for c in &rep.cells {
            eprintln!("  {:?} n={} auc={:.4}", c.group, c.n_features, c.mean_auc);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut permuted = ds.labels.clone();
    permuted.shuffle(&mut rng);
    let out = cross_validate(&ds.features, &permuted, &light_boost, &light_cv).unwrap();
    eprintln!("permuted auc={:.4}", out.mean_auc);
    eprintln!("total {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn calibrate_regression() {
    let t0 = Instant::now();
    let config = ScenarioConfig::regression(42);
    let corpus = generate(&config).unwrap();
    let outcome = parse_replay(
        BufReader::new(corpus.ndjson.as_bytes()),
        Some(config.window()),
    )
    .unwrap();
    let mut lookup = DomainLookup::empty();
    lookup.add_ratings_text(&corpus.ratings_tsv).unwrap();
    lookup.add_quality_text(&corpus.quality_tsv).unwrap();
    let cents = centralities(&outcome.log);
    let manifest = FeatureManifest::default();
    let matrix = build_matrix(
        &outcome.log,
        &UserFilter::default(),
        &lookup,
        &cents,
        &manifest,
        &ToxicityMode::Sidecar,
    )
    .unwrap();
    let targets = Targets::from_log(&outcome.log, &matrix.users);
    eprintln!(
        "prep {:?} rows={} bayes_r2={:.4}",
        t0.elapsed(),
        matrix.users.len(),
        corpus.ground_truth.bayes_r2
    );

    let keep: Vec<usize> = matrix
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| !LEAKAGE_EXCLUDED.contains(&n.as_str()))
        .map(|(i, _)| i)
        .collect();
    let features = matrix.values.select_cols(&keep);
    let names: Vec<String> = keep.iter().map(|&i| matrix.names[i].clone()).collect();

    let t1 = Instant::now();
    let report =
        evaluate_regression(&features, &targets.raw, &names, &RegressionParams::default())
            .unwrap();
    eprintln!(
        "regression r2={:.4} mae={:.4} pearson={:.4} median_true={:.2} took {:?}",
        report.r2, report.mae, report.pearson, report.median_true, t1.elapsed()
    );
}

#[test]
#[ignore]
fn probe_posts_leak() {
    use blockprop::features::FeatureGroup;
    use blockprop::learner::metrics::roc_auc;

    let config = ScenarioConfig::classification(42);
    let corpus = generate(&config).unwrap();
    let outcome = parse_replay(
        BufReader::new(corpus.ndjson.as_bytes()),
        Some(config.window()),
    )
    .unwrap();
    let mut lookup = DomainLookup::empty();
    lookup.add_ratings_text(&corpus.ratings_tsv).unwrap();
    lookup.add_quality_text(&corpus.quality_tsv).unwrap();
    let cents = centralities(&outcome.log);
    let manifest = FeatureManifest::default();
    let matrix = build_matrix(
        &outcome.log,
        &UserFilter::default(),
        &lookup,
        &cents,
        &manifest,
        &ToxicityMode::Sidecar,
    )
    .unwrap();
    let targets = Targets::from_log(&outcome.log, &matrix.users);
    let ds = label_dataset(&matrix, &targets, TargetDefinition::Raw, 0.9).unwrap();

    let mut rows: Vec<(f64, String)> = Vec::new();
    for (c, name) in ds.feature_names.iter().enumerate() {
        let group = manifest.group_of(name);
        if group != Some(FeatureGroup::Posts) && group != Some(FeatureGroup::Domain) {
            continue;
        }
        let auc = roc_auc(&ds.labels, &ds.features.column(c)).unwrap();
        rows.push(((auc - 0.5).abs(), format!("{name} {:?} auc={auc:.4}", group.unwrap())));
    }
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for (_, line) in rows.iter().take(20) {
        eprintln!("{line}");
    }
}
