//! File-based pipeline stages behind the command-line interface.
//!
//! Each command reads its inputs from the configured source paths or from
//! the artifacts an earlier command left in the output directory, computes
//! one stage, and writes its outputs atomically (temp file, then rename).
//! Every stage directory carries a `meta.json` sidecar embedding the
//! config hash, the master seed, and the feature manifest version, so any
//! artifact can be traced to the configuration that produced it.
//!
//! Commands compose through files: a downstream command loads exactly what
//! the upstream command wrote, and a missing input fails with a dependency
//! error naming the command that produces it. [`cmd_run_all`] chains every
//! stage in process, handing results forward in memory while emitting the
//! same artifact bytes as the file-by-file chain.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::explain::ablate::{ablate_best_worst, ablate_groups, AblationMode};
use crate::explain::{aggregate_importance, attributions, beeswarm_export};
use crate::features::domains::DomainLookup;
use crate::features::{build_matrix, FeatureManifest, FeatureMatrix};
use crate::graph;
use crate::ingest::{parse_replay_file, summarize, EventKind, EventLog, ParseStats};
use crate::labeling::{
    ecdf_points, label_dataset, undersample_balance, LabeledDataset, TargetDefinition, Targets,
    LEAKAGE_EXCLUDED,
};
use crate::learner::regress::evaluate_regression;
use crate::learner::{
    cross_validate, derive_seed, model_from_json, model_to_json, BoostedClassifier, CvOutcome,
    ModelKind,
};
use crate::synth::{self, SynthCorpus};

/// Schema tag embedded in every stage's `meta.json`.
pub const META_SCHEMA: &str = "blockprop.meta.v1";
/// Schema tag of the report directory index.
pub const REPORT_SCHEMA: &str = "blockprop.report.v1";

const STREAM_CV: u64 = 1;
const STREAM_MODEL: u64 = 2;
const STREAM_REGRESS: u64 = 3;
const STREAM_ABLATE_GROUPS: u64 = 4;
const STREAM_ABLATE_BEST: u64 = 5;

fn def_index(def: TargetDefinition) -> u64 {
    match def {
        TargetDefinition::Raw => 0,
        TargetDefinition::Norm => 1,
    }
}

/// One deterministic seed per (stream, definition, quantile) cell.
fn cell_seed(master: u64, stream: u64, def: TargetDefinition, q_index: usize) -> u64 {
    derive_seed(
        master,
        stream * 1_000_000 + def_index(def) * 10_000 + q_index as u64,
    )
}

/// Quantile rendered for file names; shortest form that parses back.
fn qtag(q: f64) -> String {
    format!("{q}")
}

/// Resolves every artifact path under one output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn new(cfg: &RunConfig) -> Artifacts {
        Artifacts {
            root: cfg.out_dir.clone(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn stage(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn meta(&self, stage: &str) -> PathBuf {
        self.stage(stage).join("meta.json")
    }

    pub fn synth_events(&self) -> PathBuf {
        self.stage("synth").join("events.ndjson")
    }

    pub fn synth_truth(&self) -> PathBuf {
        self.stage("synth").join("truth.json")
    }

    pub fn synth_ratings(&self) -> PathBuf {
        self.stage("synth").join("ratings.tsv")
    }

    pub fn synth_quality(&self) -> PathBuf {
        self.stage("synth").join("quality.tsv")
    }

    pub fn ingest_log(&self) -> PathBuf {
        self.stage("ingest").join("log.ndjson")
    }

    pub fn ingest_summary(&self) -> PathBuf {
        self.stage("ingest").join("summary.json")
    }

    pub fn ingest_daily(&self) -> PathBuf {
        self.stage("ingest").join("activity_daily.csv")
    }

    pub fn matrix(&self) -> PathBuf {
        self.stage("features").join("matrix.csv")
    }

    pub fn manifest_text(&self) -> PathBuf {
        self.stage("features").join("manifest.txt")
    }

    pub fn targets(&self) -> PathBuf {
        self.stage("label").join("targets.csv")
    }

    pub fn thresholds(&self) -> PathBuf {
        self.stage("label").join("thresholds.csv")
    }

    pub fn ecdf(&self, def: TargetDefinition) -> PathBuf {
        self.stage("label").join(format!("ecdf_{}.csv", def.as_str()))
    }

    pub fn labels(&self, def: TargetDefinition, q: f64) -> PathBuf {
        self.stage("label")
            .join(format!("labels_{}_q{}.csv", def.as_str(), qtag(q)))
    }

    pub fn cv_table(&self, def: TargetDefinition) -> PathBuf {
        self.stage("train").join(format!("cv_{}.csv", def.as_str()))
    }

    pub fn model(&self, def: TargetDefinition, q: f64) -> PathBuf {
        self.stage("train")
            .join(format!("model_{}_q{}.json", def.as_str(), qtag(q)))
    }

    pub fn importance(&self, def: TargetDefinition, q: f64) -> PathBuf {
        self.stage("explain")
            .join(format!("importance_{}_q{}.csv", def.as_str(), qtag(q)))
    }

    pub fn group_shares(&self, def: TargetDefinition, q: f64) -> PathBuf {
        self.stage("explain")
            .join(format!("groups_{}_q{}.csv", def.as_str(), qtag(q)))
    }

    pub fn beeswarm(&self, def: TargetDefinition, q: f64) -> PathBuf {
        self.stage("explain")
            .join(format!("beeswarm_{}_q{}.csv", def.as_str(), qtag(q)))
    }

    pub fn ranks(&self, def: TargetDefinition) -> PathBuf {
        self.stage("explain")
            .join(format!("ranks_{}.csv", def.as_str()))
    }

    pub fn ablation_groups(&self, def: TargetDefinition, mode: AblationMode) -> PathBuf {
        let tag = match mode {
            AblationMode::OnlyGroup => "only",
            AblationMode::AllButGroup => "allbut",
        };
        self.stage("ablate")
            .join(format!("groups_{tag}_{}.csv", def.as_str()))
    }

    pub fn best_worst(&self, def: TargetDefinition, q: f64) -> PathBuf {
        self.stage("ablate")
            .join(format!("bestworst_{}_q{}.csv", def.as_str(), qtag(q)))
    }

    pub fn regress_report(&self, def: TargetDefinition) -> PathBuf {
        self.stage("regress")
            .join(format!("regression_{}.json", def.as_str()))
    }

    pub fn regress_bins(&self, def: TargetDefinition) -> PathBuf {
        self.stage("regress")
            .join(format!("regression_bins_{}.csv", def.as_str()))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.stage("report")
    }

    pub fn report_index(&self) -> PathBuf {
        self.stage("report").join("index.json")
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path
        .parent()
        .ok_or_else(|| Error::Config(format!("artifact path `{}` has no parent", path.display())))?;
    fs::create_dir_all(parent)?;
    let mut tmp_name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = parent.join(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn csv_bytes<F>(build: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    build(&mut w)?;
    w.flush()?;
    w.into_inner()
        .map_err(|e| Error::Data(format!("csv write: {e}")))
}

fn write_csv<F>(path: &Path, build: F) -> Result<()>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    write_atomic(path, &csv_bytes(build)?)
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Dependency(format!(
            "missing artifact `{}`; run `blockprop {producer}` first",
            path.display()
        )))
    }
}

#[derive(Serialize)]
struct StageMeta<'a> {
    schema: &'a str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    manifest_version: &'a str,
}

fn write_meta(art: &Artifacts, stage: &str, cfg: &RunConfig, manifest: &FeatureManifest) -> Result<()> {
    write_json(
        &art.meta(stage),
        &StageMeta {
            schema: META_SCHEMA,
            command: stage,
            config_hash: &cfg.hash(),
            seed: cfg.seed,
            manifest_version: manifest.version(),
        },
    )
}

fn resolve_manifest(cfg: &RunConfig) -> Result<FeatureManifest> {
    match &cfg.manifest {
        Some(path) => {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "manifest path `{}` does not exist",
                    path.display()
                )));
            }
            FeatureManifest::load(path)
        }
        None => Ok(FeatureManifest::default()),
    }
}

fn config_window(cfg: &RunConfig) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
    match (cfg.window_start, cfg.window_end) {
        (Some(s), Some(e)) => Some((s, e)),
        _ => None,
    }
}

/// Generates the synthetic corpus and writes its four artifacts.
pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(cfg);
    synth_run(cfg, &art).map(|_| ())
}

fn synth_run(cfg: &RunConfig, art: &Artifacts) -> Result<SynthCorpus> {
    let manifest = resolve_manifest(cfg)?;
    let scenario = cfg.scenario_config()?;
    let mut corpus = synth::generate(&scenario)?;
    if cfg.synth_malformed > 0 {
        corpus.ndjson =
            synth::inject_malformed(&corpus.ndjson, cfg.synth_malformed as usize, scenario.seed)?;
    }
    write_atomic(&art.synth_events(), corpus.ndjson.as_bytes())?;
    write_json(&art.synth_truth(), &corpus.ground_truth)?;
    write_atomic(&art.synth_ratings(), corpus.ratings_tsv.as_bytes())?;
    write_atomic(&art.synth_quality(), corpus.quality_tsv.as_bytes())?;
    write_meta(art, "synth", cfg, &manifest)?;
    Ok(corpus)
}

fn replay_source(cfg: &RunConfig, art: &Artifacts) -> Result<PathBuf> {
    match &cfg.replay {
        Some(path) => {
            if path.is_file() {
                Ok(path.clone())
            } else {
                Err(Error::Config(format!(
                    "replay path `{}` does not exist",
                    path.display()
                )))
            }
        }
        None => {
            let fallback = art.synth_events();
            if fallback.is_file() {
                Ok(fallback)
            } else {
                Err(Error::Dependency(format!(
                    "no replay configured and `{}` is missing; run `blockprop synth` first",
                    fallback.display()
                )))
            }
        }
    }
}

/// Parses the replay into the canonical event log artifact.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(cfg);
    ingest_run(cfg, &art).map(|_| ())
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    parse: &'a ParseStats,
    activity: &'a crate::ingest::ActivitySummary,
}

fn ingest_run(cfg: &RunConfig, art: &Artifacts) -> Result<EventLog> {
    let manifest = resolve_manifest(cfg)?;
    let source = replay_source(cfg, art)?;
    let outcome = parse_replay_file(&source, config_window(cfg))?;
    let log = outcome.log;
    write_atomic(&art.ingest_log(), log.to_ndjson().as_bytes())?;
    let activity = summarize(&log);
    write_json(
        &art.ingest_summary(),
        &IngestSummary {
            parse: &outcome.stats,
            activity: &activity,
        },
    )?;
    write_csv(&art.ingest_daily(), |w| {
        let mut header = vec!["date".to_string()];
        header.extend(EventKind::ALL.iter().map(|k| k.as_str().to_string()));
        w.write_record(&header)?;
        for day in &activity.daily {
            let mut record = vec![day.date.to_string()];
            record.extend(day.creates.iter().map(|c| c.to_string()));
            w.write_record(&record)?;
        }
        Ok(())
    })?;
    write_meta(art, "ingest", cfg, &manifest)?;
    Ok(log)
}

fn load_log(cfg: &RunConfig, art: &Artifacts) -> Result<EventLog> {
    require(&art.ingest_log(), "ingest")?;
    let outcome = parse_replay_file(&art.ingest_log(), config_window(cfg))?;
    Ok(outcome.log)
}

fn domain_lookup(cfg: &RunConfig, art: &Artifacts) -> Result<DomainLookup> {
    let mut lookup = DomainLookup::empty();
    let ratings = match &cfg.ratings {
        Some(path) => {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "ratings path `{}` does not exist",
                    path.display()
                )));
            }
            Some(path.clone())
        }
        None => Some(art.synth_ratings()).filter(|p| p.is_file()),
    };
    if let Some(path) = ratings {
        lookup.add_ratings_text(&fs::read_to_string(path)?)?;
    }
    let quality = match &cfg.quality {
        Some(path) => {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "quality path `{}` does not exist",
                    path.display()
                )));
            }
            Some(path.clone())
        }
        None => Some(art.synth_quality()).filter(|p| p.is_file()),
    };
    if let Some(path) = quality {
        lookup.add_quality_text(&fs::read_to_string(path)?)?;
    }
    Ok(lookup)
}

/// Builds and writes the per-user feature matrix.
pub fn cmd_features(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(cfg);
    let log = load_log(cfg, &art)?;
    features_run(cfg, &art, &log).map(|_| ())
}

fn features_run(cfg: &RunConfig, art: &Artifacts, log: &EventLog) -> Result<FeatureMatrix> {
    let manifest = resolve_manifest(cfg)?;
    let lookup = domain_lookup(cfg, art)?;
    let centralities = graph::centralities(log);
    let matrix = build_matrix(
        log,
        &cfg.user_filter(),
        &lookup,
        &centralities,
        &manifest,
        &cfg.tox_mode.mode(),
    )?;
    write_atomic(&art.matrix(), matrix.to_csv_string()?.as_bytes())?;
    write_atomic(&art.manifest_text(), manifest.to_text().as_bytes())?;
    write_meta(art, "features", cfg, &manifest)?;
    Ok(matrix)
}

fn load_matrix(art: &Artifacts) -> Result<FeatureMatrix> {
    require(&art.matrix(), "features")?;
    FeatureMatrix::read_csv(&art.matrix())
}

/// One (definition, quantile) cell of the labeling sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCell {
    pub def: TargetDefinition,
    pub q_index: usize,
    pub quantile: f64,
    pub threshold: f64,
    pub positives: usize,
    pub negatives: usize,
    /// False when the threshold left the positive class empty.
    pub ok: bool,
}

/// Labeling outputs handed to the training stages.
pub struct LabelPlan {
    pub targets: Targets,
    pub cells: Vec<LabelCell>,
}

/// Computes targets and sweeps the quantile grid into labeled datasets.
pub fn cmd_label(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(cfg);
    let log = load_log(cfg, &art)?;
    let matrix = load_matrix(&art)?;
    label_run(cfg, &art, &log, &matrix).map(|_| ())
}

fn label_run(
    cfg: &RunConfig,
    art: &Artifacts,
    log: &EventLog,
    matrix: &FeatureMatrix,
) -> Result<LabelPlan> {
    let manifest = resolve_manifest(cfg)?;
    let targets = Targets::from_log(log, &matrix.users);
    write_csv(&art.targets(), |w| {
        w.write_record(["user_id", "raw", "norm"])?;
        for (i, user) in targets.users.iter().enumerate() {
            w.write_record(&[
                user.clone(),
                format!("{}", targets.raw[i]),
                format!("{}", targets.norm[i]),
            ])?;
        }
        Ok(())
    })?;
    for def in TargetDefinition::ALL {
        write_csv(&art.ecdf(def), |w| {
            w.write_record(["value", "fraction"])?;
            for (value, fraction) in ecdf_points(targets.values(def)) {
                w.write_record(&[format!("{value}"), format!("{fraction}")])?;
            }
            Ok(())
        })?;
    }

    let mut cells = Vec::new();
    for def in cfg.definition.definitions() {
        for (q_index, &quantile) in cfg.quantiles.iter().enumerate() {
            match label_dataset(matrix, &targets, def, quantile) {
                Ok(ds) => {
                    write_csv(&art.labels(def, quantile), |w| {
                        w.write_record(["user_id", "label"])?;
                        for (user, label) in ds.users.iter().zip(&ds.labels) {
                            w.write_record(&[user.clone(), label.to_string()])?;
                        }
                        Ok(())
                    })?;
                    cells.push(LabelCell {
                        def,
                        q_index,
                        quantile,
                        threshold: ds.threshold,
                        positives: ds.positives(),
                        negatives: ds.negatives(),
                        ok: true,
                    });
                }
                Err(Error::DegenerateThreshold { threshold, .. }) => {
                    cells.push(LabelCell {
                        def,
                        q_index,
                        quantile,
                        threshold,
                        positives: 0,
                        negatives: matrix.users.len(),
                        ok: false,
                    });
                }
                Err(other) => return Err(other),
            }
        }
    }
    if !cells.iter().any(|c| c.ok) {
        return Err(Error::Data(
            "every configured (definition, quantile) cell has a degenerate threshold".into(),
        ));
    }
    write_csv(&art.thresholds(), |w| {
        w.write_record([
            "definition",
            "quantile",
            "threshold",
            "positives",
            "negatives",
            "status",
        ])?;
        for cell in &cells {
            w.write_record(&[
                cell.def.as_str().to_string(),
                format!("{}", cell.quantile),
                format!("{}", cell.threshold),
                cell.positives.to_string(),
                cell.negatives.to_string(),
                if cell.ok { "ok" } else { "degenerate" }.to_string(),
            ])?;
        }
        Ok(())
    })?;
    write_meta(art, "label", cfg, &manifest)?;
    Ok(LabelPlan { targets, cells })
}

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot read `{}`: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("bad header in `{}`: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record.map_err(|e| Error::Data(format!("bad row in `{}`: {e}", path.display())))?);
    }
    Ok((header, rows))
}

fn field_f64(record: &csv::StringRecord, idx: usize, path: &Path) -> Result<f64> {
    record
        .get(idx)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Data(format!("bad numeric field in `{}`", path.display())))
}

fn load_targets(art: &Artifacts, matrix: &FeatureMatrix) -> Result<Targets> {
    require(&art.targets(), "label")?;
    let path = art.targets();
    let (header, rows) = read_records(&path)?;
    if header != ["user_id", "raw", "norm"] {
        return Err(Error::Data(format!(
            "`{}` does not look like a targets table",
            path.display()
        )));
    }
    let mut users = Vec::with_capacity(rows.len());
    let mut raw = Vec::with_capacity(rows.len());
    let mut norm = Vec::with_capacity(rows.len());
    for record in &rows {
        users.push(record.get(0).unwrap_or_default().to_string());
        raw.push(field_f64(record, 1, &path)?);
        norm.push(field_f64(record, 2, &path)?);
    }
    if users != matrix.users {
        return Err(Error::Data(
            "targets and feature matrix cover different users; rerun `blockprop label`".into(),
        ));
    }
    Ok(Targets { users, raw, norm })
}

fn load_cells(art: &Artifacts) -> Result<Vec<LabelCell>> {
    require(&art.thresholds(), "label")?;
    let path = art.thresholds();
    let (header, rows) = read_records(&path)?;
    if header != ["definition", "quantile", "threshold", "positives", "negatives", "status"] {
        return Err(Error::Data(format!(
            "`{}` does not look like a thresholds table",
            path.display()
        )));
    }
    let mut cells = Vec::with_capacity(rows.len());
    let mut q_index = BTreeMap::new();
    for record in &rows {
        let def = record
            .get(0)
            .and_then(TargetDefinition::parse)
            .ok_or_else(|| Error::Data(format!("bad definition in `{}`", path.display())))?;
        let quantile = field_f64(record, 1, &path)?;
        let next = q_index.entry(def_index(def)).or_insert(0usize);
        let cell = LabelCell {
            def,
            q_index: *next,
            quantile,
            threshold: field_f64(record, 2, &path)?,
            positives: field_f64(record, 3, &path)? as usize,
            negatives: field_f64(record, 4, &path)? as usize,
            ok: record.get(5) == Some("ok"),
        };
        *next += 1;
        cells.push(cell);
    }
    Ok(cells)
}

fn cell_dataset(
    matrix: &FeatureMatrix,
    targets: &Targets,
    cell: &LabelCell,
) -> Result<LabeledDataset> {
    label_dataset(matrix, targets, cell.def, cell.quantile)
}

/// Rows a cell's final model trains on.
fn model_rows(cfg: &RunConfig, labels: &[u8], seed: u64) -> Vec<usize> {
    if cfg.undersample {
        undersample_balance(labels, seed)
    } else {
        (0..labels.len()).collect()
    }
}

struct TrainedCell {
    cell: LabelCell,
    model: ModelKind,
    cv: CvOutcome,
}

/// Cross-validates each labeled cell and fits its reporting model.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(cfg);
    let matrix = load_matrix(&art)?;
    let targets = load_targets(&art, &matrix)?;
    let cells = load_cells(&art)?;
    train_run(cfg, &art, &matrix, &targets, &cells).map(|_| ())
}

fn train_run(
    cfg: &RunConfig,
    art: &Artifacts,
    matrix: &FeatureMatrix,
    targets: &Targets,
    cells: &[LabelCell],
) -> Result<Vec<TrainedCell>> {
    let manifest = resolve_manifest(cfg)?;
    let mut trained = Vec::new();
    for cell in cells.iter().filter(|c| c.ok) {
        let ds = cell_dataset(matrix, targets, cell)?;
        let cv_seed = cell_seed(cfg.seed, STREAM_CV, cell.def, cell.q_index);
        let outcome = cross_validate(
            &ds.features,
            &ds.labels,
            &cfg.boost_params(cv_seed),
            &cfg.cv_params(cv_seed),
        )?;
        let model_seed = cell_seed(cfg.seed, STREAM_MODEL, cell.def, cell.q_index);
        let rows = model_rows(cfg, &ds.labels, model_seed);
        let x = ds.features.select_rows(&rows);
        let y: Vec<u8> = rows.iter().map(|&i| ds.labels[i]).collect();
        let classifier =
            BoostedClassifier::fit(&x, &y, ds.feature_names.clone(), cfg.boost_params(model_seed));
        let model = ModelKind::BoostedClassifier(classifier);
        write_atomic(
            &art.model(cell.def, cell.quantile),
            model_to_json(&model)?.as_bytes(),
        )?;
        trained.push(TrainedCell {
            cell: cell.clone(),
            model,
            cv: outcome,
        });
    }
    for def in cfg.definition.definitions() {
        write_csv(&art.cv_table(def), |w| {
            w.write_record([
                "quantile",
                "threshold",
                "positives",
                "negatives",
                "mean_auc",
                "std_auc",
            ])?;
            for t in trained.iter().filter(|t| t.cell.def == def) {
                w.write_record(&[
                    format!("{}", t.cell.quantile),
                    format!("{}", t.cell.threshold),
                    t.cell.positives.to_string(),
                    t.cell.negatives.to_string(),
                    format!("{}", t.cv.mean_auc),
                    format!("{}", t.cv.std_auc),
                ])?;
            }
            Ok(())
        })?;
    }
    write_meta(art, "train", cfg, &manifest)?;
    Ok(trained)
}

fn load_trained(
    cfg: &RunConfig,
    art: &Artifacts,
    matrix: &FeatureMatrix,
    targets: &Targets,
    cells: &[LabelCell],
) -> Result<Vec<TrainedCell>> {
    let mut trained = Vec::new();
    for cell in cells.iter().filter(|c| c.ok) {
        let path = art.model(cell.def, cell.quantile);
        require(&path, "train")?;
        let model = model_from_json(&fs::read_to_string(&path)?)?;
        let ds = cell_dataset(matrix, targets, cell)?;
        if model.feature_names() != ds.feature_names {
            return Err(Error::Data(format!(
                "model `{}` was trained on different columns; rerun `blockprop train`",
                path.display()
            )));
        }
        let _ = cfg;
        trained.push(TrainedCell {
            cell: cell.clone(),
            model,
            cv: CvOutcome {
                run_aucs: Vec::new(),
                mean_auc: f64::NAN,
                std_auc: f64::NAN,
            },
        });
    }
    Ok(trained)
}

/// Attribution tables per trained cell plus cross-quantile rank tracks.
pub fn cmd_explain(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(cfg);
    let matrix = load_matrix(&art)?;
    let targets = load_targets(&art, &matrix)?;
    let cells = load_cells(&art)?;
    let trained = load_trained(cfg, &art, &matrix, &targets, &cells)?;
    explain_run(cfg, &art, &matrix, &targets, &trained).map(|_| ())
}

/// Importance ranking of one explained cell, keyed for the ablation stage.
struct ExplainedCell {
    cell: LabelCell,
    ranking: Vec<String>,
}

fn explain_run(
    cfg: &RunConfig,
    art: &Artifacts,
    matrix: &FeatureMatrix,
    targets: &Targets,
    trained: &[TrainedCell],
) -> Result<Vec<ExplainedCell>> {
    let manifest = resolve_manifest(cfg)?;
    let mut explained = Vec::new();
    for t in trained {
        let ds = cell_dataset(matrix, targets, &t.cell)?;
        let model_seed = cell_seed(cfg.seed, STREAM_MODEL, t.cell.def, t.cell.q_index);
        let rows = model_rows(cfg, &ds.labels, model_seed);
        let x = ds.features.select_rows(&rows);
        let users: Vec<String> = rows.iter().map(|&i| ds.users[i].clone()).collect();
        let attr = attributions(&t.model, &x, &ds.feature_names)?;
        let report = aggregate_importance(&attr, &manifest);
        write_csv(&art.importance(t.cell.def, t.cell.quantile), |w| {
            w.write_record(["rank", "feature", "group", "mean_abs_phi"])?;
            for (i, f) in report.ranking.iter().enumerate() {
                w.write_record(&[
                    (i + 1).to_string(),
                    f.feature.clone(),
                    f.group.clone(),
                    format!("{}", f.mean_abs_phi),
                ])?;
            }
            Ok(())
        })?;
        write_csv(&art.group_shares(t.cell.def, t.cell.quantile), |w| {
            w.write_record(["group", "share", "degenerate"])?;
            for g in &report.group_shares {
                w.write_record(&[
                    g.group.clone(),
                    format!("{}", g.share),
                    report.degenerate.to_string(),
                ])?;
            }
            Ok(())
        })?;
        let swarm = beeswarm_export(&attr, &x, &users, 10);
        write_csv(&art.beeswarm(t.cell.def, t.cell.quantile), |w| {
            w.write_record(["feature", "user", "phi", "value", "percentile"])?;
            for row in &swarm {
                w.write_record(&[
                    row.feature.clone(),
                    row.user.clone(),
                    format!("{}", row.phi),
                    format!("{}", row.value),
                    format!("{}", row.percentile),
                ])?;
            }
            Ok(())
        })?;
        explained.push(ExplainedCell {
            cell: t.cell.clone(),
            ranking: report.ranked_features(),
        });
    }

    for def in cfg.definition.definitions() {
        let defs: Vec<&ExplainedCell> = explained.iter().filter(|e| e.cell.def == def).collect();
        if defs.is_empty() {
            continue;
        }
        let mut union: Vec<String> = Vec::new();
        for e in &defs {
            for feature in e.ranking.iter().take(8) {
                if !union.contains(feature) {
                    union.push(feature.clone());
                }
            }
        }
        write_csv(&art.ranks(def), |w| {
            w.write_record(["quantile", "feature", "rank"])?;
            for e in &defs {
                for feature in &union {
                    if let Some(pos) = e.ranking.iter().position(|f| f == feature) {
                        w.write_record(&[
                            format!("{}", e.cell.quantile),
                            feature.clone(),
                            (pos + 1).to_string(),
                        ])?;
                    }
                }
            }
            Ok(())
        })?;
    }
    write_meta(art, "explain", cfg, &manifest)?;
    Ok(explained)
}

fn load_rankings(art: &Artifacts, cells: &[LabelCell]) -> Result<Vec<ExplainedCell>> {
    let mut explained = Vec::new();
    for cell in cells.iter().filter(|c| c.ok) {
        let path = art.importance(cell.def, cell.quantile);
        require(&path, "explain")?;
        let (header, rows) = read_records(&path)?;
        if header != ["rank", "feature", "group", "mean_abs_phi"] {
            return Err(Error::Data(format!(
                "`{}` does not look like an importance table",
                path.display()
            )));
        }
        let ranking = rows
            .iter()
            .map(|r| r.get(1).unwrap_or_default().to_string())
            .collect();
        explained.push(ExplainedCell {
            cell: cell.clone(),
            ranking,
        });
    }
    Ok(explained)
}

/// Group-restricted and best/worst-n retraining sweeps.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(cfg);
    let matrix = load_matrix(&art)?;
    let targets = load_targets(&art, &matrix)?;
    let cells = load_cells(&art)?;
    let explained = load_rankings(&art, &cells)?;
    ablate_run(cfg, &art, &matrix, &targets, &explained)
}

fn ablate_run(
    cfg: &RunConfig,
    art: &Artifacts,
    matrix: &FeatureMatrix,
    targets: &Targets,
    explained: &[ExplainedCell],
) -> Result<()> {
    let manifest = resolve_manifest(cfg)?;
    for def in cfg.definition.definitions() {
        let defs: Vec<&ExplainedCell> = explained.iter().filter(|e| e.cell.def == def).collect();
        if defs.is_empty() {
            continue;
        }
        for mode in [AblationMode::OnlyGroup, AblationMode::AllButGroup] {
            let mut tables = Vec::new();
            for e in &defs {
                let ds = cell_dataset(matrix, targets, &e.cell)?;
                let seed = cell_seed(cfg.seed, STREAM_ABLATE_GROUPS, def, e.cell.q_index);
                let ablation = ablate_groups(
                    &ds,
                    &manifest,
                    &cfg.boost_params(seed),
                    &cfg.cv_params(seed),
                    mode,
                )?;
                tables.push((e.cell.quantile, ablation));
            }
            write_csv(&art.ablation_groups(def, mode), |w| {
                w.write_record([
                    "quantile",
                    "group",
                    "n_features",
                    "mean_auc",
                    "std_auc",
                    "baseline_mean_auc",
                    "baseline_std_auc",
                ])?;
                for (quantile, ablation) in &tables {
                    for cell in &ablation.cells {
                        w.write_record(&[
                            format!("{quantile}"),
                            cell.group.clone(),
                            cell.n_features.to_string(),
                            format!("{}", cell.mean_auc),
                            format!("{}", cell.std_auc),
                            format!("{}", ablation.baseline_mean_auc),
                            format!("{}", ablation.baseline_std_auc),
                        ])?;
                    }
                }
                Ok(())
            })?;
        }
        for e in &defs {
            let ds = cell_dataset(matrix, targets, &e.cell)?;
            let seed = cell_seed(cfg.seed, STREAM_ABLATE_BEST, def, e.cell.q_index);
            let report = ablate_best_worst(
                &ds,
                &e.ranking,
                &cfg.best_worst_grid,
                &cfg.boost_params(seed),
                &cfg.cv_params(seed),
            )?;
            write_csv(&art.best_worst(def, e.cell.quantile), |w| {
                w.write_record([
                    "n",
                    "top_mean_auc",
                    "top_std_auc",
                    "bottom_mean_auc",
                    "bottom_std_auc",
                    "baseline_mean_auc",
                    "baseline_std_auc",
                ])?;
                for cell in &report.cells {
                    w.write_record(&[
                        cell.n.to_string(),
                        format!("{}", cell.top_mean_auc),
                        format!("{}", cell.top_std_auc),
                        format!("{}", cell.bottom_mean_auc),
                        format!("{}", cell.bottom_std_auc),
                        format!("{}", report.baseline_mean_auc),
                        format!("{}", report.baseline_std_auc),
                    ])?;
                }
                Ok(())
            })?;
        }
    }
    write_meta(art, "ablate", cfg, &manifest)
}

/// Random-forest regression on the continuous targets.
pub fn cmd_regress(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(cfg);
    let matrix = load_matrix(&art)?;
    let targets = load_targets(&art, &matrix)?;
    regress_run(cfg, &art, &matrix, &targets)
}

fn regress_run(
    cfg: &RunConfig,
    art: &Artifacts,
    matrix: &FeatureMatrix,
    targets: &Targets,
) -> Result<()> {
    let manifest = resolve_manifest(cfg)?;
    let kept: Vec<usize> = matrix
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| !LEAKAGE_EXCLUDED.contains(&n.as_str()))
        .map(|(i, _)| i)
        .collect();
    let names: Vec<String> = kept.iter().map(|&i| matrix.names[i].clone()).collect();
    let x = matrix.values.select_cols(&kept);
    for def in cfg.definition.definitions() {
        let seed = derive_seed(cfg.seed, STREAM_REGRESS * 1_000_000 + def_index(def));
        let report = evaluate_regression(
            &x,
            targets.values(def),
            &names,
            &cfg.regression_params(seed),
        )?;
        write_json(&art.regress_report(def), &report)?;
        write_csv(&art.regress_bins(def), |w| {
            w.write_record(["bin", "count", "mean_true", "mean_pred"])?;
            for (i, bin) in report.bins.iter().enumerate() {
                w.write_record(&[
                    (i + 1).to_string(),
                    bin.count.to_string(),
                    format!("{}", bin.mean_true),
                    format!("{}", bin.mean_pred),
                ])?;
            }
            Ok(())
        })?;
    }
    write_meta(art, "regress", cfg, &manifest)
}

#[derive(Serialize)]
struct ReportEntry {
    family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    definition: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantile: Option<f64>,
    path: String,
}

#[derive(Serialize)]
struct ReportIndex<'a> {
    schema: &'a str,
    config_hash: &'a str,
    seed: u64,
    manifest_version: &'a str,
    tables: Vec<ReportEntry>,
}

/// Copies every table family into one directory with a machine-readable index.
pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(cfg);
    report_run(cfg, &art)
}

fn report_run(cfg: &RunConfig, art: &Artifacts) -> Result<()> {
    let manifest = resolve_manifest(cfg)?;
    let cells = load_cells(&art)?;
    let report_dir = art.report_dir();

    let mut plan: Vec<(String, Option<TargetDefinition>, Option<f64>, PathBuf, &str)> = vec![(
        "activity".into(),
        None,
        None,
        art.ingest_daily(),
        "ingest",
    )];
    for def in TargetDefinition::ALL {
        plan.push(("target_ecdf".into(), Some(def), None, art.ecdf(def), "label"));
    }
    for def in cfg.definition.definitions() {
        plan.push(("auc_sweep".into(), Some(def), None, art.cv_table(def), "train"));
        plan.push((
            "group_only".into(),
            Some(def),
            None,
            art.ablation_groups(def, AblationMode::OnlyGroup),
            "ablate",
        ));
        plan.push((
            "group_allbut".into(),
            Some(def),
            None,
            art.ablation_groups(def, AblationMode::AllButGroup),
            "ablate",
        ));
        plan.push(("feature_ranks".into(), Some(def), None, art.ranks(def), "explain"));
        plan.push((
            "regression".into(),
            Some(def),
            None,
            art.regress_report(def),
            "regress",
        ));
        plan.push((
            "regression_bins".into(),
            Some(def),
            None,
            art.regress_bins(def),
            "regress",
        ));
    }
    for cell in cells.iter().filter(|c| c.ok) {
        plan.push((
            "importance".into(),
            Some(cell.def),
            Some(cell.quantile),
            art.importance(cell.def, cell.quantile),
            "explain",
        ));
        plan.push((
            "beeswarm".into(),
            Some(cell.def),
            Some(cell.quantile),
            art.beeswarm(cell.def, cell.quantile),
            "explain",
        ));
        plan.push((
            "group_shares".into(),
            Some(cell.def),
            Some(cell.quantile),
            art.group_shares(cell.def, cell.quantile),
            "explain",
        ));
        plan.push((
            "best_worst".into(),
            Some(cell.def),
            Some(cell.quantile),
            art.best_worst(cell.def, cell.quantile),
            "ablate",
        ));
    }

    let mut tables = Vec::with_capacity(plan.len());
    for (family, def, quantile, source, producer) in plan {
        require(&source, producer)?;
        let name = source
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_default();
        write_atomic(&report_dir.join(&name), &fs::read(&source)?)?;
        tables.push(ReportEntry {
            family,
            definition: def.map(|d| d.as_str().to_string()),
            quantile,
            path: name,
        });
    }
    write_json(
        &art.report_index(),
        &ReportIndex {
            schema: REPORT_SCHEMA,
            config_hash: &cfg.hash(),
            seed: cfg.seed,
            manifest_version: manifest.version(),
            tables,
        },
    )?;
    write_meta(art, "report", cfg, &manifest)
}

/// Runs every stage in order, passing results forward in memory.
///
/// When no replay is configured the synthetic corpus is generated first
/// and feeds the rest of the chain, which is the zero-setup path: an empty
/// config file demonstrates the whole study on planted-signal data.
pub fn cmd_run_all(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(cfg);
    if cfg.replay.is_none() {
        synth_run(cfg, &art)?;
    }
    let log = ingest_run(cfg, &art)?;
    let matrix = features_run(cfg, &art, &log)?;
    let plan = label_run(cfg, &art, &log, &matrix)?;
    let trained = train_run(cfg, &art, &matrix, &plan.targets, &plan.cells)?;
    let explained = explain_run(cfg, &art, &matrix, &plan.targets, &trained)?;
    ablate_run(cfg, &art, &matrix, &plan.targets, &explained)?;
    regress_run(cfg, &art, &matrix, &plan.targets)?;
    report_run(cfg, &art)
}
