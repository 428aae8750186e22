//! Per-user behavioral feature extraction.
//!
//! An event log is reduced to one numeric row per selected user. Features
//! fall into five groups:
//!
//! - `action`: counts of the user's own create and delete events;
//! - `derived`: counts of actions other users directed at this user;
//! - `posts`: text shape, language mix, toxicity, and URL rate of the
//!   user's original posts and replies;
//! - `domain`: media categories, quality, and diversity of the registrable
//!   domains the user links to;
//! - `graph`: coreness, degree, and PageRank on the four interaction
//!   graphs.
//!
//! Which columns appear, and in what order, is controlled by a
//! [`FeatureManifest`]. The built-in manifest has 81 features; a manifest
//! loaded from disk may reorder or drop them but can only name features
//! the extractor knows how to compute.
//!
//! Users enter the matrix when they pass the [`UserFilter`]: a minimum
//! count of original posts inside the window and a modal declared language
//! matching the configured one. Counts that feed features are taken over
//! the whole log, including events of users that were filtered out, so one
//! user's row never changes when another user enters or leaves the roster.

pub mod domains;
pub mod entropy;
pub mod text;
pub mod toxicity;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CentralityTable;
use crate::ingest::{EventAction, EventKind, EventLog, ToxicityScores};
use crate::matrix::DenseMatrix;
use domains::{BiasCategory, CredibilityLevel, DomainLookup, FactualityLevel};
use entropy::normalized_entropy;
use text::{text_metrics, TextMetrics};
use toxicity::ToxicityMode;

/// The five feature groups.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Action,
    Derived,
    Posts,
    Domain,
    Graph,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::Action,
        FeatureGroup::Derived,
        FeatureGroup::Posts,
        FeatureGroup::Domain,
        FeatureGroup::Graph,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Action => "action",
            FeatureGroup::Derived => "derived",
            FeatureGroup::Posts => "posts",
            FeatureGroup::Domain => "domain",
            FeatureGroup::Graph => "graph",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureGroup> {
        FeatureGroup::ALL.into_iter().find(|g| g.as_str() == s)
    }
}

/// One named feature column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub group: FeatureGroup,
    pub description: String,
}

/// Version tag of the built-in feature set.
pub const BUILTIN_MANIFEST_VERSION: &str = "builtin-81.v1";

/// An ordered list of feature columns with group metadata.
///
/// Text form is one feature per line, tab-separated
/// (`name<TAB>group<TAB>description`), preceded by a `# version:` comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureManifest {
    version: String,
    features: Vec<FeatureSpec>,
    index: HashMap<String, usize>,
}

impl FeatureManifest {
    pub fn new(version: impl Into<String>, features: Vec<FeatureSpec>) -> Result<Self> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, spec) in features.iter().enumerate() {
            if spec.name.is_empty() {
                return Err(Error::Config("manifest has an empty feature name".into()));
            }
            if index.insert(spec.name.clone(), i).is_some() {
                return Err(Error::Config(format!(
                    "manifest lists feature '{}' twice",
                    spec.name
                )));
            }
        }
        Ok(FeatureManifest {
            version: version.into(),
            features,
            index,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn group_of(&self, name: &str) -> Option<FeatureGroup> {
        self.position(name).map(|i| self.features[i].group)
    }

    /// Column positions of every feature in the given group.
    pub fn group_positions(&self, group: FeatureGroup) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.group == group)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# version: {}\n", self.version);
        for f in &self.features {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                f.name,
                f.group.as_str(),
                f.description
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut version = String::from("unversioned");
        let mut features = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = v.trim().to_string();
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Config(format!(
                    "manifest line {}: expected 3 tab-separated fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let group = FeatureGroup::parse(fields[1]).ok_or_else(|| {
                Error::Config(format!(
                    "manifest line {}: unknown group '{}'",
                    lineno + 1,
                    fields[1]
                ))
            })?;
            features.push(FeatureSpec {
                name: fields[0].to_string(),
                group,
                description: fields[2].to_string(),
            });
        }
        FeatureManifest::new(version, features)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        FeatureManifest::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

impl Default for FeatureManifest {
    fn default() -> Self {
        FeatureManifest::new(BUILTIN_MANIFEST_VERSION, builtin_specs())
            .expect("built-in manifest is valid")
    }
}

fn spec(name: impl Into<String>, group: FeatureGroup, description: impl Into<String>) -> FeatureSpec {
    FeatureSpec {
        name: name.into(),
        group,
        description: description.into(),
    }
}

fn tox_dimension_label(dim: &str) -> String {
    dim.replace('_', " ")
}

/// The 81 built-in feature definitions, in canonical column order.
pub fn builtin_specs() -> Vec<FeatureSpec> {
    use FeatureGroup::*;
    let mut v = Vec::with_capacity(81);

    v.push(spec("posts_created", Action, "Original posts created"));
    v.push(spec("posts_deleted", Action, "Posts deleted"));
    v.push(spec("replies_authored", Action, "Replies written to other users"));
    v.push(spec("replies_received", Action, "Replies received from other users"));
    v.push(spec("reposts_created", Action, "Reposts made"));
    v.push(spec("reposts_deleted", Action, "Reposts removed"));
    v.push(spec("likes_created", Action, "Likes given"));
    v.push(spec("likes_deleted", Action, "Likes retracted"));
    v.push(spec("follows_created", Action, "Follows initiated"));
    v.push(spec("follows_deleted", Action, "Unfollows"));
    v.push(spec("blocks_created", Action, "Blocks placed on other users"));
    v.push(spec("blocks_deleted", Action, "Blocks lifted"));

    v.push(spec("times_liked", Derived, "Times this user's content was liked"));
    v.push(spec("times_reposted", Derived, "Times this user's content was reposted"));
    v.push(spec("times_followed", Derived, "Times this user was followed"));
    v.push(spec(
        "times_blocked",
        Derived,
        "Times this user was blocked; mirrors the raw target, so training drops it",
    ));

    for (name, label) in TextMetrics::NAMES.iter().zip([
        "post length in UTF-16 code units",
        "lowercase letters per post",
        "uppercase letters per post",
        "digits per post",
        "whitespace characters per post",
        "emoji per post",
    ]) {
        v.push(spec(format!("{name}_mean"), Posts, format!("Mean {label}")));
        v.push(spec(
            format!("{name}_std"),
            Posts,
            format!("Std dev of {label}"),
        ));
    }
    v.push(spec(
        "language_entropy",
        Posts,
        "Normalized entropy of declared post languages",
    ));
    for dim in ToxicityScores::DIMENSIONS {
        let label = tox_dimension_label(dim);
        v.push(spec(
            format!("tox_{dim}_mean"),
            Posts,
            format!("Mean {label} score"),
        ));
        v.push(spec(
            format!("tox_{dim}_std"),
            Posts,
            format!("Std dev of {label} score"),
        ));
    }
    v.push(spec("urls_per_post", Posts, "Mean URLs shared per post"));
    v.push(spec(
        "domain_entropy",
        Posts,
        "Normalized entropy over registrable domains shared",
    ));

    for cat in BiasCategory::ALL {
        let label = cat.as_str().replace('_', " ");
        v.push(spec(
            format!("bias_{}_per_post", cat.as_str()),
            Domain,
            format!("Links to {label} outlets per post"),
        ));
    }
    for level in CredibilityLevel::ALL {
        v.push(spec(
            format!("cred_{}_per_post", level.as_str()),
            Domain,
            format!("Links to {}-credibility outlets per post", level.as_str()),
        ));
    }
    for level in FactualityLevel::ALL {
        let label = level.as_str().replace('_', " ");
        v.push(spec(
            format!("fact_{}_per_post", level.as_str()),
            Domain,
            format!("Links to outlets with {label} factual reporting per post"),
        ));
    }
    v.push(spec(
        "domain_quality_mean",
        Domain,
        "Mean quality score of matched shared domains, imputed when nothing matches",
    ));
    v.push(spec(
        "rated_urls_per_post",
        Domain,
        "URLs matching the media ratings table per post",
    ));
    v.push(spec(
        "quality_urls_per_post",
        Domain,
        "URLs matching the quality score table per post",
    ));
    v.push(spec("distinct_domains", Domain, "Distinct registrable domains shared"));
    v.push(spec("total_urls", Domain, "Total URLs shared"));

    for col in CentralityTable::COLUMNS {
        let (kind, measure) = col.split_once('_').expect("column name has kind prefix");
        let label = match measure {
            "coreness" => "k-core number",
            "degree" => "total degree",
            "pagerank" => "PageRank score",
            _ => unreachable!(),
        };
        v.push(spec(col, Graph, format!("{label} on the {kind} graph")));
    }

    debug_assert_eq!(v.len(), 81);
    v
}

/// Roster criteria: who gets a feature row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFilter {
    /// Minimum original posts plus replies created inside the window.
    pub min_posts: u64,
    /// Required modal declared language (primary subtag, e.g. "en").
    pub majority_lang: String,
}

impl Default for UserFilter {
    fn default() -> Self {
        UserFilter {
            min_posts: 10,
            majority_lang: "en".to_string(),
        }
    }
}

/// Lowercased primary subtag of a language tag ("en-US" gives "en").
pub fn primary_subtag(tag: &str) -> String {
    tag.split(['-', '_'])
        .next()
        .unwrap_or("")
        .trim()
        .to_lowercase()
}

/// Users passing the roster filter, sorted by id.
///
/// A user qualifies when they created at least `min_posts` posts or
/// replies inside the window and the configured language is among their
/// modal primary language subtags. Each post votes once per distinct
/// primary subtag it declares; users whose posts declare no languages are
/// excluded.
pub fn select_users(log: &EventLog, filter: &UserFilter) -> Vec<String> {
    let wanted = primary_subtag(&filter.majority_lang);
    let mut posts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut votes: HashMap<&str, HashMap<String, u64>> = HashMap::new();
    for e in log.events() {
        if !e.is_original_post() {
            continue;
        }
        *posts.entry(e.actor.as_str()).or_default() += 1;
        let user_votes = votes.entry(e.actor.as_str()).or_default();
        let mut seen = BTreeSet::new();
        for tag in &e.langs {
            let p = primary_subtag(tag);
            if !p.is_empty() {
                seen.insert(p);
            }
        }
        for p in seen {
            *user_votes.entry(p).or_default() += 1;
        }
    }
    posts
        .into_iter()
        .filter(|(user, count)| {
            if *count < filter.min_posts {
                return false;
            }
            let Some(user_votes) = votes.get(user) else {
                return false;
            };
            let max = user_votes.values().copied().max().unwrap_or(0);
            max > 0 && user_votes.get(&wanted).copied() == Some(max)
        })
        .map(|(user, _)| user.to_string())
        .collect()
}

/// One-pass mean and standard deviation accumulator. Tracks whether every
/// pushed value equals the first one: a uniform sample reports its exact
/// value and a standard deviation of exactly zero, where the raw
/// sum-of-squares formula would leave an n-dependent rounding residue.
#[derive(Debug, Clone, Copy, Default)]
struct RunningStat {
    n: u64,
    sum: f64,
    sumsq: f64,
    first: f64,
    uniform: bool,
}

impl RunningStat {
    fn push(&mut self, v: f64) {
        if self.n == 0 {
            self.first = v;
            self.uniform = true;
        } else if v != self.first {
            self.uniform = false;
        }
        self.n += 1;
        self.sum += v;
        self.sumsq += v * v;
    }

    fn mean_std(&self) -> (f64, f64) {
        if self.n == 0 {
            return (0.0, 0.0);
        }
        if self.uniform {
            return (self.first, 0.0);
        }
        let nf = self.n as f64;
        let mean = self.sum / nf;
        let var = (self.sumsq / nf - mean * mean).max(0.0);
        (mean, var.sqrt())
    }
}

#[derive(Default)]
struct UserAccum {
    creates: [u64; 6],
    deletes: [u64; 6],
    replies_received: u64,
    times_liked: u64,
    times_reposted: u64,
    times_followed: u64,
    times_blocked: u64,
    posts_with_text: u64,
    text_stats: [RunningStat; TextMetrics::COUNT],
    lang_counts: BTreeMap<String, u64>,
    tox_stats: [RunningStat; 7],
    missing_tox: Option<String>,
    url_total: u64,
    domain_counts: BTreeMap<String, u64>,
    bias_counts: [u64; 9],
    cred_counts: [u64; 3],
    fact_counts: [u64; 7],
    rated_urls: u64,
    quality_urls: u64,
    quality_sum: f64,
}

impl UserAccum {
    fn add_tox(&mut self, scores: &ToxicityScores) {
        for (i, v) in scores.values().into_iter().enumerate() {
            self.tox_stats[i].push(v);
        }
    }
}

fn per_post(count: u64, posts: u64) -> f64 {
    if posts == 0 {
        0.0
    } else {
        count as f64 / posts as f64
    }
}

fn accumulate(
    log: &EventLog,
    lookup: &DomainLookup,
    tox: &ToxicityMode,
) -> HashMap<String, UserAccum> {
    let mut accums: HashMap<String, UserAccum> = HashMap::new();
    for e in log.events() {
        {
            let acc = accums.entry(e.actor.clone()).or_default();
            match e.action {
                EventAction::Create => acc.creates[e.kind.index()] += 1,
                EventAction::Delete => acc.deletes[e.kind.index()] += 1,
            }
        }

        if e.action == EventAction::Create {
            if let Some(subject) = &e.subject {
                let acc = accums.entry(subject.clone()).or_default();
                match e.kind {
                    EventKind::Like => acc.times_liked += 1,
                    EventKind::Repost => acc.times_reposted += 1,
                    EventKind::Follow => acc.times_followed += 1,
                    EventKind::Block => acc.times_blocked += 1,
                    EventKind::Reply => acc.replies_received += 1,
                    EventKind::Post => {}
                }
            }
        }

        if !e.is_original_post() {
            continue;
        }
        let text = e.text.as_deref().unwrap_or("");
        let metrics = text_metrics(text).values();
        let acc = accums.get_mut(&e.actor).expect("actor accum exists");
        acc.posts_with_text += 1;
        for (i, v) in metrics.into_iter().enumerate() {
            acc.text_stats[i].push(v);
        }

        let mut seen = BTreeSet::new();
        for tag in &e.langs {
            let p = primary_subtag(tag);
            if !p.is_empty() {
                seen.insert(p);
            }
        }
        for p in seen {
            *acc.lang_counts.entry(p).or_default() += 1;
        }

        match tox {
            ToxicityMode::Sidecar => match &e.tox {
                Some(scores) => acc.add_tox(scores),
                None => {
                    acc.missing_tox.get_or_insert_with(|| e.id.clone());
                }
            },
            ToxicityMode::Scorer(scorer) => {
                let scores = scorer.score(text);
                acc.add_tox(&scores);
            }
        }

        acc.url_total += e.urls.len() as u64;
        for raw_url in &e.urls {
            let Some(domain) = lookup.registrable_domain(raw_url) else {
                continue;
            };
            if let Some(rating) = lookup.rating(&domain) {
                acc.rated_urls += 1;
                let b = BiasCategory::ALL
                    .iter()
                    .position(|c| *c == rating.bias)
                    .expect("bias in table");
                acc.bias_counts[b] += 1;
                let c = CredibilityLevel::ALL
                    .iter()
                    .position(|l| *l == rating.credibility)
                    .expect("credibility in table");
                acc.cred_counts[c] += 1;
                let f = FactualityLevel::ALL
                    .iter()
                    .position(|l| *l == rating.factuality)
                    .expect("factuality in table");
                acc.fact_counts[f] += 1;
            }
            if let Some(score) = lookup.quality(&domain) {
                acc.quality_urls += 1;
                acc.quality_sum += score;
            }
            *acc.domain_counts.entry(domain).or_default() += 1;
        }
    }
    accums
}

fn named_values(
    acc: &UserAccum,
    centrality: [f64; 12],
    imputed_quality: f64,
) -> HashMap<String, f64> {
    let mut m = HashMap::with_capacity(96);
    let posts = acc.posts_with_text;

    m.insert("posts_created".into(), acc.creates[EventKind::Post.index()] as f64);
    m.insert("posts_deleted".into(), acc.deletes[EventKind::Post.index()] as f64);
    m.insert(
        "replies_authored".into(),
        acc.creates[EventKind::Reply.index()] as f64,
    );
    m.insert("replies_received".into(), acc.replies_received as f64);
    m.insert(
        "reposts_created".into(),
        acc.creates[EventKind::Repost.index()] as f64,
    );
    m.insert(
        "reposts_deleted".into(),
        acc.deletes[EventKind::Repost.index()] as f64,
    );
    m.insert("likes_created".into(), acc.creates[EventKind::Like.index()] as f64);
    m.insert("likes_deleted".into(), acc.deletes[EventKind::Like.index()] as f64);
    m.insert(
        "follows_created".into(),
        acc.creates[EventKind::Follow.index()] as f64,
    );
    m.insert(
        "follows_deleted".into(),
        acc.deletes[EventKind::Follow.index()] as f64,
    );
    m.insert("blocks_created".into(), acc.creates[EventKind::Block.index()] as f64);
    m.insert("blocks_deleted".into(), acc.deletes[EventKind::Block.index()] as f64);

    m.insert("times_liked".into(), acc.times_liked as f64);
    m.insert("times_reposted".into(), acc.times_reposted as f64);
    m.insert("times_followed".into(), acc.times_followed as f64);
    m.insert("times_blocked".into(), acc.times_blocked as f64);

    for (i, name) in TextMetrics::NAMES.iter().enumerate() {
        let (mean, std) = acc.text_stats[i].mean_std();
        m.insert(format!("{name}_mean"), mean);
        m.insert(format!("{name}_std"), std);
    }
    let lang_counts: Vec<u64> = acc.lang_counts.values().copied().collect();
    m.insert("language_entropy".into(), normalized_entropy(&lang_counts));
    for (i, dim) in ToxicityScores::DIMENSIONS.iter().enumerate() {
        let (mean, std) = acc.tox_stats[i].mean_std();
        m.insert(format!("tox_{dim}_mean"), mean);
        m.insert(format!("tox_{dim}_std"), std);
    }
    m.insert("urls_per_post".into(), per_post(acc.url_total, posts));
    let domain_counts: Vec<u64> = acc.domain_counts.values().copied().collect();
    m.insert("domain_entropy".into(), normalized_entropy(&domain_counts));

    for (i, cat) in BiasCategory::ALL.iter().enumerate() {
        m.insert(
            format!("bias_{}_per_post", cat.as_str()),
            per_post(acc.bias_counts[i], posts),
        );
    }
    for (i, level) in CredibilityLevel::ALL.iter().enumerate() {
        m.insert(
            format!("cred_{}_per_post", level.as_str()),
            per_post(acc.cred_counts[i], posts),
        );
    }
    for (i, level) in FactualityLevel::ALL.iter().enumerate() {
        m.insert(
            format!("fact_{}_per_post", level.as_str()),
            per_post(acc.fact_counts[i], posts),
        );
    }
    let quality_mean = if acc.quality_urls > 0 {
        acc.quality_sum / acc.quality_urls as f64
    } else {
        imputed_quality
    };
    m.insert("domain_quality_mean".into(), quality_mean);
    m.insert("rated_urls_per_post".into(), per_post(acc.rated_urls, posts));
    m.insert(
        "quality_urls_per_post".into(),
        per_post(acc.quality_urls, posts),
    );
    m.insert("distinct_domains".into(), acc.domain_counts.len() as f64);
    m.insert("total_urls".into(), acc.url_total as f64);

    for (i, col) in CentralityTable::COLUMNS.iter().enumerate() {
        m.insert((*col).to_string(), centrality[i]);
    }

    m
}

/// A feature matrix: one row per selected user, one column per manifest
/// feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub users: Vec<String>,
    pub names: Vec<String>,
    pub values: DenseMatrix,
}

impl FeatureMatrix {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name).map(|c| self.values.column(c))
    }

    /// Row index of a user id, if present.
    pub fn user_index(&self, user: &str) -> Option<usize> {
        self.users.iter().position(|u| u == user)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_csv_to(&mut w)
    }

    fn write_csv_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let mut header = vec!["user_id".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)
            .map_err(|e| Error::Data(format!("feature csv write: {e}")))?;
        for (r, user) in self.users.iter().enumerate() {
            let mut record = vec![user.clone()];
            record.extend(self.values.row(r).iter().map(|v| format!("{v}")));
            w.write_record(&record)
                .map_err(|e| Error::Data(format!("feature csv write: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        self.write_csv_to(&mut w)?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Data(format!("feature csv write: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv_from(file)
    }

    pub fn read_csv_from<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r
            .headers()
            .map_err(|e| Error::Data(format!("feature csv header: {e}")))?
            .clone();
        if header.is_empty() || &header[0] != "user_id" {
            return Err(Error::Data(
                "feature csv must start with a user_id column".into(),
            ));
        }
        let names: Vec<String> = header.iter().skip(1).map(|s| s.to_string()).collect();
        let mut users = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| Error::Data(format!("feature csv row: {e}")))?;
            if record.len() != names.len() + 1 {
                return Err(Error::Data(format!(
                    "feature csv row {} has {} fields, expected {}",
                    rows.len() + 2,
                    record.len(),
                    names.len() + 1
                )));
            }
            users.push(record[0].to_string());
            let mut row = Vec::with_capacity(names.len());
            for field in record.iter().skip(1) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Data(format!("bad number '{field}' in feature csv")))?;
                row.push(v);
            }
            rows.push(row);
        }
        Ok(FeatureMatrix {
            users,
            names,
            values: DenseMatrix::from_rows(&rows),
        })
    }

    /// Errors when any cell is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        if self.values.is_finite() {
            Ok(())
        } else {
            Err(Error::Data("feature matrix contains non-finite values".into()))
        }
    }
}

/// Builds the feature matrix for every user passing the filter.
///
/// Rows are sorted by user id. Every manifest feature must be one the
/// extractor computes; an unknown name is a configuration error. In
/// sidecar toxicity mode, an original post of a selected user without
/// scores is a data error naming the offending event.
pub fn build_matrix(
    log: &EventLog,
    filter: &UserFilter,
    lookup: &DomainLookup,
    centralities: &CentralityTable,
    manifest: &FeatureManifest,
    tox: &ToxicityMode,
) -> Result<FeatureMatrix> {
    let selected = select_users(log, filter);
    if selected.is_empty() {
        return Err(Error::Data(
            "no users pass the selection filter; nothing to featurize".into(),
        ));
    }
    let accums = accumulate(log, lookup, tox);

    for user in &selected {
        let acc = &accums[user];
        if matches!(tox, ToxicityMode::Sidecar) {
            if let Some(event_id) = &acc.missing_tox {
                return Err(Error::MissingToxicity {
                    event_id: event_id.clone(),
                });
            }
        }
    }

    let with_quality: Vec<f64> = selected
        .iter()
        .filter_map(|u| {
            let acc = &accums[u];
            (acc.quality_urls > 0).then(|| acc.quality_sum / acc.quality_urls as f64)
        })
        .collect();
    let imputed_quality = if with_quality.is_empty() {
        lookup.quality_table_mean()
    } else {
        with_quality.iter().sum::<f64>() / with_quality.len() as f64
    };

    let names: Vec<String> = manifest.specs().iter().map(|f| f.name.clone()).collect();
    let mut values = DenseMatrix::zeros(selected.len(), names.len());
    for (r, user) in selected.iter().enumerate() {
        let acc = &accums[user];
        let computed = named_values(acc, centralities.get(user), imputed_quality);
        for (c, name) in names.iter().enumerate() {
            let v = computed.get(name).copied().ok_or_else(|| {
                Error::Config(format!(
                    "manifest names unknown feature '{name}'; the extractor cannot compute it"
                ))
            })?;
            values.set(r, c, v);
        }
    }

    let matrix = FeatureMatrix {
        users: selected,
        names,
        values,
    };
    matrix.check_finite()?;
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph;
    use crate::ingest::parse_replay;
    use std::io::Cursor;

    fn log_from(lines: &[String]) -> EventLog {
        parse_replay(Cursor::new(lines.join("\n")), None).unwrap().log
    }

    fn post(id: usize, actor: &str, text: &str, langs: &[&str], urls: &[&str]) -> String {
        let langs_json = serde_json::to_string(langs).unwrap();
        let urls_json = serde_json::to_string(urls).unwrap();
        let text_json = serde_json::to_string(text).unwrap();
        format!(
            r#"{{"id":"p{id}","kind":"post","action":"create","actor":"{actor}","ts":"2025-01-01T00:00:{:02}Z","text":{text_json},"langs":{langs_json},"urls":{urls_json}}}"#,
            id % 60
        )
    }

    fn post_with_tox(id: usize, actor: &str, toxicity: f64) -> String {
        format!(
            r#"{{"id":"p{id}","kind":"post","action":"create","actor":"{actor}","ts":"2025-01-01T00:00:{:02}Z","text":"hello","langs":["en"],"tox":{{"identity_attack":{toxicity},"insult":{toxicity},"obscene":{toxicity},"toxicity":{toxicity},"severe_toxicity":{toxicity},"threat":{toxicity},"sexually_explicit":{toxicity}}}}}"#,
            id % 60
        )
    }

    fn relational(id: usize, kind: &str, action: &str, actor: &str, subject: &str) -> String {
        format!(
            r#"{{"id":"r{id}","kind":"{kind}","action":"{action}","actor":"{actor}","subject":"{subject}","ts":"2025-01-01T01:00:{:02}Z"}}"#,
            id % 60
        )
    }

    fn en_posts(actor: &str, n: usize, start_id: usize) -> Vec<String> {
        (0..n)
            .map(|i| post(start_id + i, actor, "hello world", &["en"], &[]))
            .collect()
    }

    fn loose_filter() -> UserFilter {
        UserFilter {
            min_posts: 1,
            majority_lang: "en".into(),
        }
    }

    fn build_simple(lines: &[String], filter: &UserFilter) -> FeatureMatrix {
        let log = log_from(lines);
        let lookup = DomainLookup::empty();
        let centr = graph::centralities(&log);
        build_matrix(
            &log,
            filter,
            &lookup,
            &centr,
            &FeatureManifest::default(),
            &ToxicityMode::lexicon(),
        )
        .unwrap()
    }

    fn cell(m: &FeatureMatrix, user: &str, name: &str) -> f64 {
        let r = m.user_index(user).unwrap();
        let c = m.column_index(name).unwrap();
        m.values.get(r, c)
    }

    #[test]
    fn builtin_manifest_has_81_features_in_five_groups() {
        let m = FeatureManifest::default();
        assert_eq!(m.len(), 81);
        assert_eq!(m.version(), BUILTIN_MANIFEST_VERSION);
        let sizes: Vec<usize> = FeatureGroup::ALL
            .iter()
            .map(|g| m.group_positions(*g).len())
            .collect();
        assert_eq!(sizes, vec![12, 4, 29, 24, 12]);
    }

    #[test]
    fn manifest_text_round_trips() {
        let m = FeatureManifest::default();
        let parsed = FeatureManifest::parse(&m.to_text()).unwrap();
        assert_eq!(parsed, m);
    }

    #[test]
    fn manifest_rejects_duplicates_and_unknown_groups() {
        let dup = "a\taction\tx\na\taction\ty\n";
        assert!(matches!(
            FeatureManifest::parse(dup),
            Err(Error::Config(_))
        ));
        let bad_group = "a\tweird\tx\n";
        assert!(matches!(
            FeatureManifest::parse(bad_group),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn computed_names_match_builtin_manifest_exactly() {
        let acc = UserAccum::default();
        let computed = named_values(&acc, [0.0; 12], 0.5);
        let manifest_names: BTreeSet<String> = builtin_specs().into_iter().map(|s| s.name).collect();
        let computed_names: BTreeSet<String> = computed.into_keys().collect();
        assert_eq!(manifest_names, computed_names);
    }

    #[test]
    fn unknown_manifest_feature_is_config_error() {
        let mut specs = builtin_specs();
        specs.push(spec("made_up_feature", FeatureGroup::Posts, "nope"));
        let manifest = FeatureManifest::new("test", specs).unwrap();
        let lines = en_posts("alice", 1, 0);
        let log = log_from(&lines);
        let err = build_matrix(
            &log,
            &loose_filter(),
            &DomainLookup::empty(),
            &graph::centralities(&log),
            &manifest,
            &ToxicityMode::lexicon(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn roster_needs_min_posts_and_modal_language() {
        let mut lines = Vec::new();
        lines.extend(en_posts("alice", 10, 0));
        lines.extend(en_posts("bob", 9, 100));
        lines.extend((0..10).map(|i| post(200 + i, "carol", "bonjour", &["fr"], &[])));
        for i in 0..5 {
            lines.push(post(300 + i, "dave", "hi", &["en"], &[]));
            lines.push(post(310 + i, "dave", "salut", &["fr"], &[]));
        }
        lines.extend((0..10).map(|i| post(400 + i, "erin", "no langs", &[], &[])));
        let log = log_from(&lines);
        let selected = select_users(&log, &UserFilter::default());
        assert_eq!(selected, vec!["alice".to_string(), "dave".to_string()]);
    }

    #[test]
    fn replies_count_toward_roster_posts() {
        let mut lines = en_posts("alice", 5, 0);
        for i in 0..5 {
            lines.push(format!(
                r#"{{"id":"rep{i}","kind":"reply","action":"create","actor":"alice","subject":"bob","ts":"2025-01-01T02:00:{i:02}Z","text":"re","langs":["en"]}}"#
            ));
        }
        let log = log_from(&lines);
        let selected = select_users(&log, &UserFilter::default());
        assert_eq!(selected, vec!["alice".to_string()]);
    }

    #[test]
    fn action_and_derived_counts() {
        let mut lines = Vec::new();
        lines.extend(en_posts("alice", 2, 0));
        lines.extend(en_posts("bob", 1, 10));
        lines.push(relational(1, "like", "create", "alice", "bob"));
        lines.push(relational(2, "like", "delete", "alice", "bob"));
        lines.push(relational(3, "block", "create", "bob", "alice"));
        lines.push(relational(4, "block", "create", "carol", "alice"));
        lines.push(relational(5, "follow", "create", "bob", "alice"));
        lines.push(relational(6, "repost", "create", "bob", "alice"));
        lines.push(format!(
            r#"{{"id":"r7","kind":"reply","action":"create","actor":"bob","subject":"alice","ts":"2025-01-01T01:00:07Z","text":"re","langs":["en"]}}"#
        ));
        let m = build_simple(&lines, &loose_filter());

        assert_eq!(cell(&m, "alice", "posts_created"), 2.0);
        assert_eq!(cell(&m, "alice", "likes_created"), 1.0);
        assert_eq!(cell(&m, "alice", "likes_deleted"), 1.0);
        assert_eq!(cell(&m, "alice", "times_blocked"), 2.0);
        assert_eq!(cell(&m, "alice", "times_followed"), 1.0);
        assert_eq!(cell(&m, "alice", "times_reposted"), 1.0);
        assert_eq!(cell(&m, "alice", "replies_received"), 1.0);
        assert_eq!(cell(&m, "bob", "blocks_created"), 1.0);
        assert_eq!(cell(&m, "bob", "replies_authored"), 1.0);
        // carol has no posts: no row despite her block event.
        assert!(m.user_index("carol").is_none());
    }

    #[test]
    fn reply_creates_count_as_posts_for_text_features() {
        let mut lines = vec![post(0, "alice", "aa", &["en"], &[])];
        lines.push(format!(
            r#"{{"id":"rep1","kind":"reply","action":"create","actor":"alice","subject":"bob","ts":"2025-01-01T02:00:00Z","text":"aaaa","langs":["en"]}}"#
        ));
        let m = build_simple(&lines, &loose_filter());
        assert_eq!(cell(&m, "alice", "chars_mean"), 3.0);
        assert_eq!(cell(&m, "alice", "chars_std"), 1.0);
        assert_eq!(cell(&m, "alice", "replies_authored"), 1.0);
    }

    #[test]
    fn sidecar_toxicity_two_point_fixture() {
        let lines = vec![
            post_with_tox(0, "alice", 0.2),
            post_with_tox(1, "alice", 0.8),
        ];
        let log = log_from(&lines);
        let m = build_matrix(
            &log,
            &loose_filter(),
            &DomainLookup::empty(),
            &graph::centralities(&log),
            &FeatureManifest::default(),
            &ToxicityMode::Sidecar,
        )
        .unwrap();
        for dim in ToxicityScores::DIMENSIONS {
            assert!((cell(&m, "alice", &format!("tox_{dim}_mean")) - 0.5).abs() < 1e-12);
            assert!((cell(&m, "alice", &format!("tox_{dim}_std")) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_samples_produce_exact_aggregates() {
        let lines: Vec<String> = (0..37).map(|i| post_with_tox(i, "alice", 0.31)).collect();
        let log = log_from(&lines);
        let m = build_matrix(
            &log,
            &loose_filter(),
            &DomainLookup::empty(),
            &graph::centralities(&log),
            &FeatureManifest::default(),
            &ToxicityMode::Sidecar,
        )
        .unwrap();
        for dim in ToxicityScores::DIMENSIONS {
            assert_eq!(cell(&m, "alice", &format!("tox_{dim}_mean")), 0.31);
            assert_eq!(cell(&m, "alice", &format!("tox_{dim}_std")), 0.0);
        }
        assert_eq!(cell(&m, "alice", "chars_mean"), 5.0);
        assert_eq!(cell(&m, "alice", "chars_std"), 0.0);
        assert_eq!(cell(&m, "alice", "lowercase_mean"), 5.0);
        assert_eq!(cell(&m, "alice", "lowercase_std"), 0.0);
        assert_eq!(cell(&m, "alice", "emoji_std"), 0.0);
    }

    #[test]
    fn sidecar_mode_errors_on_missing_scores() {
        let lines = vec![post_with_tox(0, "alice", 0.2), post(1, "alice", "x", &["en"], &[])];
        let log = log_from(&lines);
        let err = build_matrix(
            &log,
            &loose_filter(),
            &DomainLookup::empty(),
            &graph::centralities(&log),
            &FeatureManifest::default(),
            &ToxicityMode::Sidecar,
        )
        .unwrap_err();
        match err {
            Error::MissingToxicity { event_id } => assert_eq!(event_id, "p1"),
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn lexicon_mode_needs_no_sidecar() {
        let lines = en_posts("alice", 3, 0);
        let m = build_simple(&lines, &loose_filter());
        let v = cell(&m, "alice", "tox_toxicity_mean");
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn language_entropy_even_split_is_one() {
        let mut lines = Vec::new();
        for i in 0..4 {
            lines.push(post(i, "alice", "hi", &["en"], &[]));
            lines.push(post(10 + i, "alice", "ciao", &["it"], &[]));
        }
        let m = build_simple(&lines, &loose_filter());
        assert!((cell(&m, "alice", "language_entropy") - 1.0).abs() < 1e-12);

        let single = en_posts("bob", 3, 100);
        let m2 = build_simple(&single, &loose_filter());
        assert_eq!(cell(&m2, "bob", "language_entropy"), 0.0);
    }

    #[test]
    fn url_and_domain_features() {
        let ratings = "news.example\tleft\thigh\thigh\n";
        let quality = "blog.example\t0.9\n";
        let mut lookup = DomainLookup::empty();
        lookup.add_ratings_text(ratings).unwrap();
        lookup.add_quality_text(quality).unwrap();

        let mut lines = Vec::new();
        lines.push(post(
            0,
            "alice",
            "links",
            &["en"],
            &[
                "https://news.example/a",
                "https://www.news.example/b",
                "https://blog.example/c",
            ],
        ));
        lines.extend(en_posts("alice", 9, 100));
        lines.extend(en_posts("bob", 10, 200));

        let log = log_from(&lines);
        let m = build_matrix(
            &log,
            &UserFilter::default(),
            &lookup,
            &graph::centralities(&log),
            &FeatureManifest::default(),
            &ToxicityMode::lexicon(),
        )
        .unwrap();

        assert!((cell(&m, "alice", "urls_per_post") - 0.3).abs() < 1e-12);
        assert_eq!(cell(&m, "alice", "total_urls"), 3.0);
        assert_eq!(cell(&m, "alice", "distinct_domains"), 2.0);
        assert!((cell(&m, "alice", "bias_left_per_post") - 0.2).abs() < 1e-12);
        assert!((cell(&m, "alice", "cred_high_per_post") - 0.2).abs() < 1e-12);
        assert!((cell(&m, "alice", "fact_high_per_post") - 0.2).abs() < 1e-12);
        assert!((cell(&m, "alice", "rated_urls_per_post") - 0.2).abs() < 1e-12);
        assert!((cell(&m, "alice", "quality_urls_per_post") - 0.1).abs() < 1e-12);
        assert!((cell(&m, "alice", "domain_quality_mean") - 0.9).abs() < 1e-12);
        // bob shares nothing: quality imputed from alice, counts zero.
        assert!((cell(&m, "bob", "domain_quality_mean") - 0.9).abs() < 1e-12);
        assert_eq!(cell(&m, "bob", "total_urls"), 0.0);
    }

    #[test]
    fn quality_imputation_falls_back_to_table_mean() {
        let mut lookup = DomainLookup::empty();
        lookup.add_quality_text("a.example\t0.4\nb.example\t0.8\n").unwrap();
        let lines = en_posts("alice", 10, 0);
        let log = log_from(&lines);
        let m = build_matrix(
            &log,
            &UserFilter::default(),
            &lookup,
            &graph::centralities(&log),
            &FeatureManifest::default(),
            &ToxicityMode::lexicon(),
        )
        .unwrap();
        assert!((cell(&m, "alice", "domain_quality_mean") - 0.6).abs() < 1e-12);
    }

    #[test]
    fn graph_columns_flow_into_matrix() {
        let mut lines = Vec::new();
        lines.extend(en_posts("alice", 1, 0));
        lines.extend(en_posts("bob", 1, 10));
        lines.push(relational(1, "follow", "create", "alice", "bob"));
        let m = build_simple(&lines, &loose_filter());
        assert_eq!(cell(&m, "alice", "follows_degree"), 1.0);
        assert_eq!(cell(&m, "bob", "follows_degree"), 1.0);
        assert!(cell(&m, "alice", "follows_pagerank") > 0.0);
        assert_eq!(cell(&m, "alice", "likes_degree"), 0.0);
    }

    #[test]
    fn rows_sorted_by_user_and_csv_round_trips() {
        let mut lines = Vec::new();
        for (i, user) in ["zoe", "abe", "meg"].iter().enumerate() {
            lines.extend(en_posts(user, 2, i * 10));
        }
        let m = build_simple(&lines, &loose_filter());
        assert_eq!(m.users, vec!["abe", "meg", "zoe"]);
        let csv_text = m.to_csv_string().unwrap();
        let back = FeatureMatrix::read_csv_from(csv_text.as_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn empty_roster_is_a_data_error() {
        let lines = vec![relational(1, "like", "create", "a", "b")];
        let log = log_from(&lines);
        let err = build_matrix(
            &log,
            &UserFilter::default(),
            &DomainLookup::empty(),
            &graph::centralities(&log),
            &FeatureManifest::default(),
            &ToxicityMode::lexicon(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn matrix_is_always_finite() {
        let mut lines = Vec::new();
        lines.extend(en_posts("alice", 10, 0));
        lines.push(relational(1, "block", "create", "alice", "alice"));
        let m = build_simple(&lines, &UserFilter::default());
        m.check_finite().unwrap();
    }
}
