//! Shared-domain reputation: registrable domains and media-rating lookups.
//!
//! URLs reduce to a registrable domain by lowercasing the hostname and
//! stripping one leading `www.` label; an optional public-suffix file
//! refines that to eTLD+1. Two lookup tables rate domains: a media-bias
//! table with bias, credibility, and factuality categories, and a quality
//! table with a score in [0, 1].
//!
//! Table formats are tab-separated UTF-8, `#` comments and blank lines
//! ignored:
//!
//! ```text
//! domain<TAB>bias<TAB>credibility<TAB>factuality    # ratings table
//! domain<TAB>score                                  # quality table
//! ```
//!
//! Category labels are matched case-insensitively with spaces and hyphens
//! treated as underscores (`Center-left` == `center_left`).

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Political-bias categories used by the media ratings table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasCategory {
    ExtremeLeft,
    Left,
    CenterLeft,
    CenterRight,
    Right,
    ExtremeRight,
    Satire,
    Conspiracy,
    ProScience,
}

impl BiasCategory {
    pub const ALL: [BiasCategory; 9] = [
        BiasCategory::ExtremeLeft,
        BiasCategory::Left,
        BiasCategory::CenterLeft,
        BiasCategory::CenterRight,
        BiasCategory::Right,
        BiasCategory::ExtremeRight,
        BiasCategory::Satire,
        BiasCategory::Conspiracy,
        BiasCategory::ProScience,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BiasCategory::ExtremeLeft => "extreme_left",
            BiasCategory::Left => "left",
            BiasCategory::CenterLeft => "center_left",
            BiasCategory::CenterRight => "center_right",
            BiasCategory::Right => "right",
            BiasCategory::ExtremeRight => "extreme_right",
            BiasCategory::Satire => "satire",
            BiasCategory::Conspiracy => "conspiracy",
            BiasCategory::ProScience => "pro_science",
        }
    }
}

/// Credibility levels used by the media ratings table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CredibilityLevel {
    Low,
    Medium,
    High,
}

impl CredibilityLevel {
    pub const ALL: [CredibilityLevel; 3] = [
        CredibilityLevel::Low,
        CredibilityLevel::Medium,
        CredibilityLevel::High,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CredibilityLevel::Low => "low",
            CredibilityLevel::Medium => "medium",
            CredibilityLevel::High => "high",
        }
    }
}

/// Factuality levels used by the media ratings table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactualityLevel {
    VeryLow,
    Low,
    Medium,
    Mostly,
    High,
    VeryHigh,
    Mixed,
}

impl FactualityLevel {
    pub const ALL: [FactualityLevel; 7] = [
        FactualityLevel::VeryLow,
        FactualityLevel::Low,
        FactualityLevel::Medium,
        FactualityLevel::Mostly,
        FactualityLevel::High,
        FactualityLevel::VeryHigh,
        FactualityLevel::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FactualityLevel::VeryLow => "very_low",
            FactualityLevel::Low => "low",
            FactualityLevel::Medium => "medium",
            FactualityLevel::Mostly => "mostly",
            FactualityLevel::High => "high",
            FactualityLevel::VeryHigh => "very_high",
            FactualityLevel::Mixed => "mixed",
        }
    }
}

fn normalize_label(raw: &str) -> String {
    raw.trim()
        .to_lowercase()
        .replace([' ', '-'], "_")
}

fn parse_bias(raw: &str) -> Option<BiasCategory> {
    let norm = normalize_label(raw);
    BiasCategory::ALL.into_iter().find(|c| c.as_str() == norm)
}

fn parse_credibility(raw: &str) -> Option<CredibilityLevel> {
    let norm = normalize_label(raw);
    CredibilityLevel::ALL.into_iter().find(|c| c.as_str() == norm)
}

fn parse_factuality(raw: &str) -> Option<FactualityLevel> {
    let norm = normalize_label(raw);
    FactualityLevel::ALL.into_iter().find(|c| c.as_str() == norm)
}

/// One media rating: bias, credibility, factuality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainRating {
    pub bias: BiasCategory,
    pub credibility: CredibilityLevel,
    pub factuality: FactualityLevel,
}

/// The rating and quality tables keyed by registrable domain, plus an
/// optional public-suffix set for eTLD+1 reduction.
#[derive(Debug, Default)]
pub struct DomainLookup {
    ratings: HashMap<String, DomainRating>,
    quality: HashMap<String, f64>,
    suffixes: Option<Vec<String>>,
}

impl DomainLookup {
    pub fn empty() -> Self {
        DomainLookup::default()
    }

    pub fn new(
        ratings: HashMap<String, DomainRating>,
        quality: HashMap<String, f64>,
    ) -> Self {
        DomainLookup {
            ratings,
            quality,
            suffixes: None,
        }
    }

    /// Loads the tables from files; either path may be absent.
    pub fn load(
        ratings_path: Option<&Path>,
        quality_path: Option<&Path>,
        suffix_path: Option<&Path>,
    ) -> Result<Self> {
        let mut lookup = DomainLookup::default();
        if let Some(path) = ratings_path {
            lookup.ratings = parse_ratings_table(&read(path)?)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        if let Some(path) = quality_path {
            lookup.quality = parse_quality_table(&read(path)?)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        if let Some(path) = suffix_path {
            lookup.set_suffixes(
                read(path)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(|l| l.to_lowercase())
                    .collect(),
            );
        }
        Ok(lookup)
    }

    /// Merges rating rows parsed from table text into the lookup.
    pub fn add_ratings_text(&mut self, text: &str) -> Result<()> {
        let parsed = parse_ratings_table(text).map_err(Error::Config)?;
        self.ratings.extend(parsed);
        Ok(())
    }

    /// Merges quality rows parsed from table text into the lookup.
    pub fn add_quality_text(&mut self, text: &str) -> Result<()> {
        let parsed = parse_quality_table(text).map_err(Error::Config)?;
        self.quality.extend(parsed);
        Ok(())
    }

    /// Enables eTLD+1 reduction with the given public suffixes.
    pub fn set_suffixes(&mut self, mut suffixes: Vec<String>) {
        // Longest-first so "co.uk" wins over "uk".
        suffixes.sort_by(|a, b| {
            b.matches('.')
                .count()
                .cmp(&a.matches('.').count())
                .then_with(|| a.cmp(b))
        });
        self.suffixes = Some(suffixes);
    }

    pub fn rating(&self, domain: &str) -> Option<&DomainRating> {
        self.ratings.get(domain)
    }

    pub fn quality(&self, domain: &str) -> Option<f64> {
        self.quality.get(domain).copied()
    }

    pub fn rating_count(&self) -> usize {
        self.ratings.len()
    }

    pub fn quality_count(&self) -> usize {
        self.quality.len()
    }

    /// Mean of the quality table's scores; the fallback imputation constant
    /// when no user in the corpus matches any quality-rated domain. An
    /// empty table falls back to the scale midpoint.
    pub fn quality_table_mean(&self) -> f64 {
        if self.quality.is_empty() {
            0.5
        } else {
            self.quality.values().sum::<f64>() / self.quality.len() as f64
        }
    }

    /// Reduces a URL to its registrable domain: lowercased host, one
    /// leading `www.` stripped, then eTLD+1 when suffixes are loaded.
    /// `None` for URLs without a parseable host.
    pub fn registrable_domain(&self, url: &str) -> Option<String> {
        let parsed = url::Url::parse(url.trim()).ok()?;
        let host = parsed.host_str()?.to_lowercase();
        let host = host.strip_prefix("www.").unwrap_or(&host);
        if host.is_empty() {
            return None;
        }
        if let Some(suffixes) = &self.suffixes {
            for suffix in suffixes {
                if let Some(prefix) = host.strip_suffix(suffix.as_str()) {
                    if let Some(prefix) = prefix.strip_suffix('.') {
                        if let Some(label) = prefix.rsplit('.').next() {
                            if !label.is_empty() {
                                return Some(format!("{label}.{suffix}"));
                            }
                        }
                    } else if prefix.is_empty() {
                        // The host is exactly a public suffix.
                        return Some(host.to_string());
                    }
                }
            }
        }
        Some(host.to_string())
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read lookup table {}: {e}", path.display()))
    })
}

/// Parses the ratings table text; duplicate domains keep the last entry.
pub fn parse_ratings_table(
    text: &str,
) -> std::result::Result<HashMap<String, DomainRating>, String> {
    let mut out = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(format!("line {}: expected 4 tab-separated columns", lineno + 1));
        }
        let bias = parse_bias(cols[1])
            .ok_or_else(|| format!("line {}: unknown bias `{}`", lineno + 1, cols[1]))?;
        let credibility = parse_credibility(cols[2])
            .ok_or_else(|| format!("line {}: unknown credibility `{}`", lineno + 1, cols[2]))?;
        let factuality = parse_factuality(cols[3])
            .ok_or_else(|| format!("line {}: unknown factuality `{}`", lineno + 1, cols[3]))?;
        out.insert(
            cols[0].trim().to_lowercase(),
            DomainRating {
                bias,
                credibility,
                factuality,
            },
        );
    }
    Ok(out)
}

/// Parses the quality table text; scores must sit in [0, 1].
pub fn parse_quality_table(
    text: &str,
) -> std::result::Result<HashMap<String, f64>, String> {
    let mut out = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(format!("line {}: expected 2 tab-separated columns", lineno + 1));
        }
        let score: f64 = cols[1]
            .trim()
            .parse()
            .map_err(|_| format!("line {}: bad score `{}`", lineno + 1, cols[1]))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(format!("line {}: score {} outside [0, 1]", lineno + 1, score));
        }
        out.insert(cols[0].trim().to_lowercase(), score);
    }
    Ok(out)
}
