//! Event ingestion: parsing, validation, and ordering of platform events.
//!
//! # Wire format
//!
//! A replay is newline-delimited JSON, one event object per line. Keys:
//!
//! | key      | required | meaning                                             |
//! |----------|----------|-----------------------------------------------------|
//! | `id`     | yes      | globally unique event id                            |
//! | `kind`   | yes      | `post`, `reply`, `repost`, `like`, `follow`, `block`|
//! | `action` | yes      | `create` or `delete`                                |
//! | `actor`  | yes      | user id performing the action                       |
//! | `ts`     | yes      | RFC 3339 timestamp                                  |
//! | `subject`| see below| user id the action is directed at                   |
//! | `ref`    | no       | id of the post the action refers to                 |
//! | `text`   | see below| post text (creates of `post`/`reply` only)          |
//! | `langs`  | no       | BCP 47 language tags declared for the post          |
//! | `urls`   | no       | URLs shared in the post, verbatim                   |
//! | `tox`    | no       | sidecar toxicity scores, seven floats in [0, 1]     |
//!
//! Unknown keys are ignored so richer upstream records pass through. A line
//! is malformed when it is not a JSON object, a required key is missing or
//! has the wrong type, `kind`/`action`/`ts` fail to parse, a create of
//! `reply`/`repost`/`like`/`follow`/`block` lacks `subject`, a create of
//! `post`/`reply` lacks `text`, or `tox` is present but incomplete or out of
//! range. Malformed lines are counted and skipped; if more than half of the
//! non-blank lines are malformed the whole replay is rejected as corrupt.
//!
//! Content fields that only make sense on post creates (`text`, `langs`,
//! `urls`, `tox`) are dropped from other events rather than rejected, and
//! a `subject` on a plain `post` create is dropped likewise.
//!
//! # Ordering and deduplication
//!
//! Parsed events are sorted by timestamp with the event id as tie-break (and
//! a full-record comparison after that), then deduplicated by id keeping the
//! first event in that order. The result is independent of input line order,
//! so shuffled replays produce identical logs.

pub mod live;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six event kinds carried by the platform firehose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Post,
    Reply,
    Repost,
    Like,
    Follow,
    Block,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::Post,
        EventKind::Reply,
        EventKind::Repost,
        EventKind::Like,
        EventKind::Follow,
        EventKind::Block,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Post => "post",
            EventKind::Reply => "reply",
            EventKind::Repost => "repost",
            EventKind::Like => "like",
            EventKind::Follow => "follow",
            EventKind::Block => "block",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Kinds that must carry a `subject` on create: the action is directed
    /// at another user.
    pub fn is_relational(self) -> bool {
        !matches!(self, EventKind::Post)
    }

    /// Kinds whose creates carry post text.
    pub fn has_text(self) -> bool {
        matches!(self, EventKind::Post | EventKind::Reply)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventAction {
    Create,
    Delete,
}

impl EventAction {
    pub fn as_str(self) -> &'static str {
        match self {
            EventAction::Create => "create",
            EventAction::Delete => "delete",
        }
    }
}

/// Sidecar toxicity scores, one per model dimension, each in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityScores {
    pub identity_attack: f64,
    pub insult: f64,
    pub obscene: f64,
    pub toxicity: f64,
    pub severe_toxicity: f64,
    pub threat: f64,
    pub sexually_explicit: f64,
}

impl ToxicityScores {
    pub const DIMENSIONS: [&'static str; 7] = [
        "identity_attack",
        "insult",
        "obscene",
        "toxicity",
        "severe_toxicity",
        "threat",
        "sexually_explicit",
    ];

    pub fn get(&self, dim: usize) -> f64 {
        match dim {
            0 => self.identity_attack,
            1 => self.insult,
            2 => self.obscene,
            3 => self.toxicity,
            4 => self.severe_toxicity,
            5 => self.threat,
            6 => self.sexually_explicit,
            _ => panic!("toxicity dimension out of range"),
        }
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.identity_attack,
            self.insult,
            self.obscene,
            self.toxicity,
            self.severe_toxicity,
            self.threat,
            self.sexually_explicit,
        ]
    }

    fn in_range(&self) -> bool {
        self.values().iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// One validated platform event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: String,
    pub kind: EventKind,
    pub action: EventAction,
    pub actor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub ts: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub langs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub urls: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tox: Option<ToxicityScores>,
}

impl Event {
    /// True for create events of `post`/`reply`: the items whose content
    /// feeds text, toxicity, and URL features.
    pub fn is_original_post(&self) -> bool {
        self.action == EventAction::Create && self.kind.has_text()
    }

    /// Canonical single-line JSON for this event.
    pub fn to_wire(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }

    /// Total order used for log normalization: timestamp, then id, then the
    /// full wire record so even pathological replays sort identically.
    fn canonical_cmp(&self, other: &Event) -> std::cmp::Ordering {
        self.ts
            .cmp(&other.ts)
            .then_with(|| self.id.cmp(&other.id))
            .then_with(|| self.to_wire().cmp(&other.to_wire()))
    }
}

/// Why a replay line was rejected. Counted per category for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LineFault {
    NotJson,
    MissingField,
    BadValue,
}

fn parse_wire_line(line: &str) -> std::result::Result<Event, LineFault> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|_| LineFault::NotJson)?;
    let obj = value.as_object().ok_or(LineFault::NotJson)?;

    let field_str = |key: &str| -> std::result::Result<String, LineFault> {
        match obj.get(key) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(LineFault::BadValue),
            None => Err(LineFault::MissingField),
        }
    };

    let id = field_str("id")?;
    let actor = field_str("actor")?;
    if id.is_empty() || actor.is_empty() {
        return Err(LineFault::BadValue);
    }

    let kind: EventKind = serde_json::from_value(
        obj.get("kind").ok_or(LineFault::MissingField)?.clone(),
    )
    .map_err(|_| LineFault::BadValue)?;
    let action: EventAction = serde_json::from_value(
        obj.get("action").ok_or(LineFault::MissingField)?.clone(),
    )
    .map_err(|_| LineFault::BadValue)?;

    let ts_raw = field_str("ts")?;
    let ts = DateTime::parse_from_rfc3339(&ts_raw)
        .map_err(|_| LineFault::BadValue)?
        .with_timezone(&Utc);

    let opt_str = |key: &str| -> std::result::Result<Option<String>, LineFault> {
        match obj.get(key) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(LineFault::BadValue),
        }
    };
    let str_list = |key: &str| -> std::result::Result<Vec<String>, LineFault> {
        match obj.get(key) {
            None | Some(serde_json::Value::Null) => Ok(Vec::new()),
            Some(serde_json::Value::Array(items)) => items
                .iter()
                .map(|item| match item {
                    serde_json::Value::String(s) => Ok(s.clone()),
                    _ => Err(LineFault::BadValue),
                })
                .collect(),
            Some(_) => Err(LineFault::BadValue),
        }
    };

    let subject = opt_str("subject")?;
    let reference = opt_str("ref")?;
    let text = opt_str("text")?;
    let langs = str_list("langs")?;
    let urls = str_list("urls")?;

    let tox = match obj.get("tox") {
        None | Some(serde_json::Value::Null) => None,
        Some(v) => {
            let scores: ToxicityScores =
                serde_json::from_value(v.clone()).map_err(|_| LineFault::MissingField)?;
            if !scores.in_range() {
                return Err(LineFault::BadValue);
            }
            Some(scores)
        }
    };

    let is_content = action == EventAction::Create && kind.has_text();

    if action == EventAction::Create && kind.is_relational() && subject.is_none() {
        return Err(LineFault::MissingField);
    }
    if is_content && text.is_none() {
        return Err(LineFault::MissingField);
    }

    Ok(Event {
        id,
        kind,
        action,
        actor,
        subject: if kind == EventKind::Post { None } else { subject },
        reference,
        ts,
        text: if is_content { text } else { None },
        langs: if is_content {
            langs
                .into_iter()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect()
        } else {
            Vec::new()
        },
        urls: if is_content { urls } else { Vec::new() },
        tox: if is_content { tox } else { None },
    })
}

/// Parses one wire line, `None` when malformed. Used by the live adapter,
/// which tolerates bad lines instead of counting them against a replay.
pub(crate) fn parse_wire_line_public(line: &str) -> Option<Event> {
    parse_wire_line(line).ok()
}

/// Counters describing one replay parse.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseStats {
    /// Non-blank input lines seen.
    pub lines: u64,
    /// Lines rejected as malformed.
    pub malformed: u64,
    /// Well-formed events dropped because their timestamp fell outside the
    /// observation window.
    pub out_of_window: u64,
    /// Well-formed events dropped as duplicate ids.
    pub duplicates: u64,
}

#[derive(Debug)]
pub struct ParseOutcome {
    pub log: EventLog,
    pub stats: ParseStats,
}

/// A validated, time-ordered, deduplicated sequence of events.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
    window: Option<(DateTime<Utc>, DateTime<Utc>)>,
}

impl EventLog {
    /// Normalizes a raw batch: sort by (ts, id, record), drop duplicate ids,
    /// keep events inside the half-open window. Returns the log plus counts
    /// of dropped duplicates and out-of-window events.
    pub fn from_events(
        mut events: Vec<Event>,
        window: Option<(DateTime<Utc>, DateTime<Utc>)>,
    ) -> (Self, u64, u64) {
        events.sort_by(|a, b| a.canonical_cmp(b));
        let before = events.len();
        let mut seen = std::collections::HashSet::with_capacity(events.len());
        events.retain(|e| seen.insert(e.id.clone()));
        let duplicates = (before - events.len()) as u64;

        let before = events.len();
        if let Some((start, end)) = window {
            events.retain(|e| e.ts >= start && e.ts < end);
        }
        let out_of_window = (before - events.len()) as u64;

        (EventLog { events, window }, duplicates, out_of_window)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn window(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        self.window
    }

    /// All user ids appearing as actor or subject, sorted.
    pub fn users(&self) -> Vec<String> {
        let mut set = std::collections::BTreeSet::new();
        for e in &self.events {
            set.insert(e.actor.clone());
            if let Some(s) = &e.subject {
                set.insert(s.clone());
            }
        }
        set.into_iter().collect()
    }

    /// Re-emits the log as canonical NDJSON.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_wire());
            out.push('\n');
        }
        out
    }
}

/// Parses an NDJSON replay from a reader. `window` is half-open
/// `[start, end)`; `None` keeps every well-formed event.
pub fn parse_replay(
    reader: impl BufRead,
    window: Option<(DateTime<Utc>, DateTime<Utc>)>,
) -> Result<ParseOutcome> {
    let mut stats = ParseStats::default();
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        match parse_wire_line(&line) {
            Ok(event) => events.push(event),
            Err(_) => stats.malformed += 1,
        }
    }
    if stats.malformed * 2 > stats.lines {
        return Err(Error::CorruptInput {
            malformed: stats.malformed,
            total: stats.lines,
        });
    }
    let (log, duplicates, out_of_window) = EventLog::from_events(events, window);
    stats.duplicates = duplicates;
    stats.out_of_window = out_of_window;
    Ok(ParseOutcome { log, stats })
}

pub fn parse_replay_file(
    path: &Path,
    window: Option<(DateTime<Utc>, DateTime<Utc>)>,
) -> Result<ParseOutcome> {
    let file = File::open(path)?;
    parse_replay(BufReader::new(file), window)
}

/// Per-day create counts, one row per calendar day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DailyActivity {
    pub date: NaiveDate,
    /// Create counts indexed like [`EventKind::ALL`].
    pub creates: [u64; 6],
}

/// Corpus-level activity profile of a log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActivitySummary {
    pub create_counts: BTreeMap<String, u64>,
    pub delete_counts: BTreeMap<String, u64>,
    pub unique_users: u64,
    pub total_events: u64,
    /// One row per calendar day covering the whole window (or the observed
    /// span when the log has no explicit window), zero-filled.
    pub daily: Vec<DailyActivity>,
    pub first_ts: Option<String>,
    pub last_ts: Option<String>,
}

/// Aggregates per-kind counts, the unique-user count, and a zero-filled
/// daily create series.
pub fn summarize(log: &EventLog) -> ActivitySummary {
    let mut creates = [0u64; 6];
    let mut deletes = [0u64; 6];
    for e in log.events() {
        match e.action {
            EventAction::Create => creates[e.kind.index()] += 1,
            EventAction::Delete => deletes[e.kind.index()] += 1,
        }
    }

    let span = match (log.window(), log.events().first(), log.events().last()) {
        (Some((start, end)), _, _) => Some((start, end)),
        (None, Some(first), Some(last)) => Some((first.ts, last.ts)),
        _ => None,
    };

    let mut daily = Vec::new();
    if let Some((start, end)) = span {
        let first_day = start.date_naive();
        // The window is half-open, so an end falling exactly on midnight
        // does not open a new day.
        let last_day = if log.window().is_some() {
            (end - chrono::Duration::nanoseconds(1)).date_naive()
        } else {
            end.date_naive()
        };
        let mut by_day: BTreeMap<NaiveDate, [u64; 6]> = BTreeMap::new();
        let mut day = first_day;
        while day <= last_day {
            by_day.insert(day, [0u64; 6]);
            day = day.succ_opt().expect("date range");
        }
        for e in log.events() {
            if e.action == EventAction::Create {
                if let Some(row) = by_day.get_mut(&e.ts.date_naive()) {
                    row[e.kind.index()] += 1;
                }
            }
        }
        daily = by_day
            .into_iter()
            .map(|(date, creates)| DailyActivity { date, creates })
            .collect();
    }

    let to_map = |counts: [u64; 6]| {
        EventKind::ALL
            .iter()
            .map(|k| (k.as_str().to_string(), counts[k.index()]))
            .collect()
    };

    ActivitySummary {
        create_counts: to_map(creates),
        delete_counts: to_map(deletes),
        unique_users: log.users().len() as u64,
        total_events: log.len() as u64,
        daily,
        first_ts: log
            .events()
            .first()
            .map(|e| e.ts.to_rfc3339_opts(SecondsFormat::Secs, true)),
        last_ts: log
            .events()
            .last()
            .map(|e| e.ts.to_rfc3339_opts(SecondsFormat::Secs, true)),
    }
}
