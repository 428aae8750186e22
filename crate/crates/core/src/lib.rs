//! Behavioral analysis pipeline for blocking on social platforms.
//!
//! The crate turns a raw stream of platform events (posts, replies, reposts,
//! likes, follows, blocks) into a per-user behavioral profile and asks how
//! well that profile predicts who ends up blocked by other users.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`ingest`] parses newline-delimited JSON event replays (or a live
//!    stream) into a validated, time-ordered [`ingest::EventLog`].
//! 2. [`features`] reduces the log to a per-user [`features::FeatureMatrix`]
//!    covering activity counts, post-content statistics, toxicity scores,
//!    shared-domain reputation, and graph centralities.
//! 3. [`graph`] builds the four directed interaction graphs (follows, likes,
//!    replies, reposts) and computes coreness, degree, and PageRank.
//! 4. [`labeling`] derives raw and post-normalized blocked-count targets,
//!    thresholds them at empirical quantiles, and balances classes.
//! 5. [`learner`] trains gradient-boosted classifiers and bagged regression
//!    forests, and evaluates them with repeated stratified cross-validation.
//! 6. [`explain`] attributes predictions to features with TreeSHAP and runs
//!    group and best/worst-n ablations.
//! 7. [`synth`] generates seeded synthetic corpora with planted signal so
//!    every stage can be validated end to end without platform data.
//!
//! The `blockprop` binary wires the stages together behind a single
//! configuration file; see [`config::RunConfig`] and [`pipeline`].

pub mod config;
pub mod error;
pub mod explain;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod labeling;
pub mod learner;
pub mod matrix;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
