use std::path::PathBuf;

use clap::{Parser, Subcommand};

use blockprop::config::RunConfig;
use blockprop::{pipeline, Error};

#[derive(Parser)]
#[command(
    name = "blockprop",
    version,
    about = "Behavioral pipeline predicting who gets blocked on a social platform",
    long_about = "Turns a replay of platform events into per-user behavioral \
                  features, labels users by how often they get blocked, trains \
                  boosted classifiers and forest regressors, and exports \
                  attribution and ablation tables. Commands hand off through \
                  files in the output directory; `run-all` chains the whole \
                  study."
)]
struct Cli {
    /// Key=value config file; every key has a default, flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Replay NDJSON path override.
    #[arg(long, global = true, value_name = "PATH")]
    replay: Option<PathBuf>,

    /// Output directory override.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Comma-separated quantile grid override, e.g. 0.5,0.9,0.99.
    #[arg(long, global = true, value_name = "LIST")]
    quantiles: Option<String>,

    /// Master seed override.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Target definition: raw, norm, or both.
    #[arg(long, global = true, value_name = "DEF")]
    definition: Option<String>,

    /// Toxicity scoring: sidecar or lexicon.
    #[arg(long, global = true, value_name = "MODE")]
    tox_mode: Option<String>,

    /// Worker threads; 0 picks the machine default.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic planted-signal corpus.
    Synth,
    /// Parse the replay into the canonical event log.
    Ingest,
    /// Build the per-user feature matrix.
    Features,
    /// Compute targets and threshold them over the quantile grid.
    Label,
    /// Cross-validate and fit one classifier per labeled cell.
    Train,
    /// Export attribution, importance, and rank-track tables.
    Explain,
    /// Retrain on restricted feature sets (groups, best/worst-n).
    Ablate,
    /// Regress the continuous targets with a random forest.
    Regress,
    /// Assemble every table family into an indexed report directory.
    Report,
    /// Run every stage in order.
    RunAll,
}

fn resolve_config(cli: &Cli) -> blockprop::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(replay) = &cli.replay {
        cfg.set("replay", &replay.display().to_string())?;
    }
    if let Some(out_dir) = &cli.out_dir {
        cfg.set("out_dir", &out_dir.display().to_string())?;
    }
    if let Some(quantiles) = &cli.quantiles {
        cfg.set("quantiles", quantiles)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(definition) = &cli.definition {
        cfg.set("definition", definition)?;
    }
    if let Some(tox_mode) = &cli.tox_mode {
        cfg.set("tox_mode", tox_mode)?;
    }
    if let Some(jobs) = cli.jobs {
        cfg.set("jobs", &jobs.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> blockprop::Result<()> {
    let cfg = resolve_config(cli)?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth => pipeline::cmd_synth(&cfg),
        Command::Ingest => pipeline::cmd_ingest(&cfg),
        Command::Features => pipeline::cmd_features(&cfg),
        Command::Label => pipeline::cmd_label(&cfg),
        Command::Train => pipeline::cmd_train(&cfg),
        Command::Explain => pipeline::cmd_explain(&cfg),
        Command::Ablate => pipeline::cmd_ablate(&cfg),
        Command::Regress => pipeline::cmd_regress(&cfg),
        Command::Report => pipeline::cmd_report(&cfg),
        Command::RunAll => pipeline::cmd_run_all(&cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("blockprop: {err}");
        std::process::exit(err.exit_code());
    }
}
