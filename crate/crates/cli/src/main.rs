//! notedx: reproducible pipeline for classifying Spanish psychiatric notes
//! into anxiety (F41) vs adjustment (F43) diagnoses, plus few-shot
//! diagnosis-extraction prompt tooling.
//!
//! Configuration comes from an optional `key = value` file plus flags
//! (flags win); every run's randomness flows from one explicit seed, and
//! every artifact embeds the configuration hash that produced it.

mod commands;
mod config;
mod error;

use std::path::Path;

use clap::{Parser, Subcommand};

use config::{RawConfig, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "notedx", version, about = "Clinical-note diagnosis classification pipeline")]
struct Cli {
    /// Config file: `key = value` lines under [section] headers
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<String>,

    /// Master seed; every random choice in a run derives from it
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the tuning sweep
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Directory artifacts are written to
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Length-filter, extract demographics, tokenize; writes prepared.jsonl
    Prepare {
        /// Input corpus (JSONL, or CSV by extension)
        #[arg(long)]
        corpus: Option<String>,
        /// Minimum note length in characters
        #[arg(long)]
        min_chars: Option<usize>,
    },
    /// Per-diagnosis demographic table on stdout
    Stats {
        #[arg(long)]
        corpus: Option<String>,
    },
    /// Fit one model with fixed parameters; writes model.json + report.json
    Train {
        /// Prepared dataset from `prepare`
        #[arg(long)]
        prepared: Option<String>,
        /// Model family: tree, forest, svm, gbt
        #[arg(long)]
        family: Option<String>,
        /// Rebalancing: none, random, smote
        #[arg(long)]
        oversampler: Option<String>,
        /// Neighbors per synthetic sample when oversampler=smote
        #[arg(long)]
        smote_k: Option<usize>,
        /// Held-out test share in (0, 1)
        #[arg(long)]
        test_fraction: Option<f64>,
        /// JSON file of fixed parameter values
        #[arg(long)]
        params: Option<String>,
    },
    /// Cross-validated grid sweep + refit; writes results.json, model.json,
    /// report.json, timing.txt
    Tune {
        #[arg(long)]
        prepared: Option<String>,
        /// Bundled grid name (decision_tree, random_forest, svm, xgboost,
        /// distilbert, scibert) or a grid JSON path
        #[arg(long)]
        grid: Option<String>,
        /// Cross-validation folds
        #[arg(long)]
        folds: Option<usize>,
        /// Ranking metric: accuracy or f1_weighted
        #[arg(long)]
        select_metric: Option<String>,
        #[arg(long)]
        oversampler: Option<String>,
        #[arg(long)]
        smote_k: Option<usize>,
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Score notes with a saved model; writes predictions.jsonl
    Predict {
        /// Model file from `train` or `tune`
        #[arg(long)]
        model: Option<String>,
        /// Notes to score (prepared or raw); defaults to the prepared dataset
        #[arg(long)]
        notes: Option<String>,
    },
    /// Build few-shot extraction prompts; run them against the offline stub
    /// or emit them as a dry run; writes dx.jsonl
    ExtractDx {
        #[arg(long)]
        notes: Option<String>,
        /// stub (canned responses from --fixture) or none (emit prompts only)
        #[arg(long)]
        transport: Option<String>,
        /// JSON map of note id to canned response, for the stub transport
        #[arg(long)]
        fixture: Option<String>,
        /// Id of the note used as the worked example (default: first note)
        #[arg(long)]
        example_note: Option<String>,
    },
    /// Write the synthetic demo corpus; writes corpus.jsonl
    GenCorpus {
        /// Anxiety-class note count
        #[arg(long)]
        n_f41: Option<usize>,
        /// Adjustment-class note count
        #[arg(long)]
        n_f43: Option<usize>,
        /// Probability a planted keyword matches the note's class
        #[arg(long)]
        fidelity: Option<f64>,
        #[arg(long)]
        min_chars: Option<usize>,
        /// Keyword sentences planted per note
        #[arg(long)]
        keyword_slots: Option<usize>,
    },
}

/// Copies set flags over the file values; flags always win.
fn overlay(raw: &mut RawConfig, cli: &Cli) {
    if let Some(seed) = cli.seed {
        raw.set("seed", seed.to_string());
    }
    if let Some(jobs) = cli.jobs {
        raw.set("jobs", jobs.to_string());
    }
    if let Some(out) = &cli.out {
        raw.set("out", out.clone());
    }
    let mut set_str = |key: &'static str, value: &Option<String>| {
        if let Some(value) = value {
            raw.set(key, value.clone());
        }
    };
    match &cli.command {
        Cmd::Prepare { corpus, min_chars } => {
            set_str("corpus", corpus);
            if let Some(v) = min_chars {
                raw.set("min_chars", v.to_string());
            }
        }
        Cmd::Stats { corpus } => set_str("corpus", corpus),
        Cmd::Train { prepared, family, oversampler, smote_k, test_fraction, params } => {
            set_str("prepared", prepared);
            set_str("family", family);
            set_str("oversampler", oversampler);
            set_str("params", params);
            if let Some(v) = smote_k {
                raw.set("smote_k", v.to_string());
            }
            if let Some(v) = test_fraction {
                raw.set("test_fraction", v.to_string());
            }
        }
        Cmd::Tune { prepared, grid, folds, select_metric, oversampler, smote_k, test_fraction } => {
            set_str("prepared", prepared);
            set_str("grid", grid);
            set_str("select", select_metric);
            set_str("oversampler", oversampler);
            if let Some(v) = folds {
                raw.set("folds", v.to_string());
            }
            if let Some(v) = smote_k {
                raw.set("smote_k", v.to_string());
            }
            if let Some(v) = test_fraction {
                raw.set("test_fraction", v.to_string());
            }
        }
        Cmd::Predict { model, notes } => {
            set_str("model", model);
            set_str("notes", notes);
        }
        Cmd::ExtractDx { notes, transport, fixture, example_note } => {
            set_str("notes", notes);
            set_str("transport", transport);
            set_str("fixture", fixture);
            set_str("example_note", example_note);
        }
        Cmd::GenCorpus { n_f41, n_f43, fidelity, min_chars, keyword_slots } => {
            if let Some(v) = n_f41 {
                raw.set("n_f41", v.to_string());
            }
            if let Some(v) = n_f43 {
                raw.set("n_f43", v.to_string());
            }
            if let Some(v) = fidelity {
                raw.set("fidelity", v.to_string());
            }
            if let Some(v) = min_chars {
                raw.set("min_chars", v.to_string());
            }
            if let Some(v) = keyword_slots {
                raw.set("keyword_slots", v.to_string());
            }
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::load(Path::new(path))?,
        None => RawConfig::default(),
    };
    overlay(&mut raw, cli);
    let cfg = RunConfig::resolve(&raw)?;
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::new("io", format!("creating {}: {e}", cfg.out.display())))?;
    match cli.command {
        Cmd::Prepare { .. } => commands::prepare::run(&cfg),
        Cmd::Stats { .. } => commands::stats::run(&cfg),
        Cmd::Train { .. } => commands::train::run(&cfg),
        Cmd::Tune { .. } => commands::tune::run(&cfg),
        Cmd::Predict { .. } => commands::predict::run(&cfg),
        Cmd::ExtractDx { .. } => commands::extract::run(&cfg),
        Cmd::GenCorpus { .. } => commands::gen::run(&cfg),
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
