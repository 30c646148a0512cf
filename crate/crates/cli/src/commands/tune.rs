//! `tune`: cross-validated grid sweep on the training partition, refit of
//! the winning configuration on the full training partition, final test
//! evaluation, and the four artifacts: `results.json`, `model.json`,
//! `report.json`, `timing.txt`.

use notedx_core::features::build_vocabulary;
use notedx_core::models::{ModelFamily, ModelFile};
use notedx_core::resample::stratified_split;
use notedx_core::tune::{
    config_to_params, evaluate, grid_search, SearchGrid, SweepResult, TimingTable,
};
use serde_json::json;

use crate::commands::{
    file_sha256, load_prepared, meta_object, preprocessing_provenance, subset, vectorize_all,
    with_meta, write_json, write_text,
};
use crate::config::{GridSource, RunConfig, ARTIFACT_VERSION};
use crate::error::CliError;

fn default_grid(family: ModelFamily) -> GridSource {
    GridSource::Bundled(
        match family {
            ModelFamily::Tree => "decision_tree",
            ModelFamily::Forest => "random_forest",
            ModelFamily::Svm => "svm",
            ModelFamily::Gbt => "xgboost",
            ModelFamily::Distilbert => "distilbert",
            ModelFamily::Scibert => "scibert",
        }
        .to_string(),
    )
}

/// Wall-clock measurements belong to `timing.txt` alone; zeroing them here
/// keeps `results.json` byte-identical across reruns of one configuration.
fn without_timing(sweep: &SweepResult) -> SweepResult {
    let mut sanitized = sweep.clone();
    sanitized.total_seconds = 0.0;
    for result in &mut sanitized.results {
        result.seconds = 0.0;
    }
    sanitized
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.require_seed()?;
    let grid_source = match (&cfg.grid, cfg.family) {
        (Some(source), _) => source.clone(),
        (None, Some(family)) => default_grid(family),
        (None, None) => {
            return Err(CliError::config(
                "a grid is required: --grid <bundled-name-or-path>, or --family for its default grid",
            ))
        }
    };
    let grid = SearchGrid::from_json(grid_source.json())?;

    let data = load_prepared(cfg)?;
    let split = stratified_split(&data.labels, cfg.test_fraction, seed)?;
    let train_docs = subset(&data.docs, &split.train);
    let vocabulary = build_vocabulary(&train_docs, cfg.min_df, cfg.max_df_ratio)?;
    let vectors = vectorize_all(&vocabulary, &data.docs);

    let train_x = subset(&vectors, &split.train);
    let train_y = subset(&data.labels, &split.train);
    let test_x = subset(&vectors, &split.test);
    let test_y = subset(&data.labels, &split.test);

    let sweep = match cfg.jobs {
        None => grid_search(&grid, &train_x, &train_y, cfg.folds, &cfg.oversampler, seed, cfg.select)?,
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::new("tune", format!("worker pool: {e}")))?
            .install(|| {
                grid_search(&grid, &train_x, &train_y, cfg.folds, &cfg.oversampler, seed, cfg.select)
            })?,
    };
    let best = sweep.best().ok_or_else(|| {
        let first_error = sweep
            .results
            .iter()
            .find_map(|r| r.error.clone())
            .unwrap_or_else(|| "empty grid".to_string());
        CliError::new("tune", format!("every combination failed; first error: {first_error}"))
    })?;

    // refit the winner on the whole training partition, then score the
    // untouched test partition
    let params = config_to_params(grid.family, &best.params, seed)?;
    let resampled = cfg.oversampler.apply(&train_x, &train_y, seed)?;
    let model = params.train(&resampled.vectors, &resampled.labels)?;
    let report = evaluate(&model, &test_x, &test_y)?;

    let meta = meta_object(
        cfg,
        &[("prepared", file_sha256(&cfg.prepared)?), ("grid", grid_source.label())],
    );
    let provenance = with_meta(
        meta.clone(),
        json!({
            "preprocessing": preprocessing_provenance(cfg),
            "run": {
                "seed": seed,
                "test_fraction": cfg.test_fraction,
                "oversampler": cfg.oversampler.to_string(),
                "folds": cfg.folds,
                "select": cfg.select.as_str(),
                "best_ordinal": best.ordinal,
                "best_params": best.params.clone(),
            },
        }),
    );
    ModelFile::new(&model, vocabulary, Some(provenance)).save(&cfg.model_path)?;

    let report_path = cfg.out.join("report.json");
    let report_value = serde_json::to_value(&report).expect("report serializes");
    write_json(&report_path, &with_meta(meta.clone(), report_value))?;

    let results_path = cfg.out.join("results.json");
    let results = with_meta(
        meta,
        json!({
            "sweep": without_timing(&sweep),
            "test": report,
        }),
    );
    write_json(&results_path, &results)?;

    let timing_path = cfg.out.join("timing.txt");
    let mut table = TimingTable::default();
    table.push(sweep.timing_row());
    let header = format!("# artifact_version={ARTIFACT_VERSION} config_sha256={}\n", cfg.sha256());
    write_text(&timing_path, &(header + &table.render_text()))?;

    println!(
        "tuned {}: {} combinations, best #{} cv {} {:.4}; test accuracy {:.3}, \
         weighted_f1 {:.3} -> {}, {}, {}, {}",
        grid.family,
        sweep.results.len(),
        best.ordinal,
        sweep.select_metric,
        best.metric(sweep.select_metric),
        report.accuracy,
        report.weighted_f1,
        results_path.display(),
        cfg.model_path.display(),
        report_path.display(),
        timing_path.display()
    );
    Ok(())
}
