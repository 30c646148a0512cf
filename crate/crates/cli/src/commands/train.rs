//! `train`: split the prepared dataset, fit the vocabulary and one model on
//! the training partition (oversampled per config), evaluate on the held-out
//! test partition, and persist `model.json` + `report.json`.

use notedx_core::features::build_vocabulary;
use notedx_core::models::ModelFile;
use notedx_core::resample::stratified_split;
use notedx_core::tune::{config_to_params, evaluate};
use serde_json::{json, Map, Value};

use crate::commands::{
    file_sha256, load_prepared, meta_object, preprocessing_provenance, subset, vectorize_all,
    with_meta, write_json,
};
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.require_seed()?;
    let family = cfg.require_family()?;
    let params_map: Map<String, Value> = match &cfg.params {
        None => Map::new(),
        Some(file) => serde_json::from_str(&file.content).map_err(|e| {
            CliError::config(format!("params file {}: {e}", file.path.display()))
        })?,
    };
    let params = config_to_params(family, &params_map, seed)?;

    let data = load_prepared(cfg)?;
    let split = stratified_split(&data.labels, cfg.test_fraction, seed)?;
    let train_docs = subset(&data.docs, &split.train);
    let vocabulary = build_vocabulary(&train_docs, cfg.min_df, cfg.max_df_ratio)?;
    let vectors = vectorize_all(&vocabulary, &data.docs);

    let train_x = subset(&vectors, &split.train);
    let train_y = subset(&data.labels, &split.train);
    let test_x = subset(&vectors, &split.test);
    let test_y = subset(&data.labels, &split.test);

    let resampled = cfg.oversampler.apply(&train_x, &train_y, seed)?;
    let model = params.train(&resampled.vectors, &resampled.labels)?;
    let report = evaluate(&model, &test_x, &test_y)?;

    let meta = meta_object(cfg, &[("prepared", file_sha256(&cfg.prepared)?)]);
    let provenance = with_meta(
        meta.clone(),
        json!({
            "preprocessing": preprocessing_provenance(cfg),
            "run": {
                "seed": seed,
                "test_fraction": cfg.test_fraction,
                "oversampler": cfg.oversampler.to_string(),
                "train_rows": train_y.len(),
                "resampled_rows": resampled.labels.len(),
                "test_rows": test_y.len(),
            },
        }),
    );
    ModelFile::new(&model, vocabulary, Some(provenance)).save(&cfg.model_path)?;

    let report_path = cfg.out.join("report.json");
    let report_value = serde_json::to_value(&report).expect("report serializes");
    write_json(&report_path, &with_meta(meta, report_value))?;

    println!(
        "trained {family}: train {} rows ({} after {}), test {} rows, \
         accuracy {:.3}, weighted_f1 {:.3} -> {}, {}",
        train_y.len(),
        resampled.labels.len(),
        cfg.oversampler,
        test_y.len(),
        report.accuracy,
        report.weighted_f1,
        cfg.model_path.display(),
        report_path.display()
    );
    Ok(())
}
