//! `predict`: score a notes file with a saved model, one
//! `{"id", "label", "score"}` line per note.

use std::fmt::Write as _;

use notedx_core::models::ModelFile;
use notedx_core::preprocess::{preprocess_text, Document};
use serde_json::json;

use crate::commands::{
    file_sha256, lemma_lexicon, load_input_records, meta_object, stopword_list,
    verify_preprocessing, write_text,
};
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let file = ModelFile::load(&cfg.model_path)
        .map_err(|e| CliError::model(format!("loading {}: {e}", cfg.model_path.display())))?;
    let classifier = file.classifier()?;
    verify_preprocessing(cfg, file.provenance.as_ref())?;

    let notes_path = cfg.notes.clone().unwrap_or_else(|| cfg.prepared.clone());
    let records = load_input_records(&notes_path)?;

    let stopwords = stopword_list(cfg)?;
    let lexicon = lemma_lexicon(cfg)?;

    let meta = meta_object(
        cfg,
        &[
            ("model", file_sha256(&cfg.model_path)?),
            ("notes", file_sha256(&notes_path)?),
        ],
    );
    let mut out = String::new();
    let _ = writeln!(out, "{}", json!({ "_meta": meta }));
    let count = records.len();
    for record in records {
        // prepared rows carry their tokens; raw notes go through the pipeline
        let tokens = record
            .tokens
            .unwrap_or_else(|| preprocess_text(&record.text, &stopwords, &lexicon));
        let doc = Document { note_id: record.id.clone(), tokens };
        let vector = file.vocabulary.vectorize(&doc);
        let row = json!({
            "id": record.id,
            "label": classifier.predict(&vector),
            "score": classifier.score(&vector),
        });
        let _ = writeln!(out, "{row}");
    }

    let out_path = cfg.out.join("predictions.jsonl");
    write_text(&out_path, &out)?;
    println!("wrote {count} predictions -> {}", out_path.display());
    Ok(())
}
