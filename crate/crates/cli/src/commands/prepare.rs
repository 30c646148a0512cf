//! `prepare`: length-filter the corpus, fill in demographics from the note
//! text, tokenize, and write the prepared dataset the other commands train
//! and predict from.

use std::fs::File;
use std::io::BufWriter;

use notedx_core::corpus::{extract_demographics, write_records_jsonl, Gender, NoteRecord};
use notedx_core::preprocess::preprocess_text;

use crate::commands::{
    file_sha256, lemma_lexicon, load_input_records, meta_object, preprocessing_provenance,
    stopword_list,
};
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus_path = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| CliError::config("corpus path is required (--corpus or corpus= under [data])"))?;
    let records = load_input_records(corpus_path)?;
    let total = records.len();

    let stopwords = stopword_list(cfg)?;
    let lexicon = lemma_lexicon(cfg)?;

    let mut prepared = Vec::new();
    for record in records {
        if record.text.chars().count() < cfg.min_chars {
            continue;
        }
        let extracted = extract_demographics(&record.text);
        // source-system values win; extraction fills the gaps from the text
        let gender = match record.gender {
            Some(g) if g != Gender::Unknown => g,
            _ => extracted.gender,
        };
        let age = record.age.or(extracted.age);
        let tokens = preprocess_text(&record.text, &stopwords, &lexicon);
        prepared.push(NoteRecord {
            id: record.id,
            text: record.text,
            label: record.label,
            age,
            gender: Some(gender),
            tokens: Some(tokens),
        });
    }
    let dropped = total - prepared.len();

    let mut meta = meta_object(cfg, &[("corpus", file_sha256(corpus_path)?)]);
    meta.as_object_mut()
        .expect("meta is an object")
        .insert("preprocessing".to_string(), preprocessing_provenance(cfg));

    let out_path = &cfg.prepared;
    let file = File::create(out_path)
        .map_err(|e| CliError::new("io", format!("writing {}: {e}", out_path.display())))?;
    write_records_jsonl(BufWriter::new(file), Some(&meta), &prepared)?;

    println!(
        "prepared {} records ({} dropped below {} chars) -> {}",
        prepared.len(),
        dropped,
        cfg.min_chars,
        out_path.display()
    );
    Ok(())
}
