//! `stats`: per-class demographic table (gender shares, age mean and
//! population standard deviation) printed to stdout.

use notedx_core::corpus::{
    corpus_stats, extract_demographics, ClinicalNote, Corpus, Demographics, LabeledNote,
};

use crate::commands::load_input_records;
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| CliError::config("corpus path is required (--corpus or corpus= under [data])"))?;
    let records = load_input_records(path)?;

    let mut notes = Vec::with_capacity(records.len());
    for record in records {
        let label = record.label.ok_or_else(|| {
            CliError::data(format!("note {:?} has no label; stats are per diagnosis", record.id))
        })?;
        // raw exports carry no demographic fields; recover them from the text
        let demographics = if record.gender.is_none() && record.age.is_none() {
            extract_demographics(&record.text)
        } else {
            Demographics { gender: record.gender.unwrap_or_default(), age: record.age }
        };
        notes.push(LabeledNote {
            note: ClinicalNote::new(record.id, record.text)?,
            demographics,
            label,
        });
    }

    let corpus = Corpus::from_notes(notes)?;
    let report = corpus_stats(&corpus)?;
    print!("{}", report.render_text());
    Ok(())
}
