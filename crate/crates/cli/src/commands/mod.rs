//! Subcommand implementations and the I/O helpers they share.

pub mod extract;
pub mod gen;
pub mod predict;
pub mod prepare;
pub mod stats;
pub mod train;
pub mod tune;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use notedx_core::corpus::{read_records, CorpusFormat, Label, NoteRecord};
use notedx_core::dxextract::RuleTable;
use notedx_core::features::SparseVector;
use notedx_core::preprocess::{Document, LemmaLexicon, StopwordList};
use serde_json::{json, Map, Value};

use crate::config::{sha256_hex, RunConfig, ARTIFACT_VERSION};
use crate::error::CliError;

/// A resource that is either the crate's bundled copy or loaded from a
/// configured override file.
pub enum Loaded<T: 'static> {
    Bundled(&'static T),
    Owned(T),
}

impl<T> std::ops::Deref for Loaded<T> {
    type Target = T;

    fn deref(&self) -> &T {
        match self {
            Loaded::Bundled(v) => v,
            Loaded::Owned(v) => v,
        }
    }
}

pub fn stopword_list(cfg: &RunConfig) -> Result<Loaded<StopwordList>, CliError> {
    match (&cfg.stopwords, &cfg.stopwords_keep) {
        (None, None) => Ok(Loaded::Bundled(StopwordList::bundled())),
        (Some(stop), keep) => Ok(Loaded::Owned(StopwordList::from_strs(
            &stop.content,
            keep.as_ref().map_or("", |f| f.content.as_str()),
        )?)),
        (None, Some(_)) => Err(CliError::config(
            "stopwords_keep requires a stopwords file (the bundled list keeps its own retentions)",
        )),
    }
}

pub fn lemma_lexicon(cfg: &RunConfig) -> Result<Loaded<LemmaLexicon>, CliError> {
    match &cfg.lexicon {
        None => Ok(Loaded::Bundled(LemmaLexicon::bundled())),
        Some(file) => Ok(Loaded::Owned(LemmaLexicon::from_str_data(&file.content)?)),
    }
}

pub fn rule_table(cfg: &RunConfig) -> Result<Loaded<RuleTable>, CliError> {
    match &cfg.rules {
        None => Ok(Loaded::Bundled(RuleTable::bundled())),
        Some(file) => Ok(Loaded::Owned(RuleTable::from_json(&file.content)?)),
    }
}

pub fn detect_format(path: &Path) -> CorpusFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => CorpusFormat::Csv,
        _ => CorpusFormat::Jsonl,
    }
}

pub fn load_input_records(path: &Path) -> Result<Vec<NoteRecord>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::new("io", format!("reading {}: {e}", path.display())))?;
    Ok(read_records(BufReader::new(file), detect_format(path))?)
}

/// A prepared dataset flattened for modeling: parallel token documents and
/// labels (ids live on the documents).
pub struct PreparedData {
    pub docs: Vec<Document>,
    pub labels: Vec<Label>,
}

pub fn load_prepared(cfg: &RunConfig) -> Result<PreparedData, CliError> {
    let records = load_input_records(&cfg.prepared)?;
    let mut docs = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for record in records {
        let label = record.label.ok_or_else(|| {
            CliError::data(format!("note {:?} has no label; training needs a labeled corpus", record.id))
        })?;
        let tokens = record.tokens.ok_or_else(|| {
            CliError::data(format!("note {:?} has no tokens; run `prepare` first", record.id))
        })?;
        docs.push(Document { note_id: record.id, tokens });
        labels.push(label);
    }
    if docs.is_empty() {
        return Err(CliError::data(format!("{} holds no records", cfg.prepared.display())));
    }
    Ok(PreparedData { docs, labels })
}

pub fn subset<T: Clone>(items: &[T], indices: &[usize]) -> Vec<T> {
    indices.iter().map(|&i| items[i].clone()).collect()
}

pub fn vectorize_all(
    vocabulary: &notedx_core::features::Vocabulary,
    docs: &[Document],
) -> Vec<SparseVector> {
    docs.iter().map(|d| vocabulary.vectorize(d)).collect()
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::new("io", format!("reading {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Provenance block stamped into every artifact. Inputs are identified by
/// content digest, never by path, so artifacts stay byte-identical when an
/// equivalent run happens somewhere else.
pub fn meta_object(cfg: &RunConfig, inputs: &[(&str, String)]) -> Value {
    let mut input_map = Map::new();
    for (name, digest) in inputs {
        input_map.insert(name.to_string(), Value::String(digest.clone()));
    }
    json!({
        "artifact_version": ARTIFACT_VERSION,
        "tool": format!("notedx {}", env!("CARGO_PKG_VERSION")),
        "config_sha256": cfg.sha256(),
        "inputs": Value::Object(input_map),
    })
}

/// Prefixes an object payload with its `_meta` block.
pub fn with_meta(meta: Value, payload: Value) -> Value {
    let mut out = Map::new();
    out.insert("_meta".to_string(), meta);
    match payload {
        Value::Object(fields) => out.extend(fields),
        other => {
            out.insert("data".to_string(), other);
        }
    }
    Value::Object(out)
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::new("io", format!("encoding {}: {e}", path.display())))?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::new("io", format!("writing {}: {e}", path.display())))
}

/// What preprocessing data this run would use, as recorded in model files
/// and checked again at prediction time.
pub fn preprocessing_provenance(cfg: &RunConfig) -> Value {
    let label = |f: &Option<crate::config::DataFile>| match f {
        Some(file) => file.label(),
        None => "bundled".to_string(),
    };
    json!({
        "stopwords": label(&cfg.stopwords),
        "stopwords_keep": label(&cfg.stopwords_keep),
        "lexicon": label(&cfg.lexicon),
    })
}

/// Fails when a loaded model records preprocessing data different from what
/// this run is configured to use; models without a record are accepted.
pub fn verify_preprocessing(cfg: &RunConfig, provenance: Option<&Value>) -> Result<(), CliError> {
    let Some(recorded) = provenance.and_then(|p| p.get("preprocessing")) else {
        return Ok(());
    };
    let current = preprocessing_provenance(cfg);
    if *recorded != current {
        return Err(CliError::model(format!(
            "preprocessing data mismatch: model records {recorded}, this run uses {current}"
        )));
    }
    Ok(())
}
