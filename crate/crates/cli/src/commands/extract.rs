//! `extract-dx`: build the few-shot diagnosis-extraction prompt for every
//! note and either emit the prompts as a dry run (`--transport none`) or
//! run them through the offline stub transport and normalize the extracted
//! spans (`--transport stub`).

use std::fmt::Write as _;
use std::path::PathBuf;

use notedx_core::dxextract::{
    build_prompt, extract_with_transport, RetryPolicy, StubTransport, DEFAULT_ROLE_TEXT,
    DEFAULT_TASK_TEXT,
};
use serde_json::json;

use crate::commands::{file_sha256, load_input_records, meta_object, rule_table, write_text};
use crate::config::{RunConfig, TransportKind};
use crate::error::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let notes_path: PathBuf = match (&cfg.notes, &cfg.corpus) {
        (Some(notes), _) => notes.clone(),
        (None, Some(corpus)) => corpus.clone(),
        (None, None) => {
            return Err(CliError::config(
                "a notes file is required (--notes, or corpus= under [data])",
            ))
        }
    };
    let records = load_input_records(&notes_path)?;
    if records.is_empty() {
        return Err(CliError::data(format!("{} holds no notes", notes_path.display())));
    }

    let rules = rule_table(cfg)?;
    let example = match &cfg.example_note {
        Some(id) => records.iter().find(|r| r.id == *id).ok_or_else(|| {
            CliError::data(format!("example note {id:?} is not in {}", notes_path.display()))
        })?,
        None => &records[0],
    };

    let mut inputs = vec![("notes", file_sha256(&notes_path)?)];
    let stub = match cfg.transport {
        TransportKind::None => None,
        TransportKind::Stub => {
            let fixture = cfg.fixture.as_ref().ok_or_else(|| {
                CliError::config("the stub transport needs a fixture file (--fixture)")
            })?;
            inputs.push(("fixture", fixture.label()));
            Some(StubTransport::from_json(&fixture.content)?)
        }
    };

    let meta = meta_object(cfg, &inputs);
    let mut out = String::new();
    let _ = writeln!(out, "{}", json!({ "_meta": meta }));
    let mut count = 0usize;
    for record in records.iter().filter(|r| r.id != example.id) {
        let prompt = build_prompt(
            &example.text,
            &cfg.example_answer,
            &record.text,
            DEFAULT_ROLE_TEXT,
            DEFAULT_TASK_TEXT,
        )?;
        let row = match &stub {
            None => json!({ "id": record.id, "prompt": prompt }),
            Some(stub) => {
                let annotation =
                    extract_with_transport(stub, &record.id, &prompt, &RetryPolicy::default())?;
                let classes: Vec<&str> =
                    annotation.raw_spans().iter().map(|s| rules.classify(s).as_str()).collect();
                json!({ "id": record.id, "spans": annotation.raw_spans(), "classes": classes })
            }
        };
        let _ = writeln!(out, "{row}");
        count += 1;
    }

    let out_path = cfg.out.join("dx.jsonl");
    write_text(&out_path, &out)?;
    match cfg.transport {
        TransportKind::None => println!("emitted {count} prompts -> {}", out_path.display()),
        TransportKind::Stub => println!("annotated {count} notes -> {}", out_path.display()),
    }
    Ok(())
}
