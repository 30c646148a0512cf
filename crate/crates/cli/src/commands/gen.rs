//! `gen-corpus`: write the bundled synthetic corpus so the whole pipeline
//! can be exercised without any real clinical data.

use std::fs::File;
use std::io::BufWriter;

use notedx_core::corpus::write_records_jsonl;
use notedx_core::surrogate::{generate_records, SurrogateParams};

use crate::commands::meta_object;
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.require_seed()?;
    let params = SurrogateParams {
        n_f41: cfg.n_f41,
        n_f43: cfg.n_f43,
        min_chars: cfg.min_chars,
        keyword_fidelity: cfg.fidelity,
        keyword_slots: cfg.keyword_slots,
        seed,
    };
    let records = generate_records(&params)?;

    let mut meta = meta_object(cfg, &[]);
    meta.as_object_mut().expect("meta is an object").insert(
        "generator".to_string(),
        serde_json::json!({
            "n_f41": params.n_f41,
            "n_f43": params.n_f43,
            "min_chars": params.min_chars,
            "keyword_fidelity": params.keyword_fidelity,
            "keyword_slots": params.keyword_slots,
            "seed": params.seed,
        }),
    );

    let out_path = cfg.out.join("corpus.jsonl");
    let file = File::create(&out_path)
        .map_err(|e| CliError::new("io", format!("writing {}: {e}", out_path.display())))?;
    write_records_jsonl(BufWriter::new(file), Some(&meta), &records)?;

    println!(
        "generated {} notes ({} F41 / {} F43) -> {}",
        records.len(),
        params.n_f41,
        params.n_f43,
        out_path.display()
    );
    Ok(())
}
