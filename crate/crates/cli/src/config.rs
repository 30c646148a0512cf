//! Run configuration: a plain-text `key = value` file with `[section]`
//! headers, overridable key-by-key from command-line flags (flags win).
//!
//! Resolution loads every referenced data file up front, so path problems
//! surface before any work begins. The configuration hash embedded in every
//! artifact covers the semantic settings (seeds, fractions, grids by
//! content, data-file contents) but not file locations, `--out`, or
//! `--jobs`; equivalent runs in different directories therefore produce
//! byte-identical artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use notedx_core::models::ModelFamily;
use notedx_core::resample::Oversampler;
use notedx_core::tune::SelectMetric;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Version stamp written into every artifact next to the config hash.
pub const ARTIFACT_VERSION: u32 = 1;

const SECTIONS: [&str; 9] =
    ["run", "data", "features", "split", "resample", "model", "tune", "extract", "generate"];

/// Every recognized key with the section it is documented under. Sections
/// organize the file; key names are globally unique and looked up by name.
const KNOWN_KEYS: [(&str, &str); 28] = [
    ("run", "out"),
    ("run", "jobs"),
    ("data", "corpus"),
    ("data", "prepared"),
    ("data", "notes"),
    ("data", "model"),
    ("data", "min_chars"),
    ("data", "stopwords"),
    ("data", "stopwords_keep"),
    ("data", "lexicon"),
    ("data", "rules"),
    ("features", "min_df"),
    ("features", "max_df_ratio"),
    ("split", "seed"),
    ("split", "test_fraction"),
    ("resample", "oversampler"),
    ("resample", "smote_k"),
    ("model", "family"),
    ("model", "params"),
    ("tune", "grid"),
    ("tune", "folds"),
    ("tune", "select"),
    ("extract", "transport"),
    ("extract", "fixture"),
    ("extract", "example_note"),
    ("extract", "example_answer"),
    ("generate", "n_f41"),
    ("generate", "n_f43"),
];

// Generator knobs that did not fit the fixed-size table above.
const EXTRA_KEYS: [(&str, &str); 2] = [("generate", "fidelity"), ("generate", "keyword_slots")];

fn known_key(name: &str) -> bool {
    KNOWN_KEYS.iter().chain(EXTRA_KEYS.iter()).any(|(_, key)| *key == name)
}

/// The merged string-level configuration before typing.
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, CliError> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                // sections organize the file and are checked for typos; keys
                // stay globally unique, so nothing else is tracked here
                if !SECTIONS.contains(&name.trim()) {
                    return Err(CliError::config(format!(
                        "line {line_no}: unknown section [{}]",
                        name.trim()
                    )));
                }
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                CliError::config(format!("line {line_no}: expected `key = value`, got {trimmed:?}"))
            })?;
            let key = key.trim();
            // Values may legitimately contain '#' (the dx answer format), so
            // only whole lines are comments; no inline stripping.
            let value = value.trim();
            if !known_key(key) {
                return Err(CliError::config(format!("line {line_no}: unknown key {key:?}")));
            }
            if raw.values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::config(format!("line {line_no}: duplicate key {key:?}")));
            }
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<RawConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("reading config {}: {e}", path.display())))?;
        RawConfig::parse(&text)
    }

    /// Applies one command-line override; flags always win over the file.
    pub fn set(&mut self, key: &'static str, value: impl Into<String>) {
        debug_assert!(known_key(key), "flag maps to unknown config key {key}");
        self.values.insert(key.to_string(), value.into());
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// A referenced data file, read eagerly at resolution time.
#[derive(Debug, Clone)]
pub struct DataFile {
    pub path: PathBuf,
    pub content: String,
    pub sha256: String,
}

impl DataFile {
    fn read(path: &str) -> Result<DataFile, CliError> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("io", format!("reading {path}: {e}")))?;
        Ok(DataFile {
            path: PathBuf::from(path),
            sha256: sha256_hex(content.as_bytes()),
            content,
        })
    }

    /// Provenance tag: content identity, not location.
    pub fn label(&self) -> String {
        format!("sha256:{}", self.sha256)
    }
}

/// Where a search grid comes from.
#[derive(Debug, Clone)]
pub enum GridSource {
    Bundled(String),
    File(DataFile),
}

impl GridSource {
    pub fn json(&self) -> &str {
        match self {
            GridSource::Bundled(name) => notedx_core::tune::grids::bundled(name)
                .expect("resolution validated the bundled grid name"),
            GridSource::File(file) => &file.content,
        }
    }

    pub fn label(&self) -> String {
        match self {
            GridSource::Bundled(name) => format!("bundled:{name}"),
            GridSource::File(file) => file.label(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    /// Offline canned responses from a fixture file.
    Stub,
    /// Dry run: emit the prompts without sending anything.
    None,
}

impl TransportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransportKind::Stub => "stub",
            TransportKind::None => "none",
        }
    }
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stub" => Ok(TransportKind::Stub),
            "none" => Ok(TransportKind::None),
            other => Err(format!("unknown transport {other:?} (expected stub or none)")),
        }
    }
}

/// Fully typed configuration with all referenced files pre-loaded.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub corpus: Option<PathBuf>,
    pub prepared: PathBuf,
    pub notes: Option<PathBuf>,
    pub model_path: PathBuf,
    pub min_chars: usize,
    pub stopwords: Option<DataFile>,
    pub stopwords_keep: Option<DataFile>,
    pub lexicon: Option<DataFile>,
    pub rules: Option<DataFile>,
    pub min_df: usize,
    pub max_df_ratio: f64,
    pub test_fraction: f64,
    pub oversampler: Oversampler,
    pub family: Option<ModelFamily>,
    pub params: Option<DataFile>,
    pub grid: Option<GridSource>,
    pub folds: usize,
    pub select: SelectMetric,
    pub transport: TransportKind,
    pub fixture: Option<DataFile>,
    pub example_note: Option<String>,
    pub example_answer: String,
    pub n_f41: usize,
    pub n_f43: usize,
    pub fidelity: f64,
    pub keyword_slots: usize,
}

fn parse_key<T: FromStr>(raw: &RawConfig, key: &str, default: T) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    match raw.get(key) {
        None => Ok(default),
        Some(value) => value
            .parse()
            .map_err(|e| CliError::config(format!("key {key:?}: invalid value {value:?}: {e}"))),
    }
}

fn parse_opt<T: FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    raw.get(key)
        .map(|value| {
            value.parse().map_err(|e| {
                CliError::config(format!("key {key:?}: invalid value {value:?}: {e}"))
            })
        })
        .transpose()
}

fn read_opt(raw: &RawConfig, key: &str) -> Result<Option<DataFile>, CliError> {
    raw.get(key).map(DataFile::read).transpose()
}

impl RunConfig {
    pub fn resolve(raw: &RawConfig) -> Result<RunConfig, CliError> {
        let out = PathBuf::from(raw.get("out").unwrap_or("."));
        let prepared =
            raw.get("prepared").map(PathBuf::from).unwrap_or_else(|| out.join("prepared.jsonl"));
        let model_path =
            raw.get("model").map(PathBuf::from).unwrap_or_else(|| out.join("model.json"));

        let oversampler = match raw.get("oversampler").unwrap_or("none") {
            "none" => Oversampler::None,
            "random" => Oversampler::Random,
            "smote" => Oversampler::Smote { k: parse_key(raw, "smote_k", 5usize)? },
            other => {
                return Err(CliError::config(format!(
                    "key \"oversampler\": unknown value {other:?} (expected none, random, or smote)"
                )))
            }
        };

        let grid = match raw.get("grid") {
            None => None,
            Some(name) if notedx_core::tune::grids::bundled(name).is_some() => {
                Some(GridSource::Bundled(name.to_string()))
            }
            Some(path) => Some(GridSource::File(DataFile::read(path)?)),
        };

        let test_fraction = parse_key(raw, "test_fraction", 0.30f64)?;
        if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
            return Err(CliError::config(format!(
                "key \"test_fraction\": {test_fraction} is outside (0, 1)"
            )));
        }
        let max_df_ratio = parse_key(raw, "max_df_ratio", 0.95f64)?;
        let fidelity = parse_key(raw, "fidelity", 0.85f64)?;

        Ok(RunConfig {
            out,
            jobs: parse_opt(raw, "jobs")?,
            seed: parse_opt(raw, "seed")?,
            corpus: raw.get("corpus").map(PathBuf::from),
            prepared,
            notes: raw.get("notes").map(PathBuf::from),
            model_path,
            min_chars: parse_key(raw, "min_chars", 600usize)?,
            stopwords: read_opt(raw, "stopwords")?,
            stopwords_keep: read_opt(raw, "stopwords_keep")?,
            lexicon: read_opt(raw, "lexicon")?,
            rules: read_opt(raw, "rules")?,
            min_df: parse_key(raw, "min_df", 2usize)?,
            max_df_ratio,
            test_fraction,
            oversampler,
            family: parse_opt(raw, "family")?,
            params: read_opt(raw, "params")?,
            grid,
            folds: parse_key(raw, "folds", 3usize)?,
            select: parse_key(raw, "select", SelectMetric::Accuracy)?,
            transport: parse_key(raw, "transport", TransportKind::None)?,
            fixture: read_opt(raw, "fixture")?,
            example_note: raw.get("example_note").map(str::to_string),
            example_answer: raw
                .get("example_answer")
                .unwrap_or(notedx_core::dxextract::DEFAULT_EXAMPLE_ANSWER)
                .to_string(),
            n_f41: parse_key(raw, "n_f41", 146usize)?,
            n_f43: parse_key(raw, "n_f43", 82usize)?,
            fidelity,
            keyword_slots: parse_key(raw, "keyword_slots", 6usize)?,
        })
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::config(
                "seed is required (pass --seed or set seed= under [split]); \
                 there is no wall-clock default",
            )
        })
    }

    pub fn require_family(&self) -> Result<ModelFamily, CliError> {
        self.family.ok_or_else(|| {
            CliError::config("model family is required (pass --family or set family= under [model])")
        })
    }

    /// Hash of the semantic configuration. Excludes locations (`out`, input
    /// paths) and parallelism (`jobs`); includes referenced file contents by
    /// digest, so the hash pins what the run computes, not where it ran.
    pub fn sha256(&self) -> String {
        let file_label = |f: &Option<DataFile>| match f {
            Some(file) => file.label(),
            None => "bundled".to_string(),
        };
        let mut lines = BTreeMap::new();
        lines.insert("example_answer", self.example_answer.clone());
        lines.insert("example_note", self.example_note.clone().unwrap_or_else(|| "-".into()));
        lines.insert(
            "family",
            self.family.map(|f| f.as_str().to_string()).unwrap_or_else(|| "-".into()),
        );
        lines.insert("fidelity", self.fidelity.to_string());
        lines.insert("folds", self.folds.to_string());
        lines.insert("grid", self.grid.as_ref().map(GridSource::label).unwrap_or_else(|| "-".into()));
        lines.insert("keyword_slots", self.keyword_slots.to_string());
        lines.insert("lexicon", file_label(&self.lexicon));
        lines.insert("max_df_ratio", self.max_df_ratio.to_string());
        lines.insert("min_chars", self.min_chars.to_string());
        lines.insert("min_df", self.min_df.to_string());
        lines.insert("n_f41", self.n_f41.to_string());
        lines.insert("n_f43", self.n_f43.to_string());
        lines.insert("oversampler", self.oversampler.to_string());
        lines.insert("params", self.params.as_ref().map(DataFile::label).unwrap_or_else(|| "-".into()));
        lines.insert("rules", file_label(&self.rules));
        lines.insert("seed", self.seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into()));
        lines.insert("select", self.select.as_str().to_string());
        lines.insert("stopwords", file_label(&self.stopwords));
        lines.insert("stopwords_keep", file_label(&self.stopwords_keep));
        lines.insert("test_fraction", self.test_fraction.to_string());
        lines.insert("transport", self.transport.as_str().to_string());
        let mut canonical = String::new();
        for (key, value) in &lines {
            let _ = writeln!(canonical, "{key}={value}");
        }
        sha256_hex(canonical.as_bytes())
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}
