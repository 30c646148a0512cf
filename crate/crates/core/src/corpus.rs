//! Corpus ingestion (JSONL/CSV), length filtering, demographics extraction
//! from free text, and descriptive statistics.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::normalize;

/// Diagnosis label.
///
/// `F41` (anxiety disorder) has ordinal 0 and `F43` (adjustment disorder)
/// ordinal 1; every tie in the pipeline breaks toward the lower ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "F41")]
    F41Anxiety,
    #[serde(rename = "F43")]
    F43Adjustment,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::F41Anxiety, Label::F43Adjustment];

    pub fn ordinal(self) -> usize {
        match self {
            Label::F41Anxiety => 0,
            Label::F43Adjustment => 1,
        }
    }

    /// Inverse of [`Label::ordinal`]. Panics on values other than 0 or 1.
    pub fn from_ordinal(ordinal: usize) -> Label {
        match ordinal {
            0 => Label::F41Anxiety,
            1 => Label::F43Adjustment,
            other => panic!("label ordinal out of range: {other}"),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Label::F41Anxiety => "F41",
            Label::F43Adjustment => "F43",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F41" => Ok(Label::F41Anxiety),
            "F43" => Ok(Label::F43Adjustment),
            other => Err(format!("unknown label {other:?} (expected \"F41\" or \"F43\")")),
        }
    }
}

/// Patient gender as coded in the source exports: `V` male, `M` female,
/// `D` unknown/undetermined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "V")]
    Male,
    #[serde(rename = "M")]
    Female,
    #[default]
    #[serde(rename = "D")]
    Unknown,
}

impl Gender {
    pub fn code(self) -> &'static str {
        match self {
            Gender::Male => "V",
            Gender::Female => "M",
            Gender::Unknown => "D",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Demographic attributes of a note's patient. `age` is in years and only
/// values in `0..=120` are considered valid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Demographics {
    pub gender: Gender,
    pub age: Option<u8>,
}

pub const MAX_VALID_AGE: u8 = 120;

/// A clinical note: stable identifier plus raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClinicalNote {
    id: String,
    text: String,
}

impl ClinicalNote {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, CorpusError> {
        let id = id.into();
        if id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        Ok(ClinicalNote { id, text: text.into() })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Length in Unicode scalar values, the unit the length filter uses.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// A note with its diagnosis label and (possibly unknown) demographics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledNote {
    pub note: ClinicalNote,
    pub demographics: Demographics,
    pub label: Label,
}

/// Per-class note counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub f41: usize,
    pub f43: usize,
}

impl ClassCounts {
    pub fn total(self) -> usize {
        self.f41 + self.f43
    }

    pub fn get(self, label: Label) -> usize {
        match label {
            Label::F41Anxiety => self.f41,
            Label::F43Adjustment => self.f43,
        }
    }
}

/// A labeled corpus with unique note ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    notes: Vec<LabeledNote>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids. An empty corpus is valid;
    /// operations that need data fail on their own.
    pub fn from_notes(notes: Vec<LabeledNote>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for n in &notes {
            if !seen.insert(n.note.id()) {
                return Err(CorpusError::DuplicateId { id: n.note.id().to_string() });
            }
        }
        Ok(Corpus { notes })
    }

    pub fn notes(&self) -> &[LabeledNote] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.notes.iter().map(|n| n.label).collect()
    }

    pub fn class_counts(&self) -> ClassCounts {
        let f41 = self.notes.iter().filter(|n| n.label == Label::F41Anxiety).count();
        ClassCounts { f41, f43: self.notes.len() - f41 }
    }
}

/// On-disk record shape shared by raw exports, prepared files, and
/// prediction inputs. `tokens` is only present in prepared files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub label: Option<Label>,
    #[serde(default)]
    pub age: Option<u8>,
    #[serde(default)]
    pub gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

impl NoteRecord {
    pub fn from_labeled(note: &LabeledNote) -> NoteRecord {
        NoteRecord {
            id: note.note.id().to_string(),
            text: note.note.text().to_string(),
            label: Some(note.label),
            age: note.demographics.age,
            gender: Some(note.demographics.gender),
            tokens: None,
        }
    }
}

/// Supported corpus file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?} (expected \"jsonl\" or \"csv\")")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    InvalidRecord { line: u64, message: String },
    #[error("duplicate note id {id:?}")]
    DuplicateId { id: String },
    #[error("note id must not be empty")]
    EmptyId,
    #[error("corpus is empty")]
    EmptyCorpus,
}

struct Parsed {
    line: u64,
    record: NoteRecord,
}

fn validate_record(record: &NoteRecord, line: u64) -> Result<(), CorpusError> {
    if record.id.is_empty() {
        return Err(CorpusError::InvalidRecord { line, message: "note id must not be empty".into() });
    }
    if let Some(age) = record.age {
        if age > MAX_VALID_AGE {
            return Err(CorpusError::InvalidRecord {
                line,
                message: format!("age {age} out of range 0..={MAX_VALID_AGE}"),
            });
        }
    }
    Ok(())
}

fn parse_jsonl<R: Read>(reader: R) -> Result<Vec<Parsed>, CorpusError> {
    let reader = BufReader::new(reader);
    let mut out: Vec<Parsed> = Vec::new();
    let mut first_data_line = true;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(trimmed)
            .map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
        if first_data_line {
            first_data_line = false;
            // Leading provenance line written by the pipeline; not a record.
            if value.as_object().is_some_and(|o| o.contains_key("_meta")) {
                continue;
            }
        }
        let record: NoteRecord = serde_json::from_value(value)
            .map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
        validate_record(&record, line_no)?;
        out.push(Parsed { line: line_no, record });
    }
    Ok(out)
}

fn parse_csv<R: Read>(reader: R) -> Result<Vec<Parsed>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Parse { line: 1, message: e.to_string() })?
        .clone();
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CorpusError::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let note: NoteRecord = record
            .deserialize(Some(&headers))
            .map_err(|e| CorpusError::Parse { line, message: e.to_string() })?;
        validate_record(&note, line)?;
        out.push(Parsed { line, record: note });
    }
    Ok(out)
}

fn parse_records<R: Read>(reader: R, format: CorpusFormat) -> Result<Vec<Parsed>, CorpusError> {
    match format {
        CorpusFormat::Jsonl => parse_jsonl(reader),
        CorpusFormat::Csv => parse_csv(reader),
    }
}

/// Reads note records (labels optional), e.g. prediction inputs.
pub fn read_records<R: Read>(reader: R, format: CorpusFormat) -> Result<Vec<NoteRecord>, CorpusError> {
    let parsed = parse_records(reader, format)?;
    let mut seen = HashSet::new();
    for p in &parsed {
        if !seen.insert(p.record.id.clone()) {
            return Err(CorpusError::InvalidRecord {
                line: p.line,
                message: format!("duplicate note id {:?}", p.record.id),
            });
        }
    }
    Ok(parsed.into_iter().map(|p| p.record).collect())
}

/// Reads a labeled corpus; records without a label are rejected with their
/// line number.
pub fn read_corpus<R: Read>(reader: R, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let parsed = parse_records(reader, format)?;
    let mut notes = Vec::with_capacity(parsed.len());
    let mut seen = HashSet::new();
    for p in parsed {
        let label = p.record.label.ok_or_else(|| CorpusError::InvalidRecord {
            line: p.line,
            message: format!("note {:?} has no label", p.record.id),
        })?;
        if !seen.insert(p.record.id.clone()) {
            return Err(CorpusError::InvalidRecord {
                line: p.line,
                message: format!("duplicate note id {:?}", p.record.id),
            });
        }
        notes.push(LabeledNote {
            note: ClinicalNote::new(p.record.id, p.record.text)?,
            demographics: Demographics {
                gender: p.record.gender.unwrap_or_default(),
                age: p.record.age,
            },
            label,
        });
    }
    Ok(Corpus { notes })
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    read_corpus(File::open(path)?, format)
}

pub fn load_records(path: &Path, format: CorpusFormat) -> Result<Vec<NoteRecord>, CorpusError> {
    read_records(File::open(path)?, format)
}

/// Writes records as JSONL, preceded by a `{"_meta": ...}` provenance line
/// when `meta` is given. Loaders skip that line.
pub fn write_records_jsonl<W: Write>(
    mut writer: W,
    meta: Option<&serde_json::Value>,
    records: &[NoteRecord],
) -> Result<(), CorpusError> {
    if let Some(meta) = meta {
        let line = serde_json::json!({ "_meta": meta });
        writeln!(writer, "{line}")?;
    }
    for record in records {
        let line = serde_json::to_string(record).expect("note record serializes");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Keeps notes whose character count is at least `min_chars`.
pub fn filter_by_length(corpus: &Corpus, min_chars: usize) -> Corpus {
    Corpus {
        notes: corpus
            .notes
            .iter()
            .filter(|n| n.note.char_len() >= min_chars)
            .cloned()
            .collect(),
    }
}

const GENDERED_WORDS: &[&str] = &[
    "acompañado",
    "agitado",
    "agobiado",
    "aislado",
    "alterado",
    "angustiado",
    "ansioso",
    "asustado",
    "bloqueado",
    "derivado",
    "desbordado",
    "desorientado",
    "diagnosticado",
    "estresado",
    "explorado",
    "ingresado",
    "jubilado",
    "lloroso",
    "medicado",
    "nervioso",
    "orientado",
    "preocupado",
    "sedado",
    "tembloroso",
    "valorado",
];

fn tier1_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(varon|hombre|mujer)(?: \w+){0,2} de (\d{1,3}) ?a[nñ]os?\b").unwrap()
    })
}

fn tier2_age_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\bpaciente(?: \w+){0,2} de (\d{1,3}) ?a[nñ]os?\b|\b(\d{1,3}) ?a[nñ]os? de edad\b")
            .unwrap()
    })
}

fn marital_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(soltero|soltera|casado|casada|viudo|viuda|divorciado|divorciada)\b").unwrap()
    })
}

fn gendered_sets() -> &'static (HashSet<String>, HashSet<String>) {
    static SETS: OnceLock<(HashSet<String>, HashSet<String>)> = OnceLock::new();
    SETS.get_or_init(|| {
        let masc: HashSet<String> = GENDERED_WORDS.iter().map(|w| w.to_string()).collect();
        let fem = GENDERED_WORDS
            .iter()
            .map(|w| {
                let mut s = w[..w.len() - 1].to_string();
                s.push('a');
                s
            })
            .collect();
        (masc, fem)
    })
}

fn parse_age(digits: &str) -> Option<u8> {
    let value: u32 = digits.parse().ok()?;
    if value <= MAX_VALID_AGE as u32 {
        Some(value as u8)
    } else {
        None
    }
}

/// Extracts age and gender from note text with a tiered scheme:
///
/// 1. explicit phrases carrying both ("varón de 20 años", "mujer casada de 45 años"),
/// 2. age-only phrases ("paciente de 45 años", "45 años de edad") combined with
///    gendered participles/adjectives in the first sentence ("derivada", "nervioso"),
/// 3. marital-status words anywhere ("casada", "viudo").
///
/// Within each tier the first match in document order wins; candidate ages
/// outside `0..=120` are rejected and scanning continues. Age and gender may
/// be resolved by different tiers. Anything unresolved stays absent/unknown.
pub fn extract_demographics(text: &str) -> Demographics {
    let norm = normalize(text);

    for caps in tier1_regex().captures_iter(&norm) {
        if let Some(age) = parse_age(&caps[2]) {
            let gender = match &caps[1] {
                "mujer" => Gender::Female,
                _ => Gender::Male,
            };
            return Demographics { gender, age: Some(age) };
        }
    }

    let age = tier2_age_regex()
        .captures_iter(&norm)
        .find_map(|caps| {
            let digits = caps.get(1).or_else(|| caps.get(2))?;
            parse_age(digits.as_str())
        });

    let gender = first_sentence_gender(text)
        .or_else(|| {
            marital_regex().find(&norm).map(|m| {
                if m.as_str().ends_with('a') {
                    Gender::Female
                } else {
                    Gender::Male
                }
            })
        })
        .unwrap_or(Gender::Unknown);

    Demographics { gender, age }
}

fn first_sentence_gender(text: &str) -> Option<Gender> {
    let first = text.split(['.', '\n', '!', '?', ';']).next()?;
    let (masc, fem) = gendered_sets();
    for token in normalize(first).split_whitespace() {
        if masc.contains(token) {
            return Some(Gender::Male);
        }
        if fem.contains(token) {
            return Some(Gender::Female);
        }
    }
    None
}

/// One row of the demographics table; percentages are over the row's notes
/// and age statistics cover only notes with a detected age.
#[derive(Debug, Clone, Serialize)]
pub struct DemographicRow {
    pub group: String,
    pub n: usize,
    pub pct_male: f64,
    pub pct_female: f64,
    pub pct_unknown: f64,
    pub n_with_age: usize,
    pub age_mean: Option<f64>,
    pub age_std: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemographicReport {
    pub rows: Vec<DemographicRow>,
}

fn build_row<'a>(group: &str, notes: impl Iterator<Item = &'a LabeledNote>) -> DemographicRow {
    let mut n = 0usize;
    let mut male = 0usize;
    let mut female = 0usize;
    let mut ages: Vec<f64> = Vec::new();
    for note in notes {
        n += 1;
        match note.demographics.gender {
            Gender::Male => male += 1,
            Gender::Female => female += 1,
            Gender::Unknown => {}
        }
        if let Some(age) = note.demographics.age {
            ages.push(age as f64);
        }
    }
    let pct = |count: usize| 100.0 * count as f64 / n as f64;
    let (age_mean, age_std) = if ages.is_empty() {
        (None, None)
    } else {
        let mean = ages.iter().sum::<f64>() / ages.len() as f64;
        // Population variance: these rows describe the corpus itself, not a
        // sample from something larger.
        let var = ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / ages.len() as f64;
        (Some(mean), Some(var.sqrt()))
    };
    DemographicRow {
        group: group.to_string(),
        n,
        pct_male: pct(male),
        pct_female: pct(female),
        pct_unknown: pct(n - male - female),
        n_with_age: ages.len(),
        age_mean,
        age_std,
    }
}

/// Per-class and overall demographic statistics. Fails on an empty corpus.
pub fn corpus_stats(corpus: &Corpus) -> Result<DemographicReport, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut rows = Vec::with_capacity(3);
    for label in Label::ALL {
        rows.push(build_row(
            label.code(),
            corpus.notes.iter().filter(|n| n.label == label),
        ));
    }
    rows.push(build_row("all", corpus.notes.iter()));
    Ok(DemographicReport { rows })
}

impl DemographicReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:>5} {:>7} {:>8} {:>9} {:>7} {:>9} {:>8}\n",
            "group", "n", "male%", "female%", "unk%", "age_n", "age_mean", "age_std"
        ));
        for row in &self.rows {
            let fmt_opt = |v: Option<f64>| match v {
                Some(v) => format!("{v:.1}"),
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "{:<6} {:>5} {:>7.1} {:>8.1} {:>9.1} {:>7} {:>9} {:>8}\n",
                row.group,
                row.n,
                row.pct_male,
                row.pct_female,
                row.pct_unknown,
                row.n_with_age,
                fmt_opt(row.age_mean),
                fmt_opt(row.age_std),
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(id: &str, text: &str, label: Label) -> LabeledNote {
        LabeledNote {
            note: ClinicalNote::new(id, text).unwrap(),
            demographics: Demographics::default(),
            label,
        }
    }

    #[test]
    fn jsonl_round_trip_preserves_records() {
        let records = vec![
            NoteRecord {
                id: "a1".into(),
                text: "Paciente con ansiedad".into(),
                label: Some(Label::F41Anxiety),
                age: Some(40),
                gender: Some(Gender::Female),
                tokens: None,
            },
            NoteRecord {
                id: "a2".into(),
                text: "Reacción adaptativa".into(),
                label: Some(Label::F43Adjustment),
                age: None,
                gender: Some(Gender::Unknown),
                tokens: Some(vec!["reaccion".into(), "adaptativa".into()]),
            },
        ];
        let mut buf = Vec::new();
        write_records_jsonl(&mut buf, Some(&serde_json::json!({"tool": "test"})), &records).unwrap();
        let read = read_records(buf.as_slice(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(read, records);
    }

    #[test]
    fn unknown_label_names_the_line() {
        let data = "{\"id\":\"a\",\"text\":\"x\",\"label\":\"F41\"}\n{\"id\":\"b\",\"text\":\"y\",\"label\":\"F99\"}\n";
        let err = read_corpus(data.as_bytes(), CorpusFormat::Jsonl).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "unexpected message: {msg}");
        assert!(msg.contains("F99"), "unexpected message: {msg}");
    }

    #[test]
    fn missing_label_names_the_line() {
        let data = "{\"id\":\"a\",\"text\":\"x\",\"label\":\"F41\"}\n\n{\"id\":\"b\",\"text\":\"y\"}\n";
        let err = read_corpus(data.as_bytes(), CorpusFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("line 3"), "got: {err}");
    }

    #[test]
    fn duplicate_id_rejected() {
        let data = "{\"id\":\"a\",\"text\":\"x\",\"label\":\"F41\"}\n{\"id\":\"a\",\"text\":\"y\",\"label\":\"F43\"}\n";
        let err = read_corpus(data.as_bytes(), CorpusFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "got: {err}");
    }

    #[test]
    fn age_out_of_range_rejected_at_load() {
        let data = "{\"id\":\"a\",\"text\":\"x\",\"label\":\"F41\",\"age\":130}\n";
        let err = read_corpus(data.as_bytes(), CorpusFormat::Jsonl).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1") && msg.contains("130"), "got: {msg}");
    }

    #[test]
    fn csv_and_jsonl_agree() {
        let jsonl = "{\"id\":\"a\",\"text\":\"hola mundo\",\"label\":\"F41\",\"age\":33,\"gender\":\"V\"}\n{\"id\":\"b\",\"text\":\"otro texto\",\"label\":\"F43\",\"age\":null,\"gender\":null}\n";
        let csv = "id,text,label,age,gender\na,hola mundo,F41,33,V\nb,otro texto,F43,,\n";
        let from_jsonl = read_corpus(jsonl.as_bytes(), CorpusFormat::Jsonl).unwrap();
        let from_csv = read_corpus(csv.as_bytes(), CorpusFormat::Csv).unwrap();
        assert_eq!(from_jsonl, from_csv);
        assert_eq!(from_jsonl.class_counts(), ClassCounts { f41: 1, f43: 1 });
    }

    #[test]
    fn meta_line_is_skipped() {
        let data = "{\"_meta\":{\"seed\":7}}\n{\"id\":\"a\",\"text\":\"x\",\"label\":\"F41\"}\n";
        let corpus = read_corpus(data.as_bytes(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(corpus.len(), 1);
    }

    #[test]
    fn length_filter_keeps_exactly_the_long_notes() {
        let mut notes = Vec::new();
        for i in 0..19 {
            notes.push(note(&format!("long{i}"), &"a".repeat(600 + i), Label::F41Anxiety));
        }
        notes.push(note("short", &"a".repeat(599), Label::F43Adjustment));
        let corpus = Corpus::from_notes(notes).unwrap();
        let kept = filter_by_length(&corpus, 600);
        assert_eq!(kept.len(), 19);
        let fraction = kept.len() as f64 / corpus.len() as f64;
        assert!((fraction - 0.95).abs() < 1e-12);
        assert!(kept.notes().iter().all(|n| n.note.id().starts_with("long")));
    }

    #[test]
    fn length_filter_boundary_is_inclusive() {
        let corpus = Corpus::from_notes(vec![
            note("n599", &"x".repeat(599), Label::F41Anxiety),
            note("n600", &"x".repeat(600), Label::F41Anxiety),
            note("n601", &"x".repeat(601), Label::F43Adjustment),
        ])
        .unwrap();
        let kept = filter_by_length(&corpus, 600);
        let ids: Vec<&str> = kept.notes().iter().map(|n| n.note.id()).collect();
        assert_eq!(ids, vec!["n600", "n601"]);
    }

    #[test]
    fn char_len_counts_chars_not_bytes() {
        let n = ClinicalNote::new("a", "año".repeat(200)).unwrap();
        assert_eq!(n.char_len(), 600);
        assert!(n.text().len() > 600);
    }

    #[test]
    fn demographics_tier1_explicit() {
        assert_eq!(
            extract_demographics("Varón de 20 años que acude por nerviosismo."),
            Demographics { gender: Gender::Male, age: Some(20) }
        );
        assert_eq!(
            extract_demographics("MUJER DE 73 AÑOS con insomnio."),
            Demographics { gender: Gender::Female, age: Some(73) }
        );
        // Up to two words may sit between the gender word and the age.
        assert_eq!(
            extract_demographics("Mujer embarazada de 31 años."),
            Demographics { gender: Gender::Female, age: Some(31) }
        );
        // Missing space and missing tilde still parse.
        assert_eq!(
            extract_demographics("hombre de 45años, sin antecedentes"),
            Demographics { gender: Gender::Male, age: Some(45) }
        );
        assert_eq!(
            extract_demographics("varon de 52 anos derivado de primaria"),
            Demographics { gender: Gender::Male, age: Some(52) }
        );
    }

    #[test]
    fn demographics_tier2_age_with_marital_gender() {
        assert_eq!(
            extract_demographics("Paciente de 45 años, casada, que consulta por estrés."),
            Demographics { gender: Gender::Female, age: Some(45) }
        );
    }

    #[test]
    fn demographics_tier2_participle_gender() {
        assert_eq!(
            extract_demographics("Paciente derivada de 52 años por su médico de cabecera. Sin otros datos."),
            Demographics { gender: Gender::Female, age: Some(52) }
        );
        // The participle only counts inside the first sentence.
        assert_eq!(
            extract_demographics("Paciente de 52 años. Acude derivada de primaria."),
            Demographics { gender: Gender::Unknown, age: Some(52) }
        );
    }

    #[test]
    fn demographics_age_of_edad_variant() {
        assert_eq!(
            extract_demographics("Tiene 38 años de edad y vive sola"),
            Demographics { gender: Gender::Unknown, age: Some(38) }
        );
    }

    #[test]
    fn demographics_marital_only() {
        assert_eq!(
            extract_demographics("Acude a consulta por insomnio. Está casado y trabaja."),
            Demographics { gender: Gender::Male, age: None }
        );
        assert_eq!(
            extract_demographics("Viuda desde 2019, refiere tristeza."),
            Demographics { gender: Gender::Female, age: None }
        );
    }

    #[test]
    fn demographics_rejects_out_of_range_ages() {
        assert_eq!(
            extract_demographics("varón de 999 años según la hoja"),
            Demographics { gender: Gender::Unknown, age: None }
        );
        // A later in-range match within the same tier still wins.
        assert_eq!(
            extract_demographics("varón de 999 años; en realidad es un hombre de 42 años"),
            Demographics { gender: Gender::Male, age: Some(42) }
        );
        assert_eq!(
            extract_demographics("paciente de 120 años"),
            Demographics { gender: Gender::Unknown, age: Some(120) }
        );
        assert_eq!(
            extract_demographics("paciente de 121 años"),
            Demographics { gender: Gender::Unknown, age: None }
        );
    }

    #[test]
    fn demographics_absent_when_nothing_matches() {
        assert_eq!(
            extract_demographics("Consulta por dificultades de sueño y rumiación."),
            Demographics { gender: Gender::Unknown, age: None }
        );
    }

    #[test]
    fn stats_age_mean_and_population_std() {
        let mut a = note("a", "x", Label::F41Anxiety);
        a.demographics = Demographics { gender: Gender::Male, age: Some(30) };
        let mut b = note("b", "y", Label::F41Anxiety);
        b.demographics = Demographics { gender: Gender::Female, age: Some(50) };
        let mut c = note("c", "z", Label::F43Adjustment);
        c.demographics = Demographics { gender: Gender::Unknown, age: None };
        let corpus = Corpus::from_notes(vec![a, b, c]).unwrap();
        let report = corpus_stats(&corpus).unwrap();
        let f41 = &report.rows[0];
        assert_eq!(f41.group, "F41");
        assert_eq!(f41.n, 2);
        assert_eq!(f41.n_with_age, 2);
        assert!((f41.age_mean.unwrap() - 40.0).abs() < 1e-12);
        assert!((f41.age_std.unwrap() - 10.0).abs() < 1e-12);
        let f43 = &report.rows[1];
        assert_eq!(f43.n, 1);
        assert_eq!(f43.n_with_age, 0);
        assert!(f43.age_mean.is_none());
        for row in &report.rows {
            let sum = row.pct_male + row.pct_female + row.pct_unknown;
            assert!((sum - 100.0).abs() < 0.1, "percentages sum to {sum}");
        }
    }

    #[test]
    fn stats_on_empty_corpus_is_an_error() {
        let corpus = Corpus::default();
        assert!(matches!(corpus_stats(&corpus), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn render_text_has_a_row_per_group() {
        let corpus = Corpus::from_notes(vec![
            note("a", "x", Label::F41Anxiety),
            note("b", "y", Label::F43Adjustment),
        ])
        .unwrap();
        let text = corpus_stats(&corpus).unwrap().render_text();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("F41") && text.contains("F43") && text.contains("all"));
    }
}
