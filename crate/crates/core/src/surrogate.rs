//! Deterministic generator of a synthetic Spanish-like psychiatric corpus
//! shaped like the study population: 146 anxiety (F41) and 82 adjustment
//! (F43) notes, each at least 600 characters, with class-correlated
//! vocabulary planted at a configurable fidelity and demographic phrases the
//! corpus extractor understands. The text is template noise, not clinical
//! content; it exists so the full pipeline can be exercised end to end
//! without any real patient data.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    extract_demographics, ClinicalNote, Corpus, CorpusError, Label, LabeledNote, NoteRecord,
};
use crate::seeding::derive;

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("invalid surrogate parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Knobs for the generator. Defaults mirror the study corpus shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateParams {
    pub n_f41: usize,
    pub n_f43: usize,
    /// Minimum note length in characters; padding sentences are appended
    /// until every note reaches it.
    pub min_chars: usize,
    /// Probability that a planted keyword phrase comes from the note's own
    /// class pool rather than the opposite one.
    pub keyword_fidelity: f64,
    /// Symptom keyword slots per note, in addition to one diagnosis slot.
    pub keyword_slots: usize,
    pub seed: u64,
}

impl Default for SurrogateParams {
    fn default() -> SurrogateParams {
        SurrogateParams {
            n_f41: 146,
            n_f43: 82,
            min_chars: 600,
            keyword_fidelity: 0.85,
            keyword_slots: 6,
            seed: 0,
        }
    }
}

impl SurrogateParams {
    fn validate(&self) -> Result<(), SurrogateError> {
        if self.n_f41 == 0 || self.n_f43 == 0 {
            return Err(SurrogateError::InvalidParams(
                "both classes need at least one note".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.keyword_fidelity) {
            return Err(SurrogateError::InvalidParams(format!(
                "keyword_fidelity must be in [0, 1], got {}",
                self.keyword_fidelity
            )));
        }
        if self.keyword_slots == 0 {
            return Err(SurrogateError::InvalidParams(
                "keyword_slots must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Symptom phrasings planted in F41 notes (at fidelity) or F43 notes (at
/// one minus fidelity). Every phrase repeats the class marker "ansiedad"
/// so term frequency, not mere presence, carries the label.
pub const F41_KEYWORDS: [&str; 10] = [
    "ansiedad generalizada de larga evolución",
    "crisis de ansiedad recurrentes",
    "ansiedad anticipatoria constante",
    "ansiedad flotante sin desencadenante claro",
    "ansiedad somática con palpitaciones",
    "ansiedad basal elevada con temblor distal",
    "picos de ansiedad de inicio brusco",
    "ansiedad paroxística episódica",
    "ansiedad con hiperventilación ocasional",
    "marcada ansiedad psicofísica",
];

/// Symptom phrasings planted in F43 notes (at fidelity) or F41 notes.
/// Class marker: "estresor".
pub const F43_KEYWORDS: [&str; 10] = [
    "un estresor vital identificable",
    "una reacción desproporcionada al estresor",
    "un estresor laboral reciente",
    "un estresor conyugal mantenido",
    "un estresor económico sobrevenido",
    "malestar reactivo a un estresor concreto",
    "un estresor familiar persistente",
    "empeoramiento tras un estresor doméstico",
    "un estresor relacional claro",
    "un estresor ligado a la mudanza",
];

const F41_DIAGNOSES: [&str; 5] = [
    "trastorno de ansiedad generalizada",
    "trastorno de pánico",
    "síndrome ansioso-depresivo",
    "ansiedad paroxística episódica",
    "trastorno mixto ansioso-depresivo",
];

const F43_DIAGNOSES: [&str; 5] = [
    "trastorno adaptativo",
    "reacción de adaptación",
    "trastorno de adaptación con ánimo depresivo",
    "reacción a estrés agudo",
    "reacción de duelo",
];

const CHIEF_COMPLAINTS: [&str; 5] = [
    "malestar emocional",
    "dificultades para conciliar el sueño",
    "nerviosismo de semanas de evolución",
    "bajo estado de ánimo",
    "tensión mantenida durante el día",
];

const KEYWORD_TEMPLATES: [&str; 6] = [
    "Refiere {} desde hace semanas.",
    "Destaca {} en la exploración actual.",
    "El cuadro se caracteriza por {}.",
    "Presenta {} de intensidad creciente.",
    "Se objetiva {} durante la entrevista.",
    "La familia describe {} en el último mes.",
];

const ASSESSMENT_TEMPLATES: [&str; 3] = [
    "Juicio clínico: {}.",
    "Impresión diagnóstica: {}.",
    "Orientación diagnóstica: {}.",
];

const PLANS: [&str; 3] = [
    "Plan: psicoeducación, pautas de higiene del sueño y revisión en cuatro semanas.",
    "Plan: se ajusta el tratamiento actual y se cita para control en un mes.",
    "Plan: derivación a psicoterapia de apoyo y seguimiento evolutivo estrecho.",
];

/// Filler sentences free of gendered or marital words, safe for any note.
const NEUTRAL_FILLERS: [&str; 14] = [
    "Duerme mal desde hace varias semanas y se despierta de madrugada.",
    "No refiere alergias medicamentosas conocidas.",
    "Sigue tratamiento con sertralina cincuenta miligramos al día.",
    "Niega consumo de tóxicos y mantiene el apetito conservado.",
    "La exploración psicopatológica no muestra alteraciones del curso del pensamiento.",
    "Sin antecedentes somáticos de interés.",
    "Antecedentes familiares de depresión en la rama materna.",
    "No presenta ideación autolítica estructurada.",
    "Mantiene una red de apoyo social adecuada.",
    "Refiere cefalea tensional ocasional al final de la jornada.",
    "El discurso es fluido, coherente y bien estructurado.",
    "Se recomienda ejercicio físico moderado de forma regular.",
    "Pendiente de analítica general y perfil tiroideo.",
    "Buena adherencia al tratamiento pautado hasta la fecha.",
];

/// Fillers with a gendered participle; `{}` is replaced by "o" or "a".
const GENDERED_FILLERS: [&str; 3] = [
    "Acude acompañad{} por su pareja a la consulta.",
    "Se encuentra más calmad{} tras la intervención inicial.",
    "Impresiona de estar desbordad{} por la situación actual.",
];

#[derive(Clone, Copy, PartialEq)]
enum NoteGender {
    Female,
    Male,
    Unknown,
}

impl NoteGender {
    fn ending(self) -> &'static str {
        match self {
            NoteGender::Female => "a",
            NoteGender::Male => "o",
            NoteGender::Unknown => "",
        }
    }
}

fn sample_gender(rng: &mut ChaCha8Rng) -> NoteGender {
    // roughly the study's split: 61% women, 34% men, 5% unrecorded
    let u: f64 = rng.random();
    if u < 0.61 {
        NoteGender::Female
    } else if u < 0.952 {
        NoteGender::Male
    } else {
        NoteGender::Unknown
    }
}

fn sample_age(rng: &mut ChaCha8Rng) -> u8 {
    // sum of 12 uniforms approximates a normal with mean 6, sd 1
    let irwin_hall: f64 = (0..12).map(|_| rng.random::<f64>()).sum();
    let age = 43.0 + 17.0 * (irwin_hall - 6.0);
    age.round().clamp(18.0, 90.0) as u8
}

fn opening(rng: &mut ChaCha8Rng, gender: NoteGender, age: Option<u8>) -> String {
    let chief = *CHIEF_COMPLAINTS.choose(rng).expect("non-empty pool");
    match (gender, age) {
        (NoteGender::Female, Some(age)) => match rng.random_range(0..3) {
            0 => format!("Mujer de {age} años que acude a consulta por {chief}."),
            1 => format!("Mujer casada de {age} años que consulta por {chief}."),
            _ => format!("Paciente viuda de {age} años derivada por {chief}."),
        },
        (NoteGender::Male, Some(age)) => match rng.random_range(0..3) {
            0 => format!("Varón de {age} años que acude a consulta por {chief}."),
            1 => format!("Hombre de {age} años remitido desde atención primaria por {chief}."),
            _ => format!("Paciente casado de {age} años que consulta por {chief}."),
        },
        (NoteGender::Female, None) => {
            format!("Paciente derivada a salud mental por {chief}.")
        }
        (NoteGender::Male, None) => {
            format!("Paciente derivado a salud mental por {chief}.")
        }
        (NoteGender::Unknown, Some(age)) => {
            format!("Paciente de {age} años de edad que consulta por {chief}.")
        }
        (NoteGender::Unknown, None) => format!("Acude a consulta por {chief}."),
    }
}

fn keyword_pool(label: Label, faithful: bool) -> &'static [&'static str] {
    match (label, faithful) {
        (Label::F41Anxiety, true) | (Label::F43Adjustment, false) => &F41_KEYWORDS,
        (Label::F43Adjustment, true) | (Label::F41Anxiety, false) => &F43_KEYWORDS,
    }
}

fn diagnosis_pool(label: Label, faithful: bool) -> &'static [&'static str] {
    match (label, faithful) {
        (Label::F41Anxiety, true) | (Label::F43Adjustment, false) => &F41_DIAGNOSES,
        (Label::F43Adjustment, true) | (Label::F41Anxiety, false) => &F43_DIAGNOSES,
    }
}

fn fill_template(template: &str, value: &str) -> String {
    template.replacen("{}", value, 1)
}

fn generate_note_text(rng: &mut ChaCha8Rng, label: Label, params: &SurrogateParams) -> String {
    let gender = sample_gender(rng);
    let age = if rng.random::<f64>() < 0.92 { Some(sample_age(rng)) } else { None };
    let mut sentences = vec![opening(rng, gender, age)];

    for _ in 0..params.keyword_slots {
        let faithful = rng.random::<f64>() < params.keyword_fidelity;
        let phrase = *keyword_pool(label, faithful).choose(rng).expect("non-empty pool");
        let template = *KEYWORD_TEMPLATES.choose(rng).expect("non-empty pool");
        sentences.push(fill_template(template, phrase));
    }

    let faithful = rng.random::<f64>() < params.keyword_fidelity;
    let dx = *diagnosis_pool(label, faithful).choose(rng).expect("non-empty pool");
    let template = *ASSESSMENT_TEMPLATES.choose(rng).expect("non-empty pool");
    sentences.push(fill_template(template, dx));
    sentences.push((*PLANS.choose(rng).expect("non-empty pool")).to_string());

    let mut text = sentences.join(" ");
    while text.chars().count() < params.min_chars {
        // gendered fillers would leak a gender into unknown-gender notes
        let filler = if gender == NoteGender::Unknown || rng.random_range(0..4) > 0 {
            (*NEUTRAL_FILLERS.choose(rng).expect("non-empty pool")).to_string()
        } else {
            fill_template(GENDERED_FILLERS.choose(rng).expect("non-empty pool"), gender.ending())
        };
        text.push(' ');
        text.push_str(&filler);
    }
    text
}

/// Generates the synthetic corpus as on-disk records (id, text, label).
/// Demographics live in the text, where the extraction pass finds them.
/// Deterministic: the same parameters always produce identical records.
pub fn generate_records(params: &SurrogateParams) -> Result<Vec<NoteRecord>, SurrogateError> {
    params.validate()?;
    let mut labels = vec![Label::F41Anxiety; params.n_f41];
    labels.extend(std::iter::repeat_n(Label::F43Adjustment, params.n_f43));
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive(params.seed, 0, 0));
    use rand::seq::SliceRandom;
    labels.shuffle(&mut order_rng);

    let width = labels.len().to_string().len().max(3);
    let mut records = Vec::with_capacity(labels.len());
    for (i, label) in labels.into_iter().enumerate() {
        let mut note_rng = ChaCha8Rng::seed_from_u64(derive(params.seed, i as u64 + 1, 1));
        let text = generate_note_text(&mut note_rng, label, params);
        records.push(NoteRecord {
            id: format!("sn-{:0width$}", i + 1),
            text,
            label: Some(label),
            age: None,
            gender: None,
            tokens: None,
        });
    }
    Ok(records)
}

/// Generates the corpus in memory with demographics already extracted from
/// each note's text.
pub fn generate_corpus(params: &SurrogateParams) -> Result<Corpus, SurrogateError> {
    let records = generate_records(params)?;
    let mut notes = Vec::with_capacity(records.len());
    for record in records {
        notes.push(LabeledNote {
            demographics: extract_demographics(&record.text),
            note: ClinicalNote::new(record.id, record.text)?,
            label: record.label.expect("generator always labels"),
        });
    }
    Ok(Corpus::from_notes(notes)?)
}
