//! Few-shot diagnosis extraction: prompt assembly, `DX @@ … ##` response
//! parsing, rule-based normalization of free-text diagnoses to F41/F43, and
//! a pluggable transport with retries plus an offline stub implementation.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::preprocess::normalize;

/// Default role message: an entity-extraction linguist with psychiatric
/// domain expertise.
pub const DEFAULT_ROLE_TEXT: &str = "You are an assistant and a linguist specialized in \
identifying entities within text. You are a leading expert in psychiatry, and I need your \
help with a very important task in medicine.";

/// Default task message. The upstream protocol describes the task/instruction
/// block only by shape, so this text is a reconstruction following that shape:
/// state the objective, then break the work into small numbered steps.
pub const DEFAULT_TASK_TEXT: &str = "TASK: Extract the diagnoses mentioned in the clinical \
note.\nINSTRUCTIONS:\n1. Read the clinical note carefully.\n2. Identify every diagnosis \
given to the patient, ignoring symptoms and family history.\n3. Label each extraction with \
DX, marking the start of the extraction with @@ and the end with ##.\n4. Answer only with \
the labeled extractions.\n5. If the note contains no diagnosis, answer with an empty line.";

/// Default worked-example answer demonstrating the `DX @@ … ##` convention.
pub const DEFAULT_EXAMPLE_ANSWER: &str =
    "DX @@ Ansiedad reactiva, Síndrome ansioso-depresivo ##";

/// Default conversational context budget, in tokens.
pub const DEFAULT_CONTEXT_TOKENS: usize = 32_000;

/// Documented estimation heuristic: one token per four characters.
pub const CHARS_PER_TOKEN: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum DxError {
    #[error("{field} must be non-empty")]
    EmptyField { field: &'static str },
    #[error("prompt needs about {estimated} tokens but the budget is {budget}")]
    BudgetExceeded { estimated: usize, budget: usize },
    #[error("malformed annotation at byte {offset}: {detail}")]
    MalformedAnnotation { offset: usize, detail: String },
    #[error("transport failed after {attempts} attempt(s): {message}")]
    TransportFailed { attempts: u32, message: String },
    #[error("bad response for note {note_id:?}: {detail}; raw text: {raw:?}")]
    BadResponse { note_id: String, detail: String, raw: String },
    #[error("rule table is not valid JSON: {0}")]
    Format(String),
    #[error("rule pattern {pattern:?} must be non-empty, normalized text")]
    BadRule { pattern: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Chat role of one prompt message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role_tag: RoleTag,
    pub content: String,
}

/// An ordered chat prompt. Serialized as a bare array of messages.
///
/// Invariants: non-empty; exactly one `system` message and it comes first;
/// no message is blank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Message>", into = "Vec<Message>")]
pub struct PromptSequence {
    messages: Vec<Message>,
}

impl PromptSequence {
    pub fn new(messages: Vec<Message>) -> Result<PromptSequence, DxError> {
        if messages.is_empty() {
            return Err(DxError::EmptyField { field: "messages" });
        }
        if messages[0].role_tag != RoleTag::System {
            return Err(DxError::EmptyField { field: "leading system message" });
        }
        for (i, message) in messages.iter().enumerate() {
            if message.content.trim().is_empty() {
                return Err(DxError::EmptyField { field: "message content" });
            }
            if i > 0 && message.role_tag == RoleTag::System {
                return Err(DxError::EmptyField { field: "single system message" });
            }
        }
        Ok(PromptSequence { messages })
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    /// Estimated token count: total characters at four characters per
    /// token, rounded up.
    pub fn estimated_tokens(&self) -> usize {
        let chars: usize = self.messages.iter().map(|m| m.content.chars().count()).sum();
        chars.div_ceil(CHARS_PER_TOKEN)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prompt serializes")
    }
}

impl TryFrom<Vec<Message>> for PromptSequence {
    type Error = DxError;

    fn try_from(messages: Vec<Message>) -> Result<Self, Self::Error> {
        PromptSequence::new(messages)
    }
}

impl From<PromptSequence> for Vec<Message> {
    fn from(prompt: PromptSequence) -> Vec<Message> {
        prompt.messages
    }
}

fn require_non_empty(field: &'static str, value: &str) -> Result<(), DxError> {
    if value.trim().is_empty() {
        Err(DxError::EmptyField { field })
    } else {
        Ok(())
    }
}

/// Builds the five-part few-shot prompt: role, task, worked-example note,
/// worked-example answer, query note. Uses [`DEFAULT_CONTEXT_TOKENS`] as the
/// budget; see [`build_prompt_with_budget`] to override it.
///
/// Pure: identical inputs always produce byte-identical output.
pub fn build_prompt(
    example_note: &str,
    example_answer: &str,
    query_note: &str,
    role_text: &str,
    task_text: &str,
) -> Result<PromptSequence, DxError> {
    build_prompt_with_budget(
        example_note,
        example_answer,
        query_note,
        role_text,
        task_text,
        DEFAULT_CONTEXT_TOKENS,
    )
}

pub fn build_prompt_with_budget(
    example_note: &str,
    example_answer: &str,
    query_note: &str,
    role_text: &str,
    task_text: &str,
    budget_tokens: usize,
) -> Result<PromptSequence, DxError> {
    require_non_empty("example_note", example_note)?;
    require_non_empty("example_answer", example_answer)?;
    require_non_empty("query_note", query_note)?;
    require_non_empty("role_text", role_text)?;
    require_non_empty("task_text", task_text)?;
    let prompt = PromptSequence::new(vec![
        Message { role_tag: RoleTag::System, content: role_text.to_string() },
        Message { role_tag: RoleTag::User, content: task_text.to_string() },
        Message { role_tag: RoleTag::User, content: example_note.to_string() },
        Message { role_tag: RoleTag::Assistant, content: example_answer.to_string() },
        Message { role_tag: RoleTag::User, content: query_note.to_string() },
    ])?;
    let estimated = prompt.estimated_tokens();
    if estimated > budget_tokens {
        return Err(DxError::BudgetExceeded { estimated, budget: budget_tokens });
    }
    Ok(prompt)
}

/// Diagnosis spans extracted from one response.
///
/// Invariant: every span is non-empty after trimming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DxAnnotation {
    note_id: String,
    raw_spans: Vec<String>,
}

impl DxAnnotation {
    pub fn new(
        note_id: impl Into<String>,
        raw_spans: Vec<String>,
    ) -> Result<DxAnnotation, DxError> {
        for span in &raw_spans {
            if span.trim().is_empty() {
                return Err(DxError::EmptyField { field: "annotation span" });
            }
        }
        Ok(DxAnnotation { note_id: note_id.into(), raw_spans })
    }

    pub fn note_id(&self) -> &str {
        &self.note_id
    }

    pub fn raw_spans(&self) -> &[String] {
        &self.raw_spans
    }

    pub fn is_empty(&self) -> bool {
        self.raw_spans.is_empty()
    }

    pub fn with_note_id(mut self, note_id: impl Into<String>) -> DxAnnotation {
        self.note_id = note_id.into();
        self
    }

    /// Renders the spans back into response text, one `DX @@ … ##` block
    /// per span separated by single spaces. Parsing the result recovers the
    /// spans exactly as long as no span contains the `@@`/`##` markers.
    pub fn to_response_text(&self) -> String {
        self.raw_spans
            .iter()
            .map(|span| format!("DX @@ {span} ##"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// True when the text before `offset` ends with a standalone `DX` token.
fn preceded_by_dx_token(text: &str, offset: usize) -> bool {
    let head = text[..offset].trim_end();
    head.ends_with("DX")
        && head[..head.len() - 2]
            .chars()
            .next_back()
            .is_none_or(|c| c.is_whitespace())
}

/// Scans `text` left to right for `DX`-labeled `@@ … ##` spans and returns
/// their trimmed contents in order of appearance. The note id is left empty;
/// attach one with [`DxAnnotation::with_note_id`].
///
/// Any `@@` without a closing `##` after it is an error reporting the byte
/// offset of the `@@`, as is a span that trims to nothing. An `@@ … ##`
/// group without the `DX` label is skipped. Zero spans is a valid outcome.
pub fn parse_dx_response(text: &str) -> Result<DxAnnotation, DxError> {
    let mut spans = Vec::new();
    let mut cursor = 0usize;
    while let Some(open_rel) = text[cursor..].find("@@") {
        let open = cursor + open_rel;
        let body_start = open + 2;
        let Some(close_rel) = text[body_start..].find("##") else {
            return Err(DxError::MalformedAnnotation {
                offset: open,
                detail: "'@@' without a matching '##'".to_string(),
            });
        };
        let close = body_start + close_rel;
        if preceded_by_dx_token(text, open) {
            let span = text[body_start..close].trim();
            if span.is_empty() {
                return Err(DxError::MalformedAnnotation {
                    offset: open,
                    detail: "annotation span is empty".to_string(),
                });
            }
            spans.push(span.to_string());
        }
        cursor = close + 2;
    }
    DxAnnotation::new("", spans)
}

/// Three-way diagnosis classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosisClass {
    #[serde(rename = "f41")]
    F41Anxiety,
    #[serde(rename = "f43")]
    F43Adjustment,
    #[serde(rename = "other")]
    Other,
}

impl DiagnosisClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosisClass::F41Anxiety => "f41",
            DiagnosisClass::F43Adjustment => "f43",
            DiagnosisClass::Other => "other",
        }
    }

    /// The corpus label this class maps to, when it maps to one.
    pub fn label(self) -> Option<Label> {
        match self {
            DiagnosisClass::F41Anxiety => Some(Label::F41Anxiety),
            DiagnosisClass::F43Adjustment => Some(Label::F43Adjustment),
            DiagnosisClass::Other => None,
        }
    }
}

impl std::fmt::Display for DiagnosisClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One normalization rule: a normalized substring and the class it implies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DxRule {
    pub pattern: String,
    pub class: DiagnosisClass,
}

const BUNDLED_RULES: &str = include_str!("../data/dx_rules.json");

/// Ordered rule table mapping diagnosis phrasings to classes. Earlier rules
/// win, so specific phrases must precede generic fallbacks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    rules: Vec<DxRule>,
}

impl RuleTable {
    /// Parses an ordered JSON array of `{"pattern", "class"}` objects.
    /// Patterns must already be in normalized form (lowercase, unaccented).
    pub fn from_json(data: &str) -> Result<RuleTable, DxError> {
        let rules: Vec<DxRule> =
            serde_json::from_str(data).map_err(|e| DxError::Format(e.to_string()))?;
        for rule in &rules {
            if rule.pattern.is_empty() || normalize(&rule.pattern) != rule.pattern {
                return Err(DxError::BadRule { pattern: rule.pattern.clone() });
            }
        }
        Ok(RuleTable { rules })
    }

    pub fn load(path: &std::path::Path) -> Result<RuleTable, DxError> {
        RuleTable::from_json(&std::fs::read_to_string(path)?)
    }

    /// The built-in table: specific F41 phrasings first, then F43
    /// phrasings, then bare anxiety words as a last resort.
    pub fn bundled() -> &'static RuleTable {
        static TABLE: OnceLock<RuleTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            RuleTable::from_json(BUNDLED_RULES).expect("bundled rule table is valid")
        })
    }

    pub fn rules(&self) -> &[DxRule] {
        &self.rules
    }

    /// Normalizes `span` and returns the class of the first rule whose
    /// pattern occurs in it; `Other` when nothing matches.
    pub fn classify(&self, span: &str) -> DiagnosisClass {
        let normalized = normalize(span);
        for rule in &self.rules {
            if normalized.contains(&rule.pattern) {
                return rule.class;
            }
        }
        DiagnosisClass::Other
    }
}

/// Classifies a free-text diagnosis span with the bundled rule table.
/// Case- and accent-insensitive because the span is normalized first.
pub fn normalize_diagnosis(span: &str) -> DiagnosisClass {
    RuleTable::bundled().classify(span)
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    /// Worth retrying: timeouts, throttling, transient service errors.
    #[error("transient transport failure: {0}")]
    Transient(String),
    /// Not worth retrying: bad configuration, authentication, missing data.
    #[error("permanent transport failure: {0}")]
    Permanent(String),
}

/// Anything that can take a prompt for a note and produce response text.
/// Implementations must be safe to call concurrently for distinct notes.
pub trait Transport: Send + Sync {
    fn send(&self, note_id: &str, prompt: &PromptSequence) -> Result<String, TransportError>;
}

/// Retry budget for transient transport failures, with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> RetryPolicy {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; for tests and offline stubs.
    pub fn immediate(max_retries: u32) -> RetryPolicy {
        RetryPolicy { max_retries, base_delay: Duration::ZERO }
    }

    fn delay_before_attempt(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << retry.min(16))
    }
}

/// Sends `prompt` through `transport`, retrying transient failures per
/// `retry` with exponential backoff, and parses the response into an
/// annotation carrying `note_id`. Parse failures are not retried; they come
/// back as [`DxError::BadResponse`] with the raw text attached.
pub fn extract_with_transport(
    transport: &dyn Transport,
    note_id: &str,
    prompt: &PromptSequence,
    retry: &RetryPolicy,
) -> Result<DxAnnotation, DxError> {
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        match transport.send(note_id, prompt) {
            Ok(raw) => {
                return match parse_dx_response(&raw) {
                    Ok(annotation) => Ok(annotation.with_note_id(note_id)),
                    Err(e) => Err(DxError::BadResponse {
                        note_id: note_id.to_string(),
                        detail: e.to_string(),
                        raw,
                    }),
                };
            }
            Err(TransportError::Transient(message)) => {
                if attempts > retry.max_retries {
                    return Err(DxError::TransportFailed { attempts, message });
                }
                let delay = retry.delay_before_attempt(attempts - 1);
                log::warn!(
                    "transient transport failure for note {note_id} \
                     (attempt {attempts}, retrying in {delay:?}): {message}"
                );
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
            }
            Err(TransportError::Permanent(message)) => {
                return Err(DxError::TransportFailed { attempts, message });
            }
        }
    }
}

/// Offline transport returning canned responses keyed by note id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StubTransport {
    responses: BTreeMap<String, String>,
}

impl StubTransport {
    pub fn new() -> StubTransport {
        StubTransport::default()
    }

    /// Parses a fixture: a JSON object mapping note id → response text.
    pub fn from_json(data: &str) -> Result<StubTransport, DxError> {
        let responses: BTreeMap<String, String> =
            serde_json::from_str(data).map_err(|e| DxError::Format(e.to_string()))?;
        Ok(StubTransport { responses })
    }

    pub fn load(path: &std::path::Path) -> Result<StubTransport, DxError> {
        StubTransport::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, note_id: impl Into<String>, response: impl Into<String>) {
        self.responses.insert(note_id.into(), response.into());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Transport for StubTransport {
    fn send(&self, note_id: &str, _prompt: &PromptSequence) -> Result<String, TransportError> {
        self.responses
            .get(note_id)
            .cloned()
            .ok_or_else(|| {
                TransportError::Permanent(format!("no canned response for note {note_id:?}"))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicU32, Ordering};

    const EXAMPLE_SPAN: &str = "Ansiedad reactiva, Síndrome ansioso-depresivo";

    #[test]
    fn parses_the_reference_answer() {
        let annotation = parse_dx_response(DEFAULT_EXAMPLE_ANSWER).unwrap();
        assert_eq!(annotation.raw_spans(), [EXAMPLE_SPAN]);
    }

    #[test]
    fn absence_of_spans_is_valid() {
        let annotation = parse_dx_response("no diagnosis found").unwrap();
        assert!(annotation.is_empty());
    }

    #[test]
    fn parses_multiple_spans_in_order() {
        let annotation = parse_dx_response("DX @@ a ## text DX @@ b ##").unwrap();
        assert_eq!(annotation.raw_spans(), ["a", "b"]);
    }

    #[test]
    fn unlabeled_groups_are_skipped() {
        let annotation =
            parse_dx_response("see @@ note ## then DX @@ ansiedad ##").unwrap();
        assert_eq!(annotation.raw_spans(), ["ansiedad"]);
        // "DX" must be a standalone token, not a suffix of a longer word
        let gretel = parse_dx_response("INDX @@ x ##").unwrap();
        assert!(gretel.is_empty());
    }

    #[test]
    fn unmatched_open_marker_reports_byte_offset() {
        match parse_dx_response("@@ x") {
            Err(DxError::MalformedAnnotation { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected malformed annotation, got {other:?}"),
        }
        match parse_dx_response("text DX @@ x") {
            Err(DxError::MalformedAnnotation { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("expected malformed annotation, got {other:?}"),
        }
        // offsets are bytes, not characters: 'á' is two bytes long
        match parse_dx_response("á @@ x") {
            Err(DxError::MalformedAnnotation { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("expected malformed annotation, got {other:?}"),
        }
    }

    #[test]
    fn empty_span_is_malformed() {
        match parse_dx_response("DX @@   ##") {
            Err(DxError::MalformedAnnotation { offset, detail }) => {
                assert_eq!(offset, 3);
                assert!(detail.contains("empty"));
            }
            other => panic!("expected malformed annotation, got {other:?}"),
        }
    }

    #[test]
    fn annotation_rejects_blank_spans() {
        assert!(DxAnnotation::new("n1", vec!["ok".into(), "  ".into()]).is_err());
        let annotation = DxAnnotation::new("n1", vec!["ok".into()]).unwrap();
        assert_eq!(annotation.note_id(), "n1");
    }

    fn random_span(rng: &mut ChaCha8Rng) -> String {
        const ALPHABET: [char; 44] = [
            'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p',
            'q', 'r', 's', 't', 'u', 'v', 'w', 'x', 'y', 'z', 'á', 'é', 'í', 'ó', 'ú', 'ñ',
            'A', 'Z', '0', '9', ',', '.', '-', '(', ')', ';', ':', '\'',
        ];
        loop {
            let len = rng.random_range(1..40);
            let mut span = String::new();
            for i in 0..len {
                // interior spaces only, so the span is trim-stable
                if i > 0 && i + 1 < len && rng.random_range(0..5) == 0 {
                    span.push(' ');
                } else {
                    span.push(ALPHABET[rng.random_range(0..ALPHABET.len())]);
                }
            }
            if !span.trim().is_empty() {
                return span.trim().to_string();
            }
        }
    }

    #[test]
    fn embed_then_parse_round_trips_random_span_lists() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..300 {
            let spans: Vec<String> =
                (0..rng.random_range(0..8)).map(|_| random_span(&mut rng)).collect();
            let annotation = DxAnnotation::new("probe", spans.clone()).unwrap();
            let parsed = parse_dx_response(&annotation.to_response_text()).unwrap();
            assert_eq!(parsed.raw_spans(), spans.as_slice());
        }
    }

    #[test]
    fn prompt_has_the_five_part_structure() {
        let prompt = build_prompt(
            "nota uno",
            DEFAULT_EXAMPLE_ANSWER,
            "nota dos",
            DEFAULT_ROLE_TEXT,
            DEFAULT_TASK_TEXT,
        )
        .unwrap();
        let messages = prompt.messages();
        assert_eq!(messages.len(), 5);
        let roles: Vec<RoleTag> = messages.iter().map(|m| m.role_tag).collect();
        assert_eq!(
            roles,
            [RoleTag::System, RoleTag::User, RoleTag::User, RoleTag::Assistant, RoleTag::User]
        );
        assert_eq!(messages[0].content, DEFAULT_ROLE_TEXT);
        assert_eq!(messages[1].content, DEFAULT_TASK_TEXT);
        assert_eq!(messages[2].content, "nota uno");
        assert_eq!(messages[3].content, DEFAULT_EXAMPLE_ANSWER);
        assert_eq!(messages[4].content, "nota dos");
    }

    #[test]
    fn default_role_text_names_the_expected_expertise() {
        assert!(DEFAULT_ROLE_TEXT
            .starts_with("You are an assistant and a linguist specialized in identifying entities"));
        assert_eq!(
            DEFAULT_EXAMPLE_ANSWER,
            "DX @@ Ansiedad reactiva, Síndrome ansioso-depresivo ##"
        );
    }

    #[test]
    fn prompt_building_is_pure() {
        let build = || {
            build_prompt("n1", "DX @@ x ##", "n2", "role", "task").unwrap().to_json()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn prompt_round_trips_through_json_as_message_array() {
        let prompt = build_prompt("n1", "DX @@ x ##", "n2", "role", "task").unwrap();
        let json = prompt.to_json();
        assert!(json.trim_start().starts_with('['), "serializes as a bare array");
        let parsed: PromptSequence = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, prompt);
        // deserialization enforces the invariants too
        let bad = r#"[{"role_tag": "user", "content": "no system lead"}]"#;
        assert!(serde_json::from_str::<PromptSequence>(bad).is_err());
    }

    #[test]
    fn empty_arguments_are_rejected() {
        for i in 0..5 {
            let mut args = ["n1", "a", "n2", "r", "t"];
            args[i] = "  ";
            assert!(
                matches!(
                    build_prompt(args[0], args[1], args[2], args[3], args[4]),
                    Err(DxError::EmptyField { .. })
                ),
                "argument {i} blank should fail"
            );
        }
    }

    #[test]
    fn token_estimate_is_chars_over_four_rounded_up() {
        // 2 + 3 + 4 + 5 + 7 = 21 chars -> ceil(21/4) = 6 tokens
        let prompt = build_prompt("abc", "defg", "hijkl", "mn", "opqrstu").unwrap();
        assert_eq!(prompt.estimated_tokens(), 6);
        // multibyte characters still count once each
        let accented = build_prompt("ááá", "DX @@ x ##", "ñññ", "r", "t").unwrap();
        let chars: usize = 3 + 10 + 3 + 1 + 1;
        assert_eq!(accented.estimated_tokens(), chars.div_ceil(4));
    }

    #[test]
    fn budget_overflow_reports_both_numbers() {
        let err = build_prompt_with_budget("abc", "defg", "hijkl", "mn", "opqrstu", 5)
            .unwrap_err();
        match err {
            DxError::BudgetExceeded { estimated, budget } => {
                assert_eq!(estimated, 6);
                assert_eq!(budget, 5);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
        assert!(build_prompt_with_budget("abc", "defg", "hijkl", "mn", "opqrstu", 6).is_ok());
    }

    #[test]
    fn anchored_normalization_examples() {
        assert_eq!(
            normalize_diagnosis("Trastorno de ansiedad generalizada"),
            DiagnosisClass::F41Anxiety
        );
        assert_eq!(normalize_diagnosis("trastorno adaptativo"), DiagnosisClass::F43Adjustment);
        assert_eq!(normalize_diagnosis("esquizofrenia"), DiagnosisClass::Other);
    }

    #[test]
    fn normalization_is_case_and_accent_insensitive() {
        for span in [
            "TRASTORNO ADAPTATIVO",
            "Trastorno Adaptativo",
            "trastorno adaptátivo",
        ] {
            assert_eq!(normalize_diagnosis(span), DiagnosisClass::F43Adjustment, "{span}");
        }
        assert_eq!(
            normalize_diagnosis("Síndrome ansioso-depresivo"),
            DiagnosisClass::F41Anxiety
        );
        assert_eq!(normalize_diagnosis(EXAMPLE_SPAN), DiagnosisClass::F41Anxiety);
    }

    #[test]
    fn earlier_rules_beat_later_fallbacks() {
        // the f43 phrase rule precedes the bare-anxiety fallback rules
        assert_eq!(
            normalize_diagnosis("trastorno adaptativo con ansiedad"),
            DiagnosisClass::F43Adjustment
        );
        assert_eq!(normalize_diagnosis("ansiedad"), DiagnosisClass::F41Anxiety);
    }

    #[test]
    fn bundled_rule_table_is_well_formed() {
        let table = RuleTable::bundled();
        assert!(table.rules().len() >= 10);
        let mut seen_f41 = false;
        let mut seen_f43 = false;
        for rule in table.rules() {
            assert_eq!(rule.pattern, normalize(&rule.pattern), "{:?}", rule.pattern);
            match rule.class {
                DiagnosisClass::F41Anxiety => seen_f41 = true,
                DiagnosisClass::F43Adjustment => seen_f43 = true,
                DiagnosisClass::Other => {}
            }
        }
        assert!(seen_f41 && seen_f43);
    }

    #[test]
    fn rule_table_rejects_unnormalized_or_empty_patterns() {
        assert!(matches!(
            RuleTable::from_json(r#"[{"pattern": "Ansiedad", "class": "f41"}]"#),
            Err(DxError::BadRule { .. })
        ));
        assert!(matches!(
            RuleTable::from_json(r#"[{"pattern": "", "class": "f43"}]"#),
            Err(DxError::BadRule { .. })
        ));
        assert!(RuleTable::from_json("{}").is_err());
        let table = RuleTable::from_json(r#"[{"pattern": "x", "class": "other"}]"#).unwrap();
        assert_eq!(table.classify("x"), DiagnosisClass::Other);
    }

    fn probe_prompt() -> PromptSequence {
        build_prompt("nota uno", DEFAULT_EXAMPLE_ANSWER, "nota dos", "role", "task").unwrap()
    }

    #[test]
    fn stub_transport_round_trip() {
        let stub =
            StubTransport::from_json(r#"{"note_7": "DX @@ ansiedad ##"}"#).unwrap();
        let annotation = extract_with_transport(
            &stub,
            "note_7",
            &probe_prompt(),
            &RetryPolicy::immediate(0),
        )
        .unwrap();
        assert_eq!(annotation.note_id(), "note_7");
        assert_eq!(annotation.raw_spans(), ["ansiedad"]);
    }

    #[test]
    fn stub_without_the_note_fails_permanently() {
        let stub = StubTransport::new();
        match extract_with_transport(&stub, "ghost", &probe_prompt(), &RetryPolicy::immediate(5))
        {
            Err(DxError::TransportFailed { attempts, message }) => {
                assert_eq!(attempts, 1, "permanent failures are not retried");
                assert!(message.contains("ghost"));
            }
            other => panic!("expected transport failure, got {other:?}"),
        }
    }

    /// Fails with a transient error a fixed number of times, then delegates.
    struct FlakyTransport {
        failures: u32,
        calls: AtomicU32,
        inner: StubTransport,
    }

    impl Transport for FlakyTransport {
        fn send(
            &self,
            note_id: &str,
            prompt: &PromptSequence,
        ) -> Result<String, TransportError> {
            let call = self.calls.fetch_add(1, Ordering::SeqCst);
            if call < self.failures {
                Err(TransportError::Transient(format!("flake {call}")))
            } else {
                self.inner.send(note_id, prompt)
            }
        }
    }

    #[test]
    fn transient_failures_are_retried_to_success() {
        let mut inner = StubTransport::new();
        inner.insert("n", "DX @@ trastorno adaptativo ##");
        let flaky = FlakyTransport { failures: 2, calls: AtomicU32::new(0), inner };
        let annotation =
            extract_with_transport(&flaky, "n", &probe_prompt(), &RetryPolicy::immediate(3))
                .unwrap();
        assert_eq!(annotation.raw_spans(), ["trastorno adaptativo"]);
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3, "two retries after first attempt");
    }

    #[test]
    fn retries_exhaust_into_transport_failure() {
        let flaky = FlakyTransport {
            failures: u32::MAX,
            calls: AtomicU32::new(0),
            inner: StubTransport::new(),
        };
        match extract_with_transport(&flaky, "n", &probe_prompt(), &RetryPolicy::immediate(2)) {
            Err(DxError::TransportFailed { attempts, .. }) => {
                assert_eq!(attempts, 3, "one initial try plus two retries");
            }
            other => panic!("expected transport failure, got {other:?}"),
        }
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn malformed_stub_response_surfaces_raw_text() {
        let mut stub = StubTransport::new();
        stub.insert("n", "@@ x");
        match extract_with_transport(&stub, "n", &probe_prompt(), &RetryPolicy::immediate(3)) {
            Err(DxError::BadResponse { note_id, detail, raw }) => {
                assert_eq!(note_id, "n");
                assert!(detail.contains("byte 0"));
                assert_eq!(raw, "@@ x");
            }
            other => panic!("expected bad response, got {other:?}"),
        }
    }

    #[test]
    fn backoff_grows_exponentially() {
        let policy = RetryPolicy { max_retries: 4, base_delay: Duration::from_millis(10) };
        assert_eq!(policy.delay_before_attempt(0), Duration::from_millis(10));
        assert_eq!(policy.delay_before_attempt(1), Duration::from_millis(20));
        assert_eq!(policy.delay_before_attempt(2), Duration::from_millis(40));
        assert_eq!(RetryPolicy::default().max_retries, 3);
    }

    #[test]
    fn diagnosis_class_maps_to_labels() {
        assert_eq!(DiagnosisClass::F41Anxiety.label(), Some(Label::F41Anxiety));
        assert_eq!(DiagnosisClass::F43Adjustment.label(), Some(Label::F43Adjustment));
        assert_eq!(DiagnosisClass::Other.label(), None);
        assert_eq!(DiagnosisClass::Other.to_string(), "other");
    }
}
