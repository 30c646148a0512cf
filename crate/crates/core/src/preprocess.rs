//! Text normalization for Spanish clinical notes: lowercasing, accent
//! stripping, tokenization, stopword removal with clinical retentions, and
//! lexicon-driven lemmatization with suffix-rule fallback.
//!
//! Everything here is pure and deterministic; the stopword list and lemma
//! lexicon load once and are shareable across threads.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read};
use std::sync::OnceLock;

use thiserror::Error;

use crate::corpus::ClinicalNote;

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const BUNDLED_RETAINED: &str = include_str!("../data/retained_terms.txt");
const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    BadEntry { line: usize, message: String },
}

/// Lowercases, strips the Spanish accents (á é í ó ú ü), keeps ñ, digits and
/// ASCII letters, maps everything else to a space, and collapses whitespace.
/// Idempotent. Combining diacritics (U+0300..U+036F) are dropped so
/// decomposed input behaves like precomposed input for the plain vowels.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        for lc in c.to_lowercase() {
            let mapped = match lc {
                'á' => 'a',
                'é' => 'e',
                'í' => 'i',
                'ó' => 'o',
                'ú' | 'ü' => 'u',
                other => other,
            };
            if mapped.is_ascii_lowercase() || mapped.is_ascii_digit() || mapped == 'ñ' {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(mapped);
            } else if ('\u{0300}'..='\u{036F}').contains(&mapped) {
                // combining mark: drop silently
            } else {
                pending_space = true;
            }
        }
    }
    out
}

/// Splits normalized text on whitespace. Never yields empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Spanish function words to drop, minus clinical terms that must survive.
///
/// Both lists come from data files (one token per line, `#` comments); all
/// entries are normalized on load and the retained overrides are subtracted
/// from the entries so the two sets are disjoint by construction.
#[derive(Debug, Clone)]
pub struct StopwordList {
    entries: HashSet<String>,
    retained: HashSet<String>,
}

fn parse_word_file<R: Read>(reader: R) -> Result<HashSet<String>, PreprocessError> {
    let mut words = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let entry = line.split('#').next().unwrap_or("").trim();
        if entry.is_empty() {
            continue;
        }
        let norm = normalize(entry);
        if norm.is_empty() || norm.contains(' ') {
            return Err(PreprocessError::BadEntry {
                line: idx + 1,
                message: format!("expected a single token, got {entry:?}"),
            });
        }
        words.insert(norm);
    }
    Ok(words)
}

impl StopwordList {
    pub fn from_readers<R1: Read, R2: Read>(
        stopwords: R1,
        retained: R2,
    ) -> Result<Self, PreprocessError> {
        let mut entries = parse_word_file(stopwords)?;
        let retained = parse_word_file(retained)?;
        for word in &retained {
            entries.remove(word);
        }
        Ok(StopwordList { entries, retained })
    }

    pub fn from_strs(stopwords: &str, retained: &str) -> Result<Self, PreprocessError> {
        Self::from_readers(stopwords.as_bytes(), retained.as_bytes())
    }

    /// The list shipped with the crate (~300 function words, clinical
    /// retentions subtracted).
    pub fn bundled() -> &'static StopwordList {
        static LIST: OnceLock<StopwordList> = OnceLock::new();
        LIST.get_or_init(|| {
            StopwordList::from_strs(BUNDLED_STOPWORDS, BUNDLED_RETAINED)
                .expect("bundled stopword data parses")
        })
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.entries.contains(token)
    }

    pub fn is_retained(&self, token: &str) -> bool {
        self.retained.contains(token)
    }

    pub fn entries(&self) -> &HashSet<String> {
        &self.entries
    }
}

/// Drops stopwords, preserving token order.
pub fn remove_stopwords(tokens: &[String], list: &StopwordList) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !list.is_stopword(t))
        .cloned()
        .collect()
}

/// Surface-form to lemma table with ordered suffix-strip fallback rules.
///
/// The table carries the corpus's frequent word forms; the rules are a coarse
/// net for unseen inflections (consistency of the mapping matters more here
/// than linguistic perfection). A rule `-suffix<TAB>replacement` applies to a
/// token ending in `suffix` whose remaining stem keeps at least 2 characters;
/// the first applicable rule wins and rules never re-apply.
#[derive(Debug, Clone)]
pub struct LemmaLexicon {
    map: HashMap<String, String>,
    suffix_rules: Vec<(String, String)>,
}

impl LemmaLexicon {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, PreprocessError> {
        let mut map = HashMap::new();
        let mut suffix_rules = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let content = line.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let (left, right) = match content.split_once('\t') {
                Some((l, r)) => (l.trim(), r.trim()),
                None => (content.trim(), ""),
            };
            if let Some(suffix) = left.strip_prefix('-') {
                let suffix = normalize(suffix);
                if suffix.is_empty() {
                    return Err(PreprocessError::BadEntry {
                        line: line_no,
                        message: "empty suffix".into(),
                    });
                }
                suffix_rules.push((suffix, normalize(right)));
            } else {
                let surface = normalize(left);
                let lemma = normalize(right);
                if surface.is_empty() || lemma.is_empty() {
                    return Err(PreprocessError::BadEntry {
                        line: line_no,
                        message: format!("expected surface<TAB>lemma, got {content:?}"),
                    });
                }
                if surface.contains(' ') || lemma.contains(' ') {
                    return Err(PreprocessError::BadEntry {
                        line: line_no,
                        message: format!("entries must be single tokens, got {content:?}"),
                    });
                }
                map.insert(surface, lemma);
            }
        }
        Ok(LemmaLexicon { map, suffix_rules })
    }

    pub fn from_str_data(data: &str) -> Result<Self, PreprocessError> {
        Self::from_reader(data.as_bytes())
    }

    pub fn bundled() -> &'static LemmaLexicon {
        static LEX: OnceLock<LemmaLexicon> = OnceLock::new();
        LEX.get_or_init(|| {
            LemmaLexicon::from_str_data(BUNDLED_LEXICON).expect("bundled lexicon parses")
        })
    }

    pub fn lemma_of(&self, token: &str) -> String {
        if let Some(lemma) = self.map.get(token) {
            return lemma.clone();
        }
        for (suffix, replacement) in &self.suffix_rules {
            if let Some(stem) = token.strip_suffix(suffix.as_str()) {
                if stem.chars().count() >= 2 {
                    return format!("{stem}{replacement}");
                }
            }
        }
        token.to_string()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(s, l)| (s.as_str(), l.as_str()))
    }
}

/// Maps each token through the lexicon.
pub fn lemmatize(tokens: &[String], lexicon: &LemmaLexicon) -> Vec<String> {
    tokens.iter().map(|t| lexicon.lemma_of(t)).collect()
}

/// A preprocessed note: its id plus the clean token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub note_id: String,
    pub tokens: Vec<String>,
}

/// Full pipeline: normalize, tokenize, remove stopwords, lemmatize.
pub fn preprocess_pipeline(
    note: &ClinicalNote,
    list: &StopwordList,
    lexicon: &LemmaLexicon,
) -> Document {
    let tokens = tokenize(&normalize(note.text()));
    let tokens = remove_stopwords(&tokens, list);
    let tokens = lemmatize(&tokens, lexicon);
    Document { note_id: note.id().to_string(), tokens }
}

/// Same pipeline for raw text when no note identity is at hand.
pub fn preprocess_text(text: &str, list: &StopwordList, lexicon: &LemmaLexicon) -> Vec<String> {
    lemmatize(&remove_stopwords(&tokenize(&normalize(text)), list), lexicon)
}
