//! Data model and line-delimited persistence for questions, paraphrase
//! sets, evaluation records, human annotations, and the embedding sidecar.
//!
//! Every file this module writes starts with a one-line header naming its
//! schema and version. Loaders tolerate a missing header so hand-written
//! question files work, but reject files whose header names a different
//! schema. Writes go to a temporary file in the target directory and are
//! renamed into place.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::text_digest;
use crate::embed::{EmbedError, TextEmbedder};
use crate::metric::EmbeddingVector;
use crate::textsim::ParaphraseCandidate;

pub const QUESTIONS_SCHEMA: &str = "sage.questions";
pub const PARAPHRASES_SCHEMA: &str = "sage.paraphrases";
pub const RECORDS_SCHEMA: &str = "sage.records";
pub const ANNOTATIONS_SCHEMA: &str = "sage.annotations";
pub const EMBEDDINGS_SCHEMA: &str = "sage.embeddings";
pub const FIXED_ROTS_SCHEMA: &str = "sage.fixed-rots";
pub const REPORT_ROWS_SCHEMA: &str = "sage.report-rows";
pub const SKIPS_SCHEMA: &str = "sage.skips";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate id \"{id}\"")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("{path}: file has schema \"{found}\", expected \"{expected}\"")]
    SchemaMismatch {
        path: String,
        found: String,
        expected: String,
    },
    #[error("{path}:{line}: record \"{id}\" violates invariants: {violations}")]
    InvalidRecord {
        path: String,
        line: usize,
        id: String,
        violations: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

/// One input question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
}

/// A question with its retained paraphrases, produced by the paraphrase
/// stage. `flagged` marks questions left with fewer than two survivors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseSetRecord {
    pub question_id: String,
    pub question: String,
    pub paraphrases: Vec<ParaphraseCandidate>,
    #[serde(default)]
    pub flagged: bool,
}

/// How the answers and rules of thumb in a record were generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GenerationSummary {
    pub answer_temperature: f64,
    pub rot_temperature: f64,
    pub max_tokens: u32,
    pub samples_per_paraphrase: usize,
    /// Set when answers were regenerated under one fixed rule of thumb;
    /// carries that rule's text for provenance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_rot: Option<String>,
}

/// One question's full evaluation state: paraphrases, per-model answers
/// indexed `[paraphrase][sample]`, and per-model rules of thumb indexed
/// `[paraphrase]`. Alignment with the paraphrase list is positional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub question_id: String,
    pub question: String,
    pub paraphrases: Vec<ParaphraseCandidate>,
    #[serde(default)]
    pub answers: BTreeMap<String, Vec<Vec<String>>>,
    #[serde(default)]
    pub rots: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub generation: GenerationSummary,
}

impl EvaluationRecord {
    /// All answer texts of one model, flattened across paraphrases and
    /// samples in positional order.
    pub fn answer_texts(&self, model_id: &str) -> Vec<String> {
        self.answers
            .get(model_id)
            .map(|per_paraphrase| per_paraphrase.iter().flatten().cloned().collect())
            .unwrap_or_default()
    }

    pub fn rot_texts(&self, model_id: &str) -> Vec<String> {
        self.rots.get(model_id).cloned().unwrap_or_default()
    }
}

/// One unit of human annotation: a pair of answers for a question, rated
/// by three raters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub question_id: String,
    /// Indices of the two answers compared, first strictly less than second.
    pub pair: (usize, usize),
    pub labels: [AnnotationLabel; 3],
}

/// A rater's judgment of semantic equivalence: yes, no, or uncertain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnotationLabel {
    Y,
    N,
    #[serde(rename = "NA")]
    Na,
}

/// Accumulated invariant violations for one record; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every invariant of an evaluation record and reports all
/// violations rather than stopping at the first.
pub fn validate_record(record: &EvaluationRecord) -> ValidationReport {
    let mut violations = Vec::new();
    if record.question_id.is_empty() {
        violations.push("question_id is empty".to_string());
    }
    if record.question.trim().is_empty() {
        violations.push("question text is empty".to_string());
    }
    let n = record.paraphrases.len();
    if n < 2 {
        violations.push(format!("needs at least 2 paraphrases, has {n}"));
    }
    for (i, p) in record.paraphrases.iter().enumerate() {
        if p.text.trim().is_empty() {
            violations.push(format!("paraphrase {i} is empty"));
        }
    }
    for (model, per_paraphrase) in &record.answers {
        if per_paraphrase.len() != n {
            violations.push(format!(
                "model \"{model}\" has {} answer groups for {n} paraphrases",
                per_paraphrase.len()
            ));
        }
        for (i, samples) in per_paraphrase.iter().enumerate() {
            if samples.is_empty() {
                violations.push(format!("model \"{model}\" has no answer for paraphrase {i}"));
            }
            for (s, answer) in samples.iter().enumerate() {
                if answer.trim().is_empty() {
                    violations.push(format!(
                        "model \"{model}\" answer {s} for paraphrase {i} is empty"
                    ));
                }
            }
        }
    }
    for (model, rots) in &record.rots {
        if rots.len() != n {
            violations.push(format!(
                "model \"{model}\" has {} rules of thumb for {n} paraphrases",
                rots.len()
            ));
        }
        for (i, rot) in rots.iter().enumerate() {
            if rot.trim().is_empty() {
                violations.push(format!("model \"{model}\" rule of thumb {i} is empty"));
            }
        }
    }
    ValidationReport { violations }
}

fn io_err(action: &'static str, path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        action,
        path: path.display().to_string(),
        source,
    }
}

/// Writes bytes to a temporary sibling file and renames it into place.
pub fn atomic_write(path: &Path, contents: &str) -> Result<(), CorpusError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let stem = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = parent.join(format!(".{stem}.tmp.{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| io_err("write", &tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err("rename into", path, e))
}

/// Writes a headered line-delimited file atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, schema: &str, items: &[T]) -> Result<(), CorpusError> {
    let mut out = String::new();
    let header = Header {
        schema: schema.to_string(),
        version: SCHEMA_VERSION,
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: 0,
            message: format!("serialization failed: {e}"),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    atomic_write(path, &out)
}

/// Parses a line-delimited file, checking the optional header against the
/// expected schema and reporting malformed lines with their line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| io_err("open", path, e))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err("read", path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 {
            if let Ok(header) = serde_json::from_str::<Header>(trimmed) {
                if header.schema != schema {
                    return Err(CorpusError::SchemaMismatch {
                        path: path.display().to_string(),
                        found: header.schema,
                        expected: schema.to_string(),
                    });
                }
                continue;
            }
        }
        let item = serde_json::from_str(trimmed).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Loads questions, rejecting duplicate ids and empty question text.
pub fn load_questions(path: &Path) -> Result<Vec<QuestionRecord>, CorpusError> {
    let questions: Vec<QuestionRecord> = read_jsonl(path, QUESTIONS_SCHEMA)?;
    let mut seen = HashSet::new();
    for (idx, q) in questions.iter().enumerate() {
        if q.question.trim().is_empty() {
            return Err(CorpusError::Malformed {
                path: path.display().to_string(),
                line: idx + 2, // header line precedes the records
                message: format!("question \"{}\" has empty text", q.id),
            });
        }
        if !seen.insert(q.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.display().to_string(),
                line: idx + 2,
                id: q.id.clone(),
            });
        }
    }
    Ok(questions)
}

pub fn save_questions(path: &Path, questions: &[QuestionRecord]) -> Result<(), CorpusError> {
    write_jsonl(path, QUESTIONS_SCHEMA, questions)
}

pub fn load_paraphrase_sets(path: &Path) -> Result<Vec<ParaphraseSetRecord>, CorpusError> {
    read_jsonl(path, PARAPHRASES_SCHEMA)
}

pub fn save_paraphrase_sets(
    path: &Path,
    sets: &[ParaphraseSetRecord],
) -> Result<(), CorpusError> {
    write_jsonl(path, PARAPHRASES_SCHEMA, sets)
}

/// Loads evaluation records, validating every invariant of every record.
pub fn load_records(path: &Path) -> Result<Vec<EvaluationRecord>, CorpusError> {
    let records: Vec<EvaluationRecord> = read_jsonl(path, RECORDS_SCHEMA)?;
    for (idx, record) in records.iter().enumerate() {
        let report = validate_record(record);
        if !report.is_valid() {
            return Err(CorpusError::InvalidRecord {
                path: path.display().to_string(),
                line: idx + 2,
                id: record.question_id.clone(),
                violations: report.violations.join("; "),
            });
        }
    }
    Ok(records)
}

pub fn save_records(path: &Path, records: &[EvaluationRecord]) -> Result<(), CorpusError> {
    write_jsonl(path, RECORDS_SCHEMA, records)
}

/// Loads annotation records, enforcing ordered distinct pair indices.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let annotations: Vec<AnnotationRecord> = read_jsonl(path, ANNOTATIONS_SCHEMA)?;
    for (idx, a) in annotations.iter().enumerate() {
        if a.pair.0 >= a.pair.1 {
            return Err(CorpusError::Malformed {
                path: path.display().to_string(),
                line: idx + 2,
                message: format!(
                    "pair indices ({}, {}) must be distinct and ordered",
                    a.pair.0, a.pair.1
                ),
            });
        }
    }
    Ok(annotations)
}

pub fn save_annotations(path: &Path, annotations: &[AnnotationRecord]) -> Result<(), CorpusError> {
    write_jsonl(path, ANNOTATIONS_SCHEMA, annotations)
}

/// One fixed rule of thumb to condition a question's answers on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedRotRecord {
    pub question_id: String,
    pub rot: String,
}

pub fn load_fixed_rots(path: &Path) -> Result<Vec<FixedRotRecord>, CorpusError> {
    let rots: Vec<FixedRotRecord> = read_jsonl(path, FIXED_ROTS_SCHEMA)?;
    for (idx, r) in rots.iter().enumerate() {
        if r.rot.trim().is_empty() {
            return Err(CorpusError::Malformed {
                path: path.display().to_string(),
                line: idx + 2,
                message: format!("rule of thumb for \"{}\" is empty", r.question_id),
            });
        }
    }
    Ok(rots)
}

pub fn save_fixed_rots(path: &Path, rots: &[FixedRotRecord]) -> Result<(), CorpusError> {
    write_jsonl(path, FIXED_ROTS_SCHEMA, rots)
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingEntry {
    digest: String,
    dim: usize,
    data: String, // base64 of little-endian f64 components
}

/// On-disk embedding store keyed by text digest.
///
/// Embeddings live outside the evaluation records so record files stay
/// readable and vectors are reused across runs. Entries are kept sorted by
/// digest so saving the same store twice produces identical bytes.
#[derive(Debug, Default)]
pub struct EmbeddingStore {
    by_digest: BTreeMap<String, EmbeddingVector>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let entries: Vec<EmbeddingEntry> = read_jsonl(path, EMBEDDINGS_SCHEMA)?;
        let mut by_digest = BTreeMap::new();
        for (idx, entry) in entries.into_iter().enumerate() {
            let bytes = BASE64
                .decode(entry.data.as_bytes())
                .map_err(|e| CorpusError::Malformed {
                    path: path.display().to_string(),
                    line: idx + 2,
                    message: format!("bad base64 payload: {e}"),
                })?;
            if bytes.len() != entry.dim * 8 {
                return Err(CorpusError::Malformed {
                    path: path.display().to_string(),
                    line: idx + 2,
                    message: format!(
                        "payload holds {} bytes, expected {} for dim {}",
                        bytes.len(),
                        entry.dim * 8,
                        entry.dim
                    ),
                });
            }
            let components: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let vector =
                EmbeddingVector::new(components).map_err(|e| CorpusError::Malformed {
                    path: path.display().to_string(),
                    line: idx + 2,
                    message: format!("invalid embedding: {e}"),
                })?;
            by_digest.insert(entry.digest, vector);
        }
        Ok(Self { by_digest })
    }

    /// Loads the store if the file exists, otherwise starts empty.
    pub fn load_or_default(path: &Path) -> Result<Self, CorpusError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let entries: Vec<EmbeddingEntry> = self
            .by_digest
            .iter()
            .map(|(digest, vector)| {
                let mut bytes = Vec::with_capacity(vector.dim() * 8);
                for c in vector.components() {
                    bytes.extend_from_slice(&c.to_le_bytes());
                }
                EmbeddingEntry {
                    digest: digest.clone(),
                    dim: vector.dim(),
                    data: BASE64.encode(&bytes),
                }
            })
            .collect();
        write_jsonl(path, EMBEDDINGS_SCHEMA, &entries)
    }

    pub fn len(&self) -> usize {
        self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_digest.is_empty()
    }

    pub fn insert_text(&mut self, text: &str, vector: EmbeddingVector) {
        self.by_digest.insert(text_digest(text), vector);
    }

    pub fn get_text(&self, text: &str) -> Option<&EmbeddingVector> {
        self.by_digest.get(&text_digest(text))
    }

    pub fn contains_text(&self, text: &str) -> bool {
        self.by_digest.contains_key(&text_digest(text))
    }
}

impl TextEmbedder for EmbeddingStore {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                self.get_text(t).cloned().ok_or_else(|| EmbedError::Missing {
                    digest: text_digest(t),
                })
            })
            .collect()
    }
}
