//! Turns evaluation records into consistency scores, aggregates,
//! agreement statistics, temperature sweeps, and report files.

pub mod agreement;
pub mod report;
pub mod sweep;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EvaluationRecord;
use crate::embed::{EmbedError, TextEmbedder};
use crate::gateway::GatewayError;
use crate::metric::{cosine_similarity, MetricError, SemanticGraph};
use crate::textsim::{pairwise_consistency, SimilarityBackend, TextSimError};

pub use agreement::{
    annotation_entropy, correlate_with_humans, krippendorff_alpha, pearson, CorrelationResult,
    HumanAggregation,
};
pub use report::{
    emit_correlations, emit_report_aggregates, emit_report_rows, emit_sweep, ReportFormat,
};
pub use sweep::{temperature_sweep, SweepMode, SweepOptions, SweepResult, SweepRow};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("model \"{model_id}\" has {got} {target} texts for question \"{question_id}\"; need at least 2")]
    TooFewTexts {
        question_id: String,
        model_id: String,
        target: Target,
        got: usize,
    },
    #[error("no records to score")]
    NoRecords,
    #[error("every question was skipped; nothing to aggregate")]
    AllQuestionsSkipped,
    #[error("no annotations with Y/N labels")]
    EmptyAnnotations,
    #[error("no unit has two or more non-missing labels")]
    NoPairableValues,
    #[error("alpha is undefined: expected disagreement is zero but observed is {observed}")]
    UndefinedAlpha { observed: f64 },
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("series needs at least 2 points, got {0}")]
    SeriesTooShort(usize),
    #[error("correlation is undefined for a constant series")]
    ConstantSeries,
    #[error("report and annotations share no question ids")]
    NoOverlap,
    #[error("temperature grid is empty")]
    EmptyGrid,
    #[error("temperature grid must be strictly increasing and nonnegative")]
    BadGrid,
    #[error("nothing to emit")]
    EmptyReport,
    #[error("failed to write {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    TextSim(#[from] TextSimError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// The consistency metrics a report can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "bleu")]
    Bleu,
    #[serde(rename = "rouge-l")]
    RougeL,
    #[serde(rename = "semantic-cosine-cons")]
    SemanticCons,
    #[serde(rename = "sage")]
    Sage,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Bleu,
        MetricKind::RougeL,
        MetricKind::SemanticCons,
        MetricKind::Sage,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Bleu => "bleu",
            Self::RougeL => "rouge-l",
            Self::SemanticCons => "semantic-cosine-cons",
            Self::Sage => "sage",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" => Ok(Self::Bleu),
            "rouge-l" | "rouge" => Ok(Self::RougeL),
            "semantic-cosine-cons" | "semantic" => Ok(Self::SemanticCons),
            "sage" => Ok(Self::Sage),
            other => Err(format!(
                "unknown metric \"{other}\" (expected bleu, rouge-l, semantic-cosine-cons, sage)"
            )),
        }
    }
}

/// Which response set a score was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "answers")]
    Answers,
    #[serde(rename = "rots")]
    Rots,
}

impl Target {
    pub fn label(self) -> &'static str {
        match self {
            Self::Answers => "answers",
            Self::Rots => "rots",
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "answers" => Ok(Self::Answers),
            "rots" => Ok(Self::Rots),
            other => Err(format!("unknown target \"{other}\" (expected answers or rots)")),
        }
    }
}

/// Scores one text set under the requested metrics. Embeddings are fetched
/// once and shared between the semantic metrics.
pub fn score_texts(
    texts: &[String],
    metrics: &[MetricKind],
    embedder: &dyn TextEmbedder,
) -> Result<BTreeMap<MetricKind, f64>, AnalysisError> {
    let needs_embeddings = metrics
        .iter()
        .any(|m| matches!(m, MetricKind::SemanticCons | MetricKind::Sage));
    let embeddings = if needs_embeddings {
        Some(embedder.embed(texts)?)
    } else {
        None
    };

    let mut scores = BTreeMap::new();
    for metric in metrics {
        let score = match metric {
            MetricKind::Bleu => pairwise_consistency(texts, &SimilarityBackend::LexicalBleu)?,
            MetricKind::RougeL => {
                pairwise_consistency(texts, &SimilarityBackend::LexicalRougeL)?
            }
            MetricKind::SemanticCons => {
                let vectors = embeddings.as_ref().expect("embeddings fetched");
                let n = vectors.len();
                let mut sum = 0.0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        sum += cosine_similarity(&vectors[i], &vectors[j])?.clamp(0.0, 1.0);
                    }
                }
                sum / (n * (n - 1) / 2) as f64
            }
            MetricKind::Sage => {
                let vectors = embeddings.as_ref().expect("embeddings fetched").clone();
                SemanticGraph::build(vectors)?.sage_score().sage
            }
        };
        scores.insert(*metric, score);
    }
    Ok(scores)
}

/// Scores one record for one model and target.
pub fn evaluate_question(
    record: &EvaluationRecord,
    model_id: &str,
    target: Target,
    metrics: &[MetricKind],
    embedder: &dyn TextEmbedder,
) -> Result<BTreeMap<MetricKind, f64>, AnalysisError> {
    let texts = match target {
        Target::Answers => record.answer_texts(model_id),
        Target::Rots => record.rot_texts(model_id),
    };
    if texts.len() < 2 {
        return Err(AnalysisError::TooFewTexts {
            question_id: record.question_id.clone(),
            model_id: model_id.to_string(),
            target,
            got: texts.len(),
        });
    }
    score_texts(&texts, metrics, embedder)
}

/// One per-question score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_id: String,
    pub target: Target,
    pub metric: MetricKind,
    pub question_id: String,
    pub score: f64,
}

/// Mean score of one (model, target, metric) cell, Table-1 style.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model_id: String,
    pub target: Target,
    pub metric: MetricKind,
    pub mean: f64,
    pub question_count: usize,
}

/// A question excluded from scoring, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedQuestion {
    pub question_id: String,
    pub model_id: String,
    pub target: Target,
    pub reason: String,
}

/// Per-question rows plus per-(model, target, metric) means.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConsistencyReport {
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<AggregateRow>,
    pub skipped: Vec<SkippedQuestion>,
}

/// Scores every record for every (model, target, metric) and aggregates.
///
/// Questions whose preconditions fail (fewer than two target texts, or
/// embeddings unavailable) are recorded as skipped rather than aborting
/// the batch; anything else is a hard error. Output order is canonical:
/// rows sorted by model, target, metric, question id.
pub fn aggregate_report(
    records: &[EvaluationRecord],
    models: &[String],
    targets: &[Target],
    metrics: &[MetricKind],
    embedder: &dyn TextEmbedder,
) -> Result<ConsistencyReport, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::NoRecords);
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for record in records {
        for model_id in models {
            for &target in targets {
                match evaluate_question(record, model_id, target, metrics, embedder) {
                    Ok(scores) => {
                        for (metric, score) in scores {
                            rows.push(ReportRow {
                                model_id: model_id.clone(),
                                target,
                                metric,
                                question_id: record.question_id.clone(),
                                score,
                            });
                        }
                    }
                    Err(e @ AnalysisError::TooFewTexts { .. })
                    | Err(e @ AnalysisError::Embed(EmbedError::Missing { .. })) => {
                        skipped.push(SkippedQuestion {
                            question_id: record.question_id.clone(),
                            model_id: model_id.clone(),
                            target,
                            reason: e.to_string(),
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(AnalysisError::AllQuestionsSkipped);
    }
    rows.sort_by(|a, b| {
        (&a.model_id, a.target, a.metric, &a.question_id)
            .cmp(&(&b.model_id, b.target, b.metric, &b.question_id))
    });
    skipped.sort_by(|a, b| {
        (&a.question_id, &a.model_id, a.target).cmp(&(&b.question_id, &b.model_id, b.target))
    });

    let mut groups: BTreeMap<(String, Target, MetricKind), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        groups
            .entry((row.model_id.clone(), row.target, row.metric))
            .or_default()
            .push(row.score);
    }
    let aggregates = groups
        .into_iter()
        .map(|((model_id, target, metric), scores)| AggregateRow {
            model_id,
            target,
            metric,
            mean: scores.iter().sum::<f64>() / scores.len() as f64,
            question_count: scores.len(),
        })
        .collect();

    Ok(ConsistencyReport {
        rows,
        aggregates,
        skipped,
    })
}
