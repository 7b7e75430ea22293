//! Inter-annotator agreement and metric-to-human correlation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, ConsistencyReport, MetricKind, Target};
use crate::corpus::{AnnotationLabel, AnnotationRecord};

/// Binary Shannon entropy (nats) of the yes-proportion among Y/N labels.
/// NA labels are ignored; at least one Y or N is required.
pub fn annotation_entropy(labels: &[AnnotationLabel]) -> Result<f64, AnalysisError> {
    let mut yes = 0usize;
    let mut no = 0usize;
    for label in labels {
        match label {
            AnnotationLabel::Y => yes += 1,
            AnnotationLabel::N => no += 1,
            AnnotationLabel::Na => {}
        }
    }
    let total = yes + no;
    if total == 0 {
        return Err(AnalysisError::EmptyAnnotations);
    }
    let p = yes as f64 / total as f64;
    let term = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    Ok(-(term(p) + term(1.0 - p)))
}

/// Krippendorff's alpha for nominal data over incomplete multi-rater
/// units, via the coincidence-matrix procedure. NA counts as missing;
/// units with fewer than two non-missing labels are excluded.
pub fn krippendorff_alpha(annotations: &[AnnotationRecord]) -> Result<f64, AnalysisError> {
    // Categories: Y = 0, N = 1.
    let mut coincidence = [[0.0f64; 2]; 2];
    let mut pairable_units = 0usize;
    for record in annotations {
        let values: Vec<usize> = record
            .labels
            .iter()
            .filter_map(|label| match label {
                AnnotationLabel::Y => Some(0),
                AnnotationLabel::N => Some(1),
                AnnotationLabel::Na => None,
            })
            .collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable_units += 1;
        let weight = 1.0 / (m - 1) as f64;
        for (i, &c) in values.iter().enumerate() {
            for (j, &k) in values.iter().enumerate() {
                if i != j {
                    coincidence[c][k] += weight;
                }
            }
        }
    }
    if pairable_units == 0 {
        return Err(AnalysisError::NoPairableValues);
    }
    let n_c: [f64; 2] = [
        coincidence[0][0] + coincidence[0][1],
        coincidence[1][0] + coincidence[1][1],
    ];
    let n: f64 = n_c[0] + n_c[1];
    let observed = (coincidence[0][1] + coincidence[1][0]) / n;
    let expected = (n_c[0] * n_c[1] + n_c[1] * n_c[0]) / (n * (n - 1.0));
    if expected == 0.0 {
        if observed == 0.0 {
            return Ok(1.0);
        }
        return Err(AnalysisError::UndefinedAlpha { observed });
    }
    Ok(1.0 - observed / expected)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(AnalysisError::SeriesTooShort(x.len()));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut covariance = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        covariance += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(AnalysisError::ConstantSeries);
    }
    // sqrt of the product, not the product of sqrts: keeps exactly linear
    // series at exactly ±1.
    Ok((covariance / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// How per-question human judgments are collapsed into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HumanAggregation {
    /// Proportion of Y labels: higher means raters saw more equivalence.
    #[serde(rename = "mean")]
    MeanYes,
    /// `ln 2` minus the Y/N entropy, so higher still means more
    /// consistent.
    #[serde(rename = "entropy")]
    Entropy,
}

impl HumanAggregation {
    pub fn label(self) -> &'static str {
        match self {
            Self::MeanYes => "mean",
            Self::Entropy => "entropy",
        }
    }
}

impl std::str::FromStr for HumanAggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::MeanYes),
            "entropy" => Ok(Self::Entropy),
            other => Err(format!(
                "unknown aggregation \"{other}\" (expected mean or entropy)"
            )),
        }
    }
}

/// Pearson correlation of one metric/target series against humans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub model_id: String,
    pub metric: MetricKind,
    pub target: Target,
    pub aggregation: HumanAggregation,
    pub pearson_r: f64,
    pub question_count: usize,
}

/// Correlates every (model, target, metric) series in the report with the
/// chosen per-question human aggregation over shared question ids.
pub fn correlate_with_humans(
    report: &ConsistencyReport,
    annotations: &[AnnotationRecord],
    aggregation: HumanAggregation,
) -> Result<Vec<CorrelationResult>, AnalysisError> {
    // Pool every rater's Y/N labels per question.
    let mut labels_by_question: BTreeMap<&str, Vec<AnnotationLabel>> = BTreeMap::new();
    for record in annotations {
        labels_by_question
            .entry(record.question_id.as_str())
            .or_default()
            .extend(record.labels.iter().copied());
    }
    let mut human_by_question: BTreeMap<&str, f64> = BTreeMap::new();
    for (question_id, labels) in labels_by_question {
        let yes = labels.iter().filter(|l| **l == AnnotationLabel::Y).count();
        let no = labels.iter().filter(|l| **l == AnnotationLabel::N).count();
        if yes + no == 0 {
            continue; // all-NA questions carry no signal
        }
        let value = match aggregation {
            HumanAggregation::MeanYes => yes as f64 / (yes + no) as f64,
            HumanAggregation::Entropy => {
                std::f64::consts::LN_2 - annotation_entropy(&labels)?
            }
        };
        human_by_question.insert(question_id, value);
    }

    let mut series: BTreeMap<(String, Target, MetricKind), Vec<(&str, f64)>> = BTreeMap::new();
    for row in &report.rows {
        if human_by_question.contains_key(row.question_id.as_str()) {
            series
                .entry((row.model_id.clone(), row.target, row.metric))
                .or_default()
                .push((row.question_id.as_str(), row.score));
        }
    }
    if series.is_empty() {
        return Err(AnalysisError::NoOverlap);
    }

    let mut results = Vec::new();
    for ((model_id, target, metric), mut points) in series {
        points.sort_by_key(|(question_id, _)| *question_id);
        let metric_series: Vec<f64> = points.iter().map(|(_, score)| *score).collect();
        let human_series: Vec<f64> = points
            .iter()
            .map(|(question_id, _)| human_by_question[question_id])
            .collect();
        let pearson_r = pearson(&metric_series, &human_series)?;
        results.push(CorrelationResult {
            model_id,
            metric,
            target,
            aggregation,
            pearson_r,
            question_count: points.len(),
        });
    }
    Ok(results)
}
