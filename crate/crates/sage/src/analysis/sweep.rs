//! Temperature sweep: consistency as a function of the sampling
//! temperature, in two settings.

use serde::{Deserialize, Serialize};

use super::{score_texts, AnalysisError, MetricKind};
use crate::corpus::QuestionRecord;
use crate::embed::TextEmbedder;
use crate::gateway::{Gateway, GenerationConfig};

/// The two experiment settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    /// The model answers the same question several times at each
    /// temperature.
    #[serde(rename = "same-question")]
    SameQuestion,
    /// The model answers a fixed paraphrase set once per paraphrase at
    /// each temperature.
    #[serde(rename = "paraphrase")]
    Paraphrase,
}

impl SweepMode {
    pub fn label(self) -> &'static str {
        match self {
            Self::SameQuestion => "same-question",
            Self::Paraphrase => "paraphrase",
        }
    }
}

impl std::str::FromStr for SweepMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same-question" => Ok(Self::SameQuestion),
            "paraphrase" => Ok(Self::Paraphrase),
            other => Err(format!(
                "unknown sweep mode \"{other}\" (expected same-question or paraphrase)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Repeated draws per question in same-question mode.
    pub draws: usize,
    /// Paraphrases per question in paraphrase mode.
    pub paraphrase_k: usize,
    /// Temperature used to generate the paraphrase set itself.
    pub paraphrase_temperature: f64,
    pub max_tokens: u32,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            draws: 5,
            paraphrase_k: 5,
            paraphrase_temperature: 1.0,
            max_tokens: 256,
        }
    }
}

/// Mean metric value at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    pub metric: MetricKind,
    pub mean: f64,
    pub question_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub mode: SweepMode,
    pub temperatures: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

/// Regenerates answers at each temperature on the grid and scores them.
///
/// The grid must be strictly increasing and nonnegative. In paraphrase
/// mode the paraphrase set is generated once and reused across the whole
/// grid, so differences between temperatures come from answering alone.
pub fn temperature_sweep(
    questions: &[QuestionRecord],
    temperatures: &[f64],
    mode: SweepMode,
    model_id: &str,
    metrics: &[MetricKind],
    gateway: &Gateway,
    options: &SweepOptions,
) -> Result<SweepResult, AnalysisError> {
    if temperatures.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    if temperatures[0] < 0.0 || temperatures.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::BadGrid);
    }

    // Fixed paraphrase sets, one per question, shared across temperatures.
    let paraphrase_sets: Option<Vec<Vec<String>>> = match mode {
        SweepMode::Paraphrase => {
            let config = GenerationConfig {
                model_id: model_id.to_string(),
                temperature: options.paraphrase_temperature,
                max_tokens: options.max_tokens,
                sample_index: 0,
            };
            let sets = questions
                .iter()
                .map(|q| gateway.generate_paraphrases(&q.question, options.paraphrase_k, &config))
                .collect::<Result<Vec<_>, _>>()?;
            Some(sets)
        }
        SweepMode::SameQuestion => None,
    };

    let mut rows = Vec::new();
    for &temperature in temperatures {
        let mut sums: std::collections::BTreeMap<MetricKind, (f64, usize)> =
            std::collections::BTreeMap::new();
        for (index, question) in questions.iter().enumerate() {
            let texts: Vec<String> = match mode {
                SweepMode::SameQuestion => (0..options.draws)
                    .map(|draw| {
                        let config = GenerationConfig {
                            model_id: model_id.to_string(),
                            temperature,
                            max_tokens: options.max_tokens,
                            sample_index: draw as u32,
                        };
                        gateway.generate_answer(&question.question, &config)
                    })
                    .collect::<Result<_, _>>()?,
                SweepMode::Paraphrase => {
                    let set = &paraphrase_sets.as_ref().expect("sets generated")[index];
                    set.iter()
                        .map(|paraphrase| {
                            let config = GenerationConfig {
                                model_id: model_id.to_string(),
                                temperature,
                                max_tokens: options.max_tokens,
                                sample_index: 0,
                            };
                            gateway.generate_answer(paraphrase, &config)
                        })
                        .collect::<Result<_, _>>()?
                }
            };
            if texts.len() < 2 {
                continue;
            }
            let scores = score_texts(&texts, metrics, gateway as &dyn TextEmbedder)?;
            for (metric, score) in scores {
                let entry = sums.entry(metric).or_insert((0.0, 0));
                entry.0 += score;
                entry.1 += 1;
            }
        }
        for (metric, (sum, count)) in sums {
            rows.push(SweepRow {
                temperature,
                metric,
                mean: sum / count as f64,
                question_count: count,
            });
        }
    }

    Ok(SweepResult {
        mode,
        temperatures: temperatures.to_vec(),
        rows,
    })
}
