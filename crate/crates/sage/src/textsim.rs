//! Lexical and semantic text similarity, the pairwise consistency baseline,
//! and paraphrase quality scoring.
//!
//! All lexical scores share one tokenization rule so results are
//! reproducible bit for bit: lowercase, treat every non-alphanumeric
//! character as a separator, split on whitespace.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, TextEmbedder};
use crate::metric::{cosine_similarity, MetricError};

/// Default weight of semantic similarity in the paraphrase quality score.
pub const DEFAULT_QUALITY_BETA: f64 = 0.7;
/// Default retention threshold for paraphrase candidates.
pub const DEFAULT_QUALITY_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum TextSimError {
    #[error("{side} text is empty after tokenization")]
    EmptyText { side: &'static str },
    #[error("consistency needs at least 2 texts, got {0}")]
    TooFewTexts(usize),
    #[error("semantic similarity {0} is outside [0, 1]")]
    SemanticSimOutOfRange(f64),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Lowercases, treats every non-alphanumeric character as a separator, and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn tokenize_nonempty(text: &str, side: &'static str) -> Result<Vec<String>, TextSimError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(TextSimError::EmptyText { side });
    }
    Ok(tokens)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for window in tokens.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    counts
}

/// Sentence-level BLEU over n-gram orders 1 to 4.
///
/// Modified (clipped) precisions are combined by geometric mean; orders the
/// candidate is too short for are dropped from the mean. Orders 2–4 back
/// off to `(m+1)/(t+1)` when their raw match count is zero; a zero unigram
/// match yields exactly 0. The brevity penalty `exp(1 - r/c)` applies when
/// the candidate is shorter than the reference.
pub fn bleu(candidate: &str, reference: &str) -> Result<f64, TextSimError> {
    let cand = tokenize_nonempty(candidate, "candidate")?;
    let refr = tokenize_nonempty(reference, "reference")?;

    let max_order = cand.len().min(4);
    let mut log_sum = 0.0;
    for n in 1..=max_order {
        let cand_counts = ngram_counts(&cand, n);
        let ref_counts = ngram_counts(&refr, n);
        let total = cand.len() - n + 1;
        let matched: usize = cand_counts
            .iter()
            .map(|(gram, count)| (*count).min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return Ok(0.0);
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
        log_sum += precision.ln();
    }
    let geometric_mean = (log_sum / max_order as f64).exp();
    let brevity = if cand.len() < refr.len() {
        (1.0 - refr.len() as f64 / cand.len() as f64).exp()
    } else {
        1.0
    };
    Ok(brevity * geometric_mean)
}

fn lcs_length(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1: longest common subsequence precision/recall, 0 when the LCS
/// is empty.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<f64, TextSimError> {
    let cand = tokenize_nonempty(candidate, "candidate")?;
    let refr = tokenize_nonempty(reference, "reference")?;
    let lcs = lcs_length(&cand, &refr);
    if lcs == 0 {
        return Ok(0.0);
    }
    let precision = lcs as f64 / cand.len() as f64;
    let recall = lcs as f64 / refr.len() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

fn levenshtein(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(x != y);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized token edit distance: Levenshtein over tokens divided by the
/// longer token count. 0 for identical token sequences, 1 when every token
/// must be replaced.
pub fn lexical_divergence(a: &str, b: &str) -> Result<f64, TextSimError> {
    let ta = tokenize_nonempty(a, "first")?;
    let tb = tokenize_nonempty(b, "second")?;
    Ok(levenshtein(&ta, &tb) as f64 / ta.len().max(tb.len()) as f64)
}

/// A pairwise text-similarity scorer used by the consistency baseline.
#[derive(Clone)]
pub enum SimilarityBackend {
    /// Sentence-level BLEU (directed: first argument is the candidate).
    LexicalBleu,
    /// ROUGE-L F1 (directed precision/recall, symmetric F1 value).
    LexicalRougeL,
    /// Cosine similarity of sentence embeddings, clamped to `[0, 1]`.
    SemanticCosine(Arc<dyn TextEmbedder>),
}

impl std::fmt::Debug for SimilarityBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::LexicalBleu => f.write_str("LexicalBleu"),
            Self::LexicalRougeL => f.write_str("LexicalRougeL"),
            Self::SemanticCosine(_) => f.write_str("SemanticCosine"),
        }
    }
}

impl SimilarityBackend {
    /// Directed pair score in `[0, 1]`.
    pub fn score(&self, a: &str, b: &str) -> Result<f64, TextSimError> {
        match self {
            Self::LexicalBleu => bleu(a, b),
            Self::LexicalRougeL => rouge_l(a, b),
            Self::SemanticCosine(embedder) => {
                let vectors = embedder.embed(&[a.to_string(), b.to_string()])?;
                Ok(cosine_similarity(&vectors[0], &vectors[1])?.clamp(0.0, 1.0))
            }
        }
    }
}

/// Mean pair similarity over all unordered pairs of the response set.
///
/// Directed backends score each pair in both directions and average, so
/// the result does not depend on input order.
pub fn pairwise_consistency(
    texts: &[String],
    backend: &SimilarityBackend,
) -> Result<f64, TextSimError> {
    let n = texts.len();
    if n < 2 {
        return Err(TextSimError::TooFewTexts(n));
    }
    let mut sum = 0.0;
    match backend {
        SimilarityBackend::SemanticCosine(embedder) => {
            let vectors = embedder.embed(texts)?;
            for i in 0..n {
                for j in (i + 1)..n {
                    sum += cosine_similarity(&vectors[i], &vectors[j])?.clamp(0.0, 1.0);
                }
            }
        }
        _ => {
            for i in 0..n {
                for j in (i + 1)..n {
                    let forward = backend.score(&texts[i], &texts[j])?;
                    let backward = backend.score(&texts[j], &texts[i])?;
                    sum += 0.5 * (forward + backward);
                }
            }
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// A scored paraphrase candidate.
///
/// `quality = beta * semantic_sim + (1 - beta) * lexical_div`: a good
/// paraphrase preserves meaning while changing wording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseCandidate {
    pub text: String,
    pub semantic_sim: f64,
    pub lexical_div: f64,
    pub quality: f64,
}

/// Scores a candidate paraphrase against its source.
///
/// `semantic_sim` comes from the semantic-cosine backend and must lie in
/// `[0, 1]`.
pub fn paraphrase_quality(
    source: &str,
    candidate: &str,
    semantic_sim: f64,
    beta: f64,
) -> Result<ParaphraseCandidate, TextSimError> {
    if !(0.0..=1.0).contains(&semantic_sim) {
        return Err(TextSimError::SemanticSimOutOfRange(semantic_sim));
    }
    let lexical_div = lexical_divergence(source, candidate)?;
    Ok(ParaphraseCandidate {
        text: candidate.to_string(),
        semantic_sim,
        lexical_div,
        quality: beta * semantic_sim + (1.0 - beta) * lexical_div,
    })
}

/// Keeps candidates whose quality strictly exceeds the threshold, in their
/// original order.
pub fn filter_paraphrases(
    candidates: Vec<ParaphraseCandidate>,
    threshold: f64,
) -> Vec<ParaphraseCandidate> {
    candidates
        .into_iter()
        .filter(|c| c.quality > threshold)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::EmbeddingVector;

    #[test]
    fn tokenize_lowercases_and_strips_punctuation() {
        assert_eq!(
            tokenize("Don't lie, EVER!"),
            vec!["don", "t", "lie", "ever"]
        );
        assert!(tokenize("?!...").is_empty());
    }

    #[test]
    fn bleu_identical_is_one() {
        assert_eq!(bleu("a b c d", "a b c d").unwrap(), 1.0);
    }

    #[test]
    fn bleu_disjoint_is_zero() {
        assert_eq!(bleu("w x y z", "a b c d").unwrap(), 0.0);
    }

    #[test]
    fn bleu_one_substitution() {
        // p = (3/4, 2/3, 1/2, smoothed 1/2), BP = 1.
        let score = bleu("a b c d", "a b c e").unwrap();
        assert!((score - 0.5946035575013605).abs() < 1e-12);
        assert!((score - 0.5946).abs() < 1e-4);
    }

    #[test]
    fn bleu_brevity_penalty_applies_to_short_candidates() {
        let short = bleu("a b", "a b c d").unwrap();
        let expected = (1.0_f64 - 4.0 / 2.0).exp(); // p1 = p2 = 1
        assert!((short - expected).abs() < 1e-12);
    }

    #[test]
    fn bleu_short_candidate_uses_available_orders() {
        // Single-token candidate: only the unigram order participates.
        assert_eq!(bleu("a", "a").unwrap(), 1.0);
    }

    #[test]
    fn bleu_empty_input_is_an_error() {
        assert!(matches!(
            bleu("", "a b"),
            Err(TextSimError::EmptyText { side: "candidate" })
        ));
        assert!(matches!(
            bleu("a b", "..."),
            Err(TextSimError::EmptyText { side: "reference" })
        ));
    }

    #[test]
    fn rouge_identical_is_one() {
        assert_eq!(rouge_l("the cat sat", "the cat sat").unwrap(), 1.0);
    }

    #[test]
    fn rouge_disjoint_is_zero() {
        assert_eq!(rouge_l("x y", "a b").unwrap(), 0.0);
    }

    #[test]
    fn rouge_prefix_case() {
        // LCS = 2, P = 1, R = 2/3, F1 = 0.8.
        assert!((rouge_l("the cat", "the cat sat").unwrap() - 0.8).abs() < 1e-9);
    }

    #[test]
    fn divergence_identical_is_zero() {
        assert_eq!(lexical_divergence("a b c", "a b c").unwrap(), 0.0);
    }

    #[test]
    fn divergence_disjoint_is_one() {
        assert_eq!(lexical_divergence("a b", "x y").unwrap(), 1.0);
    }

    #[test]
    fn divergence_single_substitution() {
        assert_eq!(lexical_divergence("a b c d", "a b x d").unwrap(), 0.25);
    }

    #[test]
    fn divergence_is_symmetric() {
        let ab = lexical_divergence("a b c", "b c d e").unwrap();
        let ba = lexical_divergence("b c d e", "a b c").unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn consistency_identical_texts_is_one() {
        let texts = vec!["same answer".to_string(); 5];
        for backend in [SimilarityBackend::LexicalBleu, SimilarityBackend::LexicalRougeL] {
            assert_eq!(pairwise_consistency(&texts, &backend).unwrap(), 1.0);
        }
    }

    #[test]
    fn consistency_disjoint_bleu_is_zero() {
        let texts = vec!["w x y z".to_string(), "a b c d".to_string()];
        assert_eq!(
            pairwise_consistency(&texts, &SimilarityBackend::LexicalBleu).unwrap(),
            0.0
        );
    }

    #[test]
    fn consistency_rouge_mixed_pair_scores() {
        // Pair scores (1, 0, 0) average to 1/3.
        let texts = vec!["a b".to_string(), "a b".to_string(), "c d".to_string()];
        let score = pairwise_consistency(&texts, &SimilarityBackend::LexicalRougeL).unwrap();
        assert!((score - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn consistency_rejects_single_text() {
        let texts = vec!["only one".to_string()];
        assert!(matches!(
            pairwise_consistency(&texts, &SimilarityBackend::LexicalBleu),
            Err(TextSimError::TooFewTexts(1))
        ));
    }

    #[test]
    fn consistency_is_permutation_invariant_for_directed_backends() {
        let texts = vec![
            "the cat sat on the mat".to_string(),
            "a dog ran in the park".to_string(),
            "the cat ran in the park".to_string(),
        ];
        let reversed: Vec<String> = texts.iter().rev().cloned().collect();
        for backend in [SimilarityBackend::LexicalBleu, SimilarityBackend::LexicalRougeL] {
            let a = pairwise_consistency(&texts, &backend).unwrap();
            let b = pairwise_consistency(&reversed, &backend).unwrap();
            assert!((a - b).abs() < 1e-15, "{backend:?}");
        }
    }

    struct FixedEmbedder(Vec<Vec<f64>>);

    impl TextEmbedder for FixedEmbedder {
        fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
            // Index by trailing digit so tests can pick vectors per text.
            texts
                .iter()
                .map(|t| {
                    let idx: usize = t.chars().last().unwrap().to_digit(10).unwrap() as usize;
                    Ok(EmbeddingVector::new(self.0[idx].clone())?)
                })
                .collect()
        }
    }

    #[test]
    fn semantic_backend_scores_clamped_cosine() {
        let embedder = Arc::new(FixedEmbedder(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
        ]));
        let backend = SimilarityBackend::SemanticCosine(embedder);
        assert_eq!(backend.score("t0", "t0").unwrap(), 1.0);
        assert_eq!(backend.score("t0", "t1").unwrap(), 0.0);
        // Negative cosine clamps to zero.
        assert_eq!(backend.score("t0", "t2").unwrap(), 0.0);
    }

    #[test]
    fn quality_identical_candidate_scores_beta() {
        let c = paraphrase_quality("a b c", "a b c", 1.0, DEFAULT_QUALITY_BETA).unwrap();
        assert!((c.quality - 0.7).abs() < 1e-12);
        assert!(c.quality < DEFAULT_QUALITY_THRESHOLD);
    }

    #[test]
    fn quality_fully_divergent_perfect_meaning_is_one() {
        let c = paraphrase_quality("a b", "x y", 1.0, DEFAULT_QUALITY_BETA).unwrap();
        assert!((c.quality - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quality_mixed_case() {
        // divergence("a b c d", "a b x d") = 0.25... use sem 0.9 / div 0.5 shape:
        let c = paraphrase_quality("a b c d", "x y c d", 0.9, 0.7).unwrap();
        assert_eq!(c.lexical_div, 0.5);
        assert!((c.quality - 0.78).abs() < 1e-12);
    }

    #[test]
    fn quality_rejects_out_of_range_similarity() {
        assert!(matches!(
            paraphrase_quality("a", "b", 1.2, 0.7),
            Err(TextSimError::SemanticSimOutOfRange(_))
        ));
    }

    #[test]
    fn quality_is_monotone_in_both_inputs() {
        let base = paraphrase_quality("a b c d", "a b c e", 0.5, 0.7).unwrap();
        let higher_sem = paraphrase_quality("a b c d", "a b c e", 0.6, 0.7).unwrap();
        assert!(higher_sem.quality >= base.quality);
        let more_divergent = paraphrase_quality("a b c d", "a x y e", 0.5, 0.7).unwrap();
        assert!(more_divergent.quality >= base.quality);
    }

    fn candidate(quality: f64) -> ParaphraseCandidate {
        ParaphraseCandidate {
            text: format!("q{quality}"),
            semantic_sim: quality,
            lexical_div: quality,
            quality,
        }
    }

    #[test]
    fn filter_keeps_strictly_above_threshold() {
        let kept = filter_paraphrases(
            vec![candidate(0.81), candidate(0.79), candidate(0.85)],
            0.8,
        );
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].quality, 0.81);
        assert_eq!(kept[1].quality, 0.85);

        assert_eq!(filter_paraphrases(vec![candidate(0.9); 3], 0.8).len(), 3);
        assert!(filter_paraphrases(vec![candidate(0.5); 3], 0.8).is_empty());
    }
}
