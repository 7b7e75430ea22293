//! Semantic graphs over sentence embeddings and the SaGE consistency score.
//!
//! A response set is scored by embedding each sentence, building a complete
//! weighted graph whose edge weights are clamped cosine similarities, and
//! computing the entropy of the vertex distribution induced by an
//! information functional (each vertex's total similarity mass). The entropy
//! is scaled by the mean pairwise cosine distance and normalized by `ln n`,
//! giving a score in `[0, 1]` where 1 means all responses agree and 0 means
//! they are mutually unrelated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from embedding and graph construction.
#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("embedding must have at least one component")]
    EmptyEmbedding,
    #[error("embedding component {index} is not finite")]
    NonFiniteComponent { index: usize },
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("semantic graph needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex index {index} out of range for graph with {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("probability {0} is negative")]
    NegativeProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    UnnormalizedProbabilities(f64),
}

/// A sentence embedding: a finite, nonzero real vector.
///
/// Construction validates the invariants once; every downstream operation
/// can then assume a well-formed vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Result<Self, MetricError> {
        if components.is_empty() {
            return Err(MetricError::EmptyEmbedding);
        }
        for (index, c) in components.iter().enumerate() {
            if !c.is_finite() {
                return Err(MetricError::NonFiniteComponent { index });
            }
        }
        if components.iter().all(|c| *c == 0.0) {
            return Err(MetricError::ZeroNorm);
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = MetricError;

    fn try_from(components: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(components)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.components
    }
}

/// Cosine similarity `dot(a,b) / (‖a‖‖b‖)`.
///
/// Component-wise equal vectors short-circuit to exactly 1.0, so a graph
/// over identical responses carries an all-ones similarity matrix with no
/// floating-point residue.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if a.components == b.components {
        return Ok(1.0);
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.components.iter().zip(&b.components) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// A complete weighted graph over sentence embeddings.
///
/// Edge weights are cosine similarities clamped to `[0, 1]`; the diagonal is
/// exactly 1. The distance view is `1 - similarity`.
#[derive(Debug, Clone)]
pub struct SemanticGraph {
    vertices: Vec<EmbeddingVector>,
    sim: Vec<f64>, // row-major n×n
    n: usize,
}

impl SemanticGraph {
    /// Builds the graph from at least two embeddings of equal dimension.
    ///
    /// Negative cosines are clamped to 0 so vertex masses stay at least 1
    /// and distances stay within `[0, 1]`.
    pub fn build(embeddings: Vec<EmbeddingVector>) -> Result<Self, MetricError> {
        let n = embeddings.len();
        if n < 2 {
            return Err(MetricError::TooFewVertices(n));
        }
        let dim = embeddings[0].dim();
        for e in &embeddings[1..] {
            if e.dim() != dim {
                return Err(MetricError::DimensionMismatch {
                    left: dim,
                    right: e.dim(),
                });
            }
        }
        let mut sim = vec![0.0; n * n];
        for i in 0..n {
            sim[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let c = cosine_similarity(&embeddings[i], &embeddings[j])?;
                let clamped = c.clamp(0.0, 1.0);
                sim[i * n + j] = clamped;
                sim[j * n + i] = clamped;
            }
        }
        Ok(Self {
            vertices: embeddings,
            sim,
            n,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires n >= 2
    }

    pub fn vertices(&self) -> &[EmbeddingVector] {
        &self.vertices
    }

    /// Clamped cosine similarity between vertices `i` and `j`.
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        self.sim[i * self.n + j]
    }

    /// Cosine distance view: `1 - similarity`, in `[0, 1]`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        1.0 - self.similarity(i, j)
    }

    /// Information functional of vertex `i`: the sum of its similarities to
    /// every vertex, itself included, so the value lies in `[1, n]`.
    pub fn information_functional(&self, i: usize) -> Result<f64, MetricError> {
        if i >= self.n {
            return Err(MetricError::IndexOutOfRange {
                index: i,
                len: self.n,
            });
        }
        Ok(self.row_sum(i))
    }

    fn row_sum(&self, i: usize) -> f64 {
        self.sim[i * self.n..(i + 1) * self.n].iter().sum()
    }

    /// Vertex distribution: each vertex's share of the total similarity mass.
    pub fn vertex_probabilities(&self) -> ProbabilityVector {
        let f: Vec<f64> = (0..self.n).map(|i| self.row_sum(i)).collect();
        let total: f64 = f.iter().sum();
        ProbabilityVector(f.into_iter().map(|fi| fi / total).collect())
    }

    /// Mean similarity over the `n(n-1)` ordered off-diagonal pairs.
    pub fn mean_pairwise_similarity(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    sum += self.sim[i * self.n + j];
                }
            }
        }
        sum / (self.n * (self.n - 1)) as f64
    }

    /// Computes the SaGE score with its full diagnostic breakdown.
    ///
    /// The entropy is evaluated as `ln F - Σ fᵢ ln fᵢ / F` with
    /// `F = Σ fᵢ`, which equals the Shannon entropy of the vertex
    /// distribution but keeps the boundary cases exact: identical inputs
    /// score 1 and mutually orthogonal inputs score 0 with no rounding
    /// residue.
    pub fn sage_score(&self) -> SageBreakdown {
        let f: Vec<f64> = (0..self.n).map(|i| self.row_sum(i)).collect();
        let total: f64 = f.iter().sum();
        let entropy_nats = total.ln() - f.iter().map(|fi| fi * fi.ln()).sum::<f64>() / total;
        let p = ProbabilityVector(f.iter().map(|fi| fi / total).collect());

        let mean_pairwise_sim = self.mean_pairwise_similarity();
        let scale_lambda = 1.0 - mean_pairwise_sim;
        let scaled_entropy = scale_lambda * entropy_nats;
        let sage_unclipped = 1.0 - scaled_entropy / (self.n as f64).ln();
        SageBreakdown {
            f,
            p,
            entropy_nats,
            mean_pairwise_sim,
            scale_lambda,
            scaled_entropy,
            sage_unclipped,
            sage: sage_unclipped.clamp(0.0, 1.0),
        }
    }
}

/// Convenience constructor mirroring [`SemanticGraph::build`].
pub fn build_semantic_graph(embeddings: Vec<EmbeddingVector>) -> Result<SemanticGraph, MetricError> {
    SemanticGraph::build(embeddings)
}

/// A discrete probability distribution: nonnegative entries summing to 1
/// within 1e-12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self, MetricError> {
        for &pi in &p {
            if pi < 0.0 || !pi.is_finite() {
                return Err(MetricError::NegativeProbability(pi));
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(MetricError::UnnormalizedProbabilities(sum));
        }
        Ok(Self(p))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = MetricError;

    fn try_from(p: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(p)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Self {
        p.0
    }
}

/// Shannon entropy in nats, with the convention `0 · ln 0 = 0`.
pub fn shannon_entropy(p: &ProbabilityVector) -> f64 {
    -p.0
        .iter()
        .filter(|&&pi| pi > 0.0)
        .map(|pi| pi * pi.ln())
        .sum::<f64>()
}

/// Every intermediate of a SaGE evaluation, for diagnostics and reports.
#[derive(Debug, Clone, Serialize)]
pub struct SageBreakdown {
    /// Information functional per vertex, each in `[1, n]`.
    pub f: Vec<f64>,
    /// Vertex probability distribution.
    pub p: ProbabilityVector,
    /// Graph entropy in nats.
    pub entropy_nats: f64,
    /// Mean off-diagonal similarity.
    pub mean_pairwise_sim: f64,
    /// Scaling factor: mean pairwise cosine distance, `1 - mean_pairwise_sim`.
    pub scale_lambda: f64,
    /// `scale_lambda * entropy_nats`.
    pub scaled_entropy: f64,
    /// `1 - scaled_entropy / ln(n)` before clipping.
    pub sage_unclipped: f64,
    /// Final score, clipped to `[0, 1]`.
    pub sage: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(components: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(components.to_vec()).unwrap()
    }

    #[test]
    fn embedding_rejects_invalid_input() {
        assert_eq!(
            EmbeddingVector::new(vec![]).unwrap_err(),
            MetricError::EmptyEmbedding
        );
        assert_eq!(
            EmbeddingVector::new(vec![1.0, f64::NAN]).unwrap_err(),
            MetricError::NonFiniteComponent { index: 1 }
        );
        assert_eq!(
            EmbeddingVector::new(vec![0.0, 0.0]).unwrap_err(),
            MetricError::ZeroNorm
        );
    }

    #[test]
    fn embedding_serde_revalidates() {
        let v: Result<EmbeddingVector, _> = serde_json::from_str("[0.0, 0.0]");
        assert!(v.is_err());
        let v: EmbeddingVector = serde_json::from_str("[1.0, 2.0]").unwrap();
        assert_eq!(v.components(), &[1.0, 2.0]);
    }

    #[test]
    fn cosine_identical_vectors() {
        assert_eq!(cosine_similarity(&ev(&[1.0, 0.0]), &ev(&[1.0, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn cosine_orthogonal_vectors() {
        assert_eq!(cosine_similarity(&ev(&[1.0, 0.0]), &ev(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn cosine_halfway() {
        let c = cosine_similarity(&ev(&[1.0, 1.0]), &ev(&[1.0, 0.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((c - 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn cosine_is_symmetric() {
        let a = ev(&[0.3, -0.2, 0.9]);
        let b = ev(&[1.4, 0.5, -0.1]);
        assert_eq!(
            cosine_similarity(&a, &b).unwrap(),
            cosine_similarity(&b, &a).unwrap()
        );
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let err = cosine_similarity(&ev(&[1.0]), &ev(&[1.0, 0.0])).unwrap_err();
        assert_eq!(err, MetricError::DimensionMismatch { left: 1, right: 2 });
    }

    #[test]
    fn graph_identical_copies_is_all_ones() {
        let g = SemanticGraph::build(vec![ev(&[1.0, 0.0]); 3]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.similarity(i, j), 1.0);
            }
        }
    }

    #[test]
    fn graph_orthogonal_pair_is_identity() {
        let g = SemanticGraph::build(vec![ev(&[1.0, 0.0]), ev(&[0.0, 1.0])]).unwrap();
        assert_eq!(g.similarity(0, 0), 1.0);
        assert_eq!(g.similarity(0, 1), 0.0);
        assert_eq!(g.similarity(1, 0), 0.0);
        assert_eq!(g.distance(0, 1), 1.0);
    }

    #[test]
    fn graph_clamps_negative_cosine() {
        let g = SemanticGraph::build(vec![ev(&[1.0, 0.0]), ev(&[-1.0, 0.0])]).unwrap();
        assert_eq!(g.similarity(0, 1), 0.0);
    }

    #[test]
    fn graph_rejects_single_vertex() {
        assert_eq!(
            SemanticGraph::build(vec![ev(&[1.0])]).unwrap_err(),
            MetricError::TooFewVertices(1)
        );
    }

    #[test]
    fn graph_rejects_mixed_dimensions() {
        let err = SemanticGraph::build(vec![ev(&[1.0, 0.0]), ev(&[1.0])]).unwrap_err();
        assert_eq!(err, MetricError::DimensionMismatch { left: 2, right: 1 });
    }

    fn mixed_graph() -> SemanticGraph {
        SemanticGraph::build(vec![ev(&[1.0, 0.0]), ev(&[1.0, 0.0]), ev(&[0.0, 1.0])]).unwrap()
    }

    #[test]
    fn information_functional_examples() {
        let all_same = SemanticGraph::build(vec![ev(&[2.0, 0.0]); 3]).unwrap();
        assert_eq!(all_same.information_functional(0).unwrap(), 3.0);

        let orth = SemanticGraph::build(vec![ev(&[1.0, 0.0]), ev(&[0.0, 1.0])]).unwrap();
        assert_eq!(orth.information_functional(0).unwrap(), 1.0);

        assert_eq!(mixed_graph().information_functional(0).unwrap(), 2.0);
    }

    #[test]
    fn information_functional_index_out_of_range() {
        let err = mixed_graph().information_functional(3).unwrap_err();
        assert_eq!(err, MetricError::IndexOutOfRange { index: 3, len: 3 });
    }

    #[test]
    fn vertex_probabilities_examples() {
        let all_same = SemanticGraph::build(vec![ev(&[1.0, 1.0]); 4]).unwrap();
        assert_eq!(all_same.vertex_probabilities().as_slice(), &[0.25; 4]);

        let orth = SemanticGraph::build(vec![ev(&[1.0, 0.0]), ev(&[0.0, 1.0])]).unwrap();
        assert_eq!(orth.vertex_probabilities().as_slice(), &[0.5, 0.5]);

        let p = mixed_graph().vertex_probabilities();
        assert_eq!(p.as_slice(), &[0.4, 0.4, 0.2]);
    }

    #[test]
    fn shannon_entropy_examples() {
        let degenerate = ProbabilityVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(shannon_entropy(&degenerate), 0.0);

        let uniform3 = ProbabilityVector::new(vec![1.0 / 3.0; 3]).unwrap();
        assert!((shannon_entropy(&uniform3) - 3.0_f64.ln()).abs() < 1e-12);

        let p = ProbabilityVector::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert!((shannon_entropy(&p) - 1.0549201679861442).abs() < 1e-12);
    }

    #[test]
    fn probability_vector_rejects_bad_input() {
        assert!(matches!(
            ProbabilityVector::new(vec![-0.1, 1.1]),
            Err(MetricError::NegativeProbability(_))
        ));
        assert!(matches!(
            ProbabilityVector::new(vec![0.5, 0.4]),
            Err(MetricError::UnnormalizedProbabilities(_))
        ));
    }

    #[test]
    fn mean_pairwise_similarity_examples() {
        let all_same = SemanticGraph::build(vec![ev(&[1.0, 2.0]); 3]).unwrap();
        assert_eq!(all_same.mean_pairwise_similarity(), 1.0);

        let orth = SemanticGraph::build(vec![ev(&[1.0, 0.0]), ev(&[0.0, 1.0])]).unwrap();
        assert_eq!(orth.mean_pairwise_similarity(), 0.0);

        assert!((mixed_graph().mean_pairwise_similarity() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sage_identical_embeddings_scores_one_exactly() {
        for n in [2, 3, 5, 8] {
            let g = SemanticGraph::build(vec![ev(&[0.3, 0.7, -0.1]); n]).unwrap();
            assert_eq!(g.sage_score().sage, 1.0, "n = {n}");
        }
    }

    #[test]
    fn sage_orthogonal_embeddings_score_zero() {
        for n in [2, 3, 5] {
            let embeddings: Vec<_> = (0..n)
                .map(|i| {
                    let mut c = vec![0.0; n];
                    c[i] = 1.0;
                    EmbeddingVector::new(c).unwrap()
                })
                .collect();
            let g = SemanticGraph::build(embeddings).unwrap();
            let b = g.sage_score();
            assert_eq!(b.sage, 0.0, "n = {n}");
            assert!(b.sage_unclipped.abs() < 1e-12);
        }
    }

    #[test]
    fn sage_mixed_graph_matches_hand_evaluation() {
        let b = mixed_graph().sage_score();
        assert!((b.entropy_nats - 1.0549201679861442).abs() < 1e-12);
        assert!((b.scale_lambda - 2.0 / 3.0).abs() < 1e-12);
        assert!((b.sage - 0.3598468547594924).abs() < 1e-12);
        // Matches the hand evaluation with 5-decimal intermediates.
        assert!((b.sage - 0.3599).abs() < 1e-4);
    }

    #[test]
    fn sage_breakdown_invariants() {
        let g = SemanticGraph::build(vec![
            ev(&[1.0, 0.2, 0.1]),
            ev(&[0.4, 0.9, -0.3]),
            ev(&[-0.2, 0.1, 0.8]),
            ev(&[0.5, 0.5, 0.5]),
        ])
        .unwrap();
        let b = g.sage_score();
        let n = g.len() as f64;
        for fi in &b.f {
            assert!(*fi >= 1.0 && *fi <= n);
        }
        assert!((b.scale_lambda - (1.0 - b.mean_pairwise_sim)).abs() < 1e-15);
        assert!((b.scaled_entropy - b.scale_lambda * b.entropy_nats).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&b.sage));
        // The identity-form entropy agrees with the literal Shannon entropy.
        assert!((b.entropy_nats - shannon_entropy(&b.p)).abs() < 1e-12);
        let sum: f64 = b.p.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
