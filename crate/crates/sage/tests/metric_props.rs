//! Property tests for the scoring kernel, checked against a brute-force
//! oracle that evaluates the score definition directly from raw vectors.

use proptest::prelude::*;
use sage::metric::{EmbeddingVector, SemanticGraph};

/// Independent evaluation of the score from raw vectors: explicit loops,
/// literal Shannon entropy, no shared code with the library path.
fn oracle_sage(vectors: &[Vec<f64>]) -> f64 {
    let n = vectors.len();
    let cos = |a: &[f64], b: &[f64]| -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            sim[i][j] = if i == j {
                1.0
            } else {
                cos(&vectors[i], &vectors[j]).clamp(0.0, 1.0)
            };
        }
    }
    let f: Vec<f64> = (0..n).map(|i| sim[i].iter().sum()).collect();
    let total: f64 = f.iter().sum();
    let p: Vec<f64> = f.iter().map(|fi| fi / total).collect();
    let entropy: f64 = -p
        .iter()
        .filter(|&&pi| pi > 0.0)
        .map(|pi| pi * pi.ln())
        .sum::<f64>();
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off += sim[i][j];
            }
        }
    }
    let lambda = 1.0 - off / (n * (n - 1)) as f64;
    (1.0 - lambda * entropy / (n as f64).ln()).clamp(0.0, 1.0)
}

fn graph_from(vectors: &[Vec<f64>]) -> SemanticGraph {
    let embeddings = vectors
        .iter()
        .map(|v| EmbeddingVector::new(v.clone()).unwrap())
        .collect();
    SemanticGraph::build(embeddings).unwrap()
}

fn vector_set() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=10).prop_flat_map(|n| {
        prop::collection::vec(
            prop::collection::vec(-5.0f64..5.0, 8)
                .prop_filter("nonzero", |v| v.iter().any(|c| c.abs() > 1e-3)),
            n,
        )
    })
}

proptest! {
    #[test]
    fn sage_stays_in_unit_interval(vectors in vector_set()) {
        let b = graph_from(&vectors).sage_score();
        prop_assert!((0.0..=1.0).contains(&b.sage));
    }

    #[test]
    fn sage_matches_oracle(vectors in vector_set()) {
        let got = graph_from(&vectors).sage_score().sage;
        let want = oracle_sage(&vectors);
        prop_assert!((got - want).abs() < 1e-9, "got {got}, oracle {want}");
    }

    #[test]
    fn sage_is_permutation_invariant(vectors in vector_set(), seed in any::<u64>()) {
        let base = graph_from(&vectors).sage_score().sage;
        let mut shuffled = vectors.clone();
        // Fisher–Yates with a truncated xorshift so the case is reproducible.
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state as usize) % (i + 1));
        }
        let permuted = graph_from(&shuffled).sage_score().sage;
        prop_assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn sage_is_scale_invariant(vectors in vector_set(), which in any::<prop::sample::Index>(), factor in 0.01f64..100.0) {
        let base = graph_from(&vectors).sage_score().sage;
        let mut scaled = vectors.clone();
        let idx = which.index(scaled.len());
        for c in &mut scaled[idx] {
            *c *= factor;
        }
        let rescored = graph_from(&scaled).sage_score().sage;
        prop_assert!((base - rescored).abs() < 1e-12);
    }

    #[test]
    fn information_functional_bounds(vectors in vector_set()) {
        let g = graph_from(&vectors);
        let n = g.len() as f64;
        for i in 0..g.len() {
            let f = g.information_functional(i).unwrap();
            prop_assert!((1.0..=n).contains(&f));
        }
    }
}

#[test]
fn equicorrelated_graphs_score_their_similarity() {
    // Vertices sqrt(s)·e0 + sqrt(1-s)·e_i have pairwise cosine exactly s,
    // so the closed form sage = s must hold on the whole grid.
    for n in [2usize, 3, 5, 10] {
        for step in 0..=10 {
            let s = step as f64 / 10.0;
            let dim = n + 1;
            let vectors: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut v = vec![0.0; dim];
                    v[0] = s.sqrt();
                    v[i + 1] = (1.0 - s).sqrt();
                    v
                })
                .collect();
            let sage = graph_from(&vectors).sage_score().sage;
            assert!(
                (sage - s).abs() < 1e-9,
                "n = {n}, s = {s}: sage = {sage}"
            );
        }
    }
}
