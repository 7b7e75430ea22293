//! Deterministic offline providers.
//!
//! Every output is a pure function of the stub seed and the request, so an
//! offline pipeline run is reproducible end to end. The chat stub answers
//! each prompt kind with a predictable shape; the embedding stub hashes
//! tokens into a bag-of-words vector so texts sharing words land near each
//! other, which gives the lexical and semantic metrics graded signals to
//! work with.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{ChatProvider, ChatRequest, EmbeddingBackend, GatewayError};
use crate::gateway::prompts::PromptKind;
use crate::textsim::tokenize;

pub const STUB_EMBEDDING_DIM: usize = 64;

/// How the chat stub answers question prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StubAnswerMode {
    /// One fixed answer for every prompt: a perfectly consistent model.
    Constant,
    /// Answer words derived from the question digest: any change to the
    /// question wording changes the answer.
    #[default]
    QuestionDigest,
}

/// How the chat stub produces paraphrase candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StubParaphraseMode {
    /// Word rotations of the source: token-identical (so semantically
    /// equivalent under bag-of-words embeddings) but lexically reordered.
    #[default]
    Rotate,
    /// Punctuation-only changes: candidates that tokenize identically to
    /// the source and should fail the lexical-diversity bar.
    PunctuationOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StubConfig {
    pub seed: u64,
    pub answer_mode: StubAnswerMode,
    pub paraphrase_mode: StubParaphraseMode,
    /// When set, answer generations at temperature T replace each word
    /// with sample-specific noise with probability T/(1+T). The noisy
    /// positions are nested across temperatures, so divergence between
    /// repeated draws can only grow with T.
    pub temperature_noise: bool,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            answer_mode: StubAnswerMode::default(),
            paraphrase_mode: StubParaphraseMode::default(),
            temperature_noise: false,
        }
    }
}

const CONSTANT_ANSWER: &str = "It is important to act with honesty and care.";
const GENERIC_COMPLETION: &str = "Acknowledged.";

const LEXICON: &[&str] = &[
    "people", "should", "always", "consider", "others", "before", "acting", "kindness",
    "matters", "honesty", "builds", "trust", "respect", "everyone", "fairness", "guides",
    "choices", "help", "those", "in", "need", "avoid", "causing", "harm", "keep", "your",
    "promises", "listen", "first", "then", "speak", "carefully",
];

fn rng_for(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn lexicon_words(rng: &mut ChaCha8Rng, count: usize) -> Vec<&'static str> {
    (0..count)
        .map(|_| LEXICON[rng.gen_range(0..LEXICON.len())])
        .collect()
}

/// Offline chat provider.
#[derive(Debug, Clone)]
pub struct StubChatProvider {
    config: StubConfig,
}

impl StubChatProvider {
    pub fn new(config: StubConfig) -> Self {
        Self { config }
    }

    fn base_answer(&self, question: &str) -> String {
        match self.config.answer_mode {
            StubAnswerMode::Constant => CONSTANT_ANSWER.to_string(),
            StubAnswerMode::QuestionDigest => {
                let mut rng = rng_for(self.config.seed, &[b"answer", question.as_bytes()]);
                lexicon_words(&mut rng, 12).join(" ")
            }
        }
    }

    fn apply_noise(&self, answer: &str, question: &str, request: &ChatRequest) -> String {
        let temperature = request.config.temperature;
        if !self.config.temperature_noise || temperature <= 0.0 {
            return answer.to_string();
        }
        let replace_probability = temperature / (1.0 + temperature);
        let words: Vec<String> = answer
            .split_whitespace()
            .enumerate()
            .map(|(position, word)| {
                let mut rng = rng_for(
                    self.config.seed,
                    &[
                        b"noise",
                        question.as_bytes(),
                        &request.config.sample_index.to_le_bytes(),
                        &(position as u64).to_le_bytes(),
                    ],
                );
                let draw: f64 = rng.gen();
                if draw < replace_probability {
                    format!("zz{:06x}", rng.gen_range(0..0x100_0000u32))
                } else {
                    word.to_string()
                }
            })
            .collect();
        words.join(" ")
    }

    fn paraphrase_lines(&self, question: &str) -> String {
        match self.config.paraphrase_mode {
            StubParaphraseMode::Rotate => {
                let words: Vec<&str> = question.split_whitespace().collect();
                let m = words.len().max(1);
                (1..=5)
                    .map(|i| {
                        // Spread rotations across the whole length so the
                        // reorderings stay lexically far from the source.
                        let amount = ((m * i + 5) / 6).max(1) % m;
                        let mut rotated = words.clone();
                        rotated.rotate_left(amount);
                        format!("{}. {}", i, rotated.join(" "))
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            StubParaphraseMode::PunctuationOnly => {
                let rewrapped = if let Some(stripped) = question.strip_suffix('?') {
                    format!("{stripped}.")
                } else {
                    format!("{question}.")
                };
                (1..=5)
                    .map(|i| format!("{i}. {rewrapped}"))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
        }
    }

    fn binding<'a>(request: &'a ChatRequest, name: &str) -> &'a str {
        request
            .bindings
            .iter()
            .find(|(key, _)| *key == name)
            .map(|(_, value)| *value)
            .unwrap_or("")
    }
}

impl ChatProvider for StubChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let completion = match request.kind {
            Some(PromptKind::Paraphrase) => {
                self.paraphrase_lines(Self::binding(request, "question"))
            }
            Some(PromptKind::Answer) => {
                let question = Self::binding(request, "question");
                self.apply_noise(&self.base_answer(question), question, request)
            }
            Some(PromptKind::AnswerWithRot) => {
                let question = Self::binding(request, "question");
                let rot = Self::binding(request, "rot");
                let base = format!("Keeping in mind that {rot} {}", self.base_answer(question));
                self.apply_noise(&base, question, request)
            }
            Some(PromptKind::Rot) => {
                // Depends only on the answer: a model that gives the same
                // answer is following the same rule.
                let answer = Self::binding(request, "answer");
                let mut rng = rng_for(self.config.seed, &[b"rot", answer.as_bytes()]);
                format!("You should {}.", lexicon_words(&mut rng, 4).join(" "))
            }
            None => match self.config.answer_mode {
                StubAnswerMode::Constant => GENERIC_COMPLETION.to_string(),
                StubAnswerMode::QuestionDigest => {
                    let mut rng =
                        rng_for(self.config.seed, &[b"generic", request.prompt.as_bytes()]);
                    lexicon_words(&mut rng, 8).join(" ")
                }
            },
        };
        Ok(completion)
    }
}

/// Always returns the same fixed completion. Handy in tests that need full
/// control over the raw completion text.
#[derive(Debug, Clone)]
pub struct FixedChatProvider(pub String);

impl ChatProvider for FixedChatProvider {
    fn complete(&self, _request: &ChatRequest) -> Result<String, GatewayError> {
        Ok(self.0.clone())
    }
}

/// Offline embedding provider: summed hash vectors of the sorted tokens.
///
/// Token order does not affect the vector, identical texts map to
/// bit-identical vectors, and unrelated texts land nearly orthogonal in 64
/// dimensions.
#[derive(Debug, Clone)]
pub struct StubEmbeddingProvider {
    seed: u64,
    dim: usize,
}

impl StubEmbeddingProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            dim: STUB_EMBEDDING_DIM,
        }
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = rng_for(self.seed, &[b"token", token.as_bytes()]);
        (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn text_vector(&self, text: &str) -> Vec<f64> {
        let mut tokens = tokenize(text);
        tokens.sort();
        if tokens.is_empty() {
            // Punctuation-only text still needs a stable nonzero vector.
            return self.token_vector(text);
        }
        let mut sum = vec![0.0; self.dim];
        for token in &tokens {
            for (acc, component) in sum.iter_mut().zip(self.token_vector(token)) {
                *acc += component;
            }
        }
        sum
    }
}

impl EmbeddingBackend for StubEmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        Ok(texts.iter().map(|t| self.text_vector(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::GenerationConfig;

    fn request<'a>(
        kind: Option<PromptKind>,
        bindings: &'a [(&'a str, &'a str)],
        config: &'a GenerationConfig,
    ) -> ChatRequest<'a> {
        ChatRequest {
            prompt: "rendered prompt",
            config,
            kind,
            bindings,
        }
    }

    #[test]
    fn constant_mode_always_answers_the_same() {
        let stub = StubChatProvider::new(StubConfig {
            answer_mode: StubAnswerMode::Constant,
            ..StubConfig::default()
        });
        let config = GenerationConfig::new("stub-model");
        let bindings_a = [("question", "one question")];
        let bindings_b = [("question", "a different question")];
        let a = stub
            .complete(&request(Some(PromptKind::Answer), &bindings_a, &config))
            .unwrap();
        let b = stub
            .complete(&request(Some(PromptKind::Answer), &bindings_b, &config))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, CONSTANT_ANSWER);
    }

    #[test]
    fn digest_mode_is_deterministic_and_question_sensitive() {
        let stub = StubChatProvider::new(StubConfig::default());
        let config = GenerationConfig::new("stub-model");
        let bindings = [("question", "is it ok to lie")];
        let first = stub
            .complete(&request(Some(PromptKind::Answer), &bindings, &config))
            .unwrap();
        let second = stub
            .complete(&request(Some(PromptKind::Answer), &bindings, &config))
            .unwrap();
        assert_eq!(first, second);

        let other_bindings = [("question", "ok to lie is it")];
        let other = stub
            .complete(&request(Some(PromptKind::Answer), &other_bindings, &config))
            .unwrap();
        assert_ne!(first, other);
    }

    #[test]
    fn noise_is_nested_across_temperatures() {
        let stub = StubChatProvider::new(StubConfig {
            temperature_noise: true,
            ..StubConfig::default()
        });
        let bindings = [("question", "is it ok to lie")];
        let mut low = GenerationConfig::new("stub-model");
        low.temperature = 0.2;
        low.sample_index = 3;
        let mut high = low.clone();
        high.temperature = 1.5;

        let base_config = GenerationConfig::new("stub-model");
        let base = stub
            .complete(&request(Some(PromptKind::Answer), &bindings, &base_config))
            .unwrap();
        let low_text = stub
            .complete(&request(Some(PromptKind::Answer), &bindings, &low))
            .unwrap();
        let high_text = stub
            .complete(&request(Some(PromptKind::Answer), &bindings, &high))
            .unwrap();

        let base_words: Vec<&str> = base.split_whitespace().collect();
        let low_words: Vec<&str> = low_text.split_whitespace().collect();
        let high_words: Vec<&str> = high_text.split_whitespace().collect();
        assert_eq!(base_words.len(), low_words.len());
        assert_eq!(base_words.len(), high_words.len());
        for i in 0..base_words.len() {
            // A position kept at high temperature is kept at low too, and a
            // position replaced at low keeps the same replacement at high.
            if high_words[i] == base_words[i] {
                assert_eq!(low_words[i], base_words[i]);
            }
            if low_words[i] != base_words[i] {
                assert_eq!(high_words[i], low_words[i]);
            }
        }
    }

    #[test]
    fn zero_temperature_disables_noise() {
        let stub = StubChatProvider::new(StubConfig {
            temperature_noise: true,
            ..StubConfig::default()
        });
        let bindings = [("question", "is it ok to lie")];
        let mut config = GenerationConfig::new("stub-model");
        config.sample_index = 7;
        let with_sample = stub
            .complete(&request(Some(PromptKind::Answer), &bindings, &config))
            .unwrap();
        config.sample_index = 0;
        let without = stub
            .complete(&request(Some(PromptKind::Answer), &bindings, &config))
            .unwrap();
        assert_eq!(with_sample, without);
    }

    #[test]
    fn rot_depends_only_on_the_answer() {
        let stub = StubChatProvider::new(StubConfig::default());
        let config = GenerationConfig::new("stub-model");
        let a = [("question", "q one"), ("answer", "same answer")];
        let b = [("question", "q two"), ("answer", "same answer")];
        let rot_a = stub
            .complete(&request(Some(PromptKind::Rot), &a, &config))
            .unwrap();
        let rot_b = stub
            .complete(&request(Some(PromptKind::Rot), &b, &config))
            .unwrap();
        assert_eq!(rot_a, rot_b);
        assert!(rot_a.starts_with("You should "));
    }

    #[test]
    fn answer_with_rot_echoes_the_rot() {
        let stub = StubChatProvider::new(StubConfig::default());
        let config = GenerationConfig::new("stub-model");
        let bindings = [
            ("question", "should i return it"),
            ("rot", "you should return what you find"),
        ];
        let text = stub
            .complete(&request(Some(PromptKind::AnswerWithRot), &bindings, &config))
            .unwrap();
        assert!(text.contains("you should return what you find"));
    }

    #[test]
    fn paraphrase_rotations_are_enumerated_lines() {
        let stub = StubChatProvider::new(StubConfig::default());
        let config = GenerationConfig::new("stub-model");
        let bindings = [("question", "is it wrong to lie to a friend")];
        let lines = stub
            .complete(&request(Some(PromptKind::Paraphrase), &bindings, &config))
            .unwrap();
        let lines: Vec<&str> = lines.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("1. "));
        // m = 8 tokens, first rotation amount is ceil(8/6) = 2.
        assert!(lines[0].ends_with("wrong to lie to a friend is it"));
    }

    #[test]
    fn punctuation_only_mode_keeps_tokens() {
        let stub = StubChatProvider::new(StubConfig {
            paraphrase_mode: StubParaphraseMode::PunctuationOnly,
            ..StubConfig::default()
        });
        let config = GenerationConfig::new("stub-model");
        let bindings = [("question", "is it ok?")];
        let lines = stub
            .complete(&request(Some(PromptKind::Paraphrase), &bindings, &config))
            .unwrap();
        assert!(lines.lines().all(|l| l.ends_with("is it ok.")));
    }

    #[test]
    fn embedding_stub_is_order_invariant_and_deterministic() {
        let stub = StubEmbeddingProvider::new(7);
        let out = stub
            .embed(&[
                "the cat sat".to_string(),
                "sat the cat".to_string(),
                "the cat sat".to_string(),
                "a dog barked".to_string(),
            ])
            .unwrap();
        assert_eq!(out[0].len(), STUB_EMBEDDING_DIM);
        assert_eq!(out[0], out[1]);
        assert_eq!(out[0], out[2]);
        assert_ne!(out[0], out[3]);
    }

    #[test]
    fn embedding_stub_handles_tokenless_text() {
        let stub = StubEmbeddingProvider::new(7);
        let out = stub.embed(&["?!".to_string()]).unwrap();
        assert!(out[0].iter().any(|c| *c != 0.0));
    }
}
