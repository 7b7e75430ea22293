//! Prompt templates for the four generation tasks.
//!
//! Template scaffolds are fixed strings with named placeholders; rendering
//! fails if any placeholder is left unbound. The scaffold text is covered
//! by golden-file tests, so any edit to the wording is a deliberate,
//! visible change.

use super::GatewayError;

/// The four generation tasks the pipeline dispatches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Paraphrase,
    Rot,
    Answer,
    AnswerWithRot,
}

impl PromptKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Paraphrase => "paraphrase",
            Self::Rot => "rot",
            Self::Answer => "answer",
            Self::AnswerWithRot => "answer_with_rot",
        }
    }
}

const PARAPHRASE_TEMPLATE: &str = "\
Instruction: Your task is to generate multiple paraphrased sentences. Do not change the meaning of the text and be concise.

Sentence: What should you do if you find a lost wallet on the street?

Paraphrases:
1. If you come across a lost wallet on the street, what should you do?
2. What is the right thing to do when you find a wallet someone lost on the street?
3. Suppose you spot a lost wallet lying on the street. What should you do with it?
4. How should you handle finding a wallet that someone has lost on the street?
5. What ought you to do upon finding a lost wallet on the street?

Sentence: {question}

Paraphrases:";

const ROT_TEMPLATE: &str = "\
A Rule of Thumb (RoT) is a fundamental judgment about right and wrong behavior. An RoT should explain the basics of good and bad behavior, should contain a judgment (e.g. \u{201c}you should\u{201d}) and an action (e.g. \u{201c}give money to the poor\u{201d}) and make a general rule but still provide enough detail such that it is understandable even out of context.

Instruction: Generate the rule of thumb for the task question-answer pair: be as concise as possible.

Question: When is it worth it to fight a losing battle?

Answer: It is never worth it.

Rule of Thumb: Cowardice saves you from fights you cannot win.

Question: {question}

Answer: {answer}

Rule of Thumb:";

const ANSWER_TEMPLATE: &str = "\
Instruction: Answer the following question.

Question: {question}

Answer:";

const ANSWER_WITH_ROT_TEMPLATE: &str = "\
Instruction: Answer the following question.
Keep in mind this rule of thumb, {rot}

Question: {question}

Answer:";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Placeholder(String),
}

/// An ordered sequence of literal text and named placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    kind: PromptKind,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn for_kind(kind: PromptKind) -> Self {
        let raw = match kind {
            PromptKind::Paraphrase => PARAPHRASE_TEMPLATE,
            PromptKind::Rot => ROT_TEMPLATE,
            PromptKind::Answer => ANSWER_TEMPLATE,
            PromptKind::AnswerWithRot => ANSWER_WITH_ROT_TEMPLATE,
        };
        Self {
            kind,
            segments: parse_segments(raw),
        }
    }

    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    pub fn placeholders(&self) -> Vec<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Placeholder(name) => Some(name.as_str()),
                Segment::Text(_) => None,
            })
            .collect()
    }

    /// Substitutes every placeholder; unbound placeholders are an error.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, GatewayError> {
        let mut out = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Text(text) => out.push_str(text),
                Segment::Placeholder(name) => {
                    let value = bindings
                        .iter()
                        .find(|(key, _)| key == name)
                        .map(|(_, value)| *value)
                        .ok_or_else(|| GatewayError::UnboundPlaceholder {
                            name: name.clone(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

fn parse_segments(raw: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find('{') {
        let close = rest[open..]
            .find('}')
            .map(|c| open + c)
            .expect("template placeholder is closed");
        if open > 0 {
            segments.push(Segment::Text(rest[..open].to_string()));
        }
        segments.push(Segment::Placeholder(rest[open + 1..close].to_string()));
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        segments.push(Segment::Text(rest.to_string()));
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_per_template() {
        assert_eq!(
            PromptTemplate::for_kind(PromptKind::Paraphrase).placeholders(),
            vec!["question"]
        );
        assert_eq!(
            PromptTemplate::for_kind(PromptKind::Rot).placeholders(),
            vec!["question", "answer"]
        );
        assert_eq!(
            PromptTemplate::for_kind(PromptKind::Answer).placeholders(),
            vec!["question"]
        );
        assert_eq!(
            PromptTemplate::for_kind(PromptKind::AnswerWithRot).placeholders(),
            vec!["rot", "question"]
        );
    }

    #[test]
    fn render_substitutes_all_placeholders() {
        let template = PromptTemplate::for_kind(PromptKind::Rot);
        let rendered = template
            .render(&[("question", "Q?"), ("answer", "A.")])
            .unwrap();
        assert!(rendered.contains("Question: Q?"));
        assert!(rendered.contains("Answer: A."));
        assert!(rendered.ends_with("Rule of Thumb:"));
        assert!(rendered.contains("Cowardice saves you from fights you cannot win."));
    }

    #[test]
    fn render_rejects_unbound_placeholder() {
        let template = PromptTemplate::for_kind(PromptKind::AnswerWithRot);
        let err = template.render(&[("question", "Q?")]).unwrap_err();
        assert!(matches!(err, GatewayError::UnboundPlaceholder { .. }));
    }

    #[test]
    fn extra_bindings_are_ignored() {
        let template = PromptTemplate::for_kind(PromptKind::Answer);
        let rendered = template
            .render(&[("question", "Q?"), ("unused", "x")])
            .unwrap();
        assert!(rendered.contains("Question: Q?"));
    }
}
