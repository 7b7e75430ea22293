//! Blocking HTTP providers speaking the widely adopted chat-completion and
//! embedding wire shapes, so any compatible endpoint or local server works
//! without code changes.
//!
//! Chat: `POST {base}/v1/chat/completions` with
//! `{model, messages:[{role,content}], temperature, max_tokens}`, reading
//! `choices[0].message.content`. Embeddings: `POST {base}/v1/embeddings`
//! with `{model, input:[texts]}`, reading `data[*].embedding` ordered by
//! the `index` field when present.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, EmbeddingBackend, GatewayError};

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

fn build_client() -> Result<reqwest::blocking::Client, GatewayError> {
    reqwest::blocking::Client::builder()
        .timeout(DEFAULT_TIMEOUT)
        .build()
        .map_err(|e| GatewayError::Transport(e.to_string()))
}

fn classify_status(status: u16, body: String) -> GatewayError {
    if status == 429 || status >= 500 {
        GatewayError::Throttled(format!("status {status}: {body}"))
    } else {
        GatewayError::Endpoint { status, body }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatCompletionRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct HttpChatProvider {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpChatProvider {
    pub fn new(base_url: &str, api_key: Option<String>) -> Result<Self, GatewayError> {
        Ok(Self {
            client: build_client()?,
            url: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        })
    }
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = ChatCompletionRequest {
            model: &request.config.model_id,
            messages: vec![ChatMessage {
                role: "user",
                content: request.prompt,
            }],
            temperature: request.config.temperature,
            max_tokens: request.config.max_tokens,
        };
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, text));
        }
        let parsed: ChatCompletionResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::MalformedResponse(format!("chat response: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                GatewayError::MalformedResponse("chat response carries no choices".to_string())
            })?;
        Ok(content)
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    #[serde(default)]
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

pub struct HttpEmbeddingProvider {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
    model_id: String,
}

impl HttpEmbeddingProvider {
    pub fn new(
        base_url: &str,
        model_id: &str,
        api_key: Option<String>,
    ) -> Result<Self, GatewayError> {
        Ok(Self {
            client: build_client()?,
            url: format!("{}/v1/embeddings", base_url.trim_end_matches('/')),
            api_key,
            model_id: model_id.to_string(),
        })
    }
}

impl EmbeddingBackend for HttpEmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let body = EmbeddingRequest {
            model: &self.model_id,
            input: texts,
        };
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, text));
        }
        let parsed: EmbeddingResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::MalformedResponse(format!("embedding response: {e}")))?;
        let mut data = parsed.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index.unwrap_or(0));
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}
