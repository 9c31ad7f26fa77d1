use serde::{Deserialize, Serialize};

use super::prompt::split_roles;
use super::SummaryProvider;
use crate::config::HttpSettings;
use crate::semantic::http::{agent, post_json};
use crate::semantic::ProviderError;

/// Client for an OpenAI-compatible `POST {base_url}/chat/completions`.
///
/// The prompt's system part (before the `---` line) becomes a `system`
/// message and the rest a `user` message; the reply is
/// `choices[0].message.content`.
pub struct HttpSummarizer {
    settings: HttpSettings,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

impl HttpSummarizer {
    pub fn new(settings: HttpSettings) -> Result<Self, ProviderError> {
        let api_key = settings.api_key()?;
        let agent = agent(&settings);
        Ok(HttpSummarizer {
            settings,
            api_key,
            agent,
        })
    }
}

impl SummaryProvider for HttpSummarizer {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let (system, user) = split_roles(prompt);
        let mut messages = Vec::new();
        if let Some(system) = system {
            messages.push(ChatMessage {
                role: "system",
                content: system,
            });
        }
        messages.push(ChatMessage {
            role: "user",
            content: user,
        });
        let url = format!(
            "{}/chat/completions",
            self.settings.base_url.trim_end_matches('/')
        );
        let resp: ChatResponse = post_json(
            &self.agent,
            &url,
            self.api_key.as_deref(),
            self.settings.retries,
            &ChatRequest {
                model: &self.settings.model,
                messages,
                temperature: 0.0,
            },
        )?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| ProviderError::BadResponse("no completion content".into()))
    }
}
