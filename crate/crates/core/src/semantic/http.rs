use serde::{Deserialize, Serialize};

use super::{EmbeddingProvider, ProviderError};
use crate::config::HttpSettings;
use crate::domain::Embedding;

/// Client for an OpenAI-compatible `POST {base_url}/embeddings` endpoint.
///
/// Request: `{"model": "...", "input": ["text", ...]}`.
/// Response: `{"data": [{"index": 0, "embedding": [f64, ...]}, ...]}`.
pub struct HttpEmbedder {
    settings: HttpSettings,
    api_key: Option<String>,
    dimension: usize,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

pub(crate) fn agent(settings: &HttpSettings) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(settings.timeout()))
        .build()
        .into()
}

/// POSTs JSON with retries on transport errors and 5xx responses.
pub(crate) fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    retries: u32,
    body: &Req,
) -> Result<Resp, ProviderError> {
    let mut last = String::new();
    for _ in 0..=retries {
        let mut req = agent.post(url);
        if let Some(key) = api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => {
                return resp
                    .body_mut()
                    .read_json::<Resp>()
                    .map_err(|e| ProviderError::BadResponse(e.to_string()));
            }
            Err(ureq::Error::StatusCode(code)) if code < 500 => {
                return Err(ProviderError::Unavailable(format!("{url} returned {code}")));
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(ProviderError::Unavailable(last))
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings, dimension: usize) -> Result<Self, ProviderError> {
        let api_key = settings.api_key()?;
        let agent = agent(&settings);
        Ok(HttpEmbedder {
            settings,
            api_key,
            dimension,
            agent,
        })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let url = format!("{}/embeddings", self.settings.base_url.trim_end_matches('/'));
        let resp: EmbeddingResponse = post_json(
            &self.agent,
            &url,
            self.api_key.as_deref(),
            self.settings.retries,
            &EmbeddingRequest {
                model: &self.settings.model,
                input: texts,
            },
        )?;
        if resp.data.len() != texts.len() {
            return Err(ProviderError::BadResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                resp.data.len()
            )));
        }
        let mut out: Vec<Option<Embedding>> = vec![None; texts.len()];
        for d in resp.data {
            if d.embedding.len() != self.dimension {
                return Err(ProviderError::BadResponse(format!(
                    "expected dimension {}, got {}",
                    self.dimension,
                    d.embedding.len()
                )));
            }
            let slot = out
                .get_mut(d.index)
                .ok_or_else(|| ProviderError::BadResponse(format!("index {} out of range", d.index)))?;
            *slot = Some(Embedding::new(d.embedding).map_err(|e| ProviderError::BadResponse(e.to_string()))?);
        }
        out.into_iter()
            .map(|e| e.ok_or_else(|| ProviderError::BadResponse("missing index".into())))
            .collect()
    }
}
