//! JSON-over-HTTP adapters for remote describer and music generator
//! services.
//!
//! Describe: `POST {describe_url}` with
//! `{"image_b64": .., "format": "png", "labels": [..]}` answered by
//! `{"text": ".."}`.
//!
//! Generate: `POST {generate_url}` with
//! `{"context": .., "brief": .., "feedback": [..], "n": 3}` answered by
//! `{"options": [{"caption": .., "wav_b64": ..}, ..]}`.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use reqwest::blocking::{Client, Response};
use serde::{Deserialize, Serialize};

use soundscape_core::agent::{
    generation_context, BackendError, DescribeRequest, DescriberPort, GeneratedTrack, MusicGenPort,
    OPTIONS_PER_ROUND,
};

use crate::config::HttpBackendConfig;

pub const DESCRIBE_TIMEOUT: Duration = Duration::from_secs(30);
pub const GENERATE_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Serialize)]
struct DescribeBody<'a> {
    image_b64: Option<String>,
    format: &'static str,
    labels: &'a [String],
}

#[derive(Debug, Deserialize)]
struct DescribeReply {
    text: String,
}

#[derive(Debug, Serialize)]
struct GenerateBody<'a> {
    context: String,
    brief: &'a str,
    feedback: &'a [String],
    n: usize,
}

#[derive(Debug, Deserialize)]
struct GenerateOption {
    caption: String,
    wav_b64: String,
}

#[derive(Debug, Deserialize)]
struct GenerateReply {
    options: Vec<GenerateOption>,
}

/// Sends `body` to `url`, retrying once on transport errors and 5xx.
fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
    url: &str,
    token: Option<&str>,
    timeout: Duration,
    body: &B,
) -> Result<R, BackendError> {
    // The blocking client owns a runtime; build it on the calling (worker)
    // thread rather than inside the async server.
    let client = Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| BackendError(format!("http client: {e}")))?;
    let send = || -> Result<Response, String> {
        let mut req = client.post(url).json(body);
        if let Some(token) = token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| format!("{url}: {e}"))?;
        if resp.status().is_server_error() {
            return Err(format!("{url}: status {}", resp.status()));
        }
        Ok(resp)
    };
    let resp = match send() {
        Ok(r) => r,
        Err(first) => {
            log::warn!("backend request failed, retrying: {first}");
            send().map_err(BackendError)?
        }
    };
    let status = resp.status();
    if !status.is_success() {
        return Err(BackendError(format!("{url}: status {status}")));
    }
    resp.json::<R>()
        .map_err(|e| BackendError(format!("{url}: malformed reply: {e}")))
}

#[derive(Debug, Clone)]
pub struct HttpDescriber {
    url: String,
    token: Option<String>,
}

impl HttpDescriber {
    pub fn new(config: &HttpBackendConfig) -> Self {
        HttpDescriber {
            url: config.describe_url.clone(),
            token: config.auth_token.clone(),
        }
    }
}

impl DescriberPort for HttpDescriber {
    fn describe(&self, request: DescribeRequest<'_>) -> Result<String, BackendError> {
        let body = DescribeBody {
            image_b64: request.image_bytes.map(|b| B64.encode(b)),
            format: request.image.format.extension(),
            labels: request.labels,
        };
        let reply: DescribeReply = post_json(&self.url, self.token.as_deref(), DESCRIBE_TIMEOUT, &body)?;
        Ok(reply.text)
    }
}

#[derive(Debug, Clone)]
pub struct HttpMusicGenerator {
    url: String,
    token: Option<String>,
}

impl HttpMusicGenerator {
    pub fn new(config: &HttpBackendConfig) -> Self {
        HttpMusicGenerator {
            url: config.generate_url.clone(),
            token: config.auth_token.clone(),
        }
    }
}

impl MusicGenPort for HttpMusicGenerator {
    fn generate(&self, brief: &str, feedback: &[String]) -> Result<Vec<GeneratedTrack>, BackendError> {
        let body = GenerateBody {
            context: generation_context(brief, feedback),
            brief,
            feedback,
            n: OPTIONS_PER_ROUND,
        };
        let reply: GenerateReply = post_json(&self.url, self.token.as_deref(), GENERATE_TIMEOUT, &body)?;
        reply
            .options
            .into_iter()
            .enumerate()
            .map(|(i, o)| {
                let wav = B64
                    .decode(o.wav_b64.as_bytes())
                    .map_err(|e| BackendError(format!("option {}: bad base64: {e}", i + 1)))?;
                Ok(GeneratedTrack { caption: o.caption, wav })
            })
            .collect()
    }
}
