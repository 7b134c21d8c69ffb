use std::time::Duration;

use super::retry::CallError;

/// One outgoing generator call: a multipart POST with an optional `prompt`
/// text part and `image[n]` PNG parts.
#[derive(Debug, Clone)]
pub struct RemoteRequest {
    pub url: String,
    pub bearer_token: Option<String>,
    pub prompt: Option<String>,
    pub images: Vec<Vec<u8>>,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteResponse {
    pub media_type: Option<String>,
    pub body: Vec<u8>,
}

/// Non-2xx responses must come back as [`CallError::Status`].
pub trait Transport: Send + Sync {
    fn post(&self, request: &RemoteRequest) -> Result<RemoteResponse, CallError>;
}

/// Blocking HTTP transport. Must not be driven from inside an async task.
#[derive(Debug, Clone, Default)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for HttpTransport {
    fn post(&self, request: &RemoteRequest) -> Result<RemoteResponse, CallError> {
        use reqwest::blocking::multipart::{Form, Part};

        let mut form = Form::new();
        if let Some(prompt) = &request.prompt {
            form = form.part(
                "prompt",
                Part::text(prompt.clone())
                    .mime_str("text/plain; charset=utf-8")
                    .map_err(|e| CallError::Other(e.to_string()))?,
            );
        }
        for (i, bytes) in request.images.iter().enumerate() {
            let part = Part::bytes(bytes.clone())
                .file_name(format!("image{i}.png"))
                .mime_str("image/png")
                .map_err(|e| CallError::Other(e.to_string()))?;
            form = form.part(format!("image[{i}]"), part);
        }
        let mut builder = self.client.post(&request.url).timeout(request.timeout).multipart(form);
        if let Some(token) = &request.bearer_token {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(classify)?;
        let status = response.status();
        let media_type = response
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = response.bytes().map_err(classify)?.to_vec();
        if !status.is_success() {
            let text = String::from_utf8_lossy(&body[..body.len().min(512)]).into_owned();
            return Err(CallError::Status {
                code: status.as_u16(),
                body: text,
            });
        }
        Ok(RemoteResponse { media_type, body })
    }
}

fn classify(e: reqwest::Error) -> CallError {
    if e.is_timeout() {
        CallError::Timeout
    } else if e.is_connect() {
        CallError::Connect(e.to_string())
    } else if let Some(status) = e.status() {
        CallError::Status {
            code: status.as_u16(),
            body: String::new(),
        }
    } else if e.is_request() || e.is_body() {
        // dropped connections surface here rather than as connect errors
        CallError::Connect(e.to_string())
    } else {
        CallError::Other(e.to_string())
    }
}
