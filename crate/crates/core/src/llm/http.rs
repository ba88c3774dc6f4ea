//! Chat-completions client over HTTP(S).
//!
//! Request body: `{"model", "messages": [{"role", "content"}], "temperature",
//! "top_p", "n"}`. Completions are read from `choices[].message.content` and
//! token usage from `usage` when the server reports it.

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    estimated_usage, Completion, Conversation, LlmBackend, LlmError, SamplingConfig, UsageStats,
};

pub const ENV_ENDPOINT: &str = "COVCLOSE_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "COVCLOSE_LLM_API_KEY";
pub const ENV_MODEL: &str = "COVCLOSE_LLM_MODEL";

#[derive(Clone)]
pub struct HttpConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    /// Ask for all candidates in one call via `n`; otherwise one call each.
    pub native_n: bool,
}

impl fmt::Debug for HttpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpConfig")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("request_timeout", &self.request_timeout)
            .field("max_retries", &self.max_retries)
            .field("native_n", &self.native_n)
            .finish()
    }
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            api_key: None,
            model: model.into(),
            request_timeout: Duration::from_secs(120),
            max_retries: 4,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            native_n: true,
        }
    }

    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .map_err(|_| LlmError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4o".to_owned());
        let mut c = HttpConfig::new(endpoint, model);
        c.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(c)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    top_p: f64,
    n: usize,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        log::info!(
            "LLM endpoint {} model {} (native n: {})",
            config.endpoint,
            config.model,
            config.native_n
        );
        Ok(HttpBackend { config, client })
    }

    pub fn from_env() -> Result<Self, LlmError> {
        Self::new(HttpConfig::from_env()?)
    }

    fn post_once(&self, body: &WireRequest<'_>) -> Result<WireResponse, LlmError> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::BackendTimeout
            } else {
                LlmError::Transport(e.without_url().to_string())
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(LlmError::RateLimited);
        }
        if !status.is_success() {
            return Err(LlmError::BackendHTTPError(status.as_u16()));
        }
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                LlmError::BackendTimeout
            } else {
                LlmError::Transport(e.without_url().to_string())
            }
        })?;
        log::trace!("LLM response: {text}");
        serde_json::from_str(&text).map_err(|e| LlmError::InvalidResponse(e.to_string()))
    }

    fn post(&self, body: &WireRequest<'_>) -> Result<WireResponse, LlmError> {
        let mut attempt = 0;
        loop {
            match self.post_once(body) {
                Ok(r) => return Ok(r),
                Err(e) if retryable(&e) && attempt < self.config.max_retries => {
                    let wait = self.config.backoff(attempt);
                    log::warn!(
                        "LLM request failed ({e}); retry {} in {:?}",
                        attempt + 1,
                        wait
                    );
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn retryable(e: &LlmError) -> bool {
    match e {
        LlmError::RateLimited | LlmError::BackendTimeout | LlmError::Transport(_) => true,
        LlmError::BackendHTTPError(s) => *s >= 500,
        _ => false,
    }
}

impl LlmBackend for HttpBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn send(&self, conv: &Conversation, sampling: &SamplingConfig) -> Result<Completion, LlmError> {
        if conv.is_empty() {
            return Err(LlmError::EmptyConversation);
        }
        let start = Instant::now();
        let messages: Vec<WireMessage<'_>> = conv
            .messages()
            .iter()
            .map(|m| WireMessage {
                role: m.role.as_str(),
                content: &m.content,
            })
            .collect();
        let mut body = WireRequest {
            model: &self.config.model,
            messages,
            temperature: sampling.temperature,
            top_p: sampling.top_p,
            n: 1,
        };
        log::debug!(
            "LLM request: conversation {} with {} messages",
            conv.id(),
            conv.len()
        );

        let want = sampling.num_candidates;
        let mut candidates = Vec::with_capacity(want);
        let mut reported = UsageStats::default();
        let mut all_reported = true;
        while candidates.len() < want {
            body.n = if self.config.native_n {
                want - candidates.len()
            } else {
                1
            };
            let resp = self.post(&body)?;
            if resp.choices.is_empty() {
                return Err(LlmError::InvalidResponse("no choices".into()));
            }
            match resp.usage {
                Some(u) => {
                    reported.prompt_tokens += u.prompt_tokens;
                    reported.completion_tokens += u.completion_tokens;
                }
                None => all_reported = false,
            }
            let room = want - candidates.len();
            candidates.extend(
                resp.choices
                    .into_iter()
                    .take(room)
                    .map(|c| c.message.content.unwrap_or_default()),
            );
        }
        let wall = start.elapsed().as_secs_f64();
        let usage = if all_reported {
            UsageStats {
                wall_time_s: wall,
                ..reported
            }
        } else {
            estimated_usage(conv, &candidates, wall)
        };
        Ok(Completion { candidates, usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{default_estimator, Role, SegmentTag};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves one canned (status, body) per connection and hands back each
    /// request's headers and JSON body.
    fn stub(
        responses: Vec<(u16, String)>,
    ) -> (
        String,
        std::thread::JoinHandle<Vec<(String, serde_json::Value)>>,
    ) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let h = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut r = BufReader::new(stream.try_clone().unwrap());
                let mut headers = String::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    r.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    headers.push_str(&line);
                }
                let mut buf = vec![0; len];
                r.read_exact(&mut buf).unwrap();
                seen.push((headers, serde_json::from_slice(&buf).unwrap()));
                let mut w = stream;
                write!(
                    w,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (url, h)
    }

    fn choices(texts: &[&str], usage: bool) -> String {
        let ch: Vec<_> = texts
            .iter()
            .map(|t| serde_json::json!({"message": {"role": "assistant", "content": t}}))
            .collect();
        let mut v = serde_json::json!({ "choices": ch });
        if usage {
            v["usage"] = serde_json::json!({"prompt_tokens": 11, "completion_tokens": 7});
        }
        v.to_string()
    }

    fn conv() -> Conversation {
        let mut c = Conversation::new("conv_0", "system text", default_estimator());
        c.push(Role::User, "hello", SegmentTag::Core);
        c
    }

    fn config(url: String) -> HttpConfig {
        let mut c = HttpConfig::new(url, "test-model");
        c.api_key = Some("sk-secret".into());
        c.initial_backoff = Duration::from_millis(1);
        c.request_timeout = Duration::from_secs(5);
        c
    }

    #[test]
    fn body_carries_sampling_parameters() {
        let (url, h) = stub(vec![(200, choices(&["a", "b", "c", "d", "e"], true))]);
        let b = HttpBackend::new(config(url)).unwrap();
        let out = b.send(&conv(), &SamplingConfig::default()).unwrap();
        assert_eq!(out.candidates, vec!["a", "b", "c", "d", "e"]);
        assert_eq!(
            (out.usage.prompt_tokens, out.usage.completion_tokens),
            (11, 7)
        );
        let seen = h.join().unwrap();
        let (headers, body) = &seen[0];
        assert!(headers
            .to_ascii_lowercase()
            .contains("authorization: bearer sk-secret"));
        assert_eq!(body["temperature"], 0.3);
        assert_eq!(body["top_p"], 0.7);
        assert_eq!(body["n"], 5);
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hello");
    }

    #[test]
    fn sequential_fallback_issues_n_calls() {
        let (url, h) = stub(
            (0..3)
                .map(|i| (200, choices(&[&format!("c{i}")], false)))
                .collect(),
        );
        let mut cfg = config(url);
        cfg.native_n = false;
        let b = HttpBackend::new(cfg).unwrap();
        let s = SamplingConfig {
            temperature: 0.0,
            top_p: 1.0,
            num_candidates: 3,
        };
        let out = b.send(&conv(), &s).unwrap();
        assert_eq!(out.candidates, vec!["c0", "c1", "c2"]);
        assert!(out.usage.prompt_tokens > 0);
        for (_, body) in h.join().unwrap() {
            assert_eq!(body["n"], 1);
            assert_eq!(body["temperature"], 0.0);
            assert_eq!(body["top_p"], 1.0);
        }
    }

    #[test]
    fn retries_rate_limit_then_succeeds() {
        let (url, h) = stub(vec![
            (429, "{}".into()),
            (503, "{}".into()),
            (200, choices(&["ok"], true)),
        ]);
        let b = HttpBackend::new(config(url)).unwrap();
        let out = b
            .send(&conv(), &SamplingConfig::default().with_candidates(1))
            .unwrap();
        assert_eq!(out.candidates, vec!["ok"]);
        assert_eq!(h.join().unwrap().len(), 3);
    }

    #[test]
    fn retry_budget_exhaustion_surfaces_error() {
        let (url, h) = stub(vec![(429, "{}".into()); 3]);
        let mut cfg = config(url);
        cfg.max_retries = 2;
        let b = HttpBackend::new(cfg).unwrap();
        assert_eq!(
            b.send(&conv(), &SamplingConfig::default()),
            Err(LlmError::RateLimited)
        );
        h.join().unwrap();
    }

    #[test]
    fn client_error_is_not_retried() {
        let (url, h) = stub(vec![(400, "{}".into())]);
        let b = HttpBackend::new(config(url)).unwrap();
        assert_eq!(
            b.send(&conv(), &SamplingConfig::default()),
            Err(LlmError::BackendHTTPError(400))
        );
        assert_eq!(h.join().unwrap().len(), 1);
    }

    #[test]
    fn debug_output_redacts_key() {
        let c = config("http://x".into());
        let s = format!("{c:?}");
        assert!(!s.contains("sk-secret"));
        assert!(s.contains("<redacted>"));
    }
}
