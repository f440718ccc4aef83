//! HTTP transport for the judge harness.
//!
//! Speaks the common chat-completion request shape: a POST of
//! `{"model": ..., "messages": [{"role": "user", "content": prompt}]}` with
//! a bearer token, answered by `{"choices": [{"message": {"content":
//! ...}}]}`. Any endpoint following that shape works; credentials come from
//! an environment variable so they never appear in config files or argv.

use std::time::Duration;

use byt5kit::judge::{JudgeError, JudgeTransport};

/// Chat-completion client bound to one endpoint and model.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    token: String,
}

impl HttpTransport {
    /// Builds a transport; `token` is the already-read credential value.
    pub fn new(endpoint: &str, model: &str, token: &str, timeout_s: u64) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(timeout_s))
            .build();
        HttpTransport {
            agent,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            token: token.to_string(),
        }
    }
}

impl JudgeTransport for HttpTransport {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&mut self, prompt: &str) -> Result<String, JudgeError> {
        let response = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.token))
            .send_json(ureq::json!({
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
            }))
            .map_err(|e| JudgeError::Transport { detail: e.to_string() })?;
        let body: serde_json::Value = response
            .into_json()
            .map_err(|e| JudgeError::Transport { detail: e.to_string() })?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| JudgeError::Transport {
                detail: "reply is missing choices[0].message.content".to_string(),
            })
    }
}
