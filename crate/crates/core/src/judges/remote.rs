//! Judge backed by an OpenAI-compatible chat-completions endpoint.
//!
//! The prompt is the fixed self-judgment template with four placeholders.
//! The model answers by calling `choose_preference` with the index of the
//! preferred candidate.

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{Judge, JudgeError, JudgeVerdict, TaskContext, Trail, Winner};
use crate::rng::SearchRng;

pub const PROMPT_TEMPLATE: &str = "You are value-GPT, an expert in defining which trail is better and closer to solving the task. Here is the task description:
*******************************
{{BEGIN_DESCRIPTION}}
your_task: {task_description}
your_query: {input_description}
{{END_DESCRIPTION}}
*******************************
Here are two candidates A and B. They both try to handle the task with some function calls. Their trails are as follows.
*******************************
{{CANDIDATE_A_START}}
{candidate_A}
{{CANDIDATE_A_END}}
*******************************
{{CANDIDATE_B_START}}
{candidate_B}
{{CANDIDATE_B_END}}
*******************************";

pub const CHOOSE_PREFERENCE: &str = "choose_preference";

const PLACEHOLDERS: [&str; 4] = [
    "{task_description}",
    "{input_description}",
    "{candidate_A}",
    "{candidate_B}",
];

/// Fills the four placeholders in one left-to-right pass over the template.
/// Substituted text is never rescanned, so braces inside candidates survive.
pub fn assemble_prompt(context: &TaskContext, candidate_a: &str, candidate_b: &str) -> String {
    let values = [
        context.task_description.as_str(),
        context.query.as_str(),
        candidate_a,
        candidate_b,
    ];
    let mut out = String::with_capacity(PROMPT_TEMPLATE.len() + candidate_a.len() + candidate_b.len());
    let mut rest = PROMPT_TEMPLATE;
    loop {
        let next = PLACEHOLDERS
            .iter()
            .enumerate()
            .filter_map(|(i, p)| rest.find(p).map(|pos| (pos, i)))
            .min();
        match next {
            Some((pos, i)) => {
                out.push_str(&rest[..pos]);
                out.push_str(values[i]);
                rest = &rest[pos + PLACEHOLDERS[i].len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

fn choose_preference_schema() -> Value {
    json!({
        "name": CHOOSE_PREFERENCE,
        "description": "Choose the preferred answer for the query within all given answers.",
        "parameters": {
            "type": "object",
            "properties": {
                "preference": {
                    "type": "number",
                    "description": "The index of the preferred answer in all given answers."
                }
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteJudgeConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint_url: String,
    pub model: String,
    /// Environment variable holding the bearer token; `None` sends no auth header.
    pub api_key_env: Option<String>,
    pub timeout_secs: f64,
    pub retries: u32,
    pub backoff_ms: u64,
    /// Index of the first candidate in `preference` (0 or 1).
    pub index_base: u8,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub max_in_flight: usize,
    pub min_interval_ms: u64,
}

impl Default for RemoteJudgeConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout_secs: 60.0,
            retries: 2,
            backoff_ms: 500,
            index_base: 0,
            temperature: None,
            max_tokens: None,
            max_in_flight: 4,
            min_interval_ms: 0,
        }
    }
}

/// The request body for one judgment.
pub fn build_request(config: &RemoteJudgeConfig, prompt: &str) -> Value {
    let mut body = json!({
        "model": config.model,
        "messages": [{ "role": "user", "content": prompt }],
        "tools": [{ "type": "function", "function": choose_preference_schema() }],
        "tool_choice": { "type": "function", "function": { "name": CHOOSE_PREFERENCE } },
    });
    if let Some(t) = config.temperature {
        body["temperature"] = json!(t);
    }
    if let Some(m) = config.max_tokens {
        body["max_tokens"] = json!(m);
    }
    body
}

/// Extracts the verdict from a chat-completions response body.
///
/// Accepts both `tool_calls` and the older `function_call` shape.
pub fn parse_preference(body: &str, index_base: u8) -> Result<Winner, JudgeError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| JudgeError::Malformed(format!("response is not JSON: {e}")))?;
    let message = value
        .pointer("/choices/0/message")
        .ok_or_else(|| JudgeError::Malformed("response has no choices[0].message".into()))?;

    let tool_call = message.get("tool_calls").and_then(Value::as_array).and_then(|calls| {
        calls
            .iter()
            .filter_map(|c| c.get("function"))
            .find(|f| f.get("name").and_then(Value::as_str) == Some(CHOOSE_PREFERENCE))
    });
    let legacy_call = message
        .get("function_call")
        .filter(|f| f.get("name").and_then(Value::as_str) == Some(CHOOSE_PREFERENCE));
    let function = tool_call
        .or(legacy_call)
        .ok_or_else(|| JudgeError::Malformed(format!("no {CHOOSE_PREFERENCE} call in response")))?;

    let arguments: Value = match function.get("arguments") {
        Some(Value::String(s)) => serde_json::from_str(s)
            .map_err(|e| JudgeError::Malformed(format!("function arguments are not JSON: {e}")))?,
        Some(obj @ Value::Object(_)) => obj.clone(),
        _ => return Err(JudgeError::Malformed("function call carries no arguments".into())),
    };
    let preference = match arguments.get("preference") {
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
    .ok_or_else(|| JudgeError::Malformed("missing numeric `preference` argument".into()))?;

    let base = f64::from(index_base);
    Ok(if preference == base {
        Winner::First
    } else if preference == base + 1.0 {
        Winner::Second
    } else {
        Winner::Abstain
    })
}

/// Caps concurrent requests and spaces request starts. Clone the `Arc` to
/// share one limiter between every remote judge in the process.
#[derive(Debug)]
pub struct RateLimiter {
    max_in_flight: usize,
    min_interval: Duration,
    state: Mutex<LimiterState>,
    freed: Condvar,
}

#[derive(Debug)]
struct LimiterState {
    in_flight: usize,
    last_start: Option<Instant>,
}

impl RateLimiter {
    pub fn new(max_in_flight: usize, min_interval: Duration) -> Arc<Self> {
        Arc::new(Self {
            max_in_flight: max_in_flight.max(1),
            min_interval,
            state: Mutex::new(LimiterState {
                in_flight: 0,
                last_start: None,
            }),
            freed: Condvar::new(),
        })
    }

    fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().expect("limiter poisoned");
        loop {
            if state.in_flight < self.max_in_flight {
                let wait = state
                    .last_start
                    .map(|t| self.min_interval.saturating_sub(t.elapsed()))
                    .unwrap_or(Duration::ZERO);
                if wait.is_zero() {
                    state.in_flight += 1;
                    state.last_start = Some(Instant::now());
                    return Permit { limiter: self };
                }
                state = self.freed.wait_timeout(state, wait).expect("limiter poisoned").0;
            } else {
                state = self.freed.wait(state).expect("limiter poisoned");
            }
        }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().expect("limiter poisoned").in_flight
    }
}

struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().expect("limiter poisoned");
        state.in_flight -= 1;
        self.limiter.freed.notify_all();
    }
}

pub struct LlmJudge {
    config: RemoteJudgeConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    limiter: Arc<RateLimiter>,
}

impl LlmJudge {
    pub fn new(config: RemoteJudgeConfig, limiter: Arc<RateLimiter>) -> Result<Self, JudgeError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| JudgeError::MissingCredentials(var.clone()))?),
            None => None,
        };
        if config.index_base > 1 {
            return Err(JudgeError::InvalidInput(format!(
                "index_base must be 0 or 1, got {}",
                config.index_base
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| JudgeError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
            limiter,
        })
    }

    pub fn config(&self) -> &RemoteJudgeConfig {
        &self.config
    }

    fn send_once(&self, body: &Value) -> Result<String, JudgeError> {
        let _permit = self.limiter.acquire();
        let mut request = self.client.post(&self.config.endpoint_url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                JudgeError::Timeout
            } else {
                JudgeError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| JudgeError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(JudgeError::Http {
                status: status.as_u16(),
                body: text.chars().take(512).collect(),
            });
        }
        Ok(text)
    }

    /// One judgment: assemble the prompt, post it with retries, parse the call.
    pub fn llm_judge_compare(
        &self,
        context: &TaskContext,
        first: &str,
        second: &str,
    ) -> Result<JudgeVerdict, JudgeError> {
        let prompt = assemble_prompt(context, first, second);
        let body = build_request(&self.config, &prompt);
        let started = Instant::now();
        let mut attempt = 0;
        let text = loop {
            match self.send_once(&body) {
                Ok(text) => break text,
                Err(err) if attempt < self.config.retries && is_retryable(&err) => {
                    let backoff = Duration::from_millis(self.config.backoff_ms.saturating_mul(1 << attempt));
                    warn!(%err, attempt, ?backoff, "judge request failed, retrying");
                    thread::sleep(backoff);
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        };
        let winner = parse_preference(&text, self.config.index_base)?;
        debug!(?winner, attempts = attempt + 1, "remote judgment");
        Ok(JudgeVerdict {
            winner,
            latency: started.elapsed(),
            raw: Some(text),
        })
    }
}

fn is_retryable(err: &JudgeError) -> bool {
    match err {
        JudgeError::Timeout | JudgeError::Transport(_) => true,
        JudgeError::Http { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl Judge for LlmJudge {
    fn name(&self) -> &str {
        "remote"
    }

    fn compare(
        &mut self,
        context: &TaskContext,
        first: &Trail,
        second: &Trail,
        _rng: &mut SearchRng,
    ) -> Result<JudgeVerdict, JudgeError> {
        self.llm_judge_compare(context, &first.text, &second.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_in_candidates_are_not_rescanned() {
        let ctx = TaskContext::new("{candidate_B}", "q");
        let p = assemble_prompt(&ctx, "A {input_description}", "B");
        assert!(p.contains("your_task: {candidate_B}\n"));
        assert!(p.contains("\nA {input_description}\n"));
        assert!(p.contains("{{BEGIN_DESCRIPTION}}"));
    }

    #[test]
    fn request_declares_exactly_one_function() {
        let body = build_request(&RemoteJudgeConfig::default(), "hello");
        let tools = body["tools"].as_array().unwrap();
        assert_eq!(tools.len(), 1);
        assert_eq!(tools[0]["function"]["name"], CHOOSE_PREFERENCE);
        let props = tools[0]["function"]["parameters"]["properties"].as_object().unwrap();
        assert_eq!(props.len(), 1);
        assert_eq!(props["preference"]["type"], "number");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hello");
        assert!(body.get("temperature").is_none());
    }

    #[test]
    fn one_based_indices() {
        let body = r#"{"choices":[{"message":{"tool_calls":[{"type":"function","function":{"name":"choose_preference","arguments":"{\"preference\": 1}"}}]}}]}"#;
        assert_eq!(parse_preference(body, 1).unwrap(), Winner::First);
        assert_eq!(parse_preference(body, 0).unwrap(), Winner::Second);
    }

    #[test]
    fn limiter_caps_concurrency() {
        let limiter = RateLimiter::new(2, Duration::ZERO);
        let a = limiter.acquire();
        let b = limiter.acquire();
        assert_eq!(limiter.in_flight(), 2);
        drop(a);
        assert_eq!(limiter.in_flight(), 1);
        drop(b);
        assert_eq!(limiter.in_flight(), 0);
    }
}
