//! Few-shot prompt construction and transport to a completions endpoint,
//! plus a deterministic offline mock for tests and dry runs.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

/// Completions are cut at this marker so a model that keeps generating
/// further "Text:" blocks contributes only its first rephrasing.
pub const DEFAULT_STOP_MARKER: &str = "\nText:";

/// Rendered rephrase prompt for problems in the MAWPS-Single style.
pub const MAWPS_PROMPT: &str = include_str!("../fixtures/prompts/mawps.txt");
/// Rendered rephrase prompt for problems in the SVAMP style.
pub const SVAMP_PROMPT: &str = include_str!("../fixtures/prompts/svamp.txt");

pub const EXEMPLAR_COUNT: usize = 15;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt template: {0}")]
    Template(String),
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("endpoint returned status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Instruction plus exactly fifteen (text, rephrased) exemplars.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub instruction: String,
    pub exemplars: Vec<(String, String)>,
    pub stop_marker: String,
}

impl PromptTemplate {
    pub fn new(
        instruction: String,
        exemplars: Vec<(String, String)>,
    ) -> Result<PromptTemplate, LlmError> {
        if exemplars.len() != EXEMPLAR_COUNT {
            return Err(LlmError::Template(format!(
                "expected {} exemplars, found {}",
                EXEMPLAR_COUNT,
                exemplars.len()
            )));
        }
        Ok(PromptTemplate {
            instruction,
            exemplars,
            stop_marker: DEFAULT_STOP_MARKER.to_string(),
        })
    }

    /// Render the few-shot prompt for one target problem:
    /// instruction, blank line, `Text:`/`Rephrased:` pair per exemplar,
    /// then the target with an open `Rephrased:` slot.
    pub fn render(&self, target: &str) -> String {
        let mut out = String::with_capacity(
            self.instruction.len() + target.len() + 64 * self.exemplars.len(),
        );
        out.push_str(&self.instruction);
        out.push_str("\n\n");
        for (text, rephrased) in &self.exemplars {
            out.push_str("Text: ");
            out.push_str(text);
            out.push_str("\nRephrased: ");
            out.push_str(rephrased);
            out.push('\n');
        }
        out.push_str("Text: ");
        out.push_str(target);
        out.push_str("\nRephrased:");
        out
    }

    /// Parse a fully rendered prompt (as bundled under `fixtures/prompts/`)
    /// back into a template and the target text occupying the final slot.
    /// `render(target)` on the result reproduces the input bytes.
    pub fn from_rendered(rendered: &str) -> Result<(PromptTemplate, String), LlmError> {
        let (instruction, rest) = rendered
            .split_once("\n\nText: ")
            .ok_or_else(|| LlmError::Template("missing blank line before first Text:".into()))?;
        let mut exemplars = Vec::new();
        let mut target: Option<String> = None;
        for block in rest.split("\nText: ") {
            let (text, after) = block.split_once("\nRephrased:").ok_or_else(|| {
                LlmError::Template(format!("block without Rephrased line: {block:.40}"))
            })?;
            if after.is_empty() {
                if target.replace(text.to_string()).is_some() {
                    return Err(LlmError::Template("more than one open target slot".into()));
                }
            } else if let Some(rephrased) = after.strip_prefix(' ') {
                exemplars.push((text.to_string(), rephrased.to_string()));
            } else {
                return Err(LlmError::Template(format!(
                    "unexpected content after Rephrased: {after:.40}"
                )));
            }
        }
        let target =
            target.ok_or_else(|| LlmError::Template("missing final open target slot".into()))?;
        Ok((PromptTemplate::new(instruction.to_string(), exemplars)?, target))
    }
}

/// The bundled MAWPS-style template (unwraps safely; fixture is tested).
pub fn mawps_template() -> PromptTemplate {
    PromptTemplate::from_rendered(MAWPS_PROMPT).expect("bundled prompt parses").0
}

/// The bundled SVAMP-style template.
pub fn svamp_template() -> PromptTemplate {
    PromptTemplate::from_rendered(SVAMP_PROMPT).expect("bundled prompt parses").0
}

/// Cut `completion` at the first stop marker and trim surrounding
/// whitespace: `"A? \nText: junk"` becomes `"A?"`.
pub fn truncate_at_stop(completion: &str, stop_marker: &str) -> String {
    let cut = completion.find(stop_marker).map_or(completion, |i| &completion[..i]);
    cut.trim().to_string()
}

/// Anything that can turn a prompt into a completion. Implementations
/// must be safe to call from multiple worker threads.
pub trait Completer: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

// ---------------------------------------------------------------------------
// Offline mock
// ---------------------------------------------------------------------------

/// Reply used when no scripted entry matches.
#[derive(Debug, Clone, PartialEq)]
pub enum MockDefault {
    /// Return the target text unchanged.
    Echo,
    /// Return an empty completion.
    Empty,
    /// Return the template with `{text}` replaced by the target.
    Template(String),
}

/// Deterministic stand-in for a completion endpoint. Replies are looked
/// up first by the full prompt, then by the target text inside the
/// prompt's final `Text:` slot, then fall back to the default behavior.
/// Keying by target keeps scripted runs independent of exemplar choice
/// and request order.
#[derive(Debug, Clone)]
pub struct MockLlm {
    replies: HashMap<String, String>,
    default: MockDefault,
    stop_marker: String,
}

impl MockLlm {
    pub fn new(default: MockDefault) -> MockLlm {
        MockLlm {
            replies: HashMap::new(),
            default,
            stop_marker: DEFAULT_STOP_MARKER.to_string(),
        }
    }

    /// Script a reply for a full prompt or for a target text.
    pub fn with_reply(mut self, key: &str, reply: &str) -> MockLlm {
        self.replies.insert(key.to_string(), reply.to_string());
        self
    }

    /// Load a scripted mock from JSON:
    /// `{"default": {"kind": "echo" | "empty" | "template", "value": "..."},
    ///   "replies": {"<target or prompt>": "<completion>"}}`.
    pub fn from_spec_file(path: &Path) -> Result<MockLlm, LlmError> {
        let raw = fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let spec: MockSpecFile = serde_json::from_str(&raw)
            .map_err(|e| LlmError::Config(format!("mock spec {}: {e}", path.display())))?;
        let default = match spec.default {
            MockDefaultSpec::Echo => MockDefault::Echo,
            MockDefaultSpec::Empty => MockDefault::Empty,
            MockDefaultSpec::Template { value } => MockDefault::Template(value),
        };
        Ok(MockLlm {
            replies: spec.replies,
            default,
            stop_marker: DEFAULT_STOP_MARKER.to_string(),
        })
    }

    /// The text sitting in the final `Text:` slot of a rendered prompt.
    pub fn extract_target(prompt: &str) -> Option<&str> {
        let start = prompt.rfind("\nText: ")? + "\nText: ".len();
        let rest = &prompt[start..];
        let end = rest.find("\nRephrased:")?;
        Some(&rest[..end])
    }
}

#[derive(Deserialize)]
struct MockSpecFile {
    #[serde(default)]
    replies: HashMap<String, String>,
    #[serde(default = "default_mock_default")]
    default: MockDefaultSpec,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum MockDefaultSpec {
    Echo,
    Empty,
    Template { value: String },
}

fn default_mock_default() -> MockDefaultSpec {
    MockDefaultSpec::Echo
}

impl Completer for MockLlm {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let target = MockLlm::extract_target(prompt);
        let raw = if let Some(reply) = self.replies.get(prompt) {
            reply.clone()
        } else if let Some(reply) = target.and_then(|t| self.replies.get(t)) {
            reply.clone()
        } else {
            match &self.default {
                MockDefault::Echo => target.unwrap_or("").to_string(),
                MockDefault::Empty => String::new(),
                MockDefault::Template(tpl) => tpl.replace("{text}", target.unwrap_or("")),
            }
        };
        Ok(truncate_at_stop(&raw, &self.stop_marker))
    }
}

// ---------------------------------------------------------------------------
// HTTP transport
// ---------------------------------------------------------------------------

/// Name of the environment variable holding a bearer token for the
/// completions endpoint; sent only when set.
pub const API_KEY_ENV: &str = "MWPAUG_API_KEY";

#[derive(Debug, Clone)]
pub struct LlmEndpointConfig {
    /// Server base, e.g. `http://localhost:8000/v1`; requests go to
    /// `{base_url}/completions`.
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_concurrent_requests: usize,
}

impl Default for LlmEndpointConfig {
    fn default() -> LlmEndpointConfig {
        LlmEndpointConfig {
            base_url: "http://localhost:8000/v1".to_string(),
            model_name: "llama-7b".to_string(),
            temperature: 0.7,
            max_tokens: 256,
            timeout: Duration::from_secs(30),
            max_retries: 3,
            max_concurrent_requests: 4,
        }
    }
}

impl LlmEndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature < 0.0 {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Config("max_tokens must be >= 1".into()));
        }
        if self.max_concurrent_requests == 0 {
            return Err(LlmError::Config("max_concurrent_requests must be >= 1".into()));
        }
        if self.base_url.is_empty() {
            return Err(LlmError::Config("base_url must not be empty".into()));
        }
        Ok(())
    }
}

/// Counting semaphore bounding in-flight requests process-wide.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn new(count: usize) -> Slots {
        Slots {
            free: Mutex::new(count),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard { slots: self }
    }
}

struct SlotGuard<'a> {
    slots: &'a Slots,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.slots.free.lock().unwrap() += 1;
        self.slots.cv.notify_one();
    }
}

/// Blocking client for an OpenAI-style completions endpoint. Transport
/// errors and 5xx responses are retried with exponential backoff up to
/// `max_retries`; 4xx responses fail immediately.
pub struct HttpCompleter {
    config: LlmEndpointConfig,
    client: reqwest::blocking::Client,
    stop_marker: String,
    slots: Slots,
    retries: AtomicU64,
}

#[derive(serde::Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    stop: [&'a str; 1],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    text: String,
}

impl HttpCompleter {
    pub fn new(config: LlmEndpointConfig) -> Result<HttpCompleter, LlmError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpCompleter {
            slots: Slots::new(config.max_concurrent_requests),
            stop_marker: DEFAULT_STOP_MARKER.to_string(),
            retries: AtomicU64::new(0),
            config,
            client,
        })
    }

    /// Total retries performed over the client's lifetime.
    pub fn retries_recorded(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn endpoint_url(&self) -> String {
        format!("{}/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn send_once(&self, prompt: &str) -> Result<String, AttemptError> {
        let body = CompletionRequest {
            model: &self.config.model_name,
            prompt,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            stop: [&self.stop_marker],
        };
        let mut request = self.client.post(self.endpoint_url()).json(&body);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                AttemptError::TimedOut
            } else {
                AttemptError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| AttemptError::Transport(e.to_string()))?;
        if status.is_server_error() {
            return Err(AttemptError::Server {
                status: status.as_u16(),
                body: text,
            });
        }
        if !status.is_success() {
            return Err(AttemptError::Client {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Malformed(format!("{e}; body: {text:.120}")))?;
        match parsed.choices.into_iter().next() {
            Some(choice) => Ok(choice.text),
            None => Err(AttemptError::Malformed("empty choices array".into())),
        }
    }
}

enum AttemptError {
    Transport(String),
    TimedOut,
    Server { status: u16, body: String },
    Client { status: u16, body: String },
    Malformed(String),
}

impl Completer for HttpCompleter {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let _slot = self.slots.acquire();
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = Duration::from_millis(100u64 << (attempt - 1).min(5));
                std::thread::sleep(backoff);
                self.retries.fetch_add(1, Ordering::Relaxed);
            }
            match self.send_once(prompt) {
                Ok(text) => return Ok(truncate_at_stop(&text, &self.stop_marker)),
                Err(AttemptError::Client { status, body }) => {
                    return Err(LlmError::Endpoint { status, body })
                }
                Err(AttemptError::Malformed(m)) => return Err(LlmError::MalformedResponse(m)),
                Err(retryable) => last = Some(retryable),
            }
        }
        Err(match last {
            Some(AttemptError::TimedOut) => LlmError::Timeout { attempts },
            Some(AttemptError::Transport(message)) => LlmError::Transport { attempts, message },
            Some(AttemptError::Server { status, body }) => LlmError::Endpoint { status, body },
            _ => unreachable!("retry loop exits early on non-retryable errors"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    const TARGET: &str = "A restaurant served 6 cakes during lunch and 9 during dinner today . How many cakes were served today ?";

    #[test]
    fn bundled_mawps_prompt_round_trips() {
        let (template, target) = PromptTemplate::from_rendered(MAWPS_PROMPT).unwrap();
        assert_eq!(template.exemplars.len(), 15);
        assert_eq!(target, TARGET);
        assert!(template.exemplars[0].0.starts_with("A store had 27 coloring books"));
        assert_eq!(
            template.instruction,
            "Your task is to rephrase the given texts while preserving the numerical values and relationships inherent in the original statements."
        );
        assert_eq!(template.render(&target), MAWPS_PROMPT);
    }

    #[test]
    fn bundled_svamp_prompt_round_trips() {
        let (template, target) = PromptTemplate::from_rendered(SVAMP_PROMPT).unwrap();
        assert_eq!(template.exemplars.len(), 15);
        assert_eq!(target, TARGET);
        assert!(template.exemplars[0].0.starts_with("While playing a trivia game"));
        assert_eq!(template.render(&target), SVAMP_PROMPT);
    }

    #[test]
    fn rendering_structure() {
        let template = mawps_template();
        let rendered = template.render("Some 5 things . How many ?");
        assert!(rendered.ends_with("Text: Some 5 things . How many ?\nRephrased:"));
        assert_eq!(rendered.matches("Text: ").count(), 16);
        assert_eq!(rendered.matches("\nRephrased:").count(), 16);

        let empty = template.render("");
        assert!(empty.ends_with("Text: \nRephrased:"));
    }

    #[test]
    fn exemplar_count_is_enforced() {
        let err = PromptTemplate::new("inst".into(), vec![("a".into(), "b".into())]);
        assert!(matches!(err, Err(LlmError::Template(_))));
    }

    #[test]
    fn stop_marker_truncation() {
        assert_eq!(truncate_at_stop("A? \nText: junk", "\nText:"), "A?");
        assert_eq!(truncate_at_stop("clean answer?", "\nText:"), "clean answer?");
        assert_eq!(truncate_at_stop("  padded  ", "\nText:"), "padded");
    }

    #[test]
    fn mock_replies_by_prompt_and_target() {
        let template = mawps_template();
        let prompt = template.render("Had 3 pens , lost 1 . How many now?");
        let mock = MockLlm::new(MockDefault::Echo)
            .with_reply(&prompt, "Rephrased text?");
        assert_eq!(mock.complete(&prompt).unwrap(), "Rephrased text?");

        let mock = MockLlm::new(MockDefault::Empty)
            .with_reply("Had 3 pens , lost 1 . How many now?", "Three pens minus 1 ?");
        assert_eq!(mock.complete(&prompt).unwrap(), "Three pens minus 1 ?");
    }

    #[test]
    fn mock_default_behaviors() {
        let template = mawps_template();
        let prompt = template.render("Had 3 pens . How many?");
        assert_eq!(
            MockLlm::new(MockDefault::Echo).complete(&prompt).unwrap(),
            "Had 3 pens . How many?"
        );
        assert_eq!(MockLlm::new(MockDefault::Empty).complete(&prompt).unwrap(), "");
        assert_eq!(
            MockLlm::new(MockDefault::Template("Again: {text}".into()))
                .complete(&prompt)
                .unwrap(),
            "Again: Had 3 pens . How many?"
        );
    }

    #[test]
    fn mock_spec_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mock.json");
        std::fs::write(
            &path,
            r#"{"default": {"kind": "template", "value": "Said differently: {text}"},
                "replies": {"Had 2 . How many?": "A pair ?"}}"#,
        )
        .unwrap();
        let mock = MockLlm::from_spec_file(&path).unwrap();
        let template = mawps_template();
        assert_eq!(
            mock.complete(&template.render("Had 2 . How many?")).unwrap(),
            "A pair ?"
        );
        assert_eq!(
            mock.complete(&template.render("Had 9 . How many?")).unwrap(),
            "Said differently: Had 9 . How many?"
        );
    }

    /// Minimal one-shot HTTP server: answers each queued (status, body)
    /// response in order, then stops.
    fn spawn_server(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind localhost");
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut served = 0;
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = vec![0u8; 65536];
                let mut read_total = 0;
                // read until the JSON body is complete enough; requests are small
                loop {
                    let n = stream.read(&mut buf[read_total..]).unwrap();
                    read_total += n;
                    let text = String::from_utf8_lossy(&buf[..read_total]);
                    if let Some(header_end) = text.find("\r\n\r\n") {
                        let content_length = text
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                            .unwrap_or(0);
                        if read_total >= header_end + 4 + content_length {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let reason = if status == 200 { "OK" } else { "ERR" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (format!("http://{addr}"), handle)
    }

    #[test]
    fn http_retries_5xx_then_succeeds() {
        let ok_body = r#"{"choices": [{"text": " A fine rephrase? \nText: extra"}]}"#;
        let (base, handle) = spawn_server(vec![
            (500, "{}".into()),
            (500, "{}".into()),
            (200, ok_body.into()),
        ]);
        let completer = HttpCompleter::new(LlmEndpointConfig {
            base_url: base,
            max_retries: 3,
            timeout: Duration::from_secs(5),
            ..LlmEndpointConfig::default()
        })
        .unwrap();
        let out = completer.complete("prompt").unwrap();
        assert_eq!(out, "A fine rephrase?");
        assert_eq!(completer.retries_recorded(), 2);
        assert_eq!(handle.join().unwrap(), 3);
    }

    #[test]
    fn http_4xx_fails_without_retry() {
        let (base, handle) = spawn_server(vec![(404, r#"{"error": "no model"}"#.into())]);
        let completer = HttpCompleter::new(LlmEndpointConfig {
            base_url: base,
            max_retries: 3,
            timeout: Duration::from_secs(5),
            ..LlmEndpointConfig::default()
        })
        .unwrap();
        match completer.complete("prompt") {
            Err(LlmError::Endpoint { status, .. }) => assert_eq!(status, 404),
            other => panic!("expected endpoint error, got {other:?}"),
        }
        assert_eq!(completer.retries_recorded(), 0);
        assert_eq!(handle.join().unwrap(), 1);
    }

    #[test]
    fn config_validation() {
        let bad = LlmEndpointConfig {
            temperature: -1.0,
            ..LlmEndpointConfig::default()
        };
        assert!(matches!(bad.validate(), Err(LlmError::Config(_))));
        let bad = LlmEndpointConfig {
            max_concurrent_requests: 0,
            ..LlmEndpointConfig::default()
        };
        assert!(matches!(bad.validate(), Err(LlmError::Config(_))));
        assert!(LlmEndpointConfig::default().validate().is_ok());
    }
}
