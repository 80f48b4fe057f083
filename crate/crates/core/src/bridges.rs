//! Model access over a chat-completions wire, a scripted mock, route
//! resolution and the per-run cost ledger.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ArisConfig, BridgeConfig, BridgeKind, Price, ReasoningMode};
use crate::fsutil;

pub const TEST_MODE_ENV: &str = "ARIS_TEST_MODE";

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("bridge `{0}` is not configured")]
    UnknownBridge(String),
    #[error("unknown route `{0}` (fallback disabled)")]
    UnknownRoute(String),
    #[error("bridge `{bridge}`: environment variable `{env}` is not set")]
    AuthMissing { bridge: String, env: String },
    #[error("bridge `{0}` timed out")]
    Timeout(String),
    #[error("bridge `{bridge}`: provider returned status {status}")]
    ProviderError { bridge: String, status: u16 },
    #[error("bridge `{bridge}`: transport failure: {reason}")]
    Transport { bridge: String, reason: String },
    #[error("bridge `{bridge}`: malformed response: {reason}")]
    MalformedResponse { bridge: String, reason: String },
    #[error("mock bridge `{0}`: script exhausted")]
    ScriptExhausted(String),
    #[error("mock script {path}: {reason}")]
    BadScript { path: String, reason: String },
    #[error("bridge `{0}` needs the network, which test mode forbids")]
    NetworkInTestMode(String),
    #[error("invalid message sequence: {0}")]
    InvalidTranscript(String),
    #[error("cost ledger: {0}")]
    Ledger(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// System messages may only lead; after that user and assistant alternate,
/// starting and ending with the user.
pub fn check_roles(messages: &[Message]) -> Result<(), BridgeError> {
    let bad = |m: &str| Err(BridgeError::InvalidTranscript(m.to_string()));
    let turns: Vec<Role> = messages
        .iter()
        .map(|m| m.role)
        .skip_while(|r| *r == Role::System)
        .collect();
    if turns.is_empty() {
        return bad("no user message");
    }
    for (i, r) in turns.iter().enumerate() {
        let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
        if *r != expected {
            return bad("roles must alternate user/assistant after the system prompt");
        }
    }
    if turns.last() != Some(&Role::User) {
        return bad("last message must come from the user");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_estimate: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub bridge_id: String,
    pub messages: Vec<Message>,
    pub reply: String,
    pub usage: TokenUsage,
}

/// Raw reply from a backend before pricing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub reply: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub trait ChatBridge: Send + Sync {
    fn id(&self) -> &str;
    fn family(&self) -> &str;
    fn model(&self) -> &str;
    fn complete(&self, messages: &[Message]) -> Result<Completion, BridgeError>;

    /// Resumable cursor state, for bridges that have any.
    fn snapshot(&self) -> Option<Value> {
        None
    }
    fn restore(&self, _state: &Value) -> Result<(), BridgeError> {
        Ok(())
    }
}

pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

// ---------------------------------------------------------------- mock

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct MockRule {
    /// Every needle must occur in the last user message.
    pub contains: Vec<String>,
    pub replies: Vec<String>,
    /// Keep answering with the final reply once the list runs out.
    #[serde(default)]
    pub repeat_last: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct MockScript {
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Consumed in order when no rule matches.
    #[serde(default)]
    pub replies: Vec<String>,
    #[serde(default)]
    pub default: Option<String>,
}

impl MockScript {
    pub fn sequence<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self {
            replies: replies.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn rule<S: Into<String>>(mut self, needle: &str, replies: impl IntoIterator<Item = S>) -> Self {
        self.rules.push(MockRule {
            contains: vec![needle.to_string()],
            replies: replies.into_iter().map(Into::into).collect(),
            repeat_last: false,
        });
        self
    }

    pub fn repeating_rule(mut self, needle: &str, reply: impl Into<String>) -> Self {
        self.rules.push(MockRule {
            contains: vec![needle.to_string()],
            replies: vec![reply.into()],
            repeat_last: true,
        });
        self
    }

    pub fn with_default(mut self, reply: impl Into<String>) -> Self {
        self.default = Some(reply.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
struct MockCursor {
    sequence: usize,
    rules: Vec<usize>,
    calls: u64,
}

pub struct MockBridge {
    id: String,
    family: String,
    script: MockScript,
    cursor: Mutex<MockCursor>,
    transcripts: Mutex<Vec<Vec<Message>>>,
}

impl MockBridge {
    pub fn new(id: impl Into<String>, family: impl Into<String>, script: MockScript) -> Self {
        let family = script.family.clone().unwrap_or_else(|| family.into());
        Self {
            id: id.into(),
            family,
            cursor: Mutex::new(MockCursor {
                rules: vec![0; script.rules.len()],
                ..MockCursor::default()
            }),
            script,
            transcripts: Mutex::new(Vec::new()),
        }
    }

    pub fn from_file(id: &str, family: &str, path: &Path) -> Result<Self, BridgeError> {
        let bad = |reason: String| BridgeError::BadScript {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let script: MockScript = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        Ok(Self::new(id, family, script))
    }

    /// Every message list this mock has been sent, in call order.
    pub fn transcripts(&self) -> Vec<Vec<Message>> {
        self.transcripts.lock().expect("mock lock").clone()
    }

    pub fn calls(&self) -> u64 {
        self.cursor.lock().expect("mock lock").calls
    }
}

impl ChatBridge for MockBridge {
    fn id(&self) -> &str {
        &self.id
    }
    fn family(&self) -> &str {
        &self.family
    }
    fn model(&self) -> &str {
        "mock"
    }

    fn complete(&self, messages: &[Message]) -> Result<Completion, BridgeError> {
        let prompt = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let mut cur = self.cursor.lock().expect("mock lock");
        let mut reply = None;
        for (i, rule) in self.script.rules.iter().enumerate() {
            if !rule.contains.iter().all(|n| prompt.contains(n.as_str())) {
                continue;
            }
            let at = cur.rules[i];
            if at < rule.replies.len() {
                cur.rules[i] += 1;
                reply = Some(rule.replies[at].clone());
                break;
            }
            if rule.repeat_last {
                if let Some(last) = rule.replies.last() {
                    reply = Some(last.clone());
                    break;
                }
            }
        }
        if reply.is_none() && cur.sequence < self.script.replies.len() {
            reply = Some(self.script.replies[cur.sequence].clone());
            cur.sequence += 1;
        }
        let reply = reply
            .or_else(|| self.script.default.clone())
            .ok_or_else(|| BridgeError::ScriptExhausted(self.id.clone()))?;
        cur.calls += 1;
        self.transcripts.lock().expect("mock lock").push(messages.to_vec());
        let prompt_chars: String = messages.iter().map(|m| m.content.as_str()).collect();
        Ok(Completion {
            prompt_tokens: estimate_tokens(&prompt_chars),
            completion_tokens: estimate_tokens(&reply),
            reply,
        })
    }

    fn snapshot(&self) -> Option<Value> {
        Some(serde_json::to_value(&*self.cursor.lock().expect("mock lock")).expect("cursor serializes"))
    }

    fn restore(&self, state: &Value) -> Result<(), BridgeError> {
        let c: MockCursor = serde_json::from_value(state.clone()).map_err(|e| BridgeError::BadScript {
            path: self.id.clone(),
            reason: format!("cursor: {e}"),
        })?;
        *self.cursor.lock().expect("mock lock") = c;
        Ok(())
    }
}

// ---------------------------------------------------------------- http

pub struct HttpBridge {
    id: String,
    cfg: BridgeConfig,
    agent: ureq::Agent,
    /// Base delay before the single retry; the actual wait is jittered ±50%.
    pub retry_delay: Duration,
}

pub fn test_mode_from_env() -> bool {
    std::env::var(TEST_MODE_ENV).is_ok_and(|v| v == "1" || v.eq_ignore_ascii_case("true"))
}

impl HttpBridge {
    pub fn new(id: impl Into<String>, cfg: BridgeConfig) -> Result<Self, BridgeError> {
        let id = id.into();
        if test_mode_from_env() {
            return Err(BridgeError::NetworkInTestMode(id));
        }
        let timeout = Duration::from_secs(if cfg.timeout_secs == 0 { 300 } else { cfg.timeout_secs });
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            id,
            cfg,
            agent,
            retry_delay: Duration::from_millis(500),
        })
    }

    fn request_body(&self, messages: &[Message]) -> Value {
        let mut msgs: Vec<Value> = Vec::new();
        if self.cfg.reasoning_mode == ReasoningMode::Preamble && !self.cfg.reasoning_effort.is_empty() {
            msgs.push(json!({"role": "system", "content": format!("Reasoning effort: {}", self.cfg.reasoning_effort)}));
        }
        msgs.extend(messages.iter().map(|m| json!(m)));
        let mut body = json!({"model": self.cfg.model, "messages": msgs});
        if self.cfg.reasoning_mode == ReasoningMode::Field && !self.cfg.reasoning_effort.is_empty() {
            body["reasoning_effort"] = json!(self.cfg.reasoning_effort);
        }
        body
    }

    fn attempt(&self, key: &str, body: &Value) -> Result<Completion, (BridgeError, bool)> {
        let resp = self
            .agent
            .post(&self.cfg.endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err((BridgeError::Timeout(self.id.clone()), true)),
            Err(e) => {
                return Err((
                    BridgeError::Transport {
                        bridge: self.id.clone(),
                        reason: e.to_string(),
                    },
                    true,
                ))
            }
        };
        let status = resp.status().as_u16();
        if status >= 400 {
            let err = BridgeError::ProviderError {
                bridge: self.id.clone(),
                status,
            };
            return Err((err, status >= 500));
        }
        let malformed = |reason: String| {
            (
                BridgeError::MalformedResponse {
                    bridge: self.id.clone(),
                    reason,
                },
                false,
            )
        };
        let v: Value = resp.body_mut().read_json().map_err(|e| malformed(e.to_string()))?;
        let reply = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| malformed("no choices[0].message.content".into()))?
            .to_string();
        let prompt_chars: String = body["messages"]
            .as_array()
            .map(|a| a.iter().filter_map(|m| m["content"].as_str()).collect())
            .unwrap_or_default();
        Ok(Completion {
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or_else(|| estimate_tokens(&prompt_chars)),
            completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or_else(|| estimate_tokens(&reply)),
            reply,
        })
    }
}

impl ChatBridge for HttpBridge {
    fn id(&self) -> &str {
        &self.id
    }
    fn family(&self) -> &str {
        &self.cfg.family
    }
    fn model(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, messages: &[Message]) -> Result<Completion, BridgeError> {
        let key = std::env::var(&self.cfg.auth_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| BridgeError::AuthMissing {
                bridge: self.id.clone(),
                env: self.cfg.auth_env.clone(),
            })?;
        let body = self.request_body(messages);
        match self.attempt(&key, &body) {
            Ok(c) => Ok(c),
            Err((_, true)) => {
                let base = self.retry_delay.as_millis() as u64;
                let wait = rand::thread_rng().gen_range(base / 2..=base + base / 2);
                std::thread::sleep(Duration::from_millis(wait));
                self.attempt(&key, &body).map_err(|(e, _)| e)
            }
            Err((e, false)) => Err(e),
        }
    }
}

// ---------------------------------------------------------------- hub

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLine {
    pub bridge: String,
    pub model: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: Decimal,
    pub priced: bool,
}

#[derive(Debug, Clone)]
pub struct CostLedger {
    pub path: PathBuf,
}

impl CostLedger {
    pub fn for_run(project_root: &Path, run_id: &str) -> Self {
        Self {
            path: project_root.join(".aris/runs").join(run_id).join("cost.jsonl"),
        }
    }

    pub fn append(&self, line: &CostLine) -> std::io::Result<()> {
        fsutil::append_line(&self.path, &serde_json::to_string(line).expect("cost line serializes"))
    }
}

pub fn price_usage(price: Option<&Price>, prompt_tokens: u64, completion_tokens: u64) -> (Decimal, bool) {
    match price {
        Some(p) => (
            p.prompt * Decimal::from(prompt_tokens) + p.completion * Decimal::from(completion_tokens),
            true,
        ),
        None => (Decimal::ZERO, false),
    }
}

enum Slot {
    Live(Arc<dyn ChatBridge>),
    /// Configured network bridge left unbuilt because test mode is on.
    Offline,
}

pub struct Bridges {
    slots: BTreeMap<String, Slot>,
    prices: BTreeMap<String, Price>,
}

impl Bridges {
    pub fn empty() -> Self {
        Self {
            slots: BTreeMap::new(),
            prices: BTreeMap::new(),
        }
    }

    /// Build every configured bridge. In test mode network bridges are never
    /// constructed; calls to them fail with `NetworkInTestMode`.
    pub fn from_config(cfg: &ArisConfig, project_root: &Path, test_mode: bool) -> Result<Self, BridgeError> {
        let test_mode = test_mode || test_mode_from_env();
        let mut out = Self::empty();
        out.prices = cfg.prices.clone();
        for (id, b) in &cfg.bridges {
            let slot = match b.kind {
                BridgeKind::Mock => {
                    let rel = b.script.as_ref().ok_or_else(|| BridgeError::BadScript {
                        path: id.clone(),
                        reason: "no script configured".into(),
                    })?;
                    let path = project_root.join(rel);
                    Slot::Live(Arc::new(MockBridge::from_file(id, &b.family, &path)?))
                }
                BridgeKind::Chat if test_mode => Slot::Offline,
                BridgeKind::Chat => Slot::Live(Arc::new(HttpBridge::new(id.clone(), b.clone())?)),
            };
            out.slots.insert(id.clone(), slot);
        }
        Ok(out)
    }

    pub fn insert(&mut self, bridge: Arc<dyn ChatBridge>) {
        self.slots.insert(bridge.id().to_string(), Slot::Live(bridge));
    }

    pub fn set_price(&mut self, bridge_id: &str, price: Price) {
        self.prices.insert(bridge_id.to_string(), price);
    }

    pub fn get(&self, bridge_id: &str) -> Result<Arc<dyn ChatBridge>, BridgeError> {
        match self.slots.get(bridge_id) {
            Some(Slot::Live(b)) => Ok(b.clone()),
            Some(Slot::Offline) => Err(BridgeError::NetworkInTestMode(bridge_id.to_string())),
            None => Err(BridgeError::UnknownBridge(bridge_id.to_string())),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn send_chat(
        &self,
        bridge_id: &str,
        messages: &[Message],
        ledger: Option<&CostLedger>,
    ) -> Result<ChatExchange, BridgeError> {
        check_roles(messages)?;
        let bridge = self.get(bridge_id)?;
        let c = bridge.complete(messages)?;
        let (cost, priced) = price_usage(self.prices.get(bridge_id), c.prompt_tokens, c.completion_tokens);
        if let Some(ledger) = ledger {
            ledger.append(&CostLine {
                bridge: bridge_id.to_string(),
                model: bridge.model().to_string(),
                prompt_tokens: c.prompt_tokens,
                completion_tokens: c.completion_tokens,
                cost,
                priced,
            })?;
        }
        Ok(ChatExchange {
            bridge_id: bridge_id.to_string(),
            messages: messages.to_vec(),
            reply: c.reply,
            usage: TokenUsage {
                prompt_tokens: c.prompt_tokens,
                completion_tokens: c.completion_tokens,
                cost_estimate: cost,
            },
        })
    }

    /// Cursor state of every stateful bridge, keyed by id.
    pub fn snapshot(&self) -> BTreeMap<String, Value> {
        self.slots
            .iter()
            .filter_map(|(id, s)| match s {
                Slot::Live(b) => b.snapshot().map(|v| (id.clone(), v)),
                Slot::Offline => None,
            })
            .collect()
    }

    pub fn restore(&self, state: &BTreeMap<String, Value>) -> Result<(), BridgeError> {
        for (id, v) in state {
            self.get(id)?.restore(v)?;
        }
        Ok(())
    }
}

/// Map a `reviewer:` directive value (or none) to a configured bridge id.
pub fn resolve_route(directive: Option<&str>, cfg: &ArisConfig) -> Result<String, BridgeError> {
    let name = directive.unwrap_or(&cfg.review.default_route);
    if let Some(target) = cfg.routes.get(name) {
        return Ok(target.clone());
    }
    if cfg.bridges.contains_key(name) {
        return Ok(name.to_string());
    }
    if cfg.review.allow_fallback && cfg.bridges.contains_key(&cfg.review.fallback_bridge) {
        return Ok(cfg.review.fallback_bridge.clone());
    }
    Err(BridgeError::UnknownRoute(name.to_string()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CostRow {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: Decimal,
    pub unpriced_calls: u64,
}

impl CostRow {
    fn add(&mut self, l: &CostLine) {
        self.calls += 1;
        self.prompt_tokens += l.prompt_tokens;
        self.completion_tokens += l.completion_tokens;
        self.cost += l.cost;
        if !l.priced {
            self.unpriced_calls += 1;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub per_bridge: BTreeMap<String, CostRow>,
    pub total: CostRow,
    pub skipped_lines: usize,
}

pub fn cost_report_from_lines(lines: &[CostLine], skipped_lines: usize) -> CostReport {
    let mut r = CostReport {
        skipped_lines,
        ..CostReport::default()
    };
    for l in lines {
        r.per_bridge.entry(l.bridge.clone()).or_default().add(l);
        r.total.add(l);
    }
    r
}

/// Totals for one run, or across every run when `run_id` is `None`.
pub fn cost_report(project_root: &Path, run_id: Option<&str>) -> std::io::Result<CostReport> {
    let runs_dir = project_root.join(".aris/runs");
    let mut paths = Vec::new();
    match run_id {
        Some(id) => paths.push(CostLedger::for_run(project_root, id).path),
        None => {
            if let Ok(rd) = std::fs::read_dir(&runs_dir) {
                let mut dirs: Vec<PathBuf> = rd.flatten().map(|e| e.path().join("cost.jsonl")).collect();
                dirs.sort();
                paths = dirs;
            }
        }
    }
    let mut lines = Vec::new();
    let mut skipped = 0;
    for p in paths {
        let (rows, bad) = fsutil::read_jsonl::<CostLine>(&p)?;
        lines.extend(rows);
        skipped += bad.len();
    }
    Ok(cost_report_from_lines(&lines, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn hub_with(script: MockScript) -> (Bridges, Arc<MockBridge>) {
        let mock = Arc::new(MockBridge::new("mock", "gpt", script));
        let mut hub = Bridges::empty();
        hub.insert(mock.clone());
        (hub, mock)
    }

    #[test]
    fn scripted_reply_then_exhaustion() {
        let (hub, _) = hub_with(MockScript::sequence(["ok"]));
        let msgs = [Message::user("hi")];
        assert_eq!(hub.send_chat("mock", &msgs, None).unwrap().reply, "ok");
        assert!(matches!(hub.send_chat("mock", &msgs, None), Err(BridgeError::ScriptExhausted(_))));
    }

    #[test]
    fn rules_match_on_last_user_message() {
        let script = MockScript::sequence(["seq"])
            .rule("Task: alpha", ["a1", "a2"])
            .repeating_rule("Task: beta", "b")
            .with_default("dflt");
        let (hub, mock) = hub_with(script);
        let ask = |t: &str| hub.send_chat("mock", &[Message::user(t)], None).unwrap().reply;
        assert_eq!(ask("Task: alpha"), "a1");
        assert_eq!(ask("Task: beta"), "b");
        assert_eq!(ask("Task: alpha"), "a2");
        assert_eq!(ask("Task: alpha"), "seq");
        assert_eq!(ask("Task: alpha"), "dflt");
        assert_eq!(ask("Task: beta"), "b");
        assert_eq!(mock.calls(), 6);
    }

    #[test]
    fn mock_is_deterministic_and_resumable() {
        let script = MockScript::sequence(["x", "yy", "zzz"]);
        let run = |skip: Option<Value>| {
            let (hub, mock) = hub_with(script.clone());
            if let Some(s) = skip {
                mock.restore(&s).unwrap();
            }
            let e = hub.send_chat("mock", &[Message::user("abcde")], None).unwrap();
            (e, mock.snapshot().unwrap())
        };
        let (first, state) = run(None);
        assert_eq!(first, run(None).0);
        assert_eq!(first.usage.prompt_tokens, 2);
        assert_eq!(run(Some(state)).0.reply, "yy");
    }

    #[test]
    fn roles_must_alternate() {
        let (hub, _) = hub_with(MockScript::sequence(["a"]).with_default("b"));
        let bad = [Message::user("a"), Message::user("b")];
        assert!(matches!(hub.send_chat("mock", &bad, None), Err(BridgeError::InvalidTranscript(_))));
        let good = [Message::system("s"), Message::user("a"), Message::assistant("b"), Message::user("c")];
        hub.send_chat("mock", &good, None).unwrap();
    }

    #[test]
    fn auth_missing_before_any_io() {
        // port 9 on a reserved address: any connection attempt would error differently
        let cfg = BridgeConfig {
            endpoint: "http://192.0.2.1:9/v1/chat/completions".into(),
            model: "m".into(),
            auth_env: "ARIS_TEST_SURELY_UNSET_KEY".into(),
            timeout_secs: 1,
            ..BridgeConfig::default()
        };
        let b = HttpBridge::new("codex", cfg).unwrap();
        let t = std::time::Instant::now();
        let err = b.complete(&[Message::user("x")]).unwrap_err();
        assert!(matches!(err, BridgeError::AuthMissing { .. }), "{err}");
        assert!(t.elapsed() < Duration::from_millis(200));
    }

    fn serve(responses: Vec<(u16, &'static str)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (mut s, _) = listener.accept().unwrap();
                let mut r = BufReader::new(s.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    r.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                r.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                write!(
                    s,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn local_bridge(url: String, env: &str) -> HttpBridge {
        std::env::set_var(env, "k");
        let mut b = HttpBridge::new(
            "local",
            BridgeConfig {
                endpoint: url,
                model: "m1".into(),
                reasoning_effort: "xhigh".into(),
                auth_env: env.into(),
                timeout_secs: 5,
                ..BridgeConfig::default()
            },
        )
        .unwrap();
        b.retry_delay = Duration::from_millis(2);
        b
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}],"usage":{"prompt_tokens":7,"completion_tokens":3}}"#;

    #[test]
    fn server_error_is_retried_once() {
        let (url, h) = serve(vec![(503, "{}"), (200, OK)]);
        let c = local_bridge(url, "ARIS_T_KEY_A").complete(&[Message::user("q")]).unwrap();
        assert_eq!((c.reply.as_str(), c.prompt_tokens, c.completion_tokens), ("hello", 7, 3));
        let bodies = h.join().unwrap();
        assert_eq!(bodies.len(), 2);
        let sent: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["reasoning_effort"], "xhigh");
        assert_eq!(sent["model"], "m1");
    }

    #[test]
    fn client_error_is_not_retried() {
        let (url, h) = serve(vec![(400, "{}")]);
        let err = local_bridge(url, "ARIS_T_KEY_B").complete(&[Message::user("q")]).unwrap_err();
        assert!(matches!(err, BridgeError::ProviderError { status: 400, .. }));
        assert_eq!(h.join().unwrap().len(), 1);
    }

    #[test]
    fn routes_resolve() {
        let mut cfg = ArisConfig::with_default_bridges();
        assert_eq!(resolve_route(None, &cfg).unwrap(), "codex");
        assert_eq!(resolve_route(Some("oracle-pro"), &cfg).unwrap(), "oracle");
        assert!(matches!(resolve_route(Some("frontier-x"), &cfg), Err(BridgeError::UnknownRoute(_))));
        cfg.review.allow_fallback = true;
        assert_eq!(resolve_route(Some("frontier-x"), &cfg).unwrap(), "llm-chat");
    }

    #[test]
    fn test_mode_never_builds_network_bridges() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ArisConfig::with_default_bridges();
        std::fs::create_dir_all(dir.path().join(".aris/mock")).unwrap();
        std::fs::write(dir.path().join(".aris/mock/executor.json"), "{}").unwrap();
        std::fs::write(dir.path().join(".aris/mock/reviewer.json"), "{}").unwrap();
        let hub = Bridges::from_config(&cfg, dir.path(), true).unwrap();
        assert!(matches!(hub.get("codex"), Err(BridgeError::NetworkInTestMode(_))));
        assert!(hub.get("mock").is_ok());
    }

    #[test]
    fn cost_of_two_exchanges() {
        // oracle: tokens times per-token price, summed independently
        let oracle = |p: u64, c: u64, pp: i64, cp: i64| Decimal::from(p as i64 * pp + c as i64 * cp);
        let lines: Vec<CostLine> = (0..2)
            .map(|_| {
                let price = Price { prompt: Decimal::ONE, completion: Decimal::TWO };
                let (cost, priced) = price_usage(Some(&price), 100, 50);
                assert_eq!(cost, oracle(100, 50, 1, 2));
                CostLine { bridge: "codex".into(), model: "m".into(), prompt_tokens: 100, completion_tokens: 50, cost, priced }
            })
            .collect();
        let r = cost_report_from_lines(&lines, 0);
        assert_eq!(r.per_bridge["codex"].cost, Decimal::from(400));
        assert_eq!(r.total.cost, Decimal::from(400));
        assert_eq!(cost_report_from_lines(&[], 0), CostReport::default());
    }

    #[test]
    fn ledger_replay_matches_live_totals() {
        let dir = tempfile::tempdir().unwrap();
        let (mut hub, _) = hub_with(MockScript::default().with_default("reply text"));
        hub.insert(Arc::new(MockBridge::new("other", "claude", MockScript::default().with_default("r"))));
        hub.set_price("mock", Price { prompt: "0.5".parse().unwrap(), completion: "1.25".parse().unwrap() });
        let ledger = CostLedger::for_run(dir.path(), "run-1");
        let mut live = Decimal::ZERO;
        for (i, id) in ["mock", "other", "mock"].into_iter().enumerate() {
            live += hub.send_chat(id, &[Message::user("x".repeat(i * 7 + 1))], Some(&ledger)).unwrap().usage.cost_estimate;
        }
        let r = cost_report(dir.path(), Some("run-1")).unwrap();
        assert_eq!(r.total.cost, live);
        assert_eq!(r.total.calls, 3);
        assert_eq!(r.per_bridge["other"].unpriced_calls, 1);
        let sum: Decimal = r.per_bridge.values().map(|row| row.cost).sum();
        assert_eq!(sum, r.total.cost);
        assert_eq!(cost_report(dir.path(), None).unwrap(), r);
    }
}
