//! Query gateway: one door to the backend for every question the pipeline
//! asks, with caching, auditing and yes/no answer parsing.

pub mod cache;
pub mod http;
pub mod scripted;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::exec::ExecMode;

pub use cache::QueryCache;
pub use http::HttpBackend;
pub use scripted::{GenerationScripts, KeywordRule, Script, ScriptedBackend, ScriptedPolicy, SplitScript};

/// What a query is for. Split queries answer yes/no about one example; the
/// rest generate free text inside the optimizer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Split,
    Purity,
    Loss,
    Feedback,
    Step,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Split => "split",
            Role::Purity => "purity",
            Role::Loss => "loss",
            Role::Feedback => "feedback",
            Role::Step => "step",
        }
    }

    pub fn is_generation(self) -> bool {
        !matches!(self, Role::Split)
    }
}

/// Parsed yes/no verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryAnswer {
    Yes,
    No,
}

impl BinaryAnswer {
    pub fn is_yes(self) -> bool {
        matches!(self, BinaryAnswer::Yes)
    }

    /// Label the answer asserts: yes claims the positive class.
    pub fn asserted_label(self) -> Label {
        Label::from_bool(self.is_yes())
    }
}

/// Scans word tokens left to right and returns the first "yes" or "no",
/// ignoring case, punctuation and surrounding markup. `None` when neither
/// word occurs.
pub fn parse_binary_answer(raw: &str) -> Option<BinaryAnswer> {
    for token in raw.split(|c: char| !c.is_alphanumeric()) {
        if token.eq_ignore_ascii_case("yes") {
            return Some(BinaryAnswer::Yes);
        }
        if token.eq_ignore_ascii_case("no") {
            return Some(BinaryAnswer::No);
        }
    }
    None
}

/// Audit record of one query, cached or fresh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRecord {
    pub role: Role,
    pub prompt_text: String,
    pub input_text: Option<String>,
    pub response_text: String,
    /// Parsed verdict for split queries; `None` for generation roles.
    pub parsed: Option<BinaryAnswer>,
    /// True when the response could not be parsed and the answer fell back
    /// to "no".
    pub unparseable: bool,
    /// True when the response came from the cache.
    pub cached: bool,
}

/// Identifies a backend for cache keying and run manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIdentity {
    pub kind: String,
    pub model: String,
}

/// One completion request handed to a backend.
#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub role: Role,
    pub prompt: String,
    pub input: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// A completion provider. Implementations must be safe to share across
/// threads; the gateway issues concurrent requests in parallel mode.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String>;
    fn identity(&self) -> BackendIdentity;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

fn default_temperature() -> f64 {
    0.7
}

fn default_max_tokens() -> u32 {
    256
}

fn default_split_max_tokens() -> u32 {
    8
}

fn default_timeout() -> u64 {
    30
}

fn default_retries() -> u32 {
    2
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

/// Backend selection and request shaping.
///
/// `temperature` and `max_tokens` apply to generation roles; split queries
/// always run at temperature 0 with a `split_max_tokens` cap so verdicts
/// stay short and reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_split_max_tokens")]
    pub split_max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Fail on unparseable split answers instead of defaulting to "no".
    #[serde(default)]
    pub strict_parse: bool,
    #[serde(default)]
    pub scripted: Option<ScriptedPolicy>,
}

impl Default for BackendConfig {
    fn default() -> BackendConfig {
        BackendConfig {
            kind: BackendKind::Scripted,
            base_url: None,
            model: None,
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            split_max_tokens: default_split_max_tokens(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            api_key_env: default_api_key_env(),
            strict_parse: false,
            scripted: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".to_string()));
        }
        if self.max_tokens == 0 || self.split_max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".to_string()));
        }
        match self.kind {
            BackendKind::Http => {
                if self.base_url.is_none() {
                    return Err(Error::Config("http backend requires base_url".to_string()));
                }
                if self.model.is_none() {
                    return Err(Error::Config("http backend requires a model name".to_string()));
                }
            }
            BackendKind::Scripted => {
                if self.scripted.is_none() {
                    return Err(Error::Config(
                        "scripted backend requires a scripted policy".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

struct GatewayStats {
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
    unparseable: AtomicU64,
}

/// Outcome of one query before cache/audit commits are applied.
struct QueryOutcome {
    digest: String,
    fresh: bool,
    record: QueryRecord,
}

/// Mediates every backend query: computes cache digests, serves hits without
/// touching the backend, applies the yes/no parsing policy, counts calls and
/// optionally mirrors each query to an audit log.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    identity: BackendIdentity,
    cache: Option<QueryCache>,
    audit: Option<Mutex<File>>,
    strict_parse: bool,
    temperature: f64,
    max_tokens: u32,
    split_max_tokens: u32,
    exec_mode: ExecMode,
    stats: GatewayStats,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Gateway {
        let identity = backend.identity();
        Gateway {
            backend,
            identity,
            cache: Some(QueryCache::in_memory()),
            audit: None,
            strict_parse: false,
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            split_max_tokens: default_split_max_tokens(),
            exec_mode: ExecMode::default(),
            stats: GatewayStats {
                backend_calls: AtomicU64::new(0),
                cache_hits: AtomicU64::new(0),
                unparseable: AtomicU64::new(0),
            },
        }
    }

    /// Builds the backend named by `config` and wraps it.
    pub fn from_config(config: &BackendConfig) -> Result<Gateway> {
        config.validate()?;
        let backend: Arc<dyn Backend> = match config.kind {
            BackendKind::Http => Arc::new(HttpBackend::from_config(config)?),
            BackendKind::Scripted => {
                let policy = config
                    .scripted
                    .clone()
                    .ok_or_else(|| Error::Config("scripted backend requires a scripted policy".to_string()))?;
                Arc::new(ScriptedBackend::new(policy))
            }
        };
        Ok(Gateway::new(backend)
            .with_strict_parse(config.strict_parse)
            .with_generation_params(config.temperature, config.max_tokens)
            .with_split_max_tokens(config.split_max_tokens))
    }

    pub fn with_cache(mut self, cache: QueryCache) -> Gateway {
        self.cache = Some(cache);
        self
    }

    /// Disables caching entirely; every query reaches the backend.
    pub fn without_cache(mut self) -> Gateway {
        self.cache = None;
        self
    }

    pub fn with_audit_log(mut self, path: &Path) -> Result<Gateway> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.audit = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn with_strict_parse(mut self, strict: bool) -> Gateway {
        self.strict_parse = strict;
        self
    }

    pub fn with_generation_params(mut self, temperature: f64, max_tokens: u32) -> Gateway {
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_split_max_tokens(mut self, max_tokens: u32) -> Gateway {
        self.split_max_tokens = max_tokens;
        self
    }

    pub fn with_exec_mode(mut self, mode: ExecMode) -> Gateway {
        self.exec_mode = mode;
        self
    }

    pub fn exec_mode(&self) -> ExecMode {
        self.exec_mode
    }

    pub fn identity(&self) -> &BackendIdentity {
        &self.identity
    }

    /// Completions that actually reached the backend.
    pub fn backend_calls(&self) -> u64 {
        self.stats.backend_calls.load(Ordering::SeqCst)
    }

    /// Queries served from the cache.
    pub fn cache_hits(&self) -> u64 {
        self.stats.cache_hits.load(Ordering::SeqCst)
    }

    /// Split responses that fell back to "no" because parsing failed.
    pub fn unparseable_answers(&self) -> u64 {
        self.stats.unparseable.load(Ordering::SeqCst)
    }

    fn complete_fresh(&self, request: &CompletionRequest) -> Result<String> {
        self.stats.backend_calls.fetch_add(1, Ordering::SeqCst);
        self.backend.complete(request)
    }

    fn split_outcome(&self, question: &str, input: &str) -> Result<QueryOutcome> {
        if input.trim().is_empty() {
            return Err(Error::Config("split query input text is empty".to_string()));
        }
        let digest = cache::digest(&self.identity, Role::Split, question, Some(input));
        let (response, cached) = match self.cache.as_ref().and_then(|c| c.get(&digest)) {
            Some(hit) => {
                self.stats.cache_hits.fetch_add(1, Ordering::SeqCst);
                (hit, true)
            }
            None => {
                let request = CompletionRequest {
                    role: Role::Split,
                    prompt: question.to_string(),
                    input: Some(input.to_string()),
                    temperature: 0.0,
                    max_tokens: self.split_max_tokens,
                };
                (self.complete_fresh(&request)?, false)
            }
        };
        let parsed = parse_binary_answer(&response);
        let unparseable = parsed.is_none();
        if unparseable {
            if self.strict_parse {
                return Err(Error::Unparseable { raw: response });
            }
            self.stats.unparseable.fetch_add(1, Ordering::SeqCst);
        }
        Ok(QueryOutcome {
            digest,
            fresh: !cached,
            record: QueryRecord {
                role: Role::Split,
                prompt_text: question.to_string(),
                input_text: Some(input.to_string()),
                response_text: response,
                parsed,
                unparseable,
                cached,
            },
        })
    }

    /// Commits cache and audit writes for one outcome. Called in input
    /// order after any parallel section, so persistent artifacts do not
    /// depend on thread scheduling.
    fn commit(&self, outcome: &QueryOutcome) -> Result<()> {
        if outcome.fresh {
            if let Some(cache) = &self.cache {
                cache.put(&outcome.digest, outcome.record.role, &outcome.record.response_text)?;
            }
        }
        if let Some(audit) = &self.audit {
            let line = serde_json::to_string(&outcome.record)?;
            let mut file = audit.lock().expect("audit lock");
            file.write_all(line.as_bytes())?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Answers one yes/no question about one input. Unparseable responses
    /// default to "no" (and are flagged) unless strict parsing is on.
    pub fn answer_binary(&self, question: &str, input: &str) -> Result<(BinaryAnswer, QueryRecord)> {
        let outcome = self.split_outcome(question, input)?;
        self.commit(&outcome)?;
        let answer = outcome.record.parsed.unwrap_or(BinaryAnswer::No);
        Ok((answer, outcome.record))
    }

    /// Answers the same question for every input, in parallel when the
    /// gateway's [`ExecMode`] allows. Results keep input order and the first
    /// error (in input order) wins.
    pub fn batch_answer(
        &self,
        question: &str,
        inputs: &[String],
    ) -> Result<Vec<(BinaryAnswer, QueryRecord)>> {
        if inputs.is_empty() {
            return Err(Error::Config("batch_answer requires at least one input".to_string()));
        }
        let outcomes = crate::exec::map(self.exec_mode, inputs, |input| {
            self.split_outcome(question, input)
        });
        let mut results = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            let outcome = outcome?;
            self.commit(&outcome)?;
            let answer = outcome.record.parsed.unwrap_or(BinaryAnswer::No);
            results.push((answer, outcome.record));
        }
        Ok(results)
    }

    /// Runs one generation query (purity, loss, feedback or step) and
    /// returns the raw response text.
    pub fn generate_text(&self, role: Role, prompt: &str) -> Result<(String, QueryRecord)> {
        if !role.is_generation() {
            return Err(Error::Config("generate_text cannot serve split queries".to_string()));
        }
        if prompt.trim().is_empty() {
            return Err(Error::Config("generation prompt is empty".to_string()));
        }
        let digest = cache::digest(&self.identity, role, prompt, None);
        let (response, cached) = match self.cache.as_ref().and_then(|c| c.get(&digest)) {
            Some(hit) => {
                self.stats.cache_hits.fetch_add(1, Ordering::SeqCst);
                (hit, true)
            }
            None => {
                let request = CompletionRequest {
                    role,
                    prompt: prompt.to_string(),
                    input: None,
                    temperature: self.temperature,
                    max_tokens: self.max_tokens,
                };
                let response = self.complete_fresh(&request)?;
                if response.trim().is_empty() {
                    return Err(Error::EmptyCompletion(role.as_str().to_string()));
                }
                (response, false)
            }
        };
        let outcome = QueryOutcome {
            digest,
            fresh: !cached,
            record: QueryRecord {
                role,
                prompt_text: prompt.to_string(),
                input_text: None,
                response_text: response.clone(),
                parsed: None,
                unparseable: false,
                cached,
            },
        };
        self.commit(&outcome)?;
        Ok((response, outcome.record))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_leading_yes_with_punctuation() {
        assert_eq!(parse_binary_answer("Yes, because..."), Some(BinaryAnswer::Yes));
        assert_eq!(parse_binary_answer("**No.**"), Some(BinaryAnswer::No));
        assert_eq!(parse_binary_answer("  yes"), Some(BinaryAnswer::Yes));
        assert_eq!(parse_binary_answer("The answer is no"), Some(BinaryAnswer::No));
    }

    #[test]
    fn first_verdict_token_wins() {
        assert_eq!(parse_binary_answer("yes, not no"), Some(BinaryAnswer::Yes));
        assert_eq!(parse_binary_answer("No... well, yes"), Some(BinaryAnswer::No));
    }

    #[test]
    fn non_verdict_text_is_unparseable() {
        assert_eq!(parse_binary_answer("It depends"), None);
        assert_eq!(parse_binary_answer(""), None);
        // Words merely containing the letters do not count.
        assert_eq!(parse_binary_answer("nose knows yesterday"), None);
    }

    fn scripted_gateway(policy: ScriptedPolicy) -> (Gateway, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(policy));
        let gateway = Gateway::new(backend.clone());
        (gateway, backend)
    }

    fn yes_rule_policy() -> ScriptedPolicy {
        ScriptedPolicy {
            split: SplitScript {
                rules: vec![KeywordRule {
                    prompt_contains: "alpha".to_string(),
                    input_all_of: vec!["alpha".to_string()],
                    then_response: "yes".to_string(),
                    else_response: "no".to_string(),
                }],
                ..SplitScript::default()
            },
            ..ScriptedPolicy::default()
        }
    }

    #[test]
    fn answer_binary_parses_and_records() {
        let (gateway, _) = scripted_gateway(yes_rule_policy());
        let (answer, record) = gateway
            .answer_binary("Does it mention alpha? (yes/no)", "alpha beta")
            .unwrap();
        assert_eq!(answer, BinaryAnswer::Yes);
        assert_eq!(record.response_text, "yes");
        assert!(!record.cached);
        assert!(!record.unparseable);
        assert_eq!(record.parsed, Some(BinaryAnswer::Yes));
    }

    #[test]
    fn unparseable_falls_back_to_no_and_is_counted() {
        let mut policy = yes_rule_policy();
        policy.split.default_response = "Maybe.".to_string();
        let (gateway, _) = scripted_gateway(policy);
        let (answer, record) = gateway.answer_binary("unmatched question", "text").unwrap();
        assert_eq!(answer, BinaryAnswer::No);
        assert!(record.unparseable);
        assert_eq!(gateway.unparseable_answers(), 1);
    }

    #[test]
    fn strict_parse_rejects_unparseable() {
        let mut policy = yes_rule_policy();
        policy.split.default_response = "Maybe.".to_string();
        let (gateway, _) = scripted_gateway(policy);
        let gateway = gateway.with_strict_parse(true);
        let err = gateway.answer_binary("unmatched question", "text").unwrap_err();
        assert!(matches!(err, Error::Unparseable { raw } if raw == "Maybe."));
    }

    #[test]
    fn cache_hit_skips_backend() {
        let (gateway, backend) = scripted_gateway(yes_rule_policy());
        let q = "Does it mention alpha? (yes/no)";
        gateway.answer_binary(q, "alpha").unwrap();
        assert_eq!(backend.calls(), 1);
        let (answer, record) = gateway.answer_binary(q, "alpha").unwrap();
        assert_eq!(answer, BinaryAnswer::Yes);
        assert!(record.cached);
        assert_eq!(backend.calls(), 1);
        assert_eq!(gateway.backend_calls(), 1);
        assert_eq!(gateway.cache_hits(), 1);
    }

    #[test]
    fn batch_answer_keeps_input_order() {
        let (gateway, _) = scripted_gateway(yes_rule_policy());
        let inputs: Vec<String> = (0..64)
            .map(|i| {
                if i % 3 == 0 {
                    format!("alpha case {i}")
                } else {
                    format!("plain case {i}")
                }
            })
            .collect();
        let q = "Does it mention alpha? (yes/no)";
        let results = gateway.batch_answer(q, &inputs).unwrap();
        assert_eq!(results.len(), 64);
        for (i, (answer, record)) in results.iter().enumerate() {
            assert_eq!(answer.is_yes(), i % 3 == 0, "input {i}");
            assert_eq!(record.input_text.as_deref(), Some(inputs[i].as_str()));
        }
    }

    #[test]
    fn batch_answer_rejects_empty_batch() {
        let (gateway, _) = scripted_gateway(yes_rule_policy());
        assert!(gateway.batch_answer("q", &[]).is_err());
    }

    #[test]
    fn generate_text_serves_canned_responses_and_caches() {
        let policy = ScriptedPolicy {
            generation: GenerationScripts {
                loss: Some(Script::Canned {
                    responses: vec!["diagnosis one".to_string()],
                    repeat_last: false,
                }),
                ..GenerationScripts::default()
            },
            ..ScriptedPolicy::default()
        };
        let (gateway, backend) = scripted_gateway(policy);
        let (text, record) = gateway.generate_text(Role::Loss, "diagnose").unwrap();
        assert_eq!(text, "diagnosis one");
        assert!(!record.cached);
        // Same prompt hits the cache, so the one-entry script is not consumed.
        let (text, record) = gateway.generate_text(Role::Loss, "diagnose").unwrap();
        assert_eq!(text, "diagnosis one");
        assert!(record.cached);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn generate_text_rejects_empty_completion() {
        let policy = ScriptedPolicy {
            generation: GenerationScripts {
                step: Some(Script::Fixed { text: "  ".to_string() }),
                ..GenerationScripts::default()
            },
            ..ScriptedPolicy::default()
        };
        let (gateway, _) = scripted_gateway(policy);
        let err = gateway.generate_text(Role::Step, "revise").unwrap_err();
        assert!(matches!(err, Error::EmptyCompletion(role) if role == "step"));
    }

    #[test]
    fn generate_text_rejects_split_role_and_empty_prompt() {
        let (gateway, _) = scripted_gateway(yes_rule_policy());
        assert!(gateway.generate_text(Role::Split, "q").is_err());
        assert!(gateway.generate_text(Role::Loss, "   ").is_err());
    }

    #[test]
    fn audit_log_mirrors_queries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("queries.jsonl");
        let (gateway, _) = scripted_gateway(yes_rule_policy());
        let gateway = gateway.with_audit_log(&path).unwrap();
        gateway.answer_binary("Does it mention alpha? (yes/no)", "alpha").unwrap();
        gateway.answer_binary("Does it mention alpha? (yes/no)", "alpha").unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = raw.lines().collect();
        assert_eq!(lines.len(), 2);
        let second: QueryRecord = serde_json::from_str(lines[1]).unwrap();
        assert!(second.cached);
    }

    #[test]
    fn from_config_validates() {
        let config = BackendConfig {
            kind: BackendKind::Scripted,
            scripted: None,
            ..BackendConfig::default()
        };
        assert!(matches!(Gateway::from_config(&config), Err(Error::Config(_))));

        let config = BackendConfig {
            kind: BackendKind::Scripted,
            scripted: Some(yes_rule_policy()),
            ..BackendConfig::default()
        };
        let gateway = Gateway::from_config(&config).unwrap();
        assert_eq!(gateway.identity().kind, "scripted");
    }
}
