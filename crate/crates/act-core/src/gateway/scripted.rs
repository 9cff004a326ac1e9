//! Deterministic scripted backend for tests, replays and offline runs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Backend, BackendIdentity, CompletionRequest, Role};

fn default_yes() -> String {
    "yes".to_string()
}

fn default_no() -> String {
    "no".to_string()
}

/// One keyword rule for split queries: when the question contains
/// `prompt_contains`, answer `then_response` if the input contains every
/// string in `input_all_of`, else `else_response`. Matching is
/// case-insensitive substring containment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeywordRule {
    pub prompt_contains: String,
    #[serde(default)]
    pub input_all_of: Vec<String>,
    #[serde(default = "default_yes")]
    pub then_response: String,
    #[serde(default = "default_no")]
    pub else_response: String,
}

/// How the scripted backend answers split queries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitScript {
    /// Answer "yes"/"no" by looking up the word following "mention" in the
    /// question and testing whether the input contains it. Applies before
    /// the keyword rules.
    pub extract_mention: bool,
    /// First rule whose `prompt_contains` matches the question wins.
    pub rules: Vec<KeywordRule>,
    /// Response when nothing matched.
    pub default_response: String,
}

impl Default for SplitScript {
    fn default() -> SplitScript {
        SplitScript {
            extract_mention: false,
            rules: Vec::new(),
            default_response: default_no(),
        }
    }
}

/// Response source for one generation role.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Script {
    /// Always the same text.
    Fixed { text: String },
    /// Responses consumed in order; exhaustion is an error unless
    /// `repeat_last` is set.
    Canned {
        responses: Vec<String>,
        #[serde(default)]
        repeat_last: bool,
    },
    /// The n-th call yields `"Does the example mention {prefix}{start+n}? (yes/no)?"`,
    /// pairing with `extract_mention` split handling.
    MentionTemplate {
        prefix: String,
        #[serde(default)]
        start: usize,
    },
}

/// Scripts per generation role; roles without a script reject queries.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationScripts {
    pub purity: Option<Script>,
    pub loss: Option<Script>,
    pub feedback: Option<Script>,
    pub step: Option<Script>,
}

impl GenerationScripts {
    fn for_role(&self, role: Role) -> Option<&Script> {
        match role {
            Role::Purity => self.purity.as_ref(),
            Role::Loss => self.loss.as_ref(),
            Role::Feedback => self.feedback.as_ref(),
            Role::Step => self.step.as_ref(),
            Role::Split => None,
        }
    }
}

/// Full behaviour description for a scripted backend.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedPolicy {
    /// Model name reported in the backend identity (and so mixed into cache
    /// digests). Defaults to "scripted".
    pub model: Option<String>,
    pub split: SplitScript,
    pub generation: GenerationScripts,
}

/// Lowercase alphanumeric word tokens.
fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// The word following "mention" in the prompt, if any.
fn mention_target(prompt: &str) -> Option<String> {
    let toks = tokens(prompt);
    toks.iter()
        .position(|t| t == "mention" || t == "mentions")
        .and_then(|i| toks.get(i + 1))
        .cloned()
}

/// Deterministic [`Backend`] driven by a [`ScriptedPolicy`]. Counts every
/// completion it serves, in total and per role.
pub struct ScriptedBackend {
    policy: ScriptedPolicy,
    total_calls: AtomicU64,
    role_calls: Mutex<HashMap<Role, u64>>,
    cursors: Mutex<HashMap<Role, usize>>,
}

impl ScriptedBackend {
    pub fn new(policy: ScriptedPolicy) -> ScriptedBackend {
        ScriptedBackend {
            policy,
            total_calls: AtomicU64::new(0),
            role_calls: Mutex::new(HashMap::new()),
            cursors: Mutex::new(HashMap::new()),
        }
    }

    /// Completions served so far.
    pub fn calls(&self) -> u64 {
        self.total_calls.load(Ordering::SeqCst)
    }

    /// Completions served for one role.
    pub fn calls_for(&self, role: Role) -> u64 {
        *self.role_calls.lock().expect("counter lock").get(&role).unwrap_or(&0)
    }

    fn answer_split(&self, prompt: &str, input: &str) -> String {
        let script = &self.policy.split;
        if script.extract_mention {
            if let Some(target) = mention_target(prompt) {
                let present = tokens(input).iter().any(|t| *t == target);
                return if present { "yes".into() } else { "no".into() };
            }
        }
        for rule in &script.rules {
            if contains_ci(prompt, &rule.prompt_contains) {
                let hit = rule.input_all_of.iter().all(|frag| contains_ci(input, frag));
                return if hit {
                    rule.then_response.clone()
                } else {
                    rule.else_response.clone()
                };
            }
        }
        script.default_response.clone()
    }

    fn generate(&self, role: Role) -> Result<String> {
        let script = self
            .policy
            .generation
            .for_role(role)
            .ok_or_else(|| Error::Script(format!("no script for role `{}`", role.as_str())))?;
        match script {
            Script::Fixed { text } => Ok(text.clone()),
            Script::Canned { responses, repeat_last } => {
                let mut cursors = self.cursors.lock().expect("cursor lock");
                let cursor = cursors.entry(role).or_insert(0);
                let index = if *cursor < responses.len() {
                    *cursor
                } else if *repeat_last && !responses.is_empty() {
                    responses.len() - 1
                } else {
                    return Err(Error::Script(format!(
                        "canned script for role `{}` exhausted after {} response(s)",
                        role.as_str(),
                        responses.len()
                    )));
                };
                *cursor += 1;
                Ok(responses[index].clone())
            }
            Script::MentionTemplate { prefix, start } => {
                let mut cursors = self.cursors.lock().expect("cursor lock");
                let cursor = cursors.entry(role).or_insert(0);
                let n = start + *cursor;
                *cursor += 1;
                Ok(format!("Does the example mention {prefix}{n}? (yes/no)?"))
            }
        }
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        self.total_calls.fetch_add(1, Ordering::SeqCst);
        *self
            .role_calls
            .lock()
            .expect("counter lock")
            .entry(request.role)
            .or_insert(0) += 1;
        match request.role {
            Role::Split => Ok(self.answer_split(&request.prompt, request.input.as_deref().unwrap_or(""))),
            role => self.generate(role),
        }
    }

    fn identity(&self) -> BackendIdentity {
        BackendIdentity {
            kind: "scripted".to_string(),
            model: self
                .policy
                .model
                .clone()
                .unwrap_or_else(|| "scripted".to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split_request(prompt: &str, input: &str) -> CompletionRequest {
        CompletionRequest {
            role: Role::Split,
            prompt: prompt.to_string(),
            input: Some(input.to_string()),
            temperature: 0.0,
            max_tokens: 8,
        }
    }

    fn gen_request(role: Role) -> CompletionRequest {
        CompletionRequest {
            role,
            prompt: "p".to_string(),
            input: None,
            temperature: 0.7,
            max_tokens: 256,
        }
    }

    #[test]
    fn keyword_rules_route_by_prompt_and_input() {
        let policy = ScriptedPolicy {
            split: SplitScript {
                rules: vec![KeywordRule {
                    prompt_contains: "blood".to_string(),
                    input_all_of: vec!["coughing".to_string(), "blood".to_string()],
                    then_response: default_yes(),
                    else_response: default_no(),
                }],
                ..SplitScript::default()
            },
            ..ScriptedPolicy::default()
        };
        let backend = ScriptedBackend::new(policy);
        let q = "Does this example show evidence of coughing up blood? (yes/no)";
        assert_eq!(backend.complete(&split_request(q, "patient Coughing Blood daily")).unwrap(), "yes");
        assert_eq!(backend.complete(&split_request(q, "patient has a fever")).unwrap(), "no");
        assert_eq!(backend.complete(&split_request("unrelated question", "anything")).unwrap(), "no");
        assert_eq!(backend.calls(), 3);
        assert_eq!(backend.calls_for(Role::Split), 3);
    }

    #[test]
    fn extract_mention_routes_by_named_token() {
        let policy = ScriptedPolicy {
            split: SplitScript {
                extract_mention: true,
                ..SplitScript::default()
            },
            ..ScriptedPolicy::default()
        };
        let backend = ScriptedBackend::new(policy);
        let q = "Does the example mention m3? (yes/no)?";
        assert_eq!(backend.complete(&split_request(q, "tokens m1 m3 here")).unwrap(), "yes");
        assert_eq!(backend.complete(&split_request(q, "tokens m1 m30 here")).unwrap(), "no");
        // No mention target falls back to the default response.
        assert_eq!(backend.complete(&split_request("plain question", "m3")).unwrap(), "no");
    }

    #[test]
    fn canned_scripts_are_consumed_in_order() {
        let policy = ScriptedPolicy {
            generation: GenerationScripts {
                step: Some(Script::Canned {
                    responses: vec!["first".to_string(), "second".to_string()],
                    repeat_last: false,
                }),
                ..GenerationScripts::default()
            },
            ..ScriptedPolicy::default()
        };
        let backend = ScriptedBackend::new(policy);
        assert_eq!(backend.complete(&gen_request(Role::Step)).unwrap(), "first");
        assert_eq!(backend.complete(&gen_request(Role::Step)).unwrap(), "second");
        let err = backend.complete(&gen_request(Role::Step)).unwrap_err();
        assert!(err.to_string().contains("exhausted"), "{err}");
    }

    #[test]
    fn repeat_last_keeps_serving_final_response() {
        let policy = ScriptedPolicy {
            generation: GenerationScripts {
                loss: Some(Script::Canned {
                    responses: vec!["only".to_string()],
                    repeat_last: true,
                }),
                ..GenerationScripts::default()
            },
            ..ScriptedPolicy::default()
        };
        let backend = ScriptedBackend::new(policy);
        for _ in 0..3 {
            assert_eq!(backend.complete(&gen_request(Role::Loss)).unwrap(), "only");
        }
    }

    #[test]
    fn mention_template_counts_from_start() {
        let policy = ScriptedPolicy {
            generation: GenerationScripts {
                step: Some(Script::MentionTemplate {
                    prefix: "m".to_string(),
                    start: 1,
                }),
                ..GenerationScripts::default()
            },
            ..ScriptedPolicy::default()
        };
        let backend = ScriptedBackend::new(policy);
        assert_eq!(
            backend.complete(&gen_request(Role::Step)).unwrap(),
            "Does the example mention m1? (yes/no)?"
        );
        assert_eq!(
            backend.complete(&gen_request(Role::Step)).unwrap(),
            "Does the example mention m2? (yes/no)?"
        );
    }

    #[test]
    fn missing_generation_script_is_an_error() {
        let backend = ScriptedBackend::new(ScriptedPolicy::default());
        let err = backend.complete(&gen_request(Role::Purity)).unwrap_err();
        assert!(err.to_string().contains("no script for role `purity`"), "{err}");
    }

    #[test]
    fn policy_deserialises_from_json() {
        let json = r#"{
            "model": "replay",
            "split": {
                "rules": [
                    {"prompt_contains": "alpha", "input_all_of": ["alpha"]}
                ],
                "default_response": "no"
            },
            "generation": {
                "step": {"mode": "canned", "responses": ["a", "b"]},
                "purity": {"mode": "fixed", "text": "ok"}
            }
        }"#;
        let policy: ScriptedPolicy = serde_json::from_str(json).unwrap();
        assert_eq!(policy.model.as_deref(), Some("replay"));
        assert_eq!(policy.split.rules.len(), 1);
        assert_eq!(policy.split.rules[0].then_response, "yes");
        assert!(matches!(policy.generation.step, Some(Script::Canned { .. })));
    }
}
