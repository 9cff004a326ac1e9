//! Hard constraints every candidate question must satisfy.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Suffix every question must carry so the backend knows to answer yes or
/// no. The closing question mark is optional.
pub const ANSWER_SUFFIX: &str = "(yes/no)?";

fn default_forbidden_terms() -> Vec<String> {
    vec!["could".to_string(), "might".to_string(), "possibly".to_string()]
}

/// Tunable limits applied by [`validate_constraints`].
///
/// `max_characteristics` is advisory: it is rendered into the revision
/// instructions but a question naming more characteristics is not rejected,
/// since counting characteristics in free text is not mechanically checkable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConstraints {
    pub max_logical_operators: u32,
    pub forbidden_terms: Vec<String>,
    pub max_characteristics: u32,
}

impl Default for PromptConstraints {
    fn default() -> PromptConstraints {
        PromptConstraints {
            max_logical_operators: 2,
            forbidden_terms: default_forbidden_terms(),
            max_characteristics: 2,
        }
    }
}

/// One reason a candidate question was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    MissingSuffix,
    TooManyLogicalOperators { count: u32, limit: u32 },
    ForbiddenTerm(String),
    ContainsBlank,
    ContainsPlaceholder(String),
    IdenticalToPrevious,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "question is empty"),
            Violation::MissingSuffix => {
                write!(f, "question must end with \"{ANSWER_SUFFIX}\"")
            }
            Violation::TooManyLogicalOperators { count, limit } => write!(
                f,
                "question uses {count} logical operators (and/or), limit is {limit}"
            ),
            Violation::ForbiddenTerm(term) => {
                write!(f, "question uses the vague word \"{term}\"")
            }
            Violation::ContainsBlank => write!(f, "question contains a fill-in blank"),
            Violation::ContainsPlaceholder(tag) => {
                write!(f, "question contains the placeholder tag \"{tag}\"")
            }
            Violation::IdenticalToPrevious => {
                write!(f, "question is identical to the previous question")
            }
        }
    }
}

static LOGICAL_OPERATOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:and|or)\b").expect("static regex"));
static BLANK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"_{2,}").expect("static regex"));
static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<[^<>]*>").expect("static regex"));

fn has_answer_suffix(prompt: &str) -> bool {
    let lower = prompt.trim_end().to_lowercase();
    lower.ends_with("(yes/no)?") || lower.ends_with("(yes/no)")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Case-insensitive whole-word containment, without building a regex per
/// term (the term list is caller data).
fn contains_word(text: &str, term: &str) -> bool {
    let haystack = text.to_lowercase();
    let needle = term.to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(&needle) {
        let begin = from + pos;
        let end = begin + needle.len();
        let free_before = !haystack[..begin].chars().next_back().is_some_and(is_word_char);
        let free_after = !haystack[end..].chars().next().is_some_and(is_word_char);
        if free_before && free_after {
            return true;
        }
        from = begin + needle.len();
    }
    false
}

fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Checks a candidate question against the hard constraints. The returned
/// list is empty when the question is acceptable.
///
/// Checked: non-emptiness, the terminal yes/no suffix (with or without the
/// closing "?"), the logical-operator budget (whole-word "and"/"or", case
/// insensitive), forbidden vague words, fill-in blanks ("___"), placeholder
/// tags ("<...>") and, when `previous` is given, non-identity with the
/// previous question after whitespace normalisation.
pub fn validate_constraints(
    prompt: &str,
    constraints: &PromptConstraints,
    previous: Option<&str>,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    if prompt.trim().is_empty() {
        return vec![Violation::Empty];
    }
    if !has_answer_suffix(prompt) {
        violations.push(Violation::MissingSuffix);
    }

    // The terminal suffix itself contains "no", but the operator and term
    // scans only look at whole words "and"/"or" and the forbidden list, so
    // no masking is needed for it.
    let count = LOGICAL_OPERATOR.find_iter(prompt).count() as u32;
    if count > constraints.max_logical_operators {
        violations.push(Violation::TooManyLogicalOperators {
            count,
            limit: constraints.max_logical_operators,
        });
    }

    for term in &constraints.forbidden_terms {
        if contains_word(prompt, term) {
            violations.push(Violation::ForbiddenTerm(term.clone()));
        }
    }

    if BLANK.is_match(prompt) {
        violations.push(Violation::ContainsBlank);
    }
    if let Some(m) = PLACEHOLDER.find(prompt) {
        violations.push(Violation::ContainsPlaceholder(m.as_str().to_string()));
    }

    if let Some(previous) = previous {
        if normalize_whitespace(prompt) == normalize_whitespace(previous) {
            violations.push(Violation::IdenticalToPrevious);
        }
    }

    violations
}
