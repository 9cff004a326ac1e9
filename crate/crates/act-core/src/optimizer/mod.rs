//! Impurity-guided refinement of a node's split question.
//!
//! Starting from a neutral initial question, each step asks the backend to
//! diagnose the current split (loss), turn the diagnosis into an editing
//! instruction (feedback) and apply the instruction under hard constraints
//! (step). Every candidate is scored by the weighted impurity of the
//! partition it induces and the best-scoring valid candidate wins, earliest
//! first on ties.

pub mod constraints;
pub mod templates;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::gateway::{Gateway, Role};
use crate::impurity::{gini_value, SplitCriterion};
use crate::seeding;
use crate::splitter::{self, GroupSide, PurityFeedback, SplitOutcome};

pub use constraints::{validate_constraints, PromptConstraints, Violation, ANSWER_SUFFIX};
pub use templates::{render_constraint_list, Templates};

/// Class-agnostic question every node starts from.
pub const INITIAL_PROMPT: &str =
    "Based on the provided example, does it belong to the positive class? (yes/no)";

/// The neutral question used as candidate 0 at every node.
pub fn initial_prompt() -> &'static str {
    INITIAL_PROMPT
}

/// One candidate question examined during refinement, with everything that
/// was derived from it. The feedback, loss and gradient fields describe the
/// work that produced the next candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub iteration: usize,
    pub prompt: String,
    pub valid: bool,
    pub violations: Vec<String>,
    /// False when the candidate was skipped (invalid prompts are not
    /// evaluated unless configured otherwise); `delta` then holds the
    /// parent-impurity sentinel.
    pub evaluated: bool,
    pub delta: f64,
    pub outcome: Option<SplitOutcome>,
    pub feedback_left: Option<PurityFeedback>,
    pub feedback_right: Option<PurityFeedback>,
    pub loss: Option<String>,
    pub gradient: Option<String>,
    /// Step attempts that were needed to produce this candidate.
    pub step_attempts: Option<u32>,
}

/// Full record of one node's refinement loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub candidates: Vec<Candidate>,
    pub best_index: usize,
}

impl OptimizationTrace {
    pub fn best(&self) -> &Candidate {
        &self.candidates[self.best_index]
    }
}

/// Refinement failure carrying the candidates completed before the failure,
/// so callers can persist a partial trace.
#[derive(Debug)]
pub struct OptimizeError {
    pub partial: Vec<Candidate>,
    pub source: Error,
}

impl From<OptimizeError> for Error {
    fn from(e: OptimizeError) -> Error {
        e.source
    }
}

/// Settings for [`optimize_node`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Refinement steps per node; the loop examines `steps + 1` candidates.
    pub steps: usize,
    /// Most correct and most error examples quoted per group in feedback
    /// requests.
    pub sample_cap: usize,
    /// Longest example text quoted in a feedback request, in characters.
    pub example_char_cap: usize,
    pub constraints: PromptConstraints,
    pub criterion: SplitCriterion,
    /// Retries allowed within one step when the revision violates the
    /// constraints.
    pub step_max_attempts: u32,
    /// Also evaluate invalid candidates (they still cannot be selected).
    pub evaluate_invalid: bool,
    /// Replaces the built-in initial question.
    pub initial_prompt: Option<String>,
    pub templates: Templates,
}

impl Default for OptimizerConfig {
    fn default() -> OptimizerConfig {
        OptimizerConfig {
            steps: 5,
            sample_cap: 50,
            example_char_cap: 1500,
            constraints: PromptConstraints::default(),
            criterion: SplitCriterion::Gini,
            step_max_attempts: 3,
            evaluate_invalid: false,
            initial_prompt: None,
            templates: Templates::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_cap == 0 {
            return Err(Error::Config("sample_cap must be positive".to_string()));
        }
        if self.example_char_cap == 0 {
            return Err(Error::Config("example_char_cap must be positive".to_string()));
        }
        if self.step_max_attempts == 0 {
            return Err(Error::Config("step_max_attempts must be positive".to_string()));
        }
        self.templates.validate()
    }

    /// Compact summary stored in trained tree documents.
    pub fn snapshot(&self) -> OptimizerSnapshot {
        OptimizerSnapshot {
            steps: self.steps,
            sample_cap: self.sample_cap,
            max_logical_operators: self.constraints.max_logical_operators,
            criterion: self.criterion,
            initial_prompt: self.initial_prompt.clone(),
        }
    }
}

/// The optimizer settings that shaped a trained tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSnapshot {
    pub steps: usize,
    pub sample_cap: usize,
    pub max_logical_operators: u32,
    pub criterion: SplitCriterion,
    pub initial_prompt: Option<String>,
}

/// Asks the backend to diagnose why the current question leaves the split
/// impure. `delta` is rendered with three decimal places.
pub fn semantic_loss(
    question: &str,
    delta: f64,
    feedback_left: &str,
    feedback_right: &str,
    gateway: &Gateway,
    templates: &Templates,
) -> Result<String> {
    let prompt = templates.render_loss(question, delta, feedback_left, feedback_right);
    let (text, _) = gateway.generate_text(Role::Loss, &prompt)?;
    Ok(text)
}

/// Turns a loss diagnosis into one editing instruction.
pub fn gradient_feedback(
    question: &str,
    loss: &str,
    gateway: &Gateway,
    templates: &Templates,
) -> Result<String> {
    let prompt = templates.render_feedback(question, loss);
    let (text, _) = gateway.generate_text(Role::Feedback, &prompt)?;
    Ok(text)
}

/// Result of one revision step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub prompt: String,
    /// Violations of the final attempt; empty when it is valid.
    pub violations: Vec<Violation>,
    pub attempts: u32,
}

fn clean_step_reply(raw: &str) -> String {
    let trimmed = raw.trim();
    let stripped = trimmed
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(trimmed);
    stripped.trim().to_string()
}

/// Applies an editing instruction to the current question. When the revised
/// question violates the constraints the request is retried, with the
/// violation list appended, up to `max_attempts` times; the final attempt is
/// returned even if still invalid so the caller can record it.
pub fn apply_step(
    question: &str,
    gradient: &str,
    constraints: &PromptConstraints,
    gateway: &Gateway,
    templates: &Templates,
    max_attempts: u32,
) -> Result<StepOutcome> {
    let constraint_text = render_constraint_list(constraints);
    let base_prompt = templates.render_step(question, gradient, &constraint_text);
    let mut request = base_prompt.clone();
    let mut last: Option<StepOutcome> = None;
    for attempt in 1..=max_attempts.max(1) {
        let (raw, _) = gateway.generate_text(Role::Step, &request)?;
        let prompt = clean_step_reply(&raw);
        let violations = validate_constraints(&prompt, constraints, Some(question));
        let outcome = StepOutcome {
            prompt,
            violations,
            attempts: attempt,
        };
        if outcome.violations.is_empty() {
            return Ok(outcome);
        }
        let listed = outcome
            .violations
            .iter()
            .map(|v| format!("- {v}"))
            .collect::<Vec<_>>()
            .join("\n");
        request = format!(
            "{base_prompt}\n\nAttempt {next}: the previous revision was rejected for these \
             reasons:\n{listed}\nApply the editing instruction again and return a corrected \
             question.",
            next = attempt + 1,
        );
        last = Some(outcome);
    }
    Ok(last.expect("at least one attempt"))
}

fn feedback_for_loss(feedback: &PurityFeedback) -> &str {
    if feedback.skipped {
        "(the group is empty; no feedback)"
    } else {
        &feedback.text
    }
}

struct Refinement {
    feedback_left: PurityFeedback,
    feedback_right: PurityFeedback,
    loss: String,
    gradient: String,
    next_prompt: String,
    attempts: u32,
}

fn refine(
    prompt: &str,
    outcome: Option<&SplitOutcome>,
    delta: f64,
    data: &Dataset,
    config: &OptimizerConfig,
    gateway: &Gateway,
    seed: u64,
    iteration: usize,
) -> Result<Refinement> {
    let (feedback_left, feedback_right) = match outcome {
        Some(outcome) => {
            let (yes, no) = splitter::partition_correctness(outcome, data)?;
            let left_seed = seeding::derive(seed, &format!("purity:{iteration}:yes"));
            let right_seed = seeding::derive(seed, &format!("purity:{iteration}:no"));
            let left = splitter::purity_feedback(
                prompt,
                &yes,
                data,
                gateway,
                config.sample_cap,
                left_seed,
                config.example_char_cap,
            )?;
            let right = splitter::purity_feedback(
                prompt,
                &no,
                data,
                gateway,
                config.sample_cap,
                right_seed,
                config.example_char_cap,
            )?;
            (left, right)
        }
        None => (
            PurityFeedback::skipped(GroupSide::Yes),
            PurityFeedback::skipped(GroupSide::No),
        ),
    };

    let loss = semantic_loss(
        prompt,
        delta,
        feedback_for_loss(&feedback_left),
        feedback_for_loss(&feedback_right),
        gateway,
        &config.templates,
    )?;
    let gradient = gradient_feedback(prompt, &loss, gateway, &config.templates)?;
    let step = apply_step(
        prompt,
        &gradient,
        &config.constraints,
        gateway,
        &config.templates,
        config.step_max_attempts,
    )?;
    Ok(Refinement {
        feedback_left,
        feedback_right,
        loss,
        gradient,
        next_prompt: step.prompt,
        attempts: step.attempts,
    })
}

fn select_best(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, candidate) in candidates.iter().enumerate() {
        if !(candidate.valid && candidate.evaluated) {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, delta)) => candidate.delta < delta,
        };
        if better {
            best = Some((i, candidate.delta));
        }
    }
    best.map(|(i, _)| i)
}

/// Runs the full refinement loop for one node and picks the winning
/// question.
///
/// The trace contains `steps + 1` candidates unless a valid candidate
/// reaches an impurity of exactly 0, which stops refinement early. Invalid
/// candidates are recorded with the parent-impurity sentinel and never
/// selected. On backend failure the candidates completed so far ride along
/// in the error.
pub fn optimize_node(
    data: &Dataset,
    config: &OptimizerConfig,
    gateway: &Gateway,
    seed: u64,
) -> std::result::Result<OptimizationTrace, OptimizeError> {
    let fail = |partial: Vec<Candidate>, source: Error| OptimizeError { partial, source };

    if let Err(e) = config.validate() {
        return Err(fail(Vec::new(), e));
    }
    if data.is_empty() {
        return Err(fail(Vec::new(), Error::EmptyDataset(data.name().to_string())));
    }

    let parent_counts = data.label_counts();
    let sentinel = match config.criterion {
        SplitCriterion::Gini => gini_value(&parent_counts),
        SplitCriterion::InfoGainRatio => 1.0,
    };

    let mut candidates: Vec<Candidate> = Vec::with_capacity(config.steps + 1);
    let mut prompt = config
        .initial_prompt
        .clone()
        .unwrap_or_else(|| INITIAL_PROMPT.to_string());
    let mut step_attempts: Option<u32> = None;

    for iteration in 0..=config.steps {
        let previous = candidates.last().map(|c| c.prompt.clone());
        let violations = validate_constraints(&prompt, &config.constraints, previous.as_deref());
        let valid = violations.is_empty();
        let evaluate = valid || config.evaluate_invalid;
        let (outcome, delta) = if evaluate {
            match splitter::evaluate_split(&prompt, data, gateway, config.criterion) {
                Ok(outcome) => {
                    let delta = outcome.delta;
                    (Some(outcome), delta)
                }
                Err(e) => return Err(fail(candidates, e)),
            }
        } else {
            (None, sentinel)
        };

        let mut candidate = Candidate {
            iteration,
            prompt: prompt.clone(),
            valid,
            violations: violations.iter().map(|v| v.to_string()).collect(),
            evaluated: outcome.is_some(),
            delta,
            outcome,
            feedback_left: None,
            feedback_right: None,
            loss: None,
            gradient: None,
            step_attempts,
        };

        let early_stop = candidate.valid && candidate.evaluated && candidate.delta == 0.0;
        if iteration == config.steps || early_stop {
            candidates.push(candidate);
            break;
        }

        match refine(
            &prompt,
            candidate.outcome.as_ref(),
            candidate.delta,
            data,
            config,
            gateway,
            seed,
            iteration,
        ) {
            Ok(refinement) => {
                candidate.feedback_left = Some(refinement.feedback_left);
                candidate.feedback_right = Some(refinement.feedback_right);
                candidate.loss = Some(refinement.loss);
                candidate.gradient = Some(refinement.gradient);
                candidates.push(candidate);
                prompt = refinement.next_prompt;
                step_attempts = Some(refinement.attempts);
            }
            Err(e) => {
                candidates.push(candidate);
                return Err(fail(candidates, e));
            }
        }
    }

    match select_best(&candidates) {
        Some(best_index) => Ok(OptimizationTrace {
            candidates,
            best_index,
        }),
        None => Err(fail(candidates, Error::NoValidCandidate)),
    }
}
