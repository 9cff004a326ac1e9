//! Applying one candidate question to a node's examples and deriving the
//! feedback inputs for prompt refinement.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelCounts};
use crate::error::{Error, Result};
use crate::gateway::{BinaryAnswer, Gateway};
use crate::impurity::{weighted_split_score, SplitCriterion};

/// One example's answer to a split question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub example_id: String,
    pub answer: BinaryAnswer,
    pub raw_response: String,
    /// The response could not be parsed and defaulted to "no".
    pub unparseable: bool,
}

/// Result of asking one question of every example at a node. Examples
/// answered "yes" go left, everything else goes right.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub question: String,
    pub left_ids: Vec<String>,
    pub right_ids: Vec<String>,
    pub left_counts: LabelCounts,
    pub right_counts: LabelCounts,
    /// Size-weighted impurity of the partition under the chosen criterion.
    pub delta: f64,
    pub answers: Vec<AnswerRecord>,
}

/// Which answer group a partition or feedback refers to: the examples that
/// answered "yes" or those that answered "no".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSide {
    Yes,
    No,
}

impl GroupSide {
    /// The label the group's answer asserts: "yes" claims class 1.
    pub fn asserted_label_word(self) -> &'static str {
        match self {
            GroupSide::Yes => "yes",
            GroupSide::No => "no",
        }
    }

    fn other_label_word(self) -> &'static str {
        match self {
            GroupSide::Yes => "no",
            GroupSide::No => "yes",
        }
    }
}

/// One answer group divided by whether the asserted label matches the true
/// label. Ids keep the order they had in the split outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupPartition {
    pub group: GroupSide,
    pub correct_ids: Vec<String>,
    pub error_ids: Vec<String>,
}

impl GroupPartition {
    pub fn is_empty(&self) -> bool {
        self.correct_ids.is_empty() && self.error_ids.is_empty()
    }
}

/// Natural-language feedback about one answer group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurityFeedback {
    pub group: GroupSide,
    pub text: String,
    pub correct_sample_ids: Vec<String>,
    pub error_sample_ids: Vec<String>,
    /// True when the group was empty and no query was made.
    pub skipped: bool,
}

impl PurityFeedback {
    pub fn skipped(group: GroupSide) -> PurityFeedback {
        PurityFeedback {
            group,
            text: String::new(),
            correct_sample_ids: Vec::new(),
            error_sample_ids: Vec::new(),
            skipped: true,
        }
    }
}

/// Asks `question` of every example in `data` and scores the induced
/// partition. Unparseable answers route right (the "no" side) unless the
/// gateway is in strict mode.
pub fn evaluate_split(
    question: &str,
    data: &Dataset,
    gateway: &Gateway,
    criterion: SplitCriterion,
) -> Result<SplitOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyDataset(data.name().to_string()));
    }
    let inputs: Vec<String> = data.iter().map(|ex| ex.text.clone()).collect();
    let results = gateway.batch_answer(question, &inputs)?;

    let mut left_ids = Vec::new();
    let mut right_ids = Vec::new();
    let mut left_counts = LabelCounts::default();
    let mut right_counts = LabelCounts::default();
    let mut answers = Vec::with_capacity(results.len());
    for (ex, (answer, record)) in data.iter().zip(results) {
        if answer.is_yes() {
            left_ids.push(ex.id.clone());
            left_counts.add(ex.label);
        } else {
            right_ids.push(ex.id.clone());
            right_counts.add(ex.label);
        }
        answers.push(AnswerRecord {
            example_id: ex.id.clone(),
            answer,
            raw_response: record.response_text,
            unparseable: record.unparseable,
        });
    }

    let delta = weighted_split_score(&left_counts, &right_counts, criterion)?;
    Ok(SplitOutcome {
        question: question.to_string(),
        left_ids,
        right_ids,
        left_counts,
        right_counts,
        delta,
        answers,
    })
}

/// Divides both answer groups by correctness. The yes-group asserts label 1,
/// so its members are correct when their true label is 1; the no-group
/// asserts label 0.
pub fn partition_correctness(
    outcome: &SplitOutcome,
    data: &Dataset,
) -> Result<(GroupPartition, GroupPartition)> {
    let by_id: std::collections::HashMap<&str, crate::corpus::Label> = data
        .iter()
        .map(|ex| (ex.id.as_str(), ex.label))
        .collect();
    let lookup = |id: &String| {
        by_id.get(id.as_str()).copied().ok_or_else(|| {
            Error::Data(format!("id `{id}` from split outcome not found in dataset"))
        })
    };

    let mut yes = GroupPartition {
        group: GroupSide::Yes,
        correct_ids: Vec::new(),
        error_ids: Vec::new(),
    };
    for id in &outcome.left_ids {
        if lookup(id)?.is_positive() {
            yes.correct_ids.push(id.clone());
        } else {
            yes.error_ids.push(id.clone());
        }
    }

    let mut no = GroupPartition {
        group: GroupSide::No,
        correct_ids: Vec::new(),
        error_ids: Vec::new(),
    };
    for id in &outcome.right_ids {
        if lookup(id)?.is_positive() {
            no.error_ids.push(id.clone());
        } else {
            no.correct_ids.push(id.clone());
        }
    }

    Ok((yes, no))
}

fn sample_ids(ids: &[String], cap: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    if ids.len() <= cap {
        return ids.to_vec();
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, ids.len(), cap).into_vec();
    picked.sort_unstable();
    picked.iter().map(|&i| ids[i].clone()).collect()
}

/// Selects at most `cap` correct and `cap` error ids from one group,
/// deterministically in `seed`. Groups at or under the cap are taken whole,
/// in order.
pub fn sample_for_feedback(
    partition: &GroupPartition,
    cap: usize,
    seed: u64,
) -> (Vec<String>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let correct = sample_ids(&partition.correct_ids, cap, &mut rng);
    let error = sample_ids(&partition.error_ids, cap, &mut rng);
    (correct, error)
}

fn bullet_list(texts: &[String]) -> String {
    if texts.is_empty() {
        return "- (none)".to_string();
    }
    texts
        .iter()
        .map(|t| format!("- {}", t.split_whitespace().collect::<Vec<_>>().join(" ")))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders the feedback request for one answer group: the question, the
/// group's answer, its well-classified and misclassified members, and the
/// summarisation instruction.
pub fn build_purity_prompt(
    question: &str,
    group: GroupSide,
    correct_texts: &[String],
    error_texts: &[String],
) -> Result<String> {
    if correct_texts.is_empty() && error_texts.is_empty() {
        return Err(Error::Data(
            "purity feedback requires at least one example".to_string(),
        ));
    }
    let answer = group.asserted_label_word();
    let other = group.other_label_word();
    Ok(format!(
        "Below are samples for which a model answered \"{answer}\" to the question \"{question}\", \
         grouped by whether that answer matches their true class.\n\
         \n\
         Well-classified examples (true label = \"{answer}\"):\n\
         {correct}\n\
         \n\
         Misclassified examples (true label = \"{other}\"):\n\
         {error}\n\
         \n\
         Summarize what distinguishes the well-classified examples from the misclassified ones. \
         The feedback you provide must be clear and concise. \
         Focus on the one or two most important characteristics.",
        correct = bullet_list(correct_texts),
        error = bullet_list(error_texts),
    ))
}

fn truncate_chars(text: &str, cap: usize) -> String {
    if text.chars().count() <= cap {
        text.to_string()
    } else {
        text.chars().take(cap).collect()
    }
}

/// Samples one group, builds its feedback request and queries the backend.
/// Empty groups are skipped without a query.
pub fn purity_feedback(
    question: &str,
    partition: &GroupPartition,
    data: &Dataset,
    gateway: &Gateway,
    cap: usize,
    seed: u64,
    example_char_cap: usize,
) -> Result<PurityFeedback> {
    if partition.is_empty() {
        return Ok(PurityFeedback::skipped(partition.group));
    }
    let (correct_sample_ids, error_sample_ids) = sample_for_feedback(partition, cap, seed);
    let texts_for = |ids: &[String]| -> Result<Vec<String>> {
        if ids.is_empty() {
            return Ok(Vec::new());
        }
        let subset = data.subset(ids)?;
        Ok(subset
            .iter()
            .map(|ex| truncate_chars(&ex.text, example_char_cap))
            .collect())
    };
    let correct_texts = texts_for(&correct_sample_ids)?;
    let error_texts = texts_for(&error_sample_ids)?;
    let prompt = build_purity_prompt(question, partition.group, &correct_texts, &error_texts)?;
    let (text, _) = gateway.generate_text(crate::gateway::Role::Purity, &prompt)?;
    Ok(PurityFeedback {
        group: partition.group,
        text,
        correct_sample_ids,
        error_sample_ids,
        skipped: false,
    })
}
