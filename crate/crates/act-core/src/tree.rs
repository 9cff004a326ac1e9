//! Growing, running and serialising whole classification trees.

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Label, LabelCounts};
use crate::error::{Error, Result};
use crate::exec;
use crate::gateway::{BackendIdentity, BinaryAnswer, Gateway};
use crate::impurity::gini_value;
use crate::optimizer::{self, Candidate, OptimizerConfig, OptimizerSnapshot};
use crate::seeding;

/// Version written into every tree document.
pub const FORMAT_VERSION: u32 = 1;

/// Limits that turn a node into a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingCriteria {
    /// Most question layers on any path; a node at this depth is a leaf.
    pub max_depth: usize,
    /// Nodes with fewer examples are leaves.
    pub min_node_size: usize,
    /// Nodes whose Gini impurity is at or below this are leaves.
    pub gini_threshold: f64,
}

impl Default for StoppingCriteria {
    fn default() -> StoppingCriteria {
        StoppingCriteria {
            max_depth: 3,
            min_node_size: 5,
            gini_threshold: 0.01,
        }
    }
}

impl StoppingCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".to_string()));
        }
        if self.min_node_size == 0 {
            return Err(Error::Config("min_node_size must be at least 1".to_string()));
        }
        if !(0.0..=0.5).contains(&self.gini_threshold) {
            return Err(Error::Config(
                "gini_threshold must lie in [0, 0.5]".to_string(),
            ));
        }
        Ok(())
    }

    fn is_leaf(&self, depth: usize, counts: &LabelCounts) -> bool {
        depth >= self.max_depth
            || counts.total() < self.min_node_size as u64
            || counts.is_pure()
            || gini_value(counts) <= self.gini_threshold
    }
}

/// One tree node. Internal nodes ask a question; examples answering "yes"
/// descend into `yes_child`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TreeNode {
    Internal {
        question: String,
        /// Node id under which the refinement trace was recorded.
        trace_ref: String,
        train_counts: LabelCounts,
        yes_child: Box<TreeNode>,
        no_child: Box<TreeNode>,
    },
    Leaf {
        label: Label,
        train_counts: LabelCounts,
    },
}

impl TreeNode {
    /// Longest path length below this node, in question layers.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal {
                yes_child, no_child, ..
            } => 1 + yes_child.depth().max(no_child.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal {
                yes_child, no_child, ..
            } => 1 + yes_child.node_count() + no_child.node_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal {
                yes_child, no_child, ..
            } => yes_child.leaf_count() + no_child.leaf_count(),
        }
    }
}

/// Everything needed to rerun a trained tree with an equivalent backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub stopping: StoppingCriteria,
    pub optimizer: OptimizerSnapshot,
    pub backend: BackendIdentity,
    pub seed: u64,
}

/// A trained tree plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tree {
    pub format_version: u32,
    pub config: TreeConfig,
    pub root: TreeNode,
}

impl Tree {
    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}

/// Receives each node's refinement trace as it completes, in growth order.
/// `best_index` is `None` when the node's refinement failed partway.
pub trait TraceSink {
    fn record(
        &mut self,
        node_id: &str,
        candidates: &[Candidate],
        best_index: Option<usize>,
    ) -> Result<()>;
}

/// Discards traces.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: &str, _: &[Candidate], _: Option<usize>) -> Result<()> {
        Ok(())
    }
}

/// Collects traces in memory, keyed by node id.
#[derive(Default)]
pub struct MemorySink {
    pub traces: Vec<(String, Vec<Candidate>, Option<usize>)>,
}

impl TraceSink for MemorySink {
    fn record(
        &mut self,
        node_id: &str,
        candidates: &[Candidate],
        best_index: Option<usize>,
    ) -> Result<()> {
        self.traces
            .push((node_id.to_string(), candidates.to_vec(), best_index));
        Ok(())
    }
}

fn leaf_from(counts: &LabelCounts) -> TreeNode {
    TreeNode::Leaf {
        label: counts.majority().expect("leaf nodes hold examples"),
        train_counts: *counts,
    }
}

#[allow(clippy::too_many_arguments)]
fn grow_node(
    data: &Dataset,
    depth: usize,
    node_id: String,
    stopping: &StoppingCriteria,
    optimizer_config: &OptimizerConfig,
    gateway: &Gateway,
    seed: u64,
    sink: &mut dyn TraceSink,
) -> Result<TreeNode> {
    let counts = data.label_counts();
    if stopping.is_leaf(depth, &counts) {
        return Ok(leaf_from(&counts));
    }

    let node_seed = seeding::derive(seed, &node_id);
    let trace = match optimizer::optimize_node(data, optimizer_config, gateway, node_seed) {
        Ok(trace) => trace,
        Err(e) => {
            sink.record(&node_id, &e.partial, None)?;
            return Err(e.source);
        }
    };
    sink.record(&node_id, &trace.candidates, Some(trace.best_index))?;

    let best = trace.best();
    let outcome = best
        .outcome
        .as_ref()
        .expect("selected candidates are always evaluated");
    // A winner that routes everything one way cannot split the node.
    if outcome.left_ids.is_empty() || outcome.right_ids.is_empty() {
        return Ok(leaf_from(&counts));
    }

    let left_data = data.subset(&outcome.left_ids)?;
    let right_data = data.subset(&outcome.right_ids)?;
    let yes_child = grow_node(
        &left_data,
        depth + 1,
        format!("{node_id}.yes"),
        stopping,
        optimizer_config,
        gateway,
        seed,
        sink,
    )?;
    let no_child = grow_node(
        &right_data,
        depth + 1,
        format!("{node_id}.no"),
        stopping,
        optimizer_config,
        gateway,
        seed,
        sink,
    )?;
    Ok(TreeNode::Internal {
        question: best.prompt.clone(),
        trace_ref: node_id,
        train_counts: counts,
        yes_child: Box::new(yes_child),
        no_child: Box::new(no_child),
    })
}

/// Grows a tree on `data`. Node seeds derive from `seed` and the node's
/// path id ("root", "root.yes", ...), so runs are reproducible with a
/// deterministic backend.
pub fn grow(
    data: &Dataset,
    stopping: &StoppingCriteria,
    optimizer_config: &OptimizerConfig,
    gateway: &Gateway,
    seed: u64,
    sink: &mut dyn TraceSink,
) -> Result<Tree> {
    stopping.validate()?;
    optimizer_config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset(data.name().to_string()));
    }
    let root = grow_node(
        data,
        0,
        "root".to_string(),
        stopping,
        optimizer_config,
        gateway,
        seed,
        sink,
    )?;
    Ok(Tree {
        format_version: FORMAT_VERSION,
        config: TreeConfig {
            stopping: stopping.clone(),
            optimizer: optimizer_config.snapshot(),
            backend: gateway.identity().clone(),
            seed,
        },
        root,
    })
}

/// One question asked while routing an example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathStep {
    pub question: String,
    pub answer: BinaryAnswer,
    pub raw_response: String,
    /// True when the answer fell back to "no" because the response was
    /// unparseable.
    pub fallback: bool,
}

/// Route taken by one example from root to leaf.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionPath {
    pub steps: Vec<PathStep>,
    pub label: Label,
}

/// Routes one input text through the tree.
pub fn predict(tree: &Tree, text: &str, gateway: &Gateway) -> Result<DecisionPath> {
    let mut node = &tree.root;
    let mut steps = Vec::new();
    loop {
        match node {
            TreeNode::Leaf { label, .. } => {
                return Ok(DecisionPath {
                    steps,
                    label: *label,
                })
            }
            TreeNode::Internal {
                question,
                yes_child,
                no_child,
                ..
            } => {
                let (answer, record) = gateway.answer_binary(question, text)?;
                steps.push(PathStep {
                    question: question.clone(),
                    answer,
                    raw_response: record.response_text,
                    fallback: record.unparseable,
                });
                node = if answer.is_yes() { yes_child } else { no_child };
            }
        }
    }
}

/// Prediction counts broken down by true label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: u64,
    pub true_negative: u64,
    pub false_positive: u64,
    pub false_negative: u64,
}

impl Confusion {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth.is_positive(), predicted.is_positive()) {
            (true, true) => self.true_positive += 1,
            (false, false) => self.true_negative += 1,
            (false, true) => self.false_positive += 1,
            (true, false) => self.false_negative += 1,
        }
    }
}

/// One example's evaluation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleOutcome {
    pub id: String,
    pub true_label: Label,
    pub predicted: Label,
    pub steps: Vec<PathStep>,
}

/// Accuracy and per-example routing over a labelled dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub outcomes: Vec<ExampleOutcome>,
}

/// Evaluates the tree on every example, in parallel when the gateway's
/// execution mode allows. Output order follows dataset order regardless of
/// the mode.
pub fn evaluate(tree: &Tree, data: &Dataset, gateway: &Gateway) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset(data.name().to_string()));
    }
    let paths = exec::map(gateway.exec_mode(), data.examples(), |ex| {
        predict(tree, &ex.text, gateway)
    });
    let mut report = EvalReport {
        total: data.len() as u64,
        correct: 0,
        accuracy: 0.0,
        confusion: Confusion::default(),
        outcomes: Vec::with_capacity(data.len()),
    };
    for (ex, path) in data.iter().zip(paths) {
        let path = path?;
        if path.label == ex.label {
            report.correct += 1;
        }
        report.confusion.record(ex.label, path.label);
        report.outcomes.push(ExampleOutcome {
            id: ex.id.clone(),
            true_label: ex.label,
            predicted: path.label,
            steps: path.steps,
        });
    }
    report.accuracy = report.correct as f64 / report.total as f64;
    Ok(report)
}

/// Serialises a tree as pretty-printed JSON with a trailing newline.
pub fn to_json(tree: &Tree) -> Result<String> {
    let mut out = serde_json::to_string_pretty(tree)?;
    out.push('\n');
    Ok(out)
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

/// Parses a tree document, rejecting unknown format versions before the
/// full schema check.
pub fn from_json(raw: &str) -> Result<Tree> {
    let probe: VersionProbe =
        serde_json::from_str(raw).map_err(|e| Error::Schema(e.to_string()))?;
    match probe.format_version {
        Some(FORMAT_VERSION) => {}
        Some(other) => return Err(Error::UnsupportedVersion(other)),
        None => {
            return Err(Error::Schema(
                "missing field `format_version`".to_string(),
            ))
        }
    }
    let tree: Tree = serde_json::from_str(raw).map_err(|e| Error::Schema(e.to_string()))?;
    Ok(tree)
}

fn dot_escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

/// Renders the tree in Graphviz DOT form: internal nodes show their
/// question, leaves show their class and training counts, and edges are
/// labelled yes/no.
pub fn render_dot(tree: &Tree) -> String {
    fn walk(node: &TreeNode, next_id: &mut usize, lines: &mut Vec<String>) -> usize {
        let id = *next_id;
        *next_id += 1;
        match node {
            TreeNode::Leaf {
                label,
                train_counts,
            } => {
                lines.push(format!(
                    "  n{id} [shape=ellipse, label=\"class {label}\\nn0={}, n1={}\"];",
                    train_counts.n0, train_counts.n1
                ));
            }
            TreeNode::Internal {
                question,
                train_counts,
                yes_child,
                no_child,
                ..
            } => {
                lines.push(format!(
                    "  n{id} [shape=box, label=\"{}\\nn0={}, n1={}\"];",
                    dot_escape(question),
                    train_counts.n0,
                    train_counts.n1
                ));
                let yes_id = walk(yes_child, next_id, lines);
                lines.push(format!("  n{id} -> n{yes_id} [label=\"yes\"];"));
                let no_id = walk(no_child, next_id, lines);
                lines.push(format!("  n{id} -> n{no_id} [label=\"no\"];"));
            }
        }
        id
    }

    let mut lines = vec![
        "digraph act_tree {".to_string(),
        "  node [fontname=\"Helvetica\"];".to_string(),
    ];
    let mut next_id = 0;
    walk(&tree.root, &mut next_id, &mut lines);
    lines.push("}".to_string());
    let mut out = lines.join("\n");
    out.push('\n');
    out
}
