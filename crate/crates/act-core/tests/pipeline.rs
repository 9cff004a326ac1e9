//! End-to-end library flows on scripted backends: growth, evaluation,
//! tracing, serialization and cache reuse.

use std::sync::Arc;

use act_core::corpus::{Dataset, Example, Label};
use act_core::exec::ExecMode;
use act_core::gateway::{
    Gateway, GenerationScripts, KeywordRule, QueryCache, Script, ScriptedBackend, ScriptedPolicy,
    SplitScript,
};
use act_core::optimizer::OptimizerConfig;
use act_core::tree::{self, MemorySink, NullSink, StoppingCriteria, TreeNode};

fn example(id: &str, text: &str, label: u8) -> Example {
    Example {
        id: id.to_string(),
        text: text.to_string(),
        label: Label::new(label).unwrap(),
    }
}

/// Twelve examples built for a depth-2 tree: token m0 marks all positives
/// plus one negative, token m1 marks positives only. Growth finds m0 at the
/// root and m1 below its yes branch; the no branch is pure.
fn layered_data() -> Dataset {
    let mut examples = Vec::new();
    for i in 0..6 {
        examples.push(example(&format!("p{i}"), "pos m0 m1 case", 1));
    }
    examples.push(example("n0", "neg m0 case", 0));
    for i in 1..6 {
        examples.push(example(&format!("n{i}"), "neg case", 0));
    }
    Dataset::new("layered", examples).unwrap()
}

fn fixed_feedback_scripts() -> GenerationScripts {
    GenerationScripts {
        purity: Some(Script::Fixed { text: "group summary".to_string() }),
        loss: Some(Script::Fixed { text: "diagnosis".to_string() }),
        feedback: Some(Script::Fixed { text: "edit instruction".to_string() }),
        ..GenerationScripts::default()
    }
}

fn mention_policy() -> ScriptedPolicy {
    ScriptedPolicy {
        split: SplitScript {
            extract_mention: true,
            ..SplitScript::default()
        },
        generation: GenerationScripts {
            step: Some(Script::MentionTemplate { prefix: "m".to_string(), start: 0 }),
            ..fixed_feedback_scripts()
        },
        ..ScriptedPolicy::default()
    }
}

/// The template backend must see every step request to advance its counter,
/// so growth tests run uncached.
fn mention_gateway(mode: ExecMode) -> Gateway {
    Gateway::new(Arc::new(ScriptedBackend::new(mention_policy())))
        .without_cache()
        .with_exec_mode(mode)
}

fn stopping() -> StoppingCriteria {
    StoppingCriteria {
        max_depth: 2,
        ..StoppingCriteria::default()
    }
}

fn optimizer() -> OptimizerConfig {
    OptimizerConfig {
        steps: 1,
        ..OptimizerConfig::default()
    }
}

#[test]
fn grows_a_layered_tree_and_scores_it_perfectly() {
    let data = layered_data();
    let gateway = mention_gateway(ExecMode::Parallel);
    let tree = tree::grow(&data, &stopping(), &optimizer(), &gateway, 7, &mut NullSink).unwrap();

    assert_eq!(tree.depth(), 2);
    assert_eq!(tree.root.node_count(), 5);
    assert_eq!(tree.root.leaf_count(), 3);
    let TreeNode::Internal { question, .. } = &tree.root else {
        panic!("root must be a split");
    };
    assert_eq!(question, "Does the example mention m0? (yes/no)?");

    let report = tree::evaluate(&tree, &data, &gateway).unwrap();
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.confusion.true_positive, 6);
    assert_eq!(report.confusion.true_negative, 6);
    assert_eq!(report.outcomes.len(), 12);
}

#[test]
fn trace_sink_sees_every_refined_node_in_growth_order() {
    let data = layered_data();
    let gateway = mention_gateway(ExecMode::Parallel);
    let mut sink = MemorySink::default();
    tree::grow(&data, &stopping(), &optimizer(), &gateway, 7, &mut sink).unwrap();

    // The pure no branch never reaches the optimizer.
    let ids: Vec<&str> = sink.traces.iter().map(|(id, _, _)| id.as_str()).collect();
    assert_eq!(ids, ["root", "root.yes"]);
    for (id, candidates, best) in &sink.traces {
        assert_eq!(candidates.len(), 2, "node {id}");
        assert_eq!(*best, Some(1), "node {id}");
        assert!(candidates[0].delta > candidates[1].delta, "node {id}");
    }
}

#[test]
fn serialized_tree_round_trips_and_keeps_predictions() {
    let data = layered_data();
    let gateway = mention_gateway(ExecMode::Parallel);
    let tree = tree::grow(&data, &stopping(), &optimizer(), &gateway, 7, &mut NullSink).unwrap();

    let json = tree::to_json(&tree).unwrap();
    assert!(json.ends_with('\n'));
    let restored = tree::from_json(&json).unwrap();
    assert_eq!(restored, tree);

    for text in ["pos m0 m1 case", "neg m0 case", "neg case", "unseen m1 only"] {
        let before = tree::predict(&tree, text, &gateway).unwrap();
        let after = tree::predict(&restored, text, &gateway).unwrap();
        assert_eq!(before.label, after.label, "text {text:?}");
        assert_eq!(before.steps.len(), after.steps.len(), "text {text:?}");
    }
}

#[test]
fn parallel_and_sequential_growth_agree() {
    let data = layered_data();
    let grow_with = |mode: ExecMode| {
        let gateway = mention_gateway(mode);
        tree::grow(&data, &stopping(), &optimizer(), &gateway, 7, &mut NullSink).unwrap()
    };
    assert_eq!(grow_with(ExecMode::Parallel), grow_with(ExecMode::Sequential));
}

/// Twelve examples split perfectly by one keyword rule, so a single trained
/// question covers every evaluation query.
fn alpha_data() -> Dataset {
    let mut examples = Vec::new();
    for i in 0..6 {
        examples.push(example(&format!("p{i}"), &format!("alpha case {i}"), 1));
    }
    for i in 0..6 {
        examples.push(example(&format!("n{i}"), &format!("plain case {i}"), 0));
    }
    Dataset::new("alpha", examples).unwrap()
}

fn alpha_policy() -> ScriptedPolicy {
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
        generation: GenerationScripts {
            step: Some(Script::Canned {
                responses: vec!["Does the text mention the alpha marker? (yes/no)?".to_string()],
                repeat_last: true,
            }),
            ..fixed_feedback_scripts()
        },
        ..ScriptedPolicy::default()
    }
}

#[test]
fn file_cache_eliminates_backend_calls_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.jsonl");
    let data = alpha_data();
    let config = optimizer();

    let tree = {
        let gateway = Gateway::new(Arc::new(ScriptedBackend::new(alpha_policy())))
            .with_cache(QueryCache::open(&cache_path).unwrap());
        tree::grow(&data, &StoppingCriteria::default(), &config, &gateway, 7, &mut NullSink)
            .unwrap()
    };
    assert_eq!(tree.depth(), 1);

    let backend = Arc::new(ScriptedBackend::new(alpha_policy()));
    let gateway =
        Gateway::new(backend.clone()).with_cache(QueryCache::open(&cache_path).unwrap());
    let report = tree::evaluate(&tree, &data, &gateway).unwrap();

    assert_eq!(report.accuracy, 1.0);
    assert_eq!(backend.calls(), 0);
    assert_eq!(gateway.backend_calls(), 0);
    assert_eq!(gateway.cache_hits(), 12);
}
