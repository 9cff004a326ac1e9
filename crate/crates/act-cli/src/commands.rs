//! Command implementations and the artifacts they write.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use act_core::baseline::{self, CartDocument, CartNode, CartParams, TfidfModel};
use act_core::corpus::{self, Dataset, DataFormat, Label, SplitSpec};
use act_core::gateway::Gateway;
use act_core::optimizer::Candidate;
use act_core::seeding;
use act_core::tree::{self, Confusion, EvalReport, Tree, TraceSink};
use act_core::{Error, Result};

use crate::config::RunConfig;

/// Writes each node's refinement trace to `<dir>/<node_id>.jsonl`: one line
/// per candidate, then a closing line with the selected index (null when the
/// node's refinement failed).
pub struct FileTraceSink {
    dir: PathBuf,
}

impl FileTraceSink {
    pub fn new(dir: PathBuf) -> FileTraceSink {
        FileTraceSink { dir }
    }
}

impl TraceSink for FileTraceSink {
    fn record(
        &mut self,
        node_id: &str,
        candidates: &[Candidate],
        best_index: Option<usize>,
    ) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let mut file = File::create(self.dir.join(format!("{node_id}.jsonl")))?;
        for candidate in candidates {
            serde_json::to_writer(&mut file, candidate)?;
            file.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut file, &serde_json::json!({ "best_index": best_index }))?;
        file.write_all(b"\n")?;
        Ok(())
    }
}

fn load(path: &Path, config: &RunConfig) -> Result<Dataset> {
    corpus::load_dataset(path, DataFormat::from_path(path), &config.data)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = serde_json::to_string_pretty(value)?;
    out.push('\n');
    write_text(path, &out)
}

fn write_resolved_config(config: &RunConfig, out_dir: &Path) -> Result<()> {
    write_text(&out_dir.join("config.resolved.json"), &config.to_resolved_json()?)
}

/// Accuracy summary persisted in metrics files.
#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub dataset: String,
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub confusion: Confusion,
}

impl EvalSummary {
    fn from_report(name: &str, report: &EvalReport) -> EvalSummary {
        EvalSummary {
            dataset: name.to_string(),
            total: report.total,
            correct: report.correct,
            accuracy: report.accuracy,
            confusion: report.confusion,
        }
    }
}

#[derive(Debug, Serialize)]
struct TreeShape {
    depth: usize,
    node_count: usize,
    leaf_count: usize,
}

impl TreeShape {
    fn of(tree: &Tree) -> TreeShape {
        TreeShape {
            depth: tree.root.depth(),
            node_count: tree.root.node_count(),
            leaf_count: tree.root.leaf_count(),
        }
    }
}

#[derive(Debug, Serialize)]
struct QueryStats {
    backend_calls: u64,
    cache_hits: u64,
    unparseable_answers: u64,
}

impl QueryStats {
    fn of(gateway: &Gateway) -> QueryStats {
        QueryStats {
            backend_calls: gateway.backend_calls(),
            cache_hits: gateway.cache_hits(),
            unparseable_answers: gateway.unparseable_answers(),
        }
    }
}

#[derive(Serialize)]
struct TrainMetrics {
    tree: TreeShape,
    train: EvalSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<EvalSummary>,
    queries: QueryStats,
}

/// Trains a tree and writes tree.json, tree.dot, per-node traces and
/// metrics.json to the output directory.
pub fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<()> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    write_resolved_config(config, out_dir)?;

    let train = load(config.require_train()?, config)?;
    let test = config.test_path.as_deref().map(|p| load(p, config)).transpose()?;

    let gateway = config.gateway(out_dir)?;
    let mut sink = FileTraceSink::new(out_dir.join("traces"));
    let tree = tree::grow(
        &train,
        &config.stopping(),
        &config.optimizer()?,
        &gateway,
        config.seed,
        &mut sink,
    )?;

    write_text(&out_dir.join("tree.json"), &tree::to_json(&tree)?)?;
    write_text(&out_dir.join("tree.dot"), &tree::render_dot(&tree))?;

    let train_report = tree::evaluate(&tree, &train, &gateway)?;
    let test_summary = match &test {
        Some(data) => {
            let report = tree::evaluate(&tree, data, &gateway)?;
            Some(EvalSummary::from_report(data.name(), &report))
        }
        None => None,
    };
    let metrics = TrainMetrics {
        tree: TreeShape::of(&tree),
        train: EvalSummary::from_report(train.name(), &train_report),
        test: test_summary,
        queries: QueryStats::of(&gateway),
    };
    write_pretty_json(&out_dir.join("metrics.json"), &metrics)?;
    println!(
        "trained tree: depth {}, {} nodes, train accuracy {:.4}",
        metrics.tree.depth, metrics.tree.node_count, metrics.train.accuracy
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluateMetrics {
    tree: TreeShape,
    eval: EvalSummary,
    queries: QueryStats,
}

/// Evaluates a stored tree on a dataset; optionally dumps one decision path
/// per example to paths.jsonl.
pub fn cmd_evaluate(
    config: &RunConfig,
    tree_path: &Path,
    data_path: &Path,
    dump_paths: bool,
    out_dir: &Path,
) -> Result<()> {
    config.backend.validate()?;
    fs::create_dir_all(out_dir)?;
    write_resolved_config(config, out_dir)?;

    let tree = tree::from_json(&fs::read_to_string(tree_path)?)?;
    let data = load(data_path, config)?;
    let gateway = config.gateway(out_dir)?;
    let report = tree::evaluate(&tree, &data, &gateway)?;

    if dump_paths {
        let mut file = File::create(out_dir.join("paths.jsonl"))?;
        for outcome in &report.outcomes {
            serde_json::to_writer(&mut file, outcome)?;
            file.write_all(b"\n")?;
        }
    }
    let metrics = EvaluateMetrics {
        tree: TreeShape::of(&tree),
        eval: EvalSummary::from_report(data.name(), &report),
        queries: QueryStats::of(&gateway),
    };
    write_pretty_json(&out_dir.join("metrics.json"), &metrics)?;
    println!("accuracy {:.4} on {} examples", report.accuracy, report.total);
    Ok(())
}

/// Routes one text through a stored tree and prints the decision path.
pub fn cmd_predict(config: &RunConfig, tree_path: &Path, text: &str) -> Result<()> {
    config.backend.validate()?;
    let tree = tree::from_json(&fs::read_to_string(tree_path)?)?;
    // Prediction writes no artifacts, so the audit log (if any) goes next
    // to the current directory only when explicitly configured.
    let gateway = config.gateway(Path::new("."))?;
    let path = tree::predict(&tree, text, &gateway)?;
    let mut out = serde_json::to_string_pretty(&path)?;
    out.push('\n');
    print!("{out}");
    Ok(())
}

/// Trains one tree per (depth, steps) grid cell and writes ablation.csv.
/// Every cell runs on a fresh gateway with a derived seed, so cells are
/// independent and the grid is reproducible.
pub fn cmd_ablate(
    config: &RunConfig,
    depths: &[usize],
    step_counts: &[usize],
    out_dir: &Path,
) -> Result<()> {
    if depths.is_empty() || step_counts.is_empty() {
        return Err(Error::Config("ablation grid must not be empty".to_string()));
    }
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    write_resolved_config(config, out_dir)?;

    let train = load(config.require_train()?, config)?;
    let test_path = config
        .test_path
        .as_deref()
        .ok_or_else(|| Error::Config("ablate requires a test dataset (set test_path or pass --test)".to_string()))?;
    let test = load(test_path, config)?;

    let mut file = File::create(out_dir.join("ablation.csv"))?;
    writeln!(file, "d,k,train_accuracy,test_accuracy")?;
    for &depth in depths {
        for &steps in step_counts {
            let cell = RunConfig {
                depth,
                steps,
                // Per-cell cache keeps cells independent of each other.
                cache_path: None,
                ..config.clone()
            };
            let seed = seeding::derive(config.seed, &format!("ablate:d={depth}:k={steps}"));
            let gateway = cell.gateway(out_dir)?;
            let tree = tree::grow(
                &train,
                &cell.stopping(),
                &cell.optimizer()?,
                &gateway,
                seed,
                &mut tree::NullSink,
            )?;
            let train_acc = tree::evaluate(&tree, &train, &gateway)?.accuracy;
            let test_acc = tree::evaluate(&tree, &test, &gateway)?.accuracy;
            writeln!(file, "{depth},{steps},{train_acc:.4},{test_acc:.4}")?;
            file.flush()?;
        }
    }
    println!("wrote {} rows to ablation.csv", depths.len() * step_counts.len());
    Ok(())
}

fn labels_of(data: &Dataset) -> Vec<Label> {
    data.iter().map(|ex| ex.label).collect()
}

fn score_cart(
    root: &CartNode,
    model: &TfidfModel,
    data: &Dataset,
    name: &str,
) -> Result<EvalSummary> {
    let mut correct = 0u64;
    let mut confusion = Confusion::default();
    for ex in data {
        let predicted = baseline::predict(root, &model.transform(&ex.text))?;
        if predicted == ex.label {
            correct += 1;
        }
        confusion.record(ex.label, predicted);
    }
    let total = data.len() as u64;
    Ok(EvalSummary {
        dataset: name.to_string(),
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        confusion,
    })
}

#[derive(Serialize)]
struct BaselineMetrics {
    baseline: &'static str,
    params: CartParams,
    vocabulary_size: usize,
    tree_depth: usize,
    train: EvalSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<EvalSummary>,
}

/// Fits the TF-IDF + CART reference classifier and writes cart.json,
/// vocabulary.json and metrics.json.
pub fn cmd_baseline(config: &RunConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_resolved_config(config, out_dir)?;

    let train = load(config.require_train()?, config)?;
    let test = config.test_path.as_deref().map(|p| load(p, config)).transpose()?;

    let model = TfidfModel::fit(&train)?;
    let matrix = model.to_matrix(&train);
    let labels = labels_of(&train);
    let params = CartParams {
        max_depth: config.depth,
        min_node_size: config.min_node_size,
    };
    let root = baseline::fit(&matrix, &labels, &params, config.mode)?;

    write_pretty_json(&out_dir.join("cart.json"), &CartDocument::new(params, root.clone()))?;
    write_pretty_json(&out_dir.join("vocabulary.json"), &model.report())?;

    let train_summary = score_cart(&root, &model, &train, train.name())?;
    let test_summary = match &test {
        Some(data) => Some(score_cart(&root, &model, data, data.name())?),
        None => None,
    };
    let metrics = BaselineMetrics {
        baseline: "tfidf_cart",
        params,
        vocabulary_size: model.len(),
        tree_depth: root.depth(),
        train: train_summary,
        test: test_summary,
    };
    write_pretty_json(&out_dir.join("metrics.json"), &metrics)?;
    println!(
        "baseline accuracy: train {:.4}{}",
        metrics.train.accuracy,
        metrics
            .test
            .as_ref()
            .map(|t| format!(", test {:.4}", t.accuracy))
            .unwrap_or_default()
    );
    Ok(())
}

/// Renders a stored tree as DOT, to a file or stdout.
pub fn cmd_export_dot(tree_path: &Path, out_path: Option<&Path>) -> Result<()> {
    let tree = tree::from_json(&fs::read_to_string(tree_path)?)?;
    let dot = tree::render_dot(&tree);
    match out_path {
        Some(path) => write_text(path, &dot)?,
        None => print!("{dot}"),
    }
    Ok(())
}

/// Stratified three-way split written as train.jsonl / val.jsonl /
/// test.jsonl in the output directory.
pub fn cmd_split(
    config: &RunConfig,
    data_path: &Path,
    spec: &SplitSpec,
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let data = load(data_path, config)?;
    let (train, val, test) = corpus::stratified_split(&data, spec)?;
    corpus::write_jsonl(&train, &out_dir.join("train.jsonl"))?;
    corpus::write_jsonl(&val, &out_dir.join("val.jsonl"))?;
    corpus::write_jsonl(&test, &out_dir.join("test.jsonl"))?;
    println!(
        "split {} examples into {} train / {} val / {} test",
        data.len(),
        train.len(),
        val.len(),
        test.len()
    );
    Ok(())
}
