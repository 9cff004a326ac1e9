//! CART: axis-aligned decision tree over dense feature vectors.
//!
//! Split selection is exhaustive: every feature, every midpoint between
//! consecutive distinct sorted values. Candidates are compared with exact
//! integer arithmetic so the winner never depends on floating-point
//! rounding; ties break toward the lowest feature index, then the lowest
//! threshold.

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabelCounts};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};

/// Version written into every baseline document.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_node_size: usize,
}

impl Default for CartParams {
    fn default() -> CartParams {
        CartParams {
            max_depth: 3,
            min_node_size: 5,
        }
    }
}

impl CartParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".to_string()));
        }
        if self.min_node_size == 0 {
            return Err(Error::Config("min_node_size must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// One CART node. Rows with `feature <= threshold` descend left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CartNode {
    Internal {
        feature_index: usize,
        threshold: f64,
        train_counts: LabelCounts,
        left: Box<CartNode>,
        right: Box<CartNode>,
    },
    Leaf {
        label: Label,
        train_counts: LabelCounts,
    },
}

impl CartNode {
    pub fn depth(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 0,
            CartNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 1,
            CartNode::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }
}

/// A candidate split and its weighted-Gini score (for reporting; selection
/// uses exact arithmetic).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub feature_index: usize,
    pub threshold: f64,
    pub score: f64,
}

/// Exact comparison key for a candidate split of a fixed node.
///
/// The weighted Gini impurity of a partition with side sizes `L`, `R` and
/// per-class counts `l_c`, `r_c` equals `num / (N * L * R)` with
/// `num = R * (L^2 - sum l_c^2) + L * (R^2 - sum r_c^2)`. `N` is constant
/// per node, so candidates compare by `num / (L * R)` via cross
/// multiplication in u128.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ExactScore {
    num: u128,
    lr: u128,
}

impl ExactScore {
    fn new(left: &LabelCounts, right: &LabelCounts) -> ExactScore {
        let l = left.total() as u128;
        let r = right.total() as u128;
        let l_sq = (left.n0 as u128).pow(2) + (left.n1 as u128).pow(2);
        let r_sq = (right.n0 as u128).pow(2) + (right.n1 as u128).pow(2);
        ExactScore {
            num: r * (l * l - l_sq) + l * (r * r - r_sq),
            lr: l * r,
        }
    }

    fn less_than(&self, other: &ExactScore) -> bool {
        self.num * other.lr < other.num * self.lr
    }

    fn as_f64(&self, n: u64) -> f64 {
        (self.num as f64) / (self.lr as f64 * n as f64)
    }
}

fn node_counts(labels: &[Label], rows: &[usize]) -> LabelCounts {
    let mut counts = LabelCounts::default();
    for &row in rows {
        counts.add(labels[row]);
    }
    counts
}

/// Finds the best split of `rows`, or `None` when every feature is constant
/// on them. `matrix` is row-major with equal-length rows.
pub fn best_split(
    matrix: &[Vec<f64>],
    labels: &[Label],
    rows: &[usize],
    mode: ExecMode,
) -> Result<Option<SplitCandidate>> {
    if matrix.len() != labels.len() {
        return Err(Error::Data(format!(
            "feature matrix has {} rows but {} labels",
            matrix.len(),
            labels.len()
        )));
    }
    if rows.len() < 2 {
        return Ok(None);
    }
    let n_features = matrix.first().map_or(0, Vec::len);
    let n = rows.len() as u64;

    // Best candidate per feature, computed independently; the ascending
    // final fold makes the lowest feature index win ties.
    let per_feature = exec::map_indices(mode, n_features, |feature| {
        let mut values: Vec<(f64, Label)> = rows
            .iter()
            .map(|&row| (matrix[row][feature], labels[row]))
            .collect();
        values.sort_by(|a, b| a.0.total_cmp(&b.0));

        let total = {
            let mut c = LabelCounts::default();
            for (_, label) in &values {
                c.add(*label);
            }
            c
        };
        let mut left = LabelCounts::default();
        let mut best: Option<(ExactScore, f64)> = None;
        for i in 0..values.len() - 1 {
            left.add(values[i].1);
            if values[i].0 >= values[i + 1].0 {
                continue;
            }
            let right = LabelCounts::new(total.n0 - left.n0, total.n1 - left.n1);
            let score = ExactScore::new(&left, &right);
            let better = match &best {
                None => true,
                Some((incumbent, _)) => score.less_than(incumbent),
            };
            if better {
                let threshold = (values[i].0 + values[i + 1].0) / 2.0;
                best = Some((score, threshold));
            }
        }
        best.map(|(score, threshold)| (score, feature, threshold))
    });

    let mut winner: Option<(ExactScore, usize, f64)> = None;
    for candidate in per_feature.into_iter().flatten() {
        let better = match &winner {
            None => true,
            Some((incumbent, _, _)) => candidate.0.less_than(incumbent),
        };
        if better {
            winner = Some(candidate);
        }
    }
    Ok(winner.map(|(score, feature_index, threshold)| SplitCandidate {
        feature_index,
        threshold,
        score: score.as_f64(n),
    }))
}

fn fit_node(
    matrix: &[Vec<f64>],
    labels: &[Label],
    rows: &[usize],
    depth: usize,
    params: &CartParams,
    mode: ExecMode,
) -> Result<CartNode> {
    let counts = node_counts(labels, rows);
    let leaf = |counts: &LabelCounts| CartNode::Leaf {
        label: counts.majority().expect("node holds rows"),
        train_counts: *counts,
    };
    if depth >= params.max_depth
        || rows.len() < params.min_node_size
        || counts.is_pure()
    {
        return Ok(leaf(&counts));
    }
    let Some(split) = best_split(matrix, labels, rows, mode)? else {
        return Ok(leaf(&counts));
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&row| matrix[row][split.feature_index] <= split.threshold);
    let left = fit_node(matrix, labels, &left_rows, depth + 1, params, mode)?;
    let right = fit_node(matrix, labels, &right_rows, depth + 1, params, mode)?;
    Ok(CartNode::Internal {
        feature_index: split.feature_index,
        threshold: split.threshold,
        train_counts: counts,
        left: Box::new(left),
        right: Box::new(right),
    })
}

/// Fits a CART tree on the full matrix.
pub fn fit(
    matrix: &[Vec<f64>],
    labels: &[Label],
    params: &CartParams,
    mode: ExecMode,
) -> Result<CartNode> {
    params.validate()?;
    if matrix.is_empty() {
        return Err(Error::Data("cannot fit a tree on zero rows".to_string()));
    }
    if matrix.len() != labels.len() {
        return Err(Error::Data(format!(
            "feature matrix has {} rows but {} labels",
            matrix.len(),
            labels.len()
        )));
    }
    let width = matrix[0].len();
    if matrix.iter().any(|row| row.len() != width) {
        return Err(Error::Data("feature matrix rows have unequal lengths".to_string()));
    }
    let rows: Vec<usize> = (0..matrix.len()).collect();
    fit_node(matrix, labels, &rows, 0, params, mode)
}

/// Classifies one feature vector.
pub fn predict(node: &CartNode, features: &[f64]) -> Result<Label> {
    match node {
        CartNode::Leaf { label, .. } => Ok(*label),
        CartNode::Internal {
            feature_index,
            threshold,
            left,
            right,
            ..
        } => {
            let value = features.get(*feature_index).ok_or(Error::Dimension {
                index: *feature_index,
                len: features.len(),
            })?;
            if *value <= *threshold {
                predict(left, features)
            } else {
                predict(right, features)
            }
        }
    }
}

/// Serialisable envelope for a fitted baseline tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartDocument {
    pub format_version: u32,
    pub kind: String,
    pub params: CartParams,
    pub root: CartNode,
}

impl CartDocument {
    pub fn new(params: CartParams, root: CartNode) -> CartDocument {
        CartDocument {
            format_version: FORMAT_VERSION,
            kind: "cart".to_string(),
            params,
            root,
        }
    }
}

/// Serialises a baseline document as pretty JSON with a trailing newline.
pub fn to_json(document: &CartDocument) -> Result<String> {
    let mut out = serde_json::to_string_pretty(document)?;
    out.push('\n');
    Ok(out)
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

/// Parses a baseline document, rejecting unknown versions first.
pub fn from_json(raw: &str) -> Result<CartDocument> {
    let probe: VersionProbe =
        serde_json::from_str(raw).map_err(|e| Error::Schema(e.to_string()))?;
    match probe.format_version {
        Some(FORMAT_VERSION) => {}
        Some(other) => return Err(Error::UnsupportedVersion(other)),
        None => return Err(Error::Schema("missing field `format_version`".to_string())),
    }
    let document: CartDocument =
        serde_json::from_str(raw).map_err(|e| Error::Schema(e.to_string()))?;
    if document.kind != "cart" {
        return Err(Error::Schema(format!(
            "expected kind `cart`, got `{}`",
            document.kind
        )));
    }
    Ok(document)
}
