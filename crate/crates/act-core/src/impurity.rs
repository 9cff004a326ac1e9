//! Impurity measures for candidate partitions.
//!
//! Counts stay as exact integers until the final division, so results agree
//! with exact rational arithmetic to within a unit or two in the last place.

use serde::{Deserialize, Serialize};

use crate::corpus::LabelCounts;
use crate::error::{Error, Result};

/// Criterion used to score a candidate split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    #[default]
    Gini,
    InfoGainRatio,
}

impl SplitCriterion {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitCriterion::Gini => "gini",
            SplitCriterion::InfoGainRatio => "info_gain_ratio",
        }
    }
}

impl std::fmt::Display for SplitCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitCriterion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<SplitCriterion, String> {
        match s {
            "gini" => Ok(SplitCriterion::Gini),
            "info_gain_ratio" => Ok(SplitCriterion::InfoGainRatio),
            other => Err(format!(
                "unknown criterion `{other}` (expected `gini` or `info_gain_ratio`)"
            )),
        }
    }
}

/// Gini impurity `1 - p0^2 - p1^2` of a non-empty set.
pub fn gini(counts: &LabelCounts) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(gini_value(counts))
}

/// Gini impurity without the emptiness check; 0 for empty counts.
pub fn gini_value(counts: &LabelCounts) -> f64 {
    let total = counts.total() as u128;
    if total == 0 {
        return 0.0;
    }
    let n0 = counts.n0 as u128;
    let n1 = counts.n1 as u128;
    let squares = n0 * n0 + n1 * n1;
    1.0 - (squares as f64) / ((total * total) as f64)
}

/// Shannon entropy in bits; 0 for empty counts.
pub fn entropy_value(counts: &LabelCounts) -> f64 {
    let total = counts.total();
    if total == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    for n in [counts.n0, counts.n1] {
        if n > 0 {
            let p = n as f64 / total as f64;
            h -= p * p.log2();
        }
    }
    h
}

/// Size-weighted impurity of a two-way partition; the quantity the question
/// optimizer minimises.
///
/// For [`SplitCriterion::Gini`] this is
/// `|L|/n * gini(L) + |R|/n * gini(R)`. A degenerate partition (one side
/// empty) scores exactly the parent impurity, so it can never beat a split
/// that makes progress.
///
/// For [`SplitCriterion::InfoGainRatio`] the score is `1 - IGR`, which maps
/// the gain ratio onto the same minimise-me scale: perfect separation scores
/// 0 and an uninformative or degenerate partition scores 1.
pub fn weighted_split_score(
    left: &LabelCounts,
    right: &LabelCounts,
    criterion: SplitCriterion,
) -> Result<f64> {
    let parent = left.merge(right);
    if parent.is_empty() {
        return Err(Error::EmptySet);
    }
    match criterion {
        SplitCriterion::Gini => {
            if left.is_empty() {
                return Ok(gini_value(right));
            }
            if right.is_empty() {
                return Ok(gini_value(left));
            }
            let n = parent.total() as f64;
            let wl = left.total() as f64 / n;
            let wr = right.total() as f64 / n;
            Ok(wl * gini_value(left) + wr * gini_value(right))
        }
        SplitCriterion::InfoGainRatio => Ok(1.0 - info_gain_ratio(&parent, left, right)?),
    }
}

/// Information gain of the partition divided by its split information.
///
/// Entropy is base 2. When the split information is zero (one side holds
/// everything) the ratio is defined as 0.
pub fn info_gain_ratio(parent: &LabelCounts, left: &LabelCounts, right: &LabelCounts) -> Result<f64> {
    if parent.is_empty() {
        return Err(Error::EmptySet);
    }
    let children = left.merge(right);
    if children != *parent {
        return Err(Error::CountMismatch {
            parent: parent.total(),
            children: children.total(),
        });
    }
    let n = parent.total() as f64;
    let wl = left.total() as f64 / n;
    let wr = right.total() as f64 / n;
    let gain = entropy_value(parent) - wl * entropy_value(left) - wr * entropy_value(right);

    let mut split_info = 0.0;
    for w in [wl, wr] {
        if w > 0.0 {
            split_info -= w * w.log2();
        }
    }
    if split_info == 0.0 {
        return Ok(0.0);
    }
    Ok(gain / split_info)
}
