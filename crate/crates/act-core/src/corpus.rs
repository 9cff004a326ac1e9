//! Labelled text corpora: loading, stratified splitting, label bookkeeping.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class label. Only 0 and 1 are representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Label(u8);

impl Label {
    pub const ZERO: Label = Label(0);
    pub const ONE: Label = Label(1);

    pub fn new(value: u8) -> Result<Label> {
        Label::try_from(value).map_err(Error::Data)
    }

    pub fn from_bool(positive: bool) -> Label {
        if positive {
            Label::ONE
        } else {
            Label::ZERO
        }
    }

    pub fn as_u8(self) -> u8 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 == 1
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Label, String> {
        match value {
            0 | 1 => Ok(Label(value)),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One labelled text example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub label: Label,
}

/// Counts of label-0 and label-1 examples in some collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub n0: u64,
    pub n1: u64,
}

impl LabelCounts {
    pub fn new(n0: u64, n1: u64) -> LabelCounts {
        LabelCounts { n0, n1 }
    }

    pub fn total(&self) -> u64 {
        self.n0 + self.n1
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn get(&self, label: Label) -> u64 {
        if label.is_positive() {
            self.n1
        } else {
            self.n0
        }
    }

    pub fn add(&mut self, label: Label) {
        if label.is_positive() {
            self.n1 += 1;
        } else {
            self.n0 += 1;
        }
    }

    pub fn merge(&self, other: &LabelCounts) -> LabelCounts {
        LabelCounts {
            n0: self.n0 + other.n0,
            n1: self.n1 + other.n1,
        }
    }

    /// True when all examples carry the same label (or there are none).
    pub fn is_pure(&self) -> bool {
        self.n0 == 0 || self.n1 == 0
    }

    /// Majority label; ties resolve to 0. `None` for empty counts.
    pub fn majority(&self) -> Option<Label> {
        if self.is_empty() {
            None
        } else if self.n1 > self.n0 {
            Some(Label::ONE)
        } else {
            Some(Label::ZERO)
        }
    }
}

/// An ordered, id-unique collection of examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    name: String,
    examples: Vec<Example>,
}

impl Dataset {
    /// Builds a dataset, rejecting empty collections and duplicate ids.
    pub fn new(name: impl Into<String>, examples: Vec<Example>) -> Result<Dataset> {
        let name = name.into();
        if examples.is_empty() {
            return Err(Error::EmptyDataset(name));
        }
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
        }
        Ok(Dataset { name, examples })
    }

    fn from_validated(name: String, examples: Vec<Example>) -> Dataset {
        Dataset { name, examples }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    pub fn label_counts(&self) -> LabelCounts {
        let mut counts = LabelCounts::default();
        for ex in &self.examples {
            counts.add(ex.label);
        }
        counts
    }

    /// Majority label with ties resolving to 0.
    pub fn majority_label(&self) -> Result<Label> {
        self.label_counts()
            .majority()
            .ok_or_else(|| Error::EmptyDataset(self.name.clone()))
    }

    /// Subset containing the listed ids, in the order given. Ids absent from
    /// the dataset are an error.
    pub fn subset(&self, ids: &[String]) -> Result<Dataset> {
        if ids.is_empty() {
            return Err(Error::EmptyDataset(self.name.clone()));
        }
        let by_id: HashMap<&str, usize> = self
            .examples
            .iter()
            .enumerate()
            .map(|(i, ex)| (ex.id.as_str(), i))
            .collect();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let idx = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::Data(format!("id `{id}` not found in dataset `{}`", self.name)))?;
            out.push(self.examples[*idx].clone());
        }
        Dataset::new(self.name.clone(), out)
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Example;
    type IntoIter = std::slice::Iter<'a, Example>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

/// On-disk dataset format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Guesses the format from a path extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DataFormat::Csv,
            _ => DataFormat::Jsonl,
        }
    }
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<DataFormat, String> {
        match s {
            "jsonl" => Ok(DataFormat::Jsonl),
            "csv" => Ok(DataFormat::Csv),
            other => Err(format!("unknown data format `{other}` (expected jsonl or csv)")),
        }
    }
}

/// Field mapping and label conventions used while loading.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadOptions {
    /// Field or column holding the example text.
    pub text_field: String,
    /// Field or column holding the label.
    pub label_field: String,
    /// Field or column holding the id; records without it get their
    /// zero-based row index as id.
    pub id_field: String,
    /// String label mapped to 1; when set, every other string maps to 0.
    pub positive_class: Option<String>,
    /// Drop examples whose text exceeds this many characters.
    pub max_chars: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> LoadOptions {
        LoadOptions {
            text_field: "text".to_string(),
            label_field: "label".to_string(),
            id_field: "id".to_string(),
            positive_class: None,
            max_chars: None,
        }
    }
}

fn parse_label_text(raw: &str, options: &LoadOptions) -> std::result::Result<Label, String> {
    if let Some(positive) = &options.positive_class {
        return Ok(Label::from_bool(raw == positive));
    }
    match raw.trim().parse::<i64>() {
        Ok(0) => Ok(Label::ZERO),
        Ok(1) => Ok(Label::ONE),
        Ok(other) => Err(format!("label must be 0 or 1, got {other}")),
        Err(_) => Err(format!(
            "string label {raw:?} requires a positive_class mapping"
        )),
    }
}

fn parse_label_value(value: &serde_json::Value, options: &LoadOptions) -> std::result::Result<Label, String> {
    match value {
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(0) => Ok(Label::ZERO),
            Some(1) => Ok(Label::ONE),
            Some(other) => Err(format!("label must be 0 or 1, got {other}")),
            None => Err(format!("label must be an integer, got {n}")),
        },
        serde_json::Value::String(s) => parse_label_text(s, options),
        other => Err(format!("label must be a number or string, got {other}")),
    }
}

/// Loads a dataset from JSONL or CSV. The dataset name is the file stem.
pub fn load_dataset(path: &Path, format: DataFormat, options: &LoadOptions) -> Result<Dataset> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let examples = match format {
        DataFormat::Jsonl => load_jsonl(path, options)?,
        DataFormat::Csv => load_csv(path, options)?,
    };
    let examples = apply_max_chars(examples, options);
    Dataset::new(name, examples)
}

fn apply_max_chars(examples: Vec<Example>, options: &LoadOptions) -> Vec<Example> {
    match options.max_chars {
        Some(cap) => examples
            .into_iter()
            .filter(|ex| ex.text.chars().count() <= cap)
            .collect(),
        None => examples,
    }
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::MalformedRecord {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn load_jsonl(path: &Path, options: &LoadOptions) -> Result<Vec<Example>> {
    let raw = std::fs::read_to_string(path)?;
    let mut examples = Vec::new();
    let mut record_index = 0usize;
    for (line_no, line) in raw.lines().enumerate() {
        let line_no = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| malformed(path, line_no, format!("invalid JSON: {e}")))?;
        let object = value
            .as_object()
            .ok_or_else(|| malformed(path, line_no, "record is not a JSON object"))?;

        let text = object
            .get(&options.text_field)
            .ok_or_else(|| malformed(path, line_no, format!("missing field `{}`", options.text_field)))?
            .as_str()
            .ok_or_else(|| malformed(path, line_no, format!("field `{}` is not a string", options.text_field)))?
            .to_string();
        if text.trim().is_empty() {
            return Err(malformed(path, line_no, "empty text"));
        }

        let label_value = object
            .get(&options.label_field)
            .ok_or_else(|| malformed(path, line_no, format!("missing field `{}`", options.label_field)))?;
        let label = parse_label_value(label_value, options)
            .map_err(|msg| malformed(path, line_no, msg))?;

        let id = match object.get(&options.id_field) {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            Some(other) => {
                return Err(malformed(
                    path,
                    line_no,
                    format!("field `{}` must be a string or number, got {other}", options.id_field),
                ))
            }
            None => record_index.to_string(),
        };

        examples.push(Example { id, text, label });
        record_index += 1;
    }
    Ok(examples)
}

fn load_csv(path: &Path, options: &LoadOptions) -> Result<Vec<Example>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let column = |field: &str| headers.iter().position(|h| h == field);

    let text_col = column(&options.text_field)
        .ok_or_else(|| malformed(path, 1, format!("missing column `{}`", options.text_field)))?;
    let label_col = column(&options.label_field)
        .ok_or_else(|| malformed(path, 1, format!("missing column `{}`", options.label_field)))?;
    let id_col = column(&options.id_field);

    let mut examples = Vec::new();
    for (record_index, record) in reader.records().enumerate() {
        let line_no = record_index + 2;
        let record = record.map_err(|e| malformed(path, line_no, e.to_string()))?;
        let text = record
            .get(text_col)
            .ok_or_else(|| malformed(path, line_no, "short record"))?
            .to_string();
        if text.trim().is_empty() {
            return Err(malformed(path, line_no, "empty text"));
        }
        let label_raw = record
            .get(label_col)
            .ok_or_else(|| malformed(path, line_no, "short record"))?;
        let label = parse_label_text(label_raw, options)
            .map_err(|msg| malformed(path, line_no, msg))?;
        let id = match id_col.and_then(|c| record.get(c)) {
            Some(cell) if !cell.is_empty() => cell.to_string(),
            _ => record_index.to_string(),
        };
        examples.push(Example { id, text, label });
    }
    Ok(examples)
}

/// Writes a dataset as JSONL, one `{"id", "text", "label"}` object per line.
pub fn write_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    for ex in dataset {
        serde_json::to_writer(&mut writer, ex)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Requested sizes for a three-way stratified split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
    /// With `balanced`, every part gets exactly half of each class and all
    /// sizes must be even. Otherwise parts mirror the corpus class ratio
    /// via largest-remainder rounding.
    pub balanced: bool,
}

/// Splits a dataset into train/val/test parts stratified by class.
///
/// Assignment is deterministic in `spec.seed`; each part preserves the
/// original corpus order of its examples.
pub fn stratified_split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let sizes = [spec.train, spec.val, spec.test];
    if sizes.iter().all(|&s| s == 0) {
        return Err(Error::Config("split sizes are all zero".to_string()));
    }

    let mut pos_pool: Vec<usize> = Vec::new();
    let mut neg_pool: Vec<usize> = Vec::new();
    for (i, ex) in dataset.iter().enumerate() {
        if ex.label.is_positive() {
            pos_pool.push(i);
        } else {
            neg_pool.push(i);
        }
    }

    // Per-part class quotas: (label-0 count, label-1 count).
    let mut quotas = [(0usize, 0usize); 3];
    if spec.balanced {
        for (&size, quota) in sizes.iter().zip(quotas.iter_mut()) {
            if size % 2 != 0 {
                return Err(Error::Config(format!(
                    "balanced split requires even part sizes, got {size}"
                )));
            }
            *quota = (size / 2, size / 2);
        }
    } else {
        let n = dataset.len();
        let n1 = pos_pool.len();
        for (&size, quota) in sizes.iter().zip(quotas.iter_mut()) {
            // Largest-remainder rounding over two classes: at most one
            // leftover unit, which goes to the class with the larger
            // fractional part (class 0 on ties).
            let floor1 = size * n1 / n;
            let floor0 = size * (n - n1) / n;
            let mut q = (floor0, floor1);
            if floor0 + floor1 < size {
                let r1 = size * n1 % n;
                let r0 = size * (n - n1) % n;
                if r1 > r0 {
                    q.1 += 1;
                } else {
                    q.0 += 1;
                }
            }
            *quota = q;
        }
    }

    let need0: usize = quotas.iter().map(|q| q.0).sum();
    let need1: usize = quotas.iter().map(|q| q.1).sum();
    if need0 > neg_pool.len() {
        return Err(Error::InsufficientClass {
            label: 0,
            needed: need0,
            available: neg_pool.len(),
        });
    }
    if need1 > pos_pool.len() {
        return Err(Error::InsufficientClass {
            label: 1,
            needed: need1,
            available: pos_pool.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    neg_pool.shuffle(&mut rng);
    pos_pool.shuffle(&mut rng);

    let mut neg_cursor = 0usize;
    let mut pos_cursor = 0usize;
    let mut parts: Vec<Dataset> = Vec::with_capacity(3);
    for (part_idx, quota) in quotas.iter().enumerate() {
        let mut indices: Vec<usize> = Vec::with_capacity(quota.0 + quota.1);
        indices.extend_from_slice(&neg_pool[neg_cursor..neg_cursor + quota.0]);
        indices.extend_from_slice(&pos_pool[pos_cursor..pos_cursor + quota.1]);
        neg_cursor += quota.0;
        pos_cursor += quota.1;
        indices.sort_unstable();
        let suffix = ["train", "val", "test"][part_idx];
        let examples: Vec<Example> = indices
            .iter()
            .map(|&i| dataset.examples()[i].clone())
            .collect();
        parts.push(Dataset::from_validated(
            format!("{}.{suffix}", dataset.name()),
            examples,
        ));
    }

    let test = parts.pop().expect("three parts");
    let val = parts.pop().expect("three parts");
    let train = parts.pop().expect("three parts");
    Ok((train, val, test))
}
