//! TF-IDF vectoriser with a fixed, fully specified recipe so results are
//! reproducible down to the bit.
//!
//! Tokens are lowercase maximal alphanumeric runs. Term frequency is the
//! token count divided by the document's token count (out-of-vocabulary
//! tokens still count toward the length). Inverse document frequency is
//! `ln((1 + N) / (1 + df)) + 1` over the fitted corpus. Vectors are
//! L2-normalised; a document with no in-vocabulary tokens maps to the zero
//! vector.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Lowercase alphanumeric word tokens, in document order.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Fitted vocabulary and document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfidfModel {
    /// Term to dense feature index; indices follow lexicographic term
    /// order.
    vocabulary: BTreeMap<String, usize>,
    /// Documents containing each term, by feature index.
    document_frequency: Vec<u64>,
    corpus_size: u64,
}

impl TfidfModel {
    /// Learns the vocabulary and document frequencies of `corpus`.
    pub fn fit(corpus: &Dataset) -> Result<TfidfModel> {
        let mut df: BTreeMap<String, u64> = BTreeMap::new();
        for ex in corpus {
            let unique: HashSet<String> = tokenize(&ex.text).into_iter().collect();
            for term in unique {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        if df.is_empty() {
            return Err(Error::Data(
                "tf-idf vocabulary is empty: no alphanumeric tokens in corpus".to_string(),
            ));
        }
        let mut vocabulary = BTreeMap::new();
        let mut document_frequency = Vec::with_capacity(df.len());
        for (index, (term, count)) in df.into_iter().enumerate() {
            vocabulary.insert(term, index);
            document_frequency.push(count);
        }
        Ok(TfidfModel {
            vocabulary,
            document_frequency,
            corpus_size: corpus.len() as u64,
        })
    }

    /// Number of features (vocabulary size).
    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    pub fn document_frequency(&self) -> &[u64] {
        &self.document_frequency
    }

    pub fn corpus_size(&self) -> u64 {
        self.corpus_size
    }

    /// Inverse document frequency of one feature.
    pub fn idf(&self, index: usize) -> Result<f64> {
        let df = self
            .document_frequency
            .get(index)
            .copied()
            .ok_or(Error::Dimension {
                index,
                len: self.document_frequency.len(),
            })?;
        Ok(((1 + self.corpus_size) as f64 / (1 + df) as f64).ln() + 1.0)
    }

    /// Dense, L2-normalised TF-IDF vector of one document. Unseen tokens
    /// are ignored (they contribute only to the document length).
    pub fn transform(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let mut weights = vec![0.0; self.len()];
        if tokens.is_empty() {
            return weights;
        }
        let doc_len = tokens.len() as f64;
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for token in &tokens {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
        for (term, count) in counts {
            if let Some(&index) = self.vocabulary.get(term) {
                let tf = count as f64 / doc_len;
                let idf = self.idf(index).expect("index from vocabulary");
                weights[index] = tf * idf;
            }
        }
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for w in &mut weights {
                *w /= norm;
            }
        }
        weights
    }

    /// Feature matrix for a dataset, one row per example in dataset order.
    pub fn to_matrix(&self, data: &Dataset) -> Vec<Vec<f64>> {
        data.iter().map(|ex| self.transform(&ex.text)).collect()
    }

    /// Vocabulary report (term, index, document frequency, idf) in index
    /// order, for export.
    pub fn report(&self) -> Vec<VocabEntry> {
        self.vocabulary
            .iter()
            .map(|(term, &index)| VocabEntry {
                term: term.clone(),
                index,
                document_frequency: self.document_frequency[index],
                idf: self.idf(index).expect("index from vocabulary"),
            })
            .collect()
    }
}

/// One row of the exported vocabulary report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabEntry {
    pub term: String,
    pub index: usize,
    pub document_frequency: u64,
    pub idf: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Example, Label};

    fn dataset(texts: &[&str]) -> Dataset {
        let examples = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Example {
                id: format!("d{i}"),
                text: t.to_string(),
                label: Label::ZERO,
            })
            .collect();
        Dataset::new("tfidf", examples).unwrap()
    }

    fn symptom_model() -> TfidfModel {
        TfidfModel::fit(&dataset(&[
            "coughing blood fever",
            "runny nose fever",
            "fever fever chills",
        ]))
        .unwrap()
    }

    #[test]
    fn tokenizer_lowercases_and_splits_on_non_alphanumerics() {
        assert_eq!(
            tokenize("The patient, aged 42, has FEVER!"),
            vec!["the", "patient", "aged", "42", "has", "fever"]
        );
        assert_eq!(tokenize("..."), Vec::<String>::new());
        assert_eq!(tokenize("don't stop"), vec!["don", "t", "stop"]);
    }

    #[test]
    fn vocabulary_is_lexicographic_with_correct_df() {
        let model = symptom_model();
        let terms: Vec<&str> = model.vocabulary().keys().map(String::as_str).collect();
        assert_eq!(terms, vec!["blood", "chills", "coughing", "fever", "nose", "runny"]);
        let indices: Vec<usize> = model.vocabulary().values().copied().collect();
        assert_eq!(indices, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(model.document_frequency(), &[1, 1, 1, 3, 1, 1]);
        assert_eq!(model.corpus_size(), 3);
    }

    #[test]
    fn idf_matches_hand_computation() {
        let model = symptom_model();
        // fever appears in every document: ln(4/4) + 1 = 1.
        let fever = model.vocabulary()["fever"];
        assert!((model.idf(fever).unwrap() - 1.0).abs() < 1e-15);
        // Everything else: ln(4/2) + 1.
        let blood = model.vocabulary()["blood"];
        assert!((model.idf(blood).unwrap() - (2.0f64.ln() + 1.0)).abs() < 1e-15);
        assert!(model.idf(99).is_err());
    }

    #[test]
    fn transform_matches_hand_computed_weights() {
        let model = symptom_model();
        // "fever fever chills": tf(fever)=2/3 idf 1, tf(chills)=1/3 idf
        // ln2+1, then L2 normalised.
        let v = model.transform("fever fever chills");
        let fever = model.vocabulary()["fever"];
        let chills = model.vocabulary()["chills"];
        assert!((v[fever] - 0.7632282916276542).abs() < 1e-9, "{}", v[fever]);
        assert!((v[chills] - 0.6461289150464732).abs() < 1e-9, "{}", v[chills]);
        for (i, w) in v.iter().enumerate() {
            if i != fever && i != chills {
                assert_eq!(*w, 0.0);
            }
        }

        // Equal term frequencies: rarer terms outweigh common ones.
        let v = model.transform("coughing blood fever");
        let coughing = model.vocabulary()["coughing"];
        let blood = model.vocabulary()["blood"];
        assert!((v[coughing] - 0.6524908845125339).abs() < 1e-9);
        assert!((v[blood] - 0.6524908845125339).abs() < 1e-9);
        assert!((v[fever] - 0.38537162746640063).abs() < 1e-9);
        assert!(v[coughing] > v[fever]);
    }

    #[test]
    fn transformed_vectors_are_unit_length_or_zero() {
        let model = symptom_model();
        let norm = |v: &[f64]| v.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!((norm(&model.transform("coughing blood fever")) - 1.0).abs() < 1e-12);
        assert!((norm(&model.transform("fever")) - 1.0).abs() < 1e-12);
        // Unseen-only text maps to the zero vector.
        let v = model.transform("zebra quagga");
        assert_eq!(v, vec![0.0; model.len()]);
        assert_eq!(norm(&v), 0.0);
    }

    #[test]
    fn oov_tokens_count_toward_document_length() {
        let model = symptom_model();
        let with_oov = model.transform("fever zebra");
        let without = model.transform("fever");
        let fever = model.vocabulary()["fever"];
        // Both normalise to a unit vector on the same single axis.
        assert!((with_oov[fever] - without[fever]).abs() < 1e-12);
        assert!((with_oov[fever] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_vocabulary_is_rejected() {
        let err = TfidfModel::fit(&dataset(&["!!!", "..."])).unwrap_err();
        assert!(err.to_string().contains("vocabulary is empty"), "{err}");
    }

    #[test]
    fn model_round_trips_through_json() {
        let model = symptom_model();
        let json = serde_json::to_string(&model).unwrap();
        let parsed: TfidfModel = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, model);
        assert_eq!(parsed.transform("fever chills"), model.transform("fever chills"));
    }

    #[test]
    fn report_lists_terms_in_index_order() {
        let model = symptom_model();
        let report = model.report();
        assert_eq!(report.len(), 6);
        assert_eq!(report[0].term, "blood");
        assert_eq!(report[0].index, 0);
        assert_eq!(report[3].term, "fever");
        assert_eq!(report[3].document_frequency, 3);
    }
}
