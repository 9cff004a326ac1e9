//! Agentic classification trees.
//!
//! Binary decision trees over unstructured text in which every internal node
//! holds a natural-language yes/no question. Questions are answered by a
//! pluggable backend (an HTTP chat-completion endpoint or a deterministic
//! scripted policy) and discovered during training by impurity-guided prompt
//! refinement: each node starts from a neutral question and iteratively
//! rewrites it using feedback derived from the split it induces, keeping the
//! candidate with the lowest weighted Gini impurity.
//!
//! The crate is organised around the training pipeline:
//!
//! * [`corpus`] loads labelled text datasets and produces stratified splits,
//! * [`impurity`] scores candidate partitions,
//! * [`gateway`] talks to the backend and caches every query,
//! * [`splitter`] applies one question to a node's examples,
//! * [`optimizer`] runs the refinement loop and picks the best question,
//! * [`tree`] grows, serialises and evaluates whole trees,
//! * [`baseline`] provides a TF-IDF + CART reference classifier.
//!
//! Batch work runs on a rayon pool when the `parallel` feature (on by
//! default) is enabled; [`exec::ExecMode`] selects between parallel and
//! sequential execution at runtime and everything stays deterministic in
//! both modes.

pub mod baseline;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod gateway;
pub mod impurity;
pub mod optimizer;
pub mod seeding;
pub mod splitter;
pub mod tree;

pub use error::{Error, ErrorClass, Result};
