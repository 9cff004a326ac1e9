//! Classical reference classifier: TF-IDF features plus a CART tree.

pub mod cart;
pub mod tfidf;

pub use cart::{best_split, fit, predict, CartDocument, CartNode, CartParams, SplitCandidate};
pub use tfidf::TfidfModel;
