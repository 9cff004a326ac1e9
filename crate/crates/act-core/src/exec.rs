//! Runtime switch between rayon-backed and sequential batch execution.
//!
//! The `parallel` cargo feature controls whether rayon is linked at all.
//! With the feature enabled (the default) callers still choose per run via
//! [`ExecMode`]; with it disabled every mode degrades to sequential
//! iteration. Results are returned in input order in both modes, so any
//! deterministic computation stays byte-for-byte reproducible regardless of
//! the mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

impl ExecMode {
    /// The mode actually in effect once compile-time features are applied.
    pub fn effective(self) -> ExecMode {
        if cfg!(feature = "parallel") {
            self
        } else {
            ExecMode::Sequential
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExecMode::Parallel => "parallel",
            ExecMode::Sequential => "sequential",
        }
    }
}

impl std::fmt::Display for ExecMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ExecMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<ExecMode, String> {
        match s {
            "parallel" => Ok(ExecMode::Parallel),
            "sequential" => Ok(ExecMode::Sequential),
            other => Err(format!("unknown execution mode `{other}` (expected `parallel` or `sequential`)")),
        }
    }
}

/// Maps `f` over `items`, preserving input order in the output.
pub fn map<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match mode.effective() {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Maps `f` over index range `0..n`, preserving index order in the output.
pub fn map_indices<U, F>(mode: ExecMode, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match mode.effective() {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_in_both_modes() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map(ExecMode::Sequential, &items, |x| x * 2);
        let par = map(ExecMode::Parallel, &items, |x| x * 2);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 14);
    }

    #[test]
    fn map_indices_matches_plain_iteration() {
        let seq = map_indices(ExecMode::Sequential, 257, |i| i as u64 + 1);
        let par = map_indices(ExecMode::Parallel, 257, |i| i as u64 + 1);
        assert_eq!(seq, par);
        assert_eq!(seq.len(), 257);
        assert_eq!(seq[0], 1);
    }

    #[test]
    fn effective_mode_downgrades_without_feature() {
        let eff = ExecMode::Parallel.effective();
        if cfg!(feature = "parallel") {
            assert_eq!(eff, ExecMode::Parallel);
        } else {
            assert_eq!(eff, ExecMode::Sequential);
        }
    }
}
