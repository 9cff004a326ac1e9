//! Run configuration: JSON config file, CLI overrides, resolved echo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use act_core::corpus::LoadOptions;
use act_core::exec::ExecMode;
use act_core::gateway::{BackendConfig, Gateway, QueryCache};
use act_core::impurity::SplitCriterion;
use act_core::optimizer::{OptimizerConfig, PromptConstraints, Templates};
use act_core::tree::StoppingCriteria;
use act_core::{Error, Result};

fn default_depth() -> usize {
    3
}

fn default_steps() -> usize {
    5
}

fn default_sample_cap() -> usize {
    50
}

fn default_example_char_cap() -> usize {
    1500
}

fn default_max_logical_operators() -> u32 {
    2
}

fn default_min_node_size() -> usize {
    5
}

fn default_gini_threshold() -> f64 {
    0.01
}

fn default_step_max_attempts() -> u32 {
    3
}

/// Everything a run needs. Loaded from a JSON file, then overridden by CLI
/// flags; the result is echoed to `config.resolved.json` in the output
/// directory. `cache_path` is deliberately left out of the echo so runs
/// that differ only in cache location produce identical artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train_path: Option<PathBuf>,
    pub val_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub data: LoadOptions,
    pub backend: BackendConfig,
    pub depth: usize,
    pub steps: usize,
    pub sample_cap: usize,
    pub example_char_cap: usize,
    pub max_logical_operators: u32,
    pub min_node_size: usize,
    pub gini_threshold: f64,
    pub criterion: SplitCriterion,
    pub step_max_attempts: u32,
    pub evaluate_invalid: bool,
    pub initial_prompt: Option<String>,
    pub templates_dir: Option<PathBuf>,
    pub seed: u64,
    pub mode: ExecMode,
    pub jobs: Option<usize>,
    #[serde(skip_serializing)]
    pub cache_path: Option<PathBuf>,
    pub audit_queries: bool,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            train_path: None,
            val_path: None,
            test_path: None,
            data: LoadOptions::default(),
            backend: BackendConfig::default(),
            depth: default_depth(),
            steps: default_steps(),
            sample_cap: default_sample_cap(),
            example_char_cap: default_example_char_cap(),
            max_logical_operators: default_max_logical_operators(),
            min_node_size: default_min_node_size(),
            gini_threshold: default_gini_threshold(),
            criterion: SplitCriterion::default(),
            step_max_attempts: default_step_max_attempts(),
            evaluate_invalid: false,
            initial_prompt: None,
            templates_dir: None,
            seed: 0,
            mode: ExecMode::default(),
            jobs: None,
            cache_path: None,
            audit_queries: false,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.stopping().validate()?;
        self.optimizer()?.validate()?;
        self.backend.validate()
    }

    pub fn stopping(&self) -> StoppingCriteria {
        StoppingCriteria {
            max_depth: self.depth,
            min_node_size: self.min_node_size,
            gini_threshold: self.gini_threshold,
        }
    }

    pub fn optimizer(&self) -> Result<OptimizerConfig> {
        let templates = match &self.templates_dir {
            Some(dir) => Templates::from_dir(dir)?,
            None => Templates::default(),
        };
        Ok(OptimizerConfig {
            steps: self.steps,
            sample_cap: self.sample_cap,
            example_char_cap: self.example_char_cap,
            constraints: PromptConstraints {
                max_logical_operators: self.max_logical_operators,
                ..PromptConstraints::default()
            },
            criterion: self.criterion,
            step_max_attempts: self.step_max_attempts,
            evaluate_invalid: self.evaluate_invalid,
            initial_prompt: self.initial_prompt.clone(),
            templates,
        })
    }

    /// Builds the gateway for this run. The audit log, when enabled, lands
    /// in the output directory as `queries.jsonl`.
    pub fn gateway(&self, out_dir: &Path) -> Result<Gateway> {
        let mut gateway = Gateway::from_config(&self.backend)?.with_exec_mode(self.mode);
        if let Some(path) = &self.cache_path {
            gateway = gateway.with_cache(QueryCache::open(path)?);
        }
        if self.audit_queries {
            gateway = gateway.with_audit_log(&out_dir.join("queries.jsonl"))?;
        }
        Ok(gateway)
    }

    pub fn require_train(&self) -> Result<&Path> {
        self.train_path
            .as_deref()
            .ok_or_else(|| Error::Config("a training dataset is required (set train_path or pass --train)".to_string()))
    }

    /// Serialises the resolved configuration as pretty JSON.
    pub fn to_resolved_json(&self) -> Result<String> {
        let mut out = serde_json::to_string_pretty(self)?;
        out.push('\n');
        Ok(out)
    }
}
