//! `act`: train, inspect and run agentic classification trees.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use act_core::corpus::SplitSpec;
use act_core::exec::ExecMode;
use act_core::impurity::SplitCriterion;
use act_core::{Error, ErrorClass, Result};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "act",
    version,
    about = "Decision trees over text whose split questions are written and answered by a language model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources shared by the training-style commands. Precedence:
/// CLI flags over config file over built-in defaults.
#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training dataset (JSONL or CSV)
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation dataset
    #[arg(long)]
    val: Option<PathBuf>,
    /// Test dataset
    #[arg(long)]
    test: Option<PathBuf>,
    /// Maximum tree depth
    #[arg(long)]
    depth: Option<usize>,
    /// Refinement steps per node
    #[arg(long)]
    steps: Option<usize>,
    /// Feedback sample cap per group
    #[arg(long)]
    sample_cap: Option<usize>,
    /// Logical-operator budget for candidate questions
    #[arg(long)]
    max_operators: Option<u32>,
    /// Minimum examples for a node to be split
    #[arg(long)]
    min_node_size: Option<usize>,
    /// Gini impurity at or below which a node becomes a leaf
    #[arg(long)]
    gini_threshold: Option<f64>,
    /// Split scoring criterion: gini or info_gain_ratio
    #[arg(long)]
    criterion: Option<SplitCriterion>,
    /// Base random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Batch execution mode: parallel or sequential
    #[arg(long)]
    mode: Option<ExecMode>,
    /// Worker thread cap for parallel execution
    #[arg(long)]
    jobs: Option<usize>,
    /// Persistent query cache file (JSONL)
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Mirror every backend query to queries.jsonl in the output directory
    #[arg(long)]
    audit: bool,
    /// Output directory (default: runs/<command>-<unix time>)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.train {
            cfg.train_path = Some(v.clone());
        }
        if let Some(v) = &self.val {
            cfg.val_path = Some(v.clone());
        }
        if let Some(v) = &self.test {
            cfg.test_path = Some(v.clone());
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.sample_cap {
            cfg.sample_cap = v;
        }
        if let Some(v) = self.max_operators {
            cfg.max_logical_operators = v;
        }
        if let Some(v) = self.min_node_size {
            cfg.min_node_size = v;
        }
        if let Some(v) = self.gini_threshold {
            cfg.gini_threshold = v;
        }
        if let Some(v) = self.criterion {
            cfg.criterion = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = Some(v);
        }
        if let Some(v) = &self.cache {
            cfg.cache_path = Some(v.clone());
        }
        if self.audit {
            cfg.audit_queries = true;
        }
        Ok(cfg)
    }

    fn out_dir(&self, command: &str) -> PathBuf {
        match &self.out {
            Some(dir) => dir.clone(),
            None => {
                let stamp = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                PathBuf::from("runs").join(format!("{command}-{stamp}"))
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a tree and write tree.json, tree.dot, traces and metrics
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a stored tree on a dataset
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Tree document produced by `train`
        #[arg(long)]
        tree: PathBuf,
        /// Dataset to score
        #[arg(long)]
        data: PathBuf,
        /// Also write one decision path per example to paths.jsonl
        #[arg(long)]
        paths: bool,
    },
    /// Route one text through a stored tree and print its decision path
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        tree: PathBuf,
        /// Text to classify
        #[arg(long, conflicts_with = "file")]
        text: Option<String>,
        /// File whose contents are classified
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Train one tree per (depth, steps) cell and write ablation.csv
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Depth values, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        depths: Vec<usize>,
        /// Refinement step counts, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        step_grid: Vec<usize>,
    },
    /// Fit the TF-IDF + CART reference classifier
    Baseline {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render a stored tree as Graphviz DOT
    ExportDot {
        /// Tree document produced by `train`
        #[arg(long)]
        tree: PathBuf,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stratified train/val/test split of one dataset
    Split {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset to split
        #[arg(long)]
        data: PathBuf,
        /// Examples in the training part
        #[arg(long, default_value_t = 0)]
        train_size: usize,
        /// Examples in the validation part
        #[arg(long, default_value_t = 0)]
        val_size: usize,
        /// Examples in the test part
        #[arg(long, default_value_t = 0)]
        test_size: usize,
        /// Force an exact 50/50 class balance in every part
        #[arg(long)]
        balanced: bool,
    },
}

fn configure_jobs(cfg: &RunConfig) -> Result<()> {
    let Some(jobs) = cfg.jobs else {
        return Ok(());
    };
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".to_string()));
    }
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
        Ok(())
    }
    #[cfg(not(feature = "parallel"))]
    {
        eprintln!("note: built without the `parallel` feature; --jobs has no effect");
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config } => {
            let cfg = config.resolve()?;
            configure_jobs(&cfg)?;
            commands::cmd_train(&cfg, &config.out_dir("train"))
        }
        Command::Evaluate {
            config,
            tree,
            data,
            paths,
        } => {
            let cfg = config.resolve()?;
            configure_jobs(&cfg)?;
            commands::cmd_evaluate(&cfg, &tree, &data, paths, &config.out_dir("evaluate"))
        }
        Command::Predict {
            config,
            tree,
            text,
            file,
        } => {
            let cfg = config.resolve()?;
            let text = match (text, file) {
                (Some(text), None) => text,
                (None, Some(path)) => std::fs::read_to_string(path)?,
                _ => {
                    return Err(Error::Config(
                        "predict needs exactly one of --text or --file".to_string(),
                    ))
                }
            };
            commands::cmd_predict(&cfg, &tree, &text)
        }
        Command::Ablate {
            config,
            depths,
            step_grid,
        } => {
            let cfg = config.resolve()?;
            configure_jobs(&cfg)?;
            commands::cmd_ablate(&cfg, &depths, &step_grid, &config.out_dir("ablate"))
        }
        Command::Baseline { config } => {
            let cfg = config.resolve()?;
            configure_jobs(&cfg)?;
            commands::cmd_baseline(&cfg, &config.out_dir("baseline"))
        }
        Command::ExportDot { tree, out } => commands::cmd_export_dot(&tree, out.as_deref()),
        Command::Split {
            config,
            data,
            train_size,
            val_size,
            test_size,
            balanced,
        } => {
            let cfg = config.resolve()?;
            let spec = SplitSpec {
                train: train_size,
                val: val_size,
                test: test_size,
                seed: cfg.seed,
                balanced,
            };
            commands::cmd_split(&cfg, &data, &spec, &config.out_dir("split"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Backend => 3,
                ErrorClass::Data => 4,
            })
        }
    }
}
