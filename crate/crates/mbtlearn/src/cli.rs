//! `mbtlearn` subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mbtlearn_core::eval;
use mbtlearn_core::seed;
use mbtlearn_core::testgen::Strategy;

use crate::config::PipelineConfig;
use crate::formats::{self, ResultRow};
use crate::pipeline::{self, DatasetSummary};
use crate::{read_text, write_text, Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "mbtlearn",
    version,
    about = "Learning-based testing and recurrent behavior models for a platooning plant"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Pipeline configuration file; shipped defaults when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory (overrides the configuration).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (overrides the configuration).
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a Mealy machine of the system with testing-based equivalence queries.
    Learn {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a test suite with one strategy.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "NAME")]
        strategy: String,
        /// Suite size; the first configured `n_train` when omitted.
        #[arg(long, value_name = "N")]
        n_train: Option<usize>,
        /// Learned model; defaults to `<out>/hypothesis.txt`.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Execute a suite on the plant, writing traces and the dataset.
    RunSuite {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        suite: PathBuf,
    },
    /// Train networks on one dataset and evaluate them on another.
    TrainEval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        train: PathBuf,
        #[arg(long, value_name = "CSV")]
        val: PathBuf,
        /// Label for the results table.
        #[arg(long, value_name = "NAME", default_value = "custom")]
        strategy: String,
        /// Number of networks; the configured `runs` when omitted.
        #[arg(long, value_name = "N")]
        runs: Option<usize>,
    },
    /// Run every stage end to end.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
    /// Aggregate `results.csv` files into a comparison table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Result files; `<out>/results.csv` when omitted.
        results: Vec<PathBuf>,
    },
}

fn load(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Error::Usage(String::from("--workers must be at least 1")));
        }
        cfg.workers = w;
    }
    Ok(cfg)
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    s.parse()
        .map_err(|e: mbtlearn_core::testgen::TestgenError| Error::Usage(e.to_string()))
}

fn load_model(path: &Path) -> Result<mbtlearn_core::MealyMachine> {
    formats::parse_mealy(&read_text(path)?).map_err(|m| Error::format(path, m))
}

fn load_dataset(path: &Path) -> Result<Vec<mbtlearn_core::dataset::RawSequencePair>> {
    formats::parse_dataset(&read_text(path)?).map_err(|m| Error::format(path, m))
}

/// Runs one parsed command, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Learn { common } => {
            let cfg = load(&common)?;
            let o = pipeline::learn(&cfg)?;
            pipeline::write_learn(&cfg.out, &o)?;
            let log = &o.learned.log;
            println!(
                "learned {} states in {} rounds with {} tests ({} collisions){}",
                o.learned.hypothesis.num_states(),
                log.rounds.len(),
                log.total_tests,
                log.collisions,
                match o.equivalent {
                    Some(true) => ", equivalent to the teacher",
                    Some(false) => ", NOT equivalent to the teacher",
                    None => "",
                }
            );
        }
        Command::Generate {
            common,
            strategy,
            n_train,
            model,
        } => {
            let cfg = load(&common)?;
            let strategy = parse_strategy(&strategy)?;
            let n = n_train.unwrap_or(cfg.n_train[0]);
            if n == 0 {
                return Err(Error::Usage(String::from("--n-train must be positive")));
            }
            let seed = pipeline::suite_seed(cfg.seed, strategy, n, 0);
            let model = if strategy.needs_model() {
                let path = model.unwrap_or_else(|| cfg.out.join("hypothesis.txt"));
                if !path.exists() {
                    return Err(Error::Usage(format!(
                        "strategy {strategy} needs a learned model; {} does not exist (run `learn` or pass --model)",
                        path.display()
                    )));
                }
                Some(load_model(&path)?)
            } else {
                None
            };
            let tests = pipeline::generate(&cfg, strategy, n, seed, model.as_ref())?;
            let (inputs, _) = cfg.symbols();
            let path = cfg.out.join(format!("{strategy}-{n}.suite"));
            write_text(
                &path,
                &formats::render_suite(
                    &pipeline::suite_meta(strategy.name(), n, seed),
                    &tests,
                    &inputs,
                ),
            )?;
            println!("wrote {} tests to {}", tests.len(), path.display());
        }
        Command::RunSuite { common, suite } => {
            let cfg = load(&common)?;
            let (inputs, _) = cfg.symbols();
            let (meta, tests) = formats::parse_suite(&read_text(&suite)?, &inputs)
                .map_err(|m| Error::format(&suite, m))?;
            let seed = meta
                .parse_or("seed", 0u64)
                .map_err(|e| Error::format(&suite, e))?;
            let run = pipeline::run_suite(&cfg, &tests, seed, true)?;
            let stem = suite
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("suite")
                .to_string();
            write_text(
                &cfg.out.join(format!("{stem}.traces.csv")),
                &formats::render_traces(&run.traces, &cfg.alphabet),
            )?;
            write_text(
                &cfg.out.join(format!("{stem}.csv")),
                &formats::render_dataset(&run.pairs),
            )?;
            let summary = DatasetSummary {
                name: stem,
                tests: tests.len(),
                pairs: run.pairs.len(),
                skipped: run.skipped,
                positives: run.pairs.iter().filter(|p| p.label_crash).count(),
                target_hits: run.target_hits,
            };
            print!("{}", pipeline::render_datasets(&[summary]));
        }
        Command::TrainEval {
            common,
            train,
            val,
            strategy,
            runs,
        } => {
            let cfg = load(&common)?;
            let train_pairs = load_dataset(&train)?;
            let val_pairs = load_dataset(&val)?;
            let runs = runs.unwrap_or(cfg.runs);
            let mut rows = Vec::new();
            let mut errors = Vec::new();
            for r in 0..runs {
                let run_seed = seed::derive(cfg.seed, r as u64);
                let tc = mbtlearn_core::rnn::TrainConfig {
                    seed: pipeline::init_seed(run_seed),
                    ..cfg.train
                };
                let e =
                    pipeline::train_eval(&train_pairs, &val_pairs, &tc, cfg.plant.truck_length)?;
                pipeline::write_model(&cfg.out.join("models"), &format!("{strategy}-{r}"), &e)?;
                rows.push(ResultRow {
                    strategy: strategy.clone(),
                    n_train: train_pairs.len(),
                    seed: run_seed,
                    scores: e.scores,
                });
                errors.extend(e.crash_time_errors);
            }
            write_text(
                &cfg.out.join("results.csv"),
                &formats::render_results(&rows),
            )?;
            let cdf = vec![(strategy, train_pairs.len(), eval::cdf(&errors))];
            write_text(&cfg.out.join("cdf.csv"), &formats::render_cdf(&cdf))?;
            let report = pipeline::report(&rows);
            write_text(
                &cfg.out.join("report.csv"),
                &pipeline::render_report(&report),
            )?;
            print!("{}", pipeline::format_report(&report));
        }
        Command::Pipeline { common } => {
            let cfg = load(&common)?;
            let s = pipeline::run_pipeline(&cfg)?;
            println!(
                "learned {} states with {} tests; validation {} tests ({} duplicates of training tests removed)",
                s.learn.learned.hypothesis.num_states(),
                s.learn.learned.log.total_tests,
                s.datasets[0].pairs,
                s.validation_removed
            );
            print!("{}", pipeline::format_report(&s.report));
        }
        Command::Report { common, results } => {
            let cfg = load(&common)?;
            let files = if results.is_empty() {
                vec![cfg.out.join("results.csv")]
            } else {
                results
            };
            let mut rows = Vec::new();
            for f in &files {
                rows.extend(
                    formats::parse_results(&read_text(f)?).map_err(|m| Error::format(f, m))?,
                );
            }
            let report = pipeline::report(&rows);
            write_text(
                &cfg.out.join("report.csv"),
                &pipeline::render_report(&report),
            )?;
            print!("{}", pipeline::format_report(&report));
        }
    }
    Ok(())
}
