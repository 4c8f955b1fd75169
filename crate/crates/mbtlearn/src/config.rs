//! Pipeline configuration (`key = value` file).
//!
//! Every key is optional; missing keys take the desk-scale defaults below.
//! Paths are resolved relative to the configuration file.
//!
//! | key | default |
//! |-----|---------|
//! | `plant` | shipped plant parameters |
//! | `alphabet` | shipped abstract alphabet |
//! | `teacher` | none; a Mealy machine file that replaces the plant |
//! | `seed` | 1 |
//! | `out` | `out` |
//! | `workers` | 1 |
//! | `learner.budget` | 5000 |
//! | `learner.eq_tests_per_round` | 200 |
//! | `learner.generation_batch` | 1000 |
//! | `strategies` | `random, learning-based, transition-coverage, output-directed` |
//! | `n_train` | `100, 500` |
//! | `runs` | 5 |
//! | `l_max` | 10 |
//! | `target_label` | `crash` |
//! | `tc.generation_batch` | 1000 |
//! | `dataset.length` | 64 |
//! | `validation.size` | 1000 |
//! | `train.mode` | `lstm` |
//! | `train.hidden` | 32 |
//! | `train.epochs` | 100 |
//! | `train.learning_rate` | 0.001 |
//! | `train.minibatch` | `auto` |
//! | `train.init_scale` | 0.08 |
//! | `write_traces` | false |

use std::path::{Path, PathBuf};

use mbtlearn_core::harness::AbstractAlphabet;
use mbtlearn_core::kv::{split_list, KvMap};
use mbtlearn_core::mealy::MealyMachine;
use mbtlearn_core::plant::PlantConfig;
use mbtlearn_core::rnn::TrainConfig;
use mbtlearn_core::testgen::Strategy;

use crate::{formats, read_text, Error, Result};

const KNOWN: &[&str] = &[
    "plant",
    "alphabet",
    "teacher",
    "seed",
    "out",
    "workers",
    "learner.",
    "strategies",
    "n_train",
    "runs",
    "l_max",
    "target_label",
    "tc.generation_batch",
    "dataset.length",
    "validation.size",
    "train.",
    "write_traces",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub plant: PlantConfig,
    pub alphabet: AbstractAlphabet,
    pub teacher: Option<MealyMachine>,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub budget: u64,
    pub eq_tests_per_round: usize,
    pub learner_generation_batch: usize,
    pub strategies: Vec<Strategy>,
    pub n_train: Vec<usize>,
    pub runs: usize,
    pub l_max: usize,
    pub target_label: String,
    pub tc_generation_batch: usize,
    pub seq_len: usize,
    pub validation_size: usize,
    pub train: TrainConfig,
    pub write_traces: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            plant: PlantConfig::default(),
            alphabet: AbstractAlphabet::default(),
            teacher: None,
            seed: 1,
            out: PathBuf::from("out"),
            workers: 1,
            budget: 5000,
            eq_tests_per_round: 200,
            learner_generation_batch: 1000,
            strategies: Strategy::ALL.to_vec(),
            n_train: vec![100, 500],
            runs: 5,
            l_max: 10,
            target_label: String::from("crash"),
            tc_generation_batch: 1000,
            seq_len: 64,
            validation_size: 1000,
            train: TrainConfig::default(),
            write_traces: false,
        }
    }
}

fn cfg_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path).map_err(|e| Error::Config(e.to_string()))?;
        let kv =
            KvMap::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_kv(&kv, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_kv(kv: &KvMap, base: &Path) -> Result<Self> {
        kv.check_known(KNOWN).map_err(cfg_err)?;
        let d = Self::default();
        let resolve = |key: &str| kv.get(key).map(|p| base.join(p));
        let load_kv = |p: &Path| -> Result<KvMap> {
            let text = read_text(p).map_err(cfg_err)?;
            KvMap::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        };
        let plant = match resolve("plant") {
            Some(p) => PlantConfig::from_kv(&load_kv(&p)?)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => d.plant,
        };
        let alphabet = match resolve("alphabet") {
            Some(p) => AbstractAlphabet::from_kv(&load_kv(&p)?)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => d.alphabet,
        };
        let teacher = match resolve("teacher") {
            Some(p) => Some(
                formats::parse_mealy(&read_text(&p).map_err(cfg_err)?)
                    .map_err(|m| Error::format(&p, m))?,
            ),
            None => None,
        };
        let get = |key: &str, default: String| kv.get(key).map(str::to_string).unwrap_or(default);
        let strategies = split_list(&get(
            "strategies",
            "random, learning-based, transition-coverage, output-directed".into(),
        ))
        .iter()
        .map(|s| s.parse::<Strategy>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(cfg_err)?;
        let n_train = split_list(&get("n_train", "100, 500".into()))
            .iter()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad n_train entry `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let minibatch = match kv.get("train.minibatch") {
            None | Some("auto") => None,
            Some(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad train.minibatch `{v}`")))?,
            ),
        };
        let mode = match kv.get("train.mode") {
            Some(m) => m.parse().map_err(cfg_err)?,
            None => d.train.mode,
        };
        let train = TrainConfig {
            mode,
            hidden: kv
                .parse_or("train.hidden", d.train.hidden)
                .map_err(cfg_err)?,
            learning_rate: kv
                .parse_or("train.learning_rate", d.train.learning_rate)
                .map_err(cfg_err)?,
            epochs: kv
                .parse_or("train.epochs", d.train.epochs)
                .map_err(cfg_err)?,
            minibatch,
            init_scale: kv
                .parse_or("train.init_scale", d.train.init_scale)
                .map_err(cfg_err)?,
            ..d.train
        };
        let cfg = Self {
            plant,
            alphabet,
            teacher,
            seed: kv.parse_or("seed", d.seed).map_err(cfg_err)?,
            out: resolve("out").unwrap_or(d.out),
            workers: kv.parse_or("workers", d.workers).map_err(cfg_err)?,
            budget: kv.parse_or("learner.budget", d.budget).map_err(cfg_err)?,
            eq_tests_per_round: kv
                .parse_or("learner.eq_tests_per_round", d.eq_tests_per_round)
                .map_err(cfg_err)?,
            learner_generation_batch: kv
                .parse_or("learner.generation_batch", d.learner_generation_batch)
                .map_err(cfg_err)?,
            strategies,
            n_train,
            runs: kv.parse_or("runs", d.runs).map_err(cfg_err)?,
            l_max: kv.parse_or("l_max", d.l_max).map_err(cfg_err)?,
            target_label: get("target_label", d.target_label),
            tc_generation_batch: kv
                .parse_or("tc.generation_batch", d.tc_generation_batch)
                .map_err(cfg_err)?,
            seq_len: kv.parse_or("dataset.length", d.seq_len).map_err(cfg_err)?,
            validation_size: kv
                .parse_or("validation.size", d.validation_size)
                .map_err(cfg_err)?,
            train,
            write_traces: kv
                .parse_or("write_traces", d.write_traces)
                .map_err(cfg_err)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.budget == 0 {
            return bad("learner.budget must be positive");
        }
        if self.n_train.is_empty() || self.n_train.contains(&0) {
            return bad("n_train needs positive entries");
        }
        if self.runs == 0 || self.l_max == 0 || self.seq_len == 0 || self.workers == 0 {
            return bad("runs, l_max, dataset.length and workers must be positive");
        }
        if self.teacher.is_none() && self.alphabet.output_index(&self.target_label).is_none() {
            return Err(Error::Config(format!(
                "target_label `{}` is not an output symbol",
                self.target_label
            )));
        }
        self.train.validate().map_err(cfg_err)
    }

    /// Input and output names of the system under learning.
    pub fn symbols(&self) -> (Vec<String>, Vec<String>) {
        match &self.teacher {
            Some(m) => (m.inputs().to_vec(), m.outputs().to_vec()),
            None => (
                self.alphabet.inputs().to_vec(),
                self.alphabet.outputs().to_vec(),
            ),
        }
    }
}
