//! Pipeline stages and the end-to-end run.
//!
//! Seed schedule, all derived from the master seed `m` with
//! [`seed::derive`] and [`seed::tag`]:
//!
//! * learning run: `derive(m, tag("learn"))`
//! * training suite for `(strategy, n_train, run)`:
//!   `derive(derive(derive(m, tag("suite")), tag(strategy)), n_train << 16 | run)`
//! * validation suite: `derive(m, tag("validation"))`
//! * orientation signal of test `k` of a suite with seed `s`: `derive(s, k)`
//! * network initialization and minibatch order: `derive(s, tag("init"))`

use std::collections::HashSet;
use std::path::Path;

use mbtlearn_core::dataset::{self, DatasetError, NormalizationStats, RawSequencePair};
use mbtlearn_core::eval::{self, Outcome, Scores};
use mbtlearn_core::harness::{ConcreteTrace, Harness, MachineSul, Sul};
use mbtlearn_core::kv::KvMap;
use mbtlearn_core::learner::{self, Learned, LearnerBudget};
use mbtlearn_core::mealy::{self, MealyMachine};
use mbtlearn_core::rnn::{self, RnnParams, Sequence, TrainConfig};
use mbtlearn_core::seed;
use mbtlearn_core::testgen::{self, Strategy, StrategyConfig};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::formats::{self, ResultRow};
use crate::{write_text, Error, Result};

pub fn learn_seed(master: u64) -> u64 {
    seed::derive(master, seed::tag("learn"))
}

pub fn suite_seed(master: u64, strategy: Strategy, n_train: usize, run: usize) -> u64 {
    let s = seed::derive(
        seed::derive(master, seed::tag("suite")),
        seed::tag(strategy.name()),
    );
    seed::derive(s, ((n_train as u64) << 16) | run as u64)
}

pub fn validation_seed(master: u64) -> u64 {
    seed::derive(master, seed::tag("validation"))
}

pub fn curve_seed(suite_seed: u64, test: usize) -> u64 {
    seed::derive(suite_seed, test as u64)
}

pub fn init_seed(suite_seed: u64) -> u64 {
    seed::derive(suite_seed, seed::tag("init"))
}

fn plant_harness(cfg: &PipelineConfig, cached: bool) -> Result<Harness> {
    if cfg.teacher.is_some() {
        return Err(Error::Usage(String::from(
            "this stage needs the plant; the configuration names a teacher machine",
        )));
    }
    Ok(Harness::new(cfg.plant, cfg.alphabet.clone(), cached)?)
}

fn crash_output(cfg: &PipelineConfig) -> Option<usize> {
    cfg.symbols().1.iter().position(|o| *o == cfg.target_label)
}

/// Violation symbols latched by the mapper; a teacher machine declares none.
fn absorbing(cfg: &PipelineConfig) -> Vec<usize> {
    match cfg.teacher {
        Some(_) => Vec::new(),
        None => cfg.alphabet.violations().to_vec(),
    }
}

/// Runs `f` on the configured system under learning (plant or teacher).
fn with_sul<T>(cfg: &PipelineConfig, f: impl FnOnce(&mut dyn SulAccess) -> Result<T>) -> Result<T> {
    match &cfg.teacher {
        Some(m) => f(&mut MachineSul::new(m.clone(), true)),
        None => f(&mut plant_harness(cfg, true)?),
    }
}

/// Object-safe entry points used by [`with_sul`].
trait SulAccess {
    fn learn(
        &mut self,
        budget: &LearnerBudget,
        inputs: &[String],
        outputs: &[String],
    ) -> Result<Learned>;
    fn learning_based(
        &mut self,
        cfg: &StrategyConfig,
        inputs: &[String],
        outputs: &[String],
        eq: usize,
        collision: Option<usize>,
        absorbing: &[usize],
    ) -> Result<Vec<Vec<usize>>>;
}

impl<S: Sul> SulAccess for S {
    fn learn(
        &mut self,
        budget: &LearnerBudget,
        inputs: &[String],
        outputs: &[String],
    ) -> Result<Learned> {
        Ok(learner::learn_with_testing(self, budget, inputs, outputs)?)
    }

    fn learning_based(
        &mut self,
        cfg: &StrategyConfig,
        inputs: &[String],
        outputs: &[String],
        eq: usize,
        collision: Option<usize>,
        absorbing: &[usize],
    ) -> Result<Vec<Vec<usize>>> {
        Ok(testgen::gen_learning_based(cfg, self, inputs, outputs, eq, collision, absorbing)?.0)
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub learned: Learned,
    /// Against the teacher machine, when one is configured.
    pub equivalent: Option<bool>,
    pub seed: u64,
}

pub fn learn(cfg: &PipelineConfig) -> Result<LearnOutcome> {
    let (inputs, outputs) = cfg.symbols();
    let seed = learn_seed(cfg.seed);
    let budget = LearnerBudget {
        max_total_tests: cfg.budget,
        eq_tests_per_round: cfg.eq_tests_per_round,
        generation_batch: cfg.learner_generation_batch,
        seed,
        collision_output: crash_output(cfg),
        absorbing: absorbing(cfg),
    };
    let learned = with_sul(cfg, |s| s.learn(&budget, &inputs, &outputs))?;
    let equivalent = match &cfg.teacher {
        Some(t) => Some(
            mealy::equivalent(t, &learned.hypothesis)
                .map_err(|e| Error::Config(e.to_string()))?
                .is_none(),
        ),
        None => None,
    };
    Ok(LearnOutcome {
        learned,
        equivalent,
        seed,
    })
}

/// Writes `hypothesis.txt`, `hypothesis.dot`, `learnlog.csv` and `learn.kv`.
pub fn write_learn(dir: &Path, o: &LearnOutcome) -> Result<()> {
    let h = &o.learned.hypothesis;
    write_text(&dir.join("hypothesis.txt"), &formats::render_mealy(h))?;
    write_text(&dir.join("hypothesis.dot"), &h.to_dot())?;
    write_text(
        &dir.join("learnlog.csv"),
        &formats::render_learn_log(&o.learned.log),
    )?;
    let mut kv = KvMap::default();
    kv.insert("seed", o.seed.to_string());
    kv.insert("states", h.num_states().to_string());
    kv.insert("rounds", o.learned.log.rounds.len().to_string());
    kv.insert("total_tests", o.learned.log.total_tests.to_string());
    kv.insert("collisions", o.learned.log.collisions.to_string());
    kv.insert("counterexamples", o.learned.log.counterexamples.to_string());
    kv.insert("complete", o.learned.log.complete.to_string());
    if let Some(e) = o.equivalent {
        kv.insert("equivalent_to_teacher", e.to_string());
    }
    write_text(&dir.join("learn.kv"), &kv.render())
}

pub fn strategy_config(
    cfg: &PipelineConfig,
    strategy: Strategy,
    n_train: usize,
    seed: u64,
) -> StrategyConfig {
    StrategyConfig {
        strategy,
        n_train,
        l_max: cfg.l_max,
        target_label: crash_output(cfg),
        generation_batch: cfg.tc_generation_batch,
        seed,
    }
}

/// Generates one suite. Transition-coverage and output-directed need `model`.
pub fn generate(
    cfg: &PipelineConfig,
    strategy: Strategy,
    n_train: usize,
    seed: u64,
    model: Option<&MealyMachine>,
) -> Result<Vec<Vec<usize>>> {
    let sc = strategy_config(cfg, strategy, n_train, seed);
    let (inputs, outputs) = cfg.symbols();
    let need_model =
        || model.ok_or_else(|| Error::Usage(format!("strategy {strategy} needs a learned model")));
    Ok(match strategy {
        Strategy::Random => testgen::gen_random(&sc, inputs.len())?,
        Strategy::TransitionCoverage => testgen::gen_transition_coverage(&sc, need_model()?)?,
        Strategy::OutputDirected => testgen::gen_output_directed(&sc, need_model()?)?,
        Strategy::LearningBased => {
            let collision = crash_output(cfg);
            let absorbing = absorbing(cfg);
            with_sul(cfg, |s| {
                s.learning_based(
                    &sc,
                    &inputs,
                    &outputs,
                    cfg.eq_tests_per_round,
                    collision,
                    &absorbing,
                )
            })?
        }
    })
}

pub fn suite_meta(strategy: &str, n_train: usize, seed: u64) -> KvMap {
    let mut kv = KvMap::default();
    kv.insert("strategy", strategy.to_string());
    kv.insert("n_train", n_train.to_string());
    kv.insert("seed", seed.to_string());
    kv
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    /// Present when traces were requested.
    pub traces: Vec<ConcreteTrace>,
    pub pairs: Vec<RawSequencePair>,
    /// Tests that reached the target output in the abstract run.
    pub target_hits: usize,
    /// Tests whose usable trace is longer than the sequence length.
    pub skipped: usize,
}

/// Executes every test on a fresh plant and builds the dataset. Tests that do
/// not fit into the sequence length are skipped and counted.
pub fn run_suite(
    cfg: &PipelineConfig,
    tests: &[Vec<usize>],
    suite_seed: u64,
    keep_traces: bool,
) -> Result<SuiteRun> {
    let mut h = plant_harness(cfg, false)?;
    let target = crash_output(cfg);
    let mut run = SuiteRun {
        traces: Vec::new(),
        pairs: Vec::new(),
        target_hits: 0,
        skipped: 0,
    };
    for (k, test) in tests.iter().enumerate() {
        let tr = h.execute_traced(test, curve_seed(suite_seed, k))?;
        if target.is_some_and(|t| tr.outputs.contains(&t)) {
            run.target_hits += 1;
        }
        match dataset::build_pair(&tr, cfg.seq_len, &cfg.plant) {
            Ok(p) => run.pairs.push(p),
            Err(DatasetError::TooLong { .. }) => run.skipped += 1,
            Err(e) => return Err(e.into()),
        }
        if keep_traces {
            run.traces.push(tr);
        }
    }
    Ok(run)
}

pub fn sequences(pairs: &[RawSequencePair]) -> Vec<Sequence> {
    pairs
        .iter()
        .map(|p| {
            let (x, t) = p.flat();
            Sequence { x, t }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub stats: NormalizationStats,
    pub params: RnnParams,
    pub losses: Vec<f64>,
    pub scores: Scores,
    pub crash_time_errors: Vec<usize>,
}

/// Fits normalization on `train`, trains one network and scores its crash
/// predictions on `val`.
pub fn train_eval(
    train: &[RawSequencePair],
    val: &[RawSequencePair],
    tc: &TrainConfig,
    threshold: f64,
) -> Result<EvalRun> {
    let stats = NormalizationStats::fit(train)?;
    let data = sequences(&stats.apply_all(train));
    let trained = rnn::train(&data, 2, 3, tc)?;
    let mut truth = Vec::with_capacity(val.len());
    let mut predicted = Vec::with_capacity(val.len());
    for p in val {
        let (x, _) = stats.apply(p).flat();
        let pred = rnn::predict_crash(&trained.params, &x, &stats, threshold)?;
        truth.push(Outcome {
            positive: p.label_crash,
            crash_time: p.crash_time,
        });
        predicted.push(Outcome {
            positive: pred.positive,
            crash_time: pred.crash_time,
        });
    }
    let e = eval::evaluate(&truth, &predicted)?;
    Ok(EvalRun {
        stats,
        params: trained.params,
        losses: trained.losses,
        scores: e.scores,
        crash_time_errors: e.crash_time_errors,
    })
}

/// Writes the weights, loss curve and normalization statistics of one run.
pub fn write_model(dir: &Path, name: &str, run: &EvalRun) -> Result<()> {
    write_text(
        &dir.join(format!("{name}.weights")),
        &formats::render_weights(&run.params),
    )?;
    write_text(
        &dir.join(format!("{name}.loss.csv")),
        &formats::render_losses(&run.losses),
    )?;
    write_text(
        &dir.join(format!("{name}.stats")),
        &run.stats.to_kv().render(),
    )
}

/// Mean and sample standard deviation per `(strategy, n_train)`, in order of
/// first appearance. Undefined metrics are left out of their average.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: String,
    pub n_train: usize,
    pub runs: usize,
    pub ce: (f64, f64),
    pub tpr: Option<(f64, f64)>,
    pub ppv: Option<(f64, f64)>,
    pub f1: Option<(f64, f64)>,
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

pub fn report(rows: &[ResultRow]) -> Vec<ReportRow> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let k = (r.strategy.clone(), r.n_train);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(strategy, n_train)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.strategy == strategy && r.n_train == n_train)
                .collect();
            let pick = |f: fn(&Scores) -> Option<f64>| {
                mean_std(
                    &group
                        .iter()
                        .filter_map(|r| f(&r.scores))
                        .collect::<Vec<_>>(),
                )
            };
            ReportRow {
                runs: group.len(),
                ce: pick(|s| Some(s.ce)).expect("nonempty group"),
                tpr: pick(|s| s.tpr),
                ppv: pick(|s| s.ppv),
                f1: pick(|s| s.f1),
                strategy,
                n_train,
            }
        })
        .collect()
}

pub fn render_report(rows: &[ReportRow]) -> String {
    let mut s = String::from(
        "strategy,n_train,runs,ce_mean,ce_std,tpr_mean,tpr_std,ppv_mean,ppv_std,f1_mean,f1_std\n",
    );
    let pair = |p: Option<(f64, f64)>| match p {
        Some((m, d)) => format!("{},{}", formats::num(m), formats::num(d)),
        None => String::from("NA,NA"),
    };
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.strategy,
            r.n_train,
            r.runs,
            pair(Some(r.ce)),
            pair(r.tpr),
            pair(r.ppv),
            pair(r.f1)
        ));
    }
    s
}

/// Human-readable comparison table.
pub fn format_report(rows: &[ReportRow]) -> String {
    let cell = |p: Option<(f64, f64)>, scale: f64| match p {
        Some((m, d)) => format!("{:>7.3} ± {:<6.3}", m * scale, d * scale),
        None => format!("{:>16}", "n/a"),
    };
    let mut s = format!(
        "{:<20} {:>8} {:>4}  {:>16} {:>16} {:>16} {:>16}\n",
        "strategy", "n_train", "runs", "CE %", "TPR", "PPV", "F1"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<20} {:>8} {:>4}  {} {} {} {}\n",
            r.strategy,
            r.n_train,
            r.runs,
            cell(Some(r.ce), 1.0),
            cell(r.tpr, 1.0),
            cell(r.ppv, 1.0),
            cell(r.f1, 1.0)
        ));
    }
    s
}

#[derive(Debug, Clone)]
pub struct DatasetSummary {
    pub name: String,
    pub tests: usize,
    pub pairs: usize,
    pub skipped: usize,
    pub positives: usize,
    pub target_hits: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub learn: LearnOutcome,
    pub datasets: Vec<DatasetSummary>,
    pub validation_removed: usize,
    pub results: Vec<ResultRow>,
    pub report: Vec<ReportRow>,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

struct Job {
    name: String,
    strategy: Strategy,
    n_train: usize,
    seed: u64,
    tests: Vec<Vec<usize>>,
}

/// All stages: learn, generate every training suite and the validation
/// suite, execute them, train and evaluate one network per training suite,
/// and write the result tables.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    plant_harness(cfg, false)?;
    let out = &cfg.out;
    let learned = learn(cfg)?;
    write_learn(out, &learned)?;
    let model = &learned.learned.hypothesis;
    let (inputs, _) = cfg.symbols();

    let mut jobs = Vec::new();
    for &strategy in &cfg.strategies {
        for &n in &cfg.n_train {
            for run in 0..cfg.runs {
                let seed = suite_seed(cfg.seed, strategy, n, run);
                let tests = generate(cfg, strategy, n, seed, Some(model))?;
                let name = format!("{strategy}-{n}-{run}");
                let meta = suite_meta(strategy.name(), n, seed);
                write_text(
                    &out.join("suites").join(format!("{name}.suite")),
                    &formats::render_suite(&meta, &tests, &inputs),
                )?;
                jobs.push(Job {
                    name,
                    strategy,
                    n_train: n,
                    seed,
                    tests,
                });
            }
        }
    }
    let vseed = validation_seed(cfg.seed);
    let seen: HashSet<&Vec<usize>> = jobs.iter().flat_map(|j| j.tests.iter()).collect();
    let raw_val = generate(
        cfg,
        Strategy::OutputDirected,
        cfg.validation_size,
        vseed,
        Some(model),
    )?;
    let val_tests: Vec<Vec<usize>> = raw_val
        .iter()
        .filter(|t| !seen.contains(t))
        .cloned()
        .collect();
    let validation_removed = raw_val.len() - val_tests.len();
    let vmeta = suite_meta("validation", val_tests.len(), vseed);
    write_text(
        &out.join("suites").join("validation.suite"),
        &formats::render_suite(&vmeta, &val_tests, &inputs),
    )?;

    let pool = pool(cfg.workers)?;
    let mut named: Vec<(String, &[Vec<usize>], u64)> =
        vec![(String::from("validation"), &val_tests, vseed)];
    named.extend(
        jobs.iter()
            .map(|j| (j.name.clone(), j.tests.as_slice(), j.seed)),
    );
    let runs: Vec<SuiteRun> = pool.install(|| {
        named
            .par_iter()
            .map(|(_, tests, seed)| run_suite(cfg, tests, *seed, cfg.write_traces))
            .collect::<Result<_>>()
    })?;
    let mut datasets = Vec::new();
    for ((name, tests, _), run) in named.iter().zip(&runs) {
        write_text(
            &out.join("datasets").join(format!("{name}.csv")),
            &formats::render_dataset(&run.pairs),
        )?;
        if cfg.write_traces {
            write_text(
                &out.join("traces").join(format!("{name}.csv")),
                &formats::render_traces(&run.traces, &cfg.alphabet),
            )?;
        }
        datasets.push(DatasetSummary {
            name: name.clone(),
            tests: tests.len(),
            pairs: run.pairs.len(),
            skipped: run.skipped,
            positives: run.pairs.iter().filter(|p| p.label_crash).count(),
            target_hits: run.target_hits,
        });
    }
    write_text(&out.join("datasets.csv"), &render_datasets(&datasets))?;
    let val = &runs[0].pairs;
    if val.is_empty() {
        return Err(Error::Dataset(DatasetError::Empty));
    }

    let threshold = cfg.plant.truck_length;
    let evals: Vec<EvalRun> = pool.install(|| {
        jobs.par_iter()
            .zip(&runs[1..])
            .map(|(j, run)| {
                let tc = TrainConfig {
                    seed: init_seed(j.seed),
                    ..cfg.train
                };
                train_eval(&run.pairs, val, &tc, threshold)
            })
            .collect::<Result<_>>()
    })?;
    let mut results = Vec::new();
    let mut cdf_groups: Vec<(String, usize, Vec<usize>)> = Vec::new();
    for (j, e) in jobs.iter().zip(&evals) {
        write_model(&out.join("models"), &j.name, e)?;
        results.push(ResultRow {
            strategy: j.strategy.name().to_string(),
            n_train: j.n_train,
            seed: j.seed,
            scores: e.scores,
        });
        match cdf_groups
            .iter_mut()
            .find(|(s, n, _)| s == j.strategy.name() && *n == j.n_train)
        {
            Some(g) => g.2.extend(&e.crash_time_errors),
            None => cdf_groups.push((
                j.strategy.name().to_string(),
                j.n_train,
                e.crash_time_errors.clone(),
            )),
        }
    }
    let cdf: Vec<(String, usize, Vec<(usize, f64)>)> = cdf_groups
        .into_iter()
        .map(|(s, n, errs)| (s, n, eval::cdf(&errs)))
        .collect();
    write_text(&out.join("results.csv"), &formats::render_results(&results))?;
    write_text(&out.join("cdf.csv"), &formats::render_cdf(&cdf))?;
    let report = report(&results);
    write_text(&out.join("report.csv"), &render_report(&report))?;
    Ok(PipelineSummary {
        learn: learned,
        datasets,
        validation_removed,
        results,
        report,
    })
}

pub fn render_datasets(rows: &[DatasetSummary]) -> String {
    let mut s = String::from("name,tests,pairs,skipped,positives,target_hits\n");
    for d in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.name, d.tests, d.pairs, d.skipped, d.positives, d.target_hits
        ));
    }
    s
}
