//! Test-suite generation strategies.
//!
//! All generators are pure functions of their configuration, the model and
//! the seed.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng as _;

use crate::harness::Sul;
use crate::learner::{self, LearnError, Learned, LearnerBudget};
use crate::mealy::MealyMachine;
use crate::seed::{self, Rng};

/// Continue probability of transition-coverage random walks.
pub const WALK_CONTINUE: f64 = 0.95;
/// Walk length cap, in multiples of the model's state count.
pub const WALK_CAP_FACTOR: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TestgenError {
    #[error("no transition of the model emits the target label")]
    UnreachableLabel,
    #[error("invalid strategy configuration: {0}")]
    Config(String),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    Random,
    LearningBased,
    TransitionCoverage,
    OutputDirected,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Random,
        Strategy::LearningBased,
        Strategy::TransitionCoverage,
        Strategy::OutputDirected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::LearningBased => "learning-based",
            Strategy::TransitionCoverage => "transition-coverage",
            Strategy::OutputDirected => "output-directed",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(
            self,
            Strategy::TransitionCoverage | Strategy::OutputDirected
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = TestgenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| TestgenError::UnknownStrategy(String::from(s)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub n_train: usize,
    pub l_max: usize,
    /// Output index targeted by output-directed generation.
    pub target_label: Option<usize>,
    /// Random walks per transition-coverage generation phase.
    pub generation_batch: usize,
    pub seed: u64,
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), TestgenError> {
        if self.n_train == 0 {
            return Err(TestgenError::Config(String::from(
                "n_train must be positive",
            )));
        }
        if self.l_max == 0 {
            return Err(TestgenError::Config(String::from(
                "l_max must be at least 1",
            )));
        }
        if self.generation_batch == 0 {
            return Err(TestgenError::Config(String::from(
                "generation_batch must be positive",
            )));
        }
        if self.strategy == Strategy::OutputDirected && self.target_label.is_none() {
            return Err(TestgenError::Config(String::from(
                "output-directed generation needs a target label",
            )));
        }
        Ok(())
    }
}

/// Uniform random tests: length uniform on `[1, l_max]`, symbols uniform.
pub fn gen_random(
    cfg: &StrategyConfig,
    num_inputs: usize,
) -> Result<Vec<Vec<usize>>, TestgenError> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed);
    Ok((0..cfg.n_train)
        .map(|_| {
            let len = rng.gen_range(1..=cfg.l_max);
            random_sequence(&mut rng, num_inputs, len)
        })
        .collect())
}

fn random_sequence(rng: &mut Rng, num_inputs: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(0..num_inputs)).collect()
}

/// Random walk from the initial state: one step, then continue with
/// probability [`WALK_CONTINUE`] up to `4 * |Q|` steps.
pub fn random_walk(model: &MealyMachine, rng: &mut Rng) -> Vec<usize> {
    let cap = WALK_CAP_FACTOR * model.num_states();
    let mut walk = vec![rng.gen_range(0..model.num_inputs())];
    while walk.len() < cap && rng.gen_bool(WALK_CONTINUE) {
        walk.push(rng.gen_range(0..model.num_inputs()));
    }
    walk
}

/// Distinct transitions `q * |I| + i` of `model` exercised by `word`.
pub fn covered_transitions(model: &MealyMachine, word: &[usize]) -> Vec<usize> {
    let k = model.num_inputs();
    let mut q = model.initial();
    let mut ts: Vec<usize> = word
        .iter()
        .map(|&i| {
            let t = q * k + i;
            q = model.next(q, i);
            t
        })
        .collect();
    ts.sort_unstable();
    ts.dedup();
    ts
}

/// Transition-coverage selection: rounds of `batch` random walks, from each
/// of which tests are picked greedily by newly covered transitions (ties by
/// generation order). A round ends once no remaining walk adds coverage;
/// coverage then resets and a fresh batch is generated, until `n` tests are
/// selected.
pub fn transition_coverage(
    model: &MealyMachine,
    n: usize,
    batch: usize,
    rng: &mut Rng,
) -> Vec<Vec<usize>> {
    let mut selected = Vec::with_capacity(n);
    while selected.len() < n {
        let walks: Vec<Vec<usize>> = (0..batch.max(1)).map(|_| random_walk(model, rng)).collect();
        select_round(model, walks, n - selected.len(), &mut selected);
    }
    selected
}

/// Greedy selection of at most `want` walks from one generated batch.
fn select_round(
    model: &MealyMachine,
    walks: Vec<Vec<usize>>,
    want: usize,
    out: &mut Vec<Vec<usize>>,
) {
    let trans: Vec<Vec<usize>> = walks
        .iter()
        .map(|w| covered_transitions(model, w))
        .collect();
    let mut covered = vec![false; model.num_states() * model.num_inputs()];
    let mut taken = vec![false; walks.len()];
    let mut picked = 0;
    while picked < want {
        let best = (0..walks.len())
            .filter(|&c| !taken[c])
            .map(|c| (trans[c].iter().filter(|&&t| !covered[t]).count(), c))
            .fold(None, |acc: Option<(usize, usize)>, (g, c)| match acc {
                Some((bg, _)) if bg >= g => acc,
                _ => Some((g, c)),
            });
        match best {
            Some((gain, c)) if gain > 0 => {
                taken[c] = true;
                for &t in &trans[c] {
                    covered[t] = true;
                }
                out.push(walks[c].clone());
                picked += 1;
            }
            _ => break,
        }
    }
}

/// Transition-coverage suite over a fixed model.
pub fn gen_transition_coverage(
    cfg: &StrategyConfig,
    model: &MealyMachine,
) -> Result<Vec<Vec<usize>>, TestgenError> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed);
    Ok(transition_coverage(
        model,
        cfg.n_train,
        cfg.generation_batch,
        &mut rng,
    ))
}

/// Output-directed suite: random prefix, path to a random state, then the
/// shortest path to a transition emitting the target label.
pub fn gen_output_directed(
    cfg: &StrategyConfig,
    model: &MealyMachine,
) -> Result<Vec<Vec<usize>>, TestgenError> {
    cfg.validate()?;
    let label = cfg.target_label.expect("validated");
    if label >= model.num_outputs() {
        return Err(TestgenError::Config(String::from(
            "target label outside the model's outputs",
        )));
    }
    // Some reachable state must be able to reach the label, or the loop
    // below never accepts anything.
    let reachable = model.reachable();
    let label_reachable = (0..model.num_states()).filter(|&q| reachable[q]).any(|q| {
        model
            .path_to_label(q, label)
            .expect("valid state")
            .is_some()
    });
    if !label_reachable {
        return Err(TestgenError::UnreachableLabel);
    }
    let mut rng = seed::rng(cfg.seed);
    let mut tests = Vec::with_capacity(cfg.n_train);
    while tests.len() < cfg.n_train {
        let rand_len = rng.gen_range(0..=cfg.l_max);
        let prefix = random_sequence(&mut rng, model.num_inputs(), rand_len);
        let q_r = model
            .state_after(model.initial(), &prefix)
            .expect("valid word");
        let q_target = rng.gen_range(0..model.num_states());
        let Some(interfix) = model.path_to_state(q_r, q_target).expect("valid states") else {
            continue;
        };
        let Some(suffix) = model.path_to_label(q_target, label).expect("valid state") else {
            continue;
        };
        let mut test = prefix;
        test.extend(interfix);
        test.extend(suffix);
        tests.push(test);
    }
    Ok(tests)
}

/// Learning-based suite: exactly the tests executed while learning with a
/// budget of `n_train` executed tests, in execution order.
pub fn gen_learning_based<S: Sul>(
    cfg: &StrategyConfig,
    sul: &mut S,
    inputs: &[String],
    outputs: &[String],
    eq_tests_per_round: usize,
    collision_output: Option<usize>,
    absorbing: &[usize],
) -> Result<(Vec<Vec<usize>>, Learned), TestgenError> {
    cfg.validate()?;
    let budget = LearnerBudget {
        max_total_tests: cfg.n_train as u64,
        eq_tests_per_round,
        generation_batch: cfg.generation_batch,
        seed: cfg.seed,
        collision_output,
        absorbing: absorbing.to_vec(),
    };
    let learned = learner::learn_with_testing(sul, &budget, inputs, outputs)?;
    let tests = learned
        .log
        .executed
        .iter()
        .map(|(w, _)| w.clone())
        .collect();
    Ok((tests, learned))
}
