//! Active Mealy machine learning with a discrimination tree.
//!
//! The learner follows Kearns and Vazirani: hypothesis states are leaves of a
//! discrimination tree, identified by access sequences, and inner nodes hold
//! distinguishing suffixes. The root discriminates by the whole one-step
//! output row (one single-symbol suffix per input), so every state's outgoing
//! outputs are known once it is placed in the tree. Counterexamples are
//! decomposed by Rivest–Schapire binary search into a new access sequence and
//! a distinguishing suffix, which splits one leaf.
//!
//! Queries go through [`QueryOracle`], which enforces the test budget (only
//! real executions are charged), checks that repeated queries agree, and logs
//! every executed test.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::harness::{QueryCache, Sul, SulError};
use crate::mealy::{self, MealyMachine};
use crate::seed::{self, Rng};
use crate::testgen;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error(transparent)]
    Sul(#[from] SulError),
    #[error("teacher answered the same query differently (position {position})")]
    Nondeterminism { word: Vec<usize>, position: usize },
    #[error("test budget exhausted")]
    BudgetExhausted,
    #[error("invalid learner configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerBudget {
    /// N_autlearn: executed tests (output queries plus equivalence tests).
    pub max_total_tests: u64,
    /// Tests generated per equivalence query, cached or not.
    pub eq_tests_per_round: usize,
    /// Random walks generated per transition-coverage selection round.
    pub generation_batch: usize,
    pub seed: u64,
    /// Output counted as a collision in the log.
    pub collision_output: Option<usize>,
    /// Outputs the system repeats forever once emitted.
    pub absorbing: Vec<usize>,
}

impl LearnerBudget {
    pub fn new(max_total_tests: u64, seed: u64) -> Self {
        Self {
            max_total_tests,
            eq_tests_per_round: 200,
            generation_batch: 1000,
            seed,
            collision_output: None,
            absorbing: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundStats {
    pub round: usize,
    pub states: usize,
    pub total_tests: u64,
    pub collisions: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnLog {
    pub rounds: Vec<RoundStats>,
    /// Executed tests in execution order, with their outputs.
    pub executed: Vec<(Vec<usize>, Vec<usize>)>,
    pub total_tests: u64,
    pub collisions: u64,
    pub counterexamples: usize,
    /// False when the budget ran out before the first hypothesis was closed.
    /// Pending transitions are then sifted with free answers only; those
    /// still unresolved become self-loops.
    pub complete: bool,
}

/// Budgeted, logged access to a [`Sul`].
pub struct QueryOracle<'a, S: Sul> {
    sul: &'a mut S,
    max_tests: u64,
    used: u64,
    collisions: u64,
    collision_output: Option<usize>,
    absorbing: Vec<usize>,
    memory: QueryCache,
    executed: Vec<(Vec<usize>, Vec<usize>)>,
    asked: Option<Vec<Vec<usize>>>,
}

impl<'a, S: Sul> QueryOracle<'a, S> {
    pub fn new(sul: &'a mut S, max_tests: u64) -> Self {
        let k = sul.num_inputs();
        Self {
            sul,
            max_tests,
            used: 0,
            collisions: 0,
            collision_output: None,
            absorbing: Vec::new(),
            memory: QueryCache::new(k),
            executed: Vec::new(),
            asked: None,
        }
    }

    pub fn with_collision_output(mut self, o: Option<usize>) -> Self {
        self.collision_output = o;
        self
    }

    /// Declares outputs that, once emitted, repeat on every later input.
    /// Queries extending a known answer that contains one are answered
    /// without running the system.
    pub fn with_absorbing_outputs(mut self, outputs: &[usize]) -> Self {
        self.absorbing = outputs.to_vec();
        self
    }

    /// Spends the remaining budget: from now on only queries answerable
    /// without execution succeed.
    pub fn freeze(&mut self) {
        self.max_tests = self.used;
    }

    fn inferred(&self, word: &[usize]) -> Option<Vec<usize>> {
        if self.absorbing.is_empty() {
            return None;
        }
        let mut known = self.memory.longest_prefix(word);
        let j = known.iter().position(|o| self.absorbing.contains(o))?;
        let o = known[j];
        known.truncate(j + 1);
        known.resize(word.len(), o);
        Some(known)
    }

    /// Keeps every query word, cached or not.
    pub fn record_all_queries(mut self) -> Self {
        self.asked = Some(Vec::new());
        self
    }

    pub fn num_inputs(&self) -> usize {
        self.sul.num_inputs()
    }

    pub fn tests_used(&self) -> u64 {
        self.used
    }

    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    pub fn asked(&self) -> &[Vec<usize>] {
        self.asked.as_deref().unwrap_or(&[])
    }

    pub fn executed(&self) -> &[(Vec<usize>, Vec<usize>)] {
        &self.executed
    }

    /// Answers an output query. Cached answers are free; a query that would
    /// need a real execution once the budget is spent fails with
    /// [`LearnError::BudgetExhausted`].
    pub fn query(&mut self, word: &[usize]) -> Result<Vec<usize>, LearnError> {
        if let Some(a) = self.asked.as_mut() {
            a.push(word.to_vec());
        }
        let answer = match self.sul.cached(word).or_else(|| self.inferred(word)) {
            Some(outputs) => outputs,
            None => {
                if self.used >= self.max_tests {
                    return Err(LearnError::BudgetExhausted);
                }
                let a = self.sul.query(word)?;
                if a.executed {
                    self.used += 1;
                    if self
                        .collision_output
                        .is_some_and(|c| a.outputs.contains(&c))
                    {
                        self.collisions += 1;
                    }
                    self.executed.push((word.to_vec(), a.outputs.clone()));
                }
                a.outputs
            }
        };
        self.memory
            .insert(word, &answer)
            .map_err(|position| LearnError::Nondeterminism {
                word: word.to_vec(),
                position,
            })?;
        Ok(answer)
    }

    /// Outputs produced by `suffix` after `prefix`.
    fn suffix_outputs(
        &mut self,
        prefix: &[usize],
        suffix: &[usize],
    ) -> Result<Vec<usize>, LearnError> {
        let mut w = Vec::with_capacity(prefix.len() + suffix.len());
        w.extend_from_slice(prefix);
        w.extend_from_slice(suffix);
        let mut out = self.query(&w)?;
        Ok(out.split_off(prefix.len()))
    }
}

/// Source of counterexamples for hypotheses.
pub trait EquivalenceOracle<S: Sul> {
    fn find_counterexample(
        &mut self,
        hyp: &MealyMachine,
        queries: &mut QueryOracle<'_, S>,
    ) -> Result<Option<Vec<usize>>, LearnError>;
}

/// Exact equivalence against a known machine (product-machine search).
/// Spends no budget.
pub struct ExactOracle {
    pub target: MealyMachine,
}

impl<S: Sul> EquivalenceOracle<S> for ExactOracle {
    fn find_counterexample(
        &mut self,
        hyp: &MealyMachine,
        _queries: &mut QueryOracle<'_, S>,
    ) -> Result<Option<Vec<usize>>, LearnError> {
        mealy::equivalent(&self.target, hyp).map_err(|e| LearnError::Config(alloc::format!("{e}")))
    }
}

/// Testing-based equivalence: transition-coverage tests generated on the
/// hypothesis, executed in generation order; the first disagreeing test is
/// the counterexample.
pub struct TransitionCoverageOracle {
    rng: Rng,
    tests_per_round: usize,
    generation_batch: usize,
}

impl TransitionCoverageOracle {
    pub fn new(seed: u64, tests_per_round: usize, generation_batch: usize) -> Self {
        Self {
            rng: seed::rng(seed),
            tests_per_round,
            generation_batch,
        }
    }
}

impl<S: Sul> EquivalenceOracle<S> for TransitionCoverageOracle {
    fn find_counterexample(
        &mut self,
        hyp: &MealyMachine,
        queries: &mut QueryOracle<'_, S>,
    ) -> Result<Option<Vec<usize>>, LearnError> {
        equivalence_query(
            hyp,
            queries,
            &mut self.rng,
            self.tests_per_round,
            self.generation_batch,
        )
    }
}

/// One testing-based equivalence query with a per-round budget of `tests`.
pub fn equivalence_query<S: Sul>(
    hyp: &MealyMachine,
    queries: &mut QueryOracle<'_, S>,
    rng: &mut Rng,
    tests: usize,
    generation_batch: usize,
) -> Result<Option<Vec<usize>>, LearnError> {
    for test in testgen::transition_coverage(hyp, tests, generation_batch, rng) {
        let sul = queries.query(&test)?;
        let (_, expected) = hyp
            .run(&test)
            .expect("tests use the hypothesis alphabet")
            .into_parts();
        if sul != expected {
            return Ok(Some(test));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone)]
enum Node {
    Inner {
        suffixes: Vec<Vec<usize>>,
        children: BTreeMap<Vec<usize>, usize>,
    },
    Leaf {
        state: usize,
    },
}

/// Discrimination-tree learner state.
#[derive(Debug, Clone)]
pub struct DiscriminationTree {
    k: usize,
    nodes: Vec<Node>,
    parent: Vec<Option<usize>>,
    access: Vec<Vec<usize>>,
    leaf: Vec<usize>,
    /// One-step outputs of each state, indexed by input.
    row: Vec<Vec<usize>>,
    /// Target state per `q * k + a`; `usize::MAX` while unresolved.
    trans: Vec<usize>,
    /// Inner node where each pending transition resumes sifting.
    pending: VecDeque<(usize, usize)>,
}

const UNRESOLVED: usize = usize::MAX;

impl DiscriminationTree {
    fn new(k: usize) -> Self {
        let root = Node::Inner {
            suffixes: (0..k).map(|a| vec![a]).collect(),
            children: BTreeMap::new(),
        };
        Self {
            k,
            nodes: vec![root],
            parent: vec![None],
            access: Vec::new(),
            leaf: Vec::new(),
            row: Vec::new(),
            trans: Vec::new(),
            pending: VecDeque::new(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.access.len()
    }

    pub fn access_sequences(&self) -> &[Vec<usize>] {
        &self.access
    }

    fn add_state<S: Sul>(
        &mut self,
        word: Vec<usize>,
        node: usize,
        key: Vec<usize>,
        queries: &mut QueryOracle<'_, S>,
    ) -> Result<usize, LearnError> {
        // At the root the key is the one-step output row itself.
        let row = if node == 0 {
            key.clone()
        } else {
            let mut r = Vec::with_capacity(self.k);
            for a in 0..self.k {
                r.push(
                    *queries
                        .suffix_outputs(&word, &[a])?
                        .last()
                        .expect("one output"),
                );
            }
            r
        };
        Ok(self.add_state_with_row(word, node, key, row))
    }

    /// Sifts `word` from `node` to a leaf, creating a new state when an inner
    /// node has no child for the observed outputs.
    fn sift<S: Sul>(
        &mut self,
        word: &[usize],
        mut node: usize,
        queries: &mut QueryOracle<'_, S>,
    ) -> Result<usize, LearnError> {
        loop {
            match &self.nodes[node] {
                Node::Leaf { state } => return Ok(*state),
                Node::Inner { suffixes, .. } => {
                    let suffixes = suffixes.clone();
                    let mut key = Vec::new();
                    for s in &suffixes {
                        key.extend(queries.suffix_outputs(word, s)?);
                    }
                    let Node::Inner { children, .. } = &self.nodes[node] else {
                        unreachable!()
                    };
                    match children.get(&key) {
                        Some(&child) => node = child,
                        None => return self.add_state(word.to_vec(), node, key, queries),
                    }
                }
            }
        }
    }

    /// Resolves all pending transitions in first-in first-out order, so new
    /// states get short access sequences. May discover new states.
    fn close<S: Sul>(&mut self, queries: &mut QueryOracle<'_, S>) -> Result<(), LearnError> {
        while let Some((t, node)) = self.pending.pop_front() {
            let (q, a) = (t / self.k, t % self.k);
            let mut word = self.access[q].clone();
            word.push(a);
            match self.sift(&word, node, queries) {
                Ok(target) => self.trans[t] = target,
                Err(e) => {
                    self.pending.push_front((t, node));
                    return Err(e);
                }
            }
        }
        Ok(())
    }

    /// Resolves whatever pending transitions need no execution; the rest
    /// stay pending.
    fn close_free<S: Sul>(&mut self, queries: &mut QueryOracle<'_, S>) -> Result<(), LearnError> {
        queries.freeze();
        loop {
            let before = self.pending.len() + self.num_states();
            let mut stuck = VecDeque::new();
            while let Some((t, node)) = self.pending.pop_front() {
                let (q, a) = (t / self.k, t % self.k);
                let mut word = self.access[q].clone();
                word.push(a);
                match self.sift(&word, node, queries) {
                    Ok(target) => self.trans[t] = target,
                    Err(LearnError::BudgetExhausted) => stuck.push_back((t, node)),
                    Err(e) => return Err(e),
                }
            }
            self.pending = stuck;
            if self.pending.len() + self.num_states() == before {
                return Ok(());
            }
        }
    }

    fn hypothesis(&self, inputs: &[String], outputs: &[String]) -> MealyMachine {
        let n = self.num_states();
        let next: Vec<usize> = self
            .trans
            .iter()
            .enumerate()
            .map(|(t, &q)| if q == UNRESOLVED { t / self.k } else { q })
            .collect();
        let out: Vec<usize> = (0..n).flat_map(|q| self.row[q].iter().copied()).collect();
        MealyMachine::new(inputs.to_vec(), outputs.to_vec(), 0, next, out)
            .expect("hypothesis is total")
    }

    /// Rivest–Schapire decomposition of counterexample `w` for `hyp`, then a
    /// leaf split. Adds at least one state.
    fn process_counterexample<S: Sul>(
        &mut self,
        hyp: &MealyMachine,
        w: &[usize],
        queries: &mut QueryOracle<'_, S>,
    ) -> Result<(), LearnError> {
        let m = w.len();
        let states: Vec<usize> = {
            let mut q = hyp.initial();
            let mut v = vec![q];
            for &a in w {
                q = hyp.next(q, a);
                v.push(q);
            }
            v
        };
        // agrees(i): the system, started in the hypothesis' access sequence
        // for the state reached after w[..i], matches the hypothesis on w[i..].
        let mut agrees = |i: usize, this: &Self| -> Result<bool, LearnError> {
            let q = states[i];
            let sys = queries.suffix_outputs(&this.access[q], &w[i..])?;
            let (h, _) = hyp.run_from(q, &w[i..]).expect("valid word");
            Ok(sys == h)
        };
        let (mut lo, mut hi) = (0usize, m);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if agrees(mid, self)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let i = lo;
        let mut new_access = self.access[states[i]].clone();
        new_access.push(w[i]);
        let suffix = w[i + 1..].to_vec();
        let old = states[i + 1];
        let old_key = queries.suffix_outputs(&self.access[old], &suffix)?;
        let new_key = queries.suffix_outputs(&new_access, &suffix)?;
        if suffix.is_empty() || old_key == new_key {
            return Err(LearnError::Nondeterminism {
                word: w.to_vec(),
                position: i,
            });
        }
        let split = self.leaf[old];
        let row = self.row[old].clone();
        self.nodes[split] = Node::Inner {
            suffixes: vec![suffix],
            children: BTreeMap::new(),
        };
        let old_leaf = self.nodes.len();
        self.nodes.push(Node::Leaf { state: old });
        self.parent.push(Some(split));
        self.leaf[old] = old_leaf;
        if let Node::Inner { children, .. } = &mut self.nodes[split] {
            children.insert(old_key, old_leaf);
        }
        // The new state shares the old state's root key, i.e. its row.
        self.add_state_with_row(new_access, split, new_key, row);
        for (t, target) in self.trans.iter_mut().enumerate() {
            if *target == old {
                *target = UNRESOLVED;
                self.pending.push_back((t, split));
            }
        }
        self.close(queries)
    }

    fn add_state_with_row(
        &mut self,
        word: Vec<usize>,
        node: usize,
        key: Vec<usize>,
        row: Vec<usize>,
    ) -> usize {
        let state = self.access.len();
        let leaf = self.nodes.len();
        self.nodes.push(Node::Leaf { state });
        self.parent.push(Some(node));
        if let Node::Inner { children, .. } = &mut self.nodes[node] {
            children.insert(key, leaf);
        }
        self.access.push(word);
        self.leaf.push(leaf);
        self.row.push(row);
        self.trans
            .extend(core::iter::repeat(UNRESOLVED).take(self.k));
        for a in 0..self.k {
            self.pending.push_back((state * self.k + a, 0));
        }
        state
    }

    /// Suffix labelling the lowest common ancestor of two states' leaves.
    pub fn separating_suffixes(&self, s1: usize, s2: usize) -> Option<&[Vec<usize>]> {
        let path = |mut n: usize| {
            let mut v = vec![n];
            while let Some(p) = self.parent[n] {
                v.push(p);
                n = p;
            }
            v
        };
        let p1 = path(self.leaf[s1]);
        let p2 = path(self.leaf[s2]);
        let lca = p1.iter().find(|n| p2.contains(n))?;
        match &self.nodes[*lca] {
            Node::Inner { suffixes, .. } => Some(suffixes),
            Node::Leaf { .. } => None,
        }
    }
}

/// Result of [`learn`]: the last complete hypothesis and the run log.
#[derive(Debug, Clone)]
pub struct Learned {
    pub hypothesis: MealyMachine,
    pub log: LearnLog,
    pub tree: DiscriminationTree,
}

/// Learns a hypothesis, alternating hypothesis construction with
/// equivalence queries until no counterexample is found or the test budget
/// is exhausted.
pub fn learn<S: Sul, E: EquivalenceOracle<S>>(
    queries: &mut QueryOracle<'_, S>,
    oracle: &mut E,
    inputs: &[String],
    outputs: &[String],
) -> Result<Learned, LearnError> {
    if inputs.len() != queries.num_inputs() || inputs.is_empty() {
        return Err(LearnError::Config(String::from(
            "input alphabet does not match the teacher",
        )));
    }
    let mut log = LearnLog {
        complete: true,
        ..LearnLog::default()
    };
    let mut tree = DiscriminationTree::new(inputs.len());
    let init = tree.sift(&[], 0, queries).and_then(|_| tree.close(queries));
    match init {
        Ok(()) => {}
        Err(LearnError::BudgetExhausted) if tree.num_states() > 0 => {
            log.complete = false;
            tree.close_free(queries)?;
            let hypothesis = tree.hypothesis(inputs, outputs);
            push_round(&mut log, &hypothesis, queries);
            return Ok(finish(hypothesis, log, tree, queries));
        }
        Err(LearnError::BudgetExhausted) => {
            return Err(LearnError::Config(String::from(
                "budget too small to query the initial state",
            )));
        }
        Err(e) => return Err(e),
    }
    let mut hypothesis = tree.hypothesis(inputs, outputs);
    push_round(&mut log, &hypothesis, queries);
    loop {
        let cex = match oracle.find_counterexample(&hypothesis, queries) {
            Ok(Some(w)) => w,
            Ok(None) | Err(LearnError::BudgetExhausted) => break,
            Err(e) => return Err(e),
        };
        log.counterexamples += 1;
        let mut work = tree.clone();
        let mut current = hypothesis.clone();
        let step = (|| -> Result<MealyMachine, LearnError> {
            let expected = queries.query(&cex)?;
            // Keep decomposing while the counterexample still separates.
            loop {
                work.process_counterexample(&current, &cex, queries)?;
                current = work.hypothesis(inputs, outputs);
                if current.run(&cex).expect("valid word").outputs() == expected.as_slice() {
                    return Ok(current.clone());
                }
            }
        })();
        match step {
            Ok(h) => {
                tree = work;
                hypothesis = h;
                push_round(&mut log, &hypothesis, queries);
            }
            Err(LearnError::BudgetExhausted) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(finish(hypothesis, log, tree, queries))
}

fn push_round<S: Sul>(log: &mut LearnLog, hyp: &MealyMachine, q: &QueryOracle<'_, S>) {
    log.rounds.push(RoundStats {
        round: log.rounds.len() + 1,
        states: hyp.num_states(),
        total_tests: q.tests_used(),
        collisions: q.collisions(),
    });
}

fn finish<S: Sul>(
    hypothesis: MealyMachine,
    mut log: LearnLog,
    tree: DiscriminationTree,
    q: &QueryOracle<'_, S>,
) -> Learned {
    log.total_tests = q.tests_used();
    log.collisions = q.collisions();
    log.executed = q.executed().to_vec();
    Learned {
        hypothesis,
        log,
        tree,
    }
}

/// Learns with testing-based equivalence queries (transition coverage),
/// the setup used against the platooning harness.
pub fn learn_with_testing<S: Sul>(
    sul: &mut S,
    budget: &LearnerBudget,
    inputs: &[String],
    outputs: &[String],
) -> Result<Learned, LearnError> {
    if budget.max_total_tests == 0 {
        return Err(LearnError::Config(String::from(
            "max_total_tests must be positive",
        )));
    }
    let mut queries = QueryOracle::new(sul, budget.max_total_tests)
        .with_collision_output(budget.collision_output)
        .with_absorbing_outputs(&budget.absorbing);
    let mut oracle = TransitionCoverageOracle::new(
        seed::derive(budget.seed, seed::tag("equivalence")),
        budget.eq_tests_per_round,
        budget.generation_batch,
    );
    learn(&mut queries, &mut oracle, inputs, outputs)
}

/// Transitions that emit a violation symbol but lead to a state which does
/// not emit that same symbol on every input.
pub fn trap_violations(hyp: &MealyMachine, violations: &[usize]) -> Vec<(usize, usize)> {
    let mut bad = Vec::new();
    for q in 0..hyp.num_states() {
        for a in 0..hyp.num_inputs() {
            let o = hyp.output(q, a);
            if violations.contains(&o) {
                let t = hyp.next(q, a);
                if (0..hyp.num_inputs()).any(|b| hyp.output(t, b) != o) {
                    bad.push((q, a));
                }
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::MachineSul;
    use alloc::string::ToString;

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn toggle() -> MealyMachine {
        MealyMachine::from_fn(names(&["a"]), names(&["0", "1"]), 2, 0, |q, _| (1 - q, q)).unwrap()
    }

    fn learn_exact(target: &MealyMachine) -> (Learned, Vec<Vec<usize>>) {
        let mut sul = MachineSul::new(target.clone(), true);
        let mut q = QueryOracle::new(&mut sul, u64::MAX).record_all_queries();
        let mut oracle = ExactOracle {
            target: target.clone(),
        };
        let learned = learn(&mut q, &mut oracle, target.inputs(), target.outputs()).unwrap();
        let asked = q.asked().to_vec();
        (learned, asked)
    }

    #[test]
    fn constant_machine_needs_no_counterexample() {
        let m =
            MealyMachine::from_fn(names(&["a", "b"]), names(&["x"]), 1, 0, |_, _| (0, 0)).unwrap();
        let (l, _) = learn_exact(&m);
        assert_eq!(l.hypothesis.num_states(), 1);
        assert_eq!(l.log.counterexamples, 0);
    }

    #[test]
    fn learns_toggle() {
        let (l, _) = learn_exact(&toggle());
        assert_eq!(mealy::equivalent(&l.hypothesis, &toggle()).unwrap(), None);
        assert_eq!(l.hypothesis.num_states(), 2);
    }

    #[test]
    fn learns_random_machines_and_stays_consistent() {
        let mut rng = seed::rng(5);
        for _ in 0..10 {
            let target = MealyMachine::random(&mut rng, 12, 3, 3);
            let (l, asked) = learn_exact(&target);
            assert_eq!(mealy::equivalent(&target, &l.hypothesis).unwrap(), None);
            // every query asked is reproduced by the final hypothesis
            for w in &asked {
                assert_eq!(l.hypothesis.run(w).unwrap(), target.run(w).unwrap());
            }
            // state counts never decrease and each round adds a state
            for r in l.log.rounds.windows(2) {
                assert!(r[1].states > r[0].states);
            }
            // leaves are pairwise separated by their LCA suffixes
            let n = l.tree.num_states();
            let acc = l.tree.access_sequences();
            for s1 in 0..n {
                for s2 in s1 + 1..n {
                    let sfx = l.tree.separating_suffixes(s1, s2).unwrap();
                    let differs = sfx.iter().any(|s| {
                        let run = |u: &Vec<usize>| {
                            let mut w = u.clone();
                            w.extend(s);
                            target.run(&w).unwrap().outputs()[u.len()..].to_vec()
                        };
                        run(&acc[s1]) != run(&acc[s2])
                    });
                    assert!(differs);
                }
            }
        }
    }

    #[test]
    fn testing_oracle_finds_toggle_counterexample() {
        let constant =
            MealyMachine::from_fn(names(&["a"]), names(&["0", "1"]), 1, 0, |_, _| (0, 0)).unwrap();
        let mut sul = MachineSul::new(toggle(), false);
        let mut q = QueryOracle::new(&mut sul, 1000);
        let mut rng = seed::rng(1);
        let cex = equivalence_query(&constant, &mut q, &mut rng, 50, 100)
            .unwrap()
            .unwrap();
        assert!(cex.len() >= 2);
        let mut q2 = QueryOracle::new(&mut sul, 1000);
        assert_eq!(
            equivalence_query(&toggle(), &mut q2, &mut rng, 50, 100).unwrap(),
            None
        );
    }

    #[test]
    fn budget_counts_only_executions() {
        let mut sul = MachineSul::new(toggle(), true);
        let mut q = QueryOracle::new(&mut sul, 1);
        assert_eq!(q.query(&[]).unwrap(), Vec::<usize>::new());
        assert_eq!(q.query(&[0, 0]).unwrap(), [0, 1]);
        assert_eq!(q.query(&[0, 0]).unwrap(), [0, 1]);
        assert_eq!(q.query(&[0]).unwrap(), [0]);
        assert_eq!(q.tests_used(), 1);
        assert_eq!(q.query(&[0, 0, 0]), Err(LearnError::BudgetExhausted));
    }

    #[test]
    fn exhausted_budget_returns_last_hypothesis() {
        let mut rng = seed::rng(9);
        let target = MealyMachine::random(&mut rng, 15, 3, 3);
        let mut sul = MachineSul::new(target.clone(), true);
        let budget = LearnerBudget {
            eq_tests_per_round: 50,
            generation_batch: 100,
            ..LearnerBudget::new(60, 4)
        };
        let l = learn_with_testing(&mut sul, &budget, target.inputs(), target.outputs()).unwrap();
        assert_eq!(l.log.total_tests, 60);
        assert_eq!(l.log.executed.len(), 60);
        assert!(l.log.rounds.last().unwrap().states == l.hypothesis.num_states());
    }

    #[test]
    fn nondeterministic_teacher_is_an_error() {
        struct Flaky(u32);
        impl Sul for Flaky {
            fn num_inputs(&self) -> usize {
                1
            }
            fn query(&mut self, word: &[usize]) -> Result<crate::harness::Answer, SulError> {
                self.0 += 1;
                let o = (self.0 % 2) as usize;
                Ok(crate::harness::Answer {
                    outputs: vec![o; word.len()],
                    executed: true,
                })
            }
        }
        let mut sul = Flaky(0);
        let mut q = QueryOracle::new(&mut sul, 100);
        q.query(&[0]).unwrap();
        assert!(matches!(
            q.query(&[0]),
            Err(LearnError::Nondeterminism { .. })
        ));
    }
}
