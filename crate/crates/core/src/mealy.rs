//! Deterministic Mealy machines over indexed alphabets.
//!
//! States are dense indices `0..num_states`; input and output symbols are
//! indices into ordered name lists. Every search breaks ties by the declared
//! input order, so all results are deterministic.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MealyError {
    #[error("input symbol index {0} is not in the input alphabet")]
    UnknownInput(usize),
    #[error("unknown symbol `{0}`")]
    UnknownName(String),
    #[error("state {0} is out of range")]
    StateOutOfRange(usize),
    #[error("output symbol index {0} is not in the output alphabet")]
    UnknownOutput(usize),
    #[error("input alphabets differ")]
    AlphabetMismatch,
    #[error("transition table has {found} entries, expected {expected}")]
    NotTotal { expected: usize, found: usize },
    #[error("a machine needs at least one state, input and output")]
    Empty,
}

/// An input sequence together with the outputs it produced.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Observation {
    inputs: Vec<usize>,
    outputs: Vec<usize>,
}

impl Observation {
    /// Returns `None` if the lengths differ.
    pub fn new(inputs: Vec<usize>, outputs: Vec<usize>) -> Option<Self> {
        (inputs.len() == outputs.len()).then_some(Self { inputs, outputs })
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<usize>) {
        (self.inputs, self.outputs)
    }
}

/// A total deterministic Mealy machine.
///
/// Transitions are stored row-major: entry `q * |I| + i` holds the successor
/// and the output of state `q` under input `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MealyMachine {
    inputs: Vec<String>,
    outputs: Vec<String>,
    initial: usize,
    num_states: usize,
    next: Vec<usize>,
    out: Vec<usize>,
}

impl MealyMachine {
    pub fn new(
        inputs: Vec<String>,
        outputs: Vec<String>,
        initial: usize,
        next: Vec<usize>,
        out: Vec<usize>,
    ) -> Result<Self, MealyError> {
        if inputs.is_empty() || outputs.is_empty() || next.is_empty() {
            return Err(MealyError::Empty);
        }
        if next.len() % inputs.len() != 0 || out.len() != next.len() {
            let expected = next.len().div_ceil(inputs.len()) * inputs.len();
            return Err(MealyError::NotTotal {
                expected,
                found: if out.len() != next.len() {
                    out.len()
                } else {
                    next.len()
                },
            });
        }
        let num_states = next.len() / inputs.len();
        if initial >= num_states {
            return Err(MealyError::StateOutOfRange(initial));
        }
        if let Some(&bad) = next.iter().find(|&&q| q >= num_states) {
            return Err(MealyError::StateOutOfRange(bad));
        }
        if let Some(&bad) = out.iter().find(|&&o| o >= outputs.len()) {
            return Err(MealyError::UnknownOutput(bad));
        }
        Ok(Self {
            inputs,
            outputs,
            initial,
            num_states,
            next,
            out,
        })
    }

    /// Builds a machine from a transition function `(state, input) -> (next, output)`.
    pub fn from_fn(
        inputs: Vec<String>,
        outputs: Vec<String>,
        num_states: usize,
        initial: usize,
        mut f: impl FnMut(usize, usize) -> (usize, usize),
    ) -> Result<Self, MealyError> {
        let k = inputs.len();
        let mut next = Vec::with_capacity(num_states * k);
        let mut out = Vec::with_capacity(num_states * k);
        for q in 0..num_states {
            for i in 0..k {
                let (q2, o) = f(q, i);
                next.push(q2);
                out.push(o);
            }
        }
        Self::new(inputs, outputs, initial, next, out)
    }

    /// A uniformly random machine with `num_states` states whose every state is
    /// reachable from state 0 (a random spanning tree is laid down first).
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        num_states: usize,
        num_inputs: usize,
        num_outputs: usize,
    ) -> Self {
        let k = num_inputs;
        let mut next: Vec<usize> = (0..num_states * k)
            .map(|_| rng.gen_range(0..num_states))
            .collect();
        // Attach every state q > 0 to a random earlier state on a random input,
        // keeping slots already used for the tree.
        let mut used = vec![false; num_states * k];
        for q in 1..num_states {
            loop {
                let p = rng.gen_range(0..q);
                let i = rng.gen_range(0..k);
                if !used[p * k + i] {
                    used[p * k + i] = true;
                    next[p * k + i] = q;
                    break;
                }
            }
        }
        let out = (0..num_states * k)
            .map(|_| rng.gen_range(0..num_outputs))
            .collect();
        Self::new(
            numbered("i", num_inputs),
            numbered("o", num_outputs),
            0,
            next,
            out,
        )
        .expect("random machine is well formed")
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|s| s == name)
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|s| s == name)
    }

    /// Successor of `state` under `input`. Panics on out-of-range indices.
    #[inline]
    pub fn next(&self, state: usize, input: usize) -> usize {
        self.next[state * self.inputs.len() + input]
    }

    /// Output of `state` under `input`. Panics on out-of-range indices.
    #[inline]
    pub fn output(&self, state: usize, input: usize) -> usize {
        self.out[state * self.inputs.len() + input]
    }

    fn check_state(&self, q: usize) -> Result<(), MealyError> {
        if q < self.num_states {
            Ok(())
        } else {
            Err(MealyError::StateOutOfRange(q))
        }
    }

    fn check_word(&self, word: &[usize]) -> Result<(), MealyError> {
        match word.iter().find(|&&i| i >= self.inputs.len()) {
            Some(&bad) => Err(MealyError::UnknownInput(bad)),
            None => Ok(()),
        }
    }

    /// Runs `word` from the initial state.
    pub fn run(&self, word: &[usize]) -> Result<Observation, MealyError> {
        let (outputs, _) = self.run_from(self.initial, word)?;
        Ok(Observation {
            inputs: word.to_vec(),
            outputs,
        })
    }

    /// Runs `word` from `from`, returning the outputs and the reached state.
    pub fn run_from(&self, from: usize, word: &[usize]) -> Result<(Vec<usize>, usize), MealyError> {
        self.check_state(from)?;
        self.check_word(word)?;
        let mut q = from;
        let mut outputs = Vec::with_capacity(word.len());
        for &i in word {
            outputs.push(self.output(q, i));
            q = self.next(q, i);
        }
        Ok((outputs, q))
    }

    /// δ*(from, word).
    pub fn state_after(&self, from: usize, word: &[usize]) -> Result<usize, MealyError> {
        self.check_state(from)?;
        self.check_word(word)?;
        Ok(word.iter().fold(from, |q, &i| self.next(q, i)))
    }

    /// Translates symbol names to input indices.
    pub fn encode(&self, names: &[&str]) -> Result<Vec<usize>, MealyError> {
        names
            .iter()
            .map(|n| {
                self.input_index(n)
                    .ok_or_else(|| MealyError::UnknownName(String::from(*n)))
            })
            .collect()
    }

    /// Shortest input sequence leading from `from` to `to`, smallest in
    /// input order among equally short ones. `None` if `to` is unreachable.
    pub fn path_to_state(&self, from: usize, to: usize) -> Result<Option<Vec<usize>>, MealyError> {
        self.check_state(from)?;
        self.check_state(to)?;
        if from == to {
            return Ok(Some(Vec::new()));
        }
        let k = self.num_inputs();
        let mut pred: Vec<Option<(usize, usize)>> = vec![None; self.num_states];
        let mut seen = vec![false; self.num_states];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(q) = queue.pop_front() {
            for i in 0..k {
                let q2 = self.next(q, i);
                if seen[q2] {
                    continue;
                }
                seen[q2] = true;
                pred[q2] = Some((q, i));
                if q2 == to {
                    return Ok(Some(trace_back(&pred, from, to, Vec::new())));
                }
                queue.push_back(q2);
            }
        }
        Ok(None)
    }

    /// Shortest input sequence from `from` whose final transition emits
    /// `label`. `None` if no such transition is reachable.
    pub fn path_to_label(
        &self,
        from: usize,
        label: usize,
    ) -> Result<Option<Vec<usize>>, MealyError> {
        self.check_state(from)?;
        if label >= self.outputs.len() {
            return Err(MealyError::UnknownOutput(label));
        }
        let k = self.num_inputs();
        let mut pred: Vec<Option<(usize, usize)>> = vec![None; self.num_states];
        let mut seen = vec![false; self.num_states];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        // States leave the queue in shortlex order of their access words, so
        // the first emitting edge found is shortlex-minimal.
        while let Some(q) = queue.pop_front() {
            if let Some(i) = (0..k).find(|&i| self.output(q, i) == label) {
                return Ok(Some(trace_back(&pred, from, q, vec![i])));
            }
            for i in 0..k {
                let q2 = self.next(q, i);
                if !seen[q2] {
                    seen[q2] = true;
                    pred[q2] = Some((q, i));
                    queue.push_back(q2);
                }
            }
        }
        Ok(None)
    }

    /// States reachable from the initial state.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states];
        seen[self.initial] = true;
        let mut stack = vec![self.initial];
        while let Some(q) = stack.pop() {
            for i in 0..self.num_inputs() {
                let q2 = self.next(q, i);
                if !seen[q2] {
                    seen[q2] = true;
                    stack.push(q2);
                }
            }
        }
        seen
    }

    /// GraphViz rendering: one node per state (the initial state drawn as a
    /// double circle) and one edge per `(state, input)` labeled `input/output`.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph mealy {\n");
        for q in 0..self.num_states {
            let shape = if q == self.initial {
                "doublecircle"
            } else {
                "circle"
            };
            let _ = writeln!(s, "  q{q} [shape={shape}];");
        }
        for q in 0..self.num_states {
            for i in 0..self.num_inputs() {
                let _ = writeln!(
                    s,
                    "  q{q} -> q{} [label=\"{}/{}\"];",
                    self.next(q, i),
                    escape(&self.inputs[i]),
                    escape(&self.outputs[self.output(q, i)])
                );
            }
        }
        s.push_str("}\n");
        s
    }
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}

fn trace_back(
    pred: &[Option<(usize, usize)>],
    from: usize,
    to: usize,
    mut tail: Vec<usize>,
) -> Vec<usize> {
    let mut rev = Vec::new();
    let mut q = to;
    while q != from {
        let (p, i) = pred[q].expect("predecessor recorded during search");
        rev.push(i);
        q = p;
    }
    rev.reverse();
    rev.append(&mut tail);
    rev
}

/// Checks observation equivalence of two machines over the same inputs.
///
/// Returns `None` if they agree on every input sequence, otherwise a shortest
/// separating sequence (shortlex-minimal) found by breadth-first search over
/// the product machine. Outputs are compared by name, so the output alphabets
/// may differ in order or content.
pub fn equivalent(m1: &MealyMachine, m2: &MealyMachine) -> Result<Option<Vec<usize>>, MealyError> {
    if m1.inputs != m2.inputs {
        return Err(MealyError::AlphabetMismatch);
    }
    // Map m2's outputs into m1's index space; outputs m1 lacks never match.
    let out_map: Vec<Option<usize>> = m2.outputs.iter().map(|o| m1.output_index(o)).collect();
    let k = m1.num_inputs();
    let n2 = m2.num_states;
    let idx = |a: usize, b: usize| a * n2 + b;
    let mut pred: Vec<Option<(usize, usize)>> = vec![None; m1.num_states * n2];
    let mut seen = vec![false; m1.num_states * n2];
    let start = idx(m1.initial, m2.initial);
    seen[start] = true;
    let mut queue = VecDeque::from([(m1.initial, m2.initial)]);
    while let Some((a, b)) = queue.pop_front() {
        for i in 0..k {
            if out_map[m2.output(b, i)] != Some(m1.output(a, i)) {
                return Ok(Some(trace_back(&pred, start, idx(a, b), vec![i])));
            }
        }
        for i in 0..k {
            let (a2, b2) = (m1.next(a, i), m2.next(b, i));
            let p = idx(a2, b2);
            if !seen[p] {
                seen[p] = true;
                pred[p] = Some((idx(a, b), i));
                queue.push_back((a2, b2));
            }
        }
    }
    Ok(None)
}
