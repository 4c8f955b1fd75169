//! Mapper and test driver: the hybrid plant seen as a Mealy machine.
//!
//! Abstract inputs are concretized to an acceleration held for a number of
//! sampling periods. After each input the sample taken half a period before
//! the next input is abstracted to a distance-range symbol, or to the reverse
//! symbol when the leader drives backwards. Violation symbols latch: once one
//! is produced, every later output of the same test repeats it.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::kv::{split_list, KvError, KvMap};
use crate::mealy::MealyMachine;
use crate::plant::{Plant, PlantConfig, PlantError, PlantState, SampleRecord};

pub const DEFAULT_ALPHABET: &str = include_str!("../defaults/alphabet.conf");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SulError {
    #[error("input symbol {0} is not in the abstract input alphabet")]
    UnknownSymbol(usize),
    #[error("unknown input symbol `{0}`")]
    UnknownName(String),
    #[error("nondeterministic answer at position {position} of a repeated query")]
    Nondeterminism { word: Vec<usize>, position: usize },
    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlphabetError {
    #[error("invalid alphabet: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kv(#[from] KvError),
}

/// Concrete meaning of an abstract input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concretization {
    pub acc: f64,
    /// Hold duration in sampling periods.
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstractAlphabet {
    inputs: Vec<String>,
    conc: Vec<Concretization>,
    outputs: Vec<String>,
    reverse: usize,
    /// Output for each distance range, lowest range first.
    range_outputs: Vec<usize>,
    bounds: Vec<f64>,
    violations: Vec<usize>,
}

impl Default for AbstractAlphabet {
    fn default() -> Self {
        Self::from_kv(&KvMap::parse(DEFAULT_ALPHABET).expect("shipped alphabet parses"))
            .expect("shipped alphabet is valid")
    }
}

impl AbstractAlphabet {
    pub fn from_kv(kv: &KvMap) -> Result<Self, AlphabetError> {
        kv.check_known(&[
            "inputs",
            "conc.",
            "outputs",
            "reverse",
            "distance_bounds",
            "violations",
        ])?;
        let inputs = kv.list("inputs")?;
        let mut conc = Vec::with_capacity(inputs.len());
        for name in &inputs {
            let key = ["conc.", name].concat();
            let parts = kv.list(&key)?;
            let bad = || KvError::Value {
                key: key.clone(),
                value: kv.get(&key).unwrap_or("").to_string(),
            };
            if parts.len() != 2 {
                return Err(bad().into());
            }
            let acc: f64 = parts[0].parse().map_err(|_| bad())?;
            let steps: u32 = parts[1].parse().map_err(|_| bad())?;
            conc.push(Concretization { acc, steps });
        }
        let outputs = kv.list("outputs")?;
        let index = |name: &str| {
            outputs
                .iter()
                .position(|o| o == name)
                .ok_or_else(|| AlphabetError::Invalid(["unknown output ", name].concat()))
        };
        let reverse = index(kv.require("reverse")?)?;
        let violations = kv
            .list("violations")?
            .iter()
            .map(|v| index(v))
            .collect::<Result<Vec<_>, _>>()?;
        let mut bounds = Vec::new();
        for b in split_list(kv.require("distance_bounds")?) {
            bounds.push(b.parse::<f64>().map_err(|_| KvError::Value {
                key: "distance_bounds".to_string(),
                value: b.clone(),
            })?);
        }
        let range_outputs = (0..outputs.len()).filter(|&o| o != reverse).collect();
        Self::new(
            inputs,
            conc,
            outputs,
            reverse,
            range_outputs,
            bounds,
            violations,
        )
    }

    pub fn new(
        inputs: Vec<String>,
        conc: Vec<Concretization>,
        outputs: Vec<String>,
        reverse: usize,
        range_outputs: Vec<usize>,
        bounds: Vec<f64>,
        violations: Vec<usize>,
    ) -> Result<Self, AlphabetError> {
        let invalid = |m: &str| Err(AlphabetError::Invalid(m.to_string()));
        if inputs.is_empty() || inputs.len() != conc.len() {
            return invalid("every input needs exactly one concretization");
        }
        if conc.iter().any(|c| c.steps == 0 || !c.acc.is_finite()) {
            return invalid("concretizations need a finite acceleration and at least one step");
        }
        if reverse >= outputs.len()
            || range_outputs
                .iter()
                .chain(&violations)
                .any(|&o| o >= outputs.len())
        {
            return invalid("output index out of range");
        }
        if range_outputs.len() != bounds.len() + 1 {
            return invalid("need exactly one more range output than distance bounds");
        }
        if bounds.windows(2).any(|w| !(w[0] < w[1])) || bounds.iter().any(|b| !b.is_finite()) {
            return invalid("distance bounds must be finite and strictly ascending");
        }
        for (i, a) in inputs.iter().enumerate() {
            if inputs[..i].contains(a) {
                return invalid("duplicate input symbol");
            }
        }
        for (i, a) in outputs.iter().enumerate() {
            if outputs[..i].contains(a) {
                return invalid("duplicate output symbol");
            }
        }
        Ok(Self {
            inputs,
            conc,
            outputs,
            reverse,
            range_outputs,
            bounds,
            violations,
        })
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        kv.insert("inputs", self.inputs.join(", "));
        for (name, c) in self.inputs.iter().zip(&self.conc) {
            kv.insert(
                &["conc.", name].concat(),
                alloc::format!("{}, {}", c.acc, c.steps),
            );
        }
        kv.insert("outputs", self.outputs.join(", "));
        kv.insert("reverse", self.outputs[self.reverse].clone());
        let bounds: Vec<String> = self.bounds.iter().map(|b| alloc::format!("{b}")).collect();
        kv.insert("distance_bounds", bounds.join(", "));
        let v: Vec<&str> = self
            .violations
            .iter()
            .map(|&o| self.outputs[o].as_str())
            .collect();
        kv.insert("violations", v.join(", "));
        kv
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

    pub fn conc(&self, input: usize) -> Concretization {
        self.conc[input]
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn range_outputs(&self) -> &[usize] {
        &self.range_outputs
    }

    pub fn reverse(&self) -> usize {
        self.reverse
    }

    pub fn violations(&self) -> &[usize] {
        &self.violations
    }

    pub fn is_violation(&self, output: usize) -> bool {
        self.violations.contains(&output)
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|s| s == name)
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|s| s == name)
    }

    pub fn encode(&self, names: &[&str]) -> Result<Vec<usize>, SulError> {
        names
            .iter()
            .map(|n| {
                self.input_index(n)
                    .ok_or_else(|| SulError::UnknownName(n.to_string()))
            })
            .collect()
    }

    /// Distance range output for gap `d`, ignoring velocity and latching.
    pub fn classify_distance(&self, d: f64) -> usize {
        let range = self.bounds.iter().take_while(|&&b| d >= b).count();
        self.range_outputs[range]
    }
}

/// The mapper's only state: a latched violation, cleared by reset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MapperState {
    pub latched: Option<usize>,
}

/// Abstracts one sample, latching violation symbols.
pub fn abstract_output(
    sample: &SampleRecord,
    alphabet: &AbstractAlphabet,
    state: &mut MapperState,
) -> usize {
    if let Some(o) = state.latched {
        return o;
    }
    let o = if crate::plant::reversing(sample.v_l) {
        alphabet.reverse
    } else {
        alphabet.classify_distance(sample.d)
    };
    if alphabet.is_violation(o) {
        state.latched = Some(o);
    }
    o
}

/// Prefix tree of answered abstract queries.
///
/// Every node except the root stores the output produced by the last symbol
/// of its path. A query is answered only when its whole path exists.
#[derive(Debug, Clone)]
pub struct QueryCache {
    k: usize,
    children: Vec<u32>,
    outputs: Vec<usize>,
}

const NONE: u32 = u32::MAX;

impl QueryCache {
    pub fn new(num_inputs: usize) -> Self {
        Self {
            k: num_inputs,
            children: vec![NONE; num_inputs],
            outputs: vec![usize::MAX],
        }
    }

    /// Number of cached prefixes, excluding the empty one.
    pub fn len(&self) -> usize {
        self.outputs.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, word: &[usize]) -> Option<Vec<usize>> {
        let mut node = 0usize;
        let mut out = Vec::with_capacity(word.len());
        for &i in word {
            let c = self.children[node * self.k + i];
            if c == NONE {
                return None;
            }
            node = c as usize;
            out.push(self.outputs[node]);
        }
        Some(out)
    }

    /// Outputs of the longest cached prefix of `word`.
    pub fn longest_prefix(&self, word: &[usize]) -> Vec<usize> {
        let mut node = 0usize;
        let mut out = Vec::new();
        for &i in word {
            let c = self.children[node * self.k + i];
            if c == NONE {
                break;
            }
            node = c as usize;
            out.push(self.outputs[node]);
        }
        out
    }

    /// Stores `outputs` for every prefix of `word`. On disagreement with an
    /// already cached prefix nothing past that point is stored and the
    /// offending position is returned.
    pub fn insert(&mut self, word: &[usize], outputs: &[usize]) -> Result<(), usize> {
        debug_assert_eq!(word.len(), outputs.len());
        let mut node = 0usize;
        for (pos, (&i, &o)) in word.iter().zip(outputs).enumerate() {
            let c = self.children[node * self.k + i];
            if c == NONE {
                let fresh = self.outputs.len();
                self.outputs.push(o);
                self.children.extend(core::iter::repeat(NONE).take(self.k));
                self.children[node * self.k + i] = fresh as u32;
                node = fresh;
            } else {
                node = c as usize;
                if self.outputs[node] != o {
                    return Err(pos);
                }
            }
        }
        Ok(())
    }
}

/// Answer to a query: the outputs and whether the system actually ran.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub outputs: Vec<usize>,
    pub executed: bool,
}

/// A black box answering abstract queries from its initial state.
pub trait Sul {
    fn num_inputs(&self) -> usize;
    fn query(&mut self, word: &[usize]) -> Result<Answer, SulError>;

    /// The answer to `word` if it can be given without executing anything.
    fn cached(&self, _word: &[usize]) -> Option<Vec<usize>> {
        None
    }
}

/// A Mealy machine behind the [`Sul`] interface, with an optional cache.
#[derive(Debug, Clone)]
pub struct MachineSul {
    machine: MealyMachine,
    cache: Option<QueryCache>,
    executions: u64,
}

impl MachineSul {
    pub fn new(machine: MealyMachine, cached: bool) -> Self {
        let cache = cached.then(|| QueryCache::new(machine.num_inputs()));
        Self {
            machine,
            cache,
            executions: 0,
        }
    }

    pub fn machine(&self) -> &MealyMachine {
        &self.machine
    }

    pub fn executions(&self) -> u64 {
        self.executions
    }
}

impl Sul for MachineSul {
    fn num_inputs(&self) -> usize {
        self.machine.num_inputs()
    }

    fn cached(&self, word: &[usize]) -> Option<Vec<usize>> {
        self.cache.as_ref().and_then(|c| c.lookup(word))
    }

    fn query(&mut self, word: &[usize]) -> Result<Answer, SulError> {
        if let Some(outputs) = self.cached(word) {
            return Ok(Answer {
                outputs,
                executed: false,
            });
        }
        let outputs = self
            .machine
            .run(word)
            .map_err(|_| {
                SulError::UnknownSymbol(
                    *word.iter().find(|&&i| i >= self.num_inputs()).unwrap_or(&0),
                )
            })?
            .into_parts()
            .1;
        self.executions += 1;
        if let Some(c) = self.cache.as_mut() {
            c.insert(word, &outputs)
                .map_err(|position| SulError::Nondeterminism {
                    word: word.to_vec(),
                    position,
                })?;
        }
        Ok(Answer {
            outputs,
            executed: true,
        })
    }
}

/// Full concrete record of one executed test.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteTrace {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    /// One record per sampling period, in time order.
    pub records: Vec<SampleRecord>,
    /// For each abstract input, the index one past its last record; the
    /// record before it is the one that was abstracted.
    pub block_ends: Vec<usize>,
    pub final_state: PlantState,
    pub curve_seed: u64,
}

impl ConcreteTrace {
    /// Abstract input symbol in force at each record.
    pub fn record_inputs(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.records.len());
        let mut start = 0;
        for (&i, &end) in self.inputs.iter().zip(&self.block_ends) {
            v.extend(core::iter::repeat(i).take(end - start));
            start = end;
        }
        v
    }
}

/// The platooning plant behind the mapper.
#[derive(Debug, Clone)]
pub struct Harness {
    plant: Plant,
    alphabet: AbstractAlphabet,
    cache: Option<QueryCache>,
    executions: u64,
}

impl Harness {
    pub fn new(
        cfg: PlantConfig,
        alphabet: AbstractAlphabet,
        cached: bool,
    ) -> Result<Self, SulError> {
        for c in &alphabet.conc {
            if !(c.acc >= cfg.accel_min && c.acc <= cfg.accel_max) {
                return Err(PlantError::AccelOutOfRange {
                    acc: c.acc,
                    min: cfg.accel_min,
                    max: cfg.accel_max,
                }
                .into());
            }
        }
        let cache = cached.then(|| QueryCache::new(alphabet.num_inputs()));
        Ok(Self {
            plant: Plant::new(cfg)?,
            alphabet,
            cache,
            executions: 0,
        })
    }

    pub fn alphabet(&self) -> &AbstractAlphabet {
        &self.alphabet
    }

    pub fn plant_config(&self) -> &PlantConfig {
        self.plant.config()
    }

    /// Number of real (uncached) plant executions so far.
    pub fn executions(&self) -> u64 {
        self.executions
    }

    pub fn cache(&self) -> Option<&QueryCache> {
        self.cache.as_ref()
    }

    fn check(&self, word: &[usize]) -> Result<(), SulError> {
        match word.iter().find(|&&i| i >= self.alphabet.num_inputs()) {
            Some(&bad) => Err(SulError::UnknownSymbol(bad)),
            None => Ok(()),
        }
    }

    /// λ_h(word): answers from the cache when the whole query is cached,
    /// otherwise resets and replays the plant.
    pub fn execute_abstract(&mut self, word: &[usize]) -> Result<Vec<usize>, SulError> {
        Ok(self.query(word)?.outputs)
    }

    /// Always executes on the plant, returning the concrete trace as well.
    /// The orientation signal is driven by `curve_seed`.
    pub fn execute_traced(
        &mut self,
        word: &[usize],
        curve_seed: u64,
    ) -> Result<ConcreteTrace, SulError> {
        self.check(word)?;
        let cfg = self.plant.config().with_curve_seed(curve_seed);
        let mut plant = Plant::new(cfg)?;
        let mut mapper = MapperState::default();
        let mut outputs = Vec::with_capacity(word.len());
        let mut records = Vec::new();
        let mut block_ends = Vec::with_capacity(word.len());
        for &i in word {
            let c = self.alphabet.conc(i);
            let mut last = None;
            for _ in 0..c.steps {
                let r = plant.step_control(c.acc, 1)?;
                records.push(r);
                last = Some(r);
            }
            block_ends.push(records.len());
            outputs.push(abstract_output(
                &last.expect("steps >= 1"),
                &self.alphabet,
                &mut mapper,
            ));
        }
        self.executions += 1;
        self.remember(word, &outputs)?;
        Ok(ConcreteTrace {
            inputs: word.to_vec(),
            outputs,
            records,
            block_ends,
            final_state: *plant.state(),
            curve_seed,
        })
    }

    fn run_plant(&mut self, word: &[usize]) -> Result<Vec<usize>, SulError> {
        self.plant.reset();
        let mut mapper = MapperState::default();
        let mut outputs = Vec::with_capacity(word.len());
        for &i in word {
            let c = self.alphabet.conc(i);
            let sample = self.plant.step_control(c.acc, c.steps)?;
            outputs.push(abstract_output(&sample, &self.alphabet, &mut mapper));
        }
        self.executions += 1;
        Ok(outputs)
    }

    fn remember(&mut self, word: &[usize], outputs: &[usize]) -> Result<(), SulError> {
        if let Some(c) = self.cache.as_mut() {
            c.insert(word, outputs)
                .map_err(|position| SulError::Nondeterminism {
                    word: word.to_vec(),
                    position,
                })?;
        }
        Ok(())
    }
}

impl Sul for Harness {
    fn num_inputs(&self) -> usize {
        self.alphabet.num_inputs()
    }

    fn cached(&self, word: &[usize]) -> Option<Vec<usize>> {
        self.cache.as_ref().and_then(|c| c.lookup(word))
    }

    fn query(&mut self, word: &[usize]) -> Result<Answer, SulError> {
        self.check(word)?;
        if let Some(outputs) = self.cached(word) {
            return Ok(Answer {
                outputs,
                executed: false,
            });
        }
        let outputs = self.run_plant(word)?;
        self.remember(word, &outputs)?;
        Ok(Answer {
            outputs,
            executed: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v_l: f64, d: f64) -> SampleRecord {
        SampleRecord {
            t_ms: 0,
            acc: 0.0,
            delta: 0.0,
            v_l,
            v_f: 0.0,
            d,
        }
    }

    #[test]
    fn shipped_alphabet_matches_mapper_contract() {
        let a = AbstractAlphabet::default();
        let conc: Vec<(f64, u32)> = (0..6).map(|i| (a.conc(i).acc, a.conc(i).steps)).collect();
        assert_eq!(
            conc,
            [(1.5, 2), (0.7, 2), (0.0, 2), (0.0, 8), (-0.7, 2), (-1.5, 2)]
        );
        assert_eq!(
            a.inputs(),
            [
                "fast-acc",
                "slow-acc",
                "const",
                "wait",
                "brake",
                "hard-brake"
            ]
        );
        assert_eq!(a.bounds()[0], 0.43);
        assert_eq!(a.outputs()[a.classify_distance(0.42)], "crash");
        let v: Vec<&str> = a
            .violations()
            .iter()
            .map(|&o| a.outputs()[o].as_str())
            .collect();
        assert_eq!(v, ["reverse", "crash"]);
    }

    #[test]
    fn abstraction_rules() {
        let a = AbstractAlphabet::default();
        let name = |o: usize| a.outputs()[o].clone();
        let mut m = MapperState::default();
        assert_eq!(
            name(abstract_output(&sample(-0.01, 5.0), &a, &mut m)),
            "reverse"
        );
        let mut m = MapperState::default();
        assert_eq!(
            name(abstract_output(&sample(0.5, 0.40), &a, &mut m)),
            "crash"
        );
        assert_eq!(
            name(abstract_output(&sample(1.0, 2.0), &a, &mut m)),
            "crash"
        );
        let mut m = MapperState::default();
        let seen: Vec<String> = [0.5, 0.7, 1.0, 1.3, 1.8, 3.0]
            .iter()
            .map(|&d| name(abstract_output(&sample(1.0, d), &a, &mut m)))
            .collect();
        assert_eq!(
            seen,
            [
                "danger",
                "very-close",
                "close",
                "nominal",
                "far",
                "very-far"
            ]
        );
        assert_eq!(m.latched, None);
        // bounds are inclusive on the lower end
        assert_eq!(name(a.classify_distance(0.43)), "danger");
    }

    #[test]
    fn cache_prefix_tree() {
        let mut c = QueryCache::new(2);
        assert_eq!(c.lookup(&[]), Some(vec![]));
        c.insert(&[0, 1, 1], &[5, 6, 7]).unwrap();
        assert_eq!(c.lookup(&[0, 1]), Some(vec![5, 6]));
        assert_eq!(c.lookup(&[0, 1, 1]), Some(vec![5, 6, 7]));
        assert_eq!(c.lookup(&[1]), None);
        assert_eq!(c.insert(&[0, 0], &[4, 4]), Err(0));
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn harness_basics() {
        let alphabet = AbstractAlphabet::default();
        let mut h = Harness::new(PlantConfig::default(), alphabet.clone(), true).unwrap();
        assert_eq!(h.execute_abstract(&[]).unwrap(), Vec::<usize>::new());
        let c = alphabet.input_index("const").unwrap();
        let out = h.execute_abstract(&[c]).unwrap();
        assert_eq!(alphabet.outputs()[out[0]], "close");
        assert_eq!(h.execute_abstract(&[7]), Err(SulError::UnknownSymbol(7)));
        let before = h.executions();
        assert!(!h.query(&[c]).unwrap().executed);
        assert_eq!(h.executions(), before);
    }

    #[test]
    fn nominal_initial_gap() {
        let alphabet = AbstractAlphabet::default();
        let mut cfg = PlantConfig::default();
        cfg.initial_distance = 1.4;
        cfg.standstill_gap = 1.4;
        let mut h = Harness::new(cfg, alphabet.clone(), false).unwrap();
        let out = h
            .execute_abstract(&alphabet.encode(&["const"]).unwrap())
            .unwrap();
        assert_eq!(alphabet.outputs()[out[0]], "nominal");
    }

    #[test]
    fn traced_execution_agrees_with_abstract() {
        let alphabet = AbstractAlphabet::default();
        let mut h = Harness::new(PlantConfig::default(), alphabet.clone(), false).unwrap();
        let word = alphabet
            .encode(&["fast-acc", "wait", "brake", "const"])
            .unwrap();
        let t = h.execute_traced(&word, 3).unwrap();
        assert_eq!(t.outputs, h.execute_abstract(&word).unwrap());
        assert_eq!(t.records.len(), 2 + 8 + 2 + 2);
        assert_eq!(t.block_ends, [2, 10, 12, 14]);
        assert_eq!(t.record_inputs().len(), 14);
        assert_eq!(t.records[1].t_ms, 375);
    }

    #[test]
    fn crash_reachable_and_latched() {
        let alphabet = AbstractAlphabet::default();
        let mut h = Harness::new(PlantConfig::default(), alphabet.clone(), false).unwrap();
        let mut names = vec!["fast-acc"; 6];
        names.extend(["hard-brake"; 6]);
        names.push("wait");
        names.extend(["const", "fast-acc", "brake"]);
        let out = h
            .execute_abstract(&alphabet.encode(&names).unwrap())
            .unwrap();
        let crash = alphabet.output_index("crash").unwrap();
        let first = out.iter().position(|&o| o == crash).expect("no crash");
        assert!(first < 13);
        assert!(out[first..].iter().all(|&o| o == crash));
        assert!(!out[..first].contains(&alphabet.output_index("reverse").unwrap()));
    }
}
