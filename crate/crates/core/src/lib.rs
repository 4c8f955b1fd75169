//! Learning-based testing of a hybrid platooning system.
//!
//! The crate covers the whole chain from a black-box plant to a recurrent
//! behavior model:
//!
//! * [`mealy`] holds finite-state Mealy machines, execution, shortest-path
//!   searches and equivalence checking.
//! * [`plant`] is the reference two-vehicle platoon (leader kinematics plus a
//!   constant-time-headway follower), integrated with fixed-step Euler.
//! * [`harness`] is the mapper and test driver: it concretizes abstract
//!   inputs, abstracts sampled outputs, latches violations and caches queries.
//! * [`learner`] is a discrimination-tree (Kearns–Vazirani style) Mealy
//!   learner with Rivest–Schapire counterexample decomposition.
//! * [`testgen`] implements random, learning-based, transition-coverage and
//!   output-directed test suite generation.
//! * [`dataset`] turns executed traces into fixed-length normalized sequences.
//! * [`rnn`] is a from-scratch plain RNN / LSTM with BPTT and Adam.
//! * [`eval`] scores crash predictions.
//!
//! Everything here is pure computation over `alloc` collections; file formats,
//! orchestration and the command line live in the `mbtlearn` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod eval;
pub mod harness;
pub mod kv;
pub mod learner;
pub mod mealy;
pub mod plant;
pub mod rnn;
pub mod seed;
pub mod testgen;

pub use mealy::{MealyMachine, Observation};
