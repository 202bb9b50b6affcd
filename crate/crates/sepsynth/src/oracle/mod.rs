//! Concrete semantics: an interpreter for the dialect, evaluation of
//! assertions over concrete states, pre-state sampling, and the
//! differential fuzzer used to cross-check the verifier.

pub mod eval;
pub mod fuzz;
pub mod interp;
pub mod sample;

pub use eval::{eval_expr, eval_prop, satisfies, ConcTree, EvalErr, GhostEnv, GhostVal};
pub use fuzz::{fuzz_check, Counterexample, FuzzConfig, FuzzOutcome};
pub use interp::{
    interp, ConcreteState, ConcreteValue, Fault, HeapObj, Machine, INT_MAX, INT_MIN,
};
pub use sample::{materialize, sample_ghosts, sample_pre, PreSample, SampleBounds, SampleErr};
