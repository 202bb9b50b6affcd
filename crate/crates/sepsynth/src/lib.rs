//! Synthesis and verification for a restricted C dialect against
//! separation-logic specifications.
//!
//! The crate bundles:
//! - a parser, typechecker, and printer for the dialect ([`c`]);
//! - a textual specification language with points-to, list, tree, and array
//!   shapes ([`spec`]);
//! - a structural bias analyzer that rejects loops and novel helpers
//!   ([`bias`]);
//! - an entailment engine with a linear-integer pure solver ([`entail`]);
//! - a goal-directed forward verifier producing traceable side conditions
//!   ([`verify`]);
//! - a concrete interpreter and fuzzing oracle ([`oracle`]);
//! - a prompt-building retry loop around pluggable generator backends
//!   ([`synth`]);
//! - a benchmark harness with JSON reports ([`bench`]).
//!
//! Start with the `examples/` directory: each file is a runnable tour of one
//! capability (`cargo run --example verify_swap`, etc.). The `sepsynth`
//! binary exposes the same operations as subcommands.

pub mod span;

pub mod bias;
pub mod c;
pub mod entail;
pub mod oracle;
pub mod spec;
pub mod verify;
