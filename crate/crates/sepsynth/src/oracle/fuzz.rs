//! Differential fuzzing: sample a pre-state, run the program concretely,
//! and evaluate the postcondition against what actually happened.

use super::eval::{satisfies, ConcTree, GhostEnv, GhostVal};
use super::interp::Machine;
use super::sample::{materialize, sample_ghosts, SampleBounds, SampleErr};
use crate::spec::FunSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub n: usize,
    pub seed: u64,
    pub bounds: SampleBounds,
    pub shrink_rounds: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig { n: 1000, seed: 0xC0FFEE, bounds: SampleBounds::default(), shrink_rounds: 200 }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FuzzOutcome {
    Pass {
        runs: usize,
    },
    /// The precondition never produced a satisfying sample: a spec smell,
    /// reported distinctly from both Pass and Counterexample.
    PreUnsat {
        attempts: usize,
        detail: String,
    },
    Counterexample(Counterexample),
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Counterexample {
    pub iteration: usize,
    /// Ghost valuation of the minimized failing input.
    pub ghosts: BTreeMap<String, String>,
    pub args: Vec<String>,
    /// What the run did: a fault, or the way the post failed.
    pub observed: String,
    /// The post assertion the run was checked against.
    pub expected: String,
}

impl FuzzOutcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, FuzzOutcome::Pass { .. })
    }
}

/// Run one concrete trial under a fixed ghost valuation.
/// `Ok(None)` means the valuation does not satisfy the pre.
fn run_one(
    machine: &Machine,
    spec: &FunSpec,
    ghosts: &GhostEnv,
) -> Result<Option<Result<(), String>>, SampleErr> {
    let sample = match materialize(spec, ghosts)? {
        Some(s) => s,
        None => return Ok(None),
    };
    let (ret, final_state) = match machine.run(&spec.name, &sample.args, sample.state.clone()) {
        Ok(r) => r,
        Err(fault) => return Ok(Some(Err(format!("fault: {}", fault)))),
    };
    let ret_pair = match (&spec.ret, ret) {
        (Some(re), Some(rv)) => Some((re, rv)),
        (Some(_), None) => {
            return Ok(Some(Err("function finished without returning a value".into())))
        }
        (None, _) => None,
    };
    match satisfies(&spec.post, &sample.ghosts, &final_state, ret_pair) {
        Ok(_) => Ok(Some(Ok(()))),
        Err(e) => Ok(Some(Err(format!("post violated: {}", e)))),
    }
}

/// Mutation candidates that make a ghost valuation strictly "smaller".
fn shrink_candidates(ghosts: &GhostEnv) -> Vec<GhostEnv> {
    let mut out = Vec::new();
    for (name, val) in ghosts {
        let mut push = |v: GhostVal| {
            let mut g = ghosts.clone();
            g.insert(name.clone(), v);
            out.push(g);
        };
        match val {
            GhostVal::Int(n) if *n != 0 => {
                push(GhostVal::Int(0));
                push(GhostVal::Int(n / 2));
                push(GhostVal::Int(n - n.signum()));
            }
            GhostVal::List(xs) if !xs.is_empty() => {
                push(GhostVal::List(xs[1..].to_vec()));
                push(GhostVal::List(xs[..xs.len() - 1].to_vec()));
                if xs.iter().any(|x| *x != 0) {
                    push(GhostVal::List(xs.iter().map(|_| 0).collect()));
                }
            }
            GhostVal::Tree(t) if *t != ConcTree::Leaf => {
                push(GhostVal::Tree(ConcTree::Leaf));
                if let ConcTree::Node(_, l, r) = t {
                    push(GhostVal::Tree((**l).clone()));
                    push(GhostVal::Tree((**r).clone()));
                }
            }
            _ => {}
        }
    }
    out
}

fn render_counterexample(
    iteration: usize,
    spec: &FunSpec,
    ghosts: &GhostEnv,
    failure: &str,
) -> Counterexample {
    let rendered: BTreeMap<String, String> = ghosts
        .iter()
        .filter(|(n, _)| {
            spec.with_binders.iter().any(|(b, _)| b == *n)
                || spec.pre.exists.iter().any(|(b, _)| b == *n)
        })
        .map(|(n, v)| (n.clone(), v.to_string()))
        .collect();
    let args = match materialize(spec, ghosts) {
        Ok(Some(sample)) => sample.args.iter().map(|a| a.to_string()).collect(),
        _ => Vec::new(),
    };
    Counterexample {
        iteration,
        ghosts: rendered,
        args,
        observed: failure.to_string(),
        expected: spec.post.to_string(),
    }
}

/// `n` rounds of sample / run / check. Any fault or post violation is
/// greedily minimized before being reported.
pub fn fuzz_check(machine: &Machine, spec: &FunSpec, cfg: &FuzzConfig) -> FuzzOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut runs = 0usize;
    for iteration in 0..cfg.n {
        // Rejection sampling with the per-iteration attempt budget.
        let mut found = None;
        let mut rejected = 0usize;
        while rejected < cfg.bounds.attempts {
            let ghosts = sample_ghosts(spec, &mut rng, &cfg.bounds);
            match run_one(machine, spec, &ghosts) {
                Ok(Some(result)) => {
                    found = Some((ghosts, result));
                    break;
                }
                Ok(None) => rejected += 1,
                Err(e) => {
                    return FuzzOutcome::PreUnsat {
                        attempts: rejected,
                        detail: e.to_string(),
                    }
                }
            }
        }
        let (mut ghosts, result) = match found {
            Some(x) => x,
            None => {
                return FuzzOutcome::PreUnsat {
                    attempts: cfg.bounds.attempts,
                    detail: "pure constraints rejected every sampled valuation".into(),
                }
            }
        };
        runs += 1;
        let mut failure = match result {
            Ok(()) => continue,
            Err(f) => f,
        };

        // Greedy shrink: keep any smaller valuation that still satisfies
        // the pre and still fails.
        let mut budget = cfg.shrink_rounds;
        'outer: while budget > 0 {
            for cand in shrink_candidates(&ghosts) {
                budget = budget.saturating_sub(1);
                if budget == 0 {
                    break 'outer;
                }
                if let Ok(Some(Err(f))) = run_one(machine, spec, &cand) {
                    ghosts = cand;
                    failure = f;
                    continue 'outer;
                }
            }
            break;
        }
        return FuzzOutcome::Counterexample(render_counterexample(
            iteration, spec, &ghosts, &failure,
        ));
    }
    FuzzOutcome::Pass { runs }
}
