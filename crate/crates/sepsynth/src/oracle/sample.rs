//! Random pre-state construction: sample ghost values, materialize the
//! spatial atoms into a concrete heap, and rejection-test the pure part.

use super::eval::{eval_expr, eval_prop, ConcTree, EvalErr, GhostEnv, GhostVal};
use super::interp::{ConcreteState, ConcreteValue, HeapObj, INT_MAX, INT_MIN};
use crate::c::CType;
use crate::spec::{FunSpec, PointsToValue, Share, Sort, SpatialAtom, SpecExpr};
use rand::Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct SampleBounds {
    pub int_min: i64,
    pub int_max: i64,
    pub max_len: usize,
    pub attempts: usize,
}

impl Default for SampleBounds {
    fn default() -> Self {
        SampleBounds { int_min: -8, int_max: 8, max_len: 4, attempts: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct PreSample {
    /// All binders, including materialized addresses.
    pub ghosts: GhostEnv,
    pub state: ConcreteState,
    pub args: Vec<ConcreteValue>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SampleErr {
    #[error("no satisfying pre-state found in {attempts} attempts ({last})")]
    Unsat { attempts: usize, last: String },
    #[error("pre-state cannot be materialized: {0}")]
    Malformed(String),
}

fn sample_tree(rng: &mut impl Rng, budget: usize, lo: i64, hi: i64) -> ConcTree {
    if budget == 0 || rng.gen_ratio(1, 3) {
        return ConcTree::Leaf;
    }
    let k = rng.gen_range(lo..=hi);
    let left_budget = rng.gen_range(0..budget);
    ConcTree::Node(
        k,
        Box::new(sample_tree(rng, left_budget, lo, hi)),
        Box::new(sample_tree(rng, budget - 1 - left_budget, lo, hi)),
    )
}

fn sample_sort(rng: &mut impl Rng, sort: Sort, b: &SampleBounds) -> Option<GhostVal> {
    Some(match sort {
        Sort::Int => GhostVal::Int(rng.gen_range(b.int_min..=b.int_max)),
        Sort::Char => GhostVal::Int(rng.gen_range(0..=127)),
        Sort::Double => {
            let steps = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
            GhostVal::Double(steps[rng.gen_range(0..steps.len())])
        }
        Sort::Bool => GhostVal::Bool(rng.gen()),
        Sort::Share => {
            if rng.gen() {
                GhostVal::Share(Share::Full)
            } else {
                GhostVal::Share(Share::Readable)
            }
        }
        Sort::List => {
            let len = rng.gen_range(0..=b.max_len);
            GhostVal::List((0..len).map(|_| rng.gen_range(b.int_min..=b.int_max)).collect())
        }
        Sort::Tree => GhostVal::Tree(sample_tree(rng, b.max_len, b.int_min, b.int_max)),
        // Addresses are decided by heap materialization, never sampled.
        Sort::Addr => return None,
    })
}

/// Draw values for every non-address binder of the spec (with binders plus
/// pre existentials).
pub fn sample_ghosts(spec: &FunSpec, rng: &mut impl Rng, b: &SampleBounds) -> GhostEnv {
    let mut env = GhostEnv::new();
    for (name, sort) in spec.with_binders.iter().chain(&spec.pre.exists) {
        if let Some(v) = sample_sort(rng, *sort, b) {
            env.insert(name.clone(), v);
        }
    }
    env
}

fn cv_of_ghost(v: &GhostVal, sort_hint: Option<Sort>) -> Result<ConcreteValue, String> {
    Ok(match (v, sort_hint) {
        (GhostVal::Int(n), Some(Sort::Char)) => ConcreteValue::Char((*n).clamp(0, 255) as u8),
        (GhostVal::Int(n), _) => {
            if !(INT_MIN..=INT_MAX).contains(n) {
                return Err(format!("ghost int {} outside the machine range", n));
            }
            ConcreteValue::Int(*n)
        }
        (GhostVal::Double(d), _) => ConcreteValue::Double(*d),
        (GhostVal::Addr(a), _) => ConcreteValue::Addr(*a),
        (GhostVal::Bool(bv), _) => ConcreteValue::Int(*bv as i64),
        (other, _) => return Err(format!("{} cannot live in a scalar cell", other)),
    })
}

fn alloc_list(state: &mut ConcreteState, xs: &[i64]) -> usize {
    let mut cur = 0usize;
    for x in xs.iter().rev() {
        cur = state.alloc(HeapObj::Sll {
            head: ConcreteValue::Int(*x),
            next: ConcreteValue::Addr(cur),
        });
    }
    cur
}

fn alloc_tree(state: &mut ConcreteState, t: &ConcTree) -> usize {
    match t {
        ConcTree::Leaf => 0,
        ConcTree::Node(k, l, r) => {
            let la = alloc_tree(state, l);
            let ra = alloc_tree(state, r);
            state.alloc(HeapObj::Tree {
                key: ConcreteValue::Int(*k),
                left: ConcreteValue::Addr(la),
                right: ConcreteValue::Addr(ra),
            })
        }
    }
}

/// Shallow sort of an expression, enough to type heap cells.
fn expr_sort(e: &SpecExpr, sorts: &BTreeMap<String, Sort>) -> Option<Sort> {
    match e {
        SpecExpr::Var(v) => sorts.get(v).copied(),
        SpecExpr::Int(_) => Some(Sort::Int),
        SpecExpr::Double(_) => Some(Sort::Double),
        SpecExpr::Null => Some(Sort::Addr),
        SpecExpr::Arith(_, a, _) => expr_sort(a, sorts),
        _ => None,
    }
}

/// Build the concrete heap for `spec.pre` under fixed ghost values, binding
/// address binders along the way, then check the pure constraints.
///
/// Returns None when this valuation does not satisfy the pre (rejection);
/// hard structural problems (which resampling cannot fix) are `Err`.
pub fn materialize(
    spec: &FunSpec,
    ghosts: &GhostEnv,
) -> Result<Option<PreSample>, SampleErr> {
    let sorts: BTreeMap<String, Sort> = spec
        .with_binders
        .iter()
        .chain(&spec.pre.exists)
        .map(|(n, s)| (n.clone(), *s))
        .collect();
    let mut env = ghosts.clone();
    let mut state = ConcreteState::new();
    let mut pending: Vec<SpatialAtom> = spec.pre.spatial.clone();

    loop {
        let mut progressed = false;
        let mut next: Vec<SpatialAtom> = Vec::new();
        for atom in pending.drain(..) {
            match materialize_atom(&atom, &mut env, &mut state, &sorts) {
                Ok(MatStep::Done) => progressed = true,
                Ok(MatStep::Splice(atoms)) => {
                    progressed = true;
                    next.extend(atoms);
                }
                Ok(MatStep::Defer) => next.push(atom),
                Err(MatErr::Reject) => return Ok(None),
                Err(MatErr::Hard(m)) => return Err(SampleErr::Malformed(m)),
            }
        }
        if next.is_empty() {
            break;
        }
        if !progressed {
            let stuck: Vec<String> = next.iter().map(|a| a.to_string()).collect();
            return Err(SampleErr::Malformed(format!(
                "circular or unresolvable spatial atoms: {}",
                stuck.join(" * ")
            )));
        }
        pending = next;
    }

    // Rejection test on the pure part.
    for p in &spec.pre.pure {
        match eval_prop(&env, p) {
            Ok(true) => {}
            Ok(false) | Err(EvalErr::Partial(_)) => return Ok(None),
            Err(e) => return Err(SampleErr::Malformed(e.to_string())),
        }
    }

    // Evaluate the parameter expressions into call arguments.
    let mut args = Vec::new();
    for (i, pexpr) in spec.params.iter().enumerate() {
        let ty: Option<&CType> = spec.sig.params.get(i).map(|(_, t)| t);
        let gv = eval_expr(&env, pexpr).map_err(|e| SampleErr::Malformed(e.to_string()))?;
        let hint = match ty {
            Some(CType::Char) => Some(Sort::Char),
            _ => expr_sort(pexpr, &sorts),
        };
        match cv_of_ghost(&gv, hint) {
            Ok(cv) => args.push(cv),
            Err(_) => return Ok(None),
        }
    }

    Ok(Some(PreSample { ghosts: env, state, args }))
}

enum MatStep {
    Done,
    Defer,
    Splice(Vec<SpatialAtom>),
}

enum MatErr {
    /// This valuation cannot satisfy the pre; resample.
    Reject,
    /// The pre itself is broken; resampling will not help.
    Hard(String),
}

fn eval_or_defer(env: &GhostEnv, e: &SpecExpr) -> Result<Option<GhostVal>, MatErr> {
    match eval_expr(env, e) {
        Ok(v) => Ok(Some(v)),
        Err(EvalErr::UnboundVar(_)) => Ok(None),
        Err(EvalErr::Partial(_)) => Err(MatErr::Reject),
        Err(e) => Err(MatErr::Hard(e.to_string())),
    }
}

fn root_binder<'e>(e: &'e SpecExpr, env: &GhostEnv) -> Result<Option<&'e str>, MatErr> {
    match e {
        SpecExpr::Var(v) if !env.contains_key(v) => Ok(Some(v)),
        SpecExpr::Var(v) => match env.get(v) {
            // The address is already rooted by another atom; this valuation
            // cannot be realized as a heap.
            Some(GhostVal::Addr(_)) => Err(MatErr::Reject),
            _ => Err(MatErr::Hard(format!("spatial root `{}` is not address-sorted", v))),
        },
        SpecExpr::Null => Ok(None),
        other => Err(MatErr::Hard(format!(
            "spatial root `{}` must be a ghost binder or null",
            other
        ))),
    }
}

fn materialize_atom(
    atom: &SpatialAtom,
    env: &mut GhostEnv,
    state: &mut ConcreteState,
    sorts: &BTreeMap<String, Sort>,
) -> Result<MatStep, MatErr> {
    match atom {
        SpatialAtom::PtsTo { addr, share: _, value } => {
            let root = root_binder(addr, env)?;
            let obj = match value {
                PointsToValue::Scalar(e) => match eval_or_defer(env, e)? {
                    None => return Ok(MatStep::Defer),
                    Some(v) => {
                        let hint = expr_sort(e, sorts);
                        HeapObj::Cell(cv_of_ghost(&v, hint).map_err(MatErr::Hard)?)
                    }
                },
                PointsToValue::ListNode { head, next } => {
                    let (h, n) = match (eval_or_defer(env, head)?, eval_or_defer(env, next)?) {
                        (Some(h), Some(n)) => (h, n),
                        _ => return Ok(MatStep::Defer),
                    };
                    HeapObj::Sll {
                        head: cv_of_ghost(&h, Some(Sort::Int)).map_err(MatErr::Hard)?,
                        next: cv_of_ghost(&n, Some(Sort::Addr)).map_err(MatErr::Hard)?,
                    }
                }
                PointsToValue::TreeNode { key, left, right } => {
                    let (k, l, r) = match (
                        eval_or_defer(env, key)?,
                        eval_or_defer(env, left)?,
                        eval_or_defer(env, right)?,
                    ) {
                        (Some(k), Some(l), Some(r)) => (k, l, r),
                        _ => return Ok(MatStep::Defer),
                    };
                    HeapObj::Tree {
                        key: cv_of_ghost(&k, Some(Sort::Int)).map_err(MatErr::Hard)?,
                        left: cv_of_ghost(&l, Some(Sort::Addr)).map_err(MatErr::Hard)?,
                        right: cv_of_ghost(&r, Some(Sort::Addr)).map_err(MatErr::Hard)?,
                    }
                }
            };
            match root {
                Some(binder) => {
                    let a = state.alloc(obj);
                    env.insert(binder.to_string(), GhostVal::Addr(a));
                    Ok(MatStep::Done)
                }
                None => Err(MatErr::Reject),
            }
        }
        SpatialAtom::ListRep { elems, addr } => {
            let xs = match eval_or_defer(env, elems)? {
                None => return Ok(MatStep::Defer),
                Some(GhostVal::List(xs)) => xs,
                Some(other) => {
                    return Err(MatErr::Hard(format!("listrep contents evaluated to {}", other)))
                }
            };
            match root_binder(addr, env)? {
                Some(binder) => {
                    let a = alloc_list(state, &xs);
                    env.insert(binder.to_string(), GhostVal::Addr(a));
                    Ok(MatStep::Done)
                }
                None => {
                    if xs.is_empty() {
                        Ok(MatStep::Done)
                    } else {
                        Err(MatErr::Reject)
                    }
                }
            }
        }
        SpatialAtom::TreeRep { tree, addr } => {
            let t = match eval_or_defer(env, tree)? {
                None => return Ok(MatStep::Defer),
                Some(GhostVal::Tree(t)) => t,
                Some(other) => {
                    return Err(MatErr::Hard(format!("treerep contents evaluated to {}", other)))
                }
            };
            match root_binder(addr, env)? {
                Some(binder) => {
                    let a = alloc_tree(state, &t);
                    env.insert(binder.to_string(), GhostVal::Addr(a));
                    Ok(MatStep::Done)
                }
                None => {
                    if t == ConcTree::Leaf {
                        Ok(MatStep::Done)
                    } else {
                        Err(MatErr::Reject)
                    }
                }
            }
        }
        SpatialAtom::ArraySeg { elems, addr, len } => {
            let xs = match eval_or_defer(env, elems)? {
                None => return Ok(MatStep::Defer),
                Some(GhostVal::List(xs)) => xs,
                Some(other) => {
                    return Err(MatErr::Hard(format!("array contents evaluated to {}", other)))
                }
            };
            match eval_or_defer(env, len)? {
                None => return Ok(MatStep::Defer),
                Some(GhostVal::Int(n)) => {
                    if n != xs.len() as i64 {
                        return Err(MatErr::Reject);
                    }
                }
                Some(other) => {
                    return Err(MatErr::Hard(format!("array length evaluated to {}", other)))
                }
            }
            match root_binder(addr, env)? {
                Some(binder) => {
                    let a = state.alloc(HeapObj::Array(
                        xs.iter().map(|x| ConcreteValue::Int(*x)).collect(),
                    ));
                    env.insert(binder.to_string(), GhostVal::Addr(a));
                    Ok(MatStep::Done)
                }
                None => Err(MatErr::Reject),
            }
        }
        SpatialAtom::Cond { cond, then_atoms, else_atoms } => {
            match eval_prop(env, cond) {
                Ok(b) => Ok(MatStep::Splice(if b {
                    then_atoms.clone()
                } else {
                    else_atoms.clone()
                })),
                Err(EvalErr::UnboundVar(_)) => Ok(MatStep::Defer),
                Err(EvalErr::Partial(_)) => Err(MatErr::Reject),
                Err(e) => Err(MatErr::Hard(e.to_string())),
            }
        }
    }
}

/// Rejection-sample a satisfying pre-state.
pub fn sample_pre(
    spec: &FunSpec,
    rng: &mut impl Rng,
    bounds: &SampleBounds,
) -> Result<PreSample, SampleErr> {
    let mut last = String::from("no attempt made");
    for _ in 0..bounds.attempts.max(1) {
        let ghosts = sample_ghosts(spec, rng, bounds);
        match materialize(spec, &ghosts)? {
            Some(sample) => return Ok(sample),
            None => last = "pure constraints rejected the valuation".to_string(),
        }
    }
    Err(SampleErr::Unsat { attempts: bounds.attempts, last })
}
