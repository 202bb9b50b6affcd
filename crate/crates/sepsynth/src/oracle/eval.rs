//! Evaluation of spec expressions and assertions over concrete states.
//!
//! This module is the semantic anchor of the whole pipeline: an assertion
//! means exactly what `satisfies` says it means, and both the fuzzer and the
//! verifier are judged against it (see docs/semantics.md).
//!
//! Highlights of the semantics:
//! - ghost integers are unbounded (the C side faults on overflow before any
//!   comparison happens);
//! - slices `l[i .. j]` are half-open and clamp to the list, so `sorted([])`
//!   and friends are vacuously true;
//! - `head`/`tail`/`tmin` on empty structures and out-of-range indexing are
//!   partiality errors, not `false`;
//! - the spatial part must cover the heap exactly: unconsumed objects are
//!   leaks and count as violations;
//! - existentials are solved functionally against the heap where possible
//!   (return clause first, then cell contents), with a bounded witness
//!   search as a last resort for pure-only integers.

use super::interp::{ConcreteState, ConcreteValue, HeapObj};
use crate::spec::{
    Assertion, CmpOp, PointsToValue, PureProp, Share, Sort, SpatialAtom, SpecExpr,
    UnaryPred,
};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub type GhostEnv = BTreeMap<String, GhostVal>;

#[derive(Debug, Clone, PartialEq)]
pub enum GhostVal {
    Int(i64),
    Double(f64),
    Bool(bool),
    Addr(usize),
    Share(Share),
    List(Vec<i64>),
    Tree(ConcTree),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConcTree {
    Leaf,
    Node(i64, Box<ConcTree>, Box<ConcTree>),
}

impl ConcTree {
    pub fn size(&self) -> usize {
        match self {
            ConcTree::Leaf => 0,
            ConcTree::Node(_, l, r) => 1 + l.size() + r.size(),
        }
    }
}

impl std::fmt::Display for GhostVal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GhostVal::Int(n) => write!(f, "{}", n),
            GhostVal::Double(d) => write!(f, "{:?}", d),
            GhostVal::Bool(b) => write!(f, "{}", b),
            GhostVal::Addr(0) => write!(f, "null"),
            GhostVal::Addr(a) => write!(f, "@{}", a),
            GhostVal::Share(s) => write!(f, "{}", s),
            GhostVal::List(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            GhostVal::Tree(t) => {
                fn go(t: &ConcTree, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                    match t {
                        ConcTree::Leaf => write!(f, "leaf"),
                        ConcTree::Node(k, l, r) => {
                            write!(f, "node({}, ", k)?;
                            go(l, f)?;
                            write!(f, ", ")?;
                            go(r, f)?;
                            write!(f, ")")
                        }
                    }
                }
                go(t, f)
            }
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalErr {
    #[error("unbound variable `{0}`")]
    UnboundVar(String),
    #[error("sort error: {0}")]
    Sort(String),
    #[error("partial operation: {0}")]
    Partial(String),
    #[error("heap mismatch: {0}")]
    HeapMismatch(String),
    #[error("leaked heap objects at {0:?}")]
    Leak(Vec<usize>),
    #[error("pure proposition violated: {0}")]
    PureViolation(String),
    #[error("no witness found for existential(s): {0}")]
    NoWitness(String),
    #[error("return value mismatch: {0}")]
    Ret(String),
    #[error("evaluation budget exceeded: {0}")]
    Budget(String),
}

type ER<T> = Result<T, EvalErr>;

// ---------------------------------------------------------------------------
// Expression evaluation
// ---------------------------------------------------------------------------

fn as_int(v: GhostVal, what: &str) -> ER<i64> {
    match v {
        GhostVal::Int(n) => Ok(n),
        other => Err(EvalErr::Sort(format!("{} expects an int, got {}", what, other))),
    }
}

fn as_list(v: GhostVal, what: &str) -> ER<Vec<i64>> {
    match v {
        GhostVal::List(xs) => Ok(xs),
        other => Err(EvalErr::Sort(format!("{} expects a list, got {}", what, other))),
    }
}

fn as_tree(v: GhostVal, what: &str) -> ER<ConcTree> {
    match v {
        GhostVal::Tree(t) => Ok(t),
        other => Err(EvalErr::Sort(format!("{} expects a tree, got {}", what, other))),
    }
}

pub fn eval_unary_pred(env: &GhostEnv, p: &UnaryPred, x: i64) -> ER<bool> {
    Ok(match p {
        UnaryPred::Even => x.rem_euclid(2) == 0,
        UnaryPred::Odd => x.rem_euclid(2) == 1,
        UnaryPred::CmpWith(op, bound) => {
            let b = as_int(eval_expr(env, bound)?, "predicate bound")?;
            op.eval(x, b)
        }
    })
}

fn tinsert(t: ConcTree, k: i64) -> ConcTree {
    match t {
        ConcTree::Leaf => ConcTree::Node(k, Box::new(ConcTree::Leaf), Box::new(ConcTree::Leaf)),
        ConcTree::Node(key, l, r) => {
            if k < key {
                ConcTree::Node(key, Box::new(tinsert(*l, k)), r)
            } else if k > key {
                ConcTree::Node(key, l, Box::new(tinsert(*r, k)))
            } else {
                ConcTree::Node(key, l, r)
            }
        }
    }
}

fn tlookup(t: &ConcTree, k: i64) -> bool {
    match t {
        ConcTree::Leaf => false,
        ConcTree::Node(key, l, r) => {
            if k < *key {
                tlookup(l, k)
            } else if k > *key {
                tlookup(r, k)
            } else {
                true
            }
        }
    }
}

fn tmin(t: &ConcTree) -> Option<i64> {
    match t {
        ConcTree::Leaf => None,
        ConcTree::Node(k, l, _) => Some(tmin(l).unwrap_or(*k)),
    }
}

fn skew(xs: &[i64]) -> ConcTree {
    match xs.split_first() {
        None => ConcTree::Leaf,
        Some((h, t)) => ConcTree::Node(*h, Box::new(ConcTree::Leaf), Box::new(skew(t))),
    }
}

pub fn eval_expr(env: &GhostEnv, e: &SpecExpr) -> ER<GhostVal> {
    match e {
        SpecExpr::Var(v) => env
            .get(v)
            .cloned()
            .ok_or_else(|| EvalErr::UnboundVar(v.clone())),
        SpecExpr::Int(n) => Ok(GhostVal::Int(*n)),
        SpecExpr::Double(d) => Ok(GhostVal::Double(*d)),
        SpecExpr::BoolL(b) => Ok(GhostVal::Bool(*b)),
        SpecExpr::Null => Ok(GhostVal::Addr(0)),
        SpecExpr::ShareL(s) => Ok(GhostVal::Share(*s)),
        SpecExpr::Arith(op, a, b) => {
            let x = eval_expr(env, a)?;
            let y = eval_expr(env, b)?;
            match (x, y) {
                (GhostVal::Int(x), GhostVal::Int(y)) => {
                    use crate::spec::ArithOp::*;
                    let v = match op {
                        Add => x.checked_add(y),
                        Sub => x.checked_sub(y),
                        Mul => x.checked_mul(y),
                        Div => {
                            if y == 0 {
                                return Err(EvalErr::Partial("division by zero".into()));
                            }
                            x.checked_div(y)
                        }
                        Mod => {
                            if y == 0 {
                                return Err(EvalErr::Partial("mod by zero".into()));
                            }
                            x.checked_rem(y)
                        }
                    };
                    v.map(GhostVal::Int)
                        .ok_or_else(|| EvalErr::Budget("ghost arithmetic overflowed i64".into()))
                }
                (GhostVal::Double(x), GhostVal::Double(y)) => {
                    use crate::spec::ArithOp::*;
                    Ok(GhostVal::Double(match op {
                        Add => x + y,
                        Sub => x - y,
                        Mul => x * y,
                        Div => x / y,
                        Mod => return Err(EvalErr::Sort("mod on doubles".into())),
                    }))
                }
                (x, y) => Err(EvalErr::Sort(format!(
                    "arithmetic on {} and {}",
                    x, y
                ))),
            }
        }
        SpecExpr::Nil => Ok(GhostVal::List(Vec::new())),
        SpecExpr::Cons(h, t) => {
            let hv = as_int(eval_expr(env, h)?, "cons head")?;
            let mut tv = as_list(eval_expr(env, t)?, "cons tail")?;
            tv.insert(0, hv);
            Ok(GhostVal::List(tv))
        }
        SpecExpr::Append(a, b) => {
            let mut x = as_list(eval_expr(env, a)?, "append")?;
            let y = as_list(eval_expr(env, b)?, "append")?;
            x.extend(y);
            Ok(GhostVal::List(x))
        }
        SpecExpr::Len(l) => {
            let xs = as_list(eval_expr(env, l)?, "len")?;
            Ok(GhostVal::Int(xs.len() as i64))
        }
        SpecExpr::Head(l) => {
            let xs = as_list(eval_expr(env, l)?, "head")?;
            xs.first()
                .map(|x| GhostVal::Int(*x))
                .ok_or_else(|| EvalErr::Partial("head of empty list".into()))
        }
        SpecExpr::Tail(l) => {
            let xs = as_list(eval_expr(env, l)?, "tail")?;
            if xs.is_empty() {
                Err(EvalErr::Partial("tail of empty list".into()))
            } else {
                Ok(GhostVal::List(xs[1..].to_vec()))
            }
        }
        SpecExpr::Slice(l, i, j) => {
            let xs = as_list(eval_expr(env, l)?, "slice")?;
            let lo = as_int(eval_expr(env, i)?, "slice lower bound")?;
            let hi = as_int(eval_expr(env, j)?, "slice upper bound")?;
            // A degenerate range is the empty list; a genuine range must lie
            // entirely inside the list, otherwise the slice is undefined.
            if lo >= hi {
                Ok(GhostVal::List(Vec::new()))
            } else if lo < 0 || hi as usize > xs.len() {
                Err(EvalErr::Partial(format!(
                    "slice [{} .. {}) out of range (len {})",
                    lo,
                    hi,
                    xs.len()
                )))
            } else {
                Ok(GhostVal::List(xs[lo as usize..hi as usize].to_vec()))
            }
        }
        SpecExpr::Index(l, i) => {
            let xs = as_list(eval_expr(env, l)?, "index")?;
            let i = as_int(eval_expr(env, i)?, "index")?;
            if i < 0 || i as usize >= xs.len() {
                Err(EvalErr::Partial(format!("index {} out of range (len {})", i, xs.len())))
            } else {
                Ok(GhostVal::Int(xs[i as usize]))
            }
        }
        SpecExpr::Store(l, i, v) => {
            let mut xs = as_list(eval_expr(env, l)?, "store")?;
            let i = as_int(eval_expr(env, i)?, "store index")?;
            let v = as_int(eval_expr(env, v)?, "store value")?;
            if i < 0 || i as usize >= xs.len() {
                Err(EvalErr::Partial(format!("store index {} out of range (len {})", i, xs.len())))
            } else {
                xs[i as usize] = v;
                Ok(GhostVal::List(xs))
            }
        }
        SpecExpr::MapAdd(l, k) => {
            let xs = as_list(eval_expr(env, l)?, "map_add")?;
            let k = as_int(eval_expr(env, k)?, "map_add")?;
            Ok(GhostVal::List(xs.into_iter().map(|x| x + k).collect()))
        }
        SpecExpr::Filter(p, l) => {
            let xs = as_list(eval_expr(env, l)?, "filter")?;
            let mut out = Vec::new();
            for x in xs {
                if eval_unary_pred(env, p, x)? {
                    out.push(x);
                }
            }
            Ok(GhostVal::List(out))
        }
        SpecExpr::Leaf => Ok(GhostVal::Tree(ConcTree::Leaf)),
        SpecExpr::TNode(k, l, r) => {
            let k = as_int(eval_expr(env, k)?, "node key")?;
            let l = as_tree(eval_expr(env, l)?, "node left")?;
            let r = as_tree(eval_expr(env, r)?, "node right")?;
            Ok(GhostVal::Tree(ConcTree::Node(k, Box::new(l), Box::new(r))))
        }
        SpecExpr::TLookup(t, k) => {
            let t = as_tree(eval_expr(env, t)?, "tlookup")?;
            let k = as_int(eval_expr(env, k)?, "tlookup key")?;
            Ok(GhostVal::Int(if tlookup(&t, k) { 1 } else { 0 }))
        }
        SpecExpr::TInsert(t, k) => {
            let t = as_tree(eval_expr(env, t)?, "tinsert")?;
            let k = as_int(eval_expr(env, k)?, "tinsert key")?;
            Ok(GhostVal::Tree(tinsert(t, k)))
        }
        SpecExpr::TMin(t) => {
            let t = as_tree(eval_expr(env, t)?, "tmin")?;
            tmin(&t)
                .map(GhostVal::Int)
                .ok_or_else(|| EvalErr::Partial("tmin of empty tree".into()))
        }
        SpecExpr::TFoldIns(t, l) => {
            let t = as_tree(eval_expr(env, t)?, "tfoldins")?;
            let xs = as_list(eval_expr(env, l)?, "tfoldins")?;
            Ok(GhostVal::Tree(xs.into_iter().fold(t, tinsert)))
        }
        SpecExpr::Skew(l) => {
            let xs = as_list(eval_expr(env, l)?, "skew")?;
            Ok(GhostVal::Tree(skew(&xs)))
        }
        SpecExpr::Ite(c, a, b) => {
            if eval_prop(env, c)? {
                eval_expr(env, a)
            } else {
                eval_expr(env, b)
            }
        }
    }
}

fn cmp_ghost(op: CmpOp, a: &GhostVal, b: &GhostVal) -> ER<bool> {
    use GhostVal as G;
    Ok(match (a, b) {
        (G::Int(x), G::Int(y)) => op.eval(*x, *y),
        (G::Double(x), G::Double(y)) => match op {
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
            CmpOp::Lt => x < y,
            CmpOp::Le => x <= y,
            CmpOp::Gt => x > y,
            CmpOp::Ge => x >= y,
        },
        (G::Addr(x), G::Addr(y)) => match op {
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
            _ => return Err(EvalErr::Sort("ordering comparison on addresses".into())),
        },
        (G::Bool(x), G::Bool(y)) => match op {
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
            _ => return Err(EvalErr::Sort("ordering comparison on booleans".into())),
        },
        (G::Share(x), G::Share(y)) => match op {
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
            _ => return Err(EvalErr::Sort("ordering comparison on shares".into())),
        },
        (G::List(x), G::List(y)) => match op {
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
            _ => return Err(EvalErr::Sort("ordering comparison on lists".into())),
        },
        (G::Tree(x), G::Tree(y)) => match op {
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
            _ => return Err(EvalErr::Sort("ordering comparison on trees".into())),
        },
        (x, y) => {
            return Err(EvalErr::Sort(format!(
                "comparison between different sorts: {} vs {}",
                x, y
            )))
        }
    })
}

const FORALL_IDX_BUDGET: i64 = 10_000;

pub fn eval_prop(env: &GhostEnv, p: &PureProp) -> ER<bool> {
    match p {
        PureProp::TrueP => Ok(true),
        PureProp::FalseP => Ok(false),
        PureProp::Cmp(op, a, b) => {
            let x = eval_expr(env, a)?;
            let y = eval_expr(env, b)?;
            cmp_ghost(*op, &x, &y)
        }
        PureProp::And(ps) => {
            for q in ps {
                if !eval_prop(env, q)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        PureProp::Or(ps) => {
            for q in ps {
                if eval_prop(env, q)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        PureProp::Not(q) => Ok(!eval_prop(env, q)?),
        PureProp::In(x, l) => {
            let x = as_int(eval_expr(env, x)?, "in")?;
            let xs = as_list(eval_expr(env, l)?, "in")?;
            Ok(xs.contains(&x))
        }
        PureProp::Forall(pred, l) => {
            let xs = as_list(eval_expr(env, l)?, "forall")?;
            for x in xs {
                if !eval_unary_pred(env, pred, x)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        PureProp::Forall2(pred, a, b) => {
            let xs = as_list(eval_expr(env, a)?, "forall2")?;
            let ys = as_list(eval_expr(env, b)?, "forall2")?;
            if xs.len() != ys.len() {
                return Err(EvalErr::Partial(format!(
                    "forall2 over lists of different lengths ({} vs {})",
                    xs.len(),
                    ys.len()
                )));
            }
            let op = pred.cmp_op();
            Ok(xs.iter().zip(&ys).all(|(x, y)| op.eval(*x, *y)))
        }
        PureProp::Sorted(l) => {
            let xs = as_list(eval_expr(env, l)?, "sorted")?;
            Ok(xs.windows(2).all(|w| w[0] <= w[1]))
        }
        PureProp::Ite(c, p, q) => {
            if eval_prop(env, c)? {
                eval_prop(env, p)
            } else {
                eval_prop(env, q)
            }
        }
        PureProp::ForallIdx { idx, lo, hi, body } => {
            let lo = as_int(eval_expr(env, lo)?, "forallidx lower bound")?;
            let hi = as_int(eval_expr(env, hi)?, "forallidx upper bound")?;
            if hi - lo > FORALL_IDX_BUDGET {
                return Err(EvalErr::Budget("forallidx range too large".into()));
            }
            let mut child = env.clone();
            for i in lo..hi {
                child.insert(idx.clone(), GhostVal::Int(i));
                if !eval_prop(&child, body)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

// ---------------------------------------------------------------------------
// Assertion satisfaction
// ---------------------------------------------------------------------------

/// Does ghost value `g` denote concrete value `c`? Char cells compare as
/// their integer codes; doubles compare exactly (specs restrict double
/// reasoning to equality).
fn ghost_matches_cv(g: &GhostVal, c: &ConcreteValue) -> bool {
    match (g, c) {
        (GhostVal::Int(x), ConcreteValue::Int(y)) => *x == *y,
        (GhostVal::Int(x), ConcreteValue::Char(y)) => *x == *y as i64,
        (GhostVal::Double(x), ConcreteValue::Double(y)) => x == y,
        (GhostVal::Addr(x), ConcreteValue::Addr(y)) => *x == *y,
        _ => false,
    }
}

fn ghost_of_cv(c: &ConcreteValue, sort: Option<Sort>) -> GhostVal {
    match (c, sort) {
        (ConcreteValue::Int(n), _) => GhostVal::Int(*n),
        (ConcreteValue::Char(ch), _) => GhostVal::Int(*ch as i64),
        (ConcreteValue::Double(d), _) => GhostVal::Double(*d),
        (ConcreteValue::Addr(a), _) => GhostVal::Addr(*a),
    }
}

struct Matcher<'a> {
    state: &'a ConcreteState,
    exists: BTreeMap<String, Sort>,
}

#[derive(Debug, Clone, Default)]
struct MatchCtx {
    env: GhostEnv,
    consumed: BTreeSet<usize>,
    deferred: Vec<PureProp>,
}

impl<'a> Matcher<'a> {
    /// Try to bind `expr` (when it is an unbound existential variable) or
    /// check it against the given ghost value.
    fn bind_or_check(&self, ctx: &mut MatchCtx, expr: &SpecExpr, val: GhostVal) -> ER<()> {
        if let SpecExpr::Var(v) = expr {
            if !ctx.env.contains_key(v) && self.exists.contains_key(v) {
                ctx.env.insert(v.clone(), val);
                return Ok(());
            }
        }
        let want = eval_expr(&ctx.env, expr)?;
        let ok = match (&want, &val) {
            (GhostVal::Int(_), _) | (GhostVal::Addr(_), _) | (GhostVal::Double(_), _) => {
                want == val
                    || matches!((&want, &val), (GhostVal::Int(a), GhostVal::Int(b)) if a == b)
            }
            _ => want == val,
        };
        if ok {
            Ok(())
        } else {
            Err(EvalErr::HeapMismatch(format!(
                "expected `{}` = {}, heap has {}",
                expr, want, val
            )))
        }
    }

    fn take_obj(&self, ctx: &mut MatchCtx, addr: usize, what: &str) -> ER<&'a HeapObj> {
        if addr == 0 {
            return Err(EvalErr::HeapMismatch(format!("{} rooted at null", what)));
        }
        if !ctx.consumed.insert(addr) {
            return Err(EvalErr::HeapMismatch(format!(
                "object at @{} claimed twice (while matching {})",
                addr, what
            )));
        }
        self.state
            .heap
            .get(&addr)
            .ok_or_else(|| EvalErr::HeapMismatch(format!("{}: no object at @{}", what, addr)))
    }

    /// Walk a null-terminated chain of `sll` nodes, consuming them.
    fn walk_list(&self, ctx: &mut MatchCtx, start: usize) -> ER<Vec<i64>> {
        let mut out = Vec::new();
        let mut cur = start;
        while cur != 0 {
            let obj = self.take_obj(ctx, cur, "listrep")?;
            match obj {
                HeapObj::Sll { head, next } => {
                    let h = head
                        .as_int()
                        .ok_or_else(|| EvalErr::HeapMismatch("non-integer list head".into()))?;
                    out.push(h);
                    cur = match next {
                        ConcreteValue::Addr(a) => *a,
                        _ => {
                            return Err(EvalErr::HeapMismatch(
                                "list next field is not an address".into(),
                            ))
                        }
                    };
                }
                other => {
                    return Err(EvalErr::HeapMismatch(format!(
                        "listrep expected an sll node at @{}, found {:?}",
                        cur, other
                    )))
                }
            }
        }
        Ok(out)
    }

    fn walk_tree(&self, ctx: &mut MatchCtx, root: usize) -> ER<ConcTree> {
        if root == 0 {
            return Ok(ConcTree::Leaf);
        }
        let obj = self.take_obj(ctx, root, "treerep")?;
        match obj {
            HeapObj::Tree { key, left, right } => {
                let k = key
                    .as_int()
                    .ok_or_else(|| EvalErr::HeapMismatch("non-integer tree key".into()))?;
                let la = match left {
                    ConcreteValue::Addr(a) => *a,
                    _ => return Err(EvalErr::HeapMismatch("tree left is not an address".into())),
                };
                let ra = match right {
                    ConcreteValue::Addr(a) => *a,
                    _ => return Err(EvalErr::HeapMismatch("tree right is not an address".into())),
                };
                let l = self.walk_tree(ctx, la)?;
                let r = self.walk_tree(ctx, ra)?;
                Ok(ConcTree::Node(k, Box::new(l), Box::new(r)))
            }
            other => Err(EvalErr::HeapMismatch(format!(
                "treerep expected a tree node at @{}, found {:?}",
                root, other
            ))),
        }
    }

    /// Deterministically match one atom whose root address evaluates.
    fn match_atom(&self, ctx: &mut MatchCtx, atom: &SpatialAtom) -> ER<Vec<SpatialAtom>> {
        match atom {
            SpatialAtom::PtsTo { addr, share, value } => {
                let a = match eval_expr(&ctx.env, addr)? {
                    GhostVal::Addr(a) => a,
                    other => {
                        return Err(EvalErr::Sort(format!(
                            "points-to address evaluated to {}",
                            other
                        )))
                    }
                };
                // Shares are not represented concretely; still require the
                // share expression to evaluate to a share value.
                match eval_expr(&ctx.env, share) {
                    Ok(GhostVal::Share(_)) => {}
                    Ok(other) => {
                        return Err(EvalErr::Sort(format!("share evaluated to {}", other)))
                    }
                    Err(EvalErr::UnboundVar(_)) => {}
                    Err(e) => return Err(e),
                }
                let obj = self.take_obj(ctx, a, "points-to")?;
                match (value, obj) {
                    (PointsToValue::Scalar(e), HeapObj::Cell(cv)) => {
                        self.bind_or_check(ctx, e, ghost_of_cv(cv, None))
                    }
                    (PointsToValue::ListNode { head, next }, HeapObj::Sll { head: h, next: n }) => {
                        self.bind_or_check(ctx, head, ghost_of_cv(h, None))?;
                        self.bind_or_check(ctx, next, ghost_of_cv(n, None))
                    }
                    (
                        PointsToValue::TreeNode { key, left, right },
                        HeapObj::Tree { key: k, left: l, right: r },
                    ) => {
                        self.bind_or_check(ctx, key, ghost_of_cv(k, None))?;
                        self.bind_or_check(ctx, left, ghost_of_cv(l, None))?;
                        self.bind_or_check(ctx, right, ghost_of_cv(r, None))
                    }
                    (v, obj) => Err(EvalErr::HeapMismatch(format!(
                        "cell shape mismatch at @{}: assertion wants {:?}, heap has {:?}",
                        a, v, obj
                    ))),
                }?;
                Ok(Vec::new())
            }
            SpatialAtom::ListRep { elems, addr } => {
                let a = match eval_expr(&ctx.env, addr)? {
                    GhostVal::Addr(a) => a,
                    other => {
                        return Err(EvalErr::Sort(format!("listrep address evaluated to {}", other)))
                    }
                };
                let xs = self.walk_list(ctx, a)?;
                self.bind_or_check(ctx, elems, GhostVal::List(xs))?;
                Ok(Vec::new())
            }
            SpatialAtom::TreeRep { tree, addr } => {
                let a = match eval_expr(&ctx.env, addr)? {
                    GhostVal::Addr(a) => a,
                    other => {
                        return Err(EvalErr::Sort(format!("treerep address evaluated to {}", other)))
                    }
                };
                let t = self.walk_tree(ctx, a)?;
                self.bind_or_check(ctx, tree, GhostVal::Tree(t))?;
                Ok(Vec::new())
            }
            SpatialAtom::ArraySeg { elems, addr, len } => {
                let a = match eval_expr(&ctx.env, addr)? {
                    GhostVal::Addr(a) => a,
                    other => {
                        return Err(EvalErr::Sort(format!("array address evaluated to {}", other)))
                    }
                };
                let obj = self.take_obj(ctx, a, "array")?;
                let vals = match obj {
                    HeapObj::Array(vs) => vs,
                    other => {
                        return Err(EvalErr::HeapMismatch(format!(
                            "array expected a block at @{}, found {:?}",
                            a, other
                        )))
                    }
                };
                let ints: Option<Vec<i64>> = vals.iter().map(|v| v.as_int()).collect();
                let ints = ints.ok_or_else(|| {
                    EvalErr::HeapMismatch("array block holds non-integer cells".into())
                })?;
                self.bind_or_check(ctx, len, GhostVal::Int(ints.len() as i64))?;
                self.bind_or_check(ctx, elems, GhostVal::List(ints))?;
                Ok(Vec::new())
            }
            SpatialAtom::Cond { cond, then_atoms, else_atoms } => {
                let branch = eval_prop(&ctx.env, cond)?;
                let chosen = if branch { then_atoms } else { else_atoms };
                Ok(chosen.clone())
            }
        }
    }

    /// Can we even attempt this atom deterministically right now?
    fn atom_ready(&self, ctx: &MatchCtx, atom: &SpatialAtom) -> bool {
        match atom {
            SpatialAtom::Cond { cond, .. } => eval_prop(&ctx.env, cond).is_ok(),
            other => other
                .addr()
                .map(|a| eval_expr(&ctx.env, a).is_ok())
                .unwrap_or(false),
        }
    }

    /// Depth-first matching with backtracking over unresolved addresses and
    /// conditional branches.
    fn solve(&self, pending: Vec<SpatialAtom>, ctx: MatchCtx) -> ER<MatchCtx> {
        if pending.is_empty() {
            return Ok(ctx);
        }
        // Deterministic phase: take the first ready atom.
        for (i, atom) in pending.iter().enumerate() {
            if self.atom_ready(&ctx, atom) {
                let mut next_ctx = ctx.clone();
                let extra = self.match_atom(&mut next_ctx, atom)?;
                let mut rest: Vec<SpatialAtom> = Vec::with_capacity(pending.len() + extra.len());
                rest.extend(pending[..i].iter().cloned());
                rest.extend(extra);
                rest.extend(pending[i + 1..].iter().cloned());
                return self.solve(rest, next_ctx);
            }
        }
        // Nothing is ready: branch on the first pending item.
        let first = pending[0].clone();
        let rest: Vec<SpatialAtom> = pending[1..].to_vec();
        match &first {
            SpatialAtom::Cond { cond, then_atoms, else_atoms } => {
                // The branch condition mentions unbound existentials; try
                // both branches and re-check the condition once bindings
                // settle.
                let mut last_err = None;
                for (branch_cond, atoms) in [
                    (cond.clone(), then_atoms),
                    (cond.clone().negate(), else_atoms),
                ] {
                    let mut ctx2 = ctx.clone();
                    ctx2.deferred.push(branch_cond);
                    let mut pend2 = rest.clone();
                    pend2.extend(atoms.iter().cloned());
                    match self.solve(pend2, ctx2) {
                        Ok(done) => return Ok(done),
                        Err(e) => last_err = Some(e),
                    }
                }
                Err(last_err.unwrap_or_else(|| {
                    EvalErr::HeapMismatch("conditional atom could not be resolved".into())
                }))
            }
            atom => {
                // The root address is an unbound existential: enumerate null
                // plus every unconsumed address.
                let addr_expr = atom.addr().cloned().ok_or_else(|| {
                    EvalErr::HeapMismatch("unresolvable spatial atom".into())
                })?;
                let var = match &addr_expr {
                    SpecExpr::Var(v)
                        if !ctx.env.contains_key(v) && self.exists.contains_key(v) =>
                    {
                        v.clone()
                    }
                    _ => {
                        // Address mentions something we cannot determine.
                        let mut vs = BTreeSet::new();
                        addr_expr.vars(&mut vs);
                        let missing: Vec<String> = vs
                            .into_iter()
                            .filter(|v| !ctx.env.contains_key(v))
                            .collect();
                        return Err(EvalErr::NoWitness(format!(
                            "cannot resolve spatial address `{}` (unbound: {})",
                            addr_expr,
                            missing.join(", ")
                        )));
                    }
                };
                let mut candidates: Vec<usize> = vec![0];
                candidates.extend(
                    self.state
                        .heap
                        .keys()
                        .filter(|a| !ctx.consumed.contains(a))
                        .copied(),
                );
                let mut last_err = None;
                for cand in candidates {
                    let mut ctx2 = ctx.clone();
                    ctx2.env.insert(var.clone(), GhostVal::Addr(cand));
                    let mut pend2 = vec![atom.clone()];
                    pend2.extend(rest.clone());
                    match self.solve(pend2, ctx2) {
                        Ok(done) => return Ok(done),
                        Err(e) => last_err = Some(e),
                    }
                }
                Err(last_err
                    .unwrap_or_else(|| EvalErr::NoWitness(format!("no address for `{}`", var))))
            }
        }
    }
}

/// Candidate values for a pure-only existential, by sort.
fn witness_candidates(sort: Sort, env: &GhostEnv, state: &ConcreteState) -> Vec<GhostVal> {
    match sort {
        Sort::Int | Sort::Char => {
            let mut ints: BTreeSet<i64> = (-8..=8).collect();
            for v in env.values() {
                match v {
                    GhostVal::Int(n) => {
                        ints.insert(*n);
                        ints.insert(*n + 1);
                        ints.insert(*n - 1);
                    }
                    GhostVal::List(xs) => {
                        ints.extend(xs.iter().copied());
                        ints.insert(xs.len() as i64);
                    }
                    _ => {}
                }
            }
            ints.into_iter().map(GhostVal::Int).collect()
        }
        Sort::Addr => {
            let mut out = vec![GhostVal::Addr(0)];
            out.extend(state.heap.keys().map(|a| GhostVal::Addr(*a)));
            out
        }
        Sort::Bool => vec![GhostVal::Bool(false), GhostVal::Bool(true)],
        Sort::Share => vec![GhostVal::Share(Share::Full), GhostVal::Share(Share::Readable)],
        _ => Vec::new(),
    }
}

const WITNESS_COMBINATIONS: usize = 100_000;

/// Check that `state` satisfies `asrt` under `base_env`, extending the
/// environment with solved existentials. `ret` supplies the post's `return`
/// clause together with the actual returned value.
///
/// The spatial part must account for every heap object exactly once.
pub fn satisfies(
    asrt: &Assertion,
    base_env: &GhostEnv,
    state: &ConcreteState,
    ret: Option<(&SpecExpr, ConcreteValue)>,
) -> ER<GhostEnv> {
    let exists: BTreeMap<String, Sort> = asrt
        .exists
        .iter()
        .filter(|(n, _)| !base_env.contains_key(n))
        .map(|(n, s)| (n.clone(), *s))
        .collect();
    let mut env = base_env.clone();

    // Bind the return clause first when it names an existential directly.
    if let Some((rexpr, rval)) = ret {
        if let SpecExpr::Var(v) = rexpr {
            if exists.contains_key(v) && !env.contains_key(v) {
                env.insert(v.clone(), ghost_of_cv(&rval, exists.get(v).copied()));
            }
        }
    }

    let matcher = Matcher { state, exists: exists.clone() };
    let pending: Vec<SpatialAtom> = asrt.spatial.to_vec();
    let ctx = matcher.solve(
        pending,
        MatchCtx { env, consumed: BTreeSet::new(), deferred: Vec::new() },
    )?;

    // Exact coverage: the assertion must describe the whole heap.
    let leftover: Vec<usize> = state
        .heap
        .keys()
        .filter(|a| !ctx.consumed.contains(a))
        .copied()
        .collect();
    if !leftover.is_empty() {
        return Err(EvalErr::Leak(leftover));
    }

    let final_check = |env: &GhostEnv| -> ER<()> {
        for p in asrt.pure.iter().chain(&ctx.deferred) {
            if !eval_prop(env, p)? {
                return Err(EvalErr::PureViolation(format!("{}", p)));
            }
        }
        if let Some((rexpr, rval)) = ret {
            let want = eval_expr(env, rexpr)?;
            if !ghost_matches_cv(&want, &rval) {
                return Err(EvalErr::Ret(format!(
                    "post says return = {}, function returned {}",
                    want, rval
                )));
            }
        }
        Ok(())
    };

    // Anything still unbound is a pure-only existential: witness search.
    let unbound: Vec<(String, Sort)> = exists
        .iter()
        .filter(|(n, _)| !ctx.env.contains_key(*n))
        .map(|(n, s)| (n.clone(), *s))
        .collect();
    if unbound.is_empty() {
        final_check(&ctx.env)?;
        return Ok(ctx.env);
    }

    let candidate_sets: Vec<Vec<GhostVal>> = unbound
        .iter()
        .map(|(_, s)| witness_candidates(*s, &ctx.env, state))
        .collect();
    if candidate_sets.iter().any(|c| c.is_empty()) {
        return Err(EvalErr::NoWitness(format!(
            "existential(s) of unsearchable sort: {}",
            unbound
                .iter()
                .map(|(n, s)| format!("{}: {}", n, s))
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let total: usize = candidate_sets.iter().map(|c| c.len()).product();
    if total > WITNESS_COMBINATIONS {
        return Err(EvalErr::Budget("witness search space too large".into()));
    }

    let mut last_err: Option<EvalErr> = None;
    for combo in 0..total {
        let mut env = ctx.env.clone();
        let mut rem = combo;
        for (k, (name, _)) in unbound.iter().enumerate() {
            let set = &candidate_sets[k];
            env.insert(name.clone(), set[rem % set.len()].clone());
            rem /= set.len();
        }
        match final_check(&env) {
            Ok(()) => return Ok(env),
            Err(e) => last_err = Some(e),
        }
    }
    let names: Vec<&str> = unbound.iter().map(|(n, _)| n.as_str()).collect();
    Err(EvalErr::NoWitness(format!(
        "{} (last failure: {})",
        names.join(", "),
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}
