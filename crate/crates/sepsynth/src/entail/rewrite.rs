//! Deterministic simplification of spec expressions and propositions, plus a
//! definedness analysis for the partial operators.
//!
//! Simplification is semantics-preserving wherever the input is defined; it
//! may make an undefined expression defined (e.g. `len([head(l)])` becomes
//! `1`). The solver compensates by computing definedness conditions on the
//! *original* terms (`defined_expr`/`defined_prop`) and treating them as
//! assumptions for hypotheses and as proof obligations for goals.

use crate::oracle::{eval_expr, eval_prop, ConcTree, GhostEnv, GhostVal};
use crate::spec::{ArithOp, CmpOp, PureProp, SpecExpr, UnaryPred};
use std::collections::BTreeSet;

// ---------------------------------------------------------------------------
// Ground folding
// ---------------------------------------------------------------------------

fn tree_to_expr(t: &ConcTree) -> SpecExpr {
    match t {
        ConcTree::Leaf => SpecExpr::Leaf,
        ConcTree::Node(k, l, r) => SpecExpr::TNode(
            Box::new(SpecExpr::Int(*k)),
            Box::new(tree_to_expr(l)),
            Box::new(tree_to_expr(r)),
        ),
    }
}

fn ghost_to_expr(g: &GhostVal) -> Option<SpecExpr> {
    Some(match g {
        GhostVal::Int(n) => SpecExpr::Int(*n),
        GhostVal::Double(d) => SpecExpr::Double(*d),
        GhostVal::Bool(b) => SpecExpr::BoolL(*b),
        GhostVal::Addr(0) => SpecExpr::Null,
        GhostVal::Addr(_) => return None,
        GhostVal::Share(s) => SpecExpr::ShareL(*s),
        GhostVal::List(xs) => {
            SpecExpr::list_lit(xs.iter().map(|x| SpecExpr::Int(*x)).collect())
        }
        GhostVal::Tree(t) => tree_to_expr(t),
    })
}

/// Fold a variable-free expression to a literal by evaluating it. Partial or
/// budget-limited expressions are left alone.
fn try_ground_expr(e: &SpecExpr) -> Option<SpecExpr> {
    let mut vars = BTreeSet::new();
    e.vars(&mut vars);
    if !vars.is_empty() {
        return None;
    }
    let g = eval_expr(&GhostEnv::new(), e).ok()?;
    let lit = ghost_to_expr(&g)?;
    if &lit == e {
        None
    } else {
        Some(lit)
    }
}

fn try_ground_prop(p: &PureProp) -> Option<PureProp> {
    let mut vars = BTreeSet::new();
    p.vars(&mut vars);
    if !vars.is_empty() {
        return None;
    }
    match eval_prop(&GhostEnv::new(), p) {
        Ok(true) => Some(PureProp::TrueP),
        Ok(false) => Some(PureProp::FalseP),
        Err(_) => None,
    }
}

// ---------------------------------------------------------------------------
// Unary predicate application
// ---------------------------------------------------------------------------

/// The proposition stating that `p` holds of `x`, consistent with the
/// concrete evaluator (`even(x)` iff `x % 2 == 0`, `odd(x)` iff `x % 2 != 0`;
/// truncating `%` maps negatives to {-1, 0}).
pub fn apply_unary_pred(p: &UnaryPred, x: SpecExpr) -> PureProp {
    let modulo =
        |x: SpecExpr| SpecExpr::Arith(ArithOp::Mod, Box::new(x), Box::new(SpecExpr::Int(2)));
    match p {
        UnaryPred::Even => PureProp::eq(modulo(x), SpecExpr::Int(0)),
        UnaryPred::Odd => PureProp::ne(modulo(x), SpecExpr::Int(0)),
        UnaryPred::CmpWith(op, bound) => PureProp::Cmp(*op, x, (**bound).clone()),
    }
}

/// Decide `p(x)` when both the argument and the predicate bound are ground.
fn decide_pred(p: &UnaryPred, x: &SpecExpr) -> Option<bool> {
    match simp_prop(&apply_unary_pred(p, x.clone())) {
        PureProp::TrueP => Some(true),
        PureProp::FalseP => Some(false),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Expression simplification
// ---------------------------------------------------------------------------

fn b(e: SpecExpr) -> Box<SpecExpr> {
    Box::new(e)
}

pub fn simp_expr(e: &SpecExpr) -> SpecExpr {
    use SpecExpr::*;
    // Simplify children first.
    let e = match e {
        Var(_) | Int(_) | Double(_) | BoolL(_) | Null | ShareL(_) | Nil | Leaf => e.clone(),
        Arith(op, x, y) => Arith(*op, b(simp_expr(x)), b(simp_expr(y))),
        Cons(h, t) => Cons(b(simp_expr(h)), b(simp_expr(t))),
        Append(x, y) => Append(b(simp_expr(x)), b(simp_expr(y))),
        Len(l) => Len(b(simp_expr(l))),
        Head(l) => Head(b(simp_expr(l))),
        Tail(l) => Tail(b(simp_expr(l))),
        Slice(l, i, j) => Slice(b(simp_expr(l)), b(simp_expr(i)), b(simp_expr(j))),
        Index(l, i) => Index(b(simp_expr(l)), b(simp_expr(i))),
        Store(l, i, v) => Store(b(simp_expr(l)), b(simp_expr(i)), b(simp_expr(v))),
        MapAdd(l, k) => MapAdd(b(simp_expr(l)), b(simp_expr(k))),
        Filter(p, l) => Filter(p.clone(), b(simp_expr(l))),
        TNode(k, l, r) => TNode(b(simp_expr(k)), b(simp_expr(l)), b(simp_expr(r))),
        TLookup(t, k) => TLookup(b(simp_expr(t)), b(simp_expr(k))),
        TInsert(t, k) => TInsert(b(simp_expr(t)), b(simp_expr(k))),
        TMin(t) => TMin(b(simp_expr(t))),
        TFoldIns(t, l) => TFoldIns(b(simp_expr(t)), b(simp_expr(l))),
        Skew(l) => Skew(b(simp_expr(l))),
        Ite(c, x, y) => Ite(Box::new(simp_prop(c)), b(simp_expr(x)), b(simp_expr(y))),
    };
    if let Some(lit) = try_ground_expr(&e) {
        return lit;
    }
    rewrite_expr(e)
}

fn rewrite_expr(e: SpecExpr) -> SpecExpr {
    use SpecExpr::*;
    match e {
        Arith(op, x, y) => match (op, *x, *y) {
            (op, Int(a), Int(c)) => match arith_fold(op, a, c) {
                Some(n) => Int(n),
                None => Arith(op, b(Int(a)), b(Int(c))),
            },
            (ArithOp::Add, x, Int(0)) => x,
            (ArithOp::Add, Int(0), y) => y,
            (ArithOp::Sub, x, Int(0)) => x,
            (ArithOp::Sub, x, y) if x == y => Int(0),
            (ArithOp::Mul, x, Int(1)) => x,
            (ArithOp::Mul, Int(1), y) => y,
            (ArithOp::Div, x, Int(1)) => x,
            (op, x, y) => Arith(op, b(x), b(y)),
        },
        Append(x, y) => match (*x, *y) {
            (Nil, y) => y,
            (x, Nil) => x,
            (Cons(h, t), y) => Cons(h, b(rewrite_expr(Append(t, Box::new(y))))),
            (Append(a, c), y) => {
                rewrite_expr(Append(a, b(rewrite_expr(Append(c, Box::new(y))))))
            }
            (x, y) => Append(b(x), b(y)),
        },
        Len(l) => match *l {
            Nil => Int(0),
            Cons(_, t) => rewrite_expr(Arith(ArithOp::Add, b(Int(1)), b(rewrite_expr(Len(t))))),
            Append(a, c) => rewrite_expr(Arith(
                ArithOp::Add,
                b(rewrite_expr(Len(a))),
                b(rewrite_expr(Len(c))),
            )),
            Store(l2, _, _) => rewrite_expr(Len(l2)),
            MapAdd(l2, _) => rewrite_expr(Len(l2)),
            Tail(l2) => rewrite_expr(Arith(ArithOp::Sub, b(rewrite_expr(Len(l2))), b(Int(1)))),
            l => Len(b(l)),
        },
        Head(l) => match *l {
            Cons(h, _) => *h,
            l => Head(b(l)),
        },
        Tail(l) => match *l {
            Cons(_, t) => *t,
            l => Tail(b(l)),
        },
        Slice(l, i, j) => {
            if i == j {
                return Nil;
            }
            if let (Int(lo), Int(hi)) = (&*i, &*j) {
                if lo >= hi {
                    return Nil;
                }
                if let Some(items) = l.as_literal_list() {
                    if *lo >= 0 && *hi as usize <= items.len() {
                        return SpecExpr::list_lit(
                            items[*lo as usize..*hi as usize].iter().map(|e| (*e).clone()).collect(),
                        );
                    }
                }
            }
            // l[0 .. len(l)] is l itself.
            if matches!(&*i, Int(0)) {
                if let Len(inner) = &*j {
                    if **inner == *l {
                        return *l;
                    }
                }
            }
            Slice(l, i, j)
        }
        Index(l, i) => match (*l, *i) {
            (Cons(h, _), Int(0)) => *h,
            (Cons(_, t), Int(k)) if k > 0 => rewrite_expr(Index(t, b(Int(k - 1)))),
            (Store(l2, i2, v), ix) => {
                if *i2 == ix {
                    *v
                } else if matches!((&*i2, &ix), (Int(_), Int(_))) {
                    rewrite_expr(Index(l2, b(ix)))
                } else {
                    Index(b(Store(l2, i2, v)), b(ix))
                }
            }
            (MapAdd(l2, k), ix) => rewrite_expr(Arith(
                ArithOp::Add,
                b(rewrite_expr(Index(l2, b(ix)))),
                b(*k),
            )),
            (l, ix) => Index(b(l), b(ix)),
        },
        Store(l, i, v) => {
            if let Int(ix) = &*i {
                if let Some(items) = l.as_literal_list() {
                    if *ix >= 0 && (*ix as usize) < items.len() {
                        let mut items: Vec<SpecExpr> =
                            items.into_iter().cloned().collect();
                        items[*ix as usize] = *v;
                        return SpecExpr::list_lit(items);
                    }
                }
            }
            Store(l, i, v)
        }
        MapAdd(l, k) => match (*l, *k) {
            (l, Int(0)) => l,
            (Nil, _) => Nil,
            (Cons(h, t), k) => Cons(
                b(rewrite_expr(Arith(ArithOp::Add, h, b(k.clone())))),
                b(rewrite_expr(MapAdd(t, b(k)))),
            ),
            (MapAdd(l2, k1), k2) => rewrite_expr(MapAdd(
                l2,
                b(rewrite_expr(Arith(ArithOp::Add, k1, b(k2)))),
            )),
            (l, k) => MapAdd(b(l), b(k)),
        },
        Filter(p, l) => match *l {
            Nil => Nil,
            Cons(h, t) => match decide_pred(&p, &h) {
                Some(true) => Cons(h, b(rewrite_expr(Filter(p, t)))),
                Some(false) => rewrite_expr(Filter(p, t)),
                None => Filter(p, b(Cons(h, t))),
            },
            l => Filter(p, b(l)),
        },
        TMin(t) => match *t {
            // The minimum of a tree is the key of its leftmost node.
            TNode(k, l, _) if matches!(*l, Leaf) => *k,
            TNode(_, l, _) if matches!(*l, TNode(..)) => rewrite_expr(TMin(l)),
            t => TMin(b(t)),
        },
        TFoldIns(t, l) => match *l {
            Nil => *t,
            Cons(h, tl) => rewrite_expr(TFoldIns(b(TInsert(t, h)), tl)),
            l => TFoldIns(t, b(l)),
        },
        Skew(l) => match *l {
            Nil => Leaf,
            Cons(h, t) => TNode(h, b(Leaf), b(rewrite_expr(Skew(t)))),
            l => Skew(b(l)),
        },
        Ite(c, x, y) => match *c {
            PureProp::TrueP => *x,
            PureProp::FalseP => *y,
            c => {
                if x == y {
                    *x
                } else {
                    Ite(Box::new(c), x, y)
                }
            }
        },
        e => e,
    }
}

fn arith_fold(op: ArithOp, a: i64, c: i64) -> Option<i64> {
    match op {
        ArithOp::Add => a.checked_add(c),
        ArithOp::Sub => a.checked_sub(c),
        ArithOp::Mul => a.checked_mul(c),
        ArithOp::Div => {
            if c == 0 {
                None
            } else {
                a.checked_div(c)
            }
        }
        ArithOp::Mod => {
            if c == 0 {
                None
            } else {
                a.checked_rem(c)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Proposition simplification
// ---------------------------------------------------------------------------

/// Is the expression unambiguously list-shaped at the top (nil or cons)?
fn peels(e: &SpecExpr) -> bool {
    matches!(e, SpecExpr::Nil | SpecExpr::Cons(..))
}

fn tree_shaped(e: &SpecExpr) -> bool {
    matches!(e, SpecExpr::Leaf | SpecExpr::TNode(..))
}

pub fn simp_prop(p: &PureProp) -> PureProp {
    use PureProp::*;
    let p = match p {
        TrueP => TrueP,
        FalseP => FalseP,
        Cmp(op, a, c) => Cmp(*op, simp_expr(a), simp_expr(c)),
        And(ps) => And(ps.iter().map(simp_prop).collect()),
        Or(ps) => Or(ps.iter().map(simp_prop).collect()),
        Not(q) => Not(Box::new(simp_prop(q))),
        In(x, l) => In(simp_expr(x), simp_expr(l)),
        Forall(pr, l) => Forall(pr.clone(), simp_expr(l)),
        Forall2(bp, a, c) => Forall2(*bp, simp_expr(a), simp_expr(c)),
        Sorted(l) => Sorted(simp_expr(l)),
        Ite(c, x, y) => Ite(
            Box::new(simp_prop(c)),
            Box::new(simp_prop(x)),
            Box::new(simp_prop(y)),
        ),
        ForallIdx { idx, lo, hi, body } => ForallIdx {
            idx: idx.clone(),
            lo: simp_expr(lo),
            hi: simp_expr(hi),
            body: Box::new(simp_prop(body)),
        },
    };
    if let Some(folded) = try_ground_prop(&p) {
        return folded;
    }
    rewrite_prop(p)
}

fn rewrite_prop(p: PureProp) -> PureProp {
    use PureProp::*;
    match p {
        Cmp(op, a, c) => rewrite_cmp(op, a, c),
        And(ps) => {
            let mut out = Vec::new();
            for q in ps {
                match q {
                    TrueP => {}
                    FalseP => return FalseP,
                    And(inner) => out.extend(inner),
                    q => out.push(q),
                }
            }
            PureProp::and(out)
        }
        Or(ps) => {
            let mut out = Vec::new();
            for q in ps {
                match q {
                    FalseP => {}
                    TrueP => return TrueP,
                    Or(inner) => out.extend(inner),
                    q => out.push(q),
                }
            }
            match out.len() {
                0 => FalseP,
                1 => out.into_iter().next().unwrap(),
                _ => Or(out),
            }
        }
        Not(q) => match *q {
            TrueP => FalseP,
            FalseP => TrueP,
            Not(inner) => *inner,
            Cmp(op, a, c) => rewrite_cmp(op.negate(), a, c),
            q => Not(Box::new(q)),
        },
        In(x, l) => match l {
            SpecExpr::Nil => FalseP,
            SpecExpr::Cons(h, t) => rewrite_prop(Or(vec![
                rewrite_cmp(CmpOp::Eq, x.clone(), *h),
                rewrite_prop(In(x, *t)),
            ])),
            SpecExpr::Append(a, c) => rewrite_prop(Or(vec![
                rewrite_prop(In(x.clone(), *a)),
                rewrite_prop(In(x, *c)),
            ])),
            l => In(x, l),
        },
        Forall(pr, l) => match l {
            SpecExpr::Nil => TrueP,
            SpecExpr::Cons(h, t) => rewrite_prop(And(vec![
                simp_prop(&apply_unary_pred(&pr, *h)),
                rewrite_prop(Forall(pr, *t)),
            ])),
            SpecExpr::Append(a, c) => rewrite_prop(And(vec![
                rewrite_prop(Forall(pr.clone(), *a)),
                rewrite_prop(Forall(pr, *c)),
            ])),
            l => Forall(pr, l),
        },
        Forall2(bp, a, c) => match (a, c) {
            (SpecExpr::Nil, SpecExpr::Nil) => TrueP,
            (SpecExpr::Cons(h1, t1), SpecExpr::Cons(h2, t2)) => rewrite_prop(And(vec![
                rewrite_cmp(bp.cmp_op(), *h1, *h2),
                rewrite_prop(Forall2(bp, *t1, *t2)),
            ])),
            (a, c) => Forall2(bp, a, c),
        },
        Sorted(l) => {
            // Sortedness is sugar for a pairwise comparison of the list with
            // its own one-step shift.
            let len = SpecExpr::Len(Box::new(l.clone()));
            let expanded = Forall2(
                crate::spec::BinPred::Le,
                simp_expr(&SpecExpr::Slice(
                    Box::new(l.clone()),
                    Box::new(SpecExpr::Int(0)),
                    Box::new(SpecExpr::Arith(
                        ArithOp::Sub,
                        Box::new(len.clone()),
                        Box::new(SpecExpr::Int(1)),
                    )),
                )),
                simp_expr(&SpecExpr::Slice(
                    Box::new(l),
                    Box::new(SpecExpr::Int(1)),
                    Box::new(len),
                )),
            );
            rewrite_prop(expanded)
        }
        Ite(c, x, y) => match *c {
            TrueP => *x,
            FalseP => *y,
            c => {
                if x == y {
                    *x
                } else {
                    Ite(Box::new(c), x, y)
                }
            }
        },
        ForallIdx { idx, lo, hi, body } => {
            if let (SpecExpr::Int(a), SpecExpr::Int(b_)) = (&lo, &hi) {
                if b_ - a <= 32 {
                    let mut conj = Vec::new();
                    for i in *a..*b_ {
                        conj.push(simp_prop(&subst_var(&body, &idx, &SpecExpr::Int(i))));
                    }
                    return rewrite_prop(And(conj));
                }
            }
            ForallIdx { idx, lo, hi, body }
        }
        p => p,
    }
}

fn rewrite_cmp(op: CmpOp, a: SpecExpr, c: SpecExpr) -> PureProp {
    use PureProp::*;
    if let (SpecExpr::Int(x), SpecExpr::Int(y)) = (&a, &c) {
        return if op.eval(*x, *y) { TrueP } else { FalseP };
    }
    // Structural (dis)equality of list and tree constructors.
    if matches!(op, CmpOp::Eq | CmpOp::Ne) && (peels(&a) || peels(&c)) {
        let negated = matches!(op, CmpOp::Ne);
        let wrap = |p: PureProp| {
            if negated {
                rewrite_prop(Not(Box::new(p)))
            } else {
                p
            }
        };
        match (&a, &c) {
            (SpecExpr::Nil, SpecExpr::Nil) => return wrap(TrueP),
            (SpecExpr::Nil, SpecExpr::Cons(..)) | (SpecExpr::Cons(..), SpecExpr::Nil) => {
                return wrap(FalseP)
            }
            (SpecExpr::Cons(h1, t1), SpecExpr::Cons(h2, t2)) => {
                return wrap(rewrite_prop(And(vec![
                    rewrite_cmp(CmpOp::Eq, (**h1).clone(), (**h2).clone()),
                    rewrite_cmp(CmpOp::Eq, (**t1).clone(), (**t2).clone()),
                ])))
            }
            _ => {}
        }
    }
    if matches!(op, CmpOp::Eq | CmpOp::Ne) && (tree_shaped(&a) || tree_shaped(&c)) {
        let negated = matches!(op, CmpOp::Ne);
        let wrap = |p: PureProp| {
            if negated {
                rewrite_prop(Not(Box::new(p)))
            } else {
                p
            }
        };
        match (&a, &c) {
            (SpecExpr::Leaf, SpecExpr::Leaf) => return wrap(TrueP),
            (SpecExpr::Leaf, SpecExpr::TNode(..)) | (SpecExpr::TNode(..), SpecExpr::Leaf) => {
                return wrap(FalseP)
            }
            (SpecExpr::TNode(k1, l1, r1), SpecExpr::TNode(k2, l2, r2)) => {
                return wrap(rewrite_prop(And(vec![
                    rewrite_cmp(CmpOp::Eq, (**k1).clone(), (**k2).clone()),
                    rewrite_cmp(CmpOp::Eq, (**l1).clone(), (**l2).clone()),
                    rewrite_cmp(CmpOp::Eq, (**r1).clone(), (**r2).clone()),
                ])))
            }
            _ => {}
        }
    }
    if a == c {
        return match op {
            CmpOp::Eq | CmpOp::Le | CmpOp::Ge => TrueP,
            CmpOp::Ne | CmpOp::Lt | CmpOp::Gt => FalseP,
        };
    }
    Cmp(op, a, c)
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

pub fn subst_var_expr(e: &SpecExpr, name: &str, to: &SpecExpr) -> SpecExpr {
    use SpecExpr::*;
    let s = |e: &SpecExpr| Box::new(subst_var_expr(e, name, to));
    match e {
        Var(v) if v == name => to.clone(),
        Var(_) | Int(_) | Double(_) | BoolL(_) | Null | ShareL(_) | Nil | Leaf => e.clone(),
        Arith(op, a, c) => Arith(*op, s(a), s(c)),
        Cons(h, t) => Cons(s(h), s(t)),
        Append(a, c) => Append(s(a), s(c)),
        Len(l) => Len(s(l)),
        Head(l) => Head(s(l)),
        Tail(l) => Tail(s(l)),
        Slice(l, i, j) => Slice(s(l), s(i), s(j)),
        Index(l, i) => Index(s(l), s(i)),
        Store(l, i, v) => Store(s(l), s(i), s(v)),
        MapAdd(l, k) => MapAdd(s(l), s(k)),
        Filter(p, l) => {
            let p = match p {
                UnaryPred::CmpWith(op, bound) => {
                    UnaryPred::CmpWith(*op, Box::new(subst_var_expr(bound, name, to)))
                }
                other => other.clone(),
            };
            Filter(p, s(l))
        }
        TNode(k, l, r) => TNode(s(k), s(l), s(r)),
        TLookup(t, k) => TLookup(s(t), s(k)),
        TInsert(t, k) => TInsert(s(t), s(k)),
        TMin(t) => TMin(s(t)),
        TFoldIns(t, l) => TFoldIns(s(t), s(l)),
        Skew(l) => Skew(s(l)),
        Ite(c, a, d) => Ite(Box::new(subst_var(c, name, to)), s(a), s(d)),
    }
}

pub fn subst_var(p: &PureProp, name: &str, to: &SpecExpr) -> PureProp {
    use PureProp::*;
    let se = |e: &SpecExpr| subst_var_expr(e, name, to);
    match p {
        TrueP => TrueP,
        FalseP => FalseP,
        Cmp(op, a, c) => Cmp(*op, se(a), se(c)),
        And(ps) => And(ps.iter().map(|q| subst_var(q, name, to)).collect()),
        Or(ps) => Or(ps.iter().map(|q| subst_var(q, name, to)).collect()),
        Not(q) => Not(Box::new(subst_var(q, name, to))),
        In(x, l) => In(se(x), se(l)),
        Forall(pr, l) => {
            let pr = match pr {
                UnaryPred::CmpWith(op, bound) => {
                    UnaryPred::CmpWith(*op, Box::new(se(bound)))
                }
                other => other.clone(),
            };
            Forall(pr, se(l))
        }
        Forall2(bp, a, c) => Forall2(*bp, se(a), se(c)),
        Sorted(l) => Sorted(se(l)),
        Ite(c, x, y) => Ite(
            Box::new(subst_var(c, name, to)),
            Box::new(subst_var(x, name, to)),
            Box::new(subst_var(y, name, to)),
        ),
        ForallIdx { idx, lo, hi, body } => {
            let body = if idx == name {
                // The binder shadows the substituted name inside the body.
                (**body).clone()
            } else {
                subst_var(body, name, to)
            };
            ForallIdx {
                idx: idx.clone(),
                lo: se(lo),
                hi: se(hi),
                body: Box::new(body),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Definedness
// ---------------------------------------------------------------------------

fn le(a: SpecExpr, c: SpecExpr) -> PureProp {
    PureProp::Cmp(CmpOp::Le, a, c)
}

fn lt(a: SpecExpr, c: SpecExpr) -> PureProp {
    PureProp::Cmp(CmpOp::Lt, a, c)
}

fn len_of(l: &SpecExpr) -> SpecExpr {
    SpecExpr::Len(Box::new(l.clone()))
}

fn guard_nonempty(l: &SpecExpr, conds: Vec<PureProp>) -> PureProp {
    // Bounds of per-element predicates are only evaluated when the list is
    // nonempty, so their definedness is only required then.
    PureProp::Ite(
        Box::new(le(SpecExpr::Int(1), len_of(l))),
        Box::new(PureProp::and(conds)),
        Box::new(PureProp::TrueP),
    )
}

fn pred_bound_defs(p: &UnaryPred) -> Option<Vec<PureProp>> {
    match p {
        UnaryPred::Even | UnaryPred::Odd => Some(Vec::new()),
        UnaryPred::CmpWith(_, bound) => defined_expr(bound),
    }
}

/// The conditions under which evaluating `e` cannot fail with a partiality
/// error, mirroring the concrete evaluator's behavior exactly. Returns `None`
/// when the conditions are not expressible in the proposition language
/// (quantified bodies with partial operators).
pub fn defined_expr(e: &SpecExpr) -> Option<Vec<PureProp>> {
    use SpecExpr::*;
    let mut out = Vec::new();
    match e {
        Var(_) | Int(_) | Double(_) | BoolL(_) | Null | ShareL(_) | Nil | Leaf => {}
        Arith(op, a, c) => {
            out.extend(defined_expr(a)?);
            out.extend(defined_expr(c)?);
            if matches!(op, ArithOp::Div | ArithOp::Mod) {
                out.push(PureProp::ne((**c).clone(), Int(0)));
            }
        }
        Cons(h, t) => {
            out.extend(defined_expr(h)?);
            out.extend(defined_expr(t)?);
        }
        Append(a, c) | TFoldIns(a, c) | TLookup(a, c) | TInsert(a, c) | MapAdd(a, c) => {
            out.extend(defined_expr(a)?);
            out.extend(defined_expr(c)?);
        }
        Len(l) | Skew(l) => out.extend(defined_expr(l)?),
        Head(l) | Tail(l) => {
            out.extend(defined_expr(l)?);
            out.push(le(Int(1), len_of(l)));
        }
        Slice(l, i, j) => {
            out.extend(defined_expr(l)?);
            out.extend(defined_expr(i)?);
            out.extend(defined_expr(j)?);
            out.push(PureProp::Or(vec![
                le((**j).clone(), (**i).clone()),
                PureProp::and(vec![
                    le(Int(0), (**i).clone()),
                    le((**j).clone(), len_of(l)),
                ]),
            ]));
        }
        Index(l, i) => {
            out.extend(defined_expr(l)?);
            out.extend(defined_expr(i)?);
            out.push(le(Int(0), (**i).clone()));
            out.push(lt((**i).clone(), len_of(l)));
        }
        Store(l, i, v) => {
            out.extend(defined_expr(l)?);
            out.extend(defined_expr(i)?);
            out.extend(defined_expr(v)?);
            out.push(le(Int(0), (**i).clone()));
            out.push(lt((**i).clone(), len_of(l)));
        }
        Filter(p, l) => {
            out.extend(defined_expr(l)?);
            let bd = pred_bound_defs(p)?;
            if !bd.is_empty() {
                out.push(guard_nonempty(l, bd));
            }
        }
        TNode(k, l, r) => {
            out.extend(defined_expr(k)?);
            out.extend(defined_expr(l)?);
            out.extend(defined_expr(r)?);
        }
        TMin(t) => {
            out.extend(defined_expr(t)?);
            out.push(PureProp::ne((**t).clone(), Leaf));
        }
        Ite(c, a, d) => {
            out.extend(defined_prop(c)?);
            let da = PureProp::and(defined_expr(a)?);
            let dd = PureProp::and(defined_expr(d)?);
            if !matches!((&da, &dd), (PureProp::TrueP, PureProp::TrueP)) {
                out.push(PureProp::Ite(
                    Box::new((**c).clone()),
                    Box::new(da),
                    Box::new(dd),
                ));
            }
        }
    }
    Some(out)
}

/// Definedness conditions for a proposition, respecting the evaluator's
/// short-circuiting: later conjuncts of `And` are only evaluated while the
/// earlier ones are true (dually for `Or`).
pub fn defined_prop(p: &PureProp) -> Option<Vec<PureProp>> {
    use PureProp::*;
    let mut out = Vec::new();
    match p {
        TrueP | FalseP => {}
        Cmp(_, a, c) => {
            out.extend(defined_expr(a)?);
            out.extend(defined_expr(c)?);
        }
        And(ps) => out.extend(chain_defs(ps, true)?),
        Or(ps) => out.extend(chain_defs(ps, false)?),
        Not(q) => out.extend(defined_prop(q)?),
        In(x, l) => {
            out.extend(defined_expr(x)?);
            out.extend(defined_expr(l)?);
        }
        Forall(pr, l) => {
            out.extend(defined_expr(l)?);
            let bd = pred_bound_defs(pr)?;
            if !bd.is_empty() {
                out.push(guard_nonempty(l, bd));
            }
        }
        Forall2(_, a, c) => {
            out.extend(defined_expr(a)?);
            out.extend(defined_expr(c)?);
            out.push(PureProp::eq(len_of(a), len_of(c)));
        }
        Sorted(l) => out.extend(defined_expr(l)?),
        Ite(c, x, y) => {
            out.extend(defined_prop(c)?);
            let dx = PureProp::and(defined_prop(x)?);
            let dy = PureProp::and(defined_prop(y)?);
            if !matches!((&dx, &dy), (PureProp::TrueP, PureProp::TrueP)) {
                out.push(PureProp::Ite((*c).clone(), Box::new(dx), Box::new(dy)));
            }
        }
        ForallIdx { lo, hi, body, .. } => {
            out.extend(defined_expr(lo)?);
            out.extend(defined_expr(hi)?);
            // Bodies with partial operators would need quantified
            // definedness conditions, which the language cannot state.
            if !defined_prop(body)?.is_empty() {
                return None;
            }
        }
    }
    Some(out)
}

fn chain_defs(ps: &[PureProp], is_and: bool) -> Option<Vec<PureProp>> {
    // defined(p1 /\ rest) = defined(p1) and, if p1 holds, defined(rest);
    // defined(p1 \/ rest) = defined(p1) and, if p1 fails, defined(rest).
    match ps.split_first() {
        None => Some(Vec::new()),
        Some((first, rest)) => {
            let mut out = defined_prop(first)?;
            if rest.is_empty() {
                return Some(out);
            }
            let tail = PureProp::and(chain_defs(rest, is_and)?);
            if !matches!(tail, PureProp::TrueP) {
                let (then_b, else_b) = if is_and {
                    (tail, PureProp::TrueP)
                } else {
                    (PureProp::TrueP, tail)
                };
                out.push(PureProp::Ite(
                    Box::new(first.clone()),
                    Box::new(then_b),
                    Box::new(else_b),
                ));
            }
            Some(out)
        }
    }
}
