//! Strongest-postcondition symbolic execution for the C dialect.
//!
//! Statements consume heap atoms from a [`SymState`]; list and tree
//! predicates are unfolded on demand when the engine can prove the root
//! non-null. Anything it cannot prove parks the goal instead of failing.

use super::{Ctx, Goal, GoalKind, Post, StepOut, VerifyErr};
use crate::c::{BinOp, CType, Expr, ExprKind, LValue, Stmt, UnOp};
use crate::entail::{
    prove_frame, pure_solve_ctx, subst_assertion, subst_var_expr, EntailGoal, FrameOutcome,
};
use crate::oracle::{INT_MAX, INT_MIN};
use crate::span::Span;
use crate::spec::{
    Assertion, CmpOp, FunSpec, PointsToValue, PureProp, Share, Sort, SpatialAtom, SpecExpr,
};
use std::collections::{BTreeMap, BTreeSet};

// ---------------------------------------------------------------------------
// Symbolic states
// ---------------------------------------------------------------------------

/// Machine state during forward execution: pure facts, the C-visible
/// variables, the owned heap, and the ghost sort table.
#[derive(Debug, Clone)]
pub struct SymState {
    pub hyps: Vec<PureProp>,
    pub locals: BTreeMap<String, SpecExpr>,
    pub heap: Vec<SpatialAtom>,
    pub ghosts: BTreeMap<String, Sort>,
    /// Counter backing `%t` fresh-name generation.
    pub fresh: usize,
    /// Predicate unfoldings performed along this goal's lineage.
    pub unfolds: usize,
}

impl SymState {
    pub(crate) fn fresh_ghost(&mut self, sort: Sort) -> String {
        loop {
            let name = format!("%t{}", self.fresh);
            self.fresh += 1;
            if !self.ghosts.contains_key(&name) {
                self.ghosts.insert(name.clone(), sort);
                return name;
            }
        }
    }

    fn proves(&self, p: &PureProp) -> bool {
        pure_solve_ctx(&self.ghosts, &self.hyps, p).is_valid()
    }

    fn contradictory(&self) -> bool {
        self.proves(&PureProp::FalseP)
    }

    /// Replace decidable conditional atoms by the branch they resolve to.
    fn tidy_conds(&mut self) {
        let mut i = 0;
        while i < self.heap.len() {
            let SpatialAtom::Cond { cond, then_atoms, else_atoms } = &self.heap[i] else {
                i += 1;
                continue;
            };
            let verdict = pure_solve_ctx(&self.ghosts, &self.hyps, cond);
            let replacement = if verdict.is_valid() {
                Some(then_atoms.clone())
            } else if verdict.is_refuted() {
                Some(else_atoms.clone())
            } else {
                None
            };
            match replacement {
                Some(atoms) => {
                    self.heap.remove(i);
                    for (k, at) in atoms.into_iter().enumerate() {
                        self.heap.insert(i + k, at);
                    }
                    // Re-examine from the same index: spliced-in atoms may
                    // themselves be conditionals.
                }
                None => i += 1,
            }
        }
    }
}

/// Why execution could not continue through an expression or statement.
pub(crate) enum Blocked {
    /// A proof obligation the solver left undecided; shown verbatim.
    Need { why: String, goal: EntailGoal },
    /// Outside the supported fragment.
    Unsupported(String),
    /// Abort the whole run.
    Fatal(VerifyErr),
}

fn need(state: &SymState, why: impl Into<String>, obligation: PureProp) -> Blocked {
    Blocked::Need {
        why: why.into(),
        goal: EntailGoal {
            hyps: state.hyps.clone(),
            lhs: Assertion::emp(),
            rhs: Assertion {
                exists: Vec::new(),
                pure: vec![obligation],
                spatial: Vec::new(),
            },
        },
    }
}

fn sort_of_ctype(ty: &CType) -> Sort {
    match ty {
        CType::Int => Sort::Int,
        CType::Char => Sort::Char,
        CType::Double => Sort::Double,
        CType::Struct(_) | CType::Ptr(_) | CType::Array(_) => Sort::Addr,
    }
}

// ---------------------------------------------------------------------------
// Expression evaluation
// ---------------------------------------------------------------------------

fn require(state: &SymState, p: PureProp, why: &str) -> Result<(), Blocked> {
    if state.proves(&p) {
        Ok(())
    } else {
        Err(need(state, why, p))
    }
}

fn arith(op: crate::spec::ArithOp, a: SpecExpr, b: SpecExpr) -> SpecExpr {
    SpecExpr::Arith(op, Box::new(a), Box::new(b))
}

/// Evaluate an expression to its symbolic value. Heap reads may unfold
/// list/tree predicates (mutating the state); definedness obligations that
/// cannot be proved block evaluation.
pub(crate) fn sym_expr(
    state: &mut SymState,
    ctx: &mut Ctx,
    e: &Expr,
) -> Result<SpecExpr, Blocked> {
    use crate::spec::ArithOp as A;
    match &e.kind {
        ExprKind::IntLit(n) => Ok(SpecExpr::Int(*n)),
        ExprKind::CharLit(c) => Ok(SpecExpr::Int(*c as i64)),
        ExprKind::DoubleLit(d) => Ok(SpecExpr::Double(*d)),
        ExprKind::Null => Ok(SpecExpr::Null),
        ExprKind::Var(v) => state
            .locals
            .get(v)
            .cloned()
            .ok_or_else(|| Blocked::Unsupported(format!("variable `{}` has no value", v))),
        ExprKind::Unop(UnOp::Neg, a) => {
            let va = sym_expr(state, ctx, a)?;
            Ok(arith(A::Sub, SpecExpr::Int(0), va))
        }
        ExprKind::Unop(UnOp::Not, a) => {
            let p = prop_of(state, ctx, a)?;
            Ok(SpecExpr::Ite(Box::new(p), Box::new(SpecExpr::Int(0)), Box::new(SpecExpr::Int(1))))
        }
        ExprKind::Binop(op, a, b) if op.is_arith() => {
            let va = sym_expr(state, ctx, a)?;
            let vb = sym_expr(state, ctx, b)?;
            let aop = match op {
                BinOp::Add => A::Add,
                BinOp::Sub => A::Sub,
                BinOp::Mul => A::Mul,
                BinOp::Div => A::Div,
                BinOp::Mod => A::Mod,
                _ => unreachable!(),
            };
            if matches!(aop, A::Div | A::Mod) {
                require(
                    state,
                    PureProp::ne(vb.clone(), SpecExpr::Int(0)),
                    "division requires a nonzero divisor",
                )?;
            }
            let result = arith(aop, va, vb);
            if ctx.cfg.check_int_ranges && matches!(e.ty(), CType::Int) {
                require(
                    state,
                    PureProp::Cmp(CmpOp::Le, SpecExpr::Int(INT_MIN), result.clone()),
                    "arithmetic result may underflow a 32-bit int",
                )?;
                require(
                    state,
                    PureProp::Cmp(CmpOp::Le, result.clone(), SpecExpr::Int(INT_MAX)),
                    "arithmetic result may overflow a 32-bit int",
                )?;
            }
            Ok(result)
        }
        ExprKind::Binop(..) => {
            // Comparison or logical operator in value position: 1 or 0.
            let p = prop_of(state, ctx, e)?;
            Ok(SpecExpr::Ite(Box::new(p), Box::new(SpecExpr::Int(1)), Box::new(SpecExpr::Int(0))))
        }
        ExprKind::Field(base, field) => {
            let addr = sym_expr(state, ctx, base)?;
            let idx = cell_index(state, ctx, &addr)?;
            let SpatialAtom::PtsTo { value, .. } = &state.heap[idx] else {
                return Err(Blocked::Unsupported("field read on a non-cell atom".into()));
            };
            field_value(value, field)
                .ok_or_else(|| Blocked::Unsupported(format!("no field `{}` in the cell", field)))
        }
        ExprKind::Deref(base) => {
            let addr = sym_expr(state, ctx, base)?;
            let idx = cell_index(state, ctx, &addr)?;
            match &state.heap[idx] {
                SpatialAtom::PtsTo { value: PointsToValue::Scalar(v), .. } => Ok(v.clone()),
                SpatialAtom::ArraySeg { elems, len, .. } => {
                    let elems = elems.clone();
                    let len = len.clone();
                    require(
                        state,
                        PureProp::Cmp(CmpOp::Lt, SpecExpr::Int(0), len),
                        "dereferencing an array start requires a nonempty segment",
                    )?;
                    Ok(SpecExpr::Index(Box::new(elems), Box::new(SpecExpr::Int(0))))
                }
                _ => Err(Blocked::Unsupported("dereference of a non-scalar cell".into())),
            }
        }
        ExprKind::Index(base, index) => {
            let addr = sym_expr(state, ctx, base)?;
            let i = sym_expr(state, ctx, index)?;
            let idx = cell_index(state, ctx, &addr)?;
            let SpatialAtom::ArraySeg { elems, len, .. } = &state.heap[idx] else {
                return Err(Blocked::Unsupported("indexing a non-array atom".into()));
            };
            let elems = elems.clone();
            let len = len.clone();
            require(
                state,
                PureProp::And(vec![
                    PureProp::Cmp(CmpOp::Le, SpecExpr::Int(0), i.clone()),
                    PureProp::Cmp(CmpOp::Lt, i.clone(), len),
                ]),
                "array access requires the index to be in bounds",
            )?;
            Ok(SpecExpr::Index(Box::new(elems), Box::new(i)))
        }
        ExprKind::Call(name, _) => Err(Blocked::Unsupported(format!(
            "call to `{}` in a nested position; calls are supported as a whole \
             statement, initializer, assignment source, or return value",
            name
        ))),
    }
}

/// Evaluate an expression as a branch condition.
pub(crate) fn prop_of(
    state: &mut SymState,
    ctx: &mut Ctx,
    e: &Expr,
) -> Result<PureProp, Blocked> {
    match &e.kind {
        ExprKind::Binop(op, a, b) if op.is_comparison() => {
            let va = sym_expr(state, ctx, a)?;
            let vb = sym_expr(state, ctx, b)?;
            let c = match op {
                BinOp::Eq => CmpOp::Eq,
                BinOp::Ne => CmpOp::Ne,
                BinOp::Lt => CmpOp::Lt,
                BinOp::Le => CmpOp::Le,
                BinOp::Gt => CmpOp::Gt,
                BinOp::Ge => CmpOp::Ge,
                _ => unreachable!(),
            };
            Ok(PureProp::Cmp(c, va, vb))
        }
        ExprKind::Binop(BinOp::And, a, b) => {
            Ok(PureProp::And(vec![prop_of(state, ctx, a)?, prop_of(state, ctx, b)?]))
        }
        ExprKind::Binop(BinOp::Or, a, b) => {
            Ok(PureProp::Or(vec![prop_of(state, ctx, a)?, prop_of(state, ctx, b)?]))
        }
        ExprKind::Unop(UnOp::Not, a) => Ok(prop_of(state, ctx, a)?.negate()),
        _ => {
            let v = sym_expr(state, ctx, e)?;
            let zero = if e.ty().is_address() { SpecExpr::Null } else { SpecExpr::Int(0) };
            Ok(PureProp::ne(v, zero))
        }
    }
}

fn field_value(value: &PointsToValue, field: &str) -> Option<SpecExpr> {
    match (value, field) {
        (PointsToValue::ListNode { head, .. }, "head") => Some(head.clone()),
        (PointsToValue::ListNode { next, .. }, "next") => Some(next.clone()),
        (PointsToValue::TreeNode { key, .. }, "key") => Some(key.clone()),
        (PointsToValue::TreeNode { left, .. }, "left") => Some(left.clone()),
        (PointsToValue::TreeNode { right, .. }, "right") => Some(right.clone()),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Heap access
// ---------------------------------------------------------------------------

/// Index of the heap atom covering `addr`, unfolding list/tree predicates
/// rooted there when the root is provably non-null.
fn cell_index(
    state: &mut SymState,
    ctx: &mut Ctx,
    addr: &SpecExpr,
) -> Result<usize, Blocked> {
    state.tidy_conds();
    let idx = match find_atom(state, addr) {
        Some(i) => i,
        None => {
            return Err(Blocked::Need {
                why: format!("no heap atom covers address {}", addr),
                goal: EntailGoal {
                    hyps: state.hyps.clone(),
                    lhs: Assertion {
                        exists: Vec::new(),
                        pure: Vec::new(),
                        spatial: state.heap.clone(),
                    },
                    rhs: Assertion {
                        exists: vec![("v".into(), Sort::Int)],
                        pure: Vec::new(),
                        spatial: vec![SpatialAtom::pts_to(
                            addr.clone(),
                            SpecExpr::Var("v".into()),
                        )],
                    },
                },
            })
        }
    };
    match &state.heap[idx] {
        SpatialAtom::ListRep { .. } | SpatialAtom::TreeRep { .. } => {
            let shown = state.heap[idx].to_string();
            let root = state.heap[idx].addr().cloned().unwrap_or(SpecExpr::Null);
            require(
                state,
                PureProp::ne(root, SpecExpr::Null),
                "reading through a list/tree pointer requires it to be non-null",
            )?;
            unfold_rep(state, ctx.cfg, idx)?;
            ctx.notes.push(format!("unfolded {} (root proved non-null)", shown));
            Ok(idx)
        }
        _ => Ok(idx),
    }
}

/// First atom rooted at `addr`: syntactic match first, then provable
/// equality against the hypotheses.
fn find_atom(state: &SymState, addr: &SpecExpr) -> Option<usize> {
    if let Some(i) = state.heap.iter().position(|at| at.addr() == Some(addr)) {
        return Some(i);
    }
    state.heap.iter().position(|at| match at.addr() {
        Some(a) => state.proves(&PureProp::eq(a.clone(), addr.clone())),
        None => false,
    })
}

/// Replace the list/tree predicate at `idx` by a root cell plus the
/// remainder predicates, minting ghosts for the unknown parts. The caller
/// has already established (or assumed) that the root is non-null.
fn unfold_rep(
    state: &mut SymState,
    cfg: &super::VerifyConfig,
    idx: usize,
) -> Result<(), Blocked> {
    if state.unfolds >= cfg.unfold_depth {
        return Err(Blocked::Unsupported(format!(
            "unfold budget ({}) exhausted on this path",
            cfg.unfold_depth
        )));
    }
    state.unfolds += 1;
    match state.heap[idx].clone() {
        SpatialAtom::ListRep { elems, addr } => {
            let h = SpecExpr::Var(state.fresh_ghost(Sort::Int));
            let n = SpecExpr::Var(state.fresh_ghost(Sort::Addr));
            let t = SpecExpr::Var(state.fresh_ghost(Sort::List));
            state.heap[idx] = SpatialAtom::PtsTo {
                addr,
                share: SpecExpr::ShareL(Share::Full),
                value: PointsToValue::ListNode { head: h.clone(), next: n.clone() },
            };
            state.heap.push(SpatialAtom::ListRep { elems: t.clone(), addr: n });
            state
                .hyps
                .push(PureProp::eq(elems, SpecExpr::Cons(Box::new(h), Box::new(t))));
            Ok(())
        }
        SpatialAtom::TreeRep { tree, addr } => {
            let k = SpecExpr::Var(state.fresh_ghost(Sort::Int));
            let l = SpecExpr::Var(state.fresh_ghost(Sort::Addr));
            let r = SpecExpr::Var(state.fresh_ghost(Sort::Addr));
            let lt = SpecExpr::Var(state.fresh_ghost(Sort::Tree));
            let rt = SpecExpr::Var(state.fresh_ghost(Sort::Tree));
            state.heap[idx] = SpatialAtom::PtsTo {
                addr,
                share: SpecExpr::ShareL(Share::Full),
                value: PointsToValue::TreeNode {
                    key: k.clone(),
                    left: l.clone(),
                    right: r.clone(),
                },
            };
            state.heap.push(SpatialAtom::TreeRep { tree: lt.clone(), addr: l });
            state.heap.push(SpatialAtom::TreeRep { tree: rt.clone(), addr: r });
            state.hyps.push(PureProp::eq(
                tree,
                SpecExpr::TNode(Box::new(k), Box::new(lt), Box::new(rt)),
            ));
            Ok(())
        }
        other => Err(Blocked::Unsupported(format!("cannot unfold {}", other))),
    }
}

fn require_full_share(state: &SymState, share: &SpecExpr) -> Result<(), Blocked> {
    if *share == SpecExpr::ShareL(Share::Full) {
        return Ok(());
    }
    let p = PureProp::eq(share.clone(), SpecExpr::ShareL(Share::Full));
    if state.proves(&p) {
        Ok(())
    } else {
        Err(need(state, "writing requires the full share of the cell", p))
    }
}

/// Store `v` through an lvalue.
fn assign_lvalue(
    state: &mut SymState,
    ctx: &mut Ctx,
    lhs: &LValue,
    v: SpecExpr,
) -> Result<(), Blocked> {
    match lhs {
        LValue::Var(name, _) => {
            state.locals.insert(name.clone(), v);
            Ok(())
        }
        LValue::Deref(base) => {
            let addr = sym_expr(state, ctx, base)?;
            let idx = cell_index(state, ctx, &addr)?;
            let SpatialAtom::PtsTo { share, value, .. } = &state.heap[idx] else {
                return Err(Blocked::Unsupported("stored through a non-cell atom".into()));
            };
            if !matches!(value, PointsToValue::Scalar(_)) {
                return Err(Blocked::Unsupported("scalar store into a struct cell".into()));
            }
            let share = share.clone();
            require_full_share(state, &share)?;
            let SpatialAtom::PtsTo { value, .. } = &mut state.heap[idx] else { unreachable!() };
            *value = PointsToValue::Scalar(v);
            Ok(())
        }
        LValue::Field(base, field) => {
            let addr = sym_expr(state, ctx, base)?;
            let idx = cell_index(state, ctx, &addr)?;
            let SpatialAtom::PtsTo { share, value, .. } = &state.heap[idx] else {
                return Err(Blocked::Unsupported("field store into a non-cell atom".into()));
            };
            if field_value(value, field).is_none() {
                return Err(Blocked::Unsupported(format!(
                    "no field `{}` in the cell at {}",
                    field, addr
                )));
            }
            let share = share.clone();
            require_full_share(state, &share)?;
            let SpatialAtom::PtsTo { value, .. } = &mut state.heap[idx] else { unreachable!() };
            match (value, field.as_str()) {
                (PointsToValue::ListNode { head, .. }, "head") => *head = v,
                (PointsToValue::ListNode { next, .. }, "next") => *next = v,
                (PointsToValue::TreeNode { key, .. }, "key") => *key = v,
                (PointsToValue::TreeNode { left, .. }, "left") => *left = v,
                (PointsToValue::TreeNode { right, .. }, "right") => *right = v,
                _ => unreachable!(),
            }
            Ok(())
        }
        LValue::Index(base, index) => {
            let addr = sym_expr(state, ctx, base)?;
            let i = sym_expr(state, ctx, index)?;
            let idx = cell_index(state, ctx, &addr)?;
            let SpatialAtom::ArraySeg { elems, len, .. } = &state.heap[idx] else {
                return Err(Blocked::Unsupported("indexed store into a non-array atom".into()));
            };
            let elems = elems.clone();
            let len = len.clone();
            require(
                state,
                PureProp::And(vec![
                    PureProp::Cmp(CmpOp::Le, SpecExpr::Int(0), i.clone()),
                    PureProp::Cmp(CmpOp::Lt, i.clone(), len),
                ]),
                "array store requires the index to be in bounds",
            )?;
            let SpatialAtom::ArraySeg { elems: slot, .. } = &mut state.heap[idx] else {
                unreachable!()
            };
            *slot = SpecExpr::Store(Box::new(elems), Box::new(i), Box::new(v));
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Calls
// ---------------------------------------------------------------------------

/// Instantiate `spec` for a call with the given argument values: every
/// binder becomes an unknown anchored by `param == arg` equations, the
/// precondition is proved from the current heap with frame inference, and
/// the instantiated postcondition is folded back into the state. Returns
/// the call's return value.
fn infer_call_params(
    state: &mut SymState,
    spec: &FunSpec,
    args: Vec<SpecExpr>,
    notes: &mut Vec<String>,
) -> Result<Option<SpecExpr>, Blocked> {
    // Rename every spec-side binder away from the caller's namespace.
    let mut avoid: BTreeSet<String> = state.ghosts.keys().cloned().collect();
    for a in &args {
        a.vars(&mut avoid);
    }
    let mut renames: Vec<(String, String)> = Vec::new();
    for (n, _) in spec.with_binders.iter().chain(&spec.pre.exists) {
        let fresh = freshen(n, &avoid);
        avoid.insert(fresh.clone());
        renames.push((n.clone(), fresh));
    }
    let renamed = |e: &SpecExpr| -> SpecExpr {
        let mut cur = e.clone();
        for (from, to) in &renames {
            cur = subst_var_expr(&cur, from, &SpecExpr::Var(to.clone()));
        }
        cur
    };

    // The pre, with every binder existential and anchored to the arguments.
    let mut exists: Vec<(String, Sort)> = Vec::new();
    for ((orig, sort), (_, new)) in spec.with_binders.iter().zip(&renames) {
        debug_assert_eq!(orig, &renames[exists.len()].0);
        exists.push((new.clone(), *sort));
    }
    let pre = rename_assertion(&spec.pre, &renames);
    let mut rhs = Assertion {
        exists: {
            let mut xs = exists;
            xs.extend(pre.exists.iter().cloned());
            xs
        },
        pure: pre.pure.clone(),
        spatial: pre.spatial.clone(),
    };
    for (param, arg) in spec.params.iter().zip(&args) {
        rhs.pure.push(PureProp::eq(renamed(param), arg.clone()));
    }

    let lhs = Assertion {
        exists: Vec::new(),
        pure: Vec::new(),
        spatial: state.heap.clone(),
    };
    match prove_frame(&state.ghosts, &state.hyps, &lhs, &rhs) {
        FrameOutcome::Residual { goal, stage, .. } => Err(Blocked::Need {
            why: format!(
                "call to `{}`: could not establish its requirements (stuck at {})",
                spec.name, stage
            ),
            goal: *goal,
        }),
        FrameOutcome::Framed { witnesses, frame, new_hyps, new_sorts, .. } => {
            state.heap = frame;
            state.hyps.extend(new_hyps);
            for (n, s) in new_sorts {
                state.ghosts.insert(n, s);
            }

            // Instantiation: witnesses where inference pinned a value, fresh
            // ghosts for binders the call leaves unconstrained.
            let mut inst: Vec<(String, SpecExpr)> = Vec::new();
            let mut shown: Vec<String> = Vec::new();
            for ((orig, sort), (_, new)) in spec.with_binders.iter().zip(&renames) {
                let value = witnesses.get(new).cloned().unwrap_or_else(|| {
                    SpecExpr::Var(state.fresh_ghost(*sort))
                });
                shown.push(format!("{} := {}", orig, value));
                inst.push((new.clone(), value));
            }
            notes.push(format!(
                "call to `{}` instantiates {}",
                spec.name,
                shown.join(", ")
            ));

            // Fold the postcondition in: its own binders become fresh
            // ghosts, then the instantiation is applied.
            let mut post = rename_assertion(&spec.post, &renames);
            let mut ret = spec.ret.as_ref().map(renamed);
            for (n, s) in std::mem::take(&mut post.exists) {
                let fresh = SpecExpr::Var(state.fresh_ghost(s));
                post = subst_assertion(&post, &n, &fresh);
                ret = ret.map(|r| subst_var_expr(&r, &n, &fresh));
            }
            for (n, v) in &inst {
                post = subst_assertion(&post, n, v);
                ret = ret.map(|r| subst_var_expr(&r, n, v));
            }
            state.hyps.extend(post.pure);
            state.heap.extend(post.spatial);
            state.tidy_conds();
            Ok(ret)
        }
    }
}

fn freshen(base: &str, avoid: &BTreeSet<String>) -> String {
    if !avoid.contains(base) {
        return base.to_string();
    }
    let mut k = 1usize;
    loop {
        let cand = format!("{}#{}", base, k);
        if !avoid.contains(&cand) {
            return cand;
        }
        k += 1;
    }
}

/// Consistently rename binders (and their occurrences) in an assertion.
/// Every target name must be globally fresh.
fn rename_assertion(a: &Assertion, renames: &[(String, String)]) -> Assertion {
    let mut out = a.clone();
    for (n, _) in out.exists.iter_mut() {
        if let Some((_, to)) = renames.iter().find(|(from, _)| from == n) {
            *n = to.clone();
        }
    }
    for (from, to) in renames {
        out = subst_assertion(&out, from, &SpecExpr::Var(to.clone()));
    }
    out
}

/// The call expression at the top of a statement position, if any.
fn as_direct_call(e: &Expr) -> Option<(&str, &[Expr])> {
    match &e.kind {
        ExprKind::Call(name, args) => Some((name, args)),
        _ => None,
    }
}

fn forward_call(
    state: &mut SymState,
    ctx: &mut Ctx,
    name: &str,
    args: &[Expr],
) -> Result<Option<SpecExpr>, Blocked> {
    let spec = ctx
        .env
        .specs
        .get(name)
        .cloned()
        .ok_or_else(|| Blocked::Fatal(VerifyErr::MissingSpec(name.to_string())))?;
    let mut vals = Vec::with_capacity(args.len());
    for a in args {
        vals.push(sym_expr(state, ctx, a)?);
    }
    infer_call_params(state, &spec, vals, &mut ctx.notes)
}

// ---------------------------------------------------------------------------
// Statement stepping
// ---------------------------------------------------------------------------

/// Push the continuation of an `if` into both branches, so the conditional
/// is the last statement and each branch can run to the postcondition.
pub fn if_seq_transform(stmts: &[Stmt]) -> Option<Vec<Stmt>> {
    let (first, rest) = stmts.split_first()?;
    if rest.is_empty() {
        return None;
    }
    let Stmt::If { cond, then_branch, else_branch, span } = first else {
        return None;
    };
    let mut then_branch = then_branch.clone();
    then_branch.extend(rest.iter().cloned());
    let mut else_branch = else_branch.clone();
    else_branch.extend(rest.iter().cloned());
    Some(vec![Stmt::If {
        cond: cond.clone(),
        then_branch,
        else_branch,
        span: *span,
    }])
}

/// The entailment closing a path: current heap against the postcondition,
/// with the return value pinned when there is one.
fn post_entail_goal(
    state: &SymState,
    post: &Post,
    ret_val: Option<SpecExpr>,
    trace: Vec<String>,
    span: Span,
) -> Goal {
    let mut rhs = post.assertion.clone();
    if let (Some(ret_e), Some(v)) = (&post.ret, &ret_val) {
        rhs.pure.push(PureProp::eq(ret_e.clone(), v.clone()));
    }
    Goal {
        kind: GoalKind::Entail {
            sorts: state.ghosts.clone(),
            goal: EntailGoal {
                hyps: state.hyps.clone(),
                lhs: Assertion {
                    exists: Vec::new(),
                    pure: Vec::new(),
                    spatial: state.heap.clone(),
                },
                rhs,
            },
        },
        trace,
        span,
    }
}

/// Advance one goal by exactly one rule.
pub(crate) fn step(goal: Goal, ctx: &mut Ctx) -> Result<StepOut, VerifyErr> {
    let Goal { kind, mut trace, span } = goal;
    let (mut state, mut stmts, post) = match kind {
        GoalKind::Entail { .. } => {
            return Ok(super::step_entail(Goal { kind, trace, span }, ctx));
        }
        GoalKind::Hoare { state, stmts, post } => (state, stmts, post),
    };

    // Fall-through: establish the post with no return value.
    let Some(first) = stmts.first().cloned() else {
        if post.ret.is_some() {
            let g = Goal { kind: GoalKind::Hoare { state, stmts, post }, trace, span };
            return Ok(StepOut::park(g, "control falls through without returning a value"));
        }
        return Ok(StepOut::next(vec![post_entail_goal(&state, &post, None, trace, span)]));
    };
    let span = first.span();

    // Conditional with a continuation: fold the continuation into the
    // branches first.
    if matches!(first, Stmt::If { .. }) && stmts.len() > 1 {
        let merged = if_seq_transform(&stmts).expect("if with continuation");
        trace.push("if_seq".into());
        ctx.rules_fired += 1;
        return Ok(StepOut::next(vec![Goal {
            kind: GoalKind::Hoare { state, stmts: merged, post },
            trace,
            span,
        }]));
    }

    // Branching: split on the condition, pruning refuted branches.
    if let Stmt::If { cond, then_branch, else_branch, .. } = &first {
        let p = match prop_of(&mut state, ctx, cond) {
            Ok(p) => p,
            Err(b) => {
                return blocked_to_out(
                    b,
                    Goal { kind: GoalKind::Hoare { state, stmts, post }, trace, span },
                )
            }
        };
        trace.push("forward_if".into());
        ctx.rules_fired += 1;
        let mut out = StepOut::next(Vec::new());
        for (branch_prop, body) in
            [(p.clone(), then_branch.clone()), (p.negate(), else_branch.clone())]
        {
            let mut st = state.clone();
            st.hyps.push(branch_prop);
            if st.contradictory() {
                // The branch cannot be taken; it closes vacuously.
                out.closed.push(trace.clone());
                continue;
            }
            out.next.push(Goal {
                kind: GoalKind::Hoare { state: st, stmts: body, post: post.clone() },
                trace: trace.clone(),
                span,
            });
        }
        return Ok(out);
    }

    // Loops are outside the automated fragment.
    if let Some(kind) = first.loop_kind() {
        let g = Goal { kind: GoalKind::Hoare { state, stmts, post }, trace, span };
        return Ok(StepOut::park(
            g,
            format!("`{}` loops need invariants, which this engine does not infer", kind),
        ));
    }

    // Straight-line statement: strongest postcondition.
    let rest: Vec<Stmt> = stmts.drain(1..).collect();
    let result: Result<(&'static str, Option<Goal>), Blocked> = (|| {
        match &first {
            Stmt::Decl { name, ty, init, .. } => {
                let value = match init {
                    None => SpecExpr::Var(state.fresh_ghost(sort_of_ctype(ty))),
                    Some(e) => match as_direct_call(e) {
                        Some((callee, args)) => {
                            let v = forward_call(&mut state, ctx, callee, args)?;
                            let v = v.ok_or_else(|| {
                                Blocked::Unsupported(format!(
                                    "`{}` returns no value to initialize `{}`",
                                    callee, name
                                ))
                            })?;
                            state.locals.insert(name.clone(), v);
                            return Ok(("forward_call", None));
                        }
                        None => sym_expr(&mut state, ctx, e)?,
                    },
                };
                state.locals.insert(name.clone(), value);
                Ok(("forward", None))
            }
            Stmt::Assign { lhs, rhs, .. } => match as_direct_call(rhs) {
                Some((callee, args)) => {
                    let v = forward_call(&mut state, ctx, callee, args)?;
                    let v = v.ok_or_else(|| {
                        Blocked::Unsupported(format!("`{}` returns no value to store", callee))
                    })?;
                    assign_lvalue(&mut state, ctx, lhs, v)?;
                    Ok(("forward_call", None))
                }
                None => {
                    let v = sym_expr(&mut state, ctx, rhs)?;
                    assign_lvalue(&mut state, ctx, lhs, v)?;
                    Ok(("forward", None))
                }
            },
            Stmt::Call { name, args, .. } => {
                forward_call(&mut state, ctx, name, args)?;
                Ok(("forward_call", None))
            }
            Stmt::Return { value, .. } => {
                let (rule, v) = match value {
                    None => ("forward", None),
                    Some(e) => match as_direct_call(e) {
                        Some((callee, args)) => {
                            ("forward_call", forward_call(&mut state, ctx, callee, args)?)
                        }
                        None => ("forward", Some(sym_expr(&mut state, ctx, e)?)),
                    },
                };
                let mut t = trace.clone();
                t.push(rule.into());
                // Statements after a return are unreachable; drop them.
                let g = post_entail_goal(&state, &post, v, t, span);
                Ok((rule, Some(g)))
            }
            Stmt::If { .. } | Stmt::While { .. } | Stmt::DoWhile { .. } | Stmt::For { .. } => {
                unreachable!("handled by the dispatcher above")
            }
        }
    })();

    match result {
        Ok((_, Some(successor))) => {
            ctx.rules_fired += 1;
            Ok(StepOut::next(vec![successor]))
        }
        Ok((rule, None)) => {
            ctx.rules_fired += 1;
            trace.push(rule.into());
            Ok(StepOut::next(vec![Goal {
                kind: GoalKind::Hoare { state, stmts: rest, post },
                trace,
                span,
            }]))
        }
        Err(b) => {
            let mut stmts = vec![first];
            stmts.extend(rest);
            blocked_to_out(b, Goal { kind: GoalKind::Hoare { state, stmts, post }, trace, span })
        }
    }
}

fn blocked_to_out(b: Blocked, goal: Goal) -> Result<StepOut, VerifyErr> {
    match b {
        Blocked::Fatal(e) => Err(e),
        Blocked::Unsupported(why) => Ok(StepOut::park(goal, why)),
        Blocked::Need { why, goal: obligation } => {
            let why = format!("{}; unresolved: {}", why, obligation);
            Ok(StepOut::park(goal, why))
        }
    }
}

// ---------------------------------------------------------------------------
// Unfold hints
// ---------------------------------------------------------------------------

fn pred_matches(atom: &SpatialAtom, pred: &str, addr: &SpecExpr) -> bool {
    match (atom, pred) {
        (SpatialAtom::ListRep { addr: a, .. }, "listrep") => a == addr,
        (SpatialAtom::TreeRep { addr: a, .. }, "treerep") => a == addr,
        _ => false,
    }
}

/// Case-split a list/tree predicate into its null and non-null forms. On a
/// statement goal the variable is looked up among the C locals; on an
/// entailment goal it names a ghost directly.
pub(crate) fn apply_unfold_hint(
    goal: Goal,
    pred: &str,
    at: &str,
) -> Result<Vec<Goal>, VerifyErr> {
    let fail = |msg: String| VerifyErr::HintFailed(msg);
    match goal.kind {
        GoalKind::Hoare { state, stmts, post } => {
            let addr = state
                .locals
                .get(at)
                .cloned()
                .or_else(|| {
                    state.ghosts.contains_key(at).then(|| SpecExpr::Var(at.to_string()))
                })
                .ok_or_else(|| fail(format!("`{}` names neither a local nor a ghost", at)))?;
            let idx = state
                .heap
                .iter()
                .position(|a| pred_matches(a, pred, &addr))
                .ok_or_else(|| fail(format!("no {} atom rooted at {}", pred, addr)))?;

            let mut trace = goal.trace;
            trace.push("unfold".into());

            // Null case: the predicate collapses to the empty structure.
            let mut null_state = state.clone();
            let (root, empty_eq) = rep_null_facts(&null_state.heap[idx]);
            null_state.heap.remove(idx);
            null_state.hyps.push(PureProp::eq(root.clone(), SpecExpr::Null));
            null_state.hyps.push(empty_eq);

            // Non-null case: a root cell plus remainder predicates.
            let mut cons_state = state;
            cons_state.hyps.push(PureProp::ne(root, SpecExpr::Null));
            let big = super::VerifyConfig { unfold_depth: usize::MAX, ..Default::default() };
            if let Err(Blocked::Unsupported(m)) = unfold_rep(&mut cons_state, &big, idx) {
                return Err(fail(m));
            }

            Ok(vec![
                Goal {
                    kind: GoalKind::Hoare {
                        state: null_state,
                        stmts: stmts.clone(),
                        post: post.clone(),
                    },
                    trace: trace.clone(),
                    span: goal.span,
                },
                Goal {
                    kind: GoalKind::Hoare { state: cons_state, stmts, post },
                    trace,
                    span: goal.span,
                },
            ])
        }
        GoalKind::Entail { sorts, goal: egoal } => {
            let addr = SpecExpr::Var(at.to_string());
            let idx = egoal
                .lhs
                .spatial
                .iter()
                .position(|a| pred_matches(a, pred, &addr))
                .ok_or_else(|| {
                    fail(format!("no {} atom rooted at {} on the left-hand side", pred, addr))
                })?;
            let mut trace = goal.trace;
            trace.push("unfold".into());

            let (root, empty_eq) = rep_null_facts(&egoal.lhs.spatial[idx]);

            let mut null_goal = egoal.clone();
            null_goal.lhs.spatial.remove(idx);
            null_goal.hyps.push(PureProp::eq(root.clone(), SpecExpr::Null));
            null_goal.hyps.push(empty_eq);

            // Run the non-null expansion through a scratch state so the
            // minting logic is shared with the statement path.
            let mut scratch = SymState {
                hyps: egoal.hyps.clone(),
                locals: BTreeMap::new(),
                heap: egoal.lhs.spatial.clone(),
                ghosts: sorts.clone(),
                fresh: 0,
                unfolds: 0,
            };
            scratch.hyps.push(PureProp::ne(root, SpecExpr::Null));
            let big = super::VerifyConfig { unfold_depth: usize::MAX, ..Default::default() };
            if let Err(Blocked::Unsupported(m)) = unfold_rep(&mut scratch, &big, idx) {
                return Err(fail(m));
            }
            let mut cons_goal = egoal.clone();
            cons_goal.hyps = scratch.hyps.clone();
            cons_goal.lhs.spatial = scratch.heap.clone();

            Ok(vec![
                Goal {
                    kind: GoalKind::Entail { sorts: sorts.clone(), goal: null_goal },
                    trace: trace.clone(),
                    span: goal.span,
                },
                Goal {
                    kind: GoalKind::Entail { sorts: scratch.ghosts, goal: cons_goal },
                    trace,
                    span: goal.span,
                },
            ])
        }
    }
}

/// For a list/tree predicate atom: its root address and the fact that its
/// contents are empty (used in the null case of an unfold).
fn rep_null_facts(atom: &SpatialAtom) -> (SpecExpr, PureProp) {
    match atom {
        SpatialAtom::ListRep { elems, addr } => {
            (addr.clone(), PureProp::eq(elems.clone(), SpecExpr::Nil))
        }
        SpatialAtom::TreeRep { tree, addr } => {
            (addr.clone(), PureProp::eq(tree.clone(), SpecExpr::Leaf))
        }
        other => (
            other.addr().cloned().unwrap_or(SpecExpr::Null),
            PureProp::TrueP,
        ),
    }
}
