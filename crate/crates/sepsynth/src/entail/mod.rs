//! Entailment between separation-logic assertions.
//!
//! `prove_entail` decides `hyps /\ lhs |- exists xs. rhs` goal-directedly:
//! the right-hand side's existentials become unification variables, spatial
//! atoms are matched one by one against the left-hand heap (folding and
//! unfolding list/tree representation predicates as needed, within a
//! budget), and the pure residue goes to the linear-arithmetic solver.
//! Heaps are exact: left-hand atoms that nothing on the right accounts for
//! make the entailment fail unless the caller explicitly asks for the
//! leftover as a frame.

pub mod pure;
pub mod rewrite;

pub use pure::{pure_solve, pure_solve_ctx, PureVerdict};
pub use rewrite::{simp_expr, simp_prop, subst_var, subst_var_expr};

use crate::spec::{
    Assertion, CmpOp, PointsToValue, PureProp, Share, Sort, SpatialAtom, SpecExpr,
};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeErr {
    /// Two full-share cells at one address describe no heap at all.
    #[error("unsatisfiable spatial part: two full-share cells at `{0}`")]
    DuplicateFullCell(String),
}

/// Simplify all embedded expressions, resolve decided conditionals, flatten
/// and deduplicate the pure part, and sort atoms into a canonical order.
/// Normalizing twice yields the same assertion.
pub fn normalize(a: &Assertion) -> Result<Assertion, NormalizeErr> {
    let mut pure = Vec::new();
    for p in &a.pure {
        push_flat(simp_prop(p), &mut pure);
    }
    pure.sort_by_key(|p| p.to_string());
    pure.dedup();

    let mut spatial = Vec::new();
    for at in &a.spatial {
        simp_atom_into(at, &mut spatial);
    }
    spatial.sort_by_key(atom_sort_key);

    // A full-share cell is exclusive: the same address twice is absurd.
    let full_addrs: Vec<String> = spatial
        .iter()
        .filter_map(|at| match at {
            SpatialAtom::PtsTo { addr, share, .. }
                if matches!(share, SpecExpr::ShareL(Share::Full)) =>
            {
                Some(addr.to_string())
            }
            _ => None,
        })
        .collect();
    for (i, a1) in full_addrs.iter().enumerate() {
        if full_addrs[i + 1..].contains(a1) {
            return Err(NormalizeErr::DuplicateFullCell(a1.clone()));
        }
    }

    Ok(Assertion { exists: a.exists.clone(), pure, spatial })
}

fn push_flat(p: PureProp, out: &mut Vec<PureProp>) {
    match p {
        PureProp::TrueP => {}
        PureProp::And(ps) => ps.into_iter().for_each(|q| push_flat(q, out)),
        other => out.push(other),
    }
}

/// Simplify one atom; decided conditionals splice their branch in place.
fn simp_atom_into(at: &SpatialAtom, out: &mut Vec<SpatialAtom>) {
    match at {
        SpatialAtom::PtsTo { addr, share, value } => out.push(SpatialAtom::PtsTo {
            addr: simp_expr(addr),
            share: simp_expr(share),
            value: match value {
                PointsToValue::Scalar(v) => PointsToValue::Scalar(simp_expr(v)),
                PointsToValue::ListNode { head, next } => PointsToValue::ListNode {
                    head: simp_expr(head),
                    next: simp_expr(next),
                },
                PointsToValue::TreeNode { key, left, right } => PointsToValue::TreeNode {
                    key: simp_expr(key),
                    left: simp_expr(left),
                    right: simp_expr(right),
                },
            },
        }),
        SpatialAtom::ListRep { elems, addr } => out.push(SpatialAtom::ListRep {
            elems: simp_expr(elems),
            addr: simp_expr(addr),
        }),
        SpatialAtom::TreeRep { tree, addr } => out.push(SpatialAtom::TreeRep {
            tree: simp_expr(tree),
            addr: simp_expr(addr),
        }),
        SpatialAtom::ArraySeg { elems, addr, len } => out.push(SpatialAtom::ArraySeg {
            elems: simp_expr(elems),
            addr: simp_expr(addr),
            len: simp_expr(len),
        }),
        SpatialAtom::Cond { cond, then_atoms, else_atoms } => {
            match simp_prop(cond) {
                PureProp::TrueP => {
                    then_atoms.iter().for_each(|x| simp_atom_into(x, out))
                }
                PureProp::FalseP => {
                    else_atoms.iter().for_each(|x| simp_atom_into(x, out))
                }
                cond => {
                    let mut t = Vec::new();
                    let mut e = Vec::new();
                    then_atoms.iter().for_each(|x| simp_atom_into(x, &mut t));
                    else_atoms.iter().for_each(|x| simp_atom_into(x, &mut e));
                    out.push(SpatialAtom::Cond { cond, then_atoms: t, else_atoms: e });
                }
            }
        }
    }
}

fn atom_sort_key(at: &SpatialAtom) -> (u8, String, String) {
    let rank = match at {
        SpatialAtom::PtsTo { .. } => 0,
        SpatialAtom::ListRep { .. } => 1,
        SpatialAtom::TreeRep { .. } => 2,
        SpatialAtom::ArraySeg { .. } => 3,
        SpatialAtom::Cond { .. } => 4,
    };
    let addr = at.addr().map(|a| a.to_string()).unwrap_or_default();
    (rank, addr, at.to_string())
}

// ---------------------------------------------------------------------------
// Shape facts
// ---------------------------------------------------------------------------

/// Pure consequences of owning the given atoms: cells have non-null
/// addresses, representation predicates tie emptiness to nullness, distinct
/// full cells have distinct addresses.
pub fn shape_facts(atoms: &[SpatialAtom]) -> Vec<PureProp> {
    let mut out = Vec::new();
    for at in atoms {
        atom_shape_facts(at, &mut out);
    }
    // Separation: two full-share cells never alias.
    let fulls: Vec<&SpecExpr> = atoms
        .iter()
        .filter_map(|at| match at {
            SpatialAtom::PtsTo { addr, share, .. }
                if matches!(share, SpecExpr::ShareL(Share::Full)) =>
            {
                Some(addr)
            }
            _ => None,
        })
        .collect();
    for (i, a) in fulls.iter().enumerate() {
        for b in &fulls[i + 1..] {
            out.push(PureProp::ne((*a).clone(), (*b).clone()));
        }
    }
    out
}

fn atom_shape_facts(at: &SpatialAtom, out: &mut Vec<PureProp>) {
    let null = SpecExpr::Null;
    match at {
        SpatialAtom::PtsTo { addr, .. } => {
            out.push(PureProp::ne(addr.clone(), null));
        }
        SpatialAtom::ListRep { elems, addr } => {
            // Empty iff the root is null.
            out.push(PureProp::Or(vec![
                PureProp::And(vec![
                    PureProp::eq(addr.clone(), null.clone()),
                    PureProp::eq(elems.clone(), SpecExpr::Nil),
                ]),
                PureProp::And(vec![
                    PureProp::ne(addr.clone(), null),
                    PureProp::Cmp(
                        CmpOp::Le,
                        SpecExpr::Int(1),
                        SpecExpr::Len(Box::new(elems.clone())),
                    ),
                ]),
            ]));
        }
        SpatialAtom::TreeRep { tree, addr } => {
            out.push(PureProp::Or(vec![
                PureProp::And(vec![
                    PureProp::eq(addr.clone(), null.clone()),
                    PureProp::eq(tree.clone(), SpecExpr::Leaf),
                ]),
                PureProp::And(vec![
                    PureProp::ne(addr.clone(), null),
                    PureProp::ne(tree.clone(), SpecExpr::Leaf),
                ]),
            ]));
        }
        SpatialAtom::ArraySeg { elems, addr, len } => {
            out.push(PureProp::eq(
                SpecExpr::Len(Box::new(elems.clone())),
                len.clone(),
            ));
            out.push(PureProp::Cmp(CmpOp::Le, SpecExpr::Int(0), len.clone()));
            out.push(PureProp::Or(vec![
                PureProp::eq(len.clone(), SpecExpr::Int(0)),
                PureProp::ne(addr.clone(), null),
            ]));
        }
        SpatialAtom::Cond { cond, then_atoms, else_atoms } => {
            let mut t = Vec::new();
            let mut e = Vec::new();
            then_atoms.iter().for_each(|x| atom_shape_facts(x, &mut t));
            else_atoms.iter().for_each(|x| atom_shape_facts(x, &mut e));
            out.push(PureProp::Ite(
                Box::new(cond.clone()),
                Box::new(PureProp::and(t)),
                Box::new(PureProp::and(e)),
            ));
        }
    }
}

// ---------------------------------------------------------------------------
// Goals and outcomes
// ---------------------------------------------------------------------------

/// A stuck entailment, reported back to the caller verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct EntailGoal {
    pub hyps: Vec<PureProp>,
    pub lhs: Assertion,
    pub rhs: Assertion,
}

impl fmt::Display for EntailGoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.hyps.is_empty() {
            let hs: Vec<String> = self.hyps.iter().map(|h| h.to_string()).collect();
            write!(f, "[{}] ", hs.join("; "))?;
        }
        write!(f, "{} |- {}", self.lhs, self.rhs)
    }
}

#[derive(Debug, Clone)]
pub enum EntailOutcome {
    Proved {
        /// Instantiation of the right-hand side's existentials.
        witnesses: BTreeMap<String, SpecExpr>,
        log: Vec<String>,
    },
    Residual {
        goal: Box<EntailGoal>,
        /// Pipeline stage where the proof got stuck: `normalize`,
        /// `conditional`, `matching`, `instantiation`, or `pure`.
        stage: String,
        log: Vec<String>,
    },
}

impl EntailOutcome {
    pub fn is_proved(&self) -> bool {
        matches!(self, EntailOutcome::Proved { .. })
    }

    pub fn log(&self) -> &[String] {
        match self {
            EntailOutcome::Proved { log, .. } | EntailOutcome::Residual { log, .. } => log,
        }
    }
}

// ---------------------------------------------------------------------------
// The spatial matcher
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct MatchConfig {
    /// Permit unconsumed left-hand atoms (the caller wants them as a frame).
    pub allow_leftover: bool,
    /// Maximum number of fold/unfold steps.
    pub unfold_budget: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { allow_leftover: false, unfold_budget: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct MatchOk {
    /// Values for the `?`-variables, fully resolved.
    pub bindings: BTreeMap<String, SpecExpr>,
    /// Unconsumed left-hand atoms (empty unless leftovers were allowed).
    pub leftover: Vec<SpatialAtom>,
    /// Equalities introduced by unfolding left-hand predicates.
    pub extra_hyps: Vec<PureProp>,
    /// Fresh universally-fixed names minted by unfolding, with their sorts;
    /// they may occur in `leftover` and `extra_hyps`.
    pub new_sorts: Vec<(String, Sort)>,
    pub log: Vec<String>,
}

#[derive(Debug, Clone)]
pub enum MatchFail {
    /// No combination of matches covers this right-hand atom.
    Unmatched(SpatialAtom),
    /// Left-hand atoms would leak.
    Leak(Vec<SpatialAtom>),
    /// A pure obligation survived matching but is not provable.
    Obligation(PureProp, PureVerdict),
    /// An existential never received a value.
    Unbound(String),
    /// Search budget exhausted.
    Budget,
}

const MATCH_STEP_CAP: usize = 20_000;

struct Matcher {
    sorts: BTreeMap<String, Sort>,
    hyps: Vec<PureProp>,
    lhs: Vec<SpatialAtom>,
    consumed: Vec<bool>,
    bindings: BTreeMap<String, SpecExpr>,
    obligations: Vec<PureProp>,
    evars: BTreeSet<String>,
    log: Vec<String>,
    fresh: usize,
    minted: Vec<(String, Sort)>,
    budget: usize,
    allow_leftover: bool,
    steps: usize,
    /// Failure diagnosis: the right-hand atom that got stuck deepest.
    deepest: usize,
    stuck: Option<MatchFail>,
}

struct Snap {
    hyps_len: usize,
    consumed: Vec<bool>,
    bindings: BTreeMap<String, SpecExpr>,
    obligations: Vec<PureProp>,
    log_len: usize,
    budget: usize,
    evars: BTreeSet<String>,
}

impl Matcher {
    fn snap(&self) -> Snap {
        Snap {
            hyps_len: self.hyps.len(),
            consumed: self.consumed.clone(),
            bindings: self.bindings.clone(),
            obligations: self.obligations.clone(),
            log_len: self.log.len(),
            budget: self.budget,
            evars: self.evars.clone(),
        }
    }

    fn restore(&mut self, s: Snap) {
        self.hyps.truncate(s.hyps_len);
        self.consumed = s.consumed;
        self.bindings = s.bindings;
        self.obligations = s.obligations;
        self.log.truncate(s.log_len);
        self.budget = s.budget;
        self.evars = s.evars;
    }

    fn fresh_evar(&mut self, sort: Sort) -> SpecExpr {
        let name = format!("?u{}", self.fresh);
        self.fresh += 1;
        self.sorts.insert(name.clone(), sort);
        self.evars.insert(name.clone());
        SpecExpr::Var(name)
    }

    fn is_evar(name: &str) -> bool {
        name.starts_with('?')
    }

    /// Substitute bound unification variables until settled.
    fn resolve(&self, e: &SpecExpr) -> SpecExpr {
        let mut cur = e.clone();
        for _ in 0..=self.bindings.len() {
            let mut vs = BTreeSet::new();
            cur.vars(&mut vs);
            let mut changed = false;
            for v in vs {
                if let Some(to) = self.bindings.get(&v) {
                    cur = subst_var_expr(&cur, &v, to);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        cur
    }

    fn resolve_prop(&self, p: &PureProp) -> PureProp {
        let mut cur = p.clone();
        for _ in 0..=self.bindings.len() {
            let mut vs = BTreeSet::new();
            cur.vars(&mut vs);
            let mut changed = false;
            for v in vs {
                if let Some(to) = self.bindings.get(&v) {
                    cur = subst_var(&cur, &v, to);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        cur
    }

    fn unbound_evar(&self, e: &SpecExpr) -> Option<String> {
        match e {
            SpecExpr::Var(v) if Self::is_evar(v) && !self.bindings.contains_key(v) => {
                Some(v.clone())
            }
            _ => None,
        }
    }

    fn has_unbound(&self, e: &SpecExpr) -> bool {
        let mut vs = BTreeSet::new();
        e.vars(&mut vs);
        vs.iter()
            .any(|v| Self::is_evar(v) && !self.bindings.contains_key(v))
    }

    fn bind(&mut self, name: &str, to: SpecExpr) -> bool {
        let mut vs = BTreeSet::new();
        to.vars(&mut vs);
        if vs.contains(name) {
            return false; // occurs check
        }
        self.log.push(format!("bind {} := {}", name, to));
        self.bindings.insert(name.to_string(), to);
        true
    }

    fn pure_valid(&mut self, p: &PureProp) -> bool {
        self.steps += 25;
        pure_solve_ctx(&self.sorts, &self.hyps, p).is_valid()
    }

    fn eq_provable(&mut self, a: &SpecExpr, b: &SpecExpr) -> bool {
        let (a, b) = (simp_expr(a), simp_expr(b));
        if a == b {
            return true;
        }
        self.pure_valid(&PureProp::eq(a, b))
    }

    /// Match an address position: bind an unknown, or require provable
    /// equality. Addresses anchor the match, so nothing is deferred here.
    fn pos_addr(&mut self, lhs_e: &SpecExpr, rhs_e: &SpecExpr) -> bool {
        let r = self.resolve(rhs_e);
        if let Some(name) = self.unbound_evar(&r) {
            return self.bind(&name, simp_expr(lhs_e));
        }
        self.eq_provable(lhs_e, &r)
    }

    /// Match a value position: bind an unknown, accept syntactic or provable
    /// equality, or defer as an obligation when unknowns remain inside.
    fn pos_value(&mut self, lhs_e: &SpecExpr, rhs_e: &SpecExpr) -> bool {
        let r = self.resolve(rhs_e);
        if let Some(name) = self.unbound_evar(&r) {
            return self.bind(&name, simp_expr(lhs_e));
        }
        if self.has_unbound(&r) {
            self.obligations.push(PureProp::eq(simp_expr(lhs_e), r));
            return true;
        }
        self.eq_provable(lhs_e, &r)
    }

    fn null_provable(&mut self, e: &SpecExpr) -> bool {
        self.pure_valid(&PureProp::eq(e.clone(), SpecExpr::Null))
    }

    fn nonnull_provable(&mut self, e: &SpecExpr) -> bool {
        self.pure_valid(&PureProp::ne(e.clone(), SpecExpr::Null))
    }

    /// The atom provably covers no cells: a representation rooted at null,
    /// or an array segment of length zero.
    fn provably_empty(&mut self, at: &SpatialAtom) -> bool {
        match at {
            SpatialAtom::ListRep { addr, .. } | SpatialAtom::TreeRep { addr, .. } => {
                let addr = addr.clone();
                self.null_provable(&addr)
            }
            SpatialAtom::ArraySeg { len, .. } => {
                self.pure_valid(&PureProp::eq(len.clone(), SpecExpr::Int(0)))
            }
            _ => false,
        }
    }

    // -- moves ------------------------------------------------------------

    fn unify_same_kind(&mut self, j: usize, rhs: &SpatialAtom) -> bool {
        let lhs = self.lhs[j].clone();
        let ok = match (&lhs, rhs) {
            (
                SpatialAtom::PtsTo { addr: la, share: ls, value: lv },
                SpatialAtom::PtsTo { addr: ra, share: rs, value: rv },
            ) => {
                self.pos_addr(la, ra)
                    && self.pos_value(ls, rs)
                    && match (lv, rv) {
                        (PointsToValue::Scalar(l), PointsToValue::Scalar(r)) => {
                            self.pos_value(l, r)
                        }
                        (
                            PointsToValue::ListNode { head: lh, next: ln },
                            PointsToValue::ListNode { head: rh, next: rn },
                        ) => self.pos_value(lh, rh) && self.pos_value(ln, rn),
                        (
                            PointsToValue::TreeNode { key: lk, left: ll, right: lr },
                            PointsToValue::TreeNode { key: rk, left: rl, right: rr },
                        ) => {
                            self.pos_value(lk, rk)
                                && self.pos_value(ll, rl)
                                && self.pos_value(lr, rr)
                        }
                        _ => false,
                    }
            }
            (
                SpatialAtom::ListRep { elems: le, addr: la },
                SpatialAtom::ListRep { elems: re, addr: ra },
            ) => self.pos_addr(la, ra) && self.pos_value(le, re),
            (
                SpatialAtom::TreeRep { tree: lt, addr: la },
                SpatialAtom::TreeRep { tree: rt, addr: ra },
            ) => self.pos_addr(la, ra) && self.pos_value(lt, rt),
            (
                SpatialAtom::ArraySeg { elems: le, addr: la, len: ll },
                SpatialAtom::ArraySeg { elems: re, addr: ra, len: rl },
            ) => self.pos_addr(la, ra) && self.pos_value(ll, rl) && self.pos_value(le, re),
            _ => false,
        };
        if ok {
            self.consumed[j] = true;
            self.log.push(format!("match {} against {}", rhs, lhs));
        }
        ok
    }

    /// Unfold a left-hand `listrep`/`treerep` at a provably non-null root
    /// into a node cell plus sub-representations, recording the element
    /// equality as a hypothesis.
    fn unfold_lhs(&mut self, j: usize) -> bool {
        if self.budget == 0 {
            return false;
        }
        self.budget -= 1;
        let atom = self.lhs[j].clone();
        match atom {
            SpatialAtom::ListRep { elems, addr } => {
                let h = self.fresh_skolem(Sort::Int);
                let n = self.fresh_skolem(Sort::Addr);
                let t = self.fresh_skolem(Sort::List);
                self.consumed[j] = true;
                self.lhs.push(SpatialAtom::PtsTo {
                    addr: addr.clone(),
                    share: SpecExpr::ShareL(Share::Full),
                    value: PointsToValue::ListNode { head: h.clone(), next: n.clone() },
                });
                self.consumed.push(false);
                self.lhs.push(SpatialAtom::ListRep { elems: t.clone(), addr: n });
                self.consumed.push(false);
                let eq = simp_prop(&PureProp::eq(
                    elems.clone(),
                    SpecExpr::Cons(Box::new(h), Box::new(t)),
                ));
                self.log.push(format!(
                    "unfold listrep({}, {}) [{}]",
                    elems, addr, eq
                ));
                push_flat(eq, &mut self.hyps);
                true
            }
            SpatialAtom::TreeRep { tree, addr } => {
                let k = self.fresh_skolem(Sort::Int);
                let l = self.fresh_skolem(Sort::Addr);
                let r = self.fresh_skolem(Sort::Addr);
                let lt = self.fresh_skolem(Sort::Tree);
                let rt = self.fresh_skolem(Sort::Tree);
                self.consumed[j] = true;
                self.lhs.push(SpatialAtom::PtsTo {
                    addr: addr.clone(),
                    share: SpecExpr::ShareL(Share::Full),
                    value: PointsToValue::TreeNode {
                        key: k.clone(),
                        left: l.clone(),
                        right: r.clone(),
                    },
                });
                self.consumed.push(false);
                self.lhs.push(SpatialAtom::TreeRep { tree: lt.clone(), addr: l });
                self.consumed.push(false);
                self.lhs.push(SpatialAtom::TreeRep { tree: rt.clone(), addr: r });
                self.consumed.push(false);
                let eq = simp_prop(&PureProp::eq(
                    tree.clone(),
                    SpecExpr::TNode(Box::new(k), Box::new(lt), Box::new(rt)),
                ));
                self.log
                    .push(format!("unfold treerep({}, {}) [{}]", tree, addr, eq));
                push_flat(eq, &mut self.hyps);
                true
            }
            _ => false,
        }
    }

    /// Fresh universally-fixed name introduced by unfolding on the left.
    fn fresh_skolem(&mut self, sort: Sort) -> SpecExpr {
        let name = format!("%u{}", self.fresh);
        self.fresh += 1;
        self.sorts.insert(name.clone(), sort.clone());
        self.minted.push((name.clone(), sort));
        SpecExpr::Var(name)
    }

    fn note_stuck(&mut self, depth: usize, fail: MatchFail) {
        if depth >= self.deepest {
            self.deepest = depth;
            self.stuck = Some(fail);
        }
    }

    fn go(&mut self, rhs: &[SpatialAtom], depth: usize) -> bool {
        self.steps += 1;
        if self.steps > MATCH_STEP_CAP {
            self.note_stuck(depth, MatchFail::Budget);
            return false;
        }
        let Some((first, rest)) = rhs.split_first() else {
            // All right-hand atoms accounted for: check leftovers and then
            // discharge the accumulated pure obligations.
            let s = self.snap();
            if !self.allow_leftover {
                // A representation predicate that is provably empty owns no
                // cells; it may be discarded rather than leaked.
                let mut leaked: Vec<SpatialAtom> = Vec::new();
                for j in 0..self.lhs.len() {
                    if self.consumed[j] {
                        continue;
                    }
                    let at = self.resolve_atom(&self.lhs[j].clone());
                    if self.provably_empty(&at) {
                        self.consumed[j] = true;
                        self.log.push(format!("discard empty {}", at));
                    } else {
                        leaked.push(at);
                    }
                }
                if !leaked.is_empty() {
                    self.restore(s);
                    self.note_stuck(depth, MatchFail::Leak(leaked));
                    return false;
                }
            }
            match self.discharge_obligations() {
                Ok(()) => return true,
                Err(fail) => {
                    self.note_stuck(depth, fail);
                    self.restore(s);
                    return false;
                }
            }
        };

        // Resolve what we already know into the atom before matching.
        let first = self.resolve_atom(first);

        // Move 1: unify against an unconsumed same-kind atom.
        let kinds_match = |l: &SpatialAtom| match (l, &first) {
            (SpatialAtom::PtsTo { value: lv, .. }, SpatialAtom::PtsTo { value: rv, .. }) => {
                std::mem::discriminant(lv) == std::mem::discriminant(rv)
            }
            (SpatialAtom::ListRep { .. }, SpatialAtom::ListRep { .. })
            | (SpatialAtom::TreeRep { .. }, SpatialAtom::TreeRep { .. })
            | (SpatialAtom::ArraySeg { .. }, SpatialAtom::ArraySeg { .. }) => true,
            _ => false,
        };
        for j in 0..self.lhs.len() {
            if self.consumed[j] || !kinds_match(&self.lhs[j]) {
                continue;
            }
            let s = self.snap();
            if self.unify_same_kind(j, &first) && self.go(rest, depth + 1) {
                return true;
            }
            self.restore(s);
        }

        // Move 2: fold an empty representation out of thin air.
        match &first {
            SpatialAtom::ListRep { elems, addr } => {
                let ra = self.resolve(addr);
                if let Some(q) = self.unbound_evar(&ra) {
                    let s = self.snap();
                    if self.bind(&q, SpecExpr::Null) {
                        self.obligations.push(PureProp::eq(
                            self.resolve(elems),
                            SpecExpr::Nil,
                        ));
                        self.log.push(format!("fold empty listrep at {}", q));
                        if self.go(rest, depth + 1) {
                            return true;
                        }
                    }
                    self.restore(s);
                } else if self.null_provable(&ra) {
                    let s = self.snap();
                    self.obligations
                        .push(PureProp::eq(self.resolve(elems), SpecExpr::Nil));
                    self.log.push(format!("fold empty listrep at {}", ra));
                    if self.go(rest, depth + 1) {
                        return true;
                    }
                    self.restore(s);
                }
            }
            SpatialAtom::TreeRep { tree, addr } => {
                let ra = self.resolve(addr);
                if let Some(q) = self.unbound_evar(&ra) {
                    let s = self.snap();
                    if self.bind(&q, SpecExpr::Null) {
                        self.obligations.push(PureProp::eq(
                            self.resolve(tree),
                            SpecExpr::Leaf,
                        ));
                        self.log.push(format!("fold empty treerep at {}", q));
                        if self.go(rest, depth + 1) {
                            return true;
                        }
                    }
                    self.restore(s);
                } else if self.null_provable(&ra) {
                    let s = self.snap();
                    self.obligations
                        .push(PureProp::eq(self.resolve(tree), SpecExpr::Leaf));
                    self.log.push(format!("fold empty treerep at {}", ra));
                    if self.go(rest, depth + 1) {
                        return true;
                    }
                    self.restore(s);
                }
            }
            SpatialAtom::ArraySeg { elems, addr: _, len } => {
                let rl = self.resolve(len);
                let s = self.snap();
                if self.pure_valid(&PureProp::eq(rl, SpecExpr::Int(0))) {
                    self.obligations
                        .push(PureProp::eq(self.resolve(elems), SpecExpr::Nil));
                    self.log.push("fold empty array segment".to_string());
                    if self.go(rest, depth + 1) {
                        return true;
                    }
                }
                self.restore(s);
            }
            _ => {}
        }

        // Move 3: unfold a right-hand representation whose root is a
        // left-hand node cell.
        if self.budget > 0 {
            match &first {
                SpatialAtom::ListRep { elems, addr } => {
                    let ra = self.resolve(addr);
                    if !self.has_unbound(&ra) {
                        let candidate = (0..self.lhs.len()).find(|&j| {
                            !self.consumed[j]
                                && matches!(
                                    &self.lhs[j],
                                    SpatialAtom::PtsTo {
                                        value: PointsToValue::ListNode { .. },
                                        ..
                                    }
                                )
                                && {
                                    let la = self.lhs[j].addr().unwrap().clone();
                                    self.eq_provable(&la, &ra)
                                }
                        });
                        if candidate.is_some() {
                            let s = self.snap();
                            self.budget -= 1;
                            let h = self.fresh_evar(Sort::Int);
                            let n = self.fresh_evar(Sort::Addr);
                            let t = self.fresh_evar(Sort::List);
                            self.obligations.push(PureProp::eq(
                                self.resolve(elems),
                                SpecExpr::Cons(Box::new(h.clone()), Box::new(t.clone())),
                            ));
                            self.log
                                .push(format!("unfold wanted listrep({}, {})", elems, ra));
                            let mut new_rhs = vec![
                                SpatialAtom::PtsTo {
                                    addr: ra.clone(),
                                    share: SpecExpr::ShareL(Share::Full),
                                    value: PointsToValue::ListNode { head: h, next: n.clone() },
                                },
                                SpatialAtom::ListRep { elems: t, addr: n },
                            ];
                            new_rhs.extend(rest.iter().cloned());
                            if self.go(&new_rhs, depth) {
                                return true;
                            }
                            self.restore(s);
                        }
                    }
                }
                SpatialAtom::TreeRep { tree, addr } => {
                    let ra = self.resolve(addr);
                    if !self.has_unbound(&ra) {
                        let candidate = (0..self.lhs.len()).find(|&j| {
                            !self.consumed[j]
                                && matches!(
                                    &self.lhs[j],
                                    SpatialAtom::PtsTo {
                                        value: PointsToValue::TreeNode { .. },
                                        ..
                                    }
                                )
                                && {
                                    let la = self.lhs[j].addr().unwrap().clone();
                                    self.eq_provable(&la, &ra)
                                }
                        });
                        if candidate.is_some() {
                            let s = self.snap();
                            self.budget -= 1;
                            let k = self.fresh_evar(Sort::Int);
                            let l = self.fresh_evar(Sort::Addr);
                            let r = self.fresh_evar(Sort::Addr);
                            let lt = self.fresh_evar(Sort::Tree);
                            let rt = self.fresh_evar(Sort::Tree);
                            self.obligations.push(PureProp::eq(
                                self.resolve(tree),
                                SpecExpr::TNode(
                                    Box::new(k.clone()),
                                    Box::new(lt.clone()),
                                    Box::new(rt.clone()),
                                ),
                            ));
                            self.log
                                .push(format!("unfold wanted treerep({}, {})", tree, ra));
                            let mut new_rhs = vec![
                                SpatialAtom::PtsTo {
                                    addr: ra.clone(),
                                    share: SpecExpr::ShareL(Share::Full),
                                    value: PointsToValue::TreeNode {
                                        key: k,
                                        left: l.clone(),
                                        right: r.clone(),
                                    },
                                },
                                SpatialAtom::TreeRep { tree: lt, addr: l },
                                SpatialAtom::TreeRep { tree: rt, addr: r },
                            ];
                            new_rhs.extend(rest.iter().cloned());
                            if self.go(&new_rhs, depth) {
                                return true;
                            }
                            self.restore(s);
                        }
                    }
                }
                _ => {}
            }
        }

        // Move 4: unfold a left-hand representation to expose the node cell
        // a right-hand points-to wants.
        if let SpatialAtom::PtsTo { addr, value, .. } = &first {
            let want_list = matches!(value, PointsToValue::ListNode { .. });
            let want_tree = matches!(value, PointsToValue::TreeNode { .. });
            let ra = self.resolve(addr);
            if (want_list || want_tree) && !self.has_unbound(&ra) {
                for j in 0..self.lhs.len() {
                    if self.consumed[j] {
                        continue;
                    }
                    let fits = match &self.lhs[j] {
                        SpatialAtom::ListRep { addr: la, .. } if want_list => {
                            let la = la.clone();
                            self.eq_provable(&la, &ra) && self.nonnull_provable(&ra)
                        }
                        SpatialAtom::TreeRep { addr: la, .. } if want_tree => {
                            let la = la.clone();
                            self.eq_provable(&la, &ra) && self.nonnull_provable(&ra)
                        }
                        _ => false,
                    };
                    if !fits {
                        continue;
                    }
                    let s = self.snap();
                    if self.unfold_lhs(j) && self.go(rhs, depth) {
                        return true;
                    }
                    self.restore(s);
                }
            }
        }

        self.note_stuck(depth, MatchFail::Unmatched(first.clone()));
        false
    }

    fn resolve_atom(&self, at: &SpatialAtom) -> SpatialAtom {
        match at {
            SpatialAtom::PtsTo { addr, share, value } => SpatialAtom::PtsTo {
                addr: self.resolve(addr),
                share: self.resolve(share),
                value: match value {
                    PointsToValue::Scalar(v) => PointsToValue::Scalar(self.resolve(v)),
                    PointsToValue::ListNode { head, next } => PointsToValue::ListNode {
                        head: self.resolve(head),
                        next: self.resolve(next),
                    },
                    PointsToValue::TreeNode { key, left, right } => {
                        PointsToValue::TreeNode {
                            key: self.resolve(key),
                            left: self.resolve(left),
                            right: self.resolve(right),
                        }
                    }
                },
            },
            SpatialAtom::ListRep { elems, addr } => SpatialAtom::ListRep {
                elems: self.resolve(elems),
                addr: self.resolve(addr),
            },
            SpatialAtom::TreeRep { tree, addr } => SpatialAtom::TreeRep {
                tree: self.resolve(tree),
                addr: self.resolve(addr),
            },
            SpatialAtom::ArraySeg { elems, addr, len } => SpatialAtom::ArraySeg {
                elems: self.resolve(elems),
                addr: self.resolve(addr),
                len: self.resolve(len),
            },
            SpatialAtom::Cond { .. } => at.clone(),
        }
    }

    /// Fixpoint: equational obligations with one unknown side become
    /// bindings.
    fn bind_from_obligations(&mut self) {
        loop {
            let mut progressed = false;
            let obs = std::mem::take(&mut self.obligations);
            for ob in obs {
                let ob = simp_prop(&self.resolve_prop(&ob));
                let mut flat = Vec::new();
                push_flat(ob, &mut flat);
                for c in flat {
                    if let PureProp::Cmp(CmpOp::Eq, a, b) = &c {
                        if let Some(name) = self.unbound_evar(a) {
                            if !self.has_unbound(b) && self.bind(&name, b.clone()) {
                                progressed = true;
                                continue;
                            }
                        }
                        if let Some(name) = self.unbound_evar(b) {
                            if !self.has_unbound(a) && self.bind(&name, a.clone()) {
                                progressed = true;
                                continue;
                            }
                        }
                    }
                    self.obligations.push(c);
                }
            }
            if !progressed {
                break;
            }
        }
    }

    /// After all atoms match: bind remaining unknowns from equational
    /// obligations, then prove what is left.
    fn discharge_obligations(&mut self) -> Result<(), MatchFail> {
        self.bind_from_obligations();
        // Everything the right-hand side mentioned must have a value.
        for v in self.evars.clone() {
            if !self.bindings.contains_key(&v) {
                return Err(MatchFail::Unbound(v));
            }
        }
        let obs = std::mem::take(&mut self.obligations);
        for ob in obs {
            let ob = simp_prop(&self.resolve_prop(&ob));
            if ob == PureProp::TrueP {
                continue;
            }
            self.steps += 25;
            let verdict = pure_solve_ctx(&self.sorts, &self.hyps, &ob);
            if !verdict.is_valid() {
                return Err(MatchFail::Obligation(ob, verdict));
            }
            self.log.push(format!("pure obligation holds: {}", ob));
        }
        Ok(())
    }
}

/// Match every right-hand atom against the left-hand heap, binding
/// `?`-variables along the way and proving the pure obligations that
/// accumulate. With `allow_leftover`, unconsumed left-hand atoms are
/// returned as the frame.
pub fn match_atoms(
    sorts: &BTreeMap<String, Sort>,
    hyps: &[PureProp],
    lhs_atoms: &[SpatialAtom],
    rhs_atoms: &[SpatialAtom],
    rhs_pure: &[PureProp],
    cfg: MatchConfig,
) -> Result<MatchOk, MatchFail> {
    let mut evars = BTreeSet::new();
    let mut all_vars = BTreeSet::new();
    for at in rhs_atoms {
        at.vars(&mut all_vars);
    }
    for p in rhs_pure {
        p.vars(&mut all_vars);
    }
    for v in &all_vars {
        if Matcher::is_evar(v) {
            evars.insert(v.clone());
        }
    }
    let mut m = Matcher {
        sorts: sorts.clone(),
        hyps: hyps.to_vec(),
        lhs: lhs_atoms.to_vec(),
        consumed: vec![false; lhs_atoms.len()],
        bindings: BTreeMap::new(),
        obligations: rhs_pure.to_vec(),
        evars,
        log: Vec::new(),
        fresh: 0,
        minted: Vec::new(),
        budget: cfg.unfold_budget,
        allow_leftover: cfg.allow_leftover,
        steps: 0,
        deepest: 0,
        stuck: None,
    };
    // Equations handed in directly (return-value bindings, hint-supplied
    // witnesses) anchor the search before any atom is considered.
    m.bind_from_obligations();
    let rhs: Vec<SpatialAtom> = rhs_atoms.to_vec();
    if m.go(&rhs, 0) {
        let leftover: Vec<SpatialAtom> = m
            .lhs
            .iter()
            .zip(&m.consumed)
            .filter(|(_, c)| !**c)
            .map(|(a, _)| m.resolve_atom(a))
            .collect();
        let hyps_added = m.hyps[hyps.len()..].to_vec();
        let mut bindings = BTreeMap::new();
        for (k, _) in m.bindings.clone() {
            let v = m.resolve(&SpecExpr::Var(k.clone()));
            bindings.insert(k, simp_expr(&v));
        }
        Ok(MatchOk {
            bindings,
            leftover,
            extra_hyps: hyps_added,
            new_sorts: m.minted.clone(),
            log: m.log,
        })
    } else {
        Err(m.stuck.unwrap_or(MatchFail::Budget))
    }
}

// ---------------------------------------------------------------------------
// prove_entail
// ---------------------------------------------------------------------------

fn subst_var_atom(at: &SpatialAtom, name: &str, to: &SpecExpr) -> SpatialAtom {
    let se = |e: &SpecExpr| subst_var_expr(e, name, to);
    match at {
        SpatialAtom::PtsTo { addr, share, value } => SpatialAtom::PtsTo {
            addr: se(addr),
            share: se(share),
            value: match value {
                PointsToValue::Scalar(v) => PointsToValue::Scalar(se(v)),
                PointsToValue::ListNode { head, next } => {
                    PointsToValue::ListNode { head: se(head), next: se(next) }
                }
                PointsToValue::TreeNode { key, left, right } => PointsToValue::TreeNode {
                    key: se(key),
                    left: se(left),
                    right: se(right),
                },
            },
        },
        SpatialAtom::ListRep { elems, addr } => {
            SpatialAtom::ListRep { elems: se(elems), addr: se(addr) }
        }
        SpatialAtom::TreeRep { tree, addr } => {
            SpatialAtom::TreeRep { tree: se(tree), addr: se(addr) }
        }
        SpatialAtom::ArraySeg { elems, addr, len } => {
            SpatialAtom::ArraySeg { elems: se(elems), addr: se(addr), len: se(len) }
        }
        SpatialAtom::Cond { cond, then_atoms, else_atoms } => SpatialAtom::Cond {
            cond: subst_var(cond, name, to),
            then_atoms: then_atoms.iter().map(|a| subst_var_atom(a, name, to)).collect(),
            else_atoms: else_atoms.iter().map(|a| subst_var_atom(a, name, to)).collect(),
        },
    }
}

/// Substitute `name := to` throughout an assertion. A binder in `exists`
/// shadows the name, so such assertions come back unchanged.
pub fn subst_assertion(a: &Assertion, name: &str, to: &SpecExpr) -> Assertion {
    if a.exists.iter().any(|(n, _)| n == name) {
        return a.clone();
    }
    Assertion {
        exists: a.exists.clone(),
        pure: a.pure.iter().map(|p| subst_var(p, name, to)).collect(),
        spatial: a.spatial.iter().map(|at| subst_var_atom(at, name, to)).collect(),
    }
}

/// Equalities in the hypotheses induce a substitution: a variable equal to
/// an expression not mentioning it gets replaced throughout. This lets the
/// syntactic matcher see through ghost equations like `l = h :: t`.
fn derive_substitution(hyps: &[PureProp]) -> Vec<(String, SpecExpr)> {
    let mut subst: Vec<(String, SpecExpr)> = Vec::new();
    let apply = |e: &SpecExpr, subst: &[(String, SpecExpr)]| {
        let mut cur = e.clone();
        for (n, t) in subst {
            cur = subst_var_expr(&cur, n, t);
        }
        cur
    };
    for h in hyps {
        let (v, e) = match h {
            PureProp::Cmp(CmpOp::Eq, SpecExpr::Var(v), e) => (v, e),
            PureProp::Cmp(CmpOp::Eq, e, SpecExpr::Var(v)) => (v, e),
            _ => continue,
        };
        if v.starts_with('?') || subst.iter().any(|(n, _)| n == v) {
            continue;
        }
        let e = simp_expr(&apply(e, &subst));
        let mut vs = BTreeSet::new();
        e.vars(&mut vs);
        if vs.contains(v) {
            continue;
        }
        // Map later-introduced names onto earlier ones, not the reverse:
        // prefer replacing a variable by a non-variable expression.
        let (v, e) = match &e {
            SpecExpr::Var(w) if w > v => (w.clone(), SpecExpr::Var(v.clone())),
            _ => (v.clone(), e),
        };
        // Rewrite existing targets so the substitution stays idempotent.
        for (_, t) in subst.iter_mut() {
            *t = subst_var_expr(t, &v, &e);
        }
        subst.push((v, e));
    }
    subst
}

fn apply_subst_prop(p: &PureProp, subst: &[(String, SpecExpr)]) -> PureProp {
    let mut cur = p.clone();
    for (n, t) in subst {
        cur = subst_var(&cur, n, t);
    }
    cur
}

fn apply_subst_assertion(a: &Assertion, subst: &[(String, SpecExpr)]) -> Assertion {
    let mut cur = a.clone();
    for (n, t) in subst {
        cur = subst_assertion(&cur, n, t);
    }
    cur
}

/// Result of entailment with frame inference: the right-hand side is proved
/// from a sub-heap of the left, and the unused left-hand atoms come back as
/// the frame.
#[derive(Debug, Clone)]
pub enum FrameOutcome {
    Framed {
        /// Instantiation of the right-hand side's existentials.
        witnesses: BTreeMap<String, SpecExpr>,
        /// Left-hand atoms the proof did not consume.
        frame: Vec<SpatialAtom>,
        /// Facts established while matching (equalities from unfolding);
        /// sound to assume alongside the frame.
        new_hyps: Vec<PureProp>,
        /// Sorts for fresh names appearing in `frame` or `new_hyps`.
        new_sorts: Vec<(String, Sort)>,
        log: Vec<String>,
    },
    Residual {
        goal: Box<EntailGoal>,
        stage: String,
        log: Vec<String>,
    },
}

/// Proof result before existential renaming is undone: carries the frame
/// and connection facts that `prove_entail` discards and `prove_frame`
/// keeps.
enum Inner {
    Proved {
        witnesses: BTreeMap<String, SpecExpr>,
        frame: Vec<SpatialAtom>,
        new_hyps: Vec<PureProp>,
        new_sorts: Vec<(String, Sort)>,
    },
    Residual {
        goal: Box<EntailGoal>,
        stage: String,
    },
}

impl Inner {
    fn vacuous(frame: Vec<SpatialAtom>) -> Inner {
        Inner::Proved {
            witnesses: BTreeMap::new(),
            frame,
            new_hyps: Vec::new(),
            new_sorts: Vec::new(),
        }
    }

    fn is_proved(&self) -> bool {
        matches!(self, Inner::Proved { .. })
    }
}

/// Fold left-hand binders into the sort table as fixed names and rename
/// right-hand existential binders to `?`-unknowns.
fn prepare_binders(
    sorts: &BTreeMap<String, Sort>,
    lhs: &Assertion,
    rhs: &Assertion,
    log: &mut Vec<String>,
) -> (BTreeMap<String, Sort>, Assertion, Assertion, Vec<(String, String)>) {
    let mut sorts = sorts.clone();
    let mut lhs = lhs.clone();
    for (n, s) in std::mem::take(&mut lhs.exists) {
        sorts.insert(n, s);
    }
    let mut rhs_renamed = rhs.clone();
    let mut rename: Vec<(String, String)> = Vec::new();
    for (i, (n, s)) in std::mem::take(&mut rhs_renamed.exists).into_iter().enumerate() {
        let fresh = format!("?e{}", i);
        sorts.insert(fresh.clone(), s);
        rhs_renamed = subst_assertion(&rhs_renamed, &n, &SpecExpr::Var(fresh.clone()));
        rename.push((n, fresh));
    }
    if !rename.is_empty() {
        log.push(format!(
            "solve for: {}",
            rename
                .iter()
                .map(|(n, f)| format!("{} (as {})", n, f))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    (sorts, lhs, rhs_renamed, rename)
}

/// Report witnesses under the original binder names.
fn rename_witnesses_back(
    witnesses: &BTreeMap<String, SpecExpr>,
    rename: &[(String, String)],
) -> BTreeMap<String, SpecExpr> {
    let mut named = BTreeMap::new();
    for (orig, fresh) in rename {
        if let Some(v) = witnesses.get(fresh) {
            named.insert(orig.clone(), v.clone());
        }
    }
    named
}

/// Prove `hyps /\ lhs |- rhs`, treating the right-hand side's existential
/// binders as unknowns to solve for. Left-hand binders are fixed fresh
/// names. Returns the witnesses on success and the stuck residual goal
/// otherwise. Every left-hand atom must be consumed; see [`prove_frame`]
/// for the leftover-tolerant variant.
pub fn prove_entail(
    sorts: &BTreeMap<String, Sort>,
    hyps: &[PureProp],
    lhs: &Assertion,
    rhs: &Assertion,
) -> EntailOutcome {
    let mut log = Vec::new();
    let (sorts, lhs, rhs_renamed, rename) = prepare_binders(sorts, lhs, rhs, &mut log);
    let mut split_ctr = 0usize;
    match prove_inner(
        &sorts,
        hyps,
        &lhs,
        &rhs_renamed,
        MatchConfig::default(),
        &mut split_ctr,
        &mut log,
    ) {
        Inner::Proved { witnesses, .. } => EntailOutcome::Proved {
            witnesses: rename_witnesses_back(&witnesses, &rename),
            log,
        },
        Inner::Residual { goal, stage } => EntailOutcome::Residual { goal, stage, log },
    }
}

/// Prove `hyps /\ lhs |- rhs * frame` for an inferred `frame`: left-hand
/// atoms the right-hand side does not need are returned instead of being
/// treated as a leak. `new_hyps` and `new_sorts` describe facts and fresh
/// names the caller may rely on when continuing with the frame.
pub fn prove_frame(
    sorts: &BTreeMap<String, Sort>,
    hyps: &[PureProp],
    lhs: &Assertion,
    rhs: &Assertion,
) -> FrameOutcome {
    let mut log = Vec::new();
    let (sorts, lhs, rhs_renamed, rename) = prepare_binders(sorts, lhs, rhs, &mut log);
    let cfg = MatchConfig { allow_leftover: true, ..MatchConfig::default() };
    let mut split_ctr = 0usize;
    match prove_inner(&sorts, hyps, &lhs, &rhs_renamed, cfg, &mut split_ctr, &mut log) {
        Inner::Proved { witnesses, frame, new_hyps, new_sorts } => FrameOutcome::Framed {
            witnesses: rename_witnesses_back(&witnesses, &rename),
            frame,
            new_hyps,
            new_sorts,
            log,
        },
        Inner::Residual { goal, stage } => FrameOutcome::Residual { goal, stage, log },
    }
}

/// Combine the branch proofs of an undecided conditional. Fresh names are
/// minted per branch, so they are first renamed apart; facts proved under
/// one branch only are guarded by the branch condition.
fn merge_split(cond: &PureProp, then_inner: Inner, else_inner: Inner, split_ctr: &mut usize) -> Inner {
    let Inner::Proved { witnesses: wt, frame: ft, new_hyps: ht, new_sorts: st } = then_inner
    else {
        return then_inner;
    };
    let Inner::Proved { witnesses: we, frame: fe, new_hyps: he, new_sorts: se } = else_inner
    else {
        return else_inner;
    };
    if ft == fe && ht == he && st == se {
        return Inner::Proved {
            witnesses: merge_witnesses(cond, wt, we),
            frame: ft,
            new_hyps: ht,
            new_sorts: st,
        };
    }
    let (wt, ft, ht, st) = rename_branch(wt, ft, ht, st, split_ctr);
    let (we, fe, he, se) = rename_branch(we, fe, he, se, split_ctr);
    let witnesses = merge_witnesses(cond, wt, we);
    let frame = if ft == fe {
        ft
    } else {
        vec![SpatialAtom::Cond { cond: cond.clone(), then_atoms: ft, else_atoms: fe }]
    };
    let mut new_hyps: Vec<PureProp> = Vec::new();
    for p in &ht {
        if he.contains(p) {
            new_hyps.push(p.clone());
        } else {
            new_hyps.push(PureProp::Or(vec![cond.clone().negate(), p.clone()]));
        }
    }
    for p in he {
        if !ht.contains(&p) {
            new_hyps.push(PureProp::Or(vec![cond.clone(), p]));
        }
    }
    let mut new_sorts = st;
    new_sorts.extend(se);
    Inner::Proved { witnesses, frame, new_hyps, new_sorts }
}

/// Union two witness maps; where the branches disagree the witness becomes
/// a conditional on the split condition.
fn merge_witnesses(
    cond: &PureProp,
    mut wt: BTreeMap<String, SpecExpr>,
    we: BTreeMap<String, SpecExpr>,
) -> BTreeMap<String, SpecExpr> {
    for (k, v) in we {
        match wt.entry(k) {
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(v);
            }
            std::collections::btree_map::Entry::Occupied(mut slot) => {
                if *slot.get() != v {
                    let t = slot.get().clone();
                    slot.insert(simp_expr(&SpecExpr::Ite(
                        Box::new(cond.clone()),
                        Box::new(t),
                        Box::new(v),
                    )));
                }
            }
        }
    }
    wt
}

/// Give every fresh name minted inside one branch a name that cannot clash
/// with the other branch's mints, rewriting all places it occurs.
fn rename_branch(
    witnesses: BTreeMap<String, SpecExpr>,
    frame: Vec<SpatialAtom>,
    hyps: Vec<PureProp>,
    minted: Vec<(String, Sort)>,
    ctr: &mut usize,
) -> (BTreeMap<String, SpecExpr>, Vec<SpatialAtom>, Vec<PureProp>, Vec<(String, Sort)>) {
    if minted.is_empty() {
        return (witnesses, frame, hyps, minted);
    }
    let renames: Vec<(String, String)> = minted
        .iter()
        .map(|(n, _)| {
            let fresh = format!("%v{}", *ctr);
            *ctr += 1;
            (n.clone(), fresh)
        })
        .collect();
    let fix_expr = |e: &SpecExpr| {
        let mut cur = e.clone();
        for (from, to) in &renames {
            cur = subst_var_expr(&cur, from, &SpecExpr::Var(to.clone()));
        }
        cur
    };
    let witnesses = witnesses.into_iter().map(|(k, v)| (k, fix_expr(&v))).collect();
    let frame = frame
        .iter()
        .map(|a| {
            let mut cur = a.clone();
            for (from, to) in &renames {
                cur = subst_var_atom(&cur, from, &SpecExpr::Var(to.clone()));
            }
            cur
        })
        .collect();
    let hyps = hyps
        .iter()
        .map(|p| {
            let mut cur = p.clone();
            for (from, to) in &renames {
                cur = subst_var(&cur, from, &SpecExpr::Var(to.clone()));
            }
            cur
        })
        .collect();
    let minted = minted
        .into_iter()
        .zip(&renames)
        .map(|((_, s), (_, to))| (to.clone(), s))
        .collect();
    (witnesses, frame, hyps, minted)
}

fn prove_inner(
    sorts: &BTreeMap<String, Sort>,
    hyps: &[PureProp],
    lhs: &Assertion,
    rhs: &Assertion,
    cfg: MatchConfig,
    split_ctr: &mut usize,
    log: &mut Vec<String>,
) -> Inner {
    let lhs = match normalize(lhs) {
        Ok(a) => a,
        Err(NormalizeErr::DuplicateFullCell(addr)) => {
            log.push(format!(
                "left-hand heap is unsatisfiable (duplicate full cell at {}); \
                 entailment holds vacuously",
                addr
            ));
            let frame = if cfg.allow_leftover { lhs.spatial.clone() } else { Vec::new() };
            return Inner::vacuous(frame);
        }
    };
    let rhs = match normalize(rhs) {
        Ok(a) => a,
        Err(NormalizeErr::DuplicateFullCell(addr)) => {
            log.push(format!(
                "right-hand heap demands a duplicate full cell at {}",
                addr
            ));
            return Inner::Residual {
                goal: Box::new(EntailGoal {
                    hyps: hyps.to_vec(),
                    lhs,
                    rhs: rhs.clone(),
                }),
                stage: "normalize".into(),
            };
        }
    };

    // Hypotheses: ambient facts, the left-hand pure part, and the shape
    // consequences of owning the left-hand heap.
    let mut h: Vec<PureProp> = Vec::new();
    for p in hyps.iter().chain(&lhs.pure) {
        push_flat(simp_prop(p), &mut h);
    }
    let shape = shape_facts(&lhs.spatial);
    log.push(format!(
        "assume {} pure facts and {} shape facts",
        h.len(),
        shape.len()
    ));
    for p in &shape {
        push_flat(simp_prop(p), &mut h);
    }

    // Propagate ghost equations syntactically.
    let subst = derive_substitution(&h);
    let (lhs, rhs, h) = if subst.is_empty() {
        (lhs, rhs, h)
    } else {
        log.push(format!(
            "substitute: {}",
            subst
                .iter()
                .map(|(n, t)| format!("{} := {}", n, t))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        let h2: Vec<PureProp> = {
            let mut out = Vec::new();
            for p in &h {
                push_flat(simp_prop(&apply_subst_prop(p, &subst)), &mut out);
            }
            out
        };
        (
            apply_subst_assertion(&lhs, &subst),
            apply_subst_assertion(&rhs, &subst),
            h2,
        )
    };

    // Contradictory context proves anything; leave the heap untouched when
    // the caller wants a frame.
    if pure_solve_ctx(sorts, &h, &PureProp::FalseP).is_valid() {
        log.push("hypotheses are contradictory; entailment holds vacuously".into());
        let frame = if cfg.allow_leftover { lhs.spatial.clone() } else { Vec::new() };
        return Inner::vacuous(frame);
    }

    // Resolve conditionals on the left: decide, or split.
    for (i, at) in lhs.spatial.iter().enumerate() {
        if let SpatialAtom::Cond { cond, then_atoms, else_atoms } = at {
            let verdict = pure_solve_ctx(sorts, &h, cond);
            let mut base = lhs.clone();
            base.spatial.remove(i);
            match verdict {
                PureVerdict::Valid(_) => {
                    log.push(format!("left conditional decided true: {}", cond));
                    base.spatial.extend(then_atoms.iter().cloned());
                    return prove_inner(sorts, &h, &base, &rhs, cfg, split_ctr, log);
                }
                PureVerdict::Refuted(_) => {
                    log.push(format!("left conditional decided false: {}", cond));
                    base.spatial.extend(else_atoms.iter().cloned());
                    return prove_inner(sorts, &h, &base, &rhs, cfg, split_ctr, log);
                }
                PureVerdict::Unknown => {
                    log.push(format!("split on left conditional: {}", cond));
                    let mut then_branch = base.clone();
                    then_branch.spatial.extend(then_atoms.iter().cloned());
                    then_branch.pure.push(cond.clone());
                    let mut else_branch = base;
                    else_branch.spatial.extend(else_atoms.iter().cloned());
                    else_branch.pure.push(cond.clone().negate());
                    let t = prove_inner(sorts, &h, &then_branch, &rhs, cfg, split_ctr, log);
                    if !t.is_proved() {
                        return t;
                    }
                    let e = prove_inner(sorts, &h, &else_branch, &rhs, cfg, split_ctr, log);
                    if !e.is_proved() {
                        return e;
                    }
                    return merge_split(cond, t, e, split_ctr);
                }
            }
        }
    }

    // Resolve conditionals on the right the same way.
    for (i, at) in rhs.spatial.iter().enumerate() {
        if let SpatialAtom::Cond { cond, then_atoms, else_atoms } = at {
            let verdict = pure_solve_ctx(sorts, &h, cond);
            let mut base = rhs.clone();
            base.spatial.remove(i);
            match verdict {
                PureVerdict::Valid(_) => {
                    log.push(format!("conditional resolved true: {}", cond));
                    base.spatial.extend(then_atoms.iter().cloned());
                    return prove_inner(sorts, &h, &lhs, &base, cfg, split_ctr, log);
                }
                PureVerdict::Refuted(_) => {
                    log.push(format!("conditional resolved false: {}", cond));
                    base.spatial.extend(else_atoms.iter().cloned());
                    return prove_inner(sorts, &h, &lhs, &base, cfg, split_ctr, log);
                }
                PureVerdict::Unknown => {
                    log.push(format!("split on conditional: {}", cond));
                    let mut lhs_t = lhs.clone();
                    lhs_t.pure.push(cond.clone());
                    let mut rhs_t = base.clone();
                    rhs_t.spatial.extend(then_atoms.iter().cloned());
                    let t = prove_inner(sorts, &h, &lhs_t, &rhs_t, cfg, split_ctr, log);
                    if !t.is_proved() {
                        return t;
                    }
                    let mut lhs_e = lhs.clone();
                    lhs_e.pure.push(cond.clone().negate());
                    let mut rhs_e = base;
                    rhs_e.spatial.extend(else_atoms.iter().cloned());
                    let e = prove_inner(sorts, &h, &lhs_e, &rhs_e, cfg, split_ctr, log);
                    if !e.is_proved() {
                        return e;
                    }
                    return merge_split(cond, t, e, split_ctr);
                }
            }
        }
    }

    // Spatial matching plus pure obligations.
    match match_atoms(sorts, &h, &lhs.spatial, &rhs.spatial, &rhs.pure, cfg) {
        Ok(ok) => {
            log.extend(ok.log);
            log.push("all atoms matched and obligations hold".into());
            Inner::Proved {
                witnesses: ok.bindings,
                frame: ok.leftover,
                new_hyps: ok.extra_hyps,
                new_sorts: ok.new_sorts,
            }
        }
        Err(fail) => {
            let (stage, goal) = residual_for(&h, &lhs, &rhs, &fail, log);
            Inner::Residual { goal: Box::new(goal), stage }
        }
    }
}

fn residual_for(
    h: &[PureProp],
    lhs: &Assertion,
    rhs: &Assertion,
    fail: &MatchFail,
    log: &mut Vec<String>,
) -> (String, EntailGoal) {
    match fail {
        MatchFail::Unmatched(at) => {
            log.push(format!("no match for {}", at));
            (
                "matching".into(),
                EntailGoal {
                    hyps: h.to_vec(),
                    lhs: lhs.clone(),
                    rhs: Assertion {
                        exists: vec![],
                        pure: vec![],
                        spatial: vec![at.clone()],
                    },
                },
            )
        }
        MatchFail::Leak(atoms) => {
            log.push(format!(
                "left-hand atoms would leak: {}",
                atoms
                    .iter()
                    .map(|a| a.to_string())
                    .collect::<Vec<_>>()
                    .join(" * ")
            ));
            (
                "matching".into(),
                EntailGoal {
                    hyps: h.to_vec(),
                    lhs: Assertion {
                        exists: vec![],
                        pure: vec![],
                        spatial: atoms.clone(),
                    },
                    rhs: Assertion::emp(),
                },
            )
        }
        MatchFail::Obligation(p, verdict) => {
            log.push(match verdict {
                PureVerdict::Refuted(_) => format!("pure obligation refuted: {}", p),
                _ => format!("pure obligation undecided: {}", p),
            });
            (
                "pure".into(),
                EntailGoal {
                    hyps: h.to_vec(),
                    lhs: Assertion::emp(),
                    rhs: Assertion {
                        exists: vec![],
                        pure: vec![p.clone()],
                        spatial: vec![],
                    },
                },
            )
        }
        MatchFail::Unbound(name) => {
            log.push(format!("no value determined for existential {}", name));
            (
                "instantiation".into(),
                EntailGoal { hyps: h.to_vec(), lhs: lhs.clone(), rhs: rhs.clone() },
            )
        }
        MatchFail::Budget => {
            log.push("search budget exhausted".into());
            (
                "matching".into(),
                EntailGoal { hyps: h.to_vec(), lhs: lhs.clone(), rhs: rhs.clone() },
            )
        }
    }
}
