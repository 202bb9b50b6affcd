//! A validity checker for the quantifier-free linear-integer fragment of the
//! proposition language, with uninterpreted handling of everything else.
//!
//! The core decides `hyps |- goal` by negating the goal, expanding to
//! disjunctive normal form, and refuting every disjunct with Fourier–Motzkin
//! elimination sharpened by integer tightening. Nonlinear or structural
//! subterms become opaque atoms keyed by a canonical rendering, so equal
//! terms are recognized syntactically. Universally quantified hypotheses
//! over lists are instantiated once at the index terms appearing in the
//! goal, guarded by provable bounds checks.
//!
//! Partial operators (head, tail, indexing, slicing out of range, division)
//! are handled by a definedness discipline: conditions from hypotheses are
//! assumed (a true hypothesis must have evaluated), while conditions from
//! the goal are proved first; otherwise the verdict is Unknown. This keeps
//! both Valid and Refuted sound under random grounding.

use super::rewrite::{apply_unary_pred, defined_prop, simp_expr, simp_prop, subst_var, subst_var_expr};
use crate::spec::{CmpOp, PureProp, Sort, SpecExpr, UnaryPred};
use std::collections::{BTreeMap, BTreeSet};

/// Outcome of a pure-arithmetic query, carrying the deciding fact chain for
/// definite verdicts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PureVerdict {
    Valid(Vec<String>),
    Refuted(Vec<String>),
    Unknown,
}

impl PureVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, PureVerdict::Valid(_))
    }

    pub fn is_refuted(&self) -> bool {
        matches!(self, PureVerdict::Refuted(_))
    }
}

// ---------------------------------------------------------------------------
// Linear combinations
// ---------------------------------------------------------------------------

/// A linear combination of named terms plus a constant, interpreted as the
/// relation `terms + k (<= | = | !=) 0` depending on context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
struct Lin {
    terms: BTreeMap<String, i128>,
    k: i128,
}

impl Lin {
    fn konst(k: i128) -> Lin {
        Lin { terms: BTreeMap::new(), k }
    }

    fn term(name: String) -> Lin {
        let mut terms = BTreeMap::new();
        terms.insert(name, 1);
        Lin { terms, k: 0 }
    }

    fn add(&self, other: &Lin) -> Option<Lin> {
        let mut out = self.clone();
        out.k = out.k.checked_add(other.k)?;
        for (t, c) in &other.terms {
            let entry = out.terms.entry(t.clone()).or_insert(0);
            *entry = entry.checked_add(*c)?;
            if *entry == 0 {
                out.terms.remove(t);
            }
        }
        Some(out)
    }

    fn scale(&self, f: i128) -> Option<Lin> {
        let mut out = Lin::konst(self.k.checked_mul(f)?);
        for (t, c) in &self.terms {
            let c = c.checked_mul(f)?;
            if c != 0 {
                out.terms.insert(t.clone(), c);
            }
        }
        Some(out)
    }

    fn sub(&self, other: &Lin) -> Option<Lin> {
        self.add(&other.scale(-1)?)
    }

    fn plus_const(&self, k: i128) -> Option<Lin> {
        let mut out = self.clone();
        out.k = out.k.checked_add(k)?;
        Some(out)
    }

    fn is_const(&self) -> Option<i128> {
        if self.terms.is_empty() {
            Some(self.k)
        } else {
            None
        }
    }

    /// Canonical rendering, e.g. `2*a + b - 3`; the zero combination prints
    /// as `0`.
    fn render(&self) -> String {
        let mut s = String::new();
        for (t, c) in &self.terms {
            if s.is_empty() {
                match *c {
                    1 => s.push_str(t),
                    -1 => {
                        s.push('-');
                        s.push_str(t);
                    }
                    c => s.push_str(&format!("{}*{}", c, t)),
                }
            } else {
                let (sign, mag) = if *c < 0 { (" - ", -*c) } else { (" + ", *c) };
                s.push_str(sign);
                if mag == 1 {
                    s.push_str(t);
                } else {
                    s.push_str(&format!("{}*{}", mag, t));
                }
            }
        }
        if s.is_empty() {
            return self.k.to_string();
        }
        if self.k > 0 {
            s.push_str(&format!(" + {}", self.k));
        } else if self.k < 0 {
            s.push_str(&format!(" - {}", -self.k));
        }
        s
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn ceil_div(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    (a + b - 1).div_euclid(b)
}

/// Integer tightening: divide a constraint `sum + k <= 0` by the gcd of its
/// coefficients, rounding the constant up (the sum is integer-valued).
fn tighten(lin: &Lin) -> Lin {
    let mut g = 0;
    for c in lin.terms.values() {
        g = gcd(g, *c);
    }
    if g <= 1 {
        return lin.clone();
    }
    let mut out = Lin::konst(ceil_div(lin.k, g));
    for (t, c) in &lin.terms {
        out.terms.insert(t.clone(), c / g);
    }
    out
}

// ---------------------------------------------------------------------------
// Formulas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum F {
    True,
    False,
    /// `lin <= 0`
    Le(Lin),
    /// `lin = 0`
    Eq(Lin),
    /// `lin != 0`
    Ne(Lin),
    /// Uninterpreted proposition with polarity.
    Atom(String, bool),
    And(Vec<F>),
    Or(Vec<F>),
}

fn fneg(f: &F) -> F {
    match f {
        F::True => F::False,
        F::False => F::True,
        // not (l <= 0)  <=>  l >= 1  <=>  -l + 1 <= 0   (integers)
        F::Le(l) => match l.scale(-1).and_then(|n| n.plus_const(1)) {
            Some(n) => F::Le(n),
            None => F::Atom(format!("overflow({})", l.render()), false),
        },
        F::Eq(l) => F::Ne(l.clone()),
        F::Ne(l) => F::Eq(l.clone()),
        F::Atom(k, pol) => F::Atom(k.clone(), !*pol),
        F::And(fs) => F::Or(fs.iter().map(fneg).collect()),
        F::Or(fs) => F::And(fs.iter().map(fneg).collect()),
    }
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

struct Enc<'a> {
    sorts: &'a BTreeMap<String, Sort>,
    /// Opaque terms registered during linearization, keyed canonically.
    registry: BTreeMap<String, SpecExpr>,
    /// Term keys whose facts have already been attached; survives repeated
    /// attachment passes so each fact enters the base exactly once.
    fact_done: BTreeSet<String>,
}

impl<'a> Enc<'a> {
    fn new(sorts: &'a BTreeMap<String, Sort>) -> Self {
        Enc { sorts, registry: BTreeMap::new(), fact_done: BTreeSet::new() }
    }

    fn is_double_var(&self, v: &str) -> bool {
        matches!(self.sorts.get(v), Some(Sort::Double))
    }
}

fn expr_has_double(e: &SpecExpr, enc: &Enc) -> bool {
    use SpecExpr::*;
    match e {
        Double(_) => true,
        Var(v) => enc.is_double_var(v),
        Int(_) | BoolL(_) | Null | ShareL(_) | Nil | Leaf => false,
        Arith(_, a, b) | Cons(a, b) | Append(a, b) | Index(a, b) | MapAdd(a, b)
        | TLookup(a, b) | TInsert(a, b) | TFoldIns(a, b) => {
            expr_has_double(a, enc) || expr_has_double(b, enc)
        }
        Len(x) | Head(x) | Tail(x) | TMin(x) | Skew(x) => expr_has_double(x, enc),
        Filter(p, l) => {
            expr_has_double(l, enc)
                || matches!(p, UnaryPred::CmpWith(_, b) if expr_has_double(b, enc))
        }
        Slice(a, b, c) | Store(a, b, c) | TNode(a, b, c) => {
            expr_has_double(a, enc) || expr_has_double(b, enc) || expr_has_double(c, enc)
        }
        Ite(c, a, b) => {
            prop_has_double(c, enc) || expr_has_double(a, enc) || expr_has_double(b, enc)
        }
    }
}

fn prop_has_double(p: &PureProp, enc: &Enc) -> bool {
    use PureProp::*;
    match p {
        TrueP | FalseP => false,
        Cmp(_, a, b) | Forall2(_, a, b) | In(a, b) => {
            expr_has_double(a, enc) || expr_has_double(b, enc)
        }
        And(ps) | Or(ps) => ps.iter().any(|q| prop_has_double(q, enc)),
        Not(q) => prop_has_double(q, enc),
        Forall(pr, l) => {
            expr_has_double(l, enc)
                || matches!(pr, UnaryPred::CmpWith(_, b) if expr_has_double(b, enc))
        }
        Sorted(l) => expr_has_double(l, enc),
        Ite(c, a, b) => {
            prop_has_double(c, enc) || prop_has_double(a, enc) || prop_has_double(b, enc)
        }
        ForallIdx { lo, hi, body, .. } => {
            expr_has_double(lo, enc)
                || expr_has_double(hi, enc)
                || prop_has_double(body, enc)
        }
    }
}

/// Does the expression definitely produce a list? Used to attach the
/// length-equality consequence to list equalities.
fn is_listish(e: &SpecExpr, enc: &Enc) -> bool {
    use SpecExpr::*;
    match e {
        Nil | Cons(..) | Append(..) | Tail(_) | Slice(..) | Store(..) | MapAdd(..)
        | Filter(..) => true,
        Var(v) => matches!(enc.sorts.get(v), Some(Sort::List)),
        Ite(_, a, b) => is_listish(a, enc) || is_listish(b, enc),
        _ => false,
    }
}

/// Linearize an expression; anything nonlinear becomes an opaque named term
/// (registered when `reg` is set, so term facts can be attached later).
fn lin_core(e: &SpecExpr, enc: &mut Enc, reg: bool) -> Lin {
    match lin_node(e, enc, reg) {
        Some(l) => l,
        None => opaque(e, enc, reg),
    }
}

/// The linear interpretation of a node, if it has one.
fn lin_node(e: &SpecExpr, enc: &mut Enc, reg: bool) -> Option<Lin> {
    use SpecExpr::*;
    match e {
        Int(n) => Some(Lin::konst(*n as i128)),
        BoolL(b) => Some(Lin::konst(if *b { 1 } else { 0 })),
        Null => Some(Lin::konst(0)),
        ShareL(s) => Some(Lin::konst(match s {
            crate::spec::Share::Full => 1,
            crate::spec::Share::Readable => 0,
        })),
        Var(v) => Some(Lin::term(v.clone())),
        Arith(op, a, b) => {
            use crate::spec::ArithOp::*;
            let la = lin_core(a, enc, reg);
            let lb = lin_core(b, enc, reg);
            match op {
                Add => la.add(&lb),
                Sub => la.sub(&lb),
                Mul => match (la.is_const(), lb.is_const()) {
                    (Some(c), _) => lb.scale(c),
                    (_, Some(c)) => la.scale(c),
                    _ => None,
                },
                Div | Mod => None,
            }
        }
        _ => None,
    }
}

fn opaque(e: &SpecExpr, enc: &mut Enc, reg: bool) -> Lin {
    let key = canon_key(e, enc);
    if reg {
        enc.registry.entry(key.clone()).or_insert_with(|| e.clone());
    }
    Lin::term(key)
}

/// Canonical rendering of an expression used as an opaque term: integer
/// positions are rendered in linear normal form so that, e.g., `s[i + 1]`
/// and `s[1 + i]` share a key.
fn canon_key(e: &SpecExpr, enc: &mut Enc) -> String {
    use SpecExpr::*;
    let ik = |x: &SpecExpr, enc: &mut Enc| lin_core(x, enc, false).render();
    match e {
        Var(v) => v.clone(),
        Int(n) => n.to_string(),
        Double(d) => format!("{:?}", d),
        BoolL(b) => b.to_string(),
        Null => "null".into(),
        ShareL(s) => format!("{}", SpecExpr::ShareL(*s)),
        Nil => "[]".into(),
        Leaf => "leaf".into(),
        // Linear arithmetic renders in normal form so `i + 1` and `1 + i`
        // share a key; nonlinear arithmetic renders structurally.
        Arith(op, a, b) => match lin_node(e, enc, false) {
            Some(l) => l.render(),
            None => format!(
                "({} {} {})",
                canon_key(a, enc),
                op.symbol(),
                canon_key(b, enc)
            ),
        },
        Len(l) => format!("len({})", canon_key(l, enc)),
        Head(l) => format!("head({})", canon_key(l, enc)),
        Tail(l) => format!("tail({})", canon_key(l, enc)),
        Cons(h, t) => format!("{} :: {}", ik(h, enc), canon_key(t, enc)),
        Append(a, b) => format!("{} ++ {}", canon_key(a, enc), canon_key(b, enc)),
        Slice(l, i, j) => {
            format!("{}[{} .. {}]", canon_key(l, enc), ik(i, enc), ik(j, enc))
        }
        Index(l, i) => format!("{}[{}]", canon_key(l, enc), ik(i, enc)),
        Store(l, i, v) => format!(
            "store({}, {}, {})",
            canon_key(l, enc),
            ik(i, enc),
            canon_key(v, enc)
        ),
        MapAdd(l, k) => format!("map_add({}, {})", canon_key(l, enc), ik(k, enc)),
        Filter(p, l) => format!("filter({}, {})", pred_key(p, enc), canon_key(l, enc)),
        TNode(k, l, r) => format!(
            "tnode({}, {}, {})",
            ik(k, enc),
            canon_key(l, enc),
            canon_key(r, enc)
        ),
        TLookup(t, k) => format!("tlookup({}, {})", canon_key(t, enc), ik(k, enc)),
        TInsert(t, k) => format!("tinsert({}, {})", canon_key(t, enc), ik(k, enc)),
        TMin(t) => format!("tmin({})", canon_key(t, enc)),
        TFoldIns(t, l) => {
            format!("tfoldins({}, {})", canon_key(t, enc), canon_key(l, enc))
        }
        Skew(l) => format!("skew({})", canon_key(l, enc)),
        Ite(..) => format!("{}", e),
    }
}

fn pred_key(p: &UnaryPred, enc: &mut Enc) -> String {
    match p {
        UnaryPred::Even => "even".into(),
        UnaryPred::Odd => "odd".into(),
        UnaryPred::CmpWith(op, b) => {
            format!("_ {} {}", op.symbol(), lin_core(b, enc, false).render())
        }
    }
}

/// Replace the first (leftmost-outermost) conditional inside `e` by one of
/// its branches, returning the condition and both variants.
fn lift_ite(e: &SpecExpr) -> Option<(PureProp, SpecExpr, SpecExpr)> {
    use SpecExpr::*;
    if let Ite(c, a, b) = e {
        return Some(((**c).clone(), (**a).clone(), (**b).clone()));
    }
    macro_rules! descend {
        ($variant:ident, $($pre:expr),* ; $x:expr ; $($post:expr),*) => {
            if let Some((c, t, f)) = lift_ite($x) {
                return Some((
                    c,
                    $variant($($pre.clone(),)* Box::new(t), $($post.clone()),*),
                    $variant($($pre.clone(),)* Box::new(f), $($post.clone()),*),
                ));
            }
        };
    }
    match e {
        Var(_) | Int(_) | Double(_) | BoolL(_) | Null | ShareL(_) | Nil | Leaf => None,
        Arith(op, a, b) => {
            descend!(Arith, *op ; a ; b);
            descend!(Arith, *op, a ; b ;);
            None
        }
        Cons(a, b) => {
            descend!(Cons, ; a ; b);
            descend!(Cons, a ; b ;);
            None
        }
        Append(a, b) => {
            descend!(Append, ; a ; b);
            descend!(Append, a ; b ;);
            None
        }
        Len(a) => {
            descend!(Len, ; a ;);
            None
        }
        Head(a) => {
            descend!(Head, ; a ;);
            None
        }
        Tail(a) => {
            descend!(Tail, ; a ;);
            None
        }
        TMin(a) => {
            descend!(TMin, ; a ;);
            None
        }
        Skew(a) => {
            descend!(Skew, ; a ;);
            None
        }
        Slice(a, b, c) => {
            descend!(Slice, ; a ; b, c);
            descend!(Slice, a ; b ; c);
            descend!(Slice, a, b ; c ;);
            None
        }
        Store(a, b, c) => {
            descend!(Store, ; a ; b, c);
            descend!(Store, a ; b ; c);
            descend!(Store, a, b ; c ;);
            None
        }
        TNode(a, b, c) => {
            descend!(TNode, ; a ; b, c);
            descend!(TNode, a ; b ; c);
            descend!(TNode, a, b ; c ;);
            None
        }
        Index(a, b) => {
            descend!(Index, ; a ; b);
            descend!(Index, a ; b ;);
            None
        }
        MapAdd(a, b) => {
            descend!(MapAdd, ; a ; b);
            descend!(MapAdd, a ; b ;);
            None
        }
        TLookup(a, b) => {
            descend!(TLookup, ; a ; b);
            descend!(TLookup, a ; b ;);
            None
        }
        TInsert(a, b) => {
            descend!(TInsert, ; a ; b);
            descend!(TInsert, a ; b ;);
            None
        }
        TFoldIns(a, b) => {
            descend!(TFoldIns, ; a ; b);
            descend!(TFoldIns, a ; b ;);
            None
        }
        Filter(p, l) => {
            if let Some((c, t, f)) = lift_ite(l) {
                return Some((
                    c,
                    Filter(p.clone(), Box::new(t)),
                    Filter(p.clone(), Box::new(f)),
                ));
            }
            None
        }
        Ite(..) => unreachable!("handled above"),
    }
}

fn encode_cmp(op: CmpOp, a: &SpecExpr, b: &SpecExpr, enc: &mut Enc) -> F {
    // Conditionals inside either side split the comparison.
    if let Some((c, at, af)) = lift_ite(a) {
        let ec = encode_prop(&c, enc);
        return F::Or(vec![
            F::And(vec![ec.clone(), encode_cmp(op, &at, b, enc)]),
            F::And(vec![fneg(&ec), encode_cmp(op, &af, b, enc)]),
        ]);
    }
    if let Some((c, bt, bf)) = lift_ite(b) {
        let ec = encode_prop(&c, enc);
        return F::Or(vec![
            F::And(vec![ec.clone(), encode_cmp(op, a, &bt, enc)]),
            F::And(vec![fneg(&ec), encode_cmp(op, a, &bf, enc)]),
        ]);
    }
    if expr_has_double(a, enc) || expr_has_double(b, enc) {
        // Doubles support equality and a total strict order, uninterpreted.
        let ka = canon_key(a, enc);
        let kb = canon_key(b, enc);
        let eq_key = |x: &str, y: &str| {
            if x <= y {
                format!("{} = {}", x, y)
            } else {
                format!("{} = {}", y, x)
            }
        };
        return match op {
            CmpOp::Eq => F::Atom(eq_key(&ka, &kb), true),
            CmpOp::Ne => F::Atom(eq_key(&ka, &kb), false),
            CmpOp::Lt => F::Atom(format!("{} < {}", ka, kb), true),
            CmpOp::Gt => F::Atom(format!("{} < {}", kb, ka), true),
            CmpOp::Le => F::Atom(format!("{} < {}", kb, ka), false),
            CmpOp::Ge => F::Atom(format!("{} < {}", ka, kb), false),
        };
    }
    let la = lin_core(a, enc, true);
    let lb = lin_core(b, enc, true);
    let d = match la.sub(&lb) {
        Some(d) => d,
        None => return F::Atom(format!("overflow: {} {} {}", a, op.symbol(), b), true),
    };
    let with_len_link = |f: F, enc: &mut Enc| {
        // Equal lists have equal lengths; record the linear consequence.
        if is_listish(a, enc) || is_listish(b, enc) {
            let ll = lin_core(&SpecExpr::Len(Box::new(a.clone())), enc, true);
            let lr = lin_core(&SpecExpr::Len(Box::new(b.clone())), enc, true);
            if let Some(ld) = ll.sub(&lr) {
                return F::And(vec![f, F::Eq(ld)]);
            }
        }
        f
    };
    match op {
        CmpOp::Eq => {
            let f = F::Eq(d);
            with_len_link(f, enc)
        }
        CmpOp::Ne => F::Ne(d),
        CmpOp::Le => F::Le(d),
        CmpOp::Lt => match d.plus_const(1) {
            Some(d) => F::Le(d),
            None => F::Atom("overflow".into(), true),
        },
        CmpOp::Ge => match d.scale(-1) {
            Some(d) => F::Le(d),
            None => F::Atom("overflow".into(), true),
        },
        CmpOp::Gt => match d.scale(-1).and_then(|d| d.plus_const(1)) {
            Some(d) => F::Le(d),
            None => F::Atom("overflow".into(), true),
        },
    }
}

fn encode_prop(p: &PureProp, enc: &mut Enc) -> F {
    use PureProp::*;
    match p {
        TrueP => F::True,
        FalseP => F::False,
        Cmp(op, a, b) => encode_cmp(*op, a, b, enc),
        And(ps) => F::And(ps.iter().map(|q| encode_prop(q, enc)).collect()),
        Or(ps) => F::Or(ps.iter().map(|q| encode_prop(q, enc)).collect()),
        Not(q) => fneg(&encode_prop(q, enc)),
        Ite(c, x, y) => {
            let ec = encode_prop(c, enc);
            F::Or(vec![
                F::And(vec![ec.clone(), encode_prop(x, enc)]),
                F::And(vec![fneg(&ec), encode_prop(y, enc)]),
            ])
        }
        In(x, l) => {
            // A member implies a nonempty list.
            let key = {
                let kx = canon_key(x, enc);
                let kl = canon_key(l, enc);
                format!("in({}, {})", kx, kl)
            };
            let len = lin_core(&SpecExpr::Len(Box::new(l.clone())), enc, true);
            match Lin::konst(1).sub(&len) {
                Some(at_least_one) => {
                    F::And(vec![F::Atom(key, true), F::Le(at_least_one)])
                }
                None => F::Atom(key, true),
            }
        }
        Forall(pr, l) => {
            let key = {
                let kp = pred_key(pr, enc);
                let kl = canon_key(l, enc);
                format!("forall({}, {})", kp, kl)
            };
            F::Atom(key, true)
        }
        Forall2(bp, a, b) => {
            let key = {
                let ka = canon_key(a, enc);
                let kb = canon_key(b, enc);
                format!("forall2({}, {}, {})", bp.name(), ka, kb)
            };
            let la = lin_core(&SpecExpr::Len(Box::new(a.clone())), enc, true);
            let lb = lin_core(&SpecExpr::Len(Box::new(b.clone())), enc, true);
            match la.sub(&lb) {
                Some(d) => F::And(vec![F::Atom(key, true), F::Eq(d)]),
                None => F::Atom(key, true),
            }
        }
        Sorted(l) => F::Atom(format!("sorted({})", canon_key(l, enc)), true),
        ForallIdx { .. } => F::Atom(format!("{}", p), true),
    }
}

// ---------------------------------------------------------------------------
// DNF + refutation
// ---------------------------------------------------------------------------

const DNF_CAP: usize = 64;
const NE_SPLIT_CAP: usize = 6;
const FM_CONSTRAINT_CAP: usize = 600;

#[derive(Debug, Clone)]
enum Leaf {
    Le(Lin),
    Ne(Lin),
    Atom(String, bool),
}

fn dnf(f: &F) -> Option<Vec<Vec<Leaf>>> {
    match f {
        F::True => Some(vec![Vec::new()]),
        F::False => Some(Vec::new()),
        F::Le(l) => Some(vec![vec![Leaf::Le(l.clone())]]),
        // lin = 0 as two inequalities.
        F::Eq(l) => Some(vec![vec![
            Leaf::Le(l.clone()),
            Leaf::Le(l.scale(-1)?),
        ]]),
        F::Ne(l) => Some(vec![vec![Leaf::Ne(l.clone())]]),
        F::Atom(k, pol) => Some(vec![vec![Leaf::Atom(k.clone(), *pol)]]),
        F::And(fs) => {
            let mut acc: Vec<Vec<Leaf>> = vec![Vec::new()];
            for sub in fs {
                let ds = dnf(sub)?;
                let mut next = Vec::new();
                for conj in &acc {
                    for d in &ds {
                        let mut merged = conj.clone();
                        merged.extend(d.iter().cloned());
                        next.push(merged);
                        if next.len() > DNF_CAP {
                            return None;
                        }
                    }
                }
                acc = next;
            }
            Some(acc)
        }
        F::Or(fs) => {
            let mut acc = Vec::new();
            for sub in fs {
                acc.extend(dnf(sub)?);
                if acc.len() > DNF_CAP {
                    return None;
                }
            }
            Some(acc)
        }
    }
}

/// Try to show one DNF conjunct has no integer solutions.
fn refute_conj(conj: &[Leaf]) -> Option<Vec<String>> {
    let mut les: Vec<Lin> = Vec::new();
    let mut nes: Vec<Lin> = Vec::new();
    let mut atoms: BTreeMap<String, bool> = BTreeMap::new();
    for leaf in conj {
        match leaf {
            Leaf::Le(l) => les.push(l.clone()),
            Leaf::Ne(l) => nes.push(l.clone()),
            Leaf::Atom(k, pol) => {
                if let Some(prev) = atoms.insert(k.clone(), *pol) {
                    if prev != *pol {
                        return Some(vec![format!(
                            "fact `{}` asserted both ways",
                            k
                        )]);
                    }
                }
            }
        }
    }
    // Constant disequalities resolve immediately.
    if nes.iter().any(|l| l.is_const() == Some(0)) {
        return Some(vec!["derived 0 != 0, contradiction".into()]);
    }
    nes.retain(|l| l.is_const().is_none());
    // `l != 0` and `-l != 0` are the same disequality: normalize the sign
    // and drop duplicates so each split is on a distinct fact.
    for l in nes.iter_mut() {
        let lead = l.terms.values().next().copied().unwrap_or(l.k);
        if lead < 0 {
            if let Some(neg) = l.scale(-1) {
                *l = neg;
            }
        }
    }
    nes.sort();
    nes.dedup();
    if nes.len() > NE_SPLIT_CAP {
        return None;
    }
    // Case-split every disequality into < or >.
    let cases = 1usize << nes.len();
    let mut chain = Vec::new();
    for mask in 0..cases {
        let mut all = les.clone();
        for (i, l) in nes.iter().enumerate() {
            let side = if mask & (1 << i) != 0 {
                l.plus_const(1)? // l <= -1  <=>  l + 1 <= 0
            } else {
                l.scale(-1)?.plus_const(1)? // l >= 1
            };
            all.push(side);
        }
        match fm_infeasible(all) {
            Some(sub) => {
                if cases > 1 {
                    chain.push(format!("disequality case {}/{}:", mask + 1, cases));
                }
                chain.extend(sub);
            }
            None => return None,
        }
    }
    Some(chain)
}

/// Fourier–Motzkin elimination with integer tightening over constraints
/// `lin <= 0`. Returns a fact chain when the system is infeasible.
fn fm_infeasible(les: Vec<Lin>) -> Option<Vec<String>> {
    let mut les: Vec<Lin> = les.iter().map(tighten).collect();
    let mut chain = Vec::new();
    for _round in 0..128 {
        // Duplicate rows multiply the pairing count without adding
        // information; drop them before anything else.
        les.sort();
        les.dedup();
        // Constant constraints decide or disappear.
        let mut i = 0;
        while i < les.len() {
            match les[i].is_const() {
                Some(k) if k > 0 => {
                    chain.push(format!("derived {} <= 0, contradiction", k));
                    return Some(chain);
                }
                Some(_) => {
                    les.swap_remove(i);
                }
                None => i += 1,
            }
        }
        if les.is_empty() {
            return None;
        }
        // Occurrence counts and max coefficient magnitude per side.
        let mut occ: BTreeMap<&str, (usize, usize, i128, i128)> = BTreeMap::new();
        for l in &les {
            for (t, c) in &l.terms {
                let e = occ.entry(t).or_insert((0, 0, 0, 0));
                if *c > 0 {
                    e.0 += 1;
                    e.2 = e.2.max(*c);
                } else {
                    e.1 += 1;
                    e.3 = e.3.max(-*c);
                }
            }
        }
        // Variables bounded on one side only cannot create contradictions;
        // drop their constraints.
        let one_sided: Vec<String> = occ
            .iter()
            .filter(|(_, (p, n, _, _))| *p == 0 || *n == 0)
            .map(|(t, _)| t.to_string())
            .collect();
        if !one_sided.is_empty() {
            les.retain(|l| !l.terms.keys().any(|t| one_sided.contains(t)));
            continue;
        }
        // Prefer variables whose elimination is exact over the integers
        // (every pairing has a unit coefficient on one side); cancelling two
        // non-unit coefficients first can erase a divisibility conflict that
        // per-row tightening would otherwise expose. Break ties by fewest
        // pairings.
        let var = occ
            .iter()
            .min_by_key(|(t, (p, n, mp, mn))| {
                let inexact = *mp > 1 && *mn > 1;
                (inexact, p * n, t.to_string())
            })
            .map(|(t, _)| t.to_string())?;
        let (with_var, rest): (Vec<Lin>, Vec<Lin>) =
            les.into_iter().partition(|l| l.terms.contains_key(&var));
        let (pos, neg): (Vec<Lin>, Vec<Lin>) =
            with_var.into_iter().partition(|l| l.terms[&var] > 0);
        let mut next = rest;
        for p in &pos {
            for n in &neg {
                let a = p.terms[&var];
                let b = -n.terms[&var];
                let combined = p.scale(b)?.add(&n.scale(a)?)?;
                debug_assert!(!combined.terms.contains_key(&var));
                next.push(tighten(&combined));
                if next.len() > FM_CONSTRAINT_CAP {
                    return None;
                }
            }
        }
        chain.push(format!(
            "eliminated `{}` ({}x{} bounds)",
            var,
            pos.len(),
            neg.len()
        ));
        les = next;
    }
    None
}

#[derive(Debug)]
enum RefOut {
    Infeasible(Vec<String>),
    Feasible,
    Overflow,
}

fn refute_all(fs: &[F]) -> RefOut {
    let whole = F::And(fs.to_vec());
    let disjuncts = match dnf(&whole) {
        Some(d) => d,
        None => return RefOut::Overflow,
    };
    let mut chain = Vec::new();
    let n = disjuncts.len();
    for (i, conj) in disjuncts.iter().enumerate() {
        match refute_conj(conj) {
            Some(sub) => {
                if n > 1 {
                    chain.push(format!("case {}/{}:", i + 1, n));
                }
                chain.extend(sub);
            }
            None => return RefOut::Feasible,
        }
    }
    RefOut::Infeasible(chain)
}

fn proves(base: &[F], claim: &F) -> bool {
    let mut fs = base.to_vec();
    fs.push(fneg(claim));
    matches!(refute_all(&fs), RefOut::Infeasible(_))
}

// ---------------------------------------------------------------------------
// Quantifier instantiation at goal index terms
// ---------------------------------------------------------------------------

fn collect_index_terms(p: &PureProp, out: &mut Vec<(SpecExpr, SpecExpr)>) {
    use PureProp::*;
    match p {
        TrueP | FalseP => {}
        Cmp(_, a, b) | Forall2(_, a, b) | In(a, b) => {
            collect_index_terms_expr(a, out);
            collect_index_terms_expr(b, out);
        }
        And(ps) | Or(ps) => ps.iter().for_each(|q| collect_index_terms(q, out)),
        Not(q) => collect_index_terms(q, out),
        Forall(_, l) | Sorted(l) => collect_index_terms_expr(l, out),
        Ite(c, x, y) => {
            collect_index_terms(c, out);
            collect_index_terms(x, out);
            collect_index_terms(y, out);
        }
        ForallIdx { lo, hi, body, .. } => {
            collect_index_terms_expr(lo, out);
            collect_index_terms_expr(hi, out);
            collect_index_terms(body, out);
        }
    }
}

fn collect_index_terms_expr(e: &SpecExpr, out: &mut Vec<(SpecExpr, SpecExpr)>) {
    use SpecExpr::*;
    match e {
        Index(l, i) => {
            out.push(((**l).clone(), (**i).clone()));
            collect_index_terms_expr(l, out);
            collect_index_terms_expr(i, out);
        }
        Var(_) | Int(_) | Double(_) | BoolL(_) | Null | ShareL(_) | Nil | Leaf => {}
        Arith(_, a, b) | Cons(a, b) | Append(a, b) | MapAdd(a, b) | TLookup(a, b)
        | TInsert(a, b) | TFoldIns(a, b) => {
            collect_index_terms_expr(a, out);
            collect_index_terms_expr(b, out);
        }
        Len(x) | Head(x) | Tail(x) | TMin(x) | Skew(x) => collect_index_terms_expr(x, out),
        Filter(p, l) => {
            if let UnaryPred::CmpWith(_, b) = p {
                collect_index_terms_expr(b, out);
            }
            collect_index_terms_expr(l, out);
        }
        Slice(a, b, c) | Store(a, b, c) | TNode(a, b, c) => {
            collect_index_terms_expr(a, out);
            collect_index_terms_expr(b, out);
            collect_index_terms_expr(c, out);
        }
        Ite(c, a, b) => {
            collect_index_terms(c, out);
            collect_index_terms_expr(a, out);
            collect_index_terms_expr(b, out);
        }
    }
}

/// A list expression viewed as a window `base[lo .. hi)`.
struct View {
    base: SpecExpr,
    lo: SpecExpr,
    hi: SpecExpr,
}

fn view_of(e: &SpecExpr) -> View {
    match e {
        SpecExpr::Slice(l, i, j) => View {
            base: (**l).clone(),
            lo: (**i).clone(),
            hi: (**j).clone(),
        },
        other => View {
            base: other.clone(),
            lo: SpecExpr::Int(0),
            hi: SpecExpr::Len(Box::new(other.clone())),
        },
    }
}

fn le_prop(a: SpecExpr, b: SpecExpr) -> PureProp {
    PureProp::Cmp(CmpOp::Le, a, b)
}

fn lt_prop(a: SpecExpr, b: SpecExpr) -> PureProp {
    PureProp::Cmp(CmpOp::Lt, a, b)
}

fn len_expr(l: &SpecExpr) -> SpecExpr {
    SpecExpr::Len(Box::new(l.clone()))
}

/// Instantiate universally quantified list hypotheses at the index terms of
/// the goal, keeping only instances whose bounds checks are provable.
fn kit_facts(
    hyps: &[PureProp],
    goal: &PureProp,
    enc: &mut Enc,
    base: &[F],
) -> Vec<PureProp> {
    let mut idx_terms = Vec::new();
    collect_index_terms(goal, &mut idx_terms);
    if idx_terms.is_empty() {
        return Vec::new();
    }
    // Deduplicate by canonical rendering, deterministically ordered.
    let mut seen = BTreeSet::new();
    let mut terms = Vec::new();
    for (l, i) in idx_terms {
        let key = format!("{}[{}]", canon_key(&l, enc), canon_key(&i, enc));
        if seen.insert(key) {
            terms.push((l, i));
        }
    }

    let mut flat: Vec<&PureProp> = Vec::new();
    for h in hyps {
        flatten_conj(h, &mut flat);
    }

    let mut facts = Vec::new();
    for h in &flat {
        match h {
            PureProp::Forall2(bp, a, b) => {
                let va = view_of(a);
                let vb = view_of(b);
                let base_key = canon_key(&va.base, enc);
                for (l, e) in &terms {
                    if canon_key(l, enc) != base_key {
                        continue;
                    }
                    // Partner index in the second window.
                    let f = simp_expr(&SpecExpr::Arith(
                        crate::spec::ArithOp::Add,
                        Box::new(vb.lo.clone()),
                        Box::new(SpecExpr::Arith(
                            crate::spec::ArithOp::Sub,
                            Box::new(e.clone()),
                            Box::new(va.lo.clone()),
                        )),
                    ));
                    let guards = vec![
                        le_prop(SpecExpr::Int(0), va.lo.clone()),
                        le_prop(va.lo.clone(), e.clone()),
                        lt_prop(e.clone(), va.hi.clone()),
                        le_prop(va.hi.clone(), len_expr(&va.base)),
                        le_prop(SpecExpr::Int(0), vb.lo.clone()),
                        lt_prop(f.clone(), vb.hi.clone()),
                        le_prop(vb.hi.clone(), len_expr(&vb.base)),
                    ];
                    if guards
                        .iter()
                        .all(|g| proves(base, &encode_prop(&simp_prop(g), enc)))
                    {
                        facts.push(PureProp::Cmp(
                            bp.cmp_op(),
                            SpecExpr::Index(Box::new(va.base.clone()), Box::new(e.clone())),
                            SpecExpr::Index(Box::new(vb.base.clone()), Box::new(f)),
                        ));
                    }
                }
            }
            PureProp::Forall(up, a) => {
                let va = view_of(a);
                let base_key = canon_key(&va.base, enc);
                for (l, e) in &terms {
                    if canon_key(l, enc) != base_key {
                        continue;
                    }
                    let guards = vec![
                        le_prop(SpecExpr::Int(0), va.lo.clone()),
                        le_prop(va.lo.clone(), e.clone()),
                        lt_prop(e.clone(), va.hi.clone()),
                        le_prop(va.hi.clone(), len_expr(&va.base)),
                    ];
                    if guards
                        .iter()
                        .all(|g| proves(base, &encode_prop(&simp_prop(g), enc)))
                    {
                        facts.push(apply_unary_pred(
                            up,
                            SpecExpr::Index(Box::new(va.base.clone()), Box::new(e.clone())),
                        ));
                    }
                }
            }
            _ => {}
        }
    }
    facts
}

fn flatten_conj<'a>(p: &'a PureProp, out: &mut Vec<&'a PureProp>) {
    match p {
        PureProp::And(ps) => ps.iter().for_each(|q| flatten_conj(q, out)),
        other => out.push(other),
    }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Decide whether the hypotheses entail the goal over the linear-integer
/// fragment, with sort information for ghost binders (used to keep double
/// arithmetic uninterpreted and to link list equalities with lengths).
pub fn pure_solve_ctx(
    sorts: &BTreeMap<String, Sort>,
    hyps: &[PureProp],
    goal: &PureProp,
) -> PureVerdict {
    let mut hyps_s: Vec<PureProp> = hyps.iter().map(simp_prop).collect();
    let mut goal_s = simp_prop(goal);

    // Resolve defining equalities (`x == e` with `x` not in `e`) into a
    // triangular substitution and add the rewritten forms, so structural
    // facts like `l == []` reach normalization inside larger terms (for
    // example `l ++ r` becoming `r`). The originals stay: the rewrite only
    // adds equivalent facts.
    let subst = hyp_substitution(&hyps_s);
    if !subst.is_empty() {
        let apply = |p: &PureProp| -> PureProp {
            let mut cur = p.clone();
            for (n, v) in &subst {
                cur = subst_var(&cur, n, v);
            }
            simp_prop(&cur)
        };
        let rewritten: Vec<PureProp> = hyps_s
            .iter()
            .map(apply)
            .filter(|p| *p != PureProp::TrueP && !hyps_s.contains(p))
            .collect();
        hyps_s.extend(rewritten);
        goal_s = apply(&goal_s);
    }

    let mut enc = Enc::new(sorts);
    let mut base: Vec<F> = Vec::new();

    // Definedness of hypotheses is assumable: a hypothesis that holds must
    // have evaluated without hitting a partial operator.
    for h in hyps {
        if let Some(defs) = defined_prop(h) {
            for d in defs {
                base.push(encode_prop(&simp_prop(&d), &mut enc));
            }
        }
    }
    for h in &hyps_s {
        base.push(encode_prop(h, &mut enc));
    }

    // Definedness of the goal must be proved before any verdict.
    let goal_defs = defined_prop(goal);
    let goal_f = encode_prop(&goal_s, &mut enc);
    let goal_defs_f: Option<Vec<F>> = goal_defs.map(|ds| {
        ds.iter()
            .map(|d| encode_prop(&simp_prop(d), &mut enc))
            .collect()
    });

    attach_term_facts(&mut enc, &mut base);

    let kit = kit_facts(&hyps_s, &goal_s, &mut enc, &base);
    for fact in kit {
        base.push(encode_prop(&simp_prop(&fact), &mut enc));
    }
    attach_term_facts(&mut enc, &mut base);

    if std::env::var_os("PURE_DEBUG").is_some() {
        for f in &base {
            eprintln!("[base] {:?}", f);
        }
        eprintln!("[goal] {:?}", goal_f);
    }

    match goal_defs_f {
        None => return PureVerdict::Unknown,
        Some(defs) => {
            for d in &defs {
                if !matches!(d, F::True) && !proves(&base, d) {
                    return PureVerdict::Unknown;
                }
            }
        }
    }

    let mut valid_check = base.clone();
    valid_check.push(fneg(&goal_f));
    if let RefOut::Infeasible(chain) = refute_all(&valid_check) {
        let mut full = vec!["assume hypotheses and the negated goal:".to_string()];
        full.extend(chain);
        return PureVerdict::Valid(full);
    }

    let mut refute_check = base;
    refute_check.push(goal_f);
    if let RefOut::Infeasible(chain) = refute_all(&refute_check) {
        let mut full = vec!["assume hypotheses and the goal itself:".to_string()];
        full.extend(chain);
        return PureVerdict::Refuted(full);
    }

    PureVerdict::Unknown
}

/// Sort-free convenience entry point; every ghost is assumed non-double.
pub fn pure_solve(hyps: &[PureProp], goal: &PureProp) -> PureVerdict {
    pure_solve_ctx(&BTreeMap::new(), hyps, goal)
}

/// Defining equalities among the hypotheses, composed into a triangular
/// substitution: each entry's replacement is free of every mapped variable,
/// so one application pass settles. Cyclic definitions are skipped by the
/// occurs check.
fn hyp_substitution(hyps: &[PureProp]) -> Vec<(String, SpecExpr)> {
    let mut map: Vec<(String, SpecExpr)> = Vec::new();
    let mut conjs: Vec<&PureProp> = Vec::new();
    for h in hyps {
        flatten_conj(h, &mut conjs);
    }
    for c in conjs {
        let PureProp::Cmp(CmpOp::Eq, a, b) = c else { continue };
        for (x, e) in [(a, b), (b, a)] {
            let SpecExpr::Var(name) = x else { continue };
            if map.iter().any(|(n, _)| n == name) {
                continue;
            }
            let mut repl = e.clone();
            for (n, v) in &map {
                repl = subst_var_expr(&repl, n, v);
            }
            let mut vs = BTreeSet::new();
            repl.vars(&mut vs);
            if vs.contains(name) {
                continue;
            }
            for (_, v) in map.iter_mut() {
                *v = subst_var_expr(v, name, &repl);
            }
            map.push((name.clone(), repl));
            break;
        }
    }
    map
}

/// Attach facts about registered opaque terms: lengths are nonnegative;
/// in-bounds slices have arithmetic lengths; filtering never lengthens;
/// truncating division and remainder by a constant are linked exactly.
fn attach_term_facts(enc: &mut Enc, base: &mut Vec<F>) {
    use SpecExpr::*;
    for _round in 0..3 {
        let snapshot: Vec<(String, SpecExpr)> = enc
            .registry
            .iter()
            .map(|(k, e)| (k.clone(), e.clone()))
            .collect();
        let mut grew = false;
        for (key, expr) in snapshot {
            match &expr {
                Len(inner) => {
                    if enc.fact_done.insert(format!("len:{}", key)) {
                        // len(_) >= 0
                        base.push(F::Le(Lin::term(key.clone()).scale(-1).unwrap()));
                        grew = true;
                    }
                    match &**inner {
                        Slice(l, i, j) => {
                            // Conditional on provable bounds, so retried on
                            // later passes until it lands.
                            let done = format!("lenslice:{}", key);
                            if enc.fact_done.contains(&done) {
                                continue;
                            }
                            let li = lin_core(i, enc, true);
                            let lj = lin_core(j, enc, true);
                            let ll = lin_core(&Len(l.clone()), enc, true);
                            let t = Lin::term(key.clone());
                            // Degenerate range: length 0.
                            if let Some(ji) = lj.sub(&li) {
                                if proves(base, &F::Le(ji.clone())) {
                                    base.push(F::Eq(t.clone()));
                                    enc.fact_done.insert(done);
                                    grew = true;
                                    continue;
                                }
                                // Proper in-bounds range: length hi - lo.
                                let lo_ok = li.scale(-1).map(F::Le);
                                let strict = li.sub(&lj).and_then(|d| d.plus_const(1)).map(F::Le);
                                let hi_ok = lj.sub(&ll).map(F::Le);
                                if let (Some(lo_ok), Some(strict), Some(hi_ok)) =
                                    (lo_ok, strict, hi_ok)
                                {
                                    if proves(base, &lo_ok)
                                        && proves(base, &strict)
                                        && proves(base, &hi_ok)
                                    {
                                        if let Some(d) = t.sub(&ji) {
                                            base.push(F::Eq(d));
                                            enc.fact_done.insert(done);
                                            grew = true;
                                        }
                                    }
                                }
                            }
                        }
                        Filter(_, l) => {
                            if enc.fact_done.insert(format!("lenfilter:{}", key)) {
                                let ll = lin_core(&Len(l.clone()), enc, true);
                                if let Some(d) = Lin::term(key.clone()).sub(&ll) {
                                    base.push(F::Le(d)); // len(filter) <= len(l)
                                    grew = true;
                                }
                            }
                        }
                        _ => {}
                    }
                }
                Arith(op, a, d)
                    if matches!(op, crate::spec::ArithOp::Div | crate::spec::ArithOp::Mod) =>
                {
                    if let Int(dv) = &**d {
                        if *dv != 0
                            && matches!(
                                crate::entail::rewrite::defined_expr(a).as_deref(),
                                Some([])
                            )
                        {
                            let la = lin_core(a, enc, true);
                            let div_t = lin_core(
                                &Arith(crate::spec::ArithOp::Div, a.clone(), d.clone()),
                                enc,
                                true,
                            );
                            let mod_t = lin_core(
                                &Arith(crate::spec::ArithOp::Mod, a.clone(), d.clone()),
                                enc,
                                true,
                            );
                            // One emission per numerator/divisor pair: the
                            // quotient and remainder terms share their facts.
                            let group = mod_t
                                .terms
                                .keys()
                                .next()
                                .cloned()
                                .unwrap_or_else(|| key.clone());
                            let m = (*dv as i128).abs();
                            if enc.fact_done.insert(format!("divmod:{}", group)) {
                                grew = true;
                                // a = d*(a/d) + (a%d), |a%d| <= |d|-1
                                if let Some(eq) = div_t
                                    .scale(*dv as i128)
                                    .and_then(|x| x.add(&mod_t))
                                    .and_then(|x| x.sub(&la))
                                {
                                    base.push(F::Eq(eq));
                                }
                                if let Some(ub) = mod_t.plus_const(1 - m) {
                                    base.push(F::Le(ub));
                                }
                                if let Some(lb) =
                                    mod_t.scale(-1).and_then(|x| x.plus_const(1 - m))
                                {
                                    base.push(F::Le(lb));
                                }
                            }
                            // Truncating division keeps the remainder on the
                            // numerator's side of zero. Conditional on the
                            // numerator's sign being provable, so retried.
                            let sign_done = format!("divmodsign:{}", group);
                            if !enc.fact_done.contains(&sign_done) {
                                if let Some(a_nonneg) = la.scale(-1).map(F::Le) {
                                    if proves(base, &a_nonneg) {
                                        if let Some(m_nonneg) = mod_t.scale(-1) {
                                            base.push(F::Le(m_nonneg));
                                            enc.fact_done.insert(sign_done);
                                            grew = true;
                                        }
                                    } else if proves(base, &F::Le(la.clone())) {
                                        base.push(F::Le(mod_t.clone()));
                                        enc.fact_done.insert(sign_done);
                                        grew = true;
                                    }
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        if !grew {
            break;
        }
    }
}
