//! The specification language: mathematical sorts, expressions, pure
//! propositions, spatial atoms, and function specifications.
//!
//! Shapes are the usual separation-logic trio: `x |-> v` points-to (with a
//! share), `listrep(l, p)` singly-linked list segments ending in null, and
//! `treerep(t, p)` binary trees, plus `array(s, a, n)` for array parameters.
//! The pure fragment is quantifier-light: comparisons, boolean connectives,
//! membership, and `forall`/`forall2` drawn from a closed predicate library
//! (no user lambdas). A closed library of list/tree functions (`map_add`,
//! `filter`, functional BST operations) gives posts enough expressive power
//! for the benchmark families while keeping every symbol rewritable.

pub mod order;
pub mod parse;

use crate::c::CSignature;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sort {
    Int,
    List,
    Tree,
    Addr,
    Share,
    Bool,
    Char,
    Double,
}

impl Sort {
    pub fn name(&self) -> &'static str {
        match self {
            Sort::Int => "int",
            Sort::List => "list",
            Sort::Tree => "tree",
            Sort::Addr => "addr",
            Sort::Share => "share",
            Sort::Bool => "bool",
            Sort::Char => "char",
            Sort::Double => "double",
        }
    }

    pub fn from_name(s: &str) -> Option<Sort> {
        Some(match s {
            "int" => Sort::Int,
            "list" => Sort::List,
            "tree" => Sort::Tree,
            "addr" => Sort::Addr,
            "share" => Sort::Share,
            "bool" => Sort::Bool,
            "char" => Sort::Char,
            "double" => Sort::Double,
            _ => return None,
        })
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Share {
    Full,
    Readable,
}

impl fmt::Display for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Share::Full => "full",
            Share::Readable => "readable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl ArithOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Mod => "%",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn negate(&self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn flip(&self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
        }
    }

    pub fn eval(&self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Unary predicates usable under `forall` and `filter`. Comparisons carry
/// their bound as an explicit argument, e.g. `forall(lt n, l)` says every
/// element is below `n`; this keeps the library closed.
#[derive(Debug, Clone, PartialEq)]
pub enum UnaryPred {
    Even,
    Odd,
    CmpWith(CmpOp, Box<SpecExpr>),
}

/// Binary predicates usable under `forall2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinPred {
    Le,
    Lt,
    Eq,
}

impl BinPred {
    pub fn name(&self) -> &'static str {
        match self {
            BinPred::Le => "le",
            BinPred::Lt => "lt",
            BinPred::Eq => "eq",
        }
    }

    pub fn cmp_op(&self) -> CmpOp {
        match self {
            BinPred::Le => CmpOp::Le,
            BinPred::Lt => CmpOp::Lt,
            BinPred::Eq => CmpOp::Eq,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpecExpr {
    Var(String),
    Int(i64),
    Double(f64),
    BoolL(bool),
    Null,
    ShareL(Share),
    Arith(ArithOp, Box<SpecExpr>, Box<SpecExpr>),
    // Lists.
    Nil,
    Cons(Box<SpecExpr>, Box<SpecExpr>),
    Append(Box<SpecExpr>, Box<SpecExpr>),
    Len(Box<SpecExpr>),
    Head(Box<SpecExpr>),
    Tail(Box<SpecExpr>),
    /// Half-open slice `l[i .. j]`: elements at positions i, i+1, ..., j-1.
    Slice(Box<SpecExpr>, Box<SpecExpr>, Box<SpecExpr>),
    Index(Box<SpecExpr>, Box<SpecExpr>),
    /// Functional update `store(l, i, v)`.
    Store(Box<SpecExpr>, Box<SpecExpr>, Box<SpecExpr>),
    /// `map_add(l, k)`: add `k` to every element.
    MapAdd(Box<SpecExpr>, Box<SpecExpr>),
    /// `filter(p, l)`: keep the elements satisfying `p`.
    Filter(UnaryPred, Box<SpecExpr>),
    // Trees.
    Leaf,
    TNode(Box<SpecExpr>, Box<SpecExpr>, Box<SpecExpr>),
    /// BST membership as 1/0, searching by the usual key order.
    TLookup(Box<SpecExpr>, Box<SpecExpr>),
    /// BST insertion (no duplicates).
    TInsert(Box<SpecExpr>, Box<SpecExpr>),
    /// Minimum key of a nonempty BST (leftmost).
    TMin(Box<SpecExpr>),
    /// Fold BST insertion over a list, left to right.
    TFoldIns(Box<SpecExpr>, Box<SpecExpr>),
    /// Right-spine tree holding the list elements in order.
    Skew(Box<SpecExpr>),
    Ite(Box<PureProp>, Box<SpecExpr>, Box<SpecExpr>),
}

impl SpecExpr {
    pub fn var(s: impl Into<String>) -> SpecExpr {
        SpecExpr::Var(s.into())
    }

    pub fn int(n: i64) -> SpecExpr {
        SpecExpr::Int(n)
    }

    pub fn list_lit(items: Vec<SpecExpr>) -> SpecExpr {
        items
            .into_iter()
            .rev()
            .fold(SpecExpr::Nil, |acc, x| SpecExpr::Cons(Box::new(x), Box::new(acc)))
    }

    pub fn add(a: SpecExpr, b: SpecExpr) -> SpecExpr {
        SpecExpr::Arith(ArithOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: SpecExpr, b: SpecExpr) -> SpecExpr {
        SpecExpr::Arith(ArithOp::Sub, Box::new(a), Box::new(b))
    }

    /// Literal cons-chain contents, if this is one.
    pub fn as_literal_list(&self) -> Option<Vec<&SpecExpr>> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                SpecExpr::Nil => return Some(out),
                SpecExpr::Cons(h, t) => {
                    out.push(h.as_ref());
                    cur = t;
                }
                _ => return None,
            }
        }
    }

    /// All variable names occurring in the expression.
    pub fn vars(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            SpecExpr::Var(v) => {
                out.insert(v.clone());
            }
            SpecExpr::Int(_)
            | SpecExpr::Double(_)
            | SpecExpr::BoolL(_)
            | SpecExpr::Null
            | SpecExpr::ShareL(_)
            | SpecExpr::Nil
            | SpecExpr::Leaf => {}
            SpecExpr::Arith(_, a, b)
            | SpecExpr::Cons(a, b)
            | SpecExpr::Append(a, b)
            | SpecExpr::Index(a, b)
            | SpecExpr::MapAdd(a, b)
            | SpecExpr::TLookup(a, b)
            | SpecExpr::TInsert(a, b)
            | SpecExpr::TFoldIns(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            SpecExpr::Len(a) | SpecExpr::Head(a) | SpecExpr::Tail(a) | SpecExpr::TMin(a)
            | SpecExpr::Skew(a) => a.vars(out),
            SpecExpr::Slice(a, b, c) | SpecExpr::Store(a, b, c) | SpecExpr::TNode(a, b, c) => {
                a.vars(out);
                b.vars(out);
                c.vars(out);
            }
            SpecExpr::Filter(p, a) => {
                if let UnaryPred::CmpWith(_, b) = p {
                    b.vars(out);
                }
                a.vars(out);
            }
            SpecExpr::Ite(c, a, b) => {
                c.vars(out);
                a.vars(out);
                b.vars(out);
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        let mut vs = std::collections::BTreeSet::new();
        self.vars(&mut vs);
        vs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PureProp {
    TrueP,
    FalseP,
    Cmp(CmpOp, SpecExpr, SpecExpr),
    And(Vec<PureProp>),
    Or(Vec<PureProp>),
    Not(Box<PureProp>),
    /// `in(x, l)`: x occurs in list l.
    In(SpecExpr, SpecExpr),
    Forall(UnaryPred, SpecExpr),
    Forall2(BinPred, SpecExpr, SpecExpr),
    /// Sugar for `forall2(le, l[0 .. len(l)-1], l[1 .. len(l)])`.
    Sorted(SpecExpr),
    Ite(Box<PureProp>, Box<PureProp>, Box<PureProp>),
    /// `forallidx i in [lo, hi): body`. Expressible but not automated; posts
    /// using it surface as side conditions.
    ForallIdx {
        idx: String,
        lo: SpecExpr,
        hi: SpecExpr,
        body: Box<PureProp>,
    },
}

impl PureProp {
    pub fn eq(a: SpecExpr, b: SpecExpr) -> PureProp {
        PureProp::Cmp(CmpOp::Eq, a, b)
    }

    pub fn ne(a: SpecExpr, b: SpecExpr) -> PureProp {
        PureProp::Cmp(CmpOp::Ne, a, b)
    }

    pub fn and(props: Vec<PureProp>) -> PureProp {
        match props.len() {
            0 => PureProp::TrueP,
            1 => props.into_iter().next().unwrap(),
            _ => PureProp::And(props),
        }
    }

    pub fn negate(self) -> PureProp {
        match self {
            PureProp::TrueP => PureProp::FalseP,
            PureProp::FalseP => PureProp::TrueP,
            PureProp::Cmp(op, a, b) => PureProp::Cmp(op.negate(), a, b),
            PureProp::Not(p) => *p,
            other => PureProp::Not(Box::new(other)),
        }
    }

    pub fn vars(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            PureProp::TrueP | PureProp::FalseP => {}
            PureProp::Cmp(_, a, b) | PureProp::In(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            PureProp::And(ps) | PureProp::Or(ps) => {
                for p in ps {
                    p.vars(out);
                }
            }
            PureProp::Not(p) => p.vars(out),
            PureProp::Forall(pred, l) => {
                if let UnaryPred::CmpWith(_, b) = pred {
                    b.vars(out);
                }
                l.vars(out);
            }
            PureProp::Forall2(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            PureProp::Sorted(l) => l.vars(out),
            PureProp::Ite(c, p, q) => {
                c.vars(out);
                p.vars(out);
                q.vars(out);
            }
            PureProp::ForallIdx { idx, lo, hi, body } => {
                lo.vars(out);
                hi.vars(out);
                let mut inner = std::collections::BTreeSet::new();
                body.vars(&mut inner);
                inner.remove(idx);
                out.extend(inner);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointsToValue {
    Scalar(SpecExpr),
    /// An `sll` node: `p |-> node(head, next)`.
    ListNode { head: SpecExpr, next: SpecExpr },
    /// A `tree` node: `p |-> tnode(key, left, right)`.
    TreeNode { key: SpecExpr, left: SpecExpr, right: SpecExpr },
}

impl PointsToValue {
    pub fn field_exprs(&self) -> Vec<&SpecExpr> {
        match self {
            PointsToValue::Scalar(v) => vec![v],
            PointsToValue::ListNode { head, next } => vec![head, next],
            PointsToValue::TreeNode { key, left, right } => vec![key, left, right],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpatialAtom {
    PtsTo {
        addr: SpecExpr,
        /// `full` or `readable`, possibly a share-sorted ghost. Writes
        /// require a provably full share.
        share: SpecExpr,
        value: PointsToValue,
    },
    ListRep {
        elems: SpecExpr,
        addr: SpecExpr,
    },
    TreeRep {
        tree: SpecExpr,
        addr: SpecExpr,
    },
    ArraySeg {
        elems: SpecExpr,
        addr: SpecExpr,
        len: SpecExpr,
    },
    /// Assertion-level conditional: `if cond then {atoms} else {atoms}`.
    Cond {
        cond: PureProp,
        then_atoms: Vec<SpatialAtom>,
        else_atoms: Vec<SpatialAtom>,
    },
}

impl SpatialAtom {
    pub fn pts_to(addr: SpecExpr, value: SpecExpr) -> SpatialAtom {
        SpatialAtom::PtsTo {
            addr,
            share: SpecExpr::ShareL(Share::Full),
            value: PointsToValue::Scalar(value),
        }
    }

    /// Root address for everything except conditionals.
    pub fn addr(&self) -> Option<&SpecExpr> {
        match self {
            SpatialAtom::PtsTo { addr, .. }
            | SpatialAtom::ListRep { addr, .. }
            | SpatialAtom::TreeRep { addr, .. }
            | SpatialAtom::ArraySeg { addr, .. } => Some(addr),
            SpatialAtom::Cond { .. } => None,
        }
    }

    pub fn vars(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            SpatialAtom::PtsTo { addr, share, value } => {
                addr.vars(out);
                share.vars(out);
                for v in value.field_exprs() {
                    v.vars(out);
                }
            }
            SpatialAtom::ListRep { elems, addr } | SpatialAtom::TreeRep { tree: elems, addr } => {
                elems.vars(out);
                addr.vars(out);
            }
            SpatialAtom::ArraySeg { elems, addr, len } => {
                elems.vars(out);
                addr.vars(out);
                len.vars(out);
            }
            SpatialAtom::Cond { cond, then_atoms, else_atoms } => {
                cond.vars(out);
                for a in then_atoms.iter().chain(else_atoms) {
                    a.vars(out);
                }
            }
        }
    }
}

/// `exists binders; pure props; spatial atoms` — the spatial part is a
/// multiset joined by `*`, the pure part a conjunction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assertion {
    pub exists: Vec<(String, Sort)>,
    pub pure: Vec<PureProp>,
    pub spatial: Vec<SpatialAtom>,
}

impl Assertion {
    pub fn emp() -> Assertion {
        Assertion::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunSpec {
    pub name: String,
    /// Ghost binders in declaration order; the order is significant and
    /// checked against the placement rules.
    pub with_binders: Vec<(String, Sort)>,
    /// One expression per C parameter, evaluated over the binders.
    pub params: Vec<SpecExpr>,
    pub pre: Assertion,
    pub post: Assertion,
    /// Value returned by the function, over binders and post existentials.
    pub ret: Option<SpecExpr>,
    pub sig: CSignature,
}

impl FunSpec {
    pub fn binder_sort(&self, name: &str) -> Option<Sort> {
        self.with_binders
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| *s)
    }
}

/// Named function specifications plus their C prototypes.
#[derive(Debug, Clone, Default)]
pub struct SpecEnv {
    pub specs: BTreeMap<String, FunSpec>,
}

impl SpecEnv {
    pub fn new() -> Self {
        SpecEnv::default()
    }

    pub fn insert(&mut self, spec: FunSpec) {
        self.specs.insert(spec.name.clone(), spec);
    }

    pub fn get(&self, name: &str) -> Option<&FunSpec> {
        self.specs.get(name)
    }

    pub fn signatures(&self) -> Vec<CSignature> {
        self.specs.values().map(|s| s.sig.clone()).collect()
    }
}

// ---------------------------------------------------------------------------
// Rendering. The output doubles as the canonical form used for matching keys,
// so it must be deterministic and injective enough to distinguish terms.
// ---------------------------------------------------------------------------

impl fmt::Display for UnaryPred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnaryPred::Even => write!(f, "even"),
            UnaryPred::Odd => write!(f, "odd"),
            UnaryPred::CmpWith(op, bound) => {
                let name = match op {
                    CmpOp::Eq => "eq",
                    CmpOp::Ne => "ne",
                    CmpOp::Lt => "lt",
                    CmpOp::Le => "le",
                    CmpOp::Gt => "gt",
                    CmpOp::Ge => "ge",
                };
                write!(f, "{} {}", name, atom_str(bound))
            }
        }
    }
}

/// Wrap compound expressions in parens when used as an argument of a tight
/// textual context.
fn atom_str(e: &SpecExpr) -> String {
    match e {
        SpecExpr::Var(_)
        | SpecExpr::Int(_)
        | SpecExpr::Double(_)
        | SpecExpr::BoolL(_)
        | SpecExpr::Null
        | SpecExpr::ShareL(_)
        | SpecExpr::Nil
        | SpecExpr::Leaf => format!("{}", e),
        SpecExpr::Len(_)
        | SpecExpr::Head(_)
        | SpecExpr::Tail(_)
        | SpecExpr::Index(_, _)
        | SpecExpr::Slice(_, _, _)
        | SpecExpr::Store(_, _, _)
        | SpecExpr::MapAdd(_, _)
        | SpecExpr::Filter(_, _)
        | SpecExpr::TNode(_, _, _)
        | SpecExpr::TLookup(_, _)
        | SpecExpr::TInsert(_, _)
        | SpecExpr::TMin(_)
        | SpecExpr::TFoldIns(_, _)
        | SpecExpr::Skew(_) => format!("{}", e),
        _ => format!("({})", e),
    }
}

impl fmt::Display for SpecExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecExpr::Var(v) => write!(f, "{}", v),
            SpecExpr::Int(n) => write!(f, "{}", n),
            SpecExpr::Double(d) => write!(f, "{:?}", d),
            SpecExpr::BoolL(b) => write!(f, "{}", b),
            SpecExpr::Null => write!(f, "null"),
            SpecExpr::ShareL(s) => write!(f, "{}", s),
            SpecExpr::Arith(op, a, b) => {
                write!(f, "{} {} {}", atom_str(a), op.symbol(), atom_str(b))
            }
            SpecExpr::Nil => write!(f, "[]"),
            SpecExpr::Cons(h, t) => {
                // Render literal chains as [a, b, c].
                if let Some(items) = self.as_literal_list() {
                    let rendered: Vec<String> = items.iter().map(|e| format!("{}", e)).collect();
                    return write!(f, "[{}]", rendered.join(", "));
                }
                write!(f, "{} :: {}", atom_str(h), atom_str(t))
            }
            SpecExpr::Append(a, b) => write!(f, "{} ++ {}", atom_str(a), atom_str(b)),
            SpecExpr::Len(l) => write!(f, "len({})", l),
            SpecExpr::Head(l) => write!(f, "head({})", l),
            SpecExpr::Tail(l) => write!(f, "tail({})", l),
            SpecExpr::Slice(l, i, j) => write!(f, "{}[{} .. {}]", atom_str(l), i, j),
            SpecExpr::Index(l, i) => write!(f, "{}[{}]", atom_str(l), i),
            SpecExpr::Store(l, i, v) => write!(f, "store({}, {}, {})", l, i, v),
            SpecExpr::MapAdd(l, k) => write!(f, "map_add({}, {})", l, k),
            SpecExpr::Filter(p, l) => write!(f, "filter({}, {})", p, l),
            SpecExpr::Leaf => write!(f, "leaf"),
            SpecExpr::TNode(k, l, r) => write!(f, "node({}, {}, {})", k, l, r),
            SpecExpr::TLookup(t, k) => write!(f, "tlookup({}, {})", t, k),
            SpecExpr::TInsert(t, k) => write!(f, "tinsert({}, {})", t, k),
            SpecExpr::TMin(t) => write!(f, "tmin({})", t),
            SpecExpr::TFoldIns(t, l) => write!(f, "tfoldins({}, {})", t, l),
            SpecExpr::Skew(l) => write!(f, "skew({})", l),
            SpecExpr::Ite(c, a, b) => write!(f, "(if {} then {} else {})", c, a, b),
        }
    }
}

impl fmt::Display for PureProp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PureProp::TrueP => write!(f, "true"),
            PureProp::FalseP => write!(f, "false"),
            PureProp::Cmp(op, a, b) => write!(f, "{} {} {}", atom_str(a), op.symbol(), atom_str(b)),
            PureProp::And(ps) => {
                let parts: Vec<String> = ps.iter().map(|p| prop_atom_str(p)).collect();
                write!(f, "{}", parts.join(" /\\ "))
            }
            PureProp::Or(ps) => {
                let parts: Vec<String> = ps.iter().map(|p| prop_atom_str(p)).collect();
                write!(f, "{}", parts.join(" \\/ "))
            }
            PureProp::Not(p) => write!(f, "!{}", prop_atom_str(p)),
            PureProp::In(x, l) => write!(f, "in({}, {})", x, l),
            PureProp::Forall(p, l) => write!(f, "forall({}, {})", p, l),
            PureProp::Forall2(p, a, b) => write!(f, "forall2({}, {}, {})", p.name(), a, b),
            PureProp::Sorted(l) => write!(f, "sorted({})", l),
            PureProp::Ite(c, p, q) => write!(f, "(if {} then {} else {})", c, p, q),
            PureProp::ForallIdx { idx, lo, hi, body } => {
                write!(f, "forallidx {} in [{}, {}): {}", idx, lo, hi, body)
            }
        }
    }
}

fn prop_atom_str(p: &PureProp) -> String {
    match p {
        PureProp::And(_) | PureProp::Or(_) => format!("({})", p),
        _ => format!("{}", p),
    }
}

impl fmt::Display for SpatialAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialAtom::PtsTo { addr, share, value } => {
                let shared = match share {
                    SpecExpr::ShareL(Share::Full) => String::new(),
                    other => format!("({})", other),
                };
                match value {
                    PointsToValue::Scalar(v) => {
                        write!(f, "{} |->{} {}", atom_str(addr), shared, atom_str(v))
                    }
                    PointsToValue::ListNode { head, next } => {
                        write!(f, "{} |->{} node({}, {})", atom_str(addr), shared, head, next)
                    }
                    PointsToValue::TreeNode { key, left, right } => write!(
                        f,
                        "{} |->{} tnode({}, {}, {})",
                        atom_str(addr),
                        shared,
                        key,
                        left,
                        right
                    ),
                }
            }
            SpatialAtom::ListRep { elems, addr } => write!(f, "listrep({}, {})", elems, addr),
            SpatialAtom::TreeRep { tree, addr } => write!(f, "treerep({}, {})", tree, addr),
            SpatialAtom::ArraySeg { elems, addr, len } => {
                write!(f, "array({}, {}, {})", elems, addr, len)
            }
            SpatialAtom::Cond { cond, then_atoms, else_atoms } => {
                let ts: Vec<String> = then_atoms.iter().map(|a| format!("{}", a)).collect();
                let es: Vec<String> = else_atoms.iter().map(|a| format!("{}", a)).collect();
                let ts = if ts.is_empty() { "emp".to_string() } else { ts.join(" * ") };
                let es = if es.is_empty() { "emp".to_string() } else { es.join(" * ") };
                write!(f, "(if {} then {} else {})", cond, ts, es)
            }
        }
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if !self.exists.is_empty() {
            let binders: Vec<String> = self
                .exists
                .iter()
                .map(|(n, s)| format!("{}: {}", n, s))
                .collect();
            parts.push(format!("ex {};", binders.join(", ")));
        }
        if !self.pure.is_empty() {
            let props: Vec<String> = self.pure.iter().map(|p| format!("{}", p)).collect();
            parts.push(props.join(" /\\ "));
        }
        let spatial = if self.spatial.is_empty() {
            "emp".to_string()
        } else {
            self.spatial
                .iter()
                .map(|a| format!("{}", a))
                .collect::<Vec<_>>()
                .join(" * ")
        };
        if parts.is_empty() {
            write!(f, "{}", spatial)
        } else {
            write!(f, "{} {}", parts.join(" "), spatial)
        }
    }
}
