//! Big-step concrete interpreter for the C dialect.
//!
//! Integers live in [-2^31, 2^31); any arithmetic result outside that range
//! is a reported `Overflow` fault rather than a wraparound. The heap maps
//! positive addresses to typed objects; address 0 is null and never
//! allocated. Loops run under a fuel budget so the interpreter is total.

use crate::c::{BinOp, CType, Expr, ExprKind, FunDef, LValue, Program, Stmt, UnOp};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use thiserror::Error;

pub const INT_MIN: i64 = -(1 << 31);
pub const INT_MAX: i64 = (1 << 31) - 1;
pub const DEFAULT_DEPTH_LIMIT: usize = 10_000;
pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConcreteValue {
    Int(i64),
    Char(u8),
    Double(f64),
    Addr(usize),
}

impl ConcreteValue {
    pub const NULL: ConcreteValue = ConcreteValue::Addr(0);

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ConcreteValue::Int(n) => Some(*n),
            ConcreteValue::Char(c) => Some(*c as i64),
            _ => None,
        }
    }

    pub fn truthy(&self) -> Option<bool> {
        match self {
            ConcreteValue::Int(n) => Some(*n != 0),
            ConcreteValue::Char(c) => Some(*c != 0),
            ConcreteValue::Addr(a) => Some(*a != 0),
            ConcreteValue::Double(_) => None,
        }
    }
}

impl fmt::Display for ConcreteValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConcreteValue::Int(n) => write!(f, "{}", n),
            ConcreteValue::Char(c) => write!(f, "'{}'", *c as char),
            ConcreteValue::Double(d) => write!(f, "{:?}", d),
            ConcreteValue::Addr(0) => write!(f, "null"),
            ConcreteValue::Addr(a) => write!(f, "@{}", a),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeapObj {
    /// A single scalar cell (what `T *p` points at).
    Cell(ConcreteValue),
    /// An `sll` node.
    Sll { head: ConcreteValue, next: ConcreteValue },
    /// A `tree` node.
    Tree { key: ConcreteValue, left: ConcreteValue, right: ConcreteValue },
    /// A fixed-length array block.
    Array(Vec<ConcreteValue>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConcreteState {
    pub heap: BTreeMap<usize, HeapObj>,
    next_alloc: usize,
}

impl ConcreteState {
    pub fn new() -> Self {
        ConcreteState { heap: BTreeMap::new(), next_alloc: 1 }
    }

    pub fn alloc(&mut self, obj: HeapObj) -> usize {
        let a = self.next_alloc;
        self.next_alloc += 1;
        self.heap.insert(a, obj);
        a
    }

    pub fn free(&mut self, addr: usize) -> Option<HeapObj> {
        self.heap.remove(&addr)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Fault {
    #[error("null dereference")]
    NullDeref,
    #[error("out-of-bounds or dangling access")]
    OutOfBounds,
    #[error("integer overflow")]
    Overflow,
    #[error("division by zero")]
    DivByZero,
    #[error("recursion depth or fuel exhausted")]
    DepthExceeded,
    #[error("stuck: {0}")]
    Stuck(String),
}

type R<T> = Result<T, Fault>;

enum Flow {
    Normal,
    Return(Option<ConcreteValue>),
}

/// Call table built from one or more programs (target plus reference
/// implementations of the API functions).
pub struct Machine<'a> {
    funs: BTreeMap<String, &'a FunDef>,
    pub depth_limit: usize,
    pub fuel: u64,
}

struct Frame {
    scopes: Vec<HashMap<String, ConcreteValue>>,
}

impl Frame {
    fn lookup(&self, name: &str) -> Option<ConcreteValue> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn set(&mut self, name: &str, v: ConcreteValue) -> bool {
        for scope in self.scopes.iter_mut().rev() {
            if let Some(slot) = scope.get_mut(name) {
                *slot = v;
                return true;
            }
        }
        false
    }

    fn declare(&mut self, name: &str, v: ConcreteValue) {
        self.scopes.last_mut().unwrap().insert(name.to_string(), v);
    }
}

fn check_int(v: i64) -> R<ConcreteValue> {
    if (INT_MIN..=INT_MAX).contains(&v) {
        Ok(ConcreteValue::Int(v))
    } else {
        Err(Fault::Overflow)
    }
}

fn zero_of(ty: &CType) -> ConcreteValue {
    match ty {
        CType::Int => ConcreteValue::Int(0),
        CType::Char => ConcreteValue::Char(0),
        CType::Double => ConcreteValue::Double(0.0),
        _ => ConcreteValue::NULL,
    }
}

impl<'a> Machine<'a> {
    pub fn new(programs: &[&'a Program]) -> Machine<'a> {
        let mut funs = BTreeMap::new();
        for prog in programs {
            for f in &prog.funs {
                funs.insert(f.name.clone(), f);
            }
        }
        Machine { funs, depth_limit: DEFAULT_DEPTH_LIMIT, fuel: DEFAULT_FUEL }
    }

    pub fn has_fun(&self, name: &str) -> bool {
        self.funs.contains_key(name)
    }

    /// Run `fname(args)` on `state`. Returns the return value (None for
    /// void) and the final state.
    pub fn run(
        &self,
        fname: &str,
        args: &[ConcreteValue],
        state: ConcreteState,
    ) -> R<(Option<ConcreteValue>, ConcreteState)> {
        let mut st = state;
        let mut fuel = self.fuel;
        let ret = self.call(fname, args, &mut st, 0, &mut fuel)?;
        Ok((ret, st))
    }

    fn call(
        &self,
        fname: &str,
        args: &[ConcreteValue],
        st: &mut ConcreteState,
        depth: usize,
        fuel: &mut u64,
    ) -> R<Option<ConcreteValue>> {
        if depth >= self.depth_limit {
            return Err(Fault::DepthExceeded);
        }
        // Deep recursion in the interpreted program recurses here too; grow
        // the native stack on demand so the depth limit, not the host stack,
        // is what bounds execution.
        stacker::maybe_grow(64 * 1024, 4 * 1024 * 1024, || {
            self.call_inner(fname, args, st, depth, fuel)
        })
    }

    fn call_inner(
        &self,
        fname: &str,
        args: &[ConcreteValue],
        st: &mut ConcreteState,
        depth: usize,
        fuel: &mut u64,
    ) -> R<Option<ConcreteValue>> {
        let fun = self
            .funs
            .get(fname)
            .ok_or_else(|| Fault::Stuck(format!("no function `{}`", fname)))?;
        if fun.params.len() != args.len() {
            return Err(Fault::Stuck(format!("arity mismatch calling `{}`", fname)));
        }
        let mut frame = Frame { scopes: vec![HashMap::new()] };
        for (p, v) in fun.params.iter().zip(args) {
            frame.declare(&p.name, *v);
        }
        match self.exec_block(&fun.body, &mut frame, st, depth, fuel)? {
            Flow::Return(v) => Ok(v),
            Flow::Normal => Ok(None),
        }
    }

    fn exec_block(
        &self,
        stmts: &[Stmt],
        frame: &mut Frame,
        st: &mut ConcreteState,
        depth: usize,
        fuel: &mut u64,
    ) -> R<Flow> {
        frame.scopes.push(HashMap::new());
        let result = self.exec_seq(stmts, frame, st, depth, fuel);
        frame.scopes.pop();
        result
    }

    fn exec_seq(
        &self,
        stmts: &[Stmt],
        frame: &mut Frame,
        st: &mut ConcreteState,
        depth: usize,
        fuel: &mut u64,
    ) -> R<Flow> {
        for s in stmts {
            if let Flow::Return(v) = self.exec(s, frame, st, depth, fuel)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn exec(
        &self,
        stmt: &Stmt,
        frame: &mut Frame,
        st: &mut ConcreteState,
        depth: usize,
        fuel: &mut u64,
    ) -> R<Flow> {
        if *fuel == 0 {
            return Err(Fault::DepthExceeded);
        }
        *fuel -= 1;
        match stmt {
            Stmt::Decl { name, ty, init, .. } => {
                let v = match init {
                    Some(e) => self.eval(e, frame, st, depth, fuel)?,
                    None => zero_of(ty),
                };
                frame.declare(name, v);
                Ok(Flow::Normal)
            }
            Stmt::Assign { lhs, rhs, .. } => {
                let v = self.eval(rhs, frame, st, depth, fuel)?;
                self.assign(lhs, v, frame, st, depth, fuel)?;
                Ok(Flow::Normal)
            }
            Stmt::If { cond, then_branch, else_branch, .. } => {
                let c = self.eval(cond, frame, st, depth, fuel)?;
                let b = c.truthy().ok_or_else(|| {
                    Fault::Stuck("condition did not evaluate to a scalar".into())
                })?;
                if b {
                    self.exec_block(then_branch, frame, st, depth, fuel)
                } else {
                    self.exec_block(else_branch, frame, st, depth, fuel)
                }
            }
            Stmt::Return { value, .. } => {
                let v = match value {
                    Some(e) => Some(self.eval(e, frame, st, depth, fuel)?),
                    None => None,
                };
                Ok(Flow::Return(v))
            }
            Stmt::Call { name, args, .. } => {
                let vals = self.eval_args(args, frame, st, depth, fuel)?;
                self.call(name, &vals, st, depth + 1, fuel)?;
                Ok(Flow::Normal)
            }
            Stmt::While { cond, body, .. } => {
                loop {
                    if *fuel == 0 {
                        return Err(Fault::DepthExceeded);
                    }
                    *fuel -= 1;
                    let c = self.eval(cond, frame, st, depth, fuel)?;
                    if !c.truthy().unwrap_or(false) {
                        break;
                    }
                    if let Flow::Return(v) = self.exec_block(body, frame, st, depth, fuel)? {
                        return Ok(Flow::Return(v));
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::DoWhile { body, cond, .. } => {
                loop {
                    if *fuel == 0 {
                        return Err(Fault::DepthExceeded);
                    }
                    *fuel -= 1;
                    if let Flow::Return(v) = self.exec_block(body, frame, st, depth, fuel)? {
                        return Ok(Flow::Return(v));
                    }
                    let c = self.eval(cond, frame, st, depth, fuel)?;
                    if !c.truthy().unwrap_or(false) {
                        break;
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::For { init, cond, step, body, .. } => {
                frame.scopes.push(HashMap::new());
                let result = (|| -> R<Flow> {
                    if let Some(i) = init {
                        self.exec(i, frame, st, depth, fuel)?;
                    }
                    loop {
                        if *fuel == 0 {
                            return Err(Fault::DepthExceeded);
                        }
                        *fuel -= 1;
                        if let Some(c) = cond {
                            let v = self.eval(c, frame, st, depth, fuel)?;
                            if !v.truthy().unwrap_or(false) {
                                break;
                            }
                        }
                        if let Flow::Return(v) = self.exec_block(body, frame, st, depth, fuel)? {
                            return Ok(Flow::Return(v));
                        }
                        if let Some(s) = step {
                            self.exec(s, frame, st, depth, fuel)?;
                        }
                    }
                    Ok(Flow::Normal)
                })();
                frame.scopes.pop();
                result
            }
        }
    }

    fn assign(
        &self,
        lhs: &LValue,
        v: ConcreteValue,
        frame: &mut Frame,
        st: &mut ConcreteState,
        depth: usize,
        fuel: &mut u64,
    ) -> R<()> {
        match lhs {
            LValue::Var(name, _) => {
                if !frame.set(name, v) {
                    return Err(Fault::Stuck(format!("assignment to undeclared `{}`", name)));
                }
                Ok(())
            }
            LValue::Deref(e) => {
                let addr = self.eval_addr(e, frame, st, depth, fuel)?;
                match st.heap.get_mut(&addr) {
                    Some(HeapObj::Cell(slot)) => {
                        *slot = v;
                        Ok(())
                    }
                    Some(_) => Err(Fault::Stuck("deref write to a non-cell object".into())),
                    None => Err(Fault::OutOfBounds),
                }
            }
            LValue::Field(e, field) => {
                let addr = self.eval_addr(e, frame, st, depth, fuel)?;
                match (st.heap.get_mut(&addr), field.as_str()) {
                    (Some(HeapObj::Sll { head, .. }), "head") => *head = v,
                    (Some(HeapObj::Sll { next, .. }), "next") => *next = v,
                    (Some(HeapObj::Tree { key, .. }), "key") => *key = v,
                    (Some(HeapObj::Tree { left, .. }), "left") => *left = v,
                    (Some(HeapObj::Tree { right, .. }), "right") => *right = v,
                    (Some(_), f) => {
                        return Err(Fault::Stuck(format!("no field `{}` on this object", f)))
                    }
                    (None, _) => return Err(Fault::OutOfBounds),
                }
                Ok(())
            }
            LValue::Index(base, idx) => {
                let addr = self.eval_addr(base, frame, st, depth, fuel)?;
                let i = self
                    .eval(idx, frame, st, depth, fuel)?
                    .as_int()
                    .ok_or_else(|| Fault::Stuck("non-integer index".into()))?;
                match st.heap.get_mut(&addr) {
                    Some(HeapObj::Array(elems)) => {
                        if i < 0 || i as usize >= elems.len() {
                            return Err(Fault::OutOfBounds);
                        }
                        elems[i as usize] = v;
                        Ok(())
                    }
                    Some(_) => Err(Fault::Stuck("indexed write to a non-array object".into())),
                    None => Err(Fault::OutOfBounds),
                }
            }
        }
    }

    fn eval_args(
        &self,
        args: &[Expr],
        frame: &mut Frame,
        st: &mut ConcreteState,
        depth: usize,
        fuel: &mut u64,
    ) -> R<Vec<ConcreteValue>> {
        args.iter()
            .map(|a| self.eval(a, frame, st, depth, fuel))
            .collect()
    }

    /// Evaluate an expression expected to produce a non-null address.
    fn eval_addr(
        &self,
        e: &Expr,
        frame: &mut Frame,
        st: &mut ConcreteState,
        depth: usize,
        fuel: &mut u64,
    ) -> R<usize> {
        match self.eval(e, frame, st, depth, fuel)? {
            ConcreteValue::Addr(0) => Err(Fault::NullDeref),
            ConcreteValue::Addr(a) => Ok(a),
            _ => Err(Fault::Stuck("dereference of a non-address".into())),
        }
    }

    fn eval(
        &self,
        e: &Expr,
        frame: &mut Frame,
        st: &mut ConcreteState,
        depth: usize,
        fuel: &mut u64,
    ) -> R<ConcreteValue> {
        match &e.kind {
            ExprKind::IntLit(n) => check_int(*n),
            ExprKind::CharLit(c) => Ok(ConcreteValue::Char(*c)),
            ExprKind::DoubleLit(d) => Ok(ConcreteValue::Double(*d)),
            ExprKind::Null => Ok(ConcreteValue::NULL),
            ExprKind::Var(name) => frame
                .lookup(name)
                .ok_or_else(|| Fault::Stuck(format!("unbound variable `{}`", name))),
            ExprKind::Unop(op, inner) => {
                let v = self.eval(inner, frame, st, depth, fuel)?;
                match (op, v) {
                    (UnOp::Neg, ConcreteValue::Int(n)) => check_int(-n),
                    (UnOp::Neg, ConcreteValue::Double(d)) => Ok(ConcreteValue::Double(-d)),
                    (UnOp::Not, v) => {
                        let b = v
                            .truthy()
                            .ok_or_else(|| Fault::Stuck("`!` on a non-scalar".into()))?;
                        Ok(ConcreteValue::Int(if b { 0 } else { 1 }))
                    }
                    _ => Err(Fault::Stuck("bad unary operand".into())),
                }
            }
            ExprKind::Binop(op, lhs, rhs) => self.eval_binop(*op, lhs, rhs, frame, st, depth, fuel),
            ExprKind::Field(base, field) => {
                let addr = self.eval_addr(base, frame, st, depth, fuel)?;
                match (st.heap.get(&addr), field.as_str()) {
                    (Some(HeapObj::Sll { head, .. }), "head") => Ok(*head),
                    (Some(HeapObj::Sll { next, .. }), "next") => Ok(*next),
                    (Some(HeapObj::Tree { key, .. }), "key") => Ok(*key),
                    (Some(HeapObj::Tree { left, .. }), "left") => Ok(*left),
                    (Some(HeapObj::Tree { right, .. }), "right") => Ok(*right),
                    (Some(_), f) => Err(Fault::Stuck(format!("no field `{}` on this object", f))),
                    (None, _) => Err(Fault::OutOfBounds),
                }
            }
            ExprKind::Deref(inner) => {
                let addr = self.eval_addr(inner, frame, st, depth, fuel)?;
                match st.heap.get(&addr) {
                    Some(HeapObj::Cell(v)) => Ok(*v),
                    Some(_) => Err(Fault::Stuck("deref read of a non-cell object".into())),
                    None => Err(Fault::OutOfBounds),
                }
            }
            ExprKind::Index(base, idx) => {
                let addr = self.eval_addr(base, frame, st, depth, fuel)?;
                let i = self
                    .eval(idx, frame, st, depth, fuel)?
                    .as_int()
                    .ok_or_else(|| Fault::Stuck("non-integer index".into()))?;
                match st.heap.get(&addr) {
                    Some(HeapObj::Array(elems)) => {
                        if i < 0 || i as usize >= elems.len() {
                            return Err(Fault::OutOfBounds);
                        }
                        Ok(elems[i as usize])
                    }
                    Some(_) => Err(Fault::Stuck("indexed read of a non-array object".into())),
                    None => Err(Fault::OutOfBounds),
                }
            }
            ExprKind::Call(name, args) => {
                let vals = self.eval_args(args, frame, st, depth, fuel)?;
                self.call(name, &vals, st, depth + 1, fuel)?
                    .ok_or_else(|| Fault::Stuck(format!("void call `{}` used as a value", name)))
            }
        }
    }

    fn eval_binop(
        &self,
        op: BinOp,
        lhs: &Expr,
        rhs: &Expr,
        frame: &mut Frame,
        st: &mut ConcreteState,
        depth: usize,
        fuel: &mut u64,
    ) -> R<ConcreteValue> {
        // Short-circuit forms first: the right operand must not run when the
        // left decides (guards like `p != NULL && p->next != NULL` rely on
        // this).
        if matches!(op, BinOp::And | BinOp::Or) {
            let l = self.eval(lhs, frame, st, depth, fuel)?;
            let lb = l
                .truthy()
                .ok_or_else(|| Fault::Stuck("logical op on a non-scalar".into()))?;
            if op == BinOp::And && !lb {
                return Ok(ConcreteValue::Int(0));
            }
            if op == BinOp::Or && lb {
                return Ok(ConcreteValue::Int(1));
            }
            let r = self.eval(rhs, frame, st, depth, fuel)?;
            let rb = r
                .truthy()
                .ok_or_else(|| Fault::Stuck("logical op on a non-scalar".into()))?;
            return Ok(ConcreteValue::Int(if rb { 1 } else { 0 }));
        }

        let l = self.eval(lhs, frame, st, depth, fuel)?;
        let r = self.eval(rhs, frame, st, depth, fuel)?;
        use ConcreteValue as V;
        let bool_int = |b: bool| V::Int(if b { 1 } else { 0 });
        match (op, l, r) {
            (BinOp::Add, V::Int(a), V::Int(b)) => check_int(a + b),
            (BinOp::Sub, V::Int(a), V::Int(b)) => check_int(a - b),
            (BinOp::Mul, V::Int(a), V::Int(b)) => {
                a.checked_mul(b).ok_or(Fault::Overflow).and_then(check_int)
            }
            (BinOp::Div, V::Int(a), V::Int(b)) => {
                if b == 0 {
                    Err(Fault::DivByZero)
                } else {
                    check_int(a / b)
                }
            }
            (BinOp::Mod, V::Int(a), V::Int(b)) => {
                if b == 0 {
                    Err(Fault::DivByZero)
                } else {
                    check_int(a % b)
                }
            }
            (BinOp::Add, V::Double(a), V::Double(b)) => Ok(V::Double(a + b)),
            (BinOp::Sub, V::Double(a), V::Double(b)) => Ok(V::Double(a - b)),
            (BinOp::Mul, V::Double(a), V::Double(b)) => Ok(V::Double(a * b)),
            (BinOp::Div, V::Double(a), V::Double(b)) => Ok(V::Double(a / b)),
            (cmp, V::Int(a), V::Int(b)) if cmp.is_comparison() => {
                Ok(bool_int(cmp_i64(cmp, a, b)))
            }
            (cmp, V::Char(a), V::Char(b)) if cmp.is_comparison() => {
                Ok(bool_int(cmp_i64(cmp, a as i64, b as i64)))
            }
            (cmp, V::Double(a), V::Double(b)) if cmp.is_comparison() => Ok(bool_int(match cmp {
                BinOp::Eq => a == b,
                BinOp::Ne => a != b,
                BinOp::Lt => a < b,
                BinOp::Le => a <= b,
                BinOp::Gt => a > b,
                _ => a >= b,
            })),
            (BinOp::Eq, V::Addr(a), V::Addr(b)) => Ok(bool_int(a == b)),
            (BinOp::Ne, V::Addr(a), V::Addr(b)) => Ok(bool_int(a != b)),
            _ => Err(Fault::Stuck("ill-typed binary operation".into())),
        }
    }
}

fn cmp_i64(op: BinOp, a: i64, b: i64) -> bool {
    match op {
        BinOp::Eq => a == b,
        BinOp::Ne => a != b,
        BinOp::Lt => a < b,
        BinOp::Le => a <= b,
        BinOp::Gt => a > b,
        BinOp::Ge => a >= b,
        _ => unreachable!("not a comparison"),
    }
}

/// Convenience wrapper over [`Machine`] for a single program.
pub fn interp(
    prog: &Program,
    fname: &str,
    args: &[ConcreteValue],
    state: ConcreteState,
) -> R<(Option<ConcreteValue>, ConcreteState)> {
    Machine::new(&[prog]).run(fname, args, state)
}
