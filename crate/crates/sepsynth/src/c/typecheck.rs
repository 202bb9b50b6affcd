//! Dialect typechecker.
//!
//! Beyond ordinary typing this enforces the dialect boundary: struct
//! declarations must re-declare one of the two built-ins exactly, struct
//! values and pointer arithmetic are rejected, `->` is the only field access,
//! calls appear only in direct positions (initializer, assignment source,
//! return value, or call statement), and every control path of a non-void
//! function ends in `return`.

use std::collections::HashMap;

use crate::span::Span;
use super::ast::*;

#[derive(Debug, Clone, PartialEq)]
pub struct TypeError {
    pub message: String,
    pub span: Span,
}

impl std::fmt::Display for TypeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

/// A program whose expressions all carry types.
#[derive(Debug, Clone)]
pub struct TypedProgram(Program);

impl TypedProgram {
    pub fn program(&self) -> &Program {
        &self.0
    }

    pub fn fun(&self, name: &str) -> Option<&FunDef> {
        self.0.fun(name)
    }
}

pub fn typecheck(prog: &Program, api: &[CSignature]) -> Result<TypedProgram, Vec<TypeError>> {
    let mut tc = Checker::new(api);
    for s in &prog.structs {
        tc.check_struct(s);
    }
    let mut seen: HashMap<String, Span> = HashMap::new();
    for f in &prog.funs {
        if let Some(prev) = seen.get(&f.name) {
            tc.errors.push(TypeError {
                message: format!(
                    "function `{}` is defined twice (first definition at {})",
                    f.name, prev
                ),
                span: f.span,
            });
        } else {
            seen.insert(f.name.clone(), f.span);
        }
        // Local definitions shadow API prototypes of the same name.
        tc.sigs.insert(f.name.clone(), CSignature::of_fundef(f));
    }
    let mut typed = Program { structs: prog.structs.clone(), funs: Vec::new() };
    for f in &prog.funs {
        typed.funs.push(tc.check_fun(f));
    }
    if tc.errors.is_empty() {
        Ok(TypedProgram(typed))
    } else {
        Err(tc.errors)
    }
}

struct Checker {
    structs: HashMap<String, Vec<(String, CType)>>,
    sigs: HashMap<String, CSignature>,
    errors: Vec<TypeError>,
    scopes: Vec<HashMap<String, CType>>,
}

impl Checker {
    fn new(api: &[CSignature]) -> Self {
        let structs = builtin_structs()
            .into_iter()
            .map(|s| (s.name, s.fields))
            .collect();
        let sigs = api.iter().map(|s| (s.name.clone(), s.clone())).collect();
        Checker { structs, sigs, errors: Vec::new(), scopes: Vec::new() }
    }

    fn err(&mut self, span: Span, message: impl Into<String>) {
        self.errors.push(TypeError { message: message.into(), span });
    }

    fn check_struct(&mut self, s: &StructDecl) {
        match self.structs.get(&s.name) {
            Some(builtin) if *builtin == s.fields => {}
            Some(_) => self.err(
                s.span,
                format!("struct `{}` must match the built-in layout exactly", s.name),
            ),
            None => self.err(
                s.span,
                format!("unknown struct `{}`; only the built-in `sll` and `tree` exist", s.name),
            ),
        }
    }

    fn validate_type(&mut self, ty: &CType, span: Span, what: &str) {
        match ty {
            CType::Int | CType::Char | CType::Double => {}
            CType::Struct(name) => {
                self.err(span, format!("{}: struct values are not supported, use `{} *`", what, name))
            }
            CType::Ptr(inner) => match inner.as_ref() {
                CType::Int | CType::Char | CType::Double => {}
                CType::Struct(name) => {
                    if !self.structs.contains_key(name) {
                        self.err(span, format!("{}: unknown struct `{}`", what, name));
                    }
                }
                _ => self.err(span, format!("{}: unsupported pointer type", what)),
            },
            CType::Array(inner) => {
                if !inner.is_scalar() {
                    self.err(span, format!("{}: arrays hold scalars only", what));
                }
            }
        }
    }

    fn lookup_var(&self, name: &str) -> Option<&CType> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn declare(&mut self, name: &str, ty: CType, span: Span) {
        if self.scopes.last().map(|s| s.contains_key(name)).unwrap_or(false) {
            self.err(span, format!("`{}` is already declared in this scope", name));
        }
        if let Some(scope) = self.scopes.last_mut() {
            scope.insert(name.to_string(), ty);
        }
    }

    fn check_fun(&mut self, f: &FunDef) -> FunDef {
        if let Some(ret) = &f.ret {
            self.validate_type(ret, f.span, "return type");
            if matches!(ret, CType::Array(_)) {
                self.err(f.span, "functions cannot return arrays");
            }
        }
        self.scopes = vec![HashMap::new()];
        for p in &f.params {
            self.validate_type(&p.ty, p.span, "parameter");
            self.declare(&p.name, p.ty.clone(), p.span);
        }
        let body = self.check_block(&f.body, f);
        if f.ret.is_some() && !returns_on_all_paths(&f.body) {
            self.err(
                f.span,
                format!("`{}`: not every control path ends in a return statement", f.name),
            );
        }
        self.scopes.clear();
        FunDef {
            name: f.name.clone(),
            params: f.params.clone(),
            ret: f.ret.clone(),
            body,
            span: f.span,
        }
    }

    fn check_block(&mut self, stmts: &[Stmt], f: &FunDef) -> Vec<Stmt> {
        self.scopes.push(HashMap::new());
        let out = stmts.iter().map(|s| self.check_stmt(s, f)).collect();
        self.scopes.pop();
        out
    }

    fn check_stmt(&mut self, s: &Stmt, f: &FunDef) -> Stmt {
        match s {
            Stmt::Decl { name, ty, init, span } => {
                self.validate_type(ty, *span, "declaration");
                let init = init
                    .as_ref()
                    .map(|e| self.check_expr_expecting(e, Some(ty), true));
                self.declare(name, ty.clone(), *span);
                Stmt::Decl { name: name.clone(), ty: ty.clone(), init, span: *span }
            }
            Stmt::Assign { lhs, rhs, span } => {
                let (lhs, lty) = self.check_lvalue(lhs);
                let rhs = self.check_expr_expecting(rhs, lty.as_ref(), true);
                Stmt::Assign { lhs, rhs, span: *span }
            }
            Stmt::If { cond, then_branch, else_branch, span } => {
                let cond = self.check_cond(cond);
                let then_branch = self.check_block(then_branch, f);
                let else_branch = self.check_block(else_branch, f);
                Stmt::If { cond, then_branch, else_branch, span: *span }
            }
            Stmt::Return { value, span } => {
                let value = match (&f.ret, value) {
                    (Some(rt), Some(e)) => Some(self.check_expr_expecting(e, Some(rt), true)),
                    (Some(_), None) => {
                        self.err(*span, "missing return value in non-void function");
                        None
                    }
                    (None, Some(e)) => {
                        self.err(*span, "void function cannot return a value");
                        Some(self.check_expr_expecting(e, None, true))
                    }
                    (None, None) => None,
                };
                Stmt::Return { value, span: *span }
            }
            Stmt::Call { name, args, span } => {
                let (args, _ret) = self.check_call(name, args, *span, false);
                Stmt::Call { name: name.clone(), args, span: *span }
            }
            Stmt::While { cond, body, span } => {
                let cond = self.check_cond(cond);
                let body = self.check_block(body, f);
                Stmt::While { cond, body, span: *span }
            }
            Stmt::DoWhile { body, cond, span } => {
                let body = self.check_block(body, f);
                let cond = self.check_cond(cond);
                Stmt::DoWhile { body, cond, span: *span }
            }
            Stmt::For { init, cond, step, body, span } => {
                self.scopes.push(HashMap::new());
                let init = init.as_ref().map(|s0| Box::new(self.check_stmt(s0, f)));
                let cond = cond.as_ref().map(|c| self.check_cond(c));
                let step = step.as_ref().map(|s1| Box::new(self.check_stmt(s1, f)));
                let body = self.check_block(body, f);
                self.scopes.pop();
                Stmt::For { init, cond, step, body, span: *span }
            }
        }
    }

    fn check_cond(&mut self, e: &Expr) -> Expr {
        let e = self.check_expr_expecting(e, None, false);
        if let Some(ty) = &e.ty {
            if *ty != CType::Int {
                self.err(e.span, "condition must be an int expression");
            }
        }
        e
    }

    fn check_lvalue(&mut self, l: &LValue) -> (LValue, Option<CType>) {
        match l {
            LValue::Var(name, span) => match self.lookup_var(name).cloned() {
                Some(ty) => {
                    if matches!(ty, CType::Array(_)) {
                        self.err(*span, "cannot assign to an array parameter as a whole");
                        (l.clone(), None)
                    } else {
                        (l.clone(), Some(ty))
                    }
                }
                None => {
                    self.err(*span, format!("unknown variable `{}`", name));
                    (l.clone(), None)
                }
            },
            LValue::Deref(e) => {
                let e = self.check_expr_expecting(e, None, false);
                let ty = match &e.ty {
                    Some(CType::Ptr(inner)) if inner.is_scalar() => Some(inner.as_ref().clone()),
                    Some(CType::Ptr(_)) => {
                        self.err(e.span, "cannot assign through a struct pointer; use `->`");
                        None
                    }
                    Some(_) => {
                        self.err(e.span, "`*` needs a pointer operand");
                        None
                    }
                    None => None,
                };
                (LValue::Deref(e), ty)
            }
            LValue::Field(base, field) => {
                let base = self.check_expr_expecting(base, None, false);
                let ty = self.field_type(&base, field);
                (LValue::Field(base, field.clone()), ty)
            }
            LValue::Index(base, idx) => {
                let base = self.check_expr_expecting(base, None, false);
                let idx = self.check_expr_expecting(idx, Some(&CType::Int), false);
                let ty = match &base.ty {
                    Some(CType::Array(inner)) => Some(inner.as_ref().clone()),
                    Some(_) => {
                        self.err(base.span, "indexing needs an array parameter");
                        None
                    }
                    None => None,
                };
                (LValue::Index(base, idx), ty)
            }
        }
    }

    fn field_type(&mut self, base: &Expr, field: &str) -> Option<CType> {
        match &base.ty {
            Some(CType::Ptr(inner)) => match inner.as_ref() {
                CType::Struct(sname) => {
                    let fields = self.structs.get(sname).cloned();
                    match fields.and_then(|fs| fs.into_iter().find(|(n, _)| n == field)) {
                        Some((_, ty)) => Some(ty),
                        None => {
                            self.err(
                                base.span,
                                format!("struct `{}` has no field `{}`", sname, field),
                            );
                            None
                        }
                    }
                }
                _ => {
                    self.err(base.span, "`->` needs a struct pointer");
                    None
                }
            },
            Some(_) => {
                self.err(base.span, "`->` needs a struct pointer");
                None
            }
            None => None,
        }
    }

    fn check_call(
        &mut self,
        name: &str,
        args: &[Expr],
        span: Span,
        want_value: bool,
    ) -> (Vec<Expr>, Option<CType>) {
        let sig = match self.sigs.get(name).cloned() {
            Some(sig) => sig,
            None => {
                self.err(span, format!("call to unknown function `{}`", name));
                let args = args
                    .iter()
                    .map(|a| self.check_expr_expecting(a, None, false))
                    .collect();
                return (args, None);
            }
        };
        if args.len() != sig.params.len() {
            self.err(
                span,
                format!(
                    "`{}` takes {} argument(s), got {}",
                    name,
                    sig.params.len(),
                    args.len()
                ),
            );
        }
        let mut out = Vec::new();
        for (i, a) in args.iter().enumerate() {
            let expected = sig.params.get(i).map(|(_, t)| t);
            out.push(self.check_expr_expecting(a, expected, false));
        }
        if want_value && sig.ret.is_none() {
            self.err(span, format!("void function `{}` used as a value", name));
        }
        (out, sig.ret)
    }

    fn check_expr_expecting(
        &mut self,
        e: &Expr,
        expected: Option<&CType>,
        allow_call: bool,
    ) -> Expr {
        let mut typed = self.infer(e, expected, allow_call);
        if let (Some(exp), Some(got)) = (expected, &typed.ty) {
            if got != exp {
                // NULL adopting a pointer type is handled in infer; anything
                // else must match exactly (no implicit conversions).
                self.err(
                    typed.span,
                    format!("expected `{}`, found `{}`", exp.render(), got.render()),
                );
                typed.ty = None;
            }
        }
        typed
    }

    fn infer(&mut self, e: &Expr, expected: Option<&CType>, allow_call: bool) -> Expr {
        let span = e.span;
        match &e.kind {
            ExprKind::IntLit(n) => {
                let mut out = Expr::new(ExprKind::IntLit(*n), span);
                out.ty = Some(CType::Int);
                out
            }
            ExprKind::CharLit(c) => {
                let mut out = Expr::new(ExprKind::CharLit(*c), span);
                out.ty = Some(CType::Char);
                out
            }
            ExprKind::DoubleLit(d) => {
                let mut out = Expr::new(ExprKind::DoubleLit(*d), span);
                out.ty = Some(CType::Double);
                out
            }
            ExprKind::Null => {
                let mut out = Expr::new(ExprKind::Null, span);
                match expected {
                    Some(ty @ CType::Ptr(_)) => out.ty = Some(ty.clone()),
                    Some(other) => {
                        self.err(span, format!("NULL used where `{}` is expected", other.render()));
                    }
                    None => self.err(span, "cannot infer the pointer type of this NULL"),
                }
                out
            }
            ExprKind::Var(name) => {
                let mut out = Expr::new(ExprKind::Var(name.clone()), span);
                match self.lookup_var(name) {
                    Some(ty) => out.ty = Some(ty.clone()),
                    None => self.err(span, format!("unknown variable `{}`", name)),
                }
                out
            }
            ExprKind::Unop(op, a) => {
                let a = self.infer(a, None, false);
                let ty = match (op, &a.ty) {
                    (UnOp::Neg, Some(CType::Int)) => Some(CType::Int),
                    (UnOp::Neg, Some(CType::Double)) => Some(CType::Double),
                    (UnOp::Not, Some(CType::Int)) => Some(CType::Int),
                    (_, Some(t)) => {
                        self.err(span, format!("unary operator not defined on `{}`", t.render()));
                        None
                    }
                    (_, None) => None,
                };
                let mut out = Expr::new(ExprKind::Unop(*op, Box::new(a)), span);
                out.ty = ty;
                out
            }
            ExprKind::Binop(op, a, b) => self.infer_binop(*op, a, b, span),
            ExprKind::Field(base, field) => {
                let base = self.infer(base, None, false);
                let ty = self.field_type(&base, field);
                let mut out = Expr::new(ExprKind::Field(Box::new(base), field.clone()), span);
                out.ty = ty;
                out
            }
            ExprKind::Deref(a) => {
                let a = self.infer(a, None, false);
                let ty = match &a.ty {
                    Some(CType::Ptr(inner)) if inner.is_scalar() => Some(inner.as_ref().clone()),
                    Some(CType::Ptr(_)) => {
                        self.err(span, "cannot load a whole struct; use `->`");
                        None
                    }
                    Some(t) => {
                        self.err(span, format!("`*` needs a pointer, found `{}`", t.render()));
                        None
                    }
                    None => None,
                };
                let mut out = Expr::new(ExprKind::Deref(Box::new(a)), span);
                out.ty = ty;
                out
            }
            ExprKind::Index(base, idx) => {
                let base = self.infer(base, None, false);
                let idx = self.check_expr_expecting(idx, Some(&CType::Int), false);
                let ty = match &base.ty {
                    Some(CType::Array(inner)) => Some(inner.as_ref().clone()),
                    Some(t) => {
                        self.err(span, format!("indexing needs an array, found `{}`", t.render()));
                        None
                    }
                    None => None,
                };
                let mut out = Expr::new(ExprKind::Index(Box::new(base), Box::new(idx)), span);
                out.ty = ty;
                out
            }
            ExprKind::Call(name, args) => {
                if !allow_call {
                    self.err(
                        span,
                        "function calls are only allowed as an initializer, assignment source, \
                         return value, or call statement",
                    );
                }
                let (args, ret) = self.check_call(name, args, span, true);
                let mut out = Expr::new(ExprKind::Call(name.clone(), args), span);
                out.ty = ret;
                out
            }
        }
    }

    fn infer_binop(&mut self, op: BinOp, a: &Expr, b: &Expr, span: Span) -> Expr {
        // Evaluate the NULL side second so it can adopt the other side's type.
        let (a, b) = if matches!(a.kind, ExprKind::Null) && !matches!(b.kind, ExprKind::Null) {
            let b = self.infer(b, None, false);
            let a = self.check_expr_expecting(a, b.ty.as_ref(), false);
            (a, b)
        } else {
            let a = self.infer(a, None, false);
            let b = self.check_expr_expecting(
                b,
                if matches!(b.kind, ExprKind::Null) { a.ty.as_ref() } else { None },
                false,
            );
            (a, b)
        };
        let ty = match (&a.ty, &b.ty) {
            (Some(ta), Some(tb)) => self.binop_type(op, ta, tb, span),
            _ => None,
        };
        let mut out = Expr::new(ExprKind::Binop(op, Box::new(a), Box::new(b)), span);
        out.ty = ty;
        out
    }

    fn binop_type(&mut self, op: BinOp, ta: &CType, tb: &CType, span: Span) -> Option<CType> {
        use CType::*;
        if op.is_arith() {
            return match (ta, tb) {
                (Int, Int) => Some(Int),
                (Double, Double) if op != BinOp::Mod => Some(Double),
                (Ptr(_), _) | (_, Ptr(_)) | (Array(_), _) | (_, Array(_)) => {
                    self.err(span, "pointer arithmetic is not supported");
                    None
                }
                _ => {
                    self.err(
                        span,
                        format!(
                            "`{}` is not defined on `{}` and `{}`",
                            op.symbol(),
                            ta.render(),
                            tb.render()
                        ),
                    );
                    None
                }
            };
        }
        if op.is_comparison() {
            let ok = match (ta, tb) {
                (Int, Int) | (Char, Char) | (Double, Double) => true,
                (Ptr(x), Ptr(y)) if x == y => {
                    if !matches!(op, BinOp::Eq | BinOp::Ne) {
                        self.err(span, "pointers compare with `==` and `!=` only");
                        return None;
                    }
                    true
                }
                _ => false,
            };
            if !ok {
                self.err(
                    span,
                    format!(
                        "cannot compare `{}` with `{}`",
                        ta.render(),
                        tb.render()
                    ),
                );
                return None;
            }
            return Some(Int);
        }
        // && and ||
        if *ta == Int && *tb == Int {
            Some(Int)
        } else {
            self.err(span, "logical operators need int operands");
            None
        }
    }
}

/// Conservative: loops never count as returning.
pub fn returns_on_all_paths(stmts: &[Stmt]) -> bool {
    for s in stmts {
        match s {
            Stmt::Return { .. } => return true,
            Stmt::If { then_branch, else_branch, .. } => {
                if !else_branch.is_empty()
                    && returns_on_all_paths(then_branch)
                    && returns_on_all_paths(else_branch)
                {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}
