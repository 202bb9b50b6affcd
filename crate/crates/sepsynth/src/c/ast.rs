//! Abstract syntax for the restricted C dialect.
//!
//! The dialect covers: `int`/`char`/`double` scalars, pointers to scalars or
//! to the two built-in structs (`sll`, `tree`), one-dimensional array
//! parameters with an explicit length parameter, `if`/`else`, `return`,
//! declarations, assignments, direct function calls, and recursion. Loops
//! parse but are rejected by the bias analysis before verification.

use crate::span::Span;

pub const SLL: &str = "sll";
pub const TREE: &str = "tree";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CType {
    Int,
    Char,
    Double,
    /// Named struct type; only valid behind a pointer.
    Struct(String),
    Ptr(Box<CType>),
    /// Array-of-T function parameter (`T a[]`).
    Array(Box<CType>),
}

impl CType {
    pub fn is_pointer(&self) -> bool {
        matches!(self, CType::Ptr(_))
    }

    pub fn is_address(&self) -> bool {
        matches!(self, CType::Ptr(_) | CType::Array(_))
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, CType::Int | CType::Char | CType::Double)
    }

    pub fn render(&self) -> String {
        match self {
            CType::Int => "int".into(),
            CType::Char => "char".into(),
            CType::Double => "double".into(),
            CType::Struct(name) => name.clone(),
            CType::Ptr(inner) => format!("{} *", inner.render()),
            CType::Array(inner) => format!("{}[]", inner.render()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_comparison(&self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }

    pub fn is_arith(&self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
    /// Filled in by the typechecker.
    pub ty: Option<CType>,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span, ty: None }
    }

    /// Type of a checked expression. Panics on untyped nodes, which only
    /// exist before typechecking.
    pub fn ty(&self) -> &CType {
        self.ty.as_ref().expect("expression not typechecked")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    IntLit(i64),
    CharLit(u8),
    DoubleLit(f64),
    Null,
    Var(String),
    Unop(UnOp, Box<Expr>),
    Binop(BinOp, Box<Expr>, Box<Expr>),
    /// `e->field`
    Field(Box<Expr>, String),
    /// `*e`
    Deref(Box<Expr>),
    /// `a[i]`
    Index(Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LValue {
    Var(String, Span),
    Deref(Expr),
    Field(Expr, String),
    Index(Expr, Expr),
}

impl LValue {
    pub fn span(&self) -> Span {
        match self {
            LValue::Var(_, s) => *s,
            LValue::Deref(e) | LValue::Field(e, _) | LValue::Index(e, _) => e.span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Decl {
        name: String,
        ty: CType,
        init: Option<Expr>,
        span: Span,
    },
    Assign {
        lhs: LValue,
        rhs: Expr,
        span: Span,
    },
    If {
        cond: Expr,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
        span: Span,
    },
    Return {
        value: Option<Expr>,
        span: Span,
    },
    Call {
        name: String,
        args: Vec<Expr>,
        span: Span,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
        span: Span,
    },
    DoWhile {
        body: Vec<Stmt>,
        cond: Expr,
        span: Span,
    },
    For {
        init: Option<Box<Stmt>>,
        cond: Option<Expr>,
        step: Option<Box<Stmt>>,
        body: Vec<Stmt>,
        span: Span,
    },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::Decl { span, .. }
            | Stmt::Assign { span, .. }
            | Stmt::If { span, .. }
            | Stmt::Return { span, .. }
            | Stmt::Call { span, .. }
            | Stmt::While { span, .. }
            | Stmt::DoWhile { span, .. }
            | Stmt::For { span, .. } => *span,
        }
    }

    pub fn is_loop(&self) -> bool {
        matches!(self, Stmt::While { .. } | Stmt::DoWhile { .. } | Stmt::For { .. })
    }

    pub fn loop_kind(&self) -> Option<&'static str> {
        match self {
            Stmt::While { .. } => Some("while"),
            Stmt::DoWhile { .. } => Some("do-while"),
            Stmt::For { .. } => Some("for"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: CType,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunDef {
    pub name: String,
    pub params: Vec<Param>,
    /// None means void.
    pub ret: Option<CType>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructDecl {
    pub name: String,
    pub fields: Vec<(String, CType)>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub structs: Vec<StructDecl>,
    pub funs: Vec<FunDef>,
}

impl Program {
    pub fn fun(&self, name: &str) -> Option<&FunDef> {
        self.funs.iter().find(|f| f.name == name)
    }
}

/// The built-in struct layouts. Field order is significant: it matches the
/// node forms of the spec language (`node(head, next)`, `tnode(key, left, right)`).
pub fn builtin_structs() -> Vec<StructDecl> {
    vec![
        StructDecl {
            name: SLL.into(),
            fields: vec![
                ("head".into(), CType::Int),
                ("next".into(), CType::Ptr(Box::new(CType::Struct(SLL.into())))),
            ],
            span: Span::default(),
        },
        StructDecl {
            name: TREE.into(),
            fields: vec![
                ("key".into(), CType::Int),
                ("left".into(), CType::Ptr(Box::new(CType::Struct(TREE.into())))),
                ("right".into(), CType::Ptr(Box::new(CType::Struct(TREE.into())))),
            ],
            span: Span::default(),
        },
    ]
}

/// A C function prototype, used for signature checks and for API functions
/// that exist only as specifications.
#[derive(Debug, Clone, PartialEq)]
pub struct CSignature {
    pub name: String,
    pub params: Vec<(String, CType)>,
    pub ret: Option<CType>,
}

impl CSignature {
    pub fn of_fundef(f: &FunDef) -> Self {
        CSignature {
            name: f.name.clone(),
            params: f.params.iter().map(|p| (p.name.clone(), p.ty.clone())).collect(),
            ret: f.ret.clone(),
        }
    }

    /// Signature equality ignores parameter names.
    pub fn matches(&self, other: &CSignature) -> bool {
        self.name == other.name
            && self.ret == other.ret
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|((_, a), (_, b))| a == b)
    }

    pub fn render(&self) -> String {
        let ret = match &self.ret {
            None => "void ".to_string(),
            Some(t) => {
                let r = t.render();
                if r.ends_with('*') {
                    r
                } else {
                    format!("{} ", r)
                }
            }
        };
        let params = if self.params.is_empty() {
            "void".to_string()
        } else {
            self.params
                .iter()
                .map(|(n, t)| match t {
                    CType::Array(inner) => format!("{} {}[]", inner.render(), n),
                    CType::Ptr(_) => format!("{}{}", t.render(), n),
                    _ => format!("{} {}", t.render(), n),
                })
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!("{}{}({})", ret, self.name, params)
    }
}

/// Replace every span in the program with the default. Used by tests that
/// compare parse trees structurally.
pub fn strip_spans(prog: &Program) -> Program {
    fn expr(e: &Expr) -> Expr {
        let kind = match &e.kind {
            ExprKind::Unop(op, a) => ExprKind::Unop(*op, Box::new(expr(a))),
            ExprKind::Binop(op, a, b) => ExprKind::Binop(*op, Box::new(expr(a)), Box::new(expr(b))),
            ExprKind::Field(a, f) => ExprKind::Field(Box::new(expr(a)), f.clone()),
            ExprKind::Deref(a) => ExprKind::Deref(Box::new(expr(a))),
            ExprKind::Index(a, i) => ExprKind::Index(Box::new(expr(a)), Box::new(expr(i))),
            ExprKind::Call(n, args) => ExprKind::Call(n.clone(), args.iter().map(expr).collect()),
            k => k.clone(),
        };
        Expr { kind, span: Span::default(), ty: None }
    }
    fn lvalue(l: &LValue) -> LValue {
        match l {
            LValue::Var(n, _) => LValue::Var(n.clone(), Span::default()),
            LValue::Deref(e) => LValue::Deref(expr(e)),
            LValue::Field(e, f) => LValue::Field(expr(e), f.clone()),
            LValue::Index(e, i) => LValue::Index(expr(e), expr(i)),
        }
    }
    fn stmt(s: &Stmt) -> Stmt {
        match s {
            Stmt::Decl { name, ty, init, .. } => Stmt::Decl {
                name: name.clone(),
                ty: ty.clone(),
                init: init.as_ref().map(expr),
                span: Span::default(),
            },
            Stmt::Assign { lhs, rhs, .. } => Stmt::Assign {
                lhs: lvalue(lhs),
                rhs: expr(rhs),
                span: Span::default(),
            },
            Stmt::If { cond, then_branch, else_branch, .. } => Stmt::If {
                cond: expr(cond),
                then_branch: then_branch.iter().map(stmt).collect(),
                else_branch: else_branch.iter().map(stmt).collect(),
                span: Span::default(),
            },
            Stmt::Return { value, .. } => Stmt::Return {
                value: value.as_ref().map(expr),
                span: Span::default(),
            },
            Stmt::Call { name, args, .. } => Stmt::Call {
                name: name.clone(),
                args: args.iter().map(expr).collect(),
                span: Span::default(),
            },
            Stmt::While { cond, body, .. } => Stmt::While {
                cond: expr(cond),
                body: body.iter().map(stmt).collect(),
                span: Span::default(),
            },
            Stmt::DoWhile { body, cond, .. } => Stmt::DoWhile {
                body: body.iter().map(stmt).collect(),
                cond: expr(cond),
                span: Span::default(),
            },
            Stmt::For { init, cond, step, body, .. } => Stmt::For {
                init: init.as_ref().map(|s| Box::new(stmt(s))),
                cond: cond.as_ref().map(expr),
                step: step.as_ref().map(|s| Box::new(stmt(s))),
                body: body.iter().map(stmt).collect(),
                span: Span::default(),
            },
        }
    }
    Program {
        structs: self::strip_struct_spans(&prog.structs),
        funs: prog
            .funs
            .iter()
            .map(|f| FunDef {
                name: f.name.clone(),
                params: f
                    .params
                    .iter()
                    .map(|p| Param { name: p.name.clone(), ty: p.ty.clone(), span: Span::default() })
                    .collect(),
                ret: f.ret.clone(),
                body: f.body.iter().map(stmt).collect(),
                span: Span::default(),
            })
            .collect(),
    }
}

fn strip_struct_spans(structs: &[StructDecl]) -> Vec<StructDecl> {
    structs
        .iter()
        .map(|s| StructDecl {
            name: s.name.clone(),
            fields: s.fields.clone(),
            span: Span::default(),
        })
        .collect()
}
