//! Canonical source rendering. `parse(pretty(p))` reproduces `p` up to spans.

use super::ast::*;

pub fn pretty(prog: &Program) -> String {
    let mut out = String::new();
    for s in &prog.structs {
        out.push_str(&pretty_struct(s));
        out.push('\n');
    }
    for (i, f) in prog.funs.iter().enumerate() {
        if i > 0 || !prog.structs.is_empty() {
            out.push('\n');
        }
        out.push_str(&pretty_fun(f));
    }
    out
}

fn pretty_struct(s: &StructDecl) -> String {
    let mut out = format!("struct {} {{\n", s.name);
    for (name, ty) in &s.fields {
        out.push_str(&format!("    {};\n", decl_of(ty, name)));
    }
    out.push_str("};\n");
    out
}

fn decl_of(ty: &CType, name: &str) -> String {
    match ty {
        CType::Ptr(_) => format!("{}{}", ty.render(), name),
        CType::Array(inner) => format!("{} {}[]", inner.render(), name),
        _ => format!("{} {}", ty.render(), name),
    }
}

fn pretty_fun(f: &FunDef) -> String {
    let ret = match &f.ret {
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
    let params = f
        .params
        .iter()
        .map(|p| decl_of(&p.ty, &p.name))
        .collect::<Vec<_>>()
        .join(", ");
    let mut out = format!("{}{}({}) {{\n", ret, f.name, params);
    for s in &f.body {
        pretty_stmt(s, 1, &mut out);
    }
    out.push_str("}\n");
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn pretty_stmt(s: &Stmt, level: usize, out: &mut String) {
    indent(level, out);
    match s {
        Stmt::Decl { name, ty, init, .. } => {
            out.push_str(&decl_of(ty, name));
            if let Some(e) = init {
                out.push_str(" = ");
                out.push_str(&pretty_expr(e, 0));
            }
            out.push_str(";\n");
        }
        Stmt::Assign { lhs, rhs, .. } => {
            out.push_str(&pretty_lvalue(lhs));
            out.push_str(" = ");
            out.push_str(&pretty_expr(rhs, 0));
            out.push_str(";\n");
        }
        Stmt::If { cond, then_branch, else_branch, .. } => {
            out.push_str("if (");
            out.push_str(&pretty_expr(cond, 0));
            out.push_str(") {\n");
            for st in then_branch {
                pretty_stmt(st, level + 1, out);
            }
            indent(level, out);
            if else_branch.is_empty() {
                out.push_str("}\n");
            } else {
                out.push_str("} else {\n");
                for st in else_branch {
                    pretty_stmt(st, level + 1, out);
                }
                indent(level, out);
                out.push_str("}\n");
            }
        }
        Stmt::Return { value, .. } => {
            match value {
                Some(e) => {
                    out.push_str("return ");
                    out.push_str(&pretty_expr(e, 0));
                    out.push_str(";\n");
                }
                None => out.push_str("return;\n"),
            };
        }
        Stmt::Call { name, args, .. } => {
            out.push_str(name);
            out.push('(');
            out.push_str(&args.iter().map(|a| pretty_expr(a, 0)).collect::<Vec<_>>().join(", "));
            out.push_str(");\n");
        }
        Stmt::While { cond, body, .. } => {
            out.push_str("while (");
            out.push_str(&pretty_expr(cond, 0));
            out.push_str(") {\n");
            for st in body {
                pretty_stmt(st, level + 1, out);
            }
            indent(level, out);
            out.push_str("}\n");
        }
        Stmt::DoWhile { body, cond, .. } => {
            out.push_str("do {\n");
            for st in body {
                pretty_stmt(st, level + 1, out);
            }
            indent(level, out);
            out.push_str("} while (");
            out.push_str(&pretty_expr(cond, 0));
            out.push_str(");\n");
        }
        Stmt::For { init, cond, step, body, .. } => {
            out.push_str("for (");
            if let Some(s0) = init {
                out.push_str(pretty_simple(s0).trim_end());
            }
            out.push_str("; ");
            if let Some(c) = cond {
                out.push_str(&pretty_expr(c, 0));
            }
            out.push_str("; ");
            if let Some(s1) = step {
                out.push_str(pretty_simple(s1).trim_end());
            }
            out.push_str(") {\n");
            for st in body {
                pretty_stmt(st, level + 1, out);
            }
            indent(level, out);
            out.push_str("}\n");
        }
    }
}

fn pretty_simple(s: &Stmt) -> String {
    let mut tmp = String::new();
    pretty_stmt(s, 0, &mut tmp);
    tmp.trim_end().trim_end_matches(';').to_string()
}

fn pretty_lvalue(l: &LValue) -> String {
    match l {
        LValue::Var(name, _) => name.clone(),
        LValue::Deref(e) => format!("*{}", pretty_expr(e, PREC_UNARY)),
        LValue::Field(e, f) => format!("{}->{}", pretty_expr(e, PREC_POSTFIX), f),
        LValue::Index(e, i) => format!("{}[{}]", pretty_expr(e, PREC_POSTFIX), pretty_expr(i, 0)),
    }
}

const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_EQ: u8 = 3;
const PREC_REL: u8 = 4;
const PREC_ADD: u8 = 5;
const PREC_MUL: u8 = 6;
const PREC_UNARY: u8 = 7;
const PREC_POSTFIX: u8 = 8;

fn prec_of(op: BinOp) -> u8 {
    match op {
        BinOp::Or => PREC_OR,
        BinOp::And => PREC_AND,
        BinOp::Eq | BinOp::Ne => PREC_EQ,
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => PREC_REL,
        BinOp::Add | BinOp::Sub => PREC_ADD,
        BinOp::Mul | BinOp::Div | BinOp::Mod => PREC_MUL,
    }
}

/// Render with the minimal parentheses that preserve the tree. `min_prec` is
/// the binding strength required by the context.
fn pretty_expr(e: &Expr, min_prec: u8) -> String {
    match &e.kind {
        ExprKind::IntLit(n) => n.to_string(),
        ExprKind::CharLit(c) => match *c {
            b'\n' => "'\\n'".into(),
            b'\t' => "'\\t'".into(),
            0 => "'\\0'".into(),
            b'\\' => "'\\\\'".into(),
            b'\'' => "'\\''".into(),
            other => format!("'{}'", other as char),
        },
        ExprKind::DoubleLit(d) => {
            let s = format!("{:?}", d);
            if s.contains('.') || s.contains('e') {
                s
            } else {
                format!("{}.0", s)
            }
        }
        ExprKind::Null => "NULL".into(),
        ExprKind::Var(name) => name.clone(),
        ExprKind::Unop(op, a) => {
            let inner = pretty_expr(a, PREC_UNARY);
            let text = match op {
                UnOp::Neg => format!("-{}", inner),
                UnOp::Not => format!("!{}", inner),
            };
            if min_prec > PREC_UNARY {
                format!("({})", text)
            } else {
                text
            }
        }
        ExprKind::Binop(op, a, b) => {
            let p = prec_of(*op);
            // Left-associative: the right operand needs strictly higher
            // binding to avoid regrouping on reparse.
            let text = format!(
                "{} {} {}",
                pretty_expr(a, p),
                op.symbol(),
                pretty_expr(b, p + 1)
            );
            if p < min_prec {
                format!("({})", text)
            } else {
                text
            }
        }
        ExprKind::Field(a, f) => format!("{}->{}", pretty_expr(a, PREC_POSTFIX), f),
        ExprKind::Deref(a) => {
            let text = format!("*{}", pretty_expr(a, PREC_UNARY));
            if min_prec > PREC_UNARY {
                format!("({})", text)
            } else {
                text
            }
        }
        ExprKind::Index(a, i) => {
            format!("{}[{}]", pretty_expr(a, PREC_POSTFIX), pretty_expr(i, 0))
        }
        ExprKind::Call(name, args) => format!(
            "{}({})",
            name,
            args.iter().map(|a| pretty_expr(a, 0)).collect::<Vec<_>>().join(", ")
        ),
    }
}

pub fn pretty_expression(e: &Expr) -> String {
    pretty_expr(e, 0)
}

/// One-line summary of a statement: its first rendered line, trimmed.
pub fn pretty_stmt_head(s: &Stmt) -> String {
    let mut out = String::new();
    pretty_stmt(s, 0, &mut out);
    out.lines().next().unwrap_or("").trim().to_string()
}
