//! Recursive-descent parser for the restricted dialect.

use crate::span::Span;
use super::ast::*;
use super::lexer::{lex, Tok, Token};
use thiserror::Error;

/// Inputs larger than this are rejected outright.
pub const MAX_SOURCE_BYTES: usize = 256 * 1024;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("{span}: expected {expected}, found {found}")]
    UnexpectedToken { expected: String, found: String, span: Span },
    #[error("{span}: unexpected end of input")]
    UnexpectedEof { span: Span },
    #[error("{span}: {message}")]
    InvalidSyntax { message: String, span: Span },
    #[error("{span}: unsupported construct: {construct}")]
    Unsupported { construct: String, span: Span },
    #[error("input exceeds the {limit}-byte size limit ({actual} bytes)")]
    TooLarge { limit: usize, actual: usize },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::UnexpectedToken { span, .. }
            | ParseError::UnexpectedEof { span }
            | ParseError::InvalidSyntax { span, .. }
            | ParseError::Unsupported { span, .. } => *span,
            ParseError::TooLarge { .. } => Span::default(),
        }
    }
}

pub type ParseResult<T> = Result<T, ParseError>;

pub fn parse(src: &str) -> ParseResult<Program> {
    if src.len() > MAX_SOURCE_BYTES {
        return Err(ParseError::TooLarge { limit: MAX_SOURCE_BYTES, actual: src.len() });
    }
    let tokens = lex(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut prog = Program::default();
    while !p.at_eof() {
        if p.check(&Tok::KwStruct) && p.peek_is_struct_decl() {
            prog.structs.push(p.struct_decl()?);
        } else {
            prog.funs.push(p.fun_def()?);
        }
    }
    Ok(prog)
}

/// Parse a bare prototype such as `sll *append(sll *h1, sll *h2)`.
pub fn parse_signature(src: &str) -> ParseResult<CSignature> {
    let tokens = lex(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let ret = p.return_type()?;
    let (name, _) = p.ident()?;
    let params = p.param_list()?;
    if !p.at_eof() {
        let t = p.peek_token().unwrap();
        return Err(ParseError::UnexpectedToken {
            expected: "end of signature".into(),
            found: t.tok.describe(),
            span: t.span,
        });
    }
    Ok(CSignature {
        name,
        params: params.into_iter().map(|pp| (pp.name, pp.ty)).collect(),
        ret,
    })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn at_eof(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn last_span(&self) -> Span {
        self.tokens.last().map(|t| t.span).unwrap_or_default()
    }

    fn peek_token(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, off: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + off).map(|t| &t.tok)
    }

    fn check(&self, tok: &Tok) -> bool {
        self.peek() == Some(tok)
    }

    fn advance(&mut self) -> ParseResult<Token> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or(ParseError::UnexpectedEof { span: self.last_span() })?;
        self.pos += 1;
        Ok(t)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.check(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> ParseResult<Token> {
        match self.peek_token() {
            Some(t) if t.tok == tok => self.advance(),
            Some(t) => Err(ParseError::UnexpectedToken {
                expected: expected.into(),
                found: t.tok.describe(),
                span: t.span,
            }),
            None => Err(ParseError::UnexpectedEof { span: self.last_span() }),
        }
    }

    fn ident(&mut self) -> ParseResult<(String, Span)> {
        match self.peek_token().cloned() {
            Some(Token { tok: Tok::Ident(name), span }) => {
                self.pos += 1;
                Ok((name, span))
            }
            Some(t) => Err(ParseError::UnexpectedToken {
                expected: "identifier".into(),
                found: t.tok.describe(),
                span: t.span,
            }),
            None => Err(ParseError::UnexpectedEof { span: self.last_span() }),
        }
    }

    /// `struct name { ... };` as opposed to `struct name *f(...)`.
    fn peek_is_struct_decl(&self) -> bool {
        matches!(self.peek_at(1), Some(Tok::Ident(_))) && matches!(self.peek_at(2), Some(Tok::LBrace))
    }

    fn struct_decl(&mut self) -> ParseResult<StructDecl> {
        let kw = self.expect(Tok::KwStruct, "`struct`")?;
        let (name, _) = self.ident()?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut fields = Vec::new();
        while !self.check(&Tok::RBrace) {
            let ty = self.base_and_stars()?;
            let (fname, _) = self.ident()?;
            self.expect(Tok::Semi, "`;`")?;
            fields.push((fname, ty));
        }
        self.expect(Tok::RBrace, "`}`")?;
        self.expect(Tok::Semi, "`;` after struct declaration")?;
        Ok(StructDecl { name, fields, span: kw.span })
    }

    /// A base type with any trailing `*`s: `int`, `char`, `double`,
    /// `struct sll *`, `sll *`, ...
    fn base_and_stars(&mut self) -> ParseResult<CType> {
        let t = self.advance()?;
        let mut ty = match t.tok {
            Tok::KwInt => CType::Int,
            Tok::KwChar => CType::Char,
            Tok::KwDouble => CType::Double,
            Tok::KwStruct => {
                let (name, _) = self.ident()?;
                CType::Struct(name)
            }
            Tok::Ident(name) => CType::Struct(name),
            other => {
                return Err(ParseError::UnexpectedToken {
                    expected: "type".into(),
                    found: other.describe(),
                    span: t.span,
                })
            }
        };
        while self.eat(&Tok::Star) {
            if matches!(ty, CType::Ptr(_)) {
                return Err(ParseError::Unsupported {
                    construct: "pointer to pointer".into(),
                    span: t.span,
                });
            }
            ty = CType::Ptr(Box::new(ty));
        }
        Ok(ty)
    }

    fn return_type(&mut self) -> ParseResult<Option<CType>> {
        if self.check(&Tok::KwVoid) {
            let t = self.advance()?;
            if self.check(&Tok::Star) {
                return Err(ParseError::Unsupported {
                    construct: "`void *`".into(),
                    span: t.span,
                });
            }
            return Ok(None);
        }
        Ok(Some(self.base_and_stars()?))
    }

    fn param_list(&mut self) -> ParseResult<Vec<Param>> {
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(params);
        }
        if self.check(&Tok::KwVoid) && self.peek_at(1) == Some(&Tok::RParen) {
            self.advance()?;
            self.advance()?;
            return Ok(params);
        }
        loop {
            let ty = self.base_and_stars()?;
            let (name, span) = self.ident()?;
            let ty = if self.eat(&Tok::LBracket) {
                self.expect(Tok::RBracket, "`]`")?;
                if !ty.is_scalar() {
                    return Err(ParseError::Unsupported {
                        construct: "array of non-scalar elements".into(),
                        span,
                    });
                }
                CType::Array(Box::new(ty))
            } else {
                ty
            };
            params.push(Param { name, ty, span });
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RParen, "`)` or `,`")?;
            break;
        }
        Ok(params)
    }

    fn fun_def(&mut self) -> ParseResult<FunDef> {
        let start = self.peek_token().map(|t| t.span).unwrap_or_default();
        let ret = self.return_type()?;
        let (name, _) = self.ident()?;
        let params = self.param_list()?;
        let body = self.block()?;
        Ok(FunDef { name, params, ret, body, span: start })
    }

    fn block(&mut self) -> ParseResult<Vec<Stmt>> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut stmts = Vec::new();
        while !self.check(&Tok::RBrace) {
            stmts.push(self.stmt()?);
        }
        self.expect(Tok::RBrace, "`}`")?;
        Ok(stmts)
    }

    fn block_or_stmt(&mut self) -> ParseResult<Vec<Stmt>> {
        if self.check(&Tok::LBrace) {
            self.block()
        } else {
            Ok(vec![self.stmt()?])
        }
    }

    fn stmt(&mut self) -> ParseResult<Stmt> {
        let t = self
            .peek_token()
            .cloned()
            .ok_or(ParseError::UnexpectedEof { span: self.last_span() })?;
        match &t.tok {
            Tok::KwIf => {
                self.advance()?;
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                let then_branch = self.block_or_stmt()?;
                let else_branch = if self.eat(&Tok::KwElse) {
                    if self.check(&Tok::KwIf) {
                        vec![self.stmt()?]
                    } else {
                        self.block_or_stmt()?
                    }
                } else {
                    Vec::new()
                };
                Ok(Stmt::If { cond, then_branch, else_branch, span: t.span })
            }
            Tok::KwReturn => {
                self.advance()?;
                let value = if self.check(&Tok::Semi) { None } else { Some(self.expr()?) };
                self.expect(Tok::Semi, "`;`")?;
                Ok(Stmt::Return { value, span: t.span })
            }
            Tok::KwWhile => {
                self.advance()?;
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                let body = self.block_or_stmt()?;
                Ok(Stmt::While { cond, body, span: t.span })
            }
            Tok::KwDo => {
                self.advance()?;
                let body = self.block_or_stmt()?;
                self.expect(Tok::KwWhile, "`while`")?;
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(Stmt::DoWhile { body, cond, span: t.span })
            }
            Tok::KwFor => {
                self.advance()?;
                self.expect(Tok::LParen, "`(`")?;
                let init = if self.check(&Tok::Semi) {
                    None
                } else {
                    Some(Box::new(self.simple_stmt(t.span)?))
                };
                self.expect(Tok::Semi, "`;`")?;
                let cond = if self.check(&Tok::Semi) { None } else { Some(self.expr()?) };
                self.expect(Tok::Semi, "`;`")?;
                let step = if self.check(&Tok::RParen) {
                    None
                } else {
                    Some(Box::new(self.simple_stmt(t.span)?))
                };
                self.expect(Tok::RParen, "`)`")?;
                let body = self.block_or_stmt()?;
                Ok(Stmt::For { init, cond, step, body, span: t.span })
            }
            Tok::KwInt | Tok::KwChar | Tok::KwDouble | Tok::KwStruct => {
                let s = self.decl_stmt()?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(s)
            }
            Tok::Ident(_) if self.looks_like_decl() => {
                let s = self.decl_stmt()?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(s)
            }
            Tok::Ident(name) if self.peek_at(1) == Some(&Tok::LParen) => {
                let name = name.clone();
                self.advance()?;
                self.advance()?;
                let args = self.call_args()?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(Stmt::Call { name, args, span: t.span })
            }
            Tok::Ident(_) | Tok::Star => {
                let s = self.assign_stmt(t.span)?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(s)
            }
            other => Err(ParseError::UnexpectedToken {
                expected: "statement".into(),
                found: other.describe(),
                span: t.span,
            }),
        }
    }

    /// `sll *q = ...` — a bare struct name only opens a declaration when a
    /// `*` follows (struct values are not part of the dialect).
    fn looks_like_decl(&self) -> bool {
        matches!(self.peek_at(1), Some(Tok::Star)) && matches!(self.peek_at(2), Some(Tok::Ident(_)))
    }

    fn decl_stmt(&mut self) -> ParseResult<Stmt> {
        let start = self.peek_token().map(|t| t.span).unwrap_or_default();
        let ty = self.base_and_stars()?;
        let (name, span) = self.ident()?;
        if self.check(&Tok::LBracket) {
            return Err(ParseError::Unsupported {
                construct: "local array declaration".into(),
                span,
            });
        }
        let init = if self.eat(&Tok::Assign) { Some(self.expr()?) } else { None };
        Ok(Stmt::Decl { name, ty, init, span: start })
    }

    fn assign_stmt(&mut self, span: Span) -> ParseResult<Stmt> {
        let target = self.unary()?;
        let lhs = classify_lvalue(target)?;
        self.expect(Tok::Assign, "`=`")?;
        let rhs = self.expr()?;
        Ok(Stmt::Assign { lhs, rhs, span })
    }

    /// Statement without its trailing `;`, as allowed in `for` headers.
    fn simple_stmt(&mut self, span: Span) -> ParseResult<Stmt> {
        match self.peek() {
            Some(Tok::KwInt | Tok::KwChar | Tok::KwDouble | Tok::KwStruct) => self.decl_stmt(),
            Some(Tok::Ident(_)) if self.looks_like_decl() => self.decl_stmt(),
            Some(Tok::Ident(name)) if self.peek_at(1) == Some(&Tok::LParen) => {
                let name = name.clone();
                self.advance()?;
                self.advance()?;
                let args = self.call_args()?;
                Ok(Stmt::Call { name, args, span })
            }
            _ => self.assign_stmt(span),
        }
    }

    fn call_args(&mut self) -> ParseResult<Vec<Expr>> {
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RParen, "`)` or `,`")?;
            break;
        }
        Ok(args)
    }

    fn expr(&mut self) -> ParseResult<Expr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> ParseResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.check(&Tok::OrOr) {
            let t = self.advance()?;
            let rhs = self.and_expr()?;
            lhs = Expr::new(ExprKind::Binop(BinOp::Or, Box::new(lhs), Box::new(rhs)), t.span);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> ParseResult<Expr> {
        let mut lhs = self.equality()?;
        while self.check(&Tok::AndAnd) {
            let t = self.advance()?;
            let rhs = self.equality()?;
            lhs = Expr::new(ExprKind::Binop(BinOp::And, Box::new(lhs), Box::new(rhs)), t.span);
        }
        Ok(lhs)
    }

    fn equality(&mut self) -> ParseResult<Expr> {
        let mut lhs = self.relational()?;
        loop {
            let op = match self.peek() {
                Some(Tok::EqEq) => BinOp::Eq,
                Some(Tok::BangEq) => BinOp::Ne,
                _ => break,
            };
            let t = self.advance()?;
            let rhs = self.relational()?;
            lhs = Expr::new(ExprKind::Binop(op, Box::new(lhs), Box::new(rhs)), t.span);
        }
        Ok(lhs)
    }

    fn relational(&mut self) -> ParseResult<Expr> {
        let mut lhs = self.additive()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Lt) => BinOp::Lt,
                Some(Tok::Le) => BinOp::Le,
                Some(Tok::Gt) => BinOp::Gt,
                Some(Tok::Ge) => BinOp::Ge,
                _ => break,
            };
            let t = self.advance()?;
            let rhs = self.additive()?;
            lhs = Expr::new(ExprKind::Binop(op, Box::new(lhs), Box::new(rhs)), t.span);
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> ParseResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            let t = self.advance()?;
            let rhs = self.multiplicative()?;
            lhs = Expr::new(ExprKind::Binop(op, Box::new(lhs), Box::new(rhs)), t.span);
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> ParseResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                Some(Tok::Percent) => BinOp::Mod,
                _ => break,
            };
            let t = self.advance()?;
            let rhs = self.unary()?;
            lhs = Expr::new(ExprKind::Binop(op, Box::new(lhs), Box::new(rhs)), t.span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> ParseResult<Expr> {
        match self.peek() {
            Some(Tok::Minus) => {
                let t = self.advance()?;
                let operand = self.unary()?;
                // Fold a negated literal so `-5` round-trips as one token.
                if let ExprKind::IntLit(n) = operand.kind {
                    return Ok(Expr::new(ExprKind::IntLit(-n), t.span));
                }
                if let ExprKind::DoubleLit(d) = operand.kind {
                    return Ok(Expr::new(ExprKind::DoubleLit(-d), t.span));
                }
                Ok(Expr::new(ExprKind::Unop(UnOp::Neg, Box::new(operand)), t.span))
            }
            Some(Tok::Bang) => {
                let t = self.advance()?;
                let operand = self.unary()?;
                Ok(Expr::new(ExprKind::Unop(UnOp::Not, Box::new(operand)), t.span))
            }
            Some(Tok::Star) => {
                let t = self.advance()?;
                let operand = self.unary()?;
                Ok(Expr::new(ExprKind::Deref(Box::new(operand)), t.span))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> ParseResult<Expr> {
        let mut e = self.primary()?;
        loop {
            match self.peek() {
                Some(Tok::Arrow) => {
                    let t = self.advance()?;
                    let (field, _) = self.ident()?;
                    e = Expr::new(ExprKind::Field(Box::new(e), field), t.span);
                }
                Some(Tok::LBracket) => {
                    let t = self.advance()?;
                    let idx = self.expr()?;
                    self.expect(Tok::RBracket, "`]`")?;
                    e = Expr::new(ExprKind::Index(Box::new(e), Box::new(idx)), t.span);
                }
                _ => break,
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> ParseResult<Expr> {
        let t = self.advance()?;
        match t.tok {
            Tok::Int(n) => Ok(Expr::new(ExprKind::IntLit(n), t.span)),
            Tok::Char(c) => Ok(Expr::new(ExprKind::CharLit(c), t.span)),
            Tok::Double(d) => Ok(Expr::new(ExprKind::DoubleLit(d), t.span)),
            Tok::KwNull => Ok(Expr::new(ExprKind::Null, t.span)),
            Tok::Ident(name) => {
                if self.eat(&Tok::LParen) {
                    let args = self.call_args()?;
                    Ok(Expr::new(ExprKind::Call(name, args), t.span))
                } else {
                    Ok(Expr::new(ExprKind::Var(name), t.span))
                }
            }
            Tok::LParen => {
                // A type name directly after `(` can only be a cast.
                if matches!(
                    self.peek(),
                    Some(Tok::KwInt | Tok::KwChar | Tok::KwDouble | Tok::KwStruct | Tok::KwVoid)
                ) {
                    return Err(ParseError::Unsupported {
                        construct: "type cast".into(),
                        span: t.span,
                    });
                }
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            other => Err(ParseError::UnexpectedToken {
                expected: "expression".into(),
                found: other.describe(),
                span: t.span,
            }),
        }
    }
}

fn classify_lvalue(e: Expr) -> ParseResult<LValue> {
    match e.kind {
        ExprKind::Var(name) => Ok(LValue::Var(name, e.span)),
        ExprKind::Deref(inner) => Ok(LValue::Deref(*inner)),
        ExprKind::Field(base, field) => Ok(LValue::Field(*base, field)),
        ExprKind::Index(base, idx) => Ok(LValue::Index(*base, *idx)),
        _ => Err(ParseError::InvalidSyntax {
            message: "assignment target must be a variable, `*p`, `p->f`, or `a[i]`".into(),
            span: e.span,
        }),
    }
}
