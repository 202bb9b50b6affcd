//! Parser for the `.spec` DSL.
//!
//! One block per function:
//!
//! ```text
//! spec append
//! sig sll *append(sll *x, sll *y)
//! with h1: addr, l1: list, h2: addr, l2: list
//! params h1, h2
//! pre  { sep: listrep(l1, h1) * listrep(l2, h2) }
//! post { ex q: addr; return q; sep: listrep(l1 ++ l2, q) }
//! ```
//!
//! Sections inside `pre`/`post` braces are semicolon-separated items:
//! `ex <name>: <sort>, ...`, `pure: <props>`, `sep: <atoms>`, and (post only)
//! `return <expr>`. The full grammar lives in docs/spec-dsl.md.

use super::{
    Assertion, BinPred, CmpOp, FunSpec, PointsToValue, PureProp, Share, Sort, SpatialAtom,
    SpecEnv, SpecExpr, UnaryPred,
};
use crate::c::parse_signature;
use crate::span::Span;
use crate::spec::ArithOp;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{span}: {message}")]
pub struct SpecParseError {
    pub message: String,
    pub span: Span,
}

impl SpecParseError {
    fn new(message: impl Into<String>, span: Span) -> Self {
        SpecParseError { message: message.into(), span }
    }

    pub fn span(&self) -> Span {
        self.span
    }
}

type Result<T> = std::result::Result<T, SpecParseError>;

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Double(f64),
    CharLit(u8),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    ColonColon,
    PlusPlus,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    Ne,
    Le,
    Ge,
    Lt,
    Gt,
    AndAnd,
    OrOr,
    Bang,
    MapsTo,
    DotDot,
    /// Raw line kept verbatim for `sig` (handed to the C parser).
    SigLine(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let mut toks = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i];
        let span = Span { line, col };
        let mut push = |t: Tok, n: usize| -> usize {
            toks.push(Token { tok: t, span });
            n
        };
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
                continue;
            }
            '#' => {
                while i < bytes.len() && bytes[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '/' if bytes.get(i + 1) == Some(&'/') => {
                while i < bytes.len() && bytes[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '/' if bytes.get(i + 1) == Some(&'\\') => {
                i += push(Tok::AndAnd, 2);
                col += 2;
                continue;
            }
            '\\' if bytes.get(i + 1) == Some(&'/') => {
                i += push(Tok::OrOr, 2);
                col += 2;
                continue;
            }
            '(' => {
                i += push(Tok::LParen, 1);
                col += 1;
                continue;
            }
            ')' => {
                i += push(Tok::RParen, 1);
                col += 1;
                continue;
            }
            '[' => {
                i += push(Tok::LBracket, 1);
                col += 1;
                continue;
            }
            ']' => {
                i += push(Tok::RBracket, 1);
                col += 1;
                continue;
            }
            '{' => {
                i += push(Tok::LBrace, 1);
                col += 1;
                continue;
            }
            '}' => {
                i += push(Tok::RBrace, 1);
                col += 1;
                continue;
            }
            ',' => {
                i += push(Tok::Comma, 1);
                col += 1;
                continue;
            }
            ';' => {
                i += push(Tok::Semi, 1);
                col += 1;
                continue;
            }
            ':' if bytes.get(i + 1) == Some(&':') => {
                i += push(Tok::ColonColon, 2);
                col += 2;
                continue;
            }
            ':' => {
                i += push(Tok::Colon, 1);
                col += 1;
                continue;
            }
            '+' if bytes.get(i + 1) == Some(&'+') => {
                i += push(Tok::PlusPlus, 2);
                col += 2;
                continue;
            }
            '+' => {
                i += push(Tok::Plus, 1);
                col += 1;
                continue;
            }
            '-' => {
                i += push(Tok::Minus, 1);
                col += 1;
                continue;
            }
            '*' => {
                i += push(Tok::Star, 1);
                col += 1;
                continue;
            }
            '/' => {
                i += push(Tok::Slash, 1);
                col += 1;
                continue;
            }
            '%' => {
                i += push(Tok::Percent, 1);
                col += 1;
                continue;
            }
            '=' if bytes.get(i + 1) == Some(&'=') => {
                i += push(Tok::EqEq, 2);
                col += 2;
                continue;
            }
            '!' if bytes.get(i + 1) == Some(&'=') => {
                i += push(Tok::Ne, 2);
                col += 2;
                continue;
            }
            '!' => {
                i += push(Tok::Bang, 1);
                col += 1;
                continue;
            }
            '<' if bytes.get(i + 1) == Some(&'=') => {
                i += push(Tok::Le, 2);
                col += 2;
                continue;
            }
            '>' if bytes.get(i + 1) == Some(&'=') => {
                i += push(Tok::Ge, 2);
                col += 2;
                continue;
            }
            '<' => {
                i += push(Tok::Lt, 1);
                col += 1;
                continue;
            }
            '>' => {
                i += push(Tok::Gt, 1);
                col += 1;
                continue;
            }
            '|' if bytes.get(i + 1) == Some(&'-') && bytes.get(i + 2) == Some(&'>') => {
                i += push(Tok::MapsTo, 3);
                col += 3;
                continue;
            }
            '.' if bytes.get(i + 1) == Some(&'.') => {
                i += push(Tok::DotDot, 2);
                col += 2;
                continue;
            }
            '\'' => {
                // Character literal, as in the C dialect.
                let (ch, consumed) = match bytes.get(i + 1) {
                    Some('\\') => {
                        let esc = bytes.get(i + 2).copied().ok_or_else(|| {
                            SpecParseError::new("unterminated character literal", span)
                        })?;
                        let v = match esc {
                            'n' => b'\n',
                            't' => b'\t',
                            '0' => 0u8,
                            '\\' => b'\\',
                            '\'' => b'\'',
                            _ => {
                                return Err(SpecParseError::new(
                                    format!("unknown escape '\\{}'", esc),
                                    span,
                                ))
                            }
                        };
                        (v, 4)
                    }
                    Some(&c2) if c2 != '\'' => (c2 as u8, 3),
                    _ => return Err(SpecParseError::new("empty character literal", span)),
                };
                if bytes.get(i + consumed - 1) != Some(&'\'') {
                    return Err(SpecParseError::new("unterminated character literal", span));
                }
                i += push(Tok::CharLit(ch), consumed);
                col += consumed as u32;
                continue;
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == '.' && bytes.get(i + 1) != Some(&'.') {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    let text: String = bytes[start..i].iter().collect();
                    let v: f64 = text.parse().map_err(|_| {
                        SpecParseError::new(format!("bad double literal `{}`", text), span)
                    })?;
                    toks.push(Token { tok: Tok::Double(v), span });
                } else {
                    let text: String = bytes[start..i].iter().collect();
                    let v: i64 = text.parse().map_err(|_| {
                        SpecParseError::new(format!("integer literal out of range `{}`", text), span)
                    })?;
                    toks.push(Token { tok: Tok::Int(v), span });
                }
                col += (i - start) as u32;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                let word: String = bytes[start..i].iter().collect();
                col += (i - start) as u32;
                if word == "sig" {
                    // The rest of the line is a C prototype; keep it raw.
                    let line_start = i;
                    while i < bytes.len() && bytes[i] != '\n' {
                        i += 1;
                    }
                    let raw: String = bytes[line_start..i].iter().collect();
                    toks.push(Token { tok: Tok::SigLine(raw.trim().to_string()), span });
                    continue;
                }
                toks.push(Token { tok: Tok::Ident(word), span });
                continue;
            }
            other => {
                return Err(SpecParseError::new(
                    format!("unexpected character `{}`", other),
                    span,
                ))
            }
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct P {
    toks: Vec<Token>,
    pos: usize,
}

impl P {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| t.span)
            .unwrap_or_default()
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.err(format!("expected {}", what)))
        }
    }

    fn err(&self, message: impl Into<String>) -> SpecParseError {
        SpecParseError::new(message, self.span())
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if let Some(Tok::Ident(w)) = self.peek() {
            if w == kw {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == kw)
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.next() {
            Some(Tok::Ident(w)) => Ok(w),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err(format!("expected {}", what)))
            }
        }
    }

    // -- expressions --------------------------------------------------------

    /// Full expression: cons / append over arithmetic.
    fn expr(&mut self) -> Result<SpecExpr> {
        self.expr_prec(true)
    }

    /// `allow_mul = false` is used for points-to cell values, where a bare
    /// `*` must remain the separating conjunction; multiplication there
    /// needs parentheses.
    fn expr_prec(&mut self, allow_mul: bool) -> Result<SpecExpr> {
        let head = self.append_level(allow_mul)?;
        if self.eat(&Tok::ColonColon) {
            let tail = self.expr_prec(allow_mul)?;
            return Ok(SpecExpr::Cons(Box::new(head), Box::new(tail)));
        }
        Ok(head)
    }

    fn append_level(&mut self, allow_mul: bool) -> Result<SpecExpr> {
        let mut e = self.additive(allow_mul)?;
        while self.eat(&Tok::PlusPlus) {
            let rhs = self.additive(allow_mul)?;
            e = SpecExpr::Append(Box::new(e), Box::new(rhs));
        }
        Ok(e)
    }

    fn additive(&mut self, allow_mul: bool) -> Result<SpecExpr> {
        let mut e = self.multiplicative(allow_mul)?;
        loop {
            let op = if self.eat(&Tok::Plus) {
                ArithOp::Add
            } else if self.eat(&Tok::Minus) {
                ArithOp::Sub
            } else {
                break;
            };
            let rhs = self.multiplicative(allow_mul)?;
            e = SpecExpr::Arith(op, Box::new(e), Box::new(rhs));
        }
        Ok(e)
    }

    fn multiplicative(&mut self, allow_mul: bool) -> Result<SpecExpr> {
        let mut e = self.unary()?;
        loop {
            let op = if allow_mul && self.peek() == Some(&Tok::Star) {
                self.pos += 1;
                ArithOp::Mul
            } else if self.eat(&Tok::Slash) {
                ArithOp::Div
            } else if self.eat(&Tok::Percent) {
                ArithOp::Mod
            } else {
                break;
            };
            let rhs = self.unary()?;
            e = SpecExpr::Arith(op, Box::new(e), Box::new(rhs));
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<SpecExpr> {
        if self.eat(&Tok::Minus) {
            let inner = self.unary()?;
            return Ok(match inner {
                SpecExpr::Int(n) => SpecExpr::Int(-n),
                SpecExpr::Double(d) => SpecExpr::Double(-d),
                other => SpecExpr::Arith(ArithOp::Sub, Box::new(SpecExpr::Int(0)), Box::new(other)),
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<SpecExpr> {
        let mut e = self.primary()?;
        while self.peek() == Some(&Tok::LBracket) {
            self.pos += 1;
            let i = self.expr()?;
            if self.eat(&Tok::DotDot) {
                let j = self.expr()?;
                self.expect(&Tok::RBracket, "`]`")?;
                e = SpecExpr::Slice(Box::new(e), Box::new(i), Box::new(j));
            } else {
                self.expect(&Tok::RBracket, "`]`")?;
                e = SpecExpr::Index(Box::new(e), Box::new(i));
            }
        }
        Ok(e)
    }

    fn unary_pred(&mut self) -> Result<UnaryPred> {
        let name = self.ident("a predicate name")?;
        match name.as_str() {
            "even" => Ok(UnaryPred::Even),
            "odd" => Ok(UnaryPred::Odd),
            "lt" | "le" | "gt" | "ge" | "eq" | "ne" => {
                let op = match name.as_str() {
                    "lt" => CmpOp::Lt,
                    "le" => CmpOp::Le,
                    "gt" => CmpOp::Gt,
                    "ge" => CmpOp::Ge,
                    "eq" => CmpOp::Eq,
                    _ => CmpOp::Ne,
                };
                let bound = self.expr()?;
                Ok(UnaryPred::CmpWith(op, Box::new(bound)))
            }
            other => Err(self.err(format!("unknown unary predicate `{}`", other))),
        }
    }

    fn primary(&mut self) -> Result<SpecExpr> {
        let span = self.span();
        match self.next() {
            Some(Tok::Int(n)) => Ok(SpecExpr::Int(n)),
            Some(Tok::Double(d)) => Ok(SpecExpr::Double(d)),
            Some(Tok::CharLit(c)) => Ok(SpecExpr::Int(c as i64)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::LBracket) => {
                if self.eat(&Tok::RBracket) {
                    return Ok(SpecExpr::Nil);
                }
                let mut items = vec![self.expr()?];
                while self.eat(&Tok::Comma) {
                    items.push(self.expr()?);
                }
                self.expect(&Tok::RBracket, "`]`")?;
                Ok(SpecExpr::list_lit(items))
            }
            Some(Tok::Ident(word)) => match word.as_str() {
                "null" => Ok(SpecExpr::Null),
                "nil" => Ok(SpecExpr::Nil),
                "leaf" => Ok(SpecExpr::Leaf),
                "true" => Ok(SpecExpr::BoolL(true)),
                "false" => Ok(SpecExpr::BoolL(false)),
                "full" => Ok(SpecExpr::ShareL(Share::Full)),
                "readable" => Ok(SpecExpr::ShareL(Share::Readable)),
                "if" => {
                    let c = self.prop()?;
                    if !self.keyword("then") {
                        return Err(self.err("expected `then`"));
                    }
                    let a = self.expr()?;
                    if !self.keyword("else") {
                        return Err(self.err("expected `else`"));
                    }
                    let b = self.expr()?;
                    Ok(SpecExpr::Ite(Box::new(c), Box::new(a), Box::new(b)))
                }
                "len" => self.call1(SpecExpr::Len),
                "head" => self.call1(SpecExpr::Head),
                "tail" => self.call1(SpecExpr::Tail),
                "tmin" => self.call1(SpecExpr::TMin),
                "skew" => self.call1(SpecExpr::Skew),
                "store" => {
                    let (a, b, c) = self.call3()?;
                    Ok(SpecExpr::Store(Box::new(a), Box::new(b), Box::new(c)))
                }
                "node" => {
                    let (a, b, c) = self.call3()?;
                    Ok(SpecExpr::TNode(Box::new(a), Box::new(b), Box::new(c)))
                }
                "map_add" => {
                    let (a, b) = self.call2()?;
                    Ok(SpecExpr::MapAdd(Box::new(a), Box::new(b)))
                }
                "tlookup" => {
                    let (a, b) = self.call2()?;
                    Ok(SpecExpr::TLookup(Box::new(a), Box::new(b)))
                }
                "tinsert" => {
                    let (a, b) = self.call2()?;
                    Ok(SpecExpr::TInsert(Box::new(a), Box::new(b)))
                }
                "tfoldins" => {
                    let (a, b) = self.call2()?;
                    Ok(SpecExpr::TFoldIns(Box::new(a), Box::new(b)))
                }
                "filter" => {
                    self.expect(&Tok::LParen, "`(`")?;
                    let p = self.unary_pred()?;
                    self.expect(&Tok::Comma, "`,`")?;
                    let l = self.expr()?;
                    self.expect(&Tok::RParen, "`)`")?;
                    Ok(SpecExpr::Filter(p, Box::new(l)))
                }
                _ => Ok(SpecExpr::Var(word)),
            },
            _ => Err(SpecParseError::new("expected an expression", span)),
        }
    }

    fn call1(&mut self, f: impl Fn(Box<SpecExpr>) -> SpecExpr) -> Result<SpecExpr> {
        self.expect(&Tok::LParen, "`(`")?;
        let a = self.expr()?;
        self.expect(&Tok::RParen, "`)`")?;
        Ok(f(Box::new(a)))
    }

    fn call2(&mut self) -> Result<(SpecExpr, SpecExpr)> {
        self.expect(&Tok::LParen, "`(`")?;
        let a = self.expr()?;
        self.expect(&Tok::Comma, "`,`")?;
        let b = self.expr()?;
        self.expect(&Tok::RParen, "`)`")?;
        Ok((a, b))
    }

    fn call3(&mut self) -> Result<(SpecExpr, SpecExpr, SpecExpr)> {
        self.expect(&Tok::LParen, "`(`")?;
        let a = self.expr()?;
        self.expect(&Tok::Comma, "`,`")?;
        let b = self.expr()?;
        self.expect(&Tok::Comma, "`,`")?;
        let c = self.expr()?;
        self.expect(&Tok::RParen, "`)`")?;
        Ok((a, b, c))
    }

    // -- propositions -------------------------------------------------------

    fn prop(&mut self) -> Result<PureProp> {
        let mut parts = vec![self.prop_and()?];
        while self.eat(&Tok::OrOr) {
            parts.push(self.prop_and()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            PureProp::Or(parts)
        })
    }

    fn prop_and(&mut self) -> Result<PureProp> {
        let mut parts = vec![self.prop_not()?];
        while self.eat(&Tok::AndAnd) {
            parts.push(self.prop_not()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            PureProp::And(parts)
        })
    }

    fn prop_not(&mut self) -> Result<PureProp> {
        if self.eat(&Tok::Bang) {
            let p = self.prop_not()?;
            return Ok(PureProp::Not(Box::new(p)));
        }
        self.prop_atom()
    }

    fn prop_atom(&mut self) -> Result<PureProp> {
        // `(` may open a parenthesized proposition or the left operand of a
        // comparison; try the proposition reading first and backtrack.
        if self.peek() == Some(&Tok::LParen) {
            let save = self.pos;
            self.pos += 1;
            if let Ok(p) = self.prop() {
                if self.eat(&Tok::RParen) && !self.peek_is_cmp() {
                    return Ok(p);
                }
            }
            self.pos = save;
        }
        if self.peek_keyword("true") {
            self.pos += 1;
            return Ok(PureProp::TrueP);
        }
        if self.peek_keyword("false") {
            self.pos += 1;
            return Ok(PureProp::FalseP);
        }
        if self.peek_keyword("if") {
            // Could be a propositional conditional or an expression-level
            // conditional used inside a comparison; try the prop reading
            // first and fall back.
            let save = self.pos;
            self.pos += 1;
            let attempt = (|| -> Result<PureProp> {
                let c = self.prop()?;
                if !self.keyword("then") {
                    return Err(self.err("expected `then`"));
                }
                let p = self.prop()?;
                if !self.keyword("else") {
                    return Err(self.err("expected `else`"));
                }
                let q = self.prop()?;
                Ok(PureProp::Ite(Box::new(c), Box::new(p), Box::new(q)))
            })();
            match attempt {
                Ok(p) if !self.peek_is_cmp() => return Ok(p),
                _ => self.pos = save,
            }
        }
        if self.peek_keyword("in") {
            self.pos += 1;
            let (x, l) = self.call2()?;
            return Ok(PureProp::In(x, l));
        }
        if self.peek_keyword("forall") {
            self.pos += 1;
            self.expect(&Tok::LParen, "`(`")?;
            let p = self.unary_pred()?;
            self.expect(&Tok::Comma, "`,`")?;
            let l = self.expr()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(PureProp::Forall(p, l));
        }
        if self.peek_keyword("forall2") {
            self.pos += 1;
            self.expect(&Tok::LParen, "`(`")?;
            let name = self.ident("a binary predicate")?;
            let p = match name.as_str() {
                "le" => BinPred::Le,
                "lt" => BinPred::Lt,
                "eq" => BinPred::Eq,
                other => return Err(self.err(format!("unknown binary predicate `{}`", other))),
            };
            self.expect(&Tok::Comma, "`,`")?;
            let a = self.expr()?;
            self.expect(&Tok::Comma, "`,`")?;
            let b = self.expr()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(PureProp::Forall2(p, a, b));
        }
        if self.peek_keyword("sorted") {
            self.pos += 1;
            self.expect(&Tok::LParen, "`(`")?;
            let l = self.expr()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(PureProp::Sorted(l));
        }
        if self.peek_keyword("forallidx") {
            self.pos += 1;
            let idx = self.ident("an index name")?;
            if !self.keyword("in") {
                return Err(self.err("expected `in`"));
            }
            self.expect(&Tok::LBracket, "`[`")?;
            let lo = self.expr()?;
            self.expect(&Tok::Comma, "`,`")?;
            let hi = self.expr()?;
            self.expect(&Tok::RParen, "`)` closing the half-open range")?;
            self.expect(&Tok::Colon, "`:`")?;
            let body = self.prop()?;
            return Ok(PureProp::ForallIdx { idx, lo, hi, body: Box::new(body) });
        }
        // Comparison.
        let a = self.expr()?;
        let op = match self.next() {
            Some(Tok::EqEq) => CmpOp::Eq,
            Some(Tok::Ne) => CmpOp::Ne,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::Ge) => CmpOp::Ge,
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return Err(self.err("expected a comparison operator"));
            }
        };
        let b = self.expr()?;
        Ok(PureProp::Cmp(op, a, b))
    }

    fn peek_is_cmp(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::EqEq) | Some(Tok::Ne) | Some(Tok::Lt) | Some(Tok::Le) | Some(Tok::Gt)
                | Some(Tok::Ge)
        )
    }

    // -- spatial atoms ------------------------------------------------------

    fn atoms(&mut self) -> Result<Vec<SpatialAtom>> {
        if self.keyword("emp") {
            return Ok(Vec::new());
        }
        let mut out = vec![self.atom()?];
        while self.eat(&Tok::Star) {
            out.push(self.atom()?);
        }
        Ok(out)
    }

    fn atom(&mut self) -> Result<SpatialAtom> {
        if self.peek_keyword("listrep") {
            self.pos += 1;
            let (elems, addr) = self.call2()?;
            return Ok(SpatialAtom::ListRep { elems, addr });
        }
        if self.peek_keyword("treerep") {
            self.pos += 1;
            let (tree, addr) = self.call2()?;
            return Ok(SpatialAtom::TreeRep { tree, addr });
        }
        if self.peek_keyword("array") {
            self.pos += 1;
            let (elems, addr, len) = self.call3()?;
            return Ok(SpatialAtom::ArraySeg { elems, addr, len });
        }
        if self.peek_keyword("ptsto") {
            self.pos += 1;
            self.expect(&Tok::LParen, "`(`")?;
            let addr = self.expr()?;
            self.expect(&Tok::Comma, "`,`")?;
            let share = self.expr()?;
            self.expect(&Tok::Comma, "`,`")?;
            let value = self.pts_value()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(SpatialAtom::PtsTo { addr, share, value });
        }
        if self.peek_keyword("if") {
            self.pos += 1;
            let cond = self.prop()?;
            if !self.keyword("then") {
                return Err(self.err("expected `then`"));
            }
            let then_atoms = self.atoms_until_kw("else")?;
            if !self.keyword("else") {
                return Err(self.err("expected `else`"));
            }
            let else_atoms = self.atoms()?;
            return Ok(SpatialAtom::Cond { cond, then_atoms, else_atoms });
        }
        // Points-to: addr |-> value.
        let addr = self.expr_prec(false)?;
        self.expect(&Tok::MapsTo, "`|->`")?;
        let value = self.pts_value()?;
        Ok(SpatialAtom::PtsTo {
            addr,
            share: SpecExpr::ShareL(Share::Full),
            value,
        })
    }

    /// Parse `atom * atom * ...` stopping before the keyword `kw`.
    fn atoms_until_kw(&mut self, kw: &str) -> Result<Vec<SpatialAtom>> {
        if self.keyword("emp") {
            return Ok(Vec::new());
        }
        let mut out = vec![self.atom()?];
        while self.peek() == Some(&Tok::Star) && !self.peek_keyword(kw) {
            self.pos += 1;
            out.push(self.atom()?);
        }
        Ok(out)
    }

    fn pts_value(&mut self) -> Result<PointsToValue> {
        if self.peek_keyword("node") {
            // Two arguments make a list node, three a tree node.
            self.pos += 1;
            self.expect(&Tok::LParen, "`(`")?;
            let first = self.expr()?;
            self.expect(&Tok::Comma, "`,`")?;
            let second = self.expr()?;
            if self.eat(&Tok::Comma) {
                let third = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                return Ok(PointsToValue::TreeNode { key: first, left: second, right: third });
            }
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(PointsToValue::ListNode { head: first, next: second });
        }
        if self.peek_keyword("tnode") {
            self.pos += 1;
            let (key, left, right) = self.call3()?;
            return Ok(PointsToValue::TreeNode { key, left, right });
        }
        let v = self.expr_prec(false)?;
        Ok(PointsToValue::Scalar(v))
    }

    // -- assertions and blocks ----------------------------------------------

    fn assertion(&mut self, allow_return: bool) -> Result<(Assertion, Option<SpecExpr>)> {
        self.expect(&Tok::LBrace, "`{`")?;
        let mut asrt = Assertion::default();
        let mut ret = None;
        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            if self.keyword("ex") {
                loop {
                    let name = self.ident("a binder name")?;
                    self.expect(&Tok::Colon, "`:`")?;
                    let span = self.span();
                    let sort_name = self.ident("a sort")?;
                    let sort = Sort::from_name(&sort_name).ok_or_else(|| {
                        SpecParseError::new(format!("unknown sort `{}`", sort_name), span)
                    })?;
                    asrt.exists.push((name, sort));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            } else if self.keyword("return") {
                if !allow_return {
                    return Err(self.err("`return` is only allowed in post blocks"));
                }
                if ret.is_some() {
                    return Err(self.err("duplicate `return` clause"));
                }
                ret = Some(self.expr()?);
            } else if self.keyword("pure") {
                self.expect(&Tok::Colon, "`:`")?;
                loop {
                    asrt.pure.push(self.prop()?);
                    if !self.eat(&Tok::AndAnd) {
                        break;
                    }
                }
            } else if self.keyword("sep") {
                self.expect(&Tok::Colon, "`:`")?;
                asrt.spatial.extend(self.atoms()?);
            } else {
                return Err(self.err("expected `ex`, `pure:`, `sep:`, `return`, or `}`"));
            }
            if !self.eat(&Tok::Semi) {
                self.expect(&Tok::RBrace, "`;` or `}`")?;
                break;
            }
        }
        Ok((asrt, ret))
    }

    fn spec_block(&mut self) -> Result<FunSpec> {
        if !self.keyword("spec") {
            return Err(self.err("expected `spec <name>`"));
        }
        let name = self.ident("a function name")?;
        let sig_span = self.span();
        let sig = match self.next() {
            Some(Tok::SigLine(raw)) => parse_signature(&raw).map_err(|e| {
                SpecParseError::new(format!("bad signature: {}", e), sig_span)
            })?,
            _ => {
                return Err(SpecParseError::new(
                    "expected `sig <C prototype>` after the spec name",
                    sig_span,
                ))
            }
        };
        if sig.name != name {
            return Err(SpecParseError::new(
                format!("signature names `{}` but the spec is for `{}`", sig.name, name),
                sig_span,
            ));
        }

        let mut with_binders = Vec::new();
        if self.keyword("with") {
            loop {
                let bname = self.ident("a binder name")?;
                self.expect(&Tok::Colon, "`:`")?;
                let span = self.span();
                let sort_name = self.ident("a sort")?;
                let sort = Sort::from_name(&sort_name).ok_or_else(|| {
                    SpecParseError::new(format!("unknown sort `{}`", sort_name), span)
                })?;
                with_binders.push((bname, sort));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }

        let mut params = Vec::new();
        if self.keyword("params") {
            if !self.peek_keyword("pre") {
                loop {
                    params.push(self.expr()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
        }

        let params_span = self.span();
        if !self.keyword("pre") {
            return Err(self.err("expected `pre { ... }`"));
        }
        let (pre, _) = self.assertion(false)?;
        if !self.keyword("post") {
            return Err(self.err("expected `post { ... }`"));
        }
        let (post, ret) = self.assertion(true)?;

        if params.len() != sig.params.len() {
            return Err(SpecParseError::new(
                format!(
                    "`{}` declares {} parameter expressions but the signature has {}",
                    name,
                    params.len(),
                    sig.params.len()
                ),
                params_span,
            ));
        }
        if sig.ret.is_some() && ret.is_none() {
            return Err(SpecParseError::new(
                format!("`{}` returns a value; the post block needs a `return` clause", name),
                params_span,
            ));
        }
        if sig.ret.is_none() && ret.is_some() {
            return Err(SpecParseError::new(
                format!("`{}` is void; the post block must not have a `return` clause", name),
                params_span,
            ));
        }

        let spec = FunSpec {
            name,
            with_binders,
            params,
            pre,
            post,
            ret,
            sig,
        };
        check_scopes(&spec, params_span)?;
        Ok(spec)
    }
}

/// Every variable mentioned must be bound: pre over the with binders plus
/// pre existentials, post additionally over post existentials.
fn check_scopes(spec: &FunSpec, span: Span) -> Result<()> {
    use std::collections::BTreeSet;
    let binders: BTreeSet<String> =
        spec.with_binders.iter().map(|(n, _)| n.clone()).collect();

    let check = |vars: BTreeSet<String>, scope: &BTreeSet<String>, what: &str| -> Result<()> {
        for v in vars {
            if !scope.contains(&v) {
                return Err(SpecParseError::new(
                    format!("unbound ghost `{}` in {} of `{}`", v, what, spec.name),
                    span,
                ));
            }
        }
        Ok(())
    };

    let mut param_vars = BTreeSet::new();
    for p in &spec.params {
        p.vars(&mut param_vars);
    }
    check(param_vars, &binders, "params")?;

    let mut pre_scope = binders.clone();
    pre_scope.extend(spec.pre.exists.iter().map(|(n, _)| n.clone()));
    let mut pre_vars = BTreeSet::new();
    for p in &spec.pre.pure {
        p.vars(&mut pre_vars);
    }
    for a in &spec.pre.spatial {
        a.vars(&mut pre_vars);
    }
    check(pre_vars, &pre_scope, "pre")?;

    let mut post_scope = pre_scope;
    post_scope.extend(spec.post.exists.iter().map(|(n, _)| n.clone()));
    let mut post_vars = BTreeSet::new();
    for p in &spec.post.pure {
        p.vars(&mut post_vars);
    }
    for a in &spec.post.spatial {
        a.vars(&mut post_vars);
    }
    if let Some(r) = &spec.ret {
        r.vars(&mut post_vars);
    }
    check(post_vars, &post_scope, "post")?;
    Ok(())
}

/// Parse a `.spec` source containing one or more spec blocks.
pub fn parse_spec_file(src: &str) -> Result<SpecEnv> {
    let toks = lex(src)?;
    let mut p = P { toks, pos: 0 };
    let mut env = SpecEnv::new();
    while p.peek().is_some() {
        let spec = p.spec_block()?;
        if env.get(&spec.name).is_some() {
            return Err(SpecParseError::new(
                format!("duplicate spec for `{}`", spec.name),
                Span::default(),
            ));
        }
        env.insert(spec);
    }
    Ok(env)
}

/// Parse a source expected to contain exactly one spec block.
pub fn parse_single_spec(src: &str) -> Result<FunSpec> {
    let env = parse_spec_file(src)?;
    let mut specs: Vec<FunSpec> = env.specs.into_values().collect();
    match specs.len() {
        1 => Ok(specs.pop().unwrap()),
        n => Err(SpecParseError::new(
            format!("expected exactly one spec block, found {}", n),
            Span::default(),
        )),
    }
}

/// Parse a pure proposition on its own (used by verification hints).
pub fn parse_prop(src: &str) -> Result<PureProp> {
    let toks = lex(src)?;
    let mut p = P { toks, pos: 0 };
    let prop = p.prop()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input after proposition"));
    }
    Ok(prop)
}

/// Parse an expression on its own (used by verification hints).
pub fn parse_expr(src: &str) -> Result<SpecExpr> {
    let toks = lex(src)?;
    let mut p = P { toks, pos: 0 };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input after expression"));
    }
    Ok(e)
}
