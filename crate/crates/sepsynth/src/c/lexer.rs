use crate::span::Span;
use super::parser::{ParseError, ParseResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Char(u8),
    Double(f64),
    KwInt,
    KwChar,
    KwDouble,
    KwVoid,
    KwStruct,
    KwIf,
    KwElse,
    KwReturn,
    KwWhile,
    KwDo,
    KwFor,
    KwNull,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Assign,
    EqEq,
    BangEq,
    Bang,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Arrow,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{}`", s),
            Tok::Int(n) => format!("integer literal `{}`", n),
            Tok::Char(c) => format!("character literal `{}`", *c as char),
            Tok::Double(d) => format!("floating literal `{}`", d),
            Tok::KwInt => "`int`".into(),
            Tok::KwChar => "`char`".into(),
            Tok::KwDouble => "`double`".into(),
            Tok::KwVoid => "`void`".into(),
            Tok::KwStruct => "`struct`".into(),
            Tok::KwIf => "`if`".into(),
            Tok::KwElse => "`else`".into(),
            Tok::KwReturn => "`return`".into(),
            Tok::KwWhile => "`while`".into(),
            Tok::KwDo => "`do`".into(),
            Tok::KwFor => "`for`".into(),
            Tok::KwNull => "`NULL`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Star => "`*`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Percent => "`%`".into(),
            Tok::Assign => "`=`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::BangEq => "`!=`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::AndAnd => "`&&`".into(),
            Tok::OrOr => "`||`".into(),
            Tok::Arrow => "`->`".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(src: &str) -> ParseResult<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if let Some(ch) = c {
                if ch == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            c
        }};
    }

    loop {
        let span = Span::new(line, col);
        let c = match chars.peek().copied() {
            Some(c) => c,
            None => break,
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '/' => {
                bump!();
                match chars.peek().copied() {
                    Some('/') => {
                        while let Some(&ch) = chars.peek() {
                            if ch == '\n' {
                                break;
                            }
                            bump!();
                        }
                    }
                    Some('*') => {
                        bump!();
                        let mut closed = false;
                        while let Some(ch) = bump!() {
                            if ch == '*' {
                                if let Some('/') = chars.peek().copied() {
                                    bump!();
                                    closed = true;
                                    break;
                                }
                            }
                        }
                        if !closed {
                            return Err(ParseError::InvalidSyntax {
                                message: "unterminated block comment".into(),
                                span,
                            });
                        }
                    }
                    _ => out.push(Token { tok: Tok::Slash, span }),
                }
            }
            '0'..='9' => {
                let mut text = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_ascii_digit() {
                        text.push(ch);
                        bump!();
                    } else {
                        break;
                    }
                }
                let is_double = matches!(chars.peek(), Some('.'));
                if is_double {
                    text.push('.');
                    bump!();
                    let mut saw_frac = false;
                    while let Some(&ch) = chars.peek() {
                        if ch.is_ascii_digit() {
                            saw_frac = true;
                            text.push(ch);
                            bump!();
                        } else {
                            break;
                        }
                    }
                    if !saw_frac {
                        return Err(ParseError::InvalidSyntax {
                            message: "floating literal needs digits after `.`".into(),
                            span,
                        });
                    }
                    let d: f64 = text.parse().map_err(|_| ParseError::InvalidSyntax {
                        message: format!("bad floating literal `{}`", text),
                        span,
                    })?;
                    out.push(Token { tok: Tok::Double(d), span });
                } else {
                    let n: i64 = text.parse().map_err(|_| ParseError::InvalidSyntax {
                        message: format!("integer literal `{}` out of range", text),
                        span,
                    })?;
                    out.push(Token { tok: Tok::Int(n), span });
                }
            }
            '\'' => {
                bump!();
                let ch = bump!().ok_or(ParseError::UnexpectedEof { span })?;
                let value = if ch == '\\' {
                    let esc = bump!().ok_or(ParseError::UnexpectedEof { span })?;
                    match esc {
                        'n' => b'\n',
                        't' => b'\t',
                        '0' => 0,
                        '\\' => b'\\',
                        '\'' => b'\'',
                        other => {
                            return Err(ParseError::InvalidSyntax {
                                message: format!("unsupported escape `\\{}`", other),
                                span,
                            })
                        }
                    }
                } else if ch.is_ascii() && ch != '\'' {
                    ch as u8
                } else {
                    return Err(ParseError::InvalidSyntax {
                        message: "bad character literal".into(),
                        span,
                    });
                };
                match bump!() {
                    Some('\'') => out.push(Token { tok: Tok::Char(value), span }),
                    _ => {
                        return Err(ParseError::InvalidSyntax {
                            message: "unterminated character literal".into(),
                            span,
                        })
                    }
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let mut text = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        text.push(ch);
                        bump!();
                    } else {
                        break;
                    }
                }
                let tok = match text.as_str() {
                    "int" => Tok::KwInt,
                    "char" => Tok::KwChar,
                    "double" => Tok::KwDouble,
                    "void" => Tok::KwVoid,
                    "struct" => Tok::KwStruct,
                    "if" => Tok::KwIf,
                    "else" => Tok::KwElse,
                    "return" => Tok::KwReturn,
                    "while" => Tok::KwWhile,
                    "do" => Tok::KwDo,
                    "for" => Tok::KwFor,
                    "NULL" => Tok::KwNull,
                    "goto" | "union" | "switch" | "sizeof" | "typedef" | "enum" | "break"
                    | "continue" | "static" | "extern" | "unsigned" | "long" | "short"
                    | "float" => {
                        return Err(ParseError::Unsupported {
                            construct: format!("`{}`", text),
                            span,
                        })
                    }
                    _ => Tok::Ident(text),
                };
                out.push(Token { tok, span });
            }
            '(' => {
                bump!();
                out.push(Token { tok: Tok::LParen, span });
            }
            ')' => {
                bump!();
                out.push(Token { tok: Tok::RParen, span });
            }
            '{' => {
                bump!();
                out.push(Token { tok: Tok::LBrace, span });
            }
            '}' => {
                bump!();
                out.push(Token { tok: Tok::RBrace, span });
            }
            '[' => {
                bump!();
                out.push(Token { tok: Tok::LBracket, span });
            }
            ']' => {
                bump!();
                out.push(Token { tok: Tok::RBracket, span });
            }
            ';' => {
                bump!();
                out.push(Token { tok: Tok::Semi, span });
            }
            ',' => {
                bump!();
                out.push(Token { tok: Tok::Comma, span });
            }
            '*' => {
                bump!();
                out.push(Token { tok: Tok::Star, span });
            }
            '+' => {
                bump!();
                if let Some('+') = chars.peek().copied() {
                    return Err(ParseError::Unsupported { construct: "`++`".into(), span });
                }
                out.push(Token { tok: Tok::Plus, span });
            }
            '-' => {
                bump!();
                match chars.peek().copied() {
                    Some('>') => {
                        bump!();
                        out.push(Token { tok: Tok::Arrow, span });
                    }
                    Some('-') => {
                        return Err(ParseError::Unsupported { construct: "`--`".into(), span })
                    }
                    _ => out.push(Token { tok: Tok::Minus, span }),
                }
            }
            '%' => {
                bump!();
                out.push(Token { tok: Tok::Percent, span });
            }
            '=' => {
                bump!();
                if let Some('=') = chars.peek().copied() {
                    bump!();
                    out.push(Token { tok: Tok::EqEq, span });
                } else {
                    out.push(Token { tok: Tok::Assign, span });
                }
            }
            '!' => {
                bump!();
                if let Some('=') = chars.peek().copied() {
                    bump!();
                    out.push(Token { tok: Tok::BangEq, span });
                } else {
                    out.push(Token { tok: Tok::Bang, span });
                }
            }
            '<' => {
                bump!();
                if let Some('=') = chars.peek().copied() {
                    bump!();
                    out.push(Token { tok: Tok::Le, span });
                } else {
                    out.push(Token { tok: Tok::Lt, span });
                }
            }
            '>' => {
                bump!();
                if let Some('=') = chars.peek().copied() {
                    bump!();
                    out.push(Token { tok: Tok::Ge, span });
                } else {
                    out.push(Token { tok: Tok::Gt, span });
                }
            }
            '&' => {
                bump!();
                if let Some('&') = chars.peek().copied() {
                    bump!();
                    out.push(Token { tok: Tok::AndAnd, span });
                } else {
                    return Err(ParseError::Unsupported {
                        construct: "address-of `&`".into(),
                        span,
                    });
                }
            }
            '|' => {
                bump!();
                if let Some('|') = chars.peek().copied() {
                    bump!();
                    out.push(Token { tok: Tok::OrOr, span });
                } else {
                    return Err(ParseError::Unsupported {
                        construct: "bitwise `|`".into(),
                        span,
                    });
                }
            }
            other => {
                return Err(ParseError::InvalidSyntax {
                    message: format!("unexpected character `{}`", other),
                    span,
                })
            }
        }
    }
    Ok(out)
}
