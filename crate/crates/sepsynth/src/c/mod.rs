//! Front end for the restricted C dialect: AST, lexer, parser, typechecker,
//! and canonical pretty-printer.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod typecheck;

pub use ast::*;
pub use parser::{parse, parse_signature, ParseError, ParseResult, MAX_SOURCE_BYTES};
pub use pretty::{pretty, pretty_expression, pretty_stmt_head};
pub use typecheck::{typecheck, TypeError, TypedProgram};
