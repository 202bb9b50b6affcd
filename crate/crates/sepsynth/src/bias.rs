//! Syntactic admissibility analysis for generated programs.
//!
//! A generated program is admitted when it parses, typechecks, defines the
//! target function with the expected signature, contains no loop statement
//! anywhere, and defines nothing besides the target. Helper calls must go
//! through the provided API; direct self-recursion is the only permitted
//! form of recursion. Every finding carries a self-contained message that
//! can be appended verbatim to a retry prompt.

use crate::c::{parse, typecheck, FunDef, Stmt};
use crate::span::Span;
use crate::spec::SpecEnv;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BiasKind {
    ParseError,
    TypeError,
    /// A `while`, `do-while`, or `for` statement.
    LoopFound { loop_kind: &'static str },
    /// A function defined besides the target, called or not.
    NovelHelper { name: String },
    SignatureMismatch { expected: String, found: String },
    MissingTargetFunction,
}

impl BiasKind {
    pub fn name(&self) -> &'static str {
        match self {
            BiasKind::ParseError => "ParseError",
            BiasKind::TypeError => "TypeError",
            BiasKind::LoopFound { .. } => "LoopFound",
            BiasKind::NovelHelper { .. } => "NovelHelper",
            BiasKind::SignatureMismatch { .. } => "SignatureMismatch",
            BiasKind::MissingTargetFunction => "MissingTargetFunction",
        }
    }

    fn rank(&self) -> u8 {
        match self {
            BiasKind::ParseError => 0,
            BiasKind::TypeError => 1,
            BiasKind::MissingTargetFunction => 2,
            BiasKind::SignatureMismatch { .. } => 3,
            BiasKind::LoopFound { .. } => 4,
            BiasKind::NovelHelper { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasError {
    pub kind: BiasKind,
    pub message: String,
    pub span: Span,
}

impl Serialize for BiasError {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("BiasError", 4)?;
        st.serialize_field("kind", self.kind.name())?;
        st.serialize_field("message", &self.message)?;
        st.serialize_field("line", &self.span.line)?;
        st.serialize_field("col", &self.span.col)?;
        st.end()
    }
}

impl std::fmt::Display for BiasError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.kind.name(), self.message)
    }
}

/// The findings for one program, sorted by source position then severity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ErrorSet {
    pub errors: Vec<BiasError>,
}

impl ErrorSet {
    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BiasError> {
        self.errors.iter()
    }

    /// True when some finding has the given kind name.
    pub fn has(&self, kind_name: &str) -> bool {
        self.errors.iter().any(|e| e.kind.name() == kind_name)
    }

    fn push(&mut self, kind: BiasKind, message: String, span: Span) {
        self.errors.push(BiasError { kind, message, span });
    }

    fn finalize(mut self) -> ErrorSet {
        self.errors.sort_by(|a, b| {
            (a.span.line, a.span.col, a.kind.rank(), &a.message).cmp(&(
                b.span.line,
                b.span.col,
                b.kind.rank(),
                &b.message,
            ))
        });
        self.errors.dedup();
        self
    }
}

impl std::fmt::Display for ErrorSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, e) in self.errors.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}", e)?;
        }
        Ok(())
    }
}

/// Quote the 1-indexed source line, trimmed, for self-contained messages.
fn quoted_line(source: &str, span: Span) -> String {
    source
        .lines()
        .nth(span.line.saturating_sub(1) as usize)
        .map(|l| l.trim().to_string())
        .unwrap_or_default()
}

fn scan_loops(source: &str, body: &[Stmt], out: &mut ErrorSet) {
    for s in body {
        if let Some(kind) = s.loop_kind() {
            out.push(
                BiasKind::LoopFound { loop_kind: kind },
                format!(
                    "`{}` loop at line {}: `{}` — loops are not allowed; express iteration \
                     with recursion",
                    kind,
                    s.span().line,
                    quoted_line(source, s.span())
                ),
                s.span(),
            );
        }
        match s {
            Stmt::If { then_branch, else_branch, .. } => {
                scan_loops(source, then_branch, out);
                scan_loops(source, else_branch, out);
            }
            Stmt::While { body, .. }
            | Stmt::DoWhile { body, .. }
            | Stmt::For { body, .. } => scan_loops(source, body, out),
            _ => {}
        }
    }
}

fn flag_extra_function(target: &str, def: &FunDef, out: &mut ErrorSet) {
    out.push(
        BiasKind::NovelHelper { name: def.name.clone() },
        format!(
            "novel helper `{}` defined at line {} — the program must define only `{}`; \
             call the provided API or recurse instead",
            def.name, def.span.line, target
        ),
        def.span,
    );
}

/// Analyze one generated program against the target function and API.
/// An empty result admits the program to verification.
pub fn analyze(source: &str, target: &str, api: &SpecEnv) -> ErrorSet {
    let mut out = ErrorSet::default();

    let prog = match parse(source) {
        Ok(p) => p,
        Err(e) => {
            let span = e.span();
            out.push(
                BiasKind::ParseError,
                format!("syntax error: {} near `{}`", e, quoted_line(source, span)),
                span,
            );
            return out.finalize();
        }
    };

    if let Err(tes) = typecheck(&prog, &api.signatures()) {
        for te in tes {
            out.push(
                BiasKind::TypeError,
                format!("type error: {} near `{}`", te, quoted_line(source, te.span)),
                te.span,
            );
        }
    }

    // Loops anywhere in the source, including inside extra helpers.
    for def in &prog.funs {
        scan_loops(source, &def.body, &mut out);
    }

    // Exactly one definition is allowed: the target, with the spec'd
    // signature. Extra definitions are novel helpers even when never called
    // (calls to them from the target would otherwise hide behind dead code).
    let mut target_seen = false;
    for def in &prog.funs {
        if def.name == target {
            target_seen = true;
            if let Some(spec) = api.specs.get(target) {
                let found = crate::c::CSignature::of_fundef(def);
                if !spec.sig.matches(&found) {
                    out.push(
                        BiasKind::SignatureMismatch {
                            expected: spec.sig.render(),
                            found: found.render(),
                        },
                        format!(
                            "signature mismatch for `{}`: the specification declares \
                             `{}` but the program defines `{}`",
                            target,
                            spec.sig.render(),
                            found.render()
                        ),
                        def.span,
                    );
                }
            }
        } else {
            flag_extra_function(target, def, &mut out);
        }
    }
    if !target_seen {
        out.push(
            BiasKind::MissingTargetFunction,
            format!("the target function `{}` is not defined in the program", target),
            Span::new(1, 1),
        );
    }

    out.finalize()
}
