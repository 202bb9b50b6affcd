//! Admissibility-analysis tests: the pinned loop/helper examples, each
//! rejection kind in isolation, clean-program admission, deterministic
//! ordering, and the loop-injection mutation property.

use proptest::prelude::*;
use sepsynth::bias::{analyze, BiasKind, ErrorSet};
use sepsynth::spec::parse::parse_spec_file;
use sepsynth::spec::SpecEnv;

const APPEND_SPEC: &str = r#"
spec append
sig sll *append(sll *h1, sll *h2)
with h1: addr, l1: list, h2: addr, l2: list
params h1, h2
pre  { sep: listrep(l1, h1) * listrep(l2, h2) }
post { ex q: addr; return q; sep: listrep(l1 ++ l2, q) }
"#;

const SWAP_SPEC: &str = r#"
spec swap
sig void swap(int *x, int *y)
with x: addr, a: int, y: addr, b: int
params x, y
pre  { sep: x |-> a * y |-> b }
post { sep: if a < b then x |-> b + 1 * y |-> a else x |-> a + 1 * y |-> a }
"#;

/// The iterative append an LLM produces when nothing forbids loops.
const LOOP_APPEND: &str = r#"
sll *append(sll *h1, sll *h2) {
    sll *current = h1;
    if (h1 == NULL) {
        return h2;
    }
    while (current->next != NULL) {
        current = current->next;
    }
    current->next = h2;
    return h1;
}
"#;

/// A swap that invents a helper instead of inlining the increment.
const SWAP_WITH_HELPER: &str = r#"
void add(int *x) {
    *x = *x + 1;
}
void swap(int *x, int *y) {
    int a = *x;
    int b = *y;
    if (a < b) {
        *x = b;
        *y = a;
    } else {
        *y = a;
    }
    add(x);
}
"#;

const RECURSIVE_APPEND: &str = r#"
sll *append(sll *h1, sll *h2) {
    if (h1 == NULL) {
        return h2;
    } else {
        h1->next = append(h1->next, h2);
    }
    return h1;
}
"#;

fn env(spec: &str) -> SpecEnv {
    parse_spec_file(spec).unwrap()
}

fn kinds(set: &ErrorSet) -> Vec<&'static str> {
    set.iter().map(|e| e.kind.name()).collect()
}

#[test]
fn iterative_append_is_rejected_for_its_loop() {
    let out = analyze(LOOP_APPEND, "append", &env(APPEND_SPEC));
    assert_eq!(kinds(&out), vec!["LoopFound"]);
    let e = &out.errors[0];
    assert!(matches!(e.kind, BiasKind::LoopFound { loop_kind: "while" }));
    assert!(e.message.contains("while (current->next != NULL)"), "{}", e.message);
}

#[test]
fn helper_defining_swap_is_rejected_as_novel_helper() {
    let out = analyze(SWAP_WITH_HELPER, "swap", &env(SWAP_SPEC));
    assert_eq!(kinds(&out), vec!["NovelHelper"]);
    assert!(matches!(&out.errors[0].kind, BiasKind::NovelHelper { name } if name == "add"));
}

#[test]
fn recursive_append_is_admitted() {
    let out = analyze(RECURSIVE_APPEND, "append", &env(APPEND_SPEC));
    assert!(out.is_empty(), "{}", out);
}

#[test]
fn garbage_fails_with_a_parse_error_only() {
    let out = analyze("sll *append(sll *h1 {", "append", &env(APPEND_SPEC));
    assert_eq!(kinds(&out), vec!["ParseError"]);
}

#[test]
fn type_errors_are_reported_with_their_line() {
    let out = analyze(
        "int f(int n) { return n + missing; }",
        "f",
        &SpecEnv::new(),
    );
    assert_eq!(kinds(&out), vec!["TypeError"]);
    assert_eq!(out.errors[0].span.line, 1);
}

#[test]
fn missing_target_is_its_own_kind() {
    let out = analyze("int other(void) { return 0; }", "append", &env(APPEND_SPEC));
    assert!(out.has("MissingTargetFunction"));
    assert!(out.has("NovelHelper"), "the stray definition is also flagged: {}", out);
}

#[test]
fn wrong_signature_is_flagged() {
    let out = analyze(
        "void swap(int *x) { *x = *x; }",
        "swap",
        &env(SWAP_SPEC),
    );
    assert_eq!(kinds(&out), vec!["SignatureMismatch"]);
    assert!(out.errors[0].message.contains("void swap(int *x, int *y)"));
}

#[test]
fn dead_extra_function_is_still_a_novel_helper() {
    let src = r#"
int unused(int n) { return n; }
void swap(int *x, int *y) {
    int a = *x;
    int b = *y;
    if (a < b) { *x = b; *y = a; } else { *y = a; }
    *x = *x + 1;
}
"#;
    let out = analyze(src, "swap", &env(SWAP_SPEC));
    assert_eq!(kinds(&out), vec!["NovelHelper"]);
}

#[test]
fn api_calls_are_admitted_without_definitions() {
    let api = parse_spec_file(
        "spec inc\nsig int inc(int n)\nwith n: int\nparams n\npre { sep: emp }\npost { return n + 1; sep: emp }\n\nspec twice\nsig int twice(int n)\nwith n: int\nparams n\npre { sep: emp }\npost { return n + 2; sep: emp }",
    )
    .unwrap();
    let out = analyze(
        "int twice(int n) { int m = inc(n); return inc(m); }",
        "twice",
        &api,
    );
    assert!(out.is_empty(), "{}", out);
}

#[test]
fn call_to_unknown_function_is_a_type_error() {
    let out = analyze(
        "void swap(int *x, int *y) { mystery(x); }",
        "swap",
        &env(SWAP_SPEC),
    );
    assert!(out.has("TypeError"), "{}", out);
}

#[test]
fn loop_and_helper_and_type_error_all_reported_once() {
    let src = r#"
int helper(int n) {
    while (n > 0) { n = n - 1; }
    return n;
}
void swap(int *x, int *y) {
    int a = *x;
    *y = a + missing;
}
"#;
    let out = analyze(src, "swap", &env(SWAP_SPEC));
    assert!(out.has("LoopFound"));
    assert!(out.has("NovelHelper"));
    assert!(out.has("TypeError"));
    // Deterministic: same input, same output, stable order.
    let again = analyze(src, "swap", &env(SWAP_SPEC));
    assert_eq!(out, again);
    let mut sorted = out.errors.clone();
    sorted.sort_by_key(|e| (e.span.line, e.span.col));
    assert_eq!(
        out.errors, sorted,
        "findings are ordered by source position"
    );
}

#[test]
fn all_three_loop_kinds_are_named() {
    for (kw, frag) in [
        ("while", "while (n > 0) { n = n - 1; }"),
        ("do-while", "do { n = n - 1; } while (n > 0);"),
        ("for", "for (n = 9; n > 0; n = n - 1) { n = n; }"),
    ] {
        let src = format!("int f(int n) {{ {} return n; }}", frag);
        let out = analyze(&src, "f", &SpecEnv::new());
        assert_eq!(kinds(&out), vec!["LoopFound"], "{}", kw);
        assert!(matches!(out.errors[0].kind, BiasKind::LoopFound { loop_kind } if loop_kind == kw));
    }
}

proptest! {
    /// Injecting a loop statement into an admitted program always flips the
    /// analysis to contain LoopFound, wherever the loop lands.
    #[test]
    fn loop_injection_is_always_detected(pos in 0usize..3, n in 0i64..100) {
        let lines = [
            format!("while ({} > 0) {{ }}", n),
            format!("do {{ }} while ({} > 0);", n),
            format!("for (;;) {{ }}"),
        ];
        let inject = &lines[pos % lines.len()];
        let src = format!(
            "void swap(int *x, int *y) {{\n    int a = *x;\n    {}\n    int b = *y;\n    if (a < b) {{ *x = b; *y = a; }} else {{ *y = a; }}\n    *x = *x + 1;\n}}",
            inject
        );
        let out = analyze(&src, "swap", &env(SWAP_SPEC));
        prop_assert!(out.has("LoopFound"), "{}", out);
    }
}
