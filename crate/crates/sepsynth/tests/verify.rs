//! Forward-verifier tests: golden rule traces, call-parameter inference,
//! side-condition parking, hint resolution, and agreement between the
//! branch-merging statement transform and the concrete interpreter.

use sepsynth::c::{parse, typecheck, TypedProgram};
use sepsynth::spec::parse::parse_spec_file;
use sepsynth::spec::SpecEnv;
use sepsynth::verify::{
    parse_hint, verify, VerifyConfig, VerifyErr, VerifyOutcome, VerifyStatus,
};

const SWAP_SRC: &str = r#"
void swap(int *x, int *y) {
    int a = *x;
    int b = *y;
    if (a < b) {
        *x = b;
        *y = a;
    } else {
        *y = a;
    }
    *x = *x + 1;
}
"#;

const SWAP_SPEC: &str = r#"
spec swap
sig void swap(int *x, int *y)
with x: addr, a: int, y: addr, b: int
params x, y
pre  { sep: x |-> a * y |-> b }
post { sep: if a < b then x |-> b + 1 * y |-> a else x |-> a + 1 * y |-> a }
"#;

const APPEND_SRC: &str = r#"
sll *append(sll *h1, sll *h2) {
    if (h1 == NULL) {
        return h2;
    }
    h1->next = append(h1->next, h2);
    return h1;
}
"#;

const APPEND_SPEC: &str = r#"
spec append
sig sll *append(sll *h1, sll *h2)
with h1: addr, l1: list, h2: addr, l2: list
params h1, h2
pre  { sep: listrep(l1, h1) * listrep(l2, h2) }
post { ex q: addr; return q; sep: listrep(l1 ++ l2, q) }
"#;

fn typed(src: &str, env: &SpecEnv) -> TypedProgram {
    let prog = parse(src).unwrap_or_else(|e| panic!("parse error: {}", e));
    typecheck(&prog, &env.signatures())
        .unwrap_or_else(|es| panic!("type errors: {:?}", es))
}

fn run(src: &str, spec_src: &str, fun: &str) -> VerifyOutcome {
    let env = parse_spec_file(spec_src).unwrap_or_else(|e| panic!("spec error: {}", e));
    let prog = typed(src, &env);
    verify(&prog, fun, &env, &VerifyConfig::default())
        .unwrap_or_else(|e| panic!("verify aborted: {}", e))
}

/// `needle` appears in `hay` in order (not necessarily adjacent).
fn is_subsequence(hay: &[String], needle: &[&str]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

// ---------------------------------------------------------------------------
// Straight-line programs
// ---------------------------------------------------------------------------

#[test]
fn constant_return_verifies() {
    let out = run(
        "int five(void) { return 5; }",
        "spec five\nsig int five(void)\npre { sep: emp }\npost { return 5; sep: emp }",
        "five",
    );
    assert_eq!(out.report.status, VerifyStatus::Verified);
    assert_eq!(out.report.traces.len(), 1);
    assert!(is_subsequence(&out.report.traces[0], &["forward", "entail"]));
}

#[test]
fn identity_function_verifies() {
    let out = run(
        "int id(int n) { return n; }",
        "spec id\nsig int id(int n)\nwith n: int\nparams n\npre { sep: emp }\npost { return n; sep: emp }",
        "id",
    );
    assert_eq!(out.report.status, VerifyStatus::Verified);
}

#[test]
fn wrong_constant_parks_the_final_entailment() {
    let out = run(
        "int five(void) { return 4; }",
        "spec five\nsig int five(void)\npre { sep: emp }\npost { return 5; sep: emp }",
        "five",
    );
    let VerifyStatus::SideConditions(n) = out.report.status else {
        panic!("a wrong constant must not verify");
    };
    assert_eq!(n, 1);
    assert!(out.report.side_conditions[0].reason.contains("entailment stuck"));
}

#[test]
fn scalar_store_and_load_verify() {
    let out = run(
        "void bump(int *p) { *p = *p + 1; }",
        "spec bump\nsig void bump(int *p)\nwith p: addr, v: int\nparams p\npre { sep: p |-> v }\npost { sep: p |-> v + 1 }",
        "bump",
    );
    assert_eq!(out.report.status, VerifyStatus::Verified);
}

// ---------------------------------------------------------------------------
// The two flagship programs
// ---------------------------------------------------------------------------

#[test]
fn swap_verifies_with_the_golden_rule_trace() {
    let started = std::time::Instant::now();
    let out = run(SWAP_SRC, SWAP_SPEC, "swap");
    assert_eq!(out.report.status, VerifyStatus::Verified, "swap must verify");
    assert!(out.report.side_conditions.is_empty());

    // Two closed paths (one per branch), each driven by the same rule
    // skeleton: push the continuation into the branches, split, run the
    // stores forward, resolve the conditional in the post, discharge.
    assert_eq!(out.report.traces.len(), 2, "one closed trace per branch");
    for trace in &out.report.traces {
        assert!(
            is_subsequence(trace, &["if_seq", "forward_if", "forward", "ite_resolve", "entail"]),
            "trace missing the golden sequence: {:?}",
            trace
        );
    }
    assert!(started.elapsed().as_secs() < 1, "swap must verify in under a second");
}

#[test]
fn append_verifies_with_call_parameter_inference() {
    let started = std::time::Instant::now();
    let out = run(APPEND_SRC, APPEND_SPEC, "append");
    assert_eq!(out.report.status, VerifyStatus::Verified, "append must verify");
    assert!(out.report.side_conditions.is_empty());

    // The recursive call's ghost arguments are found automatically...
    let call_note = out
        .report
        .notes
        .iter()
        .find(|n| n.starts_with("call to `append` instantiates"))
        .expect("the recursive call must be instantiated by inference");
    for binder in ["h1 :=", "l1 :=", "h2 :=", "l2 :="] {
        assert!(call_note.contains(binder), "note lacks {}: {}", binder, call_note);
    }
    // ...and reading h1->next unfolds the first list predicate.
    assert!(
        out.report.notes.iter().any(|n| n.starts_with("unfolded listrep")),
        "notes: {:?}",
        out.report.notes
    );
    assert!(started.elapsed().as_secs() < 2, "append must verify in under two seconds");
}

// ---------------------------------------------------------------------------
// Parking
// ---------------------------------------------------------------------------

#[test]
fn while_loop_parks_as_a_side_condition() {
    let out = run(
        "int zero(int n) { while (n > 0) { n = n - 1; } return 0; }",
        "spec zero\nsig int zero(int n)\nwith n: int\nparams n\npre { sep: emp }\npost { return 0; sep: emp }",
        "zero",
    );
    let VerifyStatus::SideConditions(1) = out.report.status else {
        panic!("a loop cannot be verified automatically: {:?}", out.report.status);
    };
    assert!(out.report.side_conditions[0].reason.contains("loop"));
}

#[test]
fn missing_function_and_spec_are_hard_errors() {
    let env = parse_spec_file(SWAP_SPEC).unwrap();
    let prog = typed(SWAP_SRC, &env);
    let e = verify(&prog, "nosuch", &env, &VerifyConfig::default()).unwrap_err();
    assert!(matches!(e, VerifyErr::MissingFunction(_)));

    let env2 = SpecEnv::new();
    let prog2 = typed("int five(void) { return 5; }", &env2);
    let e2 = verify(&prog2, "five", &env2, &VerifyConfig::default()).unwrap_err();
    assert!(matches!(e2, VerifyErr::MissingSpec(_)));
}

#[test]
fn signature_mismatch_is_rejected() {
    let env = parse_spec_file(
        "spec five\nsig int five(int bogus)\nwith bogus: int\nparams bogus\npre { sep: emp }\npost { return 5; sep: emp }",
    )
    .unwrap();
    let prog = parse("int five(void) { return 5; }").unwrap();
    let prog = typecheck(&prog, &[]).unwrap();
    let e = verify(&prog, "five", &env, &VerifyConfig::default()).unwrap_err();
    assert!(matches!(e, VerifyErr::SignatureMismatch { .. }));
}

// ---------------------------------------------------------------------------
// Hints
// ---------------------------------------------------------------------------

#[test]
fn hint_parsing_round_trips_the_three_forms() {
    assert!(matches!(parse_hint("unfold listrep at p"), Ok(_)));
    assert!(matches!(parse_hint("exists q := h + 1"), Ok(_)));
    assert!(matches!(parse_hint("assert x == y"), Ok(_)));
    assert!(parse_hint("unfold lseg at p").is_err());
    assert!(parse_hint("frobnicate").is_err());
}

#[test]
fn unknown_side_condition_index_fails_hint_resolution() {
    let out = run(SWAP_SRC, SWAP_SPEC, "swap");
    let env = parse_spec_file(SWAP_SPEC).unwrap();
    let hint = parse_hint("assert 1 == 1").unwrap();
    let e = out.resolve(0, &hint, &env, &VerifyConfig::default()).unwrap_err();
    assert!(matches!(e, VerifyErr::HintFailed(_)));
}
