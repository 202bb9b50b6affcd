//! Entailment-engine tests: the arithmetic solver's fixed verdicts and their
//! agreement with brute-force/random grounding, normalization laws, spatial
//! matching with fold/unfold, and heap-level soundness of proved entailments
//! checked against the concrete-state oracle.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepsynth::c::CSignature;
use sepsynth::entail::{
    match_atoms, normalize, prove_entail, pure_solve, pure_solve_ctx, EntailOutcome,
    MatchConfig, NormalizeErr, PureVerdict,
};
use sepsynth::oracle::{
    eval_prop, sample_pre, satisfies, ConcTree, GhostEnv, GhostVal, SampleBounds,
};
use sepsynth::spec::parse::{parse_expr, parse_prop, parse_single_spec};
use sepsynth::spec::{
    Assertion, FunSpec, PointsToValue, PureProp, Share, Sort, SpatialAtom, SpecExpr,
};
use std::collections::BTreeMap;

fn p(src: &str) -> PureProp {
    parse_prop(src).unwrap_or_else(|e| panic!("bad prop `{}`: {}", src, e))
}

fn e(src: &str) -> SpecExpr {
    parse_expr(src).unwrap_or_else(|err| panic!("bad expr `{}`: {}", src, err))
}

fn sorts(pairs: &[(&str, Sort)]) -> BTreeMap<String, Sort> {
    pairs.iter().map(|(n, s)| (n.to_string(), *s)).collect()
}

fn pts(addr: &str, value: &str) -> SpatialAtom {
    SpatialAtom::pts_to(e(addr), e(value))
}

fn list_node(addr: &str, head: &str, next: &str) -> SpatialAtom {
    SpatialAtom::PtsTo {
        addr: e(addr),
        share: SpecExpr::ShareL(Share::Full),
        value: PointsToValue::ListNode { head: e(head), next: e(next) },
    }
}

fn listrep(elems: &str, addr: &str) -> SpatialAtom {
    SpatialAtom::ListRep { elems: e(elems), addr: e(addr) }
}

fn treerep(tree: &str, addr: &str) -> SpatialAtom {
    SpatialAtom::TreeRep { tree: e(tree), addr: e(addr) }
}

fn asrt(exists: &[(&str, Sort)], pure: &[&str], spatial: Vec<SpatialAtom>) -> Assertion {
    Assertion {
        exists: exists.iter().map(|(n, s)| (n.to_string(), *s)).collect(),
        pure: pure.iter().map(|s| p(s)).collect(),
        spatial,
    }
}

// ---------------------------------------------------------------------------
// Fixed arithmetic verdicts
// ---------------------------------------------------------------------------

#[test]
fn lt_entails_negated_ge() {
    let v = pure_solve(&[p("a < b")], &p("!(a >= b)"));
    let PureVerdict::Valid(chain) = v else { panic!("expected Valid, got {:?}", v) };
    assert!(!chain.is_empty(), "a deciding chain must be reported");
}

#[test]
fn lt_refutes_ge() {
    let v = pure_solve(&[p("a < b")], &p("a >= b"));
    assert!(v.is_refuted(), "expected Refuted, got {:?}", v);
}

#[test]
fn reflexive_equality_is_valid() {
    assert!(pure_solve(&[], &p("x == x")).is_valid());
}

#[test]
fn forall2_over_slices_instantiates_at_goal_indices() {
    let hyps = [p("forall2(le, s[0 .. 2], s[1 .. 3])"), p("0 <= i"), p("i <= 1")];
    let v = pure_solve_ctx(
        &sorts(&[("s", Sort::List), ("i", Sort::Int)]),
        &hyps,
        &p("s[i] <= s[i + 1]"),
    );
    assert!(v.is_valid(), "expected Valid, got {:?}", v);
}

/// The same claim checked exhaustively: every assignment with |s| = 4 and
/// values in [-3, 3] that satisfies the hypotheses satisfies the goal.
#[test]
fn forall2_slice_verdict_agrees_with_exhaustive_enumeration() {
    let hyps = [p("forall2(le, s[0 .. 2], s[1 .. 3])"), p("0 <= i"), p("i <= 1")];
    let goal = p("s[i] <= s[i + 1]");
    let mut witnessed = 0usize;
    for a in -3..=3i64 {
        for b in -3..=3i64 {
            for c in -3..=3i64 {
                for d in -3..=3i64 {
                    for i in -3..=3i64 {
                        let mut env = GhostEnv::new();
                        env.insert("s".into(), GhostVal::List(vec![a, b, c, d]));
                        env.insert("i".into(), GhostVal::Int(i));
                        let sat = hyps.iter().all(|h| eval_prop(&env, h) == Ok(true));
                        if !sat {
                            continue;
                        }
                        witnessed += 1;
                        assert_eq!(
                            eval_prop(&env, &goal),
                            Ok(true),
                            "hypotheses hold but goal fails at s={:?} i={}",
                            [a, b, c, d],
                            i
                        );
                    }
                }
            }
        }
    }
    assert!(witnessed > 0, "the hypothesis set must be satisfiable");
}

#[test]
fn transitivity_and_tightening() {
    assert!(pure_solve(&[p("a <= b"), p("b <= c")], &p("a <= c")).is_valid());
    // 2a = 1 has no integer solution, so anything follows.
    assert!(pure_solve(&[p("2 * a == 1")], &p("0 == 1")).is_valid());
    // Parity via division linking: x and y even makes x + y even.
    assert!(pure_solve(
        &[p("x % 2 == 0"), p("y % 2 == 0")],
        &p("(x + y) % 2 == 0")
    )
    .is_valid());
}

#[test]
fn truncating_division_by_constant() {
    assert!(pure_solve(&[p("a == 7")], &p("a / 2 == 3")).is_valid());
    assert!(pure_solve(&[p("a == -7")], &p("a / 2 == -3")).is_valid());
    assert!(pure_solve(&[p("a == 7")], &p("a % 2 == 1")).is_valid());
}

#[test]
fn disequality_case_split() {
    let hyps = [p("a != 0"), p("0 <= a"), p("a <= 1")];
    assert!(pure_solve(&hyps, &p("a == 1")).is_valid());
}

#[test]
fn membership_implies_nonempty() {
    let v = pure_solve_ctx(
        &sorts(&[("x", Sort::Int), ("l", Sort::List)]),
        &[p("in(x, l)")],
        &p("1 <= len(l)"),
    );
    assert!(v.is_valid(), "got {:?}", v);
}

#[test]
fn forall_instantiates_at_goal_indices() {
    let v = pure_solve_ctx(
        &sorts(&[("xs", Sort::List), ("j", Sort::Int)]),
        &[p("forall(ge 1, xs)"), p("0 <= j"), p("j < len(xs)")],
        &p("xs[j] >= 1"),
    );
    assert!(v.is_valid(), "got {:?}", v);
}

#[test]
fn sorted_gives_adjacent_ordering() {
    let v = pure_solve_ctx(
        &sorts(&[("l", Sort::List), ("i", Sort::Int)]),
        &[p("sorted(l)"), p("0 <= i"), p("i + 1 < len(l)")],
        &p("l[i] <= l[i + 1]"),
    );
    assert!(v.is_valid(), "got {:?}", v);
}

/// Verdicts require the goal to be defined: `head` of a possibly-empty list
/// decides nothing until the hypotheses rule emptiness out.
#[test]
fn partial_operators_block_verdicts_until_defined() {
    let ctx = sorts(&[("l", Sort::List)]);
    assert_eq!(
        pure_solve_ctx(&ctx, &[], &p("head(l) == head(l)")),
        PureVerdict::Unknown
    );
    assert!(pure_solve_ctx(&ctx, &[p("1 <= len(l)")], &p("head(l) == head(l)")).is_valid());
}

#[test]
fn double_equality_is_propositional_only() {
    let ctx = sorts(&[("d", Sort::Double), ("e", Sort::Double)]);
    assert!(pure_solve_ctx(&ctx, &[p("d == e")], &p("!(d != e)")).is_valid());
    assert!(pure_solve_ctx(&ctx, &[p("d == e")], &p("e == d")).is_valid());
    assert!(pure_solve_ctx(&ctx, &[p("d == e")], &p("d != e")).is_refuted());
    // Arithmetic over doubles stays undecided.
    assert_eq!(
        pure_solve_ctx(&ctx, &[], &p("d - d == d / d")),
        PureVerdict::Unknown
    );
}

// ---------------------------------------------------------------------------
// Soundness by random grounding
// ---------------------------------------------------------------------------

fn random_ghost(sort: Sort, rng: &mut ChaCha8Rng) -> GhostVal {
    match sort {
        Sort::Int | Sort::Char => GhostVal::Int(rng.gen_range(-8..=8)),
        Sort::Bool => GhostVal::Bool(rng.gen_bool(0.5)),
        Sort::Double => {
            let opts = [-1.5f64, 0.0, 0.25, 2.0, 3.5];
            GhostVal::Double(opts[rng.gen_range(0..opts.len())])
        }
        Sort::Addr => GhostVal::Addr(rng.gen_range(0..=3)),
        Sort::Share => GhostVal::Share(if rng.gen_bool(0.5) {
            Share::Full
        } else {
            Share::Readable
        }),
        Sort::List => {
            let n = rng.gen_range(0..=4);
            GhostVal::List((0..n).map(|_| rng.gen_range(-8..=8)).collect())
        }
        Sort::Tree => {
            fn gen(rng: &mut ChaCha8Rng, depth: usize) -> ConcTree {
                if depth == 0 || rng.gen_bool(0.4) {
                    ConcTree::Leaf
                } else {
                    ConcTree::Node(
                        rng.gen_range(-8..=8),
                        Box::new(gen(rng, depth - 1)),
                        Box::new(gen(rng, depth - 1)),
                    )
                }
            }
            GhostVal::Tree(gen(rng, 2))
        }
    }
}

/// Every instance gets its computed verdict cross-examined on 10^4 random
/// groundings: `Valid` may never see a satisfied-hypotheses/failed-goal
/// sample, `Refuted` never a satisfied-hypotheses/true-goal sample, and in
/// both cases the goal must be defined whenever the hypotheses hold.
#[test]
fn verdicts_sound_under_random_grounding() {
    let instances: Vec<(Vec<(&str, Sort)>, Vec<&str>, &str)> = vec![
        (vec![("a", Sort::Int), ("b", Sort::Int)], vec!["a < b"], "!(a >= b)"),
        (vec![("a", Sort::Int), ("b", Sort::Int)], vec!["a < b"], "a >= b"),
        (vec![("x", Sort::Int)], vec![], "x == x"),
        (
            vec![("s", Sort::List), ("i", Sort::Int)],
            vec!["forall2(le, s[0 .. 2], s[1 .. 3])", "0 <= i", "i <= 1"],
            "s[i] <= s[i + 1]",
        ),
        (
            vec![("a", Sort::Int), ("b", Sort::Int), ("c", Sort::Int)],
            vec!["a <= b", "b <= c"],
            "a <= c",
        ),
        (vec![("a", Sort::Int)], vec!["2 * a == 1"], "0 == 1"),
        (vec![("a", Sort::Int)], vec!["a == 7"], "a / 2 == 3"),
        (vec![("a", Sort::Int)], vec!["a == -7"], "a / 2 == -3"),
        (
            vec![("x", Sort::Int), ("y", Sort::Int)],
            vec!["x % 2 == 0", "y % 2 == 0"],
            "(x + y) % 2 == 0",
        ),
        (vec![("x", Sort::Int), ("l", Sort::List)], vec!["in(x, l)"], "1 <= len(l)"),
        (
            vec![("xs", Sort::List), ("j", Sort::Int)],
            vec!["forall(ge 1, xs)", "0 <= j", "j < len(xs)"],
            "xs[j] >= 1",
        ),
        (
            vec![("l", Sort::List), ("i", Sort::Int)],
            vec!["sorted(l)", "0 <= i", "i + 1 < len(l)"],
            "l[i] <= l[i + 1]",
        ),
        (vec![("l", Sort::List)], vec![], "head(l) == head(l)"),
        (vec![("l", Sort::List)], vec!["1 <= len(l)"], "head(l) == head(l)"),
        (vec![("a", Sort::Int)], vec!["a != 0", "0 <= a", "a <= 1"], "a == 1"),
        (
            vec![("d", Sort::Double), ("e", Sort::Double)],
            vec!["d == e"],
            "!(d != e)",
        ),
        (vec![("d", Sort::Double), ("e", Sort::Double)], vec!["d == e"], "d != e"),
        (vec![("a", Sort::Int), ("b", Sort::Int)], vec!["a <= b"], "a == b"),
        (
            vec![("l", Sort::List), ("m", Sort::List)],
            vec!["l == m"],
            "len(l) == len(m)",
        ),
        (vec![("t", Sort::Tree)], vec!["t != leaf"], "t == leaf"),
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(0xD1CE);
    for (vars, hyp_srcs, goal_src) in &instances {
        let ctx = sorts(vars);
        let hyps: Vec<PureProp> = hyp_srcs.iter().map(|s| p(s)).collect();
        let goal = p(goal_src);
        let verdict = pure_solve_ctx(&ctx, &hyps, &goal);
        let mut satisfied = 0usize;
        for _ in 0..10_000 {
            let env: GhostEnv = vars
                .iter()
                .map(|(n, s)| (n.to_string(), random_ghost(*s, &mut rng)))
                .collect();
            let hyps_hold = hyps.iter().all(|h| eval_prop(&env, h) == Ok(true));
            if !hyps_hold {
                continue;
            }
            satisfied += 1;
            let got = eval_prop(&env, &goal);
            match &verdict {
                PureVerdict::Valid(_) => assert_eq!(
                    got,
                    Ok(true),
                    "Valid verdict contradicted: {:?} |- {} under {:?}",
                    hyp_srcs,
                    goal_src,
                    env
                ),
                PureVerdict::Refuted(_) => assert_eq!(
                    got,
                    Ok(false),
                    "Refuted verdict contradicted: {:?} |- {} under {:?}",
                    hyp_srcs,
                    goal_src,
                    env
                ),
                PureVerdict::Unknown => {}
            }
        }
        // Unsatisfiable-hypothesis instances are exempt from the coverage
        // sanity check (they are vacuous by design).
        if !matches!(goal_src, &"0 == 1") && hyp_srcs != &vec!["2 * a == 1"] {
            assert!(
                satisfied > 0,
                "no random sample satisfied {:?}; the instance tests nothing",
                hyp_srcs
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

#[test]
fn normalize_flattens_and_orders() {
    let a = asrt(
        &[],
        &["true", "b == b", "a <= b", "a <= b"],
        vec![pts("y", "b"), pts("x", "a")],
    );
    let n = normalize(&a).unwrap();
    assert_eq!(n.pure, vec![p("a <= b")], "tautologies drop, duplicates merge");
    let addrs: Vec<String> =
        n.spatial.iter().map(|s| s.addr().unwrap().to_string()).collect();
    assert_eq!(addrs, vec!["x", "y"], "atoms sort by address");
}

#[test]
fn normalize_rejects_duplicate_full_cells() {
    let a = asrt(&[], &[], vec![pts("x", "a"), pts("x", "b")]);
    assert_eq!(
        normalize(&a),
        Err(NormalizeErr::DuplicateFullCell("x".into()))
    );
}

#[test]
fn duplicate_full_cell_on_the_left_is_vacuous() {
    let lhs = asrt(&[], &[], vec![pts("x", "a"), pts("x", "b")]);
    let rhs = asrt(&[], &["1 == 2"], vec![pts("z", "c")]);
    let out = prove_entail(&sorts(&[("x", Sort::Addr), ("z", Sort::Addr)]), &[], &lhs, &rhs);
    assert!(out.is_proved(), "an absurd heap proves anything: {:?}", out);
    assert!(
        out.log().iter().any(|l| l.contains("vacuous")),
        "the log should say why: {:?}",
        out.log()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// normalize(normalize(a)) == normalize(a).
    #[test]
    fn normalize_is_idempotent(
        vals in proptest::collection::vec(-4i64..=4, 0..4),
        use_list in proptest::bool::ANY,
        dup_pure in proptest::bool::ANY,
    ) {
        let addrs = ["x", "y", "z", "w"];
        let mut spatial = Vec::new();
        for (i, v) in vals.iter().enumerate() {
            spatial.push(pts(addrs[i], &format!("{} + a", v)));
        }
        if use_list {
            spatial.push(listrep("l", "q"));
        }
        let mut pure = vec!["a <= 4".to_string(), format!("a + 0 == a")];
        if dup_pure {
            pure.push("a <= 4".to_string());
        }
        let pure_refs: Vec<&str> = pure.iter().map(|s| s.as_str()).collect();
        let a = asrt(&[], &pure_refs, spatial);
        let once = normalize(&a).unwrap();
        let twice = normalize(&once).unwrap();
        prop_assert_eq!(once, twice);
    }
}

// ---------------------------------------------------------------------------
// prove_entail: fixed examples
// ---------------------------------------------------------------------------

const SWAP_SPEC: &str = r#"
spec swap
sig void swap(int *x, int *y)
with x: addr, a: int, y: addr, b: int
params x, y
pre  { sep: x |-> a * y |-> b }
post { sep: if a < b then x |-> b + 1 * y |-> a else x |-> a + 1 * y |-> a }
"#;

fn swap_sorts() -> BTreeMap<String, Sort> {
    sorts(&[("x", Sort::Addr), ("a", Sort::Int), ("y", Sort::Addr), ("b", Sort::Int)])
}

/// The conditional on the right resolves against the hypothesis `a < b` and
/// the then-branch matches the heap syntactically.
#[test]
fn swap_conditional_resolves_to_then_branch() {
    let spec = parse_single_spec(SWAP_SPEC).unwrap();
    let lhs = asrt(&[], &[], vec![pts("x", "b + 1"), pts("y", "a")]);
    let out = prove_entail(&swap_sorts(), &[p("a < b")], &lhs, &spec.post);
    let EntailOutcome::Proved { witnesses, log } = &out else {
        panic!("expected Proved, got {:?}", out)
    };
    assert!(witnesses.is_empty());
    assert!(
        log.iter().any(|l| l.contains("conditional resolved true")),
        "conditional resolution must be logged: {:?}",
        log
    );
}

#[test]
fn swap_conditional_resolves_to_else_branch() {
    let spec = parse_single_spec(SWAP_SPEC).unwrap();
    let lhs = asrt(&[], &[], vec![pts("x", "a + 1"), pts("y", "a")]);
    let out = prove_entail(&swap_sorts(), &[p("a >= b")], &lhs, &spec.post);
    assert!(out.is_proved(), "{:?}", out);
    assert!(out
        .log()
        .iter()
        .any(|l| l.contains("conditional resolved false")));
}

/// Deciding the condition first must agree with entailment against the
/// selected branch alone.
#[test]
fn conditional_resolution_equals_branch_entailment() {
    let spec = parse_single_spec(SWAP_SPEC).unwrap();
    let then_branch = asrt(&[], &[], vec![pts("x", "b + 1"), pts("y", "a")]);
    let lhs = then_branch.clone();
    assert!(pure_solve(&[p("a < b")], &p("a < b")).is_valid());
    let against_cond = prove_entail(&swap_sorts(), &[p("a < b")], &lhs, &spec.post);
    let against_branch = prove_entail(&swap_sorts(), &[p("a < b")], &lhs, &then_branch);
    assert_eq!(against_cond.is_proved(), against_branch.is_proved());
    assert!(against_cond.is_proved());
}

/// When the condition cannot be decided, both branches must entail.
#[test]
fn undecided_conditional_splits() {
    let spec = parse_single_spec(SWAP_SPEC).unwrap();
    // This heap matches only the then-branch, so with an undecided
    // condition the else-case fails and the whole entailment is residual.
    let lhs = asrt(&[], &[], vec![pts("x", "b + 1"), pts("y", "a")]);
    let out = prove_entail(&swap_sorts(), &[], &lhs, &spec.post);
    assert!(!out.is_proved(), "one branch cannot match: {:?}", out);
    // A heap valid under both branches goes through.
    let spec2 = parse_single_spec(
        r#"
spec probe
sig void probe(int *x)
with x: addr, a: int, b: int
params x
pre  { sep: x |-> a }
post { sep: if a < b then x |-> a else x |-> a }
"#,
    )
    .unwrap();
    let lhs2 = asrt(&[], &[], vec![pts("x", "a")]);
    let out2 = prove_entail(
        &sorts(&[("x", Sort::Addr), ("a", Sort::Int), ("b", Sort::Int)]),
        &[],
        &lhs2,
        &spec2.post,
    );
    assert!(out2.is_proved(), "{:?}", out2);
    assert!(out2.log().iter().any(|l| l.contains("split on conditional")));
}

#[test]
fn assertion_entails_itself() {
    let cases = vec![
        asrt(&[], &[], vec![]),
        asrt(&[], &["a <= b"], vec![pts("x", "a")]),
        asrt(&[], &[], vec![listrep("l", "q"), pts("x", "a + 1")]),
        asrt(&[], &["0 <= n"], vec![SpatialAtom::ArraySeg {
            elems: e("l"),
            addr: e("q"),
            len: e("n"),
        }]),
        asrt(&[], &[], vec![treerep("t", "r")]),
    ];
    let ctx = sorts(&[
        ("a", Sort::Int),
        ("b", Sort::Int),
        ("n", Sort::Int),
        ("x", Sort::Addr),
        ("q", Sort::Addr),
        ("r", Sort::Addr),
        ("l", Sort::List),
        ("t", Sort::Tree),
    ]);
    for a in cases {
        let out = prove_entail(&ctx, &[], &a, &a);
        let EntailOutcome::Proved { witnesses, .. } = &out else {
            panic!("P |- P failed for {}: {:?}", a, out)
        };
        assert!(witnesses.is_empty(), "identity needs no witnesses");
    }
}

#[test]
fn listrep_unfolds_to_node_and_tail() {
    let lhs = asrt(&[], &[], vec![listrep("h :: t", "p")]);
    let rhs = Assertion {
        exists: vec![("q".into(), Sort::Addr)],
        pure: vec![],
        spatial: vec![list_node("p", "h", "q"), listrep("t", "q")],
    };
    let ctx = sorts(&[("h", Sort::Int), ("t", Sort::List), ("p", Sort::Addr)]);
    let out = prove_entail(&ctx, &[], &lhs, &rhs);
    let EntailOutcome::Proved { witnesses, .. } = &out else {
        panic!("expected Proved, got {:?}", out)
    };
    assert!(
        witnesses.contains_key("q"),
        "the unfolded tail address must be produced as a witness: {:?}",
        witnesses
    );
}

#[test]
fn treerep_unfolds_to_node_and_subtrees() {
    let lhs = asrt(&[], &[], vec![treerep("node(k, lt, rt)", "p")]);
    let rhs = Assertion {
        exists: vec![("pl".into(), Sort::Addr), ("pr".into(), Sort::Addr)],
        pure: vec![],
        spatial: vec![
            SpatialAtom::PtsTo {
                addr: e("p"),
                share: SpecExpr::ShareL(Share::Full),
                value: PointsToValue::TreeNode {
                    key: e("k"),
                    left: e("pl"),
                    right: e("pr"),
                },
            },
            treerep("lt", "pl"),
            treerep("rt", "pr"),
        ],
    };
    let ctx = sorts(&[
        ("k", Sort::Int),
        ("lt", Sort::Tree),
        ("rt", Sort::Tree),
        ("p", Sort::Addr),
    ]);
    let out = prove_entail(&ctx, &[], &lhs, &rhs);
    assert!(out.is_proved(), "{:?}", out);
}

/// The return-site shape of list append: the callee's folded result plus
/// the caller's node re-fold into the appended representation.
#[test]
fn append_return_entailment_refolds() {
    let ctx = sorts(&[
        ("h1", Sort::Addr),
        ("r", Sort::Addr),
        ("a0", Sort::Int),
        ("t1", Sort::List),
        ("l1", Sort::List),
        ("l2", Sort::List),
    ]);
    let hyps = vec![p("l1 == a0 :: t1")];
    let lhs = asrt(&[], &[], vec![
        list_node("h1", "a0", "r"),
        listrep("t1 ++ l2", "r"),
    ]);
    let rhs = Assertion {
        exists: vec![("q".into(), Sort::Addr)],
        pure: vec![p("q == h1")],
        spatial: vec![listrep("l1 ++ l2", "q")],
    };
    let out = prove_entail(&ctx, &hyps, &lhs, &rhs);
    let EntailOutcome::Proved { witnesses, .. } = &out else {
        panic!("expected Proved, got {:?}", out)
    };
    assert_eq!(witnesses.get("q"), Some(&e("h1")));
}

#[test]
fn null_root_folds_empty_list() {
    let ctx = sorts(&[("l", Sort::List), ("p", Sort::Addr)]);
    let lhs = asrt(&[], &["p == null"], vec![listrep("l", "p")]);
    let rhs = asrt(&[], &["l == []"], vec![listrep("l", "p")]);
    assert!(prove_entail(&ctx, &[], &lhs, &rhs).is_proved());
    // Without the null hypothesis the pure claim is not provable.
    let lhs2 = asrt(&[], &[], vec![listrep("l", "p")]);
    let out = prove_entail(&ctx, &[], &lhs2, &rhs);
    let EntailOutcome::Residual { stage, .. } = &out else {
        panic!("expected Residual, got {:?}", out)
    };
    assert_eq!(stage, "pure");
}

#[test]
fn empty_heap_can_fold_empty_representations() {
    let ctx = sorts(&[]);
    let rhs = Assertion {
        exists: vec![("q".into(), Sort::Addr), ("m".into(), Sort::List)],
        pure: vec![],
        spatial: vec![SpatialAtom::ListRep { elems: e("m"), addr: e("q") }],
    };
    let out = prove_entail(&ctx, &[], &Assertion::emp(), &rhs);
    let EntailOutcome::Proved { witnesses, .. } = &out else {
        panic!("expected Proved, got {:?}", out)
    };
    assert_eq!(witnesses.get("q"), Some(&SpecExpr::Null));
    assert_eq!(witnesses.get("m"), Some(&SpecExpr::Nil));
}

#[test]
fn array_segment_matches_whole() {
    let ctx = sorts(&[("l", Sort::List), ("p", Sort::Addr), ("n", Sort::Int)]);
    let lhs = asrt(&[], &[], vec![SpatialAtom::ArraySeg {
        elems: e("l"),
        addr: e("p"),
        len: e("n"),
    }]);
    let rhs = Assertion {
        exists: vec![("m".into(), Sort::List)],
        pure: vec![],
        spatial: vec![SpatialAtom::ArraySeg { elems: e("m"), addr: e("p"), len: e("n") }],
    };
    let out = prove_entail(&ctx, &[], &lhs, &rhs);
    let EntailOutcome::Proved { witnesses, .. } = &out else {
        panic!("expected Proved, got {:?}", out)
    };
    assert_eq!(witnesses.get("m"), Some(&e("l")));
}

// ---------------------------------------------------------------------------
// Matching discipline
// ---------------------------------------------------------------------------

/// An atom consumed once cannot satisfy a second demand.
#[test]
fn multiset_discipline_no_reuse() {
    let ctx = sorts(&[("l", Sort::List), ("p", Sort::Addr)]);
    let one = asrt(&[], &[], vec![listrep("l", "p")]);
    let two = asrt(&[], &[], vec![listrep("l", "p"), listrep("l", "p")]);
    assert!(prove_entail(&ctx, &[], &one, &one).is_proved());
    assert!(
        !prove_entail(&ctx, &[], &one, &two).is_proved(),
        "one atom must not satisfy two demands"
    );
    assert!(
        !prove_entail(&ctx, &[], &two, &one).is_proved(),
        "leftover атoms are a leak, not a success"
    );
}

#[test]
fn unmatched_atom_reports_matching_stage() {
    let ctx = sorts(&[("x", Sort::Addr), ("a", Sort::Int)]);
    let rhs = asrt(&[], &[], vec![pts("x", "a")]);
    let out = prove_entail(&ctx, &[], &Assertion::emp(), &rhs);
    let EntailOutcome::Residual { stage, goal, .. } = &out else {
        panic!("expected Residual, got {:?}", out)
    };
    assert_eq!(stage, "matching");
    assert_eq!(goal.rhs.spatial.len(), 1, "the stuck sub-goal is minimal");
}

#[test]
fn frame_inference_returns_leftover() {
    let ctx = sorts(&[
        ("x", Sort::Addr),
        ("y", Sort::Addr),
        ("a", Sort::Int),
        ("b", Sort::Int),
    ]);
    let hyps = shape_and_pure(&ctx, &[pts("x", "a"), pts("y", "b")]);
    let got = match_atoms(
        &ctx,
        &hyps,
        &[pts("x", "a"), pts("y", "b")],
        &[pts("x", "a")],
        &[],
        MatchConfig { allow_leftover: true, unfold_budget: 4 },
    )
    .expect("framing must succeed");
    assert_eq!(got.leftover, vec![pts("y", "b")]);
    // Without leftover permission the same query leaks.
    let err = match_atoms(
        &ctx,
        &hyps,
        &[pts("x", "a"), pts("y", "b")],
        &[pts("x", "a")],
        &[],
        MatchConfig { allow_leftover: false, unfold_budget: 4 },
    );
    assert!(err.is_err());
}

fn shape_and_pure(
    _ctx: &BTreeMap<String, Sort>,
    atoms: &[SpatialAtom],
) -> Vec<PureProp> {
    sepsynth::entail::shape_facts(atoms)
}

// ---------------------------------------------------------------------------
// Heap-level soundness of proved entailments
// ---------------------------------------------------------------------------

fn probe_spec(pre: &Assertion, binders: &[(&str, Sort)]) -> FunSpec {
    FunSpec {
        name: "probe".into(),
        with_binders: binders.iter().map(|(n, s)| (n.to_string(), *s)).collect(),
        params: vec![],
        pre: pre.clone(),
        post: Assertion::emp(),
        ret: None,
        sig: CSignature { name: "probe".into(), params: vec![], ret: None },
    }
}

/// Sample small concrete models of `hyps /\ lhs` and require each to
/// satisfy `rhs` exactly (existentials included). This is the meaning of a
/// Proved verdict, checked against the independent concrete semantics.
fn assert_models_transfer(
    binders: &[(&str, Sort)],
    hyps: &[&str],
    lhs: &Assertion,
    rhs: &Assertion,
    min_models: usize,
) {
    let mut pre = lhs.clone();
    pre.pure.extend(hyps.iter().map(|s| p(s)));
    let spec = probe_spec(&pre, binders);
    let bounds = SampleBounds { int_min: -4, int_max: 4, max_len: 3, attempts: 4000 };
    let mut rng = ChaCha8Rng::seed_from_u64(0x00AD_BEEF);
    let mut models = 0usize;
    for _ in 0..160 {
        let Ok(sample) = sample_pre(&spec, &mut rng, &bounds) else { continue };
        models += 1;
        if let Err(err) = satisfies(rhs, &sample.ghosts, &sample.state, None) {
            panic!(
                "Proved entailment has a countermodel: ghosts {:?} heap {:?}: {}",
                sample.ghosts, sample.state.heap, err
            );
        }
    }
    assert!(
        models >= min_models,
        "only {} models sampled; the check is too weak",
        models
    );
}

#[test]
fn proved_entailments_hold_on_concrete_heaps() {
    // Unfolding a cons cell.
    let lhs = asrt(&[], &[], vec![listrep("h :: t", "p")]);
    let rhs = Assertion {
        exists: vec![("q".into(), Sort::Addr)],
        pure: vec![],
        spatial: vec![list_node("p", "h", "q"), listrep("t", "q")],
    };
    let ctx = sorts(&[("h", Sort::Int), ("t", Sort::List), ("p", Sort::Addr)]);
    assert!(prove_entail(&ctx, &[], &lhs, &rhs).is_proved());
    assert_models_transfer(
        &[("h", Sort::Int), ("t", Sort::List), ("p", Sort::Addr)],
        &[],
        &lhs,
        &rhs,
        40,
    );

    // The swap postcondition via its then-branch.
    let spec = parse_single_spec(SWAP_SPEC).unwrap();
    let swap_lhs = asrt(&[], &["a < b"], vec![pts("x", "b + 1"), pts("y", "a")]);
    assert!(prove_entail(&swap_sorts(), &[], &swap_lhs, &spec.post).is_proved());
    assert_models_transfer(
        &[("x", Sort::Addr), ("a", Sort::Int), ("y", Sort::Addr), ("b", Sort::Int)],
        &[],
        &swap_lhs,
        &spec.post,
        40,
    );

    // Null root means the empty list.
    let null_lhs = asrt(&[], &["p == null"], vec![listrep("l", "p")]);
    let null_rhs = asrt(&[], &["l == []"], vec![listrep("l", "p")]);
    let nctx = sorts(&[("l", Sort::List), ("p", Sort::Addr)]);
    assert!(prove_entail(&nctx, &[], &null_lhs, &null_rhs).is_proved());
    assert_models_transfer(
        &[("l", Sort::List), ("p", Sort::Addr)],
        &[],
        &null_lhs,
        &null_rhs,
        20,
    );
}

/// An entailment the engine must NOT prove, demonstrated by an actual
/// countermodel: a nonempty list at a non-null root.
#[test]
fn refused_entailments_have_countermodels() {
    let ctx = sorts(&[("l", Sort::List), ("p", Sort::Addr)]);
    let lhs = asrt(&[], &[], vec![listrep("l", "p")]);
    let rhs = asrt(&[], &["l == []"], vec![listrep("l", "p")]);
    assert!(!prove_entail(&ctx, &[], &lhs, &rhs).is_proved());

    let spec = probe_spec(&lhs, &[("l", Sort::List), ("p", Sort::Addr)]);
    let bounds = SampleBounds { int_min: -4, int_max: 4, max_len: 3, attempts: 4000 };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut refuted = false;
    for _ in 0..100 {
        let Ok(sample) = sample_pre(&spec, &mut rng, &bounds) else { continue };
        if satisfies(&rhs, &sample.ghosts, &sample.state, None).is_err() {
            refuted = true;
            break;
        }
    }
    assert!(refuted, "a countermodel must exist for the refused entailment");
}
