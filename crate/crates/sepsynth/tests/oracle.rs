//! Concrete-semantics tests: interpreter behavior, pre-state sampling and
//! materialization, assertion evaluation, and the fuzzer's verdicts.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sepsynth::c::parse;
use sepsynth::oracle::{
    fuzz_check, interp, sample_pre, satisfies, ConcreteState, ConcreteValue, Fault, FuzzConfig,
    FuzzOutcome, GhostEnv, GhostVal, HeapObj, Machine, SampleBounds, SampleErr,
};
use sepsynth::spec::parse::parse_single_spec;

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

fn cell(state: &ConcreteState, a: usize) -> ConcreteValue {
    match state.heap.get(&a) {
        Some(HeapObj::Cell(v)) => *v,
        other => panic!("expected a cell at @{}, found {:?}", a, other),
    }
}

#[test]
fn swap_concrete_run_takes_the_less_than_branch() {
    let prog = parse(SWAP_SRC).unwrap();
    let mut st = ConcreteState::new();
    let x = st.alloc(HeapObj::Cell(ConcreteValue::Int(3)));
    let y = st.alloc(HeapObj::Cell(ConcreteValue::Int(5)));
    let (ret, end) = interp(
        &prog,
        "swap",
        &[ConcreteValue::Addr(x), ConcreteValue::Addr(y)],
        st,
    )
    .unwrap();
    assert_eq!(ret, None);
    assert_eq!(cell(&end, x), ConcreteValue::Int(6));
    assert_eq!(cell(&end, y), ConcreteValue::Int(3));
}

#[test]
fn append_with_null_first_list_returns_second_unchanged() {
    let prog = parse(APPEND_SRC).unwrap();
    let mut st = ConcreteState::new();
    let h2 = st.alloc(HeapObj::Sll {
        head: ConcreteValue::Int(1),
        next: ConcreteValue::Addr(0),
    });
    let before = st.clone();
    let (ret, end) = interp(
        &prog,
        "append",
        &[ConcreteValue::NULL, ConcreteValue::Addr(h2)],
        st,
    )
    .unwrap();
    assert_eq!(ret, Some(ConcreteValue::Addr(h2)));
    assert_eq!(end, before);
}

#[test]
fn empty_void_function_leaves_heap_unchanged() {
    let prog = parse("void nop(void) { }").unwrap();
    let mut st = ConcreteState::new();
    st.alloc(HeapObj::Cell(ConcreteValue::Int(7)));
    let before = st.clone();
    let (ret, end) = interp(&prog, "nop", &[], st).unwrap();
    assert_eq!(ret, None);
    assert_eq!(end, before);
}

#[test]
fn interpreter_faults() {
    let deref_null = parse("int get(int *p) { return *p; }").unwrap();
    let r = interp(&deref_null, "get", &[ConcreteValue::NULL], ConcreteState::new());
    assert_eq!(r.unwrap_err(), Fault::NullDeref);

    let overflow = parse("int big(int n) { return n * n; }").unwrap();
    let r = interp(
        &overflow,
        "big",
        &[ConcreteValue::Int(1 << 20)],
        ConcreteState::new(),
    );
    assert_eq!(r.unwrap_err(), Fault::Overflow);

    let div = parse("int d(int a, int b) { return a / b; }").unwrap();
    let r = interp(
        &div,
        "d",
        &[ConcreteValue::Int(1), ConcreteValue::Int(0)],
        ConcreteState::new(),
    );
    assert_eq!(r.unwrap_err(), Fault::DivByZero);

    let loops = parse("void spin(void) { while (1) { } }").unwrap();
    let r = interp(&loops, "spin", &[], ConcreteState::new());
    assert_eq!(r.unwrap_err(), Fault::DepthExceeded);

    let recurse = parse("int down(int n) { return down(n); }").unwrap();
    let r = interp(&recurse, "down", &[ConcreteValue::Int(1)], ConcreteState::new());
    assert_eq!(r.unwrap_err(), Fault::DepthExceeded);
}

#[test]
fn sample_pre_materializes_list_chains() {
    let spec = parse_single_spec(APPEND_SPEC).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bounds = SampleBounds { max_len: 3, ..SampleBounds::default() };
    let sample = sample_pre(&spec, &mut rng, &bounds).unwrap();

    // The ghost valuation records both lists and both head addresses.
    let l1 = match sample.ghosts.get("l1") {
        Some(GhostVal::List(xs)) => xs.clone(),
        other => panic!("l1 should be a list, got {:?}", other),
    };
    let h1 = match sample.ghosts.get("h1") {
        Some(GhostVal::Addr(a)) => *a,
        other => panic!("h1 should be an address, got {:?}", other),
    };
    // Walk the materialized chain and compare against the ghost list.
    let mut cur = h1;
    let mut walked = Vec::new();
    while cur != 0 {
        match sample.state.heap.get(&cur) {
            Some(HeapObj::Sll { head, next }) => {
                walked.push(head.as_int().unwrap());
                cur = match next {
                    ConcreteValue::Addr(a) => *a,
                    other => panic!("bad next {:?}", other),
                };
            }
            other => panic!("expected sll node at @{}, found {:?}", cur, other),
        }
    }
    assert_eq!(walked, l1);
    assert_eq!(sample.args.len(), 2);

    // And the evaluator agrees the pre holds on the produced state.
    satisfies(&spec.pre, &sample.ghosts, &sample.state, None).unwrap();
}

#[test]
fn sample_pre_on_emp_gives_empty_heap() {
    let spec = parse_single_spec(
        "spec f\nsig void f(void)\npre { }\npost { }",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sample = sample_pre(&spec, &mut rng, &SampleBounds::default()).unwrap();
    assert!(sample.state.heap.is_empty());
    assert!(sample.args.is_empty());
}

#[test]
fn sample_pre_with_false_pure_part_is_unsat() {
    let spec = parse_single_spec(
        "spec f\nsig void f(void)\npre { pure: false }\npost { }",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    match sample_pre(&spec, &mut rng, &SampleBounds::default()) {
        Err(SampleErr::Unsat { .. }) => {}
        other => panic!("expected Unsat, got {:?}", other.map(|s| s.ghosts)),
    }
}

#[test]
fn fuzz_passes_recursive_append_against_its_spec() {
    let prog = parse(APPEND_SRC).unwrap();
    let spec = parse_single_spec(APPEND_SPEC).unwrap();
    let machine = Machine::new(&[&prog]);
    let cfg = FuzzConfig { n: 1000, seed: 42, ..FuzzConfig::default() };
    let outcome = fuzz_check(&machine, &spec, &cfg);
    assert!(outcome.is_pass(), "expected Pass, got {:?}", outcome);
}

#[test]
fn fuzz_passes_swap_against_its_spec() {
    let prog = parse(SWAP_SRC).unwrap();
    let spec = parse_single_spec(SWAP_SPEC).unwrap();
    let machine = Machine::new(&[&prog]);
    let cfg = FuzzConfig { n: 500, seed: 42, ..FuzzConfig::default() };
    let outcome = fuzz_check(&machine, &spec, &cfg);
    assert!(outcome.is_pass(), "expected Pass, got {:?}", outcome);
}

#[test]
fn fuzz_catches_swap_missing_the_increment() {
    let buggy = r#"
void swap(int *x, int *y) {
    int a = *x;
    int b = *y;
    if (a < b) {
        *x = b;
        *y = a;
    } else {
        *y = a;
    }
}
"#;
    let prog = parse(buggy).unwrap();
    let spec = parse_single_spec(SWAP_SPEC).unwrap();
    let machine = Machine::new(&[&prog]);
    let cfg = FuzzConfig { n: 200, seed: 42, ..FuzzConfig::default() };
    match fuzz_check(&machine, &spec, &cfg) {
        FuzzOutcome::Counterexample(ce) => {
            assert!(ce.observed.contains("post violated"), "observed: {}", ce.observed);
        }
        other => panic!("expected a counterexample, got {:?}", other),
    }
}

#[test]
fn fuzz_with_zero_iterations_passes_vacuously() {
    let prog = parse(SWAP_SRC).unwrap();
    let spec = parse_single_spec(SWAP_SPEC).unwrap();
    let machine = Machine::new(&[&prog]);
    let cfg = FuzzConfig { n: 0, seed: 42, ..FuzzConfig::default() };
    assert_eq!(fuzz_check(&machine, &spec, &cfg), FuzzOutcome::Pass { runs: 0 });
}

#[test]
fn satisfies_rejects_leaked_objects() {
    let spec = parse_single_spec(SWAP_SPEC).unwrap();
    let mut env = GhostEnv::new();
    let mut st = ConcreteState::new();
    let x = st.alloc(HeapObj::Cell(ConcreteValue::Int(4)));
    let y = st.alloc(HeapObj::Cell(ConcreteValue::Int(3)));
    st.alloc(HeapObj::Cell(ConcreteValue::Int(99)));
    env.insert("x".into(), GhostVal::Addr(x));
    env.insert("a".into(), GhostVal::Int(4));
    env.insert("y".into(), GhostVal::Addr(y));
    env.insert("b".into(), GhostVal::Int(3));
    // Post (else branch): x |-> a+1 = 5 ... but the third cell is never
    // described by the assertion, so this must fail as a leak.
    let mut st2 = st.clone();
    if let Some(HeapObj::Cell(v)) = st2.heap.get_mut(&x) {
        *v = ConcreteValue::Int(5);
    }
    if let Some(HeapObj::Cell(v)) = st2.heap.get_mut(&y) {
        *v = ConcreteValue::Int(4);
    }
    let err = satisfies(&spec.post, &env, &st2, None).unwrap_err();
    assert!(matches!(err, sepsynth::oracle::EvalErr::Leak(_)), "got {:?}", err);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Every sample the generator accepts must satisfy the pre under the
    // assertion-evaluation semantics.
    #[test]
    fn materialization_satisfies_the_pre(seed in 0u64..1000) {
        let spec = parse_single_spec(APPEND_SPEC).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = sample_pre(&spec, &mut rng, &SampleBounds::default()).unwrap();
        prop_assert!(satisfies(&spec.pre, &sample.ghosts, &sample.state, None).is_ok());
    }

    #[test]
    fn materialization_satisfies_swap_pre(seed in 0u64..1000) {
        let spec = parse_single_spec(SWAP_SPEC).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = sample_pre(&spec, &mut rng, &SampleBounds::default()).unwrap();
        prop_assert!(satisfies(&spec.pre, &sample.ghosts, &sample.state, None).is_ok());
    }
}
