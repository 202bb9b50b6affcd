use sepsynth::c::{parse, typecheck};
use sepsynth::spec::parse::parse_spec_file;
use sepsynth::verify::{verify, VerifyConfig};

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

fn main() {
    let env = parse_spec_file(APPEND_SPEC).unwrap();
    let prog = parse(APPEND_SRC).unwrap();
    let prog = typecheck(&prog, &env.signatures()).unwrap();
    let out = verify(&prog, "append", &env, &VerifyConfig::default()).unwrap();
    println!("status: {:?}", out.report.status);
    for n in &out.report.notes { println!("note: {}", n); }
    for t in &out.report.traces { println!("closed: {:?}", t); }
    for sc in &out.report.side_conditions {
        println!("--- SC at {:?} trace {:?}\nreason: {}\ngoal: {}", sc.span, sc.trace, sc.reason, sc.goal_pretty);
    }
}
