use sepsynth::entail::pure_solve_ctx;
use sepsynth::spec::parse::{parse_expr, parse_prop};
use sepsynth::spec::{PureProp, Sort};
use std::collections::BTreeMap;

fn main() {
    let mut sorts = BTreeMap::new();
    sorts.insert("l1".to_string(), Sort::List);
    sorts.insert("l2".to_string(), Sort::List);
    let hyps = vec![parse_prop("l1 == []").unwrap()];
    let goal = PureProp::eq(
        parse_expr("l1 ++ l2").unwrap(),
        parse_expr("l2").unwrap(),
    );
    println!("{:?}", pure_solve_ctx(&sorts, &hyps, &goal));

    // And the cons case that already works, for contrast.
    let mut sorts2 = sorts.clone();
    sorts2.insert("h".to_string(), Sort::Int);
    sorts2.insert("t".to_string(), Sort::List);
    let hyps2 = vec![parse_prop("l1 == h :: t").unwrap()];
    let goal2 = PureProp::eq(
        parse_expr("l1 ++ l2").unwrap(),
        parse_expr("h :: (t ++ l2)").unwrap(),
    );
    println!("{:?}", pure_solve_ctx(&sorts2, &hyps2, &goal2));
}
