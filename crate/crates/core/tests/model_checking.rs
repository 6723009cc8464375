use std::time::Instant;

use ocaflat::automaton::{CounterMachine, MachineBuilder};
use ocaflat::freeze::parse;
use ocaflat::reductions::{mc_oracle, model_check, McOptions};
use ocaflat::strategy::LevelSolver;

fn machine(edges: &[(&str, i64, &str)], labels: &[(&str, &str)]) -> CounterMachine {
    let mut b = MachineBuilder::new(edges[0].0);
    for (f, z, t) in edges {
        b.update(f, *z, t);
    }
    for (q, p) in labels {
        b.label(q, p);
    }
    b.build().unwrap()
}

fn check(a: &CounterMachine, text: &str) -> bool {
    let f = parse(text).unwrap();
    let started = Instant::now();
    let out = model_check(a, &f, &McOptions::with_bound(3), &LevelSolver).unwrap();
    let oracle = mc_oracle(a, &f, 12, 12).unwrap();
    eprintln!("{text}: {:?} in {:?}", out.is_present(), started.elapsed());
    assert_eq!(out.is_present(), oracle.is_some(), "{text}");
    out.is_present()
}

#[test]
fn documented_examples() {
    let up = machine(&[("q", 1, "q")], &[("q", "p")]);
    assert!(check(&up, "G p"));
    assert!(check(&up, "true"));
    assert!(!check(&up, "F @r. X [=r]"));
    assert!(!check(&up, "F @r. G ([<r] | [=r])"));
    let flat = machine(&[("q", 0, "q")], &[]);
    assert!(check(&flat, "F @r. G [=r]"));
}

#[test]
fn register_comparisons() {
    let zig = machine(
        &[("a", 1, "b"), ("b", 1, "c"), ("c", -1, "d"), ("d", -1, "a")],
        &[("c", "top")],
    );
    assert!(check(&zig, "F (top & @r. X X X X [=r])"));
    assert!(check(&zig, "@r. X X [>r]"));
    assert!(!check(&zig, "@r. X X [<r]"));
    assert!(check(&zig, "F (top & @r. X (!top U (top & [=r])))"));
}

#[test]
fn succinct_updates() {
    let jump = machine(&[("a", 3, "b"), ("b", -3, "a")], &[("b", "hi")]);
    assert!(check(&jump, "F (hi & @r. X [<r])"));
    assert!(!check(&jump, "@r. X [=r]"));
}
