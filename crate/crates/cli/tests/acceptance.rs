//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use tempfile::TempDir;

use ocaflat::a2a::{build_a2a, encode_gamma, membership};
use ocaflat::automaton::{
    bounded_reach_oracle, rep_reach_oracle, validate_run, Configuration, CounterMachine, MachineBuilder,
    ParamInstantiation, StateId,
};
use ocaflat::freeze::{self, eval, is_flat, nnf, parse, render, Formula, LassoDataWord, Letter, RegisterAssignment};
use ocaflat::galil::{vv_return, vv_run, ReachOptions};
use ocaflat::io::{MachineFile, WitnessFile};
use ocaflat::random::{
    all_gammas, random_formula, random_lasso, random_machine, random_sentence, rng, FormulaShape, MachineShape,
};
use ocaflat::reductions::{
    bit, bits, buchi_to_reach, counter_formula, gadget_labels, mc_oracle, model_check, succinct_to_unary, McOptions,
};
use ocaflat::strategy::{LevelSolver, ReachStrategy};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(failures: usize, total: usize, what: &str) -> Outcome {
    Outcome {
        passed: failures == 0 && total > 0,
        detail: format!("{}/{} {what}", total - failures, total),
    }
}

/// Runs the `check` command on a witness, as an outside referee would.
fn referee(dir: &Path, tag: &str, m: &CounterMachine, w: &WitnessFile, formula: Option<&Formula>) -> bool {
    let mp = dir.join(format!("{tag}-machine.json"));
    let wp = dir.join(format!("{tag}-witness.json"));
    std::fs::write(&mp, MachineFile::from_machine(m).to_json()).unwrap();
    std::fs::write(&wp, w.to_json()).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ocaflat"));
    cmd.arg("check").arg(&wp).arg(&mp);
    if let Some(f) = formula {
        cmd.arg("--formula").arg(render(f));
    }
    cmd.output().expect("binary runs").status.code() == Some(0)
}

fn alternating_automaton_suite() -> Outcome {
    let mut r = rng(0xacc1);
    let (mut failures, mut total) = (0, 0);
    for _ in 0..200 {
        let params = r.gen_range(0..=2);
        let m = random_machine(&mut r, &MachineShape::ocap(5, params));
        for target in 0..m.num_states() {
            let t = build_a2a(&m, target).unwrap();
            for gamma in all_gammas(m.num_params(), 3) {
                let w = encode_gamma(&gamma, 0);
                let oracle = bounded_reach_oracle(&m, &gamma, target, 6).unwrap().is_some();
                total += 1;
                if membership(&t.a2a, &w, Some(6)) != oracle {
                    failures += 1;
                }
            }
        }
    }
    outcome(failures, total, "(machine, target, gamma) verdicts agree")
}

/// Every run of length at most `limit` from `(q, v)` whose intermediate
/// values lie strictly between `lo` and `hi`; returns the configurations
/// such runs end in.
fn interval_endpoints(
    m: &CounterMachine,
    q: StateId,
    v: u64,
    lo: u64,
    hi: u64,
    limit: usize,
) -> BTreeSet<Configuration> {
    let gamma = ParamInstantiation::default();
    let mut ends = BTreeSet::new();
    let mut depth = HashMap::from([(Configuration::new(q, v), 0usize)]);
    let mut queue = VecDeque::from([Configuration::new(q, v)]);
    while let Some(c) = queue.pop_front() {
        let d = depth[&c];
        if d == limit {
            continue;
        }
        for &t in m.outgoing(c.state) {
            let Some(value) = m.fire(t, &gamma, c.value).unwrap() else {
                continue;
            };
            let next = Configuration::new(m.transition(t).to, value);
            ends.insert(next);
            if lo < value && value < hi && !depth.contains_key(&next) {
                depth.insert(next, d + 1);
                queue.push_back(next);
            }
        }
    }
    ends
}

fn interval_suite() -> Outcome {
    let mut r = rng(0xacc2);
    let (mut failures, mut total) = (0, 0);
    for _ in 0..200 {
        let m = random_machine(&mut r, &MachineShape::oca(6));
        let n = m.num_states();
        for q in 0..n {
            for v in 0..=12u64 {
                for v2 in 0..=12u64 {
                    let (lo, hi) = (v.min(v2), v.max(v2));
                    let limit = ((hi - lo) as usize + 2) * n * n;
                    let ends = interval_endpoints(&m, q, v, lo, hi, limit);
                    for q2 in 0..n {
                        let run = (q == q2 && v == v2) || ends.contains(&Configuration::new(q2, v2));
                        let ret = q == q2 || ends.contains(&Configuration::new(q2, v));
                        total += 2;
                        failures += usize::from(vv_run(&m, q, q2, v, v2).unwrap() != run);
                        failures += usize::from(vv_return(&m, q, q2, v, v2).unwrap() != ret);
                    }
                }
            }
        }
    }
    outcome(failures, total, "interval queries agree")
}

fn solver_suite(dir: &Path) -> Outcome {
    let mut r = rng(0xacc3);
    let (mut failures, mut total, mut certified) = (0, 0, 0);
    for i in 0..200 {
        let params = r.gen_range(0..=2);
        let m = random_machine(&mut r, &MachineShape::ocapc(5, params, 3));
        let cap = 4 + (m.num_states() as u64).pow(3);
        for target in 0..m.num_states() {
            let oracle = all_gammas(m.num_params(), 4)
                .iter()
                .any(|g| bounded_reach_oracle(&m, g, target, cap).unwrap().is_some());
            let got = LevelSolver.solve(&m, target, &ReachOptions::with_bound(4)).unwrap();
            total += 1;
            if got.is_present() != oracle {
                failures += 1;
            }
            if let Some(w) = got.witness() {
                let file = WitnessFile::from_run(&m, &w.gamma, &w.run);
                if referee(dir, &format!("s{i}-{target}"), &m, &file, None) {
                    certified += 1;
                } else {
                    failures += 1;
                }
            }
        }
    }
    let mut o = outcome(failures, total, "verdicts agree");
    o.detail.push_str(&format!(", {certified} witnesses accepted by check"));
    o
}

fn buchi_suite() -> Outcome {
    let mut r = rng(0xacc4);
    let (mut failures, mut total, mut positive) = (0, 0, 0);
    for _ in 0..100 {
        let params = r.gen_range(0..=2);
        let m = random_machine(&mut r, &MachineShape::ocap(4, params));
        let b = 3 + m.num_states() as u64;
        for good in 0..m.num_states() {
            let red = buchi_to_reach(&m, good, None).unwrap();
            for gamma in all_gammas(m.num_params(), 3) {
                let oracle = rep_reach_oracle(&m, &gamma, &BTreeSet::from([good]), 12)
                    .unwrap()
                    .is_some();
                let opts = ReachOptions {
                    bound: b,
                    pinned: gamma.0.iter().copied().enumerate().collect(),
                    ceiling: None,
                };
                let got = LevelSolver.solve(&red.machine, red.target, &opts).unwrap();
                let lifted = got.witness().map(|w| red.lasso_from_witness(w).is_ok());
                total += 1;
                positive += usize::from(oracle);
                if got.is_present() != oracle || lifted == Some(false) {
                    failures += 1;
                }
            }
        }
    }
    let mut o = outcome(failures, total, "repeated-reachability verdicts agree");
    o.detail.push_str(&format!(" ({positive} positive)"));
    o
}

/// The data word of a gadget traversal, padded with the target state
/// forever.
fn gadget_word(z: i64) -> (Vec<Letter>, Vec<Letter>, ocaflat::reductions::Alphabet) {
    let mut b = MachineBuilder::new("q");
    b.update("q", z, "p").update("p", 0, "p");
    let red = succinct_to_unary(&b.build().unwrap(), &Formula::True).unwrap();
    let labels = red.gadget_labels(0).unwrap();
    let letters: Vec<Letter> = labels
        .iter()
        .map(|l| Letter {
            props: l.clone(),
            value: 0,
        })
        .collect();
    let tail = vec![Letter {
        props: labels.last().unwrap().clone(),
        value: z.unsigned_abs(),
    }];
    (letters, tail, red.alphabet)
}

fn holds(prefix: &[Letter], cycle: &[Letter], f: &Formula) -> bool {
    let w = LassoDataWord::exact(prefix.to_vec(), cycle.to_vec()).unwrap();
    eval(&w, 0, &RegisterAssignment::new(), f).unwrap()
}

fn counting_suite() -> Outcome {
    let mut problems = Vec::new();
    let six = gadget_labels(6).unwrap();
    if six != "#6 100 #6 010 #6 110 #6 001 #6 101 #6 011 #6" {
        problems.push(format!("z=6 emitted `{six}`"));
    }
    for z in 2..=9i64 {
        let text = gadget_labels(z).unwrap();
        let delim = format!("#{z}");
        let counted: Vec<u64> = text
            .split(&delim)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|chunk| {
                let digits: String = chunk.split_whitespace().collect();
                digits.chars().rev().fold(0, |acc, c| 2 * acc + u64::from(c == '1'))
            })
            .collect();
        let expected: Vec<u64> = (1..=z as u64).collect();
        let widths_ok = text
            .split(&delim)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .all(|c| c.split_whitespace().collect::<String>().len() == bits(z));
        if counted != expected || !widths_ok || (1..=bits(z)).any(|i| bit(z, i) != ((z >> (i - 1)) & 1 == 1)) {
            problems.push(format!("z={z} emitted `{text}`"));
        }
        let (letters, tail, alpha) = gadget_word(z);
        if !holds(&letters, &tail, &counter_formula(&alpha)) {
            problems.push(format!("Counter fails on the z={z} sequence"));
        }
    }
    let mut r = rng(0xacc5);
    let mut survived = Vec::new();
    for _ in 0..50 {
        let z = r.gen_range(2..=9i64);
        let (letters, tail, alpha) = gadget_word(z);
        let counter = counter_formula(&alpha);
        let tokens = [alpha.zero.clone(), alpha.one.clone(), alpha.delims[&z].clone()];
        // positions 1..len-1 are the gadget; the ends are the source states
        let i = r.gen_range(1..letters.len() - 1);
        let current = letters[i].props.iter().next().cloned();
        let choices: Vec<&String> = tokens.iter().filter(|t| Some(*t) != current.as_ref()).collect();
        let mut broken = letters.clone();
        broken[i].props = BTreeSet::from([choices[r.gen_range(0..choices.len())].clone()]);
        if holds(&broken, &tail, &counter) {
            let from = alpha.token(&letters[i].props);
            let to = alpha.token(&broken[i].props);
            survived.push(format!("z={z} position {i} {from}->{to}"));
        }
    }
    if !survived.is_empty() {
        problems.push(format!(
            "{} of 50 mutations still satisfy Counter: {}",
            survived.len(),
            survived.join(", ")
        ));
    }
    Outcome {
        passed: problems.is_empty(),
        detail: if problems.is_empty() {
            "z=6 reads #6 100 #6 010 ... #6, z=2..9 count 1..|z| least significant bit first, 50/50 mutations falsify Counter".into()
        } else {
            problems.join("; ")
        },
    }
}

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

fn model_checking_suite(dir: &Path) -> Outcome {
    let up = machine(&[("q", 1, "q")], &[("q", "p")]);
    let stutter = machine(&[("q", 0, "q")], &[]);
    let zig = machine(
        &[("a", 1, "b"), ("b", 1, "c"), ("c", -1, "d"), ("d", -1, "a")],
        &[("c", "top")],
    );
    let jump = machine(&[("a", 3, "b"), ("b", -3, "a")], &[("b", "hi")]);
    // a request at some value, served one step higher, then idle
    let late = machine(&[("r", 1, "s"), ("s", 0, "s")], &[("r", "req"), ("s", "serve")]);
    // a request served at the same value, forever
    let prompt = machine(&[("r", 0, "s"), ("s", 0, "r")], &[("r", "req"), ("s", "serve")]);
    let unserved = "F @r. (req & G (!serve | ![=r]))";
    let cases: Vec<(&str, &CounterMachine, &str)> = vec![
        ("up", &up, "G p"),
        ("up", &up, "true"),
        ("up", &up, "F @r. G ([<r] | [=r])"),
        ("up", &up, "F @r. X [=r]"),
        ("stutter", &stutter, "F @r. G [=r]"),
        ("stutter", &stutter, "F @r. G ([<r] | [=r])"),
        ("zig", &zig, "F (top & @r. X X X X [=r])"),
        ("zig", &zig, "@r. X X [>r]"),
        ("zig", &zig, "@r. X X [<r]"),
        ("zig", &zig, "F (top & @r. X (!top U (top & [=r])))"),
        ("late", &late, unserved),
        ("prompt", &prompt, unserved),
        ("jump", &jump, "F (hi & @r. X [<r])"),
        ("jump", &jump, "@r. X [=r]"),
    ];
    let mut problems = Vec::new();
    let mut positive = 0;
    for (i, (name, m, text)) in cases.iter().enumerate() {
        let f = parse(text).unwrap();
        let oracle = mc_oracle(m, &f, 12, 12).unwrap().is_some();
        let got = model_check(m, &f, &McOptions::with_bound(3), &LevelSolver).unwrap();
        if got.is_present() != oracle {
            problems.push(format!("{name} / {text}: got {}, oracle {oracle}", got.is_present()));
        }
        if let Some(w) = got.witness() {
            positive += 1;
            let file = WitnessFile::from_lasso(m, &w.gamma, &w.lasso);
            if !referee(dir, &format!("mc{i}"), m, &file, Some(&f)) {
                problems.push(format!("{name} / {text}: witness rejected by check"));
            }
        }
    }
    // the request/serve property itself is outside the flat fragment
    let served = parse("G @r. (req -> F (serve & [=r]))").unwrap();
    if freeze::check_flat(&served).is_ok()
        || model_check(&late, &served, &McOptions::with_bound(3), &LevelSolver).is_ok()
    {
        problems.push("the request/serve formula was accepted as flat".into());
    }
    Outcome {
        passed: problems.is_empty(),
        detail: if problems.is_empty() {
            format!(
                "{} pairs agree with the oracle, {positive} witnesses accepted by check",
                cases.len()
            )
        } else {
            problems.join("; ")
        },
    }
}

fn semantics_suite() -> Outcome {
    use Formula::*;
    let mut r = rng(0xacc7);
    let props: Vec<String> = ["p", "q"].map(String::from).to_vec();
    let shape = FormulaShape {
        props: props.clone(),
        registers: vec!["r".into(), "s".into()],
        depth: 4,
    };
    let mut failures = Vec::new();
    for i in 0..500 {
        let w = random_lasso(&mut r, &props, 4, 4, 5, true);
        let pos = r.gen_range(0..6);
        let nu: RegisterAssignment = shape
            .registers
            .iter()
            .map(|x| (x.clone(), r.gen_range(0..=5)))
            .collect();
        let a = random_formula(&mut r, &shape);
        let b = random_formula(&mut r, &shape);
        let ev = |f: &Formula| eval(&w, pos, &nu, f).unwrap();
        let not = |f: &Formula| Not(Box::new(f.clone()));
        let u = Until(Box::new(a.clone()), Box::new(b.clone()));
        let rl = Release(Box::new(a.clone()), Box::new(b.clone()));
        let checks = [
            (
                "until duality",
                ev(&not(&u)) == ev(&Release(Box::new(not(&a)), Box::new(not(&b)))),
            ),
            (
                "release duality",
                ev(&not(&rl)) == ev(&Until(Box::new(not(&a)), Box::new(not(&b)))),
            ),
            (
                "until expansion",
                ev(&u)
                    == ev(&freeze::or(
                        b.clone(),
                        freeze::and(a.clone(), Next(Box::new(u.clone()))),
                    )),
            ),
            (
                "release expansion",
                ev(&rl)
                    == ev(&freeze::and(
                        b.clone(),
                        freeze::or(a.clone(), Next(Box::new(rl.clone()))),
                    )),
            ),
            ("nnf", ev(&u) == ev(&nnf(&u)) && ev(&not(&rl)) == ev(&nnf(&not(&rl)))),
        ];
        for (law, ok) in checks {
            if !ok {
                failures.push(format!("{law} on pair {i}"));
            }
        }
        let s = random_sentence(&mut r, &shape);
        if is_flat(&nnf(&s)) != is_flat(&s) || is_flat(&nnf(&not(&s))) != is_flat(&not(&s)) {
            failures.push(format!("flatness changed under nnf on pair {i}"));
        }
    }
    Outcome {
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            "500/500 (formula, lasso) pairs satisfy every law".into()
        } else {
            format!("{} violations, first: {}", failures.len(), failures[0])
        },
    }
}

#[test]
fn acceptance_criteria() {
    let dir = TempDir::new().unwrap();
    type Criterion<'a> = (&'a str, u64, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (
            "1 alternating automaton membership equals bounded reachability",
            60,
            Box::new(alternating_automaton_suite),
        ),
        (
            "2 interval runs and returns equal the exhaustive oracle",
            60,
            Box::new(interval_suite),
        ),
        (
            "3 parametric reachability solver equals the instantiation oracle",
            120,
            Box::new(|| solver_suite(dir.path())),
        ),
        (
            "4 repeated reachability through the reduction equals the oracle",
            120,
            Box::new(buchi_suite),
        ),
        (
            "5 counting gadget sequences and the Counter formula",
            30,
            Box::new(counting_suite),
        ),
        (
            "6 end-to-end model checking equals lasso enumeration",
            120,
            Box::new(|| model_checking_suite(dir.path())),
        ),
        (
            "7 freeze LTL semantic laws on random inputs",
            60,
            Box::new(semantics_suite),
        ),
    ];
    let mut failed = Vec::new();
    for (name, limit, run) in &criteria {
        let started = Instant::now();
        let o = run();
        let elapsed = started.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let pass = o.passed && in_time;
        println!(
            "{} criterion {name}: {} ({:.1}s, limit {limit}s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn referee_rejects_a_corrupted_witness() {
    let dir = TempDir::new().unwrap();
    let m = machine(&[("a", 1, "a")], &[]);
    let mut run = ocaflat::automaton::Run::single(Configuration::new(0, 0));
    run.push(0, Configuration::new(0, 1));
    let gamma = ParamInstantiation::default();
    validate_run(&m, &gamma, &run).unwrap();
    let good = WitnessFile::from_run(&m, &gamma, &run);
    assert!(referee(dir.path(), "ok", &m, &good, None));
    let mut bad = good.clone();
    bad.run[1].value = 3;
    assert!(!referee(dir.path(), "bad", &m, &bad, None));
}
