//! Seeded generators for machines, formulas and data words, shared by the
//! property suites and the `generate` command.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::automaton::{Cmp, CounterMachine, Op, ParamInstantiation, Transition};
use crate::freeze::{self, Formula, LassoDataWord, Letter};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shape of a random machine. Parameters are only used when `params > 0`
/// and constant tests only when `max_const > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineShape {
    pub min_states: usize,
    pub max_states: usize,
    pub params: usize,
    pub max_const: u64,
    /// Largest absolute update; values above 1 make the machine succinct.
    pub max_update: i64,
    /// Outgoing transitions per state, on average.
    pub density: f64,
    pub props: Vec<String>,
}

impl MachineShape {
    pub fn oca(max_states: usize) -> Self {
        MachineShape {
            min_states: 1,
            max_states,
            params: 0,
            max_const: 0,
            max_update: 1,
            density: 2.0,
            props: Vec::new(),
        }
    }

    pub fn ocap(max_states: usize, params: usize) -> Self {
        MachineShape {
            params,
            ..Self::oca(max_states)
        }
    }

    pub fn ocapc(max_states: usize, params: usize, max_const: u64) -> Self {
        MachineShape {
            max_const,
            ..Self::ocap(max_states, params)
        }
    }
}

fn random_op<R: Rng>(rng: &mut R, shape: &MachineShape, params: usize) -> Op {
    loop {
        match rng.gen_range(0..6) {
            0 | 1 => {
                let z = rng.gen_range(-shape.max_update..=shape.max_update);
                return Op::Update(if z == 0 { rng.gen_range(0..=1) } else { z });
            }
            2 => return Op::ZERO_TEST,
            3 | 4 if params > 0 => {
                let cmp = *Cmp::ALL.choose(rng).expect("nonempty");
                return Op::Param(cmp, rng.gen_range(0..params));
            }
            5 if shape.max_const > 0 => {
                let cmp = *Cmp::ALL.choose(rng).expect("nonempty");
                return Op::Const(cmp, rng.gen_range(1..=shape.max_const));
            }
            _ => {}
        }
    }
}

/// A random machine with states `q0, q1, ...` and parameters `x0, x1, ...`.
/// Every parameter is tested somewhere when the machine has transitions.
pub fn random_machine<R: Rng>(rng: &mut R, shape: &MachineShape) -> CounterMachine {
    let n = rng.gen_range(shape.min_states.max(1)..=shape.max_states.max(1));
    let count = ((n as f64) * shape.density).round().max(1.0) as usize;
    let mut transitions: Vec<Transition> = (0..count)
        .map(|_| Transition {
            from: rng.gen_range(0..n),
            op: random_op(rng, shape, shape.params),
            to: rng.gen_range(0..n),
        })
        .collect();
    for x in 0..shape.params {
        if !transitions.iter().any(|t| matches!(t.op, Op::Param(_, y) if y == x)) {
            let cmp = *Cmp::ALL.choose(rng).expect("nonempty");
            transitions.push(Transition {
                from: rng.gen_range(0..n),
                op: Op::Param(cmp, x),
                to: rng.gen_range(0..n),
            });
        }
    }
    let labels = (0..n)
        .map(|_| {
            shape
                .props
                .iter()
                .filter(|_| rng.gen_bool(0.5))
                .cloned()
                .collect::<BTreeSet<_>>()
        })
        .collect();
    CounterMachine::from_parts(
        (0..n).map(|i| format!("q{i}")).collect(),
        0,
        (0..shape.params).map(|i| format!("x{i}")).collect(),
        transitions,
        labels,
    )
    .expect("generated machines are well formed")
}

pub fn random_gamma<R: Rng>(rng: &mut R, params: usize, max: u64) -> ParamInstantiation {
    ParamInstantiation((0..params).map(|_| rng.gen_range(0..=max)).collect())
}

/// Every instantiation of `params` parameters with values `0..=max`, in
/// lexicographic order.
pub fn all_gammas(params: usize, max: u64) -> Vec<ParamInstantiation> {
    let mut out = vec![Vec::new()];
    for _ in 0..params {
        out = out
            .into_iter()
            .flat_map(|g| {
                (0..=max).map(move |v| {
                    let mut g = g.clone();
                    g.push(v);
                    g
                })
            })
            .collect();
    }
    out.into_iter().map(ParamInstantiation).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaShape {
    pub props: Vec<String>,
    pub registers: Vec<String>,
    pub depth: usize,
}

/// A random formula, possibly with free registers and freeze quantifiers
/// anywhere.
pub fn random_formula<R: Rng>(rng: &mut R, shape: &FormulaShape) -> Formula {
    gen_formula(rng, shape, shape.depth, &mut Vec::new(), false)
}

/// A random sentence: register tests only occur under a binder of the same
/// register.
pub fn random_sentence<R: Rng>(rng: &mut R, shape: &FormulaShape) -> Formula {
    gen_formula(rng, shape, shape.depth, &mut Vec::new(), true)
}

fn gen_atom<R: Rng>(rng: &mut R, shape: &FormulaShape, bound: &[String], closed: bool) -> Formula {
    let regs: &[String] = if closed { bound } else { &shape.registers };
    match rng.gen_range(0..6) {
        0 => Formula::True,
        1 => Formula::False,
        2 | 3 if !regs.is_empty() => {
            let cmp = *Cmp::ALL.choose(rng).expect("nonempty");
            freeze::regtest(cmp, regs.choose(rng).expect("nonempty"))
        }
        _ => match shape.props.choose(rng) {
            Some(p) => freeze::prop(p),
            None => Formula::True,
        },
    }
}

fn gen_formula<R: Rng>(
    rng: &mut R,
    shape: &FormulaShape,
    depth: usize,
    bound: &mut Vec<String>,
    closed: bool,
) -> Formula {
    if depth == 0 || rng.gen_bool(0.2) {
        return gen_atom(rng, shape, bound, closed);
    }
    let d = depth - 1;
    match rng.gen_range(0..8) {
        0 => freeze::not(gen_formula(rng, shape, d, bound, closed)),
        1 => freeze::and(
            gen_formula(rng, shape, d, bound, closed),
            gen_formula(rng, shape, d, bound, closed),
        ),
        2 => freeze::or(
            gen_formula(rng, shape, d, bound, closed),
            gen_formula(rng, shape, d, bound, closed),
        ),
        3 => freeze::next(gen_formula(rng, shape, d, bound, closed)),
        4 => freeze::until(
            gen_formula(rng, shape, d, bound, closed),
            gen_formula(rng, shape, d, bound, closed),
        ),
        5 => freeze::release(
            gen_formula(rng, shape, d, bound, closed),
            gen_formula(rng, shape, d, bound, closed),
        ),
        _ => match shape.registers.choose(rng) {
            Some(r) => {
                bound.push(r.clone());
                let body = gen_formula(rng, shape, d, bound, closed);
                bound.pop();
                freeze::freeze(r, body)
            }
            None => freeze::next(gen_formula(rng, shape, d, bound, closed)),
        },
    }
}

/// A random flat sentence in negation normal form, built so that freeze
/// quantifiers never sit where flatness forbids them.
pub fn random_flat_sentence<R: Rng>(rng: &mut R, shape: &FormulaShape) -> Formula {
    gen_flat(rng, shape, shape.depth, &mut Vec::new(), true)
}

fn gen_flat<R: Rng>(
    rng: &mut R,
    shape: &FormulaShape,
    depth: usize,
    bound: &mut Vec<String>,
    may_freeze: bool,
) -> Formula {
    if depth == 0 || rng.gen_bool(0.2) {
        let atom = gen_atom(rng, shape, bound, true);
        return if rng.gen_bool(0.3) {
            freeze::nnf(&freeze::not(atom))
        } else {
            atom
        };
    }
    let d = depth - 1;
    match rng.gen_range(0..7) {
        0 => freeze::and(
            gen_flat(rng, shape, d, bound, may_freeze),
            gen_flat(rng, shape, d, bound, may_freeze),
        ),
        1 => freeze::or(
            gen_flat(rng, shape, d, bound, may_freeze),
            gen_flat(rng, shape, d, bound, may_freeze),
        ),
        2 => freeze::next(gen_flat(rng, shape, d, bound, may_freeze)),
        3 => freeze::until(
            gen_flat(rng, shape, d, bound, false),
            gen_flat(rng, shape, d, bound, may_freeze),
        ),
        4 => freeze::release(
            gen_flat(rng, shape, d, bound, may_freeze),
            gen_flat(rng, shape, d, bound, false),
        ),
        _ if may_freeze && !shape.registers.is_empty() => {
            let r = shape.registers.choose(rng).expect("nonempty").clone();
            bound.push(r.clone());
            let body = gen_flat(rng, shape, d, bound, may_freeze);
            bound.pop();
            freeze::freeze(&r, body)
        }
        _ => freeze::next(gen_flat(rng, shape, d, bound, may_freeze)),
    }
}

/// A random lasso data word with a prefix of up to `max_prefix` letters and
/// a nonempty loop of up to `max_cycle` letters. With `allow_drift` the loop
/// climbs by a random amount per iteration.
pub fn random_lasso<R: Rng>(
    rng: &mut R,
    props: &[String],
    max_prefix: usize,
    max_cycle: usize,
    max_value: u64,
    allow_drift: bool,
) -> LassoDataWord {
    let letter = |rng: &mut R| Letter {
        props: props.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect(),
        value: rng.gen_range(0..=max_value),
    };
    let prefix = (0..rng.gen_range(0..=max_prefix)).map(|_| letter(rng)).collect();
    let cycle = (0..rng.gen_range(1..=max_cycle.max(1))).map(|_| letter(rng)).collect();
    let drift = if allow_drift && rng.gen_bool(0.5) {
        rng.gen_range(1..=2)
    } else {
        0
    };
    LassoDataWord::new(prefix, cycle, drift).expect("generated words are well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::{classify, MachineClass};

    #[test]
    fn shapes_produce_their_class() {
        let mut r = rng(7);
        for _ in 0..50 {
            let m = random_machine(&mut r, &MachineShape::oca(6));
            assert_eq!(classify(&m), MachineClass::Oca);
            let m = random_machine(&mut r, &MachineShape::ocap(5, 2));
            assert!(classify(&m).is_within(MachineClass::OcaP));
            assert_eq!(m.num_params(), 2);
            let m = random_machine(&mut r, &MachineShape::ocapc(5, 2, 3));
            assert!(classify(&m).is_within(MachineClass::OcaPC));
        }
    }

    #[test]
    fn same_seed_same_output() {
        let shape = MachineShape::ocapc(5, 2, 3);
        assert_eq!(random_machine(&mut rng(3), &shape), random_machine(&mut rng(3), &shape));
    }

    #[test]
    fn generated_sentences_are_closed_and_flat_ones_flat() {
        let shape = FormulaShape {
            props: vec!["a".into(), "b".into()],
            registers: vec!["r".into(), "s".into()],
            depth: 4,
        };
        let mut r = rng(11);
        for _ in 0..200 {
            assert!(freeze::is_sentence(&random_sentence(&mut r, &shape)));
            let f = random_flat_sentence(&mut r, &shape);
            assert!(
                freeze::is_sentence(&f) && freeze::is_flat(&f) && freeze::is_nnf(&f),
                "{f}"
            );
        }
    }

    #[test]
    fn gamma_enumeration() {
        assert_eq!(all_gammas(2, 3).len(), 16);
        assert_eq!(all_gammas(0, 3), vec![ParamInstantiation(vec![])]);
    }
}
