//! Replacing binary updates by unary counting gadgets, with a formula that
//! forces every gadget traversal to count correctly.

use std::collections::{BTreeMap, BTreeSet};

use crate::automaton::{require_class, CounterMachine, MachineClass, Op, StateId, Transition};
use crate::error::{Error, Result};
use crate::freeze::{self, check_flat, check_sentence, conj, disj, Formula};

use super::Names;

/// Number of binary digits of `|z|`.
pub fn bits(z: i64) -> usize {
    (64 - z.unsigned_abs().leading_zeros()) as usize
}

/// The `i`-th binary digit of `|z|`, counting from 1 at the least
/// significant end.
pub fn bit(z: i64, i: usize) -> bool {
    (z.unsigned_abs() >> (i - 1)) & 1 == 1
}

/// The fresh propositions of the gadgets: one delimiter per binary update
/// and the two digit propositions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    pub delims: BTreeMap<i64, String>,
    pub zero: String,
    pub one: String,
}

impl Alphabet {
    /// Fresh names for the delimiters of `zs`, avoiding `taken`.
    pub fn new<'a>(zs: impl IntoIterator<Item = i64>, taken: impl IntoIterator<Item = &'a String>) -> Self {
        let mut names = Names::new(taken);
        let delims = zs
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|z| {
                let base = if z < 0 {
                    format!("hash_m{}", -z)
                } else {
                    format!("hash_{z}")
                };
                (z, names.fresh(&base))
            })
            .collect();
        Alphabet {
            delims,
            zero: names.fresh("bit_0"),
            one: names.fresh("bit_1"),
        }
    }

    /// `Λ` as a set of propositions; empty when there are no binary updates.
    pub fn lambda(&self) -> BTreeSet<String> {
        if self.delims.is_empty() {
            return BTreeSet::new();
        }
        self.delims
            .values()
            .cloned()
            .chain([self.zero.clone(), self.one.clone()])
            .collect()
    }

    /// Renders a label as a token of a counting sequence: `#z` for a
    /// delimiter, `1` or `0` for a digit, `.` for anything else.
    pub fn token(&self, label: &BTreeSet<String>) -> String {
        if let Some((z, _)) = self.delims.iter().find(|(_, p)| label.contains(*p)) {
            format!("#{z}")
        } else if label.contains(&self.one) {
            "1".into()
        } else if label.contains(&self.zero) {
            "0".into()
        } else {
            ".".into()
        }
    }

    /// Joins consecutive digit tokens, so a gadget traversal reads like
    /// `#6 100 #6 010 ... #6`.
    pub fn render(&self, labels: &[BTreeSet<String>]) -> String {
        let mut out: Vec<String> = Vec::new();
        let mut digits = String::new();
        for l in labels {
            let t = self.token(l);
            if t == "0" || t == "1" {
                digits.push_str(&t);
                continue;
            }
            if !digits.is_empty() {
                out.push(std::mem::take(&mut digits));
            }
            out.push(t);
        }
        if !digits.is_empty() {
            out.push(digits);
        }
        out.join(" ")
    }
}

fn lambda_any(lambda: &BTreeSet<String>) -> Formula {
    disj(lambda.iter().map(|p| freeze::prop(p)))
}

fn lambda_none(lambda: &BTreeSet<String>) -> Formula {
    conj(lambda.iter().map(|p| freeze::not(freeze::prop(p))))
}

/// Relativizes a formula in negation normal form to the positions that
/// carry no proposition of `lambda`.
pub fn translate_formula(f: &Formula, lambda: &BTreeSet<String>) -> Formula {
    use Formula::*;
    if lambda.is_empty() {
        return f.clone();
    }
    let t = |g: &Formula| translate_formula(g, lambda);
    match f {
        True | False | Prop(_) | Not(_) | RegTest(..) => f.clone(),
        Freeze(r, a) => freeze::freeze(r, t(a)),
        Or(a, b) => freeze::or(t(a), t(b)),
        And(a, b) => freeze::and(t(a), t(b)),
        Next(a) => freeze::next(freeze::until(
            lambda_any(lambda),
            freeze::and(lambda_none(lambda), t(a)),
        )),
        Until(a, b) => freeze::until(
            freeze::implies(lambda_none(lambda), t(a)),
            freeze::and(lambda_none(lambda), t(b)),
        ),
        Release(a, b) => freeze::release(
            freeze::and(lambda_none(lambda), t(a)),
            freeze::implies(lambda_none(lambda), t(b)),
        ),
    }
}

fn next_n(n: usize, f: Formula) -> Formula {
    (0..n).fold(f, |acc, _| freeze::next(acc))
}

fn always(f: Formula) -> Formula {
    freeze::release(Formula::False, f)
}

/// `Init ∧ Fin ∧ Inc ∧ Exit` for every delimiter of the alphabet, in
/// negation normal form.
pub fn counter_formula(alpha: &Alphabet) -> Formula {
    let lambda = alpha.lambda();
    let zero = freeze::prop(&alpha.zero);
    let one = freeze::prop(&alpha.one);
    let digit = |b: bool| if b { one.clone() } else { zero.clone() };
    let mut parts = Vec::new();
    for (&z, d) in &alpha.delims {
        let hash = freeze::prop(d);
        let jump = |f: Formula| next_n(bits(z) + 1, f);
        let first = freeze::and(lambda_none(&lambda), freeze::next(hash.clone()));
        let last = freeze::and(hash.clone(), freeze::next(lambda_none(&lambda)));
        let last_minus = freeze::and(
            hash.clone(),
            freeze::next(freeze::until(freeze::or(zero.clone(), one.clone()), last.clone())),
        );
        let init = always(freeze::implies(
            first.clone(),
            next_n(
                2,
                freeze::and(one.clone(), freeze::next(freeze::until(zero.clone(), hash.clone()))),
            ),
        ));
        let fin = always(freeze::implies(
            last_minus.clone(),
            conj((1..=bits(z)).map(|i| next_n(i, digit(bit(z, i))))),
        ));
        let eq_suffix = freeze::until(
            freeze::or(
                freeze::and(zero.clone(), jump(zero.clone())),
                freeze::and(one.clone(), jump(one.clone())),
            ),
            hash.clone(),
        );
        let inc = always(freeze::implies(
            conj([hash.clone(), freeze::not(last_minus), freeze::not(last.clone())]),
            freeze::next(freeze::until(
                freeze::and(one.clone(), jump(zero.clone())),
                conj([zero.clone(), jump(one.clone()), freeze::next(eq_suffix)]),
            )),
        ));
        let exit = always(freeze::implies(first, freeze::eventually(last)));
        parts.extend([init, fin, inc, exit]);
    }
    freeze::nnf(&conj(parts))
}

/// `A'` and `φ'` with every binary update replaced by a counting gadget.
#[derive(Debug, Clone)]
pub struct UnaryReduction {
    pub machine: CounterMachine,
    pub formula: Formula,
    pub alphabet: Alphabet,
    pub source: CounterMachine,
    /// For every transition of `A'` that completes a step of `A`, that step.
    pub origin: Vec<Option<usize>>,
    /// For every binary transition of `A`, the gadget states: first
    /// delimiter, digit states `1..n`, their primed twins, second delimiter.
    pub gadgets: BTreeMap<usize, Gadget>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gadget {
    pub first: StateId,
    pub ones: Vec<StateId>,
    pub zeros: Vec<StateId>,
    pub second: StateId,
}

impl UnaryReduction {
    /// The states of `A'` visited when the gadget of transition `t` counts
    /// from 1 up to `|z|`, from its source state to its target state.
    pub fn gadget_path(&self, t: usize) -> Result<Vec<StateId>> {
        let g = self
            .gadgets
            .get(&t)
            .ok_or_else(|| Error::Argument(format!("transition {t} has no gadget")))?;
        let tr = self.source.transition(t);
        let Op::Update(z) = tr.op else {
            unreachable!("gadgets replace updates")
        };
        let mut path = vec![tr.from, g.first];
        for k in 1..=z.unsigned_abs() {
            for i in 0..bits(z) {
                path.push(if (k >> i) & 1 == 1 { g.ones[i] } else { g.zeros[i] });
            }
            path.push(g.second);
        }
        path.push(tr.to);
        Ok(path)
    }

    /// Labels along [`UnaryReduction::gadget_path`].
    pub fn gadget_labels(&self, t: usize) -> Result<Vec<BTreeSet<String>>> {
        Ok(self
            .gadget_path(t)?
            .into_iter()
            .map(|q| self.machine.label(q).clone())
            .collect())
    }

    pub fn is_source_state(&self, q: StateId) -> bool {
        q < self.source.num_states()
    }
}

/// The label sequence of a `z`-gadget traversal, rendered as tokens, for a
/// one-transition machine with empty labels.
pub fn gadget_labels(z: i64) -> Result<String> {
    let mut b = crate::automaton::MachineBuilder::new("q");
    b.update("q", z, "p");
    let red = succinct_to_unary(&b.build()?, &Formula::True)?;
    let labels = red.gadget_labels(0)?;
    Ok(red.alphabet.render(&labels[1..labels.len() - 1]))
}

pub fn succinct_to_unary(a: &CounterMachine, f: &Formula) -> Result<UnaryReduction> {
    require_class(a, MachineClass::OcaS, "OCA(S)")?;
    check_sentence(f)?;
    check_flat(f)?;
    let f = freeze::nnf(f);
    let zs: Vec<i64> = a
        .transitions()
        .iter()
        .filter_map(|t| match t.op {
            Op::Update(z) if z.abs() >= 2 => Some(z),
            _ => None,
        })
        .collect();
    let taken: BTreeSet<String> = a.propositions().into_iter().chain(f.propositions()).collect();
    let alphabet = Alphabet::new(zs, &taken);

    let mut names = Names::new(a.states());
    let mut states = a.states().to_vec();
    let mut labels = a.labels().to_vec();
    let mut transitions = Vec::new();
    let mut origin = Vec::new();
    let mut gadgets = BTreeMap::new();
    let mut new_state = |states: &mut Vec<String>, labels: &mut Vec<BTreeSet<String>>, name: String, label: &str| {
        states.push(names.fresh(&name));
        labels.push(BTreeSet::from([label.to_string()]));
        states.len() - 1
    };
    for (i, t) in a.transitions().iter().enumerate() {
        let z = match t.op {
            Op::Update(z) if z.abs() >= 2 => z,
            _ => {
                transitions.push(*t);
                origin.push(Some(i));
                continue;
            }
        };
        let delim = &alphabet.delims[&z];
        let first = new_state(&mut states, &mut labels, format!("g{i}_hash"), delim);
        let ones: Vec<StateId> = (1..=bits(z))
            .map(|k| new_state(&mut states, &mut labels, format!("g{i}_b{k}"), &alphabet.one))
            .collect();
        let zeros: Vec<StateId> = (1..=bits(z))
            .map(|k| new_state(&mut states, &mut labels, format!("g{i}_b{k}_n"), &alphabet.zero))
            .collect();
        let second = new_state(&mut states, &mut labels, format!("g{i}_hash_n"), delim);
        let mut add = |from, op, to, o| {
            transitions.push(Transition { from, op, to });
            origin.push(o);
        };
        let zero = Op::Update(0);
        add(t.from, zero, first, None);
        for d in [first, second] {
            add(d, zero, ones[0], None);
            add(d, zero, zeros[0], None);
        }
        for k in 1..bits(z) {
            for from in [ones[k - 1], zeros[k - 1]] {
                add(from, zero, ones[k], None);
                add(from, zero, zeros[k], None);
            }
        }
        let step = Op::Update(z.signum());
        add(ones[bits(z) - 1], step, second, None);
        add(zeros[bits(z) - 1], step, second, None);
        add(second, zero, t.to, Some(i));
        gadgets.insert(
            i,
            Gadget {
                first,
                ones,
                zeros,
                second,
            },
        );
    }
    let machine = CounterMachine::from_parts(states, a.initial(), Vec::new(), transitions, labels)?;
    let formula = if alphabet.delims.is_empty() {
        translate_formula(&f, &BTreeSet::new())
    } else {
        freeze::and(translate_formula(&f, &alphabet.lambda()), counter_formula(&alphabet))
    };
    Ok(UnaryReduction {
        machine,
        formula,
        alphabet,
        source: a.clone(),
        origin,
        gadgets,
    })
}
