//! Product of a one-counter automaton with an obligation tableau for a flat
//! sentence. Every register becomes a parameter: flatness guarantees that a
//! freeze occurrence is needed at most once along a run, so the value it
//! stores can be guessed up front and checked with an equality test.

use std::collections::{BTreeSet, HashMap};

use crate::automaton::{classify, Cmp, CounterMachine, MachineClass, Op, StateId, Transition};
use crate::error::{Error, Result};
use crate::freeze::{check_flat, check_sentence, nnf, rename_registers, Formula};

use super::{BuchiInstance, Names};

/// The product machine with the bookkeeping needed to map its runs back.
#[derive(Debug, Clone)]
pub struct ProductMachine {
    pub buchi: BuchiInstance,
    pub source: CounterMachine,
    /// The sentence actually tracked: negation normal form, one register
    /// per freeze occurrence.
    pub formula: Formula,
    /// Register behind each parameter.
    pub registers: Vec<String>,
    /// For hub states, the state of the source machine.
    pub hub: Vec<Option<StateId>>,
    /// For transitions that copy a source transition, its index.
    pub origin: Vec<Option<usize>>,
}

/// One way of meeting a set of obligations at the current position.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Branch {
    tests: BTreeSet<(Cmp, usize)>,
    next: BTreeSet<Formula>,
    postponed: BTreeSet<usize>,
}

impl Branch {
    /// Whether `self` asks for no more than `other` does.
    fn subsumes(&self, other: &Branch) -> bool {
        self.tests.is_subset(&other.tests)
            && self.next.is_subset(&other.next)
            && self.postponed.is_subset(&other.postponed)
    }
}

struct Expander<'a> {
    params: &'a HashMap<String, usize>,
    untils: &'a HashMap<Formula, usize>,
    label: &'a BTreeSet<String>,
}

impl Expander<'_> {
    /// The minimal ways of meeting `obligations` at a position carrying
    /// `label`.
    fn expand(&self, obligations: &BTreeSet<Formula>) -> Vec<Branch> {
        let mut memo = HashMap::new();
        obligations
            .iter()
            .fold(vec![Branch::default()], |acc, f| product(&acc, &self.dnf(f, &mut memo)))
    }

    fn dnf(&self, f: &Formula, memo: &mut HashMap<Formula, Vec<Branch>>) -> Vec<Branch> {
        use Formula::*;
        if let Some(d) = memo.get(f) {
            return d.clone();
        }
        let single = |edit: &dyn Fn(&mut Branch)| {
            let mut b = Branch::default();
            edit(&mut b);
            vec![b]
        };
        let d = match f {
            True => vec![Branch::default()],
            False => Vec::new(),
            Prop(p) if self.label.contains(p) => vec![Branch::default()],
            Prop(_) => Vec::new(),
            Not(a) => {
                let Prop(p) = &**a else {
                    unreachable!("input is in negation normal form")
                };
                if self.label.contains(p) {
                    Vec::new()
                } else {
                    vec![Branch::default()]
                }
            }
            RegTest(c, r) => single(&|b| {
                b.tests.insert((*c, self.params[r]));
            }),
            Freeze(r, a) => {
                let test = single(&|b| {
                    b.tests.insert((Cmp::Eq, self.params[r]));
                });
                product(&test, &self.dnf(a, memo))
            }
            And(a, c) => product(&self.dnf(a, memo), &self.dnf(c, memo)),
            Or(a, c) => union(self.dnf(a, memo), self.dnf(c, memo)),
            Next(a) => single(&|b| {
                b.next.insert((**a).clone());
            }),
            Until(a, c) => {
                let later = single(&|b| {
                    b.next.insert(f.clone());
                    b.postponed.insert(self.untils[f]);
                });
                union(self.dnf(c, memo), product(&self.dnf(a, memo), &later))
            }
            Release(a, c) => {
                let later = single(&|b| {
                    b.next.insert(f.clone());
                });
                let both = product(&self.dnf(a, memo), &self.dnf(c, memo));
                union(both, product(&self.dnf(c, memo), &later))
            }
        };
        memo.insert(f.clone(), d.clone());
        d
    }
}

fn merge(a: &Branch, b: &Branch) -> Branch {
    let mut m = a.clone();
    m.tests.extend(b.tests.iter().copied());
    m.next.extend(b.next.iter().cloned());
    m.postponed.extend(b.postponed.iter().copied());
    m
}

fn product(xs: &[Branch], ys: &[Branch]) -> Vec<Branch> {
    minimize(xs.iter().flat_map(|x| ys.iter().map(move |y| merge(x, y))).collect())
}

fn union(mut xs: Vec<Branch>, ys: Vec<Branch>) -> Vec<Branch> {
    xs.extend(ys);
    minimize(xs)
}

/// Drops duplicates and branches that ask for more than another one.
fn minimize(xs: Vec<Branch>) -> Vec<Branch> {
    let all: Vec<Branch> = xs.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    all.iter()
        .filter(|b| !all.iter().any(|o| o != *b && o.subsumes(b)))
        .cloned()
        .collect()
}

fn collect_untils(f: &Formula, out: &mut Vec<Formula>) {
    if matches!(f, Formula::Until(..)) && !out.contains(f) {
        out.push(f.clone());
    }
    for c in f.children() {
        collect_untils(c, out);
    }
}

/// Builds the product of `a` (class OCA) with the tableau of the flat
/// sentence `f`. Its accepting states are the hubs on a cycle where the
/// degeneralization counter wraps around.
pub fn flat_mc_to_buchi(a: &CounterMachine, f: &Formula) -> Result<ProductMachine> {
    if classify(a) != MachineClass::Oca {
        return Err(Error::Class {
            expected: "OCA",
            found: classify(a),
        });
    }
    check_sentence(f)?;
    check_flat(f)?;
    let formula = rename_registers(&nnf(f))?;
    let registers: Vec<String> = formula.registers().into_iter().collect();
    let params: HashMap<String, usize> = registers.iter().cloned().enumerate().map(|(i, r)| (r, i)).collect();
    let mut until_list = Vec::new();
    collect_untils(&formula, &mut until_list);
    let k = until_list.len();
    let untils: HashMap<Formula, usize> = until_list.into_iter().enumerate().map(|(i, u)| (u, i)).collect();
    let mut g = Graph::default();
    let param_names: Vec<String> = registers.iter().map(|r| g.names.fresh(&format!("x_{r}"))).collect();

    let mut obligation_ids: HashMap<BTreeSet<Formula>, usize> = HashMap::new();
    let mut obligations: Vec<BTreeSet<Formula>> = Vec::new();
    let mut intern = |s: BTreeSet<Formula>, obligations: &mut Vec<BTreeSet<Formula>>| {
        let next = obligation_ids.len();
        *obligation_ids.entry(s.clone()).or_insert_with(|| {
            obligations.push(s);
            next
        })
    };
    let mut expansions: HashMap<(usize, &BTreeSet<String>), Vec<Branch>> = HashMap::new();

    let start = intern(BTreeSet::from([formula.clone()]), &mut obligations);
    g.hub_state(a, (a.initial(), start, 0));
    let mut accepting = BTreeSet::new();
    let mut h = 0;
    while h < g.states.len() {
        let Some((q, s, c)) = g.keys[h] else {
            h += 1;
            continue;
        };
        if c == k {
            accepting.insert(h);
        }
        let label = a.label(q);
        let branches = expansions
            .entry((s, label))
            .or_insert_with(|| {
                Expander {
                    params: &params,
                    untils: &untils,
                    label,
                }
                .expand(&obligations[s])
            })
            .clone();
        for (bi, branch) in branches.into_iter().enumerate() {
            let mut at = h;
            for (j, &(cmp, x)) in branch.tests.iter().enumerate() {
                let name = format!("{}_o{s}_c{c}_b{bi}_t{j}", a.state_name(q));
                let next = g.add_state(&name, BTreeSet::new(), None);
                g.add_transition(at, Op::Param(cmp, x), next, None);
                at = next;
            }
            let mut c2 = if c == k { 0 } else { c };
            while c2 < k && !branch.postponed.contains(&c2) {
                c2 += 1;
            }
            let s2 = intern(branch.next, &mut obligations);
            for &t in a.outgoing(q) {
                let tr = a.transition(t);
                let to = g.hub_state(a, (tr.to, s2, c2));
                g.add_transition(at, tr.op, to, Some(t));
            }
        }
        h += 1;
    }
    let on_cycle = cyclic_states(g.states.len(), &g.transitions);
    accepting.retain(|&h| on_cycle[h]);
    let hub = g.keys.iter().map(|k| k.map(|(q, _, _)| q)).collect();
    let machine = CounterMachine::from_parts(g.states, 0, param_names, g.transitions, g.labels)?;
    Ok(ProductMachine {
        buchi: BuchiInstance::new(machine, accepting)?,
        source: a.clone(),
        formula,
        registers,
        hub,
        origin: g.origin,
    })
}

type HubKey = (StateId, usize, usize);

#[derive(Default)]
struct Graph {
    names: Names,
    states: Vec<String>,
    labels: Vec<BTreeSet<String>>,
    keys: Vec<Option<HubKey>>,
    transitions: Vec<Transition>,
    origin: Vec<Option<usize>>,
    hubs: HashMap<HubKey, StateId>,
}

impl Graph {
    fn add_state(&mut self, name: &str, label: BTreeSet<String>, key: Option<HubKey>) -> StateId {
        self.states.push(self.names.fresh(name));
        self.labels.push(label);
        self.keys.push(key);
        self.states.len() - 1
    }

    fn hub_state(&mut self, a: &CounterMachine, key: HubKey) -> StateId {
        if let Some(&h) = self.hubs.get(&key) {
            return h;
        }
        let (q, s, c) = key;
        let h = self.add_state(&format!("{}_o{s}_c{c}", a.state_name(q)), a.label(q).clone(), Some(key));
        self.hubs.insert(key, h);
        h
    }

    fn add_transition(&mut self, from: StateId, op: Op, to: StateId, origin: Option<usize>) {
        self.transitions.push(Transition { from, op, to });
        self.origin.push(origin);
    }
}

/// States lying on some cycle (Tarjan's strongly connected components).
fn cyclic_states(n: usize, transitions: &[Transition]) -> Vec<bool> {
    let mut succ = vec![Vec::new(); n];
    let mut self_loop = vec![false; n];
    for t in transitions {
        succ[t.from].push(t.to);
        self_loop[t.from] |= t.from == t.to;
    }
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut result = self_loop;
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if let Some(&w) = succ[v].get(*i) {
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("component members are on the stack");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                if component.len() > 1 {
                    for w in component {
                        result[w] = true;
                    }
                }
            }
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::MachineBuilder;
    use crate::freeze::parse;

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

    #[test]
    fn registers_become_parameters() {
        let a = machine(&[("q", 1, "q")], &[]);
        let p = flat_mc_to_buchi(&a, &parse("F @r. X [=r]").unwrap()).unwrap();
        assert_eq!(p.registers.len(), 1);
        assert_eq!(p.buchi.machine.num_params(), 1);
        assert!(classify(&p.buchi.machine).is_within(MachineClass::OcaP));
        assert!(!p.buchi.accepting.is_empty());
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = machine(&[("q", 1, "q")], &[]);
        assert!(matches!(
            flat_mc_to_buchi(&a, &parse("[=r]").unwrap()),
            Err(Error::NotSentence(_))
        ));
        assert!(matches!(
            flat_mc_to_buchi(&a, &parse("G @r. F [=r]").unwrap()),
            Err(Error::NotFlat(_))
        ));
        let s = machine(&[("q", 2, "q")], &[]);
        assert!(matches!(flat_mc_to_buchi(&s, &Formula::True), Err(Error::Class { .. })));
    }

    #[test]
    fn unsatisfiable_labels_leave_no_accepting_cycle() {
        let a = machine(&[("q", 1, "q")], &[]);
        let p = flat_mc_to_buchi(&a, &parse("G p").unwrap()).unwrap();
        assert!(p.buchi.accepting.is_empty());
        let b = machine(&[("q", 1, "q")], &[("q", "p")]);
        let p = flat_mc_to_buchi(&b, &parse("G p").unwrap()).unwrap();
        assert!(!p.buchi.accepting.is_empty());
    }

    #[test]
    fn cycles() {
        let t = |from, to| Transition {
            from,
            op: Op::Update(0),
            to,
        };
        let c = cyclic_states(4, &[t(0, 1), t(1, 2), t(2, 1), t(3, 3)]);
        assert_eq!(c, vec![false, true, true, true]);
    }
}
