use std::collections::BTreeSet;

use crate::automaton::{
    require_class, validate_lasso, Cmp, Configuration, CounterMachine, LassoRun, MachineClass, Op, ParamInstantiation,
    Run, StateId, Transition,
};
use crate::error::{Error, Result};
use crate::galil::{default_rep_cap, ReachWitness, RepReachTable};

use super::Names;

/// A machine together with a set of accepting states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuchiInstance {
    pub machine: CounterMachine,
    pub accepting: BTreeSet<StateId>,
}

impl BuchiInstance {
    pub fn new(machine: CounterMachine, accepting: BTreeSet<StateId>) -> Result<Self> {
        require_class(&machine, MachineClass::OcaP, "OCA(P)")?;
        if let Some(q) = accepting.iter().find(|&&q| q >= machine.num_states()) {
            return Err(Error::Argument(format!("accepting state id {q} is out of range")));
        }
        Ok(BuchiInstance { machine, accepting })
    }
}

/// `A'` with target `ŝ`, built so that `ŝ` is reachable in `A'` iff `good`
/// can be visited infinitely often in `A`.
///
/// State layout: the states of `A` keep their ids, the hatted copy follows
/// at offset `|Q|`, then `s`, `ŝ` and the chain `t_1 … t_n`.
#[derive(Debug, Clone)]
pub struct BuchiReduction {
    pub machine: CounterMachine,
    pub target: StateId,
    pub source: CounterMachine,
    pub good: StateId,
    /// The stored-value parameter.
    pub y: usize,
    /// Whether a placeholder parameter was added because `A` had none.
    pub padded: bool,
    /// States of `A` from which the test-free part loops through `good`
    /// forever, starting at value 0.
    pub tails: BTreeSet<StateId>,
    /// For every transition of `A'`, the transition of `A` it copies.
    pub origin: Vec<Option<usize>>,
    table: RepReachTable,
    /// Transition of `A` behind every transition of the test-free part.
    tail_origin: Vec<usize>,
}

impl BuchiReduction {
    pub fn hat(&self, q: StateId) -> StateId {
        self.source.num_states() + q
    }

    pub fn entry(&self) -> StateId {
        2 * self.source.num_states()
    }

    /// The lasso of `A` behind a run of `A'` that reaches the target. The
    /// instantiation is cut down to the parameters of `A`.
    pub fn lasso_from_witness(&self, witness: &ReachWitness) -> Result<(ParamInstantiation, LassoRun)> {
        let bad = |m: &str| Error::Extraction(m.to_string());
        let run = &witness.run;
        let n = self.source.num_states();
        if run.is_empty() || run.last().state != self.target {
            return Err(bad("run does not end in the target"));
        }
        let gamma = ParamInstantiation(witness.gamma.0[..self.source.num_params()].to_vec());
        let orig = |q: StateId| if q < 2 * n { q % n } else { q };

        let mut out = Run::single(Configuration::new(self.source.initial(), 0));
        let mut loop_start = None;
        for (i, &t) in run.steps.iter().enumerate() {
            let c = run.configs[i + 1];
            match self.origin[t] {
                Some(a) => {
                    out.push(a, Configuration::new(orig(c.state), c.value));
                }
                None if c.state == self.entry() => loop_start = Some(out.len()),
                None if c.state == self.target && loop_start.is_some() => {}
                None => {
                    // The chain: the last original configuration starts a
                    // test-free loop, shifted up to the current value.
                    let from = run.configs[i];
                    let tail = self
                        .table
                        .witness(from.state)
                        .ok_or_else(|| bad("chain entered from a non-tail state"))?;
                    let shift = from.value;
                    let start = out.len() + tail.loop_start;
                    for (j, &mt) in tail.run.steps.iter().enumerate() {
                        let c = tail.run.configs[j + 1];
                        out.push(self.tail_origin[mt], Configuration::new(c.state, c.value + shift));
                    }
                    loop_start = Some(start);
                    break;
                }
            }
        }
        let lasso = LassoRun {
            run: out,
            loop_start: loop_start.ok_or_else(|| bad("run never closes a loop"))?,
        };
        validate_lasso(&self.source, &gamma, &lasso)
            .map_err(|d| Error::Extraction(format!("lasso is invalid: {d}")))?;
        if !lasso.run.configs[lasso.loop_start..]
            .iter()
            .any(|c| c.state == self.good)
        {
            return Err(bad("loop does not visit the accepting state"));
        }
        Ok((gamma, lasso))
    }
}

/// Builds `A'` for `A` and `good`. `rep_cap` bounds the counter in the
/// test-free loop search; it defaults to `|Q|³`.
pub fn buchi_to_reach(a: &CounterMachine, good: StateId, rep_cap: Option<u64>) -> Result<BuchiReduction> {
    require_class(a, MachineClass::OcaP, "OCA(P)")?;
    let n = a.num_states();
    if good >= n {
        return Err(Error::Argument(format!("unknown state id {good}")));
    }

    let mut tail_transitions = Vec::new();
    let mut tail_origin = Vec::new();
    for (i, t) in a.transitions().iter().enumerate() {
        let op = match t.op {
            Op::Update(z) => Op::Update(z),
            Op::Param(Cmp::Gt, _) => Op::Update(0),
            _ => continue,
        };
        tail_transitions.push(Transition { op, ..*t });
        tail_origin.push(i);
    }
    let tail_machine = CounterMachine::from_parts(
        a.states().to_vec(),
        a.initial(),
        Vec::new(),
        tail_transitions,
        vec![BTreeSet::new(); n],
    )?;
    let cap = rep_cap.unwrap_or_else(|| default_rep_cap(&tail_machine, 1));
    let table = RepReachTable::new(&tail_machine, good, cap)?;
    let tails: BTreeSet<StateId> = (0..n).filter(|&t| table.contains(t)).collect();

    let mut names = Names::new(a.states().iter().chain(a.params()));
    let mut states = a.states().to_vec();
    states.extend(a.states().iter().map(|q| names.fresh(&format!("{q}_hat"))));
    let entry = states.len();
    states.push(names.fresh("s"));
    let target = states.len();
    states.push(names.fresh("s_hat"));
    let mut params = a.params().to_vec();
    let padded = params.is_empty();
    if padded {
        params.push(names.fresh("x"));
    }
    let y = params.len();
    params.push(names.fresh("y"));
    let chain: Vec<StateId> = (1..=params.len() - 1)
        .map(|i| {
            states.push(names.fresh(&format!("t_{i}")));
            states.len() - 1
        })
        .collect();

    let mut transitions = Vec::new();
    let mut origin = Vec::new();
    let mut add = |from, op, to, o: Option<usize>| {
        transitions.push(Transition { from, op, to });
        origin.push(o);
    };
    for (i, t) in a.transitions().iter().enumerate() {
        add(t.from, t.op, t.to, Some(i));
    }
    add(good, Op::Param(Cmp::Eq, y), entry, None);
    for (i, t) in a.transitions().iter().enumerate() {
        if t.from == good {
            add(entry, t.op, n + t.to, Some(i));
        }
        add(n + t.from, t.op, n + t.to, Some(i));
    }
    add(n + good, Op::Param(Cmp::Eq, y), target, None);
    for &t in &tails {
        add(t, Op::Update(0), chain[0], None);
    }
    for (i, &c) in chain.iter().enumerate() {
        let next = chain.get(i + 1).copied().unwrap_or(target);
        add(c, Op::Param(Cmp::Gt, i), next, None);
    }

    let mut labels = a.labels().to_vec();
    labels.extend(a.labels().iter().cloned());
    labels.resize(states.len(), BTreeSet::new());
    let machine = CounterMachine::from_parts(states, a.initial(), params, transitions, labels)?;
    Ok(BuchiReduction {
        machine,
        target,
        source: a.clone(),
        good,
        y,
        padded,
        tails,
        origin,
        table,
        tail_origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::{classify, MachineBuilder};
    use crate::galil::{ocap_reach, ReachOptions};

    fn m(edges: &[(&str, &str, &str)]) -> CounterMachine {
        let mut b = MachineBuilder::new(edges[0].0);
        for (f, op, t) in edges {
            b.edge(f, op, t).unwrap();
        }
        b.build().unwrap()
    }

    fn solve(r: &BuchiReduction) -> Option<(ParamInstantiation, LassoRun)> {
        let out = ocap_reach(&r.machine, r.target, &ReachOptions::with_bound(3)).unwrap();
        out.witness().map(|w| r.lasso_from_witness(w).unwrap())
    }

    #[test]
    fn self_loop_uses_the_stored_value() {
        let a = m(&[("p", "+1", "q"), ("q", "0", "q")]);
        let r = buchi_to_reach(&a, 1, None).unwrap();
        assert_eq!(classify(&r.machine), MachineClass::OcaP);
        let (_, lasso) = solve(&r).unwrap();
        assert!(lasso.is_exact());
        assert_eq!(lasso.loop_entry(), Configuration::new(1, 1));
    }

    #[test]
    fn unreachable_good_state() {
        let a = m(&[("p", "+1", "p"), ("q", "0", "q")]);
        let r = buchi_to_reach(&a, 1, None).unwrap();
        assert!(solve(&r).is_none());
    }

    #[test]
    fn parameterless_climb_goes_through_the_chain() {
        let a = m(&[("q", "+1", "q")]);
        let r = buchi_to_reach(&a, 0, None).unwrap();
        assert!(r.padded);
        assert_eq!(r.tails, BTreeSet::from([0]));
        assert_eq!(r.machine.num_params(), 2);
        let (gamma, lasso) = solve(&r).unwrap();
        assert!(gamma.is_empty());
        assert!(lasso.drift() > 0);
    }

    #[test]
    fn equality_tests_block_the_climb() {
        // the only loop needs the counter to equal x forever while growing
        let a = m(&[("q", "=x:x", "p"), ("p", "+1", "q")]);
        let r = buchi_to_reach(&a, 0, None).unwrap();
        assert!(r.tails.is_empty());
        assert!(solve(&r).is_none());
        let b = m(&[("q", "+1", "p"), ("p", ">x:x", "q")]);
        let r = buchi_to_reach(&b, 0, None).unwrap();
        assert_eq!(r.tails, BTreeSet::from([0, 1]));
        assert!(solve(&r).is_some());
    }
}
