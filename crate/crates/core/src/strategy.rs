//! Interchangeable reachability back-ends, looked up by name.

use crate::a2a::{accepting_tree, build_a2a, encode_gamma};
use crate::automaton::{bounded_reach_oracle, require_class, CounterMachine, MachineClass, StateId};
use crate::error::{Error, Result};
use crate::galil::{self, fold_constants, gamma_candidates, ReachOptions, ReachOutcome, ReachWitness};

/// Decides whether `target` is reachable for some instantiation with free
/// parameters bounded by `opts.bound`, returning a witness when it is.
pub trait ReachStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn solve(&self, machine: &CounterMachine, target: StateId, opts: &ReachOptions) -> Result<ReachOutcome>;
}

fn ceiling(machine: &CounterMachine, opts: &ReachOptions) -> u64 {
    opts.ceiling.unwrap_or_else(|| {
        let pinned = opts.pinned.values().copied().max().unwrap_or(0);
        opts.bound.max(pinned) + (machine.num_states() as u64).pow(3)
    })
}

/// Level decomposition with interval checks; polynomial per instantiation.
pub struct LevelSolver;

impl ReachStrategy for LevelSolver {
    fn name(&self) -> &'static str {
        "galil"
    }
    fn summary(&self) -> &'static str {
        "level decomposition with interval reachability checks"
    }
    fn solve(&self, machine: &CounterMachine, target: StateId, opts: &ReachOptions) -> Result<ReachOutcome> {
        galil::reach(machine, target, opts)
    }
}

/// Breadth-first search over configurations up to the ceiling, once per
/// instantiation. Accepts every machine class.
pub struct ExhaustiveSearch;

impl ReachStrategy for ExhaustiveSearch {
    fn name(&self) -> &'static str {
        "bfs"
    }
    fn summary(&self) -> &'static str {
        "breadth-first search over bounded configurations"
    }
    fn solve(&self, machine: &CounterMachine, target: StateId, opts: &ReachOptions) -> Result<ReachOutcome> {
        if target >= machine.num_states() {
            return Err(Error::Argument(format!("unknown state id {target}")));
        }
        let cap = ceiling(machine, opts);
        for gamma in gamma_candidates(machine.num_params(), &opts.pinned, opts.bound) {
            if let Some(run) = bounded_reach_oracle(machine, &gamma, target, cap)? {
                return Ok(ReachOutcome::Present(ReachWitness { gamma, run }));
            }
        }
        Ok(ReachOutcome::AbsentUpTo(opts.bound))
    }
}

/// Membership of the encoded instantiation in the two-way alternating
/// automaton that simulates the machine.
pub struct AlternatingAutomaton;

impl ReachStrategy for AlternatingAutomaton {
    fn name(&self) -> &'static str {
        "a2a"
    }
    fn summary(&self) -> &'static str {
        "alternating two-way automaton over parameter words"
    }
    fn solve(&self, machine: &CounterMachine, target: StateId, opts: &ReachOptions) -> Result<ReachOutcome> {
        require_class(machine, MachineClass::OcaPC, "OCA(P,C)")?;
        let folded = fold_constants(machine);
        let mut pinned = opts.pinned.clone();
        pinned.extend(folded.pinned.iter().map(|(&x, &c)| (x, c)));
        let cap = ceiling(machine, opts);
        let construction = build_a2a(&folded.machine, target)?;
        for gamma in gamma_candidates(folded.machine.num_params(), &pinned, opts.bound) {
            let w = encode_gamma(&gamma, 0);
            if let Some(tree) = accepting_tree(&construction.a2a, &w, Some(cap)) {
                let mut witness = construction.extract_run(&tree, &w)?;
                witness.gamma.0.truncate(machine.num_params());
                return Ok(ReachOutcome::Present(witness));
            }
        }
        Ok(ReachOutcome::AbsentUpTo(opts.bound))
    }
}

/// Named strategies. The first registered one is the default.
#[derive(Default)]
pub struct StrategyRegistry {
    entries: Vec<Box<dyn ReachStrategy>>,
}

impl StrategyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::new();
        r.register(Box::new(LevelSolver)).expect("distinct names");
        r.register(Box::new(ExhaustiveSearch)).expect("distinct names");
        r.register(Box::new(AlternatingAutomaton)).expect("distinct names");
        r
    }

    pub fn register(&mut self, strategy: Box<dyn ReachStrategy>) -> Result<()> {
        if self.entries.iter().any(|s| s.name() == strategy.name()) {
            return Err(Error::Argument(format!(
                "strategy `{}` is already registered",
                strategy.name()
            )));
        }
        self.entries.push(strategy);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&dyn ReachStrategy> {
        self.entries
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::Argument(format!("unknown solver `{name}`; known: {}", self.names().join(", "))))
    }

    pub fn default_strategy(&self) -> Option<&dyn ReachStrategy> {
        self.entries.first().map(|s| s.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|s| s.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn ReachStrategy> {
        self.entries.iter().map(|s| s.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::{validate_run, MachineBuilder};

    #[test]
    fn registry_lookup() {
        let r = StrategyRegistry::with_defaults();
        assert_eq!(r.names(), vec!["galil", "bfs", "a2a"]);
        assert_eq!(r.default_strategy().unwrap().name(), "galil");
        assert!(r.get("nope").is_err());
        let mut r = r;
        assert!(r.register(Box::new(LevelSolver)).is_err());
    }

    #[test]
    fn strategies_agree_on_a_small_machine() {
        let mut b = MachineBuilder::new("a");
        b.edge("a", "+1", "a").unwrap();
        b.edge("a", "=x:x", "b").unwrap();
        b.edge("b", ">c:2", "c").unwrap();
        let m = b.build().unwrap();
        let opts = ReachOptions::with_bound(4);
        for s in StrategyRegistry::with_defaults().iter() {
            let out = s.solve(&m, 2, &opts).unwrap();
            let w = out.witness().unwrap_or_else(|| panic!("{} found nothing", s.name()));
            assert_eq!(w.gamma.0, vec![3], "{}", s.name());
            validate_run(&m, &w.gamma, &w.run).unwrap();
        }
    }
}
