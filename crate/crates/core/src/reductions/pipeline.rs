//! The whole chain: binary updates to gadgets, product with the tableau,
//! Büchi to reachability, solving, and mapping the witness back.

use crate::automaton::{
    classify, validate_lasso, CounterMachine, LassoRun, MachineClass, ParamInstantiation, Run, StateId,
};
use crate::error::{Error, Result};
use crate::freeze::{check_flat, check_sentence, eval, Formula, LassoDataWord, RegisterAssignment};
use crate::galil::ReachOptions;
use crate::strategy::ReachStrategy;

use super::{buchi_to_reach, flat_mc_to_buchi, succinct_to_unary};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McOptions {
    /// Largest value tried for every register parameter and the stored
    /// value of the Büchi reduction.
    pub bound: u64,
    /// Largest counter value the reachability search may use. Defaults to
    /// `bound + 4·|Q| + 4` for the input machine.
    pub ceiling: Option<u64>,
    /// Counter cap for the test-free loop search. Same default.
    pub loop_cap: Option<u64>,
}

impl McOptions {
    pub fn with_bound(bound: u64) -> Self {
        McOptions {
            bound,
            ceiling: None,
            loop_cap: None,
        }
    }

    fn default_cap(&self, a: &CounterMachine) -> u64 {
        self.bound + 4 * a.num_states() as u64 + 4
    }
}

/// A lasso of the input machine whose data word satisfies the formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McWitness {
    /// Values of the register parameters of the product machine.
    pub gamma: ParamInstantiation,
    pub registers: Vec<String>,
    pub lasso: LassoRun,
    pub word: LassoDataWord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum McOutcome {
    Present(McWitness),
    AbsentUpTo(u64),
}

impl McOutcome {
    pub fn is_present(&self) -> bool {
        matches!(self, McOutcome::Present(_))
    }

    pub fn witness(&self) -> Option<&McWitness> {
        match self {
            McOutcome::Present(w) => Some(w),
            McOutcome::AbsentUpTo(_) => None,
        }
    }
}

/// Maps a lasso of a derived machine onto its source machine. `keep` gives
/// the source state of the derived states that correspond to source
/// positions; `origin` gives the source transition behind each derived
/// transition that ends in such a state.
pub(crate) fn project_lasso(
    lasso: &LassoRun,
    keep: impl Fn(StateId) -> Option<StateId>,
    origin: &[Option<usize>],
) -> Result<LassoRun> {
    let bad = |m: &str| Error::Extraction(m.to_string());
    let period = lasso.run.len() - lasso.loop_start;
    let twice = lasso.unroll(1);
    let start = (lasso.loop_start..lasso.loop_start + period)
        .find(|&j| keep(twice.configs[j].state).is_some())
        .ok_or_else(|| bad("the loop never visits a source position"))?;
    let first = twice.configs[0];
    let mut run = Run::single(crate::automaton::Configuration::new(
        keep(first.state).ok_or_else(|| bad("the run does not start at a source position"))?,
        first.value,
    ));
    let mut loop_start = None;
    for j in 0..start + period {
        if j == start {
            loop_start = Some(run.len());
        }
        let c = twice.configs[j + 1];
        match (origin[twice.steps[j]], keep(c.state)) {
            (Some(t), Some(q)) => run.push(t, crate::automaton::Configuration::new(q, c.value)),
            (None, None) => {}
            _ => return Err(bad("derived step and source position disagree")),
        }
    }
    Ok(LassoRun {
        run,
        loop_start: loop_start.unwrap_or(0),
    })
}

/// Decides `A ⊨∃ φ` for a flat sentence with register values and stored
/// values up to `opts.bound`. A returned witness has been re-validated
/// against the input machine and re-evaluated against the formula.
pub fn model_check(a: &CounterMachine, f: &Formula, opts: &McOptions, solver: &dyn ReachStrategy) -> Result<McOutcome> {
    check_sentence(f)?;
    check_flat(f)?;
    let class = classify(a);
    if !class.is_within(MachineClass::OcaS) {
        return Err(Error::Class {
            expected: "OCA(S)",
            found: class,
        });
    }
    let unary = if class == MachineClass::OcaS {
        Some(succinct_to_unary(a, f)?)
    } else {
        None
    };
    let (machine, formula) = match &unary {
        Some(u) => (&u.machine, &u.formula),
        None => (a, f),
    };
    let product = flat_mc_to_buchi(machine, formula)?;
    let pm = &product.buchi.machine;
    let ceiling = opts.ceiling.unwrap_or_else(|| opts.default_cap(a));
    let loop_cap = opts.loop_cap.unwrap_or_else(|| opts.default_cap(a));
    let mut accepting: Vec<StateId> = product.buchi.accepting.iter().copied().collect();
    accepting.sort_by(|&p, &q| pm.state_name(p).cmp(pm.state_name(q)));

    for good in accepting {
        let reduction = buchi_to_reach(pm, good, Some(loop_cap))?;
        let reach_opts = ReachOptions {
            bound: opts.bound,
            ceiling: Some(ceiling),
            ..Default::default()
        };
        let outcome = solver.solve(&reduction.machine, reduction.target, &reach_opts)?;
        let Some(witness) = outcome.witness() else { continue };
        let (gamma, product_lasso) = reduction.lasso_from_witness(witness)?;
        let mut lasso = project_lasso(&product_lasso, |q| product.hub[q], &product.origin)?;
        if let Some(u) = &unary {
            lasso = project_lasso(&lasso, |q| u.is_source_state(q).then_some(q), &u.origin)?;
        }
        validate_lasso(a, &ParamInstantiation::default(), &lasso)
            .map_err(|d| Error::Internal(format!("model checking produced an invalid lasso: {d}")))?;
        let word = LassoDataWord::from_lasso(a, &lasso)?;
        if !eval(&word, 0, &RegisterAssignment::new(), f)? {
            return Err(Error::Internal(
                "model checking produced a lasso that violates the formula".into(),
            ));
        }
        return Ok(McOutcome::Present(McWitness {
            gamma,
            registers: product.registers.clone(),
            lasso,
            word,
        }));
    }
    Ok(McOutcome::AbsentUpTo(opts.bound))
}

/// Every lasso of `a` with at most `max_positions` configurations (prefix
/// and loop together) and values at most `cap`, checked directly against
/// the formula. This is the reference the pipeline is tested against.
pub fn mc_oracle(a: &CounterMachine, f: &Formula, max_positions: usize, cap: u64) -> Result<Option<LassoRun>> {
    check_sentence(f)?;
    let gamma = ParamInstantiation::default();
    let start = crate::automaton::Configuration::new(a.initial(), 0);
    let mut stack = vec![Run::single(start)];
    while let Some(run) = stack.pop() {
        let last = run.last();
        for (i, c) in run.configs.iter().enumerate().take(run.len()) {
            if c.state != last.state || c.value > last.value {
                continue;
            }
            let lasso = LassoRun {
                run: run.clone(),
                loop_start: i,
            };
            if validate_lasso(a, &gamma, &lasso).is_err() {
                continue;
            }
            let word = LassoDataWord::from_lasso(a, &lasso)?;
            if eval(&word, 0, &RegisterAssignment::new(), f)? {
                return Ok(Some(lasso));
            }
        }
        if run.len() >= max_positions {
            continue;
        }
        for (t, next) in crate::automaton::successors(a, &gamma, last)? {
            if next.value <= cap {
                let mut longer = run.clone();
                longer.push(t, next);
                stack.push(longer);
            }
        }
    }
    Ok(None)
}
