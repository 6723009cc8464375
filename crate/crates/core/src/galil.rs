//! Reachability for one-counter automata with parameterized tests.
//!
//! The solver fixes a parameter instantiation, cuts the counter range at the
//! parameter values, and searches a small graph whose nodes are
//! configurations sitting exactly on one of those levels. Between levels the
//! counter moves through an open interval where every parameter test has a
//! fixed truth value, so the tests can be compiled away and the remaining
//! question is an interval-restricted run in a plain one-counter automaton.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::automaton::{
    classify, require_class, validate_run, Cmp, Configuration, CounterMachine, LassoRun, MachineClass, Op, ParamId,
    ParamInstantiation, Run, StateId, Transition,
};
use crate::error::{Error, Result};

/// Strictly increasing counter levels starting at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSet(Vec<u64>);

impl LevelSet {
    pub fn new(values: Vec<u64>) -> Result<Self> {
        if values.first() != Some(&0) {
            return Err(Error::Argument("level set must start at 0".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("levels must be strictly increasing".into()));
        }
        Ok(LevelSet(values))
    }

    /// Sorted distinct values of `values ∪ {0}`.
    pub fn from_values(values: impl IntoIterator<Item = u64>) -> Self {
        let set: BTreeSet<u64> = values.into_iter().chain([0]).collect();
        LevelSet(set.into_iter().collect())
    }

    pub fn values(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn level_of(&self, v: u64) -> Option<usize> {
        self.0.binary_search(&v).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachWitness {
    pub gamma: ParamInstantiation,
    pub run: Run,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReachOutcome {
    Present(ReachWitness),
    AbsentUpTo(u64),
}

impl ReachOutcome {
    pub fn is_present(&self) -> bool {
        matches!(self, ReachOutcome::Present(_))
    }

    pub fn witness(&self) -> Option<&ReachWitness> {
        match self {
            ReachOutcome::Present(w) => Some(w),
            ReachOutcome::AbsentUpTo(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReachOptions {
    /// Largest value tried for every free parameter.
    pub bound: u64,
    /// Parameters whose value is fixed rather than enumerated.
    pub pinned: BTreeMap<ParamId, u64>,
    /// Largest counter value the search may use. Defaults to
    /// `max(bound, pinned values) + |Q|³`.
    pub ceiling: Option<u64>,
}

impl ReachOptions {
    pub fn with_bound(bound: u64) -> Self {
        ReachOptions {
            bound,
            ..Default::default()
        }
    }
}

pub const DEFAULT_BOUND_MULTIPLIER: u64 = 8;

/// Heuristic default bound `|Q|³·(|X|+2)·k`.
pub fn derive_bound(machine: &CounterMachine, k: u64) -> u64 {
    let q = machine.num_states() as u64;
    q.pow(3) * (machine.num_params() as u64 + 2) * k
}

/// All runs leaving `start` whose intermediate values lie strictly inside
/// `(lo, hi)` and whose last configuration has value `lo` or `hi`, keyed by
/// that last configuration. Each run is a shortest one.
fn interval_exits(
    machine: &CounterMachine,
    gamma: &ParamInstantiation,
    start: Configuration,
    lo: u64,
    hi: u64,
) -> BTreeMap<Configuration, Run> {
    let mut parent: HashMap<Configuration, (Configuration, usize)> = HashMap::new();
    let mut exits = BTreeMap::new();
    let mut queue = VecDeque::from([start]);
    let mut seen = std::collections::HashSet::from([start]);
    let path =
        |parent: &HashMap<Configuration, (Configuration, usize)>, end: Configuration, last: (Configuration, usize)| {
            let mut configs = vec![end, last.0];
            let mut steps = vec![last.1];
            let mut cur = last.0;
            while cur != start {
                let (p, t) = parent[&cur];
                configs.push(p);
                steps.push(t);
                cur = p;
            }
            configs.reverse();
            steps.reverse();
            Run { configs, steps }
        };
    while let Some(c) = queue.pop_front() {
        for &t in machine.outgoing(c.state) {
            let Some(v) = machine.fire(t, gamma, c.value).ok().flatten() else {
                continue;
            };
            let next = Configuration::new(machine.transition(t).to, v);
            if v == lo || v == hi {
                exits.entry(next).or_insert_with(|| path(&parent, next, (c, t)));
            } else if lo < v && v < hi && seen.insert(next) {
                parent.insert(next, (c, t));
                queue.push_back(next);
            }
        }
    }
    exits
}

/// Is there a run from `(q, v)` to `(q2, v2)` whose intermediate values lie
/// strictly between `v` and `v2`?
pub fn vv_run(machine: &CounterMachine, q: StateId, q2: StateId, v: u64, v2: u64) -> Result<bool> {
    require_class(machine, MachineClass::Oca, "OCA")?;
    check_states(machine, &[q, q2])?;
    if q == q2 && v == v2 {
        return Ok(true);
    }
    let exits = interval_exits(
        machine,
        &ParamInstantiation::default(),
        Configuration::new(q, v),
        v.min(v2),
        v.max(v2),
    );
    Ok(exits.contains_key(&Configuration::new(q2, v2)))
}

/// Is there a run from `(q, v)` back to value `v` in state `q2` whose
/// intermediate values lie strictly between `v` and `v2`?
pub fn vv_return(machine: &CounterMachine, q: StateId, q2: StateId, v: u64, v2: u64) -> Result<bool> {
    require_class(machine, MachineClass::Oca, "OCA")?;
    check_states(machine, &[q, q2])?;
    if q == q2 {
        return Ok(true);
    }
    let exits = interval_exits(
        machine,
        &ParamInstantiation::default(),
        Configuration::new(q, v),
        v.min(v2),
        v.max(v2),
    );
    Ok(exits.contains_key(&Configuration::new(q2, v)))
}

fn check_states(machine: &CounterMachine, qs: &[StateId]) -> Result<()> {
    match qs.iter().find(|&&q| q >= machine.num_states()) {
        Some(q) => Err(Error::Argument(format!("unknown state id {q}"))),
        None => Ok(()),
    }
}

/// A test-free machine for one open interval together with the index of the
/// original transition behind each of its transitions.
#[derive(Debug, Clone)]
pub struct StrippedMachine {
    pub machine: CounterMachine,
    pub origin: Vec<usize>,
}

/// Compiles the tests of `machine` away for counter values strictly inside
/// `(D[segment], D[segment+1])`. `param_levels[x]` is the index in `levels`
/// of the value of parameter `x`. Constant tests must compare against a
/// level value.
pub fn strip_tests(
    machine: &CounterMachine,
    segment: usize,
    levels: &LevelSet,
    param_levels: &[usize],
) -> Result<StrippedMachine> {
    if segment + 1 >= levels.len() {
        return Err(Error::Argument(format!("segment {segment} has no upper level")));
    }
    if param_levels.len() != machine.num_params() {
        return Err(Error::Argument("every parameter needs a level".into()));
    }
    if let Some(l) = param_levels.iter().find(|&&l| l >= levels.len()) {
        return Err(Error::Argument(format!("level {l} out of range")));
    }
    // Truth value inside the interval of `v ⋈ D[j]`, None for `=`.
    let verdict = |cmp: Cmp, j: usize| match cmp {
        Cmp::Eq => false,
        Cmp::Lt => j > segment,
        Cmp::Gt => j <= segment,
    };
    let mut transitions = Vec::new();
    let mut origin = Vec::new();
    for (i, t) in machine.transitions().iter().enumerate() {
        let keep = match &t.op {
            Op::Update(_) => Some(t.op),
            Op::Param(cmp, x) => verdict(*cmp, param_levels[*x]).then_some(Op::Update(0)),
            Op::Const(cmp, c) => {
                let j = levels
                    .level_of(*c)
                    .ok_or_else(|| Error::Argument(format!("constant {c} is not one of the levels")))?;
                verdict(*cmp, j).then_some(Op::Update(0))
            }
        };
        if let Some(op) = keep {
            transitions.push(Transition {
                from: t.from,
                op,
                to: t.to,
            });
            origin.push(i);
        }
    }
    let stripped = CounterMachine::from_parts(
        machine.states().to_vec(),
        machine.initial(),
        Vec::new(),
        transitions,
        machine.labels().to_vec(),
    )?;
    Ok(StrippedMachine {
        machine: stripped,
        origin,
    })
}

/// Folds every constant test except `=0` into a test against a fresh
/// parameter pinned to the constant. Transition indices are preserved.
#[derive(Debug, Clone)]
pub struct FoldedMachine {
    pub machine: CounterMachine,
    pub pinned: BTreeMap<ParamId, u64>,
}

pub fn fold_constants(machine: &CounterMachine) -> FoldedMachine {
    let mut params = machine.params().to_vec();
    let mut by_const: BTreeMap<u64, ParamId> = BTreeMap::new();
    let mut pinned = BTreeMap::new();
    let mut transitions = Vec::with_capacity(machine.transitions().len());
    for t in machine.transitions() {
        let op = match t.op {
            Op::Const(Cmp::Eq, 0) => t.op,
            Op::Const(cmp, c) => {
                let x = *by_const.entry(c).or_insert_with(|| {
                    let base = format!("x_{c}");
                    let mut name = base.clone();
                    let mut k = 1;
                    while params.contains(&name) {
                        name = format!("{base}_{k}");
                        k += 1;
                    }
                    params.push(name);
                    params.len() - 1
                });
                pinned.insert(x, c);
                Op::Param(cmp, x)
            }
            _ => t.op,
        };
        transitions.push(Transition {
            from: t.from,
            op,
            to: t.to,
        });
    }
    let folded = CounterMachine::from_parts(
        machine.states().to_vec(),
        machine.initial(),
        params,
        transitions,
        machine.labels().to_vec(),
    )
    .expect("folding preserves well-formedness");
    FoldedMachine {
        machine: folded,
        pinned,
    }
}

/// Candidate instantiations of the free parameters: smallest maximum first,
/// then lexicographic.
pub fn gamma_candidates(num_params: usize, pinned: &BTreeMap<ParamId, u64>, bound: u64) -> Vec<ParamInstantiation> {
    let free: Vec<ParamId> = (0..num_params).filter(|x| !pinned.contains_key(x)).collect();
    let mut tuples: Vec<Vec<u64>> = vec![Vec::new()];
    for _ in &free {
        tuples = tuples
            .into_iter()
            .flat_map(|t| {
                (0..=bound).map(move |v| {
                    let mut t = t.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    tuples.sort_by(|a, b| {
        let ma = a.iter().max().copied().unwrap_or(0);
        let mb = b.iter().max().copied().unwrap_or(0);
        ma.cmp(&mb).then_with(|| a.cmp(b))
    });
    tuples
        .into_iter()
        .map(|t| {
            let mut gamma = vec![0; num_params];
            for (&x, &v) in pinned {
                gamma[x] = v;
            }
            for (x, v) in free.iter().zip(t) {
                gamma[*x] = v;
            }
            ParamInstantiation(gamma)
        })
        .collect()
}

/// Decides whether `target` is reachable for some instantiation whose free
/// parameters are at most `opts.bound`. Constant tests other than `=0` must
/// have been folded (see [`fold_constants`] and [`reach`]).
pub fn ocap_reach(machine: &CounterMachine, target: StateId, opts: &ReachOptions) -> Result<ReachOutcome> {
    require_class(machine, MachineClass::OcaP, "OCA(P)")?;
    check_states(machine, &[target])?;
    if let Some(x) = opts.pinned.keys().find(|&&x| x >= machine.num_params()) {
        return Err(Error::Argument(format!("pinned parameter id {x} out of range")));
    }
    let pin_max = opts.pinned.values().copied().max().unwrap_or(0);
    let q = machine.num_states() as u64;
    let ceiling = opts.ceiling.unwrap_or(opts.bound.max(pin_max) + q.pow(3));
    if ceiling < opts.bound.max(pin_max) {
        return Err(Error::Argument("ceiling is below the parameter bound".into()));
    }
    let augmented = add_sink(machine, target)?;
    for gamma in gamma_candidates(machine.num_params(), &opts.pinned, opts.bound) {
        if let Some(run) = solve_fixed(&augmented, &gamma, ceiling)? {
            validate_run(machine, &gamma, &run)
                .map_err(|d| Error::Internal(format!("solver produced an invalid run: {d}")))?;
            return Ok(ReachOutcome::Present(ReachWitness { gamma, run }));
        }
    }
    Ok(ReachOutcome::AbsentUpTo(opts.bound))
}

/// Folds constants, solves, and reports the instantiation of the original
/// parameters only.
pub fn reach(machine: &CounterMachine, target: StateId, opts: &ReachOptions) -> Result<ReachOutcome> {
    require_class(machine, MachineClass::OcaPC, "OCA(P,C)")?;
    let folded = fold_constants(machine);
    let mut folded_opts = opts.clone();
    folded_opts.pinned.extend(folded.pinned.iter().map(|(&x, &c)| (x, c)));
    if opts.ceiling.is_none() {
        let pin_max = folded.pinned.values().copied().max().unwrap_or(0);
        folded_opts.ceiling = Some(opts.bound.max(pin_max) + (machine.num_states() as u64).pow(3));
    }
    Ok(match ocap_reach(&folded.machine, target, &folded_opts)? {
        ReachOutcome::Present(mut w) => {
            w.gamma.0.truncate(machine.num_params());
            ReachOutcome::Present(w)
        }
        absent => absent,
    })
}

struct Augmented {
    machine: CounterMachine,
    sink: StateId,
    enter: usize,
}

fn add_sink(machine: &CounterMachine, target: StateId) -> Result<Augmented> {
    let mut states = machine.states().to_vec();
    let mut name = "sink".to_string();
    let mut k = 1;
    while states.contains(&name) {
        name = format!("sink_{k}");
        k += 1;
    }
    states.push(name);
    let sink = states.len() - 1;
    let mut transitions = machine.transitions().to_vec();
    let enter = transitions.len();
    transitions.push(Transition {
        from: target,
        op: Op::Update(0),
        to: sink,
    });
    transitions.push(Transition {
        from: sink,
        op: Op::Update(-1),
        to: sink,
    });
    let mut labels = machine.labels().to_vec();
    labels.push(BTreeSet::new());
    Ok(Augmented {
        machine: CounterMachine::from_parts(
            states,
            machine.initial(),
            machine.params().to_vec(),
            transitions,
            labels,
        )?,
        sink,
        enter,
    })
}

/// Level-graph search for `(sink, 0)` under a fixed instantiation. Returns
/// the run cut just before the first step into the sink.
fn solve_fixed(aug: &Augmented, gamma: &ParamInstantiation, ceiling: u64) -> Result<Option<Run>> {
    let m = &aug.machine;
    let levels = LevelSet::from_values(gamma.0.iter().copied().chain([ceiling]));
    let d = levels.values();
    let nl = d.len();
    let param_levels: Vec<usize> = gamma.0.iter().map(|&v| levels.level_of(v).expect("level")).collect();
    let mut stripped: Vec<Option<StrippedMachine>> = vec![None; nl - 1];
    let node = |q: StateId, j: usize| q * nl + j;
    let mut parent: Vec<Option<(usize, Run)>> = vec![None; m.num_states() * nl];
    let mut seen = vec![false; parent.len()];
    let start = node(m.initial(), 0);
    let goal = node(aug.sink, 0);
    seen[start] = true;
    let mut queue = VecDeque::from([(m.initial(), 0usize)]);
    let mut found = start == goal;
    'search: while let Some((q, j)) = queue.pop_front() {
        if found {
            break;
        }
        let here = Configuration::new(q, d[j]);
        let mut moves: Vec<(StateId, usize, Run)> = Vec::new();
        for &t in m.outgoing(q) {
            let stays = match &m.transition(t).op {
                Op::Update(z) => *z == 0,
                _ => m.fire(t, gamma, d[j])?.is_some(),
            };
            if stays {
                let to = m.transition(t).to;
                moves.push((
                    to,
                    j,
                    Run {
                        configs: vec![here, Configuration::new(to, d[j])],
                        steps: vec![t],
                    },
                ));
            }
        }
        for seg in [j.checked_sub(1), (j + 1 < nl).then_some(j)].into_iter().flatten() {
            if stripped[seg].is_none() {
                stripped[seg] = Some(strip_tests(m, seg, &levels, &param_levels)?);
            }
            let s = stripped[seg].as_ref().expect("just built");
            let exits = interval_exits(&s.machine, &ParamInstantiation::default(), here, d[seg], d[seg + 1]);
            for (end, run) in exits {
                if run.len() == 1 && end.value == here.value {
                    continue;
                }
                let run = Run {
                    configs: run.configs,
                    steps: run.steps.iter().map(|&k| s.origin[k]).collect(),
                };
                let lj = if end.value == d[seg] { seg } else { seg + 1 };
                moves.push((end.state, lj, run));
            }
        }
        for (to, lj, run) in moves {
            let n = node(to, lj);
            if !seen[n] {
                seen[n] = true;
                parent[n] = Some((node(q, j), run));
                if n == goal {
                    found = true;
                    break 'search;
                }
                queue.push_back((to, lj));
            }
        }
    }
    if !found {
        return Ok(None);
    }
    let mut segments = Vec::new();
    let mut cur = goal;
    while cur != start {
        let (p, run) = parent[cur].take().expect("parent chain");
        segments.push(run);
        cur = p;
    }
    let mut run = Run::single(Configuration::new(m.initial(), 0));
    for seg in segments.iter().rev() {
        run.extend(seg);
    }
    if let Some(cut) = run.steps.iter().position(|&t| t == aug.enter) {
        run.steps.truncate(cut);
        run.configs.truncate(cut + 1);
    }
    Ok(Some(run))
}

/// Repeated reachability in a test-free machine with unary updates, over
/// configurations with value at most `cap`: for every state `t`, is there
/// a lasso from `(t, 0)` whose loop visits `good` and ends at its entry
/// state with a value no smaller than at entry?
#[derive(Debug, Clone)]
pub struct RepReachTable {
    machine: CounterMachine,
    good: StateId,
    cap: u64,
    /// `looping[q][v]`: a qualifying loop starts at `(q, v)`.
    looping: Vec<Vec<bool>>,
}

impl RepReachTable {
    pub fn new(machine: &CounterMachine, good: StateId, cap: u64) -> Result<Self> {
        if machine.transitions().iter().any(|t| t.op.is_test()) {
            return Err(Error::Class {
                expected: "OCA without tests",
                found: classify(machine),
            });
        }
        require_class(machine, MachineClass::Oca, "OCA without tests")?;
        check_states(machine, &[good])?;
        let width = cap as usize + 1;
        let n = machine.num_states();
        // Only states that lie on a cycle through `good` can start a loop.
        let on_cycle = cycle_states_through(machine, good);
        let mut looping = vec![vec![false; width]; n];
        for q in (0..n).filter(|&q| on_cycle[q]) {
            for v in 0..=cap {
                looping[q][v as usize] = loop_from(machine, Configuration::new(q, v), good, cap).is_some();
            }
        }
        Ok(RepReachTable {
            machine: machine.clone(),
            good,
            cap,
            looping,
        })
    }

    fn entry(&self, t: StateId) -> Option<Configuration> {
        let start = Configuration::new(t, 0);
        crate::automaton::reachable_configs(&self.machine, &ParamInstantiation::default(), start, self.cap)
            .into_iter()
            .find(|c| self.looping[c.state][c.value as usize])
    }

    pub fn contains(&self, t: StateId) -> bool {
        self.entry(t).is_some()
    }

    pub fn witness(&self, t: StateId) -> Option<LassoRun> {
        let entry = self.entry(t)?;
        let gamma = ParamInstantiation::default();
        let mut run = crate::automaton::bfs_path(&self.machine, &gamma, Configuration::new(t, 0), self.cap, |c| {
            c == entry
        })?;
        let lp = loop_from(&self.machine, entry, self.good, self.cap)?;
        let loop_start = run.len();
        run.extend(&lp);
        Some(LassoRun { run, loop_start })
    }
}

fn cycle_states_through(machine: &CounterMachine, good: StateId) -> Vec<bool> {
    let n = machine.num_states();
    let forward = graph_reach(n, good, |q| {
        machine.outgoing(q).iter().map(|&t| machine.transition(t).to).collect()
    });
    let mut preds = vec![Vec::new(); n];
    for t in machine.transitions() {
        preds[t.to].push(t.from);
    }
    let backward = graph_reach(n, good, |q| preds[q].clone());
    let self_cycle = forward
        .iter()
        .zip(&backward)
        .enumerate()
        .any(|(q, (f, b))| q != good && *f && *b)
        || machine.outgoing(good).iter().any(|&t| machine.transition(t).to == good);
    (0..n).map(|q| self_cycle && forward[q] && backward[q]).collect()
}

/// States reachable from `start` in at least zero steps.
fn graph_reach(n: usize, start: StateId, next: impl Fn(StateId) -> Vec<StateId>) -> Vec<bool> {
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(q) = stack.pop() {
        for r in next(q) {
            if !seen[r] {
                seen[r] = true;
                stack.push(r);
            }
        }
    }
    seen
}

/// Nonempty path from `entry` to its state with a value at least as large,
/// visiting `good`, values within `0..=cap`.
fn loop_from(machine: &CounterMachine, entry: Configuration, good: StateId, cap: u64) -> Option<Run> {
    let gamma = ParamInstantiation::default();
    type Node = (Configuration, bool);
    let start: Node = (entry, entry.state == good);
    let mut parent: HashMap<Node, (Node, usize)> = HashMap::new();
    let mut seen = std::collections::HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(cur @ (c, flag)) = queue.pop_front() {
        for &t in machine.outgoing(c.state) {
            let Some(v) = machine.fire(t, &gamma, c.value).ok().flatten() else {
                continue;
            };
            if v > cap {
                continue;
            }
            let next = Configuration::new(machine.transition(t).to, v);
            let nflag = flag || next.state == good;
            if nflag && next.state == entry.state && v >= entry.value {
                let mut configs = vec![next, c];
                let mut steps = vec![t];
                let mut k = cur;
                while k != start {
                    let (p, pt) = parent[&k];
                    configs.push(p.0);
                    steps.push(pt);
                    k = p;
                }
                configs.reverse();
                steps.reverse();
                return Some(Run { configs, steps });
            }
            let node = (next, nflag);
            if seen.insert(node) {
                parent.insert(node, (cur, t));
                queue.push_back(node);
            }
        }
    }
    None
}

/// Is there an infinite run from `(t, 0)` visiting `good` infinitely often,
/// witnessed by a lasso with values at most `cap`?
pub fn oca_rep_reach(machine: &CounterMachine, t: StateId, good: StateId, cap: u64) -> Result<bool> {
    check_states(machine, &[t])?;
    Ok(RepReachTable::new(machine, good, cap)?.contains(t))
}

/// Default cap for [`oca_rep_reach`]: `k·|Q|³`.
pub fn default_rep_cap(machine: &CounterMachine, k: u64) -> u64 {
    k * (machine.num_states() as u64).pow(3)
}
