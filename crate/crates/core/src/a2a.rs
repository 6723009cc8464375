//! Alternating two-way automata over parameter words, and the simulation of
//! a one-counter automaton with parameter tests by such an automaton.
//!
//! A parameter instantiation is written as a word over the parameters and a
//! delimiter `□`: counter value `v` corresponds to the `(v+1)`-th delimiter,
//! and each parameter is placed after the delimiter of its value.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::automaton::{
    require_class, validate_run, Cmp, Configuration, CounterMachine, MachineClass, Op, ParamInstantiation, Run, StateId,
};
use crate::error::{Error, Result};
use crate::galil::ReachWitness;

/// A letter of a parameter word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sym {
    Delim,
    Param(usize),
}

/// `prefix · □^ω`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterWord {
    num_params: usize,
    prefix: Vec<Sym>,
}

impl ParameterWord {
    /// Checks that the prefix starts with `□` and mentions every one of the
    /// `num_params` parameters exactly once.
    pub fn new(num_params: usize, prefix: Vec<Sym>) -> Result<Self> {
        if prefix.first() != Some(&Sym::Delim) {
            return Err(Error::Format("a parameter word starts with the delimiter".into()));
        }
        let mut seen = vec![false; num_params];
        for s in &prefix {
            if let Sym::Param(x) = *s {
                if x >= num_params {
                    return Err(Error::Format(format!("unknown parameter {x}")));
                }
                if std::mem::replace(&mut seen[x], true) {
                    return Err(Error::Format(format!("parameter {x} occurs twice")));
                }
            }
        }
        if let Some(x) = seen.iter().position(|s| !s) {
            return Err(Error::Format(format!("parameter {x} does not occur")));
        }
        Ok(ParameterWord { num_params, prefix })
    }

    pub fn prefix(&self) -> &[Sym] {
        &self.prefix
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn letter(&self, pos: usize) -> Sym {
        self.prefix.get(pos).copied().unwrap_or(Sym::Delim)
    }

    /// Position of the `(v+1)`-th delimiter.
    pub fn enc(&self, v: u64) -> usize {
        let mut count = 0u64;
        for (i, s) in self.prefix.iter().enumerate() {
            if *s == Sym::Delim {
                if count == v {
                    return i;
                }
                count += 1;
            }
        }
        self.prefix.len() + (v - count) as usize
    }

    pub fn pos(&self, x: usize) -> usize {
        self.prefix
            .iter()
            .position(|s| *s == Sym::Param(x))
            .expect("parameter words mention every parameter")
    }

    /// Renders with `[]` for the delimiter and the given parameter names.
    pub fn render(&self, names: &[String]) -> String {
        self.prefix
            .iter()
            .map(|s| match s {
                Sym::Delim => "[]".to_string(),
                Sym::Param(x) => names[*x].clone(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Inverse of [`ParameterWord::render`].
    pub fn parse(text: &str, names: &[String]) -> Result<Self> {
        let syms = text
            .split_whitespace()
            .map(|t| {
                if t == "[]" {
                    Ok(Sym::Delim)
                } else {
                    names
                        .iter()
                        .position(|n| n == t)
                        .map(Sym::Param)
                        .ok_or_else(|| Error::Format(format!("unknown letter `{t}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        ParameterWord::new(names.len(), syms)
    }
}

/// Places every parameter right after the delimiter of its value (ties in
/// parameter order) and appends `padding` further delimiters.
pub fn encode_gamma(gamma: &ParamInstantiation, padding: usize) -> ParameterWord {
    let max = gamma.max_value().unwrap_or(0);
    let mut prefix = Vec::new();
    for v in 0..=max {
        prefix.push(Sym::Delim);
        prefix.extend((0..gamma.len()).filter(|&x| gamma.0[x] == v).map(Sym::Param));
    }
    prefix.extend(std::iter::repeat_n(Sym::Delim, padding));
    ParameterWord {
        num_params: gamma.len(),
        prefix,
    }
}

/// `γ_w(x)` is the number of delimiters strictly between the first letter
/// and `x`.
pub fn decode(w: &ParameterWord) -> ParamInstantiation {
    let mut gamma = vec![0; w.num_params];
    let mut delims = 0u64;
    for s in &w.prefix[1..] {
        match s {
            Sym::Delim => delims += 1,
            Sym::Param(x) => gamma[*x] = delims,
        }
    }
    ParamInstantiation(gamma)
}

/// Positive boolean formulas over `(state, move)` atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pbf {
    True,
    False,
    Atom(usize, i8),
    And(Box<Pbf>, Box<Pbf>),
    Or(Box<Pbf>, Box<Pbf>),
}

impl Pbf {
    pub fn and(a: Pbf, b: Pbf) -> Pbf {
        Pbf::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Pbf, b: Pbf) -> Pbf {
        Pbf::Or(Box::new(a), Box::new(b))
    }

    /// Conjunction of atoms, `true` when empty.
    pub fn all(atoms: impl IntoIterator<Item = (usize, i8)>) -> Pbf {
        let mut atoms: Vec<Pbf> = atoms.into_iter().map(|(s, m)| Pbf::Atom(s, m)).collect();
        match atoms.pop() {
            None => Pbf::True,
            Some(last) => atoms.into_iter().rev().fold(last, |acc, a| Pbf::and(a, acc)),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Pbf::True | Pbf::False | Pbf::Atom(..) => 1,
            Pbf::And(a, b) | Pbf::Or(a, b) => a.size() + b.size() + 1,
        }
    }

    pub fn atoms(&self) -> Vec<(usize, i8)> {
        match self {
            Pbf::True | Pbf::False => vec![],
            Pbf::Atom(s, m) => vec![(*s, *m)],
            Pbf::And(a, b) | Pbf::Or(a, b) => {
                let mut v = a.atoms();
                v.extend(b.atoms());
                v
            }
        }
    }

    fn eval_with(&self, holds: &impl Fn(usize, i8) -> bool) -> bool {
        match self {
            Pbf::True => true,
            Pbf::False => false,
            Pbf::Atom(s, m) => holds(*s, *m),
            Pbf::And(a, b) => a.eval_with(holds) && b.eval_with(holds),
            Pbf::Or(a, b) => a.eval_with(holds) || b.eval_with(holds),
        }
    }
}

pub fn pbf_eval(beta: &Pbf, chosen: &BTreeSet<(usize, i8)>) -> bool {
    beta.eval_with(&|s, m| chosen.contains(&(s, m)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum A2aTest {
    First,
    Letter(Sym),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct A2aTransition {
    pub from: usize,
    pub test: A2aTest,
    pub formula: Pbf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct A2a {
    pub states: Vec<String>,
    /// Names of the parameter letters; the alphabet is these plus `□`.
    pub letters: Vec<String>,
    pub initial: usize,
    pub accepting: BTreeSet<usize>,
    pub transitions: Vec<A2aTransition>,
}

impl A2a {
    /// `|S| + |Σ| + Σ|β|`
    pub fn size(&self) -> usize {
        self.states.len() + self.letters.len() + 1 + self.transitions.iter().map(|t| t.formula.size()).sum::<usize>()
    }

    fn test_holds(&self, test: A2aTest, w: &ParameterWord, pos: usize) -> bool {
        match test {
            A2aTest::First => pos == 0,
            A2aTest::Letter(a) => w.letter(pos) == a,
        }
    }

    /// States that can stay in themselves forever by moving right over `□`.
    fn drifting(&self, s: usize) -> bool {
        self.accepting.contains(&s)
            && self
                .transitions
                .iter()
                .any(|t| t.from == s && t.test == A2aTest::Letter(Sym::Delim) && t.formula == Pbf::Atom(s, 1))
    }
}

/// Where each family of states lives in a constructed automaton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct A2aLayout {
    pub num_states: usize,
    pub num_params: usize,
}

impl A2aLayout {
    pub fn sim(&self, q: StateId) -> usize {
        q
    }
    pub fn initial(&self) -> usize {
        self.num_states
    }
    pub fn go_right(&self, q: StateId) -> usize {
        self.num_states + 1 + q
    }
    pub fn go_left(&self, q: StateId) -> usize {
        2 * self.num_states + 1 + q
    }
    fn family(&self, x: usize, k: usize) -> usize {
        3 * self.num_states + 1 + 5 * x + k
    }
    pub fn present(&self, x: usize) -> usize {
        self.family(x, 0)
    }
    pub fn search(&self, x: usize) -> usize {
        self.family(x, 1)
    }
    pub fn search_next(&self, x: usize) -> usize {
        self.family(x, 2)
    }
    pub fn seen(&self, x: usize) -> usize {
        self.family(x, 3)
    }
    pub fn scan_left(&self, x: usize) -> usize {
        self.family(x, 4)
    }
    pub fn total(&self) -> usize {
        3 * self.num_states + 1 + 5 * self.num_params
    }
}

/// The automaton built from a machine and a target, with the bookkeeping
/// needed to translate runs in both directions.
#[derive(Debug, Clone)]
pub struct A2aConstruction {
    pub a2a: A2a,
    pub layout: A2aLayout,
    pub machine: CounterMachine,
    pub target: StateId,
    /// For each automaton transition leaving a simulating state, the machine
    /// transition it simulates.
    pub origin: Vec<Option<usize>>,
    sim_of: Vec<usize>,
    accept: usize,
    by_test: HashMap<(usize, A2aTest), usize>,
}

pub fn build_a2a(machine: &CounterMachine, target: StateId) -> Result<A2aConstruction> {
    require_class(machine, MachineClass::OcaP, "OCA(P)")?;
    if target >= machine.num_states() {
        return Err(Error::Argument(format!("unknown state id {target}")));
    }
    let n = machine.num_states();
    let nx = machine.num_params();
    let lay = A2aLayout {
        num_states: n,
        num_params: nx,
    };
    let mut states = vec![String::new(); lay.total()];
    for q in 0..n {
        let name = machine.state_name(q);
        states[lay.sim(q)] = name.to_string();
        states[lay.go_right(q)] = format!("right:{name}");
        states[lay.go_left(q)] = format!("left:{name}");
    }
    states[lay.initial()] = "s_in".to_string();
    for (x, name) in machine.params().iter().enumerate() {
        states[lay.present(x)] = format!("present:{name}");
        states[lay.search(x)] = format!("search:{name}");
        states[lay.search_next(x)] = format!("search':{name}");
        states[lay.seen(x)] = format!("seen:{name}");
        states[lay.scan_left(x)] = format!("scanleft:{name}");
    }

    let delim = A2aTest::Letter(Sym::Delim);
    let letter = |x: usize| A2aTest::Letter(Sym::Param(x));
    let mut transitions: Vec<A2aTransition> = Vec::new();
    let mut origin = Vec::new();
    let mut push = |transitions: &mut Vec<A2aTransition>, from, test, formula, o: Option<usize>| {
        transitions.push(A2aTransition { from, test, formula });
        origin.push(o);
        transitions.len() - 1
    };

    push(
        &mut transitions,
        lay.initial(),
        delim,
        Pbf::all(std::iter::once((lay.sim(machine.initial()), 0)).chain((0..nx).map(|x| (lay.search(x), 1)))),
        None,
    );
    for x in 0..nx {
        push(
            &mut transitions,
            lay.search(x),
            letter(x),
            Pbf::Atom(lay.seen(x), 1),
            None,
        );
        for y in std::iter::once(Sym::Delim).chain((0..nx).filter(|&y| y != x).map(Sym::Param)) {
            push(
                &mut transitions,
                lay.search(x),
                A2aTest::Letter(y),
                Pbf::Atom(lay.search(x), 1),
                None,
            );
            push(
                &mut transitions,
                lay.seen(x),
                A2aTest::Letter(y),
                Pbf::Atom(lay.seen(x), 1),
                None,
            );
        }
    }

    let mut sim_of = Vec::with_capacity(machine.transitions().len());
    let mut shuttles_right = BTreeSet::new();
    let mut shuttles_left = BTreeSet::new();
    let mut present = BTreeSet::new();
    let mut search_next = BTreeSet::new();
    let mut scan_left = BTreeSet::new();
    for (i, t) in machine.transitions().iter().enumerate() {
        let (q, q2) = (lay.sim(t.from), lay.sim(t.to));
        let (test, formula) = match t.op {
            Op::Update(1) => {
                shuttles_right.insert(t.to);
                (delim, Pbf::Atom(lay.go_right(t.to), 1))
            }
            Op::Update(-1) => {
                shuttles_left.insert(t.to);
                (delim, Pbf::Atom(lay.go_left(t.to), -1))
            }
            Op::Update(0) => (delim, Pbf::Atom(q2, 0)),
            Op::Const(Cmp::Eq, 0) => (A2aTest::First, Pbf::Atom(q2, 0)),
            Op::Param(Cmp::Eq, x) => {
                present.insert(x);
                (delim, Pbf::all([(q2, 0), (lay.present(x), 1)]))
            }
            Op::Param(Cmp::Lt, x) => {
                search_next.insert(x);
                (delim, Pbf::all([(q2, 0), (lay.search_next(x), 1)]))
            }
            Op::Param(Cmp::Gt, x) => {
                scan_left.insert(x);
                (delim, Pbf::all([(q2, 0), (lay.scan_left(x), -1)]))
            }
            _ => unreachable!("class checked above"),
        };
        sim_of.push(push(&mut transitions, q, test, formula, Some(i)));
    }
    for q in shuttles_right {
        for x in 0..nx {
            push(
                &mut transitions,
                lay.go_right(q),
                letter(x),
                Pbf::Atom(lay.go_right(q), 1),
                None,
            );
        }
        push(&mut transitions, lay.go_right(q), delim, Pbf::Atom(lay.sim(q), 0), None);
    }
    for q in shuttles_left {
        for x in 0..nx {
            push(
                &mut transitions,
                lay.go_left(q),
                letter(x),
                Pbf::Atom(lay.go_left(q), -1),
                None,
            );
        }
        push(&mut transitions, lay.go_left(q), delim, Pbf::Atom(lay.sim(q), 0), None);
    }
    for x in present {
        push(&mut transitions, lay.present(x), letter(x), Pbf::True, None);
        for y in (0..nx).filter(|&y| y != x) {
            push(
                &mut transitions,
                lay.present(x),
                letter(y),
                Pbf::Atom(lay.present(x), 1),
                None,
            );
        }
    }
    for x in search_next {
        for y in (0..nx).filter(|&y| y != x) {
            push(
                &mut transitions,
                lay.search_next(x),
                letter(y),
                Pbf::Atom(lay.search_next(x), 1),
                None,
            );
        }
        push(
            &mut transitions,
            lay.search_next(x),
            delim,
            Pbf::Atom(lay.search(x), 1),
            None,
        );
    }
    for x in scan_left {
        push(&mut transitions, lay.scan_left(x), letter(x), Pbf::True, None);
        for y in std::iter::once(Sym::Delim).chain((0..nx).filter(|&y| y != x).map(Sym::Param)) {
            push(
                &mut transitions,
                lay.scan_left(x),
                A2aTest::Letter(y),
                Pbf::Atom(lay.scan_left(x), -1),
                None,
            );
        }
    }
    let accept = push(&mut transitions, lay.sim(target), delim, Pbf::True, None);

    let mut by_test = HashMap::new();
    for (i, t) in transitions.iter().enumerate() {
        if t.from >= n {
            by_test.insert((t.from, t.test), i);
        }
    }
    let a2a = A2a {
        states,
        letters: machine.params().to_vec(),
        initial: lay.initial(),
        accepting: (0..nx).map(|x| lay.seen(x)).collect(),
        transitions,
    };
    Ok(A2aConstruction {
        a2a,
        layout: lay,
        machine: machine.clone(),
        target,
        origin,
        sim_of,
        accept,
        by_test,
    })
}

fn position_cap(w: &ParameterWord, counter_cap: Option<u64>) -> usize {
    let plen = w.prefix.len();
    match counter_cap {
        Some(c) => w.enc(c).max(plen),
        None => plen + 1,
    }
}

/// Largest counter value a membership check with this cap can simulate.
pub fn simulated_counter_bound(w: &ParameterWord, counter_cap: Option<u64>) -> u64 {
    let cap = position_cap(w, counter_cap);
    (0..=cap).filter(|&p| w.letter(p) == Sym::Delim).count() as u64 - 1
}

/// Decides `prefix · □^ω ∈ L(T)` for automata built by [`build_a2a`], by a
/// least fixpoint over `(state, position)` with positions up to a cap.
/// Accepting states that move right over `□` forever accept once the head
/// is past the prefix. With `counter_cap = Some(c)` the cap admits simulated
/// counter values up to `c`; with `None` it is `|prefix| + 1`.
pub fn membership(t: &A2a, w: &ParameterWord, counter_cap: Option<u64>) -> bool {
    Acceptance::compute(t, w, counter_cap).rank[t.initial][0].is_some()
}

/// An accepting run tree on `w`, when [`membership`] holds.
pub fn accepting_tree(t: &A2a, w: &ParameterWord, counter_cap: Option<u64>) -> Option<RunTree> {
    Acceptance::compute(t, w, counter_cap).tree(t)
}

/// Cells `(state, position)` from which the rest of the word is accepted,
/// each stamped with the order of discovery and the transition used. Atoms
/// used by a cell always carry smaller stamps, so trees built from it are
/// finite.
/// Discovery stamp of an accepted cell and the transition behind it.
type Stamp = Option<(u32, Option<usize>)>;

struct Acceptance {
    cap: usize,
    rank: Vec<Vec<Stamp>>,
}

impl Acceptance {
    fn compute(t: &A2a, w: &ParameterWord, counter_cap: Option<u64>) -> Self {
        let plen = w.prefix.len();
        let cap = position_cap(w, counter_cap);
        let ns = t.states.len();
        let mut rank = vec![vec![None; cap + 1]; ns];
        for (s, row) in rank.iter_mut().enumerate() {
            if t.drifting(s) {
                for cell in row.iter_mut().skip(plen) {
                    *cell = Some((0, None));
                }
            }
        }
        let mut by_state: Vec<Vec<usize>> = vec![Vec::new(); ns];
        for (i, tr) in t.transitions.iter().enumerate() {
            by_state[tr.from].push(i);
        }
        let mut stamp = 0u32;
        loop {
            let mut changed = false;
            for s in 0..ns {
                for pos in 0..=cap {
                    if rank[s][pos].is_some() {
                        continue;
                    }
                    let used = by_state[s].iter().copied().find(|&i| {
                        let tr = &t.transitions[i];
                        t.test_holds(tr.test, w, pos)
                            && tr.formula.eval_with(&|s2, m| {
                                let p = pos as i64 + m as i64;
                                p >= 0 && p as usize <= cap && rank[s2][p as usize].is_some()
                            })
                    });
                    if let Some(i) = used {
                        stamp += 1;
                        rank[s][pos] = Some((stamp, Some(i)));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Acceptance { cap, rank }
    }

    fn tree(&self, t: &A2a) -> Option<RunTree> {
        self.rank[t.initial][0]?;
        let mut tree = RunTree::default();
        tree.add(t.initial, 0);
        let mut todo = vec![0];
        while let Some(node) = todo.pop() {
            let (s, pos) = (tree.nodes[node].state, tree.nodes[node].pos);
            let (stamp, used) = self.rank[s][pos].expect("only accepted cells enter the tree");
            let Some(i) = used else {
                tree.nodes[node].drift = true;
                continue;
            };
            let below = |s2: usize, m: i8| {
                let p = pos as i64 + m as i64;
                p >= 0 && p as usize <= self.cap && self.rank[s2][p as usize].is_some_and(|(r, _)| r < stamp)
            };
            let atoms = choose_atoms(&t.transitions[i].formula, &below).expect("stamps are well founded");
            tree.nodes[node].transition = Some(i);
            for (s2, m) in atoms {
                let child = tree.add(s2, (pos as i64 + m as i64) as usize);
                tree.nodes[node].children.push(child);
                todo.push(child);
            }
        }
        Some(tree)
    }
}

/// A set of atoms, all satisfying `holds`, that makes `b` true.
fn choose_atoms(b: &Pbf, holds: &impl Fn(usize, i8) -> bool) -> Option<Vec<(usize, i8)>> {
    match b {
        Pbf::True => Some(Vec::new()),
        Pbf::False => None,
        Pbf::Atom(s, m) => holds(*s, *m).then(|| vec![(*s, *m)]),
        Pbf::And(a, c) => {
            let mut v = choose_atoms(a, holds)?;
            v.extend(choose_atoms(c, holds)?);
            v.sort();
            v.dedup();
            Some(v)
        }
        Pbf::Or(a, c) => choose_atoms(a, holds).or_else(|| choose_atoms(c, holds)),
    }
}

/// A finite run tree. Node 0 is the root. A node flagged `drift` stands for
/// an infinite branch that stays in its accepting state and moves right over
/// delimiters forever; it carries no transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunNode {
    pub state: usize,
    pub pos: usize,
    pub transition: Option<usize>,
    pub children: Vec<usize>,
    pub drift: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunTree {
    pub nodes: Vec<RunNode>,
}

impl RunTree {
    fn add(&mut self, state: usize, pos: usize) -> usize {
        self.nodes.push(RunNode {
            state,
            pos,
            transition: None,
            children: Vec::new(),
            drift: false,
        });
        self.nodes.len() - 1
    }

    /// Sets the transition of `node` and attaches a fresh child.
    fn step(&mut self, node: usize, transition: usize, state: usize, pos: usize) -> usize {
        let child = self.add(state, pos);
        self.nodes[node].transition = Some(transition);
        self.nodes[node].children.push(child);
        child
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDiagnostic {
    pub node: usize,
    pub reason: String,
}

impl fmt::Display for TreeDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: {}", self.node, self.reason)
    }
}

pub fn validate_run_tree(t: &A2a, w: &ParameterWord, tree: &RunTree) -> std::result::Result<(), TreeDiagnostic> {
    let diag = |node, reason: &str| {
        Err(TreeDiagnostic {
            node,
            reason: reason.to_string(),
        })
    };
    let Some(root) = tree.nodes.first() else {
        return diag(0, "empty tree");
    };
    if (root.state, root.pos) != (t.initial, 0) {
        return diag(0, "root is not labeled with the initial state at position 0");
    }
    let mut parents = vec![0usize; tree.nodes.len()];
    for (i, node) in tree.nodes.iter().enumerate() {
        if node.state >= t.states.len() {
            return diag(i, "unknown state");
        }
        for &c in &node.children {
            if c <= i || c >= tree.nodes.len() {
                return diag(i, "children must come after their parent");
            }
            parents[c] += 1;
        }
    }
    if let Some(i) = (1..tree.nodes.len()).find(|&i| parents[i] != 1) {
        return diag(i, "node does not have exactly one parent");
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        if node.drift {
            if !node.children.is_empty() || node.transition.is_some() {
                return diag(i, "a drifting node has no transition and no children");
            }
            if !t.drifting(node.state) {
                return diag(i, "drifting state cannot loop right through an accepting state");
            }
            if node.pos < w.prefix().len() {
                return diag(i, "drifting starts inside the prefix");
            }
            continue;
        }
        let Some(ti) = node.transition else {
            return diag(i, "node has no transition");
        };
        let Some(tr) = t.transitions.get(ti) else {
            return diag(i, "unknown transition");
        };
        if tr.from != node.state {
            return diag(i, "transition leaves a different state");
        }
        match tr.test {
            A2aTest::First if node.pos != 0 => return diag(i, "first? used away from position 0"),
            A2aTest::Letter(a) if w.letter(node.pos) != a => return diag(i, "letter test does not match the input"),
            _ => {}
        }
        let mut chosen = BTreeSet::new();
        for &c in &node.children {
            let child = &tree.nodes[c];
            let m = child.pos as i64 - node.pos as i64;
            if !(-1..=1).contains(&m) {
                return diag(c, "child moves more than one position");
            }
            chosen.insert((child.state, m as i8));
        }
        if !pbf_eval(&tr.formula, &chosen) {
            return diag(i, "children do not satisfy the transition formula");
        }
    }
    Ok(())
}

impl A2aConstruction {
    fn side(&self, state: usize, test: A2aTest) -> usize {
        self.by_test[&(state, test)]
    }

    /// Extends `node` rightwards (or leftwards) through `state`, one letter
    /// at a time, until reaching `stop`. Returns the node at `stop`.
    fn walk(
        &self,
        tree: &mut RunTree,
        mut node: usize,
        state: usize,
        w: &ParameterWord,
        stop: usize,
        dir: i8,
    ) -> usize {
        while tree.nodes[node].pos != stop {
            let pos = tree.nodes[node].pos;
            let t = self.side(state, A2aTest::Letter(w.letter(pos)));
            node = tree.step(node, t, state, (pos as i64 + dir as i64) as usize);
        }
        node
    }

    /// `search_x` from `node` up to `x`, then `seen_x` until drifting.
    fn search_branch(&self, tree: &mut RunTree, node: usize, x: usize, w: &ParameterWord) {
        let lay = &self.layout;
        let at_x = self.walk(tree, node, lay.search(x), w, w.pos(x), 1);
        let t = self.side(lay.search(x), A2aTest::Letter(Sym::Param(x)));
        let seen = tree.step(at_x, t, lay.seen(x), w.pos(x) + 1);
        let stop = w.prefix().len().max(w.pos(x) + 1);
        let last = self.walk(tree, seen, lay.seen(x), w, stop, 1);
        tree.nodes[last].drift = true;
    }

    /// Builds the accepting run tree on `encode_gamma(γ)` for a reachability
    /// witness of the target.
    pub fn construct_accepting_tree(&self, witness: &ReachWitness) -> Result<RunTree> {
        let m = &self.machine;
        let run = &witness.run;
        validate_run(m, &witness.gamma, run).map_err(|d| Error::Argument(format!("invalid witness: {d}")))?;
        if run.first() != Configuration::new(m.initial(), 0) || run.last().state != self.target {
            return Err(Error::Argument(
                "witness must start initialized and end at the target".into(),
            ));
        }
        if witness.gamma.len() != m.num_params() {
            return Err(Error::Argument("witness instantiation has the wrong arity".into()));
        }
        let lay = &self.layout;
        let w = encode_gamma(&witness.gamma, 0);
        let mut tree = RunTree::default();
        let root = tree.add(lay.initial(), 0);
        let mut main = tree.step(root, 0, lay.sim(m.initial()), 0);
        for x in 0..m.num_params() {
            let s = tree.step(root, 0, lay.search(x), 1);
            self.search_branch(&mut tree, s, x, &w);
        }
        for (i, &t) in run.steps.iter().enumerate() {
            let (v, tr) = (run.configs[i].value, m.transition(t));
            let (pos, q2) = (w.enc(v), lay.sim(tr.to));
            let sim = self.sim_of[t];
            main = match tr.op {
                Op::Update(1) => {
                    let s = tree.step(main, sim, lay.go_right(tr.to), pos + 1);
                    let end = self.walk(&mut tree, s, lay.go_right(tr.to), &w, w.enc(v + 1), 1);
                    let back = self.side(lay.go_right(tr.to), A2aTest::Letter(Sym::Delim));
                    tree.step(end, back, q2, w.enc(v + 1))
                }
                Op::Update(-1) => {
                    let s = tree.step(main, sim, lay.go_left(tr.to), pos - 1);
                    let end = self.walk(&mut tree, s, lay.go_left(tr.to), &w, w.enc(v - 1), -1);
                    let back = self.side(lay.go_left(tr.to), A2aTest::Letter(Sym::Delim));
                    tree.step(end, back, q2, w.enc(v - 1))
                }
                Op::Param(Cmp::Eq, x) => {
                    let next = tree.step(main, sim, q2, pos);
                    let s = tree.step(main, sim, lay.present(x), pos + 1);
                    let at_x = self.walk(&mut tree, s, lay.present(x), &w, w.pos(x), 1);
                    tree.nodes[at_x].transition = Some(self.side(lay.present(x), A2aTest::Letter(Sym::Param(x))));
                    next
                }
                Op::Param(Cmp::Lt, x) => {
                    let next = tree.step(main, sim, q2, pos);
                    let s = tree.step(main, sim, lay.search_next(x), pos + 1);
                    let at_delim = self.walk(&mut tree, s, lay.search_next(x), &w, w.enc(v + 1), 1);
                    let hop = self.side(lay.search_next(x), A2aTest::Letter(Sym::Delim));
                    let s = tree.step(at_delim, hop, lay.search(x), w.enc(v + 1) + 1);
                    self.search_branch(&mut tree, s, x, &w);
                    next
                }
                Op::Param(Cmp::Gt, x) => {
                    let next = tree.step(main, sim, q2, pos);
                    let s = tree.step(main, sim, lay.scan_left(x), pos - 1);
                    let at_x = self.walk(&mut tree, s, lay.scan_left(x), &w, w.pos(x), -1);
                    tree.nodes[at_x].transition = Some(self.side(lay.scan_left(x), A2aTest::Letter(Sym::Param(x))));
                    next
                }
                // update 0 and the zero test both stay in place
                _ => tree.step(main, sim, q2, pos),
            };
        }
        tree.nodes[main].transition = Some(self.accept);
        Ok(tree)
    }

    /// Reads the simulated run off the main branch of an accepting tree.
    pub fn extract_run(&self, tree: &RunTree, w: &ParameterWord) -> Result<ReachWitness> {
        let bad = |msg: &str| Error::Extraction(msg.to_string());
        validate_run_tree(&self.a2a, w, tree).map_err(|d| Error::Extraction(format!("invalid run tree: {d}")))?;
        let m = &self.machine;
        let n = m.num_states();
        let gamma = decode(w);
        let nodes = &tree.nodes;
        let sim_child = |node: usize| nodes[node].children.iter().copied().find(|&c| nodes[c].state < n);
        let mut node = sim_child(0).ok_or_else(|| bad("root has no simulating child"))?;
        let mut run = Run::single(Configuration::new(m.initial(), 0));
        loop {
            let (q, v) = (nodes[node].state, run.last().value);
            if nodes[node].pos != w.enc(v) {
                return Err(bad("main branch is not at the delimiter of the counter value"));
            }
            let t = nodes[node]
                .transition
                .ok_or_else(|| bad("main branch node without transition"))?;
            if t == self.accept {
                break;
            }
            let a = self.origin[t].ok_or_else(|| bad("main branch uses a transition that simulates nothing"))?;
            let tr = m.transition(a);
            let shuttle = match tr.op {
                Op::Update(1) => Some(self.layout.go_right(tr.to)),
                Op::Update(-1) => Some(self.layout.go_left(tr.to)),
                _ => None,
            };
            let mut next = match shuttle {
                Some(s) => nodes[node].children.iter().copied().find(|&c| nodes[c].state == s),
                None => sim_child(node),
            }
            .ok_or_else(|| bad("main branch ends early"))?;
            if shuttle.is_some() {
                while nodes[next].state >= n {
                    next = *nodes[next].children.first().ok_or_else(|| bad("shuttle ends early"))?;
                }
            }
            let v2 = match tr.op {
                Op::Update(z) => (v as i64 + z) as u64,
                _ => v,
            };
            if nodes[next].state != q && nodes[next].state != tr.to {
                return Err(bad("main branch leaves the simulated transition"));
            }
            run.push(a, Configuration::new(tr.to, v2));
            node = next;
        }
        if run.last().state != self.target {
            return Err(bad("main branch accepts away from the target"));
        }
        validate_run(m, &gamma, &run).map_err(|d| Error::Extraction(format!("extracted run is invalid: {d}")))?;
        Ok(ReachWitness { gamma, run })
    }
}

/// One transition per line: `state test formula`, the formula in prefix
/// notation, preceded by header lines for the states, alphabet, initial and
/// accepting states.
pub fn dump(t: &A2a) -> String {
    let mut out = String::new();
    out.push_str(&format!("states {}\n", t.states.join(" ")));
    out.push_str(&format!("letters {}\n", t.letters.join(" ")));
    out.push_str(&format!("initial {}\n", t.states[t.initial]));
    let acc: Vec<&str> = t.accepting.iter().map(|&s| t.states[s].as_str()).collect();
    out.push_str(&format!("accepting {}\n", acc.join(" ")));
    for tr in &t.transitions {
        let test = match tr.test {
            A2aTest::First => "first?".to_string(),
            A2aTest::Letter(Sym::Delim) => "[]".to_string(),
            A2aTest::Letter(Sym::Param(x)) => t.letters[x].clone(),
        };
        out.push_str(&format!(
            "{} {} {}\n",
            t.states[tr.from],
            test,
            render_pbf(&tr.formula, &t.states)
        ));
    }
    out
}

fn render_pbf(b: &Pbf, states: &[String]) -> String {
    match b {
        Pbf::True => "true".into(),
        Pbf::False => "false".into(),
        Pbf::Atom(s, m) => format!("({} {:+})", states[*s], m),
        Pbf::And(a, c) => format!("(and {} {})", render_pbf(a, states), render_pbf(c, states)),
        Pbf::Or(a, c) => format!("(or {} {})", render_pbf(a, states), render_pbf(c, states)),
    }
}

/// Inverse of [`dump`].
pub fn parse_dump(text: &str) -> Result<A2a> {
    let bad = |line: usize, msg: &str| Error::Format(format!("line {}: {msg}", line + 1));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut header = |key: &str| -> Result<Vec<String>> {
        let (i, line) = lines
            .next()
            .ok_or_else(|| Error::Format(format!("missing `{key}` line")))?;
        let mut words = line.split_whitespace();
        if words.next() != Some(key) {
            return Err(bad(i, &format!("expected `{key}`")));
        }
        Ok(words.map(str::to_string).collect())
    };
    let states = header("states")?;
    let letters = header("letters")?;
    let initial = header("initial")?;
    let accepting = header("accepting")?;
    let sid = |name: &str| states.iter().position(|s| s == name);
    let initial = initial
        .first()
        .and_then(|n| sid(n))
        .ok_or_else(|| Error::Format("unknown initial state".into()))?;
    let accepting = accepting
        .iter()
        .map(|n| sid(n).ok_or_else(|| Error::Format(format!("unknown state `{n}`"))))
        .collect::<Result<BTreeSet<_>>>()?;
    let mut transitions = Vec::new();
    for (i, line) in lines {
        let mut parts = line.splitn(3, ' ');
        let (Some(from), Some(test), Some(formula)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(i, "expected `state test formula`"));
        };
        let from = sid(from).ok_or_else(|| bad(i, "unknown state"))?;
        let test = match test {
            "first?" => A2aTest::First,
            "[]" => A2aTest::Letter(Sym::Delim),
            x => A2aTest::Letter(Sym::Param(
                letters
                    .iter()
                    .position(|l| l == x)
                    .ok_or_else(|| bad(i, "unknown letter"))?,
            )),
        };
        let tokens: Vec<String> = formula
            .replace('(', " ( ")
            .replace(')', " ) ")
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let mut pos = 0;
        let formula = parse_pbf(&tokens, &mut pos, &sid).map_err(|m| bad(i, &m))?;
        if pos != tokens.len() {
            return Err(bad(i, "trailing input after formula"));
        }
        transitions.push(A2aTransition { from, test, formula });
    }
    Ok(A2a {
        states,
        letters,
        initial,
        accepting,
        transitions,
    })
}

fn parse_pbf(
    tokens: &[String],
    pos: &mut usize,
    sid: &impl Fn(&str) -> Option<usize>,
) -> std::result::Result<Pbf, String> {
    let tok = tokens.get(*pos).ok_or("unexpected end of formula")?;
    *pos += 1;
    match tok.as_str() {
        "true" => Ok(Pbf::True),
        "false" => Ok(Pbf::False),
        "(" => {
            let head = tokens.get(*pos).ok_or("unexpected end of formula")?.clone();
            *pos += 1;
            let out = match head.as_str() {
                "and" | "or" => {
                    let a = parse_pbf(tokens, pos, sid)?;
                    let b = parse_pbf(tokens, pos, sid)?;
                    if head == "and" {
                        Pbf::and(a, b)
                    } else {
                        Pbf::or(a, b)
                    }
                }
                state => {
                    let s = sid(state).ok_or_else(|| format!("unknown state `{state}`"))?;
                    let m: i8 = tokens
                        .get(*pos)
                        .ok_or("missing move")?
                        .parse()
                        .map_err(|_| "bad move")?;
                    *pos += 1;
                    if !(-1..=1).contains(&m) {
                        return Err("move out of range".into());
                    }
                    Pbf::Atom(s, m)
                }
            };
            if tokens.get(*pos).map(String::as_str) != Some(")") {
                return Err("expected `)`".into());
            }
            *pos += 1;
            Ok(out)
        }
        other => Err(format!("unexpected `{other}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::MachineBuilder;

    fn m(edges: &[(&str, &str, &str)]) -> CounterMachine {
        let mut b = MachineBuilder::new(edges[0].0);
        for (f, op, t) in edges {
            b.edge(f, op, t).unwrap();
        }
        b.build().unwrap()
    }

    fn word(num_params: usize, s: &[Option<usize>]) -> ParameterWord {
        ParameterWord::new(num_params, s.iter().map(|x| x.map_or(Sym::Delim, Sym::Param)).collect()).unwrap()
    }

    #[test]
    fn pbf_examples() {
        assert!(pbf_eval(&Pbf::True, &BTreeSet::new()));
        let conj = Pbf::all([(0, 1), (1, -1)]);
        assert!(!pbf_eval(&conj, &BTreeSet::from([(0, 1)])));
        let disj = Pbf::or(Pbf::Atom(0, 1), Pbf::Atom(1, 0));
        assert!(pbf_eval(&disj, &BTreeSet::from([(1, 0)])));
        assert_eq!(conj.size(), 3);
    }

    #[test]
    fn decode_worked_example() {
        // □ x2 □ □ x1 x3
        let w = word(3, &[None, Some(1), None, None, Some(0), Some(2)]);
        assert_eq!(decode(&w).0, vec![2, 0, 2]);
        assert_eq!(encode_gamma(&ParamInstantiation(vec![2, 0, 2]), 0), w);
        assert_eq!(encode_gamma(&ParamInstantiation(vec![0]), 0), word(1, &[None, Some(0)]));
        assert!(ParameterWord::new(1, vec![Sym::Param(0), Sym::Delim]).is_err());
        assert!(ParameterWord::new(1, vec![Sym::Delim]).is_err());
    }

    #[test]
    fn state_count_has_five_parameter_families() {
        let a = m(&[("q", "+1", "q"), ("q", "=x:x", "p")]);
        let c = build_a2a(&a, 1).unwrap();
        assert_eq!(c.a2a.states.len(), 2 + 1 + 2 * 2 + 5);
    }

    #[test]
    fn membership_examples() {
        let a = m(&[("q", "+1", "q"), ("q", "=x:x", "p")]);
        let c = build_a2a(&a, 1).unwrap();
        assert!(membership(&c.a2a, &word(1, &[None, Some(0)]), None));
        assert!(membership(&c.a2a, &word(1, &[None, None, Some(0)]), None));
        let b = m(&[("q", ">x:x", "p")]);
        let c = build_a2a(&b, 1).unwrap();
        assert!(!membership(&c.a2a, &word(1, &[None, Some(0)]), None));
        assert!(!membership(&c.a2a, &word(1, &[None, None, Some(0)]), Some(5)));
    }

    #[test]
    fn membership_rejects_words_that_are_not_parameter_words() {
        let a = m(&[("q", "0", "p")]);
        let mut b = MachineBuilder::new("q");
        b.update("q", 0, "p").param("x");
        let c = build_a2a(&b.build().unwrap(), 1).unwrap();
        // the letter x never occurs
        let w = ParameterWord {
            num_params: 1,
            prefix: vec![Sym::Delim],
        };
        assert!(!membership(&c.a2a, &w, Some(3)));
        assert!(build_a2a(&a, 1).is_ok());
    }

    #[test]
    fn trees_from_membership_extract_runs() {
        let a = m(&[("q", "+1", "q"), ("q", "<x:x", "p"), ("p", "-1", "p"), ("p", "=0", "r")]);
        let c = build_a2a(&a, 2).unwrap();
        let w = encode_gamma(&ParamInstantiation(vec![2]), 0);
        let tree = accepting_tree(&c.a2a, &w, Some(4)).unwrap();
        validate_run_tree(&c.a2a, &w, &tree).unwrap();
        let back = c.extract_run(&tree, &w).unwrap();
        assert_eq!(back.run.last().state, 2);
        let w = encode_gamma(&ParamInstantiation(vec![0]), 0);
        assert!(accepting_tree(&c.a2a, &w, Some(4)).is_none());
    }

    #[test]
    fn tree_for_equality_example() {
        let a = m(&[("q", "+1", "q"), ("q", "=x:x", "p")]);
        let c = build_a2a(&a, 1).unwrap();
        let witness = ReachWitness {
            gamma: ParamInstantiation(vec![0]),
            run: Run {
                configs: vec![Configuration::new(0, 0), Configuration::new(1, 0)],
                steps: vec![1],
            },
        };
        let tree = c.construct_accepting_tree(&witness).unwrap();
        let w = encode_gamma(&witness.gamma, 0);
        assert!(validate_run_tree(&c.a2a, &w, &tree).is_ok());
        let labels: Vec<(usize, usize)> = tree.nodes.iter().map(|n| (n.state, n.pos)).collect();
        assert!(labels.contains(&(c.layout.present(0), 1)));
        let back = c.extract_run(&tree, &w).unwrap();
        assert_eq!(back.run, witness.run);
        assert_eq!(back.gamma, witness.gamma);
    }

    #[test]
    fn trivial_tree_at_initial_target() {
        let a = m(&[("q", "<x:x", "q"), ("q", ">x:y", "q")]);
        let c = build_a2a(&a, 0).unwrap();
        let witness = ReachWitness {
            gamma: ParamInstantiation(vec![1, 0]),
            run: Run::single(Configuration::new(0, 0)),
        };
        let tree = c.construct_accepting_tree(&witness).unwrap();
        let w = encode_gamma(&witness.gamma, 0);
        assert!(validate_run_tree(&c.a2a, &w, &tree).is_ok());
        assert_eq!(tree.nodes[0].children.len(), 3);
        assert!(c.extract_run(&tree, &w).unwrap().run.is_empty());
    }

    #[test]
    fn tree_diagnostics() {
        let a = m(&[("q", "=0", "p")]);
        let c = build_a2a(&a, 1).unwrap();
        let witness = ReachWitness {
            gamma: ParamInstantiation(vec![]),
            run: Run {
                configs: vec![Configuration::new(0, 0), Configuration::new(1, 0)],
                steps: vec![0],
            },
        };
        let w = encode_gamma(&witness.gamma, 3);
        let mut tree = c.construct_accepting_tree(&witness).unwrap();
        assert!(validate_run_tree(&c.a2a, &w, &tree).is_ok());
        tree.nodes[0].state = 0;
        assert_eq!(validate_run_tree(&c.a2a, &w, &tree).unwrap_err().node, 0);

        let mut tree = c.construct_accepting_tree(&witness).unwrap();
        for n in tree.nodes.iter_mut().skip(1) {
            n.pos += 3;
        }
        tree.nodes[0].pos = 0;
        assert!(validate_run_tree(&c.a2a, &w, &tree).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let a = m(&[
            ("q", "+1", "q"),
            ("q", "-1", "q"),
            ("q", "<x:x", "p"),
            ("p", ">x:y", "q"),
            ("p", "=0", "q"),
        ]);
        let c = build_a2a(&a, 1).unwrap();
        let text = dump(&c.a2a);
        assert_eq!(parse_dump(&text).unwrap(), c.a2a);
    }
}
