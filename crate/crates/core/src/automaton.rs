//! One-counter automata with succinct updates, parameterized tests and
//! constant tests, together with their small-step semantics and the
//! brute-force search oracles every other module is checked against.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateId = usize;
pub type ParamId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cmp {
    Lt,
    Eq,
    Gt,
}

impl Cmp {
    pub const ALL: [Cmp; 3] = [Cmp::Lt, Cmp::Eq, Cmp::Gt];

    /// `lhs ⋈ rhs`
    pub fn holds(self, lhs: u64, rhs: u64) -> bool {
        match self {
            Cmp::Lt => lhs < rhs,
            Cmp::Eq => lhs == rhs,
            Cmp::Gt => lhs > rhs,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Cmp::Lt => '<',
            Cmp::Eq => '=',
            Cmp::Gt => '>',
        }
    }

    pub fn from_symbol(c: char) -> Option<Cmp> {
        match c {
            '<' => Some(Cmp::Lt),
            '=' => Some(Cmp::Eq),
            '>' => Some(Cmp::Gt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Update(i64),
    Param(Cmp, ParamId),
    Const(Cmp, u64),
}

impl Op {
    pub const ZERO_TEST: Op = Op::Const(Cmp::Eq, 0);

    pub fn is_test(&self) -> bool {
        !matches!(self, Op::Update(_))
    }

    /// True when enabledness is preserved by raising the counter, i.e. the
    /// operation may appear in a loop that is pumped upwards.
    pub fn is_upward_closed(&self) -> bool {
        matches!(self, Op::Update(_) | Op::Param(Cmp::Gt, _) | Op::Const(Cmp::Gt, _))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub from: StateId,
    pub op: Op,
    pub to: StateId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub state: StateId,
    pub value: u64,
}

impl Configuration {
    pub fn new(state: StateId, value: u64) -> Self {
        Configuration { state, value }
    }
}

/// A parameter instantiation, indexed by parameter id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ParamInstantiation(pub Vec<u64>);

impl ParamInstantiation {
    pub fn zeros(n: usize) -> Self {
        ParamInstantiation(vec![0; n])
    }

    pub fn get(&self, x: ParamId) -> Option<u64> {
        self.0.get(x).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_value(&self) -> Option<u64> {
        self.0.iter().copied().max()
    }
}

/// The classes of the special-case lattice. Ordered by inclusion of the
/// three features: succinct updates, parameters, constants (constants imply
/// parameters in the naming scheme).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MachineClass {
    Oca,
    OcaS,
    OcaP,
    OcaPC,
    OcaSP,
    OcaSPC,
}

impl MachineClass {
    fn features(self) -> (bool, bool, bool) {
        match self {
            MachineClass::Oca => (false, false, false),
            MachineClass::OcaS => (true, false, false),
            MachineClass::OcaP => (false, true, false),
            MachineClass::OcaPC => (false, true, true),
            MachineClass::OcaSP => (true, true, false),
            MachineClass::OcaSPC => (true, true, true),
        }
    }

    /// `self ⊆ other` in the lattice.
    pub fn is_within(self, other: MachineClass) -> bool {
        let (s1, p1, c1) = self.features();
        let (s2, p2, c2) = other.features();
        (!s1 || s2) && (!p1 || p2) && (!c1 || c2)
    }
}

impl fmt::Display for MachineClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MachineClass::Oca => "OCA",
            MachineClass::OcaS => "OCA(S)",
            MachineClass::OcaP => "OCA(P)",
            MachineClass::OcaPC => "OCA(P,C)",
            MachineClass::OcaSP => "OCA(S,P)",
            MachineClass::OcaSPC => "OCA(S,P,C)",
        };
        f.write_str(s)
    }
}

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// An immutable counter machine. Construct it with [`MachineBuilder`] or
/// [`CounterMachine::from_parts`]; both validate the structural invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterMachine {
    states: Vec<String>,
    initial: StateId,
    params: Vec<String>,
    transitions: Vec<Transition>,
    labels: Vec<BTreeSet<String>>,
    outgoing: Vec<Vec<usize>>,
}

impl CounterMachine {
    pub fn from_parts(
        states: Vec<String>,
        initial: StateId,
        params: Vec<String>,
        transitions: Vec<Transition>,
        labels: Vec<BTreeSet<String>>,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Config("machine has no states".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &states {
            if !is_valid_name(s) {
                return Err(Error::Config(format!("invalid state name `{s}`")));
            }
            if !seen.insert(s.as_str()) {
                return Err(Error::Config(format!("duplicate state `{s}`")));
            }
        }
        let mut seen = BTreeSet::new();
        for x in &params {
            if !is_valid_name(x) {
                return Err(Error::Config(format!("invalid parameter name `{x}`")));
            }
            if !seen.insert(x.as_str()) {
                return Err(Error::Config(format!("duplicate parameter `{x}`")));
            }
        }
        if initial >= states.len() {
            return Err(Error::Config("initial state out of range".into()));
        }
        if labels.len() != states.len() {
            return Err(Error::Config("labels must cover every state".into()));
        }
        for props in &labels {
            if let Some(p) = props.iter().find(|p| !is_valid_name(p)) {
                return Err(Error::Config(format!("invalid proposition name `{p}`")));
            }
        }
        let mut outgoing = vec![Vec::new(); states.len()];
        for (i, t) in transitions.iter().enumerate() {
            if t.from >= states.len() || t.to >= states.len() {
                return Err(Error::Config(format!("transition {i} has an unknown endpoint")));
            }
            if let Op::Param(_, x) = t.op {
                if x >= params.len() {
                    return Err(Error::Config(format!("transition {i} tests an unknown parameter")));
                }
            }
            outgoing[t.from].push(i);
        }
        Ok(CounterMachine {
            states,
            initial,
            params,
            transitions,
            labels,
            outgoing,
        })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, q: StateId) -> &str {
        &self.states[q]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name)
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|s| s == name)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn transition(&self, i: usize) -> &Transition {
        &self.transitions[i]
    }

    pub fn outgoing(&self, q: StateId) -> &[usize] {
        &self.outgoing[q]
    }

    pub fn labels(&self) -> &[BTreeSet<String>] {
        &self.labels
    }

    pub fn label(&self, q: StateId) -> &BTreeSet<String> {
        &self.labels[q]
    }

    /// Every proposition used by some state label.
    pub fn propositions(&self) -> BTreeSet<String> {
        self.labels.iter().flatten().cloned().collect()
    }

    /// Applies transition `t` at counter value `value` under `gamma`.
    /// Returns the successor value, or `None` when the transition is blocked.
    pub fn fire(&self, t: usize, gamma: &ParamInstantiation, value: u64) -> Result<Option<u64>> {
        Ok(match &self.transitions[t].op {
            Op::Update(z) => {
                let next = value as i128 + *z as i128;
                (next >= 0).then_some(next as u64)
            }
            Op::Param(cmp, x) => {
                let bound = gamma
                    .get(*x)
                    .ok_or_else(|| Error::Config(format!("no value for parameter `{}`", self.params[*x])))?;
                cmp.holds(value, bound).then_some(value)
            }
            Op::Const(cmp, c) => cmp.holds(value, *c).then_some(value),
        })
    }

    pub(crate) fn check_gamma(&self, gamma: &ParamInstantiation) -> Result<()> {
        if gamma.len() < self.params.len() {
            return Err(Error::Config(format!(
                "no value for parameter `{}`",
                self.params[gamma.len()]
            )));
        }
        Ok(())
    }
}

/// Builder that declares states and parameters on first mention.
#[derive(Debug, Clone, Default)]
pub struct MachineBuilder {
    states: Vec<String>,
    params: Vec<String>,
    initial: Option<String>,
    transitions: Vec<(String, OpSyntax, String)>,
    labels: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
enum OpSyntax {
    Update(i64),
    Param(Cmp, String),
    Const(Cmp, u64),
}

impl MachineBuilder {
    pub fn new(initial: &str) -> Self {
        let mut b = MachineBuilder {
            initial: Some(initial.to_string()),
            ..Default::default()
        };
        b.state(initial);
        b
    }

    pub fn state(&mut self, name: &str) -> &mut Self {
        if !self.states.iter().any(|s| s == name) {
            self.states.push(name.to_string());
        }
        self
    }

    pub fn param(&mut self, name: &str) -> &mut Self {
        if !self.params.iter().any(|s| s == name) {
            self.params.push(name.to_string());
        }
        self
    }

    pub fn update(&mut self, from: &str, z: i64, to: &str) -> &mut Self {
        self.push(from, OpSyntax::Update(z), to)
    }

    pub fn param_test(&mut self, from: &str, cmp: Cmp, x: &str, to: &str) -> &mut Self {
        self.param(x);
        self.push(from, OpSyntax::Param(cmp, x.to_string()), to)
    }

    pub fn const_test(&mut self, from: &str, cmp: Cmp, c: u64, to: &str) -> &mut Self {
        self.push(from, OpSyntax::Const(cmp, c), to)
    }

    pub fn zero_test(&mut self, from: &str, to: &str) -> &mut Self {
        self.const_test(from, Cmp::Eq, 0, to)
    }

    /// Adds a transition whose operation is written in the machine-file
    /// syntax (`+1`, `-3`, `0`, `=0`, `<c:4`, `=x:y`, ...).
    pub fn edge(&mut self, from: &str, op: &str, to: &str) -> Result<&mut Self> {
        let parsed = parse_op_syntax(op)?;
        if let OpSyntax::Param(_, x) = &parsed {
            let x = x.clone();
            self.param(&x);
        }
        Ok(self.push(from, parsed, to))
    }

    pub fn label(&mut self, state: &str, prop: &str) -> &mut Self {
        self.state(state);
        self.labels.push((state.to_string(), prop.to_string()));
        self
    }

    fn push(&mut self, from: &str, op: OpSyntax, to: &str) -> &mut Self {
        self.state(from);
        self.state(to);
        self.transitions.push((from.to_string(), op, to.to_string()));
        self
    }

    pub fn build(&self) -> Result<CounterMachine> {
        let index: HashMap<&str, usize> = self.states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let pindex: HashMap<&str, usize> = self.params.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let initial = self
            .initial
            .as_deref()
            .ok_or_else(|| Error::Config("no initial state".into()))?;
        let transitions = self
            .transitions
            .iter()
            .map(|(f, op, t)| Transition {
                from: index[f.as_str()],
                op: match op {
                    OpSyntax::Update(z) => Op::Update(*z),
                    OpSyntax::Param(c, x) => Op::Param(*c, pindex[x.as_str()]),
                    OpSyntax::Const(c, k) => Op::Const(*c, *k),
                },
                to: index[t.as_str()],
            })
            .collect();
        let mut labels = vec![BTreeSet::new(); self.states.len()];
        for (q, p) in &self.labels {
            labels[index[q.as_str()]].insert(p.clone());
        }
        CounterMachine::from_parts(
            self.states.clone(),
            index[initial],
            self.params.clone(),
            transitions,
            labels,
        )
    }
}

fn parse_op_syntax(op: &str) -> Result<OpSyntax> {
    let bad = || Error::Format(format!("malformed operation `{op}`"));
    let op = op.trim();
    if op == "0" {
        return Ok(OpSyntax::Update(0));
    }
    if op == "=0" {
        return Ok(OpSyntax::Const(Cmp::Eq, 0));
    }
    let mut chars = op.chars();
    let first = chars.next().ok_or_else(bad)?;
    let rest = chars.as_str();
    match first {
        '+' | '-' => {
            if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let magnitude: i64 = rest.parse().map_err(|_| bad())?;
            Ok(OpSyntax::Update(if first == '-' { -magnitude } else { magnitude }))
        }
        _ => {
            let cmp = Cmp::from_symbol(first).ok_or_else(bad)?;
            if let Some(c) = rest.strip_prefix("c:") {
                if c.is_empty() || !c.chars().all(|ch| ch.is_ascii_digit()) {
                    return Err(bad());
                }
                Ok(OpSyntax::Const(cmp, c.parse().map_err(|_| bad())?))
            } else if let Some(x) = rest.strip_prefix("x:") {
                if !is_valid_name(x) {
                    return Err(bad());
                }
                Ok(OpSyntax::Param(cmp, x.to_string()))
            } else {
                Err(bad())
            }
        }
    }
}

/// Parses an operation string against a machine's parameter list.
pub fn parse_op(op: &str, params: &[String]) -> Result<Op> {
    Ok(match parse_op_syntax(op)? {
        OpSyntax::Update(z) => Op::Update(z),
        OpSyntax::Const(c, k) => Op::Const(c, k),
        OpSyntax::Param(c, x) => {
            let id = params
                .iter()
                .position(|p| *p == x)
                .ok_or_else(|| Error::Config(format!("undeclared parameter `{x}`")))?;
            Op::Param(c, id)
        }
    })
}

/// Renders an operation in the machine-file syntax.
pub fn render_op(op: &Op, params: &[String]) -> String {
    match op {
        Op::Update(z) if *z > 0 => format!("+{z}"),
        Op::Update(z) => {
            if *z == 0 {
                "0".to_string()
            } else {
                format!("{z}")
            }
        }
        Op::Const(Cmp::Eq, 0) => "=0".to_string(),
        Op::Const(c, k) => format!("{}c:{k}", c.symbol()),
        Op::Param(c, x) => format!("{}x:{}", c.symbol(), params[*x]),
    }
}

/// Exactly the one-step successors of `c` under `gamma`, paired with the
/// transition that produced them, in declaration order.
pub fn successors(
    machine: &CounterMachine,
    gamma: &ParamInstantiation,
    c: Configuration,
) -> Result<Vec<(usize, Configuration)>> {
    if c.state >= machine.num_states() {
        return Err(Error::Argument(format!("unknown state id {}", c.state)));
    }
    let mut out = Vec::new();
    for &t in machine.outgoing(c.state) {
        if let Some(v) = machine.fire(t, gamma, c.value)? {
            out.push((t, Configuration::new(machine.transition(t).to, v)));
        }
    }
    Ok(out)
}

pub fn classify(machine: &CounterMachine) -> MachineClass {
    let mut succinct = false;
    let mut params = false;
    let mut consts = false;
    for t in machine.transitions() {
        match t.op {
            Op::Update(z) => succinct |= !(-1..=1).contains(&z),
            Op::Param(..) => params = true,
            Op::Const(Cmp::Eq, 0) => {}
            Op::Const(..) => consts = true,
        }
    }
    match (succinct, params || consts, consts) {
        (false, false, _) => MachineClass::Oca,
        (true, false, _) => MachineClass::OcaS,
        (false, true, false) => MachineClass::OcaP,
        (false, true, true) => MachineClass::OcaPC,
        (true, true, false) => MachineClass::OcaSP,
        (true, true, true) => MachineClass::OcaSPC,
    }
}

pub fn require_class(machine: &CounterMachine, allowed: MachineClass, expected: &'static str) -> Result<()> {
    let found = classify(machine);
    if found.is_within(allowed) {
        Ok(())
    } else {
        Err(Error::Class { expected, found })
    }
}

/// `⌈log₂ n⌉` for `n ≥ 2`, and 0 for `n ≤ 1`.
pub fn log_size(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - u64::from((n - 1).leading_zeros())
    }
}

pub fn size(machine: &CounterMachine) -> u64 {
    let mut total = (machine.num_states() + machine.num_params() + machine.transitions().len()) as u64;
    total += machine.labels().iter().map(|l| l.len() as u64).sum::<u64>();
    for t in machine.transitions() {
        match t.op {
            Op::Update(z) if z != 0 => total += log_size(z.unsigned_abs()),
            Op::Const(_, c) if c > 0 => total += log_size(c),
            _ => {}
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub configs: Vec<Configuration>,
    pub steps: Vec<usize>,
}

impl Run {
    pub fn single(c: Configuration) -> Self {
        Run {
            configs: vec![c],
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> Configuration {
        self.configs[0]
    }

    pub fn last(&self) -> Configuration {
        *self.configs.last().expect("runs are nonempty")
    }

    pub fn push(&mut self, step: usize, c: Configuration) {
        self.steps.push(step);
        self.configs.push(c);
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn extend(&mut self, other: &Run) {
        debug_assert_eq!(self.last(), other.first());
        self.configs.extend_from_slice(&other.configs[1..]);
        self.steps.extend_from_slice(&other.steps);
    }

    pub fn max_value(&self) -> u64 {
        self.configs.iter().map(|c| c.value).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDiagnostic {
    pub position: usize,
    pub reason: String,
}

impl fmt::Display for RunDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}", self.position, self.reason)
    }
}

pub fn validate_run(
    machine: &CounterMachine,
    gamma: &ParamInstantiation,
    run: &Run,
) -> std::result::Result<(), RunDiagnostic> {
    let diag = |position, reason: String| RunDiagnostic { position, reason };
    if run.configs.is_empty() {
        return Err(diag(0, "empty run".into()));
    }
    if run.configs.len() != run.steps.len() + 1 {
        return Err(diag(0, "configuration and step counts disagree".into()));
    }
    if let Some(c) = run.configs.iter().find(|c| c.state >= machine.num_states()) {
        return Err(diag(0, format!("unknown state id {}", c.state)));
    }
    for (i, &t) in run.steps.iter().enumerate() {
        let (a, b) = (run.configs[i], run.configs[i + 1]);
        if t >= machine.transitions().len() {
            return Err(diag(i, format!("unknown transition {t}")));
        }
        let tr = machine.transition(t);
        if tr.from != a.state || tr.to != b.state {
            return Err(diag(i, format!("transition {t} does not connect these states")));
        }
        let reason = match &tr.op {
            Op::Update(z) => {
                let next = a.value as i128 + *z as i128;
                if next < 0 {
                    Some("negative counter".to_string())
                } else if next != b.value as i128 {
                    Some(format!("update {z} from {} does not yield {}", a.value, b.value))
                } else {
                    None
                }
            }
            Op::Param(cmp, x) => match gamma.get(*x) {
                None => Some(format!("no value for parameter `{}`", machine.params()[*x])),
                Some(_) if a.value != b.value => Some("test changed the counter".into()),
                Some(g) if !cmp.holds(a.value, g) => Some(format!(
                    "test {}{} fails at value {}",
                    cmp.symbol(),
                    machine.params()[*x],
                    a.value
                )),
                Some(_) => None,
            },
            Op::Const(cmp, c) => {
                if a.value != b.value {
                    Some("test changed the counter".into())
                } else if !cmp.holds(a.value, *c) {
                    Some(format!("test {}{c} fails at value {}", cmp.symbol(), a.value))
                } else {
                    None
                }
            }
        };
        if let Some(reason) = reason {
            return Err(diag(i, reason));
        }
    }
    Ok(())
}

/// An ultimately periodic run: `run` visits `configs[loop_start]` and ends in
/// a configuration with the same state and a value at least as large. When
/// the value grows, the loop is repeated shifted upwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LassoRun {
    pub run: Run,
    pub loop_start: usize,
}

impl LassoRun {
    pub fn loop_entry(&self) -> Configuration {
        self.run.configs[self.loop_start]
    }

    pub fn drift(&self) -> u64 {
        self.run.last().value.saturating_sub(self.loop_entry().value)
    }

    pub fn is_exact(&self) -> bool {
        self.run.last() == self.loop_entry()
    }

    pub fn loop_steps(&self) -> &[usize] {
        &self.run.steps[self.loop_start..]
    }

    /// The finite run obtained by taking the loop `extra` more times.
    pub fn unroll(&self, extra: usize) -> Run {
        let mut run = self.run.clone();
        let delta = self.drift();
        let body = &self.run.configs[self.loop_start + 1..];
        for k in 1..=extra as u64 {
            for (c, &t) in body.iter().zip(self.loop_steps()) {
                run.push(t, Configuration::new(c.state, c.value + k * delta));
            }
        }
        run
    }
}

pub fn validate_lasso(
    machine: &CounterMachine,
    gamma: &ParamInstantiation,
    lasso: &LassoRun,
) -> std::result::Result<(), RunDiagnostic> {
    validate_run(machine, gamma, &lasso.run)?;
    let diag = |reason: &str| RunDiagnostic {
        position: lasso.run.len(),
        reason: reason.to_string(),
    };
    if lasso.loop_start >= lasso.run.configs.len() - 1 {
        return Err(diag("loop is empty"));
    }
    let (entry, exit) = (lasso.loop_entry(), lasso.run.last());
    if entry.state != exit.state {
        return Err(diag("loop does not return to its entry state"));
    }
    if exit.value < entry.value {
        return Err(diag("loop decreases the counter"));
    }
    if exit.value > entry.value {
        if let Some(i) = lasso
            .loop_steps()
            .iter()
            .position(|&t| !machine.transition(t).op.is_upward_closed())
        {
            return Err(RunDiagnostic {
                position: lasso.loop_start + i,
                reason: "growing loop uses a test that is not preserved when pumped".into(),
            });
        }
    }
    Ok(())
}

/// Dense table over configurations with values `0..=cap`.
struct ConfigIndex {
    width: usize,
}

impl ConfigIndex {
    fn new(cap: u64) -> Self {
        ConfigIndex {
            width: cap as usize + 1,
        }
    }

    fn index(&self, c: Configuration) -> usize {
        c.state * self.width + c.value as usize
    }
}

/// Breadth-first search over configurations with value at most `cap`;
/// returns a shortest initialized run reaching `target`.
pub fn bounded_reach_oracle(
    machine: &CounterMachine,
    gamma: &ParamInstantiation,
    target: StateId,
    cap: u64,
) -> Result<Option<Run>> {
    machine.check_gamma(gamma)?;
    let start = Configuration::new(machine.initial(), 0);
    Ok(bfs_path(machine, gamma, start, cap, |c| c.state == target))
}

/// Shortest run from `start` to any configuration satisfying `goal`, over
/// configurations with values at most `cap`. `gamma` must be total.
pub(crate) fn bfs_path(
    machine: &CounterMachine,
    gamma: &ParamInstantiation,
    start: Configuration,
    cap: u64,
    goal: impl Fn(Configuration) -> bool,
) -> Option<Run> {
    if start.value > cap {
        return None;
    }
    if goal(start) {
        return Some(Run::single(start));
    }
    let idx = ConfigIndex::new(cap);
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; machine.num_states() * idx.width];
    let mut visited = vec![false; parent.len()];
    visited[idx.index(start)] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for &t in machine.outgoing(c.state) {
            let Some(v) = machine.fire(t, gamma, c.value).ok().flatten() else {
                continue;
            };
            if v > cap {
                continue;
            }
            let next = Configuration::new(machine.transition(t).to, v);
            let i = idx.index(next);
            if visited[i] {
                continue;
            }
            visited[i] = true;
            parent[i] = Some((idx.index(c), t));
            if goal(next) {
                return Some(rebuild(machine, &idx, &parent, start, next));
            }
            queue.push_back(next);
        }
    }
    None
}

fn rebuild(
    machine: &CounterMachine,
    idx: &ConfigIndex,
    parent: &[Option<(usize, usize)>],
    start: Configuration,
    end: Configuration,
) -> Run {
    let decode = |i: usize| Configuration::new(i / idx.width, (i % idx.width) as u64);
    let mut configs = vec![end];
    let mut steps = Vec::new();
    let mut cur = idx.index(end);
    while decode(cur) != start {
        let (p, t) = parent[cur].expect("parent chain reaches the start");
        steps.push(t);
        configs.push(decode(p));
        cur = p;
    }
    let _ = machine;
    configs.reverse();
    steps.reverse();
    Run { configs, steps }
}

/// Searches the configurations with value at most `cap` for an initialized
/// lasso whose loop visits `accepting`. The loop either repeats its entry
/// configuration exactly, or returns to the entry state with a larger value
/// using only operations that stay enabled when shifted upwards.
pub fn rep_reach_oracle(
    machine: &CounterMachine,
    gamma: &ParamInstantiation,
    accepting: &BTreeSet<StateId>,
    cap: u64,
) -> Result<Option<LassoRun>> {
    machine.check_gamma(gamma)?;
    let start = Configuration::new(machine.initial(), 0);
    Ok(rep_reach_from(machine, gamma, start, accepting, cap))
}

pub(crate) fn rep_reach_from(
    machine: &CounterMachine,
    gamma: &ParamInstantiation,
    start: Configuration,
    accepting: &BTreeSet<StateId>,
    cap: u64,
) -> Option<LassoRun> {
    if start.value > cap {
        return None;
    }
    for entry in reachable_configs(machine, gamma, start, cap) {
        for pumped in [false, true] {
            if let Some(lp) = find_loop(machine, gamma, entry, accepting, cap, pumped) {
                let mut run =
                    bfs_path(machine, gamma, start, cap, |c| c == entry).expect("entry configuration is reachable");
                let loop_start = run.len();
                run.extend(&lp);
                return Some(LassoRun { run, loop_start });
            }
        }
    }
    None
}

pub(crate) fn reachable_configs(
    machine: &CounterMachine,
    gamma: &ParamInstantiation,
    start: Configuration,
    cap: u64,
) -> Vec<Configuration> {
    let idx = ConfigIndex::new(cap);
    let mut visited = vec![false; machine.num_states() * idx.width];
    visited[idx.index(start)] = true;
    let mut order = vec![start];
    let mut head = 0;
    while head < order.len() {
        let c = order[head];
        head += 1;
        for &t in machine.outgoing(c.state) {
            let Some(v) = machine.fire(t, gamma, c.value).ok().flatten() else {
                continue;
            };
            if v > cap {
                continue;
            }
            let next = Configuration::new(machine.transition(t).to, v);
            let i = idx.index(next);
            if !visited[i] {
                visited[i] = true;
                order.push(next);
            }
        }
    }
    order
}

/// A nonempty path from `entry` back to its state that visits `accepting`:
/// exact repetition of `entry` when `pumped` is false, a strictly larger
/// value through upward-closed operations when it is true.
fn find_loop(
    machine: &CounterMachine,
    gamma: &ParamInstantiation,
    entry: Configuration,
    accepting: &BTreeSet<StateId>,
    cap: u64,
    pumped: bool,
) -> Option<Run> {
    let width = cap as usize + 1;
    let key = |c: Configuration, flag: bool| (c.state * width + c.value as usize) * 2 + flag as usize;
    let mut parent: HashMap<usize, (usize, usize)> = HashMap::new();
    let start_flag = accepting.contains(&entry.state);
    let start_key = key(entry, start_flag);
    let mut queue = VecDeque::from([(entry, start_flag)]);
    let mut seen = std::collections::HashSet::from([start_key]);
    while let Some((c, flag)) = queue.pop_front() {
        for &t in machine.outgoing(c.state) {
            if pumped && !machine.transition(t).op.is_upward_closed() {
                continue;
            }
            let Some(v) = machine.fire(t, gamma, c.value).ok().flatten() else {
                continue;
            };
            if v > cap {
                continue;
            }
            let next = Configuration::new(machine.transition(t).to, v);
            let nflag = flag || accepting.contains(&next.state);
            let done = nflag && next.state == entry.state && if pumped { v > entry.value } else { v == entry.value };
            let k = key(next, nflag);
            if done {
                let mut configs = vec![next];
                let mut steps = vec![t];
                let mut cur = key(c, flag);
                configs.push(c);
                while cur != start_key {
                    let (p, pt) = parent[&cur];
                    steps.push(pt);
                    let pc = p / 2;
                    configs.push(Configuration::new(pc / width, (pc % width) as u64));
                    cur = p;
                }
                configs.reverse();
                steps.reverse();
                return Some(Run { configs, steps });
            }
            if seen.insert(k) {
                parent.insert(k, (key(c, flag), t));
                queue.push_back((next, nflag));
            }
        }
    }
    None
}
