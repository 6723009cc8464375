//! Freeze LTL over data words: syntax, normal forms, the flat fragment and
//! an exact evaluator on ultimately periodic words.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

use crate::automaton::{is_valid_name, Cmp, CounterMachine, LassoRun};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Prop(String),
    RegTest(Cmp, String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Release(Box<Formula>, Box<Formula>),
    Freeze(String, Box<Formula>),
}

use Formula::*;

pub fn prop(p: &str) -> Formula {
    Prop(p.to_string())
}

pub fn regtest(cmp: Cmp, r: &str) -> Formula {
    RegTest(cmp, r.to_string())
}

pub fn not(a: Formula) -> Formula {
    Not(Box::new(a))
}

pub fn and(a: Formula, b: Formula) -> Formula {
    And(Box::new(a), Box::new(b))
}

pub fn or(a: Formula, b: Formula) -> Formula {
    Or(Box::new(a), Box::new(b))
}

pub fn next(a: Formula) -> Formula {
    Next(Box::new(a))
}

pub fn until(a: Formula, b: Formula) -> Formula {
    Until(Box::new(a), Box::new(b))
}

pub fn release(a: Formula, b: Formula) -> Formula {
    Release(Box::new(a), Box::new(b))
}

pub fn freeze(r: &str, a: Formula) -> Formula {
    Freeze(r.to_string(), Box::new(a))
}

pub fn eventually(a: Formula) -> Formula {
    until(True, a)
}

pub fn globally(a: Formula) -> Formula {
    not(until(True, not(a)))
}

pub fn implies(a: Formula, b: Formula) -> Formula {
    or(not(a), b)
}

/// Conjunction of all formulas, `true` when empty.
pub fn conj(items: impl IntoIterator<Item = Formula>) -> Formula {
    let mut items: Vec<Formula> = items.into_iter().collect();
    match items.pop() {
        None => True,
        Some(last) => items.into_iter().rev().fold(last, |acc, f| and(f, acc)),
    }
}

/// Disjunction of all formulas, `false` when empty.
pub fn disj(items: impl IntoIterator<Item = Formula>) -> Formula {
    let mut items: Vec<Formula> = items.into_iter().collect();
    match items.pop() {
        None => False,
        Some(last) => items.into_iter().rev().fold(last, |acc, f| or(f, acc)),
    }
}

impl Formula {
    pub fn children(&self) -> Vec<&Formula> {
        match self {
            True | False | Prop(_) | RegTest(..) => vec![],
            Not(a) | Next(a) | Freeze(_, a) => vec![a],
            And(a, b) | Or(a, b) | Until(a, b) | Release(a, b) => vec![a, b],
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn contains_freeze(&self) -> bool {
        matches!(self, Freeze(..)) || self.children().iter().any(|c| c.contains_freeze())
    }

    pub fn propositions(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |f| {
            if let Prop(p) = f {
                out.insert(p.clone());
            }
        });
        out
    }

    /// Register names bound by some freeze or used by some test.
    pub fn registers(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |f| match f {
            Freeze(r, _) | RegTest(_, r) => {
                out.insert(r.clone());
            }
            _ => {}
        });
        out
    }

    pub fn free_registers(&self) -> BTreeSet<String> {
        match self {
            RegTest(_, r) => BTreeSet::from([r.clone()]),
            Freeze(r, a) => {
                let mut s = a.free_registers();
                s.remove(r);
                s
            }
            _ => self.children().iter().flat_map(|c| c.free_registers()).collect(),
        }
    }

    fn walk(&self, f: &mut impl FnMut(&Formula)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }
}

// ---------------------------------------------------------------- rendering

fn render_into(f: &Formula, out: &mut String) {
    match f {
        True => out.push_str("true"),
        False => out.push_str("false"),
        Prop(p) => out.push_str(p),
        RegTest(c, r) => {
            out.push('[');
            out.push(c.symbol());
            out.push_str(r);
            out.push(']');
        }
        Not(a) => {
            out.push('!');
            render_into(a, out);
        }
        Next(a) => {
            out.push_str("X ");
            render_into(a, out);
        }
        Freeze(r, a) => {
            out.push('@');
            out.push_str(r);
            out.push_str(". ");
            render_into(a, out);
        }
        And(a, b) | Or(a, b) | Until(a, b) | Release(a, b) => {
            let op = match f {
                And(..) => " & ",
                Or(..) => " | ",
                Until(..) => " U ",
                _ => " R ",
            };
            out.push('(');
            render_into(a, out);
            out.push_str(op);
            render_into(b, out);
            out.push(')');
        }
    }
}

pub fn render(f: &Formula) -> String {
    let mut s = String::new();
    render_into(f, &mut s);
    s
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

// ------------------------------------------------------------------ parsing

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Test(Cmp, String),
    At(String),
    Not,
    And,
    Or,
    Arrow,
    LParen,
    RParen,
}

const KEYWORDS: [&str; 7] = ["true", "false", "X", "F", "G", "U", "R"];

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let syntax = |position, message: &str| Error::Syntax {
        position,
        message: message.to_string(),
    };
    let ident_end = |mut j: usize| {
        while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
            j += 1;
        }
        j
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'!' => toks.push((start, Tok::Not)),
            b'&' => toks.push((start, Tok::And)),
            b'|' => toks.push((start, Tok::Or)),
            b'(' => toks.push((start, Tok::LParen)),
            b')' => toks.push((start, Tok::RParen)),
            b'-' => {
                if bytes.get(i + 1) != Some(&b'>') {
                    return Err(syntax(start, "expected `->`"));
                }
                i += 1;
                toks.push((start, Tok::Arrow));
            }
            b'[' => {
                let cmp = bytes
                    .get(i + 1)
                    .and_then(|&b| Cmp::from_symbol(b as char))
                    .ok_or_else(|| syntax(start, "expected `<`, `=` or `>` after `[`"))?;
                let end = ident_end(i + 2);
                if end == i + 2 {
                    return Err(syntax(i + 2, "expected a register name"));
                }
                if bytes.get(end) != Some(&b']') {
                    return Err(syntax(end, "expected `]`"));
                }
                toks.push((start, Tok::Test(cmp, text[i + 2..end].to_string())));
                i = end;
            }
            b'@' => {
                let end = ident_end(i + 1);
                if end == i + 1 {
                    return Err(syntax(i + 1, "expected a register name after `@`"));
                }
                if bytes.get(end) != Some(&b'.') {
                    return Err(syntax(end, "expected `.` after the frozen register"));
                }
                toks.push((start, Tok::At(text[i + 1..end].to_string())));
                i = end;
            }
            _ if c.is_ascii_alphanumeric() || c == b'_' => {
                let end = ident_end(i);
                toks.push((start, Tok::Ident(text[i..end].to_string())));
                i = end - 1;
            }
            _ => return Err(syntax(start, &format!("unexpected character `{}`", c as char))),
        }
        i += 1;
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn error(&self, message: &str) -> Error {
        Error::Syntax {
            position: self.offset(),
            message: message.to_string(),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn temporal(&mut self) -> Result<Formula> {
        let lhs = self.implication()?;
        if self.is_keyword("U") || self.is_keyword("R") {
            let is_until = self.is_keyword("U");
            self.pos += 1;
            let rhs = self.temporal()?;
            return Ok(if is_until { until(lhs, rhs) } else { release(lhs, rhs) });
        }
        Ok(lhs)
    }

    fn implication(&mut self) -> Result<Formula> {
        let lhs = self.disjunction()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            let rhs = self.implication()?;
            return Ok(implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula> {
        let mut lhs = self.conjunction()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| self.error("unexpected end of formula"))?;
        match tok {
            Tok::Not => {
                self.pos += 1;
                Ok(not(self.unary()?))
            }
            Tok::At(r) => {
                self.pos += 1;
                Ok(freeze(&r, self.unary()?))
            }
            Tok::Ident(s) if s == "X" || s == "F" || s == "G" => {
                self.pos += 1;
                let a = self.unary()?;
                Ok(match s.as_str() {
                    "X" => next(a),
                    "F" => eventually(a),
                    _ => globally(a),
                })
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Formula> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| self.error("unexpected end of formula"))?;
        let f = match tok {
            Tok::Ident(s) if s == "true" => True,
            Tok::Ident(s) if s == "false" => False,
            Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => {
                return Err(self.error(&format!("unexpected `{s}`")));
            }
            Tok::Ident(s) => Prop(s),
            Tok::Test(c, r) => RegTest(c, r),
            Tok::LParen => {
                self.pos += 1;
                let inner = self.temporal()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error("expected `)`"));
                }
                inner
            }
            _ => return Err(self.error("expected a formula")),
        };
        self.pos += 1;
        Ok(f)
    }
}

pub fn parse(text: &str) -> Result<Formula> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
        end: text.len(),
    };
    let f = p.temporal()?;
    if p.pos != p.toks.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(f)
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

// ------------------------------------------------------------ normal forms

/// Negation normal form: negations only in front of propositions. Negated
/// register tests become disjunctions of the two other comparisons.
pub fn nnf(f: &Formula) -> Formula {
    match f {
        True | False | Prop(_) | RegTest(..) => f.clone(),
        Not(a) => negate(a),
        And(a, b) => and(nnf(a), nnf(b)),
        Or(a, b) => or(nnf(a), nnf(b)),
        Next(a) => next(nnf(a)),
        Until(a, b) => until(nnf(a), nnf(b)),
        Release(a, b) => release(nnf(a), nnf(b)),
        Freeze(r, a) => freeze(r, nnf(a)),
    }
}

/// `nnf(¬f)`
fn negate(f: &Formula) -> Formula {
    match f {
        True => False,
        False => True,
        Prop(_) => not(f.clone()),
        RegTest(c, r) => {
            let [x, y] = match c {
                Cmp::Eq => [Cmp::Lt, Cmp::Gt],
                Cmp::Lt => [Cmp::Eq, Cmp::Gt],
                Cmp::Gt => [Cmp::Eq, Cmp::Lt],
            };
            or(regtest(x, r), regtest(y, r))
        }
        Not(a) => nnf(a),
        And(a, b) => or(negate(a), negate(b)),
        Or(a, b) => and(negate(a), negate(b)),
        Next(a) => next(negate(a)),
        Until(a, b) => release(negate(a), negate(b)),
        Release(a, b) => until(negate(a), negate(b)),
        Freeze(r, a) => freeze(r, negate(a)),
    }
}

pub fn is_nnf(f: &Formula) -> bool {
    match f {
        Not(a) => matches!(**a, Prop(_)),
        _ => f.children().iter().all(|c| is_nnf(c)),
    }
}

/// Checks the flat-fragment condition on every until and release, reporting
/// the first offending subformula together with its polarity.
pub fn check_flat(f: &Formula) -> Result<()> {
    fn go(f: &Formula, negations: usize) -> Result<()> {
        let even = negations.is_multiple_of(2);
        let polarity = if even { "positive" } else { "negative" };
        let offending = match f {
            // a U b: freeze forbidden in a (positive) or b (negative)
            Until(a, b) => {
                if even && a.contains_freeze() {
                    Some("its left argument")
                } else if !even && b.contains_freeze() {
                    Some("its right argument")
                } else {
                    None
                }
            }
            // a R b: freeze forbidden in b (positive) or a (negative)
            Release(a, b) => {
                if even && b.contains_freeze() {
                    Some("its right argument")
                } else if !even && a.contains_freeze() {
                    Some("its left argument")
                } else {
                    None
                }
            }
            _ => None,
        };
        if let Some(side) = offending {
            return Err(Error::NotFlat(format!(
                "{} occurs with {polarity} polarity and has a freeze quantifier in {side}",
                render(f)
            )));
        }
        let inner = negations + usize::from(matches!(f, Not(_)));
        f.children().into_iter().try_for_each(|c| go(c, inner))
    }
    go(f, 0)
}

pub fn is_flat(f: &Formula) -> bool {
    check_flat(f).is_ok()
}

/// The negation of `f` is flat.
pub fn is_coflat(f: &Formula) -> bool {
    is_flat(&negate(f))
}

pub fn check_sentence(f: &Formula) -> Result<()> {
    match f.free_registers().into_iter().next() {
        Some(r) => Err(Error::NotSentence(r)),
        None => Ok(()),
    }
}

pub fn is_sentence(f: &Formula) -> bool {
    check_sentence(f).is_ok()
}

/// Gives every freeze occurrence its own register `{name}_{k}`, re-pointing
/// each test to its innermost binder.
pub fn rename_registers(f: &Formula) -> Result<Formula> {
    check_sentence(f)?;
    let taken = f.registers();
    let mut counter = 0usize;
    fn go(
        f: &Formula,
        scope: &mut Vec<(String, String)>,
        taken: &BTreeSet<String>,
        counter: &mut usize,
    ) -> Result<Formula> {
        Ok(match f {
            RegTest(c, r) => {
                let (_, fresh) = scope
                    .iter()
                    .rev()
                    .find(|(old, _)| old == r)
                    .ok_or_else(|| Error::NotSentence(r.clone()))?;
                RegTest(*c, fresh.clone())
            }
            Freeze(r, a) => {
                let fresh = loop {
                    *counter += 1;
                    let name = format!("{r}_{counter}");
                    if !taken.contains(&name) {
                        break name;
                    }
                };
                scope.push((r.clone(), fresh.clone()));
                let body = go(a, scope, taken, counter)?;
                scope.pop();
                Freeze(fresh, Box::new(body))
            }
            True | False | Prop(_) => f.clone(),
            Not(a) => not(go(a, scope, taken, counter)?),
            Next(a) => next(go(a, scope, taken, counter)?),
            And(a, b) => and(go(a, scope, taken, counter)?, go(b, scope, taken, counter)?),
            Or(a, b) => or(go(a, scope, taken, counter)?, go(b, scope, taken, counter)?),
            Until(a, b) => until(go(a, scope, taken, counter)?, go(b, scope, taken, counter)?),
            Release(a, b) => release(go(a, scope, taken, counter)?, go(b, scope, taken, counter)?),
        })
    }
    go(f, &mut Vec::new(), &taken, &mut counter)
}

// --------------------------------------------------------------- data words

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Letter {
    pub props: BTreeSet<String>,
    pub value: u64,
}

impl Letter {
    pub fn new<S: AsRef<str>>(props: &[S], value: u64) -> Self {
        Letter {
            props: props.iter().map(|p| p.as_ref().to_string()).collect(),
            value,
        }
    }
}

/// `prefix · loop^ω`, where the k-th repetition of the loop has all its
/// values raised by `k·drift`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LassoDataWord {
    prefix: Vec<Letter>,
    cycle: Vec<Letter>,
    drift: u64,
}

impl LassoDataWord {
    pub fn new(prefix: Vec<Letter>, cycle: Vec<Letter>, drift: u64) -> Result<Self> {
        if cycle.is_empty() {
            return Err(Error::Argument("the loop of a data word must be nonempty".into()));
        }
        if let Some(p) = prefix
            .iter()
            .chain(&cycle)
            .flat_map(|l| &l.props)
            .find(|p| !is_valid_name(p))
        {
            return Err(Error::Argument(format!("invalid proposition name `{p}`")));
        }
        Ok(LassoDataWord { prefix, cycle, drift })
    }

    pub fn exact(prefix: Vec<Letter>, cycle: Vec<Letter>) -> Result<Self> {
        Self::new(prefix, cycle, 0)
    }

    /// The data word of a lasso run, read through the state labels.
    pub fn from_lasso(machine: &CounterMachine, lasso: &LassoRun) -> Result<Self> {
        let letter = |i: usize| {
            let c = lasso.run.configs[i];
            Letter {
                props: machine.label(c.state).clone(),
                value: c.value,
            }
        };
        let n = lasso.run.configs.len();
        if lasso.loop_start + 1 >= n {
            return Err(Error::Argument("lasso has an empty loop".into()));
        }
        Self::new(
            (0..lasso.loop_start).map(letter).collect(),
            (lasso.loop_start..n - 1).map(letter).collect(),
            lasso.drift(),
        )
    }

    pub fn prefix(&self) -> &[Letter] {
        &self.prefix
    }

    pub fn cycle(&self) -> &[Letter] {
        &self.cycle
    }

    pub fn drift(&self) -> u64 {
        self.drift
    }

    pub fn value(&self, i: usize) -> u64 {
        let p = self.prefix.len();
        if i < p {
            self.prefix[i].value
        } else {
            let l = self.cycle.len();
            self.cycle[(i - p) % l].value + ((i - p) / l) as u64 * self.drift
        }
    }

    pub fn props(&self, i: usize) -> &BTreeSet<String> {
        let p = self.prefix.len();
        if i < p {
            &self.prefix[i].props
        } else {
            &self.cycle[(i - p) % self.cycle.len()].props
        }
    }

    /// The same word with the loop rotated left by one position.
    pub fn rotate(&self) -> Self {
        let mut prefix = self.prefix.clone();
        let mut cycle = self.cycle.clone();
        let first = cycle.remove(0);
        prefix.push(first.clone());
        cycle.push(Letter {
            props: first.props,
            value: first.value + self.drift,
        });
        LassoDataWord {
            prefix,
            cycle,
            drift: self.drift,
        }
    }
}

pub type RegisterAssignment = BTreeMap<String, u64>;

/// `w, i ⊨_ν φ`
pub fn eval(w: &LassoDataWord, i: usize, nu: &RegisterAssignment, f: &Formula) -> Result<bool> {
    let mut ev = Evaluator::new(w, f);
    let root = ev.root;
    let nu: Vec<(String, u64)> = nu.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let table = ev.table(root, &nu)?;
    Ok(ev.at(&table, i))
}

#[derive(Debug)]
enum Node {
    True,
    False,
    Prop(String),
    Test(Cmp, String),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Next(usize),
    Until(usize, usize),
    Release(usize, usize),
    Freeze(String, usize),
}

/// Truth tables over the positions of an unrolled word. A table covers the
/// prefix and the loop iterations `0..=k`; positions in later iterations
/// behave like iteration `k`. With drift, `k` is chosen so that from
/// iteration `k` on every value exceeds every register, after which shifting
/// the suffix by one iteration preserves all comparisons.
/// A node together with the values of its free registers.
type MemoKey = (usize, Vec<(String, u64)>);

struct Evaluator<'w> {
    w: &'w LassoDataWord,
    nodes: Vec<Node>,
    free: Vec<BTreeSet<String>>,
    root: usize,
    memo: HashMap<MemoKey, Rc<Vec<bool>>>,
}

impl<'w> Evaluator<'w> {
    fn new(w: &'w LassoDataWord, f: &Formula) -> Self {
        let mut ev = Evaluator {
            w,
            nodes: Vec::new(),
            free: Vec::new(),
            root: 0,
            memo: HashMap::new(),
        };
        ev.root = ev.intern(f);
        ev
    }

    fn intern(&mut self, f: &Formula) -> usize {
        let node = match f {
            True => Node::True,
            False => Node::False,
            Prop(p) => Node::Prop(p.clone()),
            RegTest(c, r) => Node::Test(*c, r.clone()),
            Not(a) => Node::Not(self.intern(a)),
            Next(a) => Node::Next(self.intern(a)),
            Freeze(r, a) => Node::Freeze(r.clone(), self.intern(a)),
            And(a, b) => Node::And(self.intern(a), self.intern(b)),
            Or(a, b) => Node::Or(self.intern(a), self.intern(b)),
            Until(a, b) => Node::Until(self.intern(a), self.intern(b)),
            Release(a, b) => Node::Release(self.intern(a), self.intern(b)),
        };
        self.nodes.push(node);
        self.free.push(f.free_registers());
        self.nodes.len() - 1
    }

    fn horizon(&self, nu: &[(String, u64)]) -> usize {
        if self.w.drift == 0 {
            return 0;
        }
        let Some(max) = nu.iter().map(|(_, v)| *v).max() else {
            return 0;
        };
        let low = self.w.cycle.iter().map(|l| l.value).min().expect("nonempty loop");
        if max < low {
            0
        } else {
            ((max - low) / self.w.drift + 1) as usize
        }
    }

    fn at(&self, table: &[bool], i: usize) -> bool {
        if i < table.len() {
            table[i]
        } else {
            let p = self.w.prefix.len();
            let l = self.w.cycle.len();
            let last_iter = (table.len() - p) / l - 1;
            table[p + last_iter * l + (i - p) % l]
        }
    }

    fn table(&mut self, id: usize, nu: &[(String, u64)]) -> Result<Rc<Vec<bool>>> {
        let key: Vec<(String, u64)> = nu.iter().filter(|(r, _)| self.free[id].contains(r)).cloned().collect();
        if let Some(r) = self.free[id].iter().find(|r| !key.iter().any(|(k, _)| k == *r)) {
            return Err(Error::Argument(format!("no value for register `{r}`")));
        }
        if let Some(t) = self.memo.get(&(id, key.clone())) {
            return Ok(t.clone());
        }
        let p = self.w.prefix.len();
        let l = self.w.cycle.len();
        let k = self.horizon(&key);
        let n = p + (k + 1) * l;
        let succ = |i: usize| if i + 1 < n { i + 1 } else { p + k * l };
        let table: Vec<bool> = match &self.nodes[id] {
            Node::True => vec![true; n],
            Node::False => vec![false; n],
            Node::Prop(q) => (0..n).map(|i| self.w.props(i).contains(q)).collect(),
            Node::Test(c, r) => {
                let bound = key.iter().find(|(k, _)| k == r).expect("checked above").1;
                (0..n).map(|i| c.holds(self.w.value(i), bound)).collect()
            }
            &Node::Not(a) => {
                let ta = self.table(a, &key)?;
                (0..n).map(|i| !self.at(&ta, i)).collect()
            }
            &Node::And(a, b) | &Node::Or(a, b) => {
                let is_and = matches!(self.nodes[id], Node::And(..));
                let (ta, tb) = (self.table(a, &key)?, self.table(b, &key)?);
                (0..n)
                    .map(|i| {
                        let (x, y) = (self.at(&ta, i), self.at(&tb, i));
                        if is_and {
                            x && y
                        } else {
                            x || y
                        }
                    })
                    .collect()
            }
            &Node::Next(a) => {
                let ta = self.table(a, &key)?;
                (0..n).map(|i| self.at(&ta, i + 1)).collect()
            }
            &Node::Until(a, b) | &Node::Release(a, b) => {
                let is_until = matches!(self.nodes[id], Node::Until(..));
                let (ta, tb) = (self.table(a, &key)?, self.table(b, &key)?);
                let av: Vec<bool> = (0..n).map(|i| self.at(&ta, i)).collect();
                let bv: Vec<bool> = (0..n).map(|i| self.at(&tb, i)).collect();
                // least fixpoint for until, greatest for release
                let mut res: Vec<bool> = if is_until { vec![false; n] } else { bv.clone() };
                loop {
                    let mut changed = false;
                    for i in (0..n).rev() {
                        let later = res[succ(i)];
                        let v = if is_until {
                            bv[i] || (av[i] && later)
                        } else {
                            bv[i] && (av[i] || later)
                        };
                        if v != res[i] {
                            res[i] = v;
                            changed = true;
                        }
                    }
                    if !changed {
                        break res;
                    }
                }
            }
            Node::Freeze(r, a) => {
                let (r, a) = (r.clone(), *a);
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let mut inner: Vec<(String, u64)> = key.iter().filter(|(k, _)| *k != r).cloned().collect();
                    inner.push((r.clone(), self.w.value(i)));
                    inner.sort();
                    let ta = self.table(a, &inner)?;
                    out.push(self.at(&ta, i));
                }
                out
            }
        };
        let table = Rc::new(table);
        self.memo.insert((id, key), table.clone());
        Ok(table)
    }
}
