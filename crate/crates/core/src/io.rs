//! JSON machine and witness files, and an independent witness referee.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::automaton::{
    parse_op, render_op, validate_lasso, validate_run, Configuration, CounterMachine, LassoRun, ParamInstantiation,
    Run, RunDiagnostic,
};
use crate::error::{Error, Result};
use crate::freeze::{eval, Formula, LassoDataWord, RegisterAssignment};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: String,
    pub op: String,
    pub to: String,
}

/// On-disk form of a [`CounterMachine`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineFile {
    pub states: Vec<String>,
    pub initial: String,
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<String>>,
    pub transitions: Vec<TransitionEntry>,
}

impl MachineFile {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("machine files always serialize")
    }

    pub fn from_machine(m: &CounterMachine) -> Self {
        let name = |q: usize| m.state_name(q).to_string();
        MachineFile {
            states: m.states().to_vec(),
            initial: name(m.initial()),
            params: m.params().to_vec(),
            labels: (0..m.num_states())
                .filter(|&q| !m.label(q).is_empty())
                .map(|q| (name(q), m.label(q).iter().cloned().collect()))
                .collect(),
            transitions: m
                .transitions()
                .iter()
                .map(|t| TransitionEntry {
                    from: name(t.from),
                    op: render_op(&t.op, m.params()),
                    to: name(t.to),
                })
                .collect(),
        }
    }

    pub fn to_machine(&self) -> Result<CounterMachine> {
        let index: HashMap<&str, usize> = self.states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let state = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| Error::Config(format!("undeclared state `{s}`")))
        };
        let mut transitions = Vec::with_capacity(self.transitions.len());
        for t in &self.transitions {
            transitions.push(crate::automaton::Transition {
                from: state(&t.from)?,
                op: parse_op(&t.op, &self.params)?,
                to: state(&t.to)?,
            });
        }
        let mut labels = vec![BTreeSet::new(); self.states.len()];
        for (q, props) in &self.labels {
            labels[state(q)?].extend(props.iter().cloned());
        }
        CounterMachine::from_parts(
            self.states.clone(),
            state(&self.initial)?,
            self.params.clone(),
            transitions,
            labels,
        )
    }
}

pub fn load_machine(json: &str) -> Result<CounterMachine> {
    MachineFile::parse(json)?.to_machine()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub state: String,
    pub value: u64,
    /// Index of the transition taken to get here; absent on the first entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<usize>,
}

/// A run or lasso with its parameter values, checkable on its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessFile {
    pub gamma: BTreeMap<String, u64>,
    pub run: Vec<RunEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula_holds: Option<bool>,
}

impl WitnessFile {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("witness files always serialize")
    }

    pub fn from_run(m: &CounterMachine, gamma: &ParamInstantiation, run: &Run) -> Self {
        let run = run
            .configs
            .iter()
            .enumerate()
            .map(|(i, c)| RunEntry {
                state: m.state_name(c.state).to_string(),
                value: c.value,
                via: i.checked_sub(1).map(|j| run.steps[j]),
            })
            .collect();
        WitnessFile {
            gamma: m.params().iter().cloned().zip(gamma.0.iter().copied()).collect(),
            run,
            loop_start: None,
            formula_holds: None,
        }
    }

    pub fn from_lasso(m: &CounterMachine, gamma: &ParamInstantiation, lasso: &LassoRun) -> Self {
        WitnessFile {
            loop_start: Some(lasso.loop_start),
            ..Self::from_run(m, gamma, &lasso.run)
        }
    }

    /// Resolves names against `m`. Missing parameters, unknown states and
    /// missing transition indices are input errors.
    pub fn resolve(&self, m: &CounterMachine) -> Result<(ParamInstantiation, Run)> {
        let mut gamma = Vec::with_capacity(m.num_params());
        for x in m.params() {
            let v = self
                .gamma
                .get(x)
                .ok_or_else(|| Error::Config(format!("witness gives no value for parameter `{x}`")))?;
            gamma.push(*v);
        }
        if let Some(x) = self.gamma.keys().find(|x| m.param_id(x).is_none()) {
            return Err(Error::Config(format!("witness names unknown parameter `{x}`")));
        }
        let first = self.run.first().ok_or_else(|| Error::Format("empty run".into()))?;
        let state = |s: &str| {
            m.state_id(s)
                .ok_or_else(|| Error::Config(format!("unknown state `{s}`")))
        };
        let mut run = Run::single(Configuration::new(state(&first.state)?, first.value));
        for (i, e) in self.run.iter().enumerate().skip(1) {
            let via = e
                .via
                .ok_or_else(|| Error::Format(format!("run entry {i} has no `via` transition")))?;
            run.push(via, Configuration::new(state(&e.state)?, e.value));
        }
        Ok((ParamInstantiation(gamma), run))
    }
}

/// Outcome of checking a witness file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(String),
}

/// Checks a witness against a machine, and against a formula when one is
/// given (which requires a lasso). Uses only the run validators and the
/// formula evaluator. `Err` means the inputs were malformed.
pub fn check_witness(m: &CounterMachine, w: &WitnessFile, formula: Option<&Formula>) -> Result<Verdict> {
    let (gamma, run) = w.resolve(m)?;
    if run.configs[0] != Configuration::new(m.initial(), 0) {
        return Ok(Verdict::Invalid(
            "run does not start in the initial configuration".into(),
        ));
    }
    if run.steps.iter().any(|&t| t >= m.transitions().len()) {
        return Ok(Verdict::Invalid("run uses a transition index out of range".into()));
    }
    let shown = |d: RunDiagnostic| Verdict::Invalid(d.to_string());
    match w.loop_start {
        None => {
            if formula.is_some() {
                return Err(Error::Argument("a formula can only be checked against a lasso".into()));
            }
            Ok(validate_run(m, &gamma, &run).err().map_or(Verdict::Valid, shown))
        }
        Some(loop_start) => {
            if loop_start >= run.len() {
                return Ok(Verdict::Invalid(format!(
                    "loop start {loop_start} is past the end of the run"
                )));
            }
            let lasso = LassoRun { run, loop_start };
            if let Err(d) = validate_lasso(m, &gamma, &lasso) {
                return Ok(shown(d));
            }
            let Some(f) = formula else { return Ok(Verdict::Valid) };
            let word = LassoDataWord::from_lasso(m, &lasso)?;
            Ok(if eval(&word, 0, &RegisterAssignment::new(), f)? {
                Verdict::Valid
            } else {
                Verdict::Invalid("the data word of the lasso does not satisfy the formula".into())
            })
        }
    }
}
