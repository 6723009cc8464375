use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ocaflat::a2a::{build_a2a, dump};
use ocaflat::automaton::{require_class, CounterMachine, MachineClass, StateId};
use ocaflat::freeze::{self, render, Formula};
use ocaflat::galil::{derive_bound, fold_constants, ReachOptions, ReachOutcome};
use ocaflat::io::{check_witness, load_machine, MachineFile, Verdict, WitnessFile};
use ocaflat::random::{random_machine, rng, MachineShape};
use ocaflat::reductions::{buchi_to_reach, model_check, succinct_to_unary, McOptions, McOutcome};
use ocaflat::strategy::StrategyRegistry;

/// Parametric one-counter automata: reachability, repeated reachability and
/// freeze LTL model checking.
#[derive(Parser)]
#[command(name = "ocaflat", version)]
struct Cli {
    /// Print a machine-readable JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Largest parameter value tried. Defaults to |Q|^3 (|X|+2).
    #[arg(long)]
    bound: Option<u64>,
    /// Largest counter value explored by the solver.
    #[arg(long)]
    cap: Option<u64>,
    /// Reachability back-end, see `ocaflat solvers`.
    #[arg(long, default_value = "galil")]
    solver: String,
    /// Write the witness file here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Is a state reachable for some parameter instantiation?
    Reach {
        machine: PathBuf,
        #[arg(long)]
        target: String,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Can one of the accepting states be visited infinitely often?
    Buchi {
        machine: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        accepting: Vec<String>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Does some run satisfy a flat freeze LTL sentence?
    Mc {
        machine: PathBuf,
        /// A formula file, or the formula itself.
        #[arg(long)]
        formula: String,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Print one of the intermediate constructions.
    Translate {
        machine: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Target state (a2a).
        #[arg(long)]
        target: Option<String>,
        /// Accepting state (buchi2reach).
        #[arg(long)]
        accepting: Option<String>,
        /// Formula to translate along (unary).
        #[arg(long)]
        formula: Option<String>,
    },
    /// Re-check a witness file against a machine and optionally a formula.
    Check {
        witness: PathBuf,
        machine: PathBuf,
        #[arg(long)]
        formula: Option<String>,
    },
    /// Print a seeded random machine file.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        states: usize,
        #[arg(long, default_value_t = 1)]
        params: usize,
        /// Largest constant in constant tests; 0 disables them.
        #[arg(long, default_value_t = 0)]
        consts: u64,
    },
    /// List the registered reachability back-ends.
    Solvers,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    A2a,
    Unary,
    Buchi2reach,
    Foldconst,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] ocaflat::Error),
}

/// Exit status 0 or 1, with the report to print.
struct Report {
    ok: bool,
    text: String,
    json: Value,
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|source| Failure::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|source| Failure::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn machine(path: &Path) -> Result<CounterMachine, Failure> {
    Ok(load_machine(&read(path)?)?)
}

fn formula(arg: &str) -> Result<Formula, Failure> {
    let path = Path::new(arg);
    let text = if path.is_file() { read(path)? } else { arg.to_string() };
    Ok(freeze::parse(&text)?)
}

fn state(m: &CounterMachine, name: &str) -> Result<StateId, Failure> {
    m.state_id(name)
        .ok_or_else(|| ocaflat::Error::Argument(format!("unknown state `{name}`")).into())
}

fn bound(m: &CounterMachine, args: &SolveArgs) -> u64 {
    args.bound.unwrap_or_else(|| derive_bound(m, 1))
}

fn absent(command: &str, what: &str, b: u64, solver: &str) -> Report {
    Report {
        ok: false,
        text: format!("{what} for any instantiation with parameters <= {b} (the verdict is relative to this bound)"),
        json: json!({ "command": command, "verdict": "absent", "bound": b, "solver": solver }),
    }
}

fn present(
    command: &str,
    what: String,
    b: u64,
    solver: &str,
    w: &WitnessFile,
    out: &Option<PathBuf>,
) -> Result<Report, Failure> {
    if let Some(path) = out {
        write(path, &w.to_json())?;
    }
    Ok(Report {
        ok: true,
        text: format!(
            "{what} (bound {b}, solver {solver})\ngamma: {:?}\nrun: {} configurations",
            w.gamma,
            w.run.len()
        ),
        json: json!({ "command": command, "verdict": "present", "bound": b, "solver": solver, "witness": w }),
    })
}

fn reach(path: &Path, target: &str, args: &SolveArgs) -> Result<Report, Failure> {
    let m = machine(path)?;
    let target = state(&m, target)?;
    let registry = StrategyRegistry::with_defaults();
    let solver = registry.get(&args.solver)?;
    let b = bound(&m, args);
    let opts = ReachOptions {
        bound: b,
        ceiling: args.cap,
        ..Default::default()
    };
    match solver.solve(&m, target, &opts)? {
        ReachOutcome::Present(w) => {
            let file = WitnessFile::from_run(&m, &w.gamma, &w.run);
            present(
                "reach",
                format!("{} is reachable", m.state_name(target)),
                b,
                solver.name(),
                &file,
                &args.out,
            )
        }
        ReachOutcome::AbsentUpTo(_) => Ok(absent(
            "reach",
            &format!("{} is not reachable", m.state_name(target)),
            b,
            solver.name(),
        )),
    }
}

fn buchi(path: &Path, accepting: &[String], args: &SolveArgs) -> Result<Report, Failure> {
    let m = machine(path)?;
    require_class(&m, MachineClass::OcaPC, "OCA(P,C)")?;
    let mut goods = accepting.iter().map(|q| state(&m, q)).collect::<Result<Vec<_>, _>>()?;
    goods.sort_by_key(|&q| m.state_name(q).to_string());
    let registry = StrategyRegistry::with_defaults();
    let solver = registry.get(&args.solver)?;
    let b = bound(&m, args);
    let folded = fold_constants(&m);
    for good in goods {
        let r = buchi_to_reach(&folded.machine, good, args.cap)?;
        let opts = ReachOptions {
            bound: b,
            pinned: folded.pinned.clone(),
            ceiling: args.cap,
        };
        if let ReachOutcome::Present(w) = solver.solve(&r.machine, r.target, &opts)? {
            let (mut gamma, lasso) = r.lasso_from_witness(&w)?;
            gamma.0.truncate(m.num_params());
            let file = WitnessFile::from_lasso(&m, &gamma, &lasso);
            let what = format!("{} can be visited infinitely often", m.state_name(good));
            return present("buchi", what, b, solver.name(), &file, &args.out);
        }
    }
    Ok(absent(
        "buchi",
        "no accepting state can be visited infinitely often",
        b,
        solver.name(),
    ))
}

fn mc(path: &Path, text: &str, args: &SolveArgs) -> Result<Report, Failure> {
    let m = machine(path)?;
    let f = formula(text)?;
    let registry = StrategyRegistry::with_defaults();
    let solver = registry.get(&args.solver)?;
    let b = bound(&m, args);
    let opts = McOptions {
        ceiling: args.cap,
        loop_cap: args.cap,
        ..McOptions::with_bound(b)
    };
    match model_check(&m, &f, &opts, solver)? {
        McOutcome::Present(w) => {
            let file = WitnessFile {
                formula_holds: Some(true),
                ..WitnessFile::from_lasso(&m, &w.gamma, &w.lasso)
            };
            present(
                "mc",
                format!("some run satisfies {}", render(&f)),
                b,
                solver.name(),
                &file,
                &args.out,
            )
        }
        McOutcome::AbsentUpTo(_) => Ok(absent(
            "mc",
            &format!("no run satisfies {}", render(&f)),
            b,
            solver.name(),
        )),
    }
}

fn machine_json(m: &CounterMachine) -> Value {
    serde_json::to_value(MachineFile::from_machine(m)).expect("machine files always serialize")
}

fn translate(
    path: &Path,
    mode: Mode,
    target: Option<&str>,
    accepting: Option<&str>,
    text: Option<&str>,
) -> Result<Report, Failure> {
    let m = machine(path)?;
    let need = |v: Option<&str>, flag: &str| {
        v.map(str::to_string)
            .ok_or_else(|| Failure::from(ocaflat::Error::Argument(format!("this mode needs --{flag}"))))
    };
    let (text, json) = match mode {
        Mode::A2a => {
            let t = build_a2a(&m, state(&m, &need(target, "target")?)?)?;
            let d = dump(&t.a2a);
            let size = t.a2a.size();
            (
                d.clone(),
                json!({ "mode": "a2a", "states": t.a2a.states.len(), "size": size, "dump": d }),
            )
        }
        Mode::Unary => {
            let f = match text {
                Some(t) => formula(t)?,
                None => Formula::True,
            };
            let u = succinct_to_unary(&m, &f)?;
            let v = json!({ "machine": machine_json(&u.machine), "formula": render(&u.formula) });
            (serde_json::to_string_pretty(&v).expect("json values serialize"), v)
        }
        Mode::Buchi2reach => {
            let r = buchi_to_reach(&m, state(&m, &need(accepting, "accepting")?)?, None)?;
            let v = json!({ "machine": machine_json(&r.machine), "target": r.machine.state_name(r.target) });
            (serde_json::to_string_pretty(&v).expect("json values serialize"), v)
        }
        Mode::Foldconst => {
            let folded = fold_constants(&m);
            let pinned: serde_json::Map<String, Value> = folded
                .pinned
                .iter()
                .map(|(&x, &c)| (folded.machine.params()[x].clone(), json!(c)))
                .collect();
            let v = json!({ "machine": machine_json(&folded.machine), "pinned": pinned });
            (serde_json::to_string_pretty(&v).expect("json values serialize"), v)
        }
    };
    Ok(Report { ok: true, text, json })
}

fn check(witness: &Path, path: &Path, text: Option<&str>) -> Result<Report, Failure> {
    let m = machine(path)?;
    let w = WitnessFile::parse(&read(witness)?)?;
    let f = text.map(formula).transpose()?;
    Ok(match check_witness(&m, &w, f.as_ref())? {
        Verdict::Valid => Report {
            ok: true,
            text: "witness is valid".into(),
            json: json!({ "command": "check", "valid": true }),
        },
        Verdict::Invalid(why) => Report {
            ok: false,
            text: format!("witness is invalid: {why}"),
            json: json!({ "command": "check", "valid": false, "reason": why }),
        },
    })
}

fn generate(seed: u64, states: usize, params: usize, consts: u64) -> Report {
    let shape = if consts > 0 {
        MachineShape::ocapc(states, params, consts)
    } else {
        MachineShape::ocap(states, params)
    };
    let m = random_machine(&mut rng(seed), &shape);
    let v = machine_json(&m);
    Report {
        ok: true,
        text: serde_json::to_string_pretty(&v).expect("json values serialize"),
        json: v,
    }
}

fn solvers() -> Report {
    let registry = StrategyRegistry::with_defaults();
    let rows: Vec<(&str, &str)> = registry.iter().map(|s| (s.name(), s.summary())).collect();
    Report {
        ok: true,
        text: rows
            .iter()
            .map(|(n, s)| format!("{n:8} {s}"))
            .collect::<Vec<_>>()
            .join("\n"),
        json: json!(rows
            .iter()
            .map(|(n, s)| json!({ "name": n, "summary": s }))
            .collect::<Vec<_>>()),
    }
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    match &cli.command {
        Command::Reach { machine, target, solve } => reach(machine, target, solve),
        Command::Buchi {
            machine,
            accepting,
            solve,
        } => buchi(machine, accepting, solve),
        Command::Mc {
            machine,
            formula,
            solve,
        } => mc(machine, formula, solve),
        Command::Translate {
            machine,
            mode,
            target,
            accepting,
            formula,
        } => translate(
            machine,
            *mode,
            target.as_deref(),
            accepting.as_deref(),
            formula.as_deref(),
        ),
        Command::Check {
            witness,
            machine,
            formula,
        } => check(witness, machine, formula.as_deref()),
        Command::Generate {
            seed,
            states,
            params,
            consts,
        } => Ok(generate(*seed, *states, *params, *consts)),
        Command::Solvers => Ok(solvers()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let body = if cli.json {
                serde_json::to_string_pretty(&report.json).expect("json values serialize")
            } else {
                report.text
            };
            // a closed pipe is not worth a panic
            let _ = writeln!(std::io::stdout(), "{body}");
            ExitCode::from(if report.ok { 0 } else { 1 })
        }
        Err(e) => {
            if cli.json {
                println!("{}", json!({ "error": e.to_string() }));
            }
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
