use proptest::prelude::*;

use ocaflat::automaton::{bounded_reach_oracle, ParamInstantiation};
use ocaflat::freeze::{eval, nnf, parse, render, RegisterAssignment};
use ocaflat::galil::fold_constants;
use ocaflat::io::{load_machine, MachineFile};
use ocaflat::random::{all_gammas, random_formula, random_lasso, random_machine, rng, FormulaShape, MachineShape};

fn shape() -> FormulaShape {
    FormulaShape {
        props: vec!["p".into(), "q".into()],
        registers: vec!["r".into()],
        depth: 4,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rotating_the_loop_keeps_the_word(seed in any::<u64>(), i in 0usize..8, v in 0u64..6) {
        let mut r = rng(seed);
        let w = random_lasso(&mut r, &shape().props, 3, 3, 4, true);
        let f = random_formula(&mut r, &shape());
        let nu = RegisterAssignment::from([("r".to_string(), v)]);
        prop_assert_eq!(eval(&w, i, &nu, &f).unwrap(), eval(&w.rotate(), i, &nu, &f).unwrap());
    }

    #[test]
    fn nnf_preserves_meaning(seed in any::<u64>(), i in 0usize..6, v in 0u64..6) {
        let mut r = rng(seed);
        let w = random_lasso(&mut r, &shape().props, 3, 3, 4, true);
        let f = random_formula(&mut r, &shape());
        let nu = RegisterAssignment::from([("r".to_string(), v)]);
        prop_assert_eq!(eval(&w, i, &nu, &f).unwrap(), eval(&w, i, &nu, &nnf(&f)).unwrap());
    }

    #[test]
    fn rendering_parses_back(seed in any::<u64>()) {
        let f = random_formula(&mut rng(seed), &shape());
        prop_assert_eq!(parse(&render(&f)).unwrap(), f);
    }

    #[test]
    fn machine_files_round_trip(seed in any::<u64>()) {
        let m = random_machine(&mut rng(seed), &MachineShape::ocapc(4, 2, 3));
        prop_assert_eq!(load_machine(&MachineFile::from_machine(&m).to_json()).unwrap(), m);
    }

    #[test]
    fn folding_constants_keeps_reachability(seed in any::<u64>()) {
        let m = random_machine(&mut rng(seed), &MachineShape::ocapc(4, 1, 3));
        let folded = fold_constants(&m);
        for gamma in all_gammas(m.num_params(), 2) {
            let mut extended = gamma.0.clone();
            extended.extend((m.num_params()..folded.machine.num_params()).map(|x| folded.pinned[&x]));
            let extended = ParamInstantiation(extended);
            for target in 0..m.num_states() {
                prop_assert_eq!(
                    bounded_reach_oracle(&m, &gamma, target, 10).unwrap().is_some(),
                    bounded_reach_oracle(&folded.machine, &extended, target, 10).unwrap().is_some()
                );
            }
        }
    }
}
