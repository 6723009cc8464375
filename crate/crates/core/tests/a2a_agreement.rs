use ocaflat::a2a::{build_a2a, decode, encode_gamma, membership, simulated_counter_bound, validate_run_tree};
use ocaflat::automaton::bounded_reach_oracle;
use ocaflat::galil::ReachWitness;
use ocaflat::random::{all_gammas, random_gamma, random_machine, rng, MachineShape};

#[test]
fn membership_matches_bounded_reachability() {
    let mut r = rng(0xa2a);
    for _ in 0..60 {
        let m = random_machine(&mut r, &MachineShape::ocap(5, 2));
        for target in 0..m.num_states() {
            let c = build_a2a(&m, target).unwrap();
            for gamma in all_gammas(m.num_params(), 3) {
                let w = encode_gamma(&gamma, 0);
                let bound = simulated_counter_bound(&w, Some(6));
                assert_eq!(bound, 6);
                let oracle = bounded_reach_oracle(&m, &gamma, target, 6).unwrap();
                assert_eq!(
                    membership(&c.a2a, &w, Some(6)),
                    oracle.is_some(),
                    "{m:?} target {target} {gamma:?}"
                );
                if let Some(run) = oracle {
                    let witness = ReachWitness {
                        gamma: gamma.clone(),
                        run,
                    };
                    let tree = c.construct_accepting_tree(&witness).unwrap();
                    validate_run_tree(&c.a2a, &w, &tree).unwrap();
                    let back = c.extract_run(&tree, &w).unwrap();
                    assert_eq!(back.run, witness.run);
                }
            }
        }
    }
}

#[test]
fn encoding_round_trips() {
    let mut r = rng(5);
    for _ in 0..100 {
        let gamma = random_gamma(&mut r, 3, 5);
        assert_eq!(decode(&encode_gamma(&gamma, 2)), gamma);
    }
}

#[test]
fn automaton_size_is_quadratic_in_machine_size() {
    let mut r = rng(9);
    for _ in 0..50 {
        let m = random_machine(&mut r, &MachineShape::ocap(5, 2));
        let c = build_a2a(&m, 0).unwrap();
        let n = m.num_states();
        assert_eq!(c.a2a.states.len(), 3 * n + 1 + 5 * m.num_params());
        let s = ocaflat::automaton::size(&m) as usize;
        assert!(c.a2a.size() <= 4 * s * s, "{} vs {}", c.a2a.size(), s);
    }
}
