//! The reduction chain from flat freeze LTL model checking down to
//! reachability in one-counter automata with parameter tests.

mod buchi;
mod pipeline;
mod succinct;
mod tableau;

use std::collections::BTreeSet;

pub use buchi::{buchi_to_reach, BuchiInstance, BuchiReduction};
pub use pipeline::{mc_oracle, model_check, McOptions, McOutcome, McWitness};
pub use succinct::{
    bit, bits, counter_formula, gadget_labels, succinct_to_unary, translate_formula, Alphabet, UnaryReduction,
};
pub use tableau::{flat_mc_to_buchi, ProductMachine};

/// Hands out names that are valid and not yet taken.
#[derive(Debug, Clone, Default)]
pub(crate) struct Names {
    taken: BTreeSet<String>,
}

impl Names {
    pub(crate) fn new<'a>(taken: impl IntoIterator<Item = &'a String>) -> Self {
        Names {
            taken: taken.into_iter().cloned().collect(),
        }
    }

    pub(crate) fn fresh(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut k = 1;
        while self.taken.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        self.taken.insert(name.clone());
        name
    }
}
