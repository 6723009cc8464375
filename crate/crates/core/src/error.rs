use thiserror::Error;

use crate::automaton::MachineClass;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("class error: expected {expected}, machine is {found}")]
    Class {
        expected: &'static str,
        found: MachineClass,
    },
    #[error("argument error: {0}")]
    Argument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("not a sentence: register `{0}` is used outside the scope of a freeze")]
    NotSentence(String),
    #[error("not flat: {0}")]
    NotFlat(String),
    #[error("extraction error: {0}")]
    Extraction(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
