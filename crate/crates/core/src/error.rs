use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-conformable operands: {0}")]
    Conformability(String),

    #[error("block out of range: {0}")]
    Bounds(String),

    #[error("invalid blocking parameters: {0}")]
    InvalidParams(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("loop {0} cannot be parallelized: concurrent p_c iterations would race on C")]
    IllegalLoop(LoopId),

    #[error("invalid parallel configuration: {0}")]
    Config(String),

    #[error("cannot parse {var}={value:?}: {reason}")]
    ConfigParse {
        var: String,
        value: String,
        reason: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty measurement window: {0}")]
    EmptyWindow(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// The five loops of the blocked algorithm, outermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LoopId {
    /// Loop 1, columns of C in steps of `nc`.
    Jc,
    /// Loop 2, the k dimension in steps of `kc`.
    Pc,
    /// Loop 3, rows of C in steps of `mc`.
    Ic,
    /// Loop 4, micro-tile columns in steps of `nr`.
    Jr,
    /// Loop 5, micro-tile rows in steps of `mr`.
    Ir,
}

impl LoopId {
    pub fn name(self) -> &'static str {
        match self {
            LoopId::Jc => "jc",
            LoopId::Pc => "pc",
            LoopId::Ic => "ic",
            LoopId::Jr => "jr",
            LoopId::Ir => "ir",
        }
    }

    pub fn parse(s: &str) -> Option<LoopId> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jc" | "1" | "loop1" => Some(LoopId::Jc),
            "pc" | "2" | "loop2" => Some(LoopId::Pc),
            "ic" | "3" | "loop3" => Some(LoopId::Ic),
            "jr" | "4" | "loop4" => Some(LoopId::Jr),
            "ir" | "5" | "loop5" => Some(LoopId::Ir),
            _ => None,
        }
    }
}

impl fmt::Display for LoopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
