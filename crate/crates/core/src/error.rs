use thiserror::Error;

use crate::model::RuleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsafe rule {rule}: {message}")]
    Safety { rule: String, message: String },

    #[error("invalid aggregate in {rule}: {message}")]
    Aggregate { rule: String, message: String },

    /// Negation or aggregation through recursion. `cycle` lists the rules
    /// of the offending dependency cycle, first rule repeated at the end.
    #[error("unsafe program: {message} (cycle: {})", display_cycle(.cycle))]
    UnsafeProgram { message: String, cycle: Vec<RuleId> },

    #[error("duplicate rule id {0}")]
    DuplicateRule(RuleId),

    #[error("unknown rule id {0}")]
    UnknownRule(RuleId),

    #[error("cannot plan rule {rule}: {message}")]
    Plan { rule: RuleId, message: String },

    #[error("arithmetic error in rule {rule}: {message}")]
    Arithmetic { rule: RuleId, message: String },

    #[error("type error in rule {rule}: {message}")]
    Type { rule: RuleId, message: String },
}

impl Error {
    pub(crate) fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    /// Shifts the line number of a syntax error, used when a single line is
    /// parsed out of a larger file.
    pub fn at_line(self, line: usize) -> Self {
        match self {
            Error::Syntax {
                column, message, ..
            } => Error::Syntax {
                line,
                column,
                message,
            },
            other => other,
        }
    }
}

fn display_cycle(cycle: &[RuleId]) -> String {
    cycle
        .iter()
        .map(|r| r.as_str())
        .collect::<Vec<_>>()
        .join(" -> ")
}
