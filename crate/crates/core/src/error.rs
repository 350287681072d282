use std::fmt;

use thiserror::Error;

/// A problem with one row of an input file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct RowError {
    pub file: String,
    /// 1-based line number, counting the header as line 1.
    pub line: u64,
    pub message: String,
}

impl RowError {
    pub fn new(file: impl Into<String>, line: u64, message: impl Into<String>) -> Self {
        RowError {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.message)
    }
}

/// Row errors joined one per line.
pub fn join_rows(errors: &[RowError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}
