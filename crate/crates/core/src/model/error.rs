use std::fmt;

use thiserror::Error;

/// Position in the equation block, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error(
        "{pos}: time argument `{found}` must start with the time variable `t` (forms: t, t-expr, t+expr)"
    )]
    TimeArgument { pos: Pos, found: String },
    #[error("{pos}: unknown identifier `{name}`")]
    UnknownIdentifier { pos: Pos, name: String },
    #[error("{pos}: `{name}` is reserved")]
    ReservedName { pos: Pos, name: String },
    #[error("duplicate equation for `{0}`")]
    DuplicateEquation(String),
    #[error("no equation defines coordinate `{0}`")]
    MissingEquation(String),
    #[error("coordinate `{0}` has both a differential and a renewal equation")]
    MixedDefinition(String),
    #[error("invalid declaration: {0}")]
    InvalidDeclaration(String),
}

impl ModelError {
    /// Errors raised while reading the text, as opposed to semantic validation.
    pub fn is_syntax(&self) -> bool {
        matches!(
            self,
            ModelError::Syntax { .. }
                | ModelError::TimeArgument { .. }
                | ModelError::UnknownIdentifier { .. }
                | ModelError::ReservedName { .. }
        )
    }

    pub fn pos(&self) -> Option<Pos> {
        match self {
            ModelError::Syntax { pos, .. }
            | ModelError::TimeArgument { pos, .. }
            | ModelError::UnknownIdentifier { pos, .. }
            | ModelError::ReservedName { pos, .. } => Some(*pos),
            _ => None,
        }
    }

    /// Rewrite the line number, e.g. from equation index to file line.
    pub(crate) fn map_line(mut self, f: impl Fn(usize) -> usize) -> Self {
        match &mut self {
            ModelError::Syntax { pos, .. }
            | ModelError::TimeArgument { pos, .. }
            | ModelError::UnknownIdentifier { pos, .. }
            | ModelError::ReservedName { pos, .. } => pos.line = f(pos.line),
            _ => {}
        }
        self
    }
}
