//! Source and target syntax, types, the s-expression surface syntax and the
//! bidirectional typechecker.

mod elaborate;
mod parse;
mod pretty;
pub mod sexpr;
mod term;
mod ty;
mod typecheck;

pub use elaborate::elaborate;
pub use parse::{parse, parse_term, parse_ty};
pub use pretty::{pretty, pretty_in, pretty_program};
pub use sexpr::Pos;
pub use term::{rc, Name, Op, Term, T};
pub use ty::{Context, CotCtx, Ty};
pub use typecheck::{typecheck, typecheck_program, typecheck_source, TypeError};

/// A parsed program: its argument context and body.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub ctx: Context,
    pub body: T,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("{}:{}: {msg}", pos.line, pos.col)]
    Syntax { pos: Pos, msg: String },
    #[error("{}:{}: unbound variable `{name}`", pos.line, pos.col)]
    UnboundVariable { pos: Pos, name: String },
    #[error("{}:{}: binder `{name}` needs a type annotation", pos.line, pos.col)]
    MissingAnnotation { pos: Pos, name: String },
}

impl ParseError {
    pub fn syntax(pos: Pos, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { pos, msg: msg.into() }
    }

    pub fn position(&self) -> Option<Pos> {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::UnboundVariable { pos, .. }
            | ParseError::MissingAnnotation { pos, .. } => Some(*pos),
        }
    }
}
