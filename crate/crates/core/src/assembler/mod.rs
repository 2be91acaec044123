//! Assembly sequence language: parsing, loop/parameter expansion,
//! compilation to a flat state machine, rendering and pre-flight checks.
//!
//! ```text
//! sequence screw(sides: int = 3) {
//!   state equip: cmd r1.equip_tool {"tool_id": "driver"};
//!   for i in 1..$sides {
//!     state fasten_$i: skill "fasten" on r1 on FAILED -> end_failure;
//!   }
//! }
//! ```

mod ast;
mod expand;
mod ir;
mod lexer;
mod parser;
mod render;
mod run;
mod validate;

pub use ast::*;
pub use expand::{coerce_args, expand, interpolate, Args};
pub use ir::{compile, source_hash, Action, IrMeta, IrState, SequenceIr};
pub use parser::parse;
pub use render::{render, TEMPLATES};
pub use run::{Next, Run, RunReport, RunStatus, StateRecord};
pub use validate::{validate, CellView, Finding, FindingKind, Severity, ValidationReport, RUN_SKILL};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("syntax error at {pos}: expected {}, found {found}", expected.join(" or "))]
    SyntaxError {
        pos: Pos,
        expected: Vec<String>,
        found: String,
    },
    #[error("duplicate state id '{id}'")]
    DuplicateStateId { id: String, pos: Option<Pos> },
    #[error("unbound parameter '{0}'")]
    UnboundParam(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("state id '{0}' produced more than once by expansion")]
    IdCollisionAfterExpansion(String),
    #[error("state '{state}' has two transitions for {outcome}")]
    DuplicateTransition { state: String, outcome: String },
    #[error("state '{state}' transitions to unknown state '{target}'")]
    UnknownTransitionTarget { state: String, target: String },
    #[error("state '{0}' is unreachable")]
    UnreachableState(String),
    #[error("state '{state}' has no transition for {outcome}")]
    MissingOutcomeCoverage { state: String, outcome: String },
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
    #[error("compile needs a loop-free AST")]
    NotLoopFree,
    #[error("invalid IR: {0}")]
    InvalidIr(String),
}

impl AssemblyError {
    pub fn code(&self) -> &'static str {
        match self {
            AssemblyError::SyntaxError { .. } => "SyntaxError",
            AssemblyError::DuplicateStateId { .. } => "DuplicateStateId",
            AssemblyError::UnboundParam(_) => "UnboundParam",
            AssemblyError::BadArgument(_) => "BadArgument",
            AssemblyError::IdCollisionAfterExpansion(_) => "IdCollisionAfterExpansion",
            AssemblyError::DuplicateTransition { .. } => "DuplicateTransition",
            AssemblyError::UnknownTransitionTarget { .. } => "UnknownTransitionTarget",
            AssemblyError::UnreachableState(_) => "UnreachableState",
            AssemblyError::MissingOutcomeCoverage { .. } => "MissingOutcomeCoverage",
            AssemblyError::UnknownTemplate(_) => "UnknownTemplate",
            AssemblyError::NotLoopFree => "NotLoopFree",
            AssemblyError::InvalidIr(_) => "InvalidIR",
        }
    }
}

/// parse, expand and compile in one step.
pub fn build(src: &str, args: &Args) -> Result<SequenceIr, AssemblyError> {
    compile(&expand(&parse(src)?, args)?)
}
